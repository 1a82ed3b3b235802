use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use ghostbench_core::gics::{build_sensing, gpsr_solve, GicsParams};
use ghostbench_core::{
    gi_reconstruct, make_double_slit, run_campaign, DoubleSlit, OpticalConfig, SpeckleGenerator,
};

fn speckle(c: &mut Criterion) {
    let mut group = c.benchmark_group("speckle");
    for lc in [276.7e-6, 68.8e-6] {
        let cfg = OpticalConfig::bench_default(lc).unwrap();
        let gen = SpeckleGenerator::new(&cfg).unwrap();
        let mut index = 0u64;
        group.bench_function(format!("frame_lc{:.1}um", lc * 1e6), |b| {
            b.iter(|| {
                index += 1;
                black_box(gen.generate(1, index))
            })
        });
    }
    group.finish();
}

fn reconstruction(c: &mut Criterion) {
    let cfg = OpticalConfig::bench_default(135.5e-6).unwrap();
    let mask = make_double_slit(&cfg, &DoubleSlit::bench(&cfg)).unwrap();
    let ms = run_campaign(&cfg, &mask, 200, 7, 0.0).unwrap();

    let mut group = c.benchmark_group("reconstruction");
    group.sample_size(10);
    group.bench_function("gi_m200", |b| b.iter(|| black_box(gi_reconstruct(&ms).unwrap())));
    group.bench_function("build_sensing_m200", |b| {
        b.iter(|| black_box(build_sensing(&ms, true, true).unwrap()))
    });
    let sys = build_sensing(&ms, true, true).unwrap();
    let params = GicsParams {
        max_iters: 50,
        ..GicsParams::default()
    };
    group.bench_function("gpsr_50_iters_m200", |b| {
        b.iter(|| black_box(gpsr_solve(&sys, &params).unwrap()))
    });
    group.finish();
}

criterion_group!(benches, speckle, reconstruction);
criterion_main!(benches);
