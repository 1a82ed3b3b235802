use ghostbench_core::{intensity_stats, OpticalConfig, SpeckleFrame, SpeckleGenerator};
use ndarray::Array2;

fn frames(lc: f64, seed: u64, count: u64) -> Vec<SpeckleFrame> {
    let cfg = OpticalConfig::bench_default(lc).unwrap();
    let gen = SpeckleGenerator::new(&cfg).unwrap();
    (1..=count).map(|i| gen.generate(seed, i)).collect()
}

fn pixel_means(set: &[SpeckleFrame]) -> Array2<f64> {
    let mut acc = Array2::<f64>::zeros(set[0].intensity.dim());
    for f in set {
        acc += &f.intensity;
    }
    acc / set.len() as f64
}

#[test]
fn intensities_are_nonnegative_with_positive_mean() {
    let set = frames(135.5e-6, 21, 50);
    for f in &set {
        assert!(f.intensity.iter().all(|&v| v >= 0.0 && v.is_finite()));
        assert!(f.intensity.mean().unwrap() > 0.0);
    }
}

#[test]
fn half_the_samples_lie_above_mean_times_ln2() {
    // negative-exponential intensity: P(I > mu ln 2) = 1/2
    let set = frames(68.8e-6, 5, 2000);
    let mu = pixel_means(&set);
    let (lo, hi) = (25, 75);
    let (mut above, mut total) = (0usize, 0usize);
    for f in &set {
        for r in lo..hi {
            for c in lo..hi {
                total += 1;
                if f.intensity[[r, c]] > mu[[r, c]] * std::f64::consts::LN_2 {
                    above += 1;
                }
            }
        }
    }
    let frac = above as f64 / total as f64;
    assert!((frac - 0.5).abs() <= 0.5 * 0.03, "fraction above {frac}");
}

#[test]
fn coherence_length_scales_inversely_with_source_width() {
    let wide = intensity_stats(&frames(138.35e-6, 8, 1000)).unwrap();
    let narrow = intensity_stats(&frames(276.7e-6, 8, 1000)).unwrap();
    let ratio = narrow.measured_lc.unwrap() / wide.measured_lc.unwrap();
    assert!((ratio - 2.0).abs() <= 0.2, "ratio {ratio}");
}

#[test]
fn distinct_frames_are_uncorrelated() {
    let set = frames(68.8e-6, 13, 400);
    let n_pix = (100 * 100) as f64;
    let centered: Vec<Array2<f64>> = set
        .iter()
        .map(|f| {
            let m = f.intensity.mean().unwrap();
            f.intensity.mapv(|v| v - m)
        })
        .collect();
    let mut acc = 0.0;
    let pairs = centered.len() / 2;
    for p in 0..pairs {
        let (a, b) = (&centered[2 * p], &centered[2 * p + 1]);
        let rho = (a * b).sum() / ((a * a).sum() * (b * b).sum()).sqrt();
        acc += rho;
    }
    let mean_rho = acc / pairs as f64;
    assert!(mean_rho.abs() <= 3.0 / n_pix.sqrt(), "mean correlation {mean_rho}");
}

#[test]
fn frames_are_reproducible_from_seed_and_index() {
    let cfg = OpticalConfig::bench_default(193.5e-6).unwrap();
    let gen = SpeckleGenerator::new(&cfg).unwrap();
    let again = SpeckleGenerator::new(&cfg).unwrap();
    assert_eq!(gen.generate(3, 17), again.generate(3, 17));
    assert_ne!(gen.generate(3, 17).intensity, gen.generate(3, 18).intensity);
    assert_ne!(gen.generate(3, 17).intensity, gen.generate(4, 17).intensity);
}
