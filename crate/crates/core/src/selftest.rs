//! Quick oracle checks runnable from the command line.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::forward::{bucket_measure, run_campaign};
use crate::gics::{gpsr_solve, ista_reference, GicsParams, SensingSystem};
use crate::optics::{make_double_slit, DoubleSlit, OpticalConfig};
use crate::recon_gi::gi_reconstruct;
use crate::speckle::{intensity_stats, SpeckleGenerator};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check {
        name,
        passed,
        detail,
    }
}

fn coherence(frames: usize) -> Result<Check> {
    let lc = 135.5e-6;
    let cfg = OpticalConfig::bench_default(lc)?;
    let gen = SpeckleGenerator::new(&cfg)?;
    let set: Vec<_> = (1..=frames as u64).map(|i| gen.generate(7, i)).collect();
    let stats = intensity_stats(&set)?;
    let measured = stats.measured_lc.unwrap_or(f64::NAN);
    let rel = (measured - lc).abs() / lc;
    Ok(check(
        "speckle coherence length",
        rel <= 0.1,
        format!("measured {:.1} um vs {:.1} um", measured * 1e6, lc * 1e6),
    ))
}

fn contrast(frames: usize) -> Result<Check> {
    let cfg = OpticalConfig::bench_default(68.8e-6)?;
    let gen = SpeckleGenerator::new(&cfg)?;
    let set: Vec<_> = (1..=frames as u64).map(|i| gen.generate(11, i)).collect();
    let stats = intensity_stats(&set)?;
    Ok(check(
        "thermal contrast",
        (stats.contrast - 1.0).abs() <= 0.1,
        format!("contrast {:.3} over {frames} frames", stats.contrast),
    ))
}

fn bucket_and_gi() -> Result<Vec<Check>> {
    let cfg = OpticalConfig::bench_default(135.5e-6)?;
    let mask = make_double_slit(&cfg, &DoubleSlit::bench(&cfg))?;
    let ms = run_campaign(&cfg, &mask, 50, 3, 0.0)?;

    let mut worst = 0.0f64;
    for rec in &ms.records {
        let mut sum = 0.0;
        for r in 0..cfg.grid_n {
            for c in 0..cfg.grid_n {
                sum += rec.frame.intensity[[r, c]] * mask.values()[[r, c]];
            }
        }
        worst = worst.max((sum - bucket_measure(&rec.frame, &mask)?).abs() / sum);
    }
    let bucket = check(
        "bucket sum oracle",
        worst <= 1e-12,
        format!("max relative deviation {worst:.2e}"),
    );

    let img = gi_reconstruct(&ms)?.values;
    let m = ms.m() as f64;
    let mb = ms.buckets().sum::<f64>() / m;
    let mut worst = 0.0f64;
    for (r, c) in [(20, 30), (50, 43), (77, 91)] {
        let mi = ms.records.iter().map(|x| x.frame.intensity[[r, c]]).sum::<f64>() / m;
        let cov = ms
            .records
            .iter()
            .map(|x| (x.bucket - mb) * (x.frame.intensity[[r, c]] - mi))
            .sum::<f64>()
            / m;
        worst = worst.max((img[[r, c]] - cov).abs() / mb);
    }
    let gi = check(
        "correlation estimator oracle",
        worst <= 1e-9,
        format!("max deviation {worst:.2e} of mean bucket"),
    );

    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map(|p| p.install(|| run_campaign(&cfg, &mask, 20, 3, 0.5)));
    let multi = rayon::ThreadPoolBuilder::new()
        .num_threads(3)
        .build()
        .map(|p| p.install(|| run_campaign(&cfg, &mask, 20, 3, 0.5)));
    let same = match (single, multi) {
        (Ok(Ok(a)), Ok(Ok(b))) => a == b,
        _ => false,
    };
    let det = check(
        "worker-count determinism",
        same,
        "1 vs 3 workers".to_string(),
    );
    Ok(vec![bucket, gi, det])
}

/// Random Gaussian system with a `k`-sparse truth.
pub fn sparse_instance(m: usize, n: usize, k: usize, seed: u64) -> SensingSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (m as f64).sqrt();
    let a = Array2::from_shape_fn((m, n), |_| {
        scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
    });
    let mut truth = Array1::zeros(n);
    for j in rand::seq::index::sample(&mut rng, n, k) {
        let v: f64 = StandardNormal.sample(&mut rng);
        truth[j] = if v >= 0.0 { 1.0 + v } else { v - 1.0 };
    }
    let b = a.dot(&truth);
    SensingSystem::from_dense(a, b).expect("consistent shapes")
}

fn solvers(instances: usize) -> Result<Vec<Check>> {
    let mut worst = 0.0f64;
    for i in 0..instances {
        let sys = sparse_instance(50, 200, 10, 1000 + i as u64);
        let tau = 0.01 * sys.lambda_max();
        let params = GicsParams {
            tau,
            max_iters: 20_000,
            tol_rel_obj: 1e-12,
            ..GicsParams::default()
        };
        let (_, rep) = gpsr_solve(&sys, &params)?;
        let (x, _) = ista_reference(&sys, tau, false, 200_000, 1e-8)?;
        let reference = sys.objective(&x.coefficients, tau);
        worst = worst.max((rep.final_objective - reference).abs() / reference);
    }
    let agree = check(
        "gradient projection vs proximal gradient",
        worst <= 1e-6,
        format!("max relative objective gap {worst:.2e} over {instances} instances"),
    );

    let sys = sparse_instance(30, 40, 5, 99);
    let params = GicsParams {
        tau: sys.lambda_max(),
        ..GicsParams::default()
    };
    let (x, _) = gpsr_solve(&sys, &params)?;
    let zero = check(
        "zero-solution threshold",
        x.coefficients.iter().all(|&v| v == 0.0),
        "tau = max |A^T b|".to_string(),
    );
    Ok(vec![agree, zero])
}

/// Runs every quick check. Roughly ten seconds on one core.
pub fn run_all() -> Result<Vec<Check>> {
    let mut out = vec![coherence(300)?, contrast(1000)?];
    out.extend(bucket_and_gi()?);
    out.extend(solvers(5)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_instance_shape_and_support() {
        let sys = sparse_instance(50, 200, 10, 4);
        assert_eq!((sys.m(), sys.n()), (50, 200));
        let again = sparse_instance(50, 200, 10, 4);
        assert_eq!(sys, again);
        let x = Array1::from_iter((0..200).map(|j| (j % 3) as f64));
        assert!(sys.objective(&x, 0.0).is_finite());
    }

    #[test]
    fn solver_checks_pass() {
        for c in solvers(2).unwrap() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
