//! Plain proximal-gradient (ISTA) solver. Slow, but simple enough to serve as
//! an independent reference for the main solver.

use ndarray::Array1;

use super::dense::{gemv, gemv_t, norm_sq};
use super::{kkt_violation, SensingSystem, Solution};
use crate::error::{Error, Result};

const POWER_ITERS: usize = 500;
const LIPSCHITZ_SAFETY: f64 = 1.02;

#[derive(Debug, Clone, PartialEq)]
pub struct IstaReport {
    pub iterations: usize,
    pub lipschitz: f64,
    pub kkt_residual: f64,
    pub converged: bool,
    pub objective_trace: Vec<f64>,
}

/// Largest eigenvalue of `AᵀA` by power iteration.
fn spectral_norm_sq(a: &[f64], m: usize, n: usize) -> f64 {
    let mut x: Vec<f64> = (0..n).map(|j| 1.0 + 0.01 * (j % 7) as f64).collect();
    let mut ax = vec![0.0; m];
    let mut est = 0.0;
    for _ in 0..POWER_ITERS {
        let nx = norm_sq(&x).sqrt();
        if nx == 0.0 {
            return 0.0;
        }
        x.iter_mut().for_each(|v| *v /= nx);
        gemv(a, n, &x, &mut ax);
        let next = norm_sq(&ax);
        gemv_t(a, n, &ax, &mut x);
        if (next - est).abs() <= 1e-13 * next {
            return next;
        }
        est = next;
    }
    est
}

/// Runs ISTA from `x = 0` until the KKT residual is at most `kkt_tol` or
/// `max_iters` is reached.
pub fn ista_reference(
    sys: &SensingSystem,
    tau: f64,
    nonneg: bool,
    max_iters: usize,
    kkt_tol: f64,
) -> Result<(Solution, IstaReport)> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::Config(format!("tau must be >= 0, got {tau}")));
    }
    let (m, n) = (sys.m(), sys.n());
    let a = sys.row_slice();
    let b = sys.rhs_slice();
    let lipschitz = LIPSCHITZ_SAFETY * spectral_norm_sq(a, m, n);
    let step = if lipschitz > 0.0 { 1.0 / lipschitz } else { 1.0 };

    let mut x = vec![0.0; n];
    let mut r = vec![0.0; m];
    let mut g = vec![0.0; n];
    let evaluate = |x: &[f64], r: &mut Vec<f64>, g: &mut Vec<f64>| -> f64 {
        gemv(a, n, x, r);
        r.iter_mut().zip(b).for_each(|(ri, bi)| *ri -= bi);
        gemv_t(a, n, r, g);
        0.5 * norm_sq(r) + tau * x.iter().map(|v| v.abs()).sum::<f64>()
    };

    let mut objective_trace = vec![evaluate(&x, &mut r, &mut g)];
    let mut kkt = kkt_violation(&g, &x, tau, nonneg);
    let mut iterations = 0;
    while kkt > kkt_tol && iterations < max_iters {
        iterations += 1;
        let thr = step * tau;
        for (xj, gj) in x.iter_mut().zip(&g) {
            let z = *xj - step * gj;
            *xj = if nonneg {
                (z - thr).max(0.0)
            } else {
                z.signum() * (z.abs() - thr).max(0.0)
            };
        }
        let obj = evaluate(&x, &mut r, &mut g);
        if !obj.is_finite() {
            return Err(Error::Solver("non-finite objective".into()));
        }
        objective_trace.push(obj);
        kkt = kkt_violation(&g, &x, tau, nonneg);
    }

    let coefficients = Array1::from(x);
    let values = sys.to_mask_units(&coefficients);
    Ok((
        Solution {
            coefficients,
            values,
        },
        IstaReport {
            iterations,
            lipschitz,
            kkt_residual: kkt,
            converged: kkt <= kkt_tol,
            objective_trace,
        },
    ))
}
