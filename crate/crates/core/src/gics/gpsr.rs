//! Gradient projection for sparse reconstruction with Barzilai-Borwein steps.
//!
//! The free variable is split as `x = u - v` with `u, v >= 0`, which turns the
//! ℓ1 problem into a bound-constrained quadratic program. Every iteration takes
//! a projected step of length `alpha`, then moves along the resulting
//! direction by the exact line minimizer clipped to `[0, 1]`, so the objective
//! never increases.

use ndarray::Array1;

use super::dense::{gemv, gemv_t, norm_sq};
use super::{kkt_violation, GicsParams, IterationRecord, SensingSystem, Solution, SolveReport};
use crate::error::{Error, Result};

const RESIDUAL_REFRESH: usize = 100;
const DEBIAS_MAX_ITERS: usize = 500;
const DEBIAS_TOL: f64 = 1e-10;

struct Workspace<'a> {
    a: &'a [f64],
    b: &'a [f64],
    m: usize,
    n: usize,
}

impl Workspace<'_> {
    fn ax(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        gemv(self.a, self.n, x, &mut out);
        out
    }

    fn aty(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        gemv_t(self.a, self.n, y, &mut out);
        out
    }

    fn residual(&self, x: &[f64]) -> Vec<f64> {
        let mut r = self.ax(x);
        r.iter_mut().zip(self.b).for_each(|(ri, bi)| *ri -= bi);
        r
    }
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn finite_or_err(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Solver(format!("non-finite {what}")))
    }
}

/// Solves `min ½‖b − A x‖² + τ‖x‖₁` (optionally with `x >= 0`).
///
/// Stops when the relative objective change drops below `tol_rel_obj`, or
/// after `max_iters` iterations. A `kkt_tol` replaces the objective test.
pub fn gpsr_solve(sys: &SensingSystem, params: &GicsParams) -> Result<(Solution, SolveReport)> {
    params.validate()?;
    if sys.rows().iter().chain(sys.rhs().iter()).any(|v| !v.is_finite()) {
        return Err(Error::Solver("system contains non-finite entries".into()));
    }
    let ws = Workspace {
        a: sys.row_slice(),
        b: sys.rhs_slice(),
        m: sys.m(),
        n: sys.n(),
    };
    let n = ws.n;
    let tau = params.tau;
    let nonneg = params.nonneg;

    let zero = vec![0.0; n];
    let mut r: Vec<f64> = ws.b.iter().map(|v| -v).collect();
    let mut g = ws.aty(&r);

    let kkt0 = kkt_violation(&g, &zero, tau, nonneg);
    let obj0 = 0.5 * norm_sq(&r);
    let mut trace = vec![IterationRecord {
        iter: 0,
        objective: obj0,
        kkt_residual: kkt0,
    }];
    if kkt0 == 0.0 {
        // the zero vector is already optimal
        let coefficients = Array1::zeros(n);
        let values = sys.to_mask_units(&coefficients);
        return Ok((
            Solution {
                coefficients,
                values,
            },
            SolveReport {
                iterations: 0,
                final_objective: obj0,
                kkt_residual: 0.0,
                converged: true,
                trace,
            },
        ));
    }

    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut du = vec![0.0; n];
    let mut dv = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut x = vec![0.0; n];

    let mut alpha = initial_step(&ws, &g, tau, nonneg, params);
    let mut obj = obj0;
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=params.max_iters {
        iterations = iter;
        let mut d_sq = 0.0;
        let mut slope = 0.0;
        for j in 0..n {
            let gu = g[j] + tau;
            du[j] = (u[j] - alpha * gu).max(0.0) - u[j];
            let gv = tau - g[j];
            dv[j] = if nonneg {
                0.0
            } else {
                (v[j] - alpha * gv).max(0.0) - v[j]
            };
            w[j] = du[j] - dv[j];
            d_sq += du[j] * du[j] + dv[j] * dv[j];
            slope += du[j] * gu + dv[j] * gv;
        }
        if d_sq == 0.0 || slope >= 0.0 {
            converged = true;
            break;
        }
        let aw = ws.ax(&w);
        let gamma = norm_sq(&aw);
        let lambda = if gamma > 0.0 {
            (-slope / gamma).clamp(0.0, 1.0)
        } else {
            1.0
        };

        for j in 0..n {
            u[j] += lambda * du[j];
            v[j] += lambda * dv[j];
            let overlap = u[j].min(v[j]);
            u[j] -= overlap;
            v[j] -= overlap;
            x[j] = u[j] - v[j];
        }
        if iter % RESIDUAL_REFRESH == 0 {
            r = ws.residual(&x);
        } else {
            r.iter_mut().zip(&aw).for_each(|(ri, a)| *ri += lambda * a);
        }
        g = ws.aty(&r);

        alpha = if gamma > 0.0 {
            (d_sq / gamma).clamp(params.bb_step_min, params.bb_step_max)
        } else {
            params.bb_step_max
        };

        let obj_new = finite_or_err(0.5 * norm_sq(&r) + tau * l1(&x), "objective")?;
        let kkt = kkt_violation(&g, &x, tau, nonneg);
        trace.push(IterationRecord {
            iter,
            objective: obj_new,
            kkt_residual: kkt,
        });
        let rel = (obj - obj_new).abs() / obj_new.abs().max(f64::MIN_POSITIVE);
        obj = obj_new;
        let done = match params.kkt_tol {
            Some(t) => kkt <= t,
            None => rel < params.tol_rel_obj,
        };
        if done {
            converged = true;
            break;
        }
    }

    if params.debias {
        debias(&ws, &mut x, nonneg);
    }

    let r = ws.residual(&x);
    let g = ws.aty(&r);
    let final_objective = finite_or_err(0.5 * norm_sq(&r) + tau * l1(&x), "objective")?;
    let kkt_residual = kkt_violation(&g, &x, tau, nonneg);
    let coefficients = Array1::from(x);
    let values = sys.to_mask_units(&coefficients);
    Ok((
        Solution {
            coefficients,
            values,
        },
        SolveReport {
            iterations,
            final_objective,
            kkt_residual,
            converged,
            trace,
        },
    ))
}

/// Exact minimizer along the projected gradient at the origin.
fn initial_step(ws: &Workspace<'_>, g: &[f64], tau: f64, nonneg: bool, params: &GicsParams) -> f64 {
    let p: Vec<f64> = g
        .iter()
        .map(|&gj| {
            if gj + tau < 0.0 {
                -(gj + tau)
            } else if !nonneg && tau - gj < 0.0 {
                tau - gj
            } else {
                0.0
            }
        })
        .collect();
    let ap = ws.ax(&p);
    let denom = norm_sq(&ap);
    if denom > 0.0 {
        (norm_sq(&p) / denom).clamp(params.bb_step_min, params.bb_step_max)
    } else {
        1.0
    }
}

/// Least squares restricted to the support of `x`, by conjugate gradients on
/// the normal equations. Sign-constrained entries that cross zero are clamped.
fn debias(ws: &Workspace<'_>, x: &mut [f64], nonneg: bool) {
    let support: Vec<usize> = (0..ws.n).filter(|&j| x[j] != 0.0).collect();
    if support.is_empty() {
        return;
    }
    let restrict = |full: &[f64]| -> Vec<f64> { support.iter().map(|&j| full[j]).collect() };
    let expand = |part: &[f64]| -> Vec<f64> {
        let mut full = vec![0.0; ws.n];
        for (&j, &p) in support.iter().zip(part) {
            full[j] = p;
        }
        full
    };

    let mut z = restrict(x);
    let mut s: Vec<f64> = ws.residual(x).iter().map(|v| -v).collect();
    let mut grad = restrict(&ws.aty(&s));
    let mut p = grad.clone();
    let mut gg = norm_sq(&grad);
    let gg0 = gg;
    let max_iters = DEBIAS_MAX_ITERS.min(support.len().max(1) * 2);
    for _ in 0..max_iters {
        if gg <= DEBIAS_TOL * DEBIAS_TOL * gg0 || gg == 0.0 {
            break;
        }
        let q = ws.ax(&expand(&p));
        let qq = norm_sq(&q);
        if qq == 0.0 {
            break;
        }
        let step = gg / qq;
        z.iter_mut().zip(&p).for_each(|(zi, pi)| *zi += step * pi);
        s.iter_mut().zip(&q).for_each(|(si, qi)| *si -= step * qi);
        grad = restrict(&ws.aty(&s));
        let gg_new = norm_sq(&grad);
        let beta = gg_new / gg;
        gg = gg_new;
        p.iter_mut().zip(&grad).for_each(|(pi, gi)| *pi = gi + beta * *pi);
    }
    if z.iter().any(|v| !v.is_finite()) {
        return;
    }
    for (&j, &zj) in support.iter().zip(&z) {
        x[j] = if nonneg { zj.max(0.0) } else { zj };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_system(m: usize, n: usize, seed: u64) -> SensingSystem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Array2::from_shape_fn((m, n), |_| rng.sample::<f64, _>(StandardNormal));
        let b = Array1::from_shape_fn(m, |_| rng.sample::<f64, _>(StandardNormal));
        SensingSystem::from_dense(a, b).unwrap()
    }

    /// Normal-equation solve by Gaussian elimination with partial pivoting.
    fn least_squares(sys: &SensingSystem) -> Vec<f64> {
        let a = sys.rows();
        let n = a.ncols();
        let ata = a.t().dot(a);
        let atb = a.t().dot(sys.rhs());
        let mut aug: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut row = ata.row(i).to_vec();
                row.push(atb[i]);
                row
            })
            .collect();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &k| aug[i][col].abs().total_cmp(&aug[k][col].abs()))
                .unwrap();
            aug.swap(col, piv);
            for row in 0..n {
                if row != col {
                    let f = aug[row][col] / aug[col][col];
                    for k in col..=n {
                        aug[row][k] -= f * aug[col][k];
                    }
                }
            }
        }
        (0..n).map(|i| aug[i][n] / aug[i][i]).collect()
    }

    #[test]
    fn zero_threshold_recovers_least_squares() {
        let sys = random_system(20, 5, 1);
        let params = GicsParams {
            tau: 0.0,
            max_iters: 10_000,
            tol_rel_obj: 1e-15,
            kkt_tol: Some(1e-11),
            ..GicsParams::default()
        };
        let (sol, report) = gpsr_solve(&sys, &params).unwrap();
        let ls = least_squares(&sys);
        for (a, b) in sol.coefficients.iter().zip(&ls) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
        assert!(report.converged);
    }

    #[test]
    fn large_threshold_gives_zero() {
        let sys = random_system(30, 10, 2);
        let params = GicsParams {
            tau: sys.lambda_max() * 1.0001,
            ..GicsParams::default()
        };
        let (sol, report) = gpsr_solve(&sys, &params).unwrap();
        assert!(sol.coefficients.iter().all(|&v| v == 0.0));
        assert_eq!(report.iterations, 0);
        assert_eq!(report.kkt_residual, 0.0);
    }

    #[test]
    fn objective_trace_never_increases() {
        let sys = random_system(40, 120, 3);
        let params = GicsParams {
            tau: 0.1 * sys.lambda_max(),
            max_iters: 300,
            tol_rel_obj: 1e-14,
            ..GicsParams::default()
        };
        let (_, report) = gpsr_solve(&sys, &params).unwrap();
        for pair in report.trace.windows(2) {
            let (a, b) = (pair[0].objective, pair[1].objective);
            assert!(b <= a * (1.0 + 1e-12), "{a} -> {b}");
        }
    }

    #[test]
    fn nonneg_solution_is_nonnegative_and_optimal() {
        let sys = random_system(40, 60, 4);
        let params = GicsParams {
            tau: 0.05 * sys.lambda_max(),
            nonneg: true,
            max_iters: 20_000,
            tol_rel_obj: 1e-15,
            kkt_tol: Some(1e-9),
            ..GicsParams::default()
        };
        let (sol, report) = gpsr_solve(&sys, &params).unwrap();
        assert!(sol.coefficients.iter().all(|&v| v >= 0.0));
        assert!(report.kkt_residual <= 1e-9);
        let kkt = sys.kkt_residual(&sol.coefficients, params.tau, true);
        assert!((kkt - report.kkt_residual).abs() < 1e-9);
    }

    #[test]
    fn debias_fits_the_support_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (m, n) = (60, 100);
        let a = Array2::from_shape_fn((m, n), |_| rng.sample::<f64, _>(StandardNormal));
        let mut truth = Array1::zeros(n);
        for (k, j) in [3usize, 17, 40, 77, 91].iter().enumerate() {
            truth[*j] = if k % 2 == 0 { 2.0 } else { -1.5 };
        }
        let b = a.dot(&truth);
        let sys = SensingSystem::from_dense(a, b).unwrap();
        let params = GicsParams {
            tau: 0.05 * sys.lambda_max(),
            debias: true,
            max_iters: 5000,
            tol_rel_obj: 1e-14,
            ..GicsParams::default()
        };
        let (sol, _) = gpsr_solve(&sys, &params).unwrap();
        for (x, t) in sol.coefficients.iter().zip(truth.iter()) {
            assert!((x - t).abs() < 1e-6, "{x} vs {t}");
        }
    }

    #[test]
    fn non_finite_system_is_rejected() {
        let mut a = Array2::<f64>::ones((3, 2));
        a[[1, 1]] = f64::NAN;
        let sys = SensingSystem::from_dense(a, Array1::ones(3)).unwrap();
        assert!(matches!(
            gpsr_solve(&sys, &GicsParams::default()),
            Err(Error::Solver(_))
        ));
    }

    #[test]
    fn invalid_params_are_rejected() {
        let sys = random_system(5, 3, 6);
        let params = GicsParams {
            tau: f64::NAN,
            ..GicsParams::default()
        };
        assert!(gpsr_solve(&sys, &params).is_err());
    }
}
