//! Ghost imaging via compressive sampling.
//!
//! Each record contributes one linear equation `B_r = Σ I_r(x, y) t(x, y)`
//! in the unknown transmittance `t`. The image is recovered by solving the
//! ℓ1-regularized least-squares problem
//!
//! ```text
//! minimize ½‖b − A x‖² + τ‖x‖₁
//! ```
//!
//! with a gradient-projection solver ([`gpsr_solve`]). [`ista_reference`] is a
//! plain proximal-gradient solver kept as an independent check.

mod dense;
mod gpsr;
mod ista;

use ndarray::{Array1, Array2};

pub use gpsr::gpsr_solve;
pub use ista::{ista_reference, IstaReport};

use crate::error::{Error, Result};
use crate::forward::MeasurementSet;
use crate::metrics::{Provenance, ReconImage};

/// The linear system handed to the solvers.
///
/// `rows` is stored row-major (`m x n_pix`). When centered, the per-column
/// mean has been removed from `rows` and the mean bucket from `rhs`; when
/// scaled, column `j` has been divided by `col_scale[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingSystem {
    rows: Array2<f64>,
    rhs: Array1<f64>,
    col_scale: Array1<f64>,
    col_mean: Array1<f64>,
    rhs_mean: f64,
    centered: bool,
    dead_columns: usize,
}

impl SensingSystem {
    /// Wraps a raw system without centering or scaling.
    pub fn from_dense(rows: Array2<f64>, rhs: Array1<f64>) -> Result<Self> {
        if rows.nrows() == 0 || rows.nrows() != rhs.len() {
            return Err(Error::Solver(format!(
                "system shape mismatch: {} rows, {} right-hand sides",
                rows.nrows(),
                rhs.len()
            )));
        }
        let n = rows.ncols();
        Ok(SensingSystem {
            rows: rows.as_standard_layout().into_owned(),
            rhs,
            col_scale: Array1::ones(n),
            col_mean: Array1::zeros(n),
            rhs_mean: 0.0,
            centered: false,
            dead_columns: 0,
        })
    }

    pub fn rows(&self) -> &Array2<f64> {
        &self.rows
    }

    pub fn rhs(&self) -> &Array1<f64> {
        &self.rhs
    }

    pub fn col_scale(&self) -> &Array1<f64> {
        &self.col_scale
    }

    pub fn centered(&self) -> bool {
        self.centered
    }

    /// Columns with zero variance whose scale was left at 1.
    pub fn dead_columns(&self) -> usize {
        self.dead_columns
    }

    pub fn m(&self) -> usize {
        self.rows.nrows()
    }

    pub fn n(&self) -> usize {
        self.rows.ncols()
    }

    pub(crate) fn row_slice(&self) -> &[f64] {
        self.rows
            .as_slice()
            .expect("sensing rows are kept in standard layout")
    }

    pub(crate) fn rhs_slice(&self) -> &[f64] {
        self.rhs.as_slice().expect("rhs is contiguous")
    }

    /// Rebuilds the uncentered, unscaled rows.
    pub fn original_rows(&self) -> Array2<f64> {
        let mut out = self.rows.clone();
        for mut row in out.rows_mut() {
            for ((v, s), mu) in row.iter_mut().zip(&self.col_scale).zip(&self.col_mean) {
                *v = *v * s + mu;
            }
        }
        out
    }

    pub fn original_rhs(&self) -> Array1<f64> {
        self.rhs.mapv(|v| v + self.rhs_mean)
    }

    /// Maps solver coefficients back to mask units.
    pub fn to_mask_units(&self, coefficients: &Array1<f64>) -> Array1<f64> {
        coefficients / &self.col_scale
    }

    /// `Aᵀ b`.
    pub fn correlation(&self) -> Array1<f64> {
        let mut out = vec![0.0; self.n()];
        dense::gemv_t(self.row_slice(), self.n(), self.rhs_slice(), &mut out);
        Array1::from(out)
    }

    /// `‖Aᵀ b‖∞`, the smallest τ whose solution is identically zero.
    pub fn lambda_max(&self) -> f64 {
        dense::inf_norm(self.correlation().as_slice().unwrap())
    }

    /// `½‖b − A x‖² + τ‖x‖₁` in solver coefficients.
    pub fn objective(&self, coefficients: &Array1<f64>, tau: f64) -> f64 {
        let r = self.residual(coefficients);
        0.5 * dense::norm_sq(&r) + tau * coefficients.iter().map(|v| v.abs()).sum::<f64>()
    }

    /// `A x − b`.
    pub(crate) fn residual(&self, coefficients: &Array1<f64>) -> Vec<f64> {
        let mut r = vec![0.0; self.m()];
        dense::gemv(
            self.row_slice(),
            self.n(),
            coefficients.as_slice().expect("contiguous coefficients"),
            &mut r,
        );
        for (ri, bi) in r.iter_mut().zip(self.rhs_slice()) {
            *ri -= bi;
        }
        r
    }

    /// Gradient `Aᵀ(A x − b)` of the quadratic term.
    pub fn gradient(&self, coefficients: &Array1<f64>) -> Array1<f64> {
        let r = self.residual(coefficients);
        let mut g = vec![0.0; self.n()];
        dense::gemv_t(self.row_slice(), self.n(), &r, &mut g);
        Array1::from(g)
    }

    /// Infinity norm of the LASSO optimality violation at `x`.
    pub fn kkt_residual(&self, coefficients: &Array1<f64>, tau: f64, nonneg: bool) -> f64 {
        let g = self.gradient(coefficients);
        kkt_violation(g.as_slice().unwrap(), coefficients.as_slice().unwrap(), tau, nonneg)
    }
}

pub(crate) fn kkt_violation(g: &[f64], x: &[f64], tau: f64, nonneg: bool) -> f64 {
    g.iter()
        .zip(x)
        .map(|(&gj, &xj)| {
            if xj > 0.0 {
                (gj + tau).abs()
            } else if xj < 0.0 {
                (gj - tau).abs()
            } else if nonneg {
                (-(gj + tau)).max(0.0)
            } else {
                (gj.abs() - tau).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Stacks the reference frames into a sensing system.
pub fn build_sensing(ms: &MeasurementSet, centered: bool, scale_columns: bool) -> Result<SensingSystem> {
    let m = ms.m();
    let n = ms.grid_n();
    let n_pix = n * n;
    if m == 0 {
        return Err(Error::InsufficientData("no records".into()));
    }
    let mut rows = Array2::<f64>::zeros((m, n_pix));
    for (mut row, rec) in rows.rows_mut().into_iter().zip(&ms.records) {
        let (r, c) = rec.frame.intensity.dim();
        if r != n || c != n {
            return Err(Error::GridMismatch {
                expected: n,
                found_rows: r,
                found_cols: c,
            });
        }
        row.iter_mut()
            .zip(rec.frame.intensity.iter())
            .for_each(|(d, s)| *d = *s);
    }
    let mut rhs: Array1<f64> = ms.buckets().collect();

    let mut col_mean = Array1::zeros(n_pix);
    let mut rhs_mean = 0.0;
    if centered {
        for row in rows.rows() {
            col_mean += &row;
        }
        col_mean /= m as f64;
        for mut row in rows.rows_mut() {
            row -= &col_mean;
        }
        rhs_mean = rhs.sum() / m as f64;
        rhs -= rhs_mean;
    }

    let mut col_scale = Array1::ones(n_pix);
    let mut dead_columns = 0;
    if scale_columns {
        let mut sq = Array1::<f64>::zeros(n_pix);
        for row in rows.rows() {
            sq.zip_mut_with(&row, |s, v| *s += v * v);
        }
        let root_m = (m as f64).sqrt();
        for (s, q) in col_scale.iter_mut().zip(&sq) {
            let rms = q.sqrt() / root_m;
            if rms > 0.0 && rms.is_finite() {
                *s = rms;
            } else {
                dead_columns += 1;
            }
        }
        for mut row in rows.rows_mut() {
            row /= &col_scale;
        }
    }

    Ok(SensingSystem {
        rows,
        rhs,
        col_scale,
        col_mean,
        rhs_mean,
        centered,
        dead_columns,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GicsParams {
    pub tau: f64,
    pub max_iters: usize,
    pub tol_rel_obj: f64,
    pub bb_step_min: f64,
    pub bb_step_max: f64,
    pub debias: bool,
    pub nonneg: bool,
    /// When set, iterate until the KKT residual falls to this value instead of
    /// watching the objective.
    pub kkt_tol: Option<f64>,
}

impl Default for GicsParams {
    fn default() -> Self {
        GicsParams {
            tau: 1e-3,
            max_iters: 2000,
            tol_rel_obj: 1e-8,
            bb_step_min: 1e-30,
            bb_step_max: 1e30,
            debias: false,
            nonneg: false,
            kkt_tol: None,
        }
    }
}

impl GicsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be >= 0, got {}", self.tau)));
        }
        if !(self.tol_rel_obj > 0.0) {
            return Err(Error::Config("tol_rel_obj must be positive".into()));
        }
        if !(self.bb_step_min > 0.0 && self.bb_step_min < self.bb_step_max) {
            return Err(Error::Config(format!(
                "need 0 < bb_step_min < bb_step_max, got [{}, {}]",
                self.bb_step_min, self.bb_step_max
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be positive".into()));
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        format!(
            "tau={};max_iters={};tol_rel_obj={};bb=[{},{}];debias={};nonneg={}",
            self.tau,
            self.max_iters,
            self.tol_rel_obj,
            self.bb_step_min,
            self.bb_step_max,
            self.debias,
            self.nonneg
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub objective: f64,
    pub kkt_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_objective: f64,
    pub kkt_residual: f64,
    pub converged: bool,
    pub trace: Vec<IterationRecord>,
}

impl SolveReport {
    /// `iter,objective,kkt_residual` CSV of the iteration trace.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::from("iter,objective,kkt_residual\n");
        for r in &self.trace {
            let _ = writeln!(s, "{},{},{}", r.iter, r.objective, r.kkt_residual);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    /// Variables of the system as posed (scaled units).
    pub coefficients: Array1<f64>,
    /// The same solution in mask units.
    pub values: Array1<f64>,
}

/// Centered, column-scaled GPSR reconstruction; negatives are clamped to 0.
pub fn gics_reconstruct(ms: &MeasurementSet, params: &GicsParams) -> Result<(ReconImage, SolveReport)> {
    let system = build_sensing(ms, true, true)?;
    let (solution, report) = gpsr_solve(&system, params)?;
    let n = ms.grid_n();
    let values = Array2::from_shape_vec((n, n), solution.values.to_vec())
        .expect("solution length matches the grid")
        .mapv(|v| v.max(0.0));
    let digest = format!("gics;m={};{}", ms.m(), params.digest());
    Ok((ReconImage::new(values, Provenance::Gics, digest)?, report))
}
