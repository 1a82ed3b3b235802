//! Image quality measures: background-normalized SNR, MSE/PSNR and the
//! double-slit dip ratio.

use std::fmt;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::optics::{DoubleSlit, ObjectMask};

/// Dip ratios below this count as two resolved slits.
pub const RESOLVED_DIP_RATIO: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Provenance {
    Gi,
    Gics,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Gi => "gi",
            Provenance::Gics => "gics",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconImage {
    pub values: Array2<f64>,
    pub provenance: Provenance,
    pub params_digest: String,
}

impl ReconImage {
    pub fn new(values: Array2<f64>, provenance: Provenance, params_digest: String) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Metric("reconstruction has non-finite values".into()));
        }
        Ok(ReconImage {
            values,
            provenance,
            params_digest,
        })
    }
}

fn check_grid(values: &Array2<f64>, truth: &ObjectMask) -> Result<()> {
    let (r, c) = values.dim();
    if r != truth.grid_n() || c != truth.grid_n() {
        return Err(Error::GridMismatch {
            expected: truth.grid_n(),
            found_rows: r,
            found_cols: c,
        });
    }
    Ok(())
}

/// Rescales to [0, 1]. A constant image has no range to stretch and is only
/// clamped into [0, 1].
pub fn min_max_normalize(values: &Array2<f64>) -> Array2<f64> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if hi > lo {
        values.mapv(|v| (v - lo) / (hi - lo))
    } else {
        values.mapv(|v| v.clamp(0.0, 1.0))
    }
}

/// `(mean(support) - mean(background)) / std(background)`, with support
/// `truth > 0.5`. A background with zero spread yields `f64::INFINITY`.
pub fn recon_snr(img: &Array2<f64>, truth: &ObjectMask) -> Result<f64> {
    check_grid(img, truth)?;
    let (mut sig, mut ns) = (0.0, 0usize);
    let mut background = Vec::new();
    for (&v, &t) in img.iter().zip(truth.values().iter()) {
        if t > 0.5 {
            sig += v;
            ns += 1;
        } else {
            background.push(v);
        }
    }
    if ns == 0 || background.is_empty() {
        return Err(Error::Metric(
            "SNR needs both object support and background pixels".into(),
        ));
    }
    let nb = background.len() as f64;
    let bg_mean = background.iter().sum::<f64>() / nb;
    let bg_var = background.iter().map(|v| (v - bg_mean).powi(2)).sum::<f64>() / nb;
    let contrast = sig / ns as f64 - bg_mean;
    // relative guard against round-off in a flat background
    let scale = bg_mean.abs().max(contrast.abs()).max(f64::MIN_POSITIVE);
    if bg_var.sqrt() <= 1e-12 * scale {
        return Ok(f64::INFINITY);
    }
    Ok(contrast / bg_var.sqrt())
}

/// Mean squared error against the truth after min-max normalizing `img`.
pub fn mse(img: &Array2<f64>, truth: &ObjectMask) -> Result<f64> {
    check_grid(img, truth)?;
    let norm = min_max_normalize(img);
    Ok(norm
        .iter()
        .zip(truth.values().iter())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / norm.len() as f64)
}

/// `-10 log10(MSE)`; a perfect reconstruction gives `f64::INFINITY`.
pub fn psnr(img: &Array2<f64>, truth: &ObjectMask) -> Result<f64> {
    let e = mse(img, truth)?;
    Ok(if e == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * e.log10()
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlitDip {
    pub dip_ratio: f64,
    pub resolved: bool,
}

/// Valley-to-peak ratio of the row-averaged horizontal profile across the slit band.
pub fn slit_dip(img: &Array2<f64>, slit: &DoubleSlit, pitch: f64) -> Result<SlitDip> {
    let (rows, cols) = img.dim();
    let center_of = |i: usize| (i as f64 + 0.5) * pitch;
    let band: Vec<usize> = (0..rows)
        .filter(|&r| (center_of(r) - slit.center.1).abs() <= 0.5 * slit.height)
        .collect();
    if band.is_empty() {
        return Err(Error::Metric("slit band contains no rows".into()));
    }
    let mut profile = vec![0.0; cols];
    for &r in &band {
        for (p, v) in profile.iter_mut().zip(img.row(r)) {
            *p += v;
        }
    }
    for p in &mut profile {
        *p /= band.len() as f64;
    }

    let peak_in = |cx: f64| -> Option<f64> {
        (0..cols)
            .filter(|&c| (center_of(c) - cx).abs() <= 0.5 * slit.width)
            .map(|c| profile[c])
            .reduce(f64::max)
    };
    let [left, right] = slit.slit_centers_x();
    let (Some(pl), Some(pr)) = (peak_in(left), peak_in(right)) else {
        return Err(Error::Metric("slit columns fall outside the image".into()));
    };

    // profile sampled at the slit-pair midpoint by linear interpolation
    let pos = (slit.center.0 / pitch - 0.5).clamp(0.0, (cols - 1) as f64);
    let i0 = pos.floor() as usize;
    let i1 = (i0 + 1).min(cols - 1);
    let frac = pos - i0 as f64;
    let mid = profile[i0] * (1.0 - frac) + profile[i1] * frac;

    let (lo, hi) = profile
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let peak = 0.5 * (pl + pr);
    if hi - lo <= 1e-12 * hi.abs().max(lo.abs()) || peak <= 0.0 {
        return Err(Error::Metric("profile has no locatable peaks".into()));
    }
    let dip_ratio = mid / peak;
    Ok(SlitDip {
        dip_ratio,
        resolved: dip_ratio < RESOLVED_DIP_RATIO,
    })
}
