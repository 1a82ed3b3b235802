//! Ghost image from the covariance of bucket values and reference intensities.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::forward::MeasurementSet;
use crate::metrics::{min_max_normalize, Provenance, ReconImage};

#[derive(Debug, Clone, PartialEq)]
pub struct GiImage {
    pub values: Array2<f64>,
    pub m_used: usize,
    pub normalized: bool,
}

impl GiImage {
    pub fn normalized(&self) -> GiImage {
        GiImage {
            values: min_max_normalize(&self.values),
            m_used: self.m_used,
            normalized: true,
        }
    }

    pub fn into_recon(self) -> Result<ReconImage> {
        let digest = format!("gi;m={};normalized={}", self.m_used, self.normalized);
        ReconImage::new(self.values, Provenance::Gi, digest)
    }
}

/// `<B I(x,y)> - <B><I(x,y)>` over all records, accumulated in record order.
///
/// Negative values are estimator noise and are kept.
pub fn gi_reconstruct(ms: &MeasurementSet) -> Result<GiImage> {
    let m = ms.m();
    if m < 2 {
        return Err(Error::InsufficientData(format!(
            "intensity fluctuations need at least 2 records, got {m}"
        )));
    }
    let n = ms.grid_n();
    let mut sum_bi = Array2::<f64>::zeros((n, n));
    let mut sum_i = Array2::<f64>::zeros((n, n));
    let mut sum_b = 0.0;
    for rec in &ms.records {
        let (r, c) = rec.frame.intensity.dim();
        if r != n || c != n {
            return Err(Error::GridMismatch {
                expected: n,
                found_rows: r,
                found_cols: c,
            });
        }
        sum_bi.scaled_add(rec.bucket, &rec.frame.intensity);
        sum_i += &rec.frame.intensity;
        sum_b += rec.bucket;
    }
    let inv = 1.0 / m as f64;
    let mean_b = sum_b * inv;
    let values = ndarray::Zip::from(&sum_bi)
        .and(&sum_i)
        .map_collect(|&bi, &i| bi * inv - mean_b * (i * inv));
    Ok(GiImage {
        values,
        m_used: m,
        normalized: false,
    })
}
