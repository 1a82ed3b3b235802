//! Two-arm measurement model: a bucket detector behind the object and a
//! resolving camera in the reference arm, both seeing the same speckle.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::optics::{ObjectMask, OpticalConfig};
use crate::speckle::{frame_rng, SpeckleFrame, SpeckleGenerator, Stream};

/// One acquisition: the reference-arm frame and the bucket value it produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub frame: SpeckleFrame,
    pub bucket: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub records: Vec<Record>,
    pub config: OpticalConfig,
    pub master_seed: u64,
    pub noise_sigma: f64,
}

impl MeasurementSet {
    pub fn m(&self) -> usize {
        self.records.len()
    }

    pub fn grid_n(&self) -> usize {
        self.config.grid_n
    }

    pub fn buckets(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.bucket)
    }

    /// A view restricted to the first `m` records.
    pub fn truncated(&self, m: usize) -> MeasurementSet {
        MeasurementSet {
            records: self.records[..m.min(self.records.len())].to_vec(),
            config: self.config.clone(),
            master_seed: self.master_seed,
            noise_sigma: self.noise_sigma,
        }
    }

    /// `frame_index,bucket` CSV; frames are re-derivable from the config and seed.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("frame_index,bucket\n");
        for r in &self.records {
            let _ = writeln!(s, "{},{}", r.frame.frame_index, r.bucket);
        }
        s
    }
}

/// Noiseless bucket value `Σ I(x, y) |T(x, y)|²`.
pub fn bucket_measure(frame: &SpeckleFrame, mask: &ObjectMask) -> Result<f64> {
    let (rows, cols) = frame.intensity.dim();
    if rows != mask.grid_n() || cols != mask.grid_n() {
        return Err(Error::GridMismatch {
            expected: mask.grid_n(),
            found_rows: rows,
            found_cols: cols,
        });
    }
    Ok(frame
        .intensity
        .iter()
        .zip(mask.values().iter())
        .map(|(i, t)| i * t)
        .sum())
}

/// Acquires frames `1..=m`. Frames are produced in parallel on the current
/// rayon pool; the result does not depend on the number of workers.
pub fn run_campaign(
    config: &OpticalConfig,
    mask: &ObjectMask,
    m: usize,
    master_seed: u64,
    noise_sigma: f64,
) -> Result<MeasurementSet> {
    if m == 0 {
        return Err(Error::InsufficientData("campaign needs m >= 1".into()));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::Config(format!(
            "noise sigma must be finite and non-negative, got {noise_sigma}"
        )));
    }
    if mask.grid_n() != config.grid_n {
        return Err(Error::GridMismatch {
            expected: config.grid_n,
            found_rows: mask.grid_n(),
            found_cols: mask.grid_n(),
        });
    }
    let gen = SpeckleGenerator::new(config)?;
    let records = (1..=m as u64)
        .into_par_iter()
        .map(|index| {
            let frame = gen.generate(master_seed, index);
            let mut bucket = bucket_measure(&frame, mask)?;
            if noise_sigma > 0.0 {
                let mut rng = frame_rng(master_seed, index, Stream::BucketNoise);
                let z: f64 = rng.sample(StandardNormal);
                bucket += noise_sigma * z;
            }
            Ok(Record { frame, bucket })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MeasurementSet {
        records,
        config: config.clone(),
        master_seed,
        noise_sigma,
    })
}
