//! Thermal-light ghost imaging: speckle synthesis, the two-arm measurement
//! model, correlation and compressive reconstructions, and image metrics.

pub mod error;
pub mod forward;
pub mod gics;
pub mod metrics;
pub mod optics;
pub mod pgm;
pub mod recon_gi;
pub mod speckle;

pub use error::{Error, Result};
pub use forward::{bucket_measure, run_campaign, MeasurementSet, Record};
pub use gics::{
    build_sensing, gics_reconstruct, gpsr_solve, ista_reference, GicsParams, IstaReport,
    SensingSystem, Solution, SolveReport,
};
pub use metrics::{mse, psnr, recon_snr, slit_dip, Provenance, ReconImage, SlitDip};
pub use optics::{coherence_length, make_double_slit, DoubleSlit, ObjectMask, OpticalConfig};
pub use recon_gi::{gi_reconstruct, GiImage};
pub use speckle::{intensity_stats, synthesize_frame, SpeckleFrame, SpeckleGenerator, SpeckleStats};
pub mod harness;
pub mod selftest;
