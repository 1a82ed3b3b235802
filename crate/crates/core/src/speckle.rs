//! Pseudo-thermal speckle synthesis and ensemble statistics.
//!
//! A frame is generated by drawing circular complex Gaussian samples inside a
//! square source aperture and taking a single 2-D DFT. With an `M`-point
//! transform and `S` samples across the aperture, the field correlation on the
//! object grid is the Dirichlet kernel `sin(π S k / M) / (S sin(π k / M))`
//! along each axis, whose first zero sits at `M / S` pixels. `M` and `S` are
//! picked so that `M / S` pixels reproduces `λ z / D`.

use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::optics::{coherence_length, OpticalConfig};
use crate::pgm::{write_atomic, Graymap, PgmFormat};

/// Random-stream tags, so speckle and detector noise never share draws.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub(crate) enum Stream {
    Speckle = 0x5e,
    BucketNoise = 0xb0,
}

/// Deterministic per-frame generator keyed on `(master_seed, frame_index, stream)`.
pub(crate) fn frame_rng(master_seed: u64, frame_index: u64, stream: Stream) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&frame_index.to_le_bytes());
    key[16..24].copy_from_slice(&(stream as u64).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// How the source plane is discretized for a given config.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingPlan {
    /// DFT length `M` along each axis.
    pub fft_len: usize,
    /// Source samples `S` across the aperture.
    pub aperture_samples: usize,
    /// `M * pitch / S`, the coherence length actually realized.
    pub effective_lc: f64,
}

impl SamplingPlan {
    pub fn for_config(config: &OpticalConfig) -> Result<Self> {
        if config.source_samples == 0 {
            return Err(Error::DegenerateAperture(
                "aperture narrower than one source-plane sample".into(),
            ));
        }
        config.validate()?;
        let lc_px = coherence_length(config) / config.pixel_pitch;
        let n = config.grid_n;
        // the transform must cover the whole grid: S * lc_px >= n
        let s_min = config
            .source_samples
            .max((n as f64 / lc_px).ceil() as usize);
        let mut best: Option<(f64, usize, usize)> = None;
        for s in s_min..=s_min + s_min / 2 {
            let m = (s as f64 * lc_px).round() as usize;
            if m < n {
                continue;
            }
            let err = (m as f64 / s as f64 - lc_px).abs();
            if best.map_or(true, |(e, _, _)| err < e) {
                best = Some((err, s, m));
            }
        }
        let (_, s, m) = best.ok_or_else(|| {
            Error::DegenerateAperture(format!("no transform length covers {n} pixels"))
        })?;
        Ok(SamplingPlan {
            fft_len: m,
            aperture_samples: s,
            effective_lc: m as f64 * config.pixel_pitch / s as f64,
        })
    }
}

/// One realization of the reference-plane intensity.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeckleFrame {
    pub intensity: Array2<f64>,
    pub seed: u64,
    pub frame_index: u64,
    pub pitch: f64,
}

impl SpeckleFrame {
    pub fn grid_n(&self) -> usize {
        self.intensity.nrows()
    }
}

/// Reusable synthesizer holding the FFT plan for one config.
pub struct SpeckleGenerator {
    plan: SamplingPlan,
    grid_n: usize,
    pitch: f64,
    fft: Arc<dyn Fft<f64>>,
}

impl SpeckleGenerator {
    pub fn new(config: &OpticalConfig) -> Result<Self> {
        let plan = SamplingPlan::for_config(config)?;
        let fft = FftPlanner::new().plan_fft_forward(plan.fft_len);
        Ok(SpeckleGenerator {
            plan,
            grid_n: config.grid_n,
            pitch: config.pixel_pitch,
            fft,
        })
    }

    pub fn plan(&self) -> &SamplingPlan {
        &self.plan
    }

    pub fn generate(&self, master_seed: u64, frame_index: u64) -> SpeckleFrame {
        let m = self.plan.fft_len;
        let s = self.plan.aperture_samples;
        let n = self.grid_n;
        let offset = (m - s) / 2;
        let amp = (0.5 / (s * s) as f64).sqrt();

        let mut rng = frame_rng(master_seed, frame_index, Stream::Speckle);
        let mut scratch = vec![Complex::default(); self.fft.get_inplace_scratch_len()];
        let mut buf = vec![Complex::<f64>::default(); m];

        // transform the S non-empty source rows, keeping the first n columns
        let mut rows = vec![Complex::<f64>::default(); s * n];
        for p in 0..s {
            buf.fill(Complex::default());
            for q in 0..s {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                buf[offset + q] = Complex::new(re * amp, im * amp);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            rows[p * n..(p + 1) * n].copy_from_slice(&buf[..n]);
        }

        let mut intensity = Array2::zeros((n, n));
        for col in 0..n {
            buf.fill(Complex::default());
            for p in 0..s {
                buf[offset + p] = rows[p * n + col];
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for row in 0..n {
                intensity[[row, col]] = buf[row].norm_sqr();
            }
        }

        SpeckleFrame {
            intensity,
            seed: master_seed,
            frame_index,
            pitch: self.pitch,
        }
    }
}

/// Synthesizes frame `frame_index` of the campaign keyed by `master_seed`.
pub fn synthesize_frame(
    config: &OpticalConfig,
    master_seed: u64,
    frame_index: u64,
) -> Result<SpeckleFrame> {
    Ok(SpeckleGenerator::new(config)?.generate(master_seed, frame_index))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeckleStats {
    pub mean_intensity: f64,
    /// σ/μ of the central pixel across the ensemble.
    pub contrast: f64,
    /// Normalized intensity covariance versus horizontal lag in pixels.
    pub covariance_profile: Vec<f64>,
    /// First zero of the covariance profile, or `None` if it never reaches zero.
    pub measured_lc: Option<f64>,
}

pub fn intensity_stats(frames: &[SpeckleFrame]) -> Result<SpeckleStats> {
    if frames.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "speckle statistics need at least 2 frames, got {}",
            frames.len()
        )));
    }
    let n = frames[0].grid_n();
    for f in frames {
        let (r, c) = f.intensity.dim();
        if r != n || c != n {
            return Err(Error::GridMismatch {
                expected: n,
                found_rows: r,
                found_cols: c,
            });
        }
    }
    let count = frames.len() as f64;
    // moments are taken about the first frame so identical frames give
    // exactly zero fluctuation
    let base = &frames[0].intensity;
    let mut shift = Array2::<f64>::zeros((n, n));
    for f in &frames[1..] {
        shift += &(&f.intensity - base);
    }
    shift /= count;
    let mean = base + &shift;

    let lo = n / 4;
    let hi = lo + n / 2;
    let central = mean.slice(ndarray::s![lo..hi, lo..hi]);
    let mean_intensity = central.sum() / central.len() as f64;

    let c = n / 2;
    let var = frames
        .iter()
        .map(|f| (f.intensity[[c, c]] - base[[c, c]] - shift[[c, c]]).powi(2))
        .sum::<f64>()
        / count;
    let mu = mean[[c, c]];
    let contrast = if mu > 0.0 { var.sqrt() / mu } else { 0.0 };

    let max_lag = n / 2;
    let mut sums = vec![0.0; max_lag + 1];
    let mut fluct = vec![0.0; n];
    for f in frames {
        for ((row, base_row), shift_row) in f
            .intensity
            .rows()
            .into_iter()
            .zip(base.rows())
            .zip(shift.rows())
        {
            for (d, ((&v, &b), &s)) in fluct
                .iter_mut()
                .zip(row.iter().zip(base_row.iter()).zip(shift_row.iter()))
            {
                *d = v - b - s;
            }
            for (lag, acc) in sums.iter_mut().enumerate() {
                *acc += fluct[..n - lag]
                    .iter()
                    .zip(&fluct[lag..])
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
            }
        }
    }
    let covariance: Vec<f64> = sums
        .iter()
        .enumerate()
        .map(|(lag, s)| s / (n - lag) as f64)
        .collect();

    let (covariance_profile, measured_lc) = if covariance[0] > 0.0 {
        let profile: Vec<f64> = covariance.iter().map(|v| v / covariance[0]).collect();
        let lc = first_zero(&profile).map(|lag| lag * frames[0].pitch);
        (profile, lc)
    } else {
        let mut profile = vec![0.0; max_lag + 1];
        profile[0] = 1.0;
        (profile, None)
    };

    Ok(SpeckleStats {
        mean_intensity,
        contrast,
        covariance_profile,
        measured_lc,
    })
}

/// Fractional lag of the first zero of a normalized intensity covariance.
///
/// Thermal intensity covariance is `|μ|²` of the field correlation, which
/// touches zero instead of crossing it. A sign change in the profile is
/// interpolated directly; otherwise the first local minimum is treated as the
/// zero of the signed field amplitude `±sqrt(C)` and interpolated on that.
pub fn first_zero(profile: &[f64]) -> Option<f64> {
    for k in 1..profile.len() {
        let (prev, cur) = (profile[k - 1], profile[k]);
        if cur <= 0.0 {
            return Some((k - 1) as f64 + prev / (prev - cur));
        }
        let Some(&next) = profile.get(k + 1) else {
            break;
        };
        if cur < prev && cur <= next {
            let a_prev = prev.sqrt();
            let a_cur = cur.sqrt();
            let a_next = next.max(0.0).sqrt();
            let slope = (a_prev - a_cur).max(a_next - a_cur);
            let offset = if slope > 0.0 {
                (a_prev - a_next) / (2.0 * slope)
            } else {
                0.0
            };
            return Some(if offset < 0.0 {
                (k - 1) as f64 + a_prev / (a_prev + a_cur)
            } else {
                k as f64 + a_cur / (a_cur + a_next)
            });
        }
    }
    None
}

/// Writes a frame as a 16-bit P5 graymap plus a `<file>.meta` sidecar
/// recording the intensity per count.
pub fn export_frame_pgm(frame: &SpeckleFrame, path: &Path) -> Result<()> {
    let peak = frame.intensity.iter().cloned().fold(0.0, f64::max);
    let scale = if peak > 0.0 { peak / u16::MAX as f64 } else { 1.0 };
    let g = Graymap::from_unit_values(&frame.intensity.mapv(|v| v / (scale * u16::MAX as f64)), u16::MAX);
    write_atomic(path, &g.encode(PgmFormat::Raw))?;
    let meta = format!(
        "scale={scale}\nmaxval={}\nseed={}\nframe_index={}\npitch_m={}\n",
        u16::MAX,
        frame.seed,
        frame.frame_index,
        frame.pitch
    );
    let mut meta_path = path.as_os_str().to_owned();
    meta_path.push(".meta");
    write_atomic(Path::new(&meta_path), meta.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(lc: f64) -> OpticalConfig {
        OpticalConfig::bench_default(lc).unwrap()
    }

    #[test]
    fn plans_for_bench_coherence_lengths() {
        for lc in [276.7e-6, 135.5e-6, 68.8e-6] {
            let plan = SamplingPlan::for_config(&cfg(lc)).unwrap();
            assert!(plan.fft_len >= 100);
            assert!(plan.aperture_samples >= 16);
            assert!((plan.effective_lc - lc).abs() / lc < 0.01, "{plan:?}");
        }
    }

    #[test]
    fn degenerate_aperture_rejected() {
        let mut c = cfg(276.7e-6);
        c.source_samples = 0;
        assert!(matches!(
            SamplingPlan::for_config(&c),
            Err(Error::DegenerateAperture(_))
        ));
    }

    #[test]
    fn frames_are_nonnegative_and_deterministic() {
        let c = cfg(135.5e-6);
        let a = synthesize_frame(&c, 7, 3).unwrap();
        let b = synthesize_frame(&c, 7, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.intensity.iter().all(|&v| v >= 0.0));
        assert!(a.intensity.mean().unwrap() > 0.0);
        let other = synthesize_frame(&c, 7, 4).unwrap();
        assert_ne!(a.intensity, other.intensity);
        let other_seed = synthesize_frame(&c, 8, 3).unwrap();
        assert_ne!(a.intensity, other_seed.intensity);
    }

    #[test]
    fn duplicated_frame_has_zero_contrast() {
        let f = synthesize_frame(&cfg(135.5e-6), 1, 1).unwrap();
        let frames = vec![f; 10];
        let stats = intensity_stats(&frames).unwrap();
        assert_eq!(stats.contrast, 0.0);
        assert_eq!(stats.covariance_profile[0], 1.0);
        assert_eq!(stats.measured_lc, None);
    }

    #[test]
    fn stats_need_two_matching_frames() {
        let c = cfg(135.5e-6);
        let f = synthesize_frame(&c, 1, 1).unwrap();
        assert!(matches!(
            intensity_stats(std::slice::from_ref(&f)),
            Err(Error::InsufficientData(_))
        ));
        let mut small = f.clone();
        small.intensity = Array2::ones((8, 8));
        assert!(matches!(
            intensity_stats(&[f, small]),
            Err(Error::GridMismatch { .. })
        ));
    }

    #[test]
    fn covariance_normalized_at_zero_lag() {
        let gen = SpeckleGenerator::new(&cfg(68.8e-6)).unwrap();
        let frames: Vec<_> = (1..=50).map(|i| gen.generate(3, i)).collect();
        let stats = intensity_stats(&frames).unwrap();
        assert_eq!(stats.covariance_profile[0], 1.0);
        assert!(stats.contrast > 0.0);
    }

    #[test]
    fn first_zero_on_sampled_sinc_squared() {
        // samples of sinc²(k / 4.587) touch zero between integer lags
        let l = 4.587;
        let profile: Vec<f64> = (0..50)
            .map(|k| {
                let x = std::f64::consts::PI * k as f64 / l;
                if k == 0 {
                    1.0
                } else {
                    (x.sin() / x).powi(2)
                }
            })
            .collect();
        let z = first_zero(&profile).unwrap();
        assert!((z - l).abs() / l < 0.03, "{z}");
        let crossing = [1.0, 0.5, -0.5, 0.2];
        assert_eq!(first_zero(&crossing), Some(1.5));
        assert_eq!(first_zero(&[1.0, 0.9, 0.8]), None);
    }

    #[test]
    fn export_writes_graymap_and_sidecar() {
        let f = synthesize_frame(&cfg(135.5e-6), 2, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("frame.pgm");
        export_frame_pgm(&f, &p).unwrap();
        let g = Graymap::read(&p).unwrap();
        assert_eq!((g.width, g.height, g.maxval), (100, 100, 65535));
        let meta = std::fs::read_to_string(dir.path().join("frame.pgm.meta")).unwrap();
        let scale: f64 = meta
            .lines()
            .find_map(|l| l.strip_prefix("scale="))
            .unwrap()
            .parse()
            .unwrap();
        let (r, c) = (17, 42);
        let back = g.data[r * 100 + c] as f64 * scale;
        assert!((back - f.intensity[[r, c]]).abs() <= scale);
    }
}
