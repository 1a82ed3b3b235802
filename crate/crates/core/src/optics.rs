//! Optical geometry, coherence-length arithmetic and object masks.
//!
//! All lengths are in meters. The simulated source is a square aperture of
//! side `source_width`, so the transverse coherence length on the object plane
//! is `wavelength * z_source_to_object / source_width`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Default number of source-plane samples across the aperture.
pub const DEFAULT_SOURCE_SAMPLES: usize = 16;
/// Fewest source-plane samples across the aperture that still give a clean sinc kernel.
pub const MIN_SOURCE_SAMPLES: usize = 8;

/// Keys of the flat optics configuration file, in write order.
pub const CONFIG_KEYS: [&str; 6] = [
    "wavelength_m",
    "z_m",
    "z1_m",
    "source_width_m",
    "grid_n",
    "pixel_pitch_m",
];

#[derive(Debug, Clone, PartialEq)]
pub struct OpticalConfig {
    pub wavelength: f64,
    pub z_source_to_object: f64,
    /// Carried for bookkeeping only; the reference plane is simulated as
    /// conjugate to the object plane.
    pub z_source_to_reference: f64,
    pub source_width: f64,
    pub grid_n: usize,
    pub pixel_pitch: f64,
    pub source_samples: usize,
}

impl OpticalConfig {
    pub fn new(
        wavelength: f64,
        z_source_to_object: f64,
        z_source_to_reference: f64,
        source_width: f64,
        grid_n: usize,
        pixel_pitch: f64,
    ) -> Result<Self> {
        let cfg = OpticalConfig {
            wavelength,
            z_source_to_object,
            z_source_to_reference,
            source_width,
            grid_n,
            pixel_pitch,
            source_samples: DEFAULT_SOURCE_SAMPLES,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Builds a config whose source width is chosen to hit `lc_target`.
    pub fn from_coherence_length(
        wavelength: f64,
        z_source_to_object: f64,
        z_source_to_reference: f64,
        lc_target: f64,
        grid_n: usize,
        pixel_pitch: f64,
    ) -> Result<Self> {
        if !(lc_target > 0.0 && lc_target.is_finite()) {
            return Err(Error::Config(format!(
                "coherence length target must be positive, got {lc_target}"
            )));
        }
        Self::new(
            wavelength,
            z_source_to_object,
            z_source_to_reference,
            wavelength * z_source_to_object / lc_target,
            grid_n,
            pixel_pitch,
        )
    }

    /// The 650 nm, z = 400 mm, z1 = 500 mm bench on a 100x100 grid of 15 µm pixels.
    pub fn bench_default(lc_target: f64) -> Result<Self> {
        Self::from_coherence_length(650e-9, 0.4, 0.5, lc_target, 100, 15e-6)
    }

    pub fn with_source_samples(mut self, samples: usize) -> Result<Self> {
        self.source_samples = samples;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let lengths = [
            ("wavelength", self.wavelength),
            ("z_source_to_object", self.z_source_to_object),
            ("z_source_to_reference", self.z_source_to_reference),
            ("source_width", self.source_width),
            ("pixel_pitch", self.pixel_pitch),
        ];
        for (name, v) in lengths {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "{name} must be a positive length, got {v}"
                )));
            }
        }
        if self.grid_n < 8 {
            return Err(Error::Config(format!(
                "grid_n must be at least 8, got {}",
                self.grid_n
            )));
        }
        if self.source_samples < MIN_SOURCE_SAMPLES {
            return Err(Error::Config(format!(
                "source_samples must be at least {MIN_SOURCE_SAMPLES}, got {}",
                self.source_samples
            )));
        }
        let lc = coherence_length(self);
        if lc < 2.0 * self.pixel_pitch {
            return Err(Error::Config(format!(
                "coherence length {lc:.4e} m is below two pixels ({:.4e} m); speckle unresolved",
                2.0 * self.pixel_pitch
            )));
        }
        Ok(())
    }

    pub fn field_of_view(&self) -> f64 {
        self.grid_n as f64 * self.pixel_pitch
    }

    /// Renders the flat `key=value` config file.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let values = [
            self.wavelength.to_string(),
            self.z_source_to_object.to_string(),
            self.z_source_to_reference.to_string(),
            self.source_width.to_string(),
            self.grid_n.to_string(),
            self.pixel_pitch.to_string(),
        ];
        for (k, v) in CONFIG_KEYS.iter().zip(values) {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    /// Parses the flat `key=value` config format. Every key must appear exactly once.
    pub fn parse_config(text: &str) -> Result<Self> {
        let mut values: [Option<&str>; 6] = [None; 6];
        for (lineno, raw) in text.lines().enumerate() {
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: lineno + 1,
                reason: format!("expected key=value, got {line:?}"),
            })?;
            let key = key.trim();
            let idx = CONFIG_KEYS
                .iter()
                .position(|k| *k == key)
                .ok_or_else(|| Error::Parse {
                    line: lineno + 1,
                    reason: format!("unknown key {key:?}"),
                })?;
            if values[idx].replace(value.trim()).is_some() {
                return Err(Error::Parse {
                    line: lineno + 1,
                    reason: format!("duplicate key {key:?}"),
                });
            }
        }
        let get = |i: usize| -> Result<&str> {
            values[i].ok_or_else(|| Error::Parse {
                line: 0,
                reason: format!("missing key {:?}", CONFIG_KEYS[i]),
            })
        };
        let real = |i: usize| -> Result<f64> {
            let v = get(i)?;
            v.parse().map_err(|_| Error::Parse {
                line: 0,
                reason: format!("{}: not a number: {v:?}", CONFIG_KEYS[i]),
            })
        };
        let grid_n = get(4)?.parse().map_err(|_| Error::Parse {
            line: 0,
            reason: format!("grid_n: not an integer: {:?}", values[4].unwrap_or("")),
        })?;
        Self::new(real(0)?, real(1)?, real(2)?, real(3)?, grid_n, real(5)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::parse_config(&text)
    }
}

pub(crate) fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

/// Transverse coherence length `λ z / D` on the object plane.
pub fn coherence_length(config: &OpticalConfig) -> f64 {
    config.wavelength * config.z_source_to_object / config.source_width
}

/// Intensity transmittance `|T|²` sampled on the object grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectMask {
    values: Array2<f64>,
    pitch: f64,
}

impl ObjectMask {
    pub fn new(values: Array2<f64>, pitch: f64) -> Result<Self> {
        if values.nrows() != values.ncols() {
            return Err(Error::Mask(format!(
                "mask must be square, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if !(pitch > 0.0 && pitch.is_finite()) {
            return Err(Error::Mask(format!("pitch must be positive, got {pitch}")));
        }
        if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Mask(format!("transmittance {bad} outside [0, 1]")));
        }
        if !values.iter().any(|&v| v > 0.0) {
            return Err(Error::Mask("mask is fully opaque".into()));
        }
        Ok(ObjectMask { values, pitch })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn grid_n(&self) -> usize {
        self.values.nrows()
    }

    pub fn support_size(&self) -> usize {
        self.values.iter().filter(|&&v| v > 0.0).count()
    }
}

/// Two vertical slits, described in physical units on the object plane.
///
/// `center` is the midpoint of the slit pair measured from the grid corner
/// (column coordinate first).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleSlit {
    pub width: f64,
    pub height: f64,
    pub separation: f64,
    pub center: (f64, f64),
}

impl DoubleSlit {
    /// Slit pair centered on the middle pixel of the grid, i.e. on the
    /// center of pixel `(n/2, n/2)`.
    pub fn centered(config: &OpticalConfig, width: f64, height: f64, separation: f64) -> Self {
        let c = (config.grid_n / 2) as f64 * config.pixel_pitch + 0.5 * config.pixel_pitch;
        DoubleSlit {
            width,
            height,
            separation,
            center: (c, c),
        }
    }

    /// The 0.1 mm x 1.0 mm slits with 0.2 mm spacing.
    pub fn bench(config: &OpticalConfig) -> Self {
        Self::centered(config, 0.1e-3, 1.0e-3, 0.2e-3)
    }

    pub fn slit_centers_x(&self) -> [f64; 2] {
        [
            self.center.0 - 0.5 * self.separation,
            self.center.0 + 0.5 * self.separation,
        ]
    }

    /// Whether the point `(x, y)` lies in either slit (closed rectangles).
    pub fn contains(&self, x: f64, y: f64) -> bool {
        // edges that land on a pixel center count as inside despite round-off
        const EDGE_SLACK: f64 = 1.0 + 1e-9;
        if (y - self.center.1).abs() > 0.5 * self.height * EDGE_SLACK {
            return false;
        }
        self.slit_centers_x()
            .iter()
            .any(|cx| (x - cx).abs() <= 0.5 * self.width * EDGE_SLACK)
    }

    pub(crate) fn validate(&self, config: &OpticalConfig) -> Result<()> {
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err(Error::Mask(format!(
                "slit width and height must be positive, got {} and {}",
                self.width, self.height
            )));
        }
        if self.separation <= self.width {
            return Err(Error::Mask(format!(
                "slits overlap: separation {} <= width {}",
                self.separation, self.width
            )));
        }
        let fov = config.field_of_view();
        let half_x = 0.5 * (self.separation + self.width);
        let half_y = 0.5 * self.height;
        let (cx, cy) = self.center;
        if cx - half_x < 0.0 || cx + half_x > fov || cy - half_y < 0.0 || cy + half_y > fov {
            return Err(Error::Mask(format!(
                "slit pair extends outside the {fov:.4e} m field of view"
            )));
        }
        Ok(())
    }
}

/// Rasterizes a double slit: a pixel is open iff its center lies inside a slit.
pub fn make_double_slit(config: &OpticalConfig, slit: &DoubleSlit) -> Result<ObjectMask> {
    slit.validate(config)?;
    let n = config.grid_n;
    let p = config.pixel_pitch;
    let values = Array2::from_shape_fn((n, n), |(row, col)| {
        let x = (col as f64 + 0.5) * p;
        let y = (row as f64 + 0.5) * p;
        if slit.contains(x, y) {
            1.0
        } else {
            0.0
        }
    });
    ObjectMask::new(values, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config_for(lc: f64) -> OpticalConfig {
        OpticalConfig::bench_default(lc).unwrap()
    }

    #[test]
    fn coherence_length_matches_caption_values() {
        let a = OpticalConfig::new(650e-9, 0.4, 0.5, 0.9397e-3, 100, 15e-6).unwrap();
        assert!((coherence_length(&a) - 276.7e-6).abs() < 0.05e-6);
        let b = OpticalConfig::new(650e-9, 0.4, 0.5, 3.779e-3, 100, 15e-6).unwrap();
        assert!((coherence_length(&b) - 68.8e-6).abs() < 0.05e-6);
    }

    #[test]
    fn doubling_source_halves_coherence_length() {
        let a = OpticalConfig::new(650e-9, 0.4, 0.5, 1e-3, 100, 15e-6).unwrap();
        let b = OpticalConfig::new(650e-9, 0.4, 0.5, 2e-3, 100, 15e-6).unwrap();
        assert_eq!(coherence_length(&a), 2.0 * coherence_length(&b));
    }

    #[test]
    fn rejects_unresolvable_speckle() {
        // l_c = 650e-9 * 0.4 / 10e-3 = 26 µm < 30 µm
        let err = OpticalConfig::new(650e-9, 0.4, 0.5, 10e-3, 100, 15e-6).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(OpticalConfig::new(650e-9, 0.4, 0.5, 1e-3, 4, 15e-6).is_err());
        assert!(OpticalConfig::new(-1.0, 0.4, 0.5, 1e-3, 100, 15e-6).is_err());
    }

    #[test]
    fn config_file_round_trip() {
        let cfg = config_for(135.5e-6);
        let text = format!("# bench\n{}", cfg.to_config_string());
        let back = OpticalConfig::parse_config(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn config_file_rejects_unknown_and_missing_keys() {
        let cfg = config_for(135.5e-6);
        let extra = format!("{}colour=red\n", cfg.to_config_string());
        assert!(matches!(
            OpticalConfig::parse_config(&extra),
            Err(Error::Parse { .. })
        ));
        let missing: String = cfg
            .to_config_string()
            .lines()
            .filter(|l| !l.starts_with("z1_m"))
            .map(|l| format!("{l}\n"))
            .collect();
        assert!(OpticalConfig::parse_config(&missing).is_err());
    }

    /// Independent rasterizer: walks the slit rectangles and counts pixel
    /// centers falling inside each one.
    fn brute_force_counts(cfg: &OpticalConfig, slit: &DoubleSlit) -> (usize, usize, usize) {
        let p = cfg.pixel_pitch;
        let inside = |lo: f64, hi: f64| {
            (0..cfg.grid_n)
                .filter(|&i| {
                    let c = (i as f64 + 0.5) * p;
                    c >= lo - 1e-6 * p && c <= hi + 1e-6 * p
                })
                .count()
        };
        let [left, right] = slit.slit_centers_x();
        let wl = inside(left - 0.5 * slit.width, left + 0.5 * slit.width);
        let wr = inside(right - 0.5 * slit.width, right + 0.5 * slit.width);
        let h = inside(
            slit.center.1 - 0.5 * slit.height,
            slit.center.1 + 0.5 * slit.height,
        );
        (wl, wr, h)
    }

    #[test]
    fn bench_double_slit_rasterization() {
        let cfg = config_for(276.7e-6);
        let slit = DoubleSlit::bench(&cfg);
        let mask = make_double_slit(&cfg, &slit).unwrap();
        let (wl, wr, h) = brute_force_counts(&cfg, &slit);
        assert_eq!((wl, wr, h), (7, 7, 67));
        assert_eq!(mask.support_size(), 2 * 7 * 67);

        // per-row widths and slit center spacing
        let row = mask.values().row(50);
        let cols: Vec<usize> = (0..100).filter(|&c| row[c] > 0.0).collect();
        assert_eq!(cols.len(), 14);
        let left: f64 = cols[..7].iter().map(|&c| c as f64).sum::<f64>() / 7.0;
        let right: f64 = cols[7..].iter().map(|&c| c as f64).sum::<f64>() / 7.0;
        assert!(((right - left) - 13.0).abs() <= 1.0);
    }

    #[test]
    fn overlapping_or_oversized_slits_rejected() {
        let cfg = config_for(276.7e-6);
        let overlap = DoubleSlit::centered(&cfg, 0.2e-3, 1e-3, 0.2e-3);
        assert!(matches!(make_double_slit(&cfg, &overlap), Err(Error::Mask(_))));
        let tall = DoubleSlit::centered(&cfg, 0.1e-3, 2e-3, 0.2e-3);
        assert!(make_double_slit(&cfg, &tall).is_err());
    }

    #[test]
    fn mask_mirror_symmetric_about_pixel_boundary() {
        let cfg = config_for(276.7e-6);
        let mut slit = DoubleSlit::bench(&cfg);
        slit.center = (50.0 * cfg.pixel_pitch, 50.0 * cfg.pixel_pitch);
        let mask = make_double_slit(&cfg, &slit).unwrap();
        let v = mask.values();
        for r in 0..100 {
            for c in 0..100 {
                assert_eq!(v[[r, c]], v[[r, 99 - c]]);
            }
        }
    }

    #[test]
    fn rejects_invalid_masks() {
        assert!(ObjectMask::new(Array2::zeros((4, 4)), 1e-5).is_err());
        assert!(ObjectMask::new(Array2::from_elem((4, 4), 1.5), 1e-5).is_err());
        assert!(ObjectMask::new(Array2::from_elem((4, 3), 1.0), 1e-5).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn coherence_length_monotone(
                d in 0.5e-3f64..3e-3,
                z in 0.2f64..0.6,
                k in 1.01f64..2.0,
            ) {
                let base = OpticalConfig::new(650e-9, z, 0.5, d, 16, 1e-6).unwrap();
                let wider = OpticalConfig::new(650e-9, z, 0.5, d * k, 16, 1e-6).unwrap();
                let farther = OpticalConfig::new(650e-9, z * k, 0.5, d, 16, 1e-6).unwrap();
                prop_assert!(coherence_length(&wider) < coherence_length(&base));
                prop_assert!(coherence_length(&farther) > coherence_length(&base));
            }

            #[test]
            fn slit_support_equals_brute_force(
                a_px in 2.0f64..8.0,
                h_px in 10.0f64..60.0,
                gap_px in 1.0f64..10.0,
                shift in 0.0f64..1.0,
            ) {
                let cfg = config_for(276.7e-6);
                let p = cfg.pixel_pitch;
                let slit = DoubleSlit {
                    width: a_px * p,
                    height: h_px * p,
                    separation: (a_px + gap_px) * p,
                    center: ((50.0 + shift) * p, (50.0 + shift) * p),
                };
                let mask = make_double_slit(&cfg, &slit).unwrap();
                let (wl, wr, h) = brute_force_counts(&cfg, &slit);
                prop_assert_eq!(mask.support_size(), (wl + wr) * h);
            }
        }
    }
}
