//! Scenario files, campaign runs with on-disk artifacts, and coherence-length
//! trend tables.
//!
//! A scenario file is flat `key=value` text. Keys carry a section prefix:
//!
//! ```text
//! scenario.name=slits
//! scenario.m=500
//! scenario.seeds=1,2,3
//! optics.wavelength_m=6.5e-7
//! optics.z_m=0.4
//! optics.z1_m=0.5
//! optics.lc_target_m=6.88e-5
//! optics.grid_n=100
//! optics.pixel_pitch_m=1.5e-5
//! gics.tau=0.001
//! ```
//!
//! The whole file is validated before anything is written.

mod recipes;
mod run;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub use recipes::{recipe, recipe_names, siom_mask};
pub use run::{
    run_scenario, run_seed, trend_experiment, MetricsRow, ScenarioRun, SeedResult, TrendRow,
    TrendTable, METRICS_HEADER, TREND_HEADER,
};

use crate::error::{Error, Result};
use crate::gics::GicsParams;
use crate::optics::{
    coherence_length, make_double_slit, strip_comment, DoubleSlit, ObjectMask, OpticalConfig,
    DEFAULT_SOURCE_SAMPLES,
};
use crate::pgm::load_mask_pgm;

const SCENARIO_KEYS: &[&str] = &[
    "scenario.name",
    "scenario.m",
    "scenario.gics_m",
    "scenario.methods",
    "scenario.seeds",
    "scenario.noise_sigma",
    "scenario.mask",
    "scenario.slit_width_m",
    "scenario.slit_height_m",
    "scenario.slit_separation_m",
    "scenario.slit_center_x_m",
    "scenario.slit_center_y_m",
    "optics.wavelength_m",
    "optics.z_m",
    "optics.z1_m",
    "optics.source_width_m",
    "optics.lc_target_m",
    "optics.grid_n",
    "optics.pixel_pitch_m",
    "optics.source_samples",
    "gics.tau",
    "gics.max_iters",
    "gics.tol_rel_obj",
    "gics.bb_step_min",
    "gics.bb_step_max",
    "gics.debias",
    "gics.nonneg",
    "gics.kkt_tol",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Methods {
    pub gi: bool,
    pub gics: bool,
}

impl Methods {
    pub const BOTH: Methods = Methods { gi: true, gics: true };

    fn as_list(self) -> String {
        let mut v = Vec::new();
        if self.gi {
            v.push("gi");
        }
        if self.gics {
            v.push("gics");
        }
        v.join(",")
    }
}

/// Double-slit geometry in meters; `center` defaults to the center of pixel
/// `(n/2, n/2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlitSpec {
    pub width: f64,
    pub height: f64,
    pub separation: f64,
    pub center: Option<(f64, f64)>,
}

impl Default for SlitSpec {
    fn default() -> Self {
        SlitSpec {
            width: 0.1e-3,
            height: 1.0e-3,
            separation: 0.2e-3,
            center: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MaskSource {
    DoubleSlit(SlitSpec),
    /// The procedural four-letter aperture.
    Siom,
    Graymap(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub config: OpticalConfig,
    pub mask_source: MaskSource,
    /// Records used by GI (and by GICS unless `gics_m` is set).
    pub m: usize,
    pub gics_m: Option<usize>,
    pub methods: Methods,
    pub gics: GicsParams,
    pub seeds: Vec<u64>,
    pub noise_sigma: f64,
}

fn parse_err(line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        line,
        reason: reason.into(),
    }
}

struct Entries<'a> {
    map: BTreeMap<&'a str, (usize, &'a str)>,
}

impl<'a> Entries<'a> {
    fn raw(&self, key: &str) -> Option<(usize, &'a str)> {
        self.map.get(key).copied()
    }

    fn required(&self, key: &str) -> Result<(usize, &'a str)> {
        self.raw(key)
            .ok_or_else(|| parse_err(0, format!("missing key {key:?}")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| parse_err(line, format!("{key}: cannot parse {v:?}"))),
        }
    }

    fn parse_required<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let (line, v) = self.required(key)?;
        v.parse()
            .map_err(|_| parse_err(line, format!("{key}: cannot parse {v:?}")))
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, line: usize, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| parse_err(line, format!("{key}: cannot parse list item {s:?}")))
        })
        .collect()
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name != "."
        && name != ".."
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
}

impl Scenario {
    /// Parses scenario text. Relative graymap paths are resolved against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Scenario> {
        let mut map = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = strip_comment(raw).trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| parse_err(line, format!("expected key=value, got {body:?}")))?;
            let key = key.trim();
            let Some(&known) = SCENARIO_KEYS.iter().find(|k| **k == key) else {
                return Err(parse_err(line, format!("unknown key {key:?}")));
            };
            if map.insert(known, (line, value.trim())).is_some() {
                return Err(parse_err(line, format!("duplicate key {key:?}")));
            }
        }
        let e = Entries { map };

        let (name_line, name) = e.required("scenario.name")?;
        if !valid_name(name) {
            return Err(parse_err(
                name_line,
                format!("scenario.name {name:?} must be letters, digits, '.', '_' or '-'"),
            ));
        }

        let wavelength = e.parse_required("optics.wavelength_m")?;
        let z = e.parse_required("optics.z_m")?;
        let z1 = e.parse_required("optics.z1_m")?;
        let grid_n = e.parse_required("optics.grid_n")?;
        let pitch = e.parse_required("optics.pixel_pitch_m")?;
        let width: Option<f64> = e.parse("optics.source_width_m")?;
        let lc: Option<f64> = e.parse("optics.lc_target_m")?;
        let config = match (width, lc) {
            (Some(_), Some(_)) => {
                let line = e.raw("optics.lc_target_m").map_or(0, |r| r.0);
                return Err(parse_err(
                    line,
                    "give optics.source_width_m or optics.lc_target_m, not both",
                ));
            }
            (Some(d), None) => OpticalConfig::new(wavelength, z, z1, d, grid_n, pitch)?,
            (None, Some(l)) => {
                OpticalConfig::from_coherence_length(wavelength, z, z1, l, grid_n, pitch)?
            }
            (None, None) => {
                return Err(parse_err(
                    0,
                    "missing key \"optics.source_width_m\" or \"optics.lc_target_m\"",
                ))
            }
        };
        let samples = e
            .parse("optics.source_samples")?
            .unwrap_or(DEFAULT_SOURCE_SAMPLES);
        let config = config.with_source_samples(samples)?;

        let defaults = GicsParams::default();
        let gics = GicsParams {
            tau: e.parse("gics.tau")?.unwrap_or(defaults.tau),
            max_iters: e.parse("gics.max_iters")?.unwrap_or(defaults.max_iters),
            tol_rel_obj: e.parse("gics.tol_rel_obj")?.unwrap_or(defaults.tol_rel_obj),
            bb_step_min: e.parse("gics.bb_step_min")?.unwrap_or(defaults.bb_step_min),
            bb_step_max: e.parse("gics.bb_step_max")?.unwrap_or(defaults.bb_step_max),
            debias: e.parse("gics.debias")?.unwrap_or(defaults.debias),
            nonneg: e.parse("gics.nonneg")?.unwrap_or(defaults.nonneg),
            kkt_tol: e.parse("gics.kkt_tol")?,
        };
        gics.validate()?;

        let methods = match e.raw("scenario.methods") {
            None => Methods::BOTH,
            Some((line, v)) => {
                let mut m = Methods {
                    gi: false,
                    gics: false,
                };
                for item in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    match item.to_ascii_lowercase().as_str() {
                        "gi" => m.gi = true,
                        "gics" => m.gics = true,
                        other => {
                            return Err(parse_err(line, format!("unknown method {other:?}")))
                        }
                    }
                }
                if !m.gi && !m.gics {
                    return Err(parse_err(line, "scenario.methods is empty"));
                }
                m
            }
        };

        let (seeds_line, seeds_raw) = e.required("scenario.seeds")?;
        let seeds: Vec<u64> = parse_list("scenario.seeds", seeds_line, seeds_raw)?;
        if seeds.is_empty() {
            return Err(parse_err(seeds_line, "scenario.seeds is empty"));
        }

        let slit_keys = [
            "scenario.slit_width_m",
            "scenario.slit_height_m",
            "scenario.slit_separation_m",
            "scenario.slit_center_x_m",
            "scenario.slit_center_y_m",
        ];
        let mask_source = match e.raw("scenario.mask").map(|r| r.1).unwrap_or("double_slit") {
            "double_slit" => {
                let d = SlitSpec::default();
                let cx: Option<f64> = e.parse("scenario.slit_center_x_m")?;
                let cy: Option<f64> = e.parse("scenario.slit_center_y_m")?;
                let center = match (cx, cy) {
                    (Some(x), Some(y)) => Some((x, y)),
                    (None, None) => None,
                    _ => {
                        return Err(parse_err(
                            0,
                            "slit center needs both slit_center_x_m and slit_center_y_m",
                        ))
                    }
                };
                MaskSource::DoubleSlit(SlitSpec {
                    width: e.parse("scenario.slit_width_m")?.unwrap_or(d.width),
                    height: e.parse("scenario.slit_height_m")?.unwrap_or(d.height),
                    separation: e
                        .parse("scenario.slit_separation_m")?
                        .unwrap_or(d.separation),
                    center,
                })
            }
            other => {
                if let Some(k) = slit_keys.iter().find(|k| e.raw(k).is_some()) {
                    return Err(parse_err(
                        e.raw(k).unwrap().0,
                        format!("{k} only applies to scenario.mask=double_slit"),
                    ));
                }
                if other == "siom" {
                    MaskSource::Siom
                } else {
                    MaskSource::Graymap(base_dir.join(other))
                }
            }
        };

        let scenario = Scenario {
            name: name.to_string(),
            config,
            mask_source,
            m: e.parse_required("scenario.m")?,
            gics_m: e.parse("scenario.gics_m")?,
            methods,
            gics,
            seeds,
            noise_sigma: e.parse("scenario.noise_sigma")?.unwrap_or(0.0),
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Scenario> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Scenario::parse(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        self.gics.validate()?;
        if !valid_name(&self.name) {
            return Err(Error::Config(format!("bad scenario name {:?}", self.name)));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("scenario needs at least one seed".into()));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("scenario seeds must be distinct".into()));
        }
        if self.methods.gi && self.m < 2 {
            return Err(Error::Config(format!(
                "GI needs m >= 2, got {}",
                self.m
            )));
        }
        if self.m == 0 || self.gics_m == Some(0) {
            return Err(Error::Config("measurement counts must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "noise_sigma must be finite and >= 0, got {}",
                self.noise_sigma
            )));
        }
        if let MaskSource::DoubleSlit(_) = self.mask_source {
            self.double_slit()
                .expect("double-slit source")
                .validate(&self.config)
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Records fed to the compressive solver.
    pub fn gics_records(&self) -> usize {
        self.gics_m.unwrap_or(self.m)
    }

    /// Length of the campaign needed to serve every requested method.
    pub fn campaign_len(&self) -> usize {
        let gi = if self.methods.gi { self.m } else { 0 };
        let gics = if self.methods.gics {
            self.gics_records()
        } else {
            0
        };
        gi.max(gics)
    }

    pub fn double_slit(&self) -> Option<DoubleSlit> {
        match self.mask_source {
            MaskSource::DoubleSlit(spec) => {
                let mut slit =
                    DoubleSlit::centered(&self.config, spec.width, spec.height, spec.separation);
                if let Some(c) = spec.center {
                    slit.center = c;
                }
                Some(slit)
            }
            _ => None,
        }
    }

    pub fn build_mask(&self) -> Result<ObjectMask> {
        match &self.mask_source {
            MaskSource::DoubleSlit(_) => {
                make_double_slit(&self.config, &self.double_slit().expect("double-slit source"))
            }
            MaskSource::Siom => siom_mask(&self.config),
            MaskSource::Graymap(path) => load_mask_pgm(path, &self.config),
        }
    }

    /// Same scenario at another coherence length.
    pub fn with_coherence_length(&self, lc: f64) -> Result<Scenario> {
        let c = &self.config;
        let config = OpticalConfig::from_coherence_length(
            c.wavelength,
            c.z_source_to_object,
            c.z_source_to_reference,
            lc,
            c.grid_n,
            c.pixel_pitch,
        )?
        .with_source_samples(c.source_samples)?;
        Ok(Scenario {
            config,
            ..self.clone()
        })
    }

    /// Renders the scenario as a file that parses back to the same value.
    /// The optics section is written with an explicit source width.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let c = &self.config;
        let _ = writeln!(s, "scenario.name={}", self.name);
        let _ = writeln!(s, "scenario.m={}", self.m);
        if let Some(g) = self.gics_m {
            let _ = writeln!(s, "scenario.gics_m={g}");
        }
        let _ = writeln!(s, "scenario.methods={}", self.methods.as_list());
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let _ = writeln!(s, "scenario.seeds={}", seeds.join(","));
        let _ = writeln!(s, "scenario.noise_sigma={}", self.noise_sigma);
        match &self.mask_source {
            MaskSource::DoubleSlit(spec) => {
                let _ = writeln!(s, "scenario.mask=double_slit");
                let _ = writeln!(s, "scenario.slit_width_m={}", spec.width);
                let _ = writeln!(s, "scenario.slit_height_m={}", spec.height);
                let _ = writeln!(s, "scenario.slit_separation_m={}", spec.separation);
                if let Some((x, y)) = spec.center {
                    let _ = writeln!(s, "scenario.slit_center_x_m={x}");
                    let _ = writeln!(s, "scenario.slit_center_y_m={y}");
                }
            }
            MaskSource::Siom => {
                let _ = writeln!(s, "scenario.mask=siom");
            }
            MaskSource::Graymap(p) => {
                let _ = writeln!(s, "scenario.mask={}", p.display());
            }
        }
        let _ = writeln!(s, "# coherence length {:.4e} m", coherence_length(c));
        let _ = writeln!(s, "optics.wavelength_m={}", c.wavelength);
        let _ = writeln!(s, "optics.z_m={}", c.z_source_to_object);
        let _ = writeln!(s, "optics.z1_m={}", c.z_source_to_reference);
        let _ = writeln!(s, "optics.source_width_m={}", c.source_width);
        let _ = writeln!(s, "optics.grid_n={}", c.grid_n);
        let _ = writeln!(s, "optics.pixel_pitch_m={}", c.pixel_pitch);
        let _ = writeln!(s, "optics.source_samples={}", c.source_samples);
        let g = &self.gics;
        let _ = writeln!(s, "gics.tau={}", g.tau);
        let _ = writeln!(s, "gics.max_iters={}", g.max_iters);
        let _ = writeln!(s, "gics.tol_rel_obj={}", g.tol_rel_obj);
        let _ = writeln!(s, "gics.bb_step_min={}", g.bb_step_min);
        let _ = writeln!(s, "gics.bb_step_max={}", g.bb_step_max);
        let _ = writeln!(s, "gics.debias={}", g.debias);
        let _ = writeln!(s, "gics.nonneg={}", g.nonneg);
        if let Some(k) = g.kkt_tol {
            let _ = writeln!(s, "gics.kkt_tol={k}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = "\
# two slits
scenario.name=basic
scenario.m=40
scenario.seeds=3, 4
optics.wavelength_m=6.5e-7
optics.z_m=0.4
optics.z1_m=0.5
optics.lc_target_m=1.355e-4
optics.grid_n=100
optics.pixel_pitch_m=1.5e-5
";

    fn parse(text: &str) -> Result<Scenario> {
        Scenario::parse(text, Path::new("/data"))
    }

    #[test]
    fn defaults_fill_in() {
        let s = parse(BASIC).unwrap();
        assert_eq!(s.name, "basic");
        assert_eq!(s.seeds, vec![3, 4]);
        assert_eq!(s.methods, Methods::BOTH);
        assert_eq!(s.gics, GicsParams::default());
        assert_eq!(s.mask_source, MaskSource::DoubleSlit(SlitSpec::default()));
        assert!((coherence_length(&s.config) - 135.5e-6).abs() < 1e-12);
        assert_eq!(s.campaign_len(), 40);
    }

    #[test]
    fn text_round_trip() {
        let mut s = parse(BASIC).unwrap();
        s.gics_m = Some(25);
        s.gics.nonneg = true;
        s.gics.kkt_tol = Some(1e-7);
        s.noise_sigma = 0.25;
        let back = parse(&s.to_text()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn unknown_and_duplicate_keys() {
        let err = parse(&format!("{BASIC}scenario.colour=red\n")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 11, .. }), "{err}");
        assert!(err.is_usage());
        let err = parse(&format!("{BASIC}scenario.m=41\n")).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn semantic_errors_are_usage_errors() {
        let cases = [
            BASIC.replace("scenario.m=40", "scenario.m=1"),
            BASIC.replace("scenario.seeds=3, 4", "scenario.seeds="),
            BASIC.replace("optics.lc_target_m=1.355e-4", "optics.lc_target_m=1e-5"),
            format!("{BASIC}optics.source_width_m=1e-3\n"),
            format!("{BASIC}scenario.methods=gi,sparse\n"),
            format!("{BASIC}gics.tau=-1\n"),
            format!("{BASIC}scenario.mask=siom\nscenario.slit_width_m=1e-4\n"),
            format!("{BASIC}scenario.slit_separation_m=5e-5\n"),
            BASIC.replace("basic", "../up"),
            BASIC.replace("scenario.seeds=3, 4", "scenario.seeds=3,3"),
        ];
        for text in &cases {
            let err = parse(text).unwrap_err();
            assert!(err.is_usage(), "{err}");
        }
    }

    #[test]
    fn gics_only_allows_single_record() {
        let s = parse(&format!(
            "{}scenario.methods=gics\n",
            BASIC.replace("scenario.m=40", "scenario.m=1")
        ))
        .unwrap();
        assert_eq!(s.campaign_len(), 1);
    }

    #[test]
    fn graymap_path_is_relative_to_file() {
        let s = parse(&format!("{BASIC}scenario.mask=masks/a.pgm\n")).unwrap();
        assert_eq!(
            s.mask_source,
            MaskSource::Graymap(PathBuf::from("/data/masks/a.pgm"))
        );
        assert!(s.double_slit().is_none());
    }

    #[test]
    fn coherence_override_keeps_everything_else() {
        let s = parse(BASIC).unwrap();
        let t = s.with_coherence_length(68.8e-6).unwrap();
        assert!((coherence_length(&t.config) - 68.8e-6).abs() < 1e-12);
        assert_eq!(t.seeds, s.seeds);
        assert_eq!(t.config.grid_n, s.config.grid_n);
    }
}
