use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::Scenario;
use crate::error::{Error, Result};
use crate::forward::{run_campaign, MeasurementSet};
use crate::gics::{gics_reconstruct, SolveReport};
use crate::metrics::{mse, psnr, recon_snr, slit_dip, Provenance, ReconImage, SlitDip};
use crate::optics::{coherence_length, ObjectMask};
use crate::pgm::{save_mask_pgm, save_normalized_pgm, write_atomic, PgmFormat};
use crate::recon_gi::gi_reconstruct;

pub const METRICS_HEADER: &str = "scenario,lc_m,m,method,seed,snr,mse,psnr,dip_ratio,resolved";
pub const TREND_HEADER: &str = "lc_m,method,n_seeds,snr_mean,snr_std,mse_mean,mse_std";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub scenario: String,
    pub lc_m: f64,
    pub m: usize,
    pub method: Provenance,
    pub seed: u64,
    pub snr: f64,
    pub mse: f64,
    pub psnr: f64,
    /// Only for double-slit objects.
    pub dip: Option<SlitDip>,
}

impl MetricsRow {
    pub fn csv_line(&self) -> String {
        let (dip, resolved) = match self.dip {
            Some(d) => (d.dip_ratio.to_string(), d.resolved.to_string()),
            None => (String::new(), String::new()),
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.scenario,
            self.lc_m,
            self.m,
            self.method,
            self.seed,
            self.snr,
            self.mse,
            self.psnr,
            dip,
            resolved
        )
    }
}

fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = format!("{METRICS_HEADER}\n");
    for r in rows {
        s.push_str(&r.csv_line());
        s.push('\n');
    }
    s
}

fn raw_csv(values: &Array2<f64>) -> String {
    let mut s = String::new();
    for row in values.rows() {
        let line: Vec<String> = row.iter().map(f64::to_string).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone)]
pub struct SeedResult {
    pub seed: u64,
    pub measurements: MeasurementSet,
    pub gi: Option<ReconImage>,
    pub gics: Option<(ReconImage, SolveReport)>,
    pub rows: Vec<MetricsRow>,
}

fn score(
    scenario: &Scenario,
    mask: &ObjectMask,
    img: &ReconImage,
    m: usize,
    seed: u64,
) -> Result<MetricsRow> {
    let dip = match scenario.double_slit() {
        Some(slit) => Some(slit_dip(&img.values, &slit, scenario.config.pixel_pitch)?),
        None => None,
    };
    Ok(MetricsRow {
        scenario: scenario.name.clone(),
        lc_m: coherence_length(&scenario.config),
        m,
        method: img.provenance,
        seed,
        snr: recon_snr(&img.values, mask)?,
        mse: mse(&img.values, mask)?,
        psnr: psnr(&img.values, mask)?,
        dip,
    })
}

/// One campaign and the requested reconstructions, all in memory.
///
/// GI uses the first `m` records and GICS the first `gics_m`; both come from
/// the same campaign.
pub fn run_seed(scenario: &Scenario, mask: &ObjectMask, seed: u64) -> Result<SeedResult> {
    let ms = run_campaign(
        &scenario.config,
        mask,
        scenario.campaign_len(),
        seed,
        scenario.noise_sigma,
    )?;
    let mut rows = Vec::new();
    let gi = if scenario.methods.gi {
        let img = gi_reconstruct(&ms.truncated(scenario.m))?.into_recon()?;
        rows.push(score(scenario, mask, &img, scenario.m, seed)?);
        Some(img)
    } else {
        None
    };
    let gics = if scenario.methods.gics {
        let m = scenario.gics_records();
        let (img, report) = gics_reconstruct(&ms.truncated(m), &scenario.gics)?;
        rows.push(score(scenario, mask, &img, m, seed)?);
        Some((img, report))
    } else {
        None
    };
    Ok(SeedResult {
        seed,
        measurements: ms,
        gi,
        gics,
        rows,
    })
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub dir: PathBuf,
    pub rows: Vec<MetricsRow>,
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))
}

fn write_seed(dir: &Path, truth: &ObjectMask, res: &SeedResult) -> Result<()> {
    ensure_dir(dir)?;
    save_mask_pgm(truth, &dir.join("truth.pgm"), 255, PgmFormat::Raw)?;
    if let Some(img) = &res.gi {
        save_normalized_pgm(&img.values, &dir.join("gi.pgm"))?;
        write_atomic(&dir.join("gi_raw.csv"), raw_csv(&img.values).as_bytes())?;
    }
    let mut solve = String::from("iter,objective,kkt_residual\n");
    if let Some((img, report)) = &res.gics {
        save_normalized_pgm(&img.values, &dir.join("gics.pgm"))?;
        write_atomic(&dir.join("gics_raw.csv"), raw_csv(&img.values).as_bytes())?;
        solve = report.to_csv();
    }
    write_atomic(&dir.join("solve.csv"), solve.as_bytes())?;
    write_atomic(
        &dir.join("measurements.csv"),
        res.measurements.to_csv().as_bytes(),
    )?;
    write_atomic(&dir.join("metrics.csv"), metrics_csv(&res.rows).as_bytes())
}

/// Runs every seed and writes `<out>/<name>/<seed>/...` plus a scenario-wide
/// `<out>/<name>/metrics.csv`.
pub fn run_scenario(scenario: &Scenario, out: &Path) -> Result<ScenarioRun> {
    scenario.validate()?;
    let mask = scenario.build_mask()?;
    let dir = out.join(&scenario.name);
    let mut rows = Vec::new();
    for &seed in &scenario.seeds {
        let res = run_seed(scenario, &mask, seed)?;
        write_seed(&dir.join(seed.to_string()), &mask, &res)?;
        rows.extend(res.rows);
    }
    write_atomic(&dir.join("scenario.txt"), scenario.to_text().as_bytes())?;
    write_atomic(&dir.join("metrics.csv"), metrics_csv(&rows).as_bytes())?;
    Ok(ScenarioRun { dir, rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrendRow {
    pub lc_m: f64,
    pub method: Provenance,
    pub n_seeds: usize,
    pub snr_mean: f64,
    pub snr_std: f64,
    pub mse_mean: f64,
    pub mse_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrendTable {
    /// Sorted by descending coherence length, GI before GICS.
    pub rows: Vec<TrendRow>,
    pub metrics: Vec<MetricsRow>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl TrendTable {
    fn series(&self, method: Provenance) -> Vec<&TrendRow> {
        self.rows.iter().filter(|r| r.method == method).collect()
    }

    /// `(name, verdict)` pairs for each requested method, walking from the
    /// largest to the smallest coherence length.
    pub fn verdicts(&self) -> Vec<(&'static str, bool)> {
        let mut out = Vec::new();
        let gi = self.series(Provenance::Gi);
        if !gi.is_empty() {
            let snr: Vec<f64> = gi.iter().map(|r| r.snr_mean).collect();
            out.push(("monotone_gi_snr", snr.windows(2).all(|w| w[1] <= w[0])));
            out.push(("strict_gi_snr", snr.windows(2).all(|w| w[1] < w[0])));
        }
        let gics = self.series(Provenance::Gics);
        if !gics.is_empty() {
            let e: Vec<f64> = gics.iter().map(|r| r.mse_mean).collect();
            out.push(("monotone_gics_mse", e.windows(2).all(|w| w[1] <= w[0])));
            out.push(("strict_gics_mse", e.windows(2).all(|w| w[1] < w[0])));
        }
        out
    }

    pub fn verdict(&self, name: &str) -> Option<bool> {
        self.verdicts()
            .into_iter()
            .find(|(n, _)| *n == name)
            .map(|(_, v)| v)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{TREND_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.lc_m, r.method, r.n_seeds, r.snr_mean, r.snr_std, r.mse_mean, r.mse_std
            );
        }
        s
    }

    pub fn verdict_text(&self) -> String {
        self.verdicts()
            .iter()
            .map(|(n, v)| format!("{n}={v}\n"))
            .collect()
    }

    /// Writes `trend.csv`, `verdicts.txt` and the per-seed `metrics.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        ensure_dir(dir)?;
        write_atomic(&dir.join("trend.csv"), self.to_csv().as_bytes())?;
        write_atomic(&dir.join("verdicts.txt"), self.verdict_text().as_bytes())?;
        write_atomic(&dir.join("metrics.csv"), metrics_csv(&self.metrics).as_bytes())
    }
}

/// Repeats `base` over coherence lengths and seeds and summarizes SNR and MSE
/// per `(l_c, method)`. Repeated coherence lengths are merged.
pub fn trend_experiment(base: &Scenario, lcs: &[f64], seeds: &[u64]) -> Result<TrendTable> {
    if lcs.len() < 2 {
        return Err(Error::Config(format!(
            "a trend needs at least 2 coherence lengths, got {}",
            lcs.len()
        )));
    }
    if seeds.len() < 2 {
        return Err(Error::Config(format!(
            "a trend needs at least 2 seeds, got {}",
            seeds.len()
        )));
    }
    if let Some(bad) = lcs.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
        return Err(Error::Config(format!("bad coherence length {bad}")));
    }
    let mut sorted = lcs.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted.dedup();

    let mut rows = Vec::new();
    let mut metrics = Vec::new();
    for &lc in &sorted {
        let sc = Scenario {
            seeds: seeds.to_vec(),
            ..base.with_coherence_length(lc)?
        };
        sc.validate()?;
        let mask = sc.build_mask()?;
        let mut per_seed = Vec::new();
        for &seed in seeds {
            per_seed.extend(run_seed(&sc, &mask, seed)?.rows);
        }
        for method in [Provenance::Gi, Provenance::Gics] {
            let sel: Vec<&MetricsRow> = per_seed.iter().filter(|r| r.method == method).collect();
            if sel.is_empty() {
                continue;
            }
            let snr: Vec<f64> = sel.iter().map(|r| r.snr).collect();
            let err: Vec<f64> = sel.iter().map(|r| r.mse).collect();
            let (snr_mean, snr_std) = mean_std(&snr);
            let (mse_mean, mse_std) = mean_std(&err);
            rows.push(TrendRow {
                lc_m: lc,
                method,
                n_seeds: sel.len(),
                snr_mean,
                snr_std,
                mse_mean,
                mse_std,
            });
        }
        metrics.extend(per_seed);
    }
    Ok(TrendTable { rows, metrics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{MaskSource, Methods, SlitSpec};
    use crate::optics::OpticalConfig;

    fn small() -> Scenario {
        Scenario {
            name: "small".into(),
            config: OpticalConfig::bench_default(135.5e-6).unwrap(),
            mask_source: MaskSource::DoubleSlit(SlitSpec::default()),
            m: 30,
            gics_m: Some(20),
            methods: Methods::BOTH,
            gics: crate::gics::GicsParams {
                max_iters: 20,
                ..Default::default()
            },
            seeds: vec![1, 2],
            noise_sigma: 0.0,
        }
    }

    #[test]
    fn metrics_line_layout() {
        let row = MetricsRow {
            scenario: "s".into(),
            lc_m: 6.88e-5,
            m: 500,
            method: Provenance::Gics,
            seed: 7,
            snr: 2.5,
            mse: 0.125,
            psnr: 9.0,
            dip: Some(SlitDip {
                dip_ratio: 0.5,
                resolved: true,
            }),
        };
        assert_eq!(row.csv_line(), "s,0.0000688,500,gics,7,2.5,0.125,9,0.5,true");
        let row = MetricsRow { dip: None, ..row };
        assert!(row.csv_line().ends_with(",9,,"));
    }

    #[test]
    fn seed_uses_separate_record_counts() {
        let sc = small();
        let mask = sc.build_mask().unwrap();
        let res = run_seed(&sc, &mask, 5).unwrap();
        assert_eq!(res.measurements.m(), 30);
        assert_eq!(res.rows.len(), 2);
        assert_eq!((res.rows[0].method, res.rows[0].m), (Provenance::Gi, 30));
        assert_eq!((res.rows[1].method, res.rows[1].m), (Provenance::Gics, 20));
        assert!(res.rows[0].dip.is_some());
    }

    #[test]
    fn scenario_files_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let sc = Scenario {
            seeds: vec![9],
            ..small()
        };
        let run = run_scenario(&sc, dir.path()).unwrap();
        let seed_dir = run.dir.join("9");
        for f in [
            "gi.pgm",
            "gics.pgm",
            "truth.pgm",
            "metrics.csv",
            "solve.csv",
            "measurements.csv",
            "gi_raw.csv",
            "gics_raw.csv",
        ] {
            assert!(seed_dir.join(f).is_file(), "{f}");
        }
        let metrics = fs::read_to_string(seed_dir.join("metrics.csv")).unwrap();
        assert!(metrics.starts_with(METRICS_HEADER));
        assert_eq!(metrics.lines().count(), 3);
        let solve = fs::read_to_string(seed_dir.join("solve.csv")).unwrap();
        assert!(solve.starts_with("iter,objective,kkt_residual\n0,"));
        let leftovers = fs::read_dir(&seed_dir)
            .unwrap()
            .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with(".tmp"))
            .count();
        assert_eq!(leftovers, 0);
    }

    #[test]
    fn trend_needs_two_lengths_and_seeds() {
        let sc = small();
        assert!(trend_experiment(&sc, &[1e-4], &[1, 2]).unwrap_err().is_usage());
        assert!(trend_experiment(&sc, &[1e-4, 2e-4], &[1]).unwrap_err().is_usage());
    }

    #[test]
    fn repeated_length_is_trivially_monotone() {
        let sc = Scenario {
            m: 10,
            gics_m: Some(5),
            ..small()
        };
        let t = trend_experiment(&sc, &[135.5e-6, 135.5e-6], &[1, 2]).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert!(t.verdicts().iter().all(|(_, v)| *v));
        assert_eq!(t.metrics.len(), 4);
    }

    #[test]
    fn trend_is_sorted_and_order_independent() {
        let sc = Scenario {
            m: 10,
            gics_m: Some(5),
            ..small()
        };
        let a = trend_experiment(&sc, &[135.5e-6, 276.7e-6, 68.8e-6], &[1, 2]).unwrap();
        let b = trend_experiment(&sc, &[68.8e-6, 135.5e-6, 276.7e-6], &[1, 2]).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        let lcs: Vec<f64> = a.rows.iter().step_by(2).map(|r| r.lc_m).collect();
        assert_eq!(lcs, vec![276.7e-6, 135.5e-6, 68.8e-6]);
        assert!(a.to_csv().starts_with(TREND_HEADER));
        let names: Vec<&str> = a.verdicts().iter().map(|v| v.0).collect();
        assert_eq!(
            names,
            ["monotone_gi_snr", "strict_gi_snr", "monotone_gics_mse", "strict_gics_mse"]
        );
    }

    #[test]
    fn mean_and_sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - 1.2909944487358056).abs() < 1e-15);
    }
}
