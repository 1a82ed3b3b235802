//! `ghostbench`: run ghost-imaging scenarios, coherence-length trends and the
//! built-in oracle checks.

use std::env;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ghostbench_core::harness::{recipe, run_scenario, trend_experiment, Scenario};
use ghostbench_core::{selftest, Error};

const OUT_ENV: &str = "GHOSTBENCH_OUT";
const DEFAULT_OUT: &str = "ghostbench_out";

#[derive(Parser)]
#[command(name = "ghostbench", version, about = "Thermal-light ghost imaging simulation bench")]
struct Cli {
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of a scenario file and write images and CSVs.
    Run {
        scenario: PathBuf,
        /// Output root; defaults to $GHOSTBENCH_OUT or ./ghostbench_out.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep coherence lengths and summarize SNR and MSE across seeds.
    Trend {
        scenario: PathBuf,
        /// Coherence lengths in meters, comma separated.
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        lc: Vec<f64>,
        /// Master seeds, comma separated.
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        seeds: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the quick oracle checks.
    Selftest,
    /// Write the scenario files of a built-in recipe.
    Recipe {
        /// One of fig2, fig3, fig4.
        name: String,
        /// Directory for the scenario files.
        #[arg(long, default_value = ".")]
        dir: PathBuf,
    },
}

fn out_root(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn write_file(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|e| Error::Io {
        context: format!("writing {}", path.display()),
        source: e,
    })
}

fn execute(command: Command) -> Result<bool, Error> {
    match command {
        Command::Run { scenario, out } => {
            let sc = Scenario::load(&scenario)?;
            let run = run_scenario(&sc, &out_root(out))?;
            println!("scenario {} -> {}", sc.name, run.dir.display());
            for row in &run.rows {
                println!("{}", row.csv_line());
            }
            Ok(true)
        }
        Command::Trend {
            scenario,
            lc,
            seeds,
            out,
        } => {
            let sc = Scenario::load(&scenario)?;
            let table = trend_experiment(&sc, &lc, &seeds)?;
            let dir = out_root(out).join(&sc.name).join("trend");
            table.write(&dir)?;
            print!("{}", table.to_csv());
            print!("{}", table.verdict_text());
            Ok(true)
        }
        Command::Selftest => {
            let checks = selftest::run_all()?;
            let mut ok = true;
            for c in &checks {
                println!(
                    "[{}] {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
                ok &= c.passed;
            }
            Ok(ok)
        }
        Command::Recipe { name, dir } => {
            let set = recipe(&name)?;
            fs::create_dir_all(&dir).map_err(|e| Error::Io {
                context: format!("creating {}", dir.display()),
                source: e,
            })?;
            for sc in set {
                let path = dir.join(format!("{}.scenario", sc.name));
                write_file(&path, &sc.to_text())?;
                println!("{}", path.display());
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build_global()
        {
            eprintln!("ghostbench: error: thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("ghostbench: error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
