//! `implantbeam` command-line runner.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod error;
mod output;
mod runner;
mod scenario;
mod units;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::{CliError, CliResult};
use output::{commit, sha256_hex, RunInfo};
use runner::{apply_options, ranking, rows_csv, run_single, run_sweep, sweep_variants, Outcome, RunOptions};
use scenario::{cli_value, parse_scenario, read_scenario, with_methods, Experiment, Method, Scenario};
use units::Length;

#[derive(Parser)]
#[command(name = "implantbeam", version, about = "Ultrasound phased-array link simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario (including its [sweep] table, if any).
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Run a scenario once per value of one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Dotted parameter path, e.g. `array.pitch` or `implant.0.position.0`.
        #[arg(long)]
        param: String,
        /// Comma-separated values, e.g. `"0.5 mm,1 mm,2 mm"`.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Run several beamforming methods on the same scenario and rank them.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated method names; defaults to the scenario's list.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<String>,
    },
    /// Check a scenario without running it.
    Validate { scenario: PathBuf },
}

#[derive(Args)]
struct Common {
    scenario: PathBuf,
    /// Output directory (default `results/<scenario name>`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Override the spacing of every field grid, e.g. `"0.5 mm"`.
    #[arg(long)]
    grid_spacing: Option<String>,
    /// Also write the transmit waveforms.
    #[arg(long)]
    signals: bool,
}

struct Job<'a> {
    command: &'static str,
    common: &'a Common,
    src: String,
    scn: Scenario,
}

impl Common {
    fn options(&self) -> CliResult<RunOptions> {
        let grid_spacing = match &self.grid_spacing {
            Some(s) => Some(Length::parse(s).map_err(|e| CliError::Validation(format!("--grid-spacing: {e}")))?.0),
            None => None,
        };
        Ok(RunOptions { seed: self.seed, grid_spacing, write_signals: self.signals })
    }

    fn init_pool(&self) -> CliResult<()> {
        if let Some(j) = self.jobs {
            if j == 0 {
                return Err(CliError::Validation("--jobs must be at least 1".into()));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(j)
                .build_global()
                .map_err(|e| CliError::Validation(format!("cannot start {j} workers: {e}")))?;
        }
        Ok(())
    }
}

fn finish(job: Job, sweep: Option<(String, Vec<toml::Value>)>) -> CliResult<()> {
    let opts = job.common.options()?;
    let origin = job.common.scenario.display().to_string();
    let (out, seed) = match sweep {
        Some((param, values)) => {
            let variants = sweep_variants(&job.src, &origin, &param, &values, &opts)?;
            let seed = variants.first().map_or(job.scn.seed, |v| v.1.seed);
            (run_sweep(&param, &variants, &opts)?, seed)
        }
        None => {
            let scn = apply_options(job.scn.clone(), &opts)?;
            let seed = scn.seed;
            (run_single(&scn, &opts)?, seed)
        }
    };
    let Outcome { mut artifacts, rows, log } = out;
    for l in &log {
        println!("{l}");
    }
    artifacts.add_text("results.csv", rows_csv(&rows));
    if job.command == "compare" {
        let table = ranking(&rows);
        print!("\n{table}");
        artifacts.add_text("ranking.txt", table);
    }
    let dir = job.common.out.clone().unwrap_or_else(|| Path::new("results").join(&job.scn.name));
    let info = RunInfo {
        command: job.command.into(),
        scenario: job.scn.name.clone(),
        scenario_file: origin,
        scenario_sha256: sha256_hex(job.src.as_bytes()),
        seed,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        library_version: implantbeam::VERSION.into(),
    };
    commit(&dir, &info, &artifacts)?;
    println!("wrote {} files to {}", artifacts.len() + 1, dir.display());
    Ok(())
}

fn describe(scn: &Scenario) -> String {
    let methods: Vec<&str> = scn.beamform.methods.iter().map(|m| m.name()).collect();
    let kind = match scn.experiment {
        Experiment::Link => "link",
        Experiment::Directivity => "directivity",
    };
    let mut s = format!(
        "{}: {kind} experiment, {}x{} array, {} implant(s), {} clutter, methods {}",
        scn.name,
        scn.array.rows,
        scn.array.cols,
        scn.implants.len(),
        scn.clutter.len(),
        methods.join(", ")
    );
    if let Some(sw) = &scn.sweep {
        s += &format!(", sweep {} over {} values", sw.parameter, sw.values.len());
    }
    if let Some(d) = &scn.description {
        s += &format!("\n    {d}");
    }
    s
}

fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Validate { scenario } => {
            let (_, scn) = read_scenario(&scenario)?;
            println!("ok  {}", describe(&scn));
            Ok(())
        }
        Command::Run { common } => {
            common.init_pool()?;
            let (src, scn) = read_scenario(&common.scenario)?;
            let sweep = scn.sweep.as_ref().map(|s| (s.parameter.clone(), s.values.clone()));
            finish(Job { command: "run", common: &common, src, scn }, sweep)
        }
        Command::Sweep { common, param, values } => {
            common.init_pool()?;
            let (src, scn) = read_scenario(&common.scenario)?;
            let values = values.iter().filter(|v| !v.trim().is_empty()).map(|v| cli_value(v)).collect();
            finish(Job { command: "sweep", common: &common, src, scn }, Some((param, values)))
        }
        Command::Compare { common, methods } => {
            common.init_pool()?;
            let (mut src, mut scn) = read_scenario(&common.scenario)?;
            if !methods.is_empty() {
                let list = methods.iter().map(|m| Method::parse(m)).collect::<CliResult<Vec<_>>>()?;
                src = with_methods(&src, &list)?;
                scn = parse_scenario(&src, &format!("{} [--methods]", common.scenario.display()))?;
            }
            if scn.experiment != Experiment::Link {
                return Err(CliError::Validation("compare needs a link experiment".into()));
            }
            let sweep = scn.sweep.as_ref().map(|s| (s.parameter.clone(), s.values.clone()));
            finish(Job { command: "compare", common: &common, src, scn }, sweep)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
