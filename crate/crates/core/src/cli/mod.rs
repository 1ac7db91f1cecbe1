//! Command-line front end.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::info;

use crate::agents::{run_experiment, History};
use crate::batch_runner::{append_jsonl, read_jsonl};
use crate::error::{Error, Result};
use crate::gp::{self, GpParams};
use crate::policy_space::{discretize, GridSpec, Policy};
use crate::reward_model::{assess, CostParams, PenaltyTracker};
use crate::sim_env::SimSeed;

mod config;
mod report;

pub use config::{load_experiment, parse_json, read_json, ExperimentConfig, ScenarioConfig};
pub use report::{format_top_table, log10_cda, top_table, write_surface, SURFACE_HEADER};

pub const RUNS_FILE: &str = "runs.jsonl";
pub const SURFACE_FILE: &str = "surface.csv";
pub const TOP_FILE: &str = "top_policies.txt";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.json";

#[derive(Debug, Parser)]
#[command(name = "nets", version, about = "Batch exploration of ITN/IRS intervention policies")]
pub struct Cli {
    /// Log every agent decision.
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment and write runs, surface and top-policy files.
    Explore {
        #[arg(short, long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Fit the GP on a results log and write the posterior surface.
    Surface {
        #[arg(short, long)]
        runs: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long)]
        lengthscale: Option<f64>,
        #[arg(long)]
        noise: Option<f64>,
        /// Grid points per axis.
        #[arg(long, default_value_t = 100)]
        resolution: usize,
    },
    /// Print the best policies of a results log.
    Top {
        #[arg(short, long)]
        runs: PathBuf,
        #[arg(short, default_value_t = 3)]
        k: usize,
    },
    /// Run one policy against the baseline and print its economics.
    Simulate {
        /// Scenario document, e.g. `{"kind": "surrogate", ...}`.
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long, value_parser = parse_policy)]
        policy: Policy,
        #[arg(long)]
        seed: u64,
    },
}

fn parse_policy(s: &str) -> std::result::Result<Policy, String> {
    let (a, b) = s.split_once(',').ok_or("expected ITN,IRS")?;
    let a: f64 = a.trim().parse().map_err(|e| format!("ITN coverage: {e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("IRS coverage: {e}"))?;
    Policy::new(a, b).map_err(|e| e.to_string())
}

/// Process exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        Error::NoData(_) => 3,
        _ => 1,
    }
}

pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Explore { config, out } => cmd_explore(&config, out.as_deref()).map(|_| ()),
        Command::Surface {
            runs,
            out,
            lengthscale,
            noise,
            resolution,
        } => {
            let mut gp = GpParams::default();
            if let Some(l) = lengthscale {
                gp.lengthscale = l;
            }
            if let Some(s) = noise {
                gp.noise_variance = s;
            }
            let grid = GridSpec {
                resolution_itn: resolution,
                resolution_irs: resolution,
                ..GridSpec::default()
            };
            cmd_surface(&runs, &out, &gp, &grid)
        }
        Command::Top { runs, k } => {
            let table = cmd_top(&runs, k)?;
            stdout.write_all(table.as_bytes()).map_err(|e| Error::io("<stdout>", e))
        }
        Command::Simulate { config, policy, seed } => {
            let text = cmd_simulate(&config, policy, seed)?;
            stdout.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn load_history(runs: &Path) -> Result<History> {
    let records = read_jsonl(runs)?;
    if records.is_empty() {
        return Err(Error::NoData(format!("{} has no records", runs.display())));
    }
    let history = History::try_from(records)?;
    if history.observations().is_empty() {
        return Err(Error::NoData(format!("{} has no successful records", runs.display())));
    }
    Ok(history)
}

fn fit_surface(history: &History, gp: &GpParams, grid: &GridSpec) -> Result<Vec<gp::SurfaceRow>> {
    gp.validate()?;
    let (xs, ys): (Vec<Policy>, Vec<f64>) = history.observations().into_iter().unzip();
    let model = gp::fit(&xs, &ys, gp.noise_variance, &gp.kernel())?;
    gp::surface(&model, &discretize(grid)?)
}

/// Runs the configured experiment; returns the output directory.
pub fn cmd_explore(config_path: &Path, out: Option<&Path>) -> Result<PathBuf> {
    let mut cfg = load_experiment(config_path)?;
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| Error::Config("no output directory: pass -o DIR or set output_dir".into()))?;
    cfg.output_dir = Some(dir.clone());
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let resolved = serde_json::to_string_pretty(&cfg)?;
    let resolved_path = dir.join(RESOLVED_CONFIG_FILE);
    fs::write(&resolved_path, resolved + "\n").map_err(|e| Error::io(&resolved_path, e))?;

    let runs_path = dir.join(RUNS_FILE);
    File::create(&runs_path).map_err(|e| Error::io(&runs_path, e))?;
    let sim = cfg.scenario.build()?;
    let settings = cfg.settings();
    let outcome = run_experiment(&settings, sim.as_ref(), &mut |records| append_jsonl(&runs_path, records))?;

    write_file(&dir.join(SURFACE_FILE), |w| write_surface(&outcome.surface, w))?;
    let rows = top_table(&outcome.history, &outcome.surface, 3, cfg.gp.lengthscale);
    let table = format_top_table(&rows);
    write_file(&dir.join(TOP_FILE), |w| w.write_all(table.as_bytes()))?;
    info!("wrote {} records to {}", outcome.history.len(), dir.display());
    Ok(dir)
}

pub fn cmd_surface(runs: &Path, out: &Path, gp: &GpParams, grid: &GridSpec) -> Result<()> {
    let history = load_history(runs)?;
    let rows = fit_surface(&history, gp, grid)?;
    write_file(out, |w| write_surface(&rows, w))
}

/// The top-`k` table of a results log, fitted with default GP parameters
/// on the default grid.
pub fn cmd_top(runs: &Path, k: usize) -> Result<String> {
    let history = load_history(runs)?;
    let gp = GpParams::default();
    let surface = fit_surface(&history, &gp, &GridSpec::default())?;
    Ok(format_top_table(&top_table(&history, &surface, k, gp.lengthscale)))
}

/// Simulates one policy and its baseline and reports the economics as JSON,
/// followed by a one-line verdict.
pub fn cmd_simulate(scenario_path: &Path, policy: Policy, seed: u64) -> Result<String> {
    let scenario: ScenarioConfig = read_json(scenario_path)?;
    let sim = scenario.build()?;
    let seed = SimSeed::new(seed, 0);
    let outcome = sim.simulate(&policy, seed)?;
    let baseline = sim.baseline(seed)?;
    let mut penalty = PenaltyTracker::default();
    let report = assess(&policy, &outcome, &baseline, &CostParams::default(), &mut penalty);
    let doc = serde_json::json!({
        "policy": policy,
        "seed": seed,
        "report": report,
    });
    let verdict = match report.c_da_usd_per_daly {
        Some(c) => format!("C_DA = {} USD per DALY averted", crate::fmt::sig(c, 6)),
        None => format!(
            "NonPositiveAverted: DALYs averted = {} (penalty reward {})",
            crate::fmt::sig(report.dalys_averted, 6),
            crate::fmt::sig(report.reward, 6)
        ),
    };
    Ok(format!("{}\n{verdict}\n", serde_json::to_string_pretty(&doc)?))
}
