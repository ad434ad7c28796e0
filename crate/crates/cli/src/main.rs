//! `rttpos`: simulate walks, run the positioning pipeline on scenarios or
//! measurement logs, compare it with the multilateration baselines and sweep
//! parameters over random scenarios.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use rttpos::arbitrary::Weights;
use rttpos::ensemble::CandidateCount;
use rttpos::logfile::{parse_log, write_log, LogUnit};
use rttpos::pipeline::{compare, run_pipeline, Algorithm, Dataset, PipelineConfig, RunOutput};
use rttpos::sim::{RandomScenario, ScenarioConfig, WalkShape};
use rttpos::sweep::{parse_candidates, run_sweep, summarize, sweep_csv, Sweep};

#[derive(Debug, Parser)]
#[command(
    name = "rttpos",
    version,
    about = "WiFi RTT and step-heading positioning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a measurement log from a scenario file.
    Simulate(SimulateArgs),
    /// Run one algorithm and write trajectory.csv and metrics.json.
    Run(RunArgs),
    /// Run all three algorithms on the same input.
    Compare(CompareArgs),
    /// Sweep one parameter over random scenarios and write sweep.csv.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct Input {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Measurement log (CSV).
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Tuning {
    /// Grid size of the initial-position angle search over [0, pi).
    #[arg(long, default_value_t = 2048)]
    grid_gamma: usize,
    /// Grid size of the heading search over [0, 2 pi).
    #[arg(long, default_value_t = 4096)]
    grid_omega: usize,
    /// Weight of the linear-system residual; the radius spread gets 1 - w1.
    #[arg(long, default_value_t = 0.0)]
    w1: f64,
    /// Reference-step candidates per AP: an integer, `auto`, `N` or `0.25N`.
    #[arg(long, default_value = "auto", value_parser = candidates)]
    candidates: CandidateCount,
    /// Snap heading changes to multiples of a right angle.
    #[arg(long)]
    quantize_heading: bool,
}

fn candidates(s: &str) -> Result<CandidateCount, String> {
    parse_candidates(s).ok_or_else(|| format!("bad candidate count {s:?}"))
}

impl Tuning {
    fn pipeline(&self, algorithm: Algorithm) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig {
            algorithm,
            quantize_heading: self.quantize_heading,
            ..PipelineConfig::default()
        };
        cfg.ensemble.candidates = self.candidates;
        cfg.ensemble.gamma.grid = self.grid_gamma;
        cfg.ensemble.gamma.weights = Weights::new(self.w1)?;
        cfg.ensemble.gamma.validate()?;
        if self.grid_omega == 0 {
            bail!("--grid-omega must be positive");
        }
        cfg.omega.grid = self.grid_omega;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    FullPipeline,
    NoTaBaseline,
    RawRttBaseline,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::FullPipeline => Algorithm::FullPipeline,
            AlgorithmArg::NoTaBaseline => Algorithm::NoTaBaseline,
            AlgorithmArg::RawRttBaseline => Algorithm::RawRttBaseline,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum UnitArg {
    Rtt,
    Range,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Overrides the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Unit of the last log column.
    #[arg(long, value_enum, default_value = "rtt")]
    units: UnitArg,
    /// Output log path.
    #[arg(long, default_value = "measurements.csv")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    input: Input,
    #[arg(long, value_enum, default_value = "full-pipeline")]
    algorithm: AlgorithmArg,
    /// Overrides the scenario's seed (scenario input only).
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    tuning: Tuning,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    input: Input,
    /// Overrides the scenario's seed (scenario input only).
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    tuning: Tuning,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ShapeArg {
    Corridor,
    Linear,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// One of C, w1, sigma, N, M.
    #[arg(long)]
    parameter: String,
    /// Comma-separated values, e.g. `2,5,10,0.25N,0.5N,N` for C.
    #[arg(long)]
    values: String,
    /// First seed of the Monte Carlo runs.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of seeds per sweep point.
    #[arg(long, default_value_t = 50)]
    runs: u64,
    #[arg(long, default_value_t = 10)]
    aps: usize,
    #[arg(long, default_value_t = 70)]
    steps: usize,
    /// Range noise standard deviation in meters.
    #[arg(long, default_value_t = 0.5)]
    sigma: f64,
    /// Heading noise standard deviation in radians.
    #[arg(long, default_value_t = 0.0)]
    heading_noise: f64,
    #[arg(long, value_enum, default_value = "corridor")]
    shape: ShapeArg,
    #[command(flatten)]
    tuning: Tuning,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

fn load(input: &Input, seed: Option<u64>) -> Result<Dataset> {
    match (&input.scenario, &input.log) {
        (Some(path), None) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut cfg = ScenarioConfig::from_toml(&text)
                .with_context(|| format!("parsing {}", path.display()))?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            Ok(Dataset::from_scenario(&cfg)?)
        }
        (None, Some(path)) => {
            if seed.is_some() {
                bail!("--seed only applies to scenario input");
            }
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            parse_log(&text).with_context(|| format!("parsing {}", path.display()))
        }
        _ => bail!("exactly one of --scenario and --log is required"),
    }
}

#[derive(Serialize)]
struct Failure<'a> {
    algorithm: Algorithm,
    failure: FailureBody<'a>,
}

#[derive(Serialize)]
struct FailureBody<'a> {
    code: &'a str,
    message: String,
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_run(dir: &Path, out: &RunOutput) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write(&dir.join("trajectory.csv"), &out.trajectory_csv())?;
    write(&dir.join("metrics.json"), &(out.metrics_json()? + "\n"))
}

fn report(out: &RunOutput) {
    match out.error {
        Some(e) => println!(
            "{}: mean {:.4} m, median {:.4} m, max {:.4} m, unresolved steps {}",
            out.algorithm, e.mean, e.median, e.max, out.unresolved_steps
        ),
        None => println!(
            "{}: no ground truth, unresolved steps {}",
            out.algorithm, out.unresolved_steps
        ),
    }
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let input = Input {
        scenario: Some(args.scenario.clone()),
        log: None,
    };
    let ds = load(&input, args.seed)?;
    let unit = match args.units {
        UnitArg::Rtt => LogUnit::RttSeconds,
        UnitArg::Range => LogUnit::RangeMeters,
    };
    write(&args.out, &write_log(&ds, unit))?;
    println!(
        "wrote {} steps for {} APs to {}",
        ds.measurements.len(),
        ds.aps.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Result<ExitCode> {
    let algorithm = Algorithm::from(args.algorithm);
    let cfg = args.tuning.pipeline(algorithm)?;
    let ds = load(&args.input, args.seed)?;
    match run_pipeline(&ds, &cfg) {
        Ok(out) => {
            write_run(&args.out_dir, &out)?;
            report(&out);
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            fs::create_dir_all(&args.out_dir)?;
            let body = Failure {
                algorithm,
                failure: FailureBody {
                    code: e.code(),
                    message: e.to_string(),
                },
            };
            write(
                &args.out_dir.join("metrics.json"),
                &(serde_json::to_string_pretty(&body)? + "\n"),
            )?;
            eprintln!("error[{}]: {e}", e.code());
            Ok(ExitCode::from(2))
        }
    }
}

fn cmd_compare(args: &CompareArgs) -> Result<ExitCode> {
    let cfg = args.tuning.pipeline(Algorithm::FullPipeline)?;
    let ds = load(&args.input, args.seed)?;
    let outs = match compare(&ds, &cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            return Ok(ExitCode::from(2));
        }
    };
    let mut summary = String::from("algorithm,mean,median,min,max,std,unresolved\n");
    for out in &outs {
        write_run(&args.out_dir.join(out.algorithm.name()), out)?;
        report(out);
        let cols = out
            .error
            .map(|e| format!("{},{},{},{},{}", e.mean, e.median, e.min, e.max, e.std))
            .unwrap_or_else(|| ",,,,".into());
        summary.push_str(&format!(
            "{},{},{}\n",
            out.algorithm, cols, out.unresolved_steps
        ));
    }
    write(&args.out_dir.join("compare.csv"), &summary)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let sweep = Sweep::parse(&args.parameter, &args.values)?;
    let cfg = args.tuning.pipeline(Algorithm::FullPipeline)?;
    let base = RandomScenario {
        aps: args.aps,
        steps: args.steps,
        shape: match args.shape {
            ShapeArg::Corridor => WalkShape::Corridor,
            ShapeArg::Linear => WalkShape::Linear,
        },
        range_noise: args.sigma,
        heading_noise: args.heading_noise,
        ..RandomScenario::default()
    };
    let seeds = args.seed
        ..args
            .seed
            .checked_add(args.runs)
            .context("seed range overflows")?;
    let rows = summarize(&sweep, &run_sweep(&base, &cfg, &sweep, seeds));
    fs::create_dir_all(&args.out_dir)?;
    let csv = sweep_csv(&rows);
    write(&args.out_dir.join("sweep.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a).map(|_| ExitCode::SUCCESS),
        Command::Run(a) => cmd_run(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Sweep(a) => cmd_sweep(a).map(|_| ExitCode::SUCCESS),
    }
}
