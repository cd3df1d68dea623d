// Copyright 2026 The aqsim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use aqsim::config::{parse_config, ConfigError, RunConfig, SamplingRate, TimeMode};
use aqsim::controller::{ControllerKind, DEFAULT_TARGET_QUALITY};
use aqsim::mesh::DesignMode;
use aqsim::runner::{
    self, compare, low_admitted, setpoint_grid, tune_setpoint, write_compare_csv, write_rows_csv, Experiment,
    ExperimentPlan, RunnerError, TraceSource, WindowReport, WINDOW_BLOCK,
};

const DEFAULT_CONFIG: &str = include_str!("../configs/closed_loop.yaml");

const EXIT_CONFIG: u8 = 2;
const EXIT_FAILURES: u8 = 3;

#[derive(Parser)]
#[command(
    name = "aqsim",
    version,
    about = "Answer-quality measurement over a simulated service mesh"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay a trace under one design mode and controller.
    Run(RunArgs),
    /// Throughput of each role assignment across sampling rates.
    Profile(ProfileArgs),
    /// Run admission controllers on the configured trace and score quality windows.
    Control(ControlArgs),
    /// Side-by-side table of finished runs.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum TimeArg {
    Virtual,
    Real,
}

#[derive(Args)]
struct Common {
    /// Configuration file; the built-in closed-loop configuration when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    time: Option<TimeArg>,
    /// Sampling rate override, e.g. `20%` or `8 per minute`.
    #[arg(long)]
    samples: Option<String>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, RunnerError> {
        let text = match &self.config {
            Some(path) => fs::read_to_string(path)
                .map_err(|e| RunnerError::Config(ConfigError::Validation(format!("{}: {e}", path.display()))))?,
            None => DEFAULT_CONFIG.to_string(),
        };
        let mut cfg = parse_config(&text)?;
        if let Some(seed) = self.seed {
            cfg = cfg.with_seed(seed);
        }
        if let Some(t) = self.time {
            cfg = cfg.with_time_mode(match t {
                TimeArg::Virtual => TimeMode::Virtual,
                TimeArg::Real => TimeMode::Real,
            });
        }
        if let Some(s) = &self.samples {
            let rate = SamplingRate::parse(s)
                .ok_or_else(|| RunnerError::Config(ConfigError::Validation(format!("bad sampling rate `{s}`"))))?;
            cfg = cfg.with_samples(rate);
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "ubora")]
    mode: String,
    #[arg(long, default_value = "none")]
    controller: String,
    /// Replay this trace CSV instead of generating one.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ProfileArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated sampling rates.
    #[arg(long, default_value = "5%,10%,20%,40%")]
    rates: String,
    /// Comma-separated design modes.
    #[arg(long, default_value = "ubora")]
    modes: String,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ControlArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "ubora")]
    mode: String,
    /// Comma-separated controllers.
    #[arg(long, default_value = "no-sharing,full-sharing,quality-pid,timeout-freq-pid")]
    controller: String,
    /// Quality floor each evaluation window is scored against.
    #[arg(long, default_value_t = 0.9)]
    floor: f64,
    /// Share of windows that must meet the floor when tuning the timeout controller.
    #[arg(long, default_value_t = 0.9)]
    required: f64,
    /// Setpoint grid `lo:hi:step` searched for the timeout-frequency controller.
    #[arg(long, default_value = "0.30:0.50:0.02")]
    timeout_grid: String,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Run directories; the first is the reference.
    #[arg(required = true, num_args = 2..)]
    runs: Vec<PathBuf>,
    /// Write the table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_list<T: std::str::FromStr<Err = String>>(s: &str) -> Result<Vec<T>, RunnerError> {
    s.split(',')
        .filter(|x| !x.trim().is_empty())
        .map(|x| x.parse::<T>().map_err(RunnerError::Plan))
        .collect()
}

fn parse_one<T: std::str::FromStr<Err = String>>(s: &str) -> Result<T, RunnerError> {
    s.parse().map_err(RunnerError::Plan)
}

fn io_error(path: &std::path::Path, e: impl ToString) -> RunnerError {
    RunnerError::Artifact {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

fn cmd_run(args: &RunArgs) -> Result<u8, RunnerError> {
    let config = args.common.load()?;
    let mut plan = ExperimentPlan::new(config, parse_one(&args.mode)?, parse_one(&args.controller)?)?;
    if let Some(t) = &args.trace {
        plan.trace = TraceSource::File(t.clone());
    }
    plan.out_dir = Some(args.out.clone());
    let report = runner::run(&plan)?;
    let s = &report.manifest.summary;
    println!(
        "{} {}: {} queries, {} admitted, {} sampled, throughput {}, mature failures {:.1}%, mean quality {}",
        report.manifest.mode,
        report.manifest.controller,
        s.queries,
        s.admitted,
        s.sampled,
        fmt_opt(s.throughput),
        100.0 * s.mature_failure_rate,
        fmt_opt(s.mean_quality),
    );
    println!("artifacts in {}", args.out.display());
    Ok(if s.failed_threshold() { EXIT_FAILURES } else { 0 })
}

fn cmd_profile(args: &ProfileArgs) -> Result<u8, RunnerError> {
    let config = args.common.load()?;
    let rates = args
        .rates
        .split(',')
        .map(|r| {
            SamplingRate::parse(r)
                .ok_or_else(|| RunnerError::Config(ConfigError::Validation(format!("bad sampling rate `{r}`"))))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let modes: Vec<DesignMode> = parse_list(&args.modes)?;
    let exp = Experiment::from_config(&config)?;
    let rows = runner::profile(&exp, &rates, &modes)?;
    fs::create_dir_all(&args.out).map_err(|e| io_error(&args.out, e))?;
    let path = args.out.join("profile.csv");
    let f = File::create(&path).map_err(|e| io_error(&path, e))?;
    write_rows_csv(f, &rows).map_err(|e| io_error(&path, e))?;
    for r in &rows {
        println!(
            "{:8} {:>14} {:24} {}",
            r.assignment,
            r.sampling,
            r.mode,
            fmt_opt(r.throughput)
        );
    }
    Ok(0)
}

#[derive(serde::Serialize)]
struct ControlRow {
    controller: String,
    setpoint: Option<f64>,
    windows: usize,
    violated: usize,
    good_fraction: f64,
    min_window: Option<f64>,
    low_admitted: usize,
}

fn parse_grid(s: &str) -> Result<Vec<f64>, RunnerError> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| RunnerError::Plan(format!("bad grid `{s}`")))?;
    match parts[..] {
        [lo, hi, step] if step > 0.0 && hi >= lo => Ok(setpoint_grid(lo, hi, step)),
        _ => Err(RunnerError::Plan(format!("grid must be lo:hi:step, got `{s}`"))),
    }
}

fn cmd_control(args: &ControlArgs) -> Result<u8, RunnerError> {
    let config = args.common.load()?;
    let mode: DesignMode = parse_one(&args.mode)?;
    let controllers: Vec<ControllerKind> = parse_list(&args.controller)?;
    let grid = parse_grid(&args.timeout_grid)?;
    let mut rows = Vec::new();
    let mut code = 0;
    for kind in controllers {
        let mut cfg = config.clone();
        let mut setpoint = None;
        if kind == ControllerKind::TimeoutFreqPid {
            let exp = Experiment::from_config(&cfg)?;
            let (trials, best) = tune_setpoint(&exp, mode, kind, &grid, args.floor, args.required)?;
            fs::create_dir_all(&args.out).map_err(|e| io_error(&args.out, e))?;
            let path = args.out.join("timeout-tuning.csv");
            let f = File::create(&path).map_err(|e| io_error(&path, e))?;
            write_rows_csv(f, &trials).map_err(|e| io_error(&path, e))?;
            // Fall back to the most conservative setpoint when none qualifies.
            let chosen = best.map_or(grid[grid.len() - 1], |i| trials[i].setpoint);
            setpoint = Some(chosen);
            cfg = cfg.with_setting("controller", "target", &chosen.to_string());
        } else if kind == ControllerKind::QualityPid {
            setpoint = Some(
                cfg.section("controller")
                    .parsed("target")?
                    .unwrap_or(DEFAULT_TARGET_QUALITY),
            );
        }
        let mut plan = ExperimentPlan::new(cfg, mode, kind)?;
        plan.out_dir = Some(args.out.join(kind.as_str()));
        let report = runner::run(&plan)?;
        let w = WindowReport::of(&report.outcome, WINDOW_BLOCK, args.floor);
        let row = ControlRow {
            controller: kind.as_str().to_string(),
            setpoint,
            windows: w.windows.len(),
            violated: w.violated(),
            good_fraction: w.good_fraction(),
            min_window: w.min(),
            low_admitted: low_admitted(&report.outcome.log),
        };
        println!(
            "{:18} setpoint {:>6}  windows {:4}  >= floor {:5.1}%  min {}  low-priority admitted {}",
            row.controller,
            row.setpoint.map_or_else(|| "-".to_string(), |v| format!("{v:.2}")),
            row.windows,
            100.0 * row.good_fraction,
            fmt_opt(row.min_window),
            row.low_admitted
        );
        if report.manifest.summary.failed_threshold() {
            code = EXIT_FAILURES;
        }
        rows.push(row);
    }
    let path = args.out.join("control.csv");
    let f = File::create(&path).map_err(|e| io_error(&path, e))?;
    write_rows_csv(f, &rows).map_err(|e| io_error(&path, e))?;
    Ok(code)
}

fn cmd_compare(args: &CompareArgs) -> Result<u8, RunnerError> {
    let rows = compare(&args.runs)?;
    match &args.out {
        Some(path) => {
            let f = File::create(path).map_err(|e| io_error(path, e))?;
            write_compare_csv(f, &rows).map_err(|e| io_error(path, e))?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write_compare_csv(&mut lock, &rows).map_err(|e| io_error(std::path::Path::new("-"), e))?;
            lock.flush().ok();
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Profile(a) => cmd_profile(a),
        Command::Control(a) => cmd_control(a),
        Command::Compare(a) => cmd_compare(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("aqsim: {e}");
            ExitCode::from(if e.is_config() { EXIT_CONFIG } else { 1 })
        }
    }
}
