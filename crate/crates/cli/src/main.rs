//! `learnsim`: run scenarios, sweeps and schedule optimization, or host
//! live sessions.
//!
//! Data goes to `--out` (or standard output); diagnostics go to standard
//! error. Exit status is 0 on success, 2 for usage errors and missing
//! inputs, 1 for anything else.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use learnsim_core::export::{format_sig, write_trajectory_csv};
use learnsim_core::scenario::{TimelineDocument, BUILTIN_NAMES};
use learnsim_core::sweep::{run_sweep, write_sweep_csv, SweepSpec};
use learnsim_core::{
    builtin_scenario, optimize_schedule, parse_config, richardson_error, simulate_timeline,
    OptimizerSettings, SimulationConfig,
};
use learnsim_service::{ServiceConfig, DEFAULT_TICK_RATE};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "learnsim", version, about = "Simulate differential-equation models of learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a configuration and write its trajectory as CSV.
    Simulate {
        #[command(flatten)]
        source: Source,
        /// Override the configuration's step size (minutes).
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run a configuration once per value of one parameter.
    Sweep {
        #[command(flatten)]
        source: Source,
        /// Dotted parameter path, e.g. `params.C` or `params.gamma.0`.
        #[arg(long)]
        param: String,
        /// Comma-separated values; `inf` is accepted.
        #[arg(long, value_parser = parse_values)]
        values: Values,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Search for the requirement schedule maximizing final strong knowledge.
    Optimize {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500, value_parser = clap::value_parser!(u64).range(1..))]
        budget: u64,
        /// Upper bound on requirement levels [default: twice the template's highest].
        #[arg(long)]
        u_max: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Host live sessions over HTTP and websockets.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Directory for per-session event logs.
        #[arg(long)]
        session_dir: Option<PathBuf>,
        /// Simulated minutes per wall-clock second.
        #[arg(long, default_value_t = DEFAULT_TICK_RATE)]
        tick_rate: f64,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Configuration document (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in scenario name.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(BUILTIN_NAMES))]
    scenario: Option<String>,
}

#[derive(Clone)]
struct Values(Vec<f64>);

fn parse_values(text: &str) -> Result<Values, String> {
    let values = text
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| match v {
            "inf" | "infinity" => Ok(f64::INFINITY),
            _ => v.parse::<f64>().map_err(|_| format!("`{v}` is not a number")),
        })
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err("at least one value is required".into());
    }
    Ok(Values(values))
}

enum Failure {
    Usage(String),
    Run(String),
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

type CliResult = Result<(), Failure>;

fn run_error(e: impl std::fmt::Display) -> Failure {
    Failure::Run(e.to_string())
}

impl Source {
    fn load(&self) -> Result<(String, SimulationConfig), Failure> {
        if let Some(name) = &self.scenario {
            return Ok((name.clone(), builtin_scenario(name).map_err(run_error)?));
        }
        let path = self.config.as_ref().expect("clap enforces one source");
        let text = match fs::read_to_string(path) {
            Ok(text) => text,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(Failure::Usage(format!("config not found: {}", path.display())))
            }
            Err(e) => return Err(Failure::Run(format!("{}: {e}", path.display()))),
        };
        let config = parse_config(&text).map_err(|e| Failure::Run(format!("{}: {e}", path.display())))?;
        Ok((path.display().to_string(), config))
    }
}

/// `--out` or standard output.
fn output(out: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(io::BufWriter::new(fs::File::create(path)?)),
        None => Box::new(io::BufWriter::new(io::stdout().lock())),
    })
}

fn simulate(source: &Source, dt: Option<f64>, out: Option<&Path>) -> CliResult {
    let (name, mut config) = source.load()?;
    if let Some(dt) = dt {
        config.dt = dt;
    }
    let trajectory = simulate_timeline(&config).map_err(run_error)?;
    let mut w = output(out)?;
    write_trajectory_csv(&trajectory, &mut w)?;
    w.flush()?;

    let fin = &trajectory.final_state;
    eprintln!(
        "{name}: {} model, {} categories, {} min at dt = {}",
        config.params.variant,
        config.params.n(),
        format_sig(config.duration()),
        format_sig(config.dt)
    );
    let per_category: Vec<String> = fin
        .z
        .iter()
        .enumerate()
        .map(|(i, z)| format!("Z_{}={}", i + 1, format_sig(*z)))
        .collect();
    eprintln!("final: {} Z_total={}", per_category.join(" "), format_sig(fin.total()));
    eprintln!("clamped components: {}", trajectory.clamp_count);
    match richardson_error(&config, config.dt) {
        Ok(e) => eprintln!("richardson error (dt vs dt/2): {}", format_sig(e)),
        Err(e) => eprintln!("richardson error unavailable: {e}"),
    }
    Ok(())
}

fn sweep(source: &Source, param: &str, values: &[f64], out: Option<&Path>) -> CliResult {
    let (name, config) = source.load()?;
    let spec = SweepSpec {
        path: param.to_string(),
        values: values.to_vec(),
    };
    let rows = run_sweep(&config, &spec).map_err(run_error)?;
    let mut w = output(out)?;
    write_sweep_csv(&rows, &mut w)?;
    w.flush()?;
    let clamped: usize = rows.iter().map(|r| r.clamp_count).sum();
    eprintln!("{name}: swept {param} over {} values ({clamped} clamped components)", rows.len());
    Ok(())
}

#[derive(Serialize)]
struct ScheduleReport {
    seed: u64,
    budget: u64,
    u_max: f64,
    evaluations: usize,
    baseline_objective: f64,
    objective: f64,
    #[serde(rename = "U")]
    schedule: Vec<f64>,
    timeline: TimelineDocument,
    /// Best objective after each evaluation.
    trace: Vec<f64>,
}

fn optimize(source: &Source, seed: u64, budget: u64, u_max: Option<f64>, out: Option<&Path>) -> CliResult {
    let (name, template) = source.load()?;
    let budget_evals = usize::try_from(budget).map_err(|_| Failure::Usage("budget too large".into()))?;
    let mut settings = OptimizerSettings::for_template(&template, budget_evals, seed);
    if let Some(u_max) = u_max {
        settings.u_max = u_max;
        settings.step_init = u_max / 4.0;
    }
    let result = optimize_schedule(&template, &settings).map_err(run_error)?;
    let best = result.schedule.apply(&template).map_err(run_error)?;
    let report = ScheduleReport {
        seed,
        budget,
        u_max: settings.u_max,
        evaluations: result.evaluations,
        baseline_objective: result.baseline_objective,
        objective: result.objective,
        schedule: result.schedule.u.clone(),
        timeline: TimelineDocument::from_segments(&best.timeline),
        trace: result.trace,
    };
    let mut w = output(out)?;
    serde_json::to_writer_pretty(&mut w, &report).map_err(run_error)?;
    writeln!(w)?;
    w.flush()?;

    let levels: Vec<String> = report.schedule.iter().map(|u| format_sig(*u)).collect();
    eprintln!(
        "{name}: objective {} (baseline {}) after {} evaluations; U = [{}]",
        format_sig(report.objective),
        format_sig(report.baseline_objective),
        report.evaluations,
        levels.join(", ")
    );
    Ok(())
}

fn serve(port: u16, session_dir: Option<PathBuf>, tick_rate: f64) -> CliResult {
    if !(tick_rate.is_finite() && tick_rate > 0.0) {
        return Err(Failure::Usage(format!("--tick-rate must be positive (got {tick_rate})")));
    }
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(io::stderr)
        .init();
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        learnsim_service::serve(listener, ServiceConfig { session_dir, tick_rate }).await
    })?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate { source, dt, out } => simulate(source, *dt, out.as_deref()),
        Command::Sweep {
            source,
            param,
            values,
            out,
        } => sweep(source, param, &values.0, out.as_deref()),
        Command::Optimize {
            source,
            seed,
            budget,
            u_max,
            out,
        } => optimize(source, *seed, *budget, *u_max, out.as_deref()),
        Command::Serve {
            port,
            session_dir,
            tick_rate,
        } => serve(*port, session_dir.clone(), *tick_rate),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
        Err(Failure::Run(message)) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}
