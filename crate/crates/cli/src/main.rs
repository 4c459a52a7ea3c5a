use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use env_logger::Env;
use rayon::prelude::*;

use formation_core::scenario::{
    exit_code, write_csv, write_plot_data, RunSummary, Scenario, ScenarioConfig, PRESETS,
};
use formation_core::FormationError;

const EXIT_CONFIG: u8 = 2;
const EXIT_REPORT_FAILED: u8 = 1;
const EXIT_CHECK_FAILED: u8 = 6;
const PLOT_POINTS: usize = 500;

#[derive(Parser, Debug)]
#[command(name = "formation-lab", version, about = "Formation control scenarios: stabilizer synthesis, simulation and equivalence checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize or verify the stabilizing gains and print the eigen-report
    Stabilize(#[command(flatten)] Args),
    /// Integrate the closed loop and write the trajectory CSV
    Simulate(#[command(flatten)] Args),
    /// Run the cross-domain equivalence and potential invariants
    Check(#[command(flatten)] Args),
}

#[derive(clap::Args, Debug)]
struct Args {
    /// Scenario JSON file or bundled preset name; repeat for a batch
    #[arg(long, required = true)]
    config: Vec<String>,
    /// Output directory; each scenario writes into <output>/<name>/
    #[arg(long, default_value = "formation-lab-out")]
    output: PathBuf,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write a downsampled plot.csv
    #[arg(long)]
    plot_data: bool,
    /// Scenarios to run in parallel
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

impl Command {
    fn parts(&self) -> (&'static str, &Args) {
        match self {
            Command::Stabilize(a) => ("stabilize", a),
            Command::Simulate(a) => ("simulate", a),
            Command::Check(a) => ("check", a),
        }
    }
}

struct Outcome {
    code: u8,
    stdout: String,
    stderr: String,
}

impl Outcome {
    fn ok(stdout: String) -> Self {
        Self {
            code: 0,
            stdout,
            stderr: String::new(),
        }
    }

    fn fail(code: u8, stderr: String) -> Self {
        Self {
            code,
            stdout: String::new(),
            stderr,
        }
    }

    fn from_error(context: &str, err: &FormationError) -> Self {
        Self::fail(exit_code(err) as u8, format!("{context}: {err}"))
    }
}

fn load_config(source: &str, args: &Args) -> Result<ScenarioConfig, Outcome> {
    let path = Path::new(source);
    let mut cfg = if path.exists() {
        let text = fs::read_to_string(path)
            .map_err(|e| Outcome::fail(EXIT_CONFIG, format!("{source}: {e}")))?;
        ScenarioConfig::from_json(&text).map_err(|e| Outcome::from_error(source, &e))?
    } else if let Some(cfg) = ScenarioConfig::preset(source) {
        cfg
    } else {
        return Err(Outcome::fail(
            EXIT_CONFIG,
            format!(
                "{source}: no such file or preset (presets: {})",
                PRESETS.join(", ")
            ),
        ));
    };
    if let Some(dt) = args.dt {
        cfg.integration.dt = dt;
    }
    if let Some(t_end) = args.t_end {
        cfg.integration.t_end = t_end;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn scenario_dir(args: &Args, name: &str) -> Result<PathBuf, Outcome> {
    let dir = args.output.join(name);
    fs::create_dir_all(&dir)
        .map_err(|e| Outcome::fail(EXIT_CONFIG, format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_file(path: &Path, text: &str) -> Result<(), Outcome> {
    fs::write(path, text).map_err(|e| Outcome::fail(EXIT_CONFIG, format!("{}: {e}", path.display())))
}

fn stabilize(scenario: &Scenario, args: &Args) -> Result<Outcome, Outcome> {
    let dir = scenario_dir(args, &scenario.name)?;
    let json = scenario.report.to_json();
    write_file(&dir.join("eigen_report.json"), &json)?;
    if scenario.report.pass {
        Ok(Outcome::ok(json))
    } else {
        Ok(Outcome {
            code: EXIT_REPORT_FAILED,
            stdout: json,
            stderr: format!(
                "{}: gains are not stabilizing (margin {:.6e})",
                scenario.name, scenario.report.margin
            ),
        })
    }
}

fn simulate(scenario: &Scenario, args: &Args) -> Result<Outcome, Outcome> {
    let dir = scenario_dir(args, &scenario.name)?;
    let (log, error) = match scenario.simulate() {
        Ok(log) => (log, None),
        Err(failure) => (failure.partial, Some(failure.error)),
    };
    let n = scenario.spec.transform.n();
    let io_err = |p: &Path, e: std::io::Error| Outcome::fail(EXIT_CONFIG, format!("{}: {e}", p.display()));
    let csv_path = dir.join("trajectory.csv");
    let mut w = BufWriter::new(File::create(&csv_path).map_err(|e| io_err(&csv_path, e))?);
    write_csv(&log, n, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| io_err(&csv_path, e))?;
    if args.plot_data {
        let plot_path = dir.join("plot.csv");
        let mut w = BufWriter::new(File::create(&plot_path).map_err(|e| io_err(&plot_path, e))?);
        write_plot_data(&log, scenario.agents.masses(), PLOT_POINTS, &mut w)
            .and_then(|_| w.flush())
            .map_err(|e| io_err(&plot_path, e))?;
    }
    let summary = RunSummary::new(scenario, &log, error.as_ref());
    write_file(&dir.join("summary.json"), &summary.to_json())?;
    match error {
        None => Ok(Outcome::ok(summary.line())),
        Some(e) => Ok(Outcome {
            code: exit_code(&e) as u8,
            stdout: summary.line(),
            stderr: format!("{}: {e}", scenario.name),
        }),
    }
}

fn check(scenario: &Scenario, args: &Args) -> Result<Outcome, Outcome> {
    let dir = scenario_dir(args, &scenario.name)?;
    let report = scenario.check();
    let json = report.to_json();
    write_file(&dir.join("check_report.json"), &json)?;
    match report.first_failure() {
        None => Ok(Outcome::ok(json)),
        Some(p) => Ok(Outcome {
            code: EXIT_CHECK_FAILED,
            stderr: format!(
                "{}: property {} failed (value {:.6e}, tolerance {:.1e}){}",
                scenario.name,
                p.name,
                p.value,
                p.tolerance,
                p.detail.as_ref().map(|d| format!(": {d}")).unwrap_or_default()
            ),
            stdout: json,
        }),
    }
}

fn run_one(command: &str, source: &str, args: &Args) -> Outcome {
    let result = (|| {
        let cfg = load_config(source, args)?;
        log::info!("{command} {}", cfg.name);
        let scenario = Scenario::resolve(&cfg).map_err(|e| Outcome::from_error(&cfg.name, &e))?;
        match command {
            "stabilize" => stabilize(&scenario, args),
            "simulate" => simulate(&scenario, args),
            _ => check(&scenario, args),
        }
    })();
    result.unwrap_or_else(|o| o)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(Env::new().filter_or("FORMATION_LAB_LOG", "warn")).init();
    let cli = Cli::parse();
    let (command, args) = cli.command.parts();
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(args.jobs.max(1)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("thread pool: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let outcomes: Vec<Outcome> = pool.install(|| {
        args.config
            .par_iter()
            .map(|source| run_one(command, source, args))
            .collect()
    });
    let mut code = 0;
    for o in &outcomes {
        if !o.stdout.is_empty() {
            println!("{}", o.stdout);
        }
        if !o.stderr.is_empty() {
            eprintln!("{}", o.stderr);
        }
        if code == 0 {
            code = o.code;
        }
    }
    ExitCode::from(code)
}
