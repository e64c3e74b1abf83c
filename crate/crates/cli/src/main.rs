//! Batch pipeline front end: generate a quarter, simulate it, report
//! congestion, export the dynamic model text.
//!
//! Exit codes: 0 success, 1 domain or validation failure, 2 usage error.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use chrono::NaiveDateTime;
use clap::{Parser, Subcommand};

use quartier::engine::{self, results::ResultSet, ReplayFile, SetpointSource};
use quartier::grid::simbench;
use quartier::quarterdb::{CsvBundleStore, QuarterStore};
use quartier::report;
use quartier::scenario;
use quartier::simgen;
use quartier::weather::{self, WeatherSeries};

#[derive(Parser)]
#[command(
    name = "quartier",
    version,
    about = "Scenario generator and quasi-stationary simulator for integrated energy quarters"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Realize a quarter from a scenario config and a SimBench-format grid.
    Generate {
        /// Scenario configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Grid directory in the SimBench CSV dialect.
        #[arg(long)]
        grid: PathBuf,
        /// Output bundle directory.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed from the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the quasi-stationary simulation on a quarter bundle.
    Simulate {
        /// Quarter bundle directory (from `generate`).
        #[arg(long)]
        quarter: PathBuf,
        /// Weather CSV (timestamp;ghi_w_m2;t_ambient_c). Defaults to the
        /// built-in synthetic April series covering the window.
        #[arg(long)]
        weather: Option<PathBuf>,
        /// Simulation start (ISO-8601, e.g. 2020-04-06T00:00:00).
        #[arg(long, default_value = "2020-04-06T00:00:00")]
        start: String,
        /// Simulated duration in hours.
        #[arg(long, default_value_t = 48.0)]
        hours: f64,
        /// Timestep in seconds.
        #[arg(long = "step-s", default_value_t = 900.0)]
        step_s: f64,
        /// Setpoint replay CSV (timestamp;device_id;target_kw).
        #[arg(long)]
        setpoints: Option<PathBuf>,
        /// Output directory for the result series.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute loadings and congestion events and render them.
    Report {
        /// Result directory (from `simulate`).
        #[arg(long)]
        results: PathBuf,
        /// Quarter bundle directory (for ratings and topology).
        #[arg(long)]
        quarter: PathBuf,
        /// Comma-separated output formats (csv, svg).
        #[arg(long, default_value = "csv,svg", value_delimiter = ',')]
        formats: Vec<String>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Emit dynamic-model source text for the quarter.
    ExportModel {
        /// Quarter bundle directory.
        #[arg(long)]
        quarter: PathBuf,
        /// Output directory for the .mo files.
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_start(raw: &str) -> Result<NaiveDateTime> {
    NaiveDateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M:%S")
        .with_context(|| format!("--start {raw:?} is not an ISO-8601 timestamp"))
}

fn load_weather(
    path: Option<&PathBuf>,
    start: NaiveDateTime,
    hours: f64,
) -> Result<WeatherSeries> {
    match path {
        Some(p) => weather::import_csv(p).map_err(Into::into),
        None => {
            // Cover the window with one day of margin on each side.
            let first = start.date() - chrono::Duration::days(1);
            let days = (hours / 24.0).ceil() as u32 + 2;
            Ok(weather::synthetic_april(first, days))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate {
            config,
            grid,
            out,
            seed,
        } => {
            let text = std::fs::read_to_string(&config)
                .with_context(|| format!("cannot read config {}", config.display()))?;
            let mut sd = scenario::load_scenario(&text)?;
            if let Some(seed) = seed {
                sd.seed = seed;
            }
            let topology = simbench::import_simbench(&grid)?;
            let quarter = scenario::realize_quarter(&sd, &topology)?;
            let store = CsvBundleStore { dir: out.clone() };
            store.save(&quarter)?;
            println!(
                "generated quarter '{}' with {} households (seed {}) -> {}",
                sd.name,
                quarter.households.len(),
                sd.seed,
                out.display()
            );
            println!("quartier {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
        Command::Simulate {
            quarter,
            weather,
            start,
            hours,
            step_s,
            setpoints,
            out,
        } => {
            let store = CsvBundleStore { dir: quarter };
            let q = store.load()?;
            let start = parse_start(&start)?;
            let series = load_weather(weather.as_ref(), start, hours)?;
            let model = simgen::assemble_simulation(&q, series)?;
            let mut replay = match &setpoints {
                Some(path) => Some(ReplayFile::from_csv_path(path)?),
                None => None,
            };
            let result = engine::run_simulation(
                &model,
                start,
                hours,
                step_s,
                replay.as_mut().map(|r| r as &mut dyn SetpointSource),
            )?;
            result.save(&out)?;
            for w in &result.meta.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "simulated {} steps of {}s for quarter '{}' (seed {}) -> {}",
                result.meta.steps,
                step_s,
                result.meta.quarter_name,
                result.meta.seed,
                out.display()
            );
            println!("quartier {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
        Command::Report {
            results,
            quarter,
            formats,
            out,
        } => {
            let store = CsvBundleStore { dir: quarter };
            let q = store.load()?;
            let r = ResultSet::load(&results)?;
            let grid = simgen::electric_topology(&q)?;
            let loadings = report::compute_loadings(&r, &grid)?;
            let events = report::detect_congestion(&r, &loadings, &report::Limits::default());
            let files = report::render_outputs(&r, &loadings, &events, &formats, &out)?;
            println!(
                "report for '{}' (seed {}): {} congestion events, {} files -> {}",
                r.meta.quarter_name,
                r.meta.seed,
                events.len(),
                files.len(),
                out.display()
            );
            Ok(())
        }
        Command::ExportModel { quarter, out } => {
            let store = CsvBundleStore { dir: quarter };
            let q = store.load()?;
            let files = simgen::emit_dynamic_model_text(&q, &out)?;
            println!(
                "emitted {} model file(s) for '{}' (seed {}) -> {}",
                files.len(),
                q.scenario.name,
                q.scenario.seed,
                out.display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    // clap handles usage errors itself with exit code 2.
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
