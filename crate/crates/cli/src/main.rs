use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;

use ddrmpc_core::sim::{
    generate_synthetic_weather, grid_sweep, run_closed_loop, sweep_csv, write_outputs, DataSource, MetricsReport,
    ReportTable, SimulationPlan, SweepFamily, SweepGrid, SynthParams,
};
use ddrmpc_core::uncertainty::{learn_uncertainty, CalibrationReport, GuaranteeBudget, UncertaintyModel};
use ddrmpc_core::verify::{run_suite, SuiteOptions};
use ddrmpc_core::weather::{build_error_windows, write_csv};

#[derive(Parser)]
#[command(name = "ddrmpc", version, about = "Data-driven robust MPC for irrigation scheduling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn and calibrate the uncertainty sets from a weather history.
    Train {
        /// Run configuration (TOML or JSON); only its training-related fields are used.
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Weather CSV; replaces the plan's training source.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
        #[arg(long, default_value_t = 1e-4)]
        beta: f64,
        /// Where the model JSON is written.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every controller of a plan in closed loop.
    Simulate {
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Output directory; overrides the plan's.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run the controllers one after another.
        #[arg(long)]
        sequential: bool,
    },
    /// Evaluate a controller family over a parameter grid.
    Sweep {
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long, value_enum)]
        family: Family,
        /// First parameter values (comma separated).
        #[arg(long, value_delimiter = ',', required = true)]
        x: Vec<f64>,
        /// Second parameter values for two-parameter families.
        #[arg(long, value_delimiter = ',')]
        y: Vec<f64>,
        /// Dosing period of the open-loop family.
        #[arg(long, default_value_t = 28)]
        period: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the acceptance checks.
    Verify {
        #[arg(long, default_value_t = SuiteOptions::default().seed)]
        seed: u64,
        /// Skip the closed-loop case study (the slow part).
        #[arg(long)]
        quick: bool,
        /// Also write the outcomes as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Render a metrics file as report tables.
    Report {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Markdown)]
        format: Format,
        /// Directory for the CSV tables; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic weather series as CSV.
    Synth {
        #[arg(long, default_value_t = 2016)]
        seed: u64,
        #[arg(long, default_value = "2016-05-01")]
        start: NaiveDate,
        #[arg(long, default_value_t = 6)]
        months: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the default synthetic plan as TOML.
    InitPlan {
        #[arg(long, default_value_t = 2016)]
        train_seed: u64,
        #[arg(long, default_value_t = 2017)]
        test_seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    OpenLoop,
    RuleBased,
    NormRmpc,
    SpTracking,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Markdown,
    Csv,
}

#[derive(Serialize)]
struct TrainedModel {
    model: UncertaintyModel,
    report: CalibrationReport,
}

fn load_plan(path: &Option<PathBuf>) -> Result<SimulationPlan> {
    match path {
        Some(p) => SimulationPlan::load(p).with_context(|| format!("loading plan {}", p.display())),
        None => Ok(SimulationPlan::synthetic_default(2016, 2017)),
    }
}

fn write_file(path: &PathBuf, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Train {
            plan,
            data,
            epsilon,
            beta,
            out,
        } => {
            let plan = load_plan(&plan)?;
            let source = data.map(|path| DataSource::Csv { path }).unwrap_or(plan.train.clone());
            let records = source.load()?;
            let d = &plan.dynamics;
            let ds = build_error_windows(&records, d.horizon_steps, d.period_hours, &plan.hargreaves, plan.stride)?;
            let mut cfg = plan.uncertainty.clone();
            cfg.budget = GuaranteeBudget::even(epsilon, beta)?;
            let (model, report) = learn_uncertainty(&ds, &cfg)?;
            info!(
                "{} windows, {} + {} support vectors, guarantee met: {}",
                report.n_windows, report.eta_support_vectors, report.xibar_support_vectors, report.guarantee_met
            );
            write_file(&out, &serde_json::to_string_pretty(&TrainedModel { model, report })?)?;
            Ok(true)
        }
        Command::Simulate { plan, out, sequential } => {
            let mut plan = load_plan(&plan)?;
            if let Some(dir) = out {
                plan.output_dir = Some(dir);
            }
            if sequential {
                plan.parallel = false;
            }
            let dir = plan.output_dir.clone().unwrap_or_else(|| PathBuf::from("ddrmpc-out"));
            plan.output_dir = Some(dir.clone());
            let outcome = run_closed_loop(&plan)?;
            let report = write_outputs(&dir, &outcome)?;
            println!("{}", report.render_markdown());
            println!("{}", report.render_timing_markdown());
            Ok(report.controllers.iter().all(|c| c.completed))
        }
        Command::Sweep {
            plan,
            family,
            x,
            y,
            period,
            out,
        } => {
            let plan = load_plan(&plan)?;
            let family = match family {
                Family::OpenLoop => SweepFamily::OpenLoop { period },
                Family::RuleBased => SweepFamily::RuleBased,
                Family::NormRmpc => SweepFamily::NormRmpc,
                Family::SpTracking => SweepFamily::SpTracking,
            };
            let cells = grid_sweep(family, &SweepGrid { x, y }, &plan)?;
            write_file(&out, &sweep_csv(family, &cells))?;
            info!("{} cells written to {}", cells.len(), out.display());
            Ok(cells.iter().all(|c| c.error.is_none()))
        }
        Command::Verify { seed, quick, json } => {
            let opts = SuiteOptions {
                seed,
                case_study: !quick,
            };
            let outcomes = run_suite(opts, |o| println!("{o}"));
            if let Some(path) = json {
                write_file(&path, &serde_json::to_string_pretty(&outcomes)?)?;
            }
            Ok(outcomes.iter().all(|o| o.passed))
        }
        Command::Report { metrics, format, out } => {
            let text = std::fs::read_to_string(&metrics).with_context(|| format!("reading {}", metrics.display()))?;
            let report: MetricsReport = serde_json::from_str(&text)?;
            match (format, out) {
                (Format::Markdown, None) => println!("{}", report.render_markdown()),
                (Format::Markdown, Some(dir)) => write_file(&dir.join("report.md"), &report.render_markdown())?,
                (Format::Csv, None) => {
                    for t in ReportTable::ALL {
                        println!("# {}\n{}", t.title(), report.render_csv(t));
                    }
                }
                (Format::Csv, Some(dir)) => {
                    for t in ReportTable::ALL {
                        write_file(&dir.join(format!("{}.csv", t.file_stem())), &report.render_csv(t))?;
                    }
                }
            }
            Ok(true)
        }
        Command::Synth {
            seed,
            start,
            months,
            out,
        } => {
            if months == 0 {
                bail!("months must be at least 1");
            }
            let records = generate_synthetic_weather(seed, start, months, &SynthParams::default())?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            write_csv(&out, &records)?;
            info!("{} periods written to {}", records.len(), out.display());
            Ok(true)
        }
        Command::InitPlan { train_seed, test_seed } => {
            print!("{}", SimulationPlan::synthetic_default(train_seed, test_seed).to_toml_string()?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
