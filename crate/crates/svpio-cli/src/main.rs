//! `svpio` — run, benchmark, sweep, check, and plot STL trajectory
//! synthesis tasks.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use stl_svpio::bench::{
    self, plot, BenchmarkPlan, CellResultJson, Method, MethodOverrides, SweepGrid,
};
use stl_svpio::scenario::{check_trajectory, Scenario};

#[derive(Parser)]
#[command(
    name = "svpio",
    about = "Trajectory synthesis under signal temporal logic specifications",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one (scenario, method, seed) cell and print its robustness.
    Run {
        /// Built-in scenario name or path to a scenario TOML.
        #[arg(long)]
        scenario: String,
        /// One of: svpio, mppi, gd, fd-svgd.
        #[arg(long)]
        method: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Optional method-config override file (TOML with [svpio] etc.).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write result.json / timing.json / trace.csv under this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Execute a benchmark plan: scenarios × methods × seeds.
    Bench {
        #[arg(long)]
        plan: PathBuf,
    },
    /// Run a hyperparameter grid over a plan and report the best configs.
    Sweep {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        grid: PathBuf,
    },
    /// Evaluate a recorded trajectory against a scenario's specification.
    Check {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        trace: PathBuf,
    },
    /// Render trajectory plots and the summary bar chart from a bench
    /// output directory.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run {
            scenario,
            method,
            seed,
            config,
            out,
        } => {
            let scenario = Scenario::resolve(&scenario)?;
            let method = Method::parse(&method)?;
            let overrides: MethodOverrides = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
                }
                None => MethodOverrides::default(),
            };
            let cfg = overrides.resolve(&scenario, method).with_seed(seed);
            let result = cfg.run(&scenario)?;
            println!(
                "{} {} seed={} robustness={:.6} satisfied={} wall_ms={:.1}",
                result.scenario,
                result.method,
                result.seed,
                result.best_robustness,
                result.best_robustness > 0.0,
                result.wall_ms
            );
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                let json = serde_json::to_string_pretty(&CellResultJson::from_run(&result))?;
                std::fs::write(dir.join("result.json"), json + "\n")?;
                bench::write_trace_csv(&dir.join("trace.csv"), &result.best_trace)?;
                println!("artifacts written to {}", dir.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Bench { plan } => {
            let plan = BenchmarkPlan::load(&plan)?;
            let outcome = bench::run_benchmark(&plan)?;
            bench::write_outputs(&outcome, &plan.out)?;
            for (g, t) in outcome
                .report
                .groups
                .iter()
                .zip(&outcome.timing.groups)
            {
                println!(
                    "{:<14} {:<8} seeds={:<3} sat={:.2} mean_rob={:+.4} median={:+.4} errors={} mean_ms={:.0}",
                    g.scenario,
                    g.method,
                    g.seeds,
                    g.satisfaction_rate,
                    g.mean_robustness,
                    g.median_robustness,
                    g.errors,
                    t.mean_wall_ms
                );
            }
            println!("report written to {}", plan.out.display());
            Ok(if outcome.all_ok() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Sweep { plan, grid } => {
            let plan = BenchmarkPlan::load(&plan)?;
            let grid = SweepGrid::load(&grid)?;
            let outcome = bench::sweep(&plan, &grid)?;
            bench::write_sweep_outputs(&outcome, &plan.out)?;
            for best in &outcome.best {
                println!(
                    "{:<14} {:<8} best mean_rob={:+.4} sat={:.2} params={:?}",
                    best.scenario,
                    best.method,
                    best.mean_robustness,
                    best.satisfaction_rate,
                    best.params
                );
            }
            let any_errors = outcome.rows.iter().any(|r| r.errors > 0);
            println!("grid written to {}", plan.out.display());
            Ok(if any_errors {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Check { scenario, trace } => {
            let scenario = Scenario::resolve(&scenario)?;
            let t = bench::read_trace_csv(&trace, scenario.dynamics.dt)?;
            let report = check_trajectory(&scenario, &t)?;
            println!(
                "total robustness: {:+.6} ({})",
                report.total,
                if report.total > 0.0 {
                    "satisfied"
                } else {
                    "violated"
                }
            );
            for c in &report.conjuncts {
                println!("  {:+.6}  {}", c.robustness, c.formula);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Plot { input, out } => {
            let count = render_plots(&input, &out)?;
            println!("wrote {count} SVG files to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// Reads `report.json` from a bench output directory and renders one
/// trajectory SVG per (scenario, method) best run plus the summary chart.
fn render_plots(input: &Path, out: &Path) -> anyhow::Result<usize> {
    let report_path = input.join("report.json");
    let text = std::fs::read_to_string(&report_path)
        .with_context(|| format!("reading {}", report_path.display()))?;
    let report: stl_svpio::bench::AggregateReport = serde_json::from_str(&text)?;
    if report.groups.is_empty() {
        bail!("report has no groups to plot");
    }
    std::fs::create_dir_all(out)?;
    let mut count = 0;
    for group in &report.groups {
        if group.best_trace.is_empty() {
            continue;
        }
        let scenario = Scenario::resolve(&group.scenario)?;
        let trace = bench::read_trace_csv(&input.join(&group.best_trace), scenario.dynamics.dt)?;
        let svg = plot::trajectory_svg(&scenario, &trace);
        let name = format!("{}_{}_trajectory.svg", group.scenario, group.method);
        std::fs::write(out.join(name), svg)?;
        count += 1;
    }
    let chart = plot::bar_chart_svg(&report.groups);
    std::fs::write(out.join("summary_bars.svg"), chart)?;
    Ok(count + 1)
}
