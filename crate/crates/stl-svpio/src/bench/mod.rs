//! Benchmark execution: seed sweeps over (scenario, method) cells,
//! hyperparameter grids, deterministic report artifacts, and SVG plots.
//!
//! Output layout under the plan's directory:
//!
//! ```text
//! out/<scenario>/<method>/<seed>/result.json   deterministic per-run record
//! out/<scenario>/<method>/<seed>/timing.json   wall-clock (not reproducible)
//! out/<scenario>/<method>/<seed>/trace.csv     best trajectory, lossless
//! out/report.json                              deterministic aggregate
//! out/report.csv                               human-facing table (+ runtime)
//! out/timing.json                              wall-clock aggregate
//! ```
//!
//! Byte-identical reproducibility holds for every `result.json` and for
//! `report.json`; wall-clock readings live only in the timing files and the
//! CSV's runtime column.

pub mod plot;

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::baselines::{
    run_fd_svgd, run_gradient_ascent, run_mppi, FdSvgdConfig, GdConfig, MppiConfig,
};
use crate::optimizer::{run_svpio, EvalCounts, RunResult, SvpioConfig};
use crate::scenario::Scenario;
use crate::semantics::Trace;
use crate::{Error, Result};

/// Optimization method selector, as spelled on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Svpio,
    Mppi,
    Gd,
    FdSvgd,
}

impl Method {
    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "svpio" => Ok(Method::Svpio),
            "mppi" => Ok(Method::Mppi),
            "gd" => Ok(Method::Gd),
            "fd-svgd" => Ok(Method::FdSvgd),
            other => Err(Error::UnknownMethod(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Svpio => "svpio",
            Method::Mppi => "mppi",
            Method::Gd => "gd",
            Method::FdSvgd => "fd-svgd",
        }
    }
}

/// A fully resolved method configuration.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
#[serde(untagged)]
pub enum MethodConfig {
    Svpio(SvpioConfig),
    Mppi(MppiConfig),
    Gd(GdConfig),
    FdSvgd(FdSvgdConfig),
}

impl MethodConfig {
    pub fn method(&self) -> Method {
        match self {
            MethodConfig::Svpio(_) => Method::Svpio,
            MethodConfig::Mppi(_) => Method::Mppi,
            MethodConfig::Gd(_) => Method::Gd,
            MethodConfig::FdSvgd(_) => Method::FdSvgd,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        match &mut self {
            MethodConfig::Svpio(c) => c.seed = seed,
            MethodConfig::Mppi(c) => c.seed = seed,
            MethodConfig::Gd(c) => c.seed = seed,
            MethodConfig::FdSvgd(c) => c.svgd.seed = seed,
        }
        self
    }

    /// Scenario defaults for the method, falling back to the type defaults.
    pub fn defaults_for(scenario: &Scenario, method: Method) -> Self {
        match method {
            Method::Svpio => {
                MethodConfig::Svpio(scenario.methods.svpio.clone().unwrap_or_default())
            }
            Method::Mppi => MethodConfig::Mppi(scenario.methods.mppi.clone().unwrap_or_default()),
            Method::Gd => MethodConfig::Gd(scenario.methods.gd.clone().unwrap_or_default()),
            Method::FdSvgd => {
                MethodConfig::FdSvgd(scenario.methods.fd_svgd.clone().unwrap_or_default())
            }
        }
    }

    /// Applies `key = value` onto this config through its TOML form; used by
    /// the hyperparameter grid.
    pub fn with_param(&self, key: &str, value: toml::Value) -> Result<Self> {
        fn rebuild<T: serde::Serialize + serde::de::DeserializeOwned>(
            cfg: &T,
            key: &str,
            value: toml::Value,
        ) -> Result<T> {
            let mut table = toml::Table::try_from(cfg)
                .map_err(|e| Error::InvalidConfig(e.to_string()))?;
            table.insert(key.to_string(), value);
            table
                .try_into()
                .map_err(|e: toml::de::Error| Error::InvalidConfig(e.to_string()))
        }
        Ok(match self {
            MethodConfig::Svpio(c) => MethodConfig::Svpio(rebuild(c, key, value)?),
            MethodConfig::Mppi(c) => MethodConfig::Mppi(rebuild(c, key, value)?),
            MethodConfig::Gd(c) => MethodConfig::Gd(rebuild(c, key, value)?),
            MethodConfig::FdSvgd(c) => MethodConfig::FdSvgd(rebuild(c, key, value)?),
        })
    }

    pub fn run(&self, scenario: &Scenario) -> Result<RunResult> {
        match self {
            MethodConfig::Svpio(c) => run_svpio(scenario, c),
            MethodConfig::Mppi(c) => run_mppi(scenario, c),
            MethodConfig::Gd(c) => run_gradient_ascent(scenario, c),
            MethodConfig::FdSvgd(c) => run_fd_svgd(scenario, c),
        }
    }
}

/// Method-config overrides carried by plans and the `run` subcommand's
/// `--config` file. An override replaces the scenario's defaults for that
/// method entirely.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MethodOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svpio: Option<SvpioConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mppi: Option<MppiConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gd: Option<GdConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fd_svgd: Option<FdSvgdConfig>,
}

impl MethodOverrides {
    pub fn resolve(&self, scenario: &Scenario, method: Method) -> MethodConfig {
        match method {
            Method::Svpio => self
                .svpio
                .clone()
                .map(MethodConfig::Svpio)
                .unwrap_or_else(|| MethodConfig::defaults_for(scenario, method)),
            Method::Mppi => self
                .mppi
                .clone()
                .map(MethodConfig::Mppi)
                .unwrap_or_else(|| MethodConfig::defaults_for(scenario, method)),
            Method::Gd => self
                .gd
                .clone()
                .map(MethodConfig::Gd)
                .unwrap_or_else(|| MethodConfig::defaults_for(scenario, method)),
            Method::FdSvgd => self
                .fd_svgd
                .clone()
                .map(MethodConfig::FdSvgd)
                .unwrap_or_else(|| MethodConfig::defaults_for(scenario, method)),
        }
    }
}

/// A benchmark plan: the cross product of scenarios, methods, and seeds.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct BenchmarkPlan {
    pub scenarios: Vec<String>,
    pub methods: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    /// Inclusive `[first, last]` alternative to an explicit seed list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_range: Option<[u64; 2]>,
    #[serde(default = "default_out_dir")]
    pub out: PathBuf,
    #[serde(default)]
    pub overrides: MethodOverrides,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl BenchmarkPlan {
    pub fn from_toml(text: &str) -> Result<Self> {
        let plan: BenchmarkPlan = toml::from_str(text)?;
        plan.check()?;
        Ok(plan)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn check(&self) -> Result<()> {
        if self.scenarios.is_empty() {
            return Err(Error::InvalidConfig("plan has no scenarios".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("plan has no methods".into()));
        }
        for m in &self.methods {
            Method::parse(m)?;
        }
        if self.resolved_seeds()?.is_empty() {
            return Err(Error::InvalidConfig("plan has no seeds".into()));
        }
        Ok(())
    }

    pub fn resolved_seeds(&self) -> Result<Vec<u64>> {
        match (&self.seeds, &self.seed_range) {
            (Some(list), _) if !list.is_empty() => Ok(list.clone()),
            (_, Some([first, last])) if first <= last => Ok((*first..=*last).collect()),
            (Some(_), None) | (None, None) => Err(Error::InvalidConfig(
                "plan needs `seeds = [..]` or `seed_range = [first, last]`".into(),
            )),
            _ => Err(Error::InvalidConfig("invalid seed range".into())),
        }
    }
}

/// One executed plan cell.
#[derive(Debug)]
pub struct CellOutcome {
    pub scenario: String,
    pub method: Method,
    pub seed: u64,
    pub outcome: std::result::Result<RunResult, String>,
}

/// Deterministic per-run JSON record (`result.json`).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct CellResultJson {
    pub scenario: String,
    pub method: String,
    pub seed: u64,
    pub robustness: f64,
    pub satisfied: bool,
    pub best_index: usize,
    pub evaluations: EvalCounts,
    pub iterations: Vec<IterationJson>,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct IterationJson {
    pub iteration: usize,
    pub best: f64,
    pub mean: f64,
    pub min: f64,
    pub mean_pairwise_distance: f64,
    pub bandwidth: f64,
}

impl CellResultJson {
    pub fn from_run(run: &RunResult) -> Self {
        Self {
            scenario: run.scenario.clone(),
            method: run.method.clone(),
            seed: run.seed,
            robustness: run.best_robustness,
            satisfied: run.best_robustness > 0.0,
            best_index: run.best_index,
            evaluations: run.evaluations,
            iterations: run
                .iterations
                .iter()
                .map(|d| IterationJson {
                    iteration: d.iteration,
                    best: d.best,
                    mean: d.mean,
                    min: d.min,
                    mean_pairwise_distance: d.mean_pairwise_distance,
                    bandwidth: d.bandwidth,
                })
                .collect(),
        }
    }
}

/// Wall-clock record (`timing.json`), kept out of the reproducible files.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct CellTimingJson {
    pub wall_ms: f64,
    pub per_iteration_ms: Vec<f64>,
}

/// Aggregate over one (scenario, method) group. Failed cells count against
/// the satisfaction rate; robustness statistics cover successful cells.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ReportGroup {
    pub scenario: String,
    pub method: String,
    pub seeds: usize,
    pub errors: usize,
    pub mean_robustness: f64,
    pub median_robustness: f64,
    pub satisfaction_rate: f64,
    pub iterations_per_run: usize,
    pub evaluations: EvalCounts,
    pub best_seed: u64,
    pub best_robustness: f64,
    pub best_trace: String,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct AggregateReport {
    pub scenarios: Vec<String>,
    pub methods: Vec<String>,
    pub seeds: Vec<u64>,
    pub groups: Vec<ReportGroup>,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TimingReport {
    pub groups: Vec<GroupTiming>,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct GroupTiming {
    pub scenario: String,
    pub method: String,
    pub mean_wall_ms: f64,
}

/// Everything a plan execution produced, before any files are written.
#[derive(Debug)]
pub struct BenchOutcome {
    pub report: AggregateReport,
    pub timing: TimingReport,
    pub cells: Vec<CellOutcome>,
}

impl BenchOutcome {
    pub fn all_ok(&self) -> bool {
        self.cells.iter().all(|c| c.outcome.is_ok())
    }
}

/// Executes every (scenario, method, seed) cell of the plan in order.
/// Individual cell failures are recorded without aborting the sweep.
pub fn run_benchmark(plan: &BenchmarkPlan) -> Result<BenchOutcome> {
    plan.check()?;
    let seeds = plan.resolved_seeds()?;
    let methods: Vec<Method> = plan
        .methods
        .iter()
        .map(|m| Method::parse(m))
        .collect::<Result<_>>()?;

    let mut scenarios: BTreeMap<String, Scenario> = BTreeMap::new();
    for name in &plan.scenarios {
        let s = Scenario::resolve(name)?;
        scenarios.insert(name.clone(), s);
    }

    let mut cells = Vec::new();
    for name in &plan.scenarios {
        let scenario = &scenarios[name];
        for method in &methods {
            let base = plan.overrides.resolve(scenario, *method);
            for &seed in &seeds {
                let cfg = base.clone().with_seed(seed);
                let outcome = cfg.run(scenario).map_err(|e| e.to_string());
                cells.push(CellOutcome {
                    scenario: name.clone(),
                    method: *method,
                    seed,
                    outcome,
                });
            }
        }
    }
    let (report, timing) = aggregate(plan, &seeds, &methods, &cells);
    Ok(BenchOutcome {
        report,
        timing,
        cells,
    })
}

fn aggregate(
    plan: &BenchmarkPlan,
    seeds: &[u64],
    methods: &[Method],
    cells: &[CellOutcome],
) -> (AggregateReport, TimingReport) {
    let mut groups = Vec::new();
    let mut timing_groups = Vec::new();
    for name in &plan.scenarios {
        for method in methods {
            let group: Vec<&CellOutcome> = cells
                .iter()
                .filter(|c| &c.scenario == name && c.method == *method)
                .collect();
            let ok: Vec<&RunResult> = group
                .iter()
                .filter_map(|c| c.outcome.as_ref().ok())
                .collect();
            let errors = group.len() - ok.len();
            let mut robs: Vec<f64> = ok.iter().map(|r| r.best_robustness).collect();
            robs.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite robustness"));
            let mean = if robs.is_empty() {
                f64::NAN
            } else {
                robs.iter().sum::<f64>() / robs.len() as f64
            };
            let median = if robs.is_empty() {
                f64::NAN
            } else if robs.len() % 2 == 1 {
                robs[robs.len() / 2]
            } else {
                0.5 * (robs[robs.len() / 2 - 1] + robs[robs.len() / 2])
            };
            let sat = ok.iter().filter(|r| r.best_robustness > 0.0).count() as f64
                / group.len().max(1) as f64;
            let mut best: Option<&RunResult> = None;
            for r in &ok {
                if best.map_or(true, |b| r.best_robustness > b.best_robustness) {
                    best = Some(r);
                }
            }
            let mut evals = EvalCounts::default();
            for r in &ok {
                evals.rollouts += r.evaluations.rollouts;
                evals.hard_evals += r.evaluations.hard_evals;
                evals.gradient_evals += r.evaluations.gradient_evals;
            }
            let (best_seed, best_rob, best_trace) = match best {
                Some(r) => (
                    r.seed,
                    r.best_robustness,
                    format!("{}/{}/{}/trace.csv", name, method.name(), r.seed),
                ),
                None => (0, f64::NAN, String::new()),
            };
            groups.push(ReportGroup {
                scenario: name.clone(),
                method: method.name().to_string(),
                seeds: group.len(),
                errors,
                mean_robustness: mean,
                median_robustness: median,
                satisfaction_rate: sat,
                iterations_per_run: ok.first().map_or(0, |r| r.iterations.len()),
                evaluations: evals,
                best_seed,
                best_robustness: best_rob,
                best_trace,
            });
            let mean_ms = if ok.is_empty() {
                f64::NAN
            } else {
                ok.iter().map(|r| r.wall_ms).sum::<f64>() / ok.len() as f64
            };
            timing_groups.push(GroupTiming {
                scenario: name.clone(),
                method: method.name().to_string(),
                mean_wall_ms: mean_ms,
            });
        }
    }
    (
        AggregateReport {
            scenarios: plan.scenarios.clone(),
            methods: methods.iter().map(|m| m.name().to_string()).collect(),
            seeds: seeds.to_vec(),
            groups,
        },
        TimingReport {
            groups: timing_groups,
        },
    )
}

/// Writes all plan artifacts under `out`.
pub fn write_outputs(outcome: &BenchOutcome, out: &Path) -> Result<()> {
    for cell in &outcome.cells {
        let dir = out
            .join(&cell.scenario)
            .join(cell.method.name())
            .join(cell.seed.to_string());
        std::fs::create_dir_all(&dir)?;
        match &cell.outcome {
            Ok(run) => {
                write_json(&dir.join("result.json"), &CellResultJson::from_run(run))?;
                write_json(
                    &dir.join("timing.json"),
                    &CellTimingJson {
                        wall_ms: run.wall_ms,
                        per_iteration_ms: run.iterations.iter().map(|d| d.wall_ms).collect(),
                    },
                )?;
                write_trace_csv(&dir.join("trace.csv"), &run.best_trace)?;
            }
            Err(msg) => {
                write_json(
                    &dir.join("result.json"),
                    &serde_json::json!({
                        "scenario": cell.scenario,
                        "method": cell.method.name(),
                        "seed": cell.seed,
                        "error": msg,
                    }),
                )?;
            }
        }
    }
    write_json(&out.join("report.json"), &outcome.report)?;
    write_json(&out.join("timing.json"), &outcome.timing)?;
    write_report_csv(&out.join("report.csv"), outcome)?;
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut data = serde_json::to_vec_pretty(value)?;
    data.push(b'\n');
    std::fs::write(path, data)?;
    Ok(())
}

fn write_report_csv(path: &Path, outcome: &BenchOutcome) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(
        f,
        "scenario,method,seeds,errors,mean_robustness,median_robustness,satisfaction_rate,mean_wall_ms"
    )?;
    for (g, t) in outcome.report.groups.iter().zip(&outcome.timing.groups) {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{:.3}",
            g.scenario,
            g.method,
            g.seeds,
            g.errors,
            g.mean_robustness,
            g.median_robustness,
            g.satisfaction_rate,
            t.mean_wall_ms
        )?;
    }
    Ok(())
}

/// Lossless trajectory serialization: header `t,x0,..,x{n-1}`, one row per
/// step, floats printed with 17 significant digits.
pub fn write_trace_csv(path: &Path, trace: &Trace) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(trace_csv_string(trace).as_bytes())?;
    Ok(())
}

pub fn trace_csv_string(trace: &Trace) -> String {
    let mut out = String::from("t");
    for i in 0..trace.dim() {
        out.push_str(&format!(",x{i}"));
    }
    out.push('\n');
    for t in 0..trace.len() {
        out.push_str(&t.to_string());
        for v in trace.state(t) {
            out.push_str(&format!(",{v:.16e}"));
        }
        out.push('\n');
    }
    out
}

/// Reads a trajectory written by [`write_trace_csv`]. `dt` is supplied by
/// the scenario, not the file.
pub fn read_trace_csv(path: &Path, dt: f64) -> Result<Trace> {
    parse_trace_csv(&std::fs::read_to_string(path)?, dt)
}

pub fn parse_trace_csv(text: &str, dt: f64) -> Result<Trace> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::TraceFormat("empty trace file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.first() != Some(&"t") || cols.len() < 2 {
        return Err(Error::TraceFormat(format!(
            "unexpected header `{header}` (want `t,x0,...`)"
        )));
    }
    let dim = cols.len() - 1;
    let mut flat = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 1 {
            return Err(Error::TraceFormat(format!(
                "row {} has {} fields, expected {}",
                lineno + 2,
                fields.len(),
                dim + 1
            )));
        }
        for field in &fields[1..] {
            let v: f64 = field.parse().map_err(|_| {
                Error::TraceFormat(format!("bad float `{field}` on row {}", lineno + 2))
            })?;
            flat.push(v);
        }
    }
    Trace::from_flat(flat, dim, dt)
}

/// Hyperparameter grid: per method, named parameter value lists whose
/// cartesian product is swept.
#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
pub struct SweepGrid {
    #[serde(flatten)]
    pub methods: BTreeMap<String, BTreeMap<String, Vec<toml::Value>>>,
}

impl SweepGrid {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// All parameter assignments for one method (a singleton empty
    /// assignment when the grid does not mention the method).
    fn combos(&self, method: Method) -> Vec<Vec<(String, toml::Value)>> {
        let Some(params) = self.methods.get(method.name()) else {
            return vec![vec![]];
        };
        let mut combos: Vec<Vec<(String, toml::Value)>> = vec![vec![]];
        for (key, values) in params {
            let mut next = Vec::with_capacity(combos.len() * values.len());
            for combo in &combos {
                for v in values {
                    let mut c = combo.clone();
                    c.push((key.clone(), v.clone()));
                    next.push(c);
                }
            }
            combos = next;
        }
        combos
    }
}

/// One grid cell's aggregate outcome.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SweepRow {
    pub scenario: String,
    pub method: String,
    pub params: BTreeMap<String, toml::Value>,
    pub mean_robustness: f64,
    pub satisfaction_rate: f64,
    pub errors: usize,
    pub mean_wall_ms: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    /// Winning configuration per (scenario, method), selected by mean
    /// robustness, then satisfaction rate, then smaller runtime.
    pub best: Vec<SweepBest>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SweepBest {
    pub scenario: String,
    pub method: String,
    pub params: BTreeMap<String, toml::Value>,
    pub mean_robustness: f64,
    pub satisfaction_rate: f64,
    pub config: MethodConfig,
}

/// Runs the plan once per grid combination and selects the best config per
/// (scenario, method). Cell failures are flagged per row, not fatal.
pub fn sweep(plan: &BenchmarkPlan, grid: &SweepGrid) -> Result<SweepOutcome> {
    plan.check()?;
    let seeds = plan.resolved_seeds()?;
    let methods: Vec<Method> = plan
        .methods
        .iter()
        .map(|m| Method::parse(m))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut best: Vec<SweepBest> = Vec::new();
    for name in &plan.scenarios {
        let scenario = Scenario::resolve(name)?;
        for method in &methods {
            let base = plan.overrides.resolve(&scenario, *method);
            let mut group_best: Option<(SweepRow, MethodConfig)> = None;
            for combo in grid.combos(*method) {
                let mut cfg = base.clone();
                for (key, value) in &combo {
                    cfg = cfg.with_param(key, value.clone())?;
                }
                let mut robs = Vec::new();
                let mut sat = 0usize;
                let mut errors = 0usize;
                let mut wall = 0.0;
                for &seed in &seeds {
                    match cfg.clone().with_seed(seed).run(&scenario) {
                        Ok(run) => {
                            if run.best_robustness > 0.0 {
                                sat += 1;
                            }
                            robs.push(run.best_robustness);
                            wall += run.wall_ms;
                        }
                        Err(_) => errors += 1,
                    }
                }
                let row = SweepRow {
                    scenario: name.clone(),
                    method: method.name().to_string(),
                    params: combo.iter().cloned().collect(),
                    mean_robustness: if robs.is_empty() {
                        f64::NEG_INFINITY
                    } else {
                        robs.iter().sum::<f64>() / robs.len() as f64
                    },
                    satisfaction_rate: sat as f64 / seeds.len() as f64,
                    errors,
                    mean_wall_ms: if robs.is_empty() {
                        f64::NAN
                    } else {
                        wall / robs.len() as f64
                    },
                };
                let better = match &group_best {
                    None => true,
                    Some((b, _)) => {
                        (row.mean_robustness, row.satisfaction_rate, -row.mean_wall_ms)
                            > (b.mean_robustness, b.satisfaction_rate, -b.mean_wall_ms)
                    }
                };
                if better {
                    group_best = Some((row.clone(), cfg.clone()));
                }
                rows.push(row);
            }
            if let Some((row, cfg)) = group_best {
                best.push(SweepBest {
                    scenario: row.scenario,
                    method: row.method,
                    params: row.params,
                    mean_robustness: row.mean_robustness,
                    satisfaction_rate: row.satisfaction_rate,
                    config: cfg,
                });
            }
        }
    }
    Ok(SweepOutcome { rows, best })
}

/// Writes the full grid table and the winners.
pub fn write_sweep_outputs(outcome: &SweepOutcome, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    write_json(&out.join("grid.json"), &outcome.rows)?;
    write_json(&out.join("best.json"), &outcome.best)?;
    let mut f = std::fs::File::create(out.join("grid.csv"))?;
    writeln!(
        f,
        "scenario,method,params,mean_robustness,satisfaction_rate,errors,mean_wall_ms"
    )?;
    for row in &outcome.rows {
        let params = row
            .params
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ");
        writeln!(
            f,
            "{},{},{},{},{},{},{:.3}",
            row.scenario,
            row.method,
            params,
            row.mean_robustness,
            row.satisfaction_rate,
            row.errors,
            row.mean_wall_ms
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_rejects_empty_methods() {
        let err = BenchmarkPlan::from_toml(
            r#"
scenarios = ["reach_avoid"]
methods = []
seeds = [0]
"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("no methods"));
    }

    #[test]
    fn plan_seed_range_is_inclusive() {
        let plan = BenchmarkPlan::from_toml(
            r#"
scenarios = ["reach_avoid"]
methods = ["svpio"]
seed_range = [3, 6]
"#,
        )
        .unwrap();
        assert_eq!(plan.resolved_seeds().unwrap(), vec![3, 4, 5, 6]);
    }

    #[test]
    fn unknown_method_rejected() {
        let err = BenchmarkPlan::from_toml(
            r#"
scenarios = ["reach_avoid"]
methods = ["annealing"]
seeds = [0]
"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::UnknownMethod(_)));
    }

    #[test]
    fn trace_csv_round_trips_losslessly() {
        let trace = Trace::new(
            vec![
                vec![0.1, -0.2, 1.0 / 3.0, 2.0_f64.sqrt()],
                vec![-1e-17, 1e17, 0.0, -5.5],
            ],
            0.1,
        )
        .unwrap();
        let text = trace_csv_string(&trace);
        let parsed = parse_trace_csv(&text, 0.1).unwrap();
        assert_eq!(trace.states_flat(), parsed.states_flat());
    }

    #[test]
    fn grid_combos_multiply() {
        let grid = SweepGrid::from_toml(
            r#"
[svpio]
step_size = [0.1, 0.2]
temperature = [0.05, 0.1, 0.2]
"#,
        )
        .unwrap();
        assert_eq!(grid.combos(Method::Svpio).len(), 6);
        assert_eq!(grid.combos(Method::Gd).len(), 1);
    }

    #[test]
    fn with_param_overrides_one_field() {
        let scenario = Scenario::builtin("reach_avoid").unwrap();
        let cfg = MethodConfig::defaults_for(&scenario, Method::Svpio);
        let updated = cfg
            .with_param("step_size", toml::Value::Float(0.42))
            .unwrap();
        match updated {
            MethodConfig::Svpio(c) => {
                assert_eq!(c.step_size, 0.42);
                assert_eq!(c.particles, 10);
            }
            _ => panic!("method changed"),
        }
    }
}
