//! Experiment orchestration: JSON specs, multi-seed scheduling, trace and
//! summary files, and log-scale SVG plots.
//!
//! Every output is a pure function of the spec and the seed list: traces
//! are computed in a work pool but written in seed order, wall times stay
//! out of CSVs and summaries, so reruns and different worker counts yield
//! byte-identical files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::algorithms::{run, AlgorithmKind, FederatedConfig, RunTrace, Schedule};
use crate::analysis::{
    error_floor, eta_suggest, prop1_limit, speedup_slope, theorem_ingredients, FloorEstimate,
    Prop1Report, TheoremIngredients, DEFAULT_FLOOR_WINDOW,
};
use crate::error::{Error, Result};
use crate::markov::{mixing_time, MixingReport};
use crate::numerics::{norm2, vec_sub};
use crate::operators::{
    Agent, Family, GeneratorParams, InstanceFile, ProblemFleet, SamplingMode,
};

/// Built-in ceiling on alpha * L^2 / mu for speedup sweeps: above it the
/// quadratic-in-alpha floor term competes with the 1/M term being measured.
pub const SWEEP_ALPHA_RATIO_LIMIT: f64 = 0.05;

/// Epsilon at which chain diagnostics report mixing times.
pub const CHAIN_INFO_EPSILON: f64 = 0.01;

const fn default_alpha_g() -> f64 {
    1.0
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

/// Where the fleet comes from: a saved instance file or inline generator
/// parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemSource {
    Instance { instance: PathBuf },
    Inline(GeneratorParams),
}

impl ProblemSource {
    pub fn fleet(&self) -> Result<ProblemFleet> {
        match self {
            ProblemSource::Instance { instance } => InstanceFile::load(instance)?.fleet(),
            ProblemSource::Inline(params) => params.generate(),
        }
    }

    pub fn num_agents(&self) -> Result<usize> {
        match self {
            ProblemSource::Instance { instance } => Ok(InstanceFile::load(instance)?.m),
            ProblemSource::Inline(params) => Ok(params.num_agents()),
        }
    }

    /// Same problem with a different fleet size; only generated problems
    /// can be resized (sub-seeds keep smaller fleets prefixes of larger).
    pub fn with_num_agents(&self, m: usize) -> Result<ProblemSource> {
        match self {
            ProblemSource::Instance { .. } => Err(Error::InvalidInput(
                "agent sweeps need inline generator params, not a fixed instance file".into(),
            )),
            ProblemSource::Inline(params) => Ok(ProblemSource::Inline(params.with_num_agents(m))),
        }
    }
}

/// Declared pass/fail thresholds; absent fields are simply not checked.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcceptanceThresholds {
    /// `run`: across-seed mean of final d_t must not exceed this.
    #[serde(default)]
    pub max_final_d: Option<f64>,
    /// `compare`: plain-averaging floor over corrected floor, at least.
    #[serde(default)]
    pub min_floor_ratio: Option<f64>,
    /// `compare`: floor gap must exceed this many combined standard errors.
    #[serde(default)]
    pub floor_separation_stderrs: Option<f64>,
    /// `sweep-agents`: inclusive slope window for log floor vs log M.
    #[serde(default)]
    pub slope_range: Option<(f64, f64)>,
    /// `sweep-agents`: override of the alpha * L^2 / mu ceiling.
    #[serde(default)]
    pub max_alpha_ratio: Option<f64>,
}

/// One experiment: a problem, the algorithms to run on it, the federated
/// configuration, and the seeds to average over. M, H, T, and eta carry
/// no defaults; specs must state them.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub problem: ProblemSource,
    pub algorithms: Vec<AlgorithmKind>,
    pub h: usize,
    pub t: usize,
    pub eta: f64,
    #[serde(default = "default_alpha_g")]
    pub alpha_g: f64,
    pub sampling_mode: SamplingMode,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub worst_case_init: bool,
    /// Fleet sizes for `sweep-agents`.
    #[serde(default)]
    pub m_list: Vec<usize>,
    #[serde(default)]
    pub acceptance: AcceptanceThresholds,
}

impl ExperimentSpec {
    pub fn load(path: &Path) -> Result<ExperimentSpec> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let spec: ExperimentSpec = serde_json::from_str(&text)
            .map_err(|e| Error::Config { path: path.display().to_string(), message: e.to_string() })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(Error::InvalidInput("spec lists no algorithms".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidInput("spec lists no seeds".into()));
        }
        Ok(())
    }

    fn config(&self, m: usize, master_seed: u64, fresh_anchor: bool) -> FederatedConfig {
        FederatedConfig {
            m,
            h: self.h,
            t: self.t,
            eta: self.eta,
            alpha_g: self.alpha_g,
            sampling_mode: self.sampling_mode,
            schedule: self.schedule,
            master_seed,
            fresh_anchor,
            worst_case_init: self.worst_case_init,
        }
    }
}

/// Options shared by the trace-producing subcommands.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Seed-count or explicit list overriding the spec's seeds.
    pub seeds_override: Option<Vec<u64>>,
    pub workers: Option<usize>,
    pub fresh_anchor: bool,
    pub plot: bool,
}

/// One named threshold comparison inside a summary.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Floors table entry of an agent sweep.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepPoint {
    pub m: usize,
    pub floor: f64,
    pub stderr: f64,
}

/// Slope section of a sweep summary.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepSummary {
    pub points: Vec<SweepPoint>,
    pub slope: f64,
    /// alpha * L^2 / mu, the variance-domination diagnostic.
    pub alpha_ratio: f64,
}

/// What a trace-producing subcommand leaves behind besides files.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub command: String,
    pub family: Family,
    pub m: usize,
    pub seeds: Vec<u64>,
    pub resolved_eta: f64,
    /// Measured bound constants for the configured fleet.
    pub ingredients: TheoremIngredients,
    /// Advisory step size; never overrides the configured one.
    pub eta_suggest: f64,
    /// Trailing-window floors keyed by algorithm name.
    pub floors: BTreeMap<String, FloorEstimate>,
    /// Across-seed mean of final d_t keyed by algorithm name.
    pub final_d: BTreeMap<String, f64>,
    pub sweep: Option<SweepSummary>,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

/// Side-by-side closed form and simulation for the bias-limit check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Prop1Output {
    pub report: Prop1Report,
    pub simulated_limit_point: Vec<f64>,
    pub rounds_used: usize,
    pub relative_error: f64,
}

/// Per-agent chain diagnostics written by `chain-info`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainInfoRecord {
    pub agent: usize,
    pub stationary: Vec<f64>,
    pub mixing: MixingReport,
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config { path: path.display().to_string(), message: e.to_string() })?;
    write_file(path, &(text + "\n"))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))
}

/// Writes one trace: header `round,d_t,max_drift,theta_norm`, one row per
/// round, floats with 17 significant digits, LF endings.
pub fn write_trace_csv(trace: &RunTrace, path: &Path) -> Result<()> {
    if trace.rows.is_empty() {
        return Err(Error::EmptyInput("trace has no rows".into()));
    }
    let mut out = String::from("round,d_t,max_drift,theta_norm\n");
    for row in &trace.rows {
        out.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e}\n",
            row.t, row.d_t, row.max_drift, row.theta_bar_norm
        ));
    }
    write_file(path, &out)
}

/// Writes the across-seed mean trace in the same schema.
pub fn write_mean_trace_csv(traces: &[RunTrace], path: &Path) -> Result<()> {
    let Some(first) = traces.first() else {
        return Err(Error::EmptyInput("no traces to average".into()));
    };
    let len = first.rows.len();
    if traces.iter().any(|t| t.rows.len() != len) {
        return Err(Error::InvalidInput("traces must share a length".into()));
    }
    let n = traces.len() as f64;
    let mut out = String::from("round,d_t,max_drift,theta_norm\n");
    for i in 0..len {
        let d = traces.iter().map(|t| t.rows[i].d_t).sum::<f64>() / n;
        let drift = traces.iter().map(|t| t.rows[i].max_drift).sum::<f64>() / n;
        let norm = traces.iter().map(|t| t.rows[i].theta_bar_norm).sum::<f64>() / n;
        out.push_str(&format!("{},{:.16e},{:.16e},{:.16e}\n", first.rows[i].t, d, drift, norm));
    }
    write_file(path, &out)
}

fn read_trace_csv(path: &Path) -> Result<Vec<(usize, f64)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 || line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let (Some(round), Some(d)) = (fields.next(), fields.next()) else {
            return Err(Error::Config {
                path: path.display().to_string(),
                message: format!("line {} has too few columns", lineno + 1),
            });
        };
        let parse_err = |what: &str| Error::Config {
            path: path.display().to_string(),
            message: format!("line {}: bad {what}", lineno + 1),
        };
        points.push((
            round.parse::<usize>().map_err(|_| parse_err("round"))?,
            d.parse::<f64>().map_err(|_| parse_err("d_t"))?,
        ));
    }
    Ok(points)
}

const PLOT_COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

/// Renders d_t curves from trace CSVs as a self-contained SVG with a
/// log10 y-axis; one polyline per file, legend from file stems.
/// Nonpositive d_t values cannot appear on a log axis and are skipped.
pub fn emit_plot_svg(csv_paths: &[PathBuf], path: &Path) -> Result<()> {
    if csv_paths.is_empty() {
        return Err(Error::EmptyInput("no trace files to plot".into()));
    }
    let mut series = Vec::new();
    for csv in csv_paths {
        let stem = csv.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let points: Vec<(f64, f64)> = read_trace_csv(csv)?
            .into_iter()
            .filter(|&(_, d)| d > 0.0)
            .map(|(t, d)| (t as f64, d.log10()))
            .collect();
        series.push((stem, points));
    }
    if series.iter().all(|(_, pts)| pts.is_empty()) {
        return Err(Error::InvalidInput("no positive d_t values to plot".into()));
    }
    let (width, height) = (860.0, 520.0);
    let (left, right, top, bottom) = (70.0, 190.0, 30.0, 50.0);
    let (x0, x1, y0, y1) = (left, width - right, height - bottom, top);
    let xs = series.iter().flat_map(|(_, pts)| pts.iter().map(|p| p.0));
    let ys = series.iter().flat_map(|(_, pts)| pts.iter().map(|p| p.1));
    let (x_min, x_max) = bounds(xs);
    let (y_min, y_max) = bounds(ys);
    let x_span = (x_max - x_min).max(1e-12);
    let y_span = (y_max - y_min).max(1e-12);
    let to_x = |x: f64| x0 + (x - x_min) / x_span * (x1 - x0);
    let to_y = |y: f64| y0 + (y - y_min) / y_span * (y1 - y0);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n\
         <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>\n"
    ));
    for k in 0..=4 {
        let frac = k as f64 / 4.0;
        let x_val = x_min + frac * x_span;
        let px = to_x(x_val);
        svg.push_str(&format!(
            "<line x1=\"{px}\" y1=\"{y0}\" x2=\"{px}\" y2=\"{}\" stroke=\"black\"/>\n\
             <text x=\"{px}\" y=\"{}\" text-anchor=\"middle\">{:.0}</text>\n",
            y0 + 5.0,
            y0 + 20.0,
            x_val
        ));
        let y_val = y_min + frac * y_span;
        let py = to_y(y_val);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{py}\" x2=\"{x0}\" y2=\"{py}\" stroke=\"black\"/>\n\
             <text x=\"{}\" y=\"{}\" text-anchor=\"end\">1e{:.1}</text>\n",
            x0 - 5.0,
            x0 - 8.0,
            py + 4.0,
            y_val
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">round</text>\n",
        (x0 + x1) / 2.0,
        height - 10.0
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">d_t</text>\n",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    ));
    for (idx, (stem, points)) in series.iter().enumerate() {
        let color = PLOT_COLORS[idx % PLOT_COLORS.len()];
        if !points.is_empty() {
            let coords: Vec<String> =
                points.iter().map(|&(x, y)| format!("{:.2},{:.2}", to_x(x), to_y(y))).collect();
            svg.push_str(&format!(
                "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
                coords.join(" ")
            ));
        }
        let ly = top + 16.0 + idx as f64 * 18.0;
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>\n\
             <text x=\"{}\" y=\"{}\">{stem}</text>\n",
            x1 + 10.0,
            x1 + 34.0,
            x1 + 40.0,
            ly + 4.0
        ));
    }
    svg.push_str("</svg>\n");
    write_file(path, &svg)
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Parses `--seeds`: a bare count n means seeds 0..n, a comma list is
/// taken verbatim.
pub fn parse_seeds(arg: &str) -> Result<Vec<u64>> {
    let bad = |msg: String| Error::InvalidInput(msg);
    if arg.contains(',') {
        let seeds: Vec<u64> = arg
            .split(',')
            .map(|s| s.trim().parse::<u64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(format!("seed list {arg:?}: {e}")))?;
        if seeds.is_empty() {
            return Err(bad("empty seed list".into()));
        }
        Ok(seeds)
    } else {
        let n: u64 = arg.trim().parse().map_err(|e| bad(format!("seed count {arg:?}: {e}")))?;
        if n == 0 {
            return Err(bad("seed count must be positive".into()));
        }
        Ok((0..n).collect())
    }
}

fn build_pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let from_env = std::env::var("FEDSA_WORKERS").ok().and_then(|v| v.parse::<usize>().ok());
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers.or(from_env) {
        builder = builder.num_threads(n.max(1));
    }
    builder.build().map_err(|e| Error::InvalidInput(format!("worker pool: {e}")))
}

fn effective_seeds(spec: &ExperimentSpec, options: &RunOptions) -> Vec<u64> {
    options.seeds_override.clone().unwrap_or_else(|| spec.seeds.clone())
}

/// Executes (fleet, algorithm) over all seeds in the pool; traces come
/// back in seed order regardless of scheduling.
fn run_seeds(
    source: &ProblemSource,
    spec: &ExperimentSpec,
    algorithm: AlgorithmKind,
    seeds: &[u64],
    fresh_anchor: bool,
    pool: &rayon::ThreadPool,
) -> Result<Vec<RunTrace>> {
    use rayon::prelude::*;
    let m = source.num_agents()?;
    pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let fleet = source.fleet()?;
                run(fleet, &spec.config(m, seed, fresh_anchor), algorithm)
            })
            .collect()
    })
}

fn write_algorithm_outputs(
    out: &Path,
    algorithm: AlgorithmKind,
    seeds: &[u64],
    traces: &[RunTrace],
    label: Option<&str>,
) -> Result<PathBuf> {
    let prefix = match label {
        Some(label) => format!("{algorithm}_{label}"),
        None => algorithm.to_string(),
    };
    for (seed, trace) in seeds.iter().zip(traces) {
        write_trace_csv(trace, &out.join(format!("{prefix}_seed{seed}.csv")))?;
    }
    let mean_path = out.join(format!("{prefix}_mean.csv"));
    write_mean_trace_csv(traces, &mean_path)?;
    Ok(mean_path)
}

fn mean_final_d(traces: &[RunTrace]) -> f64 {
    traces.iter().map(RunTrace::final_d).sum::<f64>() / traces.len().max(1) as f64
}

fn base_summary(
    command: &str,
    spec: &ExperimentSpec,
    fleet: &ProblemFleet,
    seeds: &[u64],
) -> Result<SummaryRecord> {
    let config = spec.config(fleet.num_agents(), seeds[0], false);
    let ingredients = theorem_ingredients(fleet, &config)?;
    Ok(SummaryRecord {
        command: command.to_string(),
        family: fleet.family,
        m: fleet.num_agents(),
        seeds: seeds.to_vec(),
        resolved_eta: config.resolved_eta()?,
        ingredients,
        eta_suggest: eta_suggest(&ingredients, spec.h),
        floors: BTreeMap::new(),
        final_d: BTreeMap::new(),
        sweep: None,
        checks: Vec::new(),
        passed: true,
    })
}

fn finish_summary(mut summary: SummaryRecord, out: &Path) -> Result<SummaryRecord> {
    summary.passed = summary.checks.iter().all(|c| c.passed);
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

/// `run`: one algorithm over all seeds; per-seed CSVs plus a mean CSV.
pub fn cli_run(spec: &ExperimentSpec, out: &Path, options: &RunOptions) -> Result<SummaryRecord> {
    spec.validate()?;
    if spec.algorithms.len() != 1 {
        return Err(Error::InvalidInput(format!(
            "`run` takes exactly one algorithm, spec lists {}; use `compare` for both",
            spec.algorithms.len()
        )));
    }
    let algorithm = spec.algorithms[0];
    ensure_dir(out)?;
    let seeds = effective_seeds(spec, options);
    let pool = build_pool(options.workers)?;
    let traces = run_seeds(&spec.problem, spec, algorithm, &seeds, options.fresh_anchor, &pool)?;
    let mean_path = write_algorithm_outputs(out, algorithm, &seeds, &traces, None)?;
    if options.plot {
        emit_plot_svg(std::slice::from_ref(&mean_path), &out.join("trace.svg"))?;
    }
    let mut summary = base_summary("run", spec, &spec.problem.fleet()?, &seeds)?;
    summary.floors.insert(algorithm.to_string(), error_floor(&traces, DEFAULT_FLOOR_WINDOW)?);
    let final_d = mean_final_d(&traces);
    summary.final_d.insert(algorithm.to_string(), final_d);
    if let Some(limit) = spec.acceptance.max_final_d {
        summary.checks.push(CheckResult {
            name: "max_final_d".into(),
            passed: final_d <= limit,
            detail: format!("mean final d_t {final_d:.3e} vs limit {limit:.3e}"),
        });
    }
    finish_summary(summary, out)
}

/// `compare`: both algorithms on the identical instance and seeds.
pub fn cli_compare(spec: &ExperimentSpec, out: &Path, options: &RunOptions) -> Result<SummaryRecord> {
    spec.validate()?;
    ensure_dir(out)?;
    let seeds = effective_seeds(spec, options);
    let pool = build_pool(options.workers)?;
    let mut summary = base_summary("compare", spec, &spec.problem.fleet()?, &seeds)?;
    let mut mean_paths = Vec::new();
    let mut by_algorithm = Vec::new();
    for algorithm in [AlgorithmKind::FedHsa, AlgorithmKind::LocalSa] {
        let traces =
            run_seeds(&spec.problem, spec, algorithm, &seeds, options.fresh_anchor, &pool)?;
        mean_paths.push(write_algorithm_outputs(out, algorithm, &seeds, &traces, None)?);
        let floor = error_floor(&traces, DEFAULT_FLOOR_WINDOW)?;
        by_algorithm.push(floor);
        summary.floors.insert(algorithm.to_string(), floor);
        summary.final_d.insert(algorithm.to_string(), mean_final_d(&traces));
    }
    if options.plot {
        emit_plot_svg(&mean_paths, &out.join("compare.svg"))?;
    }
    let (fed, loc) = (by_algorithm[0], by_algorithm[1]);
    if let Some(ratio) = spec.acceptance.min_floor_ratio {
        let measured = loc.floor / fed.floor;
        summary.checks.push(CheckResult {
            name: "min_floor_ratio".into(),
            passed: measured.is_finite() && measured >= ratio,
            detail: format!("floor ratio local/corrected {measured:.3e} vs minimum {ratio:.3e}"),
        });
    }
    if let Some(k) = spec.acceptance.floor_separation_stderrs {
        let gap = loc.floor - fed.floor;
        let noise = (fed.stderr.powi(2) + loc.stderr.powi(2)).sqrt();
        summary.checks.push(CheckResult {
            name: "floor_separation_stderrs".into(),
            passed: gap >= k * noise,
            detail: format!("floor gap {gap:.3e} vs {k} combined stderrs {:.3e}", k * noise),
        });
    }
    finish_summary(summary, out)
}

/// `sweep-agents`: repeat one experiment per fleet size, regenerating
/// fleets so smaller ones are agent prefixes of larger ones; writes the
/// floors table and the log-log slope.
pub fn cli_sweep_agents(
    spec: &ExperimentSpec,
    m_list: &[usize],
    out: &Path,
    options: &RunOptions,
) -> Result<SummaryRecord> {
    spec.validate()?;
    if spec.algorithms.len() != 1 {
        return Err(Error::InvalidInput(format!(
            "`sweep-agents` takes exactly one algorithm, spec lists {}",
            spec.algorithms.len()
        )));
    }
    if m_list.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "agent sweep needs >= 3 fleet sizes, got {}",
            m_list.len()
        )));
    }
    let algorithm = spec.algorithms[0];
    ensure_dir(out)?;
    let seeds = effective_seeds(spec, options);
    let pool = build_pool(options.workers)?;
    let mut points = Vec::new();
    let mut mean_paths = Vec::new();
    for &m in m_list {
        let source = spec.problem.with_num_agents(m)?;
        let traces = run_seeds(&source, spec, algorithm, &seeds, options.fresh_anchor, &pool)?;
        let label = format!("m{m}");
        mean_paths.push(write_algorithm_outputs(out, algorithm, &seeds, &traces, Some(&label))?);
        let floor = error_floor(&traces, DEFAULT_FLOOR_WINDOW)?;
        points.push(SweepPoint { m, floor: floor.floor, stderr: floor.stderr });
    }
    let mut floors_csv = String::from("m,floor,stderr\n");
    for p in &points {
        floors_csv.push_str(&format!("{},{:.16e},{:.16e}\n", p.m, p.floor, p.stderr));
    }
    write_file(&out.join("floors.csv"), &floors_csv)?;
    if options.plot {
        emit_plot_svg(&mean_paths, &out.join("sweep.svg"))?;
    }

    let slope = speedup_slope(
        &points.iter().map(|p| (p.m, p.floor)).collect::<Vec<_>>(),
    )?;
    // Rebuild at the largest size for constants: the sweep varies M only.
    let largest = spec.problem.with_num_agents(*m_list.iter().max().expect("nonempty"))?;
    let mut summary = base_summary("sweep-agents", spec, &largest.fleet()?, &seeds)?;
    let alpha_ratio = summary.ingredients.alpha * summary.ingredients.l_hat.powi(2)
        / summary.ingredients.mu_hat;
    summary.sweep = Some(SweepSummary { points, slope, alpha_ratio });
    let ratio_limit = spec.acceptance.max_alpha_ratio.unwrap_or(SWEEP_ALPHA_RATIO_LIMIT);
    summary.checks.push(CheckResult {
        name: "alpha_ratio".into(),
        passed: alpha_ratio <= ratio_limit,
        detail: format!("alpha L^2/mu = {alpha_ratio:.3e} vs ceiling {ratio_limit:.3e}"),
    });
    if let Some((lo, hi)) = spec.acceptance.slope_range {
        summary.checks.push(CheckResult {
            name: "slope_range".into(),
            passed: slope >= lo && slope <= hi,
            detail: format!("slope {slope:.4} vs window [{lo}, {hi}]"),
        });
    }
    finish_summary(summary, out)
}

/// `prop1`: the closed-form limit next to a noiseless H=2 simulation of
/// plain averaging, run until d_t stops moving (or the spec's T rounds).
pub fn cli_prop1(spec: &ExperimentSpec, out: &Path) -> Result<Prop1Output> {
    ensure_dir(out)?;
    let fleet = spec.problem.fleet()?;
    let report = prop1_limit(&fleet, spec.eta)?;
    let config = FederatedConfig {
        m: fleet.num_agents(),
        h: 2,
        t: spec.t,
        eta: spec.eta,
        alpha_g: 1.0,
        sampling_mode: SamplingMode::Noiseless,
        schedule: Schedule::Constant,
        master_seed: spec.seeds.first().copied().unwrap_or(0),
        fresh_anchor: false,
        worst_case_init: false,
    };
    let mut runner = crate::algorithms::Runner::new(fleet, config, AlgorithmKind::LocalSa)?;
    let mut prev_theta = runner.theta_bar().to_vec();
    let mut rounds_used = 0;
    for _ in 0..spec.t {
        runner.step()?;
        rounds_used += 1;
        // Per-round movement decays geometrically all the way to the limit,
        // unlike d_t, which can pass through flat extrema while spiraling.
        let theta = runner.theta_bar();
        let moved = theta
            .iter()
            .zip(&prev_theta)
            .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
        let scale = theta.iter().fold(1.0f64, |acc, x| acc.max(x.abs()));
        if moved <= 1e-15 * scale {
            break;
        }
        prev_theta = theta.to_vec();
    }
    let simulated = runner.theta_bar().to_vec();
    let scale = norm2(&report.predicted_limit_point).max(f64::MIN_POSITIVE);
    let relative_error = norm2(&vec_sub(&simulated, &report.predicted_limit_point)) / scale;
    let output = Prop1Output {
        report,
        simulated_limit_point: simulated,
        rounds_used,
        relative_error,
    };
    write_json(&out.join("prop1.json"), &output)?;
    Ok(output)
}

/// `gen`: materialize generator params into an instance file.
pub fn cli_gen(params: &GeneratorParams, out: &Path) -> Result<PathBuf> {
    ensure_dir(out)?;
    let path = out.join("instance.json");
    params.instance()?.save(&path)?;
    Ok(path)
}

pub fn load_generator_params(path: &Path) -> Result<GeneratorParams> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Config { path: path.display().to_string(), message: e.to_string() })
}

/// `chain-info`: stationary distribution plus mixing diagnostics for each
/// agent's finite chain.
pub fn cli_chain_info(instance_path: &Path, out: &Path) -> Result<Vec<ChainInfoRecord>> {
    let instance = InstanceFile::load(instance_path)?;
    ensure_dir(out)?;
    let mut records = Vec::new();
    for (idx, agent) in instance.agents.iter().enumerate() {
        let chain = match agent {
            Agent::Mrp(a) => a.chain(),
            Agent::FiniteSum(a) => a.index_chain(),
            Agent::Quadratic(_) => {
                return Err(Error::InvalidInput(
                    "chain-info needs finite chains; this instance has Gauss-Markov noise".into(),
                ))
            }
        };
        records.push(ChainInfoRecord {
            agent: idx,
            stationary: chain.stationary().to_vec(),
            mixing: mixing_time(chain, CHAIN_INFO_EPSILON)?,
        });
    }
    write_json(&out.join("chain_info.json"), &records)?;
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::TraceRow;
    use crate::operators::QuadraticParams;
    use tempfile::tempdir;

    fn quad_params(m: usize) -> GeneratorParams {
        GeneratorParams::Quadratic(QuadraticParams {
            m,
            d: 2,
            hetero: 0.6,
            cond: 4.0,
            q_spectral: 0.5,
            sigma_eps: 0.2,
            seed: 7,
        })
    }

    fn tiny_spec(algorithms: Vec<AlgorithmKind>, mode: SamplingMode) -> ExperimentSpec {
        ExperimentSpec {
            problem: ProblemSource::Inline(quad_params(2)),
            algorithms,
            h: 2,
            t: 6,
            eta: 0.05,
            alpha_g: 1.0,
            sampling_mode: mode,
            schedule: Schedule::Constant,
            seeds: vec![0, 1],
            worst_case_init: false,
            m_list: Vec::new(),
            acceptance: AcceptanceThresholds::default(),
        }
    }

    fn toy_trace(ds: &[f64]) -> RunTrace {
        RunTrace {
            algorithm: AlgorithmKind::FedHsa,
            config: tiny_spec(vec![AlgorithmKind::FedHsa], SamplingMode::Noiseless)
                .config(2, 0, false),
            resolved_eta: 0.05,
            theta_star: vec![0.0, 0.0],
            rows: ds
                .iter()
                .enumerate()
                .map(|(t, &d_t)| TraceRow { t, d_t, max_drift: 0.5 * d_t, theta_bar_norm: d_t + 1.0 })
                .collect(),
            final_theta: vec![0.0, 0.0],
            samples_per_agent: 0,
            wall_time_secs: 0.0,
        }
    }

    #[test]
    fn trace_csv_has_header_one_row_per_round_and_round_trips_bitwise() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let trace = toy_trace(&[4.0, 1.0, 0.25, 0.0625]);
        write_trace_csv(&trace, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "round,d_t,max_drift,theta_norm");
        assert_eq!(lines.len(), 5, "header plus 4 rows");
        assert!(!text.contains('\r'), "LF endings only");
        let parsed = read_trace_csv(&path).unwrap();
        for (row, (t, d)) in trace.rows.iter().zip(parsed) {
            assert_eq!(row.t, t);
            assert_eq!(row.d_t.to_bits(), d.to_bits(), "17 significant digits round-trip");
        }
    }

    #[test]
    fn mean_trace_averages_every_column() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("mean.csv");
        write_mean_trace_csv(&[toy_trace(&[1.0, 3.0]), toy_trace(&[3.0, 5.0])], &path).unwrap();
        let points = read_trace_csv(&path).unwrap();
        assert_eq!(points, vec![(0, 2.0), (1, 4.0)]);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("round,d_t,max_drift,theta_norm\n"), "identical schema");
        assert!(write_mean_trace_csv(&[], &path).is_err());
        assert!(write_mean_trace_csv(&[toy_trace(&[1.0]), toy_trace(&[1.0, 2.0])], &path).is_err());
    }

    #[test]
    fn plot_contains_one_polyline_per_trace_and_a_legend() {
        let dir = tempdir().unwrap();
        let a = dir.path().join("corrected.csv");
        let b = dir.path().join("plain.csv");
        write_trace_csv(&toy_trace(&[1.0, 0.1, 0.01]), &a).unwrap();
        write_trace_csv(&toy_trace(&[1.0, 0.5, 0.25]), &b).unwrap();
        let svg_path = dir.path().join("plot.svg");
        emit_plot_svg(&[a, b], &svg_path).unwrap();
        let svg = fs::read_to_string(&svg_path).unwrap();
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains(">corrected<") && svg.contains(">plain<"), "legend from stems");
    }

    #[test]
    fn plot_refuses_empty_input_without_writing() {
        let dir = tempdir().unwrap();
        let svg_path = dir.path().join("plot.svg");
        assert!(emit_plot_svg(&[], &svg_path).is_err());
        assert!(!svg_path.exists());
    }

    #[test]
    fn seed_argument_accepts_count_or_list() {
        assert_eq!(parse_seeds("5").unwrap(), vec![0, 1, 2, 3, 4]);
        assert_eq!(parse_seeds("3,9,11").unwrap(), vec![3, 9, 11]);
        assert_eq!(parse_seeds(" 2 , 4 ").unwrap(), vec![2, 4]);
        assert!(parse_seeds("0").is_err());
        assert!(parse_seeds("a,b").is_err());
        assert!(parse_seeds("-3").is_err());
    }

    #[test]
    fn spec_files_parse_inline_problems_and_reject_missing_step_size() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("spec.json");
        fs::write(
            &path,
            r#"{
                "problem": {"family": "quadratic", "m": 2, "d": 2, "hetero": 0.5,
                            "cond": 4.0, "q_spectral": 0.5, "sigma_eps": 0.2, "seed": 7},
                "algorithms": ["fedhsa"],
                "h": 2, "t": 5, "eta": 0.05,
                "sampling_mode": "noiseless"
            }"#,
        )
        .unwrap();
        let spec = ExperimentSpec::load(&path).unwrap();
        assert_eq!(spec.seeds, vec![0, 1, 2, 3, 4], "default five seeds");
        assert_eq!(spec.alpha_g, 1.0);
        assert!(matches!(spec.problem, ProblemSource::Inline(_)));

        fs::write(
            &path,
            r#"{
                "problem": {"family": "quadratic", "m": 2, "d": 2, "hetero": 0.5,
                            "cond": 4.0, "q_spectral": 0.5, "sigma_eps": 0.2, "seed": 7},
                "algorithms": ["fedhsa"],
                "h": 2, "t": 5,
                "sampling_mode": "noiseless"
            }"#,
        )
        .unwrap();
        let err = ExperimentSpec::load(&path).unwrap_err();
        assert!(matches!(&err, Error::Config { message, .. } if message.contains("eta")), "{err}");
    }

    #[test]
    fn run_writes_seed_and_mean_csvs_plus_summary() {
        let dir = tempdir().unwrap();
        let spec = tiny_spec(vec![AlgorithmKind::FedHsa], SamplingMode::Markov);
        let options = RunOptions { plot: true, ..RunOptions::default() };
        let summary = cli_run(&spec, dir.path(), &options).unwrap();
        for name in ["fedhsa_seed0.csv", "fedhsa_seed1.csv", "fedhsa_mean.csv", "summary.json", "trace.svg"] {
            assert!(dir.path().join(name).exists(), "{name} missing");
        }
        assert!(summary.passed, "no thresholds declared");
        assert_eq!(summary.m, 2);
        assert!(summary.floors.contains_key("fedhsa"));
        assert!(summary.eta_suggest > 0.0);
        let text = fs::read_to_string(dir.path().join("summary.json")).unwrap();
        let parsed: SummaryRecord = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed.seeds, vec![0, 1]);
    }

    #[test]
    fn run_rejects_multi_algorithm_specs() {
        let dir = tempdir().unwrap();
        let spec = tiny_spec(
            vec![AlgorithmKind::FedHsa, AlgorithmKind::LocalSa],
            SamplingMode::Noiseless,
        );
        assert!(cli_run(&spec, dir.path(), &RunOptions::default()).is_err());
    }

    #[test]
    fn compare_writes_both_algorithms_and_applies_thresholds() {
        let dir = tempdir().unwrap();
        let mut spec = tiny_spec(vec![AlgorithmKind::FedHsa], SamplingMode::Markov);
        spec.t = 40;
        spec.acceptance.min_floor_ratio = Some(1e12);
        let summary = cli_compare(&spec, dir.path(), &RunOptions::default()).unwrap();
        for name in ["fedhsa_mean.csv", "local_sa_mean.csv", "summary.json"] {
            assert!(dir.path().join(name).exists(), "{name} missing");
        }
        assert_eq!(summary.floors.len(), 2);
        assert!(!summary.passed, "absurd ratio threshold must fail");
        assert_eq!(summary.checks.len(), 1);
    }

    #[test]
    fn sweep_produces_floors_table_and_slope() {
        let dir = tempdir().unwrap();
        let mut spec = tiny_spec(vec![AlgorithmKind::FedHsa], SamplingMode::Markov);
        spec.t = 30;
        spec.eta = 0.01;
        let summary =
            cli_sweep_agents(&spec, &[1, 2, 4], dir.path(), &RunOptions::default()).unwrap();
        let sweep = summary.sweep.expect("sweep section");
        assert_eq!(sweep.points.len(), 3);
        assert!(sweep.slope.is_finite());
        let floors = fs::read_to_string(dir.path().join("floors.csv")).unwrap();
        assert_eq!(floors.lines().count(), 4);
        assert!(floors.starts_with("m,floor,stderr\n"));
        assert!(summary.checks.iter().any(|c| c.name == "alpha_ratio"));
        let err = cli_sweep_agents(&spec, &[1, 2], dir.path(), &RunOptions::default());
        assert!(err.is_err(), "two sizes are not enough");
    }

    #[test]
    fn prop1_simulation_matches_the_closed_form() {
        let dir = tempdir().unwrap();
        let mut spec = tiny_spec(vec![AlgorithmKind::LocalSa], SamplingMode::Noiseless);
        spec.t = 3000;
        spec.eta = 0.05;
        let output = cli_prop1(&spec, dir.path()).unwrap();
        assert!(output.relative_error <= 1e-8, "rel err {}", output.relative_error);
        assert!(output.rounds_used < 3000, "early stop once d_t settles");
        assert!(dir.path().join("prop1.json").exists());
    }

    #[test]
    fn gen_then_chain_info_round_trips_an_mrp_instance() {
        let dir = tempdir().unwrap();
        let params = GeneratorParams::Mrp(crate::operators::MrpParams {
            m: 2,
            s: 4,
            d: 2,
            gamma_lo: 0.3,
            gamma_hi: 0.7,
            hetero: 0.5,
            seed: 3,
        });
        let instance_path = cli_gen(&params, dir.path()).unwrap();
        let spec = ExperimentSpec {
            problem: ProblemSource::Instance { instance: instance_path.clone() },
            ..tiny_spec(vec![AlgorithmKind::FedHsa], SamplingMode::Markov)
        };
        let summary = cli_run(&spec, &dir.path().join("run"), &RunOptions::default()).unwrap();
        assert_eq!(summary.family, Family::Mrp);
        let records = cli_chain_info(&instance_path, &dir.path().join("info")).unwrap();
        assert_eq!(records.len(), 2);
        for rec in &records {
            assert_eq!(rec.stationary.len(), 4);
            assert!((rec.stationary.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(rec.mixing.rho_hat < 1.0);
        }
        assert!(dir.path().join("info/chain_info.json").exists());
    }

    #[test]
    fn chain_info_rejects_gaussian_noise_instances() {
        let dir = tempdir().unwrap();
        let path = cli_gen(&quad_params(2), dir.path()).unwrap();
        assert!(cli_chain_info(&path, &dir.path().join("info")).is_err());
    }

    #[test]
    fn worker_count_does_not_change_any_byte_of_output() {
        let spec = {
            let mut s = tiny_spec(vec![AlgorithmKind::FedHsa], SamplingMode::Markov);
            s.t = 15;
            s.seeds = vec![0, 1, 2, 3];
            s
        };
        let dir1 = tempdir().unwrap();
        let dir2 = tempdir().unwrap();
        cli_run(&spec, dir1.path(), &RunOptions { workers: Some(1), ..RunOptions::default() })
            .unwrap();
        cli_run(&spec, dir2.path(), &RunOptions { workers: Some(4), ..RunOptions::default() })
            .unwrap();
        for name in ["fedhsa_seed0.csv", "fedhsa_seed2.csv", "fedhsa_mean.csv"] {
            let a = fs::read(dir1.path().join(name)).unwrap();
            let b = fs::read(dir2.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between worker counts");
        }
    }
}
