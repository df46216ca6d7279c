//! Instance registry, batch experiments and CSV output.
//!
//! Batches run in parallel across seeds on a bounded rayon pool (capped by
//! `FRAPPE_WORKERS`); results are always reported in run order, so output
//! files are reproducible regardless of scheduling.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cone::{ConeSpec, PreferenceCone};
use crate::error::{Error, Result};
use crate::frappe::{RunConfig, RunResult, Runner, Sampler};
use crate::model::{BanditInstance, DEFAULT_M_MAX};
use crate::objective::{ThresholdMode, ZMode};
use crate::pareto::PairMode;

/// Cov-Boost booster arms, in table order.
pub const COVBOOST_ARMS: [&str; 20] = [
    "Prime BNT/BNT + ChAd",
    "Prime BNT/BNT + NVX",
    "Prime BNT/BNT + NVX Half",
    "Prime BNT/BNT + BNT",
    "Prime BNT/BNT + BNT Half",
    "Prime BNT/BNT + VLA",
    "Prime BNT/BNT + VLA Half",
    "Prime BNT/BNT + Ad26",
    "Prime BNT/BNT + m1273",
    "Prime BNT/BNT + CVn",
    "Prime ChAd/ChAd + ChAd",
    "Prime ChAd/ChAd + NVX",
    "Prime ChAd/ChAd + NVX Half",
    "Prime ChAd/ChAd + BNT",
    "Prime ChAd/ChAd + BNT Half",
    "Prime ChAd/ChAd + VLA",
    "Prime ChAd/ChAd + VLA Half",
    "Prime ChAd/ChAd + Ad26",
    "Prime ChAd/ChAd + m1273",
    "Prime ChAd/ChAd + CVn",
];

/// Log immune responses (anti-spike IgG, NT50, cellular) per arm.
pub const COVBOOST_MEANS: [[f64; 3]; 20] = [
    [9.50, 6.86, 4.56],
    [9.29, 6.64, 4.04],
    [9.05, 6.41, 3.56],
    [10.21, 7.49, 4.43],
    [10.05, 7.20, 4.36],
    [8.34, 5.67, 3.51],
    [8.22, 5.46, 3.64],
    [9.75, 7.27, 4.71],
    [10.43, 7.61, 4.72],
    [8.94, 6.19, 3.84],
    [7.81, 5.26, 3.97],
    [8.85, 6.59, 4.73],
    [8.44, 6.15, 4.59],
    [9.93, 7.39, 4.75],
    [8.71, 7.20, 4.91],
    [7.51, 5.31, 3.96],
    [7.27, 4.99, 4.02],
    [8.62, 6.33, 4.66],
    [10.35, 7.77, 5.00],
    [8.29, 5.92, 3.87],
];

/// Pooled variances of the three responses.
pub const COVBOOST_VARIANCES: [f64; 3] = [0.70, 0.83, 1.54];

/// Correlations swept by the `rho-sweep` experiment.
pub const RHO_SWEEP: [f64; 5] = [-0.9, -0.5, 0.0, 0.5, 0.9];

const GAUSSIAN_5X2: &str = include_str!("../data/gaussian_5x2.json");

/// On-disk instance description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub name: String,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub means: Vec<Vec<f64>>,
    pub covariance: Vec<Vec<f64>>,
    #[serde(default = "default_m_max")]
    pub m_max: f64,
    #[serde(default = "default_cone")]
    pub cone: ConeSpec,
}

fn default_m_max() -> f64 {
    DEFAULT_M_MAX
}

fn default_cone() -> ConeSpec {
    ConeSpec::Orthant
}

fn load_error(source: &str, field: impl Into<String>, message: impl std::fmt::Display) -> Error {
    Error::Load {
        source_name: source.to_string(),
        field: field.into(),
        message: message.to_string(),
    }
}

impl InstanceFile {
    pub fn from_instance(instance: &BanditInstance, cone: ConeSpec) -> Self {
        let rows = |m: &DMatrix<f64>| (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect();
        Self {
            name: instance.name().to_string(),
            k: instance.arms(),
            l: instance.objectives(),
            means: rows(instance.means()),
            covariance: rows(instance.covariance()),
            m_max: instance.m_max(),
            cone,
        }
    }

    pub fn parse(source: &str, text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| load_error(source, format!("line {} column {}", e.line(), e.column()), e))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance files always serialize")
    }

    /// Validates shapes and builds the instance and its cone.
    pub fn build(&self, source: &str) -> Result<(BanditInstance, PreferenceCone)> {
        if self.means.len() != self.k {
            return Err(load_error(source, "means", format!("{} rows, K = {}", self.means.len(), self.k)));
        }
        for (a, row) in self.means.iter().enumerate() {
            if row.len() != self.l {
                return Err(load_error(source, format!("means[{a}]"), format!("{} entries, L = {}", row.len(), self.l)));
            }
        }
        if self.covariance.len() != self.l {
            return Err(load_error(source, "covariance", format!("{} rows, L = {}", self.covariance.len(), self.l)));
        }
        for (r, row) in self.covariance.iter().enumerate() {
            if row.len() != self.l {
                return Err(load_error(source, format!("covariance[{r}]"), format!("{} entries, L = {}", row.len(), self.l)));
            }
        }
        let means = DMatrix::from_fn(self.k, self.l, |r, c| self.means[r][c]);
        let cov = DMatrix::from_fn(self.l, self.l, |r, c| self.covariance[r][c]);
        let instance = BanditInstance::new(self.name.clone(), means, cov, self.m_max)
            .map_err(|e| load_error(source, "instance", e))?;
        let cone = self.cone.build(self.l).map_err(|e| load_error(source, "cone", e))?;
        Ok((instance, cone))
    }
}

/// The embedded Cov-Boost instance under the orthant cone.
pub fn covboost() -> Result<(BanditInstance, PreferenceCone)> {
    let means = DMatrix::from_fn(20, 3, |r, c| COVBOOST_MEANS[r][c]);
    let cov = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&COVBOOST_VARIANCES));
    Ok((BanditInstance::new("covboost", means, cov, DEFAULT_M_MAX)?, PreferenceCone::orthant(3)?))
}

/// The shipped 5x2 means with unit variances and correlation `rho`.
pub fn gaussian_rho(rho: f64) -> Result<(BanditInstance, PreferenceCone)> {
    if !(rho > -1.0 && rho < 1.0) {
        return Err(Error::InvalidArgument(format!("rho must lie in (-1, 1), got {rho}")));
    }
    let file = InstanceFile::parse("gaussian-rho", GAUSSIAN_5X2)?;
    let (base, cone) = file.build("gaussian-rho")?;
    let cov = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
    let inst = BanditInstance::new(format!("gaussian-rho({rho})"), base.means().clone(), cov, base.m_max())?;
    Ok((inst, cone))
}

/// Resolves `covboost`, `gaussian-rho`, `gaussian-rho:<rho>`, `file:<path>`
/// or a bare path.
pub fn load_instance(name_or_path: &str) -> Result<(BanditInstance, PreferenceCone)> {
    match name_or_path {
        "covboost" => covboost(),
        "gaussian-rho" => gaussian_rho(0.0),
        s if s.starts_with("gaussian-rho:") => {
            let v = &s["gaussian-rho:".len()..];
            let rho: f64 = v.parse().map_err(|_| load_error(s, "rho", format!("`{v}` is not a number")))?;
            gaussian_rho(rho)
        }
        s => {
            let path = s.strip_prefix("file:").unwrap_or(s);
            let text = fs::read_to_string(path).map_err(|e| load_error(path, "file", e))?;
            InstanceFile::parse(path, &text)?.build(path)
        }
    }
}

/// Random instance with a fixed three-point Pareto front. Arms 0..3 (fewer
/// when `k < 3`) sit on the front; every other arm is a front point shifted
/// down by an independent `U(0.3, 1.0)` amount in each objective, so it is
/// strictly dominated. Identity covariance, orthant cone.
pub fn synthetic_instance(k: usize, l: usize, seed: u64) -> Result<(BanditInstance, PreferenceCone)> {
    if k == 0 || l < 2 {
        return Err(Error::InvalidArgument("synthetic instances need K >= 1 and L >= 2".into()));
    }
    let mut front = [vec![1.0; l], vec![1.0; l], vec![1.2; l]];
    front[0][0] = 1.4;
    front[1][1] = 1.4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means = DMatrix::zeros(k, l);
    for a in 0..k {
        let base = &front[a % 3];
        for c in 0..l {
            let shift = if a < 3 { 0.0 } else { rng.random_range(0.3..1.0) };
            means[(a, c)] = base[c] - shift;
        }
    }
    let inst = BanditInstance::new(format!("synthetic-k{k}-l{l}-s{seed}"), means, DMatrix::identity(l, l), DEFAULT_M_MAX)?;
    Ok((inst, PreferenceCone::orthant(l)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParameter {
    Rho,
    K,
    L,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    /// Registry name or file path; ignored for a `rho`, `K` or `L` sweep,
    /// which generates its own instances.
    pub instance: String,
    pub samplers: Vec<Sampler>,
    pub delta: f64,
    pub runs: usize,
    pub base_seed: u64,
    pub sweep: Option<Sweep>,
    pub output: Option<PathBuf>,
    pub threshold_mode: ThresholdMode,
    pub zmode: ZMode,
    pub pair_mode: PairMode,
    pub max_t: u64,
    pub trace_every: u64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        let cfg = RunConfig::default();
        Self {
            instance: "covboost".into(),
            samplers: vec![Sampler::Frappe, Sampler::Uniform, Sampler::Oracle],
            delta: cfg.delta,
            runs: 50,
            base_seed: 0,
            sweep: None,
            output: None,
            threshold_mode: cfg.threshold_mode,
            zmode: cfg.zmode,
            pair_mode: cfg.pair_mode,
            max_t: cfg.max_t,
            trace_every: 0,
        }
    }
}

impl ExperimentSpec {
    fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::InvalidArgument("runs must be at least 1".into()));
        }
        if self.samplers.is_empty() {
            return Err(Error::InvalidArgument("at least one sampler is required".into()));
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() || s.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("sweep values must be finite and nonempty".into()));
            }
            if s.parameter != SweepParameter::Rho && s.values.iter().any(|v| v.fract() != 0.0 || *v < 1.0) {
                return Err(Error::InvalidArgument("K and L sweep values must be positive integers".into()));
            }
        }
        Ok(())
    }

    fn config(&self, sampler: Sampler, m_max: f64) -> RunConfig {
        RunConfig {
            delta: self.delta,
            threshold_mode: self.threshold_mode,
            zmode: self.zmode,
            pair_mode: self.pair_mode,
            sampler,
            max_t: self.max_t,
            seed: self.base_seed,
            m_max,
            trace_every: self.trace_every,
        }
    }

    fn instance_for(&self, param: Option<f64>) -> Result<(BanditInstance, PreferenceCone)> {
        match (&self.sweep, param) {
            (Some(s), Some(v)) => match s.parameter {
                SweepParameter::Rho => gaussian_rho(v),
                SweepParameter::K => synthetic_instance(v as usize, 2, self.base_seed),
                SweepParameter::L => synthetic_instance(25, v as usize, self.base_seed),
            },
            _ => load_instance(&self.instance),
        }
    }
}

/// One row of `runs.csv`, with the trace kept in memory only.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run_id: usize,
    pub sampler: Sampler,
    pub param: Option<f64>,
    pub seed: u64,
    pub result: std::result::Result<RunResult, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub sampler: Sampler,
    pub param: Option<f64>,
    /// Runs that completed without error (timeouts included).
    pub runs: usize,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub q10: f64,
    pub q25: f64,
    pub q75: f64,
    pub q90: f64,
    /// Fraction of completed runs that stopped with a wrong answer.
    pub error_rate: f64,
    pub timeouts: usize,
    pub mean_wall_per_iter: f64,
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    pub records: Vec<RunRecord>,
    pub aggregates: Vec<AggregateRow>,
}

impl BatchResult {
    pub fn aggregate(&self, sampler: Sampler, param: Option<f64>) -> Option<&AggregateRow> {
        self.aggregates.iter().find(|a| a.sampler == sampler && a.param == param)
    }

    pub fn stopping_times(&self, sampler: Sampler, param: Option<f64>) -> Vec<u64> {
        self.records
            .iter()
            .filter(|r| r.sampler == sampler && r.param == param)
            .filter_map(|r| r.result.as_ref().ok().map(|x| x.stopping_time))
            .collect()
    }
}

/// Worker count: `FRAPPE_WORKERS` when set to a positive integer,
/// otherwise the available parallelism.
pub fn worker_count() -> usize {
    std::env::var("FRAPPE_WORKERS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn pool() -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()
        .map_err(|e| Error::Internal(format!("cannot start worker pool: {e}")))
}

/// Runs every (parameter, sampler) configuration for `runs` seeds
/// `base_seed + run_index`, shared across samplers so comparisons are
/// paired. Per-run failures become error rows. Writes `runs.csv`,
/// `aggregate.csv` and `plot.script` when an output directory is set.
pub fn run_batch(spec: &ExperimentSpec) -> Result<BatchResult> {
    spec.validate()?;
    let params: Vec<Option<f64>> = match &spec.sweep {
        Some(s) => s.values.iter().map(|v| Some(*v)).collect(),
        None => vec![None],
    };
    let workers = pool()?;
    let mut records = Vec::new();
    for &param in &params {
        let (instance, cone) = spec.instance_for(param)?;
        for &sampler in &spec.samplers {
            let cfg = spec.config(sampler, instance.m_max());
            let runner = Runner::new(instance.clone(), cone.clone(), cfg);
            let batch: Vec<RunRecord> = workers.install(|| {
                (0..spec.runs)
                    .into_par_iter()
                    .map(|run_id| {
                        let seed = spec.base_seed.wrapping_add(run_id as u64);
                        let result = match &runner {
                            Ok(r) => r.run(seed).map_err(|e| e.to_string()),
                            Err(e) => Err(e.to_string()),
                        };
                        RunRecord {
                            run_id,
                            sampler,
                            param,
                            seed,
                            result,
                        }
                    })
                    .collect()
            });
            records.extend(batch);
        }
    }
    let mut aggregates = Vec::new();
    for &param in &params {
        for &sampler in &spec.samplers {
            let own: Vec<&RunRecord> = records.iter().filter(|r| r.sampler == sampler && r.param == param).collect();
            aggregates.push(aggregate(sampler, param, &own));
        }
    }
    let out = BatchResult { records, aggregates };
    if let Some(dir) = &spec.output {
        fs::create_dir_all(dir)?;
        write_runs_csv(&dir.join("runs.csv"), &out.records)?;
        write_aggregate_csv(&dir.join("aggregate.csv"), &out.aggregates)?;
        fs::write(dir.join("plot.script"), plot_script(spec.sweep.is_some()))?;
    }
    Ok(out)
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn aggregate(sampler: Sampler, param: Option<f64>, records: &[&RunRecord]) -> AggregateRow {
    let ok: Vec<&RunResult> = records.iter().filter_map(|r| r.result.as_ref().ok()).collect();
    let mut times: Vec<f64> = ok.iter().map(|r| r.stopping_time as f64).collect();
    times.sort_by(f64::total_cmp);
    let n = times.len();
    let mean = if n == 0 { f64::NAN } else { times.iter().sum::<f64>() / n as f64 };
    let std = if n < 2 {
        0.0
    } else {
        (times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    let wrong = ok.iter().filter(|r| r.correct == Some(false)).count();
    AggregateRow {
        sampler,
        param,
        runs: n,
        mean,
        median: quantile(&times, 0.5),
        std,
        q10: quantile(&times, 0.1),
        q25: quantile(&times, 0.25),
        q75: quantile(&times, 0.75),
        q90: quantile(&times, 0.9),
        error_rate: if n == 0 { 0.0 } else { wrong as f64 / n as f64 },
        timeouts: ok.iter().filter(|r| r.timed_out).count(),
        mean_wall_per_iter: if n == 0 {
            f64::NAN
        } else {
            ok.iter().map(|r| r.wall_time_per_iter).sum::<f64>() / n as f64
        },
    }
}

#[derive(Debug, Serialize)]
struct RunsRow<'a> {
    run_id: usize,
    sampler: Sampler,
    param: Option<f64>,
    stopping_time: Option<u64>,
    timed_out: Option<bool>,
    correct: Option<bool>,
    wall_per_iter: Option<f64>,
    error: &'a str,
}

/// Column order of `runs.csv`.
pub const RUNS_COLUMNS: [&str; 8] =
    ["run_id", "sampler", "param", "stopping_time", "timed_out", "correct", "wall_per_iter", "error"];

/// Column order of `aggregate.csv`.
pub const AGGREGATE_COLUMNS: [&str; 13] = [
    "sampler",
    "param",
    "runs",
    "mean",
    "median",
    "std",
    "q10",
    "q25",
    "q75",
    "q90",
    "error_rate",
    "timeouts",
    "mean_wall_per_iter",
];

pub fn write_runs_csv(path: &Path, records: &[RunRecord]) -> Result<()> {
    write_runs(fs::File::create(path)?, records)
}

pub fn write_runs<W: std::io::Write>(out: W, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        let row = match &r.result {
            Ok(x) => RunsRow {
                run_id: r.run_id,
                sampler: r.sampler,
                param: r.param,
                stopping_time: Some(x.stopping_time),
                timed_out: Some(x.timed_out),
                correct: x.correct,
                wall_per_iter: Some(x.wall_time_per_iter),
                error: "",
            },
            Err(e) => RunsRow {
                run_id: r.run_id,
                sampler: r.sampler,
                param: r.param,
                stopping_time: None,
                timed_out: None,
                correct: None,
                wall_per_iter: None,
                error: e,
            },
        };
        w.serialize(row)?;
    }
    if records.is_empty() {
        w.write_record(RUNS_COLUMNS)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(AGGREGATE_COLUMNS)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorPoint {
    pub t: u64,
    pub error: f64,
}

/// Error indicator of one run at step `t`: the traced value while running,
/// the frozen recommendation afterwards. `None` before the first traced
/// step.
pub fn error_indicator_at(result: &RunResult, t: u64) -> Option<bool> {
    let rows = result.trace.as_ref()?;
    if t >= result.stopping_time {
        return Some(match result.correct {
            Some(c) => !c,
            None => rows.last().is_none_or(|r| r.err),
        });
    }
    rows.iter().take_while(|r| r.t <= t).last().map(|r| r.err)
}

/// Mean error indicator across the traced runs of one sampler (and sweep
/// value) at every multiple of `trace_every` up to the longest run.
pub fn error_curve(
    records: &[RunRecord],
    sampler: Sampler,
    param: Option<f64>,
    trace_every: u64,
) -> Result<Vec<ErrorPoint>> {
    if trace_every == 0 {
        return Err(Error::InvalidArgument("error curves need trace_every >= 1".into()));
    }
    let runs: Vec<&RunResult> = records
        .iter()
        .filter(|r| r.sampler == sampler && r.param == param)
        .filter_map(|r| r.result.as_ref().ok())
        .filter(|r| r.trace.is_some())
        .collect();
    let Some(first) = runs.iter().filter_map(|r| r.trace.as_ref()?.first().map(|x| x.t)).min() else {
        return Ok(Vec::new());
    };
    let last = runs.iter().map(|r| r.stopping_time).max().unwrap_or(first);
    let mut points = Vec::new();
    let mut t = first.div_ceil(trace_every) * trace_every;
    while t <= last {
        let vals: Vec<bool> = runs.iter().filter_map(|r| error_indicator_at(r, t)).collect();
        if !vals.is_empty() {
            let error = vals.iter().filter(|&&e| e).count() as f64 / vals.len() as f64;
            points.push(ErrorPoint { t, error });
        }
        t += trace_every;
    }
    Ok(points)
}

pub fn write_error_curve_csv(path: &Path, curves: &[(Sampler, Vec<ErrorPoint>)]) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        sampler: Sampler,
        t: u64,
        error: f64,
    }
    let mut w = csv::Writer::from_path(path)?;
    for (sampler, points) in curves {
        for p in points {
            w.serialize(Row {
                sampler: *sampler,
                t: p.t,
                error: p.error,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RuntimePoint {
    pub param: usize,
    pub arms: usize,
    pub objectives: usize,
    /// Median over repetitions of the mean wall time per iteration.
    pub wall_per_iter: f64,
    pub iterations: u64,
}

/// Per-iteration wall time of the frappe sampler on synthetic instances.
/// With `vary_k`, each value is K at `L = fixed`; otherwise each value is L
/// at `K = fixed`. Each measurement runs `iters` iterations past
/// initialization with a threshold that never triggers, repeated `reps`
/// times.
pub fn runtime_scaling(
    values: &[usize],
    fixed: usize,
    vary_k: bool,
    iters: u64,
    reps: usize,
    seed: u64,
) -> Result<Vec<RuntimePoint>> {
    let mut out = Vec::new();
    for &v in values {
        let (k, l) = if vary_k { (v, fixed) } else { (fixed, v) };
        let (instance, cone) = synthetic_instance(k, l, seed)?;
        let cfg = RunConfig {
            delta: 1e-300,
            max_t: k as u64 + iters.max(4 * k as u64),
            ..RunConfig::default()
        };
        let runner = Runner::new(instance, cone, cfg)?;
        let mut walls = Vec::with_capacity(reps.max(1));
        let mut iterations = 0;
        for rep in 0..reps.max(1) {
            let r = runner.run(seed.wrapping_add(rep as u64))?;
            iterations = r.stopping_time - k as u64;
            walls.push(r.wall_time_per_iter);
        }
        walls.sort_by(f64::total_cmp);
        out.push(RuntimePoint {
            param: v,
            arms: k,
            objectives: l,
            wall_per_iter: quantile(&walls, 0.5),
            iterations,
        });
    }
    Ok(out)
}

pub fn write_runtime_csv(path: &Path, points: &[RuntimePoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

/// Gnuplot script for the CSV files written next to it.
pub fn plot_script(sweep: bool) -> String {
    let x = if sweep { "param" } else { "sampler" };
    format!(
        "# gnuplot -p plot.script\n\
         set datafile separator ','\n\
         set key autotitle columnhead\n\
         set title 'Stopping time by {x}'\n\
         set ylabel 'stopping time'\n\
         set style data boxplot\n\
         plot 'runs.csv' using (1):4\n\
         if (system('test -f error_curve.csv && echo 1') eq '1') {{\n\
         \x20   set title 'Mean error indicator'\n\
         \x20   set style data lines\n\
         \x20   set xlabel 't'\n\
         \x20   set ylabel 'error'\n\
         \x20   plot 'error_curve.csv' using 2:3\n\
         }}\n\
         if (system('test -f runtime.csv && echo 1') eq '1') {{\n\
         \x20   set title 'Wall time per iteration'\n\
         \x20   set style data linespoints\n\
         \x20   plot 'runtime.csv' using 1:4\n\
         }}\n"
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    CovboostStopping,
    CovboostError,
    RhoSweep,
    RuntimeK,
    RuntimeL,
}

impl std::str::FromStr for Experiment {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "covboost-stopping" => Ok(Self::CovboostStopping),
            "covboost-error" => Ok(Self::CovboostError),
            "rho-sweep" => Ok(Self::RhoSweep),
            "runtime-k" => Ok(Self::RuntimeK),
            "runtime-l" => Ok(Self::RuntimeL),
            other => Err(Error::InvalidArgument(format!("unknown experiment `{other}`"))),
        }
    }
}

/// Step between traced rows in the `covboost-error` experiment.
pub const ERROR_TRACE_EVERY: u64 = 10;

/// Runs a named experiment and writes its files into `out`.
pub fn run_experiment(
    experiment: Experiment,
    delta: f64,
    runs: usize,
    seed: u64,
    out: &Path,
    samplers: Option<Vec<Sampler>>,
) -> Result<Vec<AggregateRow>> {
    fs::create_dir_all(out)?;
    let mut spec = ExperimentSpec {
        delta,
        runs,
        base_seed: seed,
        output: Some(out.to_path_buf()),
        ..ExperimentSpec::default()
    };
    if let Some(s) = samplers {
        spec.samplers = s;
    }
    match experiment {
        Experiment::CovboostStopping => Ok(run_batch(&spec)?.aggregates),
        Experiment::CovboostError => {
            spec.trace_every = ERROR_TRACE_EVERY;
            let batch = run_batch(&spec)?;
            let curves = spec
                .samplers
                .iter()
                .map(|&s| Ok((s, error_curve(&batch.records, s, None, ERROR_TRACE_EVERY)?)))
                .collect::<Result<Vec<_>>>()?;
            write_error_curve_csv(&out.join("error_curve.csv"), &curves)?;
            Ok(batch.aggregates)
        }
        Experiment::RhoSweep => {
            spec.sweep = Some(Sweep {
                parameter: SweepParameter::Rho,
                values: RHO_SWEEP.to_vec(),
            });
            Ok(run_batch(&spec)?.aggregates)
        }
        Experiment::RuntimeK | Experiment::RuntimeL => {
            let points = if experiment == Experiment::RuntimeK {
                runtime_scaling(&[5, 10, 20, 40], 2, true, 20_000, runs.clamp(1, 5), seed)?
            } else {
                runtime_scaling(&[2, 6, 10], 25, false, 20_000, runs.clamp(1, 5), seed)?
            };
            write_runtime_csv(&out.join("runtime.csv"), &points)?;
            fs::write(out.join("plot.script"), plot_script(true))?;
            Ok(Vec::new())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pareto::pareto_set;

    #[test]
    fn covboost_table_values() {
        let (inst, cone) = covboost().unwrap();
        assert_eq!(inst.arms(), 20);
        assert_eq!(inst.objectives(), 3);
        assert_eq!(COVBOOST_ARMS[8], "Prime BNT/BNT + m1273");
        assert_eq!(inst.mean(8), vec![10.43, 7.61, 4.72]);
        assert_eq!(inst.covariance()[(0, 0)], 0.70);
        assert_eq!(inst.covariance()[(2, 2)], 1.54);
        assert_eq!(inst.covariance()[(0, 1)], 0.0);
        assert_eq!(cone.dim(), 3);
    }

    #[test]
    fn gaussian_rho_covariance() {
        let (inst, _) = gaussian_rho(0.0).unwrap();
        assert_eq!(inst.covariance(), &DMatrix::identity(2, 2));
        let (inst, _) = gaussian_rho(-0.5).unwrap();
        assert_eq!(inst.covariance()[(0, 1)], -0.5);
        assert!(gaussian_rho(1.0).is_err());
        let (a, _) = load_instance("gaussian-rho:0.9").unwrap();
        assert_eq!(a.covariance()[(1, 0)], 0.9);
    }

    #[test]
    fn malformed_files_report_a_field() {
        let e = InstanceFile::parse("x", "{\"name\": 3}").unwrap_err();
        assert!(matches!(e, Error::Load { .. }));
        let mut f = InstanceFile::from_instance(&covboost().unwrap().0, ConeSpec::Orthant);
        f.means[4].pop();
        match f.build("x").unwrap_err() {
            Error::Load { field, .. } => assert_eq!(field, "means[4]"),
            other => panic!("{other}"),
        }
        assert!(load_instance("/nonexistent/instance.json").is_err());
    }

    #[test]
    fn synthetic_front_is_preserved() {
        for (k, l) in [(5, 2), (40, 2), (25, 6), (25, 10), (2, 3)] {
            let (inst, cone) = synthetic_instance(k, l, 1).unwrap();
            let p = pareto_set(inst.means(), &cone).unwrap();
            assert_eq!(p.indices(), &(0..k.min(3)).collect::<Vec<_>>()[..]);
        }
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
    }

    #[test]
    fn single_run_batch_matches_run() {
        let spec = ExperimentSpec {
            instance: "gaussian-rho".into(),
            samplers: vec![Sampler::Frappe],
            runs: 1,
            base_seed: 17,
            ..ExperimentSpec::default()
        };
        let batch = run_batch(&spec).unwrap();
        let (inst, cone) = gaussian_rho(0.0).unwrap();
        let direct = Runner::new(inst, cone, spec.config(Sampler::Frappe, DEFAULT_M_MAX)).unwrap().run(17).unwrap();
        assert!(batch.records[0].result.as_ref().unwrap().same_outcome(&direct));
        assert_eq!(batch.aggregates[0].runs, 1);
    }
}
