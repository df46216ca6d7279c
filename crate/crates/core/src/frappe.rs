//! The sequential identification loop: forced exploration, Frank-Wolfe
//! allocation, C-tracking and the GLRT stopping rule, plus uniform and
//! oracle samplers that share the same stopping rule and tracking.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cone::PreferenceCone;
use crate::error::{check_len, Error, Result};
use crate::fw::{build_subdifferential, floor_schedule, r_schedule, solve_maximin_floored, FwState};
use crate::model::{BanditInstance, EstimatorState, DEFAULT_M_MAX};
use crate::objective::{
    characteristic_time_inverse, min_over_z, min_pair_value, GaussianCost, PairEvaluation,
    Threshold, ThresholdMode, TransportCost, ZMode, TOL_SEP,
};
use crate::pareto::{candidate_pairs, pareto_from_projected, pareto_set, CandidatePairs, PairMode, ParetoSet};

/// Offline Frank-Wolfe budget for the oracle allocation.
const ORACLE_FW_ITERS: usize = 20_000;
const ORACLE_FW_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampler {
    #[default]
    Frappe,
    Uniform,
    /// Tracks the optimal allocation of the true means; never forces
    /// exploration.
    Oracle,
}

impl std::str::FromStr for Sampler {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frappe" => Ok(Self::Frappe),
            "uniform" => Ok(Self::Uniform),
            "oracle" => Ok(Self::Oracle),
            other => Err(Error::InvalidArgument(format!("unknown sampler `{other}`"))),
        }
    }
}

impl std::fmt::Display for Sampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Frappe => "frappe",
            Self::Uniform => "uniform",
            Self::Oracle => "oracle",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub delta: f64,
    pub threshold_mode: ThresholdMode,
    pub zmode: ZMode,
    pub pair_mode: PairMode,
    pub sampler: Sampler,
    pub max_t: u64,
    pub seed: u64,
    pub m_max: f64,
    /// Record a trace row every this many steps; 0 disables tracing.
    pub trace_every: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            delta: 0.1,
            threshold_mode: ThresholdMode::Practical,
            zmode: ZMode::Rays,
            pair_mode: PairMode::NonPareto,
            sampler: Sampler::Frappe,
            max_t: 1_000_000,
            seed: 0,
            m_max: DEFAULT_M_MAX,
            trace_every: 0,
        }
    }
}

impl RunConfig {
    fn validate(&self, arms: usize) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if self.max_t < 4 * arms as u64 {
            return Err(Error::InvalidArgument(format!("max_t must be at least 4K = {}", 4 * arms)));
        }
        if !(self.m_max > 0.0) {
            return Err(Error::InvalidArgument("m_max must be positive".into()));
        }
        if self.zmode == ZMode::Grid {
            return Err(Error::InvalidArgument("grid z-mode is an offline oracle, not a run mode".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub t: u64,
    /// `F` at the sampler's current allocation under the empirical means.
    pub f_hat: f64,
    pub statistic: f64,
    pub threshold: f64,
    /// Whether the empirical Pareto set differs from the true one.
    pub err: bool,
    /// Arm pulled after this check; `None` on the stopping row.
    pub arm: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub stopping_time: u64,
    pub timed_out: bool,
    pub recommended: ParetoSet,
    /// `None` on timeout.
    pub correct: Option<bool>,
    pub wall_time_per_iter: f64,
    pub trace: Option<Vec<TraceRow>>,
}

impl RunResult {
    /// Equality on everything except wall time.
    pub fn same_outcome(&self, other: &RunResult) -> bool {
        self.stopping_time == other.stopping_time
            && self.timed_out == other.timed_out
            && self.recommended == other.recommended
            && self.correct == other.correct
            && self.trace == other.trace
    }
}

/// State exposed to a run observer after every tracked pull.
#[derive(Debug, Clone, Copy)]
pub struct StepView<'a> {
    /// Total pulls so far, the new one included.
    pub t: u64,
    pub counts: &'a [u64],
    /// Sum of every allocation emitted so far, initialization included.
    pub cumulative: &'a [f64],
    pub forced: bool,
    pub arm: usize,
}

/// GLRT statistic: the objective with raw pull counts as weights.
pub fn glrt_statistic(
    estimate: &EstimatorState,
    covariance: &nalgebra::DMatrix<f64>,
    cone: &PreferenceCone,
    pairs: &CandidatePairs,
    zmode: ZMode,
) -> Result<f64> {
    if estimate.counts().contains(&0) {
        return Err(Error::InvalidArgument("GLRT statistic needs every arm pulled".into()));
    }
    let n: Vec<f64> = estimate.counts().iter().map(|&c| c as f64).collect();
    min_pair_value(estimate.means(), covariance, &n, pairs, cone, zmode)
}

/// Stop iff the statistic reaches the threshold.
pub fn stopping_check(statistic: f64, t: u64, config: &RunConfig, counts: &[u64]) -> Result<bool> {
    let c = Threshold::new(config.threshold_mode, config.delta, counts.len())?.value(t, counts)?;
    Ok(statistic >= c)
}

/// `t = K m^2` for an integer `m >= 1`, or the estimate left the model box.
pub fn forced_exploration_due(t: u64, arms: usize, estimate: &EstimatorState, m_max: f64) -> bool {
    let k = arms as u64;
    let square = t >= k && t.is_multiple_of(k) && {
        let q = t / k;
        let m = (q as f64).sqrt().round() as u64;
        (m.saturating_sub(1)..=m + 1).any(|c| c * c == q)
    };
    square || !estimate.in_model_class(m_max)
}

/// `argmin_a N_a - sum_s w_{s,a}`, lowest index on ties.
pub fn c_tracking_arm(counts: &[u64], cumulative: &[f64]) -> usize {
    let mut best = 0;
    let mut best_v = f64::INFINITY;
    for (a, (&n, &c)) in counts.iter().zip(cumulative).enumerate() {
        let v = n as f64 - c;
        if v < best_v {
            best = a;
            best_v = v;
        }
    }
    best
}

/// `w_i w_j / (w_i + w_j)`, zero when either weight is.
fn harmonic(wi: f64, wj: f64) -> f64 {
    if wi <= 0.0 || wj <= 0.0 {
        0.0
    } else {
        wi * wj / (wi + wj)
    }
}

/// Per-pair minimizer and scale `gap^2 / (2 z^T Sigma z)`. The minimizing
/// direction does not depend on the weights, so one scale serves both the
/// statistic (weights `N`) and `F` (weights `w`).
#[derive(Debug, Clone)]
struct PairScale {
    i: usize,
    j: usize,
    z: Direction,
    c: f64,
}

/// Minimizing direction: a row of `W` in rays mode, explicit otherwise.
#[derive(Debug, Clone)]
enum Direction {
    Ray(usize),
    Explicit(Vec<f64>),
}

/// A configuration prepared once and run for many seeds.
#[derive(Debug, Clone)]
pub struct Runner {
    instance: BanditInstance,
    cone: PreferenceCone,
    config: RunConfig,
    true_pareto: ParetoSet,
    oracle: Option<Vec<f64>>,
    /// `z^T Sigma z` for each dual generator.
    ray_variance: Vec<f64>,
    threshold: Threshold,
}

impl Runner {
    pub fn new(instance: BanditInstance, cone: PreferenceCone, config: RunConfig) -> Result<Self> {
        check_len(cone.dim(), instance.objectives())?;
        config.validate(instance.arms())?;
        let true_pareto = pareto_set(instance.means(), &cone)?;
        let oracle = if config.sampler == Sampler::Oracle && instance.arms() > 1 {
            let (w, _) = characteristic_time_inverse(&instance, &cone, ORACLE_FW_ITERS, ORACLE_FW_TOL)?;
            Some(w.into_vec())
        } else {
            None
        };
        let cost = GaussianCost::new(instance.covariance());
        let ray_variance = (0..cone.dim()).map(|r| cost.projected_variance(cone.row(r))).collect();
        let threshold = Threshold::new(config.threshold_mode, config.delta, instance.arms())?;
        Ok(Self {
            instance,
            cone,
            config,
            true_pareto,
            oracle,
            ray_variance,
            threshold,
        })
    }

    pub fn instance(&self) -> &BanditInstance {
        &self.instance
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn true_pareto(&self) -> &ParetoSet {
        &self.true_pareto
    }

    /// The precomputed oracle allocation, when the sampler needs one.
    pub fn oracle_allocation(&self) -> Option<&[f64]> {
        self.oracle.as_deref()
    }

    pub fn run(&self, seed: u64) -> Result<RunResult> {
        self.run_observed(seed, |_| {})
    }

    /// Runs one seeded trajectory, calling `observer` after every tracked
    /// pull.
    pub fn run_observed(&self, seed: u64, mut observer: impl FnMut(&StepView<'_>)) -> Result<RunResult> {
        let k = self.instance.arms();
        let l = self.instance.objectives();
        let cfg = &self.config;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut est = EstimatorState::new(k, l);
        let mut projected = vec![0.0; k * l];
        let mut row = vec![0.0; l];
        for a in 0..k {
            let reward = self.instance.sample(a, &mut rng);
            est.update(a, &reward)?;
            self.reproject(a, &est, &mut projected, &mut row);
        }
        let uniform = vec![1.0 / k as f64; k];
        let mut cumulative = vec![1.0; k];
        let mut fw = FwState::new(k, k as u64)?;
        let mut trace = (cfg.trace_every > 0).then(Vec::new);
        let started = Instant::now();
        let mut iters: u64 = 0;

        let outcome = loop {
            let t = est.t();
            let pset = pareto_from_projected(&projected, k, l);
            let pairs = candidate_pairs(&pset, cfg.pair_mode);
            let scales = self.pair_scales(&est, &projected, &pairs)?;
            let counts = est.counts();
            let statistic = scales
                .iter()
                .map(|p| p.c * harmonic(counts[p.i] as f64, counts[p.j] as f64))
                .fold(f64::INFINITY, f64::min);
            let threshold = self.threshold.value(t, counts)?;
            let stop = statistic >= threshold;

            let traced = trace.is_some() && (t.is_multiple_of(cfg.trace_every) || stop);
            let mut row_index = None;
            if traced {
                let w: &[f64] = match cfg.sampler {
                    Sampler::Frappe => fw.omega(),
                    Sampler::Uniform => &uniform,
                    Sampler::Oracle => self.oracle.as_deref().unwrap_or(&uniform),
                };
                let f_hat = scales
                    .iter()
                    .map(|p| p.c * harmonic(w[p.i], w[p.j]))
                    .fold(f64::INFINITY, f64::min);
                let rows = trace.as_mut().expect("trace enabled");
                rows.push(TraceRow {
                    t,
                    f_hat,
                    statistic,
                    threshold,
                    err: pset != self.true_pareto,
                    arm: None,
                });
                row_index = Some(rows.len() - 1);
            }
            if stop {
                break (t, false, pset);
            }
            if t >= cfg.max_t {
                break (t, true, pset);
            }

            let forced = cfg.sampler == Sampler::Frappe && forced_exploration_due(t, k, &est, cfg.m_max);
            match cfg.sampler {
                Sampler::Frappe if forced => {
                    // Keep the Frank-Wolfe clock in step with t without moving w.
                    let w = fw.omega().to_vec();
                    fw.update(&w)?;
                    add_to(&mut cumulative, &uniform);
                }
                Sampler::Frappe => {
                    let x = self.fw_direction(&scales, &fw)?;
                    fw.update(&x)?;
                    add_to(&mut cumulative, fw.omega());
                }
                Sampler::Uniform => add_to(&mut cumulative, &uniform),
                Sampler::Oracle => add_to(&mut cumulative, self.oracle.as_deref().unwrap_or(&uniform)),
            }
            let arm = c_tracking_arm(est.counts(), &cumulative);
            let reward = self.instance.sample(arm, &mut rng);
            est.update(arm, &reward)?;
            self.reproject(arm, &est, &mut projected, &mut row);
            if let (Some(rows), Some(n)) = (trace.as_mut(), row_index) {
                rows[n].arm = Some(arm);
            }
            iters += 1;
            observer(&StepView {
                t: est.t(),
                counts: est.counts(),
                cumulative: &cumulative,
                forced,
                arm,
            });
        };

        let (stopping_time, timed_out, recommended) = outcome;
        let correct = (!timed_out).then(|| recommended == self.true_pareto);
        Ok(RunResult {
            stopping_time,
            timed_out,
            recommended,
            correct,
            wall_time_per_iter: started.elapsed().as_secs_f64() / iters.max(1) as f64,
            trace,
        })
    }

    fn reproject(&self, arm: usize, est: &EstimatorState, projected: &mut [f64], row: &mut [f64]) {
        let l = row.len();
        for (c, v) in row.iter_mut().enumerate() {
            *v = est.means()[(arm, c)];
        }
        for r in 0..l {
            projected[arm * l + r] = self.cone.project(r, row);
        }
    }

    fn pair_scales(&self, est: &EstimatorState, projected: &[f64], pairs: &CandidatePairs) -> Result<Vec<PairScale>> {
        let l = self.instance.objectives();
        let mut out = Vec::with_capacity(pairs.len());
        match self.config.zmode {
            ZMode::Rays => {
                for &(i, j) in pairs.as_slice() {
                    let mut best: Option<(usize, f64)> = None;
                    for r in 0..l {
                        let gap = projected[i * l + r] - projected[j * l + r];
                        if gap > TOL_SEP {
                            let c = gap * gap / (2.0 * self.ray_variance[r]);
                            if best.is_none_or(|(_, b)| c < b) {
                                best = Some((r, c));
                            }
                        }
                    }
                    let (r, c) = best.unwrap_or((0, 0.0));
                    out.push(PairScale {
                        i,
                        j,
                        z: Direction::Ray(r),
                        c,
                    });
                }
            }
            ZMode::Constrained | ZMode::Grid => {
                let ones = vec![1.0; self.instance.arms()];
                for &(i, j) in pairs.as_slice() {
                    let (z, v) = min_over_z(
                        est.means(),
                        self.instance.covariance(),
                        &ones,
                        i,
                        j,
                        &self.cone,
                        self.config.zmode,
                    )?;
                    // Unit weights give harmonic(1, 1) = 1/2.
                    out.push(PairScale {
                        i,
                        j,
                        z: Direction::Explicit(z),
                        c: 2.0 * v,
                    });
                }
            }
        }
        Ok(out)
    }

    /// Frank-Wolfe direction at the current average: the maximin point over
    /// the gradients of the near-minimal pairs, within the simplex floored
    /// at [`floor_schedule`].
    fn fw_direction(&self, scales: &[PairScale], fw: &FwState) -> Result<Vec<f64>> {
        let k = self.instance.arms();
        let w = fw.omega();
        let values: Vec<f64> = scales.iter().map(|p| p.c * harmonic(w[p.i], w[p.j])).collect();
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let r = r_schedule(fw.t(), k);
        let near: Vec<PairEvaluation> = scales
            .iter()
            .zip(&values)
            .filter(|(_, &v)| v < min + r || v == min)
            .map(|(p, &value)| {
                let mut gradient = vec![0.0; k];
                let (wi, wj) = (w[p.i], w[p.j]);
                if value > 0.0 {
                    let s2 = (wi + wj) * (wi + wj);
                    gradient[p.i] = p.c * wj * wj / s2;
                    gradient[p.j] = p.c * wi * wi / s2;
                }
                PairEvaluation {
                    i: p.i,
                    j: p.j,
                    value,
                    z_star: match &p.z {
                        Direction::Ray(r) => self.cone.row(*r).to_vec(),
                        Direction::Explicit(z) => z.clone(),
                    },
                    gradient,
                }
            })
            .collect();
        let sub = build_subdifferential(&near, r)?;
        let gamma = floor_schedule(fw.t(), k);
        let (x, _) = solve_maximin_floored(&sub.gradients, &fw.allocation(), gamma)?;
        Ok(x)
    }
}

fn add_to(acc: &mut [f64], w: &[f64]) {
    for (a, v) in acc.iter_mut().zip(w) {
        *a += v;
    }
}

/// One run from scratch; see [`Runner`] for repeated seeds.
pub fn run(instance: &BanditInstance, cone: &PreferenceCone, config: &RunConfig) -> Result<RunResult> {
    Runner::new(instance.clone(), cone.clone(), *config)?.run(config.seed)
}
