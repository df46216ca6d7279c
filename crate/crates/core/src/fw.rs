//! Frank-Wolfe over the simplex for the non-smooth objective `F(w)`.
//!
//! Each step collects the gradients of every pair within `r` of the minimum
//! (an outer approximation of the subdifferential), picks the simplex point
//! that maximizes the worst linearized improvement over that set, and
//! averages it into the running allocation.

use nalgebra::DMatrix;

use crate::cone::PreferenceCone;
use crate::error::{check_len, Error, Result};
use crate::objective::{big_f, Allocation, PairEvaluation, ZMode};
use crate::pareto::CandidatePairs;

mod lp;

/// Optimality tolerance of the maximin linear program.
pub const TOL_LP: f64 = 1e-9;

const DEDUP_TOL: f64 = 1e-12;
const OMEGA_CLAMP: f64 = 1e-12;

/// Gradients of the near-minimal pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SubdifferentialSet {
    pub gradients: Vec<Vec<f64>>,
    pub threshold_r: f64,
    pub min_value: f64,
}

/// `r_t = t^{-0.9} / K`.
pub fn r_schedule(t: u64, arms: usize) -> f64 {
    (t.max(1) as f64).powf(-0.9) / arms as f64
}

/// Floor `1 / (2 sqrt(t K))` on every coordinate of an online direction,
/// which keeps the averaged design above the same bound.
pub fn floor_schedule(t: u64, arms: usize) -> f64 {
    1.0 / (2.0 * (t.max(1) as f64 * arms as f64).sqrt())
}

/// Gradients of every pair whose value is below `min + r`, with duplicates
/// (max-abs difference under 1e-12) removed. `r` may be infinite.
pub fn build_subdifferential(pair_evals: &[PairEvaluation], r: f64) -> Result<SubdifferentialSet> {
    if pair_evals.is_empty() {
        return Err(Error::InvalidArgument("no pair evaluations".into()));
    }
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!("subdifferential radius must be positive, got {r}")));
    }
    let min_value = pair_evals.iter().map(|e| e.value).fold(f64::INFINITY, f64::min);
    let mut gradients: Vec<Vec<f64>> = Vec::new();
    for e in pair_evals {
        // The argmin pair is always kept, even when min + r rounds to min.
        if e.value < min_value + r || e.value == min_value {
            let dup = gradients.iter().any(|g| {
                g.iter().zip(&e.gradient).all(|(a, b)| (a - b).abs() <= DEDUP_TOL)
            });
            if !dup {
                gradients.push(e.gradient.clone());
            }
        }
    }
    Ok(SubdifferentialSet {
        gradients,
        threshold_r: r,
        min_value,
    })
}

/// `min_j <x - w, g_j>`.
pub fn maximin_value(gradients: &[Vec<f64>], omega: &[f64], x: &[f64]) -> f64 {
    gradients
        .iter()
        .map(|g| g.iter().zip(x.iter().zip(omega)).map(|(gk, (xk, wk))| gk * (xk - wk)).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

/// The simplex point maximizing `min_j <x - w, g_j>`, and that value.
///
/// Solved as a matrix game: the row player picks an arm, the column player
/// a gradient, with payoff `g_j[k] - <w, g_j>`. The payoff is shifted to be
/// at least 1 and the row player's optimal mixed strategy is read off the
/// duals of `max 1^T q s.t. A q <= 1, q >= 0`.
pub fn solve_maximin(gradients: &[Vec<f64>], omega: &Allocation) -> Result<(Vec<f64>, f64)> {
    solve_maximin_floored(gradients, omega, 0.0)
}

/// [`solve_maximin`] over the floored simplex `{x : x_k >= gamma}`, with
/// `0 <= gamma * K < 1`.
///
/// Writing `x = gamma + (1 - K gamma) y` with `y` in the simplex turns this
/// into the same game with payoff `(1 - K gamma) g_j[k] + gamma sum(g_j) - <w, g_j>`.
pub fn solve_maximin_floored(gradients: &[Vec<f64>], omega: &Allocation, gamma: f64) -> Result<(Vec<f64>, f64)> {
    if gradients.is_empty() {
        return Err(Error::InvalidArgument("solve_maximin needs at least one gradient".into()));
    }
    let w = omega.as_slice();
    let k = w.len();
    for g in gradients {
        check_len(k, g.len())?;
    }
    let scale = 1.0 - k as f64 * gamma;
    if !(gamma >= 0.0) || scale <= 0.0 {
        return Err(Error::InvalidArgument(format!("floor {gamma} must lie in [0, 1/K) for K = {k}")));
    }
    // Fallback when no direction improves: w itself when it respects the
    // floor, else w mixed with the floor.
    let resting = || -> Vec<f64> {
        if w.iter().all(|&v| v >= gamma) {
            w.to_vec()
        } else {
            w.iter().map(|v| gamma + scale * v).collect()
        }
    };
    let m = gradients.len();
    let offsets: Vec<f64> = gradients
        .iter()
        .map(|g| g.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() - gamma * g.iter().sum::<f64>())
        .collect();
    // Arms outside every gradient's support share one payoff row, so one
    // representative (the lowest index) stands for all.
    let mut rows: Vec<usize> = Vec::with_capacity(k);
    let mut idle_seen = false;
    for a in 0..k {
        if gradients.iter().any(|g| g[a] != 0.0) {
            rows.push(a);
        } else if !idle_seen {
            idle_seen = true;
            rows.push(a);
        }
    }
    let payoff = DMatrix::from_fn(rows.len(), m, |r, j| scale * gradients[j][rows[r]] - offsets[j]);
    let spread = payoff.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if spread <= TOL_LP {
        // Every direction is flat; stay put.
        let x = resting();
        let value = maximin_value(gradients, w, &x);
        return Ok((x, value));
    }
    // Rescale to unit spread first: gradients can be ~1e-5, and adding 1
    // to such payoffs would swamp them in rounding.
    let lowest = payoff.iter().copied().fold(f64::INFINITY, f64::min) / spread;
    let shifted = payoff.map(|v| v / spread - lowest + 1.0);
    let duals = lp::max_sum_under_unit_bounds(&shifted)?;
    let total: f64 = duals.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Internal(format!("maximin duals sum to {total}; k = {k}, gradients = {m}")));
    }
    let mut x = vec![gamma; k];
    for (r, u) in rows.iter().zip(&duals) {
        x[*r] += scale * u / total;
    }
    let value = maximin_value(gradients, w, &x);
    // A feasible point with value 0 exists whenever w respects the floor,
    // so a negative value there can only be LP round-off.
    if value < 0.0 && w.iter().all(|&v| v >= gamma) {
        return Ok((w.to_vec(), 0.0));
    }
    Ok((x, value))
}

/// Running Frank-Wolfe average.
#[derive(Debug, Clone, PartialEq)]
pub struct FwState {
    t: u64,
    omega: Vec<f64>,
    cumulative_x: Vec<f64>,
}

impl FwState {
    /// Uniform allocation counted as `t0 >= 1` past iterates.
    pub fn new(arms: usize, t0: u64) -> Result<Self> {
        if arms == 0 || t0 == 0 {
            return Err(Error::InvalidArgument("FwState needs arms >= 1 and t0 >= 1".into()));
        }
        let u = 1.0 / arms as f64;
        Ok(Self {
            t: t0,
            omega: vec![u; arms],
            cumulative_x: vec![u * t0 as f64; arms],
        })
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn cumulative_x(&self) -> &[f64] {
        &self.cumulative_x
    }

    pub fn allocation(&self) -> Allocation {
        let s: f64 = self.omega.iter().sum();
        Allocation::new(self.omega.iter().map(|v| v / s).collect())
            .unwrap_or_else(|_| Allocation::uniform(self.omega.len()))
    }

    /// `w <- t/(t+1) w + x/(t+1)`, kept as `cumulative / t`.
    pub fn update(&mut self, x_next: &[f64]) -> Result<()> {
        check_len(self.omega.len(), x_next.len())?;
        let s: f64 = x_next.iter().sum();
        if x_next.iter().any(|v| *v < -TOL_LP) || (s - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument("FW iterate is not in the simplex".into()));
        }
        self.t += 1;
        let t = self.t as f64;
        for ((c, w), x) in self.cumulative_x.iter_mut().zip(&mut self.omega).zip(x_next) {
            *c += x.max(0.0);
            *w = *c / t;
        }
        Ok(())
    }
}

/// Functional form of [`FwState::update`].
pub fn fw_update(mut state: FwState, x_next: &[f64]) -> Result<FwState> {
    state.update(x_next)?;
    Ok(state)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FwOptions {
    pub iters: usize,
    pub gap_tol: f64,
    pub zmode: ZMode,
}

impl Default for FwOptions {
    fn default() -> Self {
        Self {
            iters: 10_000,
            gap_tol: 1e-6,
            zmode: ZMode::Rays,
        }
    }
}

/// One offline iteration: `F` at the current iterate, the best `F` so far
/// and the Frank-Wolfe gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapRecord {
    pub iter: usize,
    pub value: f64,
    pub best_value: f64,
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct FwOutcome {
    pub allocation: Allocation,
    /// `F` at the returned allocation.
    pub value: f64,
    pub trace: Vec<GapRecord>,
}

fn clamped(omega: &[f64]) -> Vec<f64> {
    omega.iter().map(|v| v.max(OMEGA_CLAMP)).collect()
}

/// Offline Frank-Wolfe on known means, started from the uniform allocation.
pub fn optimize_allocation(
    means: &DMatrix<f64>,
    covariance: &DMatrix<f64>,
    cone: &PreferenceCone,
    pairs: &CandidatePairs,
    options: &FwOptions,
) -> Result<FwOutcome> {
    let k = means.nrows();
    let mut state = FwState::new(k, 1)?;
    let mut trace = Vec::new();
    let mut best = f64::NEG_INFINITY;
    for iter in 1..=options.iters.max(1) {
        let w = clamped(state.omega());
        let f = big_f(means, covariance, &w, pairs, cone, options.zmode)?;
        best = best.max(f.value);
        let sub = build_subdifferential(&f.evaluations, r_schedule(state.t(), k))?;
        let (x, gap) = solve_maximin(&sub.gradients, &state.allocation())?;
        trace.push(GapRecord {
            iter,
            value: f.value,
            best_value: best,
            gap,
        });
        if gap < options.gap_tol || iter == options.iters {
            break;
        }
        state.update(&x)?;
    }
    let value = big_f(means, covariance, &clamped(state.omega()), pairs, cone, options.zmode)?.value;
    Ok(FwOutcome {
        allocation: state.allocation(),
        value,
        trace,
    })
}
