//! The reduced lower-bound objective for Gaussian rewards.
//!
//! For a Pareto arm `i`, a competitor `j` and a preference direction `z`,
//! the cheapest confusing instance moves the projected means `z^T mu_i` and
//! `z^T mu_j` together. With weights `w` (an allocation, or raw pull
//! counts for the stopping statistic) the cost has the closed form
//!
//! ```text
//! f_ij(w) = (z^T (mu_i - mu_j))^2 / (2 z^T Sigma z (1/w_i + 1/w_j))
//! ```
//!
//! and `F(w) = min_{(i,j)} min_z f_ij(w)`. Directions are restricted to those
//! that separate the pair (`z^T (mu_i - mu_j) > TOL_SEP`); without that
//! filter the minimum over the dual cone is zero for every incomparable
//! pair.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cone::{dot, norm, PreferenceCone};
use crate::error::{check_len, Error, Result};
use crate::fw::{self, FwOptions};
use crate::model::BanditInstance;
use crate::pareto::{candidate_pairs, pareto_set, CandidatePairs, PairMode};

/// Minimum projected gap for a direction to count as separating.
pub const TOL_SEP: f64 = 1e-9;

const SIMPLEX_TOL: f64 = 1e-9;
const PGD_ITERS: usize = 200;
const PGD_STEP: f64 = 0.1;
const GRID_RES_L2: usize = 400;
const GRID_RES_L3: usize = 60;

/// How the inner minimization over preference directions is carried out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZMode {
    /// Separating dual generators only.
    #[default]
    Rays,
    /// Projected gradient over the dual cone, restarted from every generator.
    Constrained,
    /// Exhaustive simplex grid over generator weights (L <= 3); test oracle.
    Grid,
}

impl std::str::FromStr for ZMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rays" => Ok(Self::Rays),
            "constrained" => Ok(Self::Constrained),
            "grid" => Ok(Self::Grid),
            other => Err(Error::InvalidArgument(format!("unknown z-mode `{other}`"))),
        }
    }
}

/// A point of the probability simplex over arms.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation(Vec<f64>);

impl Allocation {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidArgument("empty allocation".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidArgument("allocation weights must be nonnegative".into()));
        }
        let s: f64 = weights.iter().sum();
        if (s - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidArgument(format!("allocation sums to {s}, expected 1")));
        }
        Ok(Self(weights))
    }

    pub fn uniform(arms: usize) -> Self {
        Self(vec![1.0 / arms as f64; arms])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Whether every weight is at least `gamma`.
    pub fn is_floored(&self, gamma: f64) -> bool {
        self.0.iter().all(|&w| w >= gamma)
    }
}

/// Pair cost for an observation family. Only the Gaussian family ships; the
/// trait marks where other exponential families would plug in.
pub trait TransportCost {
    /// Variance of `z^T R` for a single reward `R`.
    fn projected_variance(&self, z: &[f64]) -> f64;

    /// `min` over confusing instances of `sum_k w_k kl(z^T mu_k, z^T mu~_k)`
    /// for a pair whose projected gap is `gap`.
    fn pair_value(&self, z: &[f64], gap: f64, w_i: f64, w_j: f64) -> f64;

    /// Partial derivatives of [`TransportCost::pair_value`] in `w_i` and `w_j`.
    fn pair_gradient(&self, z: &[f64], gap: f64, w_i: f64, w_j: f64) -> (f64, f64);
}

#[derive(Debug, Clone, Copy)]
pub struct GaussianCost<'a> {
    covariance: &'a DMatrix<f64>,
}

impl<'a> GaussianCost<'a> {
    pub fn new(covariance: &'a DMatrix<f64>) -> Self {
        Self { covariance }
    }

    /// `gap^2 / (2 z^T Sigma z)`, the common factor of value and gradient.
    fn scale(&self, z: &[f64], gap: f64) -> f64 {
        gap * gap / (2.0 * self.projected_variance(z))
    }
}

impl TransportCost for GaussianCost<'_> {
    fn projected_variance(&self, z: &[f64]) -> f64 {
        let l = z.len();
        let mut s = 0.0;
        for r in 0..l {
            for c in 0..l {
                s += z[r] * self.covariance[(r, c)] * z[c];
            }
        }
        s
    }

    fn pair_value(&self, z: &[f64], gap: f64, w_i: f64, w_j: f64) -> f64 {
        if w_i <= 0.0 || w_j <= 0.0 {
            return 0.0;
        }
        // 1 / (1/w_i + 1/w_j) = w_i w_j / (w_i + w_j)
        self.scale(z, gap) * w_i * w_j / (w_i + w_j)
    }

    fn pair_gradient(&self, z: &[f64], gap: f64, w_i: f64, w_j: f64) -> (f64, f64) {
        if w_i <= 0.0 || w_j <= 0.0 {
            return (0.0, 0.0);
        }
        let c = self.scale(z, gap);
        let s2 = (w_i + w_j) * (w_i + w_j);
        (c * w_j * w_j / s2, c * w_i * w_i / s2)
    }
}

/// One (Pareto arm, competitor) evaluation at a fixed weight vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PairEvaluation {
    pub i: usize,
    pub j: usize,
    pub value: f64,
    /// Unit minimizing direction.
    pub z_star: Vec<f64>,
    /// Gradient of `f_ij` with respect to the weights; zero off `{i, j}`.
    pub gradient: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveValue {
    pub value: f64,
    pub argmin_pair: (usize, usize),
    pub evaluations: Vec<PairEvaluation>,
}

/// `e_i - e_j`.
pub fn delta_policy(i: usize, j: usize, arms: usize) -> Result<Vec<f64>> {
    if i == j {
        return Err(Error::InvalidArgument("delta_policy needs i != j".into()));
    }
    if i >= arms || j >= arms {
        return Err(Error::InvalidArgument(format!("arm index out of range for {arms} arms")));
    }
    let mut d = vec![0.0; arms];
    d[i] = 1.0;
    d[j] = -1.0;
    Ok(d)
}

/// `M Delta(i, j) = mu_i - mu_j`.
fn mean_gap(means: &DMatrix<f64>, i: usize, j: usize) -> Vec<f64> {
    (0..means.ncols()).map(|c| means[(i, c)] - means[(j, c)]).collect()
}

fn check_pair(means: &DMatrix<f64>, weights: &[f64], i: usize, j: usize) -> Result<()> {
    let k = means.nrows();
    check_len(k, weights.len())?;
    if i == j || i >= k || j >= k {
        return Err(Error::InvalidArgument(format!("invalid pair ({i}, {j}) for {k} arms")));
    }
    Ok(())
}

/// Closed-form Gaussian pair cost along direction `z`.
pub fn gaussian_pair_value(
    means: &DMatrix<f64>,
    covariance: &DMatrix<f64>,
    weights: &[f64],
    i: usize,
    j: usize,
    z: &[f64],
) -> Result<f64> {
    check_pair(means, weights, i, j)?;
    check_len(means.ncols(), z.len())?;
    let cost = GaussianCost::new(covariance);
    if cost.projected_variance(z) <= 0.0 {
        return Err(Error::Internal("z^T Sigma z <= 0; covariance is not positive definite".into()));
    }
    let gap = dot(z, &mean_gap(means, i, j));
    Ok(cost.pair_value(z, gap, weights[i], weights[j]))
}

/// Gradient of the pair cost in the weights at a fixed direction `z`.
pub fn pair_gradient(
    means: &DMatrix<f64>,
    covariance: &DMatrix<f64>,
    weights: &[f64],
    i: usize,
    j: usize,
    z: &[f64],
) -> Result<Vec<f64>> {
    check_pair(means, weights, i, j)?;
    check_len(means.ncols(), z.len())?;
    let gap = dot(z, &mean_gap(means, i, j));
    let (gi, gj) = GaussianCost::new(covariance).pair_gradient(z, gap, weights[i], weights[j]);
    let mut g = vec![0.0; weights.len()];
    g[i] = gi;
    g[j] = gj;
    Ok(g)
}

/// `y = M Delta - (z^T M Delta) z / |z|^2`, the projection of the mean gap
/// onto the hyperplane orthogonal to `z`.
pub fn polar_vector(means: &DMatrix<f64>, i: usize, j: usize, z: &[f64]) -> Result<Vec<f64>> {
    check_len(means.ncols(), z.len())?;
    let zz = dot(z, z);
    if zz == 0.0 {
        return Err(Error::InvalidArgument("polar_vector needs a nonzero direction".into()));
    }
    let d = mean_gap(means, i, j);
    let s = dot(z, &d) / zz;
    Ok(d.iter().zip(z).map(|(dv, zv)| dv - s * zv).collect())
}

/// Minimizes the pair cost over separating preference directions.
/// Returns the unit minimizer and the value; a pair with no separating
/// direction has value 0 and reports the first generator.
pub fn min_over_z(
    means: &DMatrix<f64>,
    covariance: &DMatrix<f64>,
    weights: &[f64],
    i: usize,
    j: usize,
    cone: &PreferenceCone,
    zmode: ZMode,
) -> Result<(Vec<f64>, f64)> {
    check_pair(means, weights, i, j)?;
    check_len(cone.dim(), means.ncols())?;
    let cost = GaussianCost::new(covariance);
    let d = mean_gap(means, i, j);
    let (wi, wj) = (weights[i], weights[j]);
    Ok(match zmode {
        ZMode::Rays => min_over_rays(&cost, cone, &d, wi, wj),
        ZMode::Constrained => min_constrained(&cost, cone, &d, wi, wj),
        ZMode::Grid => min_over_grid(&cost, cone, &d, wi, wj)?,
    })
}

pub(crate) fn min_over_rays(
    cost: &impl TransportCost,
    cone: &PreferenceCone,
    d: &[f64],
    wi: f64,
    wj: f64,
) -> (Vec<f64>, f64) {
    let mut best: Option<(usize, f64)> = None;
    for r in 0..cone.dim() {
        let z = cone.row(r);
        let gap = dot(z, d);
        if gap > TOL_SEP {
            let v = cost.pair_value(z, gap, wi, wj);
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((r, v));
            }
        }
    }
    match best {
        Some((r, v)) => (cone.row(r).to_vec(), v),
        None => (cone.row(0).to_vec(), 0.0),
    }
}

/// Value of the generator combination `lambda`, or `None` when the
/// normalized direction does not separate the pair.
fn combination_value(
    cost: &impl TransportCost,
    cone: &PreferenceCone,
    d: &[f64],
    wi: f64,
    wj: f64,
    lambda: &[f64],
) -> Option<(Vec<f64>, f64)> {
    let z = cone.combine_generators(lambda);
    let n = norm(&z);
    if n < 1e-12 {
        return None;
    }
    let z: Vec<f64> = z.into_iter().map(|v| v / n).collect();
    let gap = dot(&z, d);
    if gap > TOL_SEP {
        let v = cost.pair_value(&z, gap, wi, wj);
        Some((z, v))
    } else {
        None
    }
}

fn min_constrained(
    cost: &impl TransportCost,
    cone: &PreferenceCone,
    d: &[f64],
    wi: f64,
    wj: f64,
) -> (Vec<f64>, f64) {
    let l = cone.dim();
    // a = W d, B = W Sigma W^T: value(lambda) is proportional to
    // (lambda.a)^2 / (lambda^T B lambda).
    let a: Vec<f64> = (0..l).map(|r| dot(cone.row(r), d)).collect();
    let b: Vec<Vec<f64>> = (0..l)
        .map(|r| {
            (0..l)
                .map(|c| {
                    let zr = cone.row(r);
                    let zc = cone.row(c);
                    // (z_r + z_c)^T Sigma (z_r + z_c) expands to the cross term.
                    let both: Vec<f64> = zr.iter().zip(zc).map(|(x, y)| x + y).collect();
                    0.5 * (cost.projected_variance(&both)
                        - cost.projected_variance(zr)
                        - cost.projected_variance(zc))
                })
                .collect()
        })
        .collect();

    let mut starts: Vec<Vec<f64>> = (0..l)
        .map(|r| {
            let mut e = vec![0.0; l];
            e[r] = 1.0;
            e
        })
        .collect();
    starts.push(vec![1.0 / l as f64; l]);

    let mut best: Option<(Vec<f64>, f64)> = None;
    let consider = |cand: Option<(Vec<f64>, f64)>, best: &mut Option<(Vec<f64>, f64)>| {
        if let Some((z, v)) = cand {
            if best.as_ref().is_none_or(|(_, b)| v < *b) {
                *best = Some((z, v));
            }
        }
    };

    for start in starts {
        let first = combination_value(cost, cone, d, wi, wj, &start);
        if first.is_none() {
            continue;
        }
        consider(first, &mut best);
        let mut lambda = start;
        for iter in 1..=PGD_ITERS {
            let la = dot(&lambda, &a);
            let bl: Vec<f64> = b.iter().map(|row| dot(row, &lambda)).collect();
            let lbl = dot(&lambda, &bl);
            if la <= 0.0 || lbl <= 0.0 {
                break;
            }
            // Gradient of ln value; the value is scale free in lambda.
            let grad: Vec<f64> = a
                .iter()
                .zip(&bl)
                .map(|(ar, br)| 2.0 * ar / la - 2.0 * br / lbl)
                .collect();
            let step = PGD_STEP / (iter as f64).sqrt();
            let target: Vec<f64> = lambda.iter().zip(&grad).map(|(x, g)| x - step * g).collect();
            let mut next = project_to_simplex(&target);
            let mut cand = combination_value(cost, cone, d, wi, wj, &next);
            let mut halvings = 0;
            while cand.is_none() && halvings < 30 {
                next = lambda.iter().zip(&next).map(|(x, y)| 0.5 * (x + y)).collect();
                cand = combination_value(cost, cone, d, wi, wj, &next);
                halvings += 1;
            }
            if cand.is_none() {
                break;
            }
            lambda = next;
            consider(cand, &mut best);
        }
    }
    best.unwrap_or_else(|| (cone.row(0).to_vec(), 0.0))
}

fn min_over_grid(
    cost: &impl TransportCost,
    cone: &PreferenceCone,
    d: &[f64],
    wi: f64,
    wj: f64,
) -> Result<(Vec<f64>, f64)> {
    let l = cone.dim();
    let mut grid: Vec<Vec<f64>> = Vec::new();
    match l {
        1 => grid.push(vec![1.0]),
        2 => {
            for a in 0..=GRID_RES_L2 {
                let x = a as f64 / GRID_RES_L2 as f64;
                grid.push(vec![x, 1.0 - x]);
            }
        }
        3 => {
            let n = GRID_RES_L3;
            for a in 0..=n {
                for b in 0..=(n - a) {
                    let c = n - a - b;
                    grid.push(vec![a as f64 / n as f64, b as f64 / n as f64, c as f64 / n as f64]);
                }
            }
        }
        _ => {
            return Err(Error::InvalidArgument(format!("grid z-mode supports L <= 3, got {l}")));
        }
    }
    let mut best: Option<(Vec<f64>, f64)> = None;
    for lambda in grid {
        if let Some((z, v)) = combination_value(cost, cone, d, wi, wj, &lambda) {
            if best.as_ref().is_none_or(|(_, b)| v < *b) {
                best = Some((z, v));
            }
        }
    }
    Ok(best.unwrap_or_else(|| (cone.row(0).to_vec(), 0.0)))
}

/// Euclidean projection onto the probability simplex.
pub(crate) fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &x) in u.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (k + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// `F(w) = min over pairs of min over z`, with every pair's value, minimizer
/// and gradient. Ties go to the lexicographically smallest pair.
pub fn big_f(
    means: &DMatrix<f64>,
    covariance: &DMatrix<f64>,
    weights: &[f64],
    pairs: &CandidatePairs,
    cone: &PreferenceCone,
    zmode: ZMode,
) -> Result<ObjectiveValue> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("big_f needs at least one candidate pair".into()));
    }
    let cost = GaussianCost::new(covariance);
    let mut evaluations = Vec::with_capacity(pairs.len());
    for &(i, j) in pairs.as_slice() {
        let (z, value) = min_over_z(means, covariance, weights, i, j, cone, zmode)?;
        let gap = dot(&z, &mean_gap(means, i, j));
        let mut gradient = vec![0.0; weights.len()];
        if value > 0.0 {
            let (gi, gj) = cost.pair_gradient(&z, gap, weights[i], weights[j]);
            gradient[i] = gi;
            gradient[j] = gj;
        }
        evaluations.push(PairEvaluation {
            i,
            j,
            value,
            z_star: z,
            gradient,
        });
    }
    let mut best = 0;
    for (n, e) in evaluations.iter().enumerate() {
        let b = &evaluations[best];
        if e.value < b.value || (e.value == b.value && (e.i, e.j) < (b.i, b.j)) {
            best = n;
        }
    }
    Ok(ObjectiveValue {
        value: evaluations[best].value,
        argmin_pair: (evaluations[best].i, evaluations[best].j),
        evaluations,
    })
}

/// Value-only version of [`big_f`], used by the stopping statistic.
pub(crate) fn min_pair_value(
    means: &DMatrix<f64>,
    covariance: &DMatrix<f64>,
    weights: &[f64],
    pairs: &CandidatePairs,
    cone: &PreferenceCone,
    zmode: ZMode,
) -> Result<f64> {
    let cost = GaussianCost::new(covariance);
    let mut best = f64::INFINITY;
    let mut d = vec![0.0; means.ncols()];
    for &(i, j) in pairs.as_slice() {
        for (c, dv) in d.iter_mut().enumerate() {
            *dv = means[(i, c)] - means[(j, c)];
        }
        let v = match zmode {
            ZMode::Rays => min_over_rays(&cost, cone, &d, weights[i], weights[j]).1,
            ZMode::Constrained => min_constrained(&cost, cone, &d, weights[i], weights[j]).1,
            ZMode::Grid => min_over_grid(&cost, cone, &d, weights[i], weights[j])?.1,
        };
        best = best.min(v);
    }
    Ok(best)
}

/// Optimal allocation and inverse characteristic time of an instance,
/// computed by Frank-Wolfe on its true means.
pub fn characteristic_time_inverse(
    instance: &BanditInstance,
    cone: &PreferenceCone,
    fw_iters: usize,
    tol: f64,
) -> Result<(Allocation, f64)> {
    let pset = pareto_set(instance.means(), cone)?;
    let pairs = candidate_pairs(&pset, PairMode::NonPareto);
    let outcome = fw::optimize_allocation(
        instance.means(),
        instance.covariance(),
        cone,
        &pairs,
        &FwOptions {
            iters: fw_iters,
            gap_tol: tol,
            ..FwOptions::default()
        },
    )?;
    Ok((outcome.allocation, outcome.value))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    /// `ln((1 + ln t) / delta)`.
    #[default]
    Practical,
    /// Mixture-martingale threshold with a provable error guarantee.
    Theoretical,
}

impl std::str::FromStr for ThresholdMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "practical" => Ok(Self::Practical),
            "theoretical" => Ok(Self::Theoretical),
            other => Err(Error::InvalidArgument(format!("unknown threshold mode `{other}`"))),
        }
    }
}

/// Stopping threshold `c(t, delta)`.
pub fn threshold(t: u64, delta: f64, mode: ThresholdMode, counts: &[u64]) -> Result<f64> {
    Threshold::new(mode, delta, counts.len())?.value(t, counts)
}

/// [`threshold`] with the `delta`-only part precomputed, for use inside a
/// run loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    mode: ThresholdMode,
    delta: f64,
    /// `K G(ln(1/delta) / K)`; unused in practical mode.
    constant: f64,
}

impl Threshold {
    pub fn new(mode: ThresholdMode, delta: f64, arms: usize) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
        }
        let constant = match mode {
            ThresholdMode::Practical => 0.0,
            ThresholdMode::Theoretical => {
                let k = arms.max(1) as f64;
                k * calibration_g((1.0 / delta).ln() / k)
            }
        };
        Ok(Self { mode, delta, constant })
    }

    pub fn value(&self, t: u64, counts: &[u64]) -> Result<f64> {
        if t < 1 {
            return Err(Error::InvalidArgument("threshold needs t >= 1".into()));
        }
        match self.mode {
            ThresholdMode::Practical => Ok(((1.0 + (t as f64).ln()) / self.delta).ln()),
            ThresholdMode::Theoretical => {
                if counts.is_empty() || counts.contains(&0) {
                    return Err(Error::InvalidArgument(
                        "theoretical threshold needs every arm pulled at least once".into(),
                    ));
                }
                let per_arm: f64 = counts.iter().map(|&n| 3.0 * (1.0 + (n as f64).ln()).ln()).sum();
                Ok(per_arm + self.constant)
            }
        }
    }
}

/// Inverse of `h(u) = u - ln u` on the branch `u >= 1`.
pub(crate) fn h_inverse(y: f64) -> f64 {
    if y <= 1.0 {
        return 1.0;
    }
    let mut u = y + y.ln();
    for _ in 0..50 {
        let step = (u - u.ln() - y) / (1.0 - 1.0 / u);
        u -= step;
        if u < 1.0 {
            u = 1.0 + 1e-12;
        }
        if step.abs() < 1e-12 {
            break;
        }
    }
    u
}

fn h_tilde(z: f64, x: f64) -> f64 {
    if x >= h_inverse(1.0 / z.ln()) {
        let u = h_inverse(x);
        (1.0 / u).exp() * u
    } else {
        z * (x - z.ln().ln())
    }
}

/// `G(x) = 2 h~_{3/2}((h^{-1}(1 + x) + ln(pi^2 / 3)) / 2)`.
pub(crate) fn calibration_g(x: f64) -> f64 {
    let pi2_3 = std::f64::consts::PI * std::f64::consts::PI / 3.0;
    2.0 * h_tilde(1.5, (h_inverse(1.0 + x) + pi2_3.ln()) / 2.0)
}
