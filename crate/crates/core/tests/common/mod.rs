//! Independent reference computations shared by the integration tests.
//! Nothing here calls into the crate's geometry or objective code.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn random_means<R: Rng>(rng: &mut R, k: usize, l: usize) -> DMatrix<f64> {
    DMatrix::from_fn(k, l, |_, _| rng.random::<f64>())
}

/// `A A^T + 0.1 I` with `A` uniform in `[-1, 1]`.
pub fn random_spd<R: Rng>(rng: &mut R, l: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(l, l, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(l, l) * 0.1
}

/// A simplex point with every entry at least `floor / k`.
pub fn random_interior<R: Rng>(rng: &mut R, k: usize, floor: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| floor + rng.random::<f64>()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Whether the nonzero planar vector `d` has its polar angle in `[lo, hi]`.
pub fn in_angle_cone(d: &[f64], lo: f64, hi: f64) -> bool {
    if d[0] == 0.0 && d[1] == 0.0 {
        return true;
    }
    let tau = std::f64::consts::TAU;
    let a = d[1].atan2(d[0]);
    // Shift the angle into [lo, lo + 2 pi).
    let shifted = lo + (a - lo).rem_euclid(tau);
    shifted <= hi
}

/// Pareto set by pairwise comparison under a membership test for the cone.
/// `j` dominates `i` when `mu_j - mu_i` lies in the cone and its negation
/// does not.
pub fn brute_force_pareto(means: &DMatrix<f64>, in_cone: impl Fn(&[f64]) -> bool) -> Vec<usize> {
    let k = means.nrows();
    let l = means.ncols();
    let diff = |a: usize, b: usize| -> Vec<f64> { (0..l).map(|c| means[(a, c)] - means[(b, c)]).collect() };
    (0..k)
        .filter(|&i| {
            !(0..k).any(|j| {
                if j == i {
                    return false;
                }
                let d = diff(j, i);
                let neg: Vec<f64> = d.iter().map(|v| -v).collect();
                in_cone(&d) && !in_cone(&neg)
            })
        })
        .collect()
}

pub fn orthant_member(d: &[f64]) -> bool {
    d.iter().all(|&v| v >= 0.0)
}

/// Projected-Gaussian confusion cost at direction `z`: minimizes
/// `sum_k w_k (z^T mu_k - u_k)^2 / (2 z^T Sigma z)` over `u` with `u_i = u_j`
/// by solving the KKT system of the equality-constrained least squares.
pub fn projection_pair_value(
    means: &DMatrix<f64>,
    cov: &DMatrix<f64>,
    w: &[f64],
    i: usize,
    j: usize,
    z: &[f64],
) -> f64 {
    let k = means.nrows();
    let zv = DVector::from_column_slice(z);
    let s0 = (zv.transpose() * cov * &zv)[(0, 0)];
    let a: Vec<f64> = (0..k).map(|r| (means.row(r) * &zv)[(0, 0)]).collect();
    // Unknowns (u_0..u_{k-1}, lambda); stationarity 2 w_k (u_k - a_k) + lambda c_k = 0, c = e_i - e_j.
    let n = k + 1;
    let mut m = DMatrix::zeros(n, n);
    let mut rhs = DVector::zeros(n);
    for r in 0..k {
        m[(r, r)] = 2.0 * w[r];
        rhs[r] = 2.0 * w[r] * a[r];
    }
    m[(i, k)] = 1.0;
    m[(j, k)] = -1.0;
    m[(k, i)] = 1.0;
    m[(k, j)] = -1.0;
    let sol = m.lu().solve(&rhs).expect("KKT system is nonsingular for positive weights");
    (0..k).map(|r| w[r] * (a[r] - sol[r]).powi(2)).sum::<f64>() / (2.0 * s0)
}

/// `F(w)` for an orthant cone: minimum over Pareto/non-Pareto pairs of the
/// smallest separated coordinate cost. Falls back to all ordered pairs out
/// of the Pareto set when every arm is Pareto optimal.
pub fn orthant_big_f(means: &DMatrix<f64>, variances: &[f64], w: &[f64]) -> f64 {
    let k = means.nrows();
    let l = means.ncols();
    let pset = brute_force_pareto(means, orthant_member);
    let mut pairs = Vec::new();
    for &i in &pset {
        for j in 0..k {
            if j != i && (pset.len() == k || !pset.contains(&j)) {
                pairs.push((i, j));
            }
        }
    }
    let mut best = f64::INFINITY;
    for (i, j) in pairs {
        let h = if w[i] <= 0.0 || w[j] <= 0.0 { 0.0 } else { w[i] * w[j] / (w[i] + w[j]) };
        let mut pair = f64::INFINITY;
        for c in 0..l {
            let gap = means[(i, c)] - means[(j, c)];
            if gap > 1e-9 {
                pair = pair.min(gap * gap / (2.0 * variances[c]) * h);
            }
        }
        if !pair.is_finite() {
            pair = 0.0;
        }
        best = best.min(pair);
    }
    best
}

/// All simplex points of `k <= 3` arms with coordinates on the grid `1/n`.
pub fn simplex_grid(k: usize, n: usize) -> Vec<Vec<f64>> {
    let step = 1.0 / n as f64;
    match k {
        1 => vec![vec![1.0]],
        2 => (0..=n).map(|a| vec![a as f64 * step, (n - a) as f64 * step]).collect(),
        3 => {
            let mut out = Vec::new();
            for a in 0..=n {
                for b in 0..=(n - a) {
                    out.push(vec![a as f64 * step, b as f64 * step, (n - a - b) as f64 * step]);
                }
            }
            out
        }
        _ => panic!("grid only for k <= 3"),
    }
}
