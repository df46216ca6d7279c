//! Gaussian bandit instances and running mean estimates.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_len, Error, Result};

/// Default bound on the absolute value of any mean entry.
pub const DEFAULT_M_MAX: f64 = 1e3;

const SYMMETRY_TOL: f64 = 1e-12;

/// `K` arms with `L`-dimensional Gaussian rewards sharing a known covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditInstance {
    name: String,
    /// `K x L`, row `a` is the mean of arm `a`.
    means: DMatrix<f64>,
    covariance: DMatrix<f64>,
    /// Lower Cholesky factor of `covariance`.
    chol: DMatrix<f64>,
    m_max: f64,
}

impl BanditInstance {
    pub fn new(
        name: impl Into<String>,
        means: DMatrix<f64>,
        covariance: DMatrix<f64>,
        m_max: f64,
    ) -> Result<Self> {
        let (k, l) = means.shape();
        if k == 0 || l == 0 {
            return Err(Error::InvalidArgument("instance needs at least one arm and one objective".into()));
        }
        if !(m_max > 0.0) || !m_max.is_finite() {
            return Err(Error::InvalidArgument(format!("m_max must be positive and finite, got {m_max}")));
        }
        if let Some(v) = means.iter().find(|v| !v.is_finite() || v.abs() > m_max) {
            return Err(Error::InvalidArgument(format!("mean entry {v} outside [-{m_max}, {m_max}]")));
        }
        if covariance.shape() != (l, l) {
            return Err(Error::InvalidArgument(format!(
                "covariance must be {l}x{l}, got {}x{}",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        for r in 0..l {
            for c in 0..r {
                if (covariance[(r, c)] - covariance[(c, r)]).abs() > SYMMETRY_TOL {
                    return Err(Error::InvalidArgument("covariance is not symmetric".into()));
                }
            }
        }
        let chol = covariance
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidArgument("covariance is not positive definite".into()))?
            .l();
        Ok(Self {
            name: name.into(),
            means,
            covariance,
            chol,
            m_max,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn arms(&self) -> usize {
        self.means.nrows()
    }

    pub fn objectives(&self) -> usize {
        self.means.ncols()
    }

    pub fn means(&self) -> &DMatrix<f64> {
        &self.means
    }

    pub fn mean(&self, arm: usize) -> Vec<f64> {
        self.means.row(arm).iter().copied().collect()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn m_max(&self) -> f64 {
        self.m_max
    }

    /// One reward vector `mu_arm + A g` with `A` the Cholesky factor and
    /// `g` standard normal.
    pub fn sample<R: Rng + ?Sized>(&self, arm: usize, rng: &mut R) -> Vec<f64> {
        let l = self.objectives();
        let g: Vec<f64> = (0..l).map(|_| rng.sample(StandardNormal)).collect();
        (0..l)
            .map(|r| self.means[(arm, r)] + (0..=r).map(|c| self.chol[(r, c)] * g[c]).sum::<f64>())
            .collect()
    }
}

/// Pull counts and running empirical means.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    t: u64,
    counts: Vec<u64>,
    sums: DMatrix<f64>,
    means: DMatrix<f64>,
}

impl EstimatorState {
    pub fn new(arms: usize, objectives: usize) -> Self {
        Self {
            t: 0,
            counts: vec![0; arms],
            sums: DMatrix::zeros(arms, objectives),
            means: DMatrix::zeros(arms, objectives),
        }
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn means(&self) -> &DMatrix<f64> {
        &self.means
    }

    pub fn update(&mut self, arm: usize, reward: &[f64]) -> Result<()> {
        if arm >= self.counts.len() {
            return Err(Error::InvalidArgument(format!("arm {arm} out of range")));
        }
        check_len(self.sums.ncols(), reward.len())?;
        self.counts[arm] += 1;
        self.t += 1;
        let n = self.counts[arm] as f64;
        for (c, r) in reward.iter().enumerate() {
            self.sums[(arm, c)] += r;
            self.means[(arm, c)] = self.sums[(arm, c)] / n;
        }
        Ok(())
    }

    /// Whether every empirical mean lies in the closed box `[-m_max, m_max]`.
    pub fn in_model_class(&self, m_max: f64) -> bool {
        self.means.iter().all(|v| v.abs() <= m_max)
    }
}
