//! Polyhedral preference cones `{x : Wx >= 0}` with square, invertible,
//! row-normalized `W`.
//!
//! The rows of `W` generate the dual cone, so they double as the finite set
//! of preference directions used by the objective and the stopping rule.
//! Arm `j` weakly dominates arm `i` when `mu_j - mu_i` lies in the cone.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Absolute tolerance for every geometric comparison.
pub const TOL_GEOM: f64 = 1e-10;

const ROW_NORM_TOL: f64 = 1e-12;
const MIN_ABS_DET: f64 = 1e-10;
const DUAL_WEIGHT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dominance {
    Weak,
    Strict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceCone {
    dim: usize,
    /// Row-major `W`.
    rows: Vec<f64>,
    /// Row-major `W^{-1}`.
    inverse: Vec<f64>,
}

impl PreferenceCone {
    /// Builds a cone from its half-space matrix. Rows must already be unit
    /// norm; the matrix must be square and invertible.
    pub fn new(w: DMatrix<f64>) -> Result<Self> {
        let dim = w.ncols();
        if dim == 0 {
            return Err(Error::InvalidArgument("cone dimension must be positive".into()));
        }
        if w.nrows() != dim {
            return Err(Error::InvalidArgument(format!(
                "half-space matrix must be square, got {}x{}",
                w.nrows(),
                dim
            )));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("half-space matrix has non-finite entries".into()));
        }
        for r in 0..dim {
            let norm = w.row(r).norm();
            if (norm - 1.0).abs() > ROW_NORM_TOL {
                return Err(Error::InvalidArgument(format!(
                    "row {r} of the half-space matrix has norm {norm}, expected 1"
                )));
            }
        }
        let det = w.determinant();
        if det.abs() <= MIN_ABS_DET {
            return Err(Error::InvalidArgument(format!(
                "half-space matrix is singular (|det| = {:e})",
                det.abs()
            )));
        }
        let inv = w
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidArgument("half-space matrix is not invertible".into()))?;
        Ok(Self {
            dim,
            rows: row_major(&w),
            inverse: row_major(&inv),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidArgument("ragged half-space matrix".into()));
        }
        Self::new(DMatrix::from_fn(m, n, |r, c| rows[r][c]))
    }

    /// The right orthant `R^dim_+`, i.e. componentwise ordering.
    pub fn orthant(dim: usize) -> Result<Self> {
        Self::new(DMatrix::identity(dim, dim))
    }

    /// Planar cone of all vectors whose angle lies in `[theta_lo, theta_hi]`.
    pub fn angle(theta_lo: f64, theta_hi: f64) -> Result<Self> {
        let width = theta_hi - theta_lo;
        if !width.is_finite() || width <= 0.0 || width >= std::f64::consts::PI {
            return Err(Error::InvalidArgument(format!(
                "angle cone aperture must lie in (0, pi), got {width}"
            )));
        }
        // Inward normals of the bounding rays: the upper ray rotated
        // clockwise, the lower ray rotated counter-clockwise.
        let w = DMatrix::from_row_slice(
            2,
            2,
            &[
                theta_hi.sin(),
                -theta_hi.cos(),
                -theta_lo.sin(),
                theta_lo.cos(),
            ],
        );
        Self::new(w)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn halfspace_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.rows)
    }

    /// Row `r` of `W`.
    pub fn row(&self, r: usize) -> &[f64] {
        &self.rows[r * self.dim..(r + 1) * self.dim]
    }

    /// Component `r` of `Wx`.
    #[inline]
    pub fn project(&self, r: usize, x: &[f64]) -> f64 {
        dot(self.row(r), x)
    }

    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        check_len(self.dim, x.len())?;
        Ok((0..self.dim).all(|r| self.project(r, x) >= -TOL_GEOM))
    }

    /// Whether arm `j` (mean `mu_j`) dominates arm `i` (mean `mu_i`).
    pub fn dominates(&self, mu_i: &[f64], mu_j: &[f64], mode: Dominance) -> Result<bool> {
        check_len(self.dim, mu_i.len())?;
        check_len(self.dim, mu_j.len())?;
        let diff: Vec<f64> = mu_j.iter().zip(mu_i).map(|(a, b)| a - b).collect();
        Ok(match mode {
            Dominance::Weak => (0..self.dim).all(|r| self.project(r, &diff) >= -TOL_GEOM),
            Dominance::Strict => (0..self.dim).all(|r| self.project(r, &diff) > TOL_GEOM),
        })
    }

    /// Generators of the dual cone (the rows of `W`).
    pub fn dual_generators(&self) -> Vec<PreferenceVector> {
        (0..self.dim)
            .map(|r| PreferenceVector(self.row(r).to_vec()))
            .collect()
    }

    pub fn polar_contains(&self, y: &[f64]) -> Result<bool> {
        check_len(self.dim, y.len())?;
        Ok((0..self.dim).all(|r| self.project(r, y) <= TOL_GEOM))
    }

    /// Unit extreme rays of the cone (normalized columns of `W^{-1}`).
    pub fn rays(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|c| {
                let col: Vec<f64> = (0..self.dim).map(|r| self.inverse[r * self.dim + c]).collect();
                let n = norm(&col);
                col.into_iter().map(|v| v / n).collect()
            })
            .collect()
    }

    /// `self ⊆ other`, checked on the extreme rays of `self`.
    pub fn is_subcone_of(&self, other: &PreferenceCone) -> bool {
        self.dim == other.dim
            && self
                .rays()
                .iter()
                .all(|ray| (0..other.dim).all(|r| other.project(r, ray) >= -TOL_GEOM))
    }

    /// Weights `lambda` with `W^T lambda = z`.
    pub fn dual_weights(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim, z.len())?;
        // lambda = W^{-T} z, i.e. lambda_c = sum_r inv[r][c] z_r.
        Ok((0..self.dim)
            .map(|c| (0..self.dim).map(|r| self.inverse[r * self.dim + c] * z[r]).sum())
            .collect())
    }

    /// `W^T lambda`.
    pub fn combine_generators(&self, lambda: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.dim];
        for (r, &l) in lambda.iter().enumerate() {
            for (zc, w) in z.iter_mut().zip(self.row(r)) {
                *zc += l * w;
            }
        }
        z
    }
}

/// A unit preference direction in the dual cone.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceVector(Vec<f64>);

impl PreferenceVector {
    pub fn new(z: Vec<f64>, cone: &PreferenceCone) -> Result<Self> {
        let n = norm(&z);
        if (n - 1.0).abs() > ROW_NORM_TOL {
            return Err(Error::InvalidArgument(format!("preference vector has norm {n}, expected 1")));
        }
        let lambda = cone.dual_weights(&z)?;
        if lambda.iter().any(|&l| l < -DUAL_WEIGHT_TOL) {
            return Err(Error::InvalidArgument("preference vector is outside the dual cone".into()));
        }
        Ok(Self(z))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Serialized cone description used inside instance files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ConeSpec {
    Orthant,
    Halfspace {
        #[serde(rename = "W")]
        w: Vec<Vec<f64>>,
    },
    Angle {
        lo: f64,
        hi: f64,
    },
}

impl ConeSpec {
    pub fn build(&self, dim: usize) -> Result<PreferenceCone> {
        let cone = match self {
            ConeSpec::Orthant => PreferenceCone::orthant(dim)?,
            ConeSpec::Halfspace { w } => PreferenceCone::from_rows(w)?,
            ConeSpec::Angle { lo, hi } => PreferenceCone::angle(*lo, *hi)?,
        };
        if cone.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: cone.dim(),
            });
        }
        Ok(cone)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for r in 0..m.nrows() {
        out.extend(m.row(r).iter().copied());
    }
    out
}
