//! Pareto-optimal arm sets under a preference cone and the (Pareto arm,
//! competitor) pairs that the lower-bound objective and the stopping rule
//! minimize over.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cone::{PreferenceCone, TOL_GEOM};
use crate::error::{Error, Result};

/// Sorted indices of the non-dominated arms.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ParetoSet {
    indices: Vec<usize>,
    arms: usize,
}

impl ParetoSet {
    pub fn new(mut indices: Vec<usize>, arms: usize) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if indices.iter().any(|&i| i >= arms) {
            return Err(Error::InvalidArgument(format!("Pareto index out of range for {arms} arms")));
        }
        Ok(Self { indices, arms })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, arm: usize) -> bool {
        self.indices.binary_search(&arm).is_ok()
    }
}

impl std::fmt::Display for ParetoSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.indices.iter().map(usize::to_string).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

/// Which competitors are paired with each Pareto arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairMode {
    /// Every arm outside the Pareto set.
    #[default]
    NonPareto,
    /// Every other arm.
    AllOthers,
}

impl std::str::FromStr for PairMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nonpareto" => Ok(Self::NonPareto),
            "allothers" => Ok(Self::AllOthers),
            other => Err(Error::InvalidArgument(format!("unknown pair mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidatePairs {
    pairs: Vec<(usize, usize)>,
}

impl CandidatePairs {
    pub fn as_slice(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Explicit pair list; rejects `i == j` and duplicates.
    pub fn from_pairs(mut pairs: Vec<(usize, usize)>) -> Result<Self> {
        if pairs.iter().any(|&(i, j)| i == j) {
            return Err(Error::InvalidArgument("candidate pair with i == j".into()));
        }
        pairs.sort_unstable();
        let n = pairs.len();
        pairs.dedup();
        if pairs.len() != n {
            return Err(Error::InvalidArgument("duplicate candidate pairs".into()));
        }
        Ok(Self { pairs })
    }
}

/// The arms no other arm dominates, in ascending index order.
///
/// Arm `i` is dominated when some `j` weakly dominates it without the
/// reverse also holding; arms with equal means are therefore all kept.
pub fn pareto_set(means: &DMatrix<f64>, cone: &PreferenceCone) -> Result<ParetoSet> {
    let k = means.nrows();
    let l = means.ncols();
    if k == 0 {
        return Err(Error::InvalidArgument("instance has no arms".into()));
    }
    if l != cone.dim() {
        return Err(Error::DimensionMismatch {
            expected: cone.dim(),
            got: l,
        });
    }
    if means.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("means must be finite".into()));
    }
    // Project every arm once: y_a = W mu_a. Then j weakly dominates i iff
    // y_j - y_i >= -tol componentwise.
    let mut projected = vec![0.0; k * l];
    let mut mu = vec![0.0; l];
    for a in 0..k {
        for (c, m) in mu.iter_mut().enumerate() {
            *m = means[(a, c)];
        }
        for r in 0..l {
            projected[a * l + r] = cone.project(r, &mu);
        }
    }
    Ok(pareto_from_projected(&projected, k, l))
}

/// Pareto set from row-major projected means `y_a = W mu_a` (`k x l`).
pub(crate) fn pareto_from_projected(projected: &[f64], k: usize, l: usize) -> ParetoSet {
    let weakly = |i: usize, j: usize| {
        let (yi, yj) = (&projected[i * l..(i + 1) * l], &projected[j * l..(j + 1) * l]);
        yi.iter().zip(yj).all(|(a, b)| b - a >= -TOL_GEOM)
    };
    let indices = (0..k)
        .filter(|&i| !(0..k).any(|j| j != i && weakly(i, j) && !weakly(j, i)))
        .collect();
    ParetoSet { indices, arms: k }
}

/// Pairs `(i, j)` with `i` in the Pareto set. In non-Pareto mode an
/// all-Pareto instance falls back to all-others so the list is never empty
/// (unless there is a single arm).
pub fn candidate_pairs(pset: &ParetoSet, mode: PairMode) -> CandidatePairs {
    let k = pset.arms();
    let effective = if mode == PairMode::NonPareto && pset.len() == k {
        PairMode::AllOthers
    } else {
        mode
    };
    let mut pairs = Vec::new();
    for &i in pset.indices() {
        for j in 0..k {
            let keep = match effective {
                PairMode::NonPareto => !pset.contains(j),
                PairMode::AllOthers => j != i,
            };
            if keep {
                pairs.push((i, j));
            }
        }
    }
    CandidatePairs { pairs }
}
