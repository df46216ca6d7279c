//! Dense tableau simplex for `max 1^T q s.t. A q <= 1, q >= 0` with `A > 0`.
//!
//! The right-hand side is nonnegative, so the all-slack basis is feasible
//! and no phase one is needed. Bland's rule rules out cycling.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-12;
const MAX_PIVOTS: usize = 10_000;

/// Returns the optimal dual vector `u` (one entry per row of `A`), which
/// solves `min 1^T u s.t. A^T u >= 1, u >= 0`.
pub(super) fn max_sum_under_unit_bounds(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    let (rows, cols) = a.shape();
    let width = cols + rows + 1;
    let rhs = width - 1;
    // Tableau rows 0..rows are constraints; row `rows` holds reduced costs
    // c_j - c_B B^{-1} A_j.
    let mut tab = vec![0.0; (rows + 1) * width];
    for r in 0..rows {
        for c in 0..cols {
            tab[r * width + c] = a[(r, c)];
        }
        tab[r * width + cols + r] = 1.0;
        tab[r * width + rhs] = 1.0;
    }
    for c in 0..cols {
        tab[rows * width + c] = 1.0;
    }
    let mut basis: Vec<usize> = (cols..cols + rows).collect();

    for _ in 0..MAX_PIVOTS {
        let obj = &tab[rows * width..];
        let Some(enter) = (0..rhs).find(|&c| obj[c] > PIVOT_TOL) else {
            let obj = &tab[rows * width..];
            return Ok((0..rows).map(|r| (-obj[cols + r]).max(0.0)).collect());
        };
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..rows {
            let coef = tab[r * width + enter];
            if coef > PIVOT_TOL {
                let ratio = tab[r * width + rhs] / coef;
                let better = match leave {
                    None => true,
                    Some((lr, lratio)) => {
                        ratio < lratio - PIVOT_TOL
                            || (ratio <= lratio + PIVOT_TOL && basis[r] < basis[lr])
                    }
                };
                if better {
                    leave = Some((r, ratio));
                }
            }
        }
        let Some((pr, _)) = leave else {
            return Err(Error::Internal(format!(
                "maximin LP unbounded in column {enter} ({rows}x{cols}); payoff must be positive"
            )));
        };
        let pivot = tab[pr * width + enter];
        for c in 0..width {
            tab[pr * width + c] /= pivot;
        }
        for r in 0..=rows {
            if r == pr {
                continue;
            }
            let f = tab[r * width + enter];
            if f != 0.0 {
                for c in 0..width {
                    tab[r * width + c] -= f * tab[pr * width + c];
                }
            }
        }
        basis[pr] = enter;
    }
    Err(Error::Internal(format!("maximin LP did not converge in {MAX_PIVOTS} pivots ({rows}x{cols})")))
}
