//! Dense LU factorization with partial pivoting for the small saddle systems
//! assembled by the RBF-FD solver.
//!
//! Systems here are (s + 6) x (s + 6) with s <= a few dozen, so a plain
//! row-major `Vec<f64>` implementation beats any sparse or blocked scheme.
//! Conditioning is estimated from the max/min absolute pivot ratio; a ratio
//! beyond [`COND_LIMIT`] fails the factorization.

use crate::error::{Error, Result};

/// Pivot-ratio threshold beyond which a system counts as ill-conditioned.
pub const COND_LIMIT: f64 = 1e12;

/// LU factors of a square matrix, with the row swaps applied during
/// factorization recorded for right-hand-side permutation.
pub struct LuFactor {
    n: usize,
    lu: Vec<f64>,
    swaps: Vec<usize>,
    cond_estimate: f64,
}

impl LuFactor {
    /// Factorizes the row-major `n x n` matrix `a`.
    pub fn new(mut lu: Vec<f64>, n: usize) -> Result<Self> {
        assert_eq!(lu.len(), n * n, "matrix storage must be n*n");
        let mut swaps = vec![0usize; n];
        let mut max_piv: f64 = 0.0;
        let mut min_piv = f64::INFINITY;
        for k in 0..n {
            let mut p = k;
            let mut best = lu[k * n + k].abs();
            for i in k + 1..n {
                let v = lu[i * n + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            swaps[k] = p;
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
            }
            let piv = lu[k * n + k];
            if piv == 0.0 || !piv.is_finite() {
                return Err(Error::IllConditioned {
                    cond: f64::INFINITY,
                    limit: COND_LIMIT,
                });
            }
            max_piv = max_piv.max(piv.abs());
            min_piv = min_piv.min(piv.abs());
            for i in k + 1..n {
                let factor = lu[i * n + k] / piv;
                lu[i * n + k] = factor;
                for j in k + 1..n {
                    lu[i * n + j] -= factor * lu[k * n + j];
                }
            }
        }
        let cond_estimate = max_piv / min_piv;
        if !cond_estimate.is_finite() || cond_estimate > COND_LIMIT {
            return Err(Error::IllConditioned {
                cond: cond_estimate,
                limit: COND_LIMIT,
            });
        }
        Ok(LuFactor {
            n,
            lu,
            swaps,
            cond_estimate,
        })
    }

    /// Max/min absolute pivot ratio observed during factorization.
    pub fn cond_estimate(&self) -> f64 {
        self.cond_estimate
    }

    /// Solves `A x = b` for one right-hand side.
    #[allow(clippy::needless_range_loop)]
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(b.len(), n, "right-hand side length must match");
        let mut x = b.to_vec();
        for k in 0..n {
            x.swap(k, self.swaps[k]);
        }
        // Forward substitution with the unit-diagonal L factor.
        for i in 1..n {
            let mut acc = x[i];
            for j in 0..i {
                acc -= self.lu[i * n + j] * x[j];
            }
            x[i] = acc;
        }
        // Back substitution with U.
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..n {
                acc -= self.lu[i * n + j] * x[j];
            }
            x[i] = acc / self.lu[i * n + i];
        }
        x
    }
}
