//! Thomas algorithm for constant tridiagonal systems, factorised once and
//! reused for every right-hand side.

use crate::error::{Error, Result};

/// LU factors of a tridiagonal matrix with sub-diagonal `lower`, diagonal
/// `diag` and super-diagonal `upper` (`lower[0]` and `upper[n-1]` unused).
#[derive(Clone, Debug)]
pub struct TridiagonalFactor {
    lower: Vec<f64>,
    upper_mod: Vec<f64>,
    pivot_inv: Vec<f64>,
}

impl TridiagonalFactor {
    pub fn new(lower: &[f64], diag: &[f64], upper: &[f64]) -> Result<Self> {
        let n = diag.len();
        if lower.len() != n || upper.len() != n || n == 0 {
            return Err(Error::Shape(
                "tridiagonal bands must share a nonzero length".into(),
            ));
        }
        let mut upper_mod = vec![0.0; n];
        let mut pivot_inv = vec![0.0; n];
        let mut prev_c = 0.0;
        for i in 0..n {
            let pivot = diag[i] - if i > 0 { lower[i] * prev_c } else { 0.0 };
            if pivot.abs() < 1e-300 || !pivot.is_finite() {
                return Err(Error::Numerical(format!("zero pivot at row {i}")));
            }
            pivot_inv[i] = 1.0 / pivot;
            upper_mod[i] = upper[i] * pivot_inv[i];
            prev_c = upper_mod[i];
        }
        Ok(TridiagonalFactor {
            lower: lower.to_vec(),
            upper_mod,
            pivot_inv,
        })
    }

    pub fn len(&self) -> usize {
        self.pivot_inv.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pivot_inv.is_empty()
    }

    /// Overwrite `rhs` with the solution.
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = self.len();
        debug_assert_eq!(rhs.len(), n);
        rhs[0] *= self.pivot_inv[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.lower[i] * rhs[i - 1]) * self.pivot_inv[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.upper_mod[i] * rhs[i + 1];
        }
    }
}
