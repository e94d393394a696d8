//! Cholesky factorization with deterministic jitter escalation.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Diagonal jitter tried, in order, when a plain factorization fails.
pub const JITTER_SEQUENCE: [f64; 5] = [1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

/// A lower Cholesky factor together with the diagonal jitter that was needed.
#[derive(Debug, Clone)]
pub struct Factor {
    pub chol: Cholesky<f64, Dyn>,
    pub jitter: f64,
}

impl Factor {
    pub fn l(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    /// Solves `L x = b` for the lower factor `L`.
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol
            .l_dirty()
            .solve_lower_triangular(b)
            .expect("cholesky factor has a nonzero diagonal")
    }

    /// Solves `L X = B` column-wise.
    pub fn solve_lower_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol
            .l_dirty()
            .solve_lower_triangular(b)
            .expect("cholesky factor has a nonzero diagonal")
    }

    pub fn log_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }
}

/// Factorizes a symmetric matrix, escalating diagonal jitter through
/// [`JITTER_SEQUENCE`] until it is positive definite.
pub fn jittered_cholesky(a: &DMatrix<f64>) -> Result<Factor> {
    if a.nrows() != a.ncols() {
        return Err(Error::Data(format!(
            "cholesky of a non-square {}x{} matrix",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".into()));
    }
    if let Some(chol) = Cholesky::new(a.clone()) {
        return Ok(Factor { chol, jitter: 0.0 });
    }
    for &jitter in &JITTER_SEQUENCE {
        let mut m = a.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(m) {
            return Ok(Factor { chol, jitter });
        }
    }
    Err(Error::Numerical(format!(
        "matrix of size {} not positive definite after jitter {:e}",
        a.nrows(),
        JITTER_SEQUENCE[JITTER_SEQUENCE.len() - 1]
    )))
}
