//! Dense symmetric positive definite solves backed by `faer`'s Cholesky.

use faer::linalg::solvers::Solve;
use faer::{Mat, MatRef, Side};

use crate::error::{Error, Result};

/// Cholesky factorization of a dense SPD matrix, reusable across right-hand sides.
pub struct Cholesky {
    llt: faer::linalg::solvers::Llt<f64>,
    n: usize,
}

impl Cholesky {
    pub fn factor(mat: MatRef<'_, f64>) -> Result<Self> {
        let n = mat.nrows();
        let llt = mat.llt(Side::Lower).map_err(|_| Error::SingularSystem)?;
        Ok(Self { llt, n })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        debug_assert_eq!(rhs.len(), self.n);
        let b = Mat::<f64>::from_fn(self.n, 1, |i, _| rhs[i]);
        let x = self.llt.solve(&b);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }
}

/// `y = M x` for a dense square matrix.
pub fn matvec(mat: MatRef<'_, f64>, x: &[f64]) -> Vec<f64> {
    let n = mat.nrows();
    debug_assert_eq!(x.len(), mat.ncols());
    let mut y = vec![0.0; n];
    // column-major storage: accumulate column by column
    for (j, &xj) in x.iter().enumerate() {
        if xj == 0.0 {
            continue;
        }
        let col = mat.col(j);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += col[i] * xj;
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_spd_system() {
        let m = Mat::<f64>::from_fn(3, 3, |i, j| if i == j { 4.0 } else { -1.0 });
        let chol = Cholesky::factor(m.as_ref()).unwrap();
        let x = chol.solve(&[2.0, 2.0, 2.0]);
        for v in x {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn indefinite_matrix_rejected() {
        let m = Mat::<f64>::from_fn(2, 2, |i, j| if i == j { 1.0 } else { 2.0 });
        assert!(matches!(Cholesky::factor(m.as_ref()), Err(Error::SingularSystem)));
    }

    #[test]
    fn matvec_matches_manual() {
        let m = Mat::<f64>::from_fn(2, 3, |i, j| (i * 3 + j) as f64);
        assert_eq!(matvec(m.as_ref(), &[1.0, 1.0, 1.0]), vec![3.0, 12.0]);
    }
}
