//! Correlation matrices and a jitter-tolerant Cholesky factorization.

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default upper bound on the diagonal jitter added before giving up.
pub const DEFAULT_JITTER_TOL: f64 = 1e-8;

const SYMMETRY_TOL: f64 = 1e-10;

/// Lower-triangular factor `L` with `L Lᵀ = A + jitter·I`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    pub lower: DMatrix<f64>,
    /// Diagonal jitter that was needed (0 when the plain factorization succeeded).
    pub jitter: f64,
}

/// Cholesky factorization with escalating diagonal jitter.
///
/// The jitter schedule starts at `jitter_tol / 2^20` and doubles until the
/// factorization succeeds; the last attempt uses exactly `jitter_tol`.
pub fn cholesky(matrix: &DMatrix<f64>, jitter_tol: f64) -> Result<CholeskyFactor> {
    let n = matrix.nrows();
    if n == 0 || matrix.ncols() != n {
        return Err(Error::domain(format!(
            "cholesky needs a non-empty square matrix, got {}x{}",
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("matrix has non-finite entries"));
    }
    check_symmetric(matrix)?;
    let sym = symmetrize(matrix);

    if let Some(ch) = Cholesky::new(sym.clone()) {
        return Ok(CholeskyFactor {
            lower: ch.l(),
            jitter: 0.0,
        });
    }
    if jitter_tol > 0.0 {
        let mut eps = jitter_tol / (1u64 << 20) as f64;
        loop {
            let eps_now = eps.min(jitter_tol);
            let mut shifted = sym.clone();
            for i in 0..n {
                shifted[(i, i)] += eps_now;
            }
            if let Some(ch) = Cholesky::new(shifted) {
                return Ok(CholeskyFactor {
                    lower: ch.l(),
                    jitter: eps_now,
                });
            }
            if eps_now >= jitter_tol {
                break;
            }
            eps *= 2.0;
        }
    }
    Err(Error::NotPositiveDefinite { jitter_tol })
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL {
                return Err(Error::domain(format!(
                    "matrix not symmetric at ({i},{j}): {} vs {}",
                    m[(i, j)],
                    m[(j, i)]
                )));
            }
        }
    }
    Ok(())
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Validated correlation matrix: symmetric, unit diagonal, entries in
/// [−1, 1] and positive semi-definite up to [`DEFAULT_JITTER_TOL`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct CorrelationMatrix {
    entries: DMatrix<f64>,
}

impl TryFrom<Vec<Vec<f64>>> for CorrelationMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(&rows)
    }
}

impl From<CorrelationMatrix> for Vec<Vec<f64>> {
    fn from(m: CorrelationMatrix) -> Self {
        m.rows()
    }
}

impl CorrelationMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        let n = entries.nrows();
        if n == 0 || entries.ncols() != n {
            return Err(Error::domain("correlation matrix must be square and non-empty"));
        }
        check_symmetric(&entries)?;
        for i in 0..n {
            if (entries[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(Error::domain(format!(
                    "correlation matrix diagonal entry {i} is {}, expected 1",
                    entries[(i, i)]
                )));
            }
        }
        if entries.iter().any(|v| !v.is_finite() || v.abs() > 1.0 + 1e-12) {
            return Err(Error::domain("correlation entries must lie in [-1, 1]"));
        }
        let mut entries = symmetrize(&entries);
        for v in entries.iter_mut() {
            *v = v.clamp(-1.0, 1.0);
        }
        for i in 0..n {
            entries[(i, i)] = 1.0;
        }
        cholesky(&entries, DEFAULT_JITTER_TOL)?;
        Ok(Self { entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::domain("correlation matrix rows must all have length equal to the row count"));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        (0..n).map(|i| (0..n).map(|j| self.entries[(i, j)]).collect()).collect()
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            entries: DMatrix::identity(dim, dim),
        }
    }

    /// 2×2 matrix `[[1, rho], [rho, 1]]`.
    pub fn bivariate(rho: f64) -> Result<Self> {
        if !(rho.abs() <= 1.0) {
            return Err(Error::domain(format!("correlation {rho} outside [-1, 1]")));
        }
        Self::new(DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]))
    }

    /// All off-diagonal entries equal to `rho`.
    pub fn equicorrelated(dim: usize, rho: f64) -> Result<Self> {
        let m = DMatrix::from_fn(dim, dim, |i, j| if i == j { 1.0 } else { rho });
        Self::new(m)
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn factor(&self) -> Result<CholeskyFactor> {
        cholesky(&self.entries, DEFAULT_JITTER_TOL)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_factor() {
        let f = cholesky(&DMatrix::identity(3, 3), 1e-8).unwrap();
        assert_eq!(f.jitter, 0.0);
        assert_eq!(f.lower, DMatrix::identity(3, 3));
    }

    #[test]
    fn two_by_two_factor() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let f = cholesky(&m, 1e-8).unwrap();
        assert!((f.lower[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((f.lower[(1, 0)] - 0.5).abs() < 1e-15);
        assert!((f.lower[(1, 1)] - 0.75f64.sqrt()).abs() < 1e-15);
        assert_eq!(f.lower[(0, 1)], 0.0);
    }

    #[test]
    fn rank_deficient_uses_jitter() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let f = cholesky(&m, 1e-8).unwrap();
        assert!(f.jitter > 0.0 && f.jitter <= 1e-8);
        let rebuilt = &f.lower * f.lower.transpose();
        let mut target = m.clone();
        target[(0, 0)] += f.jitter;
        target[(1, 1)] += f.jitter;
        assert!((rebuilt - target).abs().max() < 1e-12);
    }

    #[test]
    fn indefinite_fails() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            cholesky(&m, 1e-8),
            Err(Error::NotPositiveDefinite { .. })
        ));
        assert!(cholesky(&m, 0.0).is_err());
    }

    #[test]
    fn asymmetric_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(cholesky(&m, 1e-8), Err(Error::Domain(_))));
    }

    #[test]
    fn reconstruction_on_random_spd() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for dim in 1..7 {
            let b = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
            let a = &b * b.transpose() + DMatrix::identity(dim, dim) * 0.1;
            let f = cholesky(&a, 1e-8).unwrap();
            let err = (&f.lower * f.lower.transpose() - &a).abs().max();
            assert!(err <= 1e-8f64.max(f.jitter));
        }
    }

    #[test]
    fn correlation_matrix_validation() {
        assert!(CorrelationMatrix::bivariate(0.3).is_ok());
        assert!(CorrelationMatrix::bivariate(1.0).is_ok());
        assert!(CorrelationMatrix::bivariate(1.2).is_err());
        let bad_diag = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        assert!(CorrelationMatrix::new(bad_diag).is_err());
        // pairwise-valid but jointly indefinite
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.9, -0.9, 0.9, 1.0, 0.9, -0.9, 0.9, 1.0]);
        assert!(matches!(
            CorrelationMatrix::new(m),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }
}
