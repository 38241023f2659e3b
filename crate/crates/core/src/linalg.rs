//! Small dense linear-algebra helpers shared by the model, sampler and
//! diagnostics modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance used when checking symmetry.
const SYMMETRY_RTOL: f64 = 1e-10;

/// Eigenvalue floor applied when forming symmetric square roots.
const EIGENVALUE_FLOOR: f64 = 1e-12;

/// Checks that `m` is square and symmetric up to a relative tolerance.
pub fn check_symmetric(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension {
            what,
            expected: m.nrows(),
            actual: m.ncols(),
        });
    }
    let scale = m.amax().max(1.0);
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_RTOL * scale {
                return Err(Error::NotSymmetric { what });
            }
        }
    }
    Ok(())
}

/// Symmetric square root via eigendecomposition, with eigenvalues floored at
/// 1e-12 to guard near-singular inputs. A clearly negative eigenvalue is an
/// error rather than something to floor away.
pub fn symmetric_sqrt(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    check_symmetric(m, what)?;
    let eig = m.clone().symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(1.0);
    let min = eig.eigenvalues.min();
    if min < -1e-9 * scale {
        return Err(Error::NotPositiveDefinite {
            what,
            min_eigenvalue: min,
        });
    }
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(EIGENVALUE_FLOOR).sqrt());
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&sqrt_vals) * q.transpose())
}

/// Checks symmetry and strict positive definiteness of `m`.
pub fn check_positive_definite(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    check_symmetric(m, what)?;
    let eig = m.clone().symmetric_eigenvalues();
    let min = eig.min();
    if min <= 0.0 {
        return Err(Error::NotPositiveDefinite {
            what,
            min_eigenvalue: min,
        });
    }
    Ok(())
}

/// Inverse of a symmetric positive-definite matrix.
pub fn spd_inverse(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    check_symmetric(m, what)?;
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(Error::Singular { what })
}

/// Largest eigenvalue modulus of a general square matrix.
///
/// Computed as the Gelfand limit `||A^(2^m)||^(1/2^m)` by squaring a
/// normalized copy 50 times while accumulating the log norms. Unlike an
/// unbounded QR iteration this terminates on every input (defective and
/// nilpotent matrices included); at `2^50` the remaining error is below
/// 1e-12 relative for any fixed Jordan structure.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let mut a = m.clone();
    let mut log_radius = 0.0_f64;
    let mut weight = 1.0_f64;
    for _ in 0..50 {
        let norm = a.norm();
        if norm == 0.0 {
            return 0.0;
        }
        if !norm.is_finite() {
            return f64::INFINITY;
        }
        log_radius += norm.ln() * weight;
        weight *= 0.5;
        let normalized = &a / norm;
        a = &normalized * &normalized;
    }
    log_radius.exp()
}

/// `||a - b||_F / ||b||_F`.
pub fn relative_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let denom = b.norm();
    if denom == 0.0 {
        return Err(Error::EmptyInput {
            what: "reference matrix is all zeros",
        });
    }
    Ok((a - b).norm() / denom)
}

/// Outer product `u * v'` as a dense matrix.
pub fn outer(u: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
    u * v.transpose()
}
