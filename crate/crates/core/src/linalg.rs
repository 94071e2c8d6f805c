//! Small dense linear-algebra helpers over `DMatrix<Complex64>`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Relative eigenvalue floor below which an eigenvalue of a PSD matrix is treated as zero.
pub const EIGEN_ZERO_RTOL: f64 = 1e-12;
/// Tolerated negative eigenvalue, relative to the largest one.
pub const PSD_NEG_RTOL: f64 = 1e-10;
/// Tolerated Hermitian asymmetry, relative to the largest entry (absolute below 1).
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Eigen-decomposition of a Hermitian matrix, eigenvalues as returned by nalgebra (unsorted).
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl HermitianEigen {
    pub fn new(c: &CMatrix) -> Self {
        let eig = c.clone().symmetric_eigen();
        HermitianEigen {
            values: eig.eigenvalues.iter().copied().collect(),
            vectors: eig.eigenvectors,
        }
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Eigenvalues with those below `EIGEN_ZERO_RTOL * max` clamped to zero.
    pub fn clamped_values(&self) -> Vec<f64> {
        let floor = EIGEN_ZERO_RTOL * self.max_value();
        self.values.iter().map(|&v| if v <= floor { 0.0 } else { v }).collect()
    }
}

pub fn max_abs(c: &CMatrix) -> f64 {
    c.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn hermitian_defect(c: &CMatrix) -> f64 {
    max_abs(&(c - c.adjoint()))
}

/// Validates that `c` is square, finite, Hermitian and positive semidefinite.
pub fn check_hermitian_psd(c: &CMatrix) -> Result<HermitianEigen> {
    if !c.is_square() {
        return Err(Error::Covariance(format!(
            "matrix is {}x{}, expected square",
            c.nrows(),
            c.ncols()
        )));
    }
    if c.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Covariance("non-finite entry".into()));
    }
    let scale = max_abs(c).max(1.0);
    let defect = hermitian_defect(c);
    if defect > HERMITIAN_TOL * scale {
        return Err(Error::Covariance(format!(
            "not Hermitian (max |C - C^H| = {defect:.3e})"
        )));
    }
    // Symmetrise before decomposing so round-off asymmetry does not leak in.
    let sym = (c + c.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = HermitianEigen::new(&sym);
    let max = eig.max_value();
    let min = eig.min_value();
    if min < -PSD_NEG_RTOL * max.max(0.0) {
        return Err(Error::Covariance(format!(
            "not positive semidefinite (eigenvalues in [{min:.3e}, {max:.3e}])"
        )));
    }
    Ok(eig)
}

/// Square-root factor `L` with `L L^H = C`, built from the clamped eigen-decomposition.
pub fn psd_sqrt(eig: &HermitianEigen) -> CMatrix {
    let mut l = eig.vectors.clone();
    for (j, v) in eig.clamped_values().into_iter().enumerate() {
        let s = Complex64::new(v.sqrt(), 0.0);
        l.column_mut(j).iter_mut().for_each(|z| *z *= s);
    }
    l
}

pub fn real_to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|v| Complex64::new(v, 0.0))
}

/// `‖a - b‖_F / ‖b‖_F`, or the absolute error when `b` is zero.
pub fn relative_frobenius_error(a: &CMatrix, b: &CMatrix) -> f64 {
    let diff = (a - b).norm();
    let reference = b.norm();
    if reference == 0.0 {
        diff
    } else {
        diff / reference
    }
}

pub fn trace_re(c: &CMatrix) -> f64 {
    c.diagonal().iter().map(|z| z.re).sum()
}
