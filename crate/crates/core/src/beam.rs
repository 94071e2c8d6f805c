//! Beam-domain representation.
//!
//! The LS time-domain response `S` (`N_DFT x N_RX`) is modelled as `B X0`, where
//! column `m` of `B` is the sinc kernel centred on tap delay `n_m`. The sinc
//! beams overlap, so `B = Q R` is orthogonalised with a thin QR and the
//! estimator works with `X = R X0` on the orthonormal columns of `Q`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::channel::{sinc_kernel, AmplitudeMatrix, ChannelConfig, ChannelSnapshot, Subspace, TapSet};
use crate::error::{Error, Result};
use crate::linalg::{check_hermitian_psd, real_to_complex, trace_re, CMatrix, HermitianEigen};

/// Minimum ratio of smallest to largest singular value of `B`.
pub const RANK_RTOL: f64 = 1e-8;

/// Sinc beam matrix with its thin QR factors.
#[derive(Debug, Clone)]
pub struct BeamBasis {
    b: CMatrix,
    q: CMatrix,
    r: CMatrix,
}

impl BeamBasis {
    /// Builds and orthogonalises the beam matrix for `tap_set`.
    pub fn from_taps(tap_set: &TapSet, config: &ChannelConfig) -> Result<Self> {
        let b = build_beam_matrix(tap_set, config)?;
        orthogonalize_named(b, Some(&tap_set.delays))
    }

    pub fn b_matrix(&self) -> &CMatrix {
        &self.b
    }

    pub fn q_matrix(&self) -> &CMatrix {
        &self.q
    }

    pub fn r_matrix(&self) -> &CMatrix {
        &self.r
    }

    pub fn n_beams(&self) -> usize {
        self.r.nrows()
    }

    /// Largest elementwise deviation of `Q^H Q` from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let m = self.n_beams();
        let gram = self.q.adjoint() * &self.q;
        let eye = CMatrix::identity(m, m);
        (gram - eye).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `‖Q R - B‖_F / ‖B‖_F`.
    pub fn reconstruction_error(&self) -> f64 {
        crate::linalg::relative_frobenius_error(&(&self.q * &self.r), &self.b)
    }
}

/// `N_DFT x M` matrix whose column `m` is the sinc kernel centred on delay `n_m`.
pub fn build_beam_matrix(tap_set: &TapSet, config: &ChannelConfig) -> Result<CMatrix> {
    config.validate()?;
    tap_set.validate_for(config)?;
    let b = DMatrix::from_fn(config.n_dft, tap_set.len(), |n, m| {
        sinc_kernel(n as i64, tap_set.delays[m] as i64, config)
    });
    Ok(real_to_complex(&b))
}

/// Thin QR of a full-column-rank `B` with a positive real diagonal on `R`.
pub fn orthogonalize(b_matrix: &CMatrix) -> Result<BeamBasis> {
    orthogonalize_named(b_matrix.clone(), None)
}

fn orthogonalize_named(b: CMatrix, delays: Option<&[usize]>) -> Result<BeamBasis> {
    let (rows, cols) = b.shape();
    if cols == 0 || rows < cols {
        return Err(Error::Shape(format!(
            "beam matrix is {rows}x{cols}, need rows >= cols >= 1"
        )));
    }
    let sv = b.clone().singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let ratio = if max > 0.0 { min / max } else { 0.0 };
    if ratio.is_nan() || ratio <= RANK_RTOL {
        let (i, j) = most_collinear_pair(&b);
        let names = match delays {
            Some(d) => vec![d[i], d[j]],
            None => vec![i, j],
        };
        return Err(Error::DegenerateBasis { delays: names, ratio });
    }

    let qr = b.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for j in 0..cols {
        let d = r[(j, j)];
        let phase = d / d.norm();
        q.column_mut(j).iter_mut().for_each(|z| *z *= phase);
        r.row_mut(j).iter_mut().for_each(|z| *z *= phase.conj());
        r[(j, j)] = Complex64::new(r[(j, j)].re, 0.0);
    }
    Ok(BeamBasis { b, q, r })
}

fn most_collinear_pair(b: &CMatrix) -> (usize, usize) {
    let cols = b.ncols();
    if cols < 2 {
        return (0, 0);
    }
    let norms: Vec<f64> = (0..cols).map(|j| b.column(j).norm()).collect();
    let mut best = (0, 1, -1.0);
    for i in 0..cols {
        for j in i + 1..cols {
            let cos = if norms[i] == 0.0 || norms[j] == 0.0 {
                1.0
            } else {
                b.column(i).dotc(&b.column(j)).norm() / (norms[i] * norms[j])
            };
            if cos > best.2 {
                best = (i, j, cos);
            }
        }
    }
    (best.0, best.1)
}

fn check_rows(x: &AmplitudeMatrix, basis: &BeamBasis, what: &str) -> Result<()> {
    if x.n_beams() != basis.n_beams() {
        return Err(Error::Shape(format!(
            "{what}: amplitudes have {} beams, basis has {}",
            x.n_beams(),
            basis.n_beams()
        )));
    }
    Ok(())
}

/// `X = R X0`.
pub fn to_orthogonal_subspace(x0: &AmplitudeMatrix, basis: &BeamBasis) -> Result<AmplitudeMatrix> {
    x0.expect(Subspace::Original, "to_orthogonal_subspace")?;
    check_rows(x0, basis, "to_orthogonal_subspace")?;
    Ok(AmplitudeMatrix::from_parts(
        basis.r_matrix() * x0.entries(),
        Subspace::Orthogonalized,
    ))
}

/// `X0 = R^{-1} X` by back-substitution.
pub fn from_orthogonal_subspace(x: &AmplitudeMatrix, basis: &BeamBasis) -> Result<AmplitudeMatrix> {
    x.expect(Subspace::Orthogonalized, "from_orthogonal_subspace")?;
    check_rows(x, basis, "from_orthogonal_subspace")?;
    let x0 = basis
        .r_matrix()
        .solve_upper_triangular(x.entries())
        .ok_or_else(|| Error::DegenerateScenario("R has a zero diagonal entry".into()))?;
    Ok(AmplitudeMatrix::from_parts(x0, Subspace::Original))
}

/// Hermitian PSD beam correlation matrix with its eigen-decomposition.
#[derive(Debug, Clone)]
pub struct CorrelationMatrix {
    entries: CMatrix,
    eigen: HermitianEigen,
}

impl CorrelationMatrix {
    /// Validates Hermitian PSD-ness (see [`crate::linalg::check_hermitian_psd`]).
    pub fn new(entries: CMatrix) -> Result<Self> {
        let eigen = check_hermitian_psd(&entries)?;
        Ok(CorrelationMatrix { entries, eigen })
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn trace(&self) -> f64 {
        trace_re(&self.entries)
    }

    /// Eigenvalues with round-off negatives and values below `1e-12 * max` set to zero.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.eigen.clamped_values()
    }

    pub fn min_raw_eigenvalue(&self) -> f64 {
        self.eigen.min_value()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigen.max_value()
    }

    /// `R C R^H`: the covariance of `R X0` when `X0` has covariance `self`.
    pub fn congruence(&self, r: &CMatrix) -> Result<Self> {
        let c = r * &self.entries * r.adjoint();
        let sym = (&c + c.adjoint()) * Complex64::new(0.5, 0.0);
        CorrelationMatrix::new(sym)
    }
}

/// Single-sample estimate `C = X X^H / N_RX`.
pub fn estimate_correlation(x: &AmplitudeMatrix) -> CorrelationMatrix {
    let n_rx = x.n_rx().max(1) as f64;
    let raw = x.entries() * x.entries().adjoint() / Complex64::new(n_rx, 0.0);
    let entries = (&raw + raw.adjoint()) * Complex64::new(0.5, 0.0);
    let eigen = HermitianEigen::new(&entries);
    CorrelationMatrix { entries, eigen }
}

/// LS projection `Q^H S` of every antenna's response onto the beam subspace.
pub fn ls_time_domain_estimate(snapshot: &ChannelSnapshot, basis: &BeamBasis) -> Result<AmplitudeMatrix> {
    if snapshot.samples().nrows() != basis.q_matrix().nrows() {
        return Err(Error::Shape(format!(
            "snapshot has {} samples per antenna, basis expects {}",
            snapshot.samples().nrows(),
            basis.q_matrix().nrows()
        )));
    }
    Ok(AmplitudeMatrix::from_parts(
        basis.q_matrix().adjoint() * snapshot.samples(),
        Subspace::Orthogonalized,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::CorrelationModel;
    use crate::rng;

    fn taps(delays: &[usize]) -> TapSet {
        TapSet::new(delays.to_vec(), vec![1.0; delays.len()], CorrelationModel::Uncorrelated).unwrap()
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn full_band_beams_are_unit_impulses() {
        let config = ChannelConfig::new(24, 2, 1).unwrap();
        let b = build_beam_matrix(&taps(&[2, 5]), &config).unwrap();
        for n in 0..24 {
            assert_eq!(b[(n, 0)], c(if n == 2 { 1.0 } else { 0.0 }));
            assert_eq!(b[(n, 1)], c(if n == 5 { 1.0 } else { 0.0 }));
        }
        let basis = orthogonalize(&b).unwrap();
        assert!((basis.q_matrix() - &b).norm() < 1e-10);
        assert!((basis.r_matrix() - CMatrix::identity(2, 2)).norm() < 1e-10);
    }

    #[test]
    fn single_beam_qr() {
        let config = ChannelConfig::new(48, 1, 1).unwrap();
        let b = build_beam_matrix(&taps(&[10]), &config).unwrap();
        assert_eq!(b[(10, 0)], c(1.0));
        let basis = orthogonalize(&b).unwrap();
        let norm = b.norm();
        assert!((basis.r_matrix()[(0, 0)] - c(norm)).norm() < 1e-12);
        assert!((basis.q_matrix() - &b / c(norm)).norm() < 1e-12);
    }

    #[test]
    fn random_full_rank_qr() {
        let mut r = rng::seeded(9);
        let b = CMatrix::from_fn(64, 6, |_, _| rng::complex_gaussian(&mut r, 1.0));
        let basis = orthogonalize(&b).unwrap();
        assert!(basis.orthonormality_defect() < 1e-10);
        assert!(basis.reconstruction_error() < 1e-10);
        for j in 0..6 {
            let d = basis.r_matrix()[(j, j)];
            assert!(d.re > 0.0 && d.im == 0.0);
            for i in j + 1..6 {
                assert_eq!(basis.r_matrix()[(i, j)], c(0.0));
            }
        }
    }

    #[test]
    fn near_duplicate_delays_are_named() {
        // 1/16 of the band: adjacent samples are nearly identical sinc beams.
        let config = ChannelConfig::new(192, 1, 1).unwrap();
        let err = BeamBasis::from_taps(&taps(&[3, 40, 41, 42, 43, 44, 45, 46]), &config).unwrap_err();
        match err {
            Error::DegenerateBasis { delays, .. } => {
                assert!(delays.iter().all(|d| (40..=46).contains(d)), "{delays:?}")
            }
            other => panic!("unexpected {other:?}"),
        }
        let dup = CMatrix::from_fn(8, 2, |i, _| c(i as f64));
        assert!(matches!(orthogonalize(&dup), Err(Error::DegenerateBasis { .. })));
    }

    #[test]
    fn subspace_round_trip_and_scaling() {
        let config = ChannelConfig::new(96, 2, 5).unwrap();
        let basis = BeamBasis::from_taps(&taps(&[0, 5, 13]), &config).unwrap();
        let mut r = rng::seeded(4);
        let x0 = AmplitudeMatrix::new(
            CMatrix::from_fn(3, 5, |_, _| rng::complex_gaussian(&mut r, 1.0)),
            Subspace::Original,
        )
        .unwrap();
        let x = to_orthogonal_subspace(&x0, &basis).unwrap();
        assert_eq!(x.subspace(), Subspace::Orthogonalized);
        let back = from_orthogonal_subspace(&x, &basis).unwrap();
        assert!(crate::linalg::relative_frobenius_error(back.entries(), x0.entries()) < 1e-10);
        let lhs = basis.b_matrix() * x0.entries();
        let rhs = basis.q_matrix() * x.entries();
        assert!(crate::linalg::relative_frobenius_error(&lhs, &rhs) < 1e-10);
        assert!(to_orthogonal_subspace(&x, &basis).is_err());
    }

    #[test]
    fn back_substitution_with_scaled_identity() {
        let basis = BeamBasis {
            b: CMatrix::identity(3, 3) * c(2.0),
            q: CMatrix::identity(3, 3),
            r: CMatrix::identity(3, 3) * c(2.0),
        };
        let x = AmplitudeMatrix::new(CMatrix::from_element(3, 4, c(1.0)), Subspace::Orthogonalized).unwrap();
        let x0 = from_orthogonal_subspace(&x, &basis).unwrap();
        assert!(x0.entries().iter().all(|z| (*z - c(0.5)).norm() < 1e-15));
        let zero = AmplitudeMatrix::new(CMatrix::zeros(3, 4), Subspace::Original).unwrap();
        assert_eq!(to_orthogonal_subspace(&zero, &basis).unwrap().entries().norm(), 0.0);
    }

    #[test]
    fn correlation_estimates() {
        let x = AmplitudeMatrix::new(
            CMatrix::from_element(1, 7, Complex64::new(0.6, -0.8) * c(3.0)),
            Subspace::Orthogonalized,
        )
        .unwrap();
        let cm = estimate_correlation(&x);
        assert!((cm.entries()[(0, 0)] - c(9.0)).norm() < 1e-12);
        let zero = AmplitudeMatrix::new(CMatrix::zeros(3, 4), Subspace::Orthogonalized).unwrap();
        assert_eq!(estimate_correlation(&zero).entries().norm(), 0.0);
    }

    #[test]
    fn ls_projection_of_in_and_out_of_subspace_signals() {
        let config = ChannelConfig::new(48, 1, 3).unwrap();
        let basis = BeamBasis::from_taps(&taps(&[4, 12]), &config).unwrap();
        let mut r = rng::seeded(5);
        let x = CMatrix::from_fn(2, 3, |_, _| rng::complex_gaussian(&mut r, 1.0));
        let s = basis.q_matrix() * &x;
        let snap = ChannelSnapshot::new(s, config).unwrap();
        let est = ls_time_domain_estimate(&snap, &basis).unwrap();
        assert!((est.entries() - &x).norm() < 1e-10);

        let g = CMatrix::from_fn(48, 3, |_, _| rng::complex_gaussian(&mut r, 1.0));
        let q = basis.q_matrix();
        let orth = &g - q * (q.adjoint() * &g);
        let snap = ChannelSnapshot::new(orth, config).unwrap();
        assert!(ls_time_domain_estimate(&snap, &basis).unwrap().entries().norm() < 1e-10);
    }
}
