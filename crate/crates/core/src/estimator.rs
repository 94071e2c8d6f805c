//! Linear-MMSE estimation in the orthogonal beam subspace.
//!
//! With beam amplitudes `X` of per-antenna covariance `C` observed as
//! `Y = X + E`, `E` white with power `sigma2` per entry, the MMSE estimate is
//! `X_hat = C (C + sigma2 I)^-1 Y` and the expected residual per antenna is
//!
//! ```text
//! E‖X - X_hat‖_F^2 / N_RX = tr((sigma2^-1 I + C^-1)^-1) = sum_i sigma2 * l_i / (sigma2 + l_i)
//! ```
//!
//! over the eigenvalues `l_i` of `C`. Correlation side-information is modelled
//! by projecting the noise before it reaches the estimator:
//!
//! * phase knowledge keeps only the noise component in phase with each signal
//!   entry, halving its power;
//! * full (rank-one) knowledge keeps only the component of each noise row along
//!   the beam's antenna signature, dividing its power by `N_RX`.
//!
//! The projected noise stays white and uncorrelated with `X`, so the same
//! filter and trace formula apply with the correspondingly reduced noise power.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::beam::{from_orthogonal_subspace, to_orthogonal_subspace, BeamBasis, CorrelationMatrix};
use crate::channel::{AmplitudeMatrix, Subspace};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::rng;

/// Noise power per antenna and beam, before pilot averaging.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma2: f64,
    pub n_pilots: usize,
}

impl NoiseSpec {
    pub fn new(sigma2: f64, n_pilots: usize) -> Result<Self> {
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(Error::config("noise.sigma2", format!("must be positive, got {sigma2}")));
        }
        if n_pilots == 0 {
            return Err(Error::config("noise.n_pilots", "must be at least 1"));
        }
        Ok(NoiseSpec { sigma2, n_pilots })
    }

    /// Noise power after averaging `n_pilots` pilots.
    pub fn effective_power(&self) -> f64 {
        self.sigma2 / self.n_pilots as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NoiseProjection {
    Raw,
    PhaseProjected,
    FullProjected,
}

impl NoiseProjection {
    /// Factor by which the projection scales the noise power per entry.
    pub fn power_factor(self, n_rx: usize) -> f64 {
        match self {
            NoiseProjection::Raw => 1.0,
            NoiseProjection::PhaseProjected => 0.5,
            NoiseProjection::FullProjected => 1.0 / n_rx as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseMatrix {
    entries: CMatrix,
    projection: NoiseProjection,
    degeneracies: usize,
}

impl NoiseMatrix {
    pub fn raw(entries: CMatrix) -> Self {
        NoiseMatrix {
            entries,
            projection: NoiseProjection::Raw,
            degeneracies: 0,
        }
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn projection(&self) -> NoiseProjection {
        self.projection
    }

    /// Entries left unprojected because the signal phase was undefined.
    pub fn degeneracies(&self) -> usize {
        self.degeneracies
    }

    fn expect_raw(&self, what: &str) -> Result<()> {
        if self.projection != NoiseProjection::Raw {
            return Err(Error::Shape(format!("{what}: noise already {:?}", self.projection)));
        }
        Ok(())
    }
}

/// Bound variant evaluated by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BoundModel {
    #[serde(rename = "bound1")]
    Bound1Uncorrelated,
    #[serde(rename = "bound2")]
    Bound2PhaseCorrelated,
    #[serde(rename = "bound3")]
    Bound3FullyCorrelated,
    #[serde(rename = "crlb")]
    CrlbBaseline,
}

impl BoundModel {
    pub const ALL: [BoundModel; 4] = [
        BoundModel::Bound1Uncorrelated,
        BoundModel::Bound2PhaseCorrelated,
        BoundModel::Bound3FullyCorrelated,
        BoundModel::CrlbBaseline,
    ];

    /// Stable index used for RNG stream derivation.
    pub fn index(self) -> u64 {
        match self {
            BoundModel::Bound1Uncorrelated => 0,
            BoundModel::Bound2PhaseCorrelated => 1,
            BoundModel::Bound3FullyCorrelated => 2,
            BoundModel::CrlbBaseline => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BoundModel::Bound1Uncorrelated => "bound1",
            BoundModel::Bound2PhaseCorrelated => "bound2",
            BoundModel::Bound3FullyCorrelated => "bound3",
            BoundModel::CrlbBaseline => "crlb",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }

    pub fn projection(self) -> NoiseProjection {
        match self {
            BoundModel::Bound1Uncorrelated | BoundModel::CrlbBaseline => NoiseProjection::Raw,
            BoundModel::Bound2PhaseCorrelated => NoiseProjection::PhaseProjected,
            BoundModel::Bound3FullyCorrelated => NoiseProjection::FullProjected,
        }
    }

    /// Noise power per entry seen by the estimator under this model.
    pub fn effective_sigma2(self, noise: &NoiseSpec, n_rx: usize) -> f64 {
        noise.effective_power() * self.projection().power_factor(n_rx)
    }
}

/// `m x n_rx` white noise of power `sigma2 / n_pilots` per entry.
pub fn draw_noise(m: usize, n_rx: usize, noise: &NoiseSpec, rng_seed: u64) -> NoiseMatrix {
    let mut r = rng::seeded(rng_seed);
    draw_noise_with(&mut r, m, n_rx, noise)
}

pub fn draw_noise_with<R: Rng + ?Sized>(rng: &mut R, m: usize, n_rx: usize, noise: &NoiseSpec) -> NoiseMatrix {
    let power = noise.effective_power();
    NoiseMatrix::raw(CMatrix::from_fn(m, n_rx, |_, _| rng::complex_gaussian(rng, power)))
}

fn check_same_shape(a: &CMatrix, b: &CMatrix, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("{what}: {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// `E_kj <- Re(E_kj e^{-i phi_kj}) e^{i phi_kj}` with `phi_kj = arg X_kj`.
///
/// Entries where `X_kj = 0` pass through and are counted as degeneracies.
pub fn project_noise_phase(e: &NoiseMatrix, x: &AmplitudeMatrix) -> Result<NoiseMatrix> {
    e.expect_raw("project_noise_phase")?;
    project_phase(e.entries(), x.entries())
}

fn project_phase(e: &CMatrix, x: &CMatrix) -> Result<NoiseMatrix> {
    check_same_shape(e, x, "project_noise_phase")?;
    let mut degeneracies = 0;
    let entries = e.zip_map(x, |noise, signal| {
        let r = signal.norm();
        if r == 0.0 {
            degeneracies += 1;
            return noise;
        }
        let unit = signal / r;
        unit * (noise * unit.conj()).re
    });
    Ok(NoiseMatrix {
        entries,
        projection: NoiseProjection::PhaseProjected,
        degeneracies,
    })
}

/// Projects row `m` of `E` onto the span of `signatures.row(m)`.
pub fn project_noise_full(e: &NoiseMatrix, signatures: &CMatrix) -> Result<NoiseMatrix> {
    e.expect_raw("project_noise_full")?;
    project_full(e.entries(), signatures)
}

fn project_full(e: &CMatrix, signatures: &CMatrix) -> Result<NoiseMatrix> {
    check_same_shape(e, signatures, "project_noise_full")?;
    let mut out = CMatrix::zeros(e.nrows(), e.ncols());
    for m in 0..e.nrows() {
        let s = signatures.row(m);
        let norm2 = s.norm_squared();
        if norm2 == 0.0 {
            return Err(Error::DegenerateSignature { beam: m });
        }
        // (e . s^H) s / |s|^2
        let coeff = e.row(m).dotc(&s).conj() / norm2;
        out.row_mut(m).copy_from(&(s * coeff));
    }
    Ok(NoiseMatrix {
        entries: out,
        projection: NoiseProjection::FullProjected,
        degeneracies: 0,
    })
}

/// MMSE weights `W = C (C + sigma2 I)^-1` for a fixed noise power.
#[derive(Debug, Clone)]
pub struct MmseFilter {
    weights: CMatrix,
    sigma2: f64,
}

impl MmseFilter {
    /// Never inverts `C`, so singular correlation matrices are fine.
    pub fn new(c: &CorrelationMatrix, sigma2: f64) -> Result<Self> {
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(Error::config(
                "noise.sigma2",
                format!("effective noise power must be positive, got {sigma2}"),
            ));
        }
        let m = c.dim();
        let loaded = c.entries() + CMatrix::identity(m, m) * Complex64::new(sigma2, 0.0);
        // C and (C + sigma2 I) commute, so W = (C + sigma2 I)^-1 C.
        let chol = loaded
            .cholesky()
            .ok_or_else(|| Error::Covariance("C + sigma2 I is not positive definite".into()))?;
        let weights = chol.solve(c.entries());
        Ok(MmseFilter { weights, sigma2 })
    }

    pub fn weights(&self) -> &CMatrix {
        &self.weights
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn apply(&self, y: &CMatrix) -> CMatrix {
        &self.weights * y
    }
}

/// `X_hat = (I + sigma2_eff C^-1)^-1 Y`, evaluated as `C (C + sigma2_eff I)^-1 Y`.
///
/// `sigma2_eff` is the pilot-averaged noise power scaled by the projection the
/// noise in `y` went through.
pub fn mmse_estimate(
    y: &AmplitudeMatrix,
    c: &CorrelationMatrix,
    noise: &NoiseSpec,
    projection: NoiseProjection,
) -> Result<AmplitudeMatrix> {
    y.expect(Subspace::Orthogonalized, "mmse_estimate")?;
    if y.n_beams() != c.dim() {
        return Err(Error::Shape(format!(
            "mmse_estimate: {} beams but C is {}x{}",
            y.n_beams(),
            c.dim(),
            c.dim()
        )));
    }
    let sigma2 = noise.effective_power() * projection.power_factor(y.n_rx());
    let filter = MmseFilter::new(c, sigma2)?;
    Ok(AmplitudeMatrix::from_parts(
        filter.apply(y.entries()),
        Subspace::Orthogonalized,
    ))
}

/// `sum_i s l_i / (s + l_i)` over the eigenvalues of `C`.
pub fn trace_formula(c: &CorrelationMatrix, sigma2: f64) -> f64 {
    c.eigenvalues().into_iter().map(|l| sigma2 * l / (sigma2 + l)).sum()
}

/// Expected residual power per antenna after the estimator for `model`.
///
/// The baseline adds the full noise power in every one of the `M` beams.
pub fn residual_power_theoretical(c: &CorrelationMatrix, noise: &NoiseSpec, model: BoundModel, n_rx: usize) -> f64 {
    let sigma2 = model.effective_sigma2(noise, n_rx);
    match model {
        BoundModel::CrlbBaseline => c.dim() as f64 * sigma2,
        _ => trace_formula(c, sigma2),
    }
}

/// Artificial channel estimate for one bound model, reusable across trials.
#[derive(Debug, Clone)]
pub struct ArtificialCe {
    model: BoundModel,
    n_rx: usize,
    filter: Option<MmseFilter>,
}

impl ArtificialCe {
    pub fn new(c: &CorrelationMatrix, noise: &NoiseSpec, model: BoundModel, n_rx: usize) -> Result<Self> {
        let filter = match model {
            BoundModel::CrlbBaseline => None,
            _ => Some(MmseFilter::new(c, model.effective_sigma2(noise, n_rx))?),
        };
        Ok(ArtificialCe { model, n_rx, filter })
    }

    pub fn model(&self) -> BoundModel {
        self.model
    }

    /// Estimate of `x` (orthogonal subspace) from raw pilot-averaged noise.
    ///
    /// Returns the estimate together with the number of phase degeneracies.
    pub fn estimate(&self, x: &CMatrix, raw: &NoiseMatrix) -> Result<(CMatrix, usize)> {
        raw.expect_raw("ArtificialCe::estimate")?;
        check_same_shape(raw.entries(), x, "ArtificialCe::estimate")?;
        if x.ncols() != self.n_rx {
            return Err(Error::Shape(format!(
                "expected {} antennas, got {}",
                self.n_rx,
                x.ncols()
            )));
        }
        let projected = match self.model.projection() {
            NoiseProjection::Raw => raw.clone(),
            NoiseProjection::PhaseProjected => project_phase(raw.entries(), x)?,
            NoiseProjection::FullProjected => project_full(raw.entries(), x)?,
        };
        let y = x + projected.entries();
        let estimate = match &self.filter {
            Some(filter) => filter.apply(&y),
            None => y,
        };
        Ok((estimate, projected.degeneracies()))
    }
}

/// `X0_hat = R^-1 W (R X0 + E')` with `E'` projected per model; the baseline
/// skips `W`. The full-correlation signatures are the rows of `R X0`.
pub fn make_artificial_ce(
    x0: &AmplitudeMatrix,
    basis: &BeamBasis,
    c: &CorrelationMatrix,
    noise: &NoiseSpec,
    model: BoundModel,
    rng_seed: u64,
) -> Result<AmplitudeMatrix> {
    let x = to_orthogonal_subspace(x0, basis)?;
    if c.dim() != x.n_beams() {
        return Err(Error::Shape(format!(
            "C is {0}x{0}, amplitudes have {1} beams",
            c.dim(),
            x.n_beams()
        )));
    }
    let ce = ArtificialCe::new(c, noise, model, x.n_rx())?;
    let raw = draw_noise(x.n_beams(), x.n_rx(), noise, rng_seed);
    let (estimate, _) = ce.estimate(x.entries(), &raw)?;
    from_orthogonal_subspace(&AmplitudeMatrix::from_parts(estimate, Subspace::Orthogonalized), basis)
}
