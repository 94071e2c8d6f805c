//! Band-limited multi-tap channel model.
//!
//! Each antenna sees `M` taps at integer sample delays `n_m`. With `N_used`
//! active subcarriers out of an `N_DFT`-point transform, tap `m` contributes a
//! shifted sinc `sinc(pi * N_used/N_DFT * (n - n_m))` weighted by its complex
//! amplitude on that antenna.

mod snapshot;

pub use snapshot::{load_snapshot, save_snapshot, SNAPSHOT_MAGIC};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_hermitian_psd, psd_sqrt, CMatrix};
use crate::rng::{self, SIGNATURE_STREAM};

/// Subcarriers per resource block.
pub const RB_SIZE: usize = 12;
/// Subcarrier spacing used for the default sample period.
pub const DEFAULT_SUBCARRIER_SPACING_HZ: f64 = 30e3;

/// DFT and bandwidth geometry of one uplink allocation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub n_dft: usize,
    pub n_rb: usize,
    pub rb_size: usize,
    pub n_rx: usize,
    pub n_pilots: usize,
    /// Sample clock period in seconds.
    pub sample_period: f64,
}

impl ChannelConfig {
    /// Validated config with two pilots and a 30 kHz subcarrier grid.
    pub fn new(n_dft: usize, n_rb: usize, n_rx: usize) -> Result<Self> {
        let config = ChannelConfig {
            n_dft,
            n_rb,
            rb_size: RB_SIZE,
            n_rx,
            n_pilots: 2,
            sample_period: default_sample_period(n_dft),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_pilots(mut self, n_pilots: usize) -> Result<Self> {
        self.n_pilots = n_pilots;
        self.validate()?;
        Ok(self)
    }

    pub fn n_used(&self) -> usize {
        self.n_rb * self.rb_size
    }

    /// `N_used / N_DFT`.
    pub fn bandwidth_ratio(&self) -> f64 {
        self.n_used() as f64 / self.n_dft as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_dft == 0 {
            return Err(Error::config("channel.n_dft", "must be positive"));
        }
        if self.n_rb == 0 {
            return Err(Error::config("channel.n_rb", "must be positive"));
        }
        if self.rb_size != RB_SIZE {
            return Err(Error::config(
                "channel.rb_size",
                format!("resource block size is fixed at {RB_SIZE}, got {}", self.rb_size),
            ));
        }
        if self.n_used() > self.n_dft {
            return Err(Error::config(
                "channel.n_rb",
                format!(
                    "band-limit constraint violated: n_used = {} x {} = {} exceeds n_dft = {}",
                    self.n_rb,
                    self.rb_size,
                    self.n_used(),
                    self.n_dft
                ),
            ));
        }
        if self.n_rx == 0 {
            return Err(Error::config("channel.n_rx", "must be at least 1"));
        }
        if self.n_pilots == 0 {
            return Err(Error::config("channel.n_pilots", "must be at least 1"));
        }
        if !(self.sample_period.is_finite() && self.sample_period > 0.0) {
            return Err(Error::config(
                "channel.sample_period",
                "must be a positive finite number of seconds",
            ));
        }
        Ok(())
    }
}

pub fn default_sample_period(n_dft: usize) -> f64 {
    1.0 / (DEFAULT_SUBCARRIER_SPACING_HZ * n_dft.max(1) as f64)
}

/// How tap amplitudes are correlated across antennas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationModel {
    #[default]
    Uncorrelated,
    /// Generated like `Uncorrelated`; phase knowledge only enters through noise projection.
    PhaseCorrelated,
    /// Each beam row is a Gaussian scalar times a fixed antenna signature.
    FullyCorrelated,
}

/// Whether fully-correlated beams get their own antenna signature or share one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SignatureMode {
    #[default]
    PerBeam,
    Shared,
}

/// Power-delay profile: integer tap delays with their expected powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TapSet {
    pub delays: Vec<usize>,
    pub powers: Vec<f64>,
    pub correlation_model: CorrelationModel,
}

impl TapSet {
    pub fn new(delays: Vec<usize>, powers: Vec<f64>, correlation_model: CorrelationModel) -> Result<Self> {
        let taps = TapSet {
            delays,
            powers,
            correlation_model,
        };
        taps.validate()?;
        Ok(taps)
    }

    pub fn len(&self) -> usize {
        self.delays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delays.is_empty()
    }

    /// Checks internal consistency (non-empty, strictly increasing delays, positive powers).
    pub fn validate(&self) -> Result<()> {
        if self.delays.is_empty() {
            return Err(Error::config("tap_set.delays", "at least one tap is required"));
        }
        if self.powers.len() != self.delays.len() {
            return Err(Error::config(
                "tap_set.powers",
                format!("{} powers given for {} delays", self.powers.len(), self.delays.len()),
            ));
        }
        if let Some(w) = self.delays.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::config(
                "tap_set.delays",
                format!(
                    "delays must be strictly increasing ({} then {})",
                    self.delays[w],
                    self.delays[w + 1]
                ),
            ));
        }
        if let Some(p) = self.powers.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::config(
                "tap_set.powers",
                format!("powers must be positive and finite, got {p}"),
            ));
        }
        Ok(())
    }

    pub fn validate_for(&self, config: &ChannelConfig) -> Result<()> {
        self.validate()?;
        if self.len() > config.n_dft {
            return Err(Error::config("tap_set.delays", "more taps than DFT samples"));
        }
        if let Some(&d) = self.delays.iter().find(|&&d| d >= config.n_dft) {
            return Err(Error::config(
                "tap_set.delays",
                format!("delay {d} is outside [0, {})", config.n_dft),
            ));
        }
        Ok(())
    }

    /// `diag(powers)`.
    pub fn diagonal_covariance(&self) -> CMatrix {
        CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.len(),
            self.powers.iter().map(|&p| Complex64::new(p, 0.0)),
        ))
    }
}

/// Which beam subspace an amplitude matrix lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Subspace {
    /// Tap amplitudes `X0` on the non-orthogonal sinc beams.
    Original,
    /// `X = R X0` on the orthonormal beams.
    Orthogonalized,
}

/// Complex `M x N_RX` beam-amplitude matrix (rows = beams, columns = antennas).
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeMatrix {
    entries: CMatrix,
    subspace: Subspace,
}

impl AmplitudeMatrix {
    pub fn new(entries: CMatrix, subspace: Subspace) -> Result<Self> {
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Shape("amplitude matrix has non-finite entries".into()));
        }
        Ok(AmplitudeMatrix { entries, subspace })
    }

    pub(crate) fn from_parts(entries: CMatrix, subspace: Subspace) -> Self {
        AmplitudeMatrix { entries, subspace }
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_entries(self) -> CMatrix {
        self.entries
    }

    pub fn subspace(&self) -> Subspace {
        self.subspace
    }

    pub fn n_beams(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n_rx(&self) -> usize {
        self.entries.ncols()
    }

    pub(crate) fn expect(&self, subspace: Subspace, what: &str) -> Result<()> {
        if self.subspace != subspace {
            return Err(Error::Shape(format!(
                "{what}: expected {subspace:?} amplitudes, got {:?}",
                self.subspace
            )));
        }
        Ok(())
    }
}

/// One time-domain channel realisation: `N_DFT x N_RX` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSnapshot {
    samples: CMatrix,
    config: ChannelConfig,
}

impl ChannelSnapshot {
    pub fn new(samples: CMatrix, config: ChannelConfig) -> Result<Self> {
        config.validate()?;
        if samples.nrows() != config.n_dft || samples.ncols() != config.n_rx {
            return Err(Error::Shape(format!(
                "snapshot is {}x{}, config expects {}x{}",
                samples.nrows(),
                samples.ncols(),
                config.n_dft,
                config.n_rx
            )));
        }
        Ok(ChannelSnapshot { samples, config })
    }

    pub fn samples(&self) -> &CMatrix {
        &self.samples
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.config
    }
}

/// `sinc(pi * N_used/N_DFT * (n - n_m))`, with `sinc(0) = 1`.
///
/// Zero crossings that fall on the integer grid are returned as exact zeros.
pub fn sinc_kernel(n: i64, n_m: i64, config: &ChannelConfig) -> f64 {
    let d = n - n_m;
    if d == 0 {
        return 1.0;
    }
    let n_used = config.n_used() as i128;
    let n_dft = config.n_dft as i128;
    if (n_used * d as i128) % n_dft == 0 {
        return 0.0;
    }
    let x = std::f64::consts::PI * config.bandwidth_ratio() * d as f64;
    x.sin() / x
}

/// Draws tap amplitudes `X0` under a fixed scenario.
///
/// The covariance square root and, for the fully-correlated model, the
/// antenna signatures are computed once; `draw` can then be called from many
/// threads with independent RNG streams.
#[derive(Debug, Clone)]
pub struct AmplitudeGenerator {
    model: CorrelationModel,
    n_rx: usize,
    covariance: CMatrix,
    sqrt: CMatrix,
    /// Unit-norm rows, `M x N_RX`, present for `FullyCorrelated`.
    signatures: Option<CMatrix>,
}

impl AmplitudeGenerator {
    pub fn new(
        tap_set: &TapSet,
        config: &ChannelConfig,
        beam_covariance: &CMatrix,
        signature_mode: SignatureMode,
        seed: u64,
    ) -> Result<Self> {
        tap_set.validate_for(config)?;
        let m = tap_set.len();
        if beam_covariance.nrows() != m || beam_covariance.ncols() != m {
            return Err(Error::Shape(format!(
                "beam covariance is {}x{}, expected {m}x{m}",
                beam_covariance.nrows(),
                beam_covariance.ncols()
            )));
        }
        let eig = check_hermitian_psd(beam_covariance)?;
        let sqrt = psd_sqrt(&eig);
        let signatures = match tap_set.correlation_model {
            CorrelationModel::FullyCorrelated => {
                let mut rng = rng::stream(seed, 0, SIGNATURE_STREAM);
                Some(draw_signatures(&mut rng, m, config.n_rx, signature_mode))
            }
            _ => None,
        };
        Ok(AmplitudeGenerator {
            model: tap_set.correlation_model,
            n_rx: config.n_rx,
            covariance: beam_covariance.clone(),
            sqrt,
            signatures,
        })
    }

    pub fn model(&self) -> CorrelationModel {
        self.model
    }

    pub fn signatures(&self) -> Option<&CMatrix> {
        self.signatures.as_ref()
    }

    /// Per-antenna average covariance `E[X0 X0^H] / N_RX` of the generated amplitudes.
    ///
    /// Equals the beam covariance except for fully-correlated beams with distinct
    /// signatures, where off-diagonal terms are weighted by signature overlaps.
    pub fn per_antenna_covariance(&self) -> CMatrix {
        match &self.signatures {
            Some(s) => self.covariance.component_mul(&(s * s.adjoint())),
            None => self.covariance.clone(),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> AmplitudeMatrix {
        let m = self.covariance.nrows();
        let entries = match &self.signatures {
            None => {
                let white = CMatrix::from_fn(m, self.n_rx, |_, _| rng::complex_gaussian(rng, 1.0));
                &self.sqrt * white
            }
            Some(signatures) => {
                let white = CMatrix::from_fn(m, 1, |_, _| rng::complex_gaussian(rng, 1.0));
                // Scaled so the per-antenna power equals the beam power.
                let eta = &self.sqrt * white * Complex64::new((self.n_rx as f64).sqrt(), 0.0);
                CMatrix::from_fn(m, self.n_rx, |i, j| eta[i] * signatures[(i, j)])
            }
        };
        AmplitudeMatrix::from_parts(entries, Subspace::Original)
    }
}

fn draw_signatures<R: Rng + ?Sized>(rng: &mut R, m: usize, n_rx: usize, mode: SignatureMode) -> CMatrix {
    let mut unit = || {
        let mut v = CMatrix::from_fn(1, n_rx, |_, _| rng::complex_gaussian(rng, 1.0));
        let norm = v.norm();
        v /= Complex64::new(norm, 0.0);
        v
    };
    match mode {
        SignatureMode::PerBeam => {
            let mut s = CMatrix::zeros(m, n_rx);
            for i in 0..m {
                s.row_mut(i).copy_from(&unit());
            }
            s
        }
        SignatureMode::Shared => {
            let row = unit();
            CMatrix::from_fn(m, n_rx, |_, j| row[j])
        }
    }
}

/// Draws one amplitude matrix `X0` (per-beam signatures for the fully-correlated model).
pub fn generate_amplitudes(
    tap_set: &TapSet,
    config: &ChannelConfig,
    beam_covariance: &CMatrix,
    rng_seed: u64,
) -> Result<AmplitudeMatrix> {
    let generator = AmplitudeGenerator::new(tap_set, config, beam_covariance, SignatureMode::PerBeam, rng_seed)?;
    let mut rng = rng::stream(rng_seed, 0, rng::CHANNEL_STREAM);
    Ok(generator.draw(&mut rng))
}

/// Time-domain response `s(n, k) = sum_m x0[m][k] * sinc_kernel(n, n_m)`.
pub fn synthesize_snapshot(x0: &AmplitudeMatrix, tap_set: &TapSet, config: &ChannelConfig) -> Result<ChannelSnapshot> {
    x0.expect(Subspace::Original, "synthesize_snapshot")?;
    tap_set.validate_for(config)?;
    if x0.n_beams() != tap_set.len() || x0.n_rx() != config.n_rx {
        return Err(Error::Shape(format!(
            "amplitudes are {}x{}, expected {}x{}",
            x0.n_beams(),
            x0.n_rx(),
            tap_set.len(),
            config.n_rx
        )));
    }
    let kernel = DMatrix::from_fn(config.n_dft, tap_set.len(), |n, m| {
        sinc_kernel(n as i64, tap_set.delays[m] as i64, config)
    });
    let amps = x0.entries();
    let samples = CMatrix::from_fn(config.n_dft, config.n_rx, |n, k| {
        (0..tap_set.len())
            .filter(|&m| kernel[(n, m)] != 0.0)
            .map(|m| amps[(m, k)] * kernel[(n, m)])
            .sum()
    });
    ChannelSnapshot::new(samples, *config)
}
