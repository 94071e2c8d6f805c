//! Seeded Monte Carlo sweeps comparing simulated artificial channel estimates
//! against the closed-form residual power.
//!
//! Each trial draws its channel from stream `(master_seed, trial, CHANNEL)` and
//! the noise of model `m` from stream `(master_seed, trial, NOISE_BASE + m)`,
//! so results do not depend on scheduling and adding a model leaves the other
//! models' numbers unchanged. Per-trial residuals are reduced in trial order.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beam::{estimate_correlation, ls_time_domain_estimate, BeamBasis, CorrelationMatrix};
use crate::channel::{AmplitudeGenerator, AmplitudeMatrix, ChannelConfig, ChannelSnapshot, SignatureMode, TapSet};
use crate::error::{Error, Result};
use crate::estimator::{draw_noise_with, residual_power_theoretical, ArtificialCe, BoundModel, NoiseSpec};
use crate::linalg::{check_hermitian_psd, CMatrix};
use crate::rng::{self, CHANNEL_STREAM, NOISE_STREAM_BASE};

/// Trials per point from which agreement with the closed form is enforced.
pub const MIN_POWERED_TRIALS: usize = 10_000;
/// Relative agreement floor between empirical and theoretical residuals.
pub const AGREEMENT_RTOL: f64 = 0.02;
/// Agreement band in standard errors.
pub const AGREEMENT_STD_ERRS: f64 = 5.0;

/// One simulation scenario. Build with [`Scenario::new`] or [`Scenario::default_scenario`].
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ChannelConfig,
    pub tap_set: TapSet,
    /// Covariance of the tap amplitudes `X0` across beams.
    pub beam_covariance: CMatrix,
    pub signature_mode: SignatureMode,
    pub snr_grid_db: Vec<f64>,
    pub n_trials: usize,
    pub master_seed: u64,
    pub models: Vec<BoundModel>,
}

impl Scenario {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        config: ChannelConfig,
        tap_set: TapSet,
        beam_covariance: CMatrix,
        signature_mode: SignatureMode,
        snr_grid_db: Vec<f64>,
        n_trials: usize,
        master_seed: u64,
        mut models: Vec<BoundModel>,
    ) -> Result<Self> {
        models.sort();
        models.dedup();
        let scenario = Scenario {
            config,
            tap_set,
            beam_covariance,
            signature_mode,
            snr_grid_db,
            n_trials,
            master_seed,
            models,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// 4 taps over 4 RBs of a 256-point DFT, 64 antennas, two pilots, all models.
    pub fn default_scenario() -> Self {
        let config = ChannelConfig::new(256, 4, 64).expect("default channel config");
        let tap_set =
            TapSet::new(vec![0, 6, 14, 25], vec![1.0, 0.5, 0.25, 0.125], Default::default()).expect("default taps");
        let beam_covariance = tap_set.diagonal_covariance();
        Scenario::new(
            config,
            tap_set,
            beam_covariance,
            SignatureMode::PerBeam,
            vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
            MIN_POWERED_TRIALS,
            1,
            BoundModel::ALL.to_vec(),
        )
        .expect("default scenario")
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        self.tap_set.validate_for(&self.config)?;
        validate_grid(&self.snr_grid_db)?;
        if self.n_trials == 0 {
            return Err(Error::config("n_trials", "must be at least 1"));
        }
        if self.models.is_empty() {
            return Err(Error::config("models", "at least one model is required"));
        }
        let m = self.tap_set.len();
        let cov = &self.beam_covariance;
        if cov.nrows() != m || cov.ncols() != m {
            return Err(Error::config(
                "tap_set.covariance",
                format!("covariance is {}x{}, expected {m}x{m}", cov.nrows(), cov.ncols()),
            ));
        }
        check_hermitian_psd(cov).map_err(|e| Error::config("tap_set.covariance", e.to_string()))?;
        for (i, &p) in self.tap_set.powers.iter().enumerate() {
            let d = cov[(i, i)];
            if (d.re - p).abs() > 1e-9 * p || d.im.abs() > 1e-9 * p {
                return Err(Error::config(
                    "tap_set.covariance",
                    format!("diagonal entry {i} is {d}, tap power is {p}"),
                ));
            }
        }
        Ok(())
    }
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::config("snr_grid_db", "must not be empty"));
    }
    if grid.iter().any(|s| !s.is_finite()) {
        return Err(Error::config("snr_grid_db", "values must be finite"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config("snr_grid_db", "must be strictly increasing"));
    }
    Ok(())
}

/// Empirical mean residual with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Empirical {
    pub mean: f64,
    pub std_err: f64,
}

impl Empirical {
    /// Mean and `sqrt(sample variance / n)`, summed in slice order.
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Empirical {
                mean: f64::NAN,
                std_err: f64::NAN,
            };
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let std_err = if n > 1 {
            let var = samples.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Empirical { mean, std_err }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Agreement {
    Agrees,
    Disagrees,
    /// Fewer than [`MIN_POWERED_TRIALS`] trials; not judged.
    Underpowered,
    /// Closed-form only, no simulation ran.
    NotSimulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub model: BoundModel,
    pub theoretical_residual: f64,
    pub empirical: Option<Empirical>,
    pub n_trials: usize,
    /// Phase-projection entries left unprojected because the signal was zero.
    pub degeneracies: u64,
}

impl ModelResult {
    pub fn agreement(&self) -> Agreement {
        let Some(emp) = self.empirical else {
            return Agreement::NotSimulated;
        };
        if self.n_trials < MIN_POWERED_TRIALS {
            return Agreement::Underpowered;
        }
        let band = (AGREEMENT_RTOL * self.theoretical_residual).max(AGREEMENT_STD_ERRS * emp.std_err);
        if (emp.mean - self.theoretical_residual).abs() < band {
            Agreement::Agrees
        } else {
            Agreement::Disagrees
        }
    }

    /// `10 log10(signal_power / residual)` from the theoretical residual.
    pub fn effective_snr_db(&self, signal_power: f64) -> f64 {
        10.0 * (signal_power / self.theoretical_residual).log10()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub snr_db: f64,
    pub sigma2: f64,
    pub results: Vec<ModelResult>,
}

impl CurvePoint {
    pub fn result(&self, model: BoundModel) -> Option<&ModelResult> {
        self.results.iter().find(|r| r.model == model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCurve {
    pub n_beams: usize,
    pub n_rx: usize,
    pub n_pilots: usize,
    /// `tr(C)` of the orthogonal-subspace correlation.
    pub signal_power: f64,
    pub master_seed: u64,
    pub points: Vec<CurvePoint>,
}

/// `sigma2 = tr(C)/M * 10^(-snr_db/10)`.
pub fn snr_to_sigma2(snr_db: f64, c: &CorrelationMatrix) -> Result<f64> {
    let per_beam = c.trace() / c.dim() as f64;
    if per_beam.is_nan() || per_beam <= 0.0 {
        return Err(Error::DegenerateScenario("correlation matrix has zero trace".into()));
    }
    Ok(per_beam * 10f64.powf(-snr_db / 10.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}

enum Truth {
    Generated { generator: AmplitudeGenerator, r: CMatrix },
    Fixed(CMatrix),
}

/// Precomputed per-scenario state shared by all points of a sweep.
struct Prepared {
    truth: Truth,
    correlation: CorrelationMatrix,
    n_rx: usize,
    n_pilots: usize,
    n_trials: usize,
    master_seed: u64,
    models: Vec<BoundModel>,
}

impl Prepared {
    fn from_scenario(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        let basis = BeamBasis::from_taps(&scenario.tap_set, &scenario.config)?;
        let generator = AmplitudeGenerator::new(
            &scenario.tap_set,
            &scenario.config,
            &scenario.beam_covariance,
            scenario.signature_mode,
            scenario.master_seed,
        )?;
        let correlation = CorrelationMatrix::new(generator.per_antenna_covariance())?.congruence(basis.r_matrix())?;
        Ok(Prepared {
            truth: Truth::Generated {
                generator,
                r: basis.r_matrix().clone(),
            },
            correlation,
            n_rx: scenario.config.n_rx,
            n_pilots: scenario.config.n_pilots,
            n_trials: scenario.n_trials,
            master_seed: scenario.master_seed,
            models: scenario.models.clone(),
        })
    }

    fn truth(&self, trial: u64) -> std::borrow::Cow<'_, CMatrix> {
        match &self.truth {
            Truth::Generated { generator, r } => {
                let mut rng = rng::stream(self.master_seed, trial, CHANNEL_STREAM);
                let x0 = generator.draw(&mut rng);
                std::borrow::Cow::Owned(r * x0.entries())
            }
            Truth::Fixed(x) => std::borrow::Cow::Borrowed(x),
        }
    }

    fn point(&self, snr_db: f64, execution: Execution, simulate: bool) -> Result<CurvePoint> {
        let sigma2 = snr_to_sigma2(snr_db, &self.correlation)?;
        let noise = NoiseSpec::new(sigma2, self.n_pilots)?;
        let estimators = self
            .models
            .iter()
            .map(|&model| ArtificialCe::new(&self.correlation, &noise, model, self.n_rx))
            .collect::<Result<Vec<_>>>()?;
        let m = self.correlation.dim();
        let n_rx = self.n_rx;

        let trial = |t: usize| -> Result<Vec<(f64, usize)>> {
            let x = self.truth(t as u64);
            estimators
                .iter()
                .map(|ce| {
                    let mut rng = rng::stream(self.master_seed, t as u64, NOISE_STREAM_BASE + ce.model().index());
                    let raw = draw_noise_with(&mut rng, m, n_rx, &noise);
                    let (estimate, degenerate) = ce.estimate(&x, &raw)?;
                    Ok(((x.as_ref() - estimate).norm_squared() / n_rx as f64, degenerate))
                })
                .collect()
        };

        let per_trial: Vec<Vec<(f64, usize)>> = if !simulate {
            Vec::new()
        } else {
            match execution {
                Execution::Serial => (0..self.n_trials).map(trial).collect::<Result<_>>()?,
                Execution::Parallel => (0..self.n_trials).into_par_iter().map(trial).collect::<Result<_>>()?,
            }
        };

        let results = self
            .models
            .iter()
            .enumerate()
            .map(|(i, &model)| {
                let theoretical_residual = residual_power_theoretical(&self.correlation, &noise, model, n_rx);
                if !simulate {
                    return ModelResult {
                        model,
                        theoretical_residual,
                        empirical: None,
                        n_trials: 0,
                        degeneracies: 0,
                    };
                }
                let residuals: Vec<f64> = per_trial.iter().map(|t| t[i].0).collect();
                let degeneracies = per_trial.iter().map(|t| t[i].1 as u64).sum();
                ModelResult {
                    model,
                    theoretical_residual,
                    empirical: Some(Empirical::from_samples(&residuals)),
                    n_trials: self.n_trials,
                    degeneracies,
                }
            })
            .collect();
        Ok(CurvePoint {
            snr_db,
            sigma2,
            results,
        })
    }

    fn sweep(&self, grid: &[f64], execution: Execution, simulate: bool) -> Result<BoundCurve> {
        let points = grid
            .iter()
            .map(|&snr| self.point(snr, execution, simulate))
            .collect::<Result<Vec<_>>>()?;
        Ok(BoundCurve {
            n_beams: self.correlation.dim(),
            n_rx: self.n_rx,
            n_pilots: self.n_pilots,
            signal_power: self.correlation.trace(),
            master_seed: self.master_seed,
            points,
        })
    }
}

/// Orthogonal-subspace correlation `R C R^H` the estimator uses for `scenario`.
pub fn scenario_correlation(scenario: &Scenario) -> Result<CorrelationMatrix> {
    Ok(Prepared::from_scenario(scenario)?.correlation)
}

/// Simulates `scenario.n_trials` trials at one SNR for every requested model.
pub fn run_point(scenario: &Scenario, snr_db: f64) -> Result<CurvePoint> {
    Prepared::from_scenario(scenario)?.point(snr_db, Execution::Parallel, true)
}

pub fn run_sweep(scenario: &Scenario) -> Result<BoundCurve> {
    run_sweep_with(scenario, Execution::Parallel)
}

pub fn run_sweep_with(scenario: &Scenario, execution: Execution) -> Result<BoundCurve> {
    let prepared = Prepared::from_scenario(scenario)?;
    prepared.sweep(&scenario.snr_grid_db, execution, true)
}

/// Closed-form residuals only; empirical fields are left empty.
pub fn theoretical_curve(scenario: &Scenario) -> Result<BoundCurve> {
    let prepared = Prepared::from_scenario(scenario)?;
    prepared.sweep(&scenario.snr_grid_db, Execution::Serial, false)
}

/// Sweep settings for an ingested snapshot.
#[derive(Debug, Clone)]
pub struct SnapshotRun {
    pub snr_grid_db: Vec<f64>,
    pub n_trials: usize,
    pub master_seed: u64,
    pub n_pilots: usize,
    pub models: Vec<BoundModel>,
    /// When set, the snapshot geometry must match it.
    pub expected_config: Option<ChannelConfig>,
}

#[derive(Debug, Clone)]
pub struct SnapshotBounds {
    /// LS beam amplitudes `Q^H S`, used as ground truth.
    pub amplitudes: AmplitudeMatrix,
    pub correlation: CorrelationMatrix,
    pub curve: BoundCurve,
}

/// Beam matrix, QR, LS projection, single-sample correlation, then a sweep
/// with the projected amplitudes held fixed as ground truth.
pub fn run_from_snapshot(snapshot: &ChannelSnapshot, tap_set: &TapSet, run: &SnapshotRun) -> Result<SnapshotBounds> {
    let config = snapshot.config();
    if let Some(expected) = &run.expected_config {
        if (expected.n_dft, expected.n_rx, expected.n_rb) != (config.n_dft, config.n_rx, config.n_rb) {
            return Err(Error::Shape(format!(
                "snapshot has n_dft={} n_rx={} n_rb={}, scenario expects n_dft={} n_rx={} n_rb={}",
                config.n_dft, config.n_rx, config.n_rb, expected.n_dft, expected.n_rx, expected.n_rb
            )));
        }
    }
    validate_grid(&run.snr_grid_db)?;
    if run.n_trials == 0 {
        return Err(Error::config("n_trials", "must be at least 1"));
    }
    if run.models.is_empty() {
        return Err(Error::config("models", "at least one model is required"));
    }
    let basis = BeamBasis::from_taps(tap_set, config)?;
    let amplitudes = ls_time_domain_estimate(snapshot, &basis)?;
    let correlation = estimate_correlation(&amplitudes);
    let mut models = run.models.clone();
    models.sort();
    models.dedup();
    let prepared = Prepared {
        truth: Truth::Fixed(amplitudes.entries().clone()),
        correlation: correlation.clone(),
        n_rx: config.n_rx,
        n_pilots: run.n_pilots,
        n_trials: run.n_trials,
        master_seed: run.master_seed,
        models,
    };
    let curve = prepared.sweep(&run.snr_grid_db, Execution::Parallel, true)?;
    Ok(SnapshotBounds {
        amplitudes,
        correlation,
        curve,
    })
}

/// Exponentially correlated covariance `sqrt(p_i p_k) * rho^|i-k|`.
pub fn exponential_covariance(powers: &[f64], rho: Complex64) -> CMatrix {
    let m = powers.len();
    CMatrix::from_fn(m, m, |i, k| {
        let scale = (powers[i] * powers[k]).sqrt();
        let lag = i.abs_diff(k) as i32;
        let c = rho.powi(lag);
        Complex64::new(scale, 0.0) * if i <= k { c } else { c.conj() }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::CorrelationModel;

    fn small_scenario(n_trials: usize) -> Scenario {
        let config = ChannelConfig::new(96, 2, 16).unwrap();
        let taps = TapSet::new(vec![0, 5, 11], vec![1.0, 0.4, 0.2], CorrelationModel::Uncorrelated).unwrap();
        let cov = taps.diagonal_covariance();
        Scenario::new(
            config,
            taps,
            cov,
            SignatureMode::PerBeam,
            vec![-5.0, 0.0, 5.0],
            n_trials,
            3,
            BoundModel::ALL.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn snr_mapping() {
        let unit = CorrelationMatrix::new(CMatrix::identity(1, 1)).unwrap();
        assert_eq!(snr_to_sigma2(0.0, &unit).unwrap(), 1.0);
        assert!((snr_to_sigma2(10.0, &unit).unwrap() - 0.1).abs() < 1e-15);
        let two = CorrelationMatrix::new(CMatrix::identity(2, 2) * Complex64::new(2.0, 0.0)).unwrap();
        assert!((snr_to_sigma2(-10.0, &two).unwrap() - 20.0).abs() < 1e-12);
        let zero = CorrelationMatrix::new(CMatrix::zeros(2, 2)).unwrap();
        assert!(matches!(snr_to_sigma2(0.0, &zero), Err(Error::DegenerateScenario(_))));
    }

    #[test]
    fn scenario_validation() {
        let s = small_scenario(10);
        let mut bad = s.clone();
        bad.snr_grid_db = vec![0.0, 0.0];
        assert!(bad.validate().is_err());
        let mut bad = s.clone();
        bad.n_trials = 0;
        assert!(bad.validate().is_err());
        let mut bad = s.clone();
        bad.beam_covariance[(0, 0)] = Complex64::new(2.0, 0.0);
        assert!(bad.validate().unwrap_err().to_string().contains("tap_set.covariance"));
        let mut bad = s;
        bad.snr_grid_db.clear();
        assert!(bad.validate().is_err());
    }

    #[test]
    fn ideal_ce_limit() {
        let mut s = small_scenario(1);
        s.snr_grid_db = vec![120.0];
        let point = run_point(&s, 120.0).unwrap();
        for r in &point.results {
            assert!(r.empirical.unwrap().mean < 1e-8, "{r:?}");
        }
    }

    #[test]
    fn sweep_is_deterministic_and_schedule_independent() {
        let s = small_scenario(64);
        let a = run_sweep_with(&s, Execution::Parallel).unwrap();
        let b = run_sweep_with(&s, Execution::Serial).unwrap();
        let c = run_sweep(&s).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert_eq!(a.points.len(), 3);
    }

    #[test]
    fn adding_a_model_leaves_others_unchanged() {
        let mut s = small_scenario(32);
        s.models = vec![BoundModel::Bound1Uncorrelated];
        let only = run_sweep(&s).unwrap();
        s.models = BoundModel::ALL.to_vec();
        let all = run_sweep(&s).unwrap();
        for (p, q) in only.points.iter().zip(&all.points) {
            assert_eq!(
                p.result(BoundModel::Bound1Uncorrelated),
                q.result(BoundModel::Bound1Uncorrelated)
            );
        }
    }

    #[test]
    fn underpowered_and_theoretical_only_flags() {
        let s = small_scenario(10);
        let curve = run_sweep(&s).unwrap();
        assert!(curve
            .points
            .iter()
            .flat_map(|p| &p.results)
            .all(|r| r.agreement() == Agreement::Underpowered));
        let theory = theoretical_curve(&s).unwrap();
        assert!(theory
            .points
            .iter()
            .flat_map(|p| &p.results)
            .all(|r| r.agreement() == Agreement::NotSimulated));
        assert_eq!(
            theory.points[0].results[0].theoretical_residual,
            curve.points[0].results[0].theoretical_residual
        );
    }

    #[test]
    fn exponential_covariance_is_hermitian_psd() {
        let c = exponential_covariance(&[1.0, 0.5, 0.25], Complex64::new(0.3, 0.4));
        check_hermitian_psd(&c).unwrap();
        assert!((c[(1, 1)].re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn standard_error_of_constant_samples_is_zero() {
        let e = Empirical::from_samples(&[2.0, 2.0, 2.0]);
        assert_eq!((e.mean, e.std_err), (2.0, 0.0));
        assert_eq!(Empirical::from_samples(&[1.5]).std_err, 0.0);
    }
}
