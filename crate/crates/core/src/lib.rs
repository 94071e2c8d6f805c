//! Theoretical performance bounds for massive-MIMO uplink channel estimation.
//!
//! The crate models a band-limited multi-tap channel, moves it into an
//! orthonormal beam subspace, and evaluates the linear-MMSE residual error
//! `tr((sigma^-2 I + C^-1)^-1)` for three antenna-correlation models plus an
//! unshrunk baseline. A seeded Monte Carlo harness checks the closed form
//! against simulated artificial channel estimates.

pub mod beam;
pub mod channel;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod linalg;
pub mod rng;

pub use beam::{BeamBasis, CorrelationMatrix};
pub use channel::{AmplitudeMatrix, ChannelConfig, ChannelSnapshot, CorrelationModel, Subspace, TapSet};
pub use error::{Error, Result};
pub use estimator::{BoundModel, NoiseMatrix, NoiseProjection, NoiseSpec};
pub use harness::{BoundCurve, CurvePoint, ModelResult, Scenario};
