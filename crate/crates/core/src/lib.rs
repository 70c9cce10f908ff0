//! Heralded single-photon source statistics for SPDC and cascaded-SPDC
//! (CSPDC) sources.
//!
//! The central design question: given fixed detectors, when does pumping a
//! downconversion crystal with heralded single photons (cascading) beat
//! pumping it directly? Three independent routes answer it:
//!
//! - [`analytic`]: closed-form singles/coincidence rates, heralded g2, its
//!   minimum over the pair rate, and the cascade-advantage criterion.
//! - [`detstate`]: the exact bucket-detector state-vector model, averaging
//!   detector transition matrices over the Poisson pair number.
//! - [`mc`]: a window-by-window Monte Carlo event simulation serving as an
//!   independent oracle for both.
//!
//! [`optsweep`] adds numeric minimization over the pair rate, plateau
//! extraction, parameter sweeps and the numeric advantage crossing.
//!
//! All operations are pure functions of their inputs and are safe to call
//! concurrently.

pub mod analytic;
pub mod config;
pub mod detstate;
pub mod error;
pub mod mc;
pub mod optsweep;
pub mod rates;

pub use config::{DetectorSpec, ExperimentConfig, FigureOfMerit, Role, RoleSet, SourceKind};
pub use error::{Error, Result};
pub use rates::{G2Result, ModelKind, Optimum, RateSet};
