//! Simulation and analysis toolkit for actively temporally multiplexed
//! heralded single-photon sources.
//!
//! The crate models a pulsed pair source pumped at four time bins per
//! 100 ns clock frame, a latched switching network that routes heralded
//! photons from any bin into one common output slot, threshold detectors
//! with a start/stop interval analyzer, and Hong-Ou-Mandel interference
//! against a reference source. A closed-form model of the
//! coincidence-to-accidental ratio cross-checks the Monte Carlo, and an
//! inference chain turns measured coincidence rates into heralded
//! single-photon output probabilities and multiplexing enhancement
//! factors.

pub mod analysis;
pub mod api;
pub mod config;
pub mod detect;
pub mod engine;
pub mod hom;
pub mod network;
pub mod output;
pub mod rng;
pub mod scenario;
pub mod thermal;
pub mod timeline;

pub use config::RunConfig;
pub use engine::scan_switch_delay;
pub use scenario::{run_scenario, RunOutput};

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("no solution: {0}")]
    NoSolution(String),
    #[error("interpolation error: {0}")]
    Interpolation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
