//! Joint downlink-uplink max-min beamforming for cell-free massive MIMO.
//!
//! BSs and UEs alternate closed-form beamformer updates inside a successive
//! convex approximation loop, either on true channels or on channels learned
//! through bi-directional pilot training.

pub mod bs_solver;
pub mod config;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod orchestrator;
pub mod rng;
pub mod scenario;
pub mod scheme;
pub mod training;
pub mod ue_solver;

pub use config::SimConfig;
pub use error::{Error, Result};
pub use metrics::{BeamformerSet, Directions, RateSummary, SinrTable};
pub use orchestrator::{monte_carlo, run_scheme, CsiMode, MonteCarloReport, MonteCarloSpec, RunResult};
pub use scenario::{ChannelSet, NetworkGeometry, ScenarioConfig};
pub use scheme::Scheme;
