//! Exact (perfect) sampling of the stationary fork-join network and pathwise gradient
//! estimation of its mean sojourn time.
//!
//! The sampler reveals the stationary waiting-time vector by simulating the time-reversed
//! multidimensional random walk far enough into the past, using exponential tilting to
//! certify that no later maximum can occur.

pub mod backward;
pub mod config;
pub mod error;
pub mod ipa;
pub mod model;
pub mod observables;
pub mod oracle;
pub mod stats;

pub use backward::{milestone_level, BackwardPath, BackwardSampler, SamplerConfig};
pub use config::{CoverageSpec, ExperimentConfig, Output};
pub use error::{Error, Result};
pub use ipa::{argmax_station, gradient_estimator, GradientSample};
pub use model::{cramer_root, CramerRoots, DistributionSpec, Law, NetworkModel, Station};
pub use observables::{draw_stationary_sample, StationarySample};
pub use oracle::{
    burn_in_estimate, finite_difference_gradient, mm_forkjoin_mean_sojourn, mm_forkjoin_mean_unsync,
    mm_forkjoin_sojourn_derivative, BurnInEstimate, BurnInSettings, FiniteDifference,
};
pub use stats::{
    ci, coverage_experiment, replication_rng, run_experiment, CoverageResult, EstimateReport, Quantity,
    QuantityEstimate, Z_95,
};
