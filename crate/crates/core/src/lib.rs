//! Deterministic simulation of differential-equation models of learning.
//!
//! A learner's knowledge grows under a teacher's requirement level, decays
//! through forgetting, and is throttled by motivation (a cutoff on the
//! requirement gap) and by fatigue (workability falling with accumulated
//! work and recovering during breaks). Knowledge may be split into a chain
//! of strength categories where weak knowledge turns strong with use.
//!
//! - [`model`]: parameters, state and rate laws.
//! - [`integrator`]: the fixed-step explicit Euler engine.
//! - [`scenario`]: configuration documents, validation, built-in scenarios.
//! - [`optimizer`]: seeded local search over lesson requirement levels.
//! - [`export`]: trajectory CSV output.
//! - [`sweep`]: one-parameter sweeps over a base configuration.
//! - [`session`]: steerable live sessions with event-log replay and scoring.

pub mod export;
pub mod integrator;
pub mod model;
pub mod optimizer;
pub mod scenario;
pub mod session;
pub mod sweep;

pub use integrator::{
    richardson_error, simulate_segment, simulate_timeline, Phase, Regime, Sample, Trajectory,
};
pub use model::{LearnerState, ModelParams, ModelVariant, RateVector};
pub use optimizer::{evaluate_schedule, optimize_schedule, OptimizerSettings, Schedule};

pub use scenario::{
    builtin_scenario, parse_config, serialize_config, validate_config, ConfigError, Segment,
    SimulationConfig, ValidationError,
};
