//! Behavior-constrained contextual Thompson sampling.
//!
//! An agent first learns, from a teacher's allowed/forbidden feedback, a
//! per-arm linear model of which actions are acceptable in a context. Online
//! it blends that constrained model with a reward-driven Thompson sampler
//! through a single weight `σ`.

pub mod agents;
pub mod config;
pub mod env;
pub mod error;
pub mod experiments;
pub mod model;
pub mod plot;
pub mod policy_io;
pub mod rng;

pub use agents::{Agent, BlendConfig, ConstrainedPolicy, ConstrainedTerm, TeachingMethod};
pub use config::{parse_config, ExperimentConfig};
pub use env::{EnvironmentSpec, Scenario};
pub use error::{Error, Result};
pub use model::{compute_v, ArmPosterior, ContextVector, SamplerParams, WeightSample};
