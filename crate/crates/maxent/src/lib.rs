//! Maximum-entropy exploration for tabular MDPs.
//!
//! The library optimizes concave functionals of the discounted state
//! distribution (smoothed entropy, negated KL and cross-entropy divergences
//! to a target) over mixtures of stationary policies, using the conditional
//! gradient method: each iteration plans a policy against the gradient of
//! the objective at the current mixture's state distribution and folds it
//! into the mixture.
//!
//! - [`mdp`]: tabular model, policies, mixtures, occupancy algebra.
//! - [`objectives`]: the reward functionals with gradients and smoothness
//!   constants.
//! - [`oracles::exact`]: value-iteration planning and resolvent densities
//!   for known models.
//! - [`oracles::sample`]: episodic simulator, persistent-count planning,
//!   and rollout density estimation for hidden models.
//! - [`driver`]: the mixture loop, parameter schedules, and trace capture.
//! - [`env`]: built-in environments and seeded generators.
//! - [`rng`]: deterministic counter-based randomness.

pub mod driver;
pub mod env;
pub mod mdp;
pub mod objectives;
pub mod oracles;
pub mod rng;

pub use driver::{DriverConfig, DriverEnv, DriverOutcome, IterationTrace, OracleMode};
pub use env::EnvSpec;
pub use mdp::{
    MixturePolicy, PolicyRef, StateActionOccupancy, StateDistribution, StationaryPolicy,
    TabularMDP,
};
pub use objectives::{RewardFunctional, SmoothnessBundle};
pub use oracles::exact::{exact_density, value_iteration_plan, PlanResult};
pub use oracles::sample::{
    estimate_density, sample_plan, EpisodicSimulator, KnownSet, SamplePlanParams,
    TransitionCounts,
};
