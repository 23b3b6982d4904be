//! Particle-based maximum marginal likelihood estimation for latent-variable
//! models.
//!
//! A [`LatentModel`] supplies `log p_θ(x, y)` and its gradients. The
//! [`samplers`] module evolves a parameter estimate together with a cloud
//! of latent particles (PGA, scaled PGA, PQN, PMGA, SOUL), [`metropolis`]
//! adds population-wide accept/reject corrections, and [`oracles`] holds
//! the closed-form references used to check them.

pub mod config;
pub mod data;
pub mod error;
pub mod io;
pub mod metrics;
pub mod metropolis;
pub mod model;
pub mod models;
pub mod oracles;
pub mod rng;
pub mod samplers;

pub use config::{Algorithm, InitPolicy, JointUpdate, RunConfig, Trace};
pub use error::{Capability, Error, Result};
pub use model::{LatentModel, ParameterState, ParticleCloud};
pub use models::{BnnModel, LogisticRegression, ToyHierarchical};
pub use rng::{Purpose, StepRng};
pub use samplers::{run, Preconditioner};
