//! Run configuration and run output.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParticleCloud;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Particle gradient ascent.
    Pga,
    /// Particle gradient ascent with a diagonal preconditioner on the θ-gradient.
    PgaScaled,
    /// Particle quasi-Newton.
    Pqn,
    /// Particle marginal gradient ascent (exact M-step inside the latent drift).
    Pmga,
    /// Serial ULA chain per θ update, warm-started from the previous chain.
    Soul,
    /// SOUL with the same diagonal preconditioner as `PgaScaled`.
    SoulScaled,
    /// Population-wide Metropolis correction of PMGA.
    MhMarginal,
    /// Population-wide joint Metropolis correction of PGA/PQN.
    MhJoint,
    /// Closed-form EM (toy model only).
    EmExact,
}

impl Algorithm {
    pub const ALL: [Algorithm; 9] = [
        Algorithm::Pga,
        Algorithm::PgaScaled,
        Algorithm::Pqn,
        Algorithm::Pmga,
        Algorithm::Soul,
        Algorithm::SoulScaled,
        Algorithm::MhMarginal,
        Algorithm::MhJoint,
        Algorithm::EmExact,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Pga => "pga",
            Algorithm::PgaScaled => "pga-scaled",
            Algorithm::Pqn => "pqn",
            Algorithm::Pmga => "pmga",
            Algorithm::Soul => "soul",
            Algorithm::SoulScaled => "soul-scaled",
            Algorithm::MhMarginal => "mh-marginal",
            Algorithm::MhJoint => "mh-joint",
            Algorithm::EmExact => "em-exact",
        }
    }

    pub fn uses_cloud(self) -> bool {
        self != Algorithm::EmExact
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// θ-update used by the joint Metropolis–Hastings method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JointUpdate {
    /// `θ + h · mean ∇_θ ℓ`.
    Pga,
    /// `θ + h · (Σ H)^{-1} Σ ∇_θ ℓ`.
    #[default]
    Pqn,
}

/// Starting point for θ and the particle cloud.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitPolicy {
    /// θ = 0 and every particle at the origin.
    #[default]
    Zeros,
    /// θ and every latent coordinate set to the same constant.
    Constant(f64),
    /// θ = 0 and particles drawn independently from the prior at θ = 0.
    Prior,
    /// θ and particles read from a state file written by a previous run.
    /// Particles are reused cyclically if the file holds fewer than `N`.
    WarmStart(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    /// Step size.
    pub h: f64,
    pub n_particles: usize,
    pub n_steps: usize,
    #[serde(default)]
    pub burn_in: usize,
    #[serde(default)]
    pub seed: u64,
    /// Cloud recording stride; 0 keeps only the final cloud.
    #[serde(default)]
    pub snapshot_every: usize,
    #[serde(default)]
    pub init: InitPolicy,
    /// Worker threads for particle updates; 0 uses the global pool.
    #[serde(default)]
    pub workers: usize,
    /// Diagonal preconditioner for the scaled variants; defaults to the
    /// reciprocal θ-gradient term counts reported by the model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
    #[serde(default)]
    pub joint_update: JointUpdate,
}

impl RunConfig {
    pub fn new(algorithm: Algorithm, h: f64, n_particles: usize, n_steps: usize) -> Self {
        Self {
            algorithm,
            h,
            n_particles,
            n_steps,
            burn_in: 0,
            seed: 0,
            snapshot_every: 0,
            init: InitPolicy::Zeros,
            workers: 0,
            lambda: None,
            joint_update: JointUpdate::default(),
        }
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = burn_in;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_init(mut self, init: InitPolicy) -> Self {
        self.init = init;
        self
    }

    pub fn with_snapshot_every(mut self, stride: usize) -> Self {
        self.snapshot_every = stride;
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(Error::InvalidConfig {
                field: "h",
                reason: format!("step size must be positive and finite, got {}", self.h),
            });
        }
        if self.n_particles == 0 {
            return Err(Error::InvalidConfig {
                field: "n_particles",
                reason: "must be at least 1".into(),
            });
        }
        if self.n_steps == 0 {
            return Err(Error::InvalidConfig {
                field: "n_steps",
                reason: "must be at least 1".into(),
            });
        }
        if self.burn_in >= self.n_steps {
            return Err(Error::InvalidConfig {
                field: "burn_in",
                reason: format!(
                    "burn-in {} must be smaller than n_steps {}",
                    self.burn_in, self.n_steps
                ),
            });
        }
        if let Some(lambda) = &self.lambda {
            if lambda.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
                return Err(Error::InvalidConfig {
                    field: "lambda",
                    reason: "preconditioner entries must be positive".into(),
                });
            }
        }
        if let InitPolicy::Constant(c) = self.init {
            if !c.is_finite() {
                return Err(Error::InvalidConfig {
                    field: "init",
                    reason: "constant must be finite".into(),
                });
            }
        }
        Ok(())
    }
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct Trace {
    pub algorithm: Algorithm,
    /// Row `k` holds θ after step `k + 1`.
    pub theta_path: Vec<Vec<f64>>,
    pub theta_bar_final: Vec<f64>,
    /// `(step, cloud)` snapshots; always ends with the final cloud when the
    /// algorithm carries one.
    pub clouds: Vec<(usize, ParticleCloud)>,
    pub acceptance_rate: Option<f64>,
    pub wall_time: f64,
    pub burn_in: usize,
}

impl Trace {
    pub fn final_theta(&self) -> &[f64] {
        self.theta_path.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn final_cloud(&self) -> Option<&ParticleCloud> {
        self.clouds.last().map(|(_, c)| c)
    }

    /// Snapshots taken strictly after burn-in, i.e. the clouds entering the
    /// time-averaged posterior approximation.
    pub fn post_burn_in_clouds(&self) -> impl Iterator<Item = &ParticleCloud> {
        let kb = self.burn_in;
        self.clouds
            .iter()
            .filter(move |(k, _)| *k > kb)
            .map(|(_, c)| c)
    }

    /// Running average column as reported in traces: θ_k during burn-in and
    /// the post-burn-in mean afterwards.
    pub fn theta_bar_path(&self) -> Vec<Vec<f64>> {
        let d = self.theta_bar_final.len();
        let mut out = Vec::with_capacity(self.theta_path.len());
        let mut sum = vec![0.0; d];
        let mut count = 0usize;
        for (i, theta) in self.theta_path.iter().enumerate() {
            let k = i + 1;
            if k > self.burn_in {
                count += 1;
                let w = 1.0 / count as f64;
                for (s, t) in sum.iter_mut().zip(theta) {
                    *s += (t - *s) * w;
                }
                out.push(sum.clone());
            } else {
                out.push(theta.clone());
            }
        }
        out
    }
}
