//! The latent-variable model interface and the shared numeric state types.

use nalgebra::DMatrix;
use rand::RngCore;

use crate::error::{Capability, Error, Result};

/// A latent-variable model `p_θ(x, y)` with the observed data `y` baked in.
///
/// Implementations hold no mutable state and may be evaluated concurrently.
/// `log_joint` must keep every θ-dependent additive constant, since the
/// Metropolis–Hastings corrections compare log densities at different θ.
///
/// The required methods do not validate dimensions; callers outside the hot
/// loops should go through the checked free functions in this module.
pub trait LatentModel: Send + Sync {
    fn name(&self) -> &str;

    /// Dimension of the parameter space.
    fn d_theta(&self) -> usize;

    /// Dimension of the latent space.
    fn d_x(&self) -> usize;

    /// `ℓ(θ, x) = log p_θ(x, y)`.
    fn log_joint(&self, theta: &[f64], x: &[f64]) -> f64;

    /// Writes `∇_θ ℓ(θ, x)` into `out` (length `d_theta`).
    fn grad_theta(&self, theta: &[f64], x: &[f64], out: &mut [f64]);

    /// Writes `∇_x ℓ(θ, x)` into `out` (length `d_x`).
    fn grad_x(&self, theta: &[f64], x: &[f64], out: &mut [f64]);

    /// Negative θ-Hessian `-(∂²ℓ/∂θ_i∂θ_j)`.
    fn neg_hess_theta(&self, _theta: &[f64], _x: &[f64]) -> Result<DMatrix<f64>> {
        Err(Error::unsupported(self.name(), Capability::NegHessTheta))
    }

    /// Unique maximizer of `θ ↦ Σ_n ℓ(θ, x^n)` over the cloud.
    fn exact_m_step(&self, _cloud: &ParticleCloud) -> Result<Vec<f64>> {
        Err(Error::unsupported(self.name(), Capability::ExactMStep))
    }

    /// One exact EM iteration, for models where both E and M steps are closed form.
    fn exact_em_step(&self, _theta: &[f64]) -> Result<Vec<f64>> {
        Err(Error::unsupported(self.name(), Capability::ExactEmStep))
    }

    /// Draws `x` from the prior `p_θ(x)` into `out`.
    fn sample_prior(&self, _theta: &[f64], _rng: &mut dyn RngCore, _out: &mut [f64]) -> Result<()> {
        Err(Error::unsupported(self.name(), Capability::PriorSampling))
    }

    /// Number of additive terms in each component of `∇_θ ℓ`; used for the
    /// default diagonal preconditioner of scaled PGA.
    fn theta_term_counts(&self) -> Result<Vec<f64>> {
        Err(Error::unsupported(self.name(), Capability::TermCounts))
    }

    fn has_neg_hess_theta(&self) -> bool {
        false
    }

    fn has_exact_m_step(&self) -> bool {
        false
    }

    fn has_exact_em_step(&self) -> bool {
        false
    }
}

/// `N` latent points in `R^{d_x}`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    points: Vec<f64>,
    n: usize,
    d_x: usize,
}

impl ParticleCloud {
    pub fn new(n: usize, d_x: usize, points: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidConfig {
                field: "n_particles",
                reason: "must be at least 1".into(),
            });
        }
        if d_x == 0 {
            return Err(Error::InvalidConfig {
                field: "d_x",
                reason: "latent dimension must be at least 1".into(),
            });
        }
        if points.len() != n * d_x {
            return Err(Error::DimensionMismatch {
                what: "particle cloud storage",
                expected: n * d_x,
                got: points.len(),
            });
        }
        Ok(Self { points, n, d_x })
    }

    pub fn filled(n: usize, d_x: usize, value: f64) -> Result<Self> {
        Self::new(n, d_x, vec![value; n * d_x])
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let d_x = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut points = Vec::with_capacity(rows.len() * d_x);
        for r in rows {
            let r = r.as_ref();
            if r.len() != d_x {
                return Err(Error::DimensionMismatch {
                    what: "particle row",
                    expected: d_x,
                    got: r.len(),
                });
            }
            points.extend_from_slice(r);
        }
        Self::new(rows.len(), d_x, points)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d_x(&self) -> usize {
        self.d_x
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.points[i * self.d_x..(i + 1) * self.d_x]
    }

    pub fn particle_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.points[i * self.d_x..(i + 1) * self.d_x]
    }

    pub fn particles(&self) -> std::slice::ChunksExact<'_, f64> {
        self.points.chunks_exact(self.d_x)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.points
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.points
    }

    /// Mean over all `N·d_x` entries, summed left to right.
    pub fn grand_mean(&self) -> f64 {
        self.points.iter().sum::<f64>() / self.points.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.points.iter().all(|v| v.is_finite())
    }
}

/// The current parameter estimate and its post-burn-in running average.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterState {
    pub theta: Vec<f64>,
    pub theta_bar: Vec<f64>,
    /// Number of completed steps.
    pub k: usize,
    pub burn_in: usize,
    averaged: usize,
}

impl ParameterState {
    pub fn new(theta: Vec<f64>, burn_in: usize) -> Self {
        let theta_bar = vec![0.0; theta.len()];
        Self {
            theta,
            theta_bar,
            k: 0,
            burn_in,
            averaged: 0,
        }
    }

    /// Records the estimate produced by the next step and folds it into the
    /// streaming mean once past burn-in.
    pub fn record(&mut self, theta: Vec<f64>) {
        self.k += 1;
        self.theta = theta;
        if self.k > self.burn_in {
            self.averaged += 1;
            let w = 1.0 / self.averaged as f64;
            for (bar, t) in self.theta_bar.iter_mut().zip(&self.theta) {
                *bar += (t - *bar) * w;
            }
        }
    }

    /// Number of estimates folded into `theta_bar`.
    pub fn averaged(&self) -> usize {
        self.averaged
    }
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { what, expected, got });
    }
    Ok(())
}

fn check_point(model: &dyn LatentModel, theta: &[f64], x: &[f64]) -> Result<()> {
    check_len("theta", model.d_theta(), theta.len())?;
    check_len("x", model.d_x(), x.len())
}

pub fn log_joint(model: &dyn LatentModel, theta: &[f64], x: &[f64]) -> Result<f64> {
    check_point(model, theta, x)?;
    Ok(model.log_joint(theta, x))
}

pub fn grad_theta(model: &dyn LatentModel, theta: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    check_point(model, theta, x)?;
    let mut out = vec![0.0; model.d_theta()];
    model.grad_theta(theta, x, &mut out);
    Ok(out)
}

pub fn grad_x(model: &dyn LatentModel, theta: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    check_point(model, theta, x)?;
    let mut out = vec![0.0; model.d_x()];
    model.grad_x(theta, x, &mut out);
    Ok(out)
}

pub fn neg_hess_theta(model: &dyn LatentModel, theta: &[f64], x: &[f64]) -> Result<DMatrix<f64>> {
    check_point(model, theta, x)?;
    model.neg_hess_theta(theta, x)
}

pub fn exact_m_step(model: &dyn LatentModel, cloud: &ParticleCloud) -> Result<Vec<f64>> {
    check_len("cloud d_x", model.d_x(), cloud.d_x())?;
    model.exact_m_step(cloud)
}

/// `(1/N) Σ_n ∇_θ ℓ(θ, x^n)`, accumulated in particle order.
pub fn mean_grad_theta(model: &dyn LatentModel, theta: &[f64], cloud: &ParticleCloud) -> Vec<f64> {
    let mut acc = vec![0.0; model.d_theta()];
    let mut g = vec![0.0; model.d_theta()];
    for x in cloud.particles() {
        model.grad_theta(theta, x, &mut g);
        for (a, v) in acc.iter_mut().zip(&g) {
            *a += v;
        }
    }
    let inv = 1.0 / cloud.n() as f64;
    acc.iter_mut().for_each(|a| *a *= inv);
    acc
}
