//! Population-wide Metropolis–Hastings corrections.
//!
//! Both variants propose a whole new cloud with one ULA step and accept or
//! reject it in a single decision. The marginal variant targets
//! `ρ_N(x) ∝ exp(Σ_n ℓ(θ*(x), x^n))` using the M-step map `θ*`. The joint
//! variant proposes `(ψ, Z)` with `ψ = u(θ, X)` a deterministic θ-update.

use crate::config::JointUpdate;
use crate::error::{Error, Result};
use crate::model::{LatentModel, ParticleCloud};
use crate::rng::{Purpose, StepRng};
use crate::samplers::{self, pga_theta_update, pqn_theta_update};

/// Log-ratios below this are treated as `exp(-745)`, the smallest positive double.
pub const LOG_RATIO_FLOOR: f64 = -745.0;

/// `log N(z; x + h ∇_x ℓ(θ, x), 2h I)`.
pub fn ula_log_density(model: &dyn LatentModel, theta: &[f64], x: &[f64], z: &[f64], h: f64) -> f64 {
    let mut g = vec![0.0; x.len()];
    model.grad_x(theta, x, &mut g);
    let sq: f64 = z
        .iter()
        .zip(x)
        .zip(&g)
        .map(|((zi, xi), gi)| (zi - xi - h * gi).powi(2))
        .sum();
    let d = x.len() as f64;
    -sq / (4.0 * h) - 0.5 * d * (4.0 * std::f64::consts::PI * h).ln()
}

/// Sum over particles, in order, of the single-particle ULA log-density.
pub fn cloud_ula_log_density(
    model: &dyn LatentModel,
    theta: &[f64],
    from: &ParticleCloud,
    to: &ParticleCloud,
    h: f64,
) -> f64 {
    from.particles()
        .zip(to.particles())
        .map(|(x, z)| ula_log_density(model, theta, x, z, h))
        .sum()
}

/// `Σ_n ℓ(θ, x^n)`.
pub fn cloud_log_joint(model: &dyn LatentModel, theta: &[f64], cloud: &ParticleCloud) -> f64 {
    cloud.particles().map(|x| model.log_joint(theta, x)).sum()
}

/// Unnormalized `log ρ_N(x) = Σ_n ℓ(θ*(x), x^n)`.
pub fn log_rho_n(model: &dyn LatentModel, cloud: &ParticleCloud) -> Result<f64> {
    let theta = model.exact_m_step(cloud)?;
    Ok(cloud_log_joint(model, &theta, cloud))
}

/// Log acceptance ratio for moving from `x` to `z`. The forward kernel uses
/// `θ*(x)` and the reverse kernel `θ*(z)`.
pub fn marginal_log_ratio(
    model: &dyn LatentModel,
    x: &ParticleCloud,
    z: &ParticleCloud,
    h: f64,
) -> Result<f64> {
    let tx = model.exact_m_step(x)?;
    let tz = model.exact_m_step(z)?;
    let forward = cloud_ula_log_density(model, &tx, x, z, h);
    let reverse = cloud_ula_log_density(model, &tz, z, x, h);
    Ok(cloud_log_joint(model, &tz, z) + reverse - cloud_log_joint(model, &tx, x) - forward)
}

/// Log acceptance ratio for moving from `(θ, x)` to `(ψ, z)`.
pub fn joint_log_ratio(
    model: &dyn LatentModel,
    theta: &[f64],
    x: &ParticleCloud,
    psi: &[f64],
    z: &ParticleCloud,
    h: f64,
) -> f64 {
    let reverse = cloud_ula_log_density(model, psi, z, x, h);
    let forward = cloud_ula_log_density(model, theta, x, z, h);
    reverse - forward + cloud_log_joint(model, psi, z) - cloud_log_joint(model, theta, x)
}

/// The deterministic θ-move `u(θ, x)` of the joint method.
pub fn joint_theta_update(
    model: &dyn LatentModel,
    rule: JointUpdate,
    theta: &[f64],
    cloud: &ParticleCloud,
    h: f64,
    k: usize,
) -> Result<Vec<f64>> {
    match rule {
        JointUpdate::Pga => Ok(pga_theta_update(model, theta, cloud, h, None)),
        JointUpdate::Pqn => pqn_theta_update(model, theta, cloud, h, k),
    }
}

/// Clamps the log-ratio to `[LOG_RATIO_FLOOR, 0]` and compares with `log u`.
pub fn accept(log_ratio: f64, u: f64, k: usize) -> Result<bool> {
    if !log_ratio.is_finite() {
        return Err(Error::Divergence {
            step: k + 1,
            detail: format!("non-finite Metropolis log-ratio {log_ratio}"),
        });
    }
    let clamped = log_ratio.clamp(LOG_RATIO_FLOOR, 0.0);
    debug_assert!((0.0..=1.0).contains(&clamped.exp()));
    Ok(u.ln() <= clamped)
}

/// One marginal MH step. Returns whether the proposal was accepted.
pub fn marginal_mh_step(
    model: &dyn LatentModel,
    cloud: &mut ParticleCloud,
    h: f64,
    rng: &StepRng,
    k: usize,
) -> Result<bool> {
    let theta = model.exact_m_step(cloud)?;
    let mut proposal = cloud.clone();
    samplers::ula_step(model, &theta, &mut proposal, h, rng, k);
    let lr = marginal_log_ratio(model, cloud, &proposal, h)?;
    let ok = accept(lr, rng.uniform(Purpose::Accept, k as u64, 0), k)?;
    if ok {
        *cloud = proposal;
    }
    Ok(ok)
}

/// One joint MH step. On rejection both `theta` and `cloud` are unchanged.
pub fn joint_mh_step(
    model: &dyn LatentModel,
    theta: &mut Vec<f64>,
    cloud: &mut ParticleCloud,
    rule: JointUpdate,
    h: f64,
    rng: &StepRng,
    k: usize,
) -> Result<bool> {
    let psi = joint_theta_update(model, rule, theta, cloud, h, k)?;
    let mut proposal = cloud.clone();
    samplers::ula_step(model, theta, &mut proposal, h, rng, k);
    let lr = joint_log_ratio(model, theta, cloud, &psi, &proposal, h);
    let ok = accept(lr, rng.uniform(Purpose::Accept, k as u64, 0), k)?;
    if ok {
        *theta = psi;
        *cloud = proposal;
    }
    Ok(ok)
}
