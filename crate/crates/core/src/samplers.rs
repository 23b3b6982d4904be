//! Particle updates and the run loop.
//!
//! All step functions take the 0-based index `k` of the state being
//! advanced. Random draws for particle `n` come from stream `(k, n)`, and
//! errors report the 1-based step `k + 1`.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;

use crate::config::{Algorithm, InitPolicy, JointUpdate, RunConfig, Trace};
use crate::error::{Error, Result};
use crate::io;
use crate::metropolis;
use crate::model::{self, LatentModel, ParameterState, ParticleCloud};
use crate::rng::{Purpose, StepRng};

/// Diagonal scaling `Λ` applied to the averaged θ-gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Preconditioner {
    diag: Vec<f64>,
}

impl Preconditioner {
    pub fn new(diag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() || diag.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::InvalidConfig {
                field: "lambda",
                reason: "preconditioner entries must be positive".into(),
            });
        }
        Ok(Self { diag })
    }

    /// Reciprocal of the number of terms in each θ-gradient component.
    pub fn from_term_counts(model: &dyn LatentModel) -> Result<Self> {
        let counts = model.theta_term_counts()?;
        Self::new(counts.iter().map(|c| 1.0 / c).collect())
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    fn apply(&self, g: &mut [f64]) {
        for (v, l) in g.iter_mut().zip(&self.diag) {
            *v *= l;
        }
    }
}

/// `out = x + h ∇_x ℓ(θ, x) + √(2h) noise`.
pub fn ula_move(
    model: &dyn LatentModel,
    theta: &[f64],
    x: &[f64],
    h: f64,
    noise: &[f64],
    out: &mut [f64],
) {
    model.grad_x(theta, x, out);
    let scale = (2.0 * h).sqrt();
    for ((o, xi), w) in out.iter_mut().zip(x).zip(noise) {
        *o = xi + h * *o + scale * w;
    }
}

/// Moves every particle by one unadjusted Langevin step at fixed θ, in place.
pub fn ula_step(
    model: &dyn LatentModel,
    theta: &[f64],
    cloud: &mut ParticleCloud,
    h: f64,
    rng: &StepRng,
    k: usize,
) {
    let d = cloud.d_x();
    let scale = (2.0 * h).sqrt();
    cloud
        .as_mut_slice()
        .par_chunks_mut(d)
        .enumerate()
        .for_each_init(
            || (vec![0.0; d], vec![0.0; d]),
            |(g, w), (n, x)| {
                model.grad_x(theta, x, g);
                rng.fill_gaussian(Purpose::Langevin, k as u64, n as u64, w);
                for i in 0..d {
                    x[i] = x[i] + h * g[i] + scale * w[i];
                }
            },
        );
}

/// Per-particle θ-gradients, `N × d_θ` row-major.
fn particle_theta_grads(model: &dyn LatentModel, theta: &[f64], cloud: &ParticleCloud) -> Vec<f64> {
    let dt = model.d_theta();
    let mut grads = vec![0.0; cloud.n() * dt];
    grads
        .par_chunks_mut(dt)
        .zip(cloud.as_slice().par_chunks(cloud.d_x()))
        .for_each(|(g, x)| model.grad_theta(theta, x, g));
    grads
}

/// Sums rows of an `N × d` row-major buffer in row order.
fn sum_rows(rows: &[f64], d: usize) -> Vec<f64> {
    let mut acc = vec![0.0; d];
    for r in rows.chunks_exact(d) {
        for (a, v) in acc.iter_mut().zip(r) {
            *a += v;
        }
    }
    acc
}

/// `θ + h Λ (1/N) Σ_n ∇_θ ℓ(θ, x^n)`; `Λ = I` without a preconditioner.
pub fn pga_theta_update(
    model: &dyn LatentModel,
    theta: &[f64],
    cloud: &ParticleCloud,
    h: f64,
    precond: Option<&Preconditioner>,
) -> Vec<f64> {
    let grads = particle_theta_grads(model, theta, cloud);
    let mut g = sum_rows(&grads, model.d_theta());
    let inv = 1.0 / cloud.n() as f64;
    g.iter_mut().for_each(|v| *v *= inv);
    if let Some(p) = precond {
        p.apply(&mut g);
    }
    theta.iter().zip(&g).map(|(t, v)| t + h * v).collect()
}

/// Solves `H δ = g` for symmetric positive definite `H` by Cholesky.
pub fn solve_spd(hess: DMatrix<f64>, g: &[f64]) -> Option<Vec<f64>> {
    let chol = Cholesky::new(hess)?;
    let sol = chol.solve(&DVector::from_column_slice(g));
    Some(sol.iter().copied().collect())
}

/// `θ + h [Σ_n H(θ, x^n)]^{-1} Σ_n ∇_θ ℓ(θ, x^n)` with `H` the negative θ-Hessian.
pub fn pqn_theta_update(
    model: &dyn LatentModel,
    theta: &[f64],
    cloud: &ParticleCloud,
    h: f64,
    k: usize,
) -> Result<Vec<f64>> {
    let dt = model.d_theta();
    let hessians: Vec<DMatrix<f64>> = cloud
        .as_slice()
        .par_chunks(cloud.d_x())
        .map(|x| model.neg_hess_theta(theta, x))
        .collect::<Result<_>>()?;
    let mut hsum = DMatrix::zeros(dt, dt);
    for hm in &hessians {
        hsum += hm;
    }
    let grads = particle_theta_grads(model, theta, cloud);
    let gsum = sum_rows(&grads, dt);
    let delta = solve_spd(hsum, &gsum).ok_or(Error::SingularHessian { step: k + 1 })?;
    Ok(theta.iter().zip(&delta).map(|(t, d)| t + h * d).collect())
}

/// One PGA step (optionally preconditioned). θ and the cloud are both
/// advanced from the step-`k` state.
pub fn pga_step(
    model: &dyn LatentModel,
    state: &mut ParameterState,
    cloud: &mut ParticleCloud,
    h: f64,
    precond: Option<&Preconditioner>,
    rng: &StepRng,
    k: usize,
) {
    let theta = pga_theta_update(model, &state.theta, cloud, h, precond);
    ula_step(model, &state.theta, cloud, h, rng, k);
    state.record(theta);
}

pub fn pqn_step(
    model: &dyn LatentModel,
    state: &mut ParameterState,
    cloud: &mut ParticleCloud,
    h: f64,
    rng: &StepRng,
    k: usize,
) -> Result<()> {
    let theta = pqn_theta_update(model, &state.theta, cloud, h, k)?;
    ula_step(model, &state.theta, cloud, h, rng, k);
    state.record(theta);
    Ok(())
}

/// One PMGA step: the cloud moves under the drift evaluated at `θ*(X_k)`.
/// Records `θ*(X_{k+1})` as the new estimate.
pub fn pmga_step(
    model: &dyn LatentModel,
    state: &mut ParameterState,
    cloud: &mut ParticleCloud,
    h: f64,
    rng: &StepRng,
    k: usize,
) -> Result<()> {
    let theta_star = model.exact_m_step(cloud)?;
    ula_step(model, &theta_star, cloud, h, rng, k);
    state.record(model.exact_m_step(cloud)?);
    Ok(())
}

/// One SOUL step: θ moves as in PGA, then a single ULA chain of length `N`
/// at `θ_k` starting from the last particle of the previous chain replaces
/// the cloud. The move producing particle `n` uses stream `(k, n)`.
pub fn soul_step(
    model: &dyn LatentModel,
    state: &mut ParameterState,
    cloud: &mut ParticleCloud,
    h: f64,
    precond: Option<&Preconditioner>,
    rng: &StepRng,
    k: usize,
) {
    let theta = pga_theta_update(model, &state.theta, cloud, h, precond);
    let d = cloud.d_x();
    let mut prev = cloud.particle(cloud.n() - 1).to_vec();
    let mut noise = vec![0.0; d];
    for n in 0..cloud.n() {
        rng.fill_gaussian(Purpose::Langevin, k as u64, n as u64, &mut noise);
        let out = cloud.particle_mut(n);
        ula_move(model, &state.theta, &prev, h, &noise, out);
        prev.copy_from_slice(out);
    }
    state.record(theta);
}

/// Fails early if the model lacks something the configured algorithm needs.
pub fn check_capabilities(model: &dyn LatentModel, cfg: &RunConfig) -> Result<()> {
    use crate::error::Capability;
    let need = |ok: bool, cap: Capability| {
        if ok {
            Ok(())
        } else {
            Err(Error::unsupported(model.name(), cap))
        }
    };
    match cfg.algorithm {
        Algorithm::Pqn => need(model.has_neg_hess_theta(), Capability::NegHessTheta)?,
        Algorithm::Pmga | Algorithm::MhMarginal => {
            need(model.has_exact_m_step(), Capability::ExactMStep)?
        }
        Algorithm::MhJoint if cfg.joint_update == JointUpdate::Pqn => {
            need(model.has_neg_hess_theta(), Capability::NegHessTheta)?
        }
        Algorithm::EmExact => need(model.has_exact_em_step(), Capability::ExactEmStep)?,
        _ => {}
    }
    if let Some(lambda) = &cfg.lambda {
        if lambda.len() != model.d_theta() {
            return Err(Error::DimensionMismatch {
                what: "lambda",
                expected: model.d_theta(),
                got: lambda.len(),
            });
        }
    }
    Ok(())
}

fn preconditioner(model: &dyn LatentModel, cfg: &RunConfig) -> Result<Option<Preconditioner>> {
    match cfg.algorithm {
        Algorithm::PgaScaled | Algorithm::SoulScaled => match &cfg.lambda {
            Some(l) => Preconditioner::new(l.clone()).map(Some),
            None => Preconditioner::from_term_counts(model).map(Some),
        },
        _ => Ok(None),
    }
}

/// Initial θ and cloud according to the configured policy.
pub fn initial_state(model: &dyn LatentModel, cfg: &RunConfig) -> Result<(Vec<f64>, ParticleCloud)> {
    let (dt, dx, n) = (model.d_theta(), model.d_x(), cfg.n_particles);
    match &cfg.init {
        InitPolicy::Zeros => Ok((vec![0.0; dt], ParticleCloud::filled(n, dx, 0.0)?)),
        InitPolicy::Constant(c) => Ok((vec![*c; dt], ParticleCloud::filled(n, dx, *c)?)),
        InitPolicy::Prior => {
            let theta = vec![0.0; dt];
            let mut cloud = ParticleCloud::filled(n, dx, 0.0)?;
            let rng = StepRng::new(cfg.seed);
            for i in 0..n {
                let mut stream = rng.stream(Purpose::Init, 0, i as u64);
                model.sample_prior(&theta, &mut stream, cloud.particle_mut(i))?;
            }
            Ok((theta, cloud))
        }
        InitPolicy::WarmStart(path) => {
            let (theta, stored) = io::read_state(path)?;
            if theta.len() != dt {
                return Err(Error::DimensionMismatch {
                    what: "warm-start theta",
                    expected: dt,
                    got: theta.len(),
                });
            }
            if stored.d_x() != dx {
                return Err(Error::DimensionMismatch {
                    what: "warm-start particles",
                    expected: dx,
                    got: stored.d_x(),
                });
            }
            let mut cloud = ParticleCloud::filled(n, dx, 0.0)?;
            for i in 0..n {
                cloud
                    .particle_mut(i)
                    .copy_from_slice(stored.particle(i % stored.n()));
            }
            Ok((theta, cloud))
        }
    }
}

fn check_finite(theta: &[f64], cloud: &ParticleCloud, k: usize) -> Result<()> {
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::Divergence {
            step: k + 1,
            detail: "non-finite parameter estimate".into(),
        });
    }
    if !cloud.is_finite() {
        return Err(Error::Divergence {
            step: k + 1,
            detail: "non-finite particle coordinate".into(),
        });
    }
    Ok(())
}

/// Runs the configured algorithm for `n_steps` steps.
pub fn run(model: &dyn LatentModel, cfg: &RunConfig) -> Result<Trace> {
    cfg.validate()?;
    check_capabilities(model, cfg)?;
    if cfg.workers == 0 {
        return run_inner(model, cfg);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::InvalidConfig {
            field: "workers",
            reason: e.to_string(),
        })?;
    pool.install(|| run_inner(model, cfg))
}

fn run_inner(model: &dyn LatentModel, cfg: &RunConfig) -> Result<Trace> {
    let start = Instant::now();
    let precond = preconditioner(model, cfg)?;
    let (theta0, mut cloud) = initial_state(model, cfg)?;
    let theta0 = match cfg.algorithm {
        Algorithm::Pmga | Algorithm::MhMarginal => model::exact_m_step(model, &cloud)?,
        _ => theta0,
    };
    let rng = StepRng::new(cfg.seed);
    let h = cfg.h;
    let mut state = ParameterState::new(theta0, cfg.burn_in);
    let mut theta_path = Vec::with_capacity(cfg.n_steps);
    let mut clouds = Vec::new();
    let mut accepted = 0usize;

    for k in 0..cfg.n_steps {
        match cfg.algorithm {
            Algorithm::Pga => pga_step(model, &mut state, &mut cloud, h, None, &rng, k),
            Algorithm::PgaScaled => {
                pga_step(model, &mut state, &mut cloud, h, precond.as_ref(), &rng, k)
            }
            Algorithm::Pqn => pqn_step(model, &mut state, &mut cloud, h, &rng, k)?,
            Algorithm::Pmga => pmga_step(model, &mut state, &mut cloud, h, &rng, k)?,
            Algorithm::Soul => soul_step(model, &mut state, &mut cloud, h, None, &rng, k),
            Algorithm::SoulScaled => {
                soul_step(model, &mut state, &mut cloud, h, precond.as_ref(), &rng, k)
            }
            Algorithm::MhMarginal => {
                if metropolis::marginal_mh_step(model, &mut cloud, h, &rng, k)? {
                    accepted += 1;
                }
                state.record(model.exact_m_step(&cloud)?);
            }
            Algorithm::MhJoint => {
                let mut theta = state.theta.clone();
                if metropolis::joint_mh_step(
                    model,
                    &mut theta,
                    &mut cloud,
                    cfg.joint_update,
                    h,
                    &rng,
                    k,
                )? {
                    accepted += 1;
                }
                state.record(theta);
            }
            Algorithm::EmExact => {
                let next = model.exact_em_step(&state.theta)?;
                state.record(next);
            }
        }
        check_finite(&state.theta, &cloud, k)?;
        theta_path.push(state.theta.clone());
        let step = k + 1;
        if cfg.algorithm.uses_cloud() && cfg.snapshot_every > 0 && step % cfg.snapshot_every == 0 {
            clouds.push((step, cloud.clone()));
        }
    }
    if cfg.algorithm.uses_cloud() && clouds.last().map(|(s, _)| *s) != Some(cfg.n_steps) {
        clouds.push((cfg.n_steps, cloud));
    }

    let acceptance_rate = matches!(cfg.algorithm, Algorithm::MhMarginal | Algorithm::MhJoint)
        .then(|| accepted as f64 / cfg.n_steps as f64);
    Ok(Trace {
        algorithm: cfg.algorithm,
        theta_path,
        theta_bar_final: state.theta_bar,
        clouds,
        acceptance_rate,
        wall_time: start.elapsed().as_secs_f64(),
        burn_in: cfg.burn_in,
    })
}
