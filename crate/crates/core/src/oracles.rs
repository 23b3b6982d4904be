//! Closed-form and brute-force reference computations.
//!
//! Everything here is independent of the samplers: the toy model's
//! deterministic mean-field recursions and their spectral radii, its
//! finite-`N` stationary law, a finite-difference gradient checker and a
//! one-dimensional quadrature posterior.

use nalgebra::{DMatrix, Matrix2};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::metropolis;
use crate::model::{self, LatentModel, ParticleCloud};

/// Toy-model mean-field state: θ and the mean `ν` of the particle average.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldState {
    pub theta: f64,
    pub nu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeanFieldVariant {
    Pga,
    /// PGA with the scalar preconditioner `λ` on the θ-gradient.
    PgaScaled(f64),
    Pqn,
    Pmga,
}

/// Iterates the noise-free toy recursion `k` times; entry 0 is `init`.
/// For PMGA only `ν` evolves and θ is reported as `ν`.
pub fn meanfield_recursion(
    variant: MeanFieldVariant,
    d_x: usize,
    h: f64,
    y_bar: f64,
    init: MeanFieldState,
    k: usize,
) -> Vec<MeanFieldState> {
    let d = d_x as f64;
    let mut out = Vec::with_capacity(k + 1);
    let mut s = match variant {
        MeanFieldVariant::Pmga => MeanFieldState {
            theta: init.nu,
            nu: init.nu,
        },
        _ => init,
    };
    out.push(s);
    for _ in 0..k {
        s = match variant {
            MeanFieldVariant::Pga => step_theta_nu(s, h * d, h, y_bar),
            MeanFieldVariant::PgaScaled(lambda) => step_theta_nu(s, h * lambda * d, h, y_bar),
            MeanFieldVariant::Pqn => step_theta_nu(s, h, h, y_bar),
            MeanFieldVariant::Pmga => {
                let nu = (1.0 - h) * s.nu + h * y_bar;
                MeanFieldState { theta: nu, nu }
            }
        };
        out.push(s);
    }
    out
}

fn step_theta_nu(s: MeanFieldState, theta_rate: f64, h: f64, y_bar: f64) -> MeanFieldState {
    MeanFieldState {
        theta: s.theta + theta_rate * (s.nu - s.theta),
        nu: s.nu + h * (y_bar + s.theta - 2.0 * s.nu),
    }
}

/// Iteration matrices of the error `(θ_k - ȳ, ν_k - ȳ)`.
pub fn iteration_matrix(variant: MeanFieldVariant, d_x: usize, h: f64) -> Matrix2<f64> {
    let d = d_x as f64;
    let rate = match variant {
        MeanFieldVariant::Pga => h * d,
        MeanFieldVariant::PgaScaled(lambda) => h * lambda * d,
        MeanFieldVariant::Pqn => h,
        MeanFieldVariant::Pmga => return Matrix2::new(0.0, 1.0 - h, 0.0, 1.0 - h),
    };
    Matrix2::new(1.0 - rate, rate, h, 1.0 - 2.0 * h)
}

/// Largest eigenvalue modulus, computed numerically.
pub fn numeric_spectral_radius(a: &Matrix2<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralReport {
    pub d_x: usize,
    pub h: f64,
    pub rho_g: f64,
    pub rho_n: f64,
    pub rho_m: f64,
    pub h_opt_g: f64,
    pub h_opt_n: f64,
    pub h_opt_m: f64,
    pub rho_at_opt_g: f64,
    pub rho_at_opt_n: f64,
    pub rho_at_opt_m: f64,
}

/// Closed-form spectral radii and optimal step sizes for the toy recursions.
pub fn spectral_report(d_x: usize, h: f64) -> SpectralReport {
    let d = d_x as f64;
    let disc_g = (d * d + 4.0).sqrt();
    let (g_lo, g_hi) = (0.5 * (d + 2.0 - disc_g), 0.5 * (d + 2.0 + disc_g));
    let disc_n = 5f64.sqrt();
    let (n_lo, n_hi) = (0.5 * (3.0 - disc_n), 0.5 * (3.0 + disc_n));
    let radius = |lo: f64, hi: f64| (1.0 - h * lo).abs().max((1.0 - h * hi).abs());
    SpectralReport {
        d_x,
        h,
        rho_g: radius(g_lo, g_hi),
        rho_n: radius(n_lo, n_hi),
        rho_m: (1.0 - h).abs(),
        h_opt_g: 2.0 / (2.0 + d),
        h_opt_n: 2.0 / 3.0,
        h_opt_m: 1.0,
        rho_at_opt_g: disc_g / (d + 2.0),
        rho_at_opt_n: disc_n / 3.0,
        rho_at_opt_m: 0.0,
    }
}

/// Worst disagreement between closed-form and numeric radii, relative to
/// `max(1, ρ)`.
pub fn spectral_discrepancy(d_x: usize, h: f64) -> f64 {
    let r = spectral_report(d_x, h);
    [
        (r.rho_g, MeanFieldVariant::Pga),
        (r.rho_n, MeanFieldVariant::Pqn),
        (r.rho_m, MeanFieldVariant::Pmga),
    ]
    .iter()
    .map(|(closed, v)| {
        let numeric = numeric_spectral_radius(&iteration_matrix(*v, d_x, h));
        (closed - numeric).abs() / closed.max(1.0)
    })
    .fold(0.0, f64::max)
}

/// Stationary law of one particle of the toy model's `N`-particle target
/// `π_N`, together with `E[θ*]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteNLaw {
    pub mean: Vec<f64>,
    pub cov: DMatrix<f64>,
    pub theta_mean: f64,
}

pub fn finite_n_stationary_toy(y: &[f64], n: usize) -> FiniteNLaw {
    let d = y.len();
    let y_bar = y.iter().sum::<f64>() / d as f64;
    let c = 1.0 / (n * d) as f64;
    FiniteNLaw {
        mean: y.iter().map(|v| 0.5 * (v + y_bar)).collect(),
        cov: DMatrix::from_fn(d, d, |i, j| 0.5 * (if i == j { 1.0 } else { 0.0 } + c)),
        theta_mean: y_bar,
    }
}

/// Normalized log-density of the whole `N`-particle toy target
/// `N(½(y + ȳ1) per particle, ½(I + 11ᵀ/(N D_x)))`.
pub fn finite_n_log_density_toy(y: &[f64], cloud: &ParticleCloud) -> f64 {
    let d = y.len();
    let m = (cloud.n() * d) as f64;
    let y_bar = y.iter().sum::<f64>() / d as f64;
    let mut sq = 0.0;
    let mut total = 0.0;
    for x in cloud.particles() {
        for (xi, yi) in x.iter().zip(y) {
            let r = xi - 0.5 * (yi + y_bar);
            sq += r * r;
            total += r;
        }
    }
    // Σ⁻¹ = 2(I - 11ᵀ/(2m)), det Σ = 2^{1-m}
    let quad = 2.0 * (sq - total * total / (2.0 * m));
    let log_det = (1.0 - m) * 2f64.ln();
    -0.5 * m * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det - 0.5 * quad
}

/// Marginal-MH transition matrix on a finite set of states. `volumes[j]` is
/// the quadrature weight attached to state `j`; off-diagonal entries are
/// `volume_j · K_{θ*(x_i)}(x_i, x_j) · min(1, a(x_i, x_j))` and the diagonal
/// carries the remaining mass.
pub fn marginal_mh_transition_matrix(
    model: &dyn LatentModel,
    states: &[ParticleCloud],
    volumes: &[f64],
    h: f64,
) -> Result<DMatrix<f64>> {
    let s = states.len();
    let mut t = DMatrix::zeros(s, s);
    for i in 0..s {
        let theta = model.exact_m_step(&states[i])?;
        let mut off = 0.0;
        for j in 0..s {
            if i == j {
                continue;
            }
            let log_k = metropolis::cloud_ula_log_density(model, &theta, &states[i], &states[j], h);
            let lr = metropolis::marginal_log_ratio(model, &states[i], &states[j], h)?;
            let v = volumes[j] * (log_k + lr.min(0.0)).exp();
            t[(i, j)] = v;
            off += v;
        }
        t[(i, i)] = 1.0 - off;
    }
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdOptions {
    pub points: usize,
    pub tol: f64,
    /// Relative step: `δ = step · (1 + |coordinate|)`.
    pub step: f64,
    /// Check at most this many randomly chosen latent coordinates per point.
    pub max_coords: Option<usize>,
    /// θ is drawn uniformly from `[-theta_scale, theta_scale]`.
    pub theta_scale: f64,
    /// Latent coordinates are `x_scale` times standard normals.
    pub x_scale: f64,
    pub seed: u64,
}

impl Default for FdOptions {
    fn default() -> Self {
        Self {
            points: 20,
            tol: 1e-5,
            step: 1e-5,
            max_coords: None,
            theta_scale: 1.0,
            x_scale: 1.0,
            seed: 0,
        }
    }
}

/// Worst relative errors found by the finite-difference checker.
#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub model: String,
    pub tol: f64,
    pub grad_theta: f64,
    pub grad_x: f64,
    pub neg_hess_theta: Option<f64>,
    pub hess_asymmetry: Option<f64>,
}

impl FdReport {
    pub fn worst(&self) -> f64 {
        [
            Some(self.grad_theta),
            Some(self.grad_x),
            self.neg_hess_theta,
            self.hess_asymmetry,
        ]
        .into_iter()
        .flatten()
        .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.worst() <= self.tol
    }
}

fn rel_err(a: f64, f: f64) -> f64 {
    (a - f).abs() / a.abs().max(f.abs()).max(1.0)
}

/// Compares analytic derivatives against central differences of
/// `log_joint` (and of `grad_theta` for the Hessian) at random points.
pub fn finite_difference_check(model: &dyn LatentModel, opts: &FdOptions) -> FdReport {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (dt, dx) = (model.d_theta(), model.d_x());
    let mut report = FdReport {
        model: model.name().to_string(),
        tol: opts.tol,
        grad_theta: 0.0,
        grad_x: 0.0,
        neg_hess_theta: model.has_neg_hess_theta().then_some(0.0),
        hess_asymmetry: model.has_neg_hess_theta().then_some(0.0),
    };
    let mut gt = vec![0.0; dt];
    let mut gx = vec![0.0; dx];
    for _ in 0..opts.points {
        let mut theta: Vec<f64> = (0..dt)
            .map(|_| opts.theta_scale * rng.random_range(-1.0..=1.0))
            .collect();
        let mut x: Vec<f64> = (0..dx)
            .map(|_| opts.x_scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        model.grad_theta(&theta, &x, &mut gt);
        model.grad_x(&theta, &x, &mut gx);

        for i in 0..dt {
            let fd = central_difference(&mut theta, i, opts.step, |t| model.log_joint(t, &x));
            report.grad_theta = report.grad_theta.max(rel_err(gt[i], fd));
        }
        let coords: Vec<usize> = match opts.max_coords {
            Some(c) if c < dx => sample(&mut rng, dx, c).into_vec(),
            _ => (0..dx).collect(),
        };
        for &j in &coords {
            let fd = central_difference(&mut x, j, opts.step, |xx| model.log_joint(&theta, xx));
            report.grad_x = report.grad_x.max(rel_err(gx[j], fd));
        }

        if let Ok(hess) = model.neg_hess_theta(&theta, &x) {
            let mut g_plus = vec![0.0; dt];
            let mut g_minus = vec![0.0; dt];
            let mut worst = 0.0f64;
            let mut asym = 0.0f64;
            for j in 0..dt {
                let orig = theta[j];
                let delta = opts.step * (1.0 + orig.abs());
                theta[j] = orig + delta;
                model.grad_theta(&theta, &x, &mut g_plus);
                theta[j] = orig - delta;
                model.grad_theta(&theta, &x, &mut g_minus);
                theta[j] = orig;
                for i in 0..dt {
                    let fd = -(g_plus[i] - g_minus[i]) / (2.0 * delta);
                    worst = worst.max(rel_err(hess[(i, j)], fd));
                    asym = asym.max(rel_err(hess[(i, j)], hess[(j, i)]));
                }
            }
            report.neg_hess_theta = report.neg_hess_theta.map(|w| w.max(worst));
            report.hess_asymmetry = report.hess_asymmetry.map(|a| a.max(asym));
        }
    }
    report
}

fn central_difference(v: &mut [f64], i: usize, step: f64, f: impl Fn(&[f64]) -> f64) -> f64 {
    let orig = v[i];
    let delta = step * (1.0 + orig.abs());
    v[i] = orig + delta;
    let up = f(v);
    v[i] = orig - delta;
    let down = f(v);
    v[i] = orig;
    (up - down) / (2.0 * delta)
}

/// `‖(1/N) Σ_n ∇_θ ℓ(θ*, x^n)‖ / (1 + ‖θ*‖)` at the exact M-step of `cloud`.
pub fn m_step_residual(model: &dyn LatentModel, cloud: &ParticleCloud) -> Result<f64> {
    let theta = model::exact_m_step(model, cloud)?;
    let g = model::mean_grad_theta(model, &theta, cloud);
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    Ok(norm(&g) / (1.0 + norm(&theta)))
}

/// Default number of quadrature nodes.
pub const QUADRATURE_POINTS: usize = 4001;
/// Default half-width of the quadrature grid in standard deviations.
pub const QUADRATURE_HALF_WIDTH: f64 = 8.0;
const QUADRATURE_TOL: f64 = 1e-8;

/// Equally spaced nodes with trapezoid weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Grid {
    pub fn uniform(lo: f64, hi: f64, n: usize) -> Self {
        assert!(n >= 2 && hi > lo, "grid needs two nodes and positive width");
        let dx = (hi - lo) / (n - 1) as f64;
        let points = (0..n).map(|i| lo + dx * i as f64).collect();
        let mut weights = vec![dx; n];
        weights[0] *= 0.5;
        weights[n - 1] *= 0.5;
        Self { points, weights }
    }

    /// The default grid: 4001 nodes over `center ± 8 sd`.
    pub fn symmetric(center: f64, sd: f64) -> Self {
        Self::uniform(
            center - QUADRATURE_HALF_WIDTH * sd,
            center + QUADRATURE_HALF_WIDTH * sd,
            QUADRATURE_POINTS,
        )
    }

    pub fn spacing(&self) -> f64 {
        self.points[1] - self.points[0]
    }
}

/// Normalized posterior density `p_θ(x | y)` of a one-dimensional model on
/// the grid. Fails if the grid truncates visible mass or is too coarse for
/// Simpson's and the trapezoid rule to agree.
pub fn quadrature_posterior_1d(model: &dyn LatentModel, theta: &[f64], grid: &Grid) -> Result<Vec<f64>> {
    if model.d_x() != 1 {
        return Err(Error::DimensionMismatch {
            what: "quadrature latent dimension",
            expected: 1,
            got: model.d_x(),
        });
    }
    let logs: Vec<f64> = grid.points.iter().map(|x| model.log_joint(theta, &[*x])).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Oracle("log density is not finite on the grid".into()));
    }
    let unnorm: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = unnorm.iter().zip(&grid.weights).map(|(p, w)| p * w).sum();
    let density: Vec<f64> = unnorm.iter().map(|p| p / z).collect();

    let n = density.len();
    let width = grid.points[n - 1] - grid.points[0];
    let tail = density[0].max(density[n - 1]) * width;
    if tail > QUADRATURE_TOL {
        return Err(Error::Oracle(format!(
            "grid truncates the posterior (edge mass {tail:.3e})"
        )));
    }
    if n % 2 == 1 && n >= 3 {
        let h = grid.spacing();
        let simpson: f64 = h / 3.0
            * density
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let c = if i == 0 || i == n - 1 {
                        1.0
                    } else if i % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    };
                    c * p
                })
                .sum::<f64>();
        if (simpson - 1.0).abs() > QUADRATURE_TOL {
            return Err(Error::Oracle(format!(
                "grid too coarse: Simpson integral {simpson} of the trapezoid-normalized density"
            )));
        }
    }
    Ok(density)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ToyHierarchical;

    #[test]
    fn pmga_unit_step_converges_immediately() {
        let traj = meanfield_recursion(
            MeanFieldVariant::Pmga,
            5,
            1.0,
            1.7,
            MeanFieldState { theta: 0.0, nu: -3.0 },
            3,
        );
        assert_eq!(traj[1].nu, 1.7);
        assert_eq!(traj[1].theta, 1.7);
    }

    #[test]
    fn optimal_steps() {
        let r = spectral_report(100, 1.0 / 51.0);
        assert!((r.h_opt_g - 1.0 / 51.0).abs() < 1e-15);
        assert!((r.rho_g - r.rho_at_opt_g).abs() < 1e-12);
        let r = spectral_report(7, 2.0 / 3.0);
        assert!((r.rho_n - 5f64.sqrt() / 3.0).abs() < 1e-15);
        assert_eq!(spectral_report(3, 1.0).rho_m, 0.0);
    }

    #[test]
    fn closed_form_matches_eigenvalues() {
        for d in [1, 4, 100] {
            for i in 1..=1500 {
                let h = i as f64 * 1e-3;
                assert!(spectral_discrepancy(d, h) < 1e-12, "d={d} h={h}");
            }
        }
    }

    #[test]
    fn stationary_law_examples() {
        let law = finite_n_stationary_toy(&[0.0], 1);
        assert_eq!(law.cov[(0, 0)], 1.0);
        let law = finite_n_stationary_toy(&[0.0, 0.0], 2);
        assert_eq!(law.cov, DMatrix::from_row_slice(2, 2, &[0.625, 0.125, 0.125, 0.625]));
        let law = finite_n_stationary_toy(&[1.0, 3.0], 1_000_000);
        assert_eq!(law.mean, vec![1.5, 2.5]);
        assert!((law.cov[(0, 0)] - 0.5).abs() < 1e-6);
        assert_eq!(law.theta_mean, 2.0);
    }

    #[test]
    fn joint_density_matches_dense_gaussian() {
        // Brute force: build the covariance and invert it with nalgebra.
        let y = [0.4, -1.0];
        let cloud = ParticleCloud::from_rows(&[[0.3, 0.1], [-0.5, 1.2], [0.0, 0.7]]).unwrap();
        let m = 6;
        let cov = DMatrix::from_fn(m, m, |i, j| 0.5 * (if i == j { 1.0 } else { 0.0 } + 1.0 / m as f64));
        let ybar = -0.3;
        let mean: Vec<f64> = (0..m).map(|k| 0.5 * (y[k % 2] + ybar)).collect();
        let r = nalgebra::DVector::from_iterator(m, cloud.as_slice().iter().zip(&mean).map(|(x, mu)| x - mu));
        let inv = cov.clone().try_inverse().unwrap();
        let quad = (r.transpose() * inv * &r)[(0, 0)];
        let want = -0.5 * (m as f64) * (2.0 * std::f64::consts::PI).ln() - 0.5 * cov.determinant().ln() - 0.5 * quad;
        assert!((finite_n_log_density_toy(&y, &cloud) - want).abs() < 1e-12);
    }

    #[test]
    fn quadrature_matches_toy_posterior() {
        let m = ToyHierarchical::new(vec![1.3]).unwrap();
        let theta = 0.4;
        let mean = 0.5 * (1.3 + theta);
        let grid = Grid::symmetric(mean, 0.5f64.sqrt());
        let dens = quadrature_posterior_1d(&m, &[theta], &grid).unwrap();
        for (x, p) in grid.points.iter().zip(&dens) {
            let want = (-(x - mean).powi(2)).exp() / std::f64::consts::PI.sqrt();
            assert!((p - want).abs() < 1e-6);
        }
    }

    #[test]
    fn coarse_or_narrow_grid_is_rejected() {
        let m = ToyHierarchical::new(vec![0.0]).unwrap();
        assert!(quadrature_posterior_1d(&m, &[0.0], &Grid::uniform(-6.0, 6.0, 5)).is_err());
        assert!(quadrature_posterior_1d(&m, &[0.0], &Grid::uniform(-1.0, 1.0, 4001)).is_err());
    }

    #[test]
    fn toy_finite_differences_are_exact() {
        let m = ToyHierarchical::synthetic(10, 2).unwrap();
        let r = finite_difference_check(&m, &FdOptions::default());
        assert!(r.worst() < 1e-9, "{r:?}");
    }
}
