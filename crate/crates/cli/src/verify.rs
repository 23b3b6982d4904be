//! Self-check suites behind `particle-em verify`.

use nalgebra::DMatrix;
use particle_em::metrics::posterior_variance_estimate;
use particle_em::oracles::{
    finite_difference_check, finite_n_log_density_toy, finite_n_stationary_toy, iteration_matrix, m_step_residual, meanfield_recursion,
    numeric_spectral_radius, quadrature_posterior_1d, spectral_discrepancy, spectral_report, FdOptions, Grid,
    MeanFieldState, MeanFieldVariant,
};
use particle_em::{run, Algorithm, BnnModel, InitPolicy, LatentModel, LogisticRegression, ParticleCloud, RunConfig, ToyHierarchical};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Gradients,
    Oracles,
    Stationarity,
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gradients" => Ok(Suite::Gradients),
            "oracles" => Ok(Suite::Oracles),
            "stationarity" => Ok(Suite::Stationarity),
            other => Err(format!("unknown suite `{other}` (expected gradients, oracles or stationarity)")),
        }
    }
}

/// One quantity compared against its limit; passes when `value <= limit`.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, limit }
    }

    pub fn passed(&self) -> bool {
        self.value <= self.limit
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed() { "ok  " } else { "FAIL" };
        write!(f, "{status} {:<48} {:>12.4e} <= {:.1e}", self.name, self.value, self.limit)
    }
}

#[derive(Debug, Clone, Default)]
pub struct SuiteReport {
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    /// Check whose value is the largest fraction of its (positive) limit.
    pub fn tightest(&self) -> Option<&Check> {
        self.checks.iter().filter(|c| c.limit > 0.0).max_by(|a, b| {
            let ra = a.value / a.limit;
            let rb = b.value / b.limit;
            ra.total_cmp(&rb)
        })
    }
}

pub fn run_suite(suite: Suite) -> SuiteReport {
    match suite {
        Suite::Gradients => gradients(),
        Suite::Oracles => oracles(),
        Suite::Stationarity => stationarity(),
    }
}

fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn fd_checks(report: &mut SuiteReport, name: &str, model: &dyn LatentModel, opts: &FdOptions) {
    let r = finite_difference_check(model, opts);
    report.checks.push(Check::new(format!("{name}: grad_theta"), r.grad_theta, r.tol));
    report.checks.push(Check::new(format!("{name}: grad_x"), r.grad_x, r.tol));
    if let Some(e) = r.neg_hess_theta {
        report.checks.push(Check::new(format!("{name}: neg_hess_theta"), e, r.tol));
    }
    if let Some(e) = r.hess_asymmetry {
        report.checks.push(Check::new(format!("{name}: hessian asymmetry"), e, 1e-12));
    }
}

/// Finite-difference agreement of every model's analytic derivatives.
pub fn gradients() -> SuiteReport {
    let mut report = SuiteReport::default();
    let toy = ToyHierarchical::synthetic(10, 4).expect("toy");
    fd_checks(&mut report, "toy", &toy, &FdOptions::default());

    let logistic =
        LogisticRegression::synthetic(200, &[1.0, -0.5, 0.3, 0.0, 0.8, -1.2, 0.1, 0.4, -0.2], 7).expect("logistic");
    fd_checks(&mut report, "logistic", &logistic, &FdOptions::default());

    let labels: Vec<u8> = (0..60).map(|i| (i % 3 == 0) as u8).collect();
    let bnn = BnnModel::new(gaussian_matrix(60, 30, 3), &labels, 8).expect("bnn");
    let opts = FdOptions {
        tol: 1e-4,
        max_coords: Some(20),
        x_scale: 0.3,
        ..FdOptions::default()
    };
    fd_checks(&mut report, "bnn 30x8", &bnn, &opts);

    let labels: Vec<u8> = (0..50).map(|i| (i % 2) as u8).collect();
    let full = BnnModel::new(gaussian_matrix(50, 784, 9), &labels, 40).expect("bnn");
    let opts = FdOptions {
        points: 3,
        tol: 1e-4,
        max_coords: Some(20),
        x_scale: 0.05,
        ..FdOptions::default()
    };
    fd_checks(&mut report, "bnn 784x40 spot check", &full, &opts);
    report
}

/// Grid minimizer of the numeric spectral radius over `(0, 1.5]`.
fn numeric_h_opt(variant: MeanFieldVariant, d_x: usize, step: f64) -> f64 {
    let n = (1.5 / step).round() as usize;
    (1..=n)
        .map(|i| i as f64 * step)
        .map(|h| (h, numeric_spectral_radius(&iteration_matrix(variant, d_x, h))))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty grid")
        .0
}

/// Closed forms against brute-force numerics.
pub fn oracles() -> SuiteReport {
    let mut report = SuiteReport::default();
    let dims = [1usize, 4, 10, 100];

    let mut worst = 0.0f64;
    for &d in &dims {
        for i in 1..=300 {
            worst = worst.max(spectral_discrepancy(d, i as f64 * 0.005));
        }
    }
    report.checks.push(Check::new("spectral radii: closed form vs eigenvalues", worst, 1e-12));

    let step = 1e-4;
    for &d in &dims {
        let r = spectral_report(d, 0.5);
        for (label, variant, closed) in [
            ("pga", MeanFieldVariant::Pga, r.h_opt_g),
            ("pqn", MeanFieldVariant::Pqn, r.h_opt_n),
            ("pmga", MeanFieldVariant::Pmga, r.h_opt_m),
        ] {
            let found = numeric_h_opt(variant, d, step);
            report
                .checks
                .push(Check::new(format!("h_opt {label}, D={d}: |grid argmin - closed form|"), (found - closed).abs(), step));
        }
        if d >= 4 {
            let gap = (r.rho_at_opt_n - r.rho_at_opt_g).max(r.rho_at_opt_m - r.rho_at_opt_n);
            report.checks.push(Check::new(format!("optimal radii ordered, D={d}"), gap, 0.0));
        }
    }

    let y_bar = 0.37;
    let mf = meanfield_recursion(MeanFieldVariant::Pmga, 10, 1.0, y_bar, MeanFieldState { theta: 0.0, nu: -3.0 }, 1);
    report.checks.push(Check::new("pmga mean field at h=1: one-step error", (mf[1].nu - y_bar).abs(), 1e-15));

    let toy = ToyHierarchical::new(vec![0.3, -1.0, 2.2]).expect("toy");
    let mut worst_ratio = 0.0f64;
    // Ten steps keep |θ − θ*| large enough for the ratio to be resolved.
    let mut theta = toy.theta_star() + 8.0;
    for _ in 0..10 {
        let next = toy.em_step(theta);
        let ratio = (next - toy.theta_star()) / (theta - toy.theta_star());
        worst_ratio = worst_ratio.max((ratio - 0.5).abs());
        theta = next;
    }
    report.checks.push(Check::new("exact EM contraction ratio vs 1/2", worst_ratio, 1e-12));

    // Quadrature posterior of the one-dimensional toy model vs N((y+θ)/2, 1/2).
    let y = 0.8;
    let toy1 = ToyHierarchical::new(vec![y]).expect("toy");
    let mut worst_q = 0.0f64;
    for theta in [-1.0, 0.0, 0.8, 2.5] {
        let m = 0.5 * (y + theta);
        let grid = Grid::symmetric(m, 0.5f64.sqrt());
        match quadrature_posterior_1d(&toy1, &[theta], &grid) {
            Ok(p) => {
                for (x, q) in grid.points.iter().zip(&p) {
                    let exact = (-(x - m).powi(2)).exp() / std::f64::consts::PI.sqrt();
                    worst_q = worst_q.max((q - exact).abs());
                }
            }
            Err(_) => worst_q = f64::INFINITY,
        }
    }
    report.checks.push(Check::new("quadrature posterior vs closed form", worst_q, 1e-8));

    // The per-particle covariance of π_N against the inverse Hessian of its
    // joint log density, differenced numerically over all N·D coordinates.
    let (y2, n2) = ([0.2, -0.4], 3usize);
    let law = finite_n_stationary_toy(&y2, n2);
    let m = n2 * y2.len();
    let point: Vec<f64> = (0..m).map(|i| 0.1 * i as f64 - 0.2).collect();
    let logp = |v: &[f64]| {
        let cloud = ParticleCloud::new(n2, y2.len(), v.to_vec()).expect("cloud");
        finite_n_log_density_toy(&y2, &cloud)
    };
    let delta = 1e-3;
    let hess = DMatrix::from_fn(m, m, |i, j| {
        let at = |si: f64, sj: f64| {
            let mut v = point.clone();
            v[i] += si * delta;
            v[j] += sj * delta;
            logp(&v)
        };
        (at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0)) / (4.0 * delta * delta)
    });
    let cov_err = match (-hess).try_inverse() {
        Some(full) => (0..y2.len())
            .flat_map(|i| (0..y2.len()).map(move |j| (i, j)))
            .map(|(i, j)| (full[(i, j)] - law.cov[(i, j)]).abs())
            .fold(0.0, f64::max),
        None => f64::INFINITY,
    };
    report.checks.push(Check::new("finite-N law: covariance vs density Hessian", cov_err, 1e-6));

    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let labels: Vec<u8> = (0..12).map(|i| (i % 2) as u8).collect();
    let bnn = BnnModel::new(gaussian_matrix(12, 3, 22), &labels, 2).expect("bnn");
    let logistic = LogisticRegression::synthetic(30, &[0.5, -0.5, 1.0], 23).expect("logistic");
    let toy3 = ToyHierarchical::new(vec![0.1, 0.2, 0.3]).expect("toy");
    let models: [(&str, &dyn LatentModel); 3] = [("toy", &toy3), ("logistic", &logistic), ("bnn", &bnn)];
    for (name, model) in models {
        let mut worst_m = 0.0f64;
        for _ in 0..20 {
            let n = rng.random_range(1..6);
            let v: Vec<f64> = (0..n * model.d_x()).map(|_| rng.random_range(0.2..2.0) * if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
            let cloud = ParticleCloud::new(n, model.d_x(), v).expect("cloud");
            worst_m = worst_m.max(m_step_residual(model, &cloud).unwrap_or(f64::INFINITY));
        }
        report.checks.push(Check::new(format!("{name}: exact M-step stationarity"), worst_m, 1e-8));
    }
    report
}

/// Marginal Metropolis-Hastings against the closed-form finite-N law on the
/// one-dimensional toy model.
pub fn stationarity() -> SuiteReport {
    let mut report = SuiteReport::default();
    for (n, h) in [(1usize, 0.5), (16, 0.2)] {
        let y = vec![0.3];
        let model = ToyHierarchical::new(y.clone()).expect("toy");
        let law = finite_n_stationary_toy(&y, n);
        let vars: Vec<f64> = (0..20)
            .map(|seed| {
                let cfg = RunConfig::new(Algorithm::MhMarginal, h, n, 4000)
                    .with_burn_in(500)
                    .with_seed(seed)
                    .with_snapshot_every(1)
                    .with_init(InitPolicy::Constant(law.theta_mean));
                let trace = run(&model, &cfg).expect("marginal MH run");
                posterior_variance_estimate(trace.post_burn_in_clouds()).expect("samples")[0]
            })
            .collect();
        let k = vars.len() as f64;
        let mean = vars.iter().sum::<f64>() / k;
        let se = (vars.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0) / k).sqrt();
        let want = law.cov[(0, 0)];
        report
            .checks
            .push(Check::new(format!("marginal MH variance, N={n}: |est - law| / SE"), (mean - want).abs() / se, 3.0));
    }
    report
}
