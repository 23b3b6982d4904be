//! Long-run statistical checks on the toy model against closed-form laws.

use particle_em::metrics::posterior_variance_estimate;
use particle_em::oracles::{finite_n_stationary_toy, meanfield_recursion, MeanFieldState, MeanFieldVariant};
use particle_em::{run, Algorithm, InitPolicy, ParticleCloud, RunConfig, ToyHierarchical};

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Per-run time averages of first and second moments of the particles.
fn run_moments(model: &ToyHierarchical, cfg: &RunConfig) -> (Vec<f64>, Vec<Vec<f64>>) {
    let trace = run(model, cfg).unwrap();
    let d = model.y().len();
    let mut mean = vec![0.0; d];
    let mut second = vec![vec![0.0; d]; d];
    let mut count = 0.0;
    for cloud in trace.post_burn_in_clouds() {
        for x in cloud.particles() {
            count += 1.0;
            for i in 0..d {
                mean[i] += x[i];
                for j in 0..d {
                    second[i][j] += x[i] * x[j];
                }
            }
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let cov = (0..d)
        .map(|i| (0..d).map(|j| second[i][j] / count - mean[i] * mean[j]).collect())
        .collect();
    (mean, cov)
}

fn check_marginal_mh_law(y: Vec<f64>, n: usize, h: f64) {
    let model = ToyHierarchical::new(y.clone()).unwrap();
    let law = finite_n_stationary_toy(&y, n);
    let d = y.len();
    let seeds = 40;
    let mut means = vec![Vec::new(); d];
    let mut covs = vec![vec![Vec::new(); d]; d];
    for seed in 0..seeds {
        let cfg = RunConfig::new(Algorithm::MhMarginal, h, n, 6000)
            .with_burn_in(500)
            .with_seed(seed)
            .with_snapshot_every(1)
            .with_init(InitPolicy::Constant(law.theta_mean));
        let (m, c) = run_moments(&model, &cfg);
        for i in 0..d {
            means[i].push(m[i]);
            for j in 0..d {
                covs[i][j].push(c[i][j]);
            }
        }
    }
    for i in 0..d {
        let (m, se) = mean_and_se(&means[i]);
        assert!(
            (m - law.mean[i]).abs() <= 3.0 * se,
            "N={n} mean[{i}] {m} vs {} (se {se})",
            law.mean[i]
        );
        for j in 0..d {
            let (c, se) = mean_and_se(&covs[i][j]);
            assert!(
                (c - law.cov[(i, j)]).abs() <= 3.0 * se,
                "N={n} cov[{i},{j}] {c} vs {} (se {se})",
                law.cov[(i, j)]
            );
        }
    }
}

#[test]
fn marginal_mh_reproduces_finite_n_law_single_particle() {
    check_marginal_mh_law(vec![0.7], 1, 0.5);
}

#[test]
fn marginal_mh_reproduces_finite_n_law_sixteen_particles() {
    check_marginal_mh_law(vec![-0.4], 16, 0.2);
}

#[test]
fn marginal_mh_reproduces_finite_n_law_three_dims() {
    check_marginal_mh_law(vec![0.5, -1.0, 1.5], 4, 0.2);
}

/// Stationary pooled variance of unadjusted PMGA on the one-dimensional toy
/// model. The particle mean is an AR(1) with coefficient `1 - h` and noise
/// variance `2h/N`; deviations from it are AR(1) with coefficient `1 - 2h`
/// and noise variance `2h(1 - 1/N)`.
fn pmga_pooled_variance(n: usize, h: f64) -> f64 {
    let n = n as f64;
    2.0 / (n * (2.0 - h)) + (1.0 - 1.0 / n) / (2.0 * (1.0 - h))
}

fn pmga_variance_bias(n: usize, h: f64, seeds: u64) -> (f64, f64, f64) {
    let model = ToyHierarchical::new(vec![0.0]).unwrap();
    let burn_in = (20.0 / h) as usize;
    let steps = burn_in + (4000.0 / h) as usize / n.max(4);
    let vars: Vec<f64> = (0..seeds)
        .map(|seed| {
            let cfg = RunConfig::new(Algorithm::Pmga, h, n, steps)
                .with_burn_in(burn_in)
                .with_seed(1000 + seed)
                .with_snapshot_every(1);
            let trace = run(&model, &cfg).unwrap();
            posterior_variance_estimate(trace.post_burn_in_clouds()).unwrap()[0]
        })
        .collect();
    let (v, se) = mean_and_se(&vars);
    (v, se, (v - 0.5).abs())
}

#[test]
fn pmga_variance_bias_shrinks_with_more_particles() {
    let h = 0.05;
    let mut prev: Option<(f64, f64)> = None;
    for n in [1, 4, 16, 64] {
        let (v, se, bias) = pmga_variance_bias(n, h, 50);
        let want = pmga_pooled_variance(n, h);
        assert!((v - want).abs() <= 3.0 * se, "N={n}: {v} vs {want} (se {se})");
        if let Some((pb, pse)) = prev {
            assert!(bias <= pb + 3.0 * (se * se + pse * pse).sqrt(), "N={n}: bias {bias} > {pb}");
        }
        prev = Some((bias, se));
    }
}

#[test]
fn pmga_variance_bias_shrinks_with_step_size() {
    let n = 64;
    let mut prev: Option<(f64, f64)> = None;
    for h in [0.5, 0.2, 0.05] {
        let (v, se, bias) = pmga_variance_bias(n, h, 50);
        let want = pmga_pooled_variance(n, h);
        assert!((v - want).abs() <= 3.0 * se, "h={h}: {v} vs {want} (se {se})");
        if let Some((pb, pse)) = prev {
            assert!(bias <= pb + 3.0 * (se * se + pse * pse).sqrt(), "h={h}: bias {bias} > {pb}");
        }
        prev = Some((bias, se));
    }
}

#[test]
fn single_particle_pmga_overestimates_posterior_variance() {
    let (v, se, _) = pmga_variance_bias(1, 0.05, 50);
    assert!(v - 0.5 > 3.0 * se, "{v} (se {se})");
}

#[test]
fn frozen_theta_ula_is_wider_than_the_posterior() {
    // ULA on N(m, 1/2) with step h has stationary variance 1/(2(1-h)).
    let model = ToyHierarchical::new(vec![1.0]).unwrap();
    let theta = [model.theta_star()];
    let h = 0.3;
    let rng = particle_em::StepRng::new(4);
    let mut cloud = ParticleCloud::filled(200, 1, 1.0).unwrap();
    let mut snaps = Vec::new();
    for k in 0..2000 {
        particle_em::samplers::ula_step(&model, &theta, &mut cloud, h, &rng, k);
        if k >= 100 {
            snaps.push(cloud.clone());
        }
    }
    let v = posterior_variance_estimate(&snaps).unwrap()[0];
    let want = 1.0 / (2.0 * (1.0 - h));
    assert!(v > 0.5 && (v - want).abs() < 0.03, "{v} vs {want}");
}

#[test]
fn averaged_pga_tracks_meanfield_recursion() {
    let model = ToyHierarchical::synthetic(5, 8).unwrap();
    let (d, h, n, steps) = (5, 0.1, 4, 40);
    let seeds = 300;
    let mf = meanfield_recursion(
        MeanFieldVariant::Pga,
        d,
        h,
        model.y_mean(),
        MeanFieldState { theta: 0.0, nu: 0.0 },
        steps,
    );
    let traces: Vec<Vec<f64>> = (0..seeds)
        .map(|s| {
            let cfg = RunConfig::new(Algorithm::Pga, h, n, steps).with_seed(s);
            run(&model, &cfg).unwrap().theta_path.iter().map(|t| t[0]).collect()
        })
        .collect();
    for k in 0..steps {
        let col: Vec<f64> = traces.iter().map(|t| t[k]).collect();
        let (m, se) = mean_and_se(&col);
        let want = mf[k + 1].theta;
        assert!((m - want).abs() <= 3.0 * se + 1e-12, "step {}: {m} vs {want} (se {se})", k + 1);
    }
}
