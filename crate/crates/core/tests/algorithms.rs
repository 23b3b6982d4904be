use particle_em::model::ParameterState;
use particle_em::samplers::{pga_step, pmga_step, pqn_step};
use particle_em::{
    run, Algorithm, Error, InitPolicy, JointUpdate, LogisticRegression, ParticleCloud, Purpose,
    RunConfig, StepRng, ToyHierarchical,
};

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn pga_with_large_step_diverges() {
    let model = ToyHierarchical::synthetic(100, 0).unwrap();
    let cfg = RunConfig::new(Algorithm::Pga, 0.1, 10, 1000);
    match run(&model, &cfg) {
        Err(Error::Divergence { step, .. }) => assert!(step > 1 && step <= 1000),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn exact_posterior_start_keeps_estimates_unbiased() {
    let y = vec![0.4, -1.1, 2.0, 0.3, 0.9];
    let model = ToyHierarchical::new(y.clone()).unwrap();
    let y_bar = model.y_mean();
    let (n, h, steps, seeds) = (4, 0.1, 30, 400);
    let post_mean = model.posterior_mean(y_bar);
    for alg in ["pga", "pqn", "pmga"] {
        let mut paths = Vec::new();
        for seed in 0..seeds {
            let rng = StepRng::new(seed);
            // Antithetic pairs: particle i + n/2 mirrors particle i about the
            // posterior mean, so every start has the exact first moment.
            let mut cloud = ParticleCloud::filled(n, y.len(), 0.0).unwrap();
            for i in 0..n / 2 {
                let mut z = vec![0.0; y.len()];
                rng.fill_gaussian(Purpose::Init, 0, i as u64, &mut z);
                for (sign, row) in [(1.0, i), (-1.0, i + n / 2)] {
                    for (x, (m, w)) in cloud.particle_mut(row).iter_mut().zip(post_mean.iter().zip(&z)) {
                        *x = m + sign * 0.5f64.sqrt() * w;
                    }
                }
            }
            let mut state = ParameterState::new(vec![y_bar], 0);
            let mut path = Vec::new();
            for k in 0..steps {
                match alg {
                    "pga" => pga_step(&model, &mut state, &mut cloud, h, None, &rng, k),
                    "pqn" => pqn_step(&model, &mut state, &mut cloud, h, &rng, k).unwrap(),
                    _ => pmga_step(&model, &mut state, &mut cloud, h, &rng, k).unwrap(),
                }
                path.push(state.theta[0]);
            }
            paths.push(path);
        }
        // Every step is checked at once, so the band is widened to 4 SE.
        for k in 1..steps {
            let col: Vec<f64> = paths.iter().map(|p| p[k]).collect();
            let (m, se) = mean_and_se(&col);
            assert!((m - y_bar).abs() <= 4.0 * se, "{alg} step {}: {m} vs {y_bar} (se {se})", k + 1);
        }
    }
}

fn mean_acceptance(model: &ToyHierarchical, n: usize, h: f64) -> (f64, f64) {
    let rates: Vec<f64> = (0..20)
        .map(|seed| {
            let mut cfg = RunConfig::new(Algorithm::MhJoint, h, n, 1000)
                .with_seed(seed)
                .with_init(InitPolicy::Constant(model.y_mean()));
            cfg.joint_update = JointUpdate::Pqn;
            run(model, &cfg).unwrap().acceptance_rate.unwrap()
        })
        .collect();
    mean_and_se(&rates)
}

#[test]
fn joint_mh_acceptance_degenerates() {
    let model = ToyHierarchical::synthetic(10, 5).unwrap();
    for h in [0.01, 0.05, 0.2] {
        let mut prev: Option<(f64, f64)> = None;
        for n in [1, 4, 16, 64] {
            let (a, se) = mean_acceptance(&model, n, h);
            if let Some((pa, pse)) = prev {
                assert!(a <= pa + 3.0 * (se * se + pse * pse).sqrt(), "h={h} N={n}: {a} > {pa}");
            }
            prev = Some((a, se));
        }
    }
    for n in [1, 4, 16, 64] {
        let mut prev: Option<(f64, f64)> = None;
        for h in [0.01, 0.05, 0.2] {
            let (a, se) = mean_acceptance(&model, n, h);
            if let Some((pa, pse)) = prev {
                assert!(a <= pa + 3.0 * (se * se + pse * pse).sqrt(), "N={n} h={h}: {a} > {pa}");
            }
            prev = Some((a, se));
        }
    }
}

#[test]
fn joint_mh_theta_settles_at_maximizer() {
    let model = ToyHierarchical::synthetic(10, 6).unwrap();
    let bars: Vec<f64> = (0..30)
        .map(|seed| {
            let cfg = RunConfig::new(Algorithm::MhJoint, 0.05, 16, 3000)
                .with_burn_in(1000)
                .with_seed(seed);
            run(&model, &cfg).unwrap().theta_bar_final[0]
        })
        .collect();
    let (m, se) = mean_and_se(&bars);
    assert!((m - model.theta_star()).abs() <= 3.0 * se, "{m} vs {} (se {se})", model.theta_star());
}

fn lag_one_autocorrelation(cloud: &ParticleCloud) -> f64 {
    let (n, d) = (cloud.n(), cloud.d_x());
    let mut total = 0.0;
    for j in 0..d {
        let col: Vec<f64> = (0..n).map(|i| cloud.particle(i)[j]).collect();
        let mean = col.iter().sum::<f64>() / n as f64;
        let var: f64 = col.iter().map(|v| (v - mean).powi(2)).sum();
        let cov: f64 = col.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
        total += cov / var;
    }
    total / d as f64
}

fn logistic_task() -> LogisticRegression {
    LogisticRegression::synthetic(546, &[1.0, -0.8, 0.5, 0.0, 1.2, -0.4, 0.7, 0.3, -1.0], 42).unwrap()
}

#[test]
fn soul_clouds_are_serially_correlated() {
    let model = logistic_task();
    for seed in 0..5 {
        let base = RunConfig::new(Algorithm::Pga, 0.01, 100, 400).with_seed(seed);
        let pga = run(&model, &base).unwrap();
        let soul = run(&model, &RunConfig { algorithm: Algorithm::Soul, ..base }).unwrap();
        let (a_pga, a_soul) = (
            lag_one_autocorrelation(pga.final_cloud().unwrap()),
            lag_one_autocorrelation(soul.final_cloud().unwrap()),
        );
        assert!(a_soul > a_pga + 0.3, "seed {seed}: soul {a_soul} vs pga {a_pga}");
    }
}

#[test]
fn logistic_algorithms_agree_on_theta() {
    let model = logistic_task();
    let finals: Vec<f64> = [Algorithm::Pga, Algorithm::Pqn, Algorithm::Pmga, Algorithm::Soul]
        .iter()
        .map(|&alg| {
            let cfg = RunConfig::new(alg, 0.01, 100, 400).with_burn_in(200).with_seed(3);
            run(&model, &cfg).unwrap().final_theta()[0]
        })
        .collect();
    let lo = finals.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = finals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!(hi - lo < 0.05, "{finals:?}");
}

#[test]
fn traces_are_deterministic_across_worker_counts() {
    let model = logistic_task();
    for alg in [Algorithm::Pga, Algorithm::Soul, Algorithm::MhMarginal] {
        let base = RunConfig::new(alg, 0.01, 32, 50).with_seed(17).with_snapshot_every(10);
        let a = run(&model, &base.clone().with_workers(1)).unwrap();
        let b = run(&model, &base.clone().with_workers(3)).unwrap();
        let c = run(&model, &base).unwrap();
        assert_eq!(a.theta_path, b.theta_path);
        assert_eq!(a.theta_path, c.theta_path);
        assert_eq!(a.clouds, b.clouds);
    }
}

#[test]
fn warm_start_replicates_particles_cyclically() {
    let model = ToyHierarchical::new(vec![0.0, 1.0]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.csv");
    let stored = ParticleCloud::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
    let mut buf = Vec::new();
    particle_em::io::write_state(&mut buf, &[0.25], &stored).unwrap();
    std::fs::write(&path, buf).unwrap();
    let cfg = RunConfig::new(Algorithm::Pga, 0.1, 5, 1).with_init(InitPolicy::WarmStart(path));
    let (theta, cloud) = particle_em::samplers::initial_state(&model, &cfg).unwrap();
    assert_eq!(theta, vec![0.25]);
    assert_eq!(cloud.particle(4), &[1.0, 2.0]);
    assert_eq!(cloud.particle(3), &[3.0, 4.0]);
}
