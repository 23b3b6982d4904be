//! Running an experiment file end to end.

use crate::config::{BnnSource, ExperimentConfig, LogisticSource, ModelConfig};
use crate::error::{CliError, CliResult};
use crate::spectral;
use nalgebra::DMatrix;
use particle_em::data::{load_mnist_subset, load_wbc, Dataset};
use particle_em::io::{fmt_f64, write_atomic, write_state, write_theta_trace};
use particle_em::metrics::{lppd, posterior_variance_estimate, test_error, ClassProbabilities, Classifier};
use particle_em::oracles::{meanfield_recursion, MeanFieldState, MeanFieldVariant};
use particle_em::{run, Algorithm, BnnModel, InitPolicy, LatentModel, LogisticRegression, ToyHierarchical, Trace};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// A model ready to run, with its held-out data when it is a classifier.
pub enum BuiltModel {
    Toy(ToyHierarchical),
    Logistic { model: LogisticRegression, test: TestSet },
    Bnn { model: BnnModel, test: TestSet },
}

pub struct TestSet {
    pub features: DMatrix<f64>,
    pub labels: Vec<u8>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DataSummary {
    pub rows: usize,
    pub train: usize,
    pub test: usize,
    pub dropped: usize,
}

impl BuiltModel {
    pub fn latent(&self) -> &dyn LatentModel {
        match self {
            BuiltModel::Toy(m) => m,
            BuiltModel::Logistic { model, .. } => model,
            BuiltModel::Bnn { model, .. } => model,
        }
    }

    fn classifier(&self) -> Option<(&dyn ClassProbabilities, &TestSet)> {
        match self {
            BuiltModel::Toy(_) => None,
            BuiltModel::Logistic { model, test } => Some((model, test)),
            BuiltModel::Bnn { model, test } => Some((model, test)),
        }
    }
}

fn split(ds: &Dataset) -> (DMatrix<f64>, Vec<u8>, TestSet, DataSummary) {
    let summary = DataSummary {
        rows: ds.n_rows(),
        train: ds.train.len(),
        test: ds.test.len(),
        dropped: ds.dropped,
    };
    let test = TestSet {
        features: ds.test_features(),
        labels: ds.test_labels(),
    };
    (ds.train_features(), ds.train_labels(), test, summary)
}

/// Loads data and constructs the configured model.
pub fn build_model(cfg: &ExperimentConfig) -> CliResult<(BuiltModel, Option<DataSummary>)> {
    match &cfg.model {
        ModelConfig::Toy { d_x, y, data_seed } => {
            let model = match y {
                Some(y) => ToyHierarchical::new(y.clone())?,
                None => ToyHierarchical::synthetic(d_x.unwrap_or(1), *data_seed)?,
            };
            Ok((BuiltModel::Toy(model), None))
        }
        ModelConfig::Logistic { source, path, synthetic } => {
            let ds = match source {
                LogisticSource::Wbc => {
                    let p = ModelConfig::wbc_path(path);
                    require_file(&p)?;
                    load_wbc(&p, cfg.split_seed)?
                }
                LogisticSource::Synthetic => {
                    let s = synthetic.as_ref().expect("validated");
                    Dataset::synthetic_logistic(s.rows, &s.weights, s.seed, cfg.split_seed)?
                }
            };
            let (f, l, test, summary) = split(&ds);
            let model = LogisticRegression::new(f, &l)?;
            Ok((BuiltModel::Logistic { model, test }, Some(summary)))
        }
        ModelConfig::Bnn { source, images, labels, classes, count, hidden, synthetic } => {
            let ds = match source {
                BnnSource::Mnist => {
                    let (img, lab) = ModelConfig::mnist_paths(images, labels);
                    require_file(&img)?;
                    require_file(&lab)?;
                    load_mnist_subset(&img, &lab, *classes, *count, cfg.split_seed)?
                }
                BnnSource::Synthetic => {
                    let s = synthetic.as_ref().expect("validated");
                    Dataset::synthetic_blobs(s.rows, s.inputs, s.separation, s.seed, cfg.split_seed)?
                }
            };
            let (f, l, test, summary) = split(&ds);
            let model = BnnModel::new(f, &l, *hidden)?;
            Ok((BuiltModel::Bnn { model, test }, Some(summary)))
        }
    }
}

fn require_file(p: &Path) -> CliResult<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(CliError::data(format!("dataset file {} not found", p.display())))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicateMetrics {
    pub replicate: usize,
    pub seed: u64,
    pub theta_final: Vec<f64>,
    pub theta_bar: Vec<f64>,
    /// `|θ̄ − θ*|` in the toy model.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lppd: Option<f64>,
    /// Posterior variance estimate from the retained clouds, averaged over
    /// coordinates.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variance_mean: Option<f64>,
    /// Per-coordinate estimates, kept only for small latent dimensions.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variance: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acceptance_rate: Option<f64>,
    pub wall_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Summary {
    /// Mean and sample standard deviation (zero for a single value).
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std, n }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsFile {
    pub algorithm: Algorithm,
    pub replicates: Vec<ReplicateMetrics>,
    pub summary: BTreeMap<String, Summary>,
}

impl MetricsFile {
    pub fn new(algorithm: Algorithm, replicates: Vec<ReplicateMetrics>) -> Self {
        let mut columns: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut push = |k: String, v: f64| columns.entry(k).or_default().push(v);
        for r in &replicates {
            for (i, t) in r.theta_bar.iter().enumerate() {
                push(format!("theta_bar_{i}"), *t);
            }
            let scalars = [
                ("theta_error", r.theta_error),
                ("test_error", r.test_error),
                ("lppd", r.lppd),
                ("acceptance_rate", r.acceptance_rate),
                ("variance_mean", r.variance_mean),
                ("wall_time", Some(r.wall_time)),
            ];
            for (k, v) in scalars {
                if let Some(v) = v {
                    push(k.to_string(), v);
                }
            }
        }
        let summary = columns.into_iter().map(|(k, v)| (k, Summary::of(&v))).collect();
        Self { algorithm, replicates, summary }
    }
}

const MAX_VARIANCE_COORDS: usize = 1000;

pub fn replicate_metrics(built: &BuiltModel, trace: &Trace, replicate: usize, seed: u64) -> CliResult<ReplicateMetrics> {
    let clouds: Vec<_> = trace.post_burn_in_clouds().collect();
    let samples: usize = clouds.iter().map(|c| c.n()).sum();
    let variance = if samples >= 2 {
        Some(posterior_variance_estimate(clouds.iter().copied())?)
    } else {
        None
    };
    let variance_mean = variance.as_ref().map(|v| v.iter().sum::<f64>() / v.len() as f64);
    let variance = variance.filter(|v| v.len() <= MAX_VARIANCE_COORDS);
    let (mut test_err, mut lp) = (None, None);
    if let Some((model, test)) = built.classifier() {
        if !clouds.is_empty() && !test.labels.is_empty() {
            let probs = Classifier::new(model, clouds.iter().copied()).predict(&test.features);
            test_err = Some(test_error(&probs, &test.labels)?);
            lp = Some(lppd(&probs, &test.labels)?);
        }
    }
    let theta_error = match built {
        BuiltModel::Toy(m) => Some((trace.theta_bar_final[0] - m.theta_star()).abs()),
        _ => None,
    };
    Ok(ReplicateMetrics {
        replicate,
        seed,
        theta_final: trace.final_theta().to_vec(),
        theta_bar: trace.theta_bar_final.clone(),
        theta_error,
        test_error: test_err,
        lppd: lp,
        variance_mean,
        variance,
        acceptance_rate: trace.acceptance_rate,
        wall_time: trace.wall_time,
    })
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    version: &'static str,
    config: &'a ExperimentConfig,
    replicate_seeds: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    data: Option<&'a DataSummary>,
}

/// Outcome of a finished experiment.
pub struct Report {
    pub output_dir: PathBuf,
    pub metrics: MetricsFile,
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(value).expect("serializable");
    s.push(b'\n');
    s
}

fn cloud_snapshots_csv(trace: &Trace) -> String {
    let mut s = String::new();
    let d = trace.clouds.first().map_or(0, |(_, c)| c.d_x());
    s.push_str("step,particle");
    for j in 0..d {
        write!(s, ",x{j}").unwrap();
    }
    s.push('\n');
    for (step, cloud) in &trace.clouds {
        for (i, x) in cloud.particles().enumerate() {
            write!(s, "{step},{i}").unwrap();
            for v in x {
                write!(s, ",{}", fmt_f64(*v)).unwrap();
            }
            s.push('\n');
        }
    }
    s
}

fn meanfield_csv(cfg: &ExperimentConfig, model: &ToyHierarchical) -> Option<String> {
    let d = model.y().len();
    let variant = match cfg.run.algorithm {
        Algorithm::Pga => MeanFieldVariant::Pga,
        Algorithm::PgaScaled => {
            let lambda = cfg.run.lambda.as_ref().and_then(|l| l.first().copied());
            MeanFieldVariant::PgaScaled(lambda.unwrap_or(1.0 / d as f64))
        }
        Algorithm::Pqn => MeanFieldVariant::Pqn,
        Algorithm::Pmga => MeanFieldVariant::Pmga,
        _ => return None,
    };
    let start = match cfg.run.init {
        InitPolicy::Zeros => 0.0,
        InitPolicy::Constant(c) => c,
        _ => return None,
    };
    let path = meanfield_recursion(variant, d, cfg.run.h, model.y_mean(), MeanFieldState { theta: start, nu: start }, cfg.run.n_steps);
    let mut s = String::from("step,theta,nu\n");
    for (k, st) in path.iter().enumerate() {
        writeln!(s, "{k},{},{}", fmt_f64(st.theta), fmt_f64(st.nu)).unwrap();
    }
    Some(s)
}

fn write_replicate_files(cfg: &ExperimentConfig, dir: &Path, trace: &Trace) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(particle_em::Error::from)?;
    if cfg.emit.theta_trace {
        let mut buf = Vec::new();
        write_theta_trace(&mut buf, trace)?;
        write_atomic(&dir.join("theta_trace.csv"), &buf)?;
    }
    if cfg.emit.cloud_samples {
        if let Some(cloud) = trace.final_cloud() {
            let mut buf = Vec::new();
            write_state(&mut buf, trace.final_theta(), cloud)?;
            write_atomic(&dir.join("cloud_final.csv"), &buf)?;
        }
        if cfg.run.snapshot_every > 0 && !trace.clouds.is_empty() {
            write_atomic(&dir.join("cloud_snapshots.csv"), cloud_snapshots_csv(trace).as_bytes())?;
        }
    }
    Ok(())
}

/// Runs every replicate and writes all requested outputs under
/// `cfg.output_dir`. A single replicate writes its per-run files at the top
/// level; several replicates use `rep-{i}` subdirectories.
pub fn run_experiment(cfg: &ExperimentConfig) -> CliResult<Report> {
    cfg.validate()?;
    let (built, data) = build_model(cfg)?;
    let out = cfg.output_dir.clone();
    std::fs::create_dir_all(&out).map_err(particle_em::Error::from)?;

    let seeds: Vec<u64> = (0..cfg.replicates).map(|r| cfg.replicate_seed(r)).collect();
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        replicate_seeds: seeds.clone(),
        data: data.as_ref(),
    };
    write_atomic(&out.join("manifest.json"), &to_json(&manifest))?;

    let mut rows = Vec::with_capacity(cfg.replicates);
    for (r, &seed) in seeds.iter().enumerate() {
        let run_cfg = cfg.run.clone().with_seed(seed);
        let trace = run(built.latent(), &run_cfg)?;
        let dir = if cfg.replicates == 1 { out.clone() } else { out.join(format!("rep-{r}")) };
        write_replicate_files(cfg, &dir, &trace)?;
        rows.push(replicate_metrics(&built, &trace, r, seed)?);
    }

    if let BuiltModel::Toy(model) = &built {
        if cfg.emit.meanfield {
            if let Some(csv) = meanfield_csv(cfg, model) {
                write_atomic(&out.join("meanfield.csv"), csv.as_bytes())?;
            }
        }
        if cfg.emit.spectral {
            let csv = spectral::csv(model.y().len(), &[cfg.run.h]);
            write_atomic(&out.join("spectral.csv"), csv.as_bytes())?;
        }
    }

    let metrics = MetricsFile::new(cfg.run.algorithm, rows);
    if cfg.emit.metrics {
        write_atomic(&out.join("metrics.json"), &to_json(&metrics))?;
    }
    Ok(Report { output_dir: out, metrics })
}

/// Reads either an experiment TOML file or a `manifest.json` written by a
/// previous run.
pub fn load_config(path: &Path) -> CliResult<ExperimentConfig> {
    if path.extension().is_some_and(|e| e == "json") {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let config = value
            .get("config")
            .cloned()
            .ok_or_else(|| CliError::config(format!("{}: no `config` object", path.display())))?;
        let cfg: ExperimentConfig =
            serde_json::from_value(config).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    } else {
        ExperimentConfig::load(path)
    }
}
