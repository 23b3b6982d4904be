//! Predictive metrics for the classification models and posterior variance
//! estimates from particle clouds.

use nalgebra::{DMatrix, DVectorView};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::ParticleCloud;
use crate::models::logistic::sigmoid;
use crate::models::{BnnModel, LogisticRegression};

/// Smallest predictive probability allowed inside the LPPD logarithm.
pub const LPPD_FLOOR: f64 = 1e-300;

/// Models that turn a latent sample into class probabilities.
pub trait ClassProbabilities: Sync {
    /// `[p(0 | f, x), p(1 | f, x)]` for every row `f` of `features`.
    fn class_probabilities(&self, features: &DMatrix<f64>, x: &[f64]) -> Vec<[f64; 2]>;
}

impl ClassProbabilities for LogisticRegression {
    fn class_probabilities(&self, features: &DMatrix<f64>, x: &[f64]) -> Vec<[f64; 2]> {
        let z = features * DVectorView::from_slice(x, x.len());
        z.iter().map(|z| [sigmoid(-z), sigmoid(*z)]).collect()
    }
}

impl ClassProbabilities for BnnModel {
    fn class_probabilities(&self, features: &DMatrix<f64>, x: &[f64]) -> Vec<[f64; 2]> {
        BnnModel::class_probabilities(self, features, x)
    }
}

/// Posterior predictive `g(l | f) = (1/M') Σ_m p(l | f, Z^m)` over a set of
/// latent samples.
pub struct Classifier<'a> {
    model: &'a dyn ClassProbabilities,
    samples: Vec<&'a [f64]>,
}

impl<'a> Classifier<'a> {
    pub fn new<I>(model: &'a dyn ClassProbabilities, clouds: I) -> Self
    where
        I: IntoIterator<Item = &'a ParticleCloud>,
    {
        let samples = clouds.into_iter().flat_map(|c| c.particles()).collect();
        Self { model, samples }
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    /// Averaged class probabilities per test row; samples are summed in order.
    pub fn predict(&self, features: &DMatrix<f64>) -> Vec<[f64; 2]> {
        let per_sample: Vec<Vec<[f64; 2]>> = self
            .samples
            .par_iter()
            .map(|x| self.model.class_probabilities(features, x))
            .collect();
        let mut acc = vec![[0.0; 2]; features.nrows()];
        for probs in &per_sample {
            for (a, p) in acc.iter_mut().zip(probs) {
                a[0] += p[0];
                a[1] += p[1];
            }
        }
        let inv = 1.0 / self.samples.len().max(1) as f64;
        for a in &mut acc {
            a[0] *= inv;
            a[1] *= inv;
        }
        acc
    }
}

fn check_eval(probs: &[[f64; 2]], labels: &[u8]) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::InsufficientSamples("empty test set".into()));
    }
    if probs.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            what: "predictions",
            expected: labels.len(),
            got: probs.len(),
        });
    }
    Ok(())
}

/// Predicted label: 1 only when `g(1|f) > g(0|f)`, so ties go to 0.
pub fn predicted_label(p: &[f64; 2]) -> u8 {
    u8::from(p[1] > p[0])
}

/// Fraction of misclassified test points.
pub fn test_error(probs: &[[f64; 2]], labels: &[u8]) -> Result<f64> {
    check_eval(probs, labels)?;
    let wrong = probs
        .iter()
        .zip(labels)
        .filter(|(p, &l)| predicted_label(p) != l)
        .count();
    Ok(wrong as f64 / labels.len() as f64)
}

/// Mean log predictive probability of the true labels.
pub fn lppd(probs: &[[f64; 2]], labels: &[u8]) -> Result<f64> {
    check_eval(probs, labels)?;
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(p, &l)| p[l as usize].max(LPPD_FLOOR).ln())
        .sum();
    Ok(total / labels.len() as f64)
}

/// Per-coordinate unbiased sample variance pooled over every particle of
/// every given cloud.
pub fn posterior_variance_estimate<'a, I>(clouds: I) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = &'a ParticleCloud>,
{
    let mut mean: Vec<f64> = Vec::new();
    let mut m2: Vec<f64> = Vec::new();
    let mut count = 0usize;
    for cloud in clouds {
        if mean.is_empty() {
            mean = vec![0.0; cloud.d_x()];
            m2 = vec![0.0; cloud.d_x()];
        } else if cloud.d_x() != mean.len() {
            return Err(Error::DimensionMismatch {
                what: "cloud d_x",
                expected: mean.len(),
                got: cloud.d_x(),
            });
        }
        for x in cloud.particles() {
            count += 1;
            let w = 1.0 / count as f64;
            for ((m, s), v) in mean.iter_mut().zip(m2.iter_mut()).zip(x) {
                let delta = v - *m;
                *m += delta * w;
                *s += delta * (v - *m);
            }
        }
    }
    if count < 2 {
        return Err(Error::InsufficientSamples(format!(
            "variance needs at least 2 samples, got {count}"
        )));
    }
    let denom = (count - 1) as f64;
    Ok(m2.into_iter().map(|s| s / denom).collect())
}
