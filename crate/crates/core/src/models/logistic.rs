//! Bayesian logistic regression with an exchangeable Gaussian prior
//! `x ~ N(θ1, 5I)` on the regression weights.
//!
//! The prior enters `log_joint` as `-‖x - θ1‖²/10 - (D_x/2) log(10π)`,
//! i.e. with variance 5 consistently in the density and its gradients.

use nalgebra::{DMatrix, DVector, DVectorView};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{LatentModel, ParticleCloud};

pub const PRIOR_VARIANCE: f64 = 5.0;

/// `log(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Logistic function `e^z / (1 + e^z)`.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone)]
pub struct LogisticRegression {
    features: DMatrix<f64>,
    labels: DVector<f64>,
}

impl LogisticRegression {
    /// `features` is `M × D_x`; `labels` are 0/1.
    pub fn new(features: DMatrix<f64>, labels: &[u8]) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                what: "labels",
                expected: features.nrows(),
                got: labels.len(),
            });
        }
        if features.ncols() == 0 {
            return Err(Error::InvalidConfig {
                field: "features",
                reason: "need at least one feature column".into(),
            });
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::InvalidConfig {
                field: "labels",
                reason: format!("labels must be 0 or 1, found {bad}"),
            });
        }
        let labels = DVector::from_iterator(labels.len(), labels.iter().map(|&l| l as f64));
        Ok(Self { features, labels })
    }

    /// Synthetic data: standard normal features, labels drawn from the
    /// logistic model with the given weight vector.
    pub fn synthetic(m: usize, weights: &[f64], seed: u64) -> Result<Self> {
        let (features, labels) = synthetic_logistic_data(m, weights, seed);
        Self::new(features, &labels)
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn n_data(&self) -> usize {
        self.features.nrows()
    }

    fn linear_predictor(&self, x: &[f64]) -> DVector<f64> {
        &self.features * DVectorView::from_slice(x, x.len())
    }
}

/// Draws `(features, labels)` from the logistic model with known weights.
pub fn synthetic_logistic_data(m: usize, weights: &[f64], seed: u64) -> (DMatrix<f64>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = weights.len();
    let features = DMatrix::from_fn(m, d, |_, _| StandardNormal.sample(&mut rng));
    let labels = (0..m)
        .map(|i| {
            let z: f64 = (0..d).map(|j| features[(i, j)] * weights[j]).sum();
            Bernoulli::new(sigmoid(z)).unwrap().sample(&mut rng) as u8
        })
        .collect();
    (features, labels)
}

impl LatentModel for LogisticRegression {
    fn name(&self) -> &str {
        "logistic"
    }

    fn d_theta(&self) -> usize {
        1
    }

    fn d_x(&self) -> usize {
        self.features.ncols()
    }

    fn log_joint(&self, theta: &[f64], x: &[f64]) -> f64 {
        let z = self.linear_predictor(x);
        let lik: f64 = z
            .iter()
            .zip(self.labels.iter())
            .map(|(z, l)| l * z - softplus(*z))
            .sum();
        let t = theta[0];
        let prior_quad: f64 = x.iter().map(|xd| (xd - t).powi(2)).sum();
        let d = x.len() as f64;
        lik - prior_quad / (2.0 * PRIOR_VARIANCE)
            - 0.5 * d * (2.0 * std::f64::consts::PI * PRIOR_VARIANCE).ln()
    }

    fn grad_theta(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        let d = x.len() as f64;
        out[0] = (x.iter().sum::<f64>() - d * theta[0]) / PRIOR_VARIANCE;
    }

    fn grad_x(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        let z = self.linear_predictor(x);
        let resid = DVector::from_iterator(
            z.len(),
            z.iter().zip(self.labels.iter()).map(|(z, l)| l - sigmoid(*z)),
        );
        let lik = self.features.tr_mul(&resid);
        let t = theta[0];
        for ((o, xd), g) in out.iter_mut().zip(x).zip(lik.iter()) {
            *o = (t - xd) / PRIOR_VARIANCE + g;
        }
    }

    fn neg_hess_theta(&self, _theta: &[f64], x: &[f64]) -> Result<DMatrix<f64>> {
        Ok(DMatrix::from_element(1, 1, x.len() as f64 / PRIOR_VARIANCE))
    }

    fn exact_m_step(&self, cloud: &ParticleCloud) -> Result<Vec<f64>> {
        Ok(vec![cloud.grand_mean()])
    }

    fn sample_prior(&self, theta: &[f64], rng: &mut dyn RngCore, out: &mut [f64]) -> Result<()> {
        let sd = PRIOR_VARIANCE.sqrt();
        for o in out.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *o = theta[0] + sd * z;
        }
        Ok(())
    }

    fn theta_term_counts(&self) -> Result<Vec<f64>> {
        Ok(vec![self.d_x() as f64])
    }

    fn has_neg_hess_theta(&self) -> bool {
        true
    }

    fn has_exact_m_step(&self) -> bool {
        true
    }
}

/// Class-1 probability `s(fᵀx)` for every row of `features`.
pub fn predict_positive(features: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let z = features * DVectorView::from_slice(x, x.len());
    z.iter().map(|z| sigmoid(*z)).collect()
}
