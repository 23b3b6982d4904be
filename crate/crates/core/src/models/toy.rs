//! Toy hierarchical Gaussian model with a scalar mean parameter.
//!
//! `x_d ~ N(θ, 1)`, `y_d | x_d ~ N(x_d, 1)` independently for `d = 1..D_x`.
//! Every quantity of interest (marginal likelihood maximizer, posterior,
//! EM iteration) is available in closed form. `log_joint` keeps the full
//! normalizer `-D_x log(2π)`.

use nalgebra::DMatrix;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{LatentModel, ParticleCloud};

#[derive(Debug, Clone, PartialEq)]
pub struct ToyHierarchical {
    y: Vec<f64>,
}

impl ToyHierarchical {
    pub fn new(y: Vec<f64>) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::InvalidConfig {
                field: "d_x",
                reason: "must be positive".into(),
            });
        }
        Ok(Self { y })
    }

    /// Samples observations from the model with `θ = 1`.
    pub fn synthetic(d_x: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = (0..d_x)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                let noise: f64 = StandardNormal.sample(&mut rng);
                1.0 + z + noise
            })
            .collect();
        Self::new(y)
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn y_mean(&self) -> f64 {
        self.y.iter().sum::<f64>() / self.y.len() as f64
    }

    /// Marginal likelihood maximizer: the empirical mean of `y`.
    pub fn theta_star(&self) -> f64 {
        self.y_mean()
    }

    /// Mean of `p_θ(x | y) = N((y + θ1)/2, I/2)`.
    pub fn posterior_mean(&self, theta: f64) -> Vec<f64> {
        self.y.iter().map(|y| 0.5 * (y + theta)).collect()
    }

    pub const POSTERIOR_VARIANCE: f64 = 0.5;

    /// One exact EM iteration `θ ← (ȳ + θ)/2`.
    pub fn em_step(&self, theta: f64) -> f64 {
        0.5 * (self.y_mean() + theta)
    }
}

impl LatentModel for ToyHierarchical {
    fn name(&self) -> &str {
        "toy"
    }

    fn d_theta(&self) -> usize {
        1
    }

    fn d_x(&self) -> usize {
        self.y.len()
    }

    fn log_joint(&self, theta: &[f64], x: &[f64]) -> f64 {
        let t = theta[0];
        let quad: f64 = x
            .iter()
            .zip(&self.y)
            .map(|(xd, yd)| (xd - t).powi(2) + (yd - xd).powi(2))
            .sum();
        -0.5 * quad - self.y.len() as f64 * (2.0 * std::f64::consts::PI).ln()
    }

    fn grad_theta(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        let t = theta[0];
        out[0] = x.iter().map(|xd| xd - t).sum();
    }

    fn grad_x(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        let t = theta[0];
        for ((o, xd), yd) in out.iter_mut().zip(x).zip(&self.y) {
            *o = yd - xd - (xd - t);
        }
    }

    fn neg_hess_theta(&self, _theta: &[f64], _x: &[f64]) -> Result<DMatrix<f64>> {
        Ok(DMatrix::from_element(1, 1, self.y.len() as f64))
    }

    fn exact_m_step(&self, cloud: &ParticleCloud) -> Result<Vec<f64>> {
        Ok(vec![cloud.grand_mean()])
    }

    fn exact_em_step(&self, theta: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![self.em_step(theta[0])])
    }

    fn sample_prior(&self, theta: &[f64], rng: &mut dyn RngCore, out: &mut [f64]) -> Result<()> {
        for o in out.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *o = theta[0] + z;
        }
        Ok(())
    }

    fn theta_term_counts(&self) -> Result<Vec<f64>> {
        Ok(vec![self.y.len() as f64])
    }

    fn has_neg_hess_theta(&self) -> bool {
        true
    }

    fn has_exact_m_step(&self) -> bool {
        true
    }

    fn has_exact_em_step(&self) -> bool {
        true
    }
}
