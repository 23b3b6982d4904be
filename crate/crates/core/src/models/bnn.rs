//! Two-layer tanh network for binary classification with Gaussian weight
//! priors whose log-scales `θ = (α, β)` are learned.
//!
//! Latent layout: input weights `w` (`hidden × inputs`, row-major) followed
//! by output weights `v` (`2 × hidden`, row-major). No biases. Class
//! log-probabilities are `z_l - logsumexp(z)` with `z = v tanh(w f)`.
//!
//! Gradients with respect to the weights are hand-written reverse mode for
//! this fixed architecture. `log_joint` keeps all prior normalizers.

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{LatentModel, ParticleCloud};

pub const DEFAULT_HIDDEN: usize = 40;
const N_CLASSES: usize = 2;
const LN_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Clone)]
pub struct BnnModel {
    /// `M × inputs`.
    features: DMatrix<f64>,
    /// One-hot labels, `M × 2`.
    targets: DMatrix<f64>,
    hidden: usize,
}

impl BnnModel {
    pub fn new(features: DMatrix<f64>, labels: &[u8], hidden: usize) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                what: "labels",
                expected: features.nrows(),
                got: labels.len(),
            });
        }
        if hidden == 0 || features.ncols() == 0 {
            return Err(Error::InvalidConfig {
                field: "hidden",
                reason: "network needs at least one input and one hidden unit".into(),
            });
        }
        let mut targets = DMatrix::zeros(labels.len(), N_CLASSES);
        for (i, &l) in labels.iter().enumerate() {
            if l as usize >= N_CLASSES {
                return Err(Error::InvalidConfig {
                    field: "labels",
                    reason: format!("labels must be 0 or 1, found {l}"),
                });
            }
            targets[(i, l as usize)] = 1.0;
        }
        Ok(Self {
            features,
            targets,
            hidden,
        })
    }

    pub fn inputs(&self) -> usize {
        self.features.ncols()
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// Number of input-layer weights `D_w`.
    pub fn d_w(&self) -> usize {
        self.hidden * self.inputs()
    }

    /// Number of output-layer weights `D_v`.
    pub fn d_v(&self) -> usize {
        N_CLASSES * self.hidden
    }

    fn split<'a>(&self, x: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        x.split_at(self.d_w())
    }

    /// Hidden activations and logits for a batch of inputs.
    fn forward(&self, features: &DMatrix<f64>, x: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let (w, v) = self.split(x);
        let w_t = DMatrixView::from_slice(w, self.inputs(), self.hidden);
        let v_t = DMatrixView::from_slice(v, self.hidden, N_CLASSES);
        let mut act = features * w_t;
        act.apply(|a| *a = a.tanh());
        let logits = &act * v_t;
        (act, logits)
    }

    /// Class probabilities `p(l | f, x)` for each row of `features`.
    pub fn class_probabilities(&self, features: &DMatrix<f64>, x: &[f64]) -> Vec<[f64; 2]> {
        let (_, logits) = self.forward(features, x);
        (0..logits.nrows())
            .map(|i| {
                let (z0, z1) = (logits[(i, 0)], logits[(i, 1)]);
                let lse = log_sum_exp2(z0, z1);
                [(z0 - lse).exp(), (z1 - lse).exp()]
            })
            .collect()
    }
}

fn log_sum_exp2(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum()
}

impl LatentModel for BnnModel {
    fn name(&self) -> &str {
        "bnn"
    }

    fn d_theta(&self) -> usize {
        2
    }

    fn d_x(&self) -> usize {
        self.d_w() + self.d_v()
    }

    fn log_joint(&self, theta: &[f64], x: &[f64]) -> f64 {
        let (alpha, beta) = (theta[0], theta[1]);
        let (w, v) = self.split(x);
        let (_, logits) = self.forward(&self.features, x);
        let mut lik = 0.0;
        for i in 0..logits.nrows() {
            let (z0, z1) = (logits[(i, 0)], logits[(i, 1)]);
            let lse = log_sum_exp2(z0, z1);
            lik += self.targets[(i, 0)] * z0 + self.targets[(i, 1)] * z1 - lse;
        }
        let dw = self.d_w() as f64;
        let dv = self.d_v() as f64;
        let prior_w = -0.5 * sq_norm(w) * (-2.0 * alpha).exp() - dw * alpha - 0.5 * dw * LN_2PI;
        let prior_v = -0.5 * sq_norm(v) * (-2.0 * beta).exp() - dv * beta - 0.5 * dv * LN_2PI;
        lik + prior_w + prior_v
    }

    fn grad_theta(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        let (w, v) = self.split(x);
        out[0] = sq_norm(w) * (-2.0 * theta[0]).exp() - self.d_w() as f64;
        out[1] = sq_norm(v) * (-2.0 * theta[1]).exp() - self.d_v() as f64;
    }

    fn grad_x(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        let (alpha, beta) = (theta[0], theta[1]);
        let (w, v) = self.split(x);
        let (act, logits) = self.forward(&self.features, x);

        // dℓ/dz = onehot - softmax(z)
        let mut g = self.targets.clone();
        for i in 0..logits.nrows() {
            let (z0, z1) = (logits[(i, 0)], logits[(i, 1)]);
            let lse = log_sum_exp2(z0, z1);
            g[(i, 0)] -= (z0 - lse).exp();
            g[(i, 1)] -= (z1 - lse).exp();
        }

        let v_t = DMatrixView::from_slice(v, self.hidden, N_CLASSES);
        let mut d_pre = &g * v_t.transpose();
        d_pre.zip_apply(&act, |d, a| *d *= 1.0 - a * a);

        let (out_w, out_v) = out.split_at_mut(self.d_w());
        let mut gw_t = DMatrixViewMut::from_slice(out_w, self.inputs(), self.hidden);
        gw_t.gemm_tr(1.0, &self.features, &d_pre, 0.0);
        let mut gv_t = DMatrixViewMut::from_slice(out_v, self.hidden, N_CLASSES);
        gv_t.gemm_tr(1.0, &act, &g, 0.0);

        let sw = (-2.0 * alpha).exp();
        for (o, wi) in out_w.iter_mut().zip(w) {
            *o -= wi * sw;
        }
        let sv = (-2.0 * beta).exp();
        for (o, vi) in out_v.iter_mut().zip(v) {
            *o -= vi * sv;
        }
    }

    fn neg_hess_theta(&self, theta: &[f64], x: &[f64]) -> Result<DMatrix<f64>> {
        let (w, v) = self.split(x);
        Ok(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            2.0 * sq_norm(w) * (-2.0 * theta[0]).exp(),
            2.0 * sq_norm(v) * (-2.0 * theta[1]).exp(),
        ])))
    }

    fn exact_m_step(&self, cloud: &ParticleCloud) -> Result<Vec<f64>> {
        let (mut sw, mut sv) = (0.0, 0.0);
        for x in cloud.particles() {
            let (w, v) = self.split(x);
            sw += sq_norm(w);
            sv += sq_norm(v);
        }
        let n = cloud.n() as f64;
        Ok(vec![
            0.5 * (sw / (n * self.d_w() as f64)).ln(),
            0.5 * (sv / (n * self.d_v() as f64)).ln(),
        ])
    }

    fn sample_prior(&self, theta: &[f64], rng: &mut dyn RngCore, out: &mut [f64]) -> Result<()> {
        let (sw, sv) = (theta[0].exp(), theta[1].exp());
        let d_w = self.d_w();
        for (i, o) in out.iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(rng);
            *o = z * if i < d_w { sw } else { sv };
        }
        Ok(())
    }

    fn theta_term_counts(&self) -> Result<Vec<f64>> {
        Ok(vec![self.d_w() as f64, self.d_v() as f64])
    }

    fn has_neg_hess_theta(&self) -> bool {
        true
    }

    fn has_exact_m_step(&self) -> bool {
        true
    }
}
