//! Fixtures shared by the benchmarks in `benches/`.

use nalgebra::DMatrix;
use particle_em::{BnnModel, LatentModel, ParticleCloud, ToyHierarchical};

/// Toy model with `d_x` latent coordinates and a cloud of `n` particles at zero.
pub fn toy(d_x: usize, n: usize) -> (ToyHierarchical, ParticleCloud) {
    let model = ToyHierarchical::synthetic(d_x, 1).expect("valid toy size");
    let cloud = ParticleCloud::filled(n, d_x, 0.0).expect("valid cloud size");
    (model, cloud)
}

/// BNN on deterministic pseudo-features; labels alternate.
pub fn bnn(rows: usize, inputs: usize, hidden: usize) -> BnnModel {
    let features = DMatrix::from_fn(rows, inputs, |i, j| ((i * 31 + j * 17) as f64 * 0.37).sin());
    let labels: Vec<u8> = (0..rows).map(|i| (i % 2) as u8).collect();
    BnnModel::new(features, &labels, hidden).expect("valid bnn fixture")
}

/// A latent point with small, varied coordinates.
pub fn latent_point(model: &dyn LatentModel) -> Vec<f64> {
    (0..model.d_x()).map(|i| 0.1 * ((i as f64) * 0.7).cos()).collect()
}
