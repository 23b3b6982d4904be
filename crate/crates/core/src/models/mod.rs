//! Benchmark models.

pub mod bnn;
pub mod logistic;
pub mod toy;

pub use bnn::BnnModel;
pub use logistic::LogisticRegression;
pub use toy::ToyHierarchical;
