//! Hierarchical Bayes estimation of small-area proportions.
//!
//! Unit-level survey records are linked with census cell counts and area
//! covariates. A three-level Bernoulli-logit model is fitted to the sampled
//! respondents, and each posterior draw is mapped to area proportions by
//! weighting sampled cells with their census shares and borrowing unsampled
//! cells from other areas.

pub mod aggregate;
pub mod data;
pub mod diagnostics;
pub mod direct;
pub mod fit;
pub mod loo;
pub mod model;
pub mod report;
pub mod sampler;
pub mod scalar;
pub mod sim;

pub use scalar::Real;

pub type Model = model::HierarchicalModel<f64>;
pub type Model32 = model::HierarchicalModel<f32>;
pub type Draws = sampler::DrawsMatrix<f64>;
pub type Draws32 = sampler::DrawsMatrix<f32>;
pub type Diagnostics = diagnostics::DiagnosticsTable<f64>;
pub type Fit = fit::Fit<f64>;
pub type Fit32 = fit::Fit<f32>;
pub type AreaPosterior = aggregate::AreaPosterior<f64>;
pub type DirectEstimate = direct::DirectEstimate<f64>;
