//! The hierarchical Bernoulli-logit model for sampled respondents:
//!
//! ```text
//! y_k ~ Bernoulli(theta_k)
//! logit(theta_k) = alpha[race x eth] + x_area' beta + age * xi[gender] + v_area + lambda * h(w_k)
//! v_i ~ Normal(0, sigma_v^2)
//! ```
//!
//! Parameters are sampled on the unconstrained scale with `sigma_v = exp(log_sigma_v)`.

mod config;
mod design;
mod noncentered;
mod params;

pub use config::{
    ModelConfig, Parameterization, PriorConfig, WeightTransform, COMORBIDITY, FLU_SHOT, PCT_REPUBLICAN, POSITIVITY,
    TEST_RATE,
};
pub use design::{build_design, Design, DesignRow, Standardization};
pub use noncentered::NonCentered;
pub use params::{ParamLayout, ParamVector};

use thiserror::Error;

use crate::data::LinkedDataset;
use crate::scalar::{log1p_exp, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("covariate `{0}` has zero variance and cannot be standardized")]
    DegenerateCovariate(String),
    #[error("covariate `{0}` is not in the area covariate table")]
    UnknownCovariate(String),
    #[error("weight {0} is not positive")]
    NonpositiveWeight(f64),
    #[error("parameter vector has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("log density or gradient is not finite")]
    NonFiniteValue,
    #[error("unknown model preset `{0}`")]
    UnknownPreset(String),
    #[error("{0}")]
    Config(String),
}

/// A differentiable log density on an unconstrained space.
pub trait LogDensity<T: Real>: Sync {
    fn dim(&self) -> usize;

    /// Returns the log density at `x` and writes its gradient into `grad`.
    fn logp_grad(&self, x: &[T], grad: &mut [T]) -> Result<T, ModelError>;
}

/// Inverse logit, stable for any finite input.
#[inline]
pub fn inv_link<T: Real>(eta: T) -> T {
    if eta >= T::zero() {
        T::one() / (T::one() + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (T::one() + e)
    }
}

/// Bernoulli-logit log mass of `y` at linear predictor `eta`.
#[inline]
pub fn bernoulli_logit_lpmf<T: Real>(y: bool, eta: T) -> T {
    if y {
        -log1p_exp(-eta)
    } else {
        -log1p_exp(eta)
    }
}

fn half_ln_2pi<T: Real>() -> T {
    T::lit(0.5) * (T::TAU()).ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalModel<T> {
    design: Design<T>,
    layout: ParamLayout,
    coef_sd: T,
    sigma_v_scale: T,
}

impl<T: Real> HierarchicalModel<T> {
    pub fn new(design: Design<T>, prior: PriorConfig) -> Self {
        let layout = design.layout();
        Self {
            design,
            layout,
            coef_sd: T::lit(prior.coef_sd),
            sigma_v_scale: T::lit(prior.sigma_v_scale),
        }
    }

    pub fn from_dataset(
        data: &LinkedDataset,
        config: &ModelConfig,
        prior: PriorConfig,
    ) -> Result<Self, ModelError> {
        Ok(Self::new(build_design(data, config)?, prior))
    }

    pub fn design(&self) -> &Design<T> {
        &self.design
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn prior(&self) -> PriorConfig {
        PriorConfig {
            coef_sd: self.coef_sd.as_f64(),
            sigma_v_scale: self.sigma_v_scale.as_f64(),
        }
    }

    /// Same model on a different design (e.g. a leave-one-out subset).
    pub fn with_design(&self, design: Design<T>) -> Self {
        Self::new(design, self.prior())
    }

    /// Parameter names in layout order, keyed by schema levels and area ids.
    pub fn param_names(&self, data: &LinkedDataset) -> Vec<String> {
        let schema = data.schema();
        let mut names: Vec<String> = (0..self.layout.n_alpha)
            .map(|i| format!("alpha[{}]", schema.intercept_label(i)))
            .collect();
        names.extend(
            self.design
                .covariate_names()
                .iter()
                .map(|c| format!("beta[{c}]")),
        );
        names.extend(schema.genders.iter().map(|g| format!("xi[{g}]")));
        if self.layout.lambda {
            names.push("lambda".into());
        }
        names.extend(data.cells().areas().iter().map(|a| format!("v[{a}]")));
        names.push("log_sigma_v".into());
        names
    }

    fn check_dim(&self, params: &[T]) -> Result<(), ModelError> {
        if params.len() != self.layout.dim() {
            return Err(ModelError::DimensionMismatch {
                expected: self.layout.dim(),
                got: params.len(),
            });
        }
        Ok(())
    }

    /// `eta` for design row `k`.
    pub fn linear_predictor(&self, params: &[T], k: usize) -> Result<T, ModelError> {
        self.check_dim(params)?;
        Ok(self.eta(params, &self.design.rows()[k]))
    }

    #[inline]
    fn eta(&self, p: &[T], row: &DesignRow<T>) -> T {
        let l = &self.layout;
        let mut eta = p[row.intercept] + row.age * p[l.xi().start + row.gender] + p[l.v().start + row.area];
        let beta = &p[l.beta()];
        for (b, x) in beta.iter().zip(self.design.area_covariates(row.area)) {
            eta = eta + *b * *x;
        }
        if let (Some(li), Some(hw)) = (l.lambda_index(), row.hw) {
            eta = eta + p[li] * hw;
        }
        eta
    }

    /// `theta_k = inv_link(eta_k)` for every record.
    pub fn thetas(&self, params: &[T]) -> Result<Vec<T>, ModelError> {
        self.check_dim(params)?;
        Ok(self
            .design
            .rows()
            .iter()
            .map(|r| inv_link(self.eta(params, r)))
            .collect())
    }

    pub fn log_prior(&self, params: &[T]) -> Result<T, ModelError> {
        self.check_dim(params)?;
        Ok(self.prior_terms(params, None))
    }

    fn prior_terms(&self, p: &[T], mut grad: Option<&mut [T]>) -> T {
        let l = &self.layout;
        let c = half_ln_2pi::<T>();
        let half = T::lit(0.5);
        let tau2 = self.coef_sd * self.coef_sd;
        let mut lp = T::zero();
        for i in l.fixed_effects() {
            lp = lp - c - self.coef_sd.ln() - half * p[i] * p[i] / tau2;
            if let Some(g) = grad.as_deref_mut() {
                g[i] = g[i] - p[i] / tau2;
            }
        }
        let s = p[l.log_sigma_v_index()];
        let sigma = s.exp();
        let sigma2 = sigma * sigma;
        let mut sum_v2 = T::zero();
        for i in l.v() {
            sum_v2 = sum_v2 + p[i] * p[i];
            lp = lp - c - s - half * p[i] * p[i] / sigma2;
            if let Some(g) = grad.as_deref_mut() {
                g[i] = g[i] - p[i] / sigma2;
            }
        }
        let scale2 = self.sigma_v_scale * self.sigma_v_scale;
        // HalfNormal(sigma; scale) plus log|d sigma / d s| = s
        lp = lp + T::LN_2() - c - self.sigma_v_scale.ln() - half * sigma2 / scale2 + s;
        if let Some(g) = grad {
            let i = l.log_sigma_v_index();
            g[i] = g[i] - T::from_usize_lossy(l.m) + sum_v2 / sigma2 - sigma2 / scale2 + T::one();
        }
        lp
    }

    pub fn log_likelihood(&self, params: &[T]) -> Result<T, ModelError> {
        self.check_dim(params)?;
        Ok(self
            .design
            .rows()
            .iter()
            .zip(self.design.outcomes())
            .map(|(r, &y)| bernoulli_logit_lpmf(y, self.eta(params, r)))
            .sum())
    }

    /// Per-record log-likelihood contributions.
    pub fn pointwise_log_likelihood(&self, params: &[T]) -> Result<Vec<T>, ModelError> {
        self.check_dim(params)?;
        Ok(self
            .design
            .rows()
            .iter()
            .zip(self.design.outcomes())
            .map(|(r, &y)| bernoulli_logit_lpmf(y, self.eta(params, r)))
            .collect())
    }

    /// Log posterior (up to the evidence) and its exact gradient.
    pub fn log_posterior_grad(&self, params: &[T], grad: &mut [T]) -> Result<T, ModelError> {
        self.check_dim(params)?;
        if grad.len() != params.len() {
            return Err(ModelError::DimensionMismatch {
                expected: params.len(),
                got: grad.len(),
            });
        }
        grad.iter_mut().for_each(|g| *g = T::zero());
        let l = &self.layout;
        let (xi0, v0) = (l.xi().start, l.v().start);
        let beta = l.beta();
        let lam = l.lambda_index();
        let mut ll = T::zero();
        for (row, &y) in self.design.rows().iter().zip(self.design.outcomes()) {
            let eta = self.eta(params, row);
            ll = ll + bernoulli_logit_lpmf(y, eta);
            // d/d eta of the Bernoulli-logit log mass
            let r = if y { T::one() } else { T::zero() } - inv_link(eta);
            grad[row.intercept] = grad[row.intercept] + r;
            grad[xi0 + row.gender] = grad[xi0 + row.gender] + r * row.age;
            grad[v0 + row.area] = grad[v0 + row.area] + r;
            for (g, x) in grad[beta.clone()]
                .iter_mut()
                .zip(self.design.area_covariates(row.area))
            {
                *g = *g + r * *x;
            }
            if let (Some(li), Some(hw)) = (lam, row.hw) {
                grad[li] = grad[li] + r * hw;
            }
        }
        let lp = ll + self.prior_terms(params, Some(grad));
        if !lp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(ModelError::NonFiniteValue);
        }
        Ok(lp)
    }
}

impl<T: Real> LogDensity<T> for HierarchicalModel<T> {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn logp_grad(&self, x: &[T], grad: &mut [T]) -> Result<T, ModelError> {
        self.log_posterior_grad(x, grad)
    }
}

#[cfg(test)]
mod tests;
