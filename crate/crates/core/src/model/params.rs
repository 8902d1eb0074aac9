use std::ops::Range;

use crate::scalar::Real;

/// Position of every block inside the flat unconstrained parameter vector:
/// `[alpha | beta | xi | lambda? | v | log_sigma_v]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub n_alpha: usize,
    pub n_beta: usize,
    pub n_xi: usize,
    pub lambda: bool,
    pub m: usize,
}

impl ParamLayout {
    pub fn dim(&self) -> usize {
        self.n_alpha + self.n_beta + self.n_xi + self.lambda as usize + self.m + 1
    }

    pub fn alpha(&self) -> Range<usize> {
        0..self.n_alpha
    }

    pub fn beta(&self) -> Range<usize> {
        let s = self.n_alpha;
        s..s + self.n_beta
    }

    pub fn xi(&self) -> Range<usize> {
        let s = self.beta().end;
        s..s + self.n_xi
    }

    pub fn lambda_index(&self) -> Option<usize> {
        self.lambda.then(|| self.xi().end)
    }

    pub fn v(&self) -> Range<usize> {
        let s = self.xi().end + self.lambda as usize;
        s..s + self.m
    }

    pub fn log_sigma_v_index(&self) -> usize {
        self.dim() - 1
    }

    /// Indices of every coefficient carrying the `Normal(0, coef_sd^2)` prior.
    pub fn fixed_effects(&self) -> Range<usize> {
        0..self.v().start
    }
}

/// A point in parameter space together with its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector<T> {
    layout: ParamLayout,
    values: Vec<T>,
}

impl<T: Real> ParamVector<T> {
    pub fn zeros(layout: ParamLayout) -> Self {
        let values = vec![T::zero(); layout.dim()];
        Self { layout, values }
    }

    pub fn from_values(layout: ParamLayout, values: Vec<T>) -> Option<Self> {
        (values.len() == layout.dim()).then_some(Self { layout, values })
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn alpha(&self) -> &[T] {
        &self.values[self.layout.alpha()]
    }

    pub fn alpha_mut(&mut self) -> &mut [T] {
        let r = self.layout.alpha();
        &mut self.values[r]
    }

    pub fn beta(&self) -> &[T] {
        &self.values[self.layout.beta()]
    }

    pub fn beta_mut(&mut self) -> &mut [T] {
        let r = self.layout.beta();
        &mut self.values[r]
    }

    pub fn xi(&self) -> &[T] {
        &self.values[self.layout.xi()]
    }

    pub fn xi_mut(&mut self) -> &mut [T] {
        let r = self.layout.xi();
        &mut self.values[r]
    }

    pub fn lambda(&self) -> Option<T> {
        self.layout.lambda_index().map(|i| self.values[i])
    }

    pub fn set_lambda(&mut self, value: T) {
        if let Some(i) = self.layout.lambda_index() {
            self.values[i] = value;
        }
    }

    pub fn v(&self) -> &[T] {
        &self.values[self.layout.v()]
    }

    pub fn v_mut(&mut self) -> &mut [T] {
        let r = self.layout.v();
        &mut self.values[r]
    }

    pub fn log_sigma_v(&self) -> T {
        self.values[self.layout.log_sigma_v_index()]
    }

    pub fn set_sigma_v(&mut self, sigma: T) {
        let i = self.layout.log_sigma_v_index();
        self.values[i] = sigma.ln();
    }

    pub fn sigma_v(&self) -> T {
        self.log_sigma_v().exp()
    }
}
