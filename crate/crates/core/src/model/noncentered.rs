use super::{HierarchicalModel, LogDensity, ModelError};
use crate::scalar::Real;

/// The posterior in non-centred coordinates: the area block holds
/// `z = v / sigma_v`, every other coordinate is unchanged. Sampling in these
/// coordinates avoids the funnel between `v` and `log_sigma_v` when areas
/// carry little information.
#[derive(Debug, Clone, Copy)]
pub struct NonCentered<'a, T> {
    model: &'a HierarchicalModel<T>,
}

impl<'a, T: Real> NonCentered<'a, T> {
    pub fn new(model: &'a HierarchicalModel<T>) -> Self {
        Self { model }
    }

    pub fn to_centered(&self, x: &[T]) -> Vec<T> {
        let l = self.model.layout();
        let sigma = x[l.log_sigma_v_index()].exp();
        let mut q = x.to_vec();
        for i in l.v() {
            q[i] = x[i] * sigma;
        }
        q
    }

    pub fn from_centered(&self, q: &[T]) -> Vec<T> {
        let l = self.model.layout();
        let sigma = q[l.log_sigma_v_index()].exp();
        let mut x = q.to_vec();
        for i in l.v() {
            x[i] = q[i] / sigma;
        }
        x
    }
}

impl<T: Real> LogDensity<T> for NonCentered<'_, T> {
    fn dim(&self) -> usize {
        self.model.layout().dim()
    }

    fn logp_grad(&self, x: &[T], grad: &mut [T]) -> Result<T, ModelError> {
        let l = self.model.layout();
        let ls = l.log_sigma_v_index();
        let q = self.to_centered(x);
        let lp = self.model.log_posterior_grad(&q, grad)?;
        let sigma = x[ls].exp();
        let m = T::from_usize_lossy(l.m);
        let mut d_ls = grad[ls] + m;
        for i in l.v() {
            d_ls = d_ls + grad[i] * q[i];
            grad[i] = grad[i] * sigma;
        }
        grad[ls] = d_ls;
        Ok(lp + m * x[ls])
    }
}
