//! Adaptive random-walk Metropolis, for gradient-free debugging.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::model::LogDensity;
use crate::scalar::Real;

pub(crate) const TARGET_ACCEPT: f64 = 0.234;

pub(crate) fn step<T: Real, D: LogDensity<T> + ?Sized, R: Rng>(
    target: &D,
    q: &mut Vec<T>,
    logp: &mut T,
    scale: f64,
    var: &[f64],
    grad_buf: &mut [T],
    rng: &mut R,
) -> f64 {
    let proposal: Vec<T> = q
        .iter()
        .zip(var)
        .map(|(&x, &v)| {
            let z: f64 = rng.sample(StandardNormal);
            x + T::lit(scale * v.sqrt() * z)
        })
        .collect();
    let lp = match target.logp_grad(&proposal, grad_buf) {
        Ok(lp) if lp.is_finite() => lp,
        _ => return 0.0,
    };
    let accept = (lp - *logp).as_f64().exp().min(1.0);
    if rng.random::<f64>() < accept {
        *q = proposal;
        *logp = lp;
    }
    accept
}
