//! Multinomial No-U-Turn transition with a diagonal metric and the
//! generalized (momentum-sharp) termination criterion.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::model::LogDensity;
use crate::scalar::{log_sum_exp, Real};

const MAX_DELTA_H: f64 = 1000.0;

/// Position, momentum and cached log density / gradient.
#[derive(Debug, Clone)]
pub(crate) struct PhasePoint<T> {
    pub q: Vec<T>,
    pub p: Vec<T>,
    pub grad: Vec<T>,
    pub logp: T,
}

impl<T: Real> PhasePoint<T> {
    pub fn new<D: LogDensity<T> + ?Sized>(target: &D, q: Vec<T>) -> Option<Self> {
        let mut grad = vec![T::zero(); q.len()];
        let logp = target.logp_grad(&q, &mut grad).ok()?;
        logp.is_finite().then(|| Self {
            p: vec![T::zero(); q.len()],
            q,
            grad,
            logp,
        })
    }
}

/// Sampling state shared by all transitions of one chain.
pub(crate) struct Integrator<'a, T, D: ?Sized> {
    pub target: &'a D,
    pub inv_metric: Vec<T>,
    pub step: T,
}

pub(crate) struct Transition {
    pub accept_stat: f64,
    pub divergent: bool,
    pub depth: usize,
    pub n_leapfrog: usize,
}

struct TreeState {
    n_leapfrog: usize,
    sum_metro_prob: f64,
    divergent: bool,
}

impl<T: Real, D: LogDensity<T> + ?Sized> Integrator<'_, T, D> {
    pub fn hamiltonian(&self, z: &PhasePoint<T>) -> f64 {
        let kinetic: T = z
            .p
            .iter()
            .zip(&self.inv_metric)
            .map(|(&p, &m)| m * p * p)
            .sum();
        let h = (T::lit(0.5) * kinetic - z.logp).as_f64();
        if h.is_nan() {
            f64::INFINITY
        } else {
            h
        }
    }

    pub fn sample_momentum<R: Rng>(&self, z: &mut PhasePoint<T>, rng: &mut R) {
        for (p, &m) in z.p.iter_mut().zip(&self.inv_metric) {
            let n: f64 = rng.sample(StandardNormal);
            *p = T::lit(n) / m.sqrt();
        }
    }

    fn p_sharp(&self, p: &[T]) -> Vec<T> {
        p.iter().zip(&self.inv_metric).map(|(&p, &m)| m * p).collect()
    }

    /// One leapfrog step of signed size `eps`. Non-finite densities are
    /// recorded as `-inf` so the step is treated as divergent.
    pub fn leapfrog(&self, z: &mut PhasePoint<T>, eps: T) {
        let half = T::lit(0.5) * eps;
        for (p, &g) in z.p.iter_mut().zip(&z.grad) {
            *p = *p + half * g;
        }
        for ((q, &p), &m) in z.q.iter_mut().zip(&z.p).zip(&self.inv_metric) {
            *q = *q + eps * m * p;
        }
        match self.target.logp_grad(&z.q, &mut z.grad) {
            Ok(lp) if lp.is_finite() => {
                z.logp = lp;
                for (p, &g) in z.p.iter_mut().zip(&z.grad) {
                    *p = *p + half * g;
                }
            }
            _ => {
                z.logp = T::neg_infinity();
            }
        }
    }

    /// Heuristic initial step size: double or halve until the one-step
    /// acceptance crosses 0.8.
    pub fn init_step<R: Rng>(&mut self, z0: &PhasePoint<T>, rng: &mut R) {
        let mut z = z0.clone();
        self.sample_momentum(&mut z, rng);
        let h0 = self.hamiltonian(&z);
        self.leapfrog(&mut z, self.step);
        let delta = h0 - self.hamiltonian(&z);
        let up = delta > 0.8f64.ln();
        for _ in 0..100 {
            let mut z = z0.clone();
            self.sample_momentum(&mut z, rng);
            let h0 = self.hamiltonian(&z);
            self.leapfrog(&mut z, self.step);
            let delta = h0 - self.hamiltonian(&z);
            if (up && !(delta > 0.8f64.ln())) || (!up && !(delta < 0.8f64.ln())) {
                break;
            }
            self.step = if up {
                self.step * T::lit(2.0)
            } else {
                self.step * T::lit(0.5)
            };
            if self.step.as_f64() > 1e7 || self.step.as_f64() < 1e-12 {
                self.step = self.step.max(T::lit(1e-12)).min(T::lit(1e7));
                break;
            }
        }
    }

    /// Draws the next state from `current` and overwrites it.
    pub fn transition<R: Rng>(
        &self,
        current: &mut PhasePoint<T>,
        max_depth: usize,
        rng: &mut R,
    ) -> Transition {
        self.sample_momentum(current, rng);
        let h0 = self.hamiltonian(current);

        let mut z_fwd = current.clone();
        let mut z_bck = current.clone();
        let mut z_sample = current.clone();
        let mut z_propose = current.clone();

        let p_sharp0 = self.p_sharp(&current.p);
        let mut p_fwd_fwd = current.p.clone();
        let mut p_sharp_fwd_fwd = p_sharp0.clone();
        let mut p_fwd_bck = current.p.clone();
        let mut p_sharp_fwd_bck = p_sharp0.clone();
        let mut p_bck_fwd = current.p.clone();
        let mut p_sharp_bck_fwd = p_sharp0.clone();
        let mut p_bck_bck = current.p.clone();
        let mut p_sharp_bck_bck = p_sharp0;

        let mut rho = current.p.clone();
        let mut log_sum_weight = 0.0f64;
        let mut state = TreeState {
            n_leapfrog: 0,
            sum_metro_prob: 0.0,
            divergent: false,
        };
        let mut depth = 0;

        while depth < max_depth {
            let dim = rho.len();
            let mut rho_fwd = vec![T::zero(); dim];
            let mut rho_bck = vec![T::zero(); dim];
            let mut log_sum_weight_subtree = f64::NEG_INFINITY;

            let valid = if rng.random::<f64>() > 0.5 {
                rho_bck.clone_from(&rho);
                p_bck_fwd.clone_from(&p_fwd_bck);
                p_sharp_bck_fwd.clone_from(&p_sharp_fwd_bck);
                self.build_tree(
                    depth,
                    &mut z_fwd,
                    &mut z_propose,
                    &mut p_sharp_fwd_bck,
                    &mut p_sharp_fwd_fwd,
                    &mut rho_fwd,
                    &mut p_fwd_bck,
                    &mut p_fwd_fwd,
                    h0,
                    T::one(),
                    &mut log_sum_weight_subtree,
                    &mut state,
                    rng,
                )
            } else {
                rho_fwd.clone_from(&rho);
                p_fwd_bck.clone_from(&p_bck_fwd);
                p_sharp_fwd_bck.clone_from(&p_sharp_bck_fwd);
                self.build_tree(
                    depth,
                    &mut z_bck,
                    &mut z_propose,
                    &mut p_sharp_bck_fwd,
                    &mut p_sharp_bck_bck,
                    &mut rho_bck,
                    &mut p_bck_fwd,
                    &mut p_bck_bck,
                    h0,
                    -T::one(),
                    &mut log_sum_weight_subtree,
                    &mut state,
                    rng,
                )
            };
            if !valid {
                break;
            }
            depth += 1;

            if log_sum_weight_subtree > log_sum_weight {
                z_sample.clone_from(&z_propose);
            } else {
                let accept = (log_sum_weight_subtree - log_sum_weight).exp();
                if rng.random::<f64>() < accept {
                    z_sample.clone_from(&z_propose);
                }
            }
            log_sum_weight = log_sum_exp(&[log_sum_weight, log_sum_weight_subtree]);

            for ((r, &b), &f) in rho.iter_mut().zip(&rho_bck).zip(&rho_fwd) {
                *r = b + f;
            }
            let mut persist = criterion(&p_sharp_bck_bck, &p_sharp_fwd_fwd, &rho);
            let ext: Vec<T> = rho_bck.iter().zip(&p_fwd_bck).map(|(&a, &b)| a + b).collect();
            persist &= criterion(&p_sharp_bck_bck, &p_sharp_fwd_bck, &ext);
            let ext: Vec<T> = rho_fwd.iter().zip(&p_bck_fwd).map(|(&a, &b)| a + b).collect();
            persist &= criterion(&p_sharp_bck_fwd, &p_sharp_fwd_fwd, &ext);
            if !persist {
                break;
            }
        }

        *current = z_sample;
        Transition {
            accept_stat: if state.n_leapfrog > 0 {
                state.sum_metro_prob / state.n_leapfrog as f64
            } else {
                0.0
            },
            divergent: state.divergent,
            depth,
            n_leapfrog: state.n_leapfrog,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn build_tree<R: Rng>(
        &self,
        depth: usize,
        z: &mut PhasePoint<T>,
        z_propose: &mut PhasePoint<T>,
        p_sharp_beg: &mut Vec<T>,
        p_sharp_end: &mut Vec<T>,
        rho: &mut [T],
        p_beg: &mut Vec<T>,
        p_end: &mut Vec<T>,
        h0: f64,
        sign: T,
        log_sum_weight: &mut f64,
        state: &mut TreeState,
        rng: &mut R,
    ) -> bool {
        if depth == 0 {
            self.leapfrog(z, sign * self.step);
            state.n_leapfrog += 1;
            let h = self.hamiltonian(z);
            if h - h0 > MAX_DELTA_H {
                state.divergent = true;
            }
            *log_sum_weight = log_sum_exp(&[*log_sum_weight, h0 - h]);
            state.sum_metro_prob += if h0 - h > 0.0 { 1.0 } else { (h0 - h).exp() };
            z_propose.clone_from(z);
            *p_sharp_beg = self.p_sharp(&z.p);
            p_sharp_end.clone_from(p_sharp_beg);
            for (r, &p) in rho.iter_mut().zip(&z.p) {
                *r = *r + p;
            }
            p_beg.clone_from(&z.p);
            p_end.clone_from(p_beg);
            return !state.divergent;
        }

        let dim = rho.len();
        // initial subtree
        let mut p_init_end = vec![T::zero(); dim];
        let mut p_sharp_init_end = vec![T::zero(); dim];
        let mut rho_init = vec![T::zero(); dim];
        let mut log_sum_weight_init = f64::NEG_INFINITY;
        if !self.build_tree(
            depth - 1,
            z,
            z_propose,
            p_sharp_beg,
            &mut p_sharp_init_end,
            &mut rho_init,
            p_beg,
            &mut p_init_end,
            h0,
            sign,
            &mut log_sum_weight_init,
            state,
            rng,
        ) {
            return false;
        }

        // final subtree
        let mut z_propose_final = z.clone();
        let mut rho_final = vec![T::zero(); dim];
        let mut p_final_beg = vec![T::zero(); dim];
        let mut p_sharp_final_beg = vec![T::zero(); dim];
        let mut log_sum_weight_final = f64::NEG_INFINITY;
        if !self.build_tree(
            depth - 1,
            z,
            &mut z_propose_final,
            &mut p_sharp_final_beg,
            p_sharp_end,
            &mut rho_final,
            &mut p_final_beg,
            p_end,
            h0,
            sign,
            &mut log_sum_weight_final,
            state,
            rng,
        ) {
            return false;
        }

        let log_sum_weight_subtree = log_sum_exp(&[log_sum_weight_init, log_sum_weight_final]);
        *log_sum_weight = log_sum_exp(&[*log_sum_weight, log_sum_weight_subtree]);
        if log_sum_weight_final > log_sum_weight_subtree {
            *z_propose = z_propose_final;
        } else {
            let accept = (log_sum_weight_final - log_sum_weight_subtree).exp();
            if rng.random::<f64>() < accept {
                *z_propose = z_propose_final;
            }
        }

        let rho_subtree: Vec<T> = rho_init.iter().zip(&rho_final).map(|(&a, &b)| a + b).collect();
        for (r, &s) in rho.iter_mut().zip(&rho_subtree) {
            *r = *r + s;
        }
        let mut persist = criterion(p_sharp_beg, p_sharp_end, &rho_subtree);
        let ext: Vec<T> = rho_init.iter().zip(&p_final_beg).map(|(&a, &b)| a + b).collect();
        persist &= criterion(p_sharp_beg, &p_sharp_final_beg, &ext);
        let ext: Vec<T> = rho_final.iter().zip(&p_init_end).map(|(&a, &b)| a + b).collect();
        persist &= criterion(&p_sharp_init_end, p_sharp_end, &ext);
        persist
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Trajectory keeps expanding while both ends still move apart along `rho`.
fn criterion<T: Real>(p_sharp_minus: &[T], p_sharp_plus: &[T], rho: &[T]) -> bool {
    dot(p_sharp_plus, rho) > T::zero() && dot(p_sharp_minus, rho) > T::zero()
}
