//! Gradient-based MCMC: multiple NUTS chains with windowed adaptation of a
//! diagonal metric and dual-averaging step size.
//!
//! Each chain uses a ChaCha8 generator seeded with the run seed and its chain
//! index as stream id, so a `(seed, config, target)` triple fully determines
//! the draws regardless of thread scheduling.

mod adapt;
mod nuts;
mod rwm;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::LogDensity;
use crate::scalar::Real;

use adapt::{DualAveraging, VarianceEstimator, WindowSchedule};
use nuts::{Integrator, PhasePoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    #[default]
    Nuts,
    RandomWalk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub chains: usize,
    /// Iterations per chain, warmup included.
    pub iterations: usize,
    pub warmup: usize,
    pub seed: u64,
    pub target_accept: f64,
    /// Upper bound on leapfrog steps per NUTS transition.
    pub max_leapfrog: usize,
    /// Post-warmup divergent-transition fraction above which the run fails.
    pub max_divergence_rate: f64,
    /// Initial values are drawn uniformly from `(-init_radius, init_radius)`.
    pub init_radius: f64,
    pub kind: SamplerKind,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            iterations: 4000,
            warmup: 2000,
            seed: 20210501,
            target_accept: 0.8,
            max_leapfrog: 1023,
            max_divergence_rate: 0.1,
            init_radius: 2.0,
            kind: SamplerKind::Nuts,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        let bad = |m: &str| Err(SamplerError::InvalidConfig(m.to_string()));
        if self.chains < 2 {
            return bad("need at least 2 chains");
        }
        if self.warmup >= self.iterations {
            return bad("warmup must be smaller than iterations");
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return bad("target_accept must lie in (0, 1)");
        }
        if self.max_leapfrog == 0 {
            return bad("max_leapfrog must be positive");
        }
        if !(self.init_radius > 0.0) {
            return bad("init_radius must be positive");
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        self.iterations - self.warmup
    }

    /// Deepest tree whose total leapfrog count `2^d - 1` fits `max_leapfrog`.
    fn max_depth(&self) -> usize {
        let mut d = 0;
        while (1usize << (d + 1)) - 1 <= self.max_leapfrog && d < 30 {
            d += 1;
        }
        d
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SamplerError {
    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(String),
    #[error("chain {chain}: no finite starting point found")]
    NonFiniteStart { chain: usize },
    #[error("{divergences} of {draws} post-warmup transitions diverged (limit {limit})")]
    DivergenceRateExceeded {
        divergences: usize,
        draws: usize,
        limit: f64,
    },
}

/// Per-chain post-warmup statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    pub step_size: f64,
    pub inv_metric: Vec<f64>,
    pub mean_accept_stat: f64,
    pub divergences: usize,
    pub mean_tree_depth: f64,
    pub total_leapfrog: usize,
}

/// Retained draws on the unconstrained scale, laid out chain-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawsMatrix<T> {
    chains: usize,
    per_chain: usize,
    dim: usize,
    values: Vec<T>,
    names: Vec<String>,
    stats: Vec<ChainStats>,
}

impl<T: Real> DrawsMatrix<T> {
    pub fn from_chains(chains: Vec<Vec<Vec<T>>>, names: Vec<String>) -> Self {
        let per_chain = chains.first().map_or(0, |c| c.len());
        let dim = names.len();
        let mut values = Vec::with_capacity(chains.len() * per_chain * dim);
        for c in &chains {
            assert_eq!(c.len(), per_chain, "ragged chains");
            for d in c {
                assert_eq!(d.len(), dim, "draw dimension");
                values.extend_from_slice(d);
            }
        }
        Self {
            chains: chains.len(),
            per_chain,
            dim,
            values,
            names,
            stats: vec![],
        }
    }

    pub fn chains(&self) -> usize {
        self.chains
    }

    pub fn draws_per_chain(&self) -> usize {
        self.per_chain
    }

    /// Total retained draws `R`.
    pub fn total(&self) -> usize {
        self.chains * self.per_chain
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn stats(&self) -> &[ChainStats] {
        &self.stats
    }

    pub fn draw(&self, chain: usize, iter: usize) -> &[T] {
        let s = (chain * self.per_chain + iter) * self.dim;
        &self.values[s..s + self.dim]
    }

    /// Draw `r` in chain-major order over all chains.
    pub fn flat_draw(&self, r: usize) -> &[T] {
        &self.values[r * self.dim..(r + 1) * self.dim]
    }

    /// All draws of one parameter, split by chain.
    pub fn param_chains(&self, p: usize) -> Vec<Vec<T>> {
        (0..self.chains)
            .map(|c| (0..self.per_chain).map(|i| self.draw(c, i)[p]).collect())
            .collect()
    }

    /// Applies a same-dimension map to every draw (e.g. a change of
    /// coordinates).
    pub fn map_draws(mut self, f: impl Fn(&[T]) -> Vec<T>) -> Self {
        if self.dim == 0 {
            return self;
        }
        let mapped: Vec<T> = self.values.chunks_exact(self.dim).flat_map(f).collect();
        assert_eq!(mapped.len(), self.values.len(), "map changed the dimension");
        self.values = mapped;
        self
    }

    /// Copy with one extra column computed from each draw.
    pub fn with_derived(&self, name: &str, f: impl Fn(&[T]) -> T) -> Self {
        let mut values = Vec::with_capacity(self.values.len() + self.total());
        for d in self.values.chunks_exact(self.dim.max(1)).take(self.total()) {
            values.extend_from_slice(d);
            values.push(f(d));
        }
        let mut names = self.names.clone();
        names.push(name.to_string());
        Self {
            dim: self.dim + 1,
            values,
            names,
            ..self.clone()
        }
    }

    pub fn divergences(&self) -> usize {
        self.stats.iter().map(|s| s.divergences).sum()
    }
}

/// Runs `config.chains` independent chains in parallel.
pub fn run_chains<T: Real, D: LogDensity<T>>(
    target: &D,
    names: Vec<String>,
    config: &SamplerConfig,
) -> Result<DrawsMatrix<T>, SamplerError> {
    config.validate()?;
    if names.len() != target.dim() {
        return Err(SamplerError::InvalidConfig(format!(
            "{} names for a {}-dimensional target",
            names.len(),
            target.dim()
        )));
    }
    let results: Vec<(Vec<Vec<T>>, ChainStats)> = (0..config.chains)
        .into_par_iter()
        .map(|c| run_chain(target, config, c))
        .collect::<Result<_, _>>()?;
    let (chains, stats): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let mut draws = DrawsMatrix::from_chains(chains, names);
    draws.stats = stats;
    let total = draws.total();
    let div = draws.divergences();
    if div as f64 > config.max_divergence_rate * total as f64 {
        return Err(SamplerError::DivergenceRateExceeded {
            divergences: div,
            draws: total,
            limit: config.max_divergence_rate,
        });
    }
    Ok(draws)
}

fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

fn initial_point<T: Real, D: LogDensity<T>>(
    target: &D,
    config: &SamplerConfig,
    chain: usize,
    rng: &mut ChaCha8Rng,
) -> Result<PhasePoint<T>, SamplerError> {
    let r = config.init_radius;
    for _ in 0..100 {
        let q: Vec<T> = (0..target.dim())
            .map(|_| T::lit(rng.random_range(-r..r)))
            .collect();
        if let Some(z) = PhasePoint::new(target, q) {
            return Ok(z);
        }
    }
    Err(SamplerError::NonFiniteStart { chain })
}

fn run_chain<T: Real, D: LogDensity<T>>(
    target: &D,
    config: &SamplerConfig,
    chain: usize,
) -> Result<(Vec<Vec<T>>, ChainStats), SamplerError> {
    let mut rng = chain_rng(config.seed, chain);
    let z = initial_point(target, config, chain, &mut rng)?;
    match config.kind {
        SamplerKind::Nuts => Ok(run_nuts(target, config, z, &mut rng)),
        SamplerKind::RandomWalk => Ok(run_rwm(target, config, z, &mut rng)),
    }
}

fn run_nuts<T: Real, D: LogDensity<T>>(
    target: &D,
    config: &SamplerConfig,
    mut z: PhasePoint<T>,
    rng: &mut ChaCha8Rng,
) -> (Vec<Vec<T>>, ChainStats) {
    let dim = target.dim();
    let max_depth = config.max_depth();
    let mut integ = Integrator {
        target,
        inv_metric: vec![T::one(); dim],
        step: T::one(),
    };
    integ.init_step(&z, rng);
    let mut da = DualAveraging::new(integ.step.as_f64(), config.target_accept);
    let schedule = WindowSchedule::new(config.warmup);
    let mut var = VarianceEstimator::new(dim);

    for it in 0..config.warmup {
        let t = integ.transition(&mut z, max_depth, rng);
        integ.step = T::lit(da.update(t.accept_stat));
        if schedule.in_window(it) {
            var.add(&z.q);
        }
        if schedule.is_window_end(it) {
            integ.inv_metric = var.regularized().into_iter().map(T::lit).collect();
            var.reset();
            integ.init_step(&z, rng);
            da.restart(integ.step.as_f64());
        }
    }
    if config.warmup > 0 {
        integ.step = T::lit(da.final_step());
    }

    let mut draws = Vec::with_capacity(config.retained());
    let mut stats = ChainStats {
        step_size: integ.step.as_f64(),
        inv_metric: integ.inv_metric.iter().map(|m| m.as_f64()).collect(),
        mean_accept_stat: 0.0,
        divergences: 0,
        mean_tree_depth: 0.0,
        total_leapfrog: 0,
    };
    for _ in 0..config.retained() {
        let t = integ.transition(&mut z, max_depth, rng);
        stats.mean_accept_stat += t.accept_stat;
        stats.mean_tree_depth += t.depth as f64;
        stats.divergences += t.divergent as usize;
        stats.total_leapfrog += t.n_leapfrog;
        draws.push(z.q.clone());
    }
    let n = config.retained() as f64;
    stats.mean_accept_stat /= n;
    stats.mean_tree_depth /= n;
    (draws, stats)
}

fn run_rwm<T: Real, D: LogDensity<T>>(
    target: &D,
    config: &SamplerConfig,
    z: PhasePoint<T>,
    rng: &mut ChaCha8Rng,
) -> (Vec<Vec<T>>, ChainStats) {
    let dim = target.dim();
    let mut q = z.q;
    let mut logp = z.logp;
    let mut grad = vec![T::zero(); dim];
    let mut var_diag = vec![1.0; dim];
    let mut log_scale = (2.38 / (dim as f64).sqrt()).ln();
    let schedule = WindowSchedule::new(config.warmup);
    let mut var = VarianceEstimator::new(dim);
    for it in 0..config.warmup {
        let a = rwm::step(target, &mut q, &mut logp, log_scale.exp(), &var_diag, &mut grad, rng);
        log_scale += (a - rwm::TARGET_ACCEPT) / ((it + 1) as f64).powf(0.6);
        if schedule.in_window(it) {
            var.add(&q);
        }
        if schedule.is_window_end(it) {
            var_diag = var.regularized();
            var.reset();
        }
    }
    let scale = log_scale.exp();
    let mut draws = Vec::with_capacity(config.retained());
    let mut acc = 0.0;
    for _ in 0..config.retained() {
        acc += rwm::step(target, &mut q, &mut logp, scale, &var_diag, &mut grad, rng);
        draws.push(q.clone());
    }
    let stats = ChainStats {
        step_size: scale,
        inv_metric: var_diag,
        mean_accept_stat: acc / config.retained() as f64,
        divergences: 0,
        mean_tree_depth: 0.0,
        total_leapfrog: 0,
    };
    (draws, stats)
}
