use crate::scalar::Real;

/// Dual-averaging step-size adaptation.
#[derive(Debug, Clone)]
pub(crate) struct DualAveraging {
    mu: f64,
    s_bar: f64,
    x_bar: f64,
    counter: f64,
    delta: f64,
}

const GAMMA: f64 = 0.05;
const T0: f64 = 10.0;
const KAPPA: f64 = 0.75;

impl DualAveraging {
    pub fn new(step: f64, delta: f64) -> Self {
        Self {
            mu: (10.0 * step).ln(),
            s_bar: 0.0,
            x_bar: 0.0,
            counter: 0.0,
            delta,
        }
    }

    pub fn restart(&mut self, step: f64) {
        *self = Self::new(step, self.delta);
    }

    /// Feeds one acceptance statistic and returns the next step size.
    pub fn update(&mut self, accept_stat: f64) -> f64 {
        self.counter += 1.0;
        let a = accept_stat.min(1.0);
        let eta = 1.0 / (self.counter + T0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.delta - a);
        let x = self.mu - self.s_bar * self.counter.sqrt() / GAMMA;
        let x_eta = self.counter.powf(-KAPPA);
        self.x_bar = (1.0 - x_eta) * self.x_bar + x_eta * x;
        x.exp()
    }

    pub fn final_step(&self) -> f64 {
        self.x_bar.exp()
    }
}

/// Welford accumulator for the diagonal of the posterior covariance.
#[derive(Debug, Clone)]
pub(crate) struct VarianceEstimator {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl VarianceEstimator {
    pub fn new(dim: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn add<T: Real>(&mut self, q: &[T]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), x) in self.mean.iter_mut().zip(&mut self.m2).zip(q) {
            let x = x.as_f64();
            let d = x - *m;
            *m += d / n;
            *s += d * (x - *m);
        }
    }

    /// Regularized variance, shrunk towards `1e-3` for short windows.
    pub fn regularized(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.m2
            .iter()
            .map(|s| {
                let var = s / (n - 1.0);
                (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
            })
            .collect()
    }

    pub fn reset(&mut self) {
        *self = Self::new(self.mean.len());
    }
}

/// Warmup schedule: an initial fast phase, doubling slow windows that
/// estimate the metric, and a terminal fast phase.
#[derive(Debug, Clone)]
pub(crate) struct WindowSchedule {
    /// `(start, end)` iteration ranges (end exclusive) of the slow windows.
    windows: Vec<(usize, usize)>,
}

impl WindowSchedule {
    pub fn new(warmup: usize) -> Self {
        let (mut init, mut term, mut base) = (75usize, 50usize, 25usize);
        if warmup < 20 {
            return Self { windows: vec![] };
        }
        if init + term + base > warmup {
            init = (0.15 * warmup as f64) as usize;
            term = (0.1 * warmup as f64) as usize;
            base = warmup - init - term;
        }
        let end_slow = warmup - term;
        let mut windows = Vec::new();
        let mut start = init;
        let mut size = base;
        while start < end_slow {
            let mut end = start + size;
            // a following window that would not fit at double size is merged in
            if end + 2 * size > end_slow {
                end = end_slow;
            }
            windows.push((start, end));
            start = end;
            size *= 2;
        }
        Self { windows }
    }

    pub fn in_window(&self, iter: usize) -> bool {
        self.windows.iter().any(|&(s, e)| iter >= s && iter < e)
    }

    pub fn is_window_end(&self, iter: usize) -> bool {
        self.windows.iter().any(|&(_, e)| iter + 1 == e)
    }

    #[cfg(test)]
    pub fn windows(&self) -> &[(usize, usize)] {
        &self.windows
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule_for_1000_warmup() {
        let w = WindowSchedule::new(1000);
        assert_eq!(
            w.windows(),
            &[(75, 100), (100, 150), (150, 250), (250, 450), (450, 950)]
        );
        assert!(w.is_window_end(949));
        assert!(!w.in_window(960));
    }

    #[test]
    fn short_warmup_schedules() {
        assert!(WindowSchedule::new(10).windows().is_empty());
        let w = WindowSchedule::new(100);
        assert_eq!(w.windows(), &[(15, 90)]);
    }

    #[test]
    fn dual_averaging_converges_to_target() {
        // acceptance decays with step size like exp(-step)
        let mut da = DualAveraging::new(1.0, 0.8);
        let mut eps = 1.0f64;
        for _ in 0..2000 {
            eps = da.update((-eps).exp());
        }
        let fin = da.final_step();
        assert!(((-fin).exp() - 0.8).abs() < 0.01, "{fin}");
    }

    #[test]
    fn welford_matches_two_pass() {
        let xs = [1.0f64, 4.0, 2.5, -3.0, 0.5];
        let mut v = VarianceEstimator::new(1);
        for x in xs {
            v.add(&[x]);
        }
        let mean = xs.iter().sum::<f64>() / 5.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        let want = (5.0 / 10.0) * var + 1e-3 * 0.5;
        assert!((v.regularized()[0] - want).abs() < 1e-12);
    }
}
