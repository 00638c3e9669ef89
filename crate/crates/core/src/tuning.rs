//! Adaptive proposal scales with diminishing, burn-in-only adaptation.

use serde::{Deserialize, Serialize};

pub const TARGET_LOW: f64 = 0.20;
pub const TARGET_HIGH: f64 = 0.25;
/// Fewest attempts a rate is computed from.
pub const MIN_WINDOW: u64 = 20;

/// Acceptance counts over one phase of the chain.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Counter {
    pub attempts: u64,
    pub accepts: u64,
}

impl Counter {
    pub fn record(&mut self, accepted: bool) {
        self.attempts += 1;
        self.accepts += accepted as u64;
    }

    pub fn rate(&self) -> Option<f64> {
        (self.attempts > 0).then(|| self.accepts as f64 / self.attempts as f64)
    }
}

/// Which phase of the chain acceptance is being recorded in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Burn,
    /// The last quarter of burn-in.
    BurnTail,
    Sampling,
}

/// One adapted (or merely monitored) proposal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tuner {
    /// Log of the tuned quantity.
    pub log_scale: f64,
    /// True when a larger parameter raises acceptance.
    pub inverted: bool,
    /// Smallest allowed log scale.
    pub floor: f64,
    pub window: Counter,
    pub tail: Counter,
    pub sampling: Counter,
}

impl Tuner {
    pub fn new(scale: f64) -> Self {
        Tuner {
            log_scale: scale.ln(),
            inverted: false,
            floor: f64::NEG_INFINITY,
            window: Counter::default(),
            tail: Counter::default(),
            sampling: Counter::default(),
        }
    }

    pub fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    pub fn record(&mut self, phase: Phase, accepted: bool) {
        match phase {
            Phase::Burn => self.window.record(accepted),
            Phase::BurnTail => {
                self.window.record(accepted);
                self.tail.record(accepted);
            }
            Phase::Sampling => self.sampling.record(accepted),
        }
    }

    /// Nudge the log scale from the window's rate once the window holds
    /// [`MIN_WINDOW`] attempts; sparse moves pool over several batches.
    pub fn adapt(&mut self, batch_index: usize) {
        if self.window.attempts < MIN_WINDOW {
            return;
        }
        if let Some(rate) = self.window.rate() {
            self.log_scale = adapt_log_scale(self.log_scale, rate, batch_index, self.inverted).max(self.floor);
        }
        self.window = Counter::default();
    }
}

/// Robbins-Monro step on `log_scale`: proportional to the distance of the
/// batch rate from the middle of the target band, with gain
/// `2 min(1, 10 / sqrt(batch_index))`, capped at 1, and no move inside the
/// band. `inverted` flips the direction.
pub fn adapt_log_scale(log_scale: f64, rate: f64, batch_index: usize, inverted: bool) -> f64 {
    if (TARGET_LOW..=TARGET_HIGH).contains(&rate) {
        return log_scale;
    }
    let gain = 2.0 * (10.0 / (batch_index.max(1) as f64).sqrt()).min(1.0);
    let mid = 0.5 * (TARGET_LOW + TARGET_HIGH);
    let step = (gain * (rate - mid)).clamp(-1.0, 1.0);
    if inverted {
        log_scale - step
    } else {
        log_scale + step
    }
}

/// Every proposal parameter of a chain. Scales are proposal variances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningState {
    pub p: usize,
    /// `log(zeta - p - 1)`.
    pub zeta: Tuner,
    /// IRLS scale per response and variance term.
    pub irls: Vec<Vec<Tuner>>,
    pub c_beta: Tuner,
    pub sigma2_r: Tuner,
    pub c_alpha: Vec<Tuner>,
    pub sigma2: Vec<Tuner>,
    /// Monitored only.
    pub gamma: Tuner,
    pub delta: Tuner,
    pub alpha_walk: Tuner,
    /// Whether `c_alpha` moves are random walks (and so adapted).
    pub c_alpha_adapted: bool,
    pub batch: usize,
    pub batches_done: usize,
    pub frozen: bool,
}

impl TuningState {
    pub fn new(p: usize, variance_terms: usize, sigma2: &[f64], c_alpha_adapted: bool) -> Self {
        // start at the floor: a large zeta cannot leave a poor starting R
        let mut zeta = Tuner::new(2.0);
        zeta.inverted = true;
        zeta.floor = 2f64.ln();
        // a narrow IRLS proposal cannot leave a state the data disfavour
        let mut irls = Tuner::new(1.0);
        irls.floor = 0.01f64.ln();
        TuningState {
            p,
            zeta,
            irls: vec![vec![irls; variance_terms]; p],
            c_beta: Tuner::new(1.0),
            sigma2_r: Tuner::new(0.01),
            c_alpha: vec![Tuner::new(0.25); p],
            sigma2: sigma2.iter().map(|s| Tuner::new((0.1 * s).powi(2))).collect(),
            gamma: Tuner::new(1.0),
            delta: Tuner::new(1.0),
            alpha_walk: Tuner::new(1.0),
            c_alpha_adapted,
            batch: 25,
            batches_done: 0,
            frozen: false,
        }
    }

    pub fn zeta_value(&self) -> f64 {
        self.p as f64 + 1.0 + self.zeta.scale()
    }

    /// Adapted tuners with their report names.
    pub fn adapted(&self) -> Vec<(String, &Tuner)> {
        let mut out = Vec::new();
        if self.p > 1 {
            out.push(("zeta".to_string(), &self.zeta));
            out.push(("sigma2_r".to_string(), &self.sigma2_r));
        }
        for (j, row) in self.irls.iter().enumerate() {
            for (k, t) in row.iter().enumerate() {
                out.push((format!("irls[{},{}]", j + 1, k + 1), t));
            }
        }
        out.push(("c_beta".to_string(), &self.c_beta));
        if self.c_alpha_adapted {
            for (j, t) in self.c_alpha.iter().enumerate() {
                out.push((format!("c_alpha[{}]", j + 1), t));
            }
        }
        for (j, t) in self.sigma2.iter().enumerate() {
            out.push((format!("sigma2[{}]", j + 1), t));
        }
        out
    }

    fn adapted_mut(&mut self) -> Vec<&mut Tuner> {
        let mut out: Vec<&mut Tuner> = vec![&mut self.zeta, &mut self.sigma2_r, &mut self.c_beta];
        out.extend(self.irls.iter_mut().flatten());
        if self.c_alpha_adapted {
            out.extend(self.c_alpha.iter_mut());
        }
        out.extend(self.sigma2.iter_mut());
        out
    }

    /// End of one adaptation batch.
    pub fn adapt(&mut self) {
        if self.frozen {
            return;
        }
        self.batches_done += 1;
        let b = self.batches_done;
        for t in self.adapted_mut() {
            t.adapt(b);
        }
        self.gamma.window = Counter::default();
        self.delta.window = Counter::default();
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }
}
