//! Correlation-matrix priors: link functions, the shadow prior, the
//! inverse-Wishart separation proposal for `R`, and the Dirichlet-process
//! clustering updates.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{self, normal_logpdf, std_normal};
use crate::error::{ModelError, Result};
use crate::linalg;
use crate::model::{CorrelationModelSpec, CorrelationVariant, Link};

pub fn fisher_z(r: f64) -> Result<f64> {
    if !(r.abs() < 1.0) {
        return Err(ModelError::CorrelationDomain(r));
    }
    Ok(r.atanh())
}

pub fn inv_fisher_z(z: f64) -> f64 {
    z.tanh()
}

/// Derivative of the link at `r`.
pub fn link_jacobian(link: Link, r: f64) -> Result<f64> {
    if !(r.abs() < 1.0) {
        return Err(ModelError::CorrelationDomain(r));
    }
    Ok(match link {
        Link::FisherZ => 1.0 / ((1.0 - r) * (1.0 + r)),
        Link::Identity => 1.0,
    })
}

pub fn link_apply(link: Link, r: f64) -> Result<f64> {
    match link {
        Link::FisherZ => fisher_z(r),
        Link::Identity if r.abs() < 1.0 => Ok(r),
        Link::Identity => Err(ModelError::CorrelationDomain(r)),
    }
}

/// Upper-triangular pairs `(k, l)`, `k < l`, in row-major order.
pub fn pairs(p: usize) -> Vec<(usize, usize)> {
    (0..p).flat_map(|k| (k + 1..p).map(move |l| (k, l))).collect()
}

/// Index of the symmetric cell `(a, b)` in an upper-triangular `g x g` table.
pub fn pair_cell(a: usize, b: usize, g: usize) -> usize {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    a * g - a * (a + 1) / 2 + b
}

/// Latent layer between the correlations and their cluster structure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowState {
    /// One entry per correlation, on the link scale.
    pub theta: Vec<f64>,
    /// Cluster means.
    pub mu: Vec<f64>,
    pub sigma2_r: f64,
    /// 0-based labels: per correlation (grouped correlations), per variable
    /// (grouped variables), empty for the common model.
    pub labels: Vec<usize>,
    pub sticks: Vec<f64>,
    pub weights: Vec<f64>,
    pub concentration: f64,
}

impl ShadowState {
    pub fn new(spec: &CorrelationModelSpec, p: usize) -> Self {
        let d = p * p.saturating_sub(1) / 2;
        let h = spec.variant.n_components();
        let n_labels = match spec.variant {
            CorrelationVariant::Common => 0,
            CorrelationVariant::GroupedCorrelations { .. } => d,
            CorrelationVariant::GroupedVariables { .. } => p,
        };
        // v_h = 1/(H-h+1) gives equal weights
        let sticks: Vec<f64> = (0..h).map(|i| 1.0 / (h - i) as f64).collect();
        ShadowState {
            theta: vec![0.0; d],
            mu: vec![0.0; spec.variant.n_means()],
            sigma2_r: 0.25,
            labels: vec![0; n_labels],
            weights: stick_weights(&sticks),
            sticks,
            concentration: 2.5,
        }
    }

    /// Cluster mean index of correlation `c = (k, l)`.
    pub fn cluster_of(&self, variant: &CorrelationVariant, c: usize, k: usize, l: usize) -> usize {
        match *variant {
            CorrelationVariant::Common => 0,
            CorrelationVariant::GroupedCorrelations { .. } => self.labels[c],
            CorrelationVariant::GroupedVariables { groups } => {
                pair_cell(self.labels[k], self.labels[l], groups)
            }
        }
    }

    fn clusters(&self, variant: &CorrelationVariant, p: usize) -> Vec<usize> {
        pairs(p)
            .into_iter()
            .enumerate()
            .map(|(c, (k, l))| self.cluster_of(variant, c, k, l))
            .collect()
    }
}

/// `w_h = v_h prod_{l<h} (1 - v_l)` with the last weight taking the
/// remaining mass.
pub fn stick_weights(sticks: &[f64]) -> Vec<f64> {
    let h = sticks.len();
    let mut w = Vec::with_capacity(h);
    let mut rest = 1.0;
    for (i, v) in sticks.iter().enumerate() {
        if i + 1 == h {
            w.push(rest);
        } else {
            w.push(v * rest);
            rest *= 1.0 - v;
        }
    }
    w
}

/// Unnormalized log shadow prior of `R`: the normal kernel of each linked
/// correlation around its `theta` plus the log link Jacobian; `-inf` outside
/// the positive definite cone.
pub fn log_prior_r(r: &DMatrix<f64>, shadow: &ShadowState, spec: &CorrelationModelSpec) -> f64 {
    if !linalg::is_correlation(r) {
        return f64::NEG_INFINITY;
    }
    let mut acc = 0.0;
    for (c, (k, l)) in pairs(r.nrows()).into_iter().enumerate() {
        let v = r[(k, l)];
        let (Ok(g), Ok(j)) = (link_apply(spec.link, v), link_jacobian(spec.link, v)) else {
            return f64::NEG_INFINITY;
        };
        let d = g - shadow.theta[c];
        acc += -d * d / (2.0 * spec.tau2) + j.ln();
    }
    acc
}

/// `log |D|^{(p-1)/2}` for the diagonal `d` of `D`.
pub fn separation_log_jacobian(d: &[f64]) -> f64 {
    let p = d.len() as f64;
    0.5 * (p - 1.0) * d.iter().map(|v| v.ln()).sum::<f64>()
}

/// Conditional target of `R` given everything else.
pub struct CorrelationTarget<'a> {
    pub n: usize,
    /// `sum_i S_i^{-1/2} (y_i - mu_i)(y_i - mu_i)' S_i^{-1/2}`.
    pub scatter: &'a DMatrix<f64>,
    pub shadow: &'a ShadowState,
    pub spec: &'a CorrelationModelSpec,
}

impl CorrelationTarget<'_> {
    pub fn log_density(&self, r: &DMatrix<f64>) -> f64 {
        let prior = log_prior_r(r, self.shadow, self.spec);
        if prior == f64::NEG_INFINITY {
            return prior;
        }
        let Some(ch) = linalg::cholesky(r) else {
            return f64::NEG_INFINITY;
        };
        -0.5 * self.n as f64 * linalg::log_det(&ch) - 0.5 * linalg::trace_inv_product(&ch, self.scatter)
            + prior
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RMove {
    pub r: DMatrix<f64>,
    pub accepted: bool,
    /// The proposal could not be formed (non positive definite draw).
    pub failed: bool,
}

/// Auxiliary scales `d_k` are given the inverse-gamma law that the diagonal
/// of `IW(n + zeta, scatter + (zeta - p - 1) I)` would have; the law depends
/// on nothing that changes during the move.
fn aux_params(scatter: &DMatrix<f64>, n: usize, zeta: f64) -> Vec<(f64, f64)> {
    let p = scatter.nrows() as f64;
    let shape = 0.5 * (n as f64 + zeta - p + 1.0);
    (0..scatter.nrows())
        .map(|k| (shape, 0.5 * (scatter[(k, k)] + zeta - p - 1.0)))
        .collect()
}

fn aux_log_density(d: &[f64], params: &[(f64, f64)]) -> f64 {
    d.iter()
        .zip(params)
        .map(|(v, (a, b))| -(a + 1.0) * v.ln() - b / v)
        .sum()
}

/// One Metropolis-Hastings update of `R` on the space extended by the
/// auxiliary scales `D`. A fresh `D` is drawn from its conditional, then
/// `E = D^{1/2} R D^{1/2}` is moved by `E' ~ IW(n + zeta, scatter +
/// (zeta - p - 1) E)` and split back into `(D', R')`. `extra` adds any further
/// `R`-dependent log terms of the conditional.
pub fn propose_and_accept_r<G: Rng + ?Sized>(
    target: &CorrelationTarget<'_>,
    extra: &dyn Fn(&DMatrix<f64>) -> f64,
    current: &DMatrix<f64>,
    zeta: f64,
    rng: &mut G,
) -> RMove {
    let p = current.nrows();
    let keep = |accepted, failed| RMove {
        r: current.clone(),
        accepted,
        failed,
    };
    if p < 2 {
        return keep(true, false);
    }
    let pf = p as f64;
    let df = target.n as f64 + zeta;
    let params = aux_params(target.scatter, target.n, zeta);
    let d: Vec<f64> = params
        .iter()
        .map(|&(a, b)| distributions::inverse_gamma(rng, a, b))
        .collect();
    let e = linalg::compose_covariance(&d, current);
    let psi = target.scatter + &e * (zeta - pf - 1.0);
    let Some(e_new) = distributions::inverse_wishart(rng, df, &psi) else {
        return keep(false, true);
    };
    let (d_new, r_new) = linalg::split_covariance(&e_new);
    let psi_rev = target.scatter + &e_new * (zeta - pf - 1.0);
    let (Some(q_fwd), Some(q_rev)) = (
        distributions::inverse_wishart_log_kernel(&e_new, df, &psi),
        distributions::inverse_wishart_log_kernel(&e, df, &psi_rev),
    ) else {
        return keep(false, true);
    };
    let t_new = target.log_density(&r_new);
    if t_new == f64::NEG_INFINITY {
        return keep(false, true);
    }
    let log_ratio = t_new + extra(&r_new) - target.log_density(current) - extra(current)
        + aux_log_density(&d_new, &params)
        - aux_log_density(&d, &params)
        + q_rev
        + separation_log_jacobian(&d)
        - q_fwd
        - separation_log_jacobian(&d_new);
    if rng.random::<f64>().ln() < log_ratio {
        RMove {
            r: r_new,
            accepted: true,
            failed: false,
        }
    } else {
        keep(false, false)
    }
}

/// Mean and variance of the conditional of one `theta` given the linked
/// correlation `g`, its cluster mean and the two variances.
pub fn theta_conditional(g: f64, mu: f64, tau2: f64, sigma2_r: f64) -> (f64, f64) {
    let a = 1.0 / (1.0 / tau2 + 1.0 / sigma2_r);
    (a * (g / tau2 + mu / sigma2_r), a)
}

pub fn update_theta<G: Rng + ?Sized>(
    shadow: &mut ShadowState,
    r: &DMatrix<f64>,
    spec: &CorrelationModelSpec,
    rng: &mut G,
) {
    for (c, (k, l)) in pairs(r.nrows()).into_iter().enumerate() {
        // r stays inside (-1, 1) by the chain invariant
        let g = link_apply(spec.link, r[(k, l)]).unwrap_or(0.0);
        let mu = shadow.mu[shadow.cluster_of(&spec.variant, c, k, l)];
        let (m, v) = theta_conditional(g, mu, spec.tau2, shadow.sigma2_r);
        shadow.theta[c] = m + v.sqrt() * std_normal(rng);
    }
}

/// Conjugate normal conditional of a cluster mean with `count` members whose
/// `theta` sum to `sum`.
pub fn mu_conditional(count: usize, sum: f64, sigma2_r: f64, mu_var: f64) -> (f64, f64) {
    let v = 1.0 / (count as f64 / sigma2_r + 1.0 / mu_var);
    (v * sum / sigma2_r, v)
}

pub fn update_means<G: Rng + ?Sized>(shadow: &mut ShadowState, spec: &CorrelationModelSpec, p: usize, rng: &mut G) {
    let clusters = shadow.clusters(&spec.variant, p);
    let mut count = vec![0usize; shadow.mu.len()];
    let mut sum = vec![0.0; shadow.mu.len()];
    for (c, &h) in clusters.iter().enumerate() {
        count[h] += 1;
        sum[h] += shadow.theta[c];
    }
    for h in 0..shadow.mu.len() {
        let (m, v) = mu_conditional(count[h], sum[h], shadow.sigma2_r, spec.mu_var);
        shadow.mu[h] = m + v.sqrt() * std_normal(rng);
    }
}

/// Log conditional of `sigma2_R` up to a constant, half-normal prior on
/// `sigma_R` including the square-root Jacobian.
pub fn sigma2_r_log_target(shadow: &ShadowState, spec: &CorrelationModelSpec, p: usize, s2: f64) -> f64 {
    if !(s2 > 0.0) {
        return f64::NEG_INFINITY;
    }
    let clusters = shadow.clusters(&spec.variant, p);
    let lik: f64 = clusters
        .iter()
        .enumerate()
        .map(|(c, &h)| normal_logpdf(shadow.theta[c], shadow.mu[h], s2))
        .sum();
    lik - s2 / (2.0 * spec.sigma_r_phi2) - 0.5 * s2.ln()
}

/// Random-walk step on `sigma2_R` with proposal variance `step`; returns
/// whether the proposal was accepted.
pub fn update_sigma2_r<G: Rng + ?Sized>(
    shadow: &mut ShadowState,
    spec: &CorrelationModelSpec,
    p: usize,
    step: f64,
    rng: &mut G,
) -> bool {
    let cur = shadow.sigma2_r;
    let prop = cur + step.sqrt() * std_normal(rng);
    if prop <= 0.0 {
        return false;
    }
    let log_ratio = sigma2_r_log_target(shadow, spec, p, prop) - sigma2_r_log_target(shadow, spec, p, cur);
    if rng.random::<f64>().ln() < log_ratio {
        shadow.sigma2_r = prop;
        true
    } else {
        false
    }
}

fn sample_log_weights<G: Rng + ?Sized>(logw: &[f64], rng: &mut G) -> usize {
    let top = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|v| (v - top).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (h, v) in w.iter().enumerate() {
        if u < *v {
            return h;
        }
        u -= v;
    }
    w.iter().rposition(|v| *v > 0.0).unwrap_or(0)
}

/// Stick-breaking draws given component occupation counts.
fn update_sticks<G: Rng + ?Sized>(shadow: &mut ShadowState, counts: &[usize], rng: &mut G) {
    let h = counts.len();
    for i in 0..h {
        shadow.sticks[i] = if i + 1 == h {
            1.0
        } else {
            let tail: usize = counts[i + 1..].iter().sum();
            distributions::beta(rng, 1.0 + counts[i] as f64, shadow.concentration + tail as f64)
        };
    }
    shadow.weights = stick_weights(&shadow.sticks);
}

/// Two-stage auxiliary-variable draw of the DP concentration given `k`
/// occupied components among `d` items.
pub fn update_concentration<G: Rng + ?Sized>(current: f64, k: usize, d: usize, a: f64, b: f64, rng: &mut G) -> f64 {
    let eta = distributions::beta(rng, current + 1.0, d as f64);
    let rate = b - eta.ln();
    let kf = k as f64;
    let odds = (a + kf - 1.0) / (a + kf - 1.0 + d as f64 * rate);
    let shape = if rng.random::<f64>() < odds { a + kf } else { a + kf - 1.0 };
    distributions::gamma(rng, shape, rate)
}

fn counts(labels: &[usize], h: usize) -> Vec<usize> {
    let mut c = vec![0; h];
    for &l in labels {
        c[l] += 1;
    }
    c
}

/// Log label probabilities (unnormalized) of one correlation under the
/// grouped-correlations model.
pub fn correlation_label_log_probs(shadow: &ShadowState, c: usize) -> Vec<f64> {
    (0..shadow.weights.len())
        .map(|h| shadow.weights[h].ln() + normal_logpdf(shadow.theta[c], shadow.mu[h], shadow.sigma2_r))
        .collect()
}

/// Sticks, labels and concentration for the grouped-correlations model.
pub fn update_dp_clustering<G: Rng + ?Sized>(shadow: &mut ShadowState, spec: &CorrelationModelSpec, rng: &mut G) {
    let h = spec.variant.n_components();
    let cnt = counts(&shadow.labels, h);
    update_sticks(shadow, &cnt, rng);
    for c in 0..shadow.labels.len() {
        let lp = correlation_label_log_probs(shadow, c);
        shadow.labels[c] = sample_log_weights(&lp, rng);
    }
    let occupied = counts(&shadow.labels, h).iter().filter(|v| **v > 0).count();
    shadow.concentration = update_concentration(
        shadow.concentration,
        occupied,
        shadow.labels.len(),
        spec.concentration_shape,
        spec.concentration_rate,
        rng,
    );
}

/// Log label probabilities (unnormalized) of variable `k` under the
/// grouped-variables model with `groups` groups.
pub fn variable_label_log_probs(shadow: &ShadowState, groups: usize, p: usize, k: usize) -> Vec<f64> {
    let index = pairs(p);
    (0..groups)
        .map(|h| {
            let mut acc = shadow.weights[h].ln();
            for (c, &(a, b)) in index.iter().enumerate() {
                let other = if a == k {
                    b
                } else if b == k {
                    a
                } else {
                    continue;
                };
                let mu = shadow.mu[pair_cell(h, shadow.labels[other], groups)];
                acc += normal_logpdf(shadow.theta[c], mu, shadow.sigma2_r);
            }
            acc
        })
        .collect()
}

/// Sequential variable relabelling, then sticks and concentration.
pub fn update_grouped_variables<G: Rng + ?Sized>(
    shadow: &mut ShadowState,
    spec: &CorrelationModelSpec,
    p: usize,
    rng: &mut G,
) {
    let groups = spec.variant.n_components();
    update_labels_only(shadow, groups, p, rng);
    let cnt = counts(&shadow.labels, groups);
    update_sticks(shadow, &cnt, rng);
    let occupied = cnt.iter().filter(|v| **v > 0).count();
    shadow.concentration = update_concentration(
        shadow.concentration,
        occupied,
        p,
        spec.concentration_shape,
        spec.concentration_rate,
        rng,
    );
}

fn update_labels_only<G: Rng + ?Sized>(shadow: &mut ShadowState, groups: usize, p: usize, rng: &mut G) {
    for k in 0..p {
        let lp = variable_label_log_probs(shadow, groups, p, k);
        shadow.labels[k] = sample_log_weights(&lp, rng);
    }
}
