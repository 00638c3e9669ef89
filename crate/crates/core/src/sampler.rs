//! The MCMC sweep: spike-slab mean selection, IRLS variance moves, scale
//! parameters, the coefficient draw, the correlation matrix and the shadow
//! layer, with burn-in adaptation and thinning.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::correlation::{self, CorrelationTarget};
use crate::design::DesignMatrices;
use crate::distributions::{self, normal_logpdf, std_normal, LN_2PI};
use crate::error::{ModelError, Result};
use crate::linalg;
use crate::likelihood::{GlsFit, GramCache};
use crate::model::{BetaPrior, CorrelationVariant, ModelSpec, ScalePrior};
use crate::rng::ChainRng;
use crate::samples::{ChainHealth, ChainReport, ChainSamples, Draw, Layout};
use crate::state::SamplerState;
use crate::tuning::{Phase, TuningState};

const MAX_BLOCK: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub sweeps: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Sweeps per adaptation batch.
    #[serde(default = "default_batch")]
    pub adapt_batch: usize,
}

fn default_batch() -> usize {
    25
}

impl Schedule {
    pub fn new(sweeps: usize, burn_in: usize, thin: usize, seed: u64) -> Self {
        Schedule {
            sweeps,
            burn_in,
            thin,
            seed,
            adapt_batch: default_batch(),
        }
    }

    /// Burn-in may equal the sweep count (no draws retained).
    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(ModelError::config("schedule.thin", "must be at least 1"));
        }
        if self.burn_in > self.sweeps {
            return Err(ModelError::config("schedule.burn_in", "must not exceed sweeps"));
        }
        if self.adapt_batch == 0 {
            return Err(ModelError::config("schedule.adapt_batch", "must be at least 1"));
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        (self.sweeps - self.burn_in) / self.thin
    }
}

/// Layout of a chain's draws for the given design and model.
pub fn layout_for(designs: &DesignMatrices, spec: &ModelSpec) -> Layout {
    let p = designs.p;
    let variant = spec.correlation.variant;
    let (n_labels, n_weights) = match variant {
        CorrelationVariant::Common => (0, 0),
        CorrelationVariant::GroupedCorrelations { truncation } => (p * p.saturating_sub(1) / 2, truncation),
        CorrelationVariant::GroupedVariables { groups } => (p, groups),
    };
    Layout {
        p,
        kx: designs.kx(),
        kz: designs.kz(),
        n_means: variant.n_means(),
        n_labels,
        n_weights,
    }
}

/// Newton's method for a stationary point of `l` on `(0, inf)`, iterating in
/// `t = log c`. `d1` and `d2` are the first two derivatives in `c`. Returns
/// the mode when it converges to a point with negative curvature.
pub fn newton_mode(d1: impl Fn(f64) -> f64, d2: impl Fn(f64) -> f64, start: f64) -> Option<f64> {
    let mut t = start.ln();
    for _ in 0..200 {
        let c = t.exp();
        let g = c * d1(c);
        let h = c * c * d2(c) + g;
        if !g.is_finite() || !h.is_finite() {
            return None;
        }
        let step = if h < 0.0 { -g / h } else { g.signum() };
        let step = step.clamp(-2.0, 2.0);
        t += step;
        if step.abs() < 1e-12 * (1.0 + t.abs()) {
            let c = t.exp();
            return (d2(c) < 0.0).then_some(c);
        }
    }
    None
}

/// Log full conditional of `c_beta` up to a constant, and its first two
/// derivatives.
#[derive(Clone, Copy, Debug)]
pub struct CBetaConditional {
    pub m: f64,
    pub yy: f64,
    pub quad: f64,
    pub a: f64,
    pub b: f64,
}

impl CBetaConditional {
    pub fn log_density(&self, c: f64) -> f64 {
        if !(c > 0.0) {
            return f64::NEG_INFINITY;
        }
        -0.5 * self.m * c.ln_1p() - 0.5 * (self.yy - c / (1.0 + c) * self.quad) - (self.a + 1.0) * c.ln()
            - self.b / c
    }

    pub fn d1(&self, c: f64) -> f64 {
        let u = 1.0 + c;
        -0.5 * self.m / u + 0.5 * self.quad / (u * u) - (self.a + 1.0) / c + self.b / (c * c)
    }

    pub fn d2(&self, c: f64) -> f64 {
        let u = 1.0 + c;
        0.5 * self.m / (u * u) - self.quad / (u * u * u) + (self.a + 1.0) / (c * c) - 2.0 * self.b / (c * c * c)
    }
}

/// Moments of the IRLS proposal for one term's selected coefficients.
struct IrlsMoments {
    mean: DVector<f64>,
    /// Cholesky factor of `Delta^{-1} = I / c_alpha + Z'Z`.
    prec_l: DMatrix<f64>,
    log_det_prec: f64,
}

impl IrlsMoments {
    fn new(z: &DMatrix<f64>, work: &DVector<f64>, c_alpha: f64) -> Option<Self> {
        let m = z.ncols();
        let prec = z.tr_mul(z) + DMatrix::identity(m, m) / c_alpha;
        let ch = linalg::cholesky(&prec)?;
        let mean = ch.solve(&z.tr_mul(work));
        Some(IrlsMoments {
            mean,
            log_det_prec: linalg::log_det(&ch),
            prec_l: ch.l(),
        })
    }

    fn draw<G: Rng + ?Sized>(&self, h: f64, rng: &mut G) -> DVector<f64> {
        let mut xi = DVector::from_fn(self.mean.len(), |_, _| std_normal(rng));
        linalg::backward_solve_transposed(&self.prec_l, &mut xi);
        &self.mean + xi * h.sqrt()
    }

    /// `log N(a; mean, h Delta)`.
    fn log_density(&self, a: &DVector<f64>, h: f64) -> f64 {
        let m = a.len() as f64;
        let d = a - &self.mean;
        let w = self.prec_l.transpose() * d;
        -0.5 * m * (LN_2PI + h.ln()) + 0.5 * self.log_det_prec - 0.5 * w.norm_squared() / h
    }
}

/// One chain over fixed data.
pub struct Sampler<'a> {
    designs: &'a DesignMatrices,
    spec: &'a ModelSpec,
    pub state: SamplerState,
    pub tuning: TuningState,
    pub health: ChainHealth,
    pub phase: Phase,
    rng: ChainRng,
    cache: GramCache,
    rinv: DMatrix<f64>,
    log_det_r: f64,
    fit: Option<GlsFit>,
}

impl<'a> Sampler<'a> {
    /// Chain started from the default initial state.
    pub fn new(designs: &'a DesignMatrices, spec: &'a ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let p = designs.p;
        let kx = designs.kx();
        let kz = designs.kz();
        let mut gamma = vec![vec![false; kx]; p];
        for t in &designs.mean_terms {
            if t.spec.kind == crate::model::TermKind::Parametric {
                for g in gamma.iter_mut() {
                    for c in t.columns() {
                        g[c] = true;
                    }
                }
            }
        }
        let sigma2: Vec<f64> = (0..p)
            .map(|j| {
                let col: Vec<f64> = designs.y.column(j).iter().copied().collect();
                crate::stats::sd(&col).powi(2)
            })
            .collect();
        if sigma2.iter().any(|s| !(*s > 0.0)) {
            return Err(ModelError::DegenerateCovariate);
        }
        let state = SamplerState {
            beta: DMatrix::zeros(p, kx + 1),
            gamma,
            alpha: DMatrix::zeros(p, kz),
            delta: vec![vec![false; kz]; p],
            sigma2: sigma2.clone(),
            c_beta: (designs.n * p) as f64,
            c_alpha: vec![1.0; p],
            corr: DMatrix::identity(p, p),
            shadow: correlation::ShadowState::new(&spec.correlation, p),
        };
        let tuning = TuningState::new(
            p,
            designs.variance_terms.len(),
            &sigma2,
            matches!(spec.priors.c_alpha, ScalePrior::HalfNormal { .. }),
        );
        let mut s = Self::from_state(designs, spec, state, tuning, ChainRng::seed_from_u64(seed))?;
        if s.current_fit().is_none() {
            for g in s.state.gamma.iter_mut() {
                g.fill(false);
            }
            s.fit = None;
            if s.current_fit().is_none() {
                return Err(ModelError::RankDeficient {
                    pattern: s.state.gamma_pattern(),
                });
            }
        }
        s.draw_beta();
        Ok(s)
    }

    /// Chain started from an explicit state and tuning.
    pub fn from_state(
        designs: &'a DesignMatrices,
        spec: &'a ModelSpec,
        state: SamplerState,
        tuning: TuningState,
        rng: ChainRng,
    ) -> Result<Self> {
        let ch = linalg::cholesky(&state.corr).ok_or(ModelError::NotPositiveDefinite)?;
        let cache = GramCache::new(designs, &state.alpha);
        Ok(Sampler {
            designs,
            spec,
            rinv: ch.inverse(),
            log_det_r: linalg::log_det(&ch),
            state,
            tuning,
            health: ChainHealth::default(),
            phase: Phase::Burn,
            rng,
            cache,
            fit: None,
        })
    }

    pub fn rng(&mut self) -> &mut ChainRng {
        &mut self.rng
    }

    fn index_of(gamma: &[Vec<bool>]) -> Vec<Vec<usize>> {
        gamma
            .iter()
            .map(|g| {
                std::iter::once(0)
                    .chain(g.iter().enumerate().filter(|(_, v)| **v).map(|(c, _)| c + 1))
                    .collect()
            })
            .collect()
    }

    fn current_fit(&mut self) -> Option<&GlsFit> {
        if self.fit.is_none() {
            let idx = Self::index_of(&self.state.gamma);
            self.fit = self.cache.fit(&idx, &self.state.sigma2, &self.rinv);
        }
        self.fit.as_ref()
    }

    fn log_det_sigma(&self, cache: &GramCache, sigma2: &[f64]) -> f64 {
        cache.log_det_sigma(self.designs.n, sigma2, self.log_det_r)
    }

    /// One full sweep in the fixed order.
    pub fn sweep(&mut self) {
        self.update_gamma_blocks();
        self.update_delta_alpha();
        self.update_sigma2();
        self.update_c_beta();
        self.update_c_alpha();
        self.draw_beta();
        if self.designs.p > 1 {
            self.update_correlation();
            self.update_shadow();
        }
        if self.state.check().is_err() {
            self.health.invariant_violations += 1;
        }
    }

    fn random_blocks(&mut self, cols: &[usize]) -> Vec<Vec<usize>> {
        let mut perm = cols.to_vec();
        perm.shuffle(&mut self.rng);
        let cap = cols.len().min(MAX_BLOCK);
        let mut out = Vec::new();
        let mut pos = 0;
        while pos < perm.len() {
            let len = self.rng.random_range(1..=cap).min(perm.len() - pos);
            out.push(perm[pos..pos + len].to_vec());
            pos += len;
        }
        out
    }

    fn inclusion_prior(default: BetaPrior, term: &crate::design::TermLayout) -> BetaPrior {
        term.spec.inclusion.unwrap_or(default)
    }

    /// Blocked spike-slab updates of the mean indicators.
    pub fn update_gamma_blocks(&mut self) {
        let p = self.designs.p;
        let nt = self.designs.mean_terms.len();
        let mut items: Vec<(usize, usize)> = (0..p).flat_map(|j| (0..nt).map(move |t| (j, t))).collect();
        items.shuffle(&mut self.rng);
        let c = self.state.c_beta;
        for (j, t) in items {
            let term = &self.designs.mean_terms[t];
            let prior = Self::inclusion_prior(self.spec.priors.mean_inclusion, term);
            let cols: Vec<usize> = term.columns().collect();
            for block in self.random_blocks(&cols) {
                let ones_out = cols
                    .iter()
                    .filter(|c| !block.contains(c) && self.state.gamma[j][**c])
                    .count();
                let draw = distributions::polya_block(
                    &mut self.rng,
                    prior.a,
                    prior.b,
                    ones_out,
                    cols.len() - block.len(),
                    block.len(),
                );
                if block.iter().zip(&draw).all(|(c, v)| self.state.gamma[j][*c] == *v) {
                    self.tuning.gamma.record(self.phase, true);
                    continue;
                }
                let Some(cur) = self.current_fit() else {
                    self.health.rank_deficient += 1;
                    continue;
                };
                let (s_cur, m_cur) = (cur.s(c), cur.n_cols() as f64);
                let mut gamma = self.state.gamma.clone();
                for (col, v) in block.iter().zip(&draw) {
                    gamma[j][*col] = *v;
                }
                let Some(prop) = self.cache.fit(&Self::index_of(&gamma), &self.state.sigma2, &self.rinv) else {
                    self.health.rank_deficient += 1;
                    self.tuning.gamma.record(self.phase, false);
                    continue;
                };
                let log_ratio = 0.5 * (m_cur - prop.n_cols() as f64) * c.ln_1p() + 0.5 * (s_cur - prop.s(c));
                let accepted = self.rng.random::<f64>().ln() < log_ratio;
                self.tuning.gamma.record(self.phase, accepted);
                if accepted {
                    for (col, v) in block.iter().zip(&draw) {
                        if !v {
                            self.state.beta[(j, col + 1)] = 0.0;
                        }
                    }
                    self.state.gamma = gamma;
                    self.fit = Some(prop);
                }
            }
        }
    }

    /// IRLS working response of response `j` for the variance term with
    /// columns `cols`, at a state with coefficients `alpha` and fit `fit`.
    fn working_response(&self, fit: &GlsFit, alpha: &DMatrix<f64>, j: usize, cols: &[usize]) -> DVector<f64> {
        let d = self.designs;
        let beta = fit.beta_hat(self.state.c_beta, d.x.ncols());
        let mean = &d.x * beta.row(j).transpose();
        let lin = &d.z * alpha.row(j).transpose();
        let s2 = self.state.sigma2[j];
        DVector::from_fn(d.n, |i, _| {
            let own: f64 = cols.iter().map(|&c| d.z[(i, c)] * alpha[(j, c)]).sum();
            let var = s2 * lin[i].exp();
            let e = (d.y[(i, j)] - mean[i]).powi(2);
            own + (e - var) / var
        })
    }

    /// Log conditional of the variance coefficients of response `j`, up to a
    /// constant, with `beta` integrated out.
    fn variance_target(
        &self,
        cache: &GramCache,
        fit: &GlsFit,
        alpha: &DMatrix<f64>,
        j: usize,
        sel: &[usize],
        c: f64,
    ) -> f64 {
        -0.5 * self.log_det_sigma(cache, &self.state.sigma2) - 0.5 * fit.s(c) + self.alpha_log_prior(alpha, j, sel)
    }

    /// Random-walk refresh of a term's selected variance coefficients with
    /// the selection held fixed. The step covariance is the inverse Fisher
    /// information scaled by `2.38^2 / m`; it is not tuned. Returns `None`
    /// when nothing is selected or the move could not be formed.
    fn alpha_walk_step(&mut self, j: usize, cols: &[usize], c: f64) -> Option<bool> {
        let d = self.designs;
        let sel: Vec<usize> = cols.iter().copied().filter(|k| self.state.delta[j][*k]).collect();
        if sel.is_empty() {
            return None;
        }
        let Some(fit_cur) = self.current_fit().cloned() else {
            self.health.rank_deficient += 1;
            return None;
        };
        let m = sel.len();
        let z = d.z.select_columns(&sel);
        let info = z.tr_mul(&z) * 0.5 + DMatrix::identity(m, m) / self.state.c_alpha[j];
        let Some(ch) = linalg::cholesky(&info) else {
            self.health.irls_singular += 1;
            return None;
        };
        let mut xi = DVector::from_fn(m, |_, _| std_normal(&mut self.rng));
        linalg::backward_solve_transposed(&ch.l(), &mut xi);
        let step = 2.38 / (m as f64).sqrt();
        let mut alpha = self.state.alpha.clone();
        for (k, &col) in sel.iter().enumerate() {
            alpha[(j, col)] += step * xi[k];
        }
        let mut cache = self.cache.clone();
        cache.refresh(d, &alpha, j);
        let Some(fit_prop) = cache.fit(&fit_cur.index, &self.state.sigma2, &self.rinv) else {
            self.health.rank_deficient += 1;
            return None;
        };
        let log_ratio = self.variance_target(&cache, &fit_prop, &alpha, j, &sel, c)
            - self.variance_target(&self.cache, &fit_cur, &self.state.alpha, j, &sel, c);
        let ok = self.rng.random::<f64>().ln() < log_ratio;
        if ok {
            self.state.alpha = alpha;
            self.cache = cache;
            self.fit = Some(fit_prop);
        }
        Some(ok)
    }

    fn alpha_log_prior(&self, alpha: &DMatrix<f64>, j: usize, cols: &[usize]) -> f64 {
        cols.iter()
            .map(|&c| normal_logpdf(alpha[(j, c)], 0.0, self.state.c_alpha[j]))
            .sum()
    }

    /// Joint updates of the variance indicators and coefficients.
    pub fn update_delta_alpha(&mut self) {
        let p = self.designs.p;
        let nt = self.designs.variance_terms.len();
        if nt == 0 {
            return;
        }
        let mut items: Vec<(usize, usize)> = (0..p).flat_map(|j| (0..nt).map(move |t| (j, t))).collect();
        items.shuffle(&mut self.rng);
        let c = self.state.c_beta;
        for (j, t) in items {
            let term = &self.designs.variance_terms[t];
            let prior = Self::inclusion_prior(self.spec.priors.variance_inclusion, term);
            let cols: Vec<usize> = term.columns().collect();
            for block in self.random_blocks(&cols) {
                let (accepted, same_set) = self.delta_alpha_step(j, t, &cols, &block, prior, c);
                // h only shapes moves that keep the selected set
                if same_set {
                    self.tuning.irls[j][t].record(self.phase, accepted);
                }
                self.tuning.delta.record(self.phase, accepted);
            }
            // IRLS proposals can strand alpha where the reverse proposal has
            // almost no mass; a local walk always gets out
            if let Some(ok) = self.alpha_walk_step(j, &cols, c) {
                self.tuning.alpha_walk.record(self.phase, ok);
            }
        }
    }

    fn delta_alpha_step(
        &mut self,
        j: usize,
        t: usize,
        cols: &[usize],
        block: &[usize],
        prior: BetaPrior,
        c: f64,
    ) -> (bool, bool) {
        let d = self.designs;
        let h = self.tuning.irls[j][t].scale();
        let ones_out = cols
            .iter()
            .filter(|c| !block.contains(c) && self.state.delta[j][**c])
            .count();
        let draw = distributions::polya_block(
            &mut self.rng,
            prior.a,
            prior.b,
            ones_out,
            cols.len() - block.len(),
            block.len(),
        );
        let mut delta_row = self.state.delta[j].clone();
        for (col, v) in block.iter().zip(&draw) {
            delta_row[*col] = *v;
        }
        let sel_cur: Vec<usize> = cols.iter().copied().filter(|c| self.state.delta[j][*c]).collect();
        let sel_prop: Vec<usize> = cols.iter().copied().filter(|c| delta_row[*c]).collect();
        let same_set = !sel_prop.is_empty() && sel_prop == sel_cur;

        let Some(fit_cur) = self.current_fit().cloned() else {
            self.health.rank_deficient += 1;
            return (false, same_set);
        };
        let work_cur = self.working_response(&fit_cur, &self.state.alpha, j, cols);
        let mut alpha = self.state.alpha.clone();
        for &col in cols {
            alpha[(j, col)] = 0.0;
        }
        let mut log_q_fwd = 0.0;
        if !sel_prop.is_empty() {
            let z = d.z.select_columns(&sel_prop);
            let Some(mom) = IrlsMoments::new(&z, &work_cur, self.state.c_alpha[j]) else {
                self.health.irls_singular += 1;
                return (false, same_set);
            };
            let a = mom.draw(h, &mut self.rng);
            log_q_fwd = mom.log_density(&a, h);
            for (k, &col) in sel_prop.iter().enumerate() {
                alpha[(j, col)] = a[k];
            }
        }
        let mut cache = self.cache.clone();
        cache.refresh(d, &alpha, j);
        let Some(fit_prop) = cache.fit(&fit_cur.index, &self.state.sigma2, &self.rinv) else {
            self.health.rank_deficient += 1;
            return (false, same_set);
        };
        let mut log_q_rev = 0.0;
        if !sel_cur.is_empty() {
            let work_prop = self.working_response(&fit_prop, &alpha, j, cols);
            let z = d.z.select_columns(&sel_cur);
            let Some(mom) = IrlsMoments::new(&z, &work_prop, self.state.c_alpha[j]) else {
                self.health.irls_singular += 1;
                return (false, same_set);
            };
            let a = DVector::from_iterator(sel_cur.len(), sel_cur.iter().map(|&col| self.state.alpha[(j, col)]));
            log_q_rev = mom.log_density(&a, h);
        }
        let log_ratio = self.variance_target(&cache, &fit_prop, &alpha, j, &sel_prop, c)
            - self.variance_target(&self.cache, &fit_cur, &self.state.alpha, j, &sel_cur, c)
            + log_q_rev
            - log_q_fwd;
        if self.rng.random::<f64>().ln() < log_ratio {
            self.state.alpha = alpha;
            self.state.delta[j] = delta_row;
            self.cache = cache;
            self.fit = Some(fit_prop);
            (true, same_set)
        } else {
            (false, same_set)
        }
    }

    /// Random-walk updates of the baseline variances.
    pub fn update_sigma2(&mut self) {
        let n = self.designs.n as f64;
        let c = self.state.c_beta;
        let prior = self.spec.priors.sigma2;
        for j in 0..self.designs.p {
            let step = self.tuning.sigma2[j].scale();
            let cur = self.state.sigma2[j];
            let prop = cur + step.sqrt() * std_normal(&mut self.rng);
            if prop <= 0.0 {
                self.tuning.sigma2[j].record(self.phase, false);
                continue;
            }
            let Some(s_cur) = self.current_fit().map(|f| f.s(c)) else {
                self.health.rank_deficient += 1;
                continue;
            };
            let mut sigma2 = self.state.sigma2.clone();
            sigma2[j] = prop;
            let idx = Self::index_of(&self.state.gamma);
            let Some(fit) = self.cache.fit(&idx, &sigma2, &self.rinv) else {
                self.health.rank_deficient += 1;
                self.tuning.sigma2[j].record(self.phase, false);
                continue;
            };
            let log_ratio = -0.5 * n * (prop.ln() - cur.ln()) - 0.5 * (fit.s(c) - s_cur) + prior.log_density(prop)
                - prior.log_density(cur);
            let accepted = self.rng.random::<f64>().ln() < log_ratio;
            self.tuning.sigma2[j].record(self.phase, accepted);
            if accepted {
                self.state.sigma2 = sigma2;
                self.fit = Some(fit);
            }
        }
    }

    /// Independence proposal centred at the mode of the `c_beta`
    /// conditional; random walk on `log c_beta` if the mode search fails.
    pub fn update_c_beta(&mut self) {
        let Some(fit) = self.current_fit() else {
            self.health.rank_deficient += 1;
            return;
        };
        let cond = CBetaConditional {
            m: fit.n_cols() as f64,
            yy: fit.yy,
            quad: fit.quad,
            a: self.spec.priors.c_beta_shape,
            b: self.spec.priors.c_beta_scale,
        };
        let cur = self.state.c_beta;
        let g2 = self.tuning.c_beta.scale();
        // the search starts from the prior mode, never the current value, so
        // the proposal does not depend on the state it moves from
        let start = cond.b / (cond.a + 1.0);
        let accepted = match newton_mode(|c| cond.d1(c), |c| cond.d2(c), start) {
            Some(mode) => {
                let var = -g2 / cond.d2(mode);
                let prop = mode + var.sqrt() * std_normal(&mut self.rng);
                if prop <= 0.0 {
                    false
                } else {
                    let log_ratio = cond.log_density(prop) - cond.log_density(cur) + normal_logpdf(cur, mode, var)
                        - normal_logpdf(prop, mode, var);
                    let ok = self.rng.random::<f64>().ln() < log_ratio;
                    if ok {
                        self.state.c_beta = prop;
                    }
                    ok
                }
            }
            None => {
                self.health.newton_fallback += 1;
                self.c_beta_log_walk(&cond)
            }
        };
        self.tuning.c_beta.record(self.phase, accepted);
        // The independence proposal is light-tailed and cannot leave a state
        // far from the mode (e.g. the starting value), so a log-scale random
        // walk follows every sweep.
        self.c_beta_log_walk(&cond);
    }

    fn c_beta_log_walk(&mut self, cond: &CBetaConditional) -> bool {
        let cur = self.state.c_beta;
        let prop = cur * (0.5 * std_normal(&mut self.rng)).exp();
        let log_ratio = cond.log_density(prop) - cond.log_density(cur) + prop.ln() - cur.ln();
        let ok = self.rng.random::<f64>().ln() < log_ratio;
        if ok {
            self.state.c_beta = prop;
        }
        ok
    }

    /// Gibbs draw (inverse-gamma prior) or random walk (half-normal prior).
    pub fn update_c_alpha(&mut self) {
        for j in 0..self.designs.p {
            let k = self.state.delta[j].iter().filter(|v| **v).count() as f64;
            let ss: f64 = self.state.alpha.row(j).iter().map(|a| a * a).sum();
            match self.spec.priors.c_alpha {
                ScalePrior::InverseGamma { shape, scale } => {
                    self.state.c_alpha[j] = distributions::inverse_gamma(&mut self.rng, shape + 0.5 * k, scale + 0.5 * ss);
                }
                prior @ ScalePrior::HalfNormal { .. } => {
                    let cur = self.state.c_alpha[j];
                    let prop = cur + self.tuning.c_alpha[j].scale().sqrt() * std_normal(&mut self.rng);
                    let accepted = prop > 0.0 && {
                        let lt = |c: f64| -0.5 * k * c.ln() - 0.5 * ss / c + prior.log_density(c);
                        self.rng.random::<f64>().ln() < lt(prop) - lt(cur)
                    };
                    if accepted {
                        self.state.c_alpha[j] = prop;
                    }
                    self.tuning.c_alpha[j].record(self.phase, accepted);
                }
            }
        }
    }

    /// Exact conditional draw of the selected mean coefficients.
    pub fn draw_beta(&mut self) {
        let c = self.state.c_beta;
        let w = self.designs.x.ncols();
        let Some(fit) = self.current_fit().cloned() else {
            self.health.rank_deficient += 1;
            return;
        };
        self.state.beta = fit.draw_beta(&mut self.rng, c, w);
    }

    /// Whitened residual and fitted-mean scatter matrices at the current
    /// coefficients.
    fn scatters(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let d = self.designs;
        let mean = &d.x * self.state.beta.transpose();
        let lv = crate::likelihood::log_variances(d, &self.state.alpha, &self.state.sigma2);
        let inv_sd = lv.map(|v| (-0.5 * v).exp());
        let t = (&d.y - &mean).component_mul(&inv_sd);
        let m = mean.component_mul(&inv_sd);
        (t.tr_mul(&t), m.tr_mul(&m))
    }

    /// Separation-strategy update of the correlation matrix.
    pub fn update_correlation(&mut self) {
        let p = self.designs.p;
        if p < 2 {
            return;
        }
        let (scatter, fitted) = self.scatters();
        let idx = Self::index_of(&self.state.gamma);
        let c = self.state.c_beta;
        let cache = &self.cache;
        let sigma2 = &self.state.sigma2;
        // coefficient prior depends on R through the whitened Gram matrix
        let extra = |r: &DMatrix<f64>| -> f64 {
            let Some(ch) = linalg::cholesky(r) else {
                return f64::NEG_INFINITY;
            };
            let rinv = ch.inverse();
            match cache.gram_log_det(&idx, sigma2, &rinv) {
                Some(ld) => 0.5 * ld - 0.5 * (&rinv * &fitted).trace() / c,
                None => f64::NEG_INFINITY,
            }
        };
        let target = CorrelationTarget {
            n: self.designs.n,
            scatter: &scatter,
            shadow: &self.state.shadow,
            spec: &self.spec.correlation,
        };
        let zeta = self.tuning.zeta_value();
        let mv = correlation::propose_and_accept_r(&target, &extra, &self.state.corr, zeta, &mut self.rng);
        if mv.failed {
            self.health.non_pd_proposal += 1;
        }
        self.tuning.zeta.record(self.phase, mv.accepted);
        if mv.accepted {
            match linalg::cholesky(&mv.r) {
                Some(ch) => {
                    self.rinv = ch.inverse();
                    self.log_det_r = linalg::log_det(&ch);
                    self.state.corr = mv.r;
                    self.fit = None;
                }
                None => self.health.non_pd_proposal += 1,
            }
        }
    }

    /// Shadow layer: `theta`, cluster means, `sigma2_R`, and clustering.
    pub fn update_shadow(&mut self) {
        let p = self.designs.p;
        let spec = &self.spec.correlation;
        let sh = &mut self.state.shadow;
        correlation::update_theta(sh, &self.state.corr, spec, &mut self.rng);
        correlation::update_means(sh, spec, p, &mut self.rng);
        let step = self.tuning.sigma2_r.scale();
        let ok = correlation::update_sigma2_r(sh, spec, p, step, &mut self.rng);
        self.tuning.sigma2_r.record(self.phase, ok);
        match spec.variant {
            CorrelationVariant::Common => {}
            CorrelationVariant::GroupedCorrelations { .. } => {
                correlation::update_dp_clustering(sh, spec, &mut self.rng)
            }
            CorrelationVariant::GroupedVariables { .. } => {
                correlation::update_grouped_variables(sh, spec, p, &mut self.rng)
            }
        }
    }
}

/// Run a chain with burn-in adaptation and thinning.
pub fn run_chain(designs: &DesignMatrices, spec: &ModelSpec, schedule: &Schedule) -> Result<ChainSamples> {
    schedule.validate()?;
    let mut s = Sampler::new(designs, spec, schedule.seed)?;
    s.tuning.batch = schedule.adapt_batch;
    let tail_start = schedule.burn_in - schedule.burn_in / 4;
    let mut draws = Vec::with_capacity(schedule.retained());
    let mut sweeps = Vec::with_capacity(schedule.retained());
    for k in 0..schedule.sweeps {
        s.phase = if k >= schedule.burn_in {
            Phase::Sampling
        } else if k >= tail_start {
            Phase::BurnTail
        } else {
            Phase::Burn
        };
        if k == schedule.burn_in {
            s.tuning.freeze();
        }
        s.sweep();
        if k < schedule.burn_in && (k + 1) % schedule.adapt_batch == 0 {
            s.tuning.adapt();
        }
        if k >= schedule.burn_in && (k + 1 - schedule.burn_in) % schedule.thin == 0 {
            draws.push(Draw::from_state(&s.state));
            sweeps.push(k + 1);
        }
    }
    Ok(ChainSamples {
        layout: layout_for(designs, spec),
        sweeps,
        draws,
        report: Some(ChainReport::from_tuning(&s.tuning, s.health)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::tests::instance;
    use crate::stats;

    #[test]
    fn newton_on_quadratic() {
        let m = newton_mode(|c| -(c - 3.0), |_| -1.0, 1.0).unwrap();
        assert!((m - 3.0).abs() < 1e-9);
    }

    #[test]
    fn c_beta_derivatives_match_finite_differences() {
        let cond = CBetaConditional {
            m: 4.0,
            yy: 50.0,
            quad: 30.0,
            a: 0.5,
            b: 20.0,
        };
        for &c in &[0.5, 3.0, 40.0] {
            let h = 1e-5 * c;
            let fd1 = (cond.log_density(c + h) - cond.log_density(c - h)) / (2.0 * h);
            let fd2 = (cond.d1(c + h) - cond.d1(c - h)) / (2.0 * h);
            assert!((fd1 - cond.d1(c)).abs() < 1e-6 * (1.0 + fd1.abs()));
            assert!((fd2 - cond.d2(c)).abs() < 1e-6 * (1.0 + fd2.abs()));
        }
    }

    #[test]
    fn schedule_counts() {
        assert_eq!(Schedule::new(40_000, 20_000, 2, 1).retained(), 10_000);
        assert!(Schedule::new(10, 11, 1, 1).validate().is_err());
        assert!(Schedule::new(10, 5, 0, 1).validate().is_err());
    }

    fn small_model(seed: u64, p: usize) -> (DesignMatrices, ModelSpec) {
        let (d, _) = instance(seed, 30, p, 2, 1);
        let spec = ModelSpec {
            responses: (0..p).collect(),
            mean_terms: vec![],
            variance_terms: vec![],
            correlation: crate::model::CorrelationModelSpec::common(),
            priors: crate::model::PriorConfig::defaults(30, p),
            standardize: false,
        };
        (d, spec)
    }

    #[test]
    fn zero_retained_when_all_burn_in() {
        let (d, s) = small_model(1, 2);
        let out = run_chain(&d, &s, &Schedule::new(30, 30, 1, 4)).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn deterministic_and_invariants_hold() {
        let (d, s) = small_model(2, 3);
        let sch = Schedule::new(300, 100, 2, 9);
        let a = run_chain(&d, &s, &sch).unwrap();
        let b = run_chain(&d, &s, &sch).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 100);
        let report = a.report.as_ref().unwrap();
        assert_eq!(report.health.invariant_violations, 0);
        for dr in &a.draws {
            for (k, g) in dr.gamma.iter().enumerate() {
                if !g {
                    assert_eq!(dr.beta[(k / 2) * 3 + k % 2 + 1], 0.0);
                }
            }
        }
    }

    #[test]
    fn tuning_frozen_after_burn_in() {
        let (d, s) = small_model(3, 2);
        let mut sm = Sampler::new(&d, &s, 5).unwrap();
        for k in 0..100 {
            sm.sweep();
            if (k + 1) % 25 == 0 {
                sm.tuning.adapt();
            }
        }
        sm.tuning.freeze();
        let before = sm.tuning.clone();
        for k in 0..60 {
            sm.sweep();
            if (k + 1) % 25 == 0 {
                sm.tuning.adapt();
            }
        }
        assert_eq!(before.zeta.log_scale, sm.tuning.zeta.log_scale);
        assert_eq!(before.sigma2[0].log_scale, sm.tuning.sigma2[0].log_scale);
        assert_eq!(before.batches_done, sm.tuning.batches_done);
    }

    #[test]
    fn c_alpha_gibbs_draws_match_inverse_gamma_mean() {
        let (d, _) = instance(4, 20, 1, 0, 2);
        let spec = ModelSpec {
            responses: vec![0],
            mean_terms: vec![],
            variance_terms: vec![crate::model::TermSpec::parametric(1), crate::model::TermSpec::parametric(2)],
            correlation: crate::model::CorrelationModelSpec::common(),
            priors: crate::model::PriorConfig::defaults(20, 1),
            standardize: false,
        };
        let mut sm = Sampler::new(&d, &spec, 3).unwrap();
        sm.state.delta = vec![vec![true, true]];
        sm.state.alpha = DMatrix::from_row_slice(1, 2, &[2f64.sqrt(), 2f64.sqrt()]);
        let n = 100_000;
        let mut draws = Vec::with_capacity(n);
        for _ in 0..n {
            sm.update_c_alpha();
            draws.push(sm.state.c_alpha[0]);
        }
        // IG(1.1 + 1, 1.1 + 2)
        let (a, b): (f64, f64) = (2.1, 3.1);
        let mean = b / (a - 1.0);
        let sd = (b * b / ((a - 1.0) * (a - 1.0) * (a - 2.0))).sqrt();
        assert!((stats::mean(&draws) - mean).abs() < 3.0 * sd / (n as f64).sqrt());
    }
}
