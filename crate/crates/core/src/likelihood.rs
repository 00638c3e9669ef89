//! Full and coefficient-marginalized Gaussian likelihoods.
//!
//! The marginal likelihood is evaluated through a cache of weighted Gram
//! blocks: with `e_ij = exp(-z_i'alpha_j / 2)` and `x~_i` the intercept-led
//! mean design row, the cache holds `sum_i e_ij e_il x~_i x~_i'`,
//! `sum_i e_ij e_il y_il x~_i` and `sum_i e_ij e_il y_ij y_il` for every pair
//! of responses. Scaling by `R^{-1}_{jl} / (sigma_j sigma_l)` and selecting the
//! included columns then yields the whitened normal equations for any
//! inclusion pattern, variance level or correlation matrix without touching
//! the data again.

use std::cell::OnceCell;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;

use crate::design::DesignMatrices;
use crate::distributions::{std_normal, LN_2PI};
use crate::error::{ModelError, Result};
use crate::linalg;
use crate::state::SamplerState;

/// `log sigma^2_ij`, an `n x p` matrix.
pub fn log_variances(designs: &DesignMatrices, alpha: &DMatrix<f64>, sigma2: &[f64]) -> DMatrix<f64> {
    let mut lv = if designs.kz() == 0 {
        DMatrix::zeros(designs.n, sigma2.len())
    } else {
        &designs.z * alpha.transpose()
    };
    for (j, s) in sigma2.iter().enumerate() {
        lv.column_mut(j).add_scalar_mut(s.ln());
    }
    lv
}

/// Observation-level variances and the shared correlation matrix.
#[derive(Clone, Debug)]
pub struct CovarianceFactors {
    /// `sigma^2_ij`, `n x p`.
    pub variances: DMatrix<f64>,
    pub corr: DMatrix<f64>,
    chol: OnceCell<Option<Cholesky<f64, Dyn>>>,
}

impl CovarianceFactors {
    pub fn new(state: &SamplerState, designs: &DesignMatrices) -> Result<Self> {
        if state.sigma2.iter().any(|s| !(*s > 0.0)) {
            return Err(ModelError::NonPositiveVariance);
        }
        let variances = log_variances(designs, &state.alpha, &state.sigma2).map(f64::exp);
        if variances.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(ModelError::NonPositiveVariance);
        }
        Ok(CovarianceFactors {
            variances,
            corr: state.corr.clone(),
            chol: OnceCell::new(),
        })
    }

    pub fn chol(&self) -> Result<&Cholesky<f64, Dyn>> {
        self.chol
            .get_or_init(|| linalg::cholesky(&self.corr))
            .as_ref()
            .ok_or(ModelError::NotPositiveDefinite)
    }

    /// `log|Sigma| = sum_i log|S_i| + n log|R|`.
    pub fn log_det_sigma(&self) -> Result<f64> {
        let n = self.variances.nrows() as f64;
        Ok(self.variances.iter().map(|v| v.ln()).sum::<f64>() + n * linalg::log_det(self.chol()?))
    }
}

/// Log of the full Gaussian likelihood at the state's coefficients.
pub fn full_loglik(state: &SamplerState, designs: &DesignMatrices) -> Result<f64> {
    let f = CovarianceFactors::new(state, designs)?;
    let chol = f.chol()?;
    let resid = &designs.y - &designs.x * state.beta.transpose();
    let t = resid.component_div(&f.variances.map(f64::sqrt));
    let scatter = t.tr_mul(&t);
    let (n, p) = (designs.n as f64, designs.p as f64);
    Ok(-0.5 * n * p * LN_2PI - 0.5 * f.log_det_sigma()? - 0.5 * linalg::trace_inv_product(chol, &scatter))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarginalQuantities {
    pub s: f64,
    pub n_gamma: usize,
    pub log_det_sigma: f64,
}

/// `S` for the state's inclusion pattern, variances and correlations.
pub fn compute_s(state: &SamplerState, designs: &DesignMatrices) -> Result<MarginalQuantities> {
    let f = CovarianceFactors::new(state, designs)?;
    let chol = f.chol()?;
    let rinv = chol.inverse();
    let cache = GramCache::new(designs, &state.alpha);
    let index: Vec<Vec<usize>> = (0..state.p()).map(|j| state.mean_index(j)).collect();
    let fit = cache
        .fit(&index, &state.sigma2, &rinv)
        .ok_or_else(|| ModelError::RankDeficient {
            pattern: state.gamma_pattern(),
        })?;
    Ok(MarginalQuantities {
        s: fit.s(state.c_beta),
        n_gamma: state.n_gamma(),
        log_det_sigma: f.log_det_sigma()?,
    })
}

/// `log f(Y | gamma, c_beta, alpha, delta, sigma^2, R)` with the
/// coefficients integrated out under the g-prior.
pub fn marginal_loglik(state: &SamplerState, designs: &DesignMatrices) -> Result<f64> {
    let q = compute_s(state, designs)?;
    Ok(log_marginal(
        designs.n,
        designs.p,
        q.log_det_sigma,
        q.n_gamma + designs.p,
        state.c_beta,
        q.s,
    ))
}

/// Assemble the marginal log likelihood from its parts; `m` is the total
/// number of design columns including intercepts.
pub fn log_marginal(n: usize, p: usize, log_det_sigma: f64, m: usize, c_beta: f64, s: f64) -> f64 {
    -0.5 * (n * p) as f64 * LN_2PI - 0.5 * log_det_sigma - 0.5 * m as f64 * c_beta.ln_1p() - 0.5 * s
}

/// Weighted Gram blocks for every response pair.
#[derive(Clone, Debug)]
pub struct GramCache {
    p: usize,
    /// `e_ij = exp(-z_i'alpha_j / 2)`.
    e: DMatrix<f64>,
    /// `sum_i z_i'alpha_j`.
    zalpha_sum: Vec<f64>,
    /// Upper-triangular pair storage of `sum e_ij e_il x~ x~'`.
    cross: Vec<DMatrix<f64>>,
    /// Ordered pairs: `sum e_ij e_il y_il x~`.
    xy: Vec<DVector<f64>>,
    yy: DMatrix<f64>,
}

fn upper_index(p: usize, j: usize, l: usize) -> usize {
    let (a, b) = if j <= l { (j, l) } else { (l, j) };
    a * p - a * (a + 1) / 2 + b
}

impl GramCache {
    pub fn new(designs: &DesignMatrices, alpha: &DMatrix<f64>) -> Self {
        let p = designs.p;
        let w = designs.x.ncols();
        let mut cache = GramCache {
            p,
            e: DMatrix::zeros(designs.n, p),
            zalpha_sum: vec![0.0; p],
            cross: vec![DMatrix::zeros(w, w); p * (p + 1) / 2],
            xy: vec![DVector::zeros(w); p * p],
            yy: DMatrix::zeros(p, p),
        };
        for j in 0..p {
            cache.set_scale(designs, alpha, j);
        }
        for j in 0..p {
            for l in j..p {
                cache.fill_pair(designs, j, l);
            }
        }
        cache
    }

    fn set_scale(&mut self, designs: &DesignMatrices, alpha: &DMatrix<f64>, j: usize) {
        if designs.kz() == 0 {
            self.e.column_mut(j).fill(1.0);
            self.zalpha_sum[j] = 0.0;
            return;
        }
        let za = &designs.z * alpha.row(j).transpose();
        self.zalpha_sum[j] = za.sum();
        for i in 0..designs.n {
            self.e[(i, j)] = (-0.5 * za[i]).exp();
        }
    }

    fn fill_pair(&mut self, designs: &DesignMatrices, j: usize, l: usize) {
        let x = &designs.x;
        let y = &designs.y;
        let wts = self.e.column(j).component_mul(&self.e.column(l));
        let mut xw = x.clone();
        for (i, mut row) in xw.row_iter_mut().enumerate() {
            row *= wts[i];
        }
        self.cross[upper_index(self.p, j, l)] = xw.tr_mul(x);
        self.xy[j * self.p + l] = xw.tr_mul(&y.column(l));
        self.xy[l * self.p + j] = xw.tr_mul(&y.column(j));
        let v = (0..designs.n).map(|i| wts[i] * y[(i, j)] * y[(i, l)]).sum::<f64>();
        self.yy[(j, l)] = v;
        self.yy[(l, j)] = v;
    }

    /// Recompute every block involving response `j` after its log-variance
    /// coefficients change.
    pub fn refresh(&mut self, designs: &DesignMatrices, alpha: &DMatrix<f64>, j: usize) {
        self.set_scale(designs, alpha, j);
        for l in 0..self.p {
            self.fill_pair(designs, j, l);
        }
    }

    /// `log|Sigma|` given baseline variances and `log|R|`.
    pub fn log_det_sigma(&self, n: usize, sigma2: &[f64], log_det_r: f64) -> f64 {
        let nf = n as f64;
        sigma2.iter().map(|s| nf * s.ln()).sum::<f64>()
            + self.zalpha_sum.iter().sum::<f64>()
            + nf * log_det_r
    }

    fn weight(sigma2: &[f64], rinv: &DMatrix<f64>, j: usize, l: usize) -> f64 {
        rinv[(j, l)] / (sigma2[j] * sigma2[l]).sqrt()
    }

    /// Whitened Gram matrix of the included columns.
    pub fn gram(&self, index: &[Vec<usize>], sigma2: &[f64], rinv: &DMatrix<f64>) -> DMatrix<f64> {
        let offsets = offsets(index);
        let m = *offsets.last().unwrap();
        let mut g = DMatrix::zeros(m, m);
        for j in 0..self.p {
            for l in j..self.p {
                let wt = Self::weight(sigma2, rinv, j, l);
                let c = &self.cross[upper_index(self.p, j, l)];
                for (a, &ca) in index[j].iter().enumerate() {
                    for (b, &cb) in index[l].iter().enumerate() {
                        let v = wt * c[(ca, cb)];
                        g[(offsets[j] + a, offsets[l] + b)] = v;
                        g[(offsets[l] + b, offsets[j] + a)] = v;
                    }
                }
            }
        }
        g
    }

    /// Generalized least squares quantities for one inclusion pattern;
    /// `None` when the whitened Gram matrix is rank deficient.
    pub fn fit(&self, index: &[Vec<usize>], sigma2: &[f64], rinv: &DMatrix<f64>) -> Option<GlsFit> {
        let offsets = offsets(index);
        let m = *offsets.last().unwrap();
        let g = self.gram(index, sigma2, rinv);
        let mut b = DVector::zeros(m);
        let mut yy = 0.0;
        for j in 0..self.p {
            for l in 0..self.p {
                let wt = Self::weight(sigma2, rinv, j, l);
                yy += wt * self.yy[(j, l)];
                let v = &self.xy[j * self.p + l];
                for (a, &ca) in index[j].iter().enumerate() {
                    b[offsets[j] + a] += wt * v[ca];
                }
            }
        }
        let chol = linalg::cholesky(&g)?;
        let solution = chol.solve(&b);
        let quad = b.dot(&solution);
        Some(GlsFit {
            yy,
            quad,
            index: index.to_vec(),
            solution,
            chol,
        })
    }

    /// `log|G|` for the whitened Gram matrix, `None` if rank deficient.
    pub fn gram_log_det(&self, index: &[Vec<usize>], sigma2: &[f64], rinv: &DMatrix<f64>) -> Option<f64> {
        linalg::cholesky(&self.gram(index, sigma2, rinv)).map(|c| linalg::log_det(&c))
    }
}

fn offsets(index: &[Vec<usize>]) -> Vec<usize> {
    let mut off = Vec::with_capacity(index.len() + 1);
    off.push(0);
    for ix in index {
        off.push(off.last().unwrap() + ix.len());
    }
    off
}

/// Normal-equation solution for one inclusion pattern.
#[derive(Clone, Debug)]
pub struct GlsFit {
    /// `tr(R^{-1} sum_i y'_i y'_i')` in whitened units.
    pub yy: f64,
    /// `b' G^{-1} b`.
    pub quad: f64,
    pub index: Vec<Vec<usize>>,
    /// `G^{-1} b`.
    pub solution: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl GlsFit {
    /// Number of included columns, intercepts included.
    pub fn n_cols(&self) -> usize {
        self.solution.len()
    }

    pub fn s(&self, c_beta: f64) -> f64 {
        (self.yy - c_beta / (1.0 + c_beta) * self.quad).max(0.0)
    }

    fn scatter(&self, v: &DVector<f64>, width: usize) -> DMatrix<f64> {
        let mut beta = DMatrix::zeros(self.index.len(), width);
        let mut k = 0;
        for (j, ix) in self.index.iter().enumerate() {
            for &c in ix {
                beta[(j, c)] = v[k];
                k += 1;
            }
        }
        beta
    }

    /// Posterior mean of the coefficients, `p x width`.
    pub fn beta_hat(&self, c_beta: f64, width: usize) -> DMatrix<f64> {
        self.scatter(&(&self.solution * (c_beta / (1.0 + c_beta))), width)
    }

    /// Draw from `N(c^ G^{-1} b, c^ G^{-1})`, `c^ = c_beta / (1 + c_beta)`.
    pub fn draw_beta<R: Rng + ?Sized>(&self, rng: &mut R, c_beta: f64, width: usize) -> DMatrix<f64> {
        let shrink = c_beta / (1.0 + c_beta);
        let mut xi = DVector::from_fn(self.n_cols(), |_, _| std_normal(rng));
        linalg::backward_solve_transposed(self.chol.l_dirty(), &mut xi);
        let v = &self.solution * shrink + xi * shrink.sqrt();
        self.scatter(&v, width)
    }

    pub fn gram_log_det(&self) -> f64 {
        linalg::log_det(&self.chol)
    }
}
