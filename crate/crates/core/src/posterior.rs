//! Posterior summaries computed from retained draws.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::correlation::pairs;
use crate::design::DesignMatrices;
use crate::error::{ModelError, Result};
use crate::model::CorrelationVariant;
use crate::samples::ChainSamples;
use crate::stats;

pub const LOWER: f64 = 0.05;
pub const UPPER: f64 = 0.95;

/// Pointwise posterior band of one additive mean term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    /// 0-based response and term indices (term order of the design).
    pub response: usize,
    pub term: usize,
    /// Raw covariate values.
    pub grid: Vec<f64>,
    pub median: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Contributions are centred to mean zero over the observed rows.
    pub centered: bool,
}

fn band(values: &mut [f64]) -> (f64, f64, f64) {
    values.sort_by(f64::total_cmp);
    (
        stats::quantile_sorted(values, 0.5),
        stats::quantile_sorted(values, LOWER),
        stats::quantile_sorted(values, UPPER),
    )
}

/// `n_points` equally spaced values spanning the observed range of a term.
pub fn default_grid(designs: &DesignMatrices, term: usize, n_points: usize) -> Vec<f64> {
    let (lo, hi) = designs.mean_terms[term].range;
    let n = n_points.max(2);
    (0..n)
        .map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
        .collect()
}

/// Median and 90% band of the term's contribution to the mean of response
/// `j`, in response units. Each draw's contribution is centred over the
/// observed rows so the intercept carries the level.
pub fn curve_summary(
    samples: &ChainSamples,
    designs: &DesignMatrices,
    j: usize,
    term: usize,
    grid: &[f64],
) -> Result<CurveSummary> {
    if samples.is_empty() {
        return Err(ModelError::EmptySamples);
    }
    let t = designs
        .mean_terms
        .get(term)
        .ok_or_else(|| ModelError::InvalidTerm(format!("no mean term {term}")))?;
    let (lo, hi) = t.range;
    if let Some(&value) = grid.iter().find(|&&g| g < lo || g > hi) {
        return Err(ModelError::Extrapolation { value, lo, hi });
    }
    let kx = designs.kx();
    let cols: Vec<usize> = t.columns().collect();
    let basis: Vec<Vec<f64>> = grid.iter().map(|&g| t.expand(g)).collect();
    let col_means: Vec<f64> = cols.iter().map(|&c| designs.x.column(c + 1).mean()).collect();
    let scale = designs.response_transforms[j].scale;

    let mut per_point = vec![Vec::with_capacity(samples.len()); grid.len()];
    for d in &samples.draws {
        let coef: Vec<f64> = cols.iter().map(|&c| d.beta_at(kx, j, c + 1)).collect();
        let centre: f64 = coef.iter().zip(&col_means).map(|(b, m)| b * m).sum();
        for (g, row) in basis.iter().enumerate() {
            let v: f64 = row.iter().zip(&coef).map(|(x, b)| x * b).sum();
            per_point[g].push((v - centre) * scale);
        }
    }
    let mut out = CurveSummary {
        response: j,
        term,
        grid: grid.to_vec(),
        median: vec![],
        lower: vec![],
        upper: vec![],
        centered: true,
    };
    for mut v in per_point {
        let (m, l, u) = band(&mut v);
        out.median.push(m);
        out.lower.push(l);
        out.upper.push(u);
    }
    Ok(out)
}

/// Posterior band of the full mean of response `j` at each observed row, in
/// response units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanSummary {
    pub median: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

pub fn fitted_mean_summary(samples: &ChainSamples, designs: &DesignMatrices, j: usize) -> Result<MeanSummary> {
    if samples.is_empty() {
        return Err(ModelError::EmptySamples);
    }
    let kx = designs.kx();
    let tr = designs.response_transforms[j];
    let mut per_row = vec![Vec::with_capacity(samples.len()); designs.n];
    for d in &samples.draws {
        for (i, v) in per_row.iter_mut().enumerate() {
            let mu: f64 = (0..=kx).map(|c| designs.x[(i, c)] * d.beta_at(kx, j, c)).sum();
            v.push(tr.inverse(mu));
        }
    }
    let mut out = MeanSummary {
        median: vec![],
        lower: vec![],
        upper: vec![],
    };
    for mut v in per_row {
        let (m, l, u) = band(&mut v);
        out.median.push(m);
        out.lower.push(l);
        out.upper.push(u);
    }
    Ok(out)
}

/// Posterior inclusion probabilities of mean and variance coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InclusionSummary {
    /// `[response][coefficient]`.
    pub mean_coef: Vec<Vec<f64>>,
    /// `[response][term]`: probability that any coefficient of the term is in.
    pub mean_term: Vec<Vec<f64>>,
    pub variance_coef: Vec<Vec<f64>>,
    pub variance_term: Vec<Vec<f64>>,
}

fn frequency(samples: &ChainSamples, pick: impl Fn(&crate::samples::Draw) -> bool) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    samples.draws.iter().filter(|d| pick(d)).count() as f64 / samples.len() as f64
}

/// Probability that at least one of the mean coefficients `cols` (0-based,
/// intercept excluded) of response `j` is included.
pub fn any_included(samples: &ChainSamples, j: usize, cols: &[usize]) -> f64 {
    let kx = samples.layout.kx;
    frequency(samples, |d| cols.iter().any(|&c| d.gamma_at(kx, j, c)))
}

pub fn inclusion_probabilities(samples: &ChainSamples, designs: &DesignMatrices) -> InclusionSummary {
    let (p, kx, kz) = (samples.layout.p, samples.layout.kx, samples.layout.kz);
    let mean_coef = (0..p)
        .map(|j| (0..kx).map(|c| any_included(samples, j, &[c])).collect())
        .collect();
    let mean_term = (0..p)
        .map(|j| {
            designs
                .mean_terms
                .iter()
                .map(|t| any_included(samples, j, &t.columns().collect::<Vec<_>>()))
                .collect()
        })
        .collect();
    let delta_any = |j: usize, cols: &[usize]| frequency(samples, |d| cols.iter().any(|&c| d.delta[j * kz + c]));
    let variance_coef = (0..p).map(|j| (0..kz).map(|c| delta_any(j, &[c])).collect()).collect();
    let variance_term = (0..p)
        .map(|j| {
            designs
                .variance_terms
                .iter()
                .map(|t| delta_any(j, &t.columns().collect::<Vec<_>>()))
                .collect()
        })
        .collect();
    InclusionSummary {
        mean_coef,
        mean_term,
        variance_coef,
        variance_term,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSummary {
    /// 0-based variable pair.
    pub k: usize,
    pub l: usize,
    pub mean: f64,
    pub sd: f64,
    pub q05: f64,
    pub q95: f64,
    /// Probability that both variables share a group (grouped variables).
    pub co_cluster: Option<f64>,
}

pub fn correlation_summary(samples: &ChainSamples, variant: &CorrelationVariant) -> Vec<CorrelationSummary> {
    let p = samples.layout.p;
    pairs(p)
        .into_iter()
        .enumerate()
        .map(|(c, (k, l))| {
            let mut v: Vec<f64> = samples.draws.iter().map(|d| d.corr[c]).collect();
            let mean = stats::mean(&v);
            let sd = if v.len() > 1 { stats::sd(&v) } else { 0.0 };
            v.sort_by(f64::total_cmp);
            let (q05, q95) = if v.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                (stats::quantile_sorted(&v, LOWER), stats::quantile_sorted(&v, UPPER))
            };
            let co_cluster = match variant {
                CorrelationVariant::GroupedVariables { .. } => {
                    Some(frequency(samples, |d| d.labels[k] == d.labels[l]))
                }
                _ => None,
            };
            CorrelationSummary {
                k,
                l,
                mean,
                sd,
                q05,
                q95,
                co_cluster,
            }
        })
        .collect()
}

/// Probability that two correlations share a cluster (grouped
/// correlations), indexed by correlation pairs in row-major order.
pub fn correlation_coclustering(samples: &ChainSamples) -> DMatrix<f64> {
    let d = samples.layout.n_corr();
    DMatrix::from_fn(d, d, |a, b| {
        if samples.layout.n_labels != d {
            return f64::NAN;
        }
        frequency(samples, |dr| dr.labels[a] == dr.labels[b])
    })
}

/// Per-draw scaled negative precision `-w_kl / sqrt(w_kk w_ll)`.
pub fn partial_correlations(r: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let w = crate::linalg::cholesky(r)?.inverse();
    let p = r.nrows();
    Some(DMatrix::from_fn(p, p, |k, l| {
        if k == l {
            1.0
        } else {
            -w[(k, l)] / (w[(k, k)] * w[(l, l)]).sqrt()
        }
    }))
}

/// Fraction of draws whose scaled precision entry exceeds `a` in magnitude;
/// the diagonal is 1.
pub fn precision_threshold_probs(samples: &ChainSamples, a: f64) -> DMatrix<f64> {
    let p = samples.layout.p;
    let mut out = DMatrix::identity(p, p);
    if samples.is_empty() {
        return out;
    }
    let mut count = DMatrix::<f64>::zeros(p, p);
    for d in &samples.draws {
        if let Some(pc) = partial_correlations(&d.corr_matrix(p)) {
            for k in 0..p {
                for l in 0..p {
                    if k != l && pc[(k, l)].abs() > a {
                        count[(k, l)] += 1.0;
                    }
                }
            }
        }
    }
    for k in 0..p {
        for l in 0..p {
            if k != l {
                out[(k, l)] = count[(k, l)] / samples.len() as f64;
            }
        }
    }
    out
}
