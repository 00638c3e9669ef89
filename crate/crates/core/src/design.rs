//! Covariate standardization, knot placement, radial-basis expansion and
//! design-matrix assembly.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{ModelError, Result};
use crate::model::{ModelSpec, TermKind, TermSpec};
use crate::stats;

/// Affine map from raw units to working units: `(raw - center) / scale`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    pub center: f64,
    pub scale: f64,
}

impl Transform {
    pub const IDENTITY: Transform = Transform {
        center: 0.0,
        scale: 1.0,
    };

    pub fn forward(&self, raw: f64) -> f64 {
        (raw - self.center) / self.scale
    }

    pub fn inverse(&self, working: f64) -> f64 {
        working * self.scale + self.center
    }
}

fn distinct_count(values: &[f64]) -> usize {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}

/// Centre to sample mean 0 and scale to sample standard deviation 1.
pub fn standardize(column: &[f64]) -> Result<(Vec<f64>, f64, f64)> {
    if distinct_count(column) < 2 {
        return Err(ModelError::DegenerateCovariate);
    }
    let m = stats::mean(column);
    let s = stats::sd(column);
    Ok((column.iter().map(|v| (v - m) / s).collect(), m, s))
}

/// Ordered interior knots of one smooth term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnotGrid {
    pub column: usize,
    pub knots: Vec<f64>,
}

/// `q - 1` knots at the sample quantiles `l/q`, `l = 1..q-1`.
pub fn make_knots(column: usize, u: &[f64], q: usize) -> Result<KnotGrid> {
    if q < 2 {
        return Err(ModelError::InvalidTerm(format!(
            "smooth term on column {column} needs at least 2 basis functions"
        )));
    }
    let distinct = distinct_count(u);
    if distinct < q - 1 {
        return Err(ModelError::TooFewDistinct {
            distinct,
            knots: q - 1,
        });
    }
    let mut sorted = u.to_vec();
    sorted.sort_by(f64::total_cmp);
    let knots: Vec<f64> = (1..q)
        .map(|l| stats::quantile_sorted(&sorted, l as f64 / q as f64))
        .collect();
    for (l, w) in knots.windows(2).enumerate() {
        if w[1] <= w[0] {
            return Err(ModelError::TiedKnots {
                level: l + 2,
                value: w[1],
            });
        }
    }
    Ok(KnotGrid { column, knots })
}

/// `r^2 log(r^2)` with the limit value 0 at `r = 0`.
pub fn thin_plate(r: f64) -> f64 {
    let r2 = r * r;
    if r2 == 0.0 {
        0.0
    } else {
        r2 * r2.ln()
    }
}

/// `(u, |u - k1|^2 log |u - k1|^2, ...)`.
pub fn radial_basis_row(u: f64, grid: &KnotGrid) -> Vec<f64> {
    let mut row = Vec::with_capacity(grid.knots.len() + 1);
    row.push(u);
    row.extend(grid.knots.iter().map(|k| thin_plate(u - k)));
    row
}

/// Placement of one term inside a design matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermLayout {
    pub spec: TermSpec,
    /// Position of the term in the model specification's list.
    pub source_index: usize,
    pub transform: Transform,
    /// Knots in working units; `None` for parametric terms.
    pub knots: Option<KnotGrid>,
    /// First design column of the term, not counting the intercept.
    pub start: usize,
    /// Observed raw range of the covariate.
    pub range: (f64, f64),
}

impl TermLayout {
    pub fn width(&self) -> usize {
        self.spec.basis
    }

    pub fn columns(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.width()
    }

    /// Basis expansion of a raw covariate value.
    pub fn expand(&self, raw: f64) -> Vec<f64> {
        let u = self.transform.forward(raw);
        match &self.knots {
            Some(grid) => radial_basis_row(u, grid),
            None => vec![u],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrices {
    pub n: usize,
    pub p: usize,
    /// Responses in working units, `n x p`.
    pub y: DMatrix<f64>,
    pub response_transforms: Vec<Transform>,
    /// Mean design with a leading intercept column, `n x (1 + Kx)`.
    pub x: DMatrix<f64>,
    /// Log-variance design without intercept, `n x Kz`.
    pub z: DMatrix<f64>,
    pub mean_terms: Vec<TermLayout>,
    pub variance_terms: Vec<TermLayout>,
}

impl DesignMatrices {
    /// Selectable mean coefficients per response.
    pub fn kx(&self) -> usize {
        self.x.ncols() - 1
    }

    pub fn kz(&self) -> usize {
        self.z.ncols()
    }

    /// Row `i` of the stacked block-diagonal design: `p x p(1 + Kx)`.
    pub fn stacked_row(&self, i: usize) -> DMatrix<f64> {
        let w = self.x.ncols();
        let mut out = DMatrix::zeros(self.p, self.p * w);
        for j in 0..self.p {
            for c in 0..w {
                out[(j, j * w + c)] = self.x[(i, c)];
            }
        }
        out
    }
}

fn layout_terms(
    dataset: &Dataset,
    terms: &[TermSpec],
    standardize_covariates: bool,
) -> Result<(Vec<TermLayout>, DMatrix<f64>)> {
    let n = dataset.n_rows();
    let mut order: Vec<usize> = (0..terms.len()).collect();
    order.sort_by_key(|&k| matches!(terms[k].kind, TermKind::Smooth));

    let mut layouts = Vec::with_capacity(terms.len());
    let mut start = 0;
    for &k in &order {
        let spec = terms[k].clone();
        spec.validate()?;
        let raw = dataset.column(spec.column)?;
        let transform = if standardize_covariates {
            let (_, center, scale) = standardize(raw)?;
            Transform { center, scale }
        } else {
            if distinct_count(raw) < 2 {
                return Err(ModelError::DegenerateCovariate);
            }
            Transform::IDENTITY
        };
        let working: Vec<f64> = raw.iter().map(|&v| transform.forward(v)).collect();
        let knots = match spec.kind {
            TermKind::Smooth => Some(make_knots(spec.column, &working, spec.basis)?),
            TermKind::Parametric => None,
        };
        let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let width = spec.basis;
        layouts.push(TermLayout {
            spec,
            source_index: k,
            transform,
            knots,
            start,
            range: (lo, hi),
        });
        start += width;
    }

    let mut m = DMatrix::zeros(n, start);
    for t in &layouts {
        let raw = dataset.column(t.spec.column)?;
        for (i, &v) in raw.iter().enumerate() {
            for (c, b) in t.expand(v).into_iter().enumerate() {
                m[(i, t.start + c)] = b;
            }
        }
    }
    Ok((layouts, m))
}

/// Assemble mean and log-variance designs. Parametric terms come first, then
/// smooth blocks, each in specification order.
pub fn build_designs(dataset: &Dataset, spec: &ModelSpec) -> Result<DesignMatrices> {
    let n = dataset.n_rows();
    let p = spec.responses.len();
    if p == 0 {
        return Err(ModelError::config("responses", "at least one response is required"));
    }
    let mut y = DMatrix::zeros(n, p);
    let mut response_transforms = Vec::with_capacity(p);
    for (j, &col) in spec.responses.iter().enumerate() {
        let raw = dataset.column(col)?;
        let t = if spec.standardize {
            let (_, center, scale) = standardize(raw)?;
            Transform { center, scale }
        } else {
            Transform::IDENTITY
        };
        for i in 0..n {
            y[(i, j)] = t.forward(raw[i]);
        }
        response_transforms.push(t);
    }

    let (mean_terms, xm) = layout_terms(dataset, &spec.mean_terms, spec.standardize)?;
    let (variance_terms, z) = layout_terms(dataset, &spec.variance_terms, spec.standardize)?;
    let mut x = DMatrix::zeros(n, 1 + xm.ncols());
    x.column_mut(0).fill(1.0);
    x.columns_mut(1, xm.ncols()).copy_from(&xm);

    Ok(DesignMatrices {
        n,
        p,
        y,
        response_transforms,
        x,
        z,
        mean_terms,
        variance_terms,
    })
}
