//! Browser bindings for the demo page in `www/`.

use mvsmooth::correlation::{log_prior_r, ShadowState};
use mvsmooth::posterior::{any_included, curve_summary, default_grid, precision_threshold_probs};
use mvsmooth::rng::stream_rng;
use mvsmooth::{
    build_designs, run_chain, ChainSamples, CorrelationModelSpec, Dataset, ModelError, ModelSpec, PriorConfig,
    Schedule, TermSpec,
};
use nalgebra::{DMatrix, Matrix3};
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn js_err(e: ModelError) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn to_json<T: Serialize>(v: &T) -> Result<String, JsValue> {
    serde_json::to_string(v).map_err(|e| JsValue::from_str(&e.to_string()))
}

fn truth(x: f64) -> f64 {
    (2.0 * std::f64::consts::PI * x).sin()
}

#[derive(Serialize)]
struct CurveFit {
    x: Vec<f64>,
    y: Vec<f64>,
    grid: Vec<f64>,
    truth: Vec<f64>,
    median: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    inclusion: f64,
}

fn curve_fit(n: usize, noise: f64, sweeps: usize, seed: u64) -> mvsmooth::Result<CurveFit> {
    let mut rng = stream_rng(seed, 0);
    let x: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
    let y: Vec<f64> = x
        .iter()
        .map(|&v| {
            let e: f64 = StandardNormal.sample(&mut rng);
            truth(v) + noise * e
        })
        .collect();
    let data = Dataset::new(vec!["y".into(), "x".into()], vec![y.clone(), x.clone()])?;
    let spec = ModelSpec {
        responses: vec![0],
        mean_terms: vec![TermSpec::smooth(1, 10)?],
        variance_terms: vec![],
        correlation: CorrelationModelSpec::common(),
        priors: PriorConfig::defaults(n, 1),
        standardize: true,
    };
    let designs = build_designs(&data, &spec)?;
    let schedule = Schedule::new(sweeps, sweeps / 2, 2, seed);
    let samples = run_chain(&designs, &spec, &schedule)?;
    let grid = default_grid(&designs, 0, 60);
    let c = curve_summary(&samples, &designs, 0, 0, &grid)?;
    // the band is centred; put the level back for plotting against the data
    let level = y.iter().sum::<f64>() / n as f64;
    let cols: Vec<usize> = designs.mean_terms[0].columns().collect();
    let inclusion = any_included(&samples, 0, &cols);
    Ok(CurveFit {
        truth: grid.iter().map(|&g| truth(g)).collect(),
        median: c.median.iter().map(|v| v + level).collect(),
        lower: c.lower.iter().map(|v| v + level).collect(),
        upper: c.upper.iter().map(|v| v + level).collect(),
        grid,
        x,
        y,
        inclusion,
    })
}

/// Simulates `y = sin(2 pi x) + noise e` on `n` points, fits one smooth term
/// and returns data, truth and the posterior band as JSON.
#[wasm_bindgen]
pub fn fit_curve(n: usize, noise: f64, sweeps: usize, seed: u64) -> Result<String, JsValue> {
    if !(10..=500).contains(&n) || !(noise > 0.0) || !(200..=20_000).contains(&sweeps) {
        return Err(JsValue::from_str("need 10 <= n <= 500, noise > 0, 200 <= sweeps <= 20000"));
    }
    to_json(&curve_fit(n, noise, sweeps, seed).map_err(js_err)?)
}

/// Normalized shadow-prior density of a single correlation `r` on
/// `points` values in (-1, 1), for latent mean `theta` and variance `tau2`.
#[wasm_bindgen]
pub fn shadow_density(theta: f64, tau2: f64, points: usize) -> Result<String, JsValue> {
    if !(tau2 > 0.0) || points < 3 {
        return Err(JsValue::from_str("tau2 must be positive and points at least 3"));
    }
    let spec = CorrelationModelSpec {
        tau2,
        ..CorrelationModelSpec::common()
    };
    let mut shadow = ShadowState::new(&spec, 2);
    shadow.theta[0] = theta;
    let r: Vec<f64> = (0..points).map(|i| -0.999 + 1.998 * i as f64 / (points - 1) as f64).collect();
    let logd: Vec<f64> = r
        .iter()
        .map(|&v| log_prior_r(&DMatrix::from_row_slice(2, 2, &[1.0, v, v, 1.0]), &shadow, &spec))
        .collect();
    let top = logd.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut dens: Vec<f64> = logd.iter().map(|l| (l - top).exp()).collect();
    let h = r[1] - r[0];
    let area: f64 = dens.windows(2).map(|w| 0.5 * h * (w[0] + w[1])).sum();
    for d in &mut dens {
        *d /= area;
    }
    #[derive(Serialize)]
    struct Out {
        r: Vec<f64>,
        density: Vec<f64>,
    }
    to_json(&Out { r, density: dens })
}

/// Three responses with a chain dependence `y1 - y2 - y3`: `y1` and `y3`
/// are conditionally independent given `y2`.
#[wasm_bindgen]
pub struct PrecisionFit {
    samples: ChainSamples,
}

#[wasm_bindgen]
impl PrecisionFit {
    #[wasm_bindgen(constructor)]
    pub fn new(n: usize, sweeps: usize, seed: u64) -> Result<PrecisionFit, JsValue> {
        if !(20..=1000).contains(&n) || !(200..=20_000).contains(&sweeps) {
            return Err(JsValue::from_str("need 20 <= n <= 1000 and 200 <= sweeps <= 20000"));
        }
        let mut rng = stream_rng(seed, 1);
        // precision with a zero (1, 3) entry
        let w = Matrix3::new(1.0, -0.5, 0.0, -0.5, 1.25, -0.5, 0.0, -0.5, 1.0);
        let l = w.try_inverse().and_then(|s| s.cholesky()).expect("fixed matrix is positive definite").l();
        let mut cols = vec![Vec::with_capacity(n); 4];
        for _ in 0..n {
            let z = nalgebra::Vector3::from_fn(|_, _| StandardNormal.sample(&mut rng));
            let e = l * z;
            let x: f64 = StandardNormal.sample(&mut rng);
            for k in 0..3 {
                cols[k].push(0.5 * x + e[k]);
            }
            cols[3].push(x);
        }
        let names = ["y1", "y2", "y3", "x"].iter().map(|s| s.to_string()).collect();
        let data = Dataset::new(names, cols).map_err(js_err)?;
        let spec = ModelSpec {
            responses: vec![0, 1, 2],
            mean_terms: vec![TermSpec::parametric(3)],
            variance_terms: vec![],
            correlation: CorrelationModelSpec::common(),
            priors: PriorConfig::defaults(n, 3),
            standardize: true,
        };
        let designs = build_designs(&data, &spec).map_err(js_err)?;
        let samples = run_chain(&designs, &spec, &Schedule::new(sweeps, sweeps / 2, 2, seed)).map_err(js_err)?;
        Ok(PrecisionFit { samples })
    }

    /// Row-major 3x3 posterior probabilities that the scaled precision entry
    /// exceeds `a` in magnitude.
    pub fn probs(&self, a: f64) -> Vec<f64> {
        let m = precision_threshold_probs(&self.samples, a);
        m.transpose().as_slice().to_vec()
    }

    /// Posterior mean correlations, row-major.
    pub fn mean_corr(&self) -> Vec<f64> {
        let mut acc = DMatrix::<f64>::zeros(3, 3);
        for d in &self.samples.draws {
            acc += d.corr_matrix(3);
        }
        acc /= self.samples.len() as f64;
        acc.transpose().as_slice().to_vec()
    }
}
