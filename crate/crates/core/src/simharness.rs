//! Simulation study: equicorrelated ten-dimensional responses with a single
//! relevant covariate, fitted with models of increasing response dimension.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::design::build_designs;
use crate::distributions::std_normal;
use crate::error::{ModelError, Result};
use crate::linalg;
use crate::model::{BetaPrior, CorrelationModelSpec, ModelSpec, PriorConfig, TermSpec};
use crate::posterior;
use crate::rng::{derive_seed, stream_rng};
use crate::sampler::{run_chain, Schedule};

pub const BETA_01: f64 = 0.0;
pub const BETA_11: f64 = 3.47;
pub const N_RESPONSES: usize = 10;
pub const N_COVARIATES: usize = 10;

/// Unit-diagonal matrix with constant off-diagonal `rho`.
pub fn equicorrelation(p: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { rho })
}

/// One cell of the simulation grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub n: usize,
    pub rho: f64,
    /// Response dimensions fitted to each replicate.
    pub dims: Vec<usize>,
    /// 1: `x1`; 2: `x1..x3`; 3: `x1..x10`.
    pub mean_model: usize,
    pub replicates: usize,
    pub base_seed: u64,
    pub sweeps: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Inclusion prior of the mean coefficients; `None` keeps the default.
    pub inclusion: Option<BetaPrior>,
}

impl SimScenario {
    /// Reduced schedule: 10 replicates of 10,000 sweeps, 5,000 burn-in,
    /// thinning 2.
    pub fn desk(n: usize, rho: f64, dims: Vec<usize>, mean_model: usize, base_seed: u64) -> Self {
        SimScenario {
            n,
            rho,
            dims,
            mean_model,
            replicates: 10,
            base_seed,
            sweeps: 10_000,
            burn_in: 5_000,
            thin: 2,
            inclusion: None,
        }
    }

    /// Full schedule: 40 replicates of 40,000 sweeps, 20,000 burn-in,
    /// thinning 2.
    pub fn full(n: usize, rho: f64, dims: Vec<usize>, mean_model: usize, base_seed: u64) -> Self {
        SimScenario {
            replicates: 40,
            sweeps: 40_000,
            burn_in: 20_000,
            ..Self::desk(n, rho, dims, mean_model, base_seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ModelError::InvalidScenario(m.to_string()));
        if !(self.rho > -1.0 / (N_RESPONSES as f64 - 1.0) && self.rho < 1.0) {
            return bad("rho must lie in (-1/9, 1)");
        }
        if self.dims.is_empty() || self.dims.iter().any(|&d| d == 0 || d > N_RESPONSES) {
            return bad("dimensions must lie in 1..=10");
        }
        if !(1..=3).contains(&self.mean_model) {
            return bad("mean model must be 1, 2 or 3");
        }
        if self.n < 5 || self.replicates == 0 {
            return bad("need n >= 5 and at least one replicate");
        }
        Schedule::new(self.sweeps, self.burn_in, self.thin, 0).validate()
    }

    /// Covariates in the mean model, 1-based.
    pub fn mean_covariates(&self) -> Vec<usize> {
        match self.mean_model {
            1 => vec![1],
            2 => vec![1, 2, 3],
            _ => (1..=N_COVARIATES).collect(),
        }
    }
}

/// Columns `y1..y10, x1..x10`: uniform covariates on `(-0.5, 0.5)` and
/// responses `N(mu_i, Sigma(rho))` with `mu_i = (beta01 + beta11 x_i1, 0, ..)`.
pub fn gen_dataset<G: Rng + ?Sized>(n: usize, rho: f64, rng: &mut G) -> Result<Dataset> {
    let l = linalg::cholesky(&equicorrelation(N_RESPONSES, rho))
        .ok_or(ModelError::NotPositiveDefinite)?
        .l();
    let mut x = vec![vec![0.0; n]; N_COVARIATES];
    let mut y = vec![vec![0.0; n]; N_RESPONSES];
    for i in 0..n {
        for col in x.iter_mut() {
            col[i] = rng.random::<f64>() - 0.5;
        }
        let e = &l * DVector::from_fn(N_RESPONSES, |_, _| std_normal(rng));
        for (j, col) in y.iter_mut().enumerate() {
            col[i] = e[j] + if j == 0 { BETA_01 + BETA_11 * x[0][i] } else { 0.0 };
        }
    }
    let names = (1..=N_RESPONSES)
        .map(|j| format!("y{j}"))
        .chain((1..=N_COVARIATES).map(|k| format!("x{k}")))
        .collect();
    Dataset::new(names, y.into_iter().chain(x).collect())
}

/// `(SST - SSE) / SSE` of fitted values `yhat` for `y`.
pub fn check_snr(y: &[f64], yhat: &[f64]) -> Result<f64> {
    let m = y.iter().sum::<f64>() / y.len() as f64;
    let sst: f64 = y.iter().map(|v| (v - m).powi(2)).sum();
    let sse: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum();
    if sse == 0.0 {
        return Err(ModelError::ZeroSse);
    }
    Ok((sst - sse) / sse)
}

/// Model fitted to the first `d` responses.
pub fn scenario_model(scenario: &SimScenario, d: usize) -> ModelSpec {
    let mut priors = PriorConfig::defaults(scenario.n, d);
    if let Some(b) = scenario.inclusion {
        priors.mean_inclusion = b;
    }
    ModelSpec {
        responses: (0..d).collect(),
        mean_terms: scenario
            .mean_covariates()
            .into_iter()
            .map(|k| TermSpec::parametric(N_RESPONSES + k - 1))
            .collect(),
        variance_terms: vec![],
        correlation: CorrelationModelSpec::common(),
        priors,
        standardize: false,
    }
}

/// Outcome of fitting one response dimension to one replicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub d: usize,
    /// `sum_i (mu_1i - median_i)^2`.
    pub bias: f64,
    /// `sum_i (q95_i - q05_i)^2`.
    pub variance: f64,
    /// Fraction of rows whose 90% band covers the true mean.
    pub coverage: f64,
    /// Posterior probability that `x1` is in the first response's mean.
    pub relevant_inclusion: f64,
    /// Posterior probability that any irrelevant covariate is in it.
    pub irrelevant_inclusion: Option<f64>,
    /// Posterior inclusion probability of the irrelevant covariates,
    /// averaged over them.
    pub irrelevant_each: Option<f64>,
    /// End-of-burn-in acceptance of every adapted move.
    pub acceptance: Vec<(String, f64)>,
    pub numerical_events: u64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub data_seed: u64,
    pub fits: Vec<FitResult>,
}

/// Fit every requested dimension to replicate `r` of a scenario.
pub fn run_replicate(scenario: &SimScenario, r: usize) -> Result<ReplicateResult> {
    let data_seed = derive_seed(scenario.base_seed, 2 * r as u64);
    let mut rng = stream_rng(scenario.base_seed, 2 * r as u64);
    let data = gen_dataset(scenario.n, scenario.rho, &mut rng)?;
    let x1 = data.column(N_RESPONSES)?;
    let truth: Vec<f64> = x1.iter().map(|v| BETA_01 + BETA_11 * v).collect();
    let chain_base = derive_seed(scenario.base_seed, 2 * r as u64 + 1);
    let mut fits = Vec::with_capacity(scenario.dims.len());
    for &d in &scenario.dims {
        let spec = scenario_model(scenario, d);
        let designs = build_designs(&data, &spec)?;
        let schedule = Schedule::new(scenario.sweeps, scenario.burn_in, scenario.thin, derive_seed(chain_base, d as u64));
        let start = Instant::now();
        let samples = run_chain(&designs, &spec, &schedule)?;
        let seconds = start.elapsed().as_secs_f64();
        let m = posterior::fitted_mean_summary(&samples, &designs, 0)?;
        let bias = truth.iter().zip(&m.median).map(|(t, e)| (t - e).powi(2)).sum();
        let variance = m.upper.iter().zip(&m.lower).map(|(u, l)| (u - l).powi(2)).sum();
        let covered = truth
            .iter()
            .enumerate()
            .filter(|(i, t)| m.lower[*i] <= **t && **t <= m.upper[*i])
            .count();
        let irrelevant: Vec<usize> = (1..designs.kx()).collect();
        let report = samples.report.clone().unwrap_or_else(|| unreachable!());
        let rates: Vec<(String, f64)> = report
            .acceptance
            .iter()
            .filter(|a| a.adapted)
            .filter_map(|a| a.burn_in_tail.map(|r| (a.name.clone(), r)))
            .collect();
        fits.push(FitResult {
            d,
            bias,
            variance,
            coverage: covered as f64 / truth.len() as f64,
            relevant_inclusion: posterior::any_included(&samples, 0, &[0]),
            irrelevant_inclusion: (!irrelevant.is_empty()).then(|| posterior::any_included(&samples, 0, &irrelevant)),
            irrelevant_each: (!irrelevant.is_empty()).then(|| {
                mean(irrelevant.iter().map(|&c| posterior::any_included(&samples, 0, &[c])))
            }),
            acceptance: rates,
            numerical_events: report.health.total(),
            seconds,
        });
    }
    Ok(ReplicateResult {
        replicate: r,
        data_seed,
        fits,
    })
}

/// Aggregates for one response dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimSummary {
    pub d: usize,
    pub bias: f64,
    pub variance: f64,
    /// Percent of the one-dimensional fit's total, when `d = 1` was fitted.
    pub relative_bias: Option<f64>,
    pub relative_variance: Option<f64>,
    /// Mean over replicates, in percent.
    pub irrelevant_inclusion: Option<f64>,
    /// Per-covariate rate, mean over replicates, in percent.
    pub irrelevant_each: Option<f64>,
    pub relevant_inclusion: f64,
    pub coverage: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    pub scenario: SimScenario,
    pub dims: Vec<DimSummary>,
    pub replicates: Vec<ReplicateResult>,
    /// Replicates dropped after a failure, with the error.
    pub failures: Vec<(usize, String)>,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

fn aggregate(scenario: &SimScenario, results: Vec<Result<ReplicateResult>>) -> SimMetrics {
    let mut replicates = Vec::new();
    let mut failures = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(v) => replicates.push(v),
            Err(e) => {
                eprintln!("warning: replicate {r} dropped: {e}");
                failures.push((r, e.to_string()));
            }
        }
    }
    let fits_for = |k: usize| replicates.iter().map(move |r| &r.fits[k]);
    let base = scenario.dims.iter().position(|&d| d == 1);
    let total = |k: usize, f: fn(&FitResult) -> f64| fits_for(k).map(f).sum::<f64>();
    let dims = scenario
        .dims
        .iter()
        .enumerate()
        .map(|(k, &d)| {
            let bias = total(k, |f| f.bias);
            let variance = total(k, |f| f.variance);
            let irr: Vec<f64> = fits_for(k).filter_map(|f| f.irrelevant_inclusion).collect();
            let each: Vec<f64> = fits_for(k).filter_map(|f| f.irrelevant_each).collect();
            DimSummary {
                d,
                bias,
                variance,
                relative_bias: base.map(|b| 100.0 * bias / total(b, |f| f.bias)),
                relative_variance: base.map(|b| 100.0 * variance / total(b, |f| f.variance)),
                irrelevant_inclusion: (!irr.is_empty()).then(|| 100.0 * mean(irr.into_iter())),
                irrelevant_each: (!each.is_empty()).then(|| 100.0 * mean(each.into_iter())),
                relevant_inclusion: mean(fits_for(k).map(|f| f.relevant_inclusion)),
                coverage: mean(fits_for(k).map(|f| f.coverage)),
                seconds: mean(fits_for(k).map(|f| f.seconds)),
            }
        })
        .collect();
    SimMetrics {
        scenario: scenario.clone(),
        dims,
        replicates,
        failures,
    }
}

/// Run every replicate of a scenario (in parallel when enabled) and
/// aggregate in replicate order.
pub fn run_scenario(scenario: &SimScenario) -> Result<SimMetrics> {
    scenario.validate()?;
    let reps: Vec<usize> = (0..scenario.replicates).collect();
    #[cfg(feature = "parallel")]
    let results: Vec<Result<ReplicateResult>> = {
        use rayon::prelude::*;
        reps.par_iter().map(|&r| run_replicate(scenario, r)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<ReplicateResult>> = reps.iter().map(|&r| run_replicate(scenario, r)).collect();
    Ok(aggregate(scenario, results))
}

pub fn run_table(scenarios: &[SimScenario]) -> Result<Vec<SimMetrics>> {
    scenarios.iter().map(run_scenario).collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.2}"))
}

/// Comma-delimited blocks, one per metric, with rows `(n, d)` and one
/// column per correlation.
pub fn format_tables(metrics: &[SimMetrics]) -> String {
    let mut rhos: Vec<f64> = metrics.iter().map(|m| m.scenario.rho).collect();
    rhos.sort_by(f64::total_cmp);
    rhos.dedup();
    let mut keys: Vec<(usize, usize, usize)> = metrics
        .iter()
        .flat_map(|m| m.dims.iter().map(move |d| (m.scenario.mean_model, m.scenario.n, d.d)))
        .collect();
    keys.sort();
    keys.dedup();
    type Getter = fn(&DimSummary) -> Option<f64>;
    let blocks: [(&str, Getter); 6] = [
        ("relative bias (%)", |d| d.relative_bias),
        ("relative variance (%)", |d| d.relative_variance),
        ("irrelevant inclusion (%)", |d| d.irrelevant_inclusion),
        ("irrelevant inclusion per covariate (%)", |d| d.irrelevant_each),
        ("coverage", |d| Some(d.coverage)),
        ("seconds per fit", |d| Some(d.seconds)),
    ];
    let mut out = String::new();
    for (title, get) in blocks {
        out.push_str(&format!("# {title}\nmodel,n,d"));
        for r in &rhos {
            out.push_str(&format!(",rho={r}"));
        }
        out.push('\n');
        for &(model, n, d) in &keys {
            out.push_str(&format!("{model},{n},{d}"));
            for r in &rhos {
                let cell = metrics
                    .iter()
                    .find(|m| m.scenario.mean_model == model && m.scenario.n == n && m.scenario.rho == *r)
                    .and_then(|m| m.dims.iter().find(|s| s.d == d))
                    .and_then(get);
                out.push_str(&format!(",{}", fmt_opt(cell)));
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}
