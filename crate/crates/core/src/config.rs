//! Run configuration read from TOML.
//!
//! ```toml
//! data = "exam.csv"
//! responses = ["y1", "y2"]
//!
//! [[mean]]
//! column = "x1"
//! kind = "smooth"
//! basis = 6
//!
//! [correlation]
//! model = "grouped-variables"
//! groups = 2
//!
//! [schedule]
//! sweeps = 10000
//! burn-in = 5000
//! ```

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{ModelError, Result};
use crate::model::{
    BetaPrior, CorrelationModelSpec, CorrelationVariant, Link, ModelSpec, PriorConfig, ScalePrior, TermKind, TermSpec,
};
use crate::sampler::Schedule;
use crate::simharness::SimScenario;

/// Basis size of a smooth term when `basis` is omitted (five knots).
pub const DEFAULT_SMOOTH_BASIS: usize = 6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TermConfig {
    pub column: String,
    #[serde(default = "default_kind")]
    pub kind: TermKind,
    pub basis: Option<usize>,
    pub inclusion: Option<BetaPrior>,
}

fn default_kind() -> TermKind {
    TermKind::Parametric
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct CorrelationConfig {
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_link")]
    pub link: Link,
    pub tau2: Option<f64>,
    pub truncation: Option<usize>,
    pub groups: Option<usize>,
    pub mu_var: Option<f64>,
    pub sigma_r_phi2: Option<f64>,
    pub concentration_shape: Option<f64>,
    pub concentration_rate: Option<f64>,
}

fn default_model() -> String {
    "common".into()
}

fn default_link() -> Link {
    Link::FisherZ
}

impl Default for CorrelationConfig {
    fn default() -> Self {
        CorrelationConfig {
            model: default_model(),
            link: default_link(),
            tau2: None,
            truncation: None,
            groups: None,
            mu_var: None,
            sigma_r_phi2: None,
            concentration_shape: None,
            concentration_rate: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaParams {
    pub shape: f64,
    pub scale: f64,
}

/// Prior overrides; anything omitted takes the default of [`PriorConfig::defaults`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct PriorsConfig {
    pub c_beta: Option<GammaParams>,
    pub mean_inclusion: Option<BetaPrior>,
    pub variance_inclusion: Option<BetaPrior>,
    pub c_alpha: Option<ScalePrior>,
    pub sigma2: Option<ScalePrior>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ScheduleConfig {
    pub sweeps: usize,
    pub burn_in: usize,
    #[serde(default = "one")]
    pub thin: usize,
    #[serde(default = "default_batch")]
    pub adapt_batch: usize,
}

fn one() -> usize {
    1
}

fn default_batch() -> usize {
    25
}

impl ScheduleConfig {
    pub const FULL: ScheduleConfig = ScheduleConfig {
        sweeps: 40_000,
        burn_in: 20_000,
        thin: 2,
        adapt_batch: 25,
    };
    pub const DESK: ScheduleConfig = ScheduleConfig {
        sweeps: 10_000,
        burn_in: 5_000,
        thin: 2,
        adapt_batch: 25,
    };

    pub fn to_schedule(self, seed: u64) -> Schedule {
        Schedule {
            adapt_batch: self.adapt_batch,
            ..Schedule::new(self.sweeps, self.burn_in, self.thin, seed)
        }
    }
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self::FULL
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default = "default_ns")]
    pub n: Vec<usize>,
    #[serde(default = "default_rhos")]
    pub rho: Vec<f64>,
    #[serde(default = "default_dims")]
    pub dims: Vec<usize>,
    #[serde(default = "one")]
    pub mean_model: usize,
    pub replicates: Option<usize>,
    pub inclusion: Option<BetaPrior>,
}

fn default_ns() -> Vec<usize> {
    vec![50, 150]
}

fn default_rhos() -> Vec<f64> {
    vec![0.1, 0.3, 0.5, 0.7, 0.9]
}

fn default_dims() -> Vec<usize> {
    vec![1, 2, 4, 6, 10]
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            n: default_ns(),
            rho: default_rhos(),
            dims: default_dims(),
            mean_model: 1,
            replicates: None,
            inclusion: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub responses: Vec<String>,
    #[serde(default = "yes")]
    pub standardize: bool,
    #[serde(default)]
    pub mean: Vec<TermConfig>,
    #[serde(default)]
    pub variance: Vec<TermConfig>,
    #[serde(default)]
    pub correlation: CorrelationConfig,
    #[serde(default)]
    pub priors: PriorsConfig,
    pub schedule: Option<ScheduleConfig>,
    #[serde(default)]
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub simulate: Option<SimulateConfig>,
    /// Thresholds for the precision-matrix table.
    #[serde(default = "default_thresholds")]
    pub precision_thresholds: Vec<f64>,
    /// Grid points per curve.
    #[serde(default = "default_grid")]
    pub grid_points: usize,
}

fn yes() -> bool {
    true
}

fn default_thresholds() -> Vec<f64> {
    vec![0.1]
}

fn default_grid() -> usize {
    50
}

/// Parse and validate everything that does not need the data.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let de = toml::Deserializer::parse(text).map_err(|e| ModelError::config("<root>", e.to_string()))?;
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { "<root>".to_string() } else { path };
        ModelError::config(path, e.into_inner().message().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

fn positive(path: &str, v: Option<f64>) -> Result<()> {
    match v {
        Some(x) if !(x > 0.0) => Err(ModelError::config(path, "must be positive")),
        _ => Ok(()),
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(s) = &self.schedule {
            if s.burn_in >= s.sweeps {
                return Err(ModelError::config("schedule.burn-in", "must be smaller than sweeps"));
            }
            if s.thin == 0 {
                return Err(ModelError::config("schedule.thin", "must be at least 1"));
            }
            if s.adapt_batch == 0 {
                return Err(ModelError::config("schedule.adapt-batch", "must be at least 1"));
            }
        }
        self.variant_without_p()?;
        let c = &self.correlation;
        positive("correlation.tau2", c.tau2)?;
        positive("correlation.mu-var", c.mu_var)?;
        positive("correlation.sigma-r-phi2", c.sigma_r_phi2)?;
        positive("correlation.concentration-shape", c.concentration_shape)?;
        positive("correlation.concentration-rate", c.concentration_rate)?;
        for (list, name) in [(&self.mean, "mean"), (&self.variance, "variance")] {
            for (i, t) in list.iter().enumerate() {
                let path = format!("{name}[{i}]");
                match (t.kind, t.basis) {
                    (TermKind::Parametric, Some(b)) if b != 1 => {
                        return Err(ModelError::config(format!("{path}.basis"), "parametric terms have basis 1"))
                    }
                    (TermKind::Smooth, Some(b)) if b < 2 => {
                        return Err(ModelError::config(format!("{path}.basis"), "smooth terms need basis >= 2"))
                    }
                    _ => {}
                }
                if let Some(b) = t.inclusion {
                    if !(b.a > 0.0 && b.b > 0.0) {
                        return Err(ModelError::config(format!("{path}.inclusion"), "beta parameters must be positive"));
                    }
                }
            }
        }
        if self.precision_thresholds.iter().any(|a| !(*a > 0.0)) {
            return Err(ModelError::config("precision-thresholds", "thresholds must be positive"));
        }
        if self.grid_points < 2 {
            return Err(ModelError::config("grid-points", "must be at least 2"));
        }
        if let Some(s) = &self.simulate {
            if s.n.is_empty() || s.rho.is_empty() || s.dims.is_empty() {
                return Err(ModelError::config("simulate", "n, rho and dims must be non-empty"));
            }
            for &rho in &s.rho {
                if !(rho > -1.0 / 9.0 && rho < 1.0) {
                    return Err(ModelError::config("simulate.rho", format!("{rho} outside (-1/9, 1)")));
                }
            }
            if s.dims.iter().any(|&d| d == 0 || d > 10) {
                return Err(ModelError::config("simulate.dims", "dimensions must lie in 1..=10"));
            }
            if !(1..=3).contains(&s.mean_model) {
                return Err(ModelError::config("simulate.mean-model", "must be 1, 2 or 3"));
            }
        }
        let mut prior_check = PriorConfig::defaults(1, 1);
        self.apply_priors(&mut prior_check);
        prior_check.validate()
    }

    /// The variant with any `p`-dependent default left at 1.
    fn variant_without_p(&self) -> Result<CorrelationVariant> {
        self.variant(2)
    }

    fn variant(&self, p: usize) -> Result<CorrelationVariant> {
        let c = &self.correlation;
        let v = match c.model.as_str() {
            "common" => CorrelationVariant::Common,
            "grouped-correlations" => CorrelationVariant::GroupedCorrelations {
                truncation: c
                    .truncation
                    .unwrap_or_else(|| (p * p.saturating_sub(1) / 2).clamp(1, 20)),
            },
            "grouped-variables" => CorrelationVariant::GroupedVariables {
                groups: c.groups.unwrap_or(p),
            },
            other => {
                return Err(ModelError::config(
                    "correlation.model",
                    format!(
                        "unknown variant `{other}`; expected one of {}",
                        CorrelationVariant::NAMES.join(", ")
                    ),
                ))
            }
        };
        if c.truncation.is_some() && !matches!(v, CorrelationVariant::GroupedCorrelations { .. }) {
            return Err(ModelError::config("correlation.truncation", "only used by grouped-correlations"));
        }
        if c.groups.is_some() && !matches!(v, CorrelationVariant::GroupedVariables { .. }) {
            return Err(ModelError::config("correlation.groups", "only used by grouped-variables"));
        }
        match v {
            CorrelationVariant::GroupedCorrelations { truncation: 0 } => {
                Err(ModelError::config("correlation.truncation", "must be at least 1"))
            }
            CorrelationVariant::GroupedVariables { groups: 0 } => {
                Err(ModelError::config("correlation.groups", "must be at least 1"))
            }
            _ => Ok(v),
        }
    }

    fn apply_priors(&self, p: &mut PriorConfig) {
        let o = &self.priors;
        if let Some(g) = o.c_beta {
            p.c_beta_shape = g.shape;
            p.c_beta_scale = g.scale;
        }
        if let Some(b) = o.mean_inclusion {
            p.mean_inclusion = b;
        }
        if let Some(b) = o.variance_inclusion {
            p.variance_inclusion = b;
        }
        if let Some(s) = o.c_alpha {
            p.c_alpha = s;
        }
        if let Some(s) = o.sigma2 {
            p.sigma2 = s;
        }
    }

    /// Priors with every default filled in for `n` rows and `p` responses.
    pub fn priors_for(&self, n: usize, p: usize) -> PriorConfig {
        let mut out = PriorConfig::defaults(n, p);
        self.apply_priors(&mut out);
        out
    }

    pub fn correlation_for(&self, p: usize) -> Result<CorrelationModelSpec> {
        let c = &self.correlation;
        let base = CorrelationModelSpec::common();
        Ok(CorrelationModelSpec {
            variant: self.variant(p)?,
            link: c.link,
            tau2: c.tau2.unwrap_or(base.tau2),
            mu_var: c.mu_var.unwrap_or(base.mu_var),
            sigma_r_phi2: c.sigma_r_phi2.unwrap_or(base.sigma_r_phi2),
            concentration_shape: c.concentration_shape.unwrap_or(base.concentration_shape),
            concentration_rate: c.concentration_rate.unwrap_or(base.concentration_rate),
        })
    }

    /// Resolve column names against the data header.
    pub fn model_spec(&self, data: &Dataset) -> Result<ModelSpec> {
        let lookup = |path: String, name: &str| {
            data.index_of(name).ok_or_else(|| {
                ModelError::config(
                    path,
                    format!("column `{name}` not in data header ({})", data.names().join(", ")),
                )
            })
        };
        if self.responses.is_empty() {
            return Err(ModelError::config("responses", "at least one response is required"));
        }
        let responses = self
            .responses
            .iter()
            .enumerate()
            .map(|(i, r)| lookup(format!("responses[{i}]"), r))
            .collect::<Result<Vec<_>>>()?;
        let terms = |list: &[TermConfig], name: &str| {
            list.iter()
                .enumerate()
                .map(|(i, t)| {
                    let column = lookup(format!("{name}[{i}].column"), &t.column)?;
                    if responses.contains(&column) {
                        return Err(ModelError::config(
                            format!("{name}[{i}].column"),
                            format!("`{}` is a response", t.column),
                        ));
                    }
                    let basis = match t.kind {
                        TermKind::Parametric => 1,
                        TermKind::Smooth => t.basis.unwrap_or(DEFAULT_SMOOTH_BASIS),
                    };
                    Ok(TermSpec {
                        kind: t.kind,
                        column,
                        basis,
                        inclusion: t.inclusion,
                    })
                })
                .collect::<Result<Vec<_>>>()
        };
        let p = responses.len();
        let spec = ModelSpec {
            mean_terms: terms(&self.mean, "mean")?,
            variance_terms: terms(&self.variance, "variance")?,
            correlation: self.correlation_for(p)?,
            priors: self.priors_for(data.n_rows(), p),
            standardize: self.standardize,
            responses,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn schedule_or(&self, fallback: ScheduleConfig) -> ScheduleConfig {
        self.schedule.unwrap_or(fallback)
    }

    /// One scenario per `(n, rho)` cell of the `[simulate]` section.
    pub fn scenarios(&self, schedule: ScheduleConfig, replicates: usize) -> Vec<SimScenario> {
        let sim = self.simulate.clone().unwrap_or_default();
        let mut out = Vec::new();
        for &n in &sim.n {
            for &rho in &sim.rho {
                out.push(SimScenario {
                    n,
                    rho,
                    dims: sim.dims.clone(),
                    mean_model: sim.mean_model,
                    replicates: sim.replicates.unwrap_or(replicates),
                    base_seed: self.seed,
                    sweeps: schedule.sweeps,
                    burn_in: schedule.burn_in,
                    thin: schedule.thin,
                    inclusion: sim.inclusion,
                });
            }
        }
        out
    }
}
