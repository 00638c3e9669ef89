//! Declarative model description: terms, priors and the correlation model.

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TermKind {
    Parametric,
    Smooth,
}

/// `Beta(a, b)` prior on an inclusion probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaPrior {
    pub a: f64,
    pub b: f64,
}

impl Default for BetaPrior {
    fn default() -> Self {
        BetaPrior { a: 1.0, b: 1.0 }
    }
}

/// One additive term of a mean or log-variance predictor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermSpec {
    pub kind: TermKind,
    /// Covariate column in the dataset.
    pub column: usize,
    /// Number of basis functions; 1 for parametric terms.
    pub basis: usize,
    /// Per-term override of the inclusion prior.
    pub inclusion: Option<BetaPrior>,
}

impl TermSpec {
    pub fn parametric(column: usize) -> Self {
        TermSpec {
            kind: TermKind::Parametric,
            column,
            basis: 1,
            inclusion: None,
        }
    }

    pub fn smooth(column: usize, basis: usize) -> Result<Self> {
        let t = TermSpec {
            kind: TermKind::Smooth,
            column,
            basis,
            inclusion: None,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn with_inclusion(mut self, prior: BetaPrior) -> Self {
        self.inclusion = Some(prior);
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            TermKind::Smooth if self.basis < 2 => Err(ModelError::InvalidTerm(format!(
                "smooth term on column {} needs at least 2 basis functions, got {}",
                self.column, self.basis
            ))),
            TermKind::Parametric if self.basis != 1 => Err(ModelError::InvalidTerm(format!(
                "parametric term on column {} must have exactly 1 basis function",
                self.column
            ))),
            _ => Ok(()),
        }
    }
}

/// Prior on a positive scale parameter: either inverse gamma on the
/// parameter or half-normal on its square root.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScalePrior {
    InverseGamma { shape: f64, scale: f64 },
    /// `sqrt(x) ~ N(0, phi2)` truncated to positive values.
    HalfNormal { phi2: f64 },
}

impl ScalePrior {
    /// Log density of the parameter `x > 0` (not of its square root), up to
    /// an additive constant.
    pub fn log_density(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        match *self {
            ScalePrior::InverseGamma { shape, scale } => -(shape + 1.0) * x.ln() - scale / x,
            ScalePrior::HalfNormal { phi2 } => -x / (2.0 * phi2) - 0.5 * x.ln(),
        }
    }

    fn validate(&self, path: &str) -> Result<()> {
        let ok = match *self {
            ScalePrior::InverseGamma { shape, scale } => shape > 0.0 && scale > 0.0,
            ScalePrior::HalfNormal { phi2 } => phi2 > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(ModelError::config(path, "hyperparameters must be positive"))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    /// `c_beta ~ IG(c_beta_shape, c_beta_scale)`.
    pub c_beta_shape: f64,
    pub c_beta_scale: f64,
    pub mean_inclusion: BetaPrior,
    pub variance_inclusion: BetaPrior,
    pub c_alpha: ScalePrior,
    pub sigma2: ScalePrior,
}

impl PriorConfig {
    /// Default priors for `n` observations of a `p`-dimensional response:
    /// `IG(1/2, np/2)` on `c_beta`, uniform inclusion probabilities,
    /// `IG(1.1, 1.1)` on every `c_alpha` and `HN(2)` on every `sigma_j`.
    pub fn defaults(n: usize, p: usize) -> Self {
        PriorConfig {
            c_beta_shape: 0.5,
            c_beta_scale: (n * p) as f64 / 2.0,
            mean_inclusion: BetaPrior::default(),
            variance_inclusion: BetaPrior::default(),
            c_alpha: ScalePrior::InverseGamma {
                shape: 1.1,
                scale: 1.1,
            },
            sigma2: ScalePrior::HalfNormal { phi2: 2.0 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_beta_shape > 0.0 && self.c_beta_scale > 0.0) {
            return Err(ModelError::config("priors.c_beta", "shape and scale must be positive"));
        }
        for (path, b) in [
            ("priors.mean_inclusion", self.mean_inclusion),
            ("priors.variance_inclusion", self.variance_inclusion),
        ] {
            if !(b.a > 0.0 && b.b > 0.0) {
                return Err(ModelError::config(path, "beta parameters must be positive"));
            }
        }
        self.c_alpha.validate("priors.c_alpha")?;
        self.sigma2.validate("priors.sigma2")
    }
}

/// Transformation applied to correlations before the normal shadow prior.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Link {
    FisherZ,
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelationVariant {
    Common,
    /// Dirichlet-process clustering of the correlations, truncated at
    /// `truncation` components.
    GroupedCorrelations { truncation: usize },
    /// Dirichlet-process clustering of the variables into at most `groups`
    /// groups, giving `groups (groups + 1) / 2` correlation clusters.
    GroupedVariables { groups: usize },
}

impl CorrelationVariant {
    pub const NAMES: [&'static str; 3] = ["common", "grouped-correlations", "grouped-variables"];

    /// Number of cluster means carried by the shadow state.
    pub fn n_means(&self) -> usize {
        match *self {
            CorrelationVariant::Common => 1,
            CorrelationVariant::GroupedCorrelations { truncation } => truncation,
            CorrelationVariant::GroupedVariables { groups } => groups * (groups + 1) / 2,
        }
    }

    /// Number of stick-breaking components.
    pub fn n_components(&self) -> usize {
        match *self {
            CorrelationVariant::Common => 0,
            CorrelationVariant::GroupedCorrelations { truncation } => truncation,
            CorrelationVariant::GroupedVariables { groups } => groups,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CorrelationVariant::Common => Self::NAMES[0],
            CorrelationVariant::GroupedCorrelations { .. } => Self::NAMES[1],
            CorrelationVariant::GroupedVariables { .. } => Self::NAMES[2],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationModelSpec {
    pub variant: CorrelationVariant,
    pub link: Link,
    /// Shadow-prior variance on the link scale.
    pub tau2: f64,
    /// Variance of the normal prior on `mu_R` (and of the DP base measure).
    pub mu_var: f64,
    /// `sigma_R ~ HN(sigma_r_phi2)`.
    pub sigma_r_phi2: f64,
    /// `Gamma(shape, rate)` prior on the DP concentration.
    pub concentration_shape: f64,
    pub concentration_rate: f64,
}

impl CorrelationModelSpec {
    pub fn common() -> Self {
        CorrelationModelSpec {
            variant: CorrelationVariant::Common,
            link: Link::FisherZ,
            tau2: 1e-2,
            mu_var: 1.0,
            sigma_r_phi2: 1.0,
            concentration_shape: 5.0,
            concentration_rate: 2.0,
        }
    }

    /// Grouped correlations with the default truncation `min(20, p(p-1)/2)`.
    pub fn grouped_correlations(p: usize) -> Self {
        let d = p * p.saturating_sub(1) / 2;
        CorrelationModelSpec {
            variant: CorrelationVariant::GroupedCorrelations {
                truncation: d.clamp(1, 20),
            },
            ..Self::common()
        }
    }

    pub fn grouped_variables(groups: usize) -> Self {
        CorrelationModelSpec {
            variant: CorrelationVariant::GroupedVariables { groups },
            ..Self::common()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let path = "correlation";
        if !(self.tau2 > 0.0) {
            return Err(ModelError::config(format!("{path}.tau2"), "must be positive"));
        }
        if !(self.mu_var > 0.0 && self.sigma_r_phi2 > 0.0) {
            return Err(ModelError::config(path, "prior variances must be positive"));
        }
        if !(self.concentration_shape > 0.0 && self.concentration_rate > 0.0) {
            return Err(ModelError::config(
                format!("{path}.concentration"),
                "gamma parameters must be positive",
            ));
        }
        match self.variant {
            CorrelationVariant::GroupedCorrelations { truncation: 0 } => Err(ModelError::config(
                format!("{path}.truncation"),
                "must be at least 1",
            )),
            CorrelationVariant::GroupedVariables { groups: 0 } => {
                Err(ModelError::config(format!("{path}.groups"), "must be at least 1"))
            }
            _ => Ok(()),
        }
    }
}

/// Full model: responses, mean and log-variance predictors, priors and the
/// correlation model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Response columns in the dataset.
    pub responses: Vec<usize>,
    pub mean_terms: Vec<TermSpec>,
    pub variance_terms: Vec<TermSpec>,
    pub correlation: CorrelationModelSpec,
    pub priors: PriorConfig,
    /// Centre and scale responses and covariates before fitting.
    pub standardize: bool,
}

impl ModelSpec {
    pub fn p(&self) -> usize {
        self.responses.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.responses.is_empty() {
            return Err(ModelError::config("responses", "at least one response is required"));
        }
        for t in self.mean_terms.iter().chain(&self.variance_terms) {
            t.validate()?;
        }
        self.priors.validate()?;
        self.correlation.validate()
    }
}
