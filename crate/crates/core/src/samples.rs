//! Retained draws and their flat, named-column representation.

use serde::{Deserialize, Serialize};

use crate::correlation::pairs;
use crate::error::{ModelError, Result};
use crate::state::SamplerState;
use crate::tuning::TuningState;

/// Dimensions fixing the flat column layout of a draw.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub p: usize,
    pub kx: usize,
    pub kz: usize,
    pub n_means: usize,
    pub n_labels: usize,
    pub n_weights: usize,
}

impl Layout {
    pub fn n_corr(&self) -> usize {
        self.p * self.p.saturating_sub(1) / 2
    }

    /// Column names, in the order of [`Draw::flatten`].
    pub fn names(&self) -> Vec<String> {
        let (p, kx, kz) = (self.p, self.kx, self.kz);
        let mut v = Vec::new();
        for j in 1..=p {
            for c in 0..=kx {
                v.push(format!("beta[{j},{c}]"));
            }
        }
        for j in 1..=p {
            for c in 1..=kx {
                v.push(format!("gamma[{j},{c}]"));
            }
        }
        for j in 1..=p {
            for c in 1..=kz {
                v.push(format!("alpha[{j},{c}]"));
            }
        }
        for j in 1..=p {
            for c in 1..=kz {
                v.push(format!("delta[{j},{c}]"));
            }
        }
        v.extend((1..=p).map(|j| format!("sigma2[{j}]")));
        v.push("c_beta".into());
        v.extend((1..=p).map(|j| format!("c_alpha[{j}]")));
        let pr = pairs(p);
        v.extend(pr.iter().map(|(k, l)| format!("r[{},{}]", k + 1, l + 1)));
        v.extend(pr.iter().map(|(k, l)| format!("theta[{},{}]", k + 1, l + 1)));
        v.extend((1..=self.n_means).map(|h| format!("mu_r[{h}]")));
        v.push("sigma2_r".into());
        v.extend((1..=self.n_labels).map(|h| format!("label[{h}]")));
        v.extend((1..=self.n_weights).map(|h| format!("weight[{h}]")));
        v.push("concentration".into());
        v
    }

    pub fn width(&self) -> usize {
        let (p, kx, kz) = (self.p, self.kx, self.kz);
        p * (1 + kx) + p * kx + 2 * p * kz + 2 * p + 1 + 2 * self.n_corr() + self.n_means + 1 + self.n_labels
            + self.n_weights
            + 1
    }
}

/// One retained state, flattened to plain vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    /// `p x (1 + kx)`, row-major.
    pub beta: Vec<f64>,
    /// `p x kx`, row-major.
    pub gamma: Vec<bool>,
    pub alpha: Vec<f64>,
    pub delta: Vec<bool>,
    pub sigma2: Vec<f64>,
    pub c_beta: f64,
    pub c_alpha: Vec<f64>,
    /// Upper-triangular correlations, row-major.
    pub corr: Vec<f64>,
    pub theta: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma2_r: f64,
    /// 0-based.
    pub labels: Vec<usize>,
    pub weights: Vec<f64>,
    pub concentration: f64,
}

impl Draw {
    pub fn from_state(s: &SamplerState) -> Self {
        let p = s.p();
        let row_major = |m: &nalgebra::DMatrix<f64>| {
            (0..m.nrows())
                .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
                .map(|ij| m[ij])
                .collect::<Vec<f64>>()
        };
        Draw {
            beta: row_major(&s.beta),
            gamma: s.gamma.iter().flatten().copied().collect(),
            alpha: row_major(&s.alpha),
            delta: s.delta.iter().flatten().copied().collect(),
            sigma2: s.sigma2.clone(),
            c_beta: s.c_beta,
            c_alpha: s.c_alpha.clone(),
            corr: pairs(p).into_iter().map(|kl| s.corr[kl]).collect(),
            theta: s.shadow.theta.clone(),
            mu: s.shadow.mu.clone(),
            sigma2_r: s.shadow.sigma2_r,
            labels: s.shadow.labels.clone(),
            weights: s.shadow.weights.clone(),
            concentration: s.shadow.concentration,
        }
    }

    /// Correlation matrix of the draw.
    pub fn corr_matrix(&self, p: usize) -> nalgebra::DMatrix<f64> {
        let mut r = nalgebra::DMatrix::identity(p, p);
        for (c, (k, l)) in pairs(p).into_iter().enumerate() {
            r[(k, l)] = self.corr[c];
            r[(l, k)] = self.corr[c];
        }
        r
    }

    /// Coefficient of response `j` (0-based) on mean design column `c`
    /// (0 = intercept).
    pub fn beta_at(&self, kx: usize, j: usize, c: usize) -> f64 {
        self.beta[j * (kx + 1) + c]
    }

    pub fn gamma_at(&self, kx: usize, j: usize, c: usize) -> bool {
        self.gamma[j * kx + c]
    }

    pub fn flatten(&self) -> Vec<f64> {
        let b = |v: &bool| if *v { 1.0 } else { 0.0 };
        let mut out = Vec::new();
        out.extend(&self.beta);
        out.extend(self.gamma.iter().map(b));
        out.extend(&self.alpha);
        out.extend(self.delta.iter().map(b));
        out.extend(&self.sigma2);
        out.push(self.c_beta);
        out.extend(&self.c_alpha);
        out.extend(&self.corr);
        out.extend(&self.theta);
        out.extend(&self.mu);
        out.push(self.sigma2_r);
        out.extend(self.labels.iter().map(|l| (l + 1) as f64));
        out.extend(&self.weights);
        out.push(self.concentration);
        out
    }

    pub fn unflatten(layout: &Layout, row: &[f64]) -> Result<Self> {
        if row.len() != layout.width() {
            return Err(ModelError::Data(format!(
                "draw row has {} values, layout needs {}",
                row.len(),
                layout.width()
            )));
        }
        let mut it = row.iter().copied();
        let mut take = |k: usize| it.by_ref().take(k).collect::<Vec<f64>>();
        let (p, kx, kz) = (layout.p, layout.kx, layout.kz);
        let flag = |v: Vec<f64>| v.into_iter().map(|x| x != 0.0).collect::<Vec<bool>>();
        let beta = take(p * (1 + kx));
        let gamma = flag(take(p * kx));
        let alpha = take(p * kz);
        let delta = flag(take(p * kz));
        let sigma2 = take(p);
        let c_beta = take(1)[0];
        let c_alpha = take(p);
        let corr = take(layout.n_corr());
        let theta = take(layout.n_corr());
        let mu = take(layout.n_means);
        let sigma2_r = take(1)[0];
        let labels = take(layout.n_labels)
            .into_iter()
            .map(|l| {
                if l >= 1.0 && l.fract() == 0.0 {
                    Ok(l as usize - 1)
                } else {
                    Err(ModelError::Data(format!("cluster label {l} is not a positive integer")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let weights = take(layout.n_weights);
        let concentration = take(1)[0];
        Ok(Draw {
            beta,
            gamma,
            alpha,
            delta,
            sigma2,
            c_beta,
            c_alpha,
            corr,
            theta,
            mu,
            sigma2_r,
            labels,
            weights,
            concentration,
        })
    }
}

/// Numerical events handled as rejections.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainHealth {
    pub rank_deficient: u64,
    pub non_pd_proposal: u64,
    pub irls_singular: u64,
    pub newton_fallback: u64,
    pub invariant_violations: u64,
}

impl ChainHealth {
    pub fn total(&self) -> u64 {
        self.rank_deficient + self.non_pd_proposal + self.irls_singular + self.newton_fallback
            + self.invariant_violations
    }
}

/// Acceptance of one move over the final quarter of burn-in and after it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoveAcceptance {
    pub name: String,
    pub adapted: bool,
    pub burn_in_tail: Option<f64>,
    pub sampling: Option<f64>,
    /// Final tuned value (a proposal variance, or `zeta`).
    pub final_value: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub acceptance: Vec<MoveAcceptance>,
    pub health: ChainHealth,
}

impl ChainReport {
    pub fn from_tuning(t: &TuningState, health: ChainHealth) -> Self {
        let mut acceptance: Vec<MoveAcceptance> = t
            .adapted()
            .into_iter()
            .map(|(name, tu)| MoveAcceptance {
                final_value: Some(if name == "zeta" { t.zeta_value() } else { tu.scale() }),
                name,
                adapted: true,
                burn_in_tail: tu.tail.rate(),
                sampling: tu.sampling.rate(),
            })
            .collect();
        for (name, tu) in [("gamma", &t.gamma), ("delta", &t.delta), ("alpha_walk", &t.alpha_walk)] {
            acceptance.push(MoveAcceptance {
                name: name.into(),
                adapted: false,
                burn_in_tail: tu.tail.rate(),
                sampling: tu.sampling.rate(),
                final_value: None,
            });
        }
        ChainReport { acceptance, health }
    }
}

/// Thinned post-burn-in draws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSamples {
    pub layout: Layout,
    /// 1-based sweep number of each draw.
    pub sweeps: Vec<usize>,
    pub draws: Vec<Draw>,
    pub report: Option<ChainReport>,
}

impl ChainSamples {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Values of one flat column across draws.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.layout.names().iter().position(|n| n == name)?;
        Some(self.draws.iter().map(|d| d.flatten()[idx]).collect())
    }
}
