//! The full set of unknowns at one sweep.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::correlation::ShadowState;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerState {
    /// Mean coefficients, `p x (1 + Kx)`; column 0 holds the intercepts.
    pub beta: DMatrix<f64>,
    /// Mean inclusion indicators, `p x Kx`.
    pub gamma: Vec<Vec<bool>>,
    /// Log-variance coefficients, `p x Kz`.
    pub alpha: DMatrix<f64>,
    /// Log-variance inclusion indicators, `p x Kz`.
    pub delta: Vec<Vec<bool>>,
    /// Baseline variances `sigma_j^2`.
    pub sigma2: Vec<f64>,
    pub c_beta: f64,
    pub c_alpha: Vec<f64>,
    /// Correlation matrix `R`.
    pub corr: DMatrix<f64>,
    pub shadow: ShadowState,
}

impl SamplerState {
    pub fn p(&self) -> usize {
        self.sigma2.len()
    }

    /// Number of selected mean coefficients, intercepts excluded.
    pub fn n_gamma(&self) -> usize {
        self.gamma.iter().flatten().filter(|g| **g).count()
    }

    /// Column indices of `x` used by response `j`: the intercept plus every
    /// selected coefficient.
    pub fn mean_index(&self, j: usize) -> Vec<usize> {
        std::iter::once(0)
            .chain(
                self.gamma[j]
                    .iter()
                    .enumerate()
                    .filter(|(_, g)| **g)
                    .map(|(c, _)| c + 1),
            )
            .collect()
    }

    /// Inclusion pattern rendered as one bit string per response.
    pub fn gamma_pattern(&self) -> String {
        self.gamma
            .iter()
            .map(|g| g.iter().map(|b| if *b { '1' } else { '0' }).collect::<String>())
            .collect::<Vec<_>>()
            .join("/")
    }

    /// Checks that deselected coefficients are exactly zero and scale
    /// parameters are positive.
    pub fn check(&self) -> Result<(), String> {
        let p = self.p();
        for j in 0..p {
            for (c, g) in self.gamma[j].iter().enumerate() {
                if !g && self.beta[(j, c + 1)] != 0.0 {
                    return Err(format!("beta[{j},{}] nonzero while deselected", c + 1));
                }
            }
            for (c, d) in self.delta[j].iter().enumerate() {
                if !d && self.alpha[(j, c)] != 0.0 {
                    return Err(format!("alpha[{j},{c}] nonzero while deselected"));
                }
            }
            if !(self.sigma2[j] > 0.0) || !(self.c_alpha[j] > 0.0) {
                return Err(format!("non-positive scale for response {j}"));
            }
        }
        if !(self.c_beta > 0.0) {
            return Err("non-positive c_beta".into());
        }
        if !crate::linalg::is_correlation(&self.corr) {
            return Err("R is not a correlation matrix".into());
        }
        let w = &self.shadow.weights;
        if !w.is_empty() && (w.iter().sum::<f64>() - 1.0).abs() > 1e-10 {
            return Err("stick weights do not sum to one".into());
        }
        Ok(())
    }
}

