//! Densities and random draws used by the sampler.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Beta, ChiSquared, Distribution, Gamma, StandardNormal};

use crate::linalg;

pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Gamma draw with shape/rate parametrization.
pub fn gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    Gamma::new(shape, 1.0 / rate)
        .expect("gamma parameters must be positive")
        .sample(rng)
}

/// `IG(shape, scale)`: reciprocal of a `Gamma(shape, rate = scale)` draw.
pub fn inverse_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, scale: f64) -> f64 {
    1.0 / gamma(rng, shape, scale)
}

pub fn beta<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    Beta::new(a, b).expect("beta parameters must be positive").sample(rng)
}

/// Draw `E ~ IW(df, scale)` (mean `scale / (df - p - 1)`) by inverting a
/// Bartlett-factor Wishart draw. Returns `None` when the scale or the draw is
/// numerically not positive definite.
pub fn inverse_wishart<R: Rng + ?Sized>(
    rng: &mut R,
    df: f64,
    scale: &DMatrix<f64>,
) -> Option<DMatrix<f64>> {
    let p = scale.nrows();
    let prec = linalg::cholesky(scale)?.inverse();
    let prec = (&prec + prec.transpose()) * 0.5;
    let l = linalg::cholesky(&prec)?.l();
    let mut a = DMatrix::<f64>::zeros(p, p);
    for i in 0..p {
        let chi = ChiSquared::new(df - i as f64).ok()?.sample(rng);
        a[(i, i)] = chi.sqrt();
        for j in 0..i {
            a[(i, j)] = std_normal(rng);
        }
    }
    let la = &l * &a;
    let w = &la * la.transpose();
    let e = linalg::cholesky(&w)?.inverse();
    let e = (&e + e.transpose()) * 0.5;
    if e.iter().all(|v| v.is_finite()) {
        Some(e)
    } else {
        None
    }
}

/// Inverse-Wishart log density up to terms depending only on `(df, p)`:
/// `(df/2) log|Ψ| − ((df+p+1)/2) log|E| − tr(Ψ E⁻¹)/2`.
pub fn inverse_wishart_log_kernel(e: &DMatrix<f64>, df: f64, scale: &DMatrix<f64>) -> Option<f64> {
    let p = e.nrows() as f64;
    let ce = linalg::cholesky(e)?;
    let cs = linalg::cholesky(scale)?;
    Some(
        0.5 * df * linalg::log_det(&cs) - 0.5 * (df + p + 1.0) * linalg::log_det(&ce)
            - 0.5 * linalg::trace_inv_product(&ce, scale),
    )
}

/// Draw a block of binary indicators from the beta-binomial prior
/// predictive given the indicators outside the block (Pólya urn). `others`
/// is the number of ones outside the block and `outside` their count.
pub fn polya_block<R: Rng + ?Sized>(
    rng: &mut R,
    a: f64,
    b: f64,
    ones_outside: usize,
    outside: usize,
    block_len: usize,
) -> Vec<bool> {
    let mut ones = ones_outside as f64;
    let mut seen = outside as f64;
    (0..block_len)
        .map(|_| {
            let p1 = (a + ones) / (a + b + seen);
            let on = rng.random::<f64>() < p1;
            if on {
                ones += 1.0;
            }
            seen += 1.0;
            on
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn inverse_wishart_mean_matches_scale_over_dof() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let psi = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        let df = 12.0;
        let n = 20_000;
        let mut acc = DMatrix::<f64>::zeros(2, 2);
        let mut sq = DMatrix::<f64>::zeros(2, 2);
        for _ in 0..n {
            let e = inverse_wishart(&mut rng, df, &psi).unwrap();
            sq += e.component_mul(&e);
            acc += e;
        }
        let m = &acc / n as f64;
        let v = &sq / n as f64 - m.component_mul(&m);
        let want = &psi / (df - 3.0);
        for i in 0..2 {
            for j in 0..2 {
                let se = (v[(i, j)] / n as f64).sqrt();
                assert!((m[(i, j)] - want[(i, j)]).abs() < 4.0 * se, "{i},{j}");
            }
        }
    }

    #[test]
    fn polya_block_marginal_matches_prior_mean() {
        // with nothing outside the block, P(first = 1) = a / (a + b)
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let n = 40_000;
        let hits = (0..n).filter(|_| polya_block(&mut rng, 1.0, 3.0, 0, 0, 1)[0]).count();
        let p = hits as f64 / n as f64;
        assert!((p - 0.25).abs() < 4.0 * (0.25f64 * 0.75 / n as f64).sqrt());
    }

    #[test]
    fn inverse_gamma_mean() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let (a, b) = (4.0, 3.0);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| inverse_gamma(&mut rng, a, b)).collect();
        let m = crate::stats::mean(&draws);
        let se = crate::stats::sd(&draws) / (n as f64).sqrt();
        assert!((m - b / (a - 1.0)).abs() < 3.0 * se);
    }
}
