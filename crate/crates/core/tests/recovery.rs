use mvsmooth::posterior::{correlation_summary, inclusion_probabilities};
use mvsmooth::rng::stream_rng;
use mvsmooth::simharness::equicorrelation;
use mvsmooth::{
    build_designs, run_chain, CorrelationModelSpec, CorrelationVariant, Dataset, ModelSpec, PriorConfig, Schedule,
    TermSpec,
};
use rand::Rng;
use rand_distr::StandardNormal;

#[test]
fn variance_term_is_selected_only_when_it_matters() {
    let mut rng = stream_rng(41, 0);
    let n = 300;
    let (mut y, mut x1, mut x2) = (vec![], vec![], vec![]);
    for _ in 0..n {
        let a: f64 = rng.random_range(-1.0..1.0);
        let b: f64 = rng.random_range(-1.0..1.0);
        let e: f64 = rng.sample(StandardNormal);
        // log variance 1.5 * x1, nothing from x2
        y.push(a + (0.75 * a).exp() * e);
        x1.push(a);
        x2.push(b);
    }
    let data = Dataset::new(vec!["y".into(), "x1".into(), "x2".into()], vec![y, x1, x2]).unwrap();
    let spec = ModelSpec {
        responses: vec![0],
        mean_terms: vec![TermSpec::parametric(1)],
        variance_terms: vec![TermSpec::parametric(1), TermSpec::parametric(2)],
        correlation: CorrelationModelSpec::common(),
        priors: PriorConfig::defaults(n, 1),
        standardize: true,
    };
    let designs = build_designs(&data, &spec).unwrap();
    let samples = run_chain(&designs, &spec, &Schedule::new(6000, 3000, 2, 5)).unwrap();
    let inc = inclusion_probabilities(&samples, &designs);
    assert!(inc.variance_term[0][0] > 0.95, "{:?}", inc.variance_term);
    assert!(inc.variance_term[0][1] < 0.5, "{:?}", inc.variance_term);
    assert!(inc.mean_term[0][0] > 0.95);
}

fn correlated(n: usize, rho: f64, seed: u64) -> Dataset {
    let mut rng = stream_rng(seed, 0);
    let l = equicorrelation(3, rho).cholesky().unwrap().l();
    let mut cols = vec![Vec::with_capacity(n); 4];
    for _ in 0..n {
        let z = nalgebra::DVector::from_fn(3, |_, _| rng.sample(StandardNormal));
        let e = &l * z;
        let x: f64 = rng.sample(StandardNormal);
        for k in 0..3 {
            cols[k].push(x + e[k]);
        }
        cols[3].push(x);
    }
    Dataset::new(["y1", "y2", "y3", "x"].map(String::from).to_vec(), cols).unwrap()
}

#[test]
fn single_component_dp_matches_common_prior() {
    let data = correlated(150, 0.4, 8);
    let base = ModelSpec {
        responses: vec![0, 1, 2],
        mean_terms: vec![TermSpec::parametric(3)],
        variance_terms: vec![],
        correlation: CorrelationModelSpec::common(),
        priors: PriorConfig::defaults(150, 3),
        standardize: true,
    };
    let one = ModelSpec {
        correlation: CorrelationModelSpec {
            variant: CorrelationVariant::GroupedCorrelations { truncation: 1 },
            ..CorrelationModelSpec::common()
        },
        ..base.clone()
    };
    let designs = build_designs(&data, &base).unwrap();
    let mean_r = |spec: &ModelSpec, seed: u64| {
        let s = run_chain(&designs, spec, &Schedule::new(8000, 3000, 2, seed)).unwrap();
        let c = correlation_summary(&s, &spec.correlation.variant);
        c.iter().map(|c| c.mean).sum::<f64>() / c.len() as f64
    };
    let a = mean_r(&base, 1);
    let b = mean_r(&one, 2);
    assert!((a - 0.4).abs() < 0.12, "{a}");
    assert!((a - b).abs() < 0.03, "common {a} vs H=1 {b}");
}

#[test]
fn variance_coefficients_mix_in_every_response() {
    let mut rng = stream_rng(12, 0);
    let n = 200;
    let l = equicorrelation(2, 0.6).cholesky().unwrap().l();
    let mut cols = vec![Vec::with_capacity(n); 4];
    for _ in 0..n {
        let x1: f64 = rng.random_range(-1.0..1.0);
        let x2: f64 = rng.random_range(-1.0..1.0);
        let e = &l * nalgebra::DVector::from_fn(2, |_, _| rng.sample(StandardNormal));
        let s = (0.5 * x2).exp();
        cols[0].push((3.0 * x1).sin() + 0.5 * x2 + s * e[0]);
        cols[1].push(0.8 * x2 + s * e[1]);
        cols[2].push(x1);
        cols[3].push(x2);
    }
    let data = Dataset::new(["y1", "y2", "x1", "x2"].map(String::from).to_vec(), cols).unwrap();
    let spec = ModelSpec {
        responses: vec![0, 1],
        mean_terms: vec![TermSpec::smooth(2, 8).unwrap(), TermSpec::parametric(3)],
        variance_terms: vec![TermSpec::parametric(3)],
        correlation: CorrelationModelSpec::common(),
        priors: PriorConfig::defaults(n, 2),
        standardize: true,
    };
    let designs = build_designs(&data, &spec).unwrap();
    // standardized x2 has sd 1/sqrt(3), so the true coefficient is 0.577
    for seed in [3, 7] {
        let s = run_chain(&designs, &spec, &Schedule::new(4000, 2000, 2, seed)).unwrap();
        for j in 0..2 {
            let a: Vec<f64> = s.draws.iter().map(|d| d.alpha[j]).collect();
            let mean = a.iter().sum::<f64>() / a.len() as f64;
            let distinct = a.windows(2).filter(|w| w[0] != w[1]).count();
            assert!(distinct > a.len() / 4, "seed {seed} response {j}: {distinct} moves");
            assert!((mean - 0.577).abs() < 0.25, "seed {seed} response {j}: {mean}");
        }
    }
}
