//! One PASS/FAIL line per acceptance criterion. Criteria that fail are
//! reported, not asserted; the test itself only fails on a crash.

use std::io::Write;
use std::time::Instant;

use mvsmooth::correlation::{fisher_z, inv_fisher_z, link_jacobian, separation_log_jacobian, ShadowState};
use mvsmooth::distributions::{inverse_gamma, std_normal};
use mvsmooth::likelihood::{compute_s, full_loglik, marginal_loglik};
use mvsmooth::model::{BetaPrior, ScalePrior};
use mvsmooth::rng::{derive_seed, ChainRng};
use mvsmooth::simharness::{self, SimMetrics, SimScenario};
use mvsmooth::stats::ks_two_sample;
use mvsmooth::tuning::{Phase, TuningState};
use mvsmooth::{
    build_designs, run_chain, CorrelationModelSpec, Dataset, DesignMatrices, Link, ModelSpec, PriorConfig, Sampler,
    SamplerState, Schedule, TermSpec,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};

const SEED: u64 = 2024;

struct Outcome {
    pass: bool,
    detail: String,
}

// Written to the raw stderr handle, which the test harness does not capture,
// so the lines show up in a plain `cargo test` run.
fn emit(line: &str) {
    let _ = writeln!(std::io::stderr(), "{line}");
}

fn report(id: usize, name: &str, start: Instant, o: &Outcome) {
    emit(&format!(
        "criterion {id} {}: {name}: {} ({:.1} s)",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        start.elapsed().as_secs_f64()
    ));
}

/// Acceptance rates and crash counts gathered from every fit.
#[derive(Default)]
struct Hygiene {
    fits: usize,
    crashes: Vec<String>,
    out_of_band: Vec<String>,
    lowest: f64,
    highest: f64,
}

impl Hygiene {
    fn new() -> Self {
        Hygiene {
            lowest: f64::INFINITY,
            highest: f64::NEG_INFINITY,
            ..Default::default()
        }
    }

    fn rate(&mut self, label: &str, rate: f64) {
        self.lowest = self.lowest.min(rate);
        self.highest = self.highest.max(rate);
        if !(0.15..=0.30).contains(&rate) {
            self.out_of_band.push(format!("{label}={rate:.3}"));
        }
    }

    fn chain(&mut self, label: &str, samples: &mvsmooth::ChainSamples) {
        self.fits += 1;
        for a in samples.report.iter().flat_map(|r| &r.acceptance).filter(|a| a.adapted) {
            if let Some(r) = a.burn_in_tail {
                self.rate(&format!("{label}/{}", a.name), r);
            }
        }
    }

    fn sim(&mut self, label: &str, m: &SimMetrics) {
        for (r, e) in &m.failures {
            self.crashes.push(format!("{label} replicate {r}: {e}"));
        }
        for rep in &m.replicates {
            for f in &rep.fits {
                self.fits += 1;
                for (name, r) in &f.acceptance {
                    self.rate(&format!("{label}/r{}/d{}/{name}", rep.replicate, f.d), *r);
                }
            }
        }
    }
}

// ---------- dense oracles ----------

fn dataset(cols: Vec<Vec<f64>>) -> Dataset {
    let names = (0..cols.len()).map(|i| format!("v{i}")).collect();
    Dataset::new(names, cols).unwrap()
}

fn random_corr(rng: &mut ChainRng, p: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(p, p + 2, |_, _| std_normal(rng));
    let s = &a * a.transpose();
    DMatrix::from_fn(p, p, |i, j| s[(i, j)] / (s[(i, i)] * s[(j, j)]).sqrt())
}

/// Stacked covariance, observation-major.
fn dense_sigma(d: &DesignMatrices, s: &SamplerState) -> DMatrix<f64> {
    let (n, p) = (d.n, d.p);
    let mut sig = DMatrix::zeros(n * p, n * p);
    for i in 0..n {
        let lv: Vec<f64> = (0..p)
            .map(|j| s.sigma2[j].ln() + (0..d.z.ncols()).map(|c| d.z[(i, c)] * s.alpha[(j, c)]).sum::<f64>())
            .collect();
        for j in 0..p {
            for l in 0..p {
                sig[(i * p + j, i * p + l)] = s.corr[(j, l)] * (0.5 * (lv[j] + lv[l])).exp();
            }
        }
    }
    sig
}

/// Block design of the included columns, observation-major rows.
fn dense_design(d: &DesignMatrices, s: &SamplerState) -> DMatrix<f64> {
    let idx: Vec<Vec<usize>> = (0..d.p).map(|j| s.mean_index(j)).collect();
    let m: usize = idx.iter().map(Vec::len).sum();
    let mut x = DMatrix::zeros(d.n * d.p, m);
    let mut col = 0;
    for (j, ix) in idx.iter().enumerate() {
        for &c in ix {
            for i in 0..d.n {
                x[(i * d.p + j, col)] = d.x[(i, c)];
            }
            col += 1;
        }
    }
    x
}

fn stacked_y(d: &DesignMatrices) -> DVector<f64> {
    DVector::from_iterator(d.n * d.p, (0..d.n).flat_map(|i| (0..d.p).map(move |j| d.y[(i, j)])))
}

/// `y'W y - c/(1+c) y'W X (X'W X)^{-1} X'W y` with `W = Sigma^{-1}`.
fn dense_s(d: &DesignMatrices, s: &SamplerState) -> f64 {
    let w = dense_sigma(d, s).try_inverse().unwrap();
    let x = dense_design(d, s);
    let y = stacked_y(d);
    let xtwx = x.transpose() * &w * &x;
    let xtwy = x.transpose() * &w * &y;
    let shrink = s.c_beta / (1.0 + s.c_beta);
    (y.transpose() * &w * &y)[(0, 0)] - shrink * (xtwy.transpose() * xtwx.try_inverse().unwrap() * &xtwy)[(0, 0)]
}

fn dense_loglik(d: &DesignMatrices, s: &SamplerState, beta: &DVector<f64>) -> f64 {
    let sig = dense_sigma(d, s);
    let r = stacked_y(d) - dense_design(d, s) * beta;
    let ch = sig.cholesky().unwrap();
    let ld = 2.0 * ch.l().diagonal().map(f64::ln).sum();
    -0.5 * ((d.n * d.p) as f64 * (2.0 * std::f64::consts::PI).ln() + ld + r.dot(&ch.solve(&r)))
}

fn random_instance(rng: &mut ChainRng, n: usize, p: usize, kx: usize, kz: usize) -> (DesignMatrices, SamplerState) {
    let ncol = p + kx + kz;
    let cols: Vec<Vec<f64>> = (0..ncol).map(|_| (0..n).map(|_| std_normal(rng)).collect()).collect();
    let spec = ModelSpec {
        responses: (0..p).collect(),
        mean_terms: (p..p + kx).map(TermSpec::parametric).collect(),
        variance_terms: (p + kx..ncol).map(TermSpec::parametric).collect(),
        correlation: CorrelationModelSpec::common(),
        priors: PriorConfig::defaults(n, p),
        standardize: false,
    };
    let d = build_designs(&dataset(cols), &spec).unwrap();
    let gamma: Vec<Vec<bool>> = (0..p).map(|_| (0..kx).map(|_| rng.random::<f64>() < 0.6).collect()).collect();
    let delta: Vec<Vec<bool>> = (0..p).map(|_| (0..kz).map(|_| rng.random::<f64>() < 0.6).collect()).collect();
    let alpha = DMatrix::from_fn(p, kz, |j, c| if delta[j][c] { 0.3 * std_normal(rng) } else { 0.0 });
    let state = SamplerState {
        beta: DMatrix::zeros(p, kx + 1),
        gamma,
        alpha,
        delta,
        sigma2: (0..p).map(|_| 0.5 + rng.random::<f64>()).collect(),
        c_beta: 0.5 + 3.0 * rng.random::<f64>(),
        c_alpha: vec![1.0; p],
        corr: random_corr(rng, p),
        shadow: ShadowState::new(&CorrelationModelSpec::common(), p),
    };
    (d, state)
}

// ---------- criterion 1 ----------

fn oracle_equivalence() -> Outcome {
    let mut rng = ChainRng::seed_from_u64(SEED);
    // n = 4, p = 2, intercepts only: two coefficients
    let (d, mut s) = random_instance(&mut rng, 4, 2, 0, 0);
    s.c_beta = 2.0;
    let marg = marginal_loglik(&s, &d).unwrap();
    let x = dense_design(&d, &s);
    let w = dense_sigma(&d, &s).try_inverse().unwrap();
    let g = x.transpose() * w * &x;
    let l = (g / s.c_beta).cholesky().unwrap().l();
    let draws = 100_000;
    let mut ratios = Vec::with_capacity(draws);
    for _ in 0..draws {
        let z = DVector::from_fn(2, |_, _| std_normal(&mut rng));
        // beta ~ N(0, (L L')^{-1})
        let beta = l.transpose().solve_upper_triangular(&z).unwrap();
        ratios.push((dense_loglik(&d, &s, &beta) - marg).exp());
    }
    let mean = ratios.iter().sum::<f64>() / draws as f64;
    let sd = (ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (draws - 1) as f64).sqrt();
    let se = sd / (draws as f64).sqrt();
    let mc_ok = (mean - 1.0).abs() < 3.0 * se;
    // the full likelihood must agree with the dense density at the drawn beta too
    let mut s2 = s.clone();
    s2.beta = DMatrix::from_row_slice(2, 1, &[0.3, -0.7]);
    let full_gap = (full_loglik(&s2, &d).unwrap() - dense_loglik(&d, &s2, &DVector::from_vec(vec![0.3, -0.7]))).abs();

    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < 100 {
        let n = rng.random_range(2..=6);
        let p = rng.random_range(1..=6);
        let kx = rng.random_range(0..=2usize).min(n - 2);
        let kz = rng.random_range(0..=1);
        let (d, s) = random_instance(&mut rng, n, p, kx, kz);
        let Ok(q) = compute_s(&s, &d) else { continue };
        worst = worst.max((q.s - dense_s(&d, &s)).abs());
        checked += 1;
    }
    Outcome {
        pass: mc_ok && worst < 1e-8 && full_gap < 1e-8,
        detail: format!(
            "MC ratio {mean:.4} (3 SE = {:.4}); trace vs dense max |dS| = {worst:.2e} over 100 instances",
            3.0 * se
        ),
    }
}

// ---------- criterion 2 ----------

fn transforms() -> Outcome {
    let grid: Vec<f64> = (-999..=999).map(|k| k as f64 / 1000.0).collect();
    let round = grid
        .iter()
        .map(|&r| (inv_fisher_z(fisher_z(r).unwrap()) - r).abs())
        .fold(0.0, f64::max);
    let h = 1e-5;
    let jac = grid
        .iter()
        .filter(|r| r.abs() <= 0.95)
        .map(|&r| {
            let fd = (fisher_z(r + h).unwrap() - fisher_z(r - h).unwrap()) / (2.0 * h);
            (link_jacobian(Link::FisherZ, r).unwrap() - fd).abs()
        })
        .fold(0.0, f64::max);
    let sep = separation_log_jacobian(&[4.0, 9.0, 16.0]).exp();
    Outcome {
        pass: round < 1e-12 && jac < 1e-6 && (sep - 576.0).abs() < 1e-9,
        detail: format!("round trip {round:.1e}, jacobian vs FD {jac:.1e}, |D|^(p-1)/2 = {sep:.6}"),
    }
}

// ---------- criterion 3 ----------

struct Tiny {
    p: usize,
    spec: ModelSpec,
    designs: DesignMatrices,
}

impl Tiny {
    fn new(rng: &mut ChainRng, p: usize, covariate: bool) -> Self {
        let n = 20;
        let mut cols: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| std_normal(rng)).collect()).collect();
        cols.push((0..n).map(|_| rng.random::<f64>() - 0.5).collect());
        // a fixed-step walk on sigma^2 cannot cover the half-normal's three
        // orders of magnitude, so the tiny model takes the inverse gamma
        let mut priors = PriorConfig::defaults(n, p);
        priors.sigma2 = ScalePrior::InverseGamma { shape: 10.0, scale: 9.0 };
        let spec = ModelSpec {
            responses: (0..p).collect(),
            mean_terms: if covariate { vec![TermSpec::parametric(p)] } else { vec![] },
            variance_terms: vec![],
            correlation: CorrelationModelSpec::common(),
            priors,
            standardize: false,
        };
        let designs = build_designs(&dataset(cols), &spec).unwrap();
        Tiny { p, spec, designs }
    }

    /// Joint prior draw of every unknown.
    fn prior_draw(&self, rng: &mut ChainRng) -> SamplerState {
        let p = self.p;
        let pr = &self.spec.priors;
        let cs = &self.spec.correlation;
        let d = &self.designs;
        let kx = d.kx();
        let c_beta = inverse_gamma(rng, pr.c_beta_shape, pr.c_beta_scale);
        let BetaPrior { a, b } = pr.mean_inclusion;
        let gamma: Vec<Vec<bool>> = (0..p).map(|_| (0..kx).map(|_| rng.random::<f64>() < a / (a + b)).collect()).collect();
        let ScalePrior::InverseGamma { shape, scale } = pr.sigma2 else { unreachable!() };
        let sigma2: Vec<f64> = (0..p).map(|_| inverse_gamma(rng, shape, scale)).collect();
        let mut shadow = ShadowState::new(cs, p);
        let mut corr = DMatrix::identity(p, p);
        if p == 2 {
            let mu = cs.mu_var.sqrt() * std_normal(rng);
            let sigma2_r = cs.sigma_r_phi2 * std_normal(rng).powi(2);
            let theta = mu + sigma2_r.sqrt() * std_normal(rng);
            let r = inv_fisher_z(theta + cs.tau2.sqrt() * std_normal(rng));
            corr = DMatrix::from_row_slice(2, 2, &[1.0, r, r, 1.0]);
            shadow.mu = vec![mu];
            shadow.sigma2_r = sigma2_r;
            shadow.theta = vec![theta];
        }
        let mut s = SamplerState {
            beta: DMatrix::zeros(p, kx + 1),
            gamma,
            alpha: DMatrix::zeros(p, 0),
            delta: vec![vec![]; p],
            sigma2,
            c_beta,
            c_alpha: vec![1.0; p],
            corr,
            shadow,
        };
        // beta* ~ N(0, c (X~'X~)^{-1})
        let x = dense_design(d, &s);
        let w = dense_sigma(d, &s).try_inverse().unwrap();
        let prec = (x.transpose() * w * &x) / c_beta;
        let l = prec.cholesky().unwrap().l();
        let z = DVector::from_fn(x.ncols(), |_, _| std_normal(rng));
        let v = l.transpose().solve_upper_triangular(&z).unwrap();
        let mut k = 0;
        for j in 0..p {
            for c in s.mean_index(j) {
                s.beta[(j, c)] = v[k];
                k += 1;
            }
        }
        s
    }

    fn simulate_y(&self, s: &SamplerState, rng: &mut ChainRng) -> DMatrix<f64> {
        let d = &self.designs;
        let l = s.corr.clone().cholesky().unwrap().l();
        let mean = &d.x * s.beta.transpose();
        let mut y = DMatrix::zeros(d.n, self.p);
        for i in 0..d.n {
            let e = &l * DVector::from_fn(self.p, |_, _| std_normal(rng));
            for j in 0..self.p {
                y[(i, j)] = mean[(i, j)] + s.sigma2[j].sqrt() * e[j];
            }
        }
        y
    }
}

fn watched(s: &SamplerState) -> [f64; 3] {
    let slope = if s.beta.ncols() > 1 { s.beta[(0, 1)] } else { s.beta[(0, 0)] };
    let r = if s.p() > 1 { s.corr[(0, 1)] } else { s.c_beta.ln() };
    [slope, s.sigma2[0], r]
}

fn geweke() -> Outcome {
    geweke_with(500, 2, true)
}

fn geweke_with(thin: usize, p: usize, covariate: bool) -> Outcome {
    let mut rng = ChainRng::seed_from_u64(derive_seed(SEED, 3));
    let tiny = Tiny::new(&mut rng, p, covariate);
    let draws = 10_000;
    let warm = 5_000;

    let forward: Vec<[f64; 3]> = (0..draws).map(|_| watched(&tiny.prior_draw(&mut rng))).collect();

    let mut state = tiny.prior_draw(&mut rng);
    let mut tuning = TuningState::new(p, 0, &state.sigma2, false);
    let mut chain_rng = ChainRng::seed_from_u64(derive_seed(SEED, 4));
    let mut y = tiny.simulate_y(&state, &mut rng);
    let mut successive = Vec::with_capacity(draws);
    for it in 0..warm + draws * thin {
        let mut d = tiny.designs.clone();
        d.y = y;
        let mut s = Sampler::from_state(&d, &tiny.spec, state, tuning, chain_rng).unwrap();
        s.phase = if it < warm { Phase::Burn } else { Phase::Sampling };
        s.sweep();
        if it < warm && it % 25 == 24 {
            s.tuning.adapt();
        }
        chain_rng = s.rng().clone();
        state = s.state;
        tuning = s.tuning;
        y = tiny.simulate_y(&state, &mut rng);
        if it >= warm && (it - warm) % thin == thin - 1 {
            successive.push(watched(&state));
        }
    }
    let names = ["beta11", "sigma2_1", "r12"];
    let mut pass = true;
    let mut parts = Vec::new();
    for k in 0..3 {
        let a: Vec<f64> = forward.iter().map(|v| v[k]).collect();
        let b: Vec<f64> = successive.iter().map(|v| v[k]).collect();
        let (stat, pval) = ks_two_sample(&a, &b);
        if std::env::var("GEWEKE_DEBUG").is_ok() {
            let q = |v: &[f64]| {
                let mut v = v.to_vec();
                v.sort_by(f64::total_cmp);
                [0.05, 0.25, 0.5, 0.75, 0.95].map(|p| v[(p * (v.len() - 1) as f64) as usize])
            };
            eprintln!("{} forward {:?}\n    successive {:?}", names[k], q(&a), q(&b));
        }
        pass &= pval > 0.01;
        parts.push(format!("{} D={stat:.4} p={pval:.3}", names[k]));
    }
    Outcome {
        pass,
        detail: parts.join(", "),
    }
}

// ---------- criterion 4 ----------

fn relative_bias(m: &SimMetrics, d: usize) -> f64 {
    m.dims.iter().find(|s| s.d == d).and_then(|s| s.relative_bias).unwrap()
}

fn table_one(h: &mut Hygiene) -> (Outcome, SimMetrics) {
    let low = simharness::run_scenario(&SimScenario::desk(50, 0.1, vec![1, 2], 1, SEED)).unwrap();
    let high = simharness::run_scenario(&SimScenario::desk(50, 0.9, vec![1, 2], 1, SEED)).unwrap();
    h.sim("table1/rho0.1", &low);
    h.sim("table1/rho0.9", &high);
    let (a, b) = (relative_bias(&low, 2), relative_bias(&high, 2));
    let pass = (a - 94.41).abs() <= 10.0 && (b - 53.22).abs() <= 10.0 && b < a;
    (
        Outcome {
            pass,
            detail: format!("relative bias d=2: rho=0.1 {a:.2}% (94.41 +/- 10), rho=0.9 {b:.2}% (53.22 +/- 10)"),
        },
        high,
    )
}

// ---------- criterion 5 ----------

fn selection(h: &mut Hygiene) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (n, target) in [(50, 8.26), (150, 5.17)] {
        let mut sc = SimScenario::desk(n, 0.5, vec![1], 2, SEED);
        sc.inclusion = Some(BetaPrior { a: 1.0, b: 3.0 });
        let m = simharness::run_scenario(&sc).unwrap();
        h.sim(&format!("selection/n{n}"), &m);
        let s = &m.dims[0];
        let each = s.irrelevant_each.unwrap();
        pass &= (each - target).abs() <= 3.0 && s.relevant_inclusion > 0.99;
        parts.push(format!(
            "n={n}: irrelevant {each:.2}% per covariate ({target} +/- 3; any of x2,x3 {:.2}%), x1 {:.4}",
            s.irrelevant_inclusion.unwrap(),
            s.relevant_inclusion
        ));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

// ---------- criterion 6 ----------

fn grouped_data(rng: &mut ChainRng, n: usize) -> Dataset {
    let r = DMatrix::from_row_slice(
        4,
        4,
        &[1.0, 0.7, 0.1, 0.1, 0.7, 1.0, 0.1, 0.1, 0.1, 0.1, 1.0, 0.7, 0.1, 0.1, 0.7, 1.0],
    );
    let l = r.cholesky().unwrap().l();
    let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let mut cols = vec![Vec::with_capacity(n); 4];
    for xi in &x {
        let e = &l * DVector::from_fn(4, |_, _| std_normal(rng));
        for j in 0..4 {
            cols[j].push(xi + e[j]);
        }
    }
    cols.push(x);
    dataset(cols)
}

fn clustering(h: &mut Hygiene) -> Outcome {
    let within_pairs = [(0, 1), (2, 3)];
    let across_pairs = [(0, 2), (0, 3), (1, 2), (1, 3)];
    let mut gaps = Vec::new();
    for k in 0..5u64 {
        let mut rng = ChainRng::seed_from_u64(derive_seed(SEED, 100 + k));
        let data = grouped_data(&mut rng, 200);
        let spec = ModelSpec {
            responses: (0..4).collect(),
            mean_terms: vec![TermSpec::parametric(4)],
            variance_terms: vec![],
            correlation: CorrelationModelSpec::grouped_variables(4),
            priors: PriorConfig::defaults(200, 4),
            standardize: true,
        };
        let designs = build_designs(&data, &spec).unwrap();
        let schedule = Schedule::new(10_000, 5_000, 2, derive_seed(SEED, 200 + k));
        let samples = match run_chain(&designs, &spec, &schedule) {
            Ok(s) => s,
            Err(e) => {
                h.crashes.push(format!("clustering seed {k}: {e}"));
                continue;
            }
        };
        h.chain(&format!("clustering/{k}"), &samples);
        let co = |a: usize, b: usize| {
            samples.draws.iter().filter(|d| d.labels[a] == d.labels[b]).count() as f64 / samples.len() as f64
        };
        let within = within_pairs.iter().map(|&(a, b)| co(a, b)).sum::<f64>() / 2.0;
        let across = across_pairs.iter().map(|&(a, b)| co(a, b)).sum::<f64>() / 4.0;
        gaps.push(within - across);
    }
    let avg = gaps.iter().sum::<f64>() / gaps.len().max(1) as f64;
    Outcome {
        pass: gaps.len() == 5 && avg >= 0.3,
        detail: format!(
            "within minus across co-assignment {avg:.3} (>= 0.3); per seed {}",
            gaps.iter().map(|g| format!("{g:.3}")).collect::<Vec<_>>().join(" ")
        ),
    }
}

// ---------- criterion 7 ----------

fn coverage(h: &mut Hygiene) -> Outcome {
    let mut sc = SimScenario::desk(150, 0.5, vec![2], 1, SEED);
    sc.replicates = 20;
    let m = simharness::run_scenario(&sc).unwrap();
    h.sim("coverage", &m);
    let c = m.dims[0].coverage;
    Outcome {
        pass: (0.82..=0.97).contains(&c) && m.replicates.len() == 20,
        detail: format!("90% band coverage {c:.3} over {} replicates, d=2", m.replicates.len()),
    }
}

// ---------- criterion 8 ----------

/// Mixed smooth, parametric and variance terms for `p = 3`.
fn grid_data(rng: &mut ChainRng, n: usize) -> Dataset {
    let r = simharness::equicorrelation(3, 0.4);
    let l = r.cholesky().unwrap().l();
    let x1: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let x2: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let mut cols = vec![Vec::with_capacity(n); 3];
    for i in 0..n {
        let e = &l * DVector::from_fn(3, |_, _| std_normal(rng));
        let sd = (0.8 * x2[i]).exp();
        cols[0].push((6.0 * x1[i]).sin() + sd * e[0]);
        cols[1].push(x2[i] + sd * e[1]);
        cols[2].push(x1[i] * x1[i] + sd * e[2]);
    }
    cols.push(x1);
    cols.push(x2);
    dataset(cols)
}

fn grid_specs(n: usize) -> Vec<(&'static str, ModelSpec)> {
    let base = ModelSpec {
        responses: vec![0, 1, 2],
        mean_terms: vec![TermSpec::smooth(3, 6).unwrap(), TermSpec::parametric(4)],
        variance_terms: vec![TermSpec::parametric(4), TermSpec::smooth(3, 4).unwrap()],
        correlation: CorrelationModelSpec::common(),
        priors: PriorConfig::defaults(n, 3),
        standardize: true,
    };
    let mut half_normal = base.clone();
    half_normal.priors.c_alpha = ScalePrior::HalfNormal { phi2: 1.0 };
    half_normal.priors.sigma2 = ScalePrior::InverseGamma { shape: 1.1, scale: 1.1 };
    vec![
        ("common", base.clone()),
        (
            "grouped-correlations",
            ModelSpec {
                correlation: CorrelationModelSpec::grouped_correlations(3),
                ..base.clone()
            },
        ),
        (
            "grouped-variables",
            ModelSpec {
                correlation: CorrelationModelSpec::grouped_variables(3),
                ..base.clone()
            },
        ),
        ("half-normal", half_normal),
    ]
}

fn hygiene(h: &mut Hygiene, table_high: &SimMetrics) -> Outcome {
    let n = 150;
    let mut rng = ChainRng::seed_from_u64(derive_seed(SEED, 300));
    let data = grid_data(&mut rng, n);
    let mut identical = true;
    for (k, (name, spec)) in grid_specs(n).into_iter().enumerate() {
        let designs = build_designs(&data, &spec).unwrap();
        let schedule = Schedule::new(10_000, 5_000, 2, derive_seed(SEED, 400 + k as u64));
        match run_chain(&designs, &spec, &schedule) {
            Ok(s) => {
                h.chain(&format!("grid/{name}"), &s);
                if k == 0 {
                    identical &= run_chain(&designs, &spec, &schedule).map(|t| t == s).unwrap_or(false);
                }
            }
            Err(e) => h.crashes.push(format!("grid/{name}: {e}")),
        }
    }
    // a whole simulation cell rerun must match except for timings
    let again = simharness::run_scenario(&table_high.scenario).unwrap();
    let strip = |m: &SimMetrics| {
        let mut m = m.clone();
        for r in &mut m.replicates {
            for f in &mut r.fits {
                f.seconds = 0.0;
            }
        }
        for d in &mut m.dims {
            d.seconds = 0.0;
        }
        m
    };
    identical &= strip(&again) == strip(table_high);
    let pass = h.crashes.is_empty() && h.out_of_band.is_empty() && identical;
    let mut detail = format!(
        "{} fits, adapted acceptance in [{:.3}, {:.3}], {} out of band, {} crashes, reruns identical: {identical}",
        h.fits,
        h.lowest,
        h.highest,
        h.out_of_band.len(),
        h.crashes.len()
    );
    let mut by_move: std::collections::BTreeMap<&str, usize> = Default::default();
    for o in &h.out_of_band {
        let name = o.rsplit('/').next().unwrap_or(o);
        *by_move.entry(name.split('=').next().unwrap_or(name)).or_default() += 1;
    }
    detail.push_str(&format!("\n    out of band by move: {by_move:?}"));
    let mut listed: Vec<&String> = h.crashes.iter().chain(&h.out_of_band).collect();
    listed.sort_by_key(|l| l.contains("/zeta="));
    for line in listed.into_iter().take(16) {
        detail.push_str(&format!("\n    {line}"));
    }
    Outcome { pass, detail }
}

#[test]
#[ignore]
fn geweke_debug() {
    let thin = std::env::var("GEWEKE_THIN").ok().and_then(|v| v.parse().ok()).unwrap_or(50);
    let p = std::env::var("GEWEKE_P").ok().and_then(|v| v.parse().ok()).unwrap_or(2);
    let cov = std::env::var("GEWEKE_NOCOV").is_err();
    println!("{}", geweke_with(thin, p, cov).detail);
}

#[test]
fn acceptance() {
    emit("");
    let t = Instant::now();
    report(1, "oracle equivalence", t, &oracle_equivalence());
    let t = Instant::now();
    report(2, "transform correctness", t, &transforms());
    let t = Instant::now();
    report(3, "Geweke consistency", t, &geweke());
    let mut h = Hygiene::new();
    let t = Instant::now();
    let (o, high) = table_one(&mut h);
    report(4, "relative bias, desk scale", t, &o);
    let t = Instant::now();
    report(5, "variable selection", t, &selection(&mut h));
    let t = Instant::now();
    report(6, "grouped-variables recovery", t, &clustering(&mut h));
    let t = Instant::now();
    report(7, "coverage calibration", t, &coverage(&mut h));
    let t = Instant::now();
    report(8, "chain hygiene", t, &hygiene(&mut h, &high));
}
