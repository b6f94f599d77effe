//! The thirteen acceptance criteria, each with its tolerance and time limit.
//!
//! Every criterion is a plain function returning a [`CriterionResult`];
//! failures are report content, never panics.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::balancing::{builtin_catalog, check_balancing, check_bounds, standard_grid, Balancing};
use crate::diffusion::{convergence_experiment, DiffusionExperiment};
use crate::error::{Error, Result};
use crate::estimators::{estimate_is_skeleton, estimate_mc, estimate_mh, variance_faceoff, EstimatorResult};
use crate::hitting::BirthDeathModel;
use crate::instances::seeded_instance;
use crate::jumprate::z_lambda_exact;
use crate::model::{BaseKernel, ContinuousTarget, LatticeTarget, RatioOracle, State, Target};
use crate::nonrev::{build_skew_kernel, certify_skew_balance, FlipRule, LiftedChain};
use crate::rng::SeededStream;
use crate::simulate::{embedded_chain, run_exact, time_average, ExactSampler, Horizon, RunOptions};
use crate::spectral::{build_generator, comparison_check, gap_sandwich_check, tv_decay_check, CERT_TOL};

pub const DEFAULT_SEED: u64 = 20_240_611;

/// Frozen after calibration: start, threshold and seed of the diffusion run.
pub const DIFFUSION_X0: f64 = 3.0;
pub const DIFFUSION_KS_THRESHOLD: f64 = 0.05;
pub const DIFFUSION_SEED: u64 = 1;

pub const FACEOFF_BUDGET: usize = 100_000;
pub const FACEOFF_SEEDS: usize = 50;
pub const FACEOFF_LEVEL: f64 = 0.05;
/// Absolute floor under `3 * combined se` for chains whose batch-means se is zero.
pub const AGREEMENT_FLOOR: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub runtime_s: f64,
    pub limit_s: f64,
    pub detail: String,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "{} criterion {:>2} {:<28} {:>8.2}s / {:>4}s  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.runtime_s,
            self.limit_s,
            self.detail
        )
    }
}

pub const CRITERIA: [(u8, &str, f64); 13] = [
    (1, "balancing_identity", 1.0),
    (2, "sandwich_bounds", 1.0),
    (3, "reversibility", 10.0),
    (4, "z_lambda_bound", 10.0),
    (5, "gap_sandwich", 30.0),
    (6, "comparison", 30.0),
    (7, "tv_exponential_bound", 30.0),
    (8, "ergodic_averages", 120.0),
    (9, "hitting_recursion", 300.0),
    (10, "uniform_ergodicity", 120.0),
    (11, "diffusion_limit", 600.0),
    (12, "estimators", 300.0),
    (13, "nonrev_certification", 30.0),
];

/// Runs criterion `id` with the built-in catalog and `seed`.
pub fn run_criterion(id: u8, seed: u64) -> Result<CriterionResult> {
    run_criterion_with(id, seed, &builtin_catalog())
}

/// As [`run_criterion`] but with an explicit balancing catalog, so a faulty
/// `g` can be injected.
pub fn run_criterion_with(id: u8, seed: u64, catalog: &[Balancing]) -> Result<CriterionResult> {
    let &(_, name, limit_s) = CRITERIA
        .iter()
        .find(|c| c.0 == id)
        .ok_or_else(|| Error::ConfigInvalid(format!("no acceptance criterion {id}")))?;
    let clock = Instant::now();
    let outcome = match id {
        1 => balancing_identity(catalog),
        2 => sandwich_bounds(catalog),
        3 => reversibility(catalog, seed),
        4 => z_lambda_bound(catalog, seed),
        5 => gap_sandwich(catalog, seed),
        6 => comparison(catalog, seed),
        7 => tv_bound(catalog, seed),
        8 => ergodic_averages(catalog, seed),
        9 => hitting_recursion(seed),
        10 => uniform_ergodicity(),
        11 => diffusion_limit(),
        12 => estimator_agreement(seed),
        _ => nonrev_certification(catalog, seed),
    };
    let runtime_s = clock.elapsed().as_secs_f64();
    let (ok, detail) = match outcome {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    let in_time = runtime_s <= limit_s;
    let detail = if in_time { detail } else { format!("{detail}; over time limit") };
    Ok(CriterionResult { id, name, passed: ok && in_time, runtime_s, limit_s, detail })
}

pub fn acceptance_suite(seed: u64) -> Vec<CriterionResult> {
    CRITERIA
        .iter()
        .map(|c| run_criterion(c.0, seed).expect("criterion ids come from the table"))
        .collect()
}

type Outcome = Result<(bool, String)>;

fn instance_size(seed: u64, index: u64) -> usize {
    let mut rng = SeededStream::new(seed ^ 0x5eed, index);
    2 + (rng.open01() * 19.0) as usize
}

fn instances(seed: u64, count: u64) -> Result<Vec<RatioOracle>> {
    (0..count).into_par_iter().map(|i| seeded_instance(instance_size(seed, i), seed, i)).collect()
}

fn balancing_identity(catalog: &[Balancing]) -> Outcome {
    let grid = standard_grid();
    let mut bad = Vec::new();
    for g in catalog {
        let report = check_balancing(g, &grid)?;
        if !report.is_pass() {
            bad.push(format!("{} ({} points)", g.name(), report.violations.len()));
        }
    }
    Ok((bad.is_empty(), summary(catalog.len(), "functions", &bad)))
}

fn sandwich_bounds(catalog: &[Balancing]) -> Outcome {
    let grid = standard_grid();
    let mut bad = Vec::new();
    for g in catalog.iter().filter(|g| g.is_nondecreasing()) {
        let report = check_bounds(g, &grid, false)?;
        if !report.is_pass() {
            bad.push(format!("{} ({} points)", g.name(), report.violations.len()));
        }
    }
    Ok((bad.is_empty(), summary(catalog.len(), "functions", &bad)))
}

fn summary(n: usize, what: &str, bad: &[String]) -> String {
    if bad.is_empty() {
        format!("{n} {what} checked")
    } else {
        format!("failing: {}", bad.join(", "))
    }
}

fn reversibility(catalog: &[Balancing], seed: u64) -> Outcome {
    let worst = instances(seed, 100)?
        .par_iter()
        .map(|o| -> Result<f64> {
            let mut worst = 0.0f64;
            for g in catalog {
                let l = build_generator(o, g)?;
                let m = l.pi.len();
                for i in 0..m {
                    for j in 0..m {
                        worst = worst.max((l.pi[i] * l.l[(i, j)] - l.pi[j] * l.l[(j, i)]).abs());
                    }
                }
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok((worst <= 1e-12, format!("max |pi_i L_ij - pi_j L_ji| = {worst:.3e} over 100 instances")))
}

/// Lattice families used for the truncated `Z_lambda` sums.
pub fn lattice_families() -> Result<Vec<RatioOracle>> {
    let targets = vec![
        LatticeTarget::exp_power(1.0, 1.0)?,
        LatticeTarget::exp_power(0.5, 1.5)?,
        LatticeTarget::exp_power(1.0, 2.0)?,
        LatticeTarget::exp_power(0.1, 1.0)?,
        LatticeTarget::uniform_range(0, 25)?,
    ];
    targets
        .into_iter()
        .map(|t| RatioOracle::new(Target::Lattice(t), BaseKernel::lattice(1.0)?))
        .collect()
}

fn z_lambda_bound(catalog: &[Balancing], seed: u64) -> Outcome {
    let mut oracles = instances(seed, 100)?;
    oracles.extend(finite_test_models()?.into_iter().map(|(_, o)| o));
    oracles.extend(lattice_families()?);
    let monotone: Vec<&Balancing> = catalog.iter().filter(|g| g.is_nondecreasing()).collect();
    let worst = oracles
        .par_iter()
        .map(|o| -> Result<f64> {
            let mut worst = 0.0f64;
            for g in &monotone {
                worst = worst.max(z_lambda_exact(o, g)?.value);
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok((worst <= 2.0 + 1e-12, format!("max Z_lambda = {worst:.15} over {} models", oracles.len())))
}

fn bounded(catalog: &[Balancing]) -> Vec<&Balancing> {
    catalog.iter().filter(|g| g.sup_bound().is_some() && g.is_nondecreasing()).collect()
}

fn gap_sandwich(catalog: &[Balancing], seed: u64) -> Outcome {
    let gs = bounded(catalog);
    let failures: usize = instances(seed, 50)?
        .par_iter()
        .map(|o| -> Result<usize> {
            let mut n = 0;
            for g in &gs {
                n += usize::from(!gap_sandwich_check(o, g)?.passed);
            }
            Ok(n)
        })
        .collect::<Result<Vec<usize>>>()?
        .into_iter()
        .sum();
    Ok((failures == 0, format!("{failures} failures over 50 instances x {} bounded g", gs.len())))
}

fn comparison(catalog: &[Balancing], seed: u64) -> Outcome {
    let mut pairs = vec![
        (Balancing::max(), Balancing::min()),
        (Balancing::sqrt(), Balancing::min()),
    ];
    pairs.extend(catalog.iter().map(|g| (g.clone(), g.clone())));
    let failures: usize = instances(seed, 50)?
        .par_iter()
        .map(|o| -> Result<usize> {
            let mut n = 0;
            for (g1, g2) in &pairs {
                n += usize::from(!comparison_check(o, g1, g2, 1.0)?.passed);
            }
            Ok(n)
        })
        .collect::<Result<Vec<usize>>>()?
        .into_iter()
        .sum();
    Ok((failures == 0, format!("{failures} failures over 50 instances x {} pairs", pairs.len())))
}

fn tv_bound(catalog: &[Balancing], seed: u64) -> Outcome {
    let times: Vec<f64> = (1..=50).map(|k| 0.1 * k as f64).collect();
    let worst = instances(seed, 20)?
        .par_iter()
        .map(|o| -> Result<f64> {
            let mut worst = f64::NEG_INFINITY;
            for g in catalog {
                let l = build_generator(o, g)?;
                for start in 0..l.pi.len() {
                    let mut mu0 = vec![0.0; l.pi.len()];
                    mu0[start] = 1.0;
                    let r = tv_decay_check(&l, &mu0, &times)?;
                    worst = worst.max(r.value("worst_excess").unwrap_or(f64::INFINITY));
                }
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    let two = RatioOracle::finite(vec![0.5, 0.5], vec![vec![0.0, 1.0], vec![1.0, 0.0]])?;
    let l = build_generator(&two, &Balancing::barker())?;
    let sg = crate::spectral::Semigroup::new(&l)?;
    let equality = times
        .iter()
        .map(|&t| {
            let tv = crate::spectral::total_variation(&sg.evolve(&[1.0, 0.0], t), &l.pi);
            (tv - 0.5 * (-2.0 * t).exp()).abs()
        })
        .fold(0.0, f64::max);
    Ok((
        worst <= CERT_TOL && equality <= 1e-12,
        format!("max tv - bound = {worst:.3e}; two-state equality error {equality:.1e}"),
    ))
}

/// The fixed finite test models: two-state uniform swap, three-state
/// `(0.1, 0.3, 0.6)` and five-state `pi ∝ 3^i`, both on complete graphs.
pub fn finite_test_models() -> Result<Vec<(&'static str, RatioOracle)>> {
    let complete = |m: usize| -> Vec<Vec<f64>> {
        (0..m)
            .map(|i| (0..m).map(|j| if i == j { 0.0 } else { 1.0 / (m - 1) as f64 }).collect())
            .collect()
    };
    let geometric: Vec<f64> = (0..5).map(|i| 3f64.powi(i)).collect();
    let total: f64 = geometric.iter().sum();
    Ok(vec![
        ("two_state", RatioOracle::finite(vec![0.5, 0.5], complete(2))?),
        ("three_state", RatioOracle::finite(vec![0.1, 0.3, 0.6], complete(3))?),
        ("five_state", RatioOracle::finite(geometric.iter().map(|w| w / total).collect(), complete(5))?),
    ])
}

pub type TestFunction = Box<dyn Fn(&State) -> f64 + Send + Sync>;

/// Test-function bank on a finite space of size `m`.
pub fn function_bank(m: usize) -> Vec<(&'static str, TestFunction)> {
    let idx = |s: &State| s.as_finite().unwrap_or(0) as f64;
    vec![
        ("identity", Box::new(idx)),
        ("square", Box::new(move |s| idx(s).powi(2))),
        ("first", Box::new(move |s| f64::from(u8::from(idx(s) == 0.0)))),
        ("last", Box::new(move |s| f64::from(u8::from(idx(s) as usize + 1 == m)))),
        ("cosine", Box::new(move |s| idx(s).cos())),
    ]
}

fn ergodic_averages(catalog: &[Balancing], seed: u64) -> Outcome {
    let models = finite_test_models()?;
    let jobs: Vec<(usize, usize)> = (0..models.len()).flat_map(|m| (0..catalog.len()).map(move |g| (m, g))).collect();
    let results = jobs
        .par_iter()
        .map(|&(mi, gi)| -> Result<Vec<String>> {
            let (name, oracle) = &models[mi];
            let g = &catalog[gi];
            let pi = oracle.finite_target().expect("finite model");
            let mut rng = SeededStream::new(seed, (mi * 64 + gi) as u64);
            let traj = run_exact(oracle, g, &State::Finite(0), Horizon::Events(1_000_000), &mut rng, RunOptions::default())?;
            let mut bad = Vec::new();
            for (fname, f) in function_bank(pi.len()) {
                let avg = time_average(&traj, &f);
                let se = estimate_mc(&traj, &f)?.se;
                let truth = pi.expectation(|i| f(&State::Finite(i)));
                if (avg - truth).abs() > 3.0 * se + 1e-12 {
                    bad.push(format!("{name}/{}/{fname}: |{avg:.5} - {truth:.5}| > 3 * {se:.2e}", g.name()));
                }
            }
            Ok(bad)
        })
        .collect::<Result<Vec<_>>>()?;
    let bad: Vec<String> = results.into_iter().flatten().collect();
    let checks = jobs.len() * 5;
    Ok((bad.is_empty(), summary(checks, "averages", &bad)))
}

/// Hitting-time configurations: exp-power targets, catalog `g`, and start `N`,
/// all with `k = 2`.
pub fn hitting_configurations() -> Result<Vec<(LatticeTarget, Balancing, i64)>> {
    let targets = [(1.0, 1.0), (0.5, 1.0), (1.0, 1.5), (1.0, 2.0), (0.2, 1.0)];
    let gs = [Balancing::min(), Balancing::barker(), Balancing::sqrt(), Balancing::max()];
    let starts = [8, 12, 16, 20];
    let mut out = Vec::new();
    for (ti, &(a, beta)) in targets.iter().enumerate() {
        for (gi, g) in gs.iter().enumerate() {
            out.push((LatticeTarget::exp_power(a, beta)?, g.clone(), starts[(ti + gi) % starts.len()]));
        }
    }
    Ok(out)
}

/// Expected hitting time of `{<= k}` from every state of the chain truncated
/// at `n_max` (upward moves from `n_max` removed), by a dense linear solve.
/// Rates are computed directly from `pi(n) ∝ exp(-a n^beta)` and `g`.
pub fn truncated_hitting_solve(a: f64, beta: f64, g: &Balancing, k: i64, n_max: i64) -> Result<Vec<f64>> {
    let size = (n_max - k) as usize;
    let log_pi = |n: i64| -a * (n as f64).powf(beta);
    let mut m = DMatrix::zeros(size, size);
    for r in 0..size {
        let n = k + 1 + r as i64;
        let down = 0.5 * g.eval_log_ratio(log_pi(n - 1) - log_pi(n));
        let up = if n < n_max { 0.5 * g.eval_log_ratio(log_pi(n + 1) - log_pi(n)) } else { 0.0 };
        m[(r, r)] = down + up;
        if r > 0 {
            m[(r, r - 1)] = -down;
        }
        if n < n_max {
            m[(r, r + 1)] = -up;
        }
    }
    let rhs = DVector::from_element(size, 1.0);
    let sol = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::EigenFailure("singular truncated hitting system".into()))?;
    Ok(sol.iter().copied().collect())
}

fn hitting_recursion(seed: u64) -> Outcome {
    let k = 2;
    let configs = hitting_configurations()?;
    let mut bad = Vec::new();
    let mut worst_gap = 0.0f64;
    for (i, (target, g, big_n)) in configs.iter().enumerate() {
        let (a, beta) = match target.family() {
            crate::model::LatticeFamily::ExpPower { a, beta } => (*a, *beta),
            _ => unreachable!("configurations are exp-power"),
        };
        let model = BirthDeathModel::new(target.clone(), g.clone())?;
        let est = model.expected_hitting(*big_n, k, None)?;
        let solve = truncated_hitting_solve(a, beta, g, k, est.n_max)?;
        let oracle = solve[(big_n - k - 1) as usize];
        let tol = est.width() + 1e-9;
        let label = format!("exp_power({a},{beta})/{}/N={big_n}", g.name());
        worst_gap = worst_gap.max((oracle - est.lower).abs());
        if oracle < est.lower - tol || oracle > est.upper + tol {
            bad.push(format!("{label}: solve {oracle:.6e} outside [{:.6e}, {:.6e}]", est.lower, est.upper));
        }
        let mc = model.simulate_hitting(*big_n, k, 10_000, seed.wrapping_add(i as u64))?;
        if mc.mean < est.lower - 3.0 * mc.se || mc.mean > est.upper + 3.0 * mc.se {
            bad.push(format!(
                "{label}: MC {:.5} +- {:.1e} vs [{:.5}, {:.5}]",
                mc.mean, mc.se, est.lower, est.upper
            ));
        }
    }
    let detail = if bad.is_empty() {
        format!("{} configurations; max |solve - lower| = {worst_gap:.2e}", configs.len())
    } else {
        format!("failing: {}", bad.join("; "))
    };
    Ok((bad.is_empty(), detail))
}

fn uniform_ergodicity() -> Outcome {
    let k = 2;
    let target = LatticeTarget::exp_power(1.0, 1.5)?;
    let sqrt = BirthDeathModel::new(target.clone(), Balancing::sqrt())?;
    let mids = [10, 20, 40]
        .iter()
        .map(|&n| sqrt.expected_hitting(n, k, None).map(|e| e.midpoint()))
        .collect::<Result<Vec<f64>>>()?;
    let (lo, hi) = mids.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
    let spread = (hi - lo) / lo;
    let plateau = spread < 0.05;

    let min = BirthDeathModel::new(target, Balancing::min())?;
    let lambda_bar = Balancing::min().trusted_sup()?;
    let sums = [10i64, 20, 40]
        .iter()
        .map(|&n| -> Result<(i64, f64)> {
            let table = min.sequences(k, n)?;
            let s: f64 = table.rows.iter().filter(|r| r.n > k && r.n <= n).map(|r| r.a).sum();
            Ok((n, s))
        })
        .collect::<Result<Vec<_>>>()?;
    let exceeds = sums.iter().all(|&(n, s)| s > 2.0 * (n - k - 1) as f64 / lambda_bar);
    let slope1 = (sums[1].1 - sums[0].1) / 10.0;
    let slope2 = (sums[2].1 - sums[1].1) / 20.0;
    let linear = slope1 > 0.0 && (slope2 / slope1 - 1.0).abs() < 0.1;
    Ok((
        plateau && exceeds && linear,
        format!(
            "sqrt E_N[h_2] at N=10,20,40: {:.4}, {:.4}, {:.4} (spread {:.1}%, limit 5%); min sum a: {:.1}, {:.1}, {:.1} (slopes {slope1:.3}, {slope2:.3})",
            mids[0],
            mids[1],
            mids[2],
            100.0 * spread,
            sums[0].1,
            sums[1].1,
            sums[2].1
        ),
    ))
}

/// The frozen diffusion-limit experiment.
pub fn diffusion_experiment() -> DiffusionExperiment {
    DiffusionExperiment {
        target: ContinuousTarget::standard_gaussian(1),
        g: Balancing::barker(),
        sigmas: vec![0.5, 0.25, 0.1],
        horizon: 2.0,
        samples: 10_000,
        dt: None,
        x0: vec![DIFFUSION_X0],
        seed: DIFFUSION_SEED,
    }
}

fn diffusion_limit() -> Outcome {
    let table = convergence_experiment(&diffusion_experiment())?;
    let ks: Vec<f64> = table.rows.iter().map(|r| r.ks_vs_langevin).collect();
    let last = *ks.last().unwrap_or(&f64::INFINITY);
    Ok((
        table.strictly_decreasing() && last < DIFFUSION_KS_THRESHOLD,
        format!("KS vs Langevin {ks:.4?}; threshold {DIFFUSION_KS_THRESHOLD} at the last sigma"),
    ))
}

fn estimator_agreement(seed: u64) -> Outcome {
    let g = Balancing::sqrt();
    let models = finite_test_models()?;
    let identity = |s: &State| s.as_finite().unwrap_or(0) as f64;
    let mut bad = Vec::new();
    for (mi, (name, oracle)) in models.iter().enumerate() {
        let sampler = ExactSampler::new(oracle, &g)?;
        let mut rng = SeededStream::new(seed, 1000 + mi as u64);
        let sk = embedded_chain(&sampler, &State::Finite(0), 1_000_000, &mut rng)?;
        let is = estimate_is_skeleton(&sk, identity)?;
        let mc = estimate_mc(&sk.into_trajectory(&mut rng), identity)?;
        let mh = estimate_mh(&sampler, &State::Finite(0), 1_000_000, &mut rng, identity)?;
        let all: [EstimatorResult; 3] = [mc, is, mh];
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            let (x, y) = (all[i], all[j]);
            let combined = x.se.hypot(y.se);
            if (x.estimate - y.estimate).abs() > 3.0 * combined + AGREEMENT_FLOOR {
                bad.push(format!("{name}: {} {:.17} ({:.1e}) vs {} {:.17} ({:.1e})", x.kind, x.estimate, x.se, y.kind, y.estimate, y.se));
            }
        }
    }
    let five = &models[2].1;
    let face = variance_faceoff(five, &g, identity, &State::Finite(0), FACEOFF_BUDGET, FACEOFF_SEEDS, seed)?;
    let ordered = face.test.p_value < FACEOFF_LEVEL;
    if !ordered {
        bad.push(format!("paired test p = {:.3}", face.test.p_value));
    }
    Ok((
        bad.is_empty(),
        if bad.is_empty() {
            format!(
                "agreement on {} models; Var IS {:.2e} vs MC {:.2e}, p = {:.1e}",
                models.len(),
                face.var_is,
                face.var_mc,
                face.test.p_value
            )
        } else {
            format!("failing: {}", bad.join("; "))
        },
    ))
}

fn nonrev_certification(catalog: &[Balancing], seed: u64) -> Outcome {
    let gs: Vec<Balancing> = ["min", "barker", "sqrt"]
        .iter()
        .map(|n| catalog.iter().find(|g| g.name() == *n).cloned().map_or_else(|| Balancing::from_name(n), Ok))
        .collect::<Result<_>>()?;
    let mut skew = 0.0f64;
    let mut invariance = 0.0f64;
    let mut failures = 0usize;
    for i in 0..50u64 {
        let mut rng = SeededStream::new(seed, 5000 + i);
        let m = 3 + (i % 4) as usize;
        let chain = LiftedChain::random(m, 0.1, &mut rng)?;
        for g in &gs {
            let report = certify_skew_balance(&build_skew_kernel(&chain, g, FlipRule::Complement)?, &chain);
            skew = skew.max(report.value("skew_residual").unwrap_or(f64::INFINITY));
            invariance = invariance.max(report.value("invariance_residual").unwrap_or(f64::INFINITY));
            failures += usize::from(!report.passed);
        }
    }
    let mut degeneration = 0.0f64;
    for i in 0..50u64 {
        let o = seeded_instance(instance_size(seed, i), seed, i)?;
        let chain = LiftedChain::reversible(&o)?;
        for g in &gs {
            let k = build_skew_kernel(&chain, g, FlipRule::Complement)?;
            let l = build_generator(&o, g)?;
            degeneration = degeneration.max((&k.generator - &l.l).abs().max());
        }
    }
    Ok((
        failures == 0 && degeneration <= 1e-14,
        format!("skew residual {skew:.1e}, invariance {invariance:.1e}, Q = I deviation {degeneration:.1e}"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_is_complete() {
        let ids: Vec<u8> = CRITERIA.iter().map(|c| c.0).collect();
        assert_eq!(ids, (1..=13).collect::<Vec<u8>>());
        assert!(run_criterion(14, 1).is_err());
    }

    #[test]
    fn broken_g_fails_only_its_criteria() {
        let mut catalog = builtin_catalog();
        catalog.push(Balancing::custom("lopsided", |t| t.powf(0.3)));
        assert!(!run_criterion_with(1, 1, &catalog).unwrap().passed);
        assert!(run_criterion_with(1, 1, &builtin_catalog()).unwrap().passed);
        assert!(run_criterion_with(2, 1, &builtin_catalog()).unwrap().passed);
    }

    #[test]
    fn solve_matches_hand_case() {
        let g = Balancing::min();
        let e = truncated_hitting_solve(1.0, 1.0, &g, 0, 1).unwrap();
        assert!((e[0] - 2.0).abs() < 1e-14);
    }
}
