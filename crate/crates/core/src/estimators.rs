//! Three estimators of `pi(f)` built on the jump chain: holding-time
//! weighted averages (MC), `1/lambda` importance weights on the embedded
//! chain (IS), and a Metropolised embedded chain (MH).

use std::fmt;

use crate::balancing::Balancing;
use crate::error::{Error, Result};
use crate::model::{RatioOracle, State};
use crate::rng::SeededStream;
use crate::simulate::{embedded_chain, run_replicas, ExactSampler, JumpTrajectory, Skeleton};
use crate::stats::{batch_means_se, paired_t_test_less, sample_variance, weighted_batch_means_se, PairedTest};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    Mc,
    Is,
    Mh,
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimatorKind::Mc => "MC",
            EstimatorKind::Is => "IS",
            EstimatorKind::Mh => "MH",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatorResult {
    pub kind: EstimatorKind,
    pub estimate: f64,
    /// Batch-means standard error with `floor(sqrt(n))` batches.
    pub se: f64,
    /// Events (MC) or chain steps (IS, MH).
    pub n: usize,
    /// Fraction of accepted MH proposals.
    pub acceptance_rate: Option<f64>,
}

/// `(1/T_N) sum tau_j f(X_{j-1})` over the completed holding periods.
pub fn estimate_mc(traj: &JumpTrajectory, f: impl Fn(&State) -> f64) -> Result<EstimatorResult> {
    if traj.jumps.is_empty() {
        return Err(Error::Empty("trajectory has no events".into()));
    }
    let holds = traj.holding_times();
    let states = std::iter::once(&traj.initial).chain(traj.jumps.iter().map(|(s, _)| s));
    let values: Vec<f64> = states.take(holds.len()).map(&f).collect();
    let total: f64 = holds.iter().sum();
    let f0 = values[0];
    let estimate = f0 + values.iter().zip(&holds).map(|(v, h)| (v - f0) * h).sum::<f64>() / total;
    Ok(EstimatorResult {
        kind: EstimatorKind::Mc,
        estimate,
        se: weighted_batch_means_se(&values, &holds),
        n: holds.len(),
        acceptance_rate: None,
    })
}

/// Normalised importance weights `lambda_j^{-1} / sum_k lambda_k^{-1}`.
pub fn importance_weights(lambdas: &[f64]) -> Result<Vec<f64>> {
    if let Some(i) = lambdas.iter().position(|l| *l <= 0.0) {
        return Err(Error::ZeroRate(format!("skeleton step {i}")));
    }
    let inv: Vec<f64> = lambdas.iter().map(|l| 1.0 / l).collect();
    let total: f64 = inv.iter().sum();
    Ok(inv.into_iter().map(|w| w / total).collect())
}

/// `sum_j w_j f(X_{j-1})` with `w_j ∝ 1 / lambda(X_{j-1})`.
pub fn estimate_is(states: &[State], lambdas: &[f64], f: impl Fn(&State) -> f64) -> Result<EstimatorResult> {
    if states.is_empty() {
        return Err(Error::Empty("skeleton is empty".into()));
    }
    if states.len() != lambdas.len() {
        return Err(Error::DimensionMismatch { expected: states.len(), got: lambdas.len() });
    }
    let weights = importance_weights(lambdas)?;
    let values: Vec<f64> = states.iter().map(&f).collect();
    let f0 = values[0];
    let estimate = f0 + values.iter().zip(&weights).map(|(v, w)| (v - f0) * w).sum::<f64>();
    Ok(EstimatorResult {
        kind: EstimatorKind::Is,
        estimate,
        se: weighted_batch_means_se(&values, &weights),
        n: states.len(),
        acceptance_rate: None,
    })
}

pub fn estimate_is_skeleton(skeleton: &Skeleton, f: impl Fn(&State) -> f64) -> Result<EstimatorResult> {
    estimate_is(&skeleton.states, &skeleton.lambdas, f)
}

/// `n` steps of the Metropolis chain with proposal `Gamma_g` and acceptance
/// `min(1, lambda(x) / lambda(y))`; returns the plain average of `f`.
pub fn estimate_mh(
    sampler: &ExactSampler<'_>,
    x0: &State,
    n: usize,
    rng: &mut SeededStream,
    f: impl Fn(&State) -> f64,
) -> Result<EstimatorResult> {
    if n == 0 {
        return Err(Error::Empty("zero MH steps".into()));
    }
    let mut x = x0.clone();
    let mut lambda_x = sampler.lambda(&x)?;
    let mut values = Vec::with_capacity(n);
    let mut accepted = 0usize;
    for _ in 0..n {
        values.push(f(&x));
        let (y, _) = sampler.step(&x, rng)?;
        let lambda_y = sampler.lambda(&y)?;
        if rng.open01() * lambda_y < lambda_x {
            x = y;
            lambda_x = lambda_y;
            accepted += 1;
        }
    }
    let estimate = values.iter().sum::<f64>() / n as f64;
    Ok(EstimatorResult {
        kind: EstimatorKind::Mh,
        estimate,
        se: batch_means_se(&values),
        n,
        acceptance_rate: Some(accepted as f64 / n as f64),
    })
}

/// Per-seed estimates at a matched number of embedded-chain steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeedRow {
    pub seed: usize,
    pub mc: EstimatorResult,
    pub is: EstimatorResult,
    pub mh: EstimatorResult,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FaceoffReport {
    pub rows: Vec<SeedRow>,
    pub truth: f64,
    /// Sample variance of each estimator across seeds.
    pub var_mc: f64,
    pub var_is: f64,
    pub var_mh: f64,
    /// Paired test on `(IS - truth)^2 - (MC - truth)^2`, alternative `< 0`.
    pub test: PairedTest,
}

/// Runs MC, IS and MH with `budget` chain steps for each of `n_seeds`
/// seeds. MC and IS share a skeleton; MC adds simulated holding times. MH
/// runs on its own stream (`n_seeds + seed`).
pub fn variance_faceoff(
    oracle: &RatioOracle,
    g: &Balancing,
    f: impl Fn(&State) -> f64 + Sync,
    x0: &State,
    budget: usize,
    n_seeds: usize,
    master_seed: u64,
) -> Result<FaceoffReport> {
    let truth = oracle
        .finite_target()
        .ok_or_else(|| Error::ModelValidation("variance faceoff needs a finite target".into()))?
        .expectation(|i| f(&State::Finite(i)));
    let sampler = ExactSampler::new(oracle, g)?;
    let rows = run_replicas(n_seeds, master_seed, |seed, rng| {
        let skeleton = embedded_chain(&sampler, x0, budget, rng)?;
        let is = estimate_is_skeleton(&skeleton, &f)?;
        let traj = skeleton.into_trajectory(rng);
        let mc = estimate_mc(&traj, &f)?;
        let mut mh_rng = SeededStream::new(master_seed, (n_seeds + seed) as u64);
        let mh = estimate_mh(&sampler, x0, budget, &mut mh_rng, &f)?;
        Ok(SeedRow { seed, mc, is, mh })
    })?;
    let column = |k: fn(&SeedRow) -> f64| rows.iter().map(k).collect::<Vec<f64>>();
    let (mc, is, mh) = (column(|r| r.mc.estimate), column(|r| r.is.estimate), column(|r| r.mh.estimate));
    let diffs: Vec<f64> = is.iter().zip(&mc).map(|(a, b)| (a - truth).powi(2) - (b - truth).powi(2)).collect();
    Ok(FaceoffReport {
        truth,
        var_mc: sample_variance(&mc),
        var_is: sample_variance(&is),
        var_mh: sample_variance(&mh),
        test: paired_t_test_less(&diffs),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{run_exact, Horizon, RunOptions};

    fn three_state() -> RatioOracle {
        let half = vec![vec![0.0, 0.5, 0.5], vec![0.5, 0.0, 0.5], vec![0.5, 0.5, 0.0]];
        RatioOracle::finite(vec![0.2, 0.3, 0.5], half).unwrap()
    }

    fn identity(s: &State) -> f64 {
        s.as_finite().unwrap() as f64
    }

    #[test]
    fn constants_are_exact() {
        let o = three_state();
        let g = Balancing::sqrt();
        let mut rng = SeededStream::new(1, 0);
        let traj = run_exact(&o, &g, &State::Finite(0), Horizon::Events(500), &mut rng, RunOptions::default()).unwrap();
        let mc = estimate_mc(&traj, |_| 2.5).unwrap();
        assert!((mc.estimate - 2.5).abs() < 1e-14);
        let sampler = ExactSampler::new(&o, &g).unwrap();
        let sk = embedded_chain(&sampler, &State::Finite(0), 500, &mut rng).unwrap();
        assert!((estimate_is_skeleton(&sk, |_| 2.5).unwrap().estimate - 2.5).abs() < 1e-14);
    }

    #[test]
    fn weights_sum_to_one() {
        let w = importance_weights(&[0.3, 1.7, 2.2, 0.9]).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-15);
        assert!(matches!(importance_weights(&[1.0, 0.0]), Err(Error::ZeroRate(_))));
    }

    #[test]
    fn constant_rate_is_plain_average() {
        let states: Vec<State> = [0, 1, 1, 2].into_iter().map(State::Finite).collect();
        let r = estimate_is(&states, &[2.0; 4], identity).unwrap();
        assert_eq!(r.estimate, 1.0);
    }

    #[test]
    fn all_three_hit_the_mean() {
        let o = three_state();
        let g = Balancing::barker();
        let truth = 0.3 + 2.0 * 0.5;
        let sampler = ExactSampler::new(&o, &g).unwrap();
        let mut rng = SeededStream::new(5, 0);
        let sk = embedded_chain(&sampler, &State::Finite(0), 200_000, &mut rng).unwrap();
        let is = estimate_is_skeleton(&sk, identity).unwrap();
        let mc = estimate_mc(&sk.into_trajectory(&mut rng), identity).unwrap();
        let mh = estimate_mh(&sampler, &State::Finite(0), 200_000, &mut rng, identity).unwrap();
        for r in [is, mc, mh] {
            assert!((r.estimate - truth).abs() < 3.0 * r.se + 1e-3, "{r:?}");
        }
        let rate = mh.acceptance_rate.unwrap();
        assert!(rate > 0.0 && rate <= 1.0);
    }

    #[test]
    fn uniform_target_mh_always_accepts() {
        let o = RatioOracle::finite(vec![0.25; 4], {
            let mut rows = vec![vec![1.0 / 3.0; 4]; 4];
            for (i, r) in rows.iter_mut().enumerate() {
                r[i] = 0.0;
            }
            rows
        })
        .unwrap();
        let g = Balancing::sqrt();
        let sampler = ExactSampler::new(&o, &g).unwrap();
        let mut rng = SeededStream::new(2, 0);
        let mh = estimate_mh(&sampler, &State::Finite(0), 1000, &mut rng, identity).unwrap();
        assert_eq!(mh.acceptance_rate, Some(1.0));
    }

    #[test]
    fn faceoff_constant_f_has_no_variance() {
        let r = variance_faceoff(&three_state(), &Balancing::sqrt(), |_| 1.0, &State::Finite(0), 200, 5, 3).unwrap();
        assert!(r.var_mc < 1e-28 && r.var_is < 1e-28 && r.var_mh == 0.0);
    }

    #[test]
    fn empty_inputs() {
        let traj = JumpTrajectory {
            initial: State::Finite(0),
            jumps: vec![],
            horizon: 1.0,
            event_count: 0,
            truncated: false,
            candidates: None,
            candidate_log: None,
        };
        assert!(matches!(estimate_mc(&traj, identity), Err(Error::Empty(_))));
        assert!(matches!(estimate_is(&[], &[], identity), Err(Error::Empty(_))));
    }
}
