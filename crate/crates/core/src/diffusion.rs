//! Small-jump limit of Gaussian-walk LBMJPs: the rescaled process
//! `S_t = Y_{t / sigma^2}` against the overdamped Langevin diffusion
//! `dS = 1/2 grad log pi(S) dt + dB`.
//!
//! Convergence is measured on the time-`T` marginal with the two-sample
//! Kolmogorov–Smirnov statistic, taking the maximum over coordinates.

use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::balancing::Balancing;
use crate::error::{Error, Result};
use crate::model::{BaseKernel, ContinuousTarget, RatioOracle, State, Target};
use crate::rng::SeededStream;
use crate::simulate::{run_replicas, thinning_endpoint};
use crate::stats::{ks_one_sample, ks_two_sample};

#[derive(Clone, Debug)]
pub struct DiffusionExperiment {
    pub target: ContinuousTarget,
    pub g: Balancing,
    /// Strictly decreasing values in `(0, 1)`.
    pub sigmas: Vec<f64>,
    pub horizon: f64,
    pub samples: usize,
    /// Euler–Maruyama step; `None` means `sigma_min^2 / 4`.
    pub dt: Option<f64>,
    pub x0: Vec<f64>,
    pub seed: u64,
}

/// How the `1 / sigma^2` time change is realised.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimeChange {
    /// Run for `T / sigma^2` at the original rates.
    Horizon,
    /// Run for `T` with every rate multiplied by `1 / sigma^2`.
    Rates,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RescaledEnd {
    pub state: Vec<f64>,
    pub jumps: usize,
    pub candidates: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub sigma: f64,
    pub n_samples: usize,
    pub ks_vs_langevin: f64,
    /// `NaN` when the target has no known marginal CDF.
    pub ks_vs_stationary: f64,
    pub runtime_s: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    pub dt: f64,
    /// Fraction of consecutive schedule steps on which the distance fell.
    pub decreasing_fraction: f64,
}

impl ConvergenceTable {
    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].ks_vs_langevin < w[0].ks_vs_langevin)
    }
}

impl DiffusionExperiment {
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: &str| Err(Error::ConfigInvalid(m.into()));
        if self.sigmas.is_empty() {
            return cfg("sigma schedule is empty");
        }
        if self.sigmas.iter().any(|s| !(*s > 0.0 && *s < 1.0)) {
            return cfg("every sigma must lie in (0, 1)");
        }
        if self.sigmas.windows(2).any(|w| w[1] >= w[0]) {
            return cfg("sigma schedule must be strictly decreasing");
        }
        if self.horizon.is_nan() || self.horizon < 0.0 || self.samples == 0 {
            return cfg("horizon must be non-negative and samples positive");
        }
        if self.x0.len() != self.target.dim() {
            return Err(Error::DimensionMismatch { expected: self.target.dim(), got: self.x0.len() });
        }
        if !self.target.has_gradient() {
            return cfg("the Langevin reference needs a gradient");
        }
        self.g.trusted_sup()?;
        if self.g.smoothness_order() < 2 {
            return cfg("balancing function must be at least twice differentiable");
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        self.dt.unwrap_or_else(|| {
            let s = self.sigmas.iter().copied().fold(f64::INFINITY, f64::min);
            s * s / 4.0
        })
    }

    pub fn oracle(&self, sigma: f64) -> Result<RatioOracle> {
        RatioOracle::new(Target::Continuous(self.target.clone()), BaseKernel::gaussian(sigma, self.target.dim())?)
    }
}

/// Terminal state of the rescaled process `S_T = Y_{T / sigma^2}`, simulated
/// by thinning.
pub fn run_rescaled(
    oracle: &RatioOracle,
    g: &Balancing,
    sigma: f64,
    x0: &[f64],
    horizon: f64,
    change: TimeChange,
    rng: &mut SeededStream,
) -> Result<RescaledEnd> {
    let scale = sigma.powi(-2);
    let start = State::Continuous(x0.to_vec());
    let end = match change {
        TimeChange::Horizon => thinning_endpoint(oracle, g, &start, horizon * scale, 1.0, rng)?,
        TimeChange::Rates => thinning_endpoint(oracle, g, &start, horizon, scale, rng)?,
    };
    let state = end.state.as_continuous().expect("continuous model").to_vec();
    Ok(RescaledEnd { state, jumps: end.jumps, candidates: end.candidates })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LangevinOptions {
    /// Switch off the Brownian increment (gradient flow only).
    pub noise: bool,
}

impl Default for LangevinOptions {
    fn default() -> Self {
        Self { noise: true }
    }
}

/// Euler–Maruyama for `dS = 1/2 grad log pi(S) dt + dB` up to time `T`;
/// the last step is shortened to land on `T`.
pub fn run_langevin_reference(
    target: &ContinuousTarget,
    x0: &[f64],
    horizon: f64,
    dt: f64,
    rng: &mut SeededStream,
    opts: LangevinOptions,
) -> Result<Vec<f64>> {
    if !target.has_gradient() {
        return Err(Error::ConfigInvalid(format!("target `{}` has no gradient", target.name())));
    }
    if dt.is_nan() || dt <= 0.0 {
        return Err(Error::ConfigInvalid("time step must be positive".into()));
    }
    let mut x = x0.to_vec();
    let mut t = 0.0;
    let mut step = 0usize;
    while t < horizon {
        let h = dt.min(horizon - t);
        let grad = target.gradient(&x).expect("checked above");
        let sd = h.sqrt();
        for (xi, gi) in x.iter_mut().zip(&grad) {
            *xi += 0.5 * gi * h;
            if opts.noise {
                *xi += sd * rng.standard_normal();
            }
        }
        step += 1;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState(step));
        }
        t += h;
    }
    Ok(x)
}

/// Largest per-coordinate two-sample KS statistic.
pub fn marginal_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("both samples must be non-empty".into()));
    }
    let dim = a[0].len();
    if let Some(bad) = a.iter().chain(b).find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: bad.len() });
    }
    Ok((0..dim)
        .map(|c| {
            let xa: Vec<f64> = a.iter().map(|v| v[c]).collect();
            let xb: Vec<f64> = b.iter().map(|v| v[c]).collect();
            ks_two_sample(&xa, &xb)
        })
        .fold(0.0, f64::max))
}

/// Largest per-coordinate one-sample KS statistic against a marginal CDF.
pub fn stationary_distance(samples: &[Vec<f64>], cdf: &(dyn Fn(f64) -> f64 + Send + Sync)) -> f64 {
    let dim = samples.first().map_or(0, Vec::len);
    (0..dim)
        .map(|c| {
            let xs: Vec<f64> = samples.iter().map(|v| v[c]).collect();
            ks_one_sample(&xs, cdf)
        })
        .fold(0.0, f64::max)
}

/// `samples` independent Langevin end points from `x0`.
pub fn langevin_sample(exp: &DiffusionExperiment, seed: u64) -> Result<Vec<Vec<f64>>> {
    let dt = exp.step();
    run_replicas(exp.samples, seed, |_, rng| {
        run_langevin_reference(&exp.target, &exp.x0, exp.horizon, dt, rng, LangevinOptions::default())
    })
}

/// `samples` independent rescaled-LBMJP end points from `x0`.
pub fn rescaled_sample(exp: &DiffusionExperiment, sigma: f64, seed: u64) -> Result<Vec<Vec<f64>>> {
    let oracle = exp.oracle(sigma)?;
    run_replicas(exp.samples, seed, |_, rng| {
        run_rescaled(&oracle, &exp.g, sigma, &exp.x0, exp.horizon, TimeChange::Horizon, rng).map(|e| e.state)
    })
}

/// Seed of the rescaled sample for schedule entry `index`; the Langevin
/// reference uses the experiment seed itself.
pub fn schedule_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add(1 + index as u64)
}

/// KS distance to the Langevin reference (and to the stationary law when its
/// marginal CDF is known) for each `sigma` in the schedule.
pub fn convergence_experiment(exp: &DiffusionExperiment) -> Result<ConvergenceTable> {
    exp.validate()?;
    let reference = langevin_sample(exp, exp.seed)?;
    let mut rows = Vec::with_capacity(exp.sigmas.len());
    for (i, &sigma) in exp.sigmas.iter().enumerate() {
        let clock = Instant::now();
        let sample = rescaled_sample(exp, sigma, schedule_seed(exp.seed, i))?;
        let ks_vs_langevin = marginal_distance(&sample, &reference)?;
        let ks_vs_stationary = exp.target.marginal_cdf().map_or(f64::NAN, |cdf| stationary_distance(&sample, cdf));
        rows.push(ConvergenceRow {
            sigma,
            n_samples: sample.len(),
            ks_vs_langevin,
            ks_vs_stationary,
            runtime_s: clock.elapsed().as_secs_f64(),
        });
    }
    let steps = rows.len().saturating_sub(1);
    let falls = rows.windows(2).filter(|w| w[1].ks_vs_langevin < w[0].ks_vs_langevin).count();
    let decreasing_fraction = if steps == 0 { 1.0 } else { falls as f64 / steps as f64 };
    Ok(ConvergenceTable { rows, dt: exp.step(), decreasing_fraction })
}

/// Monte Carlo estimate of the rescaled drift
/// `sigma^{-2} int (y - x) g(t(x,y)) gamma_sigma(x, dy)`, i.e. mean jump
/// displacement over mean holding time in rescaled units. Uses antithetic
/// pairs `x +- sigma Z`.
pub fn drift_probe(
    target: &ContinuousTarget,
    g: &Balancing,
    x: &[f64],
    sigma: f64,
    pairs: usize,
    rng: &mut SeededStream,
) -> Vec<f64> {
    let d = x.len();
    let lx = target.log_density(x);
    let mut acc = vec![0.0; d];
    let mut y = vec![0.0; d];
    let mut z = vec![0.0; d];
    for _ in 0..pairs {
        for zi in z.iter_mut() {
            *zi = rng.standard_normal();
        }
        for sign in [1.0, -1.0] {
            for i in 0..d {
                y[i] = x[i] + sign * sigma * z[i];
            }
            let w = g.eval_log_ratio(target.log_density(&y) - lx);
            for i in 0..d {
                acc[i] += sign * z[i] * w;
            }
        }
    }
    acc.iter().map(|a| a / (2.0 * pairs as f64) / sigma).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmoothnessProbe {
    /// Largest `||Hess log pi||_2` seen.
    pub max_norm: f64,
    pub declared: Option<f64>,
    pub points: usize,
}

impl SmoothnessProbe {
    pub fn holds(&self) -> bool {
        self.declared.is_some_and(|m| self.max_norm <= m * (1.0 + 1e-4))
    }
}

/// Finite-difference Hessian of `log pi` at `points` uniform draws from the
/// box `[-half_width, half_width]^d`, compared with the declared bound `M`.
pub fn smoothness_probe(target: &ContinuousTarget, half_width: f64, points: usize, rng: &mut SeededStream) -> SmoothnessProbe {
    let d = target.dim();
    let h = 1e-4;
    let mut max_norm: f64 = 0.0;
    for _ in 0..points {
        let x: Vec<f64> = (0..d).map(|_| half_width * (2.0 * rng.open01() - 1.0)).collect();
        let f = |v: &[f64]| target.log_density(v);
        let mut hess = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                let shifted = |si: f64, sj: f64| {
                    let mut v = x.clone();
                    v[i] += si * h;
                    v[j] += sj * h;
                    f(&v)
                };
                hess[(i, j)] = (shifted(1.0, 1.0) - shifted(1.0, -1.0) - shifted(-1.0, 1.0) + shifted(-1.0, -1.0))
                    / (4.0 * h * h);
            }
        }
        let sym = (&hess + hess.transpose()) * 0.5;
        let norm = SymmetricEigen::new(sym).eigenvalues.iter().map(|e| e.abs()).fold(0.0, f64::max);
        max_norm = max_norm.max(norm);
    }
    SmoothnessProbe { max_norm, declared: target.smoothness(), points }
}
