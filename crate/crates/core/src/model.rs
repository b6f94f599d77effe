//! State spaces, targets `pi`, base kernels `gamma` and the ratio
//! `t(x, y) = pi(y) gamma(y, x) / (pi(x) gamma(x, y))`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededStream;

const STOCHASTIC_TOL: f64 = 1e-12;

/// A point of one of the supported state spaces. Lattice states are stored
/// as integer indices; the physical position is `index * h`.
#[derive(Clone, Debug, PartialEq)]
pub enum State {
    Finite(usize),
    Lattice(i64),
    Continuous(Vec<f64>),
}

impl State {
    /// Coordinates used for CSV export and test functions.
    pub fn coords(&self) -> Vec<f64> {
        match self {
            State::Finite(i) => vec![*i as f64],
            State::Lattice(n) => vec![*n as f64],
            State::Continuous(x) => x.clone(),
        }
    }

    pub fn as_finite(&self) -> Option<usize> {
        match self {
            State::Finite(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_lattice(&self) -> Option<i64> {
        match self {
            State::Lattice(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_continuous(&self) -> Option<&[f64]> {
        match self {
            State::Continuous(x) => Some(x),
            _ => None,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            State::Continuous(x) => x.len(),
            _ => 1,
        }
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            State::Finite(i) => write!(f, "{i}"),
            State::Lattice(n) => write!(f, "n={n}"),
            State::Continuous(x) => write!(f, "{x:?}"),
        }
    }
}

/// Probability vector over `{0, ..., m-1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteTarget {
    probs: Vec<f64>,
    log_probs: Vec<f64>,
}

impl FiniteTarget {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::ModelValidation("empty probability vector".into()));
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::ModelValidation(format!("invalid probability {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::ModelValidation(format!("probabilities sum to {total}")));
        }
        let log_probs = probs.iter().map(|p| p.ln()).collect();
        Ok(Self { probs, log_probs })
    }

    /// Normalises nonnegative weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::ModelValidation("weights must have positive finite sum".into()));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn uniform(m: usize) -> Result<Self> {
        Self::from_weights(&vec![1.0; m])
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn log_prob(&self, i: usize) -> f64 {
        self.log_probs[i]
    }

    /// `sum_i f(i) pi(i)`.
    pub fn expectation(&self, f: impl Fn(usize) -> f64) -> f64 {
        self.probs.iter().enumerate().map(|(i, p)| f(i) * p).sum()
    }
}

type LogMassFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Unnormalised lattice log-mass families, evaluated at the physical position.
#[derive(Clone)]
pub enum LatticeFamily {
    /// `pi(x) ∝ exp(-a |x|^beta)`.
    ExpPower { a: f64, beta: f64 },
    /// Constant mass; only sensible with a bounded support.
    Uniform,
    Custom(LogMassFn),
}

impl fmt::Debug for LatticeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LatticeFamily::ExpPower { a, beta } => write!(f, "ExpPower(a={a}, beta={beta})"),
            LatticeFamily::Uniform => write!(f, "Uniform"),
            LatticeFamily::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Lattice target on `{lower, ..., upper}` (either end may be open).
#[derive(Clone, Debug)]
pub struct LatticeTarget {
    family: LatticeFamily,
    lower: Option<i64>,
    upper: Option<i64>,
}

impl LatticeTarget {
    pub fn new(family: LatticeFamily, lower: Option<i64>, upper: Option<i64>) -> Result<Self> {
        if let (Some(lo), Some(hi)) = (lower, upper) {
            if lo > hi {
                return Err(Error::ModelValidation(format!("empty lattice range {lo}..={hi}")));
            }
        }
        if let LatticeFamily::ExpPower { a, beta } = family {
            if !(a > 0.0 && beta > 0.0 && a.is_finite() && beta.is_finite()) {
                return Err(Error::ModelValidation(format!(
                    "exp_power needs a, beta > 0 (got a={a}, beta={beta})"
                )));
            }
        }
        if matches!(family, LatticeFamily::Uniform) && (lower.is_none() || upper.is_none()) {
            return Err(Error::ModelValidation("uniform lattice target needs a bounded range".into()));
        }
        Ok(Self { family, lower, upper })
    }

    /// `exp(-a n^beta)` on the natural numbers.
    pub fn exp_power(a: f64, beta: f64) -> Result<Self> {
        Self::new(LatticeFamily::ExpPower { a, beta }, Some(0), None)
    }

    pub fn uniform_range(lower: i64, upper: i64) -> Result<Self> {
        Self::new(LatticeFamily::Uniform, Some(lower), Some(upper))
    }

    pub fn family(&self) -> &LatticeFamily {
        &self.family
    }

    pub fn lower(&self) -> Option<i64> {
        self.lower
    }

    pub fn upper(&self) -> Option<i64> {
        self.upper
    }

    pub fn contains(&self, n: i64) -> bool {
        self.lower.is_none_or(|lo| n >= lo) && self.upper.is_none_or(|hi| n <= hi)
    }

    /// Unnormalised log mass at index `n` for spacing `h`; `-inf` off support.
    pub fn log_mass(&self, n: i64, h: f64) -> f64 {
        if !self.contains(n) {
            return f64::NEG_INFINITY;
        }
        let x = n as f64 * h;
        match &self.family {
            LatticeFamily::ExpPower { a, beta } => -a * x.abs().powf(*beta),
            LatticeFamily::Uniform => 0.0,
            LatticeFamily::Custom(f) => f(x),
        }
    }
}

type LogDensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradientFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type CdfFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Log-density on `R^d` up to a constant, with optional gradient.
#[derive(Clone)]
pub struct ContinuousTarget {
    name: String,
    dim: usize,
    log_density: LogDensityFn,
    gradient: Option<GradientFn>,
    /// Declared bound `M` with `-M I <= Hess log pi <= M I`.
    smoothness: Option<f64>,
    /// CDF of each one-dimensional marginal of `pi`, when known.
    marginal_cdf: Option<CdfFn>,
}

impl fmt::Debug for ContinuousTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ContinuousTarget")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("smoothness", &self.smoothness)
            .finish()
    }
}

impl ContinuousTarget {
    pub fn new<F>(name: impl Into<String>, dim: usize, log_density: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            dim,
            log_density: Arc::new(log_density),
            gradient: None,
            smoothness: None,
            marginal_cdf: None,
        }
    }

    pub fn with_gradient<G>(mut self, gradient: G) -> Self
    where
        G: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        self.gradient = Some(Arc::new(gradient));
        self
    }

    pub fn with_smoothness(mut self, m: f64) -> Self {
        self.smoothness = Some(m);
        self
    }

    pub fn with_marginal_cdf<C>(mut self, cdf: C) -> Self
    where
        C: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        self.marginal_cdf = Some(Arc::new(cdf));
        self
    }

    /// Standard Gaussian `N(0, I_d)`; `M = 1`.
    pub fn standard_gaussian(dim: usize) -> Self {
        Self::new("gaussian", dim, |x| -0.5 * x.iter().map(|v| v * v).sum::<f64>())
            .with_gradient(|x| x.iter().map(|v| -v).collect())
            .with_smoothness(1.0)
            .with_marginal_cdf(crate::stats::normal_cdf)
    }

    /// `pi(x) ∝ exp(-sum x_i^4 / 4)`. The Hessian is unbounded globally;
    /// the declared `M = 27` covers the box `|x_i| <= 3`.
    pub fn quartic(dim: usize) -> Self {
        Self::new("quartic", dim, |x| -0.25 * x.iter().map(|v| v.powi(4)).sum::<f64>())
            .with_gradient(|x| x.iter().map(|v| -v.powi(3)).collect())
            .with_smoothness(27.0)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        (self.log_density)(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.gradient.as_ref().map(|g| g(x))
    }

    pub fn has_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    pub fn smoothness(&self) -> Option<f64> {
        self.smoothness
    }

    pub fn marginal_cdf(&self) -> Option<&(dyn Fn(f64) -> f64 + Send + Sync)> {
        self.marginal_cdf.as_deref()
    }
}

#[derive(Clone, Debug)]
pub enum Target {
    Finite(FiniteTarget),
    Lattice(LatticeTarget),
    Continuous(ContinuousTarget),
}

/// Proposal mechanism `gamma(x, .)`.
#[derive(Clone, Debug, PartialEq)]
pub enum BaseKernel {
    /// Row-stochastic `m x m` matrix stored row-major.
    FiniteMatrix { m: usize, entries: Vec<f64> },
    /// `(delta_{x-h} + delta_{x+h}) / 2`.
    LatticeWalk { h: f64 },
    /// `N(x, sigma^2 I_d)`.
    GaussianWalk { sigma: f64, dim: usize },
}

impl BaseKernel {
    pub fn finite(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = rows.len();
        if m == 0 || rows.iter().any(|r| r.len() != m) {
            return Err(Error::ModelValidation("kernel matrix must be square and nonempty".into()));
        }
        let entries: Vec<f64> = rows.into_iter().flatten().collect();
        if let Some(v) = entries.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::ModelValidation(format!("invalid kernel entry {v}")));
        }
        for i in 0..m {
            let s: f64 = entries[i * m..(i + 1) * m].iter().sum();
            if (s - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::ModelValidation(format!("kernel row {i} sums to {s}")));
            }
        }
        Ok(Self::FiniteMatrix { m, entries })
    }

    /// Uniform proposal over the other `m - 1` states.
    pub fn complete(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::ModelValidation("complete kernel needs at least 2 states".into()));
        }
        let p = 1.0 / (m - 1) as f64;
        Self::finite(
            (0..m)
                .map(|i| (0..m).map(|j| if i == j { 0.0 } else { p }).collect())
                .collect(),
        )
    }

    /// Nearest-neighbour walk on a cycle of `m` states.
    pub fn cycle(m: usize) -> Result<Self> {
        if m < 3 {
            return Err(Error::ModelValidation("cycle kernel needs at least 3 states".into()));
        }
        let mut rows = vec![vec![0.0; m]; m];
        for (i, row) in rows.iter_mut().enumerate() {
            row[(i + 1) % m] += 0.5;
            row[(i + m - 1) % m] += 0.5;
        }
        Self::finite(rows)
    }

    pub fn lattice(h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::ModelValidation(format!("lattice step must be positive, got {h}")));
        }
        Ok(Self::LatticeWalk { h })
    }

    pub fn gaussian(sigma: f64, dim: usize) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) || dim == 0 {
            return Err(Error::ModelValidation(format!(
                "gaussian walk needs sigma > 0 and dim > 0 (sigma={sigma}, dim={dim})"
            )));
        }
        Ok(Self::GaussianWalk { sigma, dim })
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match self {
            BaseKernel::FiniteMatrix { m, entries } => entries[i * m + j],
            _ => panic!("entry() on a non-matrix kernel"),
        }
    }

    /// Draws from `gamma(x, .)`.
    pub fn sample(&self, x: &State, rng: &mut SeededStream) -> State {
        match (self, x) {
            (BaseKernel::FiniteMatrix { m, entries }, State::Finite(i)) => {
                let row = &entries[i * m..(i + 1) * m];
                let u = rng.open01();
                let mut acc = 0.0;
                let mut last = *i;
                for (j, &p) in row.iter().enumerate() {
                    if p > 0.0 {
                        acc += p;
                        last = j;
                        if u < acc {
                            return State::Finite(j);
                        }
                    }
                }
                State::Finite(last)
            }
            (BaseKernel::LatticeWalk { .. }, State::Lattice(n)) => {
                State::Lattice(if rng.coin() { n + 1 } else { n - 1 })
            }
            (BaseKernel::GaussianWalk { sigma, .. }, State::Continuous(v)) => {
                State::Continuous(v.iter().map(|c| c + sigma * rng.standard_normal()).collect())
            }
            _ => panic!("state {x} does not belong to kernel {self:?}"),
        }
    }

    /// Exhaustive support of `gamma(x, .)` with probabilities.
    ///
    /// Lattice proposals that leave the target support are still listed;
    /// the ratio oracle gives them weight zero.
    pub fn neighborhood(&self, x: &State) -> Result<Vec<(State, f64)>> {
        match (self, x) {
            (BaseKernel::FiniteMatrix { m, entries }, State::Finite(i)) => Ok(entries
                [i * m..(i + 1) * m]
                .iter()
                .enumerate()
                .filter(|(_, p)| **p > 0.0)
                .map(|(j, p)| (State::Finite(j), *p))
                .collect()),
            (BaseKernel::LatticeWalk { .. }, State::Lattice(n)) => {
                Ok(vec![(State::Lattice(n - 1), 0.5), (State::Lattice(n + 1), 0.5)])
            }
            (BaseKernel::GaussianWalk { .. }, _) => Err(Error::UncountableSupport),
            _ => Err(Error::StateMismatch(x.to_string())),
        }
    }

    /// Physical position of a lattice index.
    pub fn position(&self, n: i64) -> f64 {
        match self {
            BaseKernel::LatticeWalk { h } => n as f64 * h,
            _ => n as f64,
        }
    }
}

/// A validated `(target, kernel)` pair exposing `log t(x, y)`.
#[derive(Clone, Debug)]
pub struct RatioOracle {
    target: Target,
    kernel: BaseKernel,
    /// `log gamma(i, j)` for matrix kernels.
    log_kernel: Vec<f64>,
}

impl RatioOracle {
    pub fn new(target: Target, kernel: BaseKernel) -> Result<Self> {
        let mut log_kernel = Vec::new();
        match (&target, &kernel) {
            (Target::Finite(t), BaseKernel::FiniteMatrix { m, entries }) => {
                if t.len() != *m {
                    return Err(Error::ModelValidation(format!(
                        "target has {} states but kernel has {m}",
                        t.len()
                    )));
                }
                for i in 0..*m {
                    for j in 0..*m {
                        if (entries[i * m + j] > 0.0) != (entries[j * m + i] > 0.0) {
                            return Err(Error::ModelValidation(format!(
                                "kernel support is not symmetric at ({i},{j})"
                            )));
                        }
                    }
                }
                log_kernel = entries.iter().map(|p| p.ln()).collect();
            }
            (Target::Lattice(_), BaseKernel::LatticeWalk { .. }) => {}
            (Target::Continuous(t), BaseKernel::GaussianWalk { dim, .. }) => {
                if t.dim() != *dim {
                    return Err(Error::ModelValidation(format!(
                        "target dimension {} differs from kernel dimension {dim}",
                        t.dim()
                    )));
                }
            }
            _ => {
                return Err(Error::ModelValidation(
                    "target and kernel live on different state spaces".into(),
                ))
            }
        }
        Ok(Self { target, kernel, log_kernel })
    }

    pub fn finite(probs: Vec<f64>, rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(Target::Finite(FiniteTarget::new(probs)?), BaseKernel::finite(rows)?)
    }

    pub fn target(&self) -> &Target {
        &self.target
    }

    pub fn kernel(&self) -> &BaseKernel {
        &self.kernel
    }

    pub fn finite_target(&self) -> Option<&FiniteTarget> {
        match &self.target {
            Target::Finite(t) => Some(t),
            _ => None,
        }
    }

    pub fn is_discrete(&self) -> bool {
        !matches!(self.kernel, BaseKernel::GaussianWalk { .. })
    }

    pub fn is_symmetric_kernel(&self) -> bool {
        match &self.kernel {
            BaseKernel::FiniteMatrix { m, entries } => {
                (0..*m).all(|i| (0..*m).all(|j| entries[i * m + j] == entries[j * m + i]))
            }
            _ => true,
        }
    }

    /// Unnormalised `log pi(x)`; `-inf` off support.
    pub fn log_target(&self, x: &State) -> Result<f64> {
        match (&self.target, x) {
            (Target::Finite(t), State::Finite(i)) if *i < t.len() => Ok(t.log_prob(*i)),
            (Target::Lattice(t), State::Lattice(n)) => Ok(t.log_mass(*n, self.kernel.position(1))),
            (Target::Continuous(t), State::Continuous(v)) if v.len() == t.dim() => {
                Ok(t.log_density(v))
            }
            _ => Err(Error::StateMismatch(x.to_string())),
        }
    }

    fn checked_log_target(&self, x: &State) -> Result<f64> {
        let lp = self.log_target(x)?;
        if lp.is_finite() {
            Ok(lp)
        } else {
            Err(Error::OutOfSupport(x.to_string()))
        }
    }

    /// `log t(x, y)`. Errors with `OutOfSupport` if either endpoint has zero
    /// mass and `ZeroBaseProbability` if `gamma(x,y)` or `gamma(y,x)` is zero;
    /// callers treat both as `t = 0`.
    pub fn log_ratio(&self, x: &State, y: &State) -> Result<f64> {
        let lx = self.checked_log_target(x)?;
        let ly = self.checked_log_target(y)?;
        match (&self.kernel, x, y) {
            (BaseKernel::FiniteMatrix { m, .. }, State::Finite(i), State::Finite(j)) => {
                let fwd = self.log_kernel[i * m + j];
                let bwd = self.log_kernel[j * m + i];
                if !fwd.is_finite() || !bwd.is_finite() {
                    return Err(Error::ZeroBaseProbability { from: x.to_string(), to: y.to_string() });
                }
                Ok((ly + bwd) - (lx + fwd))
            }
            _ => Ok(ly - lx),
        }
    }

    /// `log t(x, y)` with the `t = 0` conventions mapped to `-inf`.
    pub fn log_ratio_or_zero(&self, x: &State, y: &State) -> Result<f64> {
        self.checked_log_target(x)?;
        match self.log_ratio(x, y) {
            Ok(v) => Ok(v),
            Err(Error::ZeroBaseProbability { .. } | Error::OutOfSupport(_)) => Ok(f64::NEG_INFINITY),
            Err(e) => Err(e),
        }
    }

    pub fn sample_base(&self, x: &State, rng: &mut SeededStream) -> State {
        self.kernel.sample(x, rng)
    }

    pub fn neighborhood(&self, x: &State) -> Result<Vec<(State, f64)>> {
        self.kernel.neighborhood(x)
    }

    /// Whether `x` is a state of this model with positive target mass.
    pub fn in_support(&self, x: &State) -> bool {
        self.log_target(x).map(|v| v.is_finite()).unwrap_or(false)
    }
}

/// JSON model descriptor: `{"target": {...}, "kernel": {...}}`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelDescriptor {
    pub target: TargetDescriptor,
    pub kernel: KernelDescriptor,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TargetDescriptor {
    Finite {
        probs: Vec<f64>,
    },
    Lattice {
        family: LatticeFamilyName,
        #[serde(default)]
        a: Option<f64>,
        #[serde(default)]
        beta: Option<f64>,
        #[serde(default)]
        lower: Option<i64>,
        #[serde(default)]
        upper: Option<i64>,
        /// `"naturals"` (default) or `"integers"`; ignored when `lower` is given.
        #[serde(default)]
        support: Option<String>,
    },
    Continuous {
        family: ContinuousFamilyName,
        #[serde(default = "one")]
        dim: usize,
    },
}

fn one() -> usize {
    1
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum LatticeFamilyName {
    ExpPower,
    Uniform,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ContinuousFamilyName {
    Gaussian,
    Quartic,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum KernelDescriptor {
    Matrix { rows: Vec<Vec<f64>> },
    Complete,
    Cycle,
    Walk {
        #[serde(default = "unit_step")]
        h: f64,
    },
    Gaussian { sigma: f64 },
}

fn unit_step() -> f64 {
    1.0
}

impl ModelDescriptor {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))
    }

    pub fn build(&self) -> Result<RatioOracle> {
        let target = match &self.target {
            TargetDescriptor::Finite { probs } => Target::Finite(FiniteTarget::new(probs.clone())?),
            TargetDescriptor::Lattice { family, a, beta, lower, upper, support } => {
                let lower = match (lower, support.as_deref()) {
                    (Some(lo), _) => Some(*lo),
                    (None, None | Some("naturals")) => Some(0),
                    (None, Some("integers")) => None,
                    (None, Some(other)) => {
                        return Err(Error::ConfigInvalid(format!("unknown lattice support `{other}`")))
                    }
                };
                let family = match family {
                    LatticeFamilyName::ExpPower => LatticeFamily::ExpPower {
                        a: a.ok_or_else(|| Error::ConfigInvalid("exp_power needs `a`".into()))?,
                        beta: beta
                            .ok_or_else(|| Error::ConfigInvalid("exp_power needs `beta`".into()))?,
                    },
                    LatticeFamilyName::Uniform => LatticeFamily::Uniform,
                };
                Target::Lattice(LatticeTarget::new(family, lower, *upper)?)
            }
            TargetDescriptor::Continuous { family, dim } => Target::Continuous(match family {
                ContinuousFamilyName::Gaussian => ContinuousTarget::standard_gaussian(*dim),
                ContinuousFamilyName::Quartic => ContinuousTarget::quartic(*dim),
            }),
        };
        let kernel = match (&self.kernel, &target) {
            (KernelDescriptor::Matrix { rows }, _) => BaseKernel::finite(rows.clone())?,
            (KernelDescriptor::Complete, Target::Finite(t)) => BaseKernel::complete(t.len())?,
            (KernelDescriptor::Cycle, Target::Finite(t)) => BaseKernel::cycle(t.len())?,
            (KernelDescriptor::Walk { h }, _) => BaseKernel::lattice(*h)?,
            (KernelDescriptor::Gaussian { sigma }, Target::Continuous(t)) => {
                BaseKernel::gaussian(*sigma, t.dim())?
            }
            (KernelDescriptor::Gaussian { sigma }, _) => BaseKernel::gaussian(*sigma, 1)?,
            _ => {
                return Err(Error::ConfigInvalid(
                    "complete/cycle kernels require a finite target".into(),
                ))
            }
        };
        RatioOracle::new(target, kernel)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state(p0: f64) -> RatioOracle {
        RatioOracle::finite(vec![p0, 1.0 - p0], vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
    }

    fn exp_lattice() -> RatioOracle {
        RatioOracle::new(
            Target::Lattice(LatticeTarget::exp_power(1.0, 1.0).unwrap()),
            BaseKernel::lattice(1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn uniform_two_state_ratio_is_one() {
        let o = two_state(0.5);
        assert_eq!(o.log_ratio(&State::Finite(0), &State::Finite(1)).unwrap(), 0.0);
    }

    #[test]
    fn exponential_lattice_ratio() {
        let o = exp_lattice();
        let r = o.log_ratio(&State::Lattice(3), &State::Lattice(4)).unwrap();
        assert!((r + 1.0).abs() < 1e-15);
    }

    #[test]
    fn finite_ratio_from_explicit_matrices() {
        // t(0,1) = pi(1) gamma(1,0) / (pi(0) gamma(0,1)) = 0.8 * 1 / (0.2 * 1) = 4.
        let o = two_state(0.2);
        let r = o.log_ratio(&State::Finite(0), &State::Finite(1)).unwrap();
        assert!((r - 4f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn nonsymmetric_kernel_ratio() {
        let o = RatioOracle::finite(
            vec![0.25, 0.75],
            vec![vec![0.5, 0.5], vec![0.9, 0.1]],
        )
        .unwrap();
        let expected = (0.75f64 * 0.9 / (0.25 * 0.5)).ln();
        let r = o.log_ratio(&State::Finite(0), &State::Finite(1)).unwrap();
        assert!((r - expected).abs() < 1e-14);
        let back = o.log_ratio(&State::Finite(1), &State::Finite(0)).unwrap();
        assert!((r + back).abs() < 1e-14);
    }

    #[test]
    fn boundary_proposal_is_zero_weight() {
        let o = exp_lattice();
        assert!(matches!(
            o.log_ratio(&State::Lattice(0), &State::Lattice(-1)),
            Err(Error::OutOfSupport(_))
        ));
        assert_eq!(
            o.log_ratio_or_zero(&State::Lattice(0), &State::Lattice(-1)).unwrap(),
            f64::NEG_INFINITY
        );
        assert!(o.log_ratio_or_zero(&State::Lattice(-1), &State::Lattice(0)).is_err());
    }

    #[test]
    fn zero_base_probability_signalled() {
        let o = RatioOracle::finite(
            vec![0.3, 0.3, 0.4],
            vec![vec![0.0, 1.0, 0.0], vec![0.5, 0.0, 0.5], vec![0.0, 1.0, 0.0]],
        )
        .unwrap();
        assert!(matches!(
            o.log_ratio(&State::Finite(0), &State::Finite(2)),
            Err(Error::ZeroBaseProbability { .. })
        ));
    }

    #[test]
    fn asymmetric_support_rejected() {
        let err = RatioOracle::finite(
            vec![0.5, 0.5],
            vec![vec![0.0, 1.0], vec![0.0, 1.0]],
        )
        .unwrap_err();
        assert!(matches!(err, Error::ModelValidation(_)));
    }

    #[test]
    fn validation_errors() {
        assert!(FiniteTarget::new(vec![0.5, 0.4]).is_err());
        assert!(FiniteTarget::new(vec![1.5, -0.5]).is_err());
        assert!(BaseKernel::finite(vec![vec![0.5, 0.4], vec![1.0, 0.0]]).is_err());
        assert!(BaseKernel::gaussian(0.0, 1).is_err());
        assert!(BaseKernel::lattice(-1.0).is_err());
        assert!(LatticeTarget::exp_power(-1.0, 1.0).is_err());
    }

    #[test]
    fn neighborhoods() {
        let k = BaseKernel::finite(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(k.neighborhood(&State::Finite(1)).unwrap(), vec![(State::Finite(0), 1.0)]);

        let walk = BaseKernel::lattice(0.5).unwrap();
        let nb = walk.neighborhood(&State::Lattice(4)).unwrap();
        let positions: Vec<(f64, f64)> = nb
            .iter()
            .map(|(s, p)| (walk.position(s.as_lattice().unwrap()), *p))
            .collect();
        assert_eq!(positions, vec![(1.5, 0.5), (2.5, 0.5)]);

        let at_zero = BaseKernel::lattice(1.0).unwrap().neighborhood(&State::Lattice(0)).unwrap();
        assert_eq!(at_zero, vec![(State::Lattice(-1), 0.5), (State::Lattice(1), 0.5)]);

        let g = BaseKernel::gaussian(1.0, 2).unwrap();
        assert_eq!(
            g.neighborhood(&State::Continuous(vec![0.0, 0.0])),
            Err(Error::UncountableSupport)
        );
    }

    #[test]
    fn lattice_walk_frequencies() {
        let walk = BaseKernel::lattice(1.0).unwrap();
        let mut rng = SeededStream::new(11, 0);
        let n = 100_000;
        let ups = (0..n)
            .filter(|_| walk.sample(&State::Lattice(5), &mut rng) == State::Lattice(6))
            .count();
        let freq = ups as f64 / n as f64;
        assert!((freq - 0.5).abs() < 3.0 * (0.25f64 / n as f64).sqrt());
    }

    #[test]
    fn degenerate_row_sampling() {
        let k = BaseKernel::finite(vec![
            vec![0.0, 1.0, 0.0],
            vec![0.5, 0.0, 0.5],
            vec![0.0, 1.0, 0.0],
        ])
        .unwrap();
        let mut rng = SeededStream::new(3, 0);
        for _ in 0..1000 {
            assert_eq!(k.sample(&State::Finite(0), &mut rng), State::Finite(1));
        }
    }

    #[test]
    fn gaussian_walk_mean() {
        let k = BaseKernel::gaussian(1.0, 1).unwrap();
        let mut rng = SeededStream::new(5, 0);
        let n = 100_000;
        let origin = State::Continuous(vec![0.0]);
        let mean: f64 = (0..n)
            .map(|_| k.sample(&origin, &mut rng).as_continuous().unwrap()[0])
            .sum::<f64>()
            / n as f64;
        assert!(mean.abs() < 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn descriptor_round_trip() {
        let text = r#"{"target": {"kind": "lattice", "family": "exp_power", "a": 1.0, "beta": 1.5},
                       "kernel": {"kind": "walk", "h": 1.0}}"#;
        let d = ModelDescriptor::from_json(text).unwrap();
        let o = d.build().unwrap();
        let r = o.log_ratio(&State::Lattice(1), &State::Lattice(2)).unwrap();
        assert!((r + (2f64.powf(1.5) - 1.0)).abs() < 1e-14);

        let bad = r#"{"target": {"kind": "finite", "probs": [1.0], "extra": 1}, "kernel": {"kind": "complete"}}"#;
        assert!(matches!(ModelDescriptor::from_json(bad), Err(Error::ConfigInvalid(_))));
    }
}
