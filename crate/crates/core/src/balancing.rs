//! Balancing functions `g` with `g(1) = 1` and `g(t) = t g(1/t)`.
//!
//! Every builtin carries a log-domain evaluator `b(x) = log g(e^x)`; jump
//! weights are formed from log-ratios.

use std::f64::consts::LN_2;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Smoothness order reported for functions that are `C^inf` on `[0, inf)`.
pub const INFINITELY_SMOOTH: u32 = u32::MAX;

/// Exponent used by [`builtin_catalog`] for the piecewise power family.
pub const DEFAULT_POWER_ALPHA: f64 = 0.5;

const IDENTITY_TOL: f64 = 1e-12;
const UNIT_TOL: f64 = 1e-14;

/// Supremum of a balancing function. Empirical bounds come from grid
/// maximisation and are never used for thinning.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SupBound {
    pub value: f64,
    pub empirical: bool,
}

type UserFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Form {
    Min,
    Barker,
    Max,
    Power(f64),
    Convex(f64, Box<Balancing>, Box<Balancing>),
    Geometric(f64, Box<Balancing>, Box<Balancing>),
    Custom(UserFn),
}

/// A named balancing function together with the properties the rest of the
/// crate relies on.
#[derive(Clone)]
pub struct Balancing {
    name: String,
    form: Form,
    nondecreasing: bool,
    sup_bound: Option<SupBound>,
    smoothness_order: u32,
}

impl fmt::Debug for Balancing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Balancing")
            .field("name", &self.name)
            .field("nondecreasing", &self.nondecreasing)
            .field("sup_bound", &self.sup_bound)
            .field("smoothness_order", &self.smoothness_order)
            .finish()
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

impl Balancing {
    /// `g(t) = min(1, t)`.
    pub fn min() -> Self {
        Self {
            name: "min".into(),
            form: Form::Min,
            nondecreasing: true,
            sup_bound: Some(SupBound { value: 1.0, empirical: false }),
            smoothness_order: 0,
        }
    }

    /// Barker's `g(t) = 2t / (1 + t)`.
    pub fn barker() -> Self {
        Self {
            name: "barker".into(),
            form: Form::Barker,
            nondecreasing: true,
            sup_bound: Some(SupBound { value: 2.0, empirical: false }),
            smoothness_order: INFINITELY_SMOOTH,
        }
    }

    /// `g(t) = max(1, t)`.
    pub fn max() -> Self {
        Self {
            name: "max".into(),
            form: Form::Max,
            nondecreasing: true,
            sup_bound: None,
            smoothness_order: 0,
        }
    }

    /// `g(t) = sqrt(t)`.
    pub fn sqrt() -> Self {
        let mut g = Self::power(0.5).expect("0.5 is a valid exponent");
        g.name = "sqrt".into();
        g
    }

    /// Piecewise power family: `t^alpha` on `[0, 1)`, `t^(1 - alpha)` on `[1, inf)`.
    pub fn power(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidBalancing(format!(
                "power exponent must be positive, got {alpha}"
            )));
        }
        let sup_bound = (alpha >= 1.0).then_some(SupBound { value: 1.0, empirical: false });
        Ok(Self {
            name: format!("power({alpha})"),
            form: Form::Power(alpha),
            nondecreasing: alpha <= 1.0,
            sup_bound,
            smoothness_order: 0,
        })
    }

    /// `weight * first + (1 - weight) * second`.
    pub fn convex_mix(first: &Balancing, second: &Balancing, weight: f64) -> Result<Self> {
        check_weight(weight)?;
        let sup_bound = match (first.sup_bound, second.sup_bound) {
            (Some(a), Some(b)) => Some(SupBound {
                value: weight * a.value + (1.0 - weight) * b.value,
                empirical: a.empirical || b.empirical,
            }),
            _ => None,
        };
        Ok(Self {
            name: format!("mix({weight},{},{})", first.name, second.name),
            form: Form::Convex(weight, Box::new(first.clone()), Box::new(second.clone())),
            nondecreasing: first.nondecreasing && second.nondecreasing,
            sup_bound,
            smoothness_order: first.smoothness_order.min(second.smoothness_order),
        })
    }

    /// `first^weight * second^(1 - weight)`.
    pub fn geometric_mix(first: &Balancing, second: &Balancing, weight: f64) -> Result<Self> {
        check_weight(weight)?;
        let sup_bound = match (first.sup_bound, second.sup_bound) {
            (Some(a), Some(b)) => Some(SupBound {
                value: a.value.powf(weight) * b.value.powf(1.0 - weight),
                empirical: a.empirical || b.empirical,
            }),
            _ => None,
        };
        Ok(Self {
            name: format!("geo({weight},{},{})", first.name, second.name),
            form: Form::Geometric(weight, Box::new(first.clone()), Box::new(second.clone())),
            nondecreasing: first.nondecreasing && second.nondecreasing,
            sup_bound,
            smoothness_order: first.smoothness_order.min(second.smoothness_order),
        })
    }

    /// User-supplied `g`. Monotonicity and the supremum are estimated on the
    /// standard grid; the supremum is flagged empirical. Nothing else is
    /// validated here, use [`check_balancing`] for that.
    pub fn custom<F>(name: impl Into<String>, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let f: UserFn = Arc::new(f);
        let grid = standard_grid();
        let mut sorted = grid.clone();
        sorted.sort_by(f64::total_cmp);
        let values: Vec<f64> = sorted.iter().map(|&t| f(t)).collect();
        let nondecreasing = values.windows(2).all(|w| w[1] >= w[0]);
        let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // No supremum when g still grows at the grid edge.
        let growing_at_edge = values[values.len() - 1] > values[values.len() - 2] * (1.0 + 1e-6);
        let sup_bound = (top.is_finite() && !growing_at_edge)
            .then_some(SupBound { value: top, empirical: true });
        Self {
            name: name.into(),
            form: Form::Custom(f),
            nondecreasing,
            sup_bound,
            smoothness_order: 0,
        }
    }

    /// Overrides the smoothness order; for user-defined functions only.
    pub fn with_smoothness(mut self, order: u32) -> Self {
        self.smoothness_order = order;
        self
    }

    /// Looks up a catalog entry: `min`, `barker`, `max`, `sqrt` or `power(alpha)`.
    pub fn from_name(name: &str) -> Result<Self> {
        let trimmed = name.trim();
        match trimmed {
            "min" => Ok(Self::min()),
            "barker" => Ok(Self::barker()),
            "max" => Ok(Self::max()),
            "sqrt" => Ok(Self::sqrt()),
            _ => {
                let inner = trimmed
                    .strip_prefix("power(")
                    .and_then(|s| s.strip_suffix(')'))
                    .ok_or_else(|| {
                        Error::InvalidBalancing(format!("unknown balancing function `{trimmed}`"))
                    })?;
                let alpha: f64 = inner.trim().parse().map_err(|_| {
                    Error::InvalidBalancing(format!("bad power exponent `{inner}`"))
                })?;
                Self::power(alpha)
            }
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.nondecreasing
    }

    pub fn sup_bound(&self) -> Option<SupBound> {
        self.sup_bound
    }

    pub fn smoothness_order(&self) -> u32 {
        self.smoothness_order
    }

    /// A supremum that may be used as a uniformisation rate.
    pub fn trusted_sup(&self) -> Result<f64> {
        match self.sup_bound {
            Some(SupBound { value, empirical: false }) => Ok(value),
            _ => Err(Error::MissingSupBound(self.name.clone())),
        }
    }

    /// `g(t)` for `t >= 0`, with `g(0) = 0`.
    pub fn eval(&self, t: f64) -> f64 {
        if t.is_nan() {
            return f64::NAN;
        }
        if t <= 0.0 {
            return 0.0;
        }
        match &self.form {
            Form::Min => t.min(1.0),
            Form::Barker => {
                if t.is_infinite() {
                    2.0
                } else {
                    2.0 * t / (1.0 + t)
                }
            }
            Form::Max => t.max(1.0),
            Form::Power(alpha) => {
                if t < 1.0 {
                    t.powf(*alpha)
                } else {
                    t.powf(1.0 - alpha)
                }
            }
            Form::Convex(w, a, b) => w * a.eval(t) + (1.0 - w) * b.eval(t),
            Form::Geometric(w, a, b) => a.eval(t).powf(*w) * b.eval(t).powf(1.0 - w),
            Form::Custom(f) => f(t),
        }
    }

    /// `b(x) = log g(e^x)`, evaluated without forming `e^x` where possible.
    pub fn log_eval(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        if x == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        match &self.form {
            Form::Min => x.min(0.0),
            Form::Max => x.max(0.0),
            Form::Barker => LN_2 - softplus(-x),
            Form::Power(alpha) => {
                if x < 0.0 {
                    alpha * x
                } else {
                    (1.0 - alpha) * x
                }
            }
            Form::Convex(w, a, b) => {
                log_add_exp(w.ln() + a.log_eval(x), (1.0 - w).ln() + b.log_eval(x))
            }
            Form::Geometric(w, a, b) => w * a.log_eval(x) + (1.0 - w) * b.log_eval(x),
            Form::Custom(f) => f(x.exp()).ln(),
        }
    }

    /// `g(exp(log_t))`.
    pub fn eval_log_ratio(&self, log_t: f64) -> f64 {
        self.log_eval(log_t).exp()
    }
}

fn check_weight(weight: f64) -> Result<()> {
    if weight > 0.0 && weight < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidBalancing(format!("mixing weight must lie in (0,1), got {weight}")))
    }
}

/// min, barker, max, sqrt and the power family at [`DEFAULT_POWER_ALPHA`].
pub fn builtin_catalog() -> Vec<Balancing> {
    catalog_with_alpha(DEFAULT_POWER_ALPHA).expect("default exponent is valid")
}

pub fn catalog_with_alpha(alpha: f64) -> Result<Vec<Balancing>> {
    Ok(vec![
        Balancing::min(),
        Balancing::barker(),
        Balancing::max(),
        Balancing::sqrt(),
        Balancing::power(alpha)?,
    ])
}

/// 200 log-spaced points over `[1e-6, 1e6]` followed by `t = 1`.
pub fn standard_grid() -> Vec<f64> {
    let n = 200;
    let (lo, hi) = (-6.0f64, 6.0f64);
    let mut grid: Vec<f64> = (0..n)
        .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (n - 1) as f64))
        .collect();
    grid.push(1.0);
    grid
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    /// `g(1) != 1`.
    UnitValue,
    /// `g(t) <= 0` for some `t > 0`.
    NonPositive,
    /// `g(t) != t g(1/t)`.
    Identity,
    /// `g(t) < min(1, t)`.
    LowerSandwich,
    /// `g(t) > max(1, t)`.
    UpperSandwich,
    /// `g(t) > 1 + t`.
    LinearGrowth,
    /// `g(t) > sup`.
    SupBound,
    /// `g(t) > sup * min(1, t)`.
    ScaledMin,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub t: f64,
    pub kind: ViolationKind,
    /// Left and right side of the failed relation.
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ViolationReport {
    pub violations: Vec<Violation>,
}

impl ViolationReport {
    pub fn is_pass(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, t: f64, kind: ViolationKind, lhs: f64, rhs: f64) {
        self.violations.push(Violation { t, kind, lhs, rhs });
    }
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Empty("grid".into()));
    }
    match grid.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        Some(&t) => Err(Error::NonPositiveGridPoint(t)),
        None => Ok(()),
    }
}

/// Checks `g(1) = 1`, positivity and the balancing identity on `grid`.
pub fn check_balancing(g: &Balancing, grid: &[f64]) -> Result<ViolationReport> {
    validate_grid(grid)?;
    let mut report = ViolationReport::default();
    let one = g.eval(1.0);
    if (one - 1.0).abs().is_nan() || (one - 1.0).abs() > UNIT_TOL {
        report.push(1.0, ViolationKind::UnitValue, one, 1.0);
    }
    for &t in grid {
        let lhs = g.eval(t);
        if lhs.is_nan() || lhs <= 0.0 {
            report.push(t, ViolationKind::NonPositive, lhs, 0.0);
            continue;
        }
        let rhs = t * g.eval(1.0 / t);
        let diff = (lhs - rhs).abs();
        if diff.is_nan() || diff > IDENTITY_TOL * lhs.max(1.0) {
            report.push(t, ViolationKind::Identity, lhs, rhs);
        }
    }
    Ok(report)
}

/// Checks the sandwich `min(1,t) <= g(t) <= max(1,t)` (and `g <= 1 + t`) for
/// nondecreasing `g`, and `g <= sup * min(1,t)` whenever a supremum is known.
/// With `require_sup` a missing supremum is an error.
pub fn check_bounds(g: &Balancing, grid: &[f64], require_sup: bool) -> Result<ViolationReport> {
    validate_grid(grid)?;
    if require_sup && g.sup_bound.is_none() {
        return Err(Error::MissingSupBound(g.name.clone()));
    }
    let tol = |x: f64| IDENTITY_TOL * x.abs().max(1.0);
    let mut report = ViolationReport::default();
    for &t in grid {
        let v = g.eval(t);
        if g.nondecreasing {
            let lo = t.min(1.0);
            let hi = t.max(1.0);
            if v < lo - tol(lo) {
                report.push(t, ViolationKind::LowerSandwich, lo, v);
            }
            if v > hi + tol(hi) {
                report.push(t, ViolationKind::UpperSandwich, v, hi);
            }
            if v > 1.0 + t + tol(1.0 + t) {
                report.push(t, ViolationKind::LinearGrowth, v, 1.0 + t);
            }
        }
        if let Some(sup) = g.sup_bound {
            if v > sup.value + tol(sup.value) {
                report.push(t, ViolationKind::SupBound, v, sup.value);
            }
            let scaled = sup.value * t.min(1.0);
            if v > scaled + tol(scaled) {
                report.push(t, ViolationKind::ScaledMin, v, scaled);
            }
        }
    }
    Ok(report)
}
