//! Jump rates `lambda(x) = sum_y g(t(x,y)) gamma(x,y)` and the jump
//! distribution `Gamma_g(x, .)` on discrete spaces.

use crate::balancing::Balancing;
use crate::error::{Error, Result};
use crate::model::{LatticeTarget, RatioOracle, State, Target};

/// Weights below this are flushed to exact zero.
pub const FLUSH_THRESHOLD: f64 = 1e-300;

const TAIL_MASS: f64 = 1e-12;
const MAX_LATTICE_TERMS: i64 = 10_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct RateResult {
    pub lambda: f64,
    /// `(y, g(t(x,y)) gamma(x,y))` over the neighbourhood of `x`.
    pub weights: Vec<(State, f64)>,
    /// How many weights were flushed to zero.
    pub flushed: usize,
}

impl RateResult {
    /// Normalised jump distribution `Gamma_g(x, .)`.
    pub fn jump_distribution(&self) -> Vec<(State, f64)> {
        self.weights.iter().map(|(s, w)| (s.clone(), w / self.lambda)).collect()
    }

    /// Picks a destination with probability proportional to its weight,
    /// given `u` uniform on `(0, 1)`.
    pub fn pick(&self, u: f64) -> &State {
        let target = u * self.lambda;
        let mut acc = 0.0;
        let mut chosen = None;
        for (s, w) in &self.weights {
            if *w > 0.0 {
                acc += w;
                chosen = Some(s);
                if target < acc {
                    break;
                }
            }
        }
        chosen.expect("positive rate implies a positive weight")
    }
}

/// Exact `lambda(x)` and jump weights. Proposals with `t = 0` (off support or
/// zero reverse probability) get weight `g(0) = 0`.
pub fn rate_exact(oracle: &RatioOracle, g: &Balancing, x: &State) -> Result<RateResult> {
    let neighbours = oracle.neighborhood(x)?;
    let mut weights = Vec::with_capacity(neighbours.len());
    let mut lambda = 0.0;
    let mut flushed = 0;
    for (y, p) in neighbours {
        let log_t = oracle.log_ratio_or_zero(x, &y)?;
        let mut w = g.eval_log_ratio(log_t) * p;
        if w > 0.0 && w < FLUSH_THRESHOLD {
            w = 0.0;
            flushed += 1;
        }
        lambda += w;
        weights.push((y, w));
    }
    if !lambda.is_finite() {
        return Err(Error::RateOverflow(x.to_string()));
    }
    if lambda <= 0.0 {
        return Err(Error::ZeroRate(x.to_string()));
    }
    Ok(RateResult { lambda, weights, flushed })
}

/// Uniform bound on `lambda` for bounded `g`: `lambda(x) <= sup g`.
pub fn rate_bound(g: &Balancing) -> Result<f64> {
    g.trusted_sup()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ZLambda {
    /// `sum_x lambda(x) pi(x)` over the (possibly truncated) support.
    pub value: f64,
    /// Bound on the omitted contribution (`2 * tail mass`); zero when exact.
    pub tail_bound: f64,
    /// Largest index summed for lattice models.
    pub truncation: Option<i64>,
}

/// Rate tables for every state of a finite model; states with zero target
/// mass get `None`.
pub fn finite_rate_table(oracle: &RatioOracle, g: &Balancing) -> Result<Vec<Option<RateResult>>> {
    let target = oracle
        .finite_target()
        .ok_or_else(|| Error::ModelValidation("finite model required".into()))?;
    (0..target.len())
        .map(|i| {
            if target.probs()[i] > 0.0 {
                rate_exact(oracle, g, &State::Finite(i)).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect()
}

/// Normalised lattice masses over the window that holds all but a
/// negligible fraction of the mass. Returns `(first index, probabilities)`.
pub fn lattice_masses(target: &LatticeTarget, h: f64) -> Result<(i64, Vec<f64>)> {
    let centre = match (target.lower(), target.upper()) {
        (Some(lo), _) => lo,
        (None, Some(hi)) => hi.min(0),
        (None, None) => 0,
    };
    let ln_floor = (1e-40f64).ln();
    // Walk outward from the centre until masses are negligible and shrinking.
    let extend = |start: i64, step: i64| -> Result<Vec<f64>> {
        let mut out = Vec::new();
        let mut n = start;
        let mut peak = f64::NEG_INFINITY;
        let mut prev = f64::INFINITY;
        loop {
            if !target.contains(n) {
                break;
            }
            let l = target.log_mass(n, h);
            peak = peak.max(l);
            out.push(l);
            if l - peak < ln_floor && l <= prev {
                break;
            }
            prev = l;
            n += step;
            if (n - start).abs() > MAX_LATTICE_TERMS {
                return Err(Error::TruncationNotConverged(format!(
                    "lattice mass has not decayed after {MAX_LATTICE_TERMS} terms"
                )));
            }
        }
        Ok(out)
    };
    let right = extend(centre, 1)?;
    let left = if target.lower().is_none() { extend(centre - 1, -1)? } else { Vec::new() };
    let first = centre - left.len() as i64;
    let logs: Vec<f64> = left.into_iter().rev().chain(right).collect();
    let peak = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = logs.iter().map(|l| (l - peak).exp()).sum();
    Ok((first, logs.iter().map(|l| (l - peak).exp() / total).collect()))
}

/// `Z_lambda = sum_x lambda(x) pi(x)`. Exact on finite spaces; on lattices
/// the sum runs over the smallest window whose complement has mass below
/// `1e-12`, and `2 * tail` is reported as the truncation error.
pub fn z_lambda_exact(oracle: &RatioOracle, g: &Balancing) -> Result<ZLambda> {
    match oracle.target() {
        Target::Finite(t) => {
            let mut value = 0.0;
            for (i, &p) in t.probs().iter().enumerate() {
                if p > 0.0 {
                    value += p * rate_exact(oracle, g, &State::Finite(i))?.lambda;
                }
            }
            Ok(ZLambda { value, tail_bound: 0.0, truncation: None })
        }
        Target::Lattice(t) => {
            let h = oracle.kernel().position(1);
            let (first, probs) = lattice_masses(t, h)?;
            // Trim symmetric tails until the dropped mass would exceed the budget.
            let (mut lo, mut hi) = (0usize, probs.len() - 1);
            let mut dropped = 0.0;
            loop {
                let (pl, ph) = (probs[lo], probs[hi]);
                let (cand, take_low) = if lo < hi && pl <= ph { (pl, true) } else { (ph, false) };
                if lo >= hi || dropped + cand >= TAIL_MASS {
                    break;
                }
                dropped += cand;
                if take_low {
                    lo += 1;
                } else {
                    hi -= 1;
                }
            }
            let mut value = 0.0;
            for (k, p) in probs.iter().enumerate().take(hi + 1).skip(lo) {
                let n = first + k as i64;
                value += p * rate_exact(oracle, g, &State::Lattice(n))?.lambda;
            }
            Ok(ZLambda { value, tail_bound: 2.0 * dropped, truncation: Some(first + hi as i64) })
        }
        Target::Continuous(_) => Err(Error::UncountableSupport),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::balancing::builtin_catalog;
    use crate::model::{BaseKernel, FiniteTarget};

    fn exp_lattice() -> RatioOracle {
        RatioOracle::new(
            Target::Lattice(LatticeTarget::exp_power(1.0, 1.0).unwrap()),
            BaseKernel::lattice(1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn uniform_two_state_rate_is_one() {
        let o = RatioOracle::finite(vec![0.5, 0.5], vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        for g in builtin_catalog() {
            assert_eq!(rate_exact(&o, &g, &State::Finite(0)).unwrap().lambda, 1.0);
            assert_eq!(z_lambda_exact(&o, &g).unwrap().value, 1.0);
        }
    }

    #[test]
    fn lattice_sqrt_rate_interior() {
        // pi(n) ∝ e^{-n}: t(3,2) = e, t(3,4) = e^{-1}.
        let r = rate_exact(&exp_lattice(), &Balancing::sqrt(), &State::Lattice(3)).unwrap();
        let oracle = 0.5 * ((-0.5f64).exp() + 0.5f64.exp());
        assert!((r.lambda - oracle).abs() < 1e-15);
    }

    #[test]
    fn lattice_sqrt_rate_at_boundary() {
        let r = rate_exact(&exp_lattice(), &Balancing::sqrt(), &State::Lattice(0)).unwrap();
        assert!((r.lambda - 0.5 * (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(r.weights[0], (State::Lattice(-1), 0.0));
    }

    #[test]
    fn absorbing_state_is_zero_rate() {
        let o = RatioOracle::finite(vec![1.0], vec![vec![1.0]]).unwrap();
        // Self-loop only: t = 1. Stuck state: no mass on the only neighbour.
        assert!(rate_exact(&o, &Balancing::min(), &State::Finite(0)).is_ok());
        let stuck = RatioOracle::new(
            Target::Finite(FiniteTarget::new(vec![1.0, 0.0]).unwrap()),
            BaseKernel::finite(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            rate_exact(&stuck, &Balancing::min(), &State::Finite(0)),
            Err(Error::ZeroRate(_))
        ));
    }

    #[test]
    fn z_lambda_three_state_min_by_double_sum() {
        let probs = vec![0.1, 0.3, 0.6];
        let rows = vec![vec![0.0, 0.5, 0.5], vec![0.5, 0.0, 0.5], vec![0.5, 0.5, 0.0]];
        let o = RatioOracle::finite(probs.clone(), rows.clone()).unwrap();
        let mut oracle = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    oracle += probs[i] * (probs[j] / probs[i]).min(1.0) * rows[i][j];
                }
            }
        }
        let z = z_lambda_exact(&o, &Balancing::min()).unwrap();
        assert!((z.value - oracle).abs() < 1e-15);
        assert!(z.value <= 2.0);
    }

    #[test]
    fn lattice_z_lambda_bounded() {
        for g in builtin_catalog() {
            let z = z_lambda_exact(&exp_lattice(), &g).unwrap();
            assert!(z.value <= 2.0 + 1e-12, "{}: {}", g.name(), z.value);
            assert!(z.tail_bound < 2e-12);
        }
    }

    #[test]
    fn rate_bounds() {
        assert_eq!(rate_bound(&Balancing::min()).unwrap(), 1.0);
        assert_eq!(rate_bound(&Balancing::barker()).unwrap(), 2.0);
        assert!(matches!(rate_bound(&Balancing::sqrt()), Err(Error::MissingSupBound(_))));
    }

    #[test]
    fn pick_respects_weights() {
        let r = RateResult {
            lambda: 3.0,
            weights: vec![(State::Finite(0), 1.0), (State::Finite(1), 0.0), (State::Finite(2), 2.0)],
            flushed: 0,
        };
        assert_eq!(r.pick(0.1), &State::Finite(0));
        assert_eq!(r.pick(0.5), &State::Finite(2));
        assert_eq!(r.pick(0.999_999), &State::Finite(2));
    }
}
