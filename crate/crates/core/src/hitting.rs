//! Birth–death LBMJPs on the naturals: the sequences `p, q, a, b`, expected
//! hitting times of lower levels, and Monte Carlo counterparts.
//!
//! Rates follow the `1/2 (delta_{n-1} + delta_{n+1})` proposal, so
//! `lambda(n) = (g(pi(n-1)/pi(n)) + g(pi(n+1)/pi(n))) / 2` and
//! `a(n) = 1 / (lambda(n) q(n)) = 2 / g(pi(n-1)/pi(n))`.

use crate::balancing::Balancing;
use crate::error::{Error, Result};
use crate::model::{BaseKernel, LatticeTarget, RatioOracle, State, Target};
use crate::simulate::{run_replicas, run_until, ExactSampler};
use crate::stats;

const LN_2: f64 = std::f64::consts::LN_2;

#[derive(Clone, Debug)]
pub struct BirthDeathModel {
    target: LatticeTarget,
    g: Balancing,
    oracle: RatioOracle,
}

/// One row of the sequence table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeqRow {
    pub n: i64,
    pub p: f64,
    pub q: f64,
    pub lambda: f64,
    pub a: f64,
    pub b: f64,
    pub log_a: f64,
    pub log_b: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceTable {
    pub k: i64,
    /// Rows for `n = k+1, ..., n_max`.
    pub rows: Vec<SeqRow>,
    /// `gamma_n` aligned with `rows` (`gamma_{k+1} = 1`).
    pub gamma: Vec<f64>,
    /// First `n` at which `gamma_n` overflowed, if any.
    pub gamma_overflow: Option<i64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HittingEstimate {
    pub lower: f64,
    pub upper: f64,
    pub n_max: i64,
    /// Worst right-move probability and smallest rate on `[k0, n_max]`;
    /// `None` when the support ends at `n_max`.
    pub tail: Option<TailPremise>,
}

impl HittingEstimate {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailPremise {
    pub k0: i64,
    pub p: f64,
    pub lambda: f64,
    /// `1 / ((1 - 2p) lambda)`.
    pub bound: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Summable,
    DivergentAtNMax,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DivergenceReport {
    /// `(N, sum_{n <= N} a(n))` at geometric checkpoints.
    pub partial_sums: Vec<(i64, f64)>,
    pub verdict: Verdict,
    /// Always true: a finite computation cannot settle summability.
    pub heuristic: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TailConditionReport {
    /// Ratios `t >= 1` at which `g(t) < t^{a_tilde}`.
    pub g_failures: Vec<f64>,
    /// `n` in `[k, n_max]` with `pi(n)/pi(n+1) < exp(a beta n^{beta-1})`.
    pub tail_failures: Vec<i64>,
    /// Smallest `k'` from which the tail inequality holds up to `n_max`.
    pub tail_from: Option<i64>,
}

impl TailConditionReport {
    pub fn holds(&self) -> bool {
        self.g_failures.is_empty() && self.tail_failures.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HittingSample {
    pub mean: f64,
    pub se: f64,
    pub replicas: usize,
}

impl BirthDeathModel {
    pub fn new(target: LatticeTarget, g: Balancing) -> Result<Self> {
        if target.lower().is_none() {
            return Err(Error::ModelValidation("birth-death model needs a lower support bound".into()));
        }
        let oracle = RatioOracle::new(Target::Lattice(target.clone()), BaseKernel::lattice(1.0)?)?;
        Ok(Self { target, g, oracle })
    }

    pub fn target(&self) -> &LatticeTarget {
        &self.target
    }

    pub fn balancing(&self) -> &Balancing {
        &self.g
    }

    pub fn oracle(&self) -> &RatioOracle {
        &self.oracle
    }

    fn log_pi(&self, n: i64) -> f64 {
        self.target.log_mass(n, 1.0)
    }

    /// `log g(pi(m)/pi(n))`, `-inf` when `m` is off support.
    fn log_g_move(&self, n: i64, m: i64) -> f64 {
        let lm = self.log_pi(m);
        if lm == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        self.g.log_eval(lm - self.log_pi(n))
    }

    /// `p, q, lambda, a, b` at an interior-or-boundary state `n > lower`.
    pub fn row(&self, n: i64) -> Result<SeqRow> {
        if !self.target.contains(n) || !self.target.contains(n - 1) {
            return Err(Error::OutOfSupport(format!("n={n}")));
        }
        let lg_minus = self.log_g_move(n, n - 1);
        let lg_plus = self.log_g_move(n, n + 1);
        let log_b = lg_plus - lg_minus;
        let log_a = LN_2 - lg_minus;
        let p = 1.0 / (1.0 + (-log_b).exp());
        let hi = lg_minus.max(lg_plus);
        let log_lambda = hi + ((lg_minus - hi).exp() + (lg_plus - hi).exp()).ln() - LN_2;
        let row = SeqRow {
            n,
            p,
            q: 1.0 / (1.0 + log_b.exp()),
            lambda: log_lambda.exp(),
            a: log_a.exp(),
            b: log_b.exp(),
            log_a,
            log_b,
        };
        if !row.a.is_finite() || row.lambda == 0.0 || !row.lambda.is_finite() {
            return Err(Error::Overflow(format!("sequences leave floating range at n={n}")));
        }
        Ok(row)
    }

    fn last_index(&self, n_max: i64) -> i64 {
        self.target.upper().map_or(n_max, |u| u.min(n_max))
    }

    /// Sequence table for `n = k+1 ..= n_max` (clipped to the support).
    pub fn sequences(&self, k: i64, n_max: i64) -> Result<SequenceTable> {
        self.check_level(k)?;
        let last = self.last_index(n_max);
        if last < k + 1 {
            return Err(Error::Empty(format!("no states above k={k} up to {n_max}")));
        }
        let rows = (k + 1..=last).map(|n| self.row(n)).collect::<Result<Vec<_>>>()?;
        let mut gamma = Vec::with_capacity(rows.len());
        let mut gamma_overflow = None;
        let mut current = 1.0;
        for (i, row) in rows.iter().enumerate() {
            if i > 0 {
                current = 1.0 + rows[i - 1].b * current;
            }
            if !current.is_finite() && gamma_overflow.is_none() {
                gamma_overflow = Some(row.n);
            }
            gamma.push(current);
        }
        Ok(SequenceTable { k, rows, gamma, gamma_overflow })
    }

    fn check_level(&self, k: i64) -> Result<()> {
        if self.target.contains(k) {
            Ok(())
        } else {
            Err(Error::OutOfSupport(format!("k={k}")))
        }
    }

    /// Premise of the tail bound: `p(n) < 1/2` and `lambda(n) > 0` on `[k0, n_max]`.
    pub fn tail_premise(&self, table: &SequenceTable) -> Result<TailPremise> {
        let last = table.rows.last().ok_or_else(|| Error::Empty("sequence table".into()))?;
        let bad = table.rows.iter().rposition(|r| !(r.p < 0.5 && r.lambda > 0.0));
        let start = match bad {
            Some(i) if i + 1 == table.rows.len() => {
                return Err(Error::PremiseUnverifiable(format!(
                    "p(n) = {} >= 1/2 at the truncation level n = {}",
                    last.p, last.n
                )))
            }
            Some(i) => i + 1,
            None => 0,
        };
        let tail = &table.rows[start..];
        let p = tail.iter().map(|r| r.p).fold(0.0, f64::max);
        let lambda = tail.iter().map(|r| r.lambda).fold(f64::INFINITY, f64::min);
        Ok(TailPremise { k0: tail[0].n, p, lambda, bound: 1.0 / ((1.0 - 2.0 * p) * lambda) })
    }

    /// Bracket for `E_N[h_k]` by backward recursion
    /// `E_n[h_{n-1}] = a(n) + b(n) E_{n+1}[h_n]` from `n_max`, with the
    /// unknown `E_{n_max+1}[h_{n_max}]` set to `0` and to the tail bound.
    /// `n_max` defaults to `10 N`.
    pub fn expected_hitting(&self, big_n: i64, k: i64, n_max: Option<i64>) -> Result<HittingEstimate> {
        if big_n <= k {
            return Err(Error::ModelValidation(format!("start N={big_n} must exceed k={k}")));
        }
        let n_max = n_max.unwrap_or(10 * big_n).max(big_n);
        let table = self.sequences(k, n_max)?;
        let last = table.rows.last().expect("non-empty").n;
        if last < big_n {
            return Err(Error::OutOfSupport(format!("N={big_n}")));
        }
        let bounded = self.target.upper().is_some_and(|u| u <= n_max);
        let tail = if bounded { None } else { Some(self.tail_premise(&table)?) };
        let profile = |tail_value: f64| -> f64 {
            let mut e_next = tail_value;
            let mut total = 0.0;
            for row in table.rows.iter().rev() {
                let e = row.a + row.b * e_next;
                if row.n <= big_n {
                    total += e;
                }
                e_next = e;
            }
            total
        };
        let lower = profile(0.0);
        let upper = tail.map_or(lower, |t| profile(t.bound));
        if !lower.is_finite() || !upper.is_finite() {
            return Err(Error::Overflow(format!("hitting-time recursion overflowed for N={big_n}")));
        }
        Ok(HittingEstimate { lower, upper, n_max: last, tail })
    }

    /// Partial sums of `a(n)` from the first interior state up to `n_max`.
    pub fn divergence_test(&self, n_max: i64) -> Result<DivergenceReport> {
        let lower = self.target.lower().expect("checked at construction");
        let last = self.last_index(n_max);
        let mut partial_sums = Vec::new();
        let mut sum = 0.0;
        let mut checkpoint = 1i64;
        let mut previous = 0.0;
        let mut last_increment = f64::INFINITY;
        for n in lower + 1..=last {
            sum += self.row(n)?.a;
            let offset = n - lower;
            if offset == checkpoint || n == last {
                partial_sums.push((n, sum));
                last_increment = sum - previous;
                previous = sum;
                checkpoint *= 2;
            }
        }
        let bounded = self.target.upper().is_some_and(|u| u <= n_max);
        let verdict = if bounded || last_increment < 1e-12 * sum.max(1.0) {
            Verdict::Summable
        } else {
            Verdict::DivergentAtNMax
        };
        Ok(DivergenceReport { partial_sums, verdict, heuristic: true })
    }

    /// Checks `g(t) >= t^{a_tilde}` for the realised ratios `t >= 1` and
    /// `pi(n)/pi(n+1) >= exp(a beta n^{beta-1})` for `n` in `[k, n_max]`.
    pub fn check_tail_condition(&self, a_tilde: f64, a: f64, beta: f64, k: i64, n_max: i64) -> TailConditionReport {
        let mut g_failures = Vec::new();
        let mut tail_failures = Vec::new();
        let mut last_fail = None;
        for n in k..=n_max {
            let (l0, l1) = (self.log_pi(n), self.log_pi(n + 1));
            if !l0.is_finite() {
                continue;
            }
            for lt in [l1 - l0, l0 - l1] {
                if lt.is_finite() && lt >= 0.0 && self.g.log_eval(lt) < a_tilde * lt - 1e-12 * lt.max(1.0) {
                    g_failures.push(lt.exp());
                }
            }
            let holds = l0 - l1 >= a * beta * (n as f64).powf(beta - 1.0);
            if !holds {
                tail_failures.push(n);
                last_fail = Some(n);
            }
        }
        let tail_from = match last_fail {
            Some(n) if n >= n_max => None,
            Some(n) => Some(n + 1),
            None => Some(k),
        };
        TailConditionReport { g_failures, tail_failures, tail_from }
    }

    /// Monte Carlo mean of `h_k` from `N` over independent exact runs.
    pub fn simulate_hitting(&self, big_n: i64, k: i64, replicas: usize, seed: u64) -> Result<HittingSample> {
        let sampler = ExactSampler::new(&self.oracle, &self.g)?;
        let times = run_replicas(replicas, seed, |_, rng| {
            run_until(
                &sampler,
                &State::Lattice(big_n),
                |s| s.as_lattice().is_some_and(|n| n <= k),
                rng,
                crate::simulate::DEFAULT_MAX_EVENTS,
            )
            .map(|h| h.time)
        })?;
        Ok(HittingSample {
            mean: stats::mean(&times),
            se: (stats::sample_variance(&times) / replicas as f64).sqrt(),
            replicas,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp_power(a: f64, beta: f64, g: Balancing) -> BirthDeathModel {
        BirthDeathModel::new(LatticeTarget::exp_power(a, beta).unwrap(), g).unwrap()
    }

    #[test]
    fn uniform_sequences() {
        let m = BirthDeathModel::new(LatticeTarget::uniform_range(0, 30).unwrap(), Balancing::sqrt()).unwrap();
        let t = m.sequences(3, 20).unwrap();
        for (row, gamma) in t.rows.iter().zip(&t.gamma) {
            assert_eq!(row.p, 0.5);
            assert_eq!(row.b, 1.0);
            assert!((gamma - (row.n - 3) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn geometric_min_by_hand() {
        let m = exp_power(1.0, 1.0, Balancing::min());
        let r = m.row(5).unwrap();
        assert!((r.a - 2.0).abs() < 1e-15);
        assert!((r.b - (-1.0f64).exp()).abs() < 1e-15);
        assert!((r.p + r.q - 1.0).abs() < 1e-14);
    }

    #[test]
    fn b_is_ratio_of_g() {
        let m = exp_power(1.0, 1.5, Balancing::barker());
        let g = Balancing::barker();
        for n in 1..50 {
            let r = m.row(n).unwrap();
            let pi = |k: i64| (-(k as f64).powf(1.5)).exp();
            let oracle = g.eval(pi(n + 1) / pi(n)) / g.eval(pi(n - 1) / pi(n));
            assert!((r.b - oracle).abs() <= 1e-12 * oracle.max(1e-300));
        }
    }

    #[test]
    fn n_times_b_vanishes() {
        let m = exp_power(1.0, 1.5, Balancing::sqrt());
        let t = m.sequences(2, 200).unwrap();
        let tail = t.rows.last().unwrap();
        assert!(tail.n as f64 * tail.b < 1e-6);
        for (row, gamma) in t.rows.iter().zip(&t.gamma) {
            assert!(row.b * gamma <= (row.n - 2) as f64 * row.b * (1.0 + 1e-12));
        }
    }

    #[test]
    fn bounded_support_bracket_is_exact() {
        let m = BirthDeathModel::new(LatticeTarget::uniform_range(0, 6).unwrap(), Balancing::barker()).unwrap();
        let e = m.expected_hitting(4, 1, None).unwrap();
        assert_eq!(e.width(), 0.0);
        assert_eq!(e.n_max, 6);
    }

    #[test]
    fn bracket_monotone_in_n() {
        let m = exp_power(1.0, 1.5, Balancing::sqrt());
        let mut prev = 0.0;
        for n in [3, 5, 10, 20, 40] {
            let e = m.expected_hitting(n, 2, None).unwrap();
            assert!(e.lower <= e.upper);
            assert!(e.lower >= prev);
            prev = e.lower;
        }
    }

    #[test]
    fn divergence_verdicts() {
        assert_eq!(exp_power(1.0, 1.5, Balancing::sqrt()).divergence_test(10_000).unwrap().verdict, Verdict::Summable);
        assert_eq!(exp_power(1.0, 1.0, Balancing::sqrt()).divergence_test(10_000).unwrap().verdict, Verdict::DivergentAtNMax);
        for g in [Balancing::min(), Balancing::barker()] {
            let r = exp_power(1.0, 1.5, g).divergence_test(1000).unwrap();
            assert_eq!(r.verdict, Verdict::DivergentAtNMax);
        }
    }

    #[test]
    fn geometric_sqrt_a_is_constant() {
        let m = exp_power(1.0, 1.0, Balancing::sqrt());
        for n in 1..20 {
            assert!((m.row(n).unwrap().a - 2.0 * (-0.5f64).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn tail_condition_checks() {
        let m = exp_power(1.0, 1.5, Balancing::sqrt());
        let r = m.check_tail_condition(0.5, 1.0, 1.5, 1, 200);
        assert!(r.g_failures.is_empty());
        assert!(r.tail_from.is_some());
        let min = exp_power(1.0, 1.5, Balancing::min());
        assert!(!min.check_tail_condition(0.1, 1.0, 1.5, 1, 50).g_failures.is_empty());
    }

    #[test]
    fn premise_fails_on_heavy_tail() {
        let m = BirthDeathModel::new(LatticeTarget::uniform_range(0, 1_000_000).unwrap(), Balancing::min()).unwrap();
        assert!(matches!(m.expected_hitting(5, 2, Some(50)), Err(Error::PremiseUnverifiable(_))));
    }

    #[test]
    fn one_step_chain_by_simulation() {
        let m = exp_power(1.0, 1.5, Balancing::barker());
        let e = m.expected_hitting(3, 2, None).unwrap();
        let s = m.simulate_hitting(3, 2, 4000, 17).unwrap();
        assert!(s.mean >= e.lower - 3.0 * s.se && s.mean <= e.upper + 3.0 * s.se, "{s:?} vs {e:?}");
    }
}
