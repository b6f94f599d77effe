//! Trajectory generation: exact jump-chain simulation on discrete spaces and
//! uniformisation (thinning) for bounded `g`.

use rayon::prelude::*;

use crate::balancing::Balancing;
use crate::error::{Error, Result};
use crate::io::CsvTable;
use crate::jumprate::{finite_rate_table, rate_exact, RateResult};
use crate::model::{RatioOracle, State};
use crate::rng::SeededStream;

pub const DEFAULT_MAX_EVENTS: usize = 10_000_000;

/// When a run stops.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Horizon {
    /// Stop at clock time `T*`; the last state is held until `T*`.
    Time(f64),
    /// Stop right after the `n`-th jump; the horizon becomes `T_n`.
    Events(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunOptions {
    /// Jump budget; reaching it sets `truncated`.
    pub max_events: usize,
    /// Turn a tripped guard into [`Error::ExplosionGuard`].
    pub strict: bool,
    /// Keep every thinning candidate (debug aid).
    pub record_candidates: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { max_events: DEFAULT_MAX_EVENTS, strict: false, record_candidates: false }
    }
}

/// A thinning candidate: proposed state, candidate time, accepted or not.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub state: State,
    pub time: f64,
    pub accepted: bool,
}

/// Realised path: initial state plus `(state after jump, jump time)` pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpTrajectory {
    pub initial: State,
    pub jumps: Vec<(State, f64)>,
    /// End of the observation window. When the explosion guard trips this is
    /// the time of the last recorded jump.
    pub horizon: f64,
    pub event_count: usize,
    pub truncated: bool,
    /// Number of thinning candidates, for uniformised runs.
    pub candidates: Option<usize>,
    pub candidate_log: Option<Vec<Candidate>>,
}

impl JumpTrajectory {
    pub fn final_state(&self) -> &State {
        self.jumps.last().map_or(&self.initial, |(s, _)| s)
    }

    /// Holding times between consecutive jumps (excludes the final segment).
    pub fn holding_times(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.jumps
            .iter()
            .map(|(_, t)| {
                let h = t - prev;
                prev = *t;
                h
            })
            .collect()
    }

    /// `(state, time spent)` for every segment, including the final partial
    /// one that ends at the horizon.
    pub fn segments(&self) -> impl Iterator<Item = (&State, f64)> + '_ {
        let states = std::iter::once(&self.initial).chain(self.jumps.iter().map(|(s, _)| s));
        let starts = std::iter::once(0.0).chain(self.jumps.iter().map(|(_, t)| *t));
        let ends = self.jumps.iter().map(|(_, t)| *t).chain(std::iter::once(self.horizon));
        states.zip(starts.zip(ends)).map(|(s, (a, b))| (s, b - a))
    }

    /// Rows `(replica, event_index, time, state...)`; row 0 is the initial state.
    pub fn append_csv(&self, replica: usize, table: &mut CsvTable) {
        let mut push = |idx: usize, time: f64, s: &State| {
            let mut row = vec![replica.into(), idx.into(), time.into()];
            row.extend(s.coords().into_iter().map(Into::into));
            table.push(row);
        };
        push(0, 0.0, &self.initial);
        for (k, (s, t)) in self.jumps.iter().enumerate() {
            push(k + 1, *t, s);
        }
    }
}

/// CSV header for trajectories of dimension `dim`.
pub fn trajectory_table(dim: usize) -> CsvTable {
    let mut header = vec!["replica".to_string(), "event_index".into(), "time".into()];
    if dim == 1 {
        header.push("state".into());
    } else {
        header.extend((0..dim).map(|i| format!("state_{i}")));
    }
    CsvTable::new(header)
}

/// `(1/T*) * sum holding_time * f(state)`, final partial segment included.
pub fn time_average(traj: &JumpTrajectory, f: impl Fn(&State) -> f64) -> f64 {
    if traj.horizon <= 0.0 {
        return f(&traj.initial);
    }
    let f0 = f(&traj.initial);
    f0 + traj.segments().map(|(s, h)| h * (f(s) - f0)).sum::<f64>() / traj.horizon
}

/// Rate lookups for exact simulation; finite models are tabulated once.
pub struct ExactSampler<'a> {
    oracle: &'a RatioOracle,
    g: &'a Balancing,
    table: Option<Vec<Option<RateResult>>>,
}

impl<'a> ExactSampler<'a> {
    pub fn new(oracle: &'a RatioOracle, g: &'a Balancing) -> Result<Self> {
        if !oracle.is_discrete() {
            return Err(Error::UncountableSupport);
        }
        let table = match oracle.finite_target() {
            Some(_) => Some(finite_rate_table(oracle, g).or_else(|e| match e {
                Error::ZeroRate(_) => Ok(Vec::new()),
                e => Err(e),
            })?),
            None => None,
        };
        let table = table.filter(|t| !t.is_empty());
        Ok(Self { oracle, g, table })
    }

    pub fn with_rate<R>(&self, x: &State, f: impl FnOnce(&RateResult) -> R) -> Result<R> {
        if let (Some(table), State::Finite(i)) = (&self.table, x) {
            if let Some(Some(r)) = table.get(*i) {
                return Ok(f(r));
            }
        }
        rate_exact(self.oracle, self.g, x).map(|r| f(&r))
    }

    pub fn lambda(&self, x: &State) -> Result<f64> {
        self.with_rate(x, |r| r.lambda)
    }

    /// Draws the next state from `Gamma_g(x, .)`; returns it with `lambda(x)`.
    pub fn step(&self, x: &State, rng: &mut SeededStream) -> Result<(State, f64)> {
        let u = rng.open01();
        self.with_rate(x, |r| (r.pick(u).clone(), r.lambda))
    }
}

/// Exact simulation by the jump-chain construction: hold for `Exp(lambda(x))`,
/// then jump according to `Gamma_g(x, .)`.
pub fn run_exact(
    oracle: &RatioOracle,
    g: &Balancing,
    x0: &State,
    horizon: Horizon,
    rng: &mut SeededStream,
    opts: RunOptions,
) -> Result<JumpTrajectory> {
    let sampler = ExactSampler::new(oracle, g)?;
    run_exact_with(&sampler, x0, horizon, rng, opts)
}

pub fn run_exact_with(
    sampler: &ExactSampler<'_>,
    x0: &State,
    horizon: Horizon,
    rng: &mut SeededStream,
    opts: RunOptions,
) -> Result<JumpTrajectory> {
    sampler.lambda(x0)?;
    let mut jumps = Vec::new();
    let mut x = x0.clone();
    let mut clock = 0.0;
    let mut truncated = false;
    let end = loop {
        if let Horizon::Events(n) = horizon {
            if jumps.len() >= n {
                break clock;
            }
        }
        if jumps.len() >= opts.max_events {
            if opts.strict {
                return Err(Error::ExplosionGuard { events: jumps.len(), time: clock });
            }
            truncated = true;
            break clock;
        }
        let lambda = sampler.lambda(&x)?;
        let next = clock + rng.exponential(lambda);
        if let Horizon::Time(t_star) = horizon {
            if next >= t_star {
                break t_star;
            }
        }
        let (y, _) = sampler.step(&x, rng)?;
        clock = next;
        jumps.push((y.clone(), clock));
        x = y;
    };
    Ok(JumpTrajectory {
        initial: x0.clone(),
        event_count: jumps.len(),
        jumps,
        horizon: end,
        truncated,
        candidates: None,
        candidate_log: None,
    })
}

/// Embedded jump chain `X_0, ..., X_{n-1}` with `lambda(X_j)`, plus `X_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Skeleton {
    pub states: Vec<State>,
    pub lambdas: Vec<f64>,
    pub last: State,
}

impl Skeleton {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Attaches `Exp(lambda(X_{j-1}))` holding times, giving the LBMJP path
    /// observed up to `T_n`.
    pub fn into_trajectory(self, rng: &mut SeededStream) -> JumpTrajectory {
        let n = self.states.len();
        let mut clock = 0.0;
        let mut jumps = Vec::with_capacity(n);
        for j in 0..n {
            clock += rng.exponential(self.lambdas[j]);
            let next = if j + 1 < n { self.states[j + 1].clone() } else { self.last.clone() };
            jumps.push((next, clock));
        }
        let initial = self.states.first().cloned().unwrap_or(self.last);
        JumpTrajectory {
            initial,
            event_count: n,
            jumps,
            horizon: clock,
            truncated: false,
            candidates: None,
            candidate_log: None,
        }
    }
}

/// Runs `n` steps of the `Gamma_g` chain without simulating holding times.
pub fn embedded_chain(
    sampler: &ExactSampler<'_>,
    x0: &State,
    n: usize,
    rng: &mut SeededStream,
) -> Result<Skeleton> {
    let mut states = Vec::with_capacity(n);
    let mut lambdas = Vec::with_capacity(n);
    let mut x = x0.clone();
    for _ in 0..n {
        let (y, lambda) = sampler.step(&x, rng)?;
        states.push(x);
        lambdas.push(lambda);
        x = y;
    }
    Ok(Skeleton { states, lambdas, last: x })
}

/// Outcome of a run stopped on entering a target set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HitOutcome {
    pub time: f64,
    pub events: usize,
}

/// Exact simulation until `stop(state)` holds. A start inside the set
/// returns time zero.
pub fn run_until(
    sampler: &ExactSampler<'_>,
    x0: &State,
    stop: impl Fn(&State) -> bool,
    rng: &mut SeededStream,
    max_events: usize,
) -> Result<HitOutcome> {
    let mut x = x0.clone();
    let mut clock = 0.0;
    let mut events = 0;
    while !stop(&x) {
        if events >= max_events {
            return Err(Error::ExplosionGuard { events, time: clock });
        }
        let (y, lambda) = sampler.step(&x, rng)?;
        clock += rng.exponential(lambda);
        events += 1;
        x = y;
    }
    Ok(HitOutcome { time: clock, events })
}

/// Summary of a thinning run when only the endpoint is kept.
#[derive(Clone, Debug, PartialEq)]
pub struct ThinningEnd {
    pub state: State,
    pub jumps: usize,
    pub candidates: usize,
}

#[allow(clippy::too_many_arguments)]
fn thinning_loop(
    oracle: &RatioOracle,
    g: &Balancing,
    x0: &State,
    horizon: Horizon,
    rate_scale: f64,
    rng: &mut SeededStream,
    opts: RunOptions,
    mut on_jump: impl FnMut(&State, f64),
    mut on_candidate: impl FnMut(Candidate),
) -> Result<(State, f64, usize, usize, bool)> {
    let sup = g.trusted_sup()?;
    if !oracle.in_support(x0) {
        return Err(Error::OutOfSupport(x0.to_string()));
    }
    let candidate_rate = sup * rate_scale;
    let mut x = x0.clone();
    let mut clock = 0.0;
    let mut jumps = 0usize;
    let mut candidates = 0usize;
    let end = loop {
        if let Horizon::Events(n) = horizon {
            if jumps >= n {
                break (clock, false);
            }
        }
        if jumps >= opts.max_events {
            if opts.strict {
                return Err(Error::ExplosionGuard { events: jumps, time: clock });
            }
            break (clock, true);
        }
        let next = clock + rng.exponential(candidate_rate);
        if let Horizon::Time(t_star) = horizon {
            if next >= t_star {
                break (t_star, false);
            }
        }
        clock = next;
        candidates += 1;
        let y = oracle.sample_base(&x, rng);
        let log_t = oracle.log_ratio_or_zero(&x, &y)?;
        let accept = rng.open01() * sup < g.eval_log_ratio(log_t);
        if opts.record_candidates {
            on_candidate(Candidate { state: y.clone(), time: clock, accepted: accept });
        }
        if accept {
            jumps += 1;
            on_jump(&y, clock);
            x = y;
        }
    };
    Ok((x, end.0, jumps, candidates, end.1))
}

/// Uniformised simulation for bounded `g`: candidates arrive at rate
/// `sup g`, propose `y ~ gamma(x, .)` and are accepted with probability
/// `g(t(x,y)) / sup g`. Rejected candidates are not jumps.
pub fn run_thinning(
    oracle: &RatioOracle,
    g: &Balancing,
    x0: &State,
    horizon: Horizon,
    rng: &mut SeededStream,
    opts: RunOptions,
) -> Result<JumpTrajectory> {
    run_thinning_scaled(oracle, g, x0, horizon, 1.0, rng, opts)
}

/// [`run_thinning`] for the process with every rate multiplied by `rate_scale`.
pub fn run_thinning_scaled(
    oracle: &RatioOracle,
    g: &Balancing,
    x0: &State,
    horizon: Horizon,
    rate_scale: f64,
    rng: &mut SeededStream,
    opts: RunOptions,
) -> Result<JumpTrajectory> {
    let mut path = Vec::new();
    let mut log = Vec::new();
    let (_, end, jumps, candidates, truncated) = thinning_loop(
        oracle,
        g,
        x0,
        horizon,
        rate_scale,
        rng,
        opts,
        |s, t| path.push((s.clone(), t)),
        |c| log.push(c),
    )?;
    Ok(JumpTrajectory {
        initial: x0.clone(),
        jumps: path,
        horizon: end,
        event_count: jumps,
        truncated,
        candidates: Some(candidates),
        candidate_log: opts.record_candidates.then_some(log),
    })
}

/// Thinning run that keeps only the terminal state and the counters.
pub fn thinning_endpoint(
    oracle: &RatioOracle,
    g: &Balancing,
    x0: &State,
    t_star: f64,
    rate_scale: f64,
    rng: &mut SeededStream,
) -> Result<ThinningEnd> {
    let opts = RunOptions { max_events: usize::MAX, ..RunOptions::default() };
    let (state, _, jumps, candidates, _) =
        thinning_loop(oracle, g, x0, Horizon::Time(t_star), rate_scale, rng, opts, |_, _| {}, |_| {})?;
    Ok(ThinningEnd { state, jumps, candidates })
}

/// Runs `n` independent replicas; replica `i` gets stream `(master_seed, i)`.
/// Results are in replica order regardless of scheduling.
pub fn run_replicas<T, F>(n: usize, master_seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut SeededStream) -> Result<T> + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = SeededStream::new(master_seed, i as u64);
            f(i, &mut rng).map_err(|e| Error::Replica { index: i, source: Box::new(e) })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BaseKernel, LatticeTarget, Target};

    fn two_state() -> RatioOracle {
        RatioOracle::finite(vec![0.5, 0.5], vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
    }

    #[test]
    fn two_state_holding_times_are_unit_exponential() {
        let o = two_state();
        let mut rng = SeededStream::new(1, 0);
        let traj = run_exact(&o, &Balancing::barker(), &State::Finite(0), Horizon::Events(10_000), &mut rng, RunOptions::default()).unwrap();
        let h = traj.holding_times();
        let mean = h.iter().sum::<f64>() / h.len() as f64;
        assert!((mean - 1.0).abs() < 3.0 / 100.0, "mean holding time {mean}");
        assert!(h.iter().all(|t| *t > 0.0));
    }

    #[test]
    fn trajectory_invariants() {
        let o = two_state();
        let mut rng = SeededStream::new(2, 0);
        let traj = run_exact(&o, &Balancing::min(), &State::Finite(0), Horizon::Time(10.0), &mut rng, RunOptions::default()).unwrap();
        assert_eq!(traj.event_count, traj.jumps.len());
        assert!(traj.jumps.windows(2).all(|w| w[0].1 < w[1].1));
        assert!(traj.jumps.iter().all(|(_, t)| *t <= 10.0));
        assert_eq!(traj.horizon, 10.0);
        let total: f64 = traj.segments().map(|(_, h)| h).sum();
        assert!((total - 10.0).abs() < 1e-12);
    }

    #[test]
    fn single_state_without_moves_is_zero_rate() {
        let o = RatioOracle::new(
            Target::Finite(crate::model::FiniteTarget::new(vec![1.0, 0.0]).unwrap()),
            BaseKernel::finite(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap(),
        )
        .unwrap();
        let mut rng = SeededStream::new(1, 0);
        let err = run_exact(&o, &Balancing::min(), &State::Finite(0), Horizon::Time(1.0), &mut rng, RunOptions::default()).unwrap_err();
        assert!(matches!(err, Error::ZeroRate(_)));
    }

    #[test]
    fn explosion_guard() {
        let o = two_state();
        let mut rng = SeededStream::new(1, 0);
        let opts = RunOptions { max_events: 5, ..RunOptions::default() };
        let traj = run_exact(&o, &Balancing::min(), &State::Finite(0), Horizon::Time(1e9), &mut rng, opts).unwrap();
        assert!(traj.truncated);
        assert_eq!(traj.event_count, 5);
        let strict = RunOptions { strict: true, ..opts };
        assert!(matches!(
            run_exact(&o, &Balancing::min(), &State::Finite(0), Horizon::Time(1e9), &mut rng, strict),
            Err(Error::ExplosionGuard { events: 5, .. })
        ));
    }

    #[test]
    fn constant_time_average() {
        let o = two_state();
        let mut rng = SeededStream::new(3, 0);
        let traj = run_exact(&o, &Balancing::sqrt(), &State::Finite(1), Horizon::Time(25.0), &mut rng, RunOptions::default()).unwrap();
        assert_eq!(time_average(&traj, |_| 4.25), 4.25);
    }

    #[test]
    fn thinning_requires_bounded_g() {
        let o = two_state();
        let mut rng = SeededStream::new(3, 0);
        let err = run_thinning(&o, &Balancing::sqrt(), &State::Finite(0), Horizon::Time(1.0), &mut rng, RunOptions::default()).unwrap_err();
        assert!(matches!(err, Error::MissingSupBound(_)));
    }

    #[test]
    fn thinning_candidate_log() {
        let o = two_state();
        let mut rng = SeededStream::new(4, 0);
        let opts = RunOptions { record_candidates: true, ..RunOptions::default() };
        let traj = run_thinning(&o, &Balancing::barker(), &State::Finite(0), Horizon::Time(50.0), &mut rng, opts).unwrap();
        let log = traj.candidate_log.as_ref().unwrap();
        assert_eq!(log.len(), traj.candidates.unwrap());
        assert_eq!(log.iter().filter(|c| c.accepted).count(), traj.event_count);
    }

    #[test]
    fn lattice_occupation_matches_gaussian_lattice_target() {
        // pi(n) ∝ exp(-n^2) on N, started far out at n = 10.
        let o = RatioOracle::new(
            Target::Lattice(LatticeTarget::exp_power(1.0, 2.0).unwrap()),
            BaseKernel::lattice(1.0).unwrap(),
        )
        .unwrap();
        let mut rng = SeededStream::new(9, 0);
        let traj = run_exact(&o, &Balancing::sqrt(), &State::Lattice(10), Horizon::Time(50_000.0), &mut rng, RunOptions::default()).unwrap();
        let weights: Vec<f64> = (0..=6).map(|n| (-(n as f64).powi(2)).exp()).collect();
        let z: f64 = weights.iter().sum();
        let tv: f64 = (0..=6)
            .map(|n| {
                let occ = time_average(&traj, |s| if s.as_lattice() == Some(n) { 1.0 } else { 0.0 });
                (occ - weights[n as usize] / z).abs()
            })
            .sum::<f64>()
            * 0.5;
        assert!(tv < 0.05, "tv {tv}");
    }

    #[test]
    fn replicas_are_reproducible_and_ordered() {
        let o = two_state();
        let g = Balancing::barker();
        let run = |seed| {
            run_replicas(8, seed, |_, rng| {
                run_exact(&o, &g, &State::Finite(0), Horizon::Time(5.0), rng, RunOptions::default())
            })
            .unwrap()
        };
        let a = run(42);
        let b = run(42);
        assert_eq!(a, b);
        assert_ne!(a[0].jumps.first().map(|j| j.1), a[1].jumps.first().map(|j| j.1));
        let empty: Vec<JumpTrajectory> = run_replicas(0, 1, |_, rng| {
            run_exact(&o, &g, &State::Finite(0), Horizon::Time(5.0), rng, RunOptions::default())
        })
        .unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn replica_errors_are_tagged() {
        let o = two_state();
        let g = Balancing::sqrt();
        let err = run_replicas(3, 1, |i, rng| {
            if i == 2 {
                run_thinning(&o, &g, &State::Finite(0), Horizon::Time(1.0), rng, RunOptions::default())
            } else {
                run_exact(&o, &g, &State::Finite(0), Horizon::Time(1.0), rng, RunOptions::default())
            }
        })
        .unwrap_err();
        assert!(matches!(err, Error::Replica { index: 2, .. }));
    }

    #[test]
    fn csv_export() {
        let o = two_state();
        let mut rng = SeededStream::new(5, 0);
        let traj = run_exact(&o, &Balancing::min(), &State::Finite(0), Horizon::Events(3), &mut rng, RunOptions::default()).unwrap();
        let mut table = trajectory_table(1);
        traj.append_csv(0, &mut table);
        assert_eq!(table.len(), 4);
        assert_eq!(table.header(), ["replica", "event_index", "time", "state"]);
    }
}
