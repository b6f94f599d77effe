//! Python bindings for `lbjump`.

use std::collections::HashMap;

use lbjump::acceptance;
use lbjump::balancing::{check_balancing, check_bounds, standard_grid};
use lbjump::estimators::variance_faceoff;
use lbjump::hitting::BirthDeathModel;
use lbjump::jumprate::{rate_exact, z_lambda_exact};
use lbjump::model::{LatticeTarget, ModelDescriptor, RatioOracle as CoreOracle, Target};
use lbjump::nonrev::{build_skew_kernel, certify_skew_balance, FlipRule, LiftedChain};
use lbjump::simulate::{run_exact, run_thinning, time_average, Horizon, RunOptions};
use lbjump::spectral::{build_generator, build_mh_kernel, gap_sandwich_check, mh_gap, spectral_gap};
use lbjump::{Balancing as CoreBalancing, SeededStream, State};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: lbjump::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A balancing function `g` with `g(t) = t g(1/t)`.
#[pyclass(name = "Balancing", module = "lbjump_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Balancing {
    inner: CoreBalancing,
}

#[pymethods]
impl Balancing {
    /// `min`, `barker`, `max`, `sqrt` or `power(alpha)`.
    #[new]
    fn new(name: &str) -> PyResult<Self> {
        CoreBalancing::from_name(name).map(|inner| Self { inner }).map_err(err)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name().to_string()
    }

    /// Supremum, or `None` when unbounded.
    #[getter]
    fn sup(&self) -> Option<f64> {
        self.inner.trusted_sup().ok()
    }

    fn __call__(&self, t: f64) -> f64 {
        self.inner.eval(t)
    }

    /// Balancing identity and sandwich bounds on the standard grid.
    fn check(&self) -> PyResult<bool> {
        let grid = standard_grid();
        let id = check_balancing(&self.inner, &grid).map_err(err)?;
        let bounds = check_bounds(&self.inner, &grid, false).map_err(err)?;
        Ok(id.is_pass() && bounds.is_pass())
    }

    fn __repr__(&self) -> String {
        format!("Balancing('{}')", self.inner.name())
    }
}

/// Target plus base kernel.
#[pyclass(name = "Model", module = "lbjump_py", frozen)]
struct Model {
    inner: CoreOracle,
}

impl Model {
    fn state(&self, x: &Bound<'_, PyAny>) -> PyResult<State> {
        match self.inner.target() {
            Target::Finite(_) => Ok(State::Finite(x.extract::<usize>()?)),
            Target::Lattice(_) => Ok(State::Lattice(x.extract::<i64>()?)),
            Target::Continuous(_) => match x.extract::<Vec<f64>>() {
                Ok(v) => Ok(State::Continuous(v)),
                Err(_) => Ok(State::Continuous(vec![x.extract::<f64>()?])),
            },
        }
    }
}

fn state_to_py(py: Python<'_>, s: &State) -> PyResult<Py<PyAny>> {
    Ok(match s {
        State::Finite(i) => i.into_pyobject(py)?.into_any().unbind(),
        State::Lattice(n) => n.into_pyobject(py)?.into_any().unbind(),
        State::Continuous(v) => v.clone().into_pyobject(py)?.into_any().unbind(),
    })
}

#[pymethods]
impl Model {
    /// Finite model from target probabilities and proposal rows.
    #[staticmethod]
    fn finite(probs: Vec<f64>, rows: Vec<Vec<f64>>) -> PyResult<Self> {
        CoreOracle::finite(probs, rows).map(|inner| Self { inner }).map_err(err)
    }

    /// Model from the JSON descriptor used by the CLI configs.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let d = ModelDescriptor::from_json(text).map_err(err)?;
        d.build().map(|inner| Self { inner }).map_err(err)
    }

    /// Jump rate `lambda(x)`.
    fn rate(&self, g: &Balancing, x: &Bound<'_, PyAny>) -> PyResult<f64> {
        let s = self.state(x)?;
        rate_exact(&self.inner, &g.inner, &s).map(|r| r.lambda).map_err(err)
    }

    /// `Z_lambda = sum lambda(x) pi(x)` (truncated on lattices).
    fn z_lambda(&self, g: &Balancing) -> PyResult<f64> {
        z_lambda_exact(&self.inner, &g.inner).map(|z| z.value).map_err(err)
    }

    /// Generator matrix as nested lists.
    fn generator(&self, g: &Balancing) -> PyResult<Vec<Vec<f64>>> {
        let l = build_generator(&self.inner, &g.inner).map_err(err)?;
        Ok(l.l.row_iter().map(|r| r.iter().copied().collect()).collect())
    }

    /// Spectral gap of the LBMJP generator.
    fn gap(&self, g: &Balancing) -> PyResult<f64> {
        let l = build_generator(&self.inner, &g.inner).map_err(err)?;
        spectral_gap(&l).map(|r| r.gap).map_err(err)
    }

    /// Spectral gap of the Metropolis–Hastings kernel with the same proposal.
    fn mh_gap(&self) -> PyResult<f64> {
        mh_gap(&build_mh_kernel(&self.inner).map_err(err)?).map(|r| r.gap).map_err(err)
    }

    /// `(passed, gap_L, gap_P, lambda_bar)` for bounded `g`.
    fn gap_sandwich(&self, g: &Balancing) -> PyResult<(bool, f64, f64, f64)> {
        let r = gap_sandwich_check(&self.inner, &g.inner).map_err(err)?;
        let v = |k: &str| r.value(k).unwrap_or(f64::NAN);
        Ok((r.passed, v("gap_L"), v("gap_P"), v("lambda_bar")))
    }

    /// Simulate one trajectory. Give exactly one of `time` or `events`.
    /// Returns `(jump times, states)` with the initial state at time 0.
    #[pyo3(signature = (g, x0, seed, time=None, events=None, replica=0))]
    #[allow(clippy::too_many_arguments)]
    fn simulate(
        &self,
        py: Python<'_>,
        g: &Balancing,
        x0: &Bound<'_, PyAny>,
        seed: u64,
        time: Option<f64>,
        events: Option<usize>,
        replica: u64,
    ) -> PyResult<(Vec<f64>, Vec<Py<PyAny>>)> {
        let horizon = match (time, events) {
            (Some(t), None) => Horizon::Time(t),
            (None, Some(n)) => Horizon::Events(n),
            _ => return Err(PyValueError::new_err("give exactly one of `time` or `events`")),
        };
        let x0 = self.state(x0)?;
        let mut rng = SeededStream::new(seed, replica);
        let traj = if self.inner.is_discrete() {
            run_exact(&self.inner, &g.inner, &x0, horizon, &mut rng, RunOptions::default())
        } else {
            run_thinning(&self.inner, &g.inner, &x0, horizon, &mut rng, RunOptions::default())
        }
        .map_err(err)?;
        let mut times = vec![0.0];
        let mut states = vec![state_to_py(py, &traj.initial)?];
        for (s, t) in &traj.jumps {
            times.push(*t);
            states.push(state_to_py(py, s)?);
        }
        Ok((times, states))
    }

    /// Long-run average of the first coordinate over `events` jumps.
    fn time_average_identity(&self, g: &Balancing, x0: &Bound<'_, PyAny>, events: usize, seed: u64) -> PyResult<f64> {
        let x0 = self.state(x0)?;
        let mut rng = SeededStream::new(seed, 0);
        let traj =
            run_exact(&self.inner, &g.inner, &x0, Horizon::Events(events), &mut rng, RunOptions::default()).map_err(err)?;
        Ok(time_average(&traj, |s| s.coords()[0]))
    }

    /// MC / IS / MH estimates of `E[x]` over `seeds` seeds:
    /// `{"truth", "var_mc", "var_is", "var_mh", "p_value"}`.
    fn faceoff(&self, g: &Balancing, budget: usize, seeds: usize, seed: u64) -> PyResult<HashMap<String, f64>> {
        let r = variance_faceoff(&self.inner, &g.inner, |s| s.coords()[0], &State::Finite(0), budget, seeds, seed)
            .map_err(err)?;
        Ok(HashMap::from([
            ("truth".into(), r.truth),
            ("var_mc".into(), r.var_mc),
            ("var_is".into(), r.var_is),
            ("var_mh".into(), r.var_mh),
            ("p_value".into(), r.test.p_value),
        ]))
    }
}

/// Expected hitting time bracket `(lower, upper)` of `{<= k}` from `n` for
/// `pi(n) ∝ exp(-a n^beta)` on the naturals.
#[pyfunction]
#[pyo3(signature = (a, beta, g, n, k, n_max=None))]
fn hitting_bracket(a: f64, beta: f64, g: &Balancing, n: i64, k: i64, n_max: Option<i64>) -> PyResult<(f64, f64)> {
    let model = BirthDeathModel::new(LatticeTarget::exp_power(a, beta).map_err(err)?, g.inner.clone()).map_err(err)?;
    let e = model.expected_hitting(n, k, n_max).map_err(err)?;
    Ok((e.lower, e.upper))
}

/// Skew-balance certificate on a directed cycle with target `pi`:
/// `(passed, skew residual, invariance residual)`.
#[pyfunction]
fn nonrev_cycle_certificate(pi: Vec<f64>, g: &Balancing) -> PyResult<(bool, f64, f64)> {
    let chain = LiftedChain::directed_cycle(&pi).map_err(err)?;
    let k = build_skew_kernel(&chain, &g.inner, FlipRule::Complement).map_err(err)?;
    let r = certify_skew_balance(&k, &chain);
    Ok((
        r.passed,
        r.value("skew_residual").unwrap_or(f64::NAN),
        r.value("invariance_residual").unwrap_or(f64::NAN),
    ))
}

/// Runs acceptance criterion `id`; returns `(passed, report line)`.
#[pyfunction]
#[pyo3(signature = (id, seed=acceptance::DEFAULT_SEED))]
fn acceptance_criterion(py: Python<'_>, id: u8, seed: u64) -> PyResult<(bool, String)> {
    let r = py.detach(|| acceptance::run_criterion(id, seed)).map_err(err)?;
    Ok((r.passed, r.line()))
}

#[pymodule]
fn lbjump_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Balancing>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(hitting_bracket, m)?)?;
    m.add_function(wrap_pyfunction!(nonrev_cycle_certificate, m)?)?;
    m.add_function(wrap_pyfunction!(acceptance_criterion, m)?)?;
    Ok(())
}
