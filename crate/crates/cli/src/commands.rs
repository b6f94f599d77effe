use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use lbjump::acceptance::{self, function_bank, CRITERIA, DEFAULT_SEED};
use lbjump::balancing::{builtin_catalog, catalog_with_alpha, check_balancing, check_bounds, standard_grid};
use lbjump::diffusion::{convergence_experiment, DiffusionExperiment};
use lbjump::estimators::variance_faceoff;
use lbjump::hitting::BirthDeathModel;
use lbjump::instances::seeded_instance;
use lbjump::io::{Cell, CsvTable};
use lbjump::model::{ContinuousFamilyName, ContinuousTarget, LatticeTarget, RatioOracle, Target};
use lbjump::nonrev::{
    build_skew_kernel, certify_self_adjointness, certify_skew_balance, nonrev_mixing_probe, FlipRule, LiftedChain,
};
use lbjump::simulate::{run_exact, run_replicas, run_thinning, trajectory_table, Horizon, RunOptions};
use lbjump::spectral::{build_generator, build_mh_kernel, comparison_check, gap_sandwich_check, mh_gap, spectral_gap};
use lbjump::{Balancing, Error, SeededStream, State};

use crate::config::{self, *};

/// Command-line settings shared by every subcommand.
#[derive(Clone, Debug, Default)]
pub struct Ctx {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub nondeterministic: bool,
}

/// Files written and whether every certificate held.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub certified: bool,
}

impl Ctx {
    fn seed(&self, common: &Common) -> Result<u64> {
        if let Some(s) = self.seed.or(common.seed) {
            return Ok(s);
        }
        if self.nondeterministic {
            let nanos = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_nanos());
            let seed = nanos as u64;
            eprintln!("nondeterministic seed {seed}");
            return Ok(seed);
        }
        bail!(Error::ConfigInvalid("no seed: pass --seed, set `seed` in the config, or use --nondeterministic".into()))
    }

    fn out_dir(&self, common: &Common) -> PathBuf {
        self.out.clone().or_else(|| common.out.clone()).unwrap_or_else(|| PathBuf::from("out"))
    }
}

/// Writes `table` to `dir/name` through a temporary file in `dir`.
pub fn write_atomic(dir: &Path, name: &str, table: &CsvTable) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(table.render().as_bytes())?;
    let path = dir.join(name);
    tmp.persist(&path).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn load_or_default<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    path.map_or_else(|| Ok(T::default()), config::load)
}

fn need<'a>(path: Option<&'a Path>, cmd: &str) -> Result<&'a Path> {
    path.ok_or_else(|| Error::ConfigInvalid(format!("`{cmd}` needs --config")).into())
}

fn balancing(name: &str) -> Result<Balancing> {
    Balancing::from_name(name).context("balancing")
}

fn start_state(oracle: &RatioOracle, x0: &StartPoint) -> Result<State> {
    Ok(match (oracle.target(), x0) {
        (Target::Finite(_), StartPoint::Index(i)) if *i >= 0 => State::Finite(*i as usize),
        (Target::Lattice(_), StartPoint::Index(n)) => State::Lattice(*n),
        (Target::Continuous(_), StartPoint::Point(p)) => State::Continuous(p.clone()),
        (Target::Continuous(_), StartPoint::Index(v)) => State::Continuous(vec![*v as f64]),
        _ => bail!(Error::ConfigInvalid("x0 does not match the model's state space".into())),
    })
}

pub fn simulate(path: Option<&Path>, ctx: &Ctx) -> Result<Outcome> {
    let cfg: SimulateConfig = config::load(need(path, "simulate")?)?;
    let common = cfg.common();
    check_kind(&common, "simulate")?;
    let seed = ctx.seed(&common)?;
    let oracle = cfg.model.build().context("model")?;
    let g = balancing(&cfg.g)?;
    let x0 = start_state(&oracle, &cfg.x0)?;
    let horizon = match cfg.horizon {
        HorizonSpec::Time(t) => Horizon::Time(t),
        HorizonSpec::Events(n) => Horizon::Events(n),
    };
    let opts = RunOptions {
        max_events: cfg.max_events.unwrap_or(lbjump::simulate::DEFAULT_MAX_EVENTS),
        strict: cfg.strict,
        record_candidates: false,
    };
    let trajectories = run_replicas(cfg.replicas, seed, |_, rng| {
        if oracle.is_discrete() {
            run_exact(&oracle, &g, &x0, horizon, rng, opts)
        } else {
            run_thinning(&oracle, &g, &x0, horizon, rng, opts)
        }
    })
    .context("simulate")?;
    let mut table = trajectory_table(x0.dim());
    for (i, t) in trajectories.iter().enumerate() {
        t.append_csv(i, &mut table);
        if t.truncated {
            eprintln!("replica {i}: event budget reached before the horizon");
        }
    }
    let file = write_atomic(&ctx.out_dir(&common), "trajectory.csv", &table)?;
    Ok(Outcome { files: vec![file], certified: true })
}

fn instance_list(source: &InstanceSource, ctx: &Ctx, common: &Common) -> Result<Vec<RatioOracle>> {
    match source {
        InstanceSource::Models(models) => models.iter().map(|m| m.build().context("model")).collect(),
        InstanceSource::Random { count, m_min, m_max } => {
            if *m_min < 2 || m_max < m_min {
                bail!(Error::ConfigInvalid("random instances need 2 <= m_min <= m_max".into()));
            }
            let seed = ctx.seed(common)?;
            let mut sizes = SeededStream::new(seed, u64::MAX);
            (0..*count)
                .map(|i| {
                    let m = m_min + (sizes.open01() * (m_max - m_min + 1) as f64) as usize;
                    seeded_instance(m.min(*m_max), seed, i).context("instances")
                })
                .collect()
        }
    }
}

fn optional(ok: Option<bool>) -> Cell {
    ok.map_or_else(|| Cell::from("na"), Cell::from)
}

pub fn gaps(path: Option<&Path>, ctx: &Ctx) -> Result<Outcome> {
    let cfg: GapsConfig = config::load(need(path, "gaps")?)?;
    let common = cfg.common();
    check_kind(&common, "gaps")?;
    let oracles = instance_list(&cfg.instances, ctx, &common)?;
    let gs = cfg.g.iter().map(|n| balancing(n)).collect::<Result<Vec<_>>>()?;
    let mut table = CsvTable::new([
        "instance_id",
        "g_name",
        "gap_L",
        "gap_P",
        "lambda_bar",
        "sandwich_ok",
        "comparison_ok",
    ]);
    let mut certified = true;
    for (id, o) in oracles.iter().enumerate() {
        let gap_p = mh_gap(&build_mh_kernel(o).context("spectral")?).context("spectral")?.gap;
        for g in &gs {
            let gap_l = spectral_gap(&build_generator(o, g).context("spectral")?).context("spectral")?.gap;
            let sandwich = match gap_sandwich_check(o, g) {
                Ok(r) => Some(r.passed),
                Err(Error::MissingSupBound(_) | Error::PremiseViolated(_)) => None,
                Err(e) => return Err(e).context("spectral"),
            };
            let comparison = match comparison_check(o, g, &Balancing::min(), cfg.omega) {
                Ok(r) => Some(r.passed),
                Err(Error::PremiseViolated(_)) => None,
                Err(e) => return Err(e).context("spectral"),
            };
            certified &= sandwich != Some(false) && comparison != Some(false);
            table.push(vec![
                id.into(),
                g.name().into(),
                gap_l.into(),
                gap_p.into(),
                g.trusted_sup().unwrap_or(f64::NAN).into(),
                optional(sandwich),
                optional(comparison),
            ]);
        }
    }
    let file = write_atomic(&ctx.out_dir(&common), "gaps.csv", &table)?;
    Ok(Outcome { files: vec![file], certified })
}

pub fn hitting(path: Option<&Path>, ctx: &Ctx) -> Result<Outcome> {
    let cfg: HittingConfig = config::load(need(path, "hitting")?)?;
    let common = cfg.common();
    check_kind(&common, "hitting")?;
    let seed = if cfg.replicas > 0 { ctx.seed(&common)? } else { 0 };
    let model = BirthDeathModel::new(LatticeTarget::exp_power(cfg.a, cfg.beta)?, balancing(&cfg.g)?).context("hitting")?;
    let mut table = CsvTable::new(["N", "k", "lower", "upper", "sim_mean", "sim_se", "sum_a_partial"]);
    for (i, &n) in cfg.starts.iter().enumerate() {
        let est = model.expected_hitting(n, cfg.k, cfg.n_max).context("hitting")?;
        let sum_a: f64 = model.sequences(cfg.k, n).context("hitting")?.rows.iter().map(|r| r.a).sum();
        let (mean, se) = if cfg.replicas > 0 {
            let s = model.simulate_hitting(n, cfg.k, cfg.replicas, seed.wrapping_add(i as u64)).context("hitting")?;
            (s.mean, s.se)
        } else {
            (f64::NAN, f64::NAN)
        };
        table.push(vec![
            n.into(),
            cfg.k.into(),
            est.lower.into(),
            est.upper.into(),
            mean.into(),
            se.into(),
            sum_a.into(),
        ]);
    }
    let file = write_atomic(&ctx.out_dir(&common), "hitting.csv", &table)?;
    Ok(Outcome { files: vec![file], certified: true })
}

pub fn difflimit(path: Option<&Path>, ctx: &Ctx) -> Result<Outcome> {
    let cfg: DiffLimitConfig = config::load(need(path, "difflimit")?)?;
    let common = cfg.common();
    check_kind(&common, "difflimit")?;
    let target = match cfg.target {
        ContinuousFamilyName::Gaussian => ContinuousTarget::standard_gaussian(cfg.dim),
        ContinuousFamilyName::Quartic => ContinuousTarget::quartic(cfg.dim),
    };
    let exp = DiffusionExperiment {
        target,
        g: balancing(&cfg.g)?,
        sigmas: cfg.sigmas.clone(),
        horizon: cfg.horizon,
        samples: cfg.samples,
        dt: cfg.dt,
        x0: cfg.x0.clone(),
        seed: ctx.seed(&common)?,
    };
    let result = convergence_experiment(&exp).context("diffusion")?;
    let mut table = CsvTable::new(["sigma", "n_samples", "ks_vs_langevin", "ks_vs_stationary", "runtime_s"]);
    for r in &result.rows {
        table.push(vec![
            r.sigma.into(),
            r.n_samples.into(),
            r.ks_vs_langevin.into(),
            r.ks_vs_stationary.into(),
            r.runtime_s.into(),
        ]);
    }
    let mut certified = true;
    if let Some(t) = &cfg.thresholds {
        if t.strictly_decreasing && !result.strictly_decreasing() {
            eprintln!("KS distance is not strictly decreasing across the schedule");
            certified = false;
        }
        if let (Some(limit), Some(last)) = (t.ks_at_smallest_sigma, result.rows.last()) {
            if last.ks_vs_langevin >= limit {
                eprintln!("KS {} at sigma {} is not below {limit}", last.ks_vs_langevin, last.sigma);
                certified = false;
            }
        }
    }
    let file = write_atomic(&ctx.out_dir(&common), "difflimit.csv", &table)?;
    Ok(Outcome { files: vec![file], certified })
}

pub fn estimators(path: Option<&Path>, ctx: &Ctx) -> Result<Outcome> {
    let cfg: EstimatorsConfig = config::load(need(path, "estimators")?)?;
    let common = cfg.common();
    check_kind(&common, "estimators")?;
    config::require_positive("budget", cfg.budget)?;
    config::require_positive("seeds", cfg.seeds)?;
    let seed = ctx.seed(&common)?;
    let oracle = cfg.model.build().context("model")?;
    let m = oracle
        .finite_target()
        .ok_or_else(|| Error::ModelValidation("estimators need a finite model".into()))?
        .len();
    let (_, f) = function_bank(m)
        .into_iter()
        .find(|(name, _)| *name == cfg.f)
        .ok_or_else(|| Error::ConfigInvalid(format!("unknown test function `{}`", cfg.f)))?;
    let report = variance_faceoff(&oracle, &balancing(&cfg.g)?, f, &State::Finite(cfg.x0), cfg.budget, cfg.seeds, seed)
        .context("estimators")?;
    let mut table = CsvTable::new(["seed", "estimator", "estimate", "se", "var_across_seeds"]);
    for row in &report.rows {
        for (r, var) in [(row.mc, report.var_mc), (row.is, report.var_is), (row.mh, report.var_mh)] {
            table.push(vec![row.seed.into(), r.kind.to_string().into(), r.estimate.into(), r.se.into(), var.into()]);
        }
    }
    println!(
        "truth {:.6}; Var MC {:.3e}, IS {:.3e}, MH {:.3e}; paired test (IS < MC) p = {:.3e}",
        report.truth, report.var_mc, report.var_is, report.var_mh, report.test.p_value
    );
    let file = write_atomic(&ctx.out_dir(&common), "estimators.csv", &table)?;
    Ok(Outcome { files: vec![file], certified: true })
}

pub fn nonrev(path: Option<&Path>, ctx: &Ctx) -> Result<Outcome> {
    let cfg: NonrevConfig = config::load(need(path, "nonrev")?)?;
    let common = cfg.common();
    check_kind(&common, "nonrev")?;
    let seed = ctx.seed(&common)?;
    let chains: Vec<LiftedChain> = match &cfg.chain {
        ChainSpec::DirectedCycle { pi } => vec![LiftedChain::directed_cycle(pi).context("nonrev")?],
        ChainSpec::Random { m, flip, count } => (0..*count)
            .map(|i| LiftedChain::random(*m, *flip, &mut SeededStream::new(seed, i)).context("nonrev"))
            .collect::<Result<_>>()?,
    };
    let gs = cfg.g.iter().map(|n| balancing(n)).collect::<Result<Vec<_>>>()?;
    let mut cert = CsvTable::new([
        "instance_id",
        "g_name",
        "skew_residual",
        "invariance_residual",
        "adjoint_residual",
        "passed",
    ]);
    let mut mixing = CsvTable::new(["instance_id", "g_name", "t", "tv_nonrev", "tv_rev"]);
    let mut certified = true;
    let mut rng = SeededStream::new(seed, u64::MAX);
    for (id, chain) in chains.iter().enumerate() {
        for g in &gs {
            let kernel = build_skew_kernel(chain, g, FlipRule::Complement).context("nonrev")?;
            let skew = certify_skew_balance(&kernel, chain);
            let adjoint = certify_self_adjointness(&kernel, chain, cfg.adjoint_pairs, &mut rng);
            let passed = skew.passed && adjoint.passed;
            certified &= passed;
            cert.push(vec![
                id.into(),
                g.name().into(),
                skew.value("skew_residual").unwrap_or(f64::NAN).into(),
                skew.value("invariance_residual").unwrap_or(f64::NAN).into(),
                adjoint.value("residual").unwrap_or(f64::NAN).into(),
                passed.into(),
            ]);
            if !cfg.times.is_empty() {
                for row in nonrev_mixing_probe(chain, g, cfg.start, &cfg.times).context("nonrev")? {
                    mixing.push(vec![id.into(), g.name().into(), row.t.into(), row.tv_nonrev.into(), row.tv_rev.into()]);
                }
            }
        }
    }
    let dir = ctx.out_dir(&common);
    let mut files = vec![write_atomic(&dir, "nonrev_cert.csv", &cert)?];
    if !mixing.is_empty() {
        files.push(write_atomic(&dir, "nonrev_mixing.csv", &mixing)?);
    }
    Ok(Outcome { files, certified })
}

pub fn check_balancing_cmd(path: Option<&Path>, ctx: &Ctx) -> Result<Outcome> {
    let cfg: CheckBalancingConfig = load_or_default(path)?;
    let common = cfg.common();
    check_kind(&common, "check-balancing")?;
    let gs = if cfg.g.is_empty() {
        match cfg.alpha {
            Some(a) => catalog_with_alpha(a)?,
            None => builtin_catalog(),
        }
    } else {
        cfg.g.iter().map(|n| balancing(n)).collect::<Result<_>>()?
    };
    let grid = standard_grid();
    let mut table = CsvTable::new(["g_name", "identity_ok", "bounds_ok", "identity_violations", "bounds_violations"]);
    let mut certified = true;
    for g in &gs {
        let id = check_balancing(g, &grid).context("balancing")?;
        let bounds = check_bounds(g, &grid, false).context("balancing")?;
        certified &= id.is_pass() && bounds.is_pass();
        println!(
            "{} {}",
            if id.is_pass() && bounds.is_pass() { "PASS" } else { "FAIL" },
            g.name()
        );
        table.push(vec![
            g.name().into(),
            id.is_pass().into(),
            bounds.is_pass().into(),
            id.violations.len().into(),
            bounds.violations.len().into(),
        ]);
    }
    let file = write_atomic(&ctx.out_dir(&common), "balancing.csv", &table)?;
    Ok(Outcome { files: vec![file], certified })
}

pub fn accept(path: Option<&Path>, ctx: &Ctx) -> Result<Outcome> {
    let cfg: AcceptConfig = load_or_default(path)?;
    let common = cfg.common();
    check_kind(&common, "accept")?;
    let seed = ctx.seed.or(common.seed).unwrap_or(DEFAULT_SEED);
    let ids: Vec<u8> = if cfg.criteria.is_empty() { CRITERIA.iter().map(|c| c.0).collect() } else { cfg.criteria.clone() };
    let mut table = CsvTable::new(["criterion", "name", "passed", "runtime_s", "limit_s", "detail"]);
    let mut certified = true;
    for id in ids {
        let r = acceptance::run_criterion(id, seed)?;
        println!("{}", r.line());
        certified &= r.passed;
        table.push(vec![
            (r.id as usize).into(),
            r.name.into(),
            r.passed.into(),
            r.runtime_s.into(),
            r.limit_s.into(),
            r.detail.clone().into(),
        ]);
    }
    let file = write_atomic(&ctx.out_dir(&common), "accept.csv", &table)?;
    Ok(Outcome { files: vec![file], certified })
}
