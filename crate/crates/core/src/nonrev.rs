//! Non-reversible jump kernels on finite spaces with an involution `T`:
//! `J(z, z') = g(mu(z') P(Tz', Tz) / (mu(z) P(z, z'))) P(z, z')`.
//!
//! `J` satisfies skew detailed balance `mu(z) J(z,z') = mu(Tz') J(Tz', Tz)`.
//! The outgoing rate `lambda(z)` of `J` need not equal `lambda(Tz)`, and
//! without that `mu` is not invariant. [`FlipRule::Complement`] adds a
//! direction flip `z -> Tz` at rate `max(0, lambda(Tz) - lambda(z))`, which
//! restores both invariance and `(mu, Q)` self-adjointness of the generator.

use nalgebra::{DMatrix, DVector};

use crate::balancing::Balancing;
use crate::error::{Error, Result};
use crate::instances::{dirichlet_ones, random_proposal};
use crate::model::RatioOracle;
use crate::rng::SeededStream;
use crate::spectral::{build_generator, total_variation, CertReport, Semigroup};

pub const SKEW_TOL: f64 = 1e-12;
pub const ADJOINT_TOL: f64 = 1e-10;

/// Finite space with target `mu`, involution `T` and proposal `P`.
#[derive(Clone, Debug, PartialEq)]
pub struct LiftedChain {
    pub mu: Vec<f64>,
    pub involution: Vec<usize>,
    pub proposal: DMatrix<f64>,
    /// For direction-augmented chains: base size `m` (state `z = 2 i + d`,
    /// `d = 0` forward, `d = 1` backward) and the reversible base proposal.
    pub base: Option<(usize, Vec<Vec<f64>>)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlipRule {
    /// Only `J` itself.
    None,
    /// `J` plus flips at rate `max(0, lambda(Tz) - lambda(z))`.
    Complement,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SkewJumpKernel {
    /// Jump rates `J(z, z')`, flips included, zero diagonal.
    pub rates: DMatrix<f64>,
    /// Flip rates added on `z -> Tz`.
    pub flip: Vec<f64>,
    /// Generator: `rates` with `-(row sum)` on the diagonal.
    pub generator: DMatrix<f64>,
}

impl LiftedChain {
    pub fn new(mu: Vec<f64>, involution: Vec<usize>, proposal: DMatrix<f64>) -> Result<Self> {
        let n = mu.len();
        if involution.len() != n || proposal.nrows() != n || proposal.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: involution.len().min(proposal.nrows()) });
        }
        if let Some(z) = (0..n).find(|&z| involution[z] >= n || involution[involution[z]] != z) {
            return Err(Error::ModelValidation(format!("T is not an involution at state {z}")));
        }
        if let Some(z) = (0..n).find(|&z| (mu[z] - mu[involution[z]]).abs() > 1e-15 * mu[z].max(1.0)) {
            return Err(Error::ModelValidation(format!("mu is not T-invariant at state {z}")));
        }
        if mu.iter().any(|v| *v <= 0.0) || (mu.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::ModelValidation("mu must be a positive probability vector".into()));
        }
        for z in 0..n {
            let row: f64 = proposal.row(z).sum();
            if (row - 1.0).abs() > 1e-12 || proposal.row(z).iter().any(|p| *p < 0.0) {
                return Err(Error::ModelValidation(format!("proposal row {z} is not stochastic")));
            }
        }
        Ok(Self { mu, involution, proposal, base: None })
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    /// `Q = I`, `P = gamma` of a finite reversible model.
    pub fn reversible(oracle: &RatioOracle) -> Result<Self> {
        let t = oracle
            .finite_target()
            .ok_or_else(|| Error::ModelValidation("finite model required".into()))?;
        let m = t.len();
        let p = DMatrix::from_fn(m, m, |i, j| oracle.kernel().entry(i, j));
        Self::new(t.probs().to_vec(), (0..m).collect(), p)
    }

    fn lifted(pi: &[f64], forward: &[Vec<f64>], backward: &[Vec<f64>], flip: f64, base: Vec<Vec<f64>>) -> Result<Self> {
        let m = pi.len();
        let mu: Vec<f64> = pi.iter().flat_map(|p| [0.5 * p, 0.5 * p]).collect();
        let involution: Vec<usize> = (0..2 * m).map(|z| z ^ 1).collect();
        let mut p = DMatrix::zeros(2 * m, 2 * m);
        for i in 0..m {
            for j in 0..m {
                p[(2 * i, 2 * j)] = (1.0 - flip) * forward[i][j];
                p[(2 * i + 1, 2 * j + 1)] = (1.0 - flip) * backward[i][j];
            }
            p[(2 * i, 2 * i + 1)] += flip;
            p[(2 * i + 1, 2 * i)] += flip;
        }
        let mut chain = Self::new(mu, involution, p)?;
        chain.base = Some((m, base));
        Ok(chain)
    }

    /// Directed walk on the cycle `Z_m`: forward moves to `i + 1`, backward
    /// to `i - 1`, direction flips `z <-> Tz`.
    pub fn directed_cycle(pi: &[f64]) -> Result<Self> {
        let m = pi.len();
        if m < 3 {
            return Err(Error::ModelValidation("directed cycle needs at least three states".into()));
        }
        let shift = |k: isize| -> Vec<Vec<f64>> {
            (0..m)
                .map(|i| {
                    let mut row = vec![0.0; m];
                    row[(i as isize + k).rem_euclid(m as isize) as usize] = 1.0;
                    row
                })
                .collect()
        };
        let (fwd, bwd) = (shift(1), shift(-1));
        let base = (0..m).map(|i| (0..m).map(|j| 0.5 * (fwd[i][j] + bwd[i][j])).collect()).collect();
        Self::lifted(pi, &fwd, &bwd, 0.0, base)
    }

    /// Random lifted instance on `2m` states: `pi ~ Dirichlet(1)`, forward
    /// and backward proposals from independent random stochastic matrices,
    /// and a flip proposal of probability `flip`.
    pub fn random(m: usize, flip: f64, rng: &mut SeededStream) -> Result<Self> {
        let pi = dirichlet_ones(m, rng);
        let fwd = random_proposal(m, rng);
        let bwd = random_proposal(m, rng);
        let base = (0..m).map(|i| (0..m).map(|j| 0.5 * (fwd[i][j] + bwd[i][j])).collect()).collect();
        Self::lifted(&pi, &fwd, &bwd, flip, base)
    }

    /// Permutation matrix of `T`.
    pub fn q_matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |z, w| if self.involution[z] == w { 1.0 } else { 0.0 })
    }
}

/// Builds `J` (and flips per `rule`) and the generator.
pub fn build_skew_kernel(chain: &LiftedChain, g: &Balancing, rule: FlipRule) -> Result<SkewJumpKernel> {
    let n = chain.len();
    let (p, mu, t) = (&chain.proposal, &chain.mu, &chain.involution);
    let mut rates = DMatrix::zeros(n, n);
    for z in 0..n {
        for w in 0..n {
            if z == w {
                continue;
            }
            let fwd = p[(z, w)];
            let rev = p[(t[w], t[z])];
            if (fwd > 0.0) != (rev > 0.0) {
                return Err(Error::SupportMismatch(format!(
                    "P({z},{w}) = {fwd:e} but (QPQ)({w},{z}) = {rev:e}"
                )));
            }
            if fwd > 0.0 {
                let log_r = (mu[w].ln() + rev.ln()) - (mu[z].ln() + fwd.ln());
                rates[(z, w)] = g.eval_log_ratio(log_r) * fwd;
            }
        }
    }
    let lambda: Vec<f64> = (0..n).map(|z| rates.row(z).sum()).collect();
    let flip: Vec<f64> = match rule {
        FlipRule::None => vec![0.0; n],
        FlipRule::Complement => (0..n).map(|z| (lambda[t[z]] - lambda[z]).max(0.0)).collect(),
    };
    for z in 0..n {
        if t[z] != z {
            rates[(z, t[z])] += flip[z];
        }
    }
    let mut generator = rates.clone();
    for z in 0..n {
        generator[(z, z)] = -rates.row(z).sum();
    }
    Ok(SkewJumpKernel { rates, flip, generator })
}

fn scaled(residual: f64, a: f64, b: f64) -> f64 {
    residual / a.abs().max(b.abs()).max(1.0)
}

/// Checks `mu(z) J(z,z') = mu(Tz') J(Tz', Tz)` elementwise and
/// `mu^T L = 0`, both to [`SKEW_TOL`].
pub fn certify_skew_balance(kernel: &SkewJumpKernel, chain: &LiftedChain) -> CertReport {
    let n = chain.len();
    let (mu, t) = (&chain.mu, &chain.involution);
    let mut worst = 0.0f64;
    let mut worst_pair = (0, 0);
    for z in 0..n {
        for w in 0..n {
            if z == w {
                continue;
            }
            let a = mu[z] * kernel.rates[(z, w)];
            let b = mu[t[w]] * kernel.rates[(t[w], t[z])];
            let r = scaled((a - b).abs(), a, b);
            if r > worst {
                worst = r;
                worst_pair = (z, w);
            }
        }
    }
    let flux = DVector::from_column_slice(mu).transpose() * &kernel.generator;
    let scale = (0..n).map(|z| mu[z] * kernel.generator[(z, z)].abs()).fold(1.0, f64::max);
    let invariance = flux.iter().map(|v| v.abs()).fold(0.0, f64::max) / scale;
    let passed = worst <= SKEW_TOL && invariance <= SKEW_TOL;
    CertReport {
        name: "skew_balance".into(),
        passed,
        values: vec![
            ("skew_residual".into(), worst),
            ("invariance_residual".into(), invariance),
            ("worst_from".into(), worst_pair.0 as f64),
            ("worst_to".into(), worst_pair.1 as f64),
        ],
        detail: format!("worst skew pair ({}, {})", worst_pair.0, worst_pair.1),
    }
}

/// `|<f, L h>_mu - <Q L Q f, h>_mu|` over random pairs, relative to
/// `||f||_mu ||h||_mu max(1, max rate)`.
pub fn certify_self_adjointness(kernel: &SkewJumpKernel, chain: &LiftedChain, pairs: usize, rng: &mut SeededStream) -> CertReport {
    let n = chain.len();
    let q = chain.q_matrix();
    let qlq = &q * &kernel.generator * &q;
    let mu = &chain.mu;
    let inner = |a: &DVector<f64>, b: &DVector<f64>| (0..n).map(|z| mu[z] * a[z] * b[z]).sum::<f64>();
    let rate = (0..n).map(|z| kernel.generator[(z, z)].abs()).fold(1.0, f64::max);
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let f = DVector::from_fn(n, |_, _| rng.standard_normal());
        let h = DVector::from_fn(n, |_, _| rng.standard_normal());
        let lhs = inner(&f, &(&kernel.generator * &h));
        let rhs = inner(&(&qlq * &f), &h);
        let norm = inner(&f, &f).sqrt() * inner(&h, &h).sqrt() * rate;
        worst = worst.max((lhs - rhs).abs() / norm);
    }
    CertReport {
        name: "self_adjointness".into(),
        passed: worst <= ADJOINT_TOL,
        values: vec![("residual".into(), worst), ("pairs".into(), pairs as f64)],
        detail: format!("largest relative residual over {pairs} random pairs"),
    }
}

/// `mu e^{tL}` for a general generator by uniformisation.
pub fn evolve_uniformised(generator: &DMatrix<f64>, mu0: &[f64], t: f64) -> Vec<f64> {
    let n = mu0.len();
    let rate = (0..n).map(|z| -generator[(z, z)]).fold(0.0, f64::max);
    if t == 0.0 || rate == 0.0 {
        return mu0.to_vec();
    }
    let step = DMatrix::identity(n, n) + generator / rate;
    let mean = rate * t;
    let mut v = DVector::from_column_slice(mu0).transpose();
    let mut out = DVector::zeros(n).transpose();
    let mut log_w = -mean;
    let mut mass = 0.0;
    let mut k = 0usize;
    let k_min = mean.floor() as usize;
    let k_max = (mean + 12.0 * mean.sqrt() + 30.0).ceil() as usize;
    loop {
        let w = log_w.exp();
        out += &v * w;
        mass += w;
        if k >= k_max || (k > k_min && 1.0 - mass < 1e-15) {
            break;
        }
        k += 1;
        log_w += mean.ln() - (k as f64).ln();
        v = &v * &step;
    }
    out.iter().copied().collect()
}

/// One row of the mixing comparison.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixingRow {
    pub t: f64,
    pub tv_nonrev: f64,
    pub tv_rev: f64,
}

/// TV distance to `pi` on the base space over time, for the lifted
/// non-reversible process started at `(start, forward)` and the reversible
/// LBMJP with the base proposal started at `start`.
pub fn nonrev_mixing_probe(chain: &LiftedChain, g: &Balancing, start: usize, times: &[f64]) -> Result<Vec<MixingRow>> {
    let (m, base) = chain
        .base
        .clone()
        .ok_or_else(|| Error::ModelValidation("mixing probe needs a direction-augmented chain".into()))?;
    if start >= m {
        return Err(Error::OutOfSupport(format!("base state {start}")));
    }
    let pi: Vec<f64> = (0..m).map(|i| chain.mu[2 * i] + chain.mu[2 * i + 1]).collect();
    let kernel = build_skew_kernel(chain, g, FlipRule::Complement)?;
    let reversible = build_generator(&RatioOracle::finite(pi.clone(), base)?, g)?;
    let semigroup = Semigroup::new(&reversible)?;
    let mut lifted0 = vec![0.0; 2 * m];
    lifted0[2 * start] = 1.0;
    let mut base0 = vec![0.0; m];
    base0[start] = 1.0;
    Ok(times
        .iter()
        .map(|&t| {
            let lifted = evolve_uniformised(&kernel.generator, &lifted0, t);
            let marginal: Vec<f64> = (0..m).map(|i| lifted[2 * i] + lifted[2 * i + 1]).collect();
            MixingRow {
                t,
                tv_nonrev: total_variation(&marginal, &pi),
                tv_rev: total_variation(&semigroup.evolve(&base0, t), &pi),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn catalog() -> Vec<Balancing> {
        vec![Balancing::min(), Balancing::barker(), Balancing::sqrt()]
    }

    #[test]
    fn uniform_cycle_kernel_is_the_proposal() {
        let chain = LiftedChain::directed_cycle(&[0.25; 4]).unwrap();
        for g in catalog() {
            let k = build_skew_kernel(&chain, &g, FlipRule::Complement).unwrap();
            assert_eq!(k.rates, chain.proposal);
            assert!(certify_skew_balance(&k, &chain).passed);
        }
    }

    #[test]
    fn three_state_min_elementwise() {
        let pi = [0.2f64, 0.3, 0.5];
        let chain = LiftedChain::directed_cycle(&pi).unwrap();
        let k = build_skew_kernel(&chain, &Balancing::min(), FlipRule::None).unwrap();
        for i in 0..3 {
            let up = (i + 1) % 3;
            let down = (i + 2) % 3;
            assert!((k.rates[(2 * i, 2 * up)] - (pi[up] / pi[i]).min(1.0)).abs() < 1e-15);
            assert!((k.rates[(2 * i + 1, 2 * down + 1)] - (pi[down] / pi[i]).min(1.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn barker_entries_below_two() {
        let chain = LiftedChain::directed_cycle(&[0.2, 0.3, 0.5]).unwrap();
        let k = build_skew_kernel(&chain, &Balancing::barker(), FlipRule::None).unwrap();
        for z in 0..6 {
            for w in 0..6 {
                let p = chain.proposal[(z, w)];
                if p > 0.0 {
                    assert!(k.rates[(z, w)] > 0.0 && k.rates[(z, w)] < 2.0 * p);
                }
            }
        }
    }

    #[test]
    fn raw_kernel_loses_invariance_flip_restores_it() {
        let chain = LiftedChain::directed_cycle(&[0.2, 0.3, 0.5]).unwrap();
        let raw = build_skew_kernel(&chain, &Balancing::sqrt(), FlipRule::None).unwrap();
        let report = certify_skew_balance(&raw, &chain);
        assert!(report.value("skew_residual").unwrap() <= SKEW_TOL);
        assert!(report.value("invariance_residual").unwrap() > 1e-3);
        let fixed = build_skew_kernel(&chain, &Balancing::sqrt(), FlipRule::Complement).unwrap();
        assert!(certify_skew_balance(&fixed, &chain).passed);
    }

    #[test]
    fn corrupted_entry_is_located() {
        let chain = LiftedChain::directed_cycle(&[0.2, 0.3, 0.5]).unwrap();
        let mut k = build_skew_kernel(&chain, &Balancing::barker(), FlipRule::Complement).unwrap();
        k.rates[(0, 2)] *= 1.01;
        let r = certify_skew_balance(&k, &chain);
        assert!(!r.passed);
        let (from, to) = (r.value("worst_from").unwrap(), r.value("worst_to").unwrap());
        assert!((from, to) == (0.0, 2.0) || (from, to) == (3.0, 1.0));
    }

    #[test]
    fn support_mismatch() {
        let mut p = DMatrix::zeros(4, 4);
        p[(0, 2)] = 1.0;
        p[(1, 0)] = 1.0;
        p[(2, 0)] = 1.0;
        p[(3, 1)] = 1.0;
        let chain = LiftedChain::new(vec![0.25; 4], vec![1, 0, 3, 2], p).unwrap();
        assert!(matches!(build_skew_kernel(&chain, &Balancing::min(), FlipRule::None), Err(Error::SupportMismatch(_))));
    }

    #[test]
    fn involution_is_checked() {
        let p = DMatrix::from_element(3, 3, 1.0 / 3.0);
        assert!(LiftedChain::new(vec![1.0 / 3.0; 3], vec![1, 2, 0], p).is_err());
    }

    #[test]
    fn self_adjoint_on_random_lifts() {
        let mut rng = SeededStream::new(4, 0);
        for _ in 0..10 {
            let chain = LiftedChain::random(4, 0.1, &mut rng).unwrap();
            for g in catalog() {
                let k = build_skew_kernel(&chain, &g, FlipRule::Complement).unwrap();
                assert!(certify_skew_balance(&k, &chain).passed);
                assert!(certify_self_adjointness(&k, &chain, 20, &mut rng).passed);
            }
        }
    }

    #[test]
    fn identity_q_gives_reversible_kernel() {
        let o = crate::instances::seeded_instance(6, 9, 0).unwrap();
        let chain = LiftedChain::reversible(&o).unwrap();
        for g in catalog() {
            let k = build_skew_kernel(&chain, &g, FlipRule::Complement).unwrap();
            let l = build_generator(&o, &g).unwrap();
            assert!((&k.generator - &l.l).abs().max() <= 1e-14);
        }
    }

    #[test]
    fn uniformisation_matches_closed_form() {
        let l = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]);
        for t in [0.0, 0.4, 3.0] {
            let v = evolve_uniformised(&l, &[1.0, 0.0], t);
            assert!((v[0] - 0.5 * (1.0 + (-2.0 * t).exp())).abs() < 1e-14);
        }
    }

    #[test]
    fn mixing_probe_edges() {
        let chain = LiftedChain::directed_cycle(&[0.05; 20]).unwrap();
        let rows = nonrev_mixing_probe(&chain, &Balancing::barker(), 0, &[0.0, 1.0, 10.0]).unwrap();
        assert!((rows[0].tv_nonrev - 0.95).abs() < 1e-12);
        assert!((rows[0].tv_rev - 0.95).abs() < 1e-12);
        assert!(rows.iter().all(|r| r.tv_nonrev <= 0.95 + 1e-12 && r.tv_rev <= 0.95 + 1e-12));
    }
}
