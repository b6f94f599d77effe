//! Finite-state generators, Dirichlet forms and spectral gaps, plus the
//! numerical certificates built on them.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::balancing::Balancing;
use crate::error::{Error, Result};
use crate::model::RatioOracle;

/// Tolerance used by the certificates.
pub const CERT_TOL: f64 = 1e-9;
const INVARIANT_TOL: f64 = 1e-12;

/// Dense generator `L` of a finite LBMJP together with its target `pi`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorMatrix {
    pub l: DMatrix<f64>,
    pub pi: Vec<f64>,
}

/// Metropolis–Hastings transition matrix with proposal `gamma`.
#[derive(Clone, Debug, PartialEq)]
pub struct MhKernel {
    pub p: DMatrix<f64>,
    pub pi: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GapReport {
    pub gap: f64,
    /// Eigenvalues of the symmetrised operator, ascending.
    pub spectrum: Vec<f64>,
    /// Eigenfunction attaining the gap, in the original coordinates.
    pub argmin: Vec<f64>,
}

/// Outcome of a numerical certificate, with the quantities it compared.
#[derive(Clone, Debug, PartialEq)]
pub struct CertReport {
    pub name: String,
    pub passed: bool,
    pub values: Vec<(String, f64)>,
    pub detail: String,
}

impl CertReport {
    fn new(name: &str, passed: bool, values: Vec<(&str, f64)>, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            values: values.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            detail,
        }
    }

    pub fn value(&self, key: &str) -> Option<f64> {
        self.values.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    /// Turns a failed report into [`Error::CertificationFailure`].
    pub fn certify(self) -> Result<Self> {
        if self.passed {
            Ok(self)
        } else {
            let vals: Vec<String> = self.values.iter().map(|(k, v)| format!("{k}={v:.12e}")).collect();
            Err(Error::CertificationFailure(format!("{}: {} [{}]", self.name, self.detail, vals.join(", "))))
        }
    }
}

fn finite_parts(oracle: &RatioOracle) -> Result<(Vec<f64>, usize)> {
    let t = oracle
        .finite_target()
        .ok_or_else(|| Error::ModelValidation("finite model required".into()))?;
    if let Some(i) = t.probs().iter().position(|p| *p <= 0.0) {
        return Err(Error::ModelValidation(format!("target mass vanishes at state {i}")));
    }
    Ok((t.probs().to_vec(), t.len()))
}

/// Matrix of `gamma(i,j) * h(t(i,j))` off the diagonal, zero where `gamma` is.
fn weighted_offdiag(oracle: &RatioOracle, m: usize, h: impl Fn(f64) -> f64) -> Result<DMatrix<f64>> {
    let kernel = oracle.kernel();
    let mut w = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let gamma = kernel.entry(i, j);
            if i != j && gamma > 0.0 {
                let log_t = oracle.log_ratio(&crate::State::Finite(i), &crate::State::Finite(j))?;
                w[(i, j)] = h(log_t) * gamma;
            }
        }
    }
    Ok(w)
}

/// `L_ij = g(t(i,j)) gamma(i,j)` for `i != j`, rows summing to zero.
pub fn build_generator(oracle: &RatioOracle, g: &Balancing) -> Result<GeneratorMatrix> {
    let (pi, m) = finite_parts(oracle)?;
    let mut l = weighted_offdiag(oracle, m, |lt| g.eval_log_ratio(lt))?;
    for i in 0..m {
        let off: f64 = l.row(i).sum();
        l[(i, i)] = -off;
    }
    let gen = GeneratorMatrix { l, pi };
    gen.validate()?;
    Ok(gen)
}

/// `P_ij = min(1, t(i,j)) gamma(i,j)` off the diagonal; the diagonal takes
/// the rejected mass.
pub fn build_mh_kernel(oracle: &RatioOracle) -> Result<MhKernel> {
    let (pi, m) = finite_parts(oracle)?;
    let mut p = weighted_offdiag(oracle, m, |lt| lt.min(0.0).exp())?;
    for i in 0..m {
        let off: f64 = p.row(i).sum();
        p[(i, i)] = 1.0 - off;
    }
    Ok(MhKernel { p, pi })
}

impl GeneratorMatrix {
    pub fn dim(&self) -> usize {
        self.pi.len()
    }

    /// Zero row sums, non-negative off-diagonal, and `pi_i L_ij = pi_j L_ji`.
    pub fn validate(&self) -> Result<()> {
        let m = self.dim();
        for i in 0..m {
            let row: f64 = self.l.row(i).sum();
            let scale = self.l[(i, i)].abs().max(1.0);
            if row.abs() > INVARIANT_TOL * scale {
                return Err(Error::ModelValidation(format!("row {i} sums to {row:e}")));
            }
            for j in 0..m {
                if i == j {
                    continue;
                }
                if self.l[(i, j)] < 0.0 {
                    return Err(Error::ModelValidation(format!("negative rate at ({i},{j})")));
                }
                let a = self.pi[i] * self.l[(i, j)];
                let b = self.pi[j] * self.l[(j, i)];
                if (a - b).abs() > INVARIANT_TOL * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::ModelValidation(format!(
                        "detailed balance fails at ({i},{j}): {a:e} vs {b:e}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// `max_i |L_ii|`, the largest jump rate.
    pub fn max_rate(&self) -> f64 {
        (0..self.dim()).map(|i| -self.l[(i, i)]).fold(0.0, f64::max)
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// `<f, h>_pi`.
pub fn pi_inner(pi: &[f64], f: &[f64], h: &[f64]) -> f64 {
    pi.iter().zip(f).zip(h).map(|((p, a), b)| p * a * b).sum()
}

pub fn pi_variance(pi: &[f64], f: &[f64]) -> f64 {
    let mean: f64 = pi.iter().zip(f).map(|(p, v)| p * v).sum();
    pi.iter().zip(f).map(|(p, v)| p * (v - mean).powi(2)).sum()
}

/// `(L f)` as a vector.
pub fn apply(l: &GeneratorMatrix, f: &[f64]) -> Result<Vec<f64>> {
    check_dim(l.dim(), f.len())?;
    Ok((&l.l * DVector::from_column_slice(f)).iter().copied().collect())
}

/// Dirichlet form `<f, -L f>_pi`.
pub fn dirichlet_form(l: &GeneratorMatrix, f: &[f64]) -> Result<f64> {
    let lf = apply(l, f)?;
    Ok(-pi_inner(&l.pi, f, &lf))
}

/// Dirichlet form as `1/2 sum_ij pi_i L_ij (f_j - f_i)^2`.
pub fn dirichlet_form_pairwise(l: &GeneratorMatrix, f: &[f64]) -> Result<f64> {
    check_dim(l.dim(), f.len())?;
    let m = l.dim();
    let mut total = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                total += l.pi[i] * l.l[(i, j)] * (f[j] - f[i]).powi(2);
            }
        }
    }
    Ok(0.5 * total)
}

/// `E(L, f) / Var_pi(f)`; infinite for constant `f`.
pub fn rayleigh_quotient(l: &GeneratorMatrix, f: &[f64]) -> Result<f64> {
    let var = pi_variance(&l.pi, f);
    let e = dirichlet_form(l, f)?;
    Ok(if var > 0.0 { e / var } else { f64::INFINITY })
}

/// Eigen-decomposition of `D^{1/2} K D^{-1/2}` for a `pi`-reversible `K`.
fn symmetrised_eigen(k: &DMatrix<f64>, pi: &[f64]) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let m = pi.len();
    let sq: Vec<f64> = pi.iter().map(|p| p.sqrt()).collect();
    let mut s = DMatrix::from_fn(m, m, |i, j| sq[i] * k[(i, j)] / sq[j]);
    s = (&s + s.transpose()) * 0.5;
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenFailure("non-finite entries in symmetrised matrix".into()));
    }
    let eig = SymmetricEigen::try_new(s, f64::EPSILON, 0)
        .ok_or_else(|| Error::EigenFailure("symmetric eigensolver did not converge".into()))?;
    Ok(eig)
}

fn gap_of(k: &DMatrix<f64>, pi: &[f64]) -> Result<GapReport> {
    let m = pi.len();
    if m < 2 {
        return Err(Error::Empty("spectral gap needs at least two states".into()));
    }
    let eig = symmetrised_eigen(k, pi)?;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let spectrum: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let v = eig.eigenvectors.column(order[1]);
    let argmin = (0..m).map(|i| v[i] / pi[i].sqrt()).collect();
    Ok(GapReport { gap: spectrum[1].max(0.0), spectrum, argmin })
}

/// Second-smallest eigenvalue of `-L` in `L^2(pi)`.
pub fn spectral_gap(l: &GeneratorMatrix) -> Result<GapReport> {
    gap_of(&(-&l.l), &l.pi)
}

/// Dirichlet-form gap of `P`: second-smallest eigenvalue of `I - P`.
pub fn mh_gap(p: &MhKernel) -> Result<GapReport> {
    let m = p.pi.len();
    gap_of(&(DMatrix::identity(m, m) - &p.p), &p.pi)
}

/// `Gap(L) >= Gap(P) >= Gap(L) / lambda_bar` for bounded non-decreasing `g`.
pub fn gap_sandwich_check(oracle: &RatioOracle, g: &Balancing) -> Result<CertReport> {
    let lambda_bar = g.trusted_sup()?;
    if !g.is_nondecreasing() {
        return Err(Error::PremiseViolated(format!("`{}` is not non-decreasing", g.name())));
    }
    let gap_l = spectral_gap(&build_generator(oracle, g)?)?.gap;
    let gap_p = mh_gap(&build_mh_kernel(oracle)?)?.gap;
    let upper = gap_l >= gap_p - CERT_TOL;
    let lower = gap_p >= gap_l / lambda_bar - CERT_TOL;
    let detail = match (upper, lower) {
        (true, true) => "sandwich holds".to_string(),
        (false, _) => "Gap(L) < Gap(P)".to_string(),
        (_, false) => "Gap(P) < Gap(L)/lambda_bar".to_string(),
    };
    Ok(CertReport::new(
        "gap_sandwich",
        upper && lower,
        vec![("gap_L", gap_l), ("gap_P", gap_p), ("lambda_bar", lambda_bar)],
        detail,
    ))
}

/// All realised ratios `t(i,j)` with `gamma(i,j) > 0`, `i != j`.
pub fn realised_ratios(oracle: &RatioOracle) -> Result<Vec<f64>> {
    let (_, m) = finite_parts(oracle)?;
    let mut out = Vec::new();
    for i in 0..m {
        for j in 0..m {
            if i != j && oracle.kernel().entry(i, j) > 0.0 {
                out.push(oracle.log_ratio(&crate::State::Finite(i), &crate::State::Finite(j))?.exp());
            }
        }
    }
    Ok(out)
}

/// `gamma_{L1} >= omega gamma_{L2}` given `g1 >= omega g2` on every realised ratio.
pub fn comparison_check(oracle: &RatioOracle, g1: &Balancing, g2: &Balancing, omega: f64) -> Result<CertReport> {
    for t in realised_ratios(oracle)? {
        let (a, b) = (g1.eval(t), omega * g2.eval(t));
        if a < b * (1.0 - 1e-12) {
            return Err(Error::PremiseViolated(format!(
                "{}({t:e}) = {a:e} < {omega} * {}({t:e}) = {b:e}",
                g1.name(),
                g2.name()
            )));
        }
    }
    let gap1 = spectral_gap(&build_generator(oracle, g1)?)?.gap;
    let gap2 = spectral_gap(&build_generator(oracle, g2)?)?.gap;
    let passed = gap1 >= omega * gap2 - CERT_TOL;
    Ok(CertReport::new(
        "comparison",
        passed,
        vec![("gap_1", gap1), ("gap_2", gap2), ("omega", omega)],
        if passed { "gap_1 >= omega gap_2".into() } else { "gap_1 < omega gap_2".into() },
    ))
}

/// `chi^2(mu || pi) = sum (mu_i/pi_i - 1)^2 pi_i`.
pub fn chi_square(mu: &[f64], pi: &[f64]) -> Result<f64> {
    check_dim(pi.len(), mu.len())?;
    let mut total = 0.0;
    for (i, (&m, &p)) in mu.iter().zip(pi).enumerate() {
        if p <= 0.0 {
            if m > 0.0 {
                return Err(Error::SupportMismatch(format!("mu puts mass on state {i} where pi vanishes")));
            }
            continue;
        }
        total += (m / p - 1.0).powi(2) * p;
    }
    Ok(total)
}

/// Semigroup of a reversible generator, `e^{tL}`, via the symmetrised
/// eigen-decomposition.
pub struct Semigroup {
    sq: Vec<f64>,
    eig: SymmetricEigen<f64, nalgebra::Dyn>,
}

impl Semigroup {
    pub fn new(l: &GeneratorMatrix) -> Result<Self> {
        let eig = symmetrised_eigen(&(-&l.l), &l.pi)?;
        Ok(Self { sq: l.pi.iter().map(|p| p.sqrt()).collect(), eig })
    }

    /// `mu e^{tL}` for a row vector `mu`.
    pub fn evolve(&self, mu: &[f64], t: f64) -> Vec<f64> {
        let m = self.sq.len();
        // mu e^{tL} = (D^{-1/2} mu)^T V e^{-t Lambda} V^T D^{1/2}.
        let w = DVector::from_fn(m, |i, _| mu[i] / self.sq[i]);
        let v = &self.eig.eigenvectors;
        let mut c = v.transpose() * w;
        for (k, ck) in c.iter_mut().enumerate() {
            *ck *= (-t * self.eig.eigenvalues[k]).exp();
        }
        let out = v * c;
        (0..m).map(|i| out[i] * self.sq[i]).collect()
    }
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Checks `||mu_0 e^{tL} - pi||_TV <= 1/2 chi^2(mu_0||pi)^{1/2} e^{-gamma_L t}`
/// at each time.
pub fn tv_decay_check(l: &GeneratorMatrix, mu0: &[f64], times: &[f64]) -> Result<CertReport> {
    let chi2 = chi_square(mu0, &l.pi)?;
    let gap = spectral_gap(l)?.gap;
    let semigroup = Semigroup::new(l)?;
    let mut worst = f64::NEG_INFINITY;
    let mut worst_t = 0.0;
    for &t in times {
        let tv = total_variation(&semigroup.evolve(mu0, t), &l.pi);
        let bound = 0.5 * chi2.sqrt() * (-gap * t).exp();
        if tv - bound > worst {
            worst = tv - bound;
            worst_t = t;
        }
    }
    let passed = times.is_empty() || worst <= CERT_TOL;
    Ok(CertReport::new(
        "tv_decay",
        passed,
        vec![("chi2", chi2), ("gap", gap), ("worst_excess", worst), ("worst_t", worst_t)],
        format!("largest tv - bound over {} times", times.len()),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BaseKernel, FiniteTarget, Target};

    fn two_state() -> RatioOracle {
        RatioOracle::finite(vec![0.5, 0.5], vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
    }

    fn three_state() -> RatioOracle {
        let half = vec![vec![0.0, 0.5, 0.5], vec![0.5, 0.0, 0.5], vec![0.5, 0.5, 0.0]];
        RatioOracle::finite(vec![0.2, 0.3, 0.5], half).unwrap()
    }

    #[test]
    fn two_state_generator_and_gap() {
        for g in crate::balancing::builtin_catalog() {
            let l = build_generator(&two_state(), &g).unwrap();
            assert_eq!(l.l, DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]));
            assert!((spectral_gap(&l).unwrap().gap - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn three_state_min_elementwise() {
        let pi = [0.2f64, 0.3, 0.5];
        let l = build_generator(&three_state(), &Balancing::min()).unwrap();
        for i in 0..3 {
            let mut row = 0.0;
            for j in 0..3 {
                if i != j {
                    let oracle = 0.5 * (pi[j] / pi[i]).min(1.0);
                    assert!((l.l[(i, j)] - oracle).abs() < 1e-15);
                    row += oracle;
                }
            }
            assert!((l.l[(i, i)] + row).abs() < 1e-15);
        }
    }

    #[test]
    fn dirichlet_two_state_by_hand() {
        let l = build_generator(&two_state(), &Balancing::barker()).unwrap();
        assert!((dirichlet_form(&l, &[0.0, 1.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!((dirichlet_form_pairwise(&l, &[0.0, 1.0]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(dirichlet_form(&l, &[3.0, 3.0]).unwrap(), 0.0);
        assert!(matches!(dirichlet_form(&l, &[1.0]), Err(Error::DimensionMismatch { expected: 2, got: 1 })));
    }

    #[test]
    fn dirichlet_is_quadratic() {
        let l = build_generator(&three_state(), &Balancing::sqrt()).unwrap();
        let f = [0.3, -1.2, 2.0];
        let f2: Vec<f64> = f.iter().map(|v| 2.0 * v).collect();
        let (a, b) = (dirichlet_form(&l, &f).unwrap(), dirichlet_form(&l, &f2).unwrap());
        assert!((b - 4.0 * a).abs() < 1e-12);
    }

    #[test]
    fn two_state_barker_sandwich_is_tight() {
        let r = gap_sandwich_check(&two_state(), &Balancing::barker()).unwrap();
        assert!(r.passed);
        assert!((r.value("gap_L").unwrap() - 2.0).abs() < 1e-12);
        assert!((r.value("gap_P").unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn min_sandwich_collapses() {
        let r = gap_sandwich_check(&three_state(), &Balancing::min()).unwrap();
        assert!(r.passed);
        assert!((r.value("gap_L").unwrap() - r.value("gap_P").unwrap()).abs() < 1e-9);
    }

    #[test]
    fn sandwich_needs_bounded_g() {
        assert!(matches!(gap_sandwich_check(&three_state(), &Balancing::sqrt()), Err(Error::MissingSupBound(_))));
    }

    #[test]
    fn comparison_premise() {
        let o = three_state();
        assert!(comparison_check(&o, &Balancing::max(), &Balancing::min(), 1.0).unwrap().passed);
        let same = comparison_check(&o, &Balancing::sqrt(), &Balancing::sqrt(), 1.0).unwrap();
        assert!((same.value("gap_1").unwrap() - same.value("gap_2").unwrap()).abs() < 1e-12);
        assert!(matches!(
            comparison_check(&o, &Balancing::min(), &Balancing::max(), 1.0),
            Err(Error::PremiseViolated(_))
        ));
    }

    #[test]
    fn tv_two_state_equality() {
        let l = build_generator(&two_state(), &Balancing::min()).unwrap();
        let sg = Semigroup::new(&l).unwrap();
        for t in [0.0, 0.3, 1.0, 2.5] {
            let tv = total_variation(&sg.evolve(&[1.0, 0.0], t), &l.pi);
            assert!((tv - 0.5 * (-2.0 * t).exp()).abs() < 1e-14);
        }
        let r = tv_decay_check(&l, &[1.0, 0.0], &[0.1, 1.0, 5.0]).unwrap();
        assert!(r.passed);
        assert_eq!(r.value("chi2").unwrap(), 1.0);
        let at_pi = tv_decay_check(&l, &l.pi.clone(), &[0.5]).unwrap();
        assert!(at_pi.passed);
    }

    #[test]
    fn chi_square_support() {
        assert!(matches!(chi_square(&[0.5, 0.5], &[1.0, 0.0]), Err(Error::SupportMismatch(_))));
    }

    #[test]
    fn zero_mass_state_rejected() {
        let o = RatioOracle::new(
            Target::Finite(FiniteTarget::new(vec![1.0, 0.0]).unwrap()),
            BaseKernel::complete(2).unwrap(),
        )
        .unwrap();
        assert!(matches!(build_generator(&o, &Balancing::min()), Err(Error::ModelValidation(_))));
    }

    #[test]
    fn complete_graph_uniform_gap() {
        // Uniform pi, gamma = 1/(m-1) off the diagonal: -L = (m/(m-1)) (I - J/m).
        for m in 2..8 {
            let o = RatioOracle::new(
                Target::Finite(FiniteTarget::uniform(m).unwrap()),
                BaseKernel::complete(m).unwrap(),
            )
            .unwrap();
            let gap = spectral_gap(&build_generator(&o, &Balancing::barker()).unwrap()).unwrap().gap;
            assert!((gap - m as f64 / (m - 1) as f64).abs() < 1e-12);
        }
    }
}
