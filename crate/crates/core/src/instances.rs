//! Random finite test instances.

use rand_distr::{Distribution, Exp1};

use crate::error::Result;
use crate::model::RatioOracle;
use crate::rng::SeededStream;

/// Smallest admissible off-diagonal proposal probability.
pub const MIN_PROPOSAL: f64 = 1e-6;

/// Dirichlet(1, ..., 1) draw of length `m`.
pub fn dirichlet_ones(m: usize, rng: &mut SeededStream) -> Vec<f64> {
    let e: Vec<f64> = (0..m).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Proposal matrix with zero diagonal: a random stochastic matrix is
/// symmetrised, its rows renormalised, and draws with an entry below
/// [`MIN_PROPOSAL`] are rejected.
pub fn random_proposal(m: usize, rng: &mut SeededStream) -> Vec<Vec<f64>> {
    assert!(m >= 2, "need at least two states");
    loop {
        let a: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                let w = dirichlet_ones(m - 1, rng);
                let mut row = vec![0.0; m];
                for (k, j) in (0..m).filter(|&j| j != i).enumerate() {
                    row[j] = w[k];
                }
                row
            })
            .collect();
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                let sym: Vec<f64> = (0..m).map(|j| 0.5 * (a[i][j] + a[j][i])).collect();
                let s: f64 = sym.iter().sum();
                sym.into_iter().map(|v| v / s).collect()
            })
            .collect();
        let ok = (0..m).all(|i| (0..m).all(|j| i == j || rows[i][j] >= MIN_PROPOSAL));
        if ok {
            return rows;
        }
    }
}

/// Random reversible instance on `m` states.
pub fn random_instance(m: usize, rng: &mut SeededStream) -> Result<RatioOracle> {
    let pi = dirichlet_ones(m, rng);
    let rows = random_proposal(m, rng);
    RatioOracle::finite(pi, rows)
}

/// Instance `index` of the reproducible family keyed by `seed`.
pub fn seeded_instance(m: usize, seed: u64, index: u64) -> Result<RatioOracle> {
    random_instance(m, &mut SeededStream::new(seed, index))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proposals_are_stochastic_with_empty_diagonal() {
        let mut rng = SeededStream::new(3, 0);
        for m in 2..=12 {
            let rows = random_proposal(m, &mut rng);
            for (i, row) in rows.iter().enumerate() {
                assert_eq!(row[i], 0.0);
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn instances_are_reproducible() {
        let a = seeded_instance(6, 11, 2).unwrap();
        let b = seeded_instance(6, 11, 2).unwrap();
        assert_eq!(a.finite_target().unwrap().probs(), b.finite_target().unwrap().probs());
    }
}
