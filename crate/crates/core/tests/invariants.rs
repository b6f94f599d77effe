use lbjump::balancing::{builtin_catalog, check_balancing, standard_grid};
use lbjump::instances::seeded_instance;
use lbjump::nonrev::{build_skew_kernel, certify_self_adjointness, certify_skew_balance, FlipRule, LiftedChain};
use lbjump::simulate::{run_exact, run_replicas, time_average, Horizon, RunOptions};
use lbjump::spectral::{
    build_generator, dirichlet_form, dirichlet_form_pairwise, gap_sandwich_check, pi_variance, rayleigh_quotient,
    spectral_gap, tv_decay_check,
};
use lbjump::{Balancing, SeededStream, State};
use proptest::prelude::*;

fn any_g() -> impl Strategy<Value = Balancing> {
    (0..5usize).prop_map(|i| builtin_catalog().swap_remove(i))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mixtures_stay_balancing(i in 0..5usize, j in 0..5usize, w in 0.01f64..0.99) {
        let cat = builtin_catalog();
        let grid = standard_grid();
        let c = Balancing::convex_mix(&cat[i], &cat[j], w).unwrap();
        let gm = Balancing::geometric_mix(&cat[i], &cat[j], w).unwrap();
        prop_assert!(check_balancing(&c, &grid).unwrap().is_pass());
        prop_assert!(check_balancing(&gm, &grid).unwrap().is_pass());
    }

    #[test]
    fn identity_at_random_points(g in any_g(), log_t in -30.0f64..30.0) {
        let t = log_t.exp();
        let (lhs, rhs) = (g.eval(t), t * g.eval(1.0 / t));
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.max(1.0));
    }

    #[test]
    fn generator_reversible_and_bounded(g in any_g(), m in 2usize..12, seed in 0u64..1000) {
        let o = seeded_instance(m, seed, 0).unwrap();
        let l = build_generator(&o, &g).unwrap();
        for i in 0..m {
            let row: f64 = l.l.row(i).sum();
            prop_assert!(row.abs() <= 1e-12 * l.max_rate().max(1.0));
            for j in 0..m {
                prop_assert!((l.pi[i] * l.l[(i, j)] - l.pi[j] * l.l[(j, i)]).abs() <= 1e-12);
            }
        }
        if let Ok(bar) = g.trusted_sup() {
            let norm = (0..m).map(|i| l.l.row(i).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
            prop_assert!(norm <= 2.0 * bar + 1e-12);
        }
    }

    #[test]
    fn rayleigh_never_below_gap(g in any_g(), m in 2usize..10, seed in 0u64..1000) {
        let o = seeded_instance(m, seed, 1).unwrap();
        let l = build_generator(&o, &g).unwrap();
        let gap = spectral_gap(&l).unwrap().gap;
        let mut rng = SeededStream::new(seed, 7);
        for _ in 0..50 {
            let f: Vec<f64> = (0..m).map(|_| rng.standard_normal()).collect();
            if pi_variance(&l.pi, &f) < 1e-12 {
                continue;
            }
            let q = rayleigh_quotient(&l, &f).unwrap();
            prop_assert!(q >= gap - 1e-9 * gap.max(1.0));
            let (a, b) = (dirichlet_form(&l, &f).unwrap(), dirichlet_form_pairwise(&l, &f).unwrap());
            prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
        }
    }

    #[test]
    fn sandwich_and_tv(seed in 0u64..1000, m in 2usize..15) {
        let o = seeded_instance(m, seed, 2).unwrap();
        for g in [Balancing::min(), Balancing::barker()] {
            prop_assert!(gap_sandwich_check(&o, &g).unwrap().passed);
            let l = build_generator(&o, &g).unwrap();
            let mut mu0 = vec![0.0; m];
            mu0[seed as usize % m] = 1.0;
            prop_assert!(tv_decay_check(&l, &mu0, &[0.1, 0.5, 1.0, 3.0]).unwrap().passed);
        }
    }

    #[test]
    fn random_lifts_certify(seed in 0u64..1000, m in 3usize..7, flip in 0.0f64..0.5) {
        let mut rng = SeededStream::new(seed, 3);
        let chain = LiftedChain::random(m, flip, &mut rng).unwrap();
        for g in [Balancing::min(), Balancing::barker(), Balancing::sqrt(), Balancing::max()] {
            let k = build_skew_kernel(&chain, &g, FlipRule::Complement).unwrap();
            prop_assert!(certify_skew_balance(&k, &chain).passed);
            prop_assert!(certify_self_adjointness(&k, &chain, 5, &mut rng).passed);
        }
    }
}

#[test]
fn replicas_reproduce_and_average() {
    let o = seeded_instance(6, 11, 0).unwrap();
    let g = Balancing::barker();
    let run = || {
        run_replicas(4, 21, |_, rng| {
            let t = run_exact(&o, &g, &State::Finite(0), Horizon::Events(200_000), rng, RunOptions::default())?;
            Ok(time_average(&t, |s| s.as_finite().unwrap() as f64))
        })
        .unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    let truth = o.finite_target().unwrap().expectation(|i| i as f64);
    let mean = a.iter().sum::<f64>() / 4.0;
    assert!((mean - truth).abs() < 0.05, "{mean} vs {truth}");
}
