mod common;

use common::{gram, pair_violation, projected_gradient_dual, random_features};
use digmm::featmap::FeatureVector;
use digmm::ocsvm::{
    default_max_passes, dual_objective, kkt_violation, primal_objective, primal_objective_at,
    solve_dual, solve_dual_observed, OcsvmProblem, DEFAULT_TOL,
};
use proptest::prelude::*;
use rand::Rng;

fn problem(n: usize, nu: f64, seed: u64) -> (OcsvmProblem<f64>, Vec<FeatureVector<f64>>) {
    let fs = random_features(n, 3, seed);
    (OcsvmProblem::from_features(fs.clone(), nu).unwrap(), fs)
}

#[test]
fn oracle_agrees_on_n6() {
    for seed in 0..5 {
        let (p, _) = problem(6, 0.5, seed);
        let (_, oracle_obj, oracle_viol) = projected_gradient_dual(p.gram(), 0.5, 1e-10);
        assert!(oracle_viol < 1e-10);
        let sol = solve_dual(&p, DEFAULT_TOL, default_max_passes(6)).unwrap();
        assert!(sol.converged());
        let dual = dual_objective(&p, &sol.alphas);
        assert!(
            (dual - oracle_obj).abs() < 1e-6,
            "seed {seed}: {dual} vs {oracle_obj}"
        );
    }
}

#[test]
fn oracle_optimum_beats_uniform_start() {
    let (p, _) = problem(5, 0.5, 11);
    let (oracle, _, _) = projected_gradient_dual(p.gram(), 0.5, 1e-10);
    let uniform = vec![0.2; 5];
    let at_oracle = kkt_violation(&p, &oracle).unwrap();
    let at_uniform = kkt_violation(&p, &uniform).unwrap();
    assert!(at_oracle < at_uniform, "{at_oracle} vs {at_uniform}");
    // the library measure and the independent one agree
    let c = 1.0 / (0.5 * 5.0);
    assert!((at_uniform - pair_violation(p.gram(), &uniform, c)).abs() < 1e-14);
}

#[test]
fn dual_never_increases_and_stays_feasible() {
    for seed in 0..10 {
        let n = 20 + seed as usize;
        let nu = 0.15;
        let (p, _) = problem(n, nu, 100 + seed);
        let c = 1.0 / (nu * n as f64);
        let mut prev = f64::INFINITY;
        let mut updates = 0;
        solve_dual_observed(&p, 1e-8, default_max_passes(n), |a| {
            updates += 1;
            let sum: f64 = a.iter().sum();
            assert!((sum - 1.0).abs() < 1e-10, "sum {sum}");
            assert!(a.iter().all(|&x| x >= -1e-12 && x <= c + 1e-12));
            let obj = dual_objective(&p, a);
            assert!(obj <= prev + 1e-12, "dual rose from {prev} to {obj}");
            prev = obj;
        })
        .unwrap();
        assert!(updates > 0);
    }
}

#[test]
fn duality_gap_and_margin_condition() {
    for seed in 0..10 {
        let n = 30;
        let nu = 0.2;
        let (p, fs) = problem(n, nu, 200 + seed);
        let sol = solve_dual(&p, DEFAULT_TOL, default_max_passes(n)).unwrap();
        assert!(sol.converged());
        assert!(sol.kkt_violation < DEFAULT_TOL);
        let primal = primal_objective(&sol, &fs, nu).unwrap();
        let dual = dual_objective(&p, &sol.alphas);
        let gap = primal + dual;
        assert!(
            gap.abs() <= 10.0 * DEFAULT_TOL * (1.0 + primal.abs()),
            "gap {gap}"
        );
        for &i in &sol.margin_idx {
            let f = sol.decision(&fs[i]);
            assert!(f.abs() <= 1e-6 * sol.rho.abs().max(1.0), "margin {i}: {f}");
        }
    }
}

#[test]
fn n1_duality_gap() {
    let fs = vec![FeatureVector::new(vec![0.3, 0.05])];
    let p = OcsvmProblem::from_features(fs.clone(), 1.0).unwrap();
    let sol = solve_dual(&p, DEFAULT_TOL, default_max_passes(1)).unwrap();
    let primal = primal_objective(&sol, &fs, 1.0).unwrap();
    assert!((primal + dual_objective(&p, &sol.alphas)).abs() <= 1e-6);
}

#[test]
fn random_probes_never_beat_the_solution() {
    let mut r = common::rng(5);
    for seed in 0..5 {
        let nu = 0.5;
        let (p, fs) = problem(6, nu, 300 + seed);
        let sol = solve_dual(&p, 1e-10, default_max_passes(6)).unwrap();
        let best = primal_objective(&sol, &fs, nu).unwrap();
        for _ in 0..100 {
            let w: Vec<f64> = sol
                .weight_vector
                .iter()
                .map(|&v| v + r.random_range(-0.5..0.5) * v.abs().max(0.1))
                .collect();
            let rho = sol.rho + r.random_range(-0.5..0.5) * sol.rho.abs().max(0.1);
            let probe = primal_objective_at(&w, rho, &fs, nu).unwrap();
            assert!(best <= probe + 1e-6, "probe {probe} beat {best}");
        }
    }
}

#[test]
fn solver_is_deterministic() {
    let (p, _) = problem(25, 0.3, 9);
    let a = solve_dual(&p, DEFAULT_TOL, default_max_passes(25)).unwrap();
    let b = solve_dual(&p, DEFAULT_TOL, default_max_passes(25)).unwrap();
    assert_eq!(a, b);
    assert!(a
        .alphas
        .iter()
        .zip(&b.alphas)
        .all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn budget_exhaustion_is_flagged_not_fatal() {
    let (p, _) = problem(40, 0.1, 3);
    let sol = solve_dual(&p, 1e-14, 2).unwrap();
    assert!(!sol.converged());
    assert_eq!(sol.iterations, 2);
    let sum: f64 = sol.alphas.iter().sum();
    assert!((sum - 1.0).abs() < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solution_is_feasible(seed in 0u64..10_000, n in 2usize..25, nu_pct in 10u32..100) {
        let nu = nu_pct as f64 / 100.0;
        prop_assume!(nu * n as f64 >= 1.0);
        let (p, _) = problem(n, nu, seed);
        let sol = solve_dual(&p, DEFAULT_TOL, default_max_passes(n)).unwrap();
        let c = 1.0 / (nu * n as f64);
        let sum: f64 = sol.alphas.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-10);
        prop_assert!(sol.alphas.iter().all(|&a| a >= -1e-12 && a <= c + 1e-12));
        prop_assert!(sol.converged());
        prop_assert!(kkt_violation(&p, &sol.alphas).unwrap() < DEFAULT_TOL);
    }

    #[test]
    fn gram_from_features_matches_naive(seed in 0u64..10_000, n in 1usize..12) {
        let fs = random_features(n, 4, seed);
        let lib = digmm::featmap::gram_matrix(&fs).unwrap();
        let naive = gram(&fs);
        for i in 0..n {
            for k in 0..n {
                prop_assert!((lib[(i, k)] - naive[(i, k)]).abs() < 1e-14);
            }
        }
    }
}
