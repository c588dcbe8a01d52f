//! Independent re-derivations checked against the library.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use mico_core::kantorovich::{kantorovich, kantorovich_value};
use mico_core::linalg::Matrix;
use mico_core::mdp::{
    build_garnet, couple, lift_mdp, optimal_values, pair_index, policy_evaluation, FiniteMdp, Policy,
};
use mico_core::metrics::{
    bisim_operator_step, bisimulation_metric, lk_distance, mico_metric, pi_bisim_operator_step, pi_bisimulation_metric,
    DiagonalMode, DistanceTable, FixedPointConfig,
};

fn lp_transport(mu: &[f64], nu: &[f64], cost: &Matrix) -> f64 {
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<Vec<_>> = (0..mu.len())
        .map(|i| {
            (0..nu.len())
                .map(|j| lp.add_var(cost[(i, j)], (0.0, f64::INFINITY)))
                .collect()
        })
        .collect();
    for (i, &m) in mu.iter().enumerate() {
        let row: Vec<_> = vars[i].iter().map(|&v| (v, 1.0)).collect();
        lp.add_constraint(row.as_slice(), ComparisonOp::Eq, m);
    }
    for (j, &m) in nu.iter().enumerate() {
        let col: Vec<_> = vars.iter().map(|r| (r[j], 1.0)).collect();
        lp.add_constraint(col.as_slice(), ComparisonOp::Eq, m);
    }
    lp.solve().expect("transport LP is feasible").objective()
}

fn random_distribution(rng: &mut Xoshiro256PlusPlus, n: usize, sparse: bool) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n)
        .map(|_| {
            if sparse && rng.random_bool(0.3) {
                0.0
            } else {
                rng.random::<f64>()
            }
        })
        .collect();
    if w.iter().all(|&v| v == 0.0) {
        w[0] = 1.0;
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

#[test]
fn transport_matches_lp_on_small_instances() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(11);
    for trial in 0..300 {
        let n = rng.random_range(1..=6);
        let k = rng.random_range(1..=6);
        let mu = random_distribution(&mut rng, n, trial % 2 == 0);
        let nu = random_distribution(&mut rng, k, trial % 3 == 0);
        let cost = Matrix::from_fn(n, k, |_, _| {
            if rng.random_bool(0.1) {
                0.0
            } else {
                rng.random::<f64>() * 3.0
            }
        });
        let got = kantorovich_value(&mu, &nu, &cost).unwrap();
        let want = lp_transport(&mu, &nu, &cost);
        assert!((got - want).abs() < 1e-8, "trial {trial}: {got} vs {want}");
    }
}

#[test]
fn transport_handles_integer_costs_with_ties() {
    // Integer costs produce many tied reduced costs and degenerate pivots.
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(3);
    for _ in 0..200 {
        let n = rng.random_range(2..=6);
        let mu = random_distribution(&mut rng, n, false);
        let nu = vec![1.0 / n as f64; n];
        let cost = Matrix::from_fn(n, n, |_, _| rng.random_range(0..3) as f64);
        let got = kantorovich_value(&mu, &nu, &cost).unwrap();
        assert!((got - lp_transport(&mu, &nu, &cost)).abs() < 1e-8);
    }
}

#[test]
fn transport_plans_have_exact_marginals_at_size_64() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(5);
    for _ in 0..5 {
        let mu = random_distribution(&mut rng, 64, true);
        let nu = random_distribution(&mut rng, 64, true);
        let cost = Matrix::from_fn(64, 64, |_, _| rng.random::<f64>());
        let plan = kantorovich(&mu, &nu, &cost).unwrap();
        for (i, m) in mu.iter().enumerate() {
            assert!((plan.plan.row(i).iter().sum::<f64>() - m).abs() < 1e-9);
        }
        for (j, m) in nu.iter().enumerate() {
            assert!((plan.plan.column(j).iter().sum::<f64>() - m).abs() < 1e-9);
        }
        assert!(plan.plan.min_value() >= -1e-12);
    }
}

/// `T_K d` written out directly, with the LP oracle for every transport.
fn bisim_step_oracle(d: &Matrix, mdp: &FiniteMdp) -> Matrix {
    let n = mdp.n_states();
    Matrix::from_fn(n, n, |x, y| {
        (0..mdp.n_actions())
            .map(|a| {
                (mdp.reward(x, a) - mdp.reward(y, a)).abs()
                    + mdp.gamma() * lp_transport(mdp.transition(x, a), mdp.transition(y, a), d)
            })
            .fold(0.0, f64::max)
    })
}

fn random_metric(n: usize, seed: u64) -> DistanceTable {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.random(), rng.random())).collect();
    let d = Matrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            ((pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2)).sqrt()
        }
    });
    DistanceTable::new(d, DiagonalMode::ZeroDiagonal).unwrap()
}

#[test]
fn bisim_step_matches_lp_reimplementation() {
    for seed in 0..5 {
        let mdp = build_garnet(4, 2, seed).unwrap();
        let d = random_metric(4, seed + 100);
        let got = bisim_operator_step(&d, &mdp).unwrap();
        let want = bisim_step_oracle(d.matrix(), &mdp);
        assert!(got.matrix().max_abs_diff(&want) < 1e-9);
    }
}

#[test]
fn pi_bisim_step_matches_lp_reimplementation() {
    let mdp = build_garnet(5, 3, 7).unwrap();
    let pi = Policy::sample_random(&mdp, 1);
    let dynamics = couple(&mdp, &pi).unwrap();
    let d = random_metric(5, 9);
    let got = pi_bisim_operator_step(&d, &dynamics, mdp.gamma()).unwrap();
    for x in 0..5 {
        for y in 0..5 {
            let want = if x == y {
                0.0
            } else {
                (dynamics.rewards()[x] - dynamics.rewards()[y]).abs()
                    + 0.9 * lp_transport(dynamics.next_states(x), dynamics.next_states(y), d.matrix())
            };
            assert!((got.get(x, y) - want).abs() < 1e-9);
        }
    }
}

#[test]
fn mico_matches_lifted_policy_evaluation() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(21);
    for i in 0..10 {
        let n = rng.random_range(2..=12);
        let a = rng.random_range(1..=4);
        let mdp = build_garnet(n, a, 500 + i).unwrap();
        let pi = Policy::sample_random(&mdp, i);
        let (u, _) = mico_metric(&mdp, &pi, &FixedPointConfig::new(1e-11)).unwrap();
        let lifted = lift_mdp(&mdp, &pi).unwrap();
        let v = policy_evaluation(
            &couple(&lifted, &Policy::uniform(n * n, 1)).unwrap(),
            mdp.gamma(),
            1e-13,
        )
        .unwrap();
        for x in 0..n {
            for y in 0..n {
                assert!((u.get(x, y) - v[pair_index(n, x, y)]).abs() <= 1e-8);
            }
        }
    }
}

#[test]
fn mico_satisfies_the_lk_identity() {
    let mdp = build_garnet(9, 2, 4).unwrap();
    let pi = Policy::sample_random(&mdp, 4);
    let dynamics = couple(&mdp, &pi).unwrap();
    let (u, _) = mico_metric(&mdp, &pi, &FixedPointConfig::new(1e-11)).unwrap();
    let r = dynamics.rewards();
    for x in 0..9 {
        for y in 0..9 {
            let lk = lk_distance(u.matrix(), dynamics.next_states(x), dynamics.next_states(y)).unwrap();
            assert!((u.get(x, y) - ((r[x] - r[y]).abs() + 0.9 * lk)).abs() < 1e-8);
        }
    }
}

#[test]
fn policy_values_solve_the_bellman_equation_by_iteration() {
    // Straight-line iteration oracle for the direct solve.
    let mdp = build_garnet(12, 3, 8).unwrap();
    let dynamics = couple(&mdp, &Policy::sample_random(&mdp, 8)).unwrap();
    let v = policy_evaluation(&dynamics, 0.9, 1e-12).unwrap();
    let mut w = vec![0.0; 12];
    for _ in 0..2000 {
        w = (0..12)
            .map(|x| {
                dynamics.rewards()[x] + 0.9 * dynamics.next_states(x).iter().zip(&w).map(|(p, v)| p * v).sum::<f64>()
            })
            .collect();
    }
    for x in 0..12 {
        assert!((v[x] - w[x]).abs() < 1e-10);
    }
}

#[test]
fn bisimulation_bounds_optimal_values() {
    for seed in 0..5 {
        let mdp = build_garnet(8, 3, 40 + seed).unwrap();
        let v = optimal_values(&mdp, 1e-12).unwrap();
        let (d, report) = bisimulation_metric(&mdp, &FixedPointConfig::new(1e-9)).unwrap();
        assert!(report.converged);
        for x in 0..8 {
            for y in 0..8 {
                assert!(d.get(x, y) >= (v[x] - v[y]).abs() - 1e-8);
            }
        }
    }
}

#[test]
fn pi_bisimulation_bounds_policy_values() {
    let mdp = build_garnet(10, 2, 0).unwrap();
    for s in 0..5 {
        let pi = Policy::sample_random(&mdp, s);
        let v = policy_evaluation(&couple(&mdp, &pi).unwrap(), 0.9, 1e-12).unwrap();
        let (d, _) = pi_bisimulation_metric(&mdp, &pi, &FixedPointConfig::new(1e-9)).unwrap();
        for x in 0..10 {
            for y in 0..10 {
                assert!(d.get(x, y) >= (v[x] - v[y]).abs() - 1e-8);
            }
        }
    }
}
