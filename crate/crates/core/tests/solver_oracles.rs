mod common;

use milp_decomp::milp::{
    self, best_response, best_response_with, exhaustive_oracle, solve_milp, MilpOptions,
    MilpStatus, PointTable,
};
use milp_decomp::simplex::{solve_lp, LpStatus};
use milp_decomp::synth::{random_block, random_instance, random_lp, RandomFamily};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn lp_matches_vertex_enumeration() {
    for seed in 0..200 {
        let lp = random_lp(seed, 4, 4);
        let res = solve_lp(&lp).unwrap();
        let want = common::vertex_min(
            &lp.objective,
            &lp.constraints,
            &lp.rhs,
            &lp.lower,
            &lp.upper,
        );
        match want {
            None => assert_eq!(res.status, LpStatus::Infeasible, "seed {seed}"),
            Some(v) => {
                assert_eq!(res.status, LpStatus::Optimal, "seed {seed}");
                assert!(
                    (res.value - v).abs() <= 1e-7,
                    "seed {seed}: {} vs {v}",
                    res.value
                );
            }
        }
    }
}

#[test]
fn milp_matches_both_oracles() {
    let opts = MilpOptions::default();
    for seed in 0..500 {
        let (block, obj) = random_block(seed, 5, 4);
        let bb = solve_milp(&block, &obj, &opts).unwrap();
        let ex = exhaustive_oracle(&block, &obj, &opts).unwrap();
        let brute = common::brute_milp(&block, &obj);
        assert_eq!(bb.status, ex.status, "seed {seed}");
        match brute {
            None => assert_eq!(bb.status, MilpStatus::Infeasible, "seed {seed}"),
            Some(v) => {
                assert!(
                    (bb.value - v).abs() <= 1e-7,
                    "seed {seed}: {} vs {v}",
                    bb.value
                );
                assert!((ex.value - v).abs() <= 1e-7, "seed {seed}");
            }
        }
    }
}

#[test]
fn milp_points_are_feasible_and_integral() {
    let opts = MilpOptions::default();
    for seed in 0..200 {
        let (block, obj) = random_block(seed, 5, 4);
        let res = solve_milp(&block, &obj, &opts).unwrap();
        if !res.is_optimal() {
            continue;
        }
        for (j, &v) in res.x.iter().enumerate() {
            if block.integer[j] {
                assert_eq!(v, v.round());
            }
            assert!(v >= block.lower[j] - 1e-9 && v <= block.upper[j] + 1e-9);
        }
        let gx = block.constraints.mul_vec(&res.x);
        assert!(gx.iter().zip(&block.rhs).all(|(a, b)| *a <= b + 1e-7));
    }
}

#[test]
fn best_response_minimizes_the_lagrangian() {
    let opts = MilpOptions::default();
    let fam = RandomFamily::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for seed in 0..40 {
        let inst = random_instance(seed, &fam);
        for agent in inst.agents() {
            let lambda: Vec<f64> = (0..inst.p()).map(|_| rng.gen_range(0.0..4.0)).collect();
            let br = best_response(agent, &lambda, &opts).unwrap();
            let reduced: Vec<f64> = agent
                .cost()
                .iter()
                .zip(agent.coupling().tr_mul_vec(&lambda))
                .map(|(c, a)| c + a)
                .collect();
            let want = common::brute_milp(agent, &reduced).expect("nonempty local set");
            assert!((br.lagrangian_value - want).abs() <= 1e-7, "seed {seed}");
            assert_eq!(br.image, agent.image(&br.x));
            assert_eq!(br.cost, agent.cost_of(&br.x));
            if let Some(table) = PointTable::build(agent, 1 << 12, &opts) {
                let fast = best_response_with(agent, &lambda, &opts, Some(&table)).unwrap();
                assert_eq!(fast.x, br.x, "table path differs, seed {seed}");
            }
        }
    }
}

#[test]
fn monolithic_oracle_matches_brute_force() {
    let opts = MilpOptions::default();
    let fam = RandomFamily {
        m_max: 4,
        p_max: 2,
        max_binaries: 3,
        ..Default::default()
    };
    for seed in 0..40 {
        let inst = random_instance(seed, &fam);
        let block = milp::stacked_block(&inst, inst.b());
        let cost = milp::stacked_cost(&inst);
        let want = common::brute_milp(&block, &cost);
        let got = milp::solve_monolithic(&inst, &opts).unwrap();
        let fast = milp::solve_monolithic_enumerated(&inst, 1 << 12, &opts).unwrap();
        match want {
            None => {
                assert!(!got.is_optimal());
                assert!(!fast.is_optimal());
            }
            Some(v) => {
                assert!((got.value - v).abs() <= 1e-7, "seed {seed}");
                assert!((fast.value - v).abs() <= 1e-7, "seed {seed}");
            }
        }
    }
}
