mod common;

use common::{random_local_data, simplex_sample, vertex_enumeration_min};
use peakdual::linprog::LpProblem;
use peakdual::subproblem::{build_local, dual_value, eval_eta_i, solve_centralized, solve_local, LocalProblemData};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instance(seed: u64) -> (LocalProblemData, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = rng.gen_range(1..=5);
    let rows = rng.gen_range(0..=6);
    let data = random_local_data(&mut rng, s, rows);
    let dl = (0..s).map(|_| rng.gen_range(-1.0..1.0)).collect();
    (data, dl)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn saddle_point_identity(seed in any::<u64>()) {
        let (data, dl) = instance(seed);
        let pair = solve_local(&data, &dl).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for _ in 0..100 {
            let mu = simplex_sample(&mut rng, data.slots());
            prop_assert!(dual_value(&data, &dl, &mu).unwrap() <= pair.rho + 1e-7);
        }
        prop_assert!(pair.mu.iter().all(|&m| m >= 0.0));
        prop_assert!((pair.mu.iter().sum::<f64>() - 1.0).abs() <= 1e-7);
        let at_mu = dual_value(&data, &dl, &pair.mu).unwrap();
        prop_assert!((at_mu - pair.rho).abs() <= 1e-7, "{} vs {}", at_mu, pair.rho);
        prop_assert_eq!(eval_eta_i(&data, &dl).unwrap(), pair.rho);
    }

    #[test]
    fn complementary_slackness(seed in any::<u64>()) {
        let (data, dl) = instance(seed);
        let pair = solve_local(&data, &dl).unwrap();
        prop_assert!(data.contains(&pair.x, 1e-8));
        for s in 0..data.slots() {
            let lhs = data.cost_coeffs()[s] * pair.x[s] + dl[s];
            prop_assert!(lhs <= pair.rho + 1e-9);
            if pair.mu[s] > 1e-9 {
                prop_assert!((lhs - pair.rho).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn translation_shifts_rho(seed in any::<u64>(), delta in -2.0f64..2.0) {
        let (data, dl) = instance(seed);
        let base = solve_local(&data, &dl).unwrap();
        let shifted_dl: Vec<f64> = dl.iter().map(|v| v + delta).collect();
        let shifted = solve_local(&data, &shifted_dl).unwrap();
        prop_assert!((shifted.rho - base.rho - delta).abs() <= 1e-9);
        // The unshifted minimizer is still optimal after the shift.
        let peak = (0..data.slots())
            .map(|s| data.cost_coeffs()[s] * base.x[s] + shifted_dl[s])
            .fold(f64::NEG_INFINITY, f64::max);
        prop_assert!((peak - shifted.rho).abs() <= 1e-9);
    }

    #[test]
    fn centralized_below_sum_of_local_peaks(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = rng.gen_range(1..=4);
        let n = rng.gen_range(1..=4);
        let agents: Vec<_> = (0..n).map(|_| {
            let rows = rng.gen_range(0..=4);
            random_local_data(&mut rng, s, rows)
        }).collect();
        let central = solve_centralized(&agents).unwrap();
        let local_sum: f64 = agents.iter().map(|d| solve_local(d, &vec![0.0; s]).unwrap().rho).sum();
        prop_assert!(central.p_star <= local_sum + 1e-9);
        for (d, x) in agents.iter().zip(&central.x_star) {
            prop_assert!(d.contains(x, 1e-8));
        }
        let peak = central.aggregate(&agents).into_iter().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!((peak - central.p_star).abs() <= 1e-9);
    }
}

/// Independent check of the two-agent triangle instance: the joint LP built
/// by hand, with `P` boxed so vertex enumeration applies.
#[test]
fn two_triangles_by_vertex_enumeration() {
    let mut lp = LpProblem::new(vec![0.0, 0.0, 0.0, 0.0, 1.0])
        .with_bounds(vec![0.0, 0.0, 0.0, 0.0, -10.0], vec![1.0, 1.0, 1.0, 1.0, 10.0]);
    lp.add_row(vec![1.0, 0.0, 1.0, 0.0, -1.0], 0.0);
    lp.add_row(vec![0.0, 1.0, 0.0, 1.0, -1.0], 0.0);
    lp.add_row(vec![-1.0, -1.0, 0.0, 0.0, 0.0], -1.0);
    lp.add_row(vec![0.0, 0.0, -1.0, -1.0, 0.0], -1.0);
    let oracle = vertex_enumeration_min(&lp).unwrap();
    assert!((oracle - 1.0).abs() < 1e-12);

    let tri = LocalProblemData::in_unit_box(2, vec![vec![-1.0, -1.0]], vec![-1.0]).unwrap();
    let central = solve_centralized(&[tri.clone(), tri.clone()]).unwrap();
    assert!((central.p_star - oracle).abs() < 1e-9);

    // Local subproblem of the triangle against the same kind of oracle.
    let mut local = build_local(&tri, &[0.3, 0.0]).unwrap();
    local.var_lower[2] = -10.0;
    local.var_upper[2] = 10.0;
    assert!((vertex_enumeration_min(&local).unwrap() - 0.65).abs() < 1e-12);
}
