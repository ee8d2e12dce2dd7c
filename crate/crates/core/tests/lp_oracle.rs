mod common;

use common::oracles::{lp_vertex_oracle, random_lp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spsched::lp::{check_optimality, farkas_proves_infeasible, solve, LpRow, LpStatus, RowSense, Simplex};

#[test]
fn random_lps_match_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut infeasible = 0;
    for k in 0..100 {
        let lp = random_lp(&mut rng, 5, 8);
        let sol = solve(&lp);
        match lp_vertex_oracle(&lp) {
            Some(best) => {
                assert_eq!(sol.status, LpStatus::Optimal, "lp {k}");
                assert!((sol.objective - best).abs() <= 1e-6 * (1.0 + best.abs()), "lp {k}: {} vs {best}", sol.objective);
                check_optimality(&lp, &sol, 1e-6).unwrap_or_else(|e| panic!("lp {k}: {e}"));
            }
            None => {
                infeasible += 1;
                assert_eq!(sol.status, LpStatus::Infeasible, "lp {k}");
                assert!(farkas_proves_infeasible(&lp, sol.farkas.as_ref().unwrap()), "lp {k}");
            }
        }
    }
    assert!(infeasible < 100, "{infeasible}");
}

/// Branch-and-bound style edits on one engine: boxed columns get tightened
/// and rows get appended, and every warm re-solve must match a cold solve.
#[test]
fn warm_resolves_match_cold_solves() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 0..60 {
        let mut lp = random_lp(&mut rng, 6, 10);
        for j in 0..lp.num_cols() {
            lp.upper[j] = rng.gen_range(1..=6) as f64;
        }
        let mut engine = Simplex::new(&lp).unwrap();
        for edit in 0..25 {
            let warm = engine.solve(None);
            let cold = solve(&lp);
            assert_eq!(warm.status, cold.status, "lp {k} edit {edit}");
            match cold.status {
                LpStatus::Optimal => {
                    assert!(
                        (warm.objective - cold.objective).abs() <= 1e-6 * (1.0 + cold.objective.abs()),
                        "lp {k} edit {edit}: {} vs {}",
                        warm.objective,
                        cold.objective
                    );
                    check_optimality(&lp, &warm, 1e-6).unwrap_or_else(|e| panic!("lp {k} edit {edit}: {e}"));
                }
                LpStatus::Infeasible => {
                    assert!(farkas_proves_infeasible(&lp, warm.farkas.as_ref().unwrap()), "lp {k} edit {edit}");
                    break;
                }
                other => panic!("lp {k} edit {edit}: {other:?}"),
            }
            if rng.gen_bool(0.6) {
                let j = rng.gen_range(0..lp.num_cols());
                let (lo, hi) = (lp.lower[j], lp.upper[j]);
                let cut = (warm.x[j].floor()).clamp(lo, hi);
                let (lo, hi) = if rng.gen_bool(0.5) { (lo, cut) } else { ((cut + 1.0).min(hi), hi) };
                lp.lower[j] = lo;
                lp.upper[j] = hi;
                engine.set_col_bounds(j, lo, hi);
            } else {
                let coeffs: Vec<(usize, f64)> = (0..lp.num_cols())
                    .filter_map(|j| rng.gen_bool(0.5).then(|| (j, rng.gen_range(1..=5) as f64)))
                    .collect();
                let activity: f64 = coeffs.iter().map(|&(j, a)| a * warm.x[j]).sum();
                let row = LpRow::new(coeffs, RowSense::Le, (activity * 0.8).floor());
                engine.add_row(&row);
                lp.rows.push(row);
            }
        }
    }
}
