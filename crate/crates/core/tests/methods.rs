//! Every solution method against full enumeration of the assignments.

use spsched::bench::MethodSpec;
use spsched::drivers::{solve_by_enumeration, CutKind, Dispersion, MasterConfig, ObjectiveMode, SolveStatus};
use spsched::instance::{generate, generate_with, GeneratorConfig, Instance, InstanceVariant};

fn check(inst: &Instance, cfg: &MasterConfig, methods: &[&str], label: &str) {
    let truth = solve_by_enumeration(inst, cfg).unwrap();
    for name in methods {
        let spec: MethodSpec = name.parse().unwrap();
        let r = spec.solve(inst, cfg).unwrap();
        assert_eq!(r.status, truth.status, "{label} {name}");
        if truth.status == SolveStatus::Optimal {
            assert!(
                (r.objective - truth.objective).abs() < 1e-6,
                "{label} {name}: {} vs {}",
                r.objective,
                truth.objective
            );
        }
    }
}

fn variant(n: usize, s: usize, seed: u64, variant: InstanceVariant) -> Instance {
    let mut cfg = GeneratorConfig::new(2, n, s, seed);
    cfg.variant = variant;
    generate_with(cfg)
}

const ALL_MAKESPAN: &[&str] = &[
    "deq",
    "lbbd-nogood",
    "lbbd-strengthened",
    "lbbd-analytic",
    "lbbd-analytic-weak",
    "bcheck-nogood",
    "bcheck-strengthened",
    "bcheck-analytic",
    "bcheck-analytic-weak",
    "ilshaped",
    "ilshaped-cp",
    "ilshaped-int",
];

#[test]
fn makespan_methods_agree() {
    let cfg = MasterConfig::new(ObjectiveMode::Makespan, CutKind::Nogood);
    for seed in 1..=3u64 {
        let inst = generate(2, 3 + seed as usize, 2, seed);
        check(&inst, &cfg, ALL_MAKESPAN, &format!("makespan seed {seed}"));
    }
}

#[test]
fn tardiness_methods_agree() {
    let cfg = MasterConfig::new(ObjectiveMode::Tardiness, CutKind::Nogood);
    for seed in 1..=3u64 {
        let inst = variant(5, 2, seed, InstanceVariant::Tardiness);
        check(
            &inst,
            &cfg,
            &["deq", "lbbd-nogood", "lbbd-analytic", "bcheck-nogood", "bcheck-strengthened", "bcheck-analytic", "ilshaped-cp", "ilshaped-int"],
            &format!("tardiness seed {seed}"),
        );
    }
}

#[test]
fn cost_methods_agree() {
    let cfg = MasterConfig::new(ObjectiveMode::Cost, CutKind::Nogood);
    for seed in 1..=4u64 {
        let inst = variant(5, 2, seed, InstanceVariant::Cost);
        check(
            &inst,
            &cfg,
            &["deq", "lbbd-nogood", "lbbd-strengthened", "bcheck-nogood", "bcheck-strengthened", "bcheck-analytic"],
            &format!("cost seed {seed}"),
        );
    }
}

#[test]
fn dispersion_methods_agree() {
    for lambda in [0.5, 1.0] {
        let cfg = MasterConfig {
            lambda,
            dispersion: Dispersion::Max,
            ..MasterConfig::new(ObjectiveMode::Makespan, CutKind::Nogood)
        };
        for seed in 1..=2u64 {
            let inst = generate(2, 4, 2, seed);
            check(
                &inst,
                &cfg,
                &["deq", "lbbd-nogood", "bcheck-nogood", "bcheck-analytic", "ilshaped-cp"],
                &format!("lambda {lambda} seed {seed}"),
            );
        }
    }
}
