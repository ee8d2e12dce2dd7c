//! Randomized invariants of the scheduling solver, the instance format and
//! the assignment enumeration.

mod common;

use std::collections::HashSet;

use common::oracles::brute_force_schedule;
use proptest::prelude::*;
use spsched::cumcp::{self, CpOptions, CpStatus, Job, Objective, Schedule};
use spsched::instance::{generate, Assignment, Instance};

fn jobs_strategy() -> impl Strategy<Value = (Vec<Job>, i64)> {
    (1i64..=4).prop_flat_map(|capacity| {
        let job = (0i64..=5, 1i64..=5, 1i64..=capacity, 0i64..=12, prop::option::of(0i64..=6));
        (prop::collection::vec(job, 1..=4), Just(capacity)).prop_map(|(specs, capacity)| {
            let jobs = specs
                .into_iter()
                .enumerate()
                .map(|(id, (r, p, c, due, slack))| {
                    let job = Job::new(id, r, p, c).with_due_date(due);
                    match slack {
                        Some(s) => job.with_deadline(r + p + s),
                        None => job,
                    }
                })
                .collect();
            (jobs, capacity)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn cumcp_matches_brute_force((jobs, capacity) in jobs_strategy()) {
        for objective in [Objective::Makespan, Objective::Tardiness, Objective::Feasibility] {
            let out = cumcp::solve(&jobs, capacity, objective, &CpOptions::default());
            let truth = brute_force_schedule(&jobs, capacity, objective);
            match truth {
                None => prop_assert_eq!(out.status, CpStatus::Infeasible),
                Some(v) => {
                    let schedule = out.schedule.expect("schedule");
                    prop_assert!(cumcp::check_schedule(&jobs, capacity, objective, &schedule).is_ok());
                    prop_assert_eq!(schedule.objective, v);
                }
            }
        }
    }

    #[test]
    fn energy_bound_and_serial_schedule((jobs, capacity) in jobs_strategy()) {
        let free: Vec<Job> = jobs.iter().map(|j| Job { deadline: None, ..*j }).collect();
        let best = brute_force_schedule(&free, capacity, Objective::Makespan).unwrap();
        prop_assert!(cumcp::energy_lower_bound(&free, capacity) <= best);
        let starts = cumcp::serial_schedule(&free, capacity);
        let objective = cumcp::makespan(&free, &starts);
        let schedule = Schedule { starts, objective };
        prop_assert!(cumcp::check_schedule(&free, capacity, Objective::Makespan, &schedule).is_ok());
        prop_assert!(objective >= best);
    }

    #[test]
    fn instance_json_round_trip(m in 1usize..=3, n in 1usize..=6, s in 1usize..=3, seed in 0u64..1000) {
        let inst = generate(m, n, s, seed);
        let back = Instance::from_json_str(&inst.to_json_string()).unwrap();
        prop_assert_eq!(back.to_json_string(), inst.to_json_string());
        let probability: f64 = inst.scenarios.iter().map(|sc| sc.probability).sum();
        prop_assert!((probability - 1.0).abs() < 1e-9);
    }

    #[test]
    fn enumeration_is_complete(m in 1usize..=3, n in 1usize..=5) {
        let all: Vec<Assignment> = Assignment::enumerate(m, n).collect();
        prop_assert_eq!(all.len(), m.pow(n as u32));
        let distinct: HashSet<&Assignment> = all.iter().collect();
        prop_assert_eq!(distinct.len(), all.len());
        for a in &all {
            let covered: usize = (0..m).map(|i| a.tasks_on(i).len()).sum();
            prop_assert_eq!(covered, n);
        }
    }
}

#[test]
fn instance_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("inst.json");
    let inst = generate(2, 5, 3, 11);
    inst.to_file(&path).unwrap();
    let back = Instance::from_file(&path).unwrap();
    assert_eq!(back.to_json_string(), inst.to_json_string());
}
