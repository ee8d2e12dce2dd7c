//! Experiment grid output.

use std::time::Duration;

use spsched::bench::{run_grid, run_grid_rows, ExperimentGrid};

fn small_grid() -> ExperimentGrid {
    ExperimentGrid {
        tasks: vec![4],
        facilities: vec![2],
        scenarios: vec![2],
        instances_per_cell: 1,
        methods: vec!["bcheck-analytic".parse().unwrap()],
        record_times: false,
        ..ExperimentGrid::default()
    }
}

#[test]
fn one_cell_one_method_gives_run_and_average() {
    let rows = run_grid_rows(&small_grid()).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].kind, "run");
    assert_eq!(rows[1].kind, "average");
    assert_eq!(rows[0].status, "optimal");
    assert_eq!(rows[1].status, "1/1 solved");
    assert_eq!(rows[0].objective, rows[1].objective);
    assert_eq!(rows[0].gap, Some(0.0));
    assert!(rows[0].total_time.is_none());
    assert_eq!(rows[0].flag, "");
}

#[test]
fn csv_file_has_header_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bench.csv");
    run_grid(&small_grid(), &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "kind,tasks,facilities,scenarios,method,instance,seed,status,objective,ub,lb,gap,\
         total_time,cp_time,lp_time,cuts,calls,nodes,lp_solves,flag"
    );
    let run = lines.next().unwrap();
    assert!(run.starts_with("run,4,2,2,bcheck-analytic,0,1,optimal,"), "{run}");
    assert!(lines.next().unwrap().starts_with("average,4,2,2,bcheck-analytic,,,1/1 solved,"));
    assert!(lines.next().is_none());
}

#[test]
fn time_limited_runs_are_flagged() {
    let grid = ExperimentGrid {
        tasks: vec![12],
        scenarios: vec![4],
        methods: vec!["ilshaped-int".parse().unwrap()],
        time_limit: Duration::from_millis(1),
        ..small_grid()
    };
    let rows = run_grid_rows(&grid).unwrap();
    assert!(matches!(rows[0].flag.as_str(), "†" | "*"), "{}", rows[0].flag);
    assert_eq!(rows[1].flag, "*");
    assert_eq!(rows[1].status, "0/1 solved");
}
