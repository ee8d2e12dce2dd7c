//! Run statistics, experiment grids and CSV output.
//!
//! A grid run writes one row per (cell, method, instance) and one average
//! row per (cell, method). Runs that hit the time limit are flagged: `†`
//! with an incumbent, `*` without one. Averages of times and counters skip
//! flagged runs; the average row carries one `†` per skipped run, or `*`
//! when every run was skipped. The gap column of an average row is the mean
//! gap over all runs.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Duration;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::drivers::{
    solve_branch_and_check, solve_deterministic_equivalent, solve_integer_lshaped, solve_lbbd, CutKind,
    Dispersion, DriverError, MasterConfig, ObjectiveMode, SolveResult, SolveStatus, SubproblemEngine,
};
use crate::instance::{generate_with, GeneratorConfig, Instance, InstanceVariant};

/// Relative optimality gap `(ub - lb) / ub`; 0 when the bounds meet.
pub fn gap(ub: f64, lb: f64) -> f64 {
    if ub == lb {
        0.0
    } else if ub.is_infinite() {
        f64::INFINITY
    } else {
        (ub - lb) / ub
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunStats {
    /// Seconds.
    pub total_time: f64,
    /// Seconds spent in the cumulative scheduling solver.
    pub cp_time: f64,
    /// Seconds spent in time-indexed LP/MILP subproblem models.
    pub lp_time: f64,
    pub cuts: usize,
    /// Master iterations (LBBD) or lazy callback invocations.
    pub calls: usize,
    pub nodes: usize,
    /// Time-indexed subproblem models solved.
    pub lp_solves: usize,
    pub ub: f64,
    pub lb: f64,
}

impl RunStats {
    pub fn gap(&self) -> f64 {
        gap(self.ub, self.lb)
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("unknown method `{0}`")]
    UnknownMethod(String),
    #[error("unknown cut kind `{0}`")]
    UnknownCuts(String),
    #[error("cannot write {path}: {source}")]
    Output { path: String, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Driver(#[from] DriverError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Time-indexed deterministic equivalent.
    Deq,
    Lbbd,
    BranchAndCheck,
    /// Integer L-shaped, time-indexed MILP subproblems, integer and LP cuts.
    IntegerLShaped,
    /// Integer L-shaped, CP subproblems, integer and LP cuts.
    IntegerLShapedCp,
    /// Integer L-shaped, CP subproblems, integer cuts only.
    IntegerLShapedInt,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Deq,
        Method::Lbbd,
        Method::BranchAndCheck,
        Method::IntegerLShaped,
        Method::IntegerLShapedCp,
        Method::IntegerLShapedInt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Deq => "deq",
            Method::Lbbd => "lbbd",
            Method::BranchAndCheck => "bcheck",
            Method::IntegerLShaped => "ilshaped",
            Method::IntegerLShapedCp => "ilshaped-cp",
            Method::IntegerLShapedInt => "ilshaped-int",
        }
    }

    /// Whether the `--cuts` choice applies.
    pub fn uses_cut_kind(self) -> bool {
        matches!(self, Method::Lbbd | Method::BranchAndCheck)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| BenchError::UnknownMethod(s.to_string()))
    }
}

/// Command-line name of a Benders cut family.
pub fn cut_name(kind: CutKind) -> &'static str {
    match kind {
        CutKind::Nogood => "nogood",
        CutKind::StrengthenedNogood => "strengthened",
        CutKind::AnalyticLinearized => "analytic",
        CutKind::AnalyticWeak => "analytic-weak",
        CutKind::IntegerOnly => "integer",
        CutKind::IntegerPlusLP => "integer-lp",
    }
}

pub fn parse_cuts(s: &str) -> Result<CutKind, BenchError> {
    match s {
        "nogood" => Ok(CutKind::Nogood),
        "strengthened" => Ok(CutKind::StrengthenedNogood),
        "analytic" => Ok(CutKind::AnalyticLinearized),
        "analytic-weak" => Ok(CutKind::AnalyticWeak),
        _ => Err(BenchError::UnknownCuts(s.to_string())),
    }
}

/// A method together with its cut family, written `lbbd-nogood`,
/// `bcheck-analytic`, `ilshaped-cp`, ...
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MethodSpec {
    pub method: Method,
    pub cuts: CutKind,
}

impl MethodSpec {
    pub fn new(method: Method, cuts: CutKind) -> Self {
        Self { method, cuts }
    }

    /// Runs the method with `base` as configuration; `base.cuts` is replaced
    /// by this spec's cut family.
    pub fn solve(&self, inst: &Instance, base: &MasterConfig) -> Result<SolveResult, DriverError> {
        let cfg = MasterConfig {
            cuts: self.cuts,
            ..base.clone()
        };
        match self.method {
            Method::Deq => solve_deterministic_equivalent(inst, &cfg),
            Method::Lbbd => solve_lbbd(inst, &cfg),
            Method::BranchAndCheck => solve_branch_and_check(inst, &cfg),
            Method::IntegerLShaped => solve_integer_lshaped(inst, &cfg, SubproblemEngine::MilpTimeIndexed, true),
            Method::IntegerLShapedCp => solve_integer_lshaped(inst, &cfg, SubproblemEngine::CpExact, true),
            Method::IntegerLShapedInt => solve_integer_lshaped(inst, &cfg, SubproblemEngine::CpExact, false),
        }
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.method.uses_cut_kind() {
            write!(f, "{}-{}", self.method, cut_name(self.cuts))
        } else {
            write!(f, "{}", self.method)
        }
    }
}

impl FromStr for MethodSpec {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        for method in [Method::Lbbd, Method::BranchAndCheck] {
            if let Some(rest) = s.strip_prefix(method.name()).and_then(|r| r.strip_prefix('-')) {
                return Ok(MethodSpec::new(method, parse_cuts(rest)?));
            }
        }
        let method: Method = s.parse()?;
        let cuts = match method {
            Method::IntegerLShapedInt => CutKind::IntegerOnly,
            Method::IntegerLShaped | Method::IntegerLShapedCp => CutKind::IntegerPlusLP,
            _ => CutKind::Nogood,
        };
        Ok(MethodSpec::new(method, cuts))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentGrid {
    pub tasks: Vec<usize>,
    pub facilities: Vec<usize>,
    pub scenarios: Vec<usize>,
    pub instances_per_cell: usize,
    pub methods: Vec<MethodSpec>,
    /// Instance `k` (0-based) of every cell uses seed `base_seed + k`.
    pub base_seed: u64,
    pub time_limit: Duration,
    pub objective: ObjectiveMode,
    pub lambda: f64,
    pub dispersion: Dispersion,
    /// Runs executed in parallel; each run is single-threaded.
    pub workers: usize,
    /// Write wall-clock columns; leave them empty for byte-stable output.
    pub record_times: bool,
}

impl Default for ExperimentGrid {
    fn default() -> Self {
        Self {
            tasks: vec![10],
            facilities: vec![2],
            scenarios: vec![1, 5],
            instances_per_cell: 3,
            methods: vec![
                MethodSpec::new(Method::BranchAndCheck, CutKind::AnalyticLinearized),
                MethodSpec::new(Method::BranchAndCheck, CutKind::Nogood),
            ],
            base_seed: 1,
            time_limit: Duration::from_secs(60),
            objective: ObjectiveMode::Makespan,
            lambda: 0.0,
            dispersion: Dispersion::None,
            workers: 1,
            record_times: true,
        }
    }
}

/// One grid cell: instance sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub tasks: usize,
    pub facilities: usize,
    pub scenarios: usize,
}

impl ExperimentGrid {
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &tasks in &self.tasks {
            for &facilities in &self.facilities {
                for &scenarios in &self.scenarios {
                    cells.push(Cell {
                        tasks,
                        facilities,
                        scenarios,
                    });
                }
            }
        }
        cells
    }

    fn variant(&self) -> InstanceVariant {
        match self.objective {
            ObjectiveMode::Makespan => InstanceVariant::Makespan,
            ObjectiveMode::Tardiness => InstanceVariant::Tardiness,
            ObjectiveMode::Cost => InstanceVariant::Cost,
        }
    }

    pub fn instance(&self, cell: Cell, k: usize) -> Instance {
        let mut cfg = GeneratorConfig::new(cell.facilities, cell.tasks, cell.scenarios, self.base_seed + k as u64);
        cfg.variant = self.variant();
        generate_with(cfg)
    }

    fn config(&self) -> MasterConfig {
        MasterConfig {
            lambda: self.lambda,
            dispersion: self.dispersion,
            time_limit: self.time_limit,
            workers: 1,
            ..MasterConfig::new(self.objective, CutKind::Nogood)
        }
    }
}

/// One CSV line.
#[derive(Debug, Clone, Serialize)]
pub struct CsvRow {
    /// `run` or `average`.
    pub kind: &'static str,
    pub tasks: usize,
    pub facilities: usize,
    pub scenarios: usize,
    pub method: String,
    /// Instance index within the cell; empty on average rows.
    pub instance: Option<usize>,
    pub seed: Option<u64>,
    pub status: String,
    pub objective: Option<f64>,
    pub ub: Option<f64>,
    pub lb: Option<f64>,
    pub gap: Option<f64>,
    pub total_time: Option<f64>,
    pub cp_time: Option<f64>,
    pub lp_time: Option<f64>,
    pub cuts: Option<f64>,
    pub calls: Option<f64>,
    pub nodes: Option<f64>,
    pub lp_solves: Option<f64>,
    pub flag: String,
}

fn status_name(status: SolveStatus) -> &'static str {
    match status {
        SolveStatus::Optimal => "optimal",
        SolveStatus::Feasible => "feasible",
        SolveStatus::TimeLimit => "time_limit",
        SolveStatus::Infeasible => "infeasible",
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn run_row(cell: Cell, spec: MethodSpec, k: usize, seed: u64, res: &SolveResult, times: bool) -> CsvRow {
    let st = &res.stats;
    let flag = match res.status {
        SolveStatus::Feasible => "†",
        SolveStatus::TimeLimit => "*",
        _ => "",
    };
    CsvRow {
        kind: "run",
        tasks: cell.tasks,
        facilities: cell.facilities,
        scenarios: cell.scenarios,
        method: spec.to_string(),
        instance: Some(k),
        seed: Some(seed),
        status: status_name(res.status).to_string(),
        objective: finite(res.objective),
        ub: finite(st.ub),
        lb: finite(st.lb),
        gap: finite(st.gap()),
        total_time: times.then_some(st.total_time),
        cp_time: times.then_some(st.cp_time),
        lp_time: times.then_some(st.lp_time),
        cuts: Some(st.cuts as f64),
        calls: Some(st.calls as f64),
        nodes: Some(st.nodes as f64),
        lp_solves: Some(st.lp_solves as f64),
        flag: flag.to_string(),
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

fn average_row(cell: Cell, spec: MethodSpec, results: &[&SolveResult], times: bool) -> CsvRow {
    let done: Vec<&RunStats> = results
        .iter()
        .filter(|r| matches!(r.status, SolveStatus::Optimal | SolveStatus::Infeasible))
        .map(|r| &r.stats)
        .collect();
    let skipped = results.len() - done.len();
    let flag = if !results.is_empty() && done.is_empty() {
        "*".to_string()
    } else {
        "†".repeat(skipped)
    };
    let avg = |f: &dyn Fn(&RunStats) -> f64| mean(done.iter().map(|s| f(s)));
    CsvRow {
        kind: "average",
        tasks: cell.tasks,
        facilities: cell.facilities,
        scenarios: cell.scenarios,
        method: spec.to_string(),
        instance: None,
        seed: None,
        status: format!("{}/{} solved", done.len(), results.len()),
        objective: mean(results.iter().map(|r| r.objective)).and_then(finite),
        ub: None,
        lb: None,
        gap: mean(results.iter().map(|r| r.stats.gap())).and_then(finite),
        total_time: if times { avg(&|s| s.total_time) } else { None },
        cp_time: if times { avg(&|s| s.cp_time) } else { None },
        lp_time: if times { avg(&|s| s.lp_time) } else { None },
        cuts: avg(&|s| s.cuts as f64),
        calls: avg(&|s| s.calls as f64),
        nodes: avg(&|s| s.nodes as f64),
        lp_solves: avg(&|s| s.lp_solves as f64),
        flag,
    }
}

/// Runs every method on every instance of every cell and returns the rows
/// in grid order: for each cell and method, its runs then their average.
pub fn run_grid_rows(grid: &ExperimentGrid) -> Result<Vec<CsvRow>, BenchError> {
    let base = grid.config();
    let mut jobs = Vec::new();
    for cell in grid.cells() {
        for &spec in &grid.methods {
            for k in 0..grid.instances_per_cell {
                jobs.push((cell, spec, k));
            }
        }
    }
    let run = |&(cell, spec, k): &(Cell, MethodSpec, usize)| -> Result<SolveResult, DriverError> {
        spec.solve(&grid.instance(cell, k), &base)
    };
    let results: Vec<Result<SolveResult, DriverError>> = if grid.workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(grid.workers)
            .build()
            .map_err(|e| DriverError::Solver(e.to_string()))?;
        pool.install(|| jobs.par_iter().map(run).collect())
    } else {
        jobs.iter().map(run).collect()
    };
    let results: Vec<SolveResult> = results.into_iter().collect::<Result<_, _>>()?;

    let mut rows = Vec::with_capacity(results.len() + results.len() / grid.instances_per_cell.max(1));
    for (chunk, group) in results
        .chunks(grid.instances_per_cell.max(1))
        .zip(jobs.chunks(grid.instances_per_cell.max(1)))
    {
        let (cell, spec, _) = group[0];
        for (res, &(_, _, k)) in chunk.iter().zip(group) {
            rows.push(run_row(cell, spec, k, grid.base_seed + k as u64, res, grid.record_times));
        }
        let refs: Vec<&SolveResult> = chunk.iter().collect();
        rows.push(average_row(cell, spec, &refs, grid.record_times));
    }
    Ok(rows)
}

pub fn write_csv<W: std::io::Write>(rows: &[CsvRow], out: W) -> Result<(), BenchError> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| BenchError::Csv(e.into()))?;
    Ok(())
}

/// Runs the grid and writes the CSV to `path`.
pub fn run_grid(grid: &ExperimentGrid, path: &Path) -> Result<Vec<CsvRow>, BenchError> {
    let file = std::fs::File::create(path).map_err(|source| BenchError::Output {
        path: path.display().to_string(),
        source,
    })?;
    let rows = run_grid_rows(grid)?;
    write_csv(&rows, std::io::BufWriter::new(file))?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_fixtures() {
        assert_eq!(gap(10.0, 10.0), 0.0);
        assert!((gap(10.0, 9.0) - 0.1).abs() < 1e-15);
        assert_eq!(gap(0.0, 0.0), 0.0);
        assert_eq!(gap(f64::INFINITY, 3.0), f64::INFINITY);
    }

    #[test]
    fn method_names_round_trip() {
        for s in [
            "deq",
            "lbbd-nogood",
            "lbbd-analytic-weak",
            "bcheck-analytic",
            "bcheck-strengthened",
            "ilshaped",
            "ilshaped-cp",
            "ilshaped-int",
        ] {
            let spec: MethodSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        assert!("bcheck-fancy".parse::<MethodSpec>().is_err());
        assert!("simplex".parse::<MethodSpec>().is_err());
    }
}
