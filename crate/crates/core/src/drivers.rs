//! End-to-end solution methods and the master / deterministic-equivalent
//! model builders.
//!
//! All decomposition methods share one master problem: binary `x[i][j]`,
//! assignment rows, scenario values `beta[w]`, facility-scenario values
//! `beta[i,w]` and, with max dispersion, `beta_max`. They differ in how
//! cuts reach the master:
//!
//! - [`solve_lbbd`] re-solves the master after each round of cuts,
//! - [`solve_branch_and_check`] runs one tree and adds cuts lazily,
//! - [`solve_integer_lshaped`] also runs one tree, with integer cuts and
//!   optionally LP-relaxation cuts.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use thiserror::Error;

use crate::bench::RunStats;
use serde::{Deserialize, Serialize};

use crate::cumcp::{self, CpOptions, CpStatus, Job, Schedule};
use crate::cuts::{self, Cut, MasterVar, SubproblemValue};
use crate::instance::{Assignment, Instance, InstanceError};
use crate::lp::{LpModel, LpRow, RowSense};
use crate::milp::{self, LazyAction, MilpModel, MilpOptions, MilpStatus, NewColumn};
use crate::timeindexed::{self, BlockObjective, HORIZON_CAP};

/// Absolute convergence tolerance and minimum cut violation.
pub const CONVERGENCE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObjectiveMode {
    Makespan,
    Cost,
    Tardiness,
}

impl ObjectiveMode {
    pub fn block(self) -> BlockObjective {
        match self {
            ObjectiveMode::Makespan => BlockObjective::Makespan,
            ObjectiveMode::Cost => BlockObjective::Feasibility,
            ObjectiveMode::Tardiness => BlockObjective::Tardiness,
        }
    }

    pub fn cp(self) -> cumcp::Objective {
        match self {
            ObjectiveMode::Makespan => cumcp::Objective::Makespan,
            ObjectiveMode::Cost => cumcp::Objective::Feasibility,
            ObjectiveMode::Tardiness => cumcp::Objective::Tardiness,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CutKind {
    Nogood,
    StrengthenedNogood,
    AnalyticLinearized,
    AnalyticWeak,
    IntegerOnly,
    IntegerPlusLP,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dispersion {
    None,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SubproblemEngine {
    CpExact,
    MilpTimeIndexed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MasterConfig {
    pub objective: ObjectiveMode,
    pub cuts: CutKind,
    pub lambda: f64,
    pub dispersion: Dispersion,
    pub include_relaxation: bool,
    pub include_initial_bounds: bool,
    pub time_limit: Duration,
    pub workers: usize,
    /// Lower bound `LB` used by integer L-shaped cuts.
    pub integer_lower_bound: f64,
    pub horizon_cap: i64,
}

impl Default for MasterConfig {
    fn default() -> Self {
        Self {
            objective: ObjectiveMode::Makespan,
            cuts: CutKind::AnalyticLinearized,
            lambda: 0.0,
            dispersion: Dispersion::None,
            include_relaxation: true,
            include_initial_bounds: true,
            time_limit: Duration::from_secs(60),
            workers: 1,
            integer_lower_bound: 0.0,
            horizon_cap: HORIZON_CAP,
        }
    }
}

impl MasterConfig {
    pub fn new(objective: ObjectiveMode, cuts: CutKind) -> Self {
        Self {
            objective,
            cuts,
            ..Self::default()
        }
    }

    pub fn validate(&self, inst: &Instance) -> Result<(), DriverError> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(DriverError::Config(format!("risk weight {} is outside [0, 1]", self.lambda)));
        }
        if self.dispersion == Dispersion::None && self.lambda != 0.0 {
            return Err(DriverError::Config("a risk weight needs --dispersion max".into()));
        }
        match self.objective {
            ObjectiveMode::Cost if inst.assign_cost.is_none() => {
                Err(DriverError::Config("cost objective needs assign_cost in the instance".into()))
            }
            ObjectiveMode::Tardiness if inst.due_date.is_none() => {
                Err(DriverError::Config("tardiness objective needs due_date in the instance".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(
        "time-indexed horizon {horizon} exceeds the cap {cap}; use a decomposition method or raise the cap"
    )]
    HorizonTooLarge { horizon: i64, cap: i64 },
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("subproblem time limit reached")]
    SubproblemTimeLimit,
}

impl From<milp::MilpError> for DriverError {
    fn from(e: milp::MilpError) -> Self {
        DriverError::Solver(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// Time limit with an incumbent.
    Feasible,
    /// Time limit without an incumbent.
    TimeLimit,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub assignment: Option<Assignment>,
    /// True objective of `assignment` (`+inf` without one).
    pub objective: f64,
    pub scenario_values: Vec<f64>,
    pub stats: RunStats,
}

/// Exact value of one subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpValue {
    Value(i64),
    Infeasible,
    TimedOut,
}

impl SpValue {
    pub fn value(self) -> Option<i64> {
        match self {
            SpValue::Value(v) => Some(v),
            _ => None,
        }
    }
}

/// Jobs of `tasks` on facility `i` in scenario `w`.
pub fn subproblem_jobs(inst: &Instance, facility: usize, scenario: usize, tasks: &[usize]) -> Vec<Job> {
    tasks
        .iter()
        .map(|&j| {
            let mut job = Job::new(
                j,
                inst.release[j],
                inst.processing(scenario, facility, j),
                inst.consumption[facility][j],
            );
            if let Some(d) = inst.deadline[j] {
                job = job.with_deadline(d);
            }
            if let Some(due) = &inst.due_date {
                job = job.with_due_date(due[j]);
            }
            job
        })
        .collect()
}

type SpKey = (usize, usize, Vec<usize>);

struct SpTiming {
    cp: Duration,
    lp: Duration,
    lp_solves: usize,
}

fn solve_subproblem(
    inst: &Instance,
    mode: ObjectiveMode,
    engine: SubproblemEngine,
    key: &SpKey,
    deadline: Instant,
) -> (SpValue, SpTiming) {
    let (i, w, tasks) = key;
    let mut timing = SpTiming {
        cp: Duration::ZERO,
        lp: Duration::ZERO,
        lp_solves: 0,
    };
    if tasks.is_empty() {
        return (SpValue::Value(0), timing);
    }
    let remaining = deadline.saturating_duration_since(Instant::now());
    let start = Instant::now();
    let value = match engine {
        SubproblemEngine::CpExact => {
            let jobs = subproblem_jobs(inst, *i, *w, tasks);
            let out = cumcp::solve(&jobs, inst.capacity[*i], mode.cp(), &CpOptions::with_time_limit(remaining));
            timing.cp = start.elapsed();
            match out.status {
                CpStatus::Optimal => SpValue::Value(out.value.unwrap_or(0)),
                CpStatus::Feasible if mode == ObjectiveMode::Cost => SpValue::Value(0),
                CpStatus::Infeasible => SpValue::Infeasible,
                _ => SpValue::TimedOut,
            }
        }
        SubproblemEngine::MilpTimeIndexed => {
            let model = timeindexed::block_exact(inst, *i, *w, tasks, mode.block());
            let integers: Vec<usize> = model.block.columns().collect();
            let mut milp_model = MilpModel::new(model.lp, integers);
            milp_model.sos1 = model.block.start_sets();
            let opts = MilpOptions {
                integral_objective: true,
                ..MilpOptions::with_time_limit(remaining)
            };
            let res = milp::solve(&milp_model, None, &opts);
            timing.lp = start.elapsed();
            timing.lp_solves = 1;
            match res {
                Ok(r) => match r.status {
                    MilpStatus::Optimal => SpValue::Value(r.objective.round() as i64),
                    MilpStatus::Infeasible => SpValue::Infeasible,
                    _ => SpValue::TimedOut,
                },
                Err(_) => SpValue::TimedOut,
            }
        }
    };
    (value, timing)
}

/// Exact subproblem values with a cache keyed by facility, scenario and
/// job set.
struct Subproblems<'a> {
    inst: &'a Instance,
    mode: ObjectiveMode,
    engine: SubproblemEngine,
    deadline: Instant,
    cache: HashMap<SpKey, SpValue>,
    pool: Option<rayon::ThreadPool>,
    cp_time: Duration,
    lp_time: Duration,
    lp_solves: usize,
}

impl<'a> Subproblems<'a> {
    fn new(inst: &'a Instance, mode: ObjectiveMode, engine: SubproblemEngine, deadline: Instant, workers: usize) -> Self {
        let pool = (workers > 1)
            .then(|| rayon::ThreadPoolBuilder::new().num_threads(workers).build().ok())
            .flatten();
        Self {
            inst,
            mode,
            engine,
            deadline,
            cache: HashMap::new(),
            pool,
            cp_time: Duration::ZERO,
            lp_time: Duration::ZERO,
            lp_solves: 0,
        }
    }

    fn solve_all(&mut self, keys: &[SpKey]) -> Vec<SpValue> {
        let mut missing: Vec<&SpKey> = keys.iter().filter(|k| !self.cache.contains_key(*k)).collect();
        missing.dedup();
        let (inst, mode, engine, deadline) = (self.inst, self.mode, self.engine, self.deadline);
        let work = |k: &&SpKey| solve_subproblem(inst, mode, engine, k, deadline);
        let results: Vec<(SpValue, SpTiming)> = match &self.pool {
            Some(pool) if missing.len() > 1 => pool.install(|| missing.par_iter().map(work).collect()),
            _ => missing.iter().map(work).collect(),
        };
        for (k, (v, t)) in missing.into_iter().zip(results) {
            self.cp_time += t.cp;
            self.lp_time += t.lp;
            self.lp_solves += t.lp_solves;
            if v != SpValue::TimedOut {
                self.cache.insert(k.clone(), v);
            }
        }
        keys.iter()
            .map(|k| self.cache.get(k).copied().unwrap_or(SpValue::TimedOut))
            .collect()
    }

    fn solve_one(&mut self, facility: usize, scenario: usize, tasks: &[usize]) -> SpValue {
        self.solve_all(&[(facility, scenario, tasks.to_vec())])[0]
    }

    fn stats_into(&self, stats: &mut RunStats) {
        stats.cp_time += self.cp_time.as_secs_f64();
        stats.lp_time += self.lp_time.as_secs_f64();
        stats.lp_solves += self.lp_solves;
    }
}

/// Recourse values of one assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// `+inf` when some subproblem is infeasible.
    pub objective: f64,
    pub first_stage: f64,
    pub scenario_values: Vec<f64>,
    /// `values[w][i]`.
    pub values: Vec<Vec<SpValue>>,
    pub feasible: bool,
}

fn first_stage_cost(inst: &Instance, a: &Assignment) -> f64 {
    inst.assign_cost
        .as_ref()
        .map_or(0.0, |c| a.facility_of.iter().enumerate().map(|(j, &i)| c[i][j]).sum())
}

fn combine(inst: &Instance, cfg: &MasterConfig, first_stage: f64, scenario_values: &[f64]) -> f64 {
    let expected: f64 = inst
        .scenarios
        .iter()
        .zip(scenario_values)
        .map(|(s, v)| s.probability * v)
        .sum();
    match cfg.dispersion {
        Dispersion::None => first_stage + expected,
        Dispersion::Max => {
            let worst = scenario_values.iter().copied().fold(0.0, f64::max);
            first_stage + (1.0 - cfg.lambda) * expected + cfg.lambda * worst
        }
    }
}

fn evaluate_with(sp: &mut Subproblems<'_>, cfg: &MasterConfig, a: &Assignment) -> Result<Evaluation, DriverError> {
    let inst = sp.inst;
    let (m, s) = (inst.num_facilities, inst.num_scenarios());
    let keys: Vec<SpKey> = (0..s)
        .flat_map(|w| (0..m).map(move |i| (i, w)))
        .map(|(i, w)| (i, w, a.tasks_on(i)))
        .collect();
    let flat = sp.solve_all(&keys);
    if flat.contains(&SpValue::TimedOut) {
        return Err(DriverError::SubproblemTimeLimit);
    }
    let values: Vec<Vec<SpValue>> = flat.chunks(m).map(|c| c.to_vec()).collect();
    let feasible = !flat.contains(&SpValue::Infeasible);
    let scenario_values: Vec<f64> = values
        .iter()
        .map(|row| {
            let vals = row.iter().filter_map(|v| v.value()).map(|v| v as f64);
            match cfg.objective {
                ObjectiveMode::Makespan => vals.fold(0.0, f64::max),
                ObjectiveMode::Tardiness => vals.sum(),
                ObjectiveMode::Cost => 0.0,
            }
        })
        .collect();
    let first_stage = first_stage_cost(inst, a);
    let objective = if feasible {
        combine(inst, cfg, first_stage, &scenario_values)
    } else {
        f64::INFINITY
    };
    Ok(Evaluation {
        objective,
        first_stage,
        scenario_values,
        values,
        feasible,
    })
}

/// Exact objective of an assignment under `cfg`, solving every subproblem
/// with the cumulative scheduling solver.
pub fn evaluate_assignment(inst: &Instance, a: &Assignment, cfg: &MasterConfig) -> Result<Evaluation, DriverError> {
    let deadline = Instant::now() + cfg.time_limit;
    let mut sp = Subproblems::new(inst, cfg.objective, SubproblemEngine::CpExact, deadline, cfg.workers);
    evaluate_with(&mut sp, cfg, a)
}

/// Column positions of the master variables.
#[derive(Debug, Clone)]
pub struct MasterLayout {
    pub x: Vec<Vec<usize>>,
    pub beta: Vec<usize>,
    /// `beta_if[i][w]`
    pub beta_if: Vec<Vec<usize>>,
    pub beta_max: Option<usize>,
    pub num_cols: usize,
}

impl MasterLayout {
    pub fn col(&self, v: MasterVar) -> Option<usize> {
        match v {
            MasterVar::X { facility, task } => Some(self.x[facility][task]),
            MasterVar::Beta { scenario } => Some(self.beta[scenario]),
            MasterVar::BetaFacility { facility, scenario } => Some(self.beta_if[facility][scenario]),
            MasterVar::BetaMax => self.beta_max,
            // The master uses the projected analytic cut, which has no `z`.
            MasterVar::Z { .. } => None,
        }
    }

    pub fn row(&self, cut: &Cut) -> LpRow {
        let coeffs = cut
            .coeffs
            .iter()
            .map(|&(v, a)| (self.col(v).expect("cut variable exists in the master"), a))
            .collect();
        LpRow::new(coeffs, RowSense::Ge, cut.rhs)
    }

    pub fn assignment(&self, x: &[f64]) -> Assignment {
        let n = self.x.first().map_or(0, |r| r.len());
        let facility_of = (0..n)
            .map(|j| {
                (0..self.x.len())
                    .max_by(|&a, &b| x[self.x[a][j]].total_cmp(&x[self.x[b][j]]).then(b.cmp(&a)))
                    .unwrap_or(0)
            })
            .collect();
        Assignment::new(facility_of)
    }
}

#[derive(Debug, Clone)]
pub struct Master {
    pub model: MilpModel,
    pub layout: MasterLayout,
}

/// The initial master problem: assignment, linking rows, relaxations and
/// initial scenario bounds as configured; no Benders cuts yet.
pub fn build_master(inst: &Instance, cfg: &MasterConfig) -> Result<Master, DriverError> {
    inst.validate()?;
    cfg.validate(inst)?;
    let (m, n, s) = (inst.num_facilities, inst.num_tasks, inst.num_scenarios());
    let mut lp = LpModel::new();
    let x: Vec<Vec<usize>> = (0..m)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let cost = inst.assign_cost.as_ref().map_or(0.0, |c| c[i][j]);
                    lp.add_named_col(format!("x_{i}_{j}"), cost, 0.0, 1.0)
                })
                .collect()
        })
        .collect();
    let second_stage = cfg.objective != ObjectiveMode::Cost;
    let upper = if second_stage { f64::INFINITY } else { 0.0 };
    let weight = match cfg.dispersion {
        Dispersion::None => 1.0,
        Dispersion::Max => 1.0 - cfg.lambda,
    };
    let beta: Vec<usize> = (0..s)
        .map(|w| lp.add_named_col(format!("beta_{w}"), weight * inst.scenarios[w].probability, 0.0, upper))
        .collect();
    let beta_if: Vec<Vec<usize>> = (0..m)
        .map(|i| {
            (0..s)
                .map(|w| lp.add_named_col(format!("beta_{i}_{w}"), 0.0, 0.0, upper))
                .collect()
        })
        .collect();
    let beta_max = (cfg.dispersion == Dispersion::Max)
        .then(|| lp.add_named_col("beta_max", cfg.lambda, 0.0, upper));
    for j in 0..n {
        lp.add_row((0..m).map(|i| (x[i][j], 1.0)).collect(), RowSense::Eq, 1.0);
    }
    if second_stage {
        for w in 0..s {
            match cfg.objective {
                ObjectiveMode::Tardiness => {
                    let mut row = vec![(beta[w], 1.0)];
                    row.extend((0..m).map(|i| (beta_if[i][w], -1.0)));
                    lp.add_row(row, RowSense::Ge, 0.0);
                }
                _ => {
                    for row in &beta_if {
                        lp.add_row(vec![(beta[w], 1.0), (row[w], -1.0)], RowSense::Ge, 0.0);
                    }
                }
            }
            if let Some(bm) = beta_max {
                lp.add_row(vec![(bm, 1.0), (beta[w], -1.0)], RowSense::Ge, 0.0);
            }
        }
    }
    let layout = MasterLayout {
        x,
        beta,
        beta_if,
        beta_max,
        num_cols: lp.num_cols(),
    };
    let mut extra: Vec<Cut> = Vec::new();
    if cfg.include_relaxation {
        extra.extend(match cfg.objective {
            ObjectiveMode::Makespan => cuts::makespan_relaxation(inst),
            ObjectiveMode::Cost => cuts::cost_relaxation(inst),
            ObjectiveMode::Tardiness => cuts::tardiness_relaxations(inst),
        });
    }
    if cfg.include_initial_bounds && second_stage {
        check_horizon(inst, cfg)?;
        extra.extend(cuts::initial_scenario_bounds(inst, cfg.objective.block()).map_err(DriverError::Solver)?);
    }
    for cut in &extra {
        lp.rows.push(layout.row(cut));
    }
    let integers = layout.x.iter().flatten().copied().collect();
    Ok(Master {
        model: MilpModel::new(lp, integers),
        layout,
    })
}

fn check_horizon(inst: &Instance, cfg: &MasterConfig) -> Result<(), DriverError> {
    let horizon = timeindexed::global_horizon(inst);
    if horizon > cfg.horizon_cap {
        return Err(DriverError::HorizonTooLarge {
            horizon,
            cap: cfg.horizon_cap,
        });
    }
    Ok(())
}

/// Cuts produced for one candidate.
#[derive(Debug, Default)]
struct CutRound {
    columns: Vec<NewColumn>,
    rows: Vec<LpRow>,
    cuts: usize,
}

/// Shared candidate handling: solves the subproblems of a master point,
/// tracks the best true objective, and produces violated cuts.
struct Separator<'a> {
    inst: &'a Instance,
    cfg: MasterConfig,
    layout: MasterLayout,
    sp: Subproblems<'a>,
    r_plus: i64,
    r_minus: i64,
    best: Option<(f64, Assignment)>,
    candidates: usize,
    cut_log: Vec<Cut>,
}

enum Separation {
    Accept,
    Cuts(CutRound),
    Abort,
}

impl<'a> Separator<'a> {
    fn new(inst: &'a Instance, cfg: &MasterConfig, layout: MasterLayout, engine: SubproblemEngine, deadline: Instant) -> Self {
        let (r_plus, r_minus) = inst.release_spread();
        Self {
            inst,
            cfg: cfg.clone(),
            layout,
            sp: Subproblems::new(inst, cfg.objective, engine, deadline, cfg.workers),
            r_plus,
            r_minus,
            best: None,
            candidates: 0,
            cut_log: Vec::new(),
        }
    }

    fn value_of(&self, x: &[f64], v: MasterVar) -> f64 {
        self.layout.col(v).map_or(0.0, |c| x.get(c).copied().unwrap_or(0.0))
    }

    fn push(&mut self, round: &mut CutRound, cut: Cut, x: &[f64]) {
        let rhs = cut.rhs;
        let lhs = cut.lhs(|v| self.value_of(x, v));
        if lhs < rhs - CONVERGENCE_TOL {
            round.rows.push(self.layout.row(&cut));
            round.cuts += 1;
            self.cut_log.push(cut.with_iteration(self.candidates));
        }
    }

    fn separate(&mut self, x: &[f64]) -> Result<Separation, DriverError> {
        self.candidates += 1;
        let a = self.layout.assignment(x);
        let eval = match evaluate_with(&mut self.sp, &self.cfg, &a) {
            Ok(e) => e,
            Err(DriverError::SubproblemTimeLimit) => return Ok(Separation::Abort),
            Err(e) => return Err(e),
        };
        if eval.feasible && self.best.as_ref().is_none_or(|(v, _)| eval.objective < *v) {
            self.best = Some((eval.objective, a.clone()));
        }
        let (m, s) = (self.inst.num_facilities, self.inst.num_scenarios());
        let mut round = CutRound::default();
        let tardiness_analytic = self.cfg.objective == ObjectiveMode::Tardiness
            && matches!(self.cfg.cuts, CutKind::AnalyticLinearized | CutKind::AnalyticWeak);
        for w in 0..s {
            for i in 0..m {
                let jobs = a.tasks_on(i);
                match eval.values[w][i] {
                    SpValue::Infeasible => {
                        let jobs = self.reduce_infeasible(i, w, &jobs);
                        let sp = SubproblemValue {
                            facility: i,
                            scenario: w,
                            value: 0.0,
                            jobs,
                        };
                        if let Some(cut) = cuts::cost_feasibility_cut(&sp) {
                            self.push(&mut round, cut, x);
                        }
                    }
                    SpValue::Value(v) if self.cfg.objective != ObjectiveMode::Cost => {
                        let sp = SubproblemValue {
                            facility: i,
                            scenario: w,
                            value: v as f64,
                            jobs,
                        };
                        if !tardiness_analytic {
                            self.optimality_cuts(&mut round, &sp, x)?;
                        }
                    }
                    _ => {}
                }
            }
            if tardiness_analytic && eval.values[w].iter().all(|v| v.value().is_some()) {
                let sps: Vec<SubproblemValue> = (0..m)
                    .map(|i| SubproblemValue {
                        facility: i,
                        scenario: w,
                        value: eval.values[w][i].value().unwrap_or(0) as f64,
                        jobs: a.tasks_on(i),
                    })
                    .collect();
                if let Some(cut) = cuts::tardiness_cut(self.inst, &sps) {
                    self.push(&mut round, cut, x);
                }
            }
        }
        if round.rows.is_empty() {
            Ok(Separation::Accept)
        } else {
            Ok(Separation::Cuts(round))
        }
    }

    fn reduce_infeasible(&mut self, i: usize, w: usize, jobs: &[usize]) -> Vec<usize> {
        let strengthen = matches!(
            self.cfg.cuts,
            CutKind::StrengthenedNogood | CutKind::AnalyticLinearized | CutKind::AnalyticWeak
        );
        if !strengthen {
            return jobs.to_vec();
        }
        let sp = &mut self.sp;
        cuts::reduce_job_set(jobs, 2 * jobs.len(), |subset| {
            sp.solve_one(i, w, subset) == SpValue::Infeasible
        })
    }

    fn optimality_cuts(&mut self, round: &mut CutRound, sp: &SubproblemValue, x: &[f64]) -> Result<(), DriverError> {
        let beta = self.value_of(
            x,
            MasterVar::BetaFacility {
                facility: sp.facility,
                scenario: sp.scenario,
            },
        );
        let violated = beta < sp.value - CONVERGENCE_TOL;
        let processing = &self.inst.scenarios[sp.scenario].processing[sp.facility];
        match self.cfg.cuts {
            _ if !violated && self.cfg.cuts != CutKind::IntegerPlusLP => {}
            CutKind::Nogood => {
                if let Some(c) = cuts::nogood_cut(sp) {
                    self.push(round, c, x);
                }
            }
            CutKind::StrengthenedNogood => {
                let budget = cuts::default_budget(sp);
                let s = &mut self.sp;
                let reduced = cuts::strengthen_nogood(
                    sp,
                    |subset| s.solve_one(sp.facility, sp.scenario, subset).value().map(|v| v as f64),
                    budget,
                );
                if let Some(c) = cuts::strengthened_nogood_cut(&reduced) {
                    self.push(round, c, x);
                }
            }
            CutKind::AnalyticWeak => {
                if let Some(c) = cuts::analytic_cut_weak(sp, processing, self.r_plus, self.r_minus) {
                    self.push(round, c, x);
                }
            }
            CutKind::AnalyticLinearized => {
                let rows = cuts::analytic_cut_projected(sp, processing, self.r_plus, self.r_minus);
                if rows.is_empty() {
                    return Ok(());
                }
                // One cut in two rows; the second carries the violation.
                round.cuts += 1;
                for cut in rows {
                    round.rows.push(self.layout.row(&cut));
                    self.cut_log.push(cut.with_iteration(self.candidates));
                }
            }
            CutKind::IntegerOnly | CutKind::IntegerPlusLP => {
                if violated {
                    let c = cuts::integer_lshaped_cut(sp, self.inst.num_tasks, self.cfg.integer_lower_bound);
                    self.push(round, c, x);
                }
                if self.cfg.cuts == CutKind::IntegerPlusLP && self.cfg.objective != ObjectiveMode::Cost {
                    let xbar: Vec<f64> = (0..self.inst.num_tasks)
                        .map(|j| if sp.jobs.contains(&j) { 1.0 } else { 0.0 })
                        .collect();
                    let start = Instant::now();
                    let v = cuts::solve_block_lp(self.inst, sp.facility, sp.scenario, &xbar, self.cfg.objective.block())
                        .map_err(DriverError::Solver)?;
                    self.sp.lp_time += start.elapsed();
                    self.sp.lp_solves += 1;
                    self.push(round, cuts::classical_lp_cut(&v), x);
                }
            }
        }
        Ok(())
    }
}

fn finish(
    inst: &Instance,
    cfg: &MasterConfig,
    status: SolveStatus,
    best: Option<(f64, Assignment)>,
    lb: f64,
    mut stats: RunStats,
    start: Instant,
) -> Result<SolveResult, DriverError> {
    let (assignment, objective, scenario_values) = match best {
        Some((_, a)) => {
            let eval = evaluate_assignment(inst, &a, &MasterConfig {
                time_limit: Duration::from_secs(3600),
                ..cfg.clone()
            })?;
            (Some(a), eval.objective, eval.scenario_values)
        }
        None => (None, f64::INFINITY, Vec::new()),
    };
    stats.ub = objective;
    stats.lb = if status == SolveStatus::Optimal { lb.min(objective) } else { lb };
    stats.total_time = start.elapsed().as_secs_f64();
    Ok(SolveResult {
        status,
        assignment,
        objective,
        scenario_values,
        stats,
    })
}

/// Classical LBBD: solve the master to optimality, evaluate its assignment,
/// add cuts, repeat until the master bound meets the best true objective.
pub fn solve_lbbd(inst: &Instance, cfg: &MasterConfig) -> Result<SolveResult, DriverError> {
    let start = Instant::now();
    let deadline = start + cfg.time_limit;
    let master = build_master(inst, cfg)?;
    let mut sep = Separator::new(inst, cfg, master.layout.clone(), SubproblemEngine::CpExact, deadline);
    let mut model = master.model.clone();
    let mut stats = RunStats::default();
    let mut lb = f64::NEG_INFINITY;
    let status = loop {
        let remaining = deadline.saturating_duration_since(Instant::now());
        if remaining.is_zero() {
            break SolveStatus::TimeLimit;
        }
        let res = milp::solve(&model, None, &MilpOptions::with_time_limit(remaining))?;
        stats.nodes += res.nodes;
        stats.calls += 1;
        match res.status {
            MilpStatus::Optimal => lb = lb.max(res.objective),
            MilpStatus::Infeasible => break SolveStatus::Infeasible,
            _ => break SolveStatus::TimeLimit,
        }
        let x = res.incumbent.expect("optimal master has a solution");
        let round = match sep.separate(&x)? {
            Separation::Abort => break SolveStatus::TimeLimit,
            Separation::Accept => break SolveStatus::Optimal,
            Separation::Cuts(round) => round,
        };
        if let Some((ub, _)) = &sep.best {
            if lb >= ub - CONVERGENCE_TOL {
                break SolveStatus::Optimal;
            }
        }
        stats.cuts += round.cuts;
        for c in round.columns {
            model.lp.add_col(c.cost, c.lower, c.upper);
        }
        model.lp.rows.extend(round.rows);
    };
    let status = match status {
        SolveStatus::TimeLimit if sep.best.is_some() => SolveStatus::Feasible,
        SolveStatus::Infeasible if sep.best.is_some() => SolveStatus::Optimal,
        s => s,
    };
    sep.sp.stats_into(&mut stats);
    finish(inst, cfg, status, sep.best, lb, stats, start)
}

fn single_tree(inst: &Instance, cfg: &MasterConfig, engine: SubproblemEngine) -> Result<SolveResult, DriverError> {
    let start = Instant::now();
    let deadline = start + cfg.time_limit;
    let master = build_master(inst, cfg)?;
    let mut sep = Separator::new(inst, cfg, master.layout.clone(), engine, deadline);
    let mut failure: Option<DriverError> = None;
    let mut cuts_added = 0;
    let res = {
        let mut callback = |x: &[f64]| -> LazyAction {
            match sep.separate(x) {
                Ok(Separation::Accept) => LazyAction::Cuts(Vec::new()),
                Ok(Separation::Cuts(round)) => {
                    cuts_added += round.cuts;
                    LazyAction::Extend {
                        columns: round.columns,
                        cuts: round.rows,
                    }
                }
                Ok(Separation::Abort) => LazyAction::Abort,
                Err(e) => {
                    failure = Some(e);
                    LazyAction::Abort
                }
            }
        };
        let opts = MilpOptions::with_time_limit(cfg.time_limit);
        milp::solve(&master.model, Some(&mut callback), &opts)?
    };
    if let Some(e) = failure {
        return Err(e);
    }
    let mut stats = RunStats {
        nodes: res.nodes,
        calls: res.callback_calls,
        cuts: cuts_added,
        ..RunStats::default()
    };
    sep.sp.stats_into(&mut stats);
    let status = match res.status {
        MilpStatus::Optimal => SolveStatus::Optimal,
        MilpStatus::Infeasible => SolveStatus::Infeasible,
        MilpStatus::Feasible => SolveStatus::Feasible,
        MilpStatus::TimeLimit => SolveStatus::TimeLimit,
    };
    // The accepted incumbent is the one the tree proved; other candidates
    // were cut off and may not be optimal.
    let best = res
        .incumbent
        .as_ref()
        .map(|x| (res.objective, master.layout.assignment(x)));
    let lb = if status == SolveStatus::Optimal { res.objective } else { res.best_bound };
    finish(inst, cfg, status, best, lb, stats, start)
}

/// Branch and check: one master tree, subproblems at integer candidates.
pub fn solve_branch_and_check(inst: &Instance, cfg: &MasterConfig) -> Result<SolveResult, DriverError> {
    single_tree(inst, cfg, SubproblemEngine::CpExact)
}

/// Integer L-shaped method: one master tree with integer cuts at each
/// candidate and, when `use_lp_cuts`, cuts from the time-indexed LP
/// relaxation of every subproblem.
pub fn solve_integer_lshaped(
    inst: &Instance,
    cfg: &MasterConfig,
    engine: SubproblemEngine,
    use_lp_cuts: bool,
) -> Result<SolveResult, DriverError> {
    let cfg = MasterConfig {
        cuts: if use_lp_cuts { CutKind::IntegerPlusLP } else { CutKind::IntegerOnly },
        ..cfg.clone()
    };
    if use_lp_cuts || engine == SubproblemEngine::MilpTimeIndexed {
        check_horizon(inst, &cfg)?;
    }
    single_tree(inst, &cfg, engine)
}

/// Time-indexed deterministic equivalent over all scenarios.
pub fn build_deterministic_equivalent(inst: &Instance, cfg: &MasterConfig) -> Result<Master, DriverError> {
    inst.validate()?;
    cfg.validate(inst)?;
    check_horizon(inst, cfg)?;
    let (m, n, s) = (inst.num_facilities, inst.num_tasks, inst.num_scenarios());
    let mut lp = LpModel::new();
    let x: Vec<Vec<usize>> = (0..m)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let cost = inst.assign_cost.as_ref().map_or(0.0, |c| c[i][j]);
                    lp.add_named_col(format!("x_{i}_{j}"), cost, 0.0, 1.0)
                })
                .collect()
        })
        .collect();
    for j in 0..n {
        lp.add_row((0..m).map(|i| (x[i][j], 1.0)).collect(), RowSense::Eq, 1.0);
    }
    let mut integers: Vec<usize> = x.iter().flatten().copied().collect();
    let mut sos1 = Vec::new();
    let weight = match cfg.dispersion {
        Dispersion::None => 1.0,
        Dispersion::Max => 1.0 - cfg.lambda,
    };
    let mut beta = Vec::with_capacity(s);
    for w in 0..s {
        let (blocks, value) = timeindexed::add_scenario(&mut lp, inst, &x, w, cfg.objective.block());
        integers.extend(blocks.iter().flat_map(|b| b.columns()));
        sos1.extend(blocks.iter().flat_map(|b| b.start_sets()));
        if let (ObjectiveMode::Makespan, Some(v)) = (cfg.objective, value) {
            for (i, block) in blocks.iter().enumerate() {
                timeindexed::add_energy_rows(&mut lp, inst, block, &x[i], v);
            }
        }
        let col = match value {
            Some(c) => {
                lp.objective[c] = weight * inst.scenarios[w].probability;
                // Scenario values of integer schedules are integers.
                integers.push(c);
                c
            }
            None => lp.add_named_col(format!("value_{w}"), 0.0, 0.0, 0.0),
        };
        beta.push(col);
    }
    let beta_max = (cfg.dispersion == Dispersion::Max).then(|| {
        let bm = lp.add_named_col("beta_max", cfg.lambda, 0.0, f64::INFINITY);
        for &b in &beta {
            lp.add_row(vec![(bm, 1.0), (b, -1.0)], RowSense::Ge, 0.0);
        }
        bm
    });
    if cfg.objective == ObjectiveMode::Makespan {
        integers.extend(beta_max);
    }
    let layout = MasterLayout {
        x,
        beta,
        beta_if: Vec::new(),
        beta_max,
        num_cols: lp.num_cols(),
    };
    let mut model = MilpModel::new(lp, integers);
    model.branch_first = layout.x.iter().flatten().copied().collect();
    model.sos1 = sos1;
    Ok(Master { model, layout })
}

pub fn solve_deterministic_equivalent(inst: &Instance, cfg: &MasterConfig) -> Result<SolveResult, DriverError> {
    let start = Instant::now();
    let deq = build_deterministic_equivalent(inst, cfg)?;
    let res = milp::solve(&deq.model, None, &MilpOptions::with_time_limit(cfg.time_limit))?;
    let stats = RunStats {
        nodes: res.nodes,
        calls: 1,
        lp_time: start.elapsed().as_secs_f64(),
        ..RunStats::default()
    };
    let status = match res.status {
        MilpStatus::Optimal => SolveStatus::Optimal,
        MilpStatus::Infeasible => SolveStatus::Infeasible,
        MilpStatus::Feasible => SolveStatus::Feasible,
        MilpStatus::TimeLimit => SolveStatus::TimeLimit,
    };
    let best = res
        .incumbent
        .as_ref()
        .map(|x| (res.objective, deq.layout.assignment(x)));
    let lb = if status == SolveStatus::Optimal { res.objective } else { res.best_bound };
    finish(inst, cfg, status, best, lb, stats, start)
}

/// Exhaustive minimum over every assignment; only for tiny instances.
pub fn solve_by_enumeration(inst: &Instance, cfg: &MasterConfig) -> Result<SolveResult, DriverError> {
    let start = Instant::now();
    let deadline = start + cfg.time_limit;
    let mut sp = Subproblems::new(inst, cfg.objective, SubproblemEngine::CpExact, deadline, cfg.workers);
    let mut best: Option<(f64, Assignment)> = None;
    for a in Assignment::enumerate(inst.num_facilities, inst.num_tasks) {
        let eval = evaluate_with(&mut sp, cfg, &a)?;
        if eval.feasible && best.as_ref().is_none_or(|(v, _)| eval.objective < *v - 1e-12) {
            best = Some((eval.objective, a));
        }
    }
    let mut stats = RunStats::default();
    sp.stats_into(&mut stats);
    let status = if best.is_some() { SolveStatus::Optimal } else { SolveStatus::Infeasible };
    let lb = best.as_ref().map_or(f64::INFINITY, |b| b.0);
    finish(inst, cfg, status, best, lb, stats, start)
}

/// An assignment with one start time per task and scenario, as written by
/// `solve --out` and checked by `validate`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub facility_of: Vec<usize>,
    /// `starts[w][j]`.
    pub starts: Vec<Vec<i64>>,
}

/// Schedules every facility of every scenario for `a`.
pub fn build_witness(inst: &Instance, a: &Assignment, cfg: &MasterConfig) -> Result<Witness, DriverError> {
    let mut starts = vec![vec![0; inst.num_tasks]; inst.num_scenarios()];
    for (w, row) in starts.iter_mut().enumerate() {
        for i in 0..inst.num_facilities {
            let tasks = a.tasks_on(i);
            let jobs = subproblem_jobs(inst, i, w, &tasks);
            let out = cumcp::solve(
                &jobs,
                inst.capacity[i],
                cfg.objective.cp(),
                &CpOptions::with_time_limit(cfg.time_limit),
            );
            let schedule = out.schedule.ok_or_else(|| {
                DriverError::Solver(format!("no schedule for facility {i} in scenario {w}"))
            })?;
            for (&j, &s) in tasks.iter().zip(&schedule.starts) {
                row[j] = s;
            }
        }
    }
    Ok(Witness {
        facility_of: a.facility_of.clone(),
        starts,
    })
}

/// Replays `witness` against the instance: assignment range, release and
/// deadline windows and capacity in every scenario. Returns the objective
/// of the schedules (first-stage cost plus expected scenario value).
pub fn check_witness(inst: &Instance, witness: &Witness, objective: ObjectiveMode) -> Result<f64, String> {
    let (m, n, s) = (inst.num_facilities, inst.num_tasks, inst.num_scenarios());
    if witness.facility_of.len() != n {
        return Err(format!("assignment has {} entries for {n} tasks", witness.facility_of.len()));
    }
    if let Some(j) = witness.facility_of.iter().position(|&i| i >= m) {
        return Err(format!("task {j} assigned to missing facility {}", witness.facility_of[j]));
    }
    if witness.starts.len() != s || witness.starts.iter().any(|row| row.len() != n) {
        return Err(format!("starts must be {s} rows of {n} times"));
    }
    let a = Assignment::new(witness.facility_of.clone());
    let mut total = first_stage_cost(inst, &a);
    for w in 0..s {
        let mut value = 0;
        for i in 0..m {
            let tasks = a.tasks_on(i);
            let jobs = subproblem_jobs(inst, i, w, &tasks);
            let starts: Vec<i64> = tasks.iter().map(|&j| witness.starts[w][j]).collect();
            let v = objective.cp().evaluate(&jobs, &starts);
            let schedule = Schedule { starts, objective: v };
            cumcp::check_schedule(&jobs, inst.capacity[i], objective.cp(), &schedule)
                .map_err(|e| format!("facility {i}, scenario {w}: {e}"))?;
            value = match objective {
                ObjectiveMode::Makespan => value.max(v),
                _ => value + v,
            };
        }
        total += inst.scenarios[w].probability * value as f64;
    }
    Ok(total)
}
