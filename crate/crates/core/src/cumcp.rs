//! Exact single-resource cumulative scheduling.
//!
//! One facility, one scenario: every job has a release time, an optional
//! deadline, a due date, a processing time and a resource consumption, and
//! the running jobs may never consume more than the capacity. Three
//! objectives are supported: makespan, total tardiness, and pure feasibility.
//!
//! The search is a depth-first branch and bound over serial schedule
//! generation: each node picks one unscheduled job and places it at its
//! earliest start that respects the release time and the resource profile of
//! the jobs already placed. Over all job orders this enumerates every active
//! schedule, and for regular objectives (makespan, total tardiness,
//! deadline feasibility) some active schedule is optimal.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Job {
    pub id: usize,
    pub release: i64,
    pub deadline: Option<i64>,
    pub due_date: i64,
    pub processing: i64,
    pub consumption: i64,
}

impl Job {
    pub fn new(id: usize, release: i64, processing: i64, consumption: i64) -> Self {
        Self {
            id,
            release,
            deadline: None,
            due_date: 0,
            processing,
            consumption,
        }
    }

    pub fn with_deadline(mut self, deadline: i64) -> Self {
        self.deadline = Some(deadline);
        self
    }

    pub fn with_due_date(mut self, due_date: i64) -> Self {
        self.due_date = due_date;
        self
    }

    fn energy(&self) -> i64 {
        self.processing * self.consumption
    }
}

/// Start times aligned with the input job slice, plus the objective value
/// (makespan, total tardiness, or 0 for feasibility).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    pub starts: Vec<i64>,
    pub objective: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CpStatus {
    Optimal,
    Feasible,
    Infeasible,
    TimeLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Makespan,
    Tardiness,
    Feasibility,
}

impl Objective {
    pub fn evaluate(self, jobs: &[Job], starts: &[i64]) -> i64 {
        match self {
            Objective::Makespan => makespan(jobs, starts),
            Objective::Tardiness => total_tardiness(jobs, starts),
            Objective::Feasibility => 0,
        }
    }
}

pub fn makespan(jobs: &[Job], starts: &[i64]) -> i64 {
    jobs.iter()
        .zip(starts)
        .map(|(j, &s)| s + j.processing)
        .max()
        .unwrap_or(0)
}

pub fn total_tardiness(jobs: &[Job], starts: &[i64]) -> i64 {
    jobs.iter()
        .zip(starts)
        .map(|(j, &s)| (s + j.processing - j.due_date).max(0))
        .sum()
}

#[derive(Debug, Clone)]
pub struct CpOptions {
    pub time_limit: Duration,
    /// A known upper bound on the optimal value; nodes that cannot beat or
    /// match it are pruned.
    pub upper_bound_hint: Option<i64>,
    /// Record the explored tree as text in [`CpOutcome::trace`].
    pub trace: bool,
}

impl Default for CpOptions {
    fn default() -> Self {
        Self {
            time_limit: Duration::from_secs(3600),
            upper_bound_hint: None,
            trace: false,
        }
    }
}

impl CpOptions {
    pub fn with_time_limit(time_limit: Duration) -> Self {
        Self {
            time_limit,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct CpOutcome {
    pub status: CpStatus,
    /// Objective of the returned schedule, if any.
    pub value: Option<i64>,
    /// Proven lower bound on the optimum (equals `value` when optimal).
    pub lower_bound: i64,
    pub schedule: Option<Schedule>,
    pub nodes: u64,
    pub trace: Option<String>,
}

impl CpOutcome {
    fn infeasible(nodes: u64, trace: Option<String>) -> Self {
        Self {
            status: CpStatus::Infeasible,
            value: None,
            lower_bound: 0,
            schedule: None,
            nodes,
            trace,
        }
    }
}

pub fn solve_min_makespan(jobs: &[Job], capacity: i64, options: &CpOptions) -> CpOutcome {
    solve(jobs, capacity, Objective::Makespan, options)
}

pub fn solve_min_tardiness(jobs: &[Job], capacity: i64, options: &CpOptions) -> CpOutcome {
    solve(jobs, capacity, Objective::Tardiness, options)
}

/// Deadline feasibility. `Feasible` carries a witness schedule.
pub fn check_feasibility(jobs: &[Job], capacity: i64, options: &CpOptions) -> CpOutcome {
    solve(jobs, capacity, Objective::Feasibility, options)
}

/// `max(ceil(sum c p / K) + min r, max (r + p))`, 0 for no jobs.
pub fn energy_lower_bound(jobs: &[Job], capacity: i64) -> i64 {
    if jobs.is_empty() {
        return 0;
    }
    let energy: i64 = jobs.iter().map(Job::energy).sum();
    let min_release = jobs.iter().map(|j| j.release).min().unwrap_or(0);
    let longest = jobs.iter().map(|j| j.release + j.processing).max().unwrap_or(0);
    (div_ceil(energy, capacity) + min_release).max(longest)
}

fn div_ceil(a: i64, b: i64) -> i64 {
    (a + b - 1).div_euclid(b)
}

/// Replays the resource profile of `schedule` with an event sweep and checks
/// windows, capacity and the stated objective value.
pub fn check_schedule(
    jobs: &[Job],
    capacity: i64,
    objective: Objective,
    schedule: &Schedule,
) -> Result<(), String> {
    if schedule.starts.len() != jobs.len() {
        return Err(format!(
            "{} start times for {} jobs",
            schedule.starts.len(),
            jobs.len()
        ));
    }
    let mut events = Vec::with_capacity(2 * jobs.len());
    for (job, &s) in jobs.iter().zip(&schedule.starts) {
        if s < job.release {
            return Err(format!("job {} starts at {s} before release {}", job.id, job.release));
        }
        if let Some(d) = job.deadline {
            if s + job.processing > d {
                return Err(format!("job {} ends after deadline {d}", job.id));
            }
        }
        events.push((s, job.consumption));
        events.push((s + job.processing, -job.consumption));
    }
    // Releases before acquisitions at equal times.
    events.sort_by_key(|&(t, delta)| (t, delta));
    let mut load = 0;
    for (t, delta) in events {
        load += delta;
        if load > capacity {
            return Err(format!("load {load} exceeds capacity {capacity} at time {t}"));
        }
    }
    let expected = objective.evaluate(jobs, &schedule.starts);
    if expected != schedule.objective {
        return Err(format!(
            "objective {} recorded, {} recomputed",
            schedule.objective, expected
        ));
    }
    Ok(())
}

/// Serial schedule in nondecreasing release order (ties by position).
/// Ignores deadlines.
pub fn serial_schedule(jobs: &[Job], capacity: i64) -> Vec<i64> {
    let mut order: Vec<usize> = (0..jobs.len()).collect();
    order.sort_by_key(|&k| (jobs[k].release, k));
    let mut profile = Profile::new(horizon(jobs));
    let mut starts = vec![0; jobs.len()];
    for k in order {
        let s = profile
            .earliest_start(&jobs[k], capacity, None)
            .expect("open horizon admits every job");
        profile.add(s, &jobs[k], 1);
        starts[k] = s;
    }
    starts
}

fn horizon(jobs: &[Job]) -> i64 {
    jobs.iter().map(|j| j.release).max().unwrap_or(0) + jobs.iter().map(|j| j.processing).sum::<i64>()
}

/// Time-indexed resource usage.
struct Profile {
    usage: Vec<i64>,
}

impl Profile {
    fn new(horizon: i64) -> Self {
        Self {
            usage: vec![0; horizon.max(0) as usize + 1],
        }
    }

    fn at(&self, t: i64) -> i64 {
        self.usage.get(t as usize).copied().unwrap_or(0)
    }

    fn add(&mut self, start: i64, job: &Job, sign: i64) {
        let end = (start + job.processing) as usize;
        if end > self.usage.len() {
            self.usage.resize(end, 0);
        }
        for u in &mut self.usage[start as usize..end] {
            *u += sign * job.consumption;
        }
    }

    /// Earliest `t >= release` with room for `job` over `[t, t + p)`, and
    /// `t + p <= latest_end` when a limit is given.
    fn earliest_start(&self, job: &Job, capacity: i64, latest_end: Option<i64>) -> Option<i64> {
        let room = capacity - job.consumption;
        let mut t = job.release;
        'scan: loop {
            if let Some(limit) = latest_end {
                if t + job.processing > limit {
                    return None;
                }
            }
            if t as usize >= self.usage.len() {
                return Some(t);
            }
            let end = t + job.processing;
            let mut u = end - 1;
            while u >= t {
                if self.at(u) > room {
                    t = u + 1;
                    continue 'scan;
                }
                u -= 1;
            }
            return Some(t);
        }
    }
}

struct Search<'a> {
    jobs: &'a [Job],
    capacity: i64,
    objective: Objective,
    deadline_at: Instant,
    profile: Profile,
    starts: Vec<i64>,
    placed: Vec<bool>,
    best_value: Option<i64>,
    best_starts: Option<Vec<i64>>,
    /// Prune any node whose bound is >= this.
    cutoff: i64,
    nodes: u64,
    timed_out: bool,
    seen: HashSet<Vec<i64>>,
    trace: Option<String>,
}

const MEMO_CAPACITY: usize = 1 << 20;
const UNPLACED: i64 = i64::MIN;

impl Search<'_> {
    fn record(&mut self, value: i64) {
        if self.best_value.is_none_or(|b| value < b) {
            self.best_value = Some(value);
            self.best_starts = Some(self.starts.clone());
            self.cutoff = self.cutoff.min(value);
        }
    }

    fn done(&self) -> bool {
        self.timed_out || (self.objective == Objective::Feasibility && self.best_value.is_some())
    }

    fn dfs(&mut self, depth: usize, partial_value: i64) {
        if self.done() {
            return;
        }
        self.nodes += 1;
        if Instant::now() >= self.deadline_at {
            self.timed_out = true;
            return;
        }
        if depth == self.jobs.len() {
            let value = self.objective.evaluate(self.jobs, &self.starts);
            if let Some(t) = self.trace.as_mut() {
                let _ = writeln!(t, "{}leaf value={value}", "  ".repeat(depth));
            }
            self.record(value);
            return;
        }
        if self.seen.len() < MEMO_CAPACITY && !self.seen.insert(self.starts.clone()) {
            return;
        }

        // Earliest starts of the open jobs under the current profile.
        let mut children: Vec<(usize, i64)> = Vec::with_capacity(self.jobs.len() - depth);
        for (k, job) in self.jobs.iter().enumerate() {
            if self.placed[k] {
                continue;
            }
            match self.profile.earliest_start(job, self.capacity, job.deadline) {
                Some(s) => children.push((k, s)),
                None => return,
            }
        }

        let bound = self.node_bound(partial_value, &children);
        if bound >= self.cutoff {
            return;
        }
        children.sort_by_key(|&(k, s)| match self.objective {
            Objective::Tardiness => (self.jobs[k].due_date, s, k),
            _ => (s, 0, k),
        });

        for (k, s) in children {
            let job = self.jobs[k];
            if let Some(t) = self.trace.as_mut() {
                let _ = writeln!(t, "{}job {} @ {s} (bound {bound})", "  ".repeat(depth), job.id);
            }
            self.profile.add(s, &job, 1);
            self.starts[k] = s;
            self.placed[k] = true;
            let value = match self.objective {
                Objective::Makespan => partial_value.max(s + job.processing),
                Objective::Tardiness => partial_value + (s + job.processing - job.due_date).max(0),
                Objective::Feasibility => 0,
            };
            self.dfs(depth + 1, value);
            self.placed[k] = false;
            self.starts[k] = UNPLACED;
            self.profile.add(s, &job, -1);
            if self.done() {
                return;
            }
        }
    }

    fn node_bound(&self, partial_value: i64, open: &[(usize, i64)]) -> i64 {
        match self.objective {
            Objective::Makespan => {
                let mut lb = partial_value;
                let mut t0 = i64::MAX;
                let mut energy = 0;
                for &(k, s) in open {
                    let job = &self.jobs[k];
                    lb = lb.max(s + job.processing);
                    t0 = t0.min(s);
                    energy += job.energy();
                }
                if open.is_empty() {
                    return lb;
                }
                // Free capacity after t0 must absorb the open energy.
                let mut t = t0;
                let busy_until = self.profile.usage.len() as i64;
                while energy > 0 && t < busy_until {
                    energy -= self.capacity - self.profile.at(t);
                    t += 1;
                }
                if energy > 0 {
                    t += div_ceil(energy, self.capacity);
                }
                lb.max(t)
            }
            Objective::Tardiness => {
                partial_value
                    + open
                        .iter()
                        .map(|&(k, s)| {
                            let job = &self.jobs[k];
                            (s + job.processing - job.due_date).max(0)
                        })
                        .sum::<i64>()
            }
            Objective::Feasibility => 0,
        }
    }
}

/// Optimizes `objective` over all resource-feasible schedules.
pub fn solve(jobs: &[Job], capacity: i64, objective: Objective, options: &CpOptions) -> CpOutcome {
    let started = Instant::now();
    let mut trace = options.trace.then(String::new);
    if jobs.iter().any(|j| j.consumption > capacity || j.processing < 1) {
        return CpOutcome::infeasible(0, trace);
    }
    for j in jobs {
        if let Some(d) = j.deadline {
            if j.release + j.processing > d {
                return CpOutcome::infeasible(0, trace);
            }
        }
    }
    if jobs.is_empty() {
        return CpOutcome {
            status: match objective {
                Objective::Feasibility => CpStatus::Feasible,
                _ => CpStatus::Optimal,
            },
            value: Some(0),
            lower_bound: 0,
            schedule: Some(Schedule {
                starts: vec![],
                objective: 0,
            }),
            nodes: 0,
            trace,
        };
    }

    let root_bound = match objective {
        Objective::Makespan => energy_lower_bound(jobs, capacity),
        Objective::Tardiness => jobs
            .iter()
            .map(|j| (j.release + j.processing - j.due_date).max(0))
            .sum(),
        Objective::Feasibility => 0,
    };

    let mut search = Search {
        jobs,
        capacity,
        objective,
        deadline_at: started + options.time_limit,
        profile: Profile::new(horizon(jobs)),
        starts: vec![UNPLACED; jobs.len()],
        placed: vec![false; jobs.len()],
        best_value: None,
        best_starts: None,
        cutoff: i64::MAX,
        nodes: 0,
        timed_out: false,
        seen: HashSet::new(),
        trace: trace.take(),
    };

    // Serial schedule by release time seeds the incumbent.
    let serial = serial_schedule(jobs, capacity);
    let serial_ok = jobs
        .iter()
        .zip(&serial)
        .all(|(j, &s)| j.deadline.is_none_or(|d| s + j.processing <= d));
    if serial_ok {
        search.starts.clone_from(&serial);
        let value = objective.evaluate(jobs, &serial);
        search.record(value);
        search.starts = vec![UNPLACED; jobs.len()];
    }
    if let Some(hint) = options.upper_bound_hint {
        search.cutoff = search.cutoff.min(hint.saturating_add(1));
    }

    let proven = search.best_value.is_some_and(|v| v <= root_bound);
    if !proven && !search.done() {
        search.dfs(0, 0);
    }

    let nodes = search.nodes;
    let trace = search.trace.take();
    let schedule = search.best_starts.take().map(|starts| Schedule {
        objective: objective.evaluate(jobs, &starts),
        starts,
    });
    if search.timed_out {
        return CpOutcome {
            status: CpStatus::TimeLimit,
            value: schedule.as_ref().map(|s| s.objective),
            lower_bound: root_bound,
            schedule,
            nodes,
            trace,
        };
    }
    match schedule {
        Some(schedule) => CpOutcome {
            status: match objective {
                Objective::Feasibility => CpStatus::Feasible,
                _ => CpStatus::Optimal,
            },
            value: Some(schedule.objective),
            lower_bound: schedule.objective,
            schedule: Some(schedule),
            nodes,
            trace,
        },
        None if options.upper_bound_hint.is_some() && objective != Objective::Feasibility => {
            // The hint was below the optimum; search again without it.
            let relaxed = CpOptions {
                upper_bound_hint: None,
                time_limit: options.time_limit.saturating_sub(started.elapsed()),
                trace: options.trace,
            };
            solve(jobs, capacity, objective, &relaxed)
        }
        None => CpOutcome::infeasible(nodes, trace),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> CpOptions {
        CpOptions::default()
    }

    #[test]
    fn single_job_makespan() {
        let out = solve_min_makespan(&[Job::new(0, 3, 5, 4)], 10, &opts());
        assert_eq!(out.status, CpStatus::Optimal);
        assert_eq!(out.value, Some(8));
    }

    #[test]
    fn full_capacity_jobs_are_sequential() {
        let jobs = [Job::new(0, 0, 3, 10), Job::new(1, 0, 4, 10)];
        let out = solve_min_makespan(&jobs, 10, &opts());
        assert_eq!(out.value, Some(7));
        check_schedule(&jobs, 10, Objective::Makespan, out.schedule.as_ref().unwrap()).unwrap();
        assert_eq!(energy_lower_bound(&jobs, 10), 7);
    }

    #[test]
    fn empty_and_oversized() {
        let out = solve_min_makespan(&[], 10, &opts());
        assert_eq!((out.status, out.value), (CpStatus::Optimal, Some(0)));
        let out = solve_min_makespan(&[Job::new(0, 0, 2, 11)], 10, &opts());
        assert_eq!(out.status, CpStatus::Infeasible);
        let out = solve_min_tardiness(&[Job::new(0, 0, 2, 11)], 10, &opts());
        assert_eq!(out.status, CpStatus::Infeasible);
    }

    #[test]
    fn tardiness_single_job() {
        let on_time = solve_min_tardiness(&[Job::new(0, 0, 5, 1).with_due_date(5)], 10, &opts());
        assert_eq!(on_time.value, Some(0));
        let late = solve_min_tardiness(&[Job::new(0, 0, 5, 1).with_due_date(3)], 10, &opts());
        assert_eq!(late.value, Some(2));
    }

    #[test]
    fn tardiness_needs_reordering() {
        // Release-ordered serial schedule starts the short job first.
        let jobs = [
            Job::new(0, 0, 1, 10).with_due_date(11),
            Job::new(1, 0, 10, 10).with_due_date(10),
        ];
        let out = solve_min_tardiness(&jobs, 10, &opts());
        assert_eq!(out.value, Some(0));
    }

    #[test]
    fn feasibility_windows() {
        let out = check_feasibility(&[Job::new(0, 0, 5, 1).with_deadline(4)], 10, &opts());
        assert_eq!(out.status, CpStatus::Infeasible);
        let out = check_feasibility(&[Job::new(0, 0, 5, 1).with_deadline(5)], 10, &opts());
        assert_eq!(out.status, CpStatus::Feasible);
        assert_eq!(out.schedule.unwrap().starts, vec![0]);
    }

    #[test]
    fn feasibility_needs_non_release_order() {
        let jobs = [
            Job::new(0, 0, 4, 10).with_deadline(20),
            Job::new(1, 1, 3, 10).with_deadline(4),
        ];
        let out = check_feasibility(&jobs, 10, &opts());
        assert_eq!(out.status, CpStatus::Feasible);
        let s = out.schedule.unwrap();
        check_schedule(&jobs, 10, Objective::Feasibility, &s).unwrap();
    }

    #[test]
    fn energy_bound_release_term() {
        assert_eq!(energy_lower_bound(&[Job::new(0, 3, 5, 1)], 10), 8);
        assert_eq!(energy_lower_bound(&[], 10), 0);
    }

    #[test]
    fn hint_below_optimum_still_exact() {
        let jobs = [Job::new(0, 0, 3, 10), Job::new(1, 0, 4, 10)];
        let out = solve_min_makespan(
            &jobs,
            10,
            &CpOptions {
                upper_bound_hint: Some(5),
                ..opts()
            },
        );
        assert_eq!(out.value, Some(7));
    }

    #[test]
    fn trace_is_recorded() {
        let jobs = [Job::new(0, 0, 3, 6), Job::new(1, 1, 4, 6), Job::new(2, 0, 2, 5)];
        let out = solve_min_makespan(
            &jobs,
            10,
            &CpOptions {
                trace: true,
                ..opts()
            },
        );
        assert!(out.trace.unwrap().contains("job"));
    }

    #[test]
    fn zero_time_limit_reports_incumbent() {
        let jobs: Vec<Job> = (0..8).map(|k| Job::new(k, k as i64, 3 + k as i64 % 4, 4 + k as i64 % 5)).collect();
        let out = solve_min_makespan(&jobs, 10, &CpOptions::with_time_limit(Duration::ZERO));
        if out.status == CpStatus::TimeLimit {
            assert!(out.value.unwrap() >= out.lower_bound);
        }
    }
}
