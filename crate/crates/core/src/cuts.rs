//! Benders cuts and subproblem relaxations over master variables.
//!
//! Every constructor returns inequalities `sum a v >= rhs` over
//! [`MasterVar`]s; the master builder maps them to columns.

use std::fmt;

use crate::instance::Instance;
use crate::lp::{self, LpModel, LpStatus, RowSense};
use crate::timeindexed::{self, BlockObjective};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MasterVar {
    X { facility: usize, task: usize },
    Beta { scenario: usize },
    BetaFacility { facility: usize, scenario: usize },
    BetaMax,
    /// Auxiliary variable of one analytic linearized cut.
    Z { facility: usize, scenario: usize, index: usize },
}

impl fmt::Display for MasterVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            MasterVar::X { facility, task } => write!(f, "x[{facility},{task}]"),
            MasterVar::Beta { scenario } => write!(f, "beta[{scenario}]"),
            MasterVar::BetaFacility { facility, scenario } => write!(f, "beta[{facility},{scenario}]"),
            MasterVar::BetaMax => write!(f, "beta_max"),
            MasterVar::Z { facility, scenario, index } => write!(f, "z[{facility},{scenario}#{index}]"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CutOrigin {
    Nogood,
    StrengthenedNogood,
    AnalyticLinearized,
    AnalyticWeak,
    IntegerLShaped,
    ClassicalLP,
    Tardiness,
    Relaxation,
    InitialBound,
}

impl fmt::Display for CutOrigin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CutOrigin::Nogood => "nogood",
            CutOrigin::StrengthenedNogood => "strengthened",
            CutOrigin::AnalyticLinearized => "analytic",
            CutOrigin::AnalyticWeak => "analytic-weak",
            CutOrigin::IntegerLShaped => "integer",
            CutOrigin::ClassicalLP => "lp",
            CutOrigin::Tardiness => "tardiness",
            CutOrigin::Relaxation => "relaxation",
            CutOrigin::InitialBound => "initial-bound",
        };
        f.write_str(s)
    }
}

/// `sum coeffs >= rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cut {
    pub coeffs: Vec<(MasterVar, f64)>,
    pub rhs: f64,
    pub origin: CutOrigin,
    pub facility: Option<usize>,
    pub scenario: Option<usize>,
    pub iteration: usize,
}

impl Cut {
    fn new(coeffs: Vec<(MasterVar, f64)>, rhs: f64, origin: CutOrigin) -> Self {
        Self {
            coeffs,
            rhs,
            origin,
            facility: None,
            scenario: None,
            iteration: 0,
        }
    }

    fn at(mut self, facility: Option<usize>, scenario: Option<usize>) -> Self {
        self.facility = facility;
        self.scenario = scenario;
        self
    }

    pub fn with_iteration(mut self, iteration: usize) -> Self {
        self.iteration = iteration;
        self
    }

    pub fn lhs(&self, value: impl Fn(MasterVar) -> f64) -> f64 {
        self.coeffs.iter().map(|&(v, a)| a * value(v)).sum()
    }

    pub fn is_satisfied(&self, value: impl Fn(MasterVar) -> f64, tol: f64) -> bool {
        self.lhs(value) >= self.rhs - tol
    }

    /// The bound this cut puts on `target` when every other variable takes
    /// `value`; `None` if `target` has no positive coefficient.
    pub fn implied_bound(&self, target: MasterVar, value: impl Fn(MasterVar) -> f64) -> Option<f64> {
        let a: f64 = self.coeffs.iter().filter(|(v, _)| *v == target).map(|&(_, a)| a).sum();
        if a <= 0.0 {
            return None;
        }
        let rest: f64 = self
            .coeffs
            .iter()
            .filter(|(v, _)| *v != target)
            .map(|&(v, c)| c * value(v))
            .sum();
        Some((self.rhs - rest) / a)
    }

    pub fn variables(&self) -> impl Iterator<Item = MasterVar> + '_ {
        self.coeffs.iter().map(|&(v, _)| v)
    }
}

impl fmt::Display for Cut {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.origin)?;
        match (self.facility, self.scenario) {
            (Some(i), Some(w)) => write!(f, " (i={i}, w={w})")?,
            (Some(i), None) => write!(f, " (i={i})")?,
            (None, Some(w)) => write!(f, " (w={w})")?,
            (None, None) => {}
        }
        write!(f, " it={}:", self.iteration)?;
        for (v, a) in &self.coeffs {
            write!(f, " {a:+} {v}")?;
        }
        write!(f, " >= {}", self.rhs)
    }
}

/// Exact value of one facility-scenario subproblem at a master solution.
#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemValue {
    pub facility: usize,
    pub scenario: usize,
    pub value: f64,
    /// Tasks assigned to the facility, ascending.
    pub jobs: Vec<usize>,
}

fn x(facility: usize, task: usize) -> MasterVar {
    MasterVar::X { facility, task }
}

fn beta_if(sp: &SubproblemValue) -> MasterVar {
    MasterVar::BetaFacility {
        facility: sp.facility,
        scenario: sp.scenario,
    }
}

fn nogood_with_origin(sp: &SubproblemValue, origin: CutOrigin) -> Option<Cut> {
    if sp.jobs.is_empty() {
        return None;
    }
    // beta - SP sum x >= SP (1 - |J|)
    let mut coeffs = vec![(beta_if(sp), 1.0)];
    coeffs.extend(sp.jobs.iter().map(|&j| (x(sp.facility, j), -sp.value)));
    let rhs = sp.value * (1.0 - sp.jobs.len() as f64);
    Some(Cut::new(coeffs, rhs, origin).at(Some(sp.facility), Some(sp.scenario)))
}

/// `beta_iw >= SP (sum_{J_i} x_ij - |J_i| + 1)`.
pub fn nogood_cut(sp: &SubproblemValue) -> Option<Cut> {
    nogood_with_origin(sp, CutOrigin::Nogood)
}

/// The nogood cut of a job set returned by [`strengthen_nogood`].
pub fn strengthened_nogood_cut(sp: &SubproblemValue) -> Option<Cut> {
    nogood_with_origin(sp, CutOrigin::StrengthenedNogood)
}

/// Default re-solve budget for strengthening: twice the job count.
pub fn default_budget(sp: &SubproblemValue) -> usize {
    2 * sp.jobs.len()
}

/// Greedy reduction of a job set: tries to drop each job in ascending order
/// and keeps the drop when `keep` accepts the smaller set. At most `budget`
/// calls to `keep`.
pub fn reduce_job_set(jobs: &[usize], budget: usize, mut keep: impl FnMut(&[usize]) -> bool) -> Vec<usize> {
    let mut current = jobs.to_vec();
    let mut calls = 0;
    let mut k = 0;
    while k < current.len() && current.len() > 1 {
        if calls >= budget {
            break;
        }
        let mut trial = current.clone();
        trial.remove(k);
        calls += 1;
        if keep(&trial) {
            current = trial;
        } else {
            k += 1;
        }
    }
    current
}

/// Removes jobs whose absence leaves the subproblem value unchanged.
/// `solve` returns the exact value of a job subset, or `None` if unknown
/// (treated as a change).
pub fn strengthen_nogood(
    sp: &SubproblemValue,
    mut solve: impl FnMut(&[usize]) -> Option<f64>,
    budget: usize,
) -> SubproblemValue {
    let jobs = reduce_job_set(&sp.jobs, budget, |subset| {
        solve(subset).is_some_and(|v| (v - sp.value).abs() < 1e-9)
    });
    SubproblemValue { jobs, ..sp.clone() }
}

/// Release spread of the analytic cuts for the job set of `sp`. Removing a
/// nonempty proper subset lowers the value by at most the removed work plus
/// `r+ - r-`; removing every job drops it to 0, which needs a spread of at
/// least `SP - sum p`. The larger of the two covers both cases.
pub fn analytic_spread(sp: &SubproblemValue, processing: &[i64], r_plus: i64, r_minus: i64) -> f64 {
    let work: i64 = sp.jobs.iter().map(|&j| processing[j]).sum();
    ((r_plus - r_minus) as f64).max(sp.value - work as f64)
}

/// The three rows of the linearized analytic cut, with
/// `s = analytic_spread(..)`:
/// `beta_iw >= SP - sum_{J_i} (1 - x_ij) p_ij - z`,
/// `z <= s sum_{J_i} (1 - x_ij)` and `z <= s`.
/// `processing[j]` is `p^w_ij` for all tasks; `z_index` names the fresh
/// auxiliary variable.
pub fn analytic_cut_linearized(
    sp: &SubproblemValue,
    processing: &[i64],
    r_plus: i64,
    r_minus: i64,
    z_index: usize,
) -> Vec<Cut> {
    if sp.jobs.is_empty() {
        return Vec::new();
    }
    let spread = analytic_spread(sp, processing, r_plus, r_minus);
    let z = MasterVar::Z {
        facility: sp.facility,
        scenario: sp.scenario,
        index: z_index,
    };
    let i = sp.facility;
    let total_p: f64 = sp.jobs.iter().map(|&j| processing[j] as f64).sum();
    // beta - sum p x + z >= SP - sum p
    let mut first = vec![(beta_if(sp), 1.0), (z, 1.0)];
    first.extend(sp.jobs.iter().map(|&j| (x(i, j), -(processing[j] as f64))));
    // -z - spread sum x >= -spread |J|
    let mut second = vec![(z, -1.0)];
    second.extend(sp.jobs.iter().map(|&j| (x(i, j), -spread)));
    let third = vec![(z, -1.0)];
    let at = |c: Cut| c.at(Some(i), Some(sp.scenario));
    vec![
        at(Cut::new(first, sp.value - total_p, CutOrigin::AnalyticLinearized)),
        at(Cut::new(second, -spread * sp.jobs.len() as f64, CutOrigin::AnalyticLinearized)),
        at(Cut::new(third, -spread, CutOrigin::AnalyticLinearized)),
    ]
}

/// The linearized analytic cut with `z` projected out:
/// `beta_iw >= SP - sum_{J_i} (1 - x_ij) p_ij - s` and
/// `beta_iw >= SP - sum_{J_i} (1 - x_ij) (p_ij + s)`. Since `z` only
/// appears with its upper bounds `min(s, s sum (1 - x))`, the two rows
/// describe the same set of `(beta, x)`, also for fractional `x`.
pub fn analytic_cut_projected(sp: &SubproblemValue, processing: &[i64], r_plus: i64, r_minus: i64) -> Vec<Cut> {
    if sp.jobs.is_empty() {
        return Vec::new();
    }
    let spread = analytic_spread(sp, processing, r_plus, r_minus);
    let capped = removal_cut(sp, processing, 0.0, sp.value - spread);
    let linear = removal_cut(sp, processing, spread, sp.value);
    vec![capped, linear]
}

/// `beta_iw >= rhs0 - sum_{J_i} (1 - x_ij) (p_ij + extra)`.
fn removal_cut(sp: &SubproblemValue, processing: &[i64], extra: f64, rhs0: f64) -> Cut {
    let mut coeffs = vec![(beta_if(sp), 1.0)];
    let mut rhs = rhs0;
    for &j in &sp.jobs {
        let w = processing[j] as f64 + extra;
        coeffs.push((x(sp.facility, j), -w));
        rhs -= w;
    }
    Cut::new(coeffs, rhs, CutOrigin::AnalyticLinearized).at(Some(sp.facility), Some(sp.scenario))
}

/// `beta_iw >= SP - sum_{J_i} (1 - x_ij) (p_ij + s)` with
/// `s = analytic_spread(..)`: one row, no auxiliary variable, implied by
/// the linearized cut. Dividing `s` by `|J_i|` here would overstate the
/// bound (two tasks released at 0 and 10 with unit work on a unit
/// facility: removing the late one leaves makespan 1, not 5).
pub fn analytic_cut_weak(sp: &SubproblemValue, processing: &[i64], r_plus: i64, r_minus: i64) -> Option<Cut> {
    if sp.jobs.is_empty() {
        return None;
    }
    let spread = analytic_spread(sp, processing, r_plus, r_minus);
    let mut cut = removal_cut(sp, processing, spread, sp.value);
    cut.origin = CutOrigin::AnalyticWeak;
    Some(cut)
}

/// `beta_iw >= (SP - LB)(sum_{J_i} x_ij - sum_{not J_i} x_ij - |J_i| + 1) + LB`.
pub fn integer_lshaped_cut(sp: &SubproblemValue, num_tasks: usize, lower_bound: f64) -> Cut {
    let scale = sp.value - lower_bound;
    let mut coeffs = vec![(beta_if(sp), 1.0)];
    for j in 0..num_tasks {
        let sign = if sp.jobs.contains(&j) { -1.0 } else { 1.0 };
        coeffs.push((x(sp.facility, j), sign * scale));
    }
    let rhs = scale * (1.0 - sp.jobs.len() as f64) + lower_bound;
    Cut::new(coeffs, rhs, CutOrigin::IntegerLShaped).at(Some(sp.facility), Some(sp.scenario))
}

/// Optimal LP relaxation value of one block at `xbar`, with the duals of
/// the assignment-coupling rows (`d value / d xbar_j`).
#[derive(Debug, Clone, PartialEq)]
pub struct BlockLpValue {
    pub facility: usize,
    pub scenario: usize,
    pub value: f64,
    pub coupling_duals: Vec<f64>,
    pub xbar: Vec<f64>,
}

/// Solves the time-indexed LP relaxation of block `(i, w)` at `xbar`.
pub fn solve_block_lp(
    inst: &Instance,
    facility: usize,
    scenario: usize,
    xbar: &[f64],
    objective: BlockObjective,
) -> Result<BlockLpValue, String> {
    let model = timeindexed::block_lp(inst, facility, scenario, xbar, objective);
    let sol = lp::solve(&model.lp);
    if sol.status != LpStatus::Optimal {
        return Err(format!(
            "block LP ({facility}, {scenario}) ended with {:?}",
            sol.status
        ));
    }
    Ok(BlockLpValue {
        facility,
        scenario,
        value: sol.objective,
        coupling_duals: model.coupling.iter().map(|&r| sol.duals[r]).collect(),
        xbar: xbar.to_vec(),
    })
}

/// `beta_iw >= v + sum_j y_j (x_ij - xbar_j)`: the LP value function is
/// convex in the coupling right-hand sides, so its subgradient bounds it
/// from below everywhere.
pub fn classical_lp_cut(v: &BlockLpValue) -> Cut {
    let b = MasterVar::BetaFacility {
        facility: v.facility,
        scenario: v.scenario,
    };
    let mut coeffs = vec![(b, 1.0)];
    let mut rhs = v.value;
    for (j, (&y, &xb)) in v.coupling_duals.iter().zip(&v.xbar).enumerate() {
        if y != 0.0 {
            coeffs.push((x(v.facility, j), -y));
            rhs -= y * xb;
        }
    }
    Cut::new(coeffs, rhs, CutOrigin::ClassicalLP).at(Some(v.facility), Some(v.scenario))
}

/// `beta_iw >= (1/K_i) sum_j c_ij p^w_ij x_ij` for every `(i, w)`.
pub fn makespan_relaxation(inst: &Instance) -> Vec<Cut> {
    let mut cuts = Vec::new();
    for w in 0..inst.num_scenarios() {
        for i in 0..inst.num_facilities {
            let k = inst.capacity[i] as f64;
            let mut coeffs = vec![(MasterVar::BetaFacility { facility: i, scenario: w }, 1.0)];
            for j in 0..inst.num_tasks {
                let e = (inst.consumption[i][j] * inst.processing(w, i, j)) as f64 / k;
                coeffs.push((x(i, j), -e));
            }
            cuts.push(Cut::new(coeffs, 0.0, CutOrigin::Relaxation).at(Some(i), Some(w)));
        }
    }
    cuts
}

/// Excludes every assignment that keeps the whole infeasible job set on
/// its facility: `sum_{J_i} (1 - x_ij) >= 1`.
pub fn cost_feasibility_cut(sp: &SubproblemValue) -> Option<Cut> {
    if sp.jobs.is_empty() {
        return None;
    }
    let coeffs = sp.jobs.iter().map(|&j| (x(sp.facility, j), -1.0)).collect();
    let rhs = 1.0 - sp.jobs.len() as f64;
    Some(Cut::new(coeffs, rhs, CutOrigin::Nogood).at(Some(sp.facility), Some(sp.scenario)))
}

/// Energy rows over time windows: for each facility and each pair of a
/// distinct release `t1` and a distinct finite deadline `t2 > t1`,
/// `(1/K_i) sum_{[r_j, d_j] in [t1, t2]} p^min_ij c_ij x_ij <= t2 - t1`.
pub fn cost_relaxation(inst: &Instance) -> Vec<Cut> {
    let mut releases: Vec<i64> = inst.release.clone();
    releases.sort_unstable();
    releases.dedup();
    let mut deadlines: Vec<i64> = inst.deadline.iter().flatten().copied().collect();
    deadlines.sort_unstable();
    deadlines.dedup();
    let mut cuts = Vec::new();
    for i in 0..inst.num_facilities {
        let k = inst.capacity[i] as f64;
        for &t1 in &releases {
            for &t2 in &deadlines {
                if t1 >= t2 {
                    continue;
                }
                let coeffs: Vec<(MasterVar, f64)> = (0..inst.num_tasks)
                    .filter(|&j| inst.release[j] >= t1 && inst.deadline[j].is_some_and(|d| d <= t2))
                    .map(|j| {
                        let e = (inst.min_processing(i, j) * inst.consumption[i][j]) as f64 / k;
                        (x(i, j), -e)
                    })
                    .collect();
                if coeffs.is_empty() {
                    continue;
                }
                cuts.push(Cut::new(coeffs, -((t2 - t1) as f64), CutOrigin::Relaxation).at(Some(i), None));
            }
        }
    }
    cuts
}

/// `beta_w >= sum_i (SP_iw - sum_{j in J_i} (sum_{j' in J_i} p^w_ij' - due_j)^+ (1 - x_ij))`
/// from the subproblem values of every facility in scenario `w`.
pub fn tardiness_cut(inst: &Instance, sps: &[SubproblemValue]) -> Option<Cut> {
    let w = sps.first()?.scenario;
    let due = inst.due_date.as_ref()?;
    let mut coeffs = vec![(MasterVar::Beta { scenario: w }, 1.0)];
    let mut rhs = 0.0;
    for sp in sps {
        rhs += sp.value;
        let load: i64 = sp.jobs.iter().map(|&j| inst.processing(w, sp.facility, j)).sum();
        for &j in &sp.jobs {
            let a = (load - due[j]).max(0) as f64;
            if a > 0.0 {
                // -a (1 - x) moves to: a x on the left of ... >= SP - a.
                coeffs.push((x(sp.facility, j), -a));
                rhs -= a;
            }
        }
    }
    Some(Cut::new(coeffs, rhs, CutOrigin::Tardiness).at(None, Some(w)))
}

/// Two families per `(i, w)`, plus `beta_iw >= 0` (a column bound of the
/// master):
///
/// - `beta_iw >= (1/K_i) sum_{due_j' <= due_j} p^min_ij' c_ij' x_ij' - due_j`,
/// - `beta_iw >= (1/K_i) sum_{due_j' <= due_j} p^w_ij' c_ij' x_ij' - due_j - (1 - x_ij) U_ijw`
///   with `U_ijw = max(0, (1/K_i) sum_{due_j' <= due_j} p^w_ij' c_ij' - due_j)`.
///
/// Both hold because the last of the tasks due by `due_j` to finish
/// completes no earlier than their total energy over the capacity.
pub fn tardiness_relaxations(inst: &Instance) -> Vec<Cut> {
    let Some(due) = inst.due_date.as_ref() else {
        return Vec::new();
    };
    let n = inst.num_tasks;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&j| (due[j], j));
    let mut cuts = Vec::new();
    for w in 0..inst.num_scenarios() {
        for i in 0..inst.num_facilities {
            let k = inst.capacity[i] as f64;
            let b = MasterVar::BetaFacility { facility: i, scenario: w };
            for &j in &order {
                let group: Vec<usize> = (0..n).filter(|&l| due[l] <= due[j]).collect();
                let dj = due[j] as f64;
                let mut coeffs = vec![(b, 1.0)];
                for &l in &group {
                    let e = (inst.min_processing(i, l) * inst.consumption[i][l]) as f64 / k;
                    coeffs.push((x(i, l), -e));
                }
                cuts.push(Cut::new(coeffs, -dj, CutOrigin::Relaxation).at(Some(i), Some(w)));
                let energy: Vec<(usize, f64)> = group
                    .iter()
                    .map(|&l| (l, (inst.processing(w, i, l) * inst.consumption[i][l]) as f64 / k))
                    .collect();
                let u = (energy.iter().map(|&(_, e)| e).sum::<f64>() - dj).max(0.0);
                // beta - sum e x - U x_ij >= -d - U
                let mut coeffs = vec![(b, 1.0)];
                for &(l, e) in &energy {
                    let extra = if l == j { u } else { 0.0 };
                    coeffs.push((x(i, l), -(e + extra)));
                }
                if !energy.iter().any(|&(l, _)| l == j) {
                    coeffs.push((x(i, j), -u));
                }
                cuts.push(Cut::new(coeffs, -dj - u, CutOrigin::Relaxation).at(Some(i), Some(w)));
            }
        }
    }
    cuts
}

/// Solves the LP relaxation of the single-scenario deterministic
/// equivalent and returns its value, a lower bound on the scenario value
/// of every assignment.
pub fn scenario_lp_bound(inst: &Instance, scenario: usize, objective: BlockObjective) -> Result<f64, String> {
    let mut model = LpModel::new();
    let xs: Vec<Vec<usize>> = (0..inst.num_facilities)
        .map(|i| {
            (0..inst.num_tasks)
                .map(|j| model.add_named_col(format!("x_{i}_{j}"), 0.0, 0.0, 1.0))
                .collect()
        })
        .collect();
    for j in 0..inst.num_tasks {
        let row = (0..inst.num_facilities).map(|i| (xs[i][j], 1.0)).collect();
        model.add_row(row, RowSense::Eq, 1.0);
    }
    let (_, value) = timeindexed::add_scenario(&mut model, inst, &xs, scenario, objective);
    let Some(value) = value else {
        return Ok(0.0);
    };
    model.objective[value] = 1.0;
    let sol = lp::solve(&model);
    if sol.status != LpStatus::Optimal {
        return Err(format!("scenario {scenario} LP ended with {:?}", sol.status));
    }
    Ok(sol.objective)
}

/// `beta_w >= LP bound of scenario w` for every scenario.
pub fn initial_scenario_bounds(inst: &Instance, objective: BlockObjective) -> Result<Vec<Cut>, String> {
    (0..inst.num_scenarios())
        .map(|w| {
            let bound = scenario_lp_bound(inst, w, objective)?;
            let coeffs = vec![(MasterVar::Beta { scenario: w }, 1.0)];
            Ok(Cut::new(coeffs, bound, CutOrigin::InitialBound).at(None, Some(w)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn sp(jobs: Vec<usize>, value: f64) -> SubproblemValue {
        SubproblemValue {
            facility: 0,
            scenario: 0,
            value,
            jobs,
        }
    }

    fn point(on: &[usize], n: usize, beta: f64) -> impl Fn(MasterVar) -> f64 {
        let mut vals = HashMap::new();
        for j in 0..n {
            vals.insert(x(0, j), if on.contains(&j) { 1.0 } else { 0.0 });
        }
        move |v| match v {
            MasterVar::BetaFacility { .. } => beta,
            other => vals.get(&other).copied().unwrap_or(0.0),
        }
    }

    #[test]
    fn nogood_binds_at_generating_point() {
        let cut = nogood_cut(&sp(vec![1, 2], 9.0)).unwrap();
        let b = cut.implied_bound(beta_if(&sp(vec![], 0.0)), point(&[1, 2], 3, 0.0)).unwrap();
        assert!((b - 9.0).abs() < 1e-12);
        let b = cut.implied_bound(beta_if(&sp(vec![], 0.0)), point(&[2], 3, 0.0)).unwrap();
        assert!(b <= 0.0);
        assert!(nogood_cut(&sp(vec![], 3.0)).is_none());
    }

    #[test]
    fn analytic_linearized_drop_one_job() {
        let p = [3, 4, 5];
        let cuts = analytic_cut_linearized(&sp(vec![0, 1, 2], 15.0), &p, 7, 2, 0);
        assert_eq!(cuts.len(), 3);
        // Drop job 1: z may reach min(5 * 1, 5) = 5.
        let z = 5.0;
        let val = |v: MasterVar| match v {
            MasterVar::X { task, .. } => if task == 1 { 0.0 } else { 1.0 },
            MasterVar::Z { .. } => z,
            _ => 0.0,
        };
        let b = cuts[0].implied_bound(beta_if(&sp(vec![], 0.0)), val).unwrap();
        assert!((b - (15.0 - 4.0 - 5.0)).abs() < 1e-12);
    }

    #[test]
    fn analytic_spread_covers_emptied_facility() {
        // One task released at 17 with p = 11; the earliest release is 3.
        let one = sp(vec![0], 28.0);
        assert_eq!(analytic_spread(&one, &[11], 17, 3), 17.0);
        for cut in analytic_cut_projected(&one, &[11], 17, 3) {
            let b = cut.implied_bound(beta_if(&one), point(&[], 1, 0.0)).unwrap();
            assert!(b <= 0.0, "{cut}");
        }
    }

    #[test]
    fn projected_rows_match_linearized_bound() {
        let p = [3, 4, 5];
        let s = sp(vec![0, 1, 2], 15.0);
        let rows = analytic_cut_projected(&s, &p, 7, 2);
        for on in [vec![0, 1, 2], vec![0, 2], vec![2], vec![]] {
            let removed = 3 - on.len();
            let lost: f64 = (0..3).filter(|j| !on.contains(j)).map(|j| p[j] as f64).sum();
            let want = 15.0 - lost - 5.0 * (removed.min(1) as f64);
            let got = rows
                .iter()
                .map(|c| c.implied_bound(beta_if(&s), point(&on, 3, 0.0)).unwrap())
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((got - want).abs() < 1e-12, "{on:?}: {got} vs {want}");
        }
    }

    #[test]
    fn analytic_weak_sharp_and_valid_for_late_release() {
        let p = [1, 1];
        // Releases 0 and 10, unit work, unit capacity: makespan 11.
        let cut = analytic_cut_weak(&sp(vec![0, 1], 11.0), &p, 10, 0).unwrap();
        let b = cut.implied_bound(beta_if(&sp(vec![], 0.0)), point(&[0, 1], 2, 0.0)).unwrap();
        assert!((b - 11.0).abs() < 1e-12);
        // Without the late task the makespan is 1.
        let b = cut.implied_bound(beta_if(&sp(vec![], 0.0)), point(&[0], 2, 0.0)).unwrap();
        assert!(b <= 1.0);
        let b = cut.implied_bound(beta_if(&sp(vec![], 0.0)), point(&[], 2, 0.0)).unwrap();
        assert!((b - (11.0 - 11.0 - 11.0)).abs() < 1e-12);
    }

    #[test]
    fn integer_cut_vacuous_after_adding_a_job() {
        let cut = integer_lshaped_cut(&sp(vec![0], 8.0), 3, 0.0);
        let b = cut.implied_bound(beta_if(&sp(vec![], 0.0)), point(&[0], 3, 0.0)).unwrap();
        assert!((b - 8.0).abs() < 1e-12);
        let b = cut.implied_bound(beta_if(&sp(vec![], 0.0)), point(&[0, 2], 3, 0.0)).unwrap();
        assert!(b <= 0.0);
    }

    #[test]
    fn reduce_respects_budget() {
        let all = vec![0, 1, 2, 3];
        assert_eq!(reduce_job_set(&all, 0, |_| true), all);
        assert_eq!(reduce_job_set(&all, 2, |_| true), vec![2, 3]);
        assert_eq!(reduce_job_set(&[5], 4, |_| true), vec![5]);
        assert_eq!(reduce_job_set(&all, 8, |s| s.contains(&2)), vec![2]);
    }

    #[test]
    fn cut_text_form() {
        let cut = nogood_cut(&sp(vec![1], 4.0)).unwrap().with_iteration(3);
        assert_eq!(cut.to_string(), "nogood (i=0, w=0) it=3: +1 beta[0,0] -4 x[0,1] >= 0");
    }
}
