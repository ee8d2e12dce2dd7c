//! Time-indexed scheduling blocks shared by the deterministic equivalent,
//! the time-indexed subproblem engine and the LP-based cuts.
//!
//! A block covers one facility `i` in one scenario `w`. Variable `z[j][t]`
//! is 1 when task `j` starts at time `t`; start times run from `r_j` to the
//! latest start that still finishes within the block horizon (and within the
//! deadline, if any). Each time step gets a capacity row over the jobs
//! running at that step.

use crate::instance::Instance;
use crate::lp::{LpModel, RowSense};

/// Largest horizon a time-indexed model is built for.
pub const HORIZON_CAP: i64 = 10_000;

/// `max_j r_j + sum_j max_{i,w} p^w_ij`: a sequential schedule of every task
/// finishes by then.
pub fn global_horizon(inst: &Instance) -> i64 {
    let (r_max, _) = inst.release_spread();
    r_max + (0..inst.num_tasks).map(|j| inst.max_processing(j)).sum::<i64>()
}

/// Horizon of the block `(i, w)`: `max_j r_j + sum_j p^w_ij`. Some optimal
/// schedule of any task subset for a regular objective completes by then.
pub fn block_horizon(inst: &Instance, facility: usize, scenario: usize) -> i64 {
    let (r_max, _) = inst.release_spread();
    r_max
        + (0..inst.num_tasks)
            .map(|j| inst.processing(scenario, facility, j))
            .sum::<i64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockObjective {
    Makespan,
    Tardiness,
    Feasibility,
}

/// Start variables of one block: for each task, `(t, column)` pairs.
#[derive(Debug, Clone, Default)]
pub struct Block {
    pub facility: usize,
    pub scenario: usize,
    pub starts: Vec<Vec<(i64, usize)>>,
    pub processing: Vec<i64>,
}

impl Block {
    /// `sum_t (t + p_j) z[j][t]`, the completion time of task `j`.
    pub fn completion(&self, task: usize) -> Vec<(usize, f64)> {
        let p = self.processing[task];
        self.starts[task]
            .iter()
            .map(|&(t, col)| (col, (t + p) as f64))
            .collect()
    }

    /// `sum_t z[j][t]`.
    pub fn assignment(&self, task: usize) -> Vec<(usize, f64)> {
        self.starts[task].iter().map(|&(_, col)| (col, 1.0)).collect()
    }

    /// Start columns of each task in time order; at most one is 1.
    pub fn start_sets(&self) -> Vec<Vec<usize>> {
        self.starts
            .iter()
            .filter(|s| s.len() > 1)
            .map(|s| s.iter().map(|&(_, c)| c).collect())
            .collect()
    }

    pub fn columns(&self) -> impl Iterator<Item = usize> + '_ {
        self.starts.iter().flatten().map(|&(_, c)| c)
    }

    /// Start time encoded by a 0/1 solution, for tasks that have one.
    pub fn start_of(&self, task: usize, x: &[f64]) -> Option<i64> {
        self.starts[task]
            .iter()
            .find(|&&(_, c)| x[c] > 0.5)
            .map(|&(t, _)| t)
    }
}

/// Adds start variables for `tasks` (others get none) and capacity rows.
pub fn add_block(lp: &mut LpModel, inst: &Instance, facility: usize, scenario: usize, tasks: &[usize]) -> Block {
    let horizon = block_horizon(inst, facility, scenario);
    let n = inst.num_tasks;
    let mut block = Block {
        facility,
        scenario,
        starts: vec![Vec::new(); n],
        processing: (0..n).map(|j| inst.processing(scenario, facility, j)).collect(),
    };
    for &j in tasks {
        let p = block.processing[j];
        let mut last = horizon - p;
        if let Some(d) = inst.deadline[j] {
            last = last.min(d - p);
        }
        for t in inst.release[j]..=last {
            let col = lp.add_named_col(format!("z_{facility}_{j}_{t}_{scenario}"), 0.0, 0.0, 1.0);
            block.starts[j].push((t, col));
        }
    }
    let cap = inst.capacity[facility] as f64;
    for t in 0..horizon {
        let mut coeffs = Vec::new();
        let mut load = 0.0;
        for &j in tasks {
            let p = block.processing[j];
            let c = inst.consumption[facility][j] as f64;
            let mut any = false;
            for &(s, col) in &block.starts[j] {
                if s <= t && t < s + p {
                    coeffs.push((col, c));
                    any = true;
                }
            }
            if any {
                load += c;
            }
        }
        if load > cap {
            lp.add_row(coeffs, RowSense::Le, cap);
        }
    }
    block
}

/// LP relaxation of one block with `sum_t z[j][t] = xbar_j` for every task.
#[derive(Debug, Clone)]
pub struct BlockLp {
    pub lp: LpModel,
    pub block: Block,
    /// Row index of the coupling row of each task.
    pub coupling: Vec<usize>,
}

/// Builds the block model over all tasks with the assignment right-hand
/// sides `xbar` (one entry per task). With `Feasibility` the objective is 0.
pub fn block_lp(
    inst: &Instance,
    facility: usize,
    scenario: usize,
    xbar: &[f64],
    objective: BlockObjective,
) -> BlockLp {
    let tasks: Vec<usize> = (0..inst.num_tasks).collect();
    build_block_model(inst, facility, scenario, &tasks, xbar, objective)
}

/// Time-indexed model of the tasks in `tasks` only, each forced to start
/// once; binary start variables make it an exact subproblem model.
pub fn block_exact(
    inst: &Instance,
    facility: usize,
    scenario: usize,
    tasks: &[usize],
    objective: BlockObjective,
) -> BlockLp {
    let xbar: Vec<f64> = (0..inst.num_tasks)
        .map(|j| if tasks.contains(&j) { 1.0 } else { 0.0 })
        .collect();
    build_block_model(inst, facility, scenario, tasks, &xbar, objective)
}

fn build_block_model(
    inst: &Instance,
    facility: usize,
    scenario: usize,
    tasks: &[usize],
    xbar: &[f64],
    objective: BlockObjective,
) -> BlockLp {
    let mut lp = LpModel::new();
    let block = add_block(&mut lp, inst, facility, scenario, tasks);
    let mut coupling = Vec::with_capacity(inst.num_tasks);
    for j in 0..inst.num_tasks {
        coupling.push(lp.add_row(block.assignment(j), RowSense::Eq, xbar[j]));
    }
    match objective {
        BlockObjective::Makespan => {
            let m = lp.add_named_col("makespan", 1.0, 0.0, f64::INFINITY);
            for &j in tasks {
                let mut row = vec![(m, 1.0)];
                row.extend(block.completion(j).into_iter().map(|(c, v)| (c, -v)));
                lp.add_row(row, RowSense::Ge, 0.0);
            }
        }
        BlockObjective::Tardiness => {
            let due = inst.due_date.as_ref().expect("tardiness needs due dates");
            for &j in tasks {
                let tj = lp.add_named_col(format!("tardiness_{j}"), 1.0, 0.0, f64::INFINITY);
                let mut row = vec![(tj, 1.0)];
                row.extend(block.completion(j).into_iter().map(|(c, v)| (c, -v)));
                lp.add_row(row, RowSense::Ge, -(due[j] as f64));
            }
        }
        BlockObjective::Feasibility => {}
    }
    BlockLp { lp, block, coupling }
}

/// Adds the blocks of every facility for one scenario, coupled to the
/// assignment columns `x[i][j]` by `sum_t z[i][j][t] = x[i][j]`, plus a
/// scenario value column (cost 0) bounded below by the scenario makespan or
/// total tardiness. Returns the blocks and the value column (`None` for
/// `Feasibility`).
pub fn add_scenario(
    lp: &mut LpModel,
    inst: &Instance,
    x: &[Vec<usize>],
    scenario: usize,
    objective: BlockObjective,
) -> (Vec<Block>, Option<usize>) {
    let tasks: Vec<usize> = (0..inst.num_tasks).collect();
    let blocks: Vec<Block> = (0..inst.num_facilities)
        .map(|i| add_block(lp, inst, i, scenario, &tasks))
        .collect();
    for (i, block) in blocks.iter().enumerate() {
        for j in 0..inst.num_tasks {
            let mut row = block.assignment(j);
            row.push((x[i][j], -1.0));
            lp.add_row(row, RowSense::Eq, 0.0);
        }
    }
    let value = match objective {
        BlockObjective::Feasibility => None,
        BlockObjective::Makespan => {
            let beta = lp.add_named_col(format!("value_{scenario}"), 0.0, 0.0, f64::INFINITY);
            for block in &blocks {
                for j in 0..inst.num_tasks {
                    let mut row = vec![(beta, 1.0)];
                    row.extend(block.completion(j).into_iter().map(|(c, v)| (c, -v)));
                    lp.add_row(row, RowSense::Ge, 0.0);
                }
            }
            Some(beta)
        }
        BlockObjective::Tardiness => {
            let due = inst.due_date.as_ref().expect("tardiness needs due dates");
            let beta = lp.add_named_col(format!("value_{scenario}"), 0.0, 0.0, f64::INFINITY);
            let mut total = vec![(beta, 1.0)];
            for j in 0..inst.num_tasks {
                let tj = lp.add_named_col(format!("tardiness_{j}_{scenario}"), 0.0, 0.0, f64::INFINITY);
                let mut row = vec![(tj, 1.0)];
                for block in &blocks {
                    row.extend(block.completion(j).into_iter().map(|(c, v)| (c, -v)));
                }
                lp.add_row(row, RowSense::Ge, -(due[j] as f64));
                total.push((tj, -1.0));
            }
            lp.add_row(total, RowSense::Ge, 0.0);
            Some(beta)
        }
    };
    (blocks, value)
}

/// Energy rows for one block with assignment columns `x[j]`: for each
/// release value `r` and each task `k` with `r_k >= r`,
/// `value >= r x_k + (1/K) sum_{j: r_j >= r} c_j p_j x_j`. When `k` is
/// assigned, the tasks released at `r` or later start no earlier than `r`
/// and need at least that long at full capacity.
pub fn add_energy_rows(lp: &mut LpModel, inst: &Instance, block: &Block, x: &[usize], value: usize) {
    let k = inst.capacity[block.facility] as f64;
    let mut releases = inst.release.clone();
    releases.sort_unstable();
    releases.dedup();
    for &r in &releases {
        let group: Vec<usize> = (0..inst.num_tasks)
            .filter(|&j| inst.release[j] >= r && !block.starts[j].is_empty())
            .collect();
        for &lead in &group {
            let mut row = vec![(value, 1.0)];
            for &j in &group {
                let c = inst.consumption[block.facility][j] as f64;
                let mut v = c * block.processing[j] as f64 / k;
                if j == lead {
                    v += r as f64;
                }
                row.push((x[j], -v));
            }
            lp.add_row(row, RowSense::Ge, 0.0);
        }
    }
}
