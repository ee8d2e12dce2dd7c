//! Branch-and-bound over [`LpModel`] with lazy constraints.
//!
//! Nodes are chosen best-bound first, but after branching the search keeps
//! diving into one child until that path is pruned. Integer-feasible LP
//! points are rounded and handed to the lazy callback, which either accepts
//! them or returns cuts that the point violates. Cuts go into a global pool
//! (they are rows of the shared simplex engine) and stay active everywhere.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::lp::{LpModel, LpRow, LpSolution, LpStatus, RowSense, Simplex};

pub const INTEGRALITY_TOL: f64 = 1e-6;
/// Absolute optimality gap at which a node is pruned.
pub const GAP_TOL: f64 = 1e-6;
/// Minimum violation a lazy cut must have at its candidate.
pub const CUT_VIOLATION_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MilpModel {
    pub lp: LpModel,
    pub integers: Vec<usize>,
    /// Integer columns branched on before any other choice.
    pub branch_first: Vec<usize>,
    /// Ordered special sets: at most one column of each set is nonzero in
    /// any feasible solution. Used only for branching.
    pub sos1: Vec<Vec<usize>>,
}

impl MilpModel {
    pub fn new(lp: LpModel, integers: Vec<usize>) -> Self {
        Self {
            lp,
            integers,
            branch_first: Vec::new(),
            sos1: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), MilpError> {
        self.lp.validate().map_err(MilpError::Model)?;
        if let Some(&j) = self.integers.iter().find(|&&j| j >= self.lp.num_cols()) {
            return Err(MilpError::Model(format!("integer index {j} out of range")));
        }
        let n = self.lp.num_cols();
        if self.branch_first.iter().chain(self.sos1.iter().flatten()).any(|&j| j >= n) {
            return Err(MilpError::Model("branching column out of range".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MilpStatus {
    Optimal,
    Feasible,
    Infeasible,
    TimeLimit,
}

#[derive(Debug, Clone)]
pub struct MilpResult {
    pub status: MilpStatus,
    pub incumbent: Option<Vec<f64>>,
    /// Objective of the incumbent, `+inf` without one.
    pub objective: f64,
    pub best_bound: f64,
    pub nodes: usize,
    pub callback_calls: usize,
    pub cuts_added: usize,
    pub lp_iterations: usize,
    pub log: Option<String>,
}

impl MilpResult {
    pub fn gap(&self) -> f64 {
        self.objective - self.best_bound
    }
}

#[derive(Debug, Error)]
pub enum MilpError {
    #[error("invalid model: {0}")]
    Model(String),
    #[error("lazy cut {index} is not violated by its candidate (violation {violation})")]
    CutNotViolated { index: usize, violation: f64 },
    #[error("lazy cut {0} references an unknown column")]
    CutOutOfRange(usize),
    #[error("LP relaxation failed numerically at node {0}")]
    Numerical(usize),
}

/// What a lazy callback does with a candidate.
#[derive(Debug, Clone, PartialEq)]
pub enum LazyAction {
    /// Accept the candidate when empty, otherwise cut it off.
    Cuts(Vec<LpRow>),
    /// Append continuous columns, then add cuts that may reference them.
    /// New columns take indices after every existing one, in order, and
    /// enter the candidate at their lower bound.
    Extend { columns: Vec<NewColumn>, cuts: Vec<LpRow> },
    /// Stop the search (for example because a subproblem ran out of time).
    Abort,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewColumn {
    pub cost: f64,
    pub lower: f64,
    pub upper: f64,
}

pub type LazyCallback<'a> = dyn FnMut(&[f64]) -> LazyAction + 'a;

#[derive(Debug, Clone)]
pub struct MilpOptions {
    pub time_limit: Duration,
    /// Round node bounds up when every objective term is integer-valued.
    pub integral_objective: bool,
    pub node_log: bool,
    /// Only solutions with objective below this are of interest; the result
    /// is `Infeasible` when none exists.
    pub cutoff: f64,
}

impl Default for MilpOptions {
    fn default() -> Self {
        Self {
            time_limit: Duration::from_secs(3600),
            integral_objective: false,
            node_log: false,
            cutoff: f64::INFINITY,
        }
    }
}

impl MilpOptions {
    pub fn with_time_limit(time_limit: Duration) -> Self {
        Self {
            time_limit,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    bound: f64,
    depth: usize,
    /// Branching decisions from the root: (column, lower, upper).
    fixes: Vec<(usize, f64, f64)>,
    seq: usize,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // BinaryHeap is a max-heap: smaller bound, then older node, pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Search<'m, 'c> {
    model: &'m MilpModel,
    engine: Simplex,
    callback: Option<&'m mut LazyCallback<'c>>,
    deadline: Instant,
    incumbent: Option<Vec<f64>>,
    incumbent_obj: f64,
    nodes: usize,
    callback_calls: usize,
    cuts: Vec<LpRow>,
    extra_cols: Vec<NewColumn>,
    lp_iterations: usize,
    log: Option<String>,
    seq: usize,
    last_bound: f64,
    /// Every solution's objective is a multiple of this.
    objective_step: Option<f64>,
}

type Fix = (usize, f64, f64);

enum NodeOutcome {
    Pruned,
    /// Two children given by extra bound changes; `dive` is the one explored next.
    Branch {
        children: [Vec<Fix>; 2],
        dive: usize,
        bound: f64,
        label: String,
    },
    Stop(MilpStatus),
}

fn fractionality(v: f64) -> f64 {
    (v - v.floor()).min(v.ceil() - v)
}

/// Most fractional column of `cols`, lowest index on ties.
fn most_fractional(cols: &[usize], x: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for &j in cols {
        let frac = fractionality(x[j]);
        if frac > INTEGRALITY_TOL {
            let better = match best {
                None => true,
                Some((bj, bf)) => frac > bf + 1e-12 || (frac >= bf - 1e-12 && j < bj),
            };
            if better {
                best = Some((j, frac));
            }
        }
    }
    best
}

fn variable_branch(col: usize, value: f64, bound: f64) -> NodeOutcome {
    NodeOutcome::Branch {
        children: [vec![(col, f64::NEG_INFINITY, value.floor())], vec![(col, value.ceil(), f64::INFINITY)]],
        dive: usize::from(value - value.floor() >= 0.5),
        bound,
        label: format!("x{col} = {value}"),
    }
}

/// Common step of all objective values when every costed column is integer
/// and every cost is an integer multiple of the smallest one.
fn objective_step(model: &MilpModel) -> Option<f64> {
    let mut is_int = vec![false; model.lp.num_cols()];
    for &j in &model.integers {
        is_int[j] = true;
    }
    let costs: Vec<(usize, f64)> = model
        .lp
        .objective
        .iter()
        .enumerate()
        .filter(|&(_, &c)| c != 0.0)
        .map(|(j, &c)| (j, c))
        .collect();
    let step = costs.iter().map(|&(_, c)| c.abs()).fold(f64::INFINITY, f64::min);
    let multiples = costs.iter().all(|&(j, c)| {
        let k = c / step;
        is_int[j] && (k - k.round()).abs() <= 1e-9 * k.abs().max(1.0)
    });
    (step.is_finite() && multiples).then_some(step)
}

/// Branch on an integral `value`: the child keeping it is explored first.
fn fixing_branch(col: usize, value: f64, upper: f64, bound: f64) -> NodeOutcome {
    let (split, dive) = if value < upper { (value, 0) } else { (value - 1.0, 1) };
    NodeOutcome::Branch {
        children: [vec![(col, f64::NEG_INFINITY, split)], vec![(col, split + 1.0, f64::INFINITY)]],
        dive,
        bound,
        label: format!("x{col} = {value} (fixing)"),
    }
}

/// Picks the fractional set whose columns carry the most dual-weighted
/// activity `sum_j x_j sum_r |y_r a_rj|` (mass outside the biggest member
/// breaks ties) and splits it at the mass-weighted mean position.
fn sos_branch(sets: &[Vec<usize>], x: &[f64], weight: &[f64], bound: f64) -> Option<NodeOutcome> {
    let mut best: Option<(usize, f64, f64)> = None;
    for (k, set) in sets.iter().enumerate() {
        let nonzero = set.iter().filter(|&&j| x[j] > INTEGRALITY_TOL).count();
        if nonzero < 2 {
            continue;
        }
        let total: f64 = set.iter().map(|&j| x[j].max(0.0)).sum();
        let top = set.iter().map(|&j| x[j]).fold(0.0, f64::max);
        let spread = total - top;
        let score: f64 = set.iter().map(|&j| x[j].max(0.0) * weight[j]).sum();
        let better = match best {
            None => true,
            Some((_, bs, bsp)) => score > bs * (1.0 + 1e-9) + 1e-12 || (score >= bs - 1e-12 && spread > bsp + 1e-12),
        };
        if better {
            best = Some((k, score, spread));
        }
    }
    let (k, _, _) = best?;
    let set = &sets[k];
    let (mass, moment) = set
        .iter()
        .enumerate()
        .fold((0.0, 0.0), |(m, w), (pos, &j)| (m + x[j].max(0.0), w + pos as f64 * x[j].max(0.0)));
    let mean = moment / mass;
    let first = set.iter().position(|&j| x[j] > INTEGRALITY_TOL)?;
    let last = set.iter().rposition(|&j| x[j] > INTEGRALITY_TOL)?;
    // Left part is positions 0..=split; both parts keep some mass.
    let split = (mean.floor() as usize).clamp(first, last - 1);
    let left_mass: f64 = set[..=split].iter().map(|&j| x[j].max(0.0)).sum();
    let zero = |cols: &[usize]| cols.iter().map(|&j| (j, f64::NEG_INFINITY, 0.0)).collect::<Vec<_>>();
    Some(NodeOutcome::Branch {
        children: [zero(&set[split + 1..]), zero(&set[..=split])],
        dive: usize::from(left_mass < mass - left_mass),
        bound,
        label: format!("set {k} split {split}"),
    })
}

impl Search<'_, '_> {
    fn apply_fixes(&mut self, fixes: &[(usize, f64, f64)]) {
        for &j in &self.model.integers {
            self.engine.set_col_bounds(j, self.model.lp.lower[j], self.model.lp.upper[j]);
        }
        for &(j, lo, hi) in fixes {
            let (cur_lo, cur_hi) = self.engine.col_bounds(j);
            self.engine.set_col_bounds(j, cur_lo.max(lo), cur_hi.min(hi));
        }
    }

    fn solve_lp(&mut self, fixes: &[(usize, f64, f64)]) -> Result<LpSolution, MilpError> {
        let sol = self.engine.solve(Some(self.deadline));
        self.lp_iterations += sol.iterations;
        if sol.status != LpStatus::NumericalFailure {
            return Ok(sol);
        }
        // Rebuild the engine from scratch and try once more.
        let mut lp = self.model.lp.clone();
        for c in &self.extra_cols {
            lp.add_col(c.cost, c.lower, c.upper);
        }
        lp.rows.extend(self.cuts.iter().cloned());
        self.engine = Simplex::new(&lp).map_err(MilpError::Model)?;
        self.apply_fixes(fixes);
        let sol = self.engine.solve(Some(self.deadline));
        self.lp_iterations += sol.iterations;
        if sol.status == LpStatus::NumericalFailure {
            return Err(MilpError::Numerical(self.nodes));
        }
        Ok(sol)
    }

    fn objective_value(&self, x: &[f64]) -> f64 {
        let n = self.model.lp.num_cols();
        self.model.lp.objective_value(&x[..n])
            + self.extra_cols.iter().zip(&x[n..]).map(|(c, v)| c.cost * v).sum::<f64>()
    }

    fn node_bound(&self, obj: f64) -> f64 {
        match self.objective_step {
            Some(step) => (obj / step - GAP_TOL).ceil() * step,
            None => obj,
        }
    }

    fn prunable(&self, bound: f64) -> bool {
        bound >= self.incumbent_obj - GAP_TOL
    }

    fn process(&mut self, node: &Node) -> Result<NodeOutcome, MilpError> {
        self.apply_fixes(&node.fixes);
        // Bounds after propagation, when branching on priority columns.
        let mut implied: Option<(Vec<f64>, Vec<f64>)> = None;
        if self.callback.is_none() && !self.model.branch_first.is_empty() {
            let n = self.model.lp.num_cols();
            let mut lo: Vec<f64> = (0..n).map(|j| self.engine.col_bounds(j).0).collect();
            let mut hi: Vec<f64> = (0..n).map(|j| self.engine.col_bounds(j).1).collect();
            if !propagate(&self.model.lp, &mut lo, &mut hi) {
                return Ok(NodeOutcome::Pruned);
            }
            if self.model.branch_first.iter().all(|&j| lo[j] == hi[j]) {
                if let Some(outcome) = self.decompose(&lo, &hi)? {
                    return Ok(outcome);
                }
            }
            implied = Some((lo, hi));
        }
        loop {
            if Instant::now() >= self.deadline {
                return Ok(NodeOutcome::Stop(MilpStatus::TimeLimit));
            }
            let sol = self.solve_lp(&node.fixes)?;
            match sol.status {
                LpStatus::Optimal => {}
                LpStatus::Infeasible => return Ok(NodeOutcome::Pruned),
                LpStatus::TimeLimit => return Ok(NodeOutcome::Stop(MilpStatus::TimeLimit)),
                LpStatus::Unbounded => {
                    return Err(MilpError::Model("LP relaxation is unbounded".into()));
                }
                LpStatus::NumericalFailure => unreachable!(),
            }
            let bound = self.node_bound(sol.objective);
            if self.prunable(bound) {
                return Ok(NodeOutcome::Pruned);
            }
            if let Some((col, _)) = most_fractional(&self.model.branch_first, &sol.x) {
                return Ok(variable_branch(col, sol.x[col], bound));
            }
            if let Some((lo, hi)) = &implied {
                // Priority columns are branched on until fixed.
                if let Some(&col) = self.model.branch_first.iter().find(|&&j| lo[j] < hi[j]) {
                    return Ok(fixing_branch(col, sol.x[col].round(), hi[col], bound));
                }
            }
            let weight = if self.model.sos1.is_empty() { Vec::new() } else { self.dual_weights(&sol) };
            if let Some(outcome) = sos_branch(&self.model.sos1, &sol.x, &weight, bound) {
                return Ok(outcome);
            }
            if let Some((col, _)) = most_fractional(&self.model.integers, &sol.x) {
                return Ok(variable_branch(col, sol.x[col], bound));
            }

            let mut candidate = sol.x.clone();
            for &j in &self.model.integers {
                candidate[j] = candidate[j].round();
            }
            if let Some(cb) = self.callback.as_mut() {
                self.callback_calls += 1;
                let (columns, cuts) = match cb(&candidate) {
                    LazyAction::Abort => return Ok(NodeOutcome::Stop(MilpStatus::TimeLimit)),
                    LazyAction::Cuts(cuts) => (Vec::new(), cuts),
                    LazyAction::Extend { columns, cuts } => (columns, cuts),
                };
                if !cuts.is_empty() {
                    for c in &columns {
                        if c.lower > c.upper || !c.lower.is_finite() || !c.cost.is_finite() {
                            return Err(MilpError::Model("lazy column has bad bounds".into()));
                        }
                        candidate.push(c.lower);
                    }
                    // A batch may carry companion rows that do not cut the
                    // candidate, but at least one row must.
                    let n = candidate.len();
                    let mut any_violated = false;
                    for (index, cut) in cuts.iter().enumerate() {
                        if cut.coeffs.iter().any(|&(j, a)| j >= n || !a.is_finite()) {
                            return Err(MilpError::CutOutOfRange(index));
                        }
                        if cut.violation(&candidate) > CUT_VIOLATION_TOL {
                            any_violated = true;
                        }
                    }
                    if !any_violated {
                        return Err(MilpError::CutNotViolated { index: 0, violation: 0.0 });
                    }
                    for c in columns {
                        self.engine.add_col(c.cost, c.lower, c.upper);
                        if c.cost != 0.0 {
                            self.objective_step = None;
                        }
                        self.extra_cols.push(c);
                    }
                    for cut in cuts {
                        self.engine.add_row(&cut);
                        self.cuts.push(cut);
                    }
                    continue;
                }
            }
            let obj = self.objective_value(&candidate);
            if obj < self.incumbent_obj {
                self.incumbent_obj = obj;
                self.incumbent = Some(candidate);
                if let Some(log) = self.log.as_mut() {
                    let _ = writeln!(log, "incumbent {obj} at node {}", self.nodes);
                }
            }
            return Ok(NodeOutcome::Pruned);
        }
    }

    fn run(&mut self) -> Result<MilpStatus, MilpError> {
        let mut open = BinaryHeap::new();
        let mut dive = Some(Node {
            bound: f64::NEG_INFINITY,
            depth: 0,
            fixes: Vec::new(),
            seq: 0,
        });
        let mut global_bound = f64::NEG_INFINITY;
        loop {
            let node = match dive.take() {
                Some(n) => n,
                None => match open.pop() {
                    Some(n) => n,
                    None => return Ok(MilpStatus::Optimal),
                },
            };
            if self.prunable(node.bound) {
                continue;
            }
            self.nodes += 1;
            let outcome = self.process(&node)?;
            let open_min = open.peek().map_or(f64::INFINITY, |n: &Node| n.bound);
            global_bound = global_bound.max(node.bound.min(open_min));
            match outcome {
                NodeOutcome::Stop(status) => {
                    open.push(node);
                    self.last_bound = self.final_bound(&open, global_bound);
                    return Ok(status);
                }
                NodeOutcome::Pruned => {
                    if let Some(log) = self.log.as_mut() {
                        let _ = writeln!(log, "node {} depth {} bound {} pruned", self.nodes, node.depth, node.bound);
                    }
                }
                NodeOutcome::Branch {
                    children,
                    dive: dive_into,
                    bound,
                    label,
                } => {
                    if let Some(log) = self.log.as_mut() {
                        let _ = writeln!(log, "node {} depth {} bound {} branch {}", self.nodes, node.depth, bound, label);
                    }
                    for (k, extra) in children.into_iter().enumerate() {
                        let mut fixes = node.fixes.clone();
                        fixes.extend(extra);
                        self.seq += 1;
                        let child = Node {
                            bound,
                            depth: node.depth + 1,
                            fixes,
                            seq: self.seq,
                        };
                        if k == dive_into {
                            dive = Some(child);
                        } else {
                            open.push(child);
                        }
                    }
                }
            }
        }
    }

    /// `sum_r |y_r a_rj|` for every column over the model rows.
    fn dual_weights(&self, sol: &LpSolution) -> Vec<f64> {
        let mut weight = vec![0.0; sol.x.len()];
        for (row, &y) in self.model.lp.rows.iter().zip(&sol.duals) {
            if y != 0.0 {
                for &(j, a) in &row.coeffs {
                    weight[j] += (y * a).abs();
                }
            }
        }
        weight
    }

    /// Once every `branch_first` column is fixed, splits the columns that are
    /// still free into independent components and solves each one as its
    /// own problem. Returns `None` when the model does not split.
    fn decompose(&mut self, lo: &[f64], hi: &[f64]) -> Result<Option<NodeOutcome>, MilpError> {
        let n = self.model.lp.num_cols();
        let Some(parts) = split_components(&self.model.lp, lo, hi) else {
            return Ok(Some(NodeOutcome::Pruned));
        };
        if parts.len() < 2 {
            return Ok(None);
        }
        let constant: f64 = (0..n).filter(|&j| lo[j] == hi[j]).map(|j| self.model.lp.objective[j] * lo[j]).sum();
        let mut subs = Vec::with_capacity(parts.len());
        let mut bounds = Vec::with_capacity(parts.len());
        for cols in &parts {
            let sub = self.component_model(cols, lo, hi);
            let root = crate::lp::solve(&sub.lp);
            self.lp_iterations += root.iterations;
            match root.status {
                LpStatus::Optimal => bounds.push(root.objective),
                LpStatus::Infeasible => return Ok(Some(NodeOutcome::Pruned)),
                LpStatus::TimeLimit => return Ok(Some(NodeOutcome::Stop(MilpStatus::TimeLimit))),
                _ => return Err(MilpError::Numerical(self.nodes)),
            }
            subs.push(sub);
        }
        let mut x: Vec<f64> = lo.to_vec();
        let mut total = constant;
        for (k, sub) in subs.iter().enumerate() {
            let rest: f64 = bounds[k + 1..].iter().sum();
            let options = MilpOptions {
                time_limit: self.deadline.saturating_duration_since(Instant::now()),
                integral_objective: false,
                node_log: false,
                cutoff: self.incumbent_obj - total - rest + GAP_TOL,
            };
            let res = solve(sub, None, &options)?;
            self.nodes += res.nodes;
            self.lp_iterations += res.lp_iterations;
            match res.status {
                MilpStatus::Optimal => {}
                MilpStatus::Infeasible => return Ok(Some(NodeOutcome::Pruned)),
                MilpStatus::Feasible | MilpStatus::TimeLimit => {
                    return Ok(Some(NodeOutcome::Stop(MilpStatus::TimeLimit)));
                }
            }
            total += res.objective;
            let values = res.incumbent.expect("optimal component has a solution");
            for (&j, v) in parts[k].iter().zip(values) {
                x[j] = v;
            }
        }
        if total < self.incumbent_obj {
            self.incumbent_obj = total;
            self.incumbent = Some(x);
            if let Some(log) = self.log.as_mut() {
                let _ = writeln!(log, "incumbent {total} from {} components at node {}", parts.len(), self.nodes);
            }
        }
        Ok(Some(NodeOutcome::Pruned))
    }

    /// The model restricted to `cols`, other columns fixed at `lo`.
    fn component_model(&self, cols: &[usize], lo: &[f64], hi: &[f64]) -> MilpModel {
        let lp = &self.model.lp;
        let mut index = vec![usize::MAX; lp.num_cols()];
        let mut sub = LpModel::new();
        for &j in cols {
            index[j] = sub.add_col(lp.objective[j], lo[j], hi[j]);
        }
        for row in &lp.rows {
            if !row.coeffs.iter().any(|&(j, _)| index[j] != usize::MAX) {
                continue;
            }
            let mut rhs = row.rhs;
            let mut coeffs = Vec::new();
            for &(j, a) in &row.coeffs {
                if index[j] == usize::MAX {
                    rhs -= a * lo[j];
                } else {
                    coeffs.push((index[j], a));
                }
            }
            sub.add_row(coeffs, row.sense, rhs);
        }
        let integers = self.model.integers.iter().filter(|&&j| index[j] != usize::MAX).map(|&j| index[j]).collect();
        let mut model = MilpModel::new(sub, integers);
        model.sos1 = self
            .model
            .sos1
            .iter()
            .map(|set| set.iter().filter(|&&j| index[j] != usize::MAX).map(|&j| index[j]).collect::<Vec<_>>())
            .filter(|set| set.len() > 1)
            .collect();
        model
    }

    fn final_bound(&self, open: &BinaryHeap<Node>, global_bound: f64) -> f64 {
        let open_min = open.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
        global_bound.max(open_min.min(self.incumbent_obj))
    }
}

/// Solves `model`, consulting `callback` at every integer-feasible LP point.
pub fn solve(
    model: &MilpModel,
    callback: Option<&mut LazyCallback<'_>>,
    options: &MilpOptions,
) -> Result<MilpResult, MilpError> {
    model.validate()?;
    let start = Instant::now();
    let engine = Simplex::new(&model.lp).map_err(MilpError::Model)?;
    let mut search = Search {
        model,
        engine,
        callback,
        deadline: start + options.time_limit,
        incumbent: None,
        incumbent_obj: options.cutoff,
        nodes: 0,
        callback_calls: 0,
        cuts: Vec::new(),
        extra_cols: Vec::new(),
        lp_iterations: 0,
        log: options.node_log.then(String::new),
        seq: 0,
        last_bound: f64::NEG_INFINITY,
        objective_step: objective_step(model).or(options.integral_objective.then_some(1.0)),
    };
    let (status, best_bound) = match search.run()? {
        MilpStatus::Optimal if search.incumbent.is_some() => (MilpStatus::Optimal, search.incumbent_obj),
        MilpStatus::Optimal => (MilpStatus::Infeasible, f64::INFINITY),
        MilpStatus::TimeLimit if search.incumbent.is_some() => (MilpStatus::Feasible, search.last_bound),
        other => (other, search.last_bound),
    };
    Ok(MilpResult {
        status,
        incumbent: search.incumbent,
        objective: search.incumbent_obj,
        best_bound,
        nodes: search.nodes,
        callback_calls: search.callback_calls,
        cuts_added: search.cuts.len(),
        lp_iterations: search.lp_iterations,
        log: search.log,
    })
}

/// Bound propagation used before decomposing: rows `sum a_j x_j {<=,=} 0`
/// with positive coefficients over columns with lower bound 0 fix those
/// columns to 0, and equality rows with a single free column fix it.
/// Returns false when a fixing contradicts a bound.
fn propagate(lp: &LpModel, lo: &mut [f64], hi: &mut [f64]) -> bool {
    let tol = crate::lp::TOLERANCES.feasibility;
    loop {
        let mut changed = false;
        for row in &lp.rows {
            if row.sense == RowSense::Ge {
                continue;
            }
            let mut rest = row.rhs;
            let mut free = Vec::new();
            let mut positive = true;
            for &(j, a) in &row.coeffs {
                if lo[j] == hi[j] {
                    rest -= a * lo[j];
                } else {
                    positive &= a > 0.0 && lo[j] == 0.0;
                    free.push((j, a));
                }
            }
            if positive && !free.is_empty() && rest.abs() <= tol {
                for (j, _) in free {
                    hi[j] = 0.0;
                }
                changed = true;
            } else if row.sense == RowSense::Eq && free.len() == 1 {
                let (j, a) = free[0];
                let v = rest / a;
                if v < lo[j] - tol || v > hi[j] + tol {
                    return false;
                }
                let v = v.clamp(lo[j], hi[j]);
                lo[j] = v;
                hi[j] = v;
                changed = true;
            }
        }
        if !changed {
            return true;
        }
    }
}

/// Groups the free columns that share a row. Returns `None` if some row
/// without free columns is violated.
fn split_components(lp: &LpModel, lo: &[f64], hi: &[f64]) -> Option<Vec<Vec<usize>>> {
    let tol = crate::lp::TOLERANCES.feasibility;
    let n = lp.num_cols();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut j: usize) -> usize {
        while parent[j] != j {
            parent[j] = parent[parent[j]];
            j = parent[j];
        }
        j
    }
    for row in &lp.rows {
        let free: Vec<usize> = row.coeffs.iter().filter(|&&(j, _)| lo[j] < hi[j]).map(|&(j, _)| j).collect();
        if free.is_empty() {
            let activity: f64 = row.coeffs.iter().map(|&(j, a)| a * lo[j]).sum();
            let violated = match row.sense {
                RowSense::Le => activity > row.rhs + tol,
                RowSense::Ge => activity < row.rhs - tol,
                RowSense::Eq => (activity - row.rhs).abs() > tol,
            };
            if violated {
                return None;
            }
        }
        for w in free.windows(2) {
            let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            parent[a] = b;
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for j in (0..n).filter(|&j| lo[j] < hi[j]) {
        let root = find(&mut parent, j);
        groups.entry(root).or_default().push(j);
    }
    Some(groups.into_values().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::RowSense;

    fn knapsack() -> (MilpModel, Vec<f64>, Vec<f64>, f64) {
        let values = vec![8.0, 11.0, 6.0, 4.0];
        let weights = vec![5.0, 7.0, 4.0, 3.0];
        let cap = 14.0;
        let mut lp = LpModel::new();
        for &v in &values {
            lp.add_col(-v, 0.0, 1.0);
        }
        lp.add_row(weights.iter().cloned().enumerate().collect(), RowSense::Le, cap);
        (MilpModel::new(lp, (0..4).collect()), values, weights, cap)
    }

    #[test]
    fn knapsack_matches_enumeration() {
        let (model, values, weights, cap) = knapsack();
        let mut best = 0.0f64;
        for mask in 0..16u32 {
            let pick = |k: usize| ((mask >> k) & 1) as f64;
            let w: f64 = (0..4).map(|k| pick(k) * weights[k]).sum();
            if w <= cap {
                best = best.max((0..4).map(|k| pick(k) * values[k]).sum());
            }
        }
        let res = solve(&model, None, &MilpOptions::default()).unwrap();
        assert_eq!(res.status, MilpStatus::Optimal);
        assert!((res.objective + best).abs() < 1e-9);
        assert!((res.best_bound - res.objective).abs() < 1e-9);
    }

    #[test]
    fn nogood_callback_exhausts_binary_domain() {
        let (model, ..) = knapsack();
        let mut cb = |x: &[f64]| {
            // Exclude exactly this 0/1 point.
            let mut coeffs = Vec::new();
            let mut ones = 0.0;
            for (j, &v) in x.iter().enumerate() {
                if v > 0.5 {
                    coeffs.push((j, -1.0));
                    ones += 1.0;
                } else {
                    coeffs.push((j, 1.0));
                }
            }
            LazyAction::Cuts(vec![LpRow::new(coeffs, RowSense::Ge, 1.0 - ones)])
        };
        let res = solve(&model, Some(&mut cb), &MilpOptions::default()).unwrap();
        assert_eq!(res.status, MilpStatus::Infeasible);
        assert!(res.incumbent.is_none());
        assert!(res.callback_calls > 0);
    }

    #[test]
    fn integral_lp_needs_one_node() {
        let mut lp = LpModel::new();
        let x = lp.add_col(1.0, 0.0, 10.0);
        let y = lp.add_col(1.0, 0.0, 10.0);
        lp.add_row(vec![(x, 1.0), (y, 1.0)], RowSense::Ge, 3.0);
        let res = solve(&MilpModel::new(lp, vec![x, y]), None, &MilpOptions::default()).unwrap();
        assert_eq!(res.status, MilpStatus::Optimal);
        assert_eq!(res.nodes, 1);
        assert!((res.objective - 3.0).abs() < 1e-9);
    }

    #[test]
    fn satisfied_lazy_cut_is_rejected() {
        let (model, ..) = knapsack();
        let mut cb = |_: &[f64]| LazyAction::Cuts(vec![LpRow::new(vec![(0, 1.0)], RowSense::Ge, -5.0)]);
        let err = solve(&model, Some(&mut cb), &MilpOptions::default()).unwrap_err();
        assert!(matches!(err, MilpError::CutNotViolated { .. }));
    }

    #[test]
    fn lazy_cuts_stay_in_pool() {
        // min -x0 - x1 with lazy x0 + x1 <= 1; the final point must respect it.
        let mut lp = LpModel::new();
        lp.add_col(-1.0, 0.0, 1.0);
        lp.add_col(-1.0, 0.0, 1.0);
        let model = MilpModel::new(lp, vec![0, 1]);
        let mut cb = |x: &[f64]| {
            if x[0] + x[1] > 1.5 {
                LazyAction::Cuts(vec![LpRow::new(vec![(0, 1.0), (1, 1.0)], RowSense::Le, 1.0)])
            } else {
                LazyAction::Cuts(vec![])
            }
        };
        let res = solve(&model, Some(&mut cb), &MilpOptions::default()).unwrap();
        assert_eq!(res.status, MilpStatus::Optimal);
        assert!((res.objective + 1.0).abs() < 1e-9);
        assert_eq!(res.cuts_added, 1);
    }

    #[test]
    fn lazy_columns_extend_the_model() {
        // min y with lazy y + z >= 2, z <= 1 on a new column z.
        let mut lp = LpModel::new();
        let x = lp.add_col(0.0, 0.0, 1.0);
        let y = lp.add_col(1.0, 0.0, 10.0);
        let model = MilpModel::new(lp, vec![x]);
        let mut added = false;
        let mut cb = |c: &[f64]| {
            if added {
                return LazyAction::Cuts(vec![]);
            }
            added = true;
            let z = c.len();
            LazyAction::Extend {
                columns: vec![NewColumn { cost: 0.0, lower: 0.0, upper: 1.0 }],
                cuts: vec![LpRow::new(vec![(y, 1.0), (z, 1.0)], RowSense::Ge, 2.0)],
            }
        };
        let res = solve(&model, Some(&mut cb), &MilpOptions::default()).unwrap();
        assert_eq!(res.status, MilpStatus::Optimal);
        assert!((res.objective - 1.0).abs() < 1e-9);
        assert_eq!(res.incumbent.unwrap().len(), 3);
    }

    #[test]
    fn general_integers_branch() {
        // max 5x + 4y, 6x + 4y <= 24, x + 2y <= 6, integer -> 20 at (4, 0)
        let mut lp = LpModel::new();
        let x = lp.add_col(-5.0, 0.0, f64::INFINITY);
        let y = lp.add_col(-4.0, 0.0, f64::INFINITY);
        lp.add_row(vec![(x, 6.0), (y, 4.0)], RowSense::Le, 24.0);
        lp.add_row(vec![(x, 1.0), (y, 2.0)], RowSense::Le, 6.0);
        let opts = MilpOptions {
            node_log: true,
            ..MilpOptions::default()
        };
        let res = solve(&MilpModel::new(lp, vec![x, y]), None, &opts).unwrap();
        assert_eq!(res.status, MilpStatus::Optimal);
        assert!((res.objective + 20.0).abs() < 1e-9);
        assert!(res.log.unwrap().contains("branch"));
    }
}
