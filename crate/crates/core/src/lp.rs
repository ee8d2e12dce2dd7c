//! Bounded revised simplex.
//!
//! Models are minimization problems `min c x` over rows `a x {<=,=,>=} b`
//! and column bounds `l <= x <= u` (either side may be infinite). Each row
//! gets a logical variable `s = -a x` so the system reads `[A I] (x, s) = 0`
//! with all the row information moved into bounds on `s`. A basis is then
//! always available (the logicals), which is what makes warm starts after
//! bound changes and row additions cheap: [`Simplex`] keeps its basis across
//! calls, tries the dual simplex first when that basis is still dual
//! feasible, and otherwise repairs primal infeasibility with a
//! sum-of-infeasibilities phase before optimizing.
//!
//! Only the basic structural columns need a dense inverse, so models with
//! few columns and many rows (Benders masters) stay cheap per pivot.
//!
//! Row duals follow the usual sensitivity sign: `dual[i] = d obj / d b_i`.

use std::fmt::{self, Write as _};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Primal feasibility of reported solutions.
    pub feasibility: f64,
    /// Optimality (duality gap, reduced cost) of reported solutions.
    pub optimality: f64,
    /// Internal bound tolerance used while pivoting.
    pub primal: f64,
    /// Internal reduced-cost tolerance used for pricing.
    pub pricing: f64,
    /// Smallest accepted pivot element.
    pub pivot: f64,
}

pub const TOLERANCES: Tolerances = Tolerances {
    feasibility: 1e-7,
    optimality: 1e-6,
    primal: 1e-9,
    pricing: 1e-9,
    pivot: 1e-7,
};

/// Bound slack allowed by the ratio test when it picks a larger pivot.
const HARRIS: f64 = 1e-10;
/// Wrong-signed reduced cost tolerated before the dual path hands over to
/// the primal one.
const DUAL_SLACK: f64 = 1e-7;
/// Consecutive degenerate dual steps before the dual path gives up.
const DUAL_STALL: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowSense {
    Le,
    Ge,
    Eq,
}

impl fmt::Display for RowSense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RowSense::Le => "<=",
            RowSense::Ge => ">=",
            RowSense::Eq => "=",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpRow {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: RowSense,
    pub rhs: f64,
}

impl LpRow {
    pub fn new(coeffs: Vec<(usize, f64)>, sense: RowSense, rhs: f64) -> Self {
        Self { coeffs, sense, rhs }
    }

    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates the row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let act = self.activity(x);
        match self.sense {
            RowSense::Le => (act - self.rhs).max(0.0),
            RowSense::Ge => (self.rhs - act).max(0.0),
            RowSense::Eq => (act - self.rhs).abs(),
        }
    }
}

/// A minimization LP.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LpModel {
    pub objective: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<LpRow>,
    pub names: Vec<String>,
}

impl LpModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_col(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        let name = format!("x{}", self.objective.len());
        self.add_named_col(name, cost, lower, upper)
    }

    pub fn add_named_col(&mut self, name: impl Into<String>, cost: f64, lower: f64, upper: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.names.push(name.into());
        self.objective.len() - 1
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, sense: RowSense, rhs: f64) -> usize {
        self.rows.push(LpRow::new(coeffs, sense, rhs));
        self.rows.len() - 1
    }

    pub fn num_cols(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    pub fn validate(&self) -> Result<(), String> {
        let n = self.num_cols();
        if self.lower.len() != n || self.upper.len() != n {
            return Err("bound vectors do not match the column count".into());
        }
        for j in 0..n {
            if !self.objective[j].is_finite() {
                return Err(format!("objective coefficient of column {j} is not finite"));
            }
            if self.lower[j] > self.upper[j] || self.lower[j] == f64::INFINITY || self.upper[j] == f64::NEG_INFINITY {
                return Err(format!("column {j} has empty bounds"));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(format!("row {i} has a non-finite right-hand side"));
            }
            for &(j, a) in &row.coeffs {
                if j >= n || !a.is_finite() {
                    return Err(format!("row {i} references column {j} or has a bad coefficient"));
                }
            }
        }
        Ok(())
    }

    /// Plain-text dump in an LP-file-like layout, for debugging.
    pub fn to_lp_string(&self) -> String {
        let mut out = String::from("minimize\n obj:");
        for (j, &c) in self.objective.iter().enumerate() {
            if c != 0.0 {
                let _ = write!(out, " {:+} {}", c, self.names[j]);
            }
        }
        out.push_str("\nsubject to\n");
        for (i, row) in self.rows.iter().enumerate() {
            let _ = write!(out, " r{i}:");
            for &(j, a) in &row.coeffs {
                let _ = write!(out, " {:+} {}", a, self.names[j]);
            }
            let _ = writeln!(out, " {} {}", row.sense, row.rhs);
        }
        out.push_str("bounds\n");
        for j in 0..self.num_cols() {
            let _ = writeln!(out, " {} <= {} <= {}", self.lower[j], self.names[j], self.upper[j]);
        }
        out.push_str("end\n");
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
    TimeLimit,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    /// Row duals, `d obj / d rhs`.
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub objective: f64,
    /// On `Infeasible`: row multipliers `y` for which the combined row
    /// `sum_i y_i a_i x` cannot meet the combined row bounds within the
    /// column bounds.
    pub farkas: Option<Vec<f64>>,
    pub iterations: usize,
}

/// Solve once from the all-logical basis.
pub fn solve(model: &LpModel) -> LpSolution {
    match Simplex::new(model) {
        Ok(mut s) => s.solve(None),
        Err(_) => LpSolution {
            status: LpStatus::NumericalFailure,
            x: vec![],
            duals: vec![],
            reduced_costs: vec![],
            objective: f64::NAN,
            farkas: None,
            iterations: 0,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarState {
    Basic,
    Lower,
    Upper,
    /// Nonbasic free variable held at zero.
    Zero,
}

/// Simplex engine that keeps its basis between solves.
#[derive(Debug, Clone)]
pub struct Simplex {
    /// Structural columns as (row, value) lists; logical `i` is `e_i`.
    cols: Vec<Vec<(usize, f64)>>,
    /// For each variable: `Some(j)` structural column `j`, `None` logical.
    kind: Vec<VarKind>,
    cost: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x: Vec<f64>,
    state: Vec<VarState>,
    /// Variable index basic in each row position.
    basis: Vec<usize>,
    factor: Factor,
    struct_var: Vec<usize>,
    logical_var: Vec<usize>,
    /// Set once a solve ends optimal, so the basis is worth warm-starting.
    warm: bool,
    pub max_iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarKind {
    Structural(usize),
    Logical(usize),
}

enum Phase {
    One,
    Two,
}

enum DualResult {
    /// Pivoted; `true` when the dual step length was zero.
    Moved(bool),
    PrimalFeasible,
    NotDualFeasible,
    /// No entering candidate; the primal path then builds the certificate.
    Infeasible,
}

enum StepResult {
    Optimal,
    Unbounded,
    Moved,
    Failed,
}

/// Basis representation. Basic logicals are unit columns, so only the
/// block `M` of basic structural columns on the rows without a basic logical
/// needs an inverse: `B0^-1 = [M^-1 0; -A_CS M^-1 I]` up to permutation.
/// Pivots since then are kept as eta vectors on top of `B0`.
#[derive(Debug, Clone, Default)]
struct Factor {
    /// Rows without a basic logical, by slot.
    free: Vec<usize>,
    /// Basic structurals as (position, column), by slot.
    structural: Vec<(usize, usize)>,
    /// Position of each row's basic logical.
    covered: Vec<Option<usize>>,
    /// `M^-1`: row per structural slot, column per free slot.
    minv: Vec<Vec<f64>>,
    /// Pivots as (position, pivot, other nonzeros of the entering column).
    etas: Vec<(usize, f64, Vec<(usize, f64)>)>,
    /// Rows were added after factorization.
    stale: bool,
}
const DEGENERATE_SWITCH: usize = 40;

fn logical_bounds(sense: RowSense, rhs: f64) -> (f64, f64) {
    match sense {
        RowSense::Le => (-rhs, f64::INFINITY),
        RowSense::Ge => (f64::NEG_INFINITY, -rhs),
        RowSense::Eq => (-rhs, -rhs),
    }
}

impl Simplex {
    pub fn new(model: &LpModel) -> Result<Self, String> {
        model.validate()?;
        let mut s = Simplex {
            cols: Vec::new(),
            kind: Vec::new(),
            cost: Vec::new(),
            lo: Vec::new(),
            hi: Vec::new(),
            x: Vec::new(),
            state: Vec::new(),
            basis: Vec::new(),
            factor: Factor::default(),
            struct_var: Vec::new(),
            logical_var: Vec::new(),
            warm: false,
            max_iterations: 0,
        };
        for j in 0..model.num_cols() {
            s.add_col(model.objective[j], model.lower[j], model.upper[j]);
        }
        for row in &model.rows {
            s.add_row(row);
        }
        Ok(s)
    }

    pub fn num_rows(&self) -> usize {
        self.logical_var.len()
    }

    pub fn num_cols(&self) -> usize {
        self.struct_var.len()
    }

    fn nonbasic_state(lo: f64, hi: f64) -> (VarState, f64) {
        if lo.is_finite() {
            (VarState::Lower, lo)
        } else if hi.is_finite() {
            (VarState::Upper, hi)
        } else {
            (VarState::Zero, 0.0)
        }
    }

    /// Appends a structural column with no row coefficients, nonbasic.
    pub fn add_col(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        let j = self.struct_var.len();
        let v = self.kind.len();
        self.cols.push(Vec::new());
        self.kind.push(VarKind::Structural(j));
        self.cost.push(cost);
        self.lo.push(lower);
        self.hi.push(upper);
        let (st, val) = Self::nonbasic_state(lower, upper);
        self.state.push(st);
        self.x.push(val);
        self.struct_var.push(v);
        j
    }

    /// Appends a row; its logical becomes basic, so the current basis stays
    /// a basis.
    pub fn add_row(&mut self, row: &LpRow) -> usize {
        let i = self.logical_var.len();
        let v = self.kind.len();
        for &(j, a) in &row.coeffs {
            if a != 0.0 {
                self.cols[j].push((i, a));
            }
        }
        let (lo, hi) = logical_bounds(row.sense, row.rhs);
        self.kind.push(VarKind::Logical(i));
        self.cost.push(0.0);
        self.lo.push(lo);
        self.hi.push(hi);
        self.state.push(VarState::Basic);
        self.x.push(0.0);
        self.logical_var.push(v);
        self.basis.push(v);
        self.factor.stale = true;
        i
    }

    pub fn set_col_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        let v = self.struct_var[j];
        self.lo[v] = lower;
        self.hi[v] = upper;
        if self.state[v] != VarState::Basic {
            let (st, val) = match self.state[v] {
                VarState::Upper if upper.is_finite() => (VarState::Upper, upper),
                _ => Self::nonbasic_state(lower, upper),
            };
            self.state[v] = st;
            self.x[v] = val;
        }
    }

    pub fn col_bounds(&self, j: usize) -> (f64, f64) {
        let v = self.struct_var[j];
        (self.lo[v], self.hi[v])
    }

    fn column(&self, v: usize) -> ColIter<'_> {
        match self.kind[v] {
            VarKind::Structural(j) => ColIter::Sparse(self.cols[j].iter()),
            VarKind::Logical(i) => ColIter::Unit(Some(i)),
        }
    }

    /// Factorizes the current basis and clears the eta file.
    fn refactor(&mut self) -> bool {
        let m = self.num_rows();
        let mut covered = vec![None; m];
        let mut structural = Vec::new();
        for (pos, &v) in self.basis.iter().enumerate() {
            match self.kind[v] {
                VarKind::Logical(i) => covered[i] = Some(pos),
                VarKind::Structural(j) => structural.push((pos, j)),
            }
        }
        let free: Vec<usize> = (0..m).filter(|&i| covered[i].is_none()).collect();
        let k = structural.len();
        debug_assert_eq!(free.len(), k);
        let mut slot = vec![usize::MAX; m];
        for (t, &r) in free.iter().enumerate() {
            slot[r] = t;
        }
        // Gauss-Jordan on [M | I] with partial pivoting, M[t][s] = a_{free_t, s}.
        let mut a = vec![vec![0.0; 2 * k]; k];
        for (s, &(_, j)) in structural.iter().enumerate() {
            for &(r, val) in &self.cols[j] {
                if slot[r] != usize::MAX {
                    a[slot[r]][s] = val;
                }
            }
        }
        for (t, row) in a.iter_mut().enumerate() {
            row[k + t] = 1.0;
        }
        for c in 0..k {
            let mut best = c;
            for r in c + 1..k {
                if a[r][c].abs() > a[best][c].abs() {
                    best = r;
                }
            }
            if a[best][c].abs() < 1e-11 {
                self.slack_basis();
                return true;
            }
            a.swap(c, best);
            let piv = a[c][c];
            for val in a[c].iter_mut() {
                *val /= piv;
            }
            let pivot_row = a[c].clone();
            for (r, row) in a.iter_mut().enumerate() {
                if r != c {
                    let f = row[c];
                    if f != 0.0 {
                        for (val, p) in row.iter_mut().zip(&pivot_row) {
                            *val -= f * p;
                        }
                    }
                }
            }
        }
        self.factor = Factor {
            free,
            structural,
            covered,
            minv: a.into_iter().map(|row| row[k..].to_vec()).collect(),
            etas: Vec::new(),
            stale: false,
        };
        true
    }

    fn needs_refactor(&self) -> bool {
        self.factor.stale || !self.factor.etas.is_empty()
    }

    /// Eta count at which refactoring pays for itself: a factorization
    /// costs about `k^3`, each eta about `m` per solve with the basis.
    fn refactor_due(&self) -> bool {
        let k = self.factor.structural.len() as f64;
        let m = self.num_rows().max(1) as f64;
        let interval = (k * k * k / (3.0 * m)).sqrt().clamp(20.0, 200.0);
        self.factor.etas.len() as f64 >= interval
    }

    /// `B^-1 v` for `v` indexed by row; the result is indexed by position.
    fn ftran(&self, v: &[f64]) -> Vec<f64> {
        let f = &self.factor;
        let mut u = vec![0.0; v.len()];
        let mut rest = v.to_vec();
        for (row, &(pos, j)) in f.minv.iter().zip(&f.structural) {
            let us: f64 = row.iter().zip(&f.free).map(|(mi, &r)| mi * v[r]).sum();
            u[pos] = us;
            if us != 0.0 {
                for &(r, a) in &self.cols[j] {
                    rest[r] -= a * us;
                }
            }
        }
        for (i, cov) in f.covered.iter().enumerate() {
            if let Some(pos) = *cov {
                u[pos] = rest[i];
            }
        }
        for (r, piv, others) in &f.etas {
            let t = u[*r] / piv;
            if t != 0.0 {
                for &(p, a) in others {
                    u[p] -= a * t;
                }
            }
            u[*r] = t;
        }
        u
    }

    /// `y` with `y^T B = c^T`, for `c` indexed by position; `y` by row.
    fn btran(&self, c: &[f64]) -> Vec<f64> {
        let f = &self.factor;
        let mut c = c.to_vec();
        for (r, piv, others) in f.etas.iter().rev() {
            let dot: f64 = others.iter().map(|&(p, a)| a * c[p]).sum();
            c[*r] = (c[*r] - dot) / piv;
        }
        let mut y = vec![0.0; c.len()];
        for (i, cov) in f.covered.iter().enumerate() {
            if let Some(pos) = *cov {
                y[i] = c[pos];
            }
        }
        let g: Vec<f64> = f
            .structural
            .iter()
            .map(|&(pos, j)| c[pos] - self.cols[j].iter().map(|&(r, a)| y[r] * a).sum::<f64>())
            .collect();
        for (t, &r) in f.free.iter().enumerate() {
            y[r] = f.minv.iter().zip(&g).map(|(row, gs)| row[t] * gs).sum();
        }
        y
    }

    /// Dense copy of column `v`, indexed by row.
    fn dense_column(&self, v: usize) -> Vec<f64> {
        let mut col = vec![0.0; self.num_rows()];
        for (r, a) in self.column(v) {
            col[r] += a;
        }
        col
    }

    /// Falls back to the all-logical basis, with structurals on bounds.
    fn slack_basis(&mut self) {
        let m = self.num_rows();
        for v in 0..self.kind.len() {
            if self.state[v] == VarState::Basic {
                let (st, val) = Self::nonbasic_state(self.lo[v], self.hi[v]);
                self.state[v] = st;
                self.x[v] = val;
            }
        }
        for i in 0..m {
            let v = self.logical_var[i];
            self.basis[i] = v;
            self.state[v] = VarState::Basic;
        }
        self.factor = Factor {
            covered: (0..m).map(Some).collect(),
            ..Factor::default()
        };
    }

    fn compute_basic_values(&mut self) {
        let m = self.num_rows();
        let mut rhs = vec![0.0; m];
        for v in 0..self.kind.len() {
            if self.state[v] != VarState::Basic && self.x[v] != 0.0 {
                let xv = self.x[v];
                for (r, a) in self.column(v) {
                    rhs[r] -= a * xv;
                }
            }
        }
        let u = self.ftran(&rhs);
        for (pos, val) in u.into_iter().enumerate() {
            self.x[self.basis[pos]] = val;
        }
    }

    fn residual(&self) -> f64 {
        let m = self.num_rows();
        let mut r = vec![0.0; m];
        for v in 0..self.kind.len() {
            let xv = self.x[v];
            if xv != 0.0 {
                for (i, a) in self.column(v) {
                    r[i] += a * xv;
                }
            }
        }
        r.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    fn infeasibility(&self, v: usize) -> f64 {
        let tol = TOLERANCES.primal * (1.0 + self.x[v].abs());
        if self.x[v] < self.lo[v] - tol {
            self.lo[v] - self.x[v]
        } else if self.x[v] > self.hi[v] + tol {
            self.x[v] - self.hi[v]
        } else {
            0.0
        }
    }

    fn row_duals(&self, basic_cost: &[f64]) -> Vec<f64> {
        self.btran(basic_cost)
    }

    fn reduced_cost(&self, v: usize, cost: f64, y: &[f64]) -> f64 {
        let mut d = cost;
        for (r, a) in self.column(v) {
            d -= y[r] * a;
        }
        d
    }

    /// One simplex iteration.
    fn step(&mut self, phase: Phase, bland: bool, degenerate: &mut bool) -> StepResult {
        let m = self.num_rows();
        let phase_one = matches!(phase, Phase::One);
        let basic_cost: Vec<f64> = self
            .basis
            .iter()
            .map(|&v| {
                if phase_one {
                    let tol = TOLERANCES.primal * (1.0 + self.x[v].abs());
                    if self.x[v] < self.lo[v] - tol {
                        -1.0
                    } else if self.x[v] > self.hi[v] + tol {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    self.cost[v]
                }
            })
            .collect();
        let y = self.row_duals(&basic_cost);

        // Pricing.
        let mut entering: Option<(usize, f64, f64)> = None; // (var, d, direction)
        for v in 0..self.kind.len() {
            let st = self.state[v];
            if st == VarState::Basic || self.lo[v] == self.hi[v] {
                continue;
            }
            let c = if phase_one { 0.0 } else { self.cost[v] };
            let d = self.reduced_cost(v, c, &y);
            let dir = match st {
                VarState::Lower if d < -TOLERANCES.pricing => 1.0,
                VarState::Upper if d > TOLERANCES.pricing => -1.0,
                VarState::Zero if d < -TOLERANCES.pricing => 1.0,
                VarState::Zero if d > TOLERANCES.pricing => -1.0,
                _ => continue,
            };
            let better = match entering {
                None => true,
                Some((_, bd, _)) => !bland && d.abs() > bd.abs(),
            };
            if better {
                entering = Some((v, d, dir));
                if bland {
                    break;
                }
            }
        }
        let Some((q, _dq, dir)) = entering else {
            return StepResult::Optimal;
        };

        let alpha = self.ftran(&self.dense_column(q));

        // Ratio test. Basic x_B changes by -dir * theta * alpha. Two passes
        // (Harris): find the largest step that keeps every basic variable
        // within a small tolerance of its bounds, then among the rows that
        // block within it take the largest pivot.
        let flip = if self.hi[q].is_finite() && self.lo[q].is_finite() {
            self.hi[q] - self.lo[q]
        } else {
            f64::INFINITY
        };
        // (position, bound value, exact step, relaxed step)
        let mut blocking: Vec<(usize, f64, f64, f64)> = Vec::new();
        for pos in 0..m {
            let a = alpha[pos];
            if a.abs() < TOLERANCES.pivot {
                continue;
            }
            let v = self.basis[pos];
            let rate = -dir * a;
            let xv = self.x[v];
            let tol = TOLERANCES.primal * (1.0 + xv.abs());
            let below = xv < self.lo[v] - tol;
            let above = xv > self.hi[v] + tol;
            let limit = if rate < 0.0 {
                if below {
                    None
                } else if above {
                    Some(self.hi[v])
                } else if self.lo[v].is_finite() {
                    Some(self.lo[v])
                } else {
                    None
                }
            } else if above {
                None
            } else if below {
                Some(self.lo[v])
            } else if self.hi[v].is_finite() {
                Some(self.hi[v])
            } else {
                None
            };
            let Some(bound) = limit else { continue };
            let slack = HARRIS * (1.0 + bound.abs());
            let relaxed_bound = if rate < 0.0 { bound - slack } else { bound + slack };
            let exact = ((bound - xv) / rate).max(0.0);
            let relaxed = ((relaxed_bound - xv) / rate).max(0.0);
            blocking.push((pos, bound, exact, relaxed));
        }
        let mut theta = flip;
        let mut leave: Option<(usize, f64)> = None; // (position, bound value)
        if bland {
            for &(pos, bound, exact, _) in &blocking {
                let replace = match leave {
                    None => exact < theta,
                    Some((lp, _)) => {
                        exact < theta - 1e-12 || (exact <= theta + 1e-12 && self.basis[pos] < self.basis[lp])
                    }
                };
                if replace {
                    theta = exact;
                    leave = Some((pos, bound));
                }
            }
        } else {
            let max_step = blocking.iter().map(|b| b.3).fold(f64::INFINITY, f64::min);
            if max_step < flip {
                let mut best_alpha = 0.0;
                for &(pos, bound, exact, _) in &blocking {
                    if exact <= max_step && alpha[pos].abs() > best_alpha {
                        best_alpha = alpha[pos].abs();
                        theta = exact;
                        leave = Some((pos, bound));
                    }
                }
            }
        }

        if theta.is_infinite() {
            return if phase_one { StepResult::Failed } else { StepResult::Unbounded };
        }
        *degenerate = theta < 1e-12;

        // Move.
        self.x[q] += dir * theta;
        for pos in 0..m {
            if alpha[pos] != 0.0 {
                let v = self.basis[pos];
                self.x[v] -= dir * theta * alpha[pos];
            }
        }

        match leave {
            None => {
                // Bound flip of the entering variable.
                self.state[q] = if dir > 0.0 { VarState::Upper } else { VarState::Lower };
                self.x[q] = if dir > 0.0 { self.hi[q] } else { self.lo[q] };
            }
            Some((r, bound)) => {
                let out = self.basis[r];
                self.x[out] = bound;
                self.state[out] = if bound == self.lo[out] { VarState::Lower } else { VarState::Upper };
                self.state[q] = VarState::Basic;
                self.basis[r] = q;
                self.pivot_inverse(r, &alpha);
            }
        }
        StepResult::Moved
    }

    /// One dual simplex iteration from a dual feasible basis: the most
    /// infeasible basic variable leaves at its violated bound, and the
    /// entering variable keeps every reduced cost on its correct side.
    fn dual_step(&mut self) -> DualResult {
        let m = self.num_rows();
        let mut leave: Option<(usize, f64)> = None; // (position, bound)
        let mut worst = 0.0;
        for (pos, &v) in self.basis.iter().enumerate() {
            let gap = self.infeasibility(v);
            if gap > worst {
                worst = gap;
                leave = Some((pos, if self.x[v] < self.lo[v] { self.lo[v] } else { self.hi[v] }));
            }
        }
        let Some((r, bound)) = leave else {
            return DualResult::PrimalFeasible;
        };
        let basic_cost: Vec<f64> = self.basis.iter().map(|&v| self.cost[v]).collect();
        let y = self.row_duals(&basic_cost);
        let mut unit = vec![0.0; m];
        unit[r] = 1.0;
        let rho = self.btran(&unit);
        // Leaving below its lower bound must rise: x_r moves by -alpha_rj dx_j.
        let rise = self.x[self.basis[r]] < bound;
        let mut candidates: Vec<(usize, f64, f64)> = Vec::new(); // (var, |d|, alpha_rj)
        for v in 0..self.kind.len() {
            let st = self.state[v];
            if st == VarState::Basic || self.lo[v] == self.hi[v] {
                continue;
            }
            let d = self.reduced_cost(v, self.cost[v], &y);
            let wrong_side = match st {
                VarState::Lower => d < -DUAL_SLACK,
                VarState::Upper => d > DUAL_SLACK,
                VarState::Zero => d.abs() > DUAL_SLACK,
                VarState::Basic => false,
            };
            if wrong_side {
                return DualResult::NotDualFeasible;
            }
            let mut a = 0.0;
            for (row, val) in self.column(v) {
                a += rho[row] * val;
            }
            if a.abs() < TOLERANCES.pivot {
                continue;
            }
            let eligible = match st {
                VarState::Lower => (a < 0.0) == rise,
                VarState::Upper => (a > 0.0) == rise,
                _ => true,
            };
            if eligible {
                candidates.push((v, d.abs(), a));
            }
        }
        if candidates.is_empty() {
            return DualResult::Infeasible;
        }
        // Bound-flipping ratio test: walk the breakpoints in ratio order and
        // flip boxed candidates while the leaving row stays infeasible.
        candidates.sort_by(|x, y| (x.1 / x.2.abs()).total_cmp(&(y.1 / y.2.abs())).then(y.2.abs().total_cmp(&x.2.abs())));
        let mut slope = (self.x[self.basis[r]] - bound).abs();
        let mut stop = None;
        for (k, &(v, _, a)) in candidates.iter().enumerate() {
            let drop = a.abs() * (self.hi[v] - self.lo[v]);
            if drop.is_finite() && slope - drop > TOLERANCES.primal {
                slope -= drop;
            } else {
                stop = Some(k);
                break;
            }
        }
        let Some(stop) = stop else {
            return DualResult::Infeasible;
        };
        // Harris pass over the remaining breakpoints: the largest pivot whose
        // ratio is within tolerance of the first.
        let (_, d0, a0) = candidates[stop];
        let max_ratio = (d0 + TOLERANCES.pricing) / a0.abs();
        let &(q, _, _) = candidates[stop..]
            .iter()
            .filter(|&&(_, d, a)| d / a.abs() <= max_ratio)
            .max_by(|x, y| x.2.abs().total_cmp(&y.2.abs()))
            .expect("nonempty");
        if stop > 0 {
            let mut shift = vec![0.0; m];
            for &(v, _, _) in &candidates[..stop] {
                let (st, to) = match self.state[v] {
                    VarState::Lower => (VarState::Upper, self.hi[v]),
                    _ => (VarState::Lower, self.lo[v]),
                };
                let step = to - self.x[v];
                for (row, a) in self.column(v) {
                    shift[row] += a * step;
                }
                self.state[v] = st;
                self.x[v] = to;
            }
            let moved = self.ftran(&shift);
            for (pos, dx) in moved.into_iter().enumerate() {
                self.x[self.basis[pos]] -= dx;
            }
        }

        let alpha = self.ftran(&self.dense_column(q));
        let piv = alpha[r];
        if piv.abs() < TOLERANCES.pivot {
            return DualResult::NotDualFeasible;
        }
        let out = self.basis[r];
        let delta = (self.x[out] - bound) / piv;
        self.x[q] += delta;
        for pos in 0..m {
            if alpha[pos] != 0.0 {
                let v = self.basis[pos];
                self.x[v] -= alpha[pos] * delta;
            }
        }
        self.x[out] = bound;
        self.state[out] = if bound == self.lo[out] { VarState::Lower } else { VarState::Upper };
        self.state[q] = VarState::Basic;
        self.basis[r] = q;
        self.pivot_inverse(r, &alpha);
        DualResult::Moved(d0 / a0.abs() < 1e-12)
    }

    /// Records the pivot of the column `alpha = B^-1 a_q` into position `r`.
    fn pivot_inverse(&mut self, r: usize, alpha: &[f64]) {
        let others = alpha
            .iter()
            .enumerate()
            .filter(|&(p, &a)| p != r && a != 0.0)
            .map(|(p, &a)| (p, a))
            .collect();
        self.factor.etas.push((r, alpha[r], others));
    }

    fn failure(&self, iterations: usize, status: LpStatus) -> LpSolution {
        LpSolution {
            status,
            x: self.struct_var.iter().map(|&v| self.x[v]).collect(),
            duals: vec![0.0; self.num_rows()],
            reduced_costs: vec![0.0; self.num_cols()],
            objective: f64::NAN,
            farkas: None,
            iterations,
        }
    }

    /// Optimizes from the current basis.
    pub fn solve(&mut self, deadline: Option<Instant>) -> LpSolution {
        let limit = if self.max_iterations > 0 {
            self.max_iterations
        } else {
            50 * (self.kind.len() + self.num_rows()) + 10_000
        };
        if (0..self.kind.len()).any(|v| self.lo[v] > self.hi[v]) {
            let mut sol = self.failure(0, LpStatus::Infeasible);
            sol.farkas = Some(vec![0.0; self.num_rows()]);
            return sol;
        }
        // Nonbasic variables sit on their (possibly changed) bounds.
        for v in 0..self.kind.len() {
            if self.state[v] != VarState::Basic {
                let (st, val) = match self.state[v] {
                    VarState::Upper if self.hi[v].is_finite() => (VarState::Upper, self.hi[v]),
                    _ => Self::nonbasic_state(self.lo[v], self.hi[v]),
                };
                self.state[v] = st;
                self.x[v] = val;
            }
        }
        if self.needs_refactor() && !self.refactor() {
            return self.failure(0, LpStatus::NumericalFailure);
        }
        self.compute_basic_values();

        let mut iterations = 0;
        let mut degenerate_run = 0;
        let mut repaired = false;
        // A warm basis usually stays dual feasible after bound changes and
        // new rows; the dual path then restores primal feasibility directly.
        // Heavily dual degenerate models stall it, so a long degenerate run
        // or an exhausted budget restores the starting basis for the primal.
        let mut dual_budget = if self.warm { 2 * self.num_rows() + 100 } else { 0 };
        let start = (dual_budget > 0).then(|| (self.basis.clone(), self.state.clone(), self.x.clone(), self.factor.clone()));
        let mut dual_stall = 0;
        loop {
            if dual_budget > 0 {
                match self.dual_step() {
                    DualResult::Moved(degenerate) => {
                        dual_budget -= 1;
                        iterations += 1;
                        dual_stall = if degenerate { dual_stall + 1 } else { 0 };
                        if dual_budget == 0 || dual_stall >= DUAL_STALL {
                            dual_budget = 0;
                            if let Some((basis, state, x, factor)) = start.clone() {
                                self.basis = basis;
                                self.state = state;
                                self.x = x;
                                self.factor = factor;
                            }
                            continue;
                        }
                        if self.refactor_due() {
                            if !self.refactor() {
                                return self.failure(iterations, LpStatus::NumericalFailure);
                            }
                            self.compute_basic_values();
                        }
                        if iterations % 32 == 0 {
                            if let Some(d) = deadline {
                                if Instant::now() >= d {
                                    return self.failure(iterations, LpStatus::TimeLimit);
                                }
                            }
                        }
                        continue;
                    }
                    _ => dual_budget = 0,
                }
            }
            let infeasible = self.basis.iter().any(|&v| self.infeasibility(v) > 0.0);
            let phase = if infeasible { Phase::One } else { Phase::Two };
            let bland = degenerate_run >= DEGENERATE_SWITCH;
            let mut degenerate = false;
            let result = self.step(phase, bland, &mut degenerate);
            match result {
                StepResult::Moved => {
                    iterations += 1;
                    degenerate_run = if degenerate { degenerate_run + 1 } else { 0 };
                    if self.refactor_due() {
                        if !self.refactor() {
                            return self.failure(iterations, LpStatus::NumericalFailure);
                        }
                        self.compute_basic_values();
                    }
                    if iterations >= limit {
                        return self.failure(iterations, LpStatus::NumericalFailure);
                    }
                    if iterations % 32 == 0 {
                        if let Some(d) = deadline {
                            if Instant::now() >= d {
                                return self.failure(iterations, LpStatus::TimeLimit);
                            }
                        }
                    }
                }
                StepResult::Failed => return self.failure(iterations, LpStatus::NumericalFailure),
                StepResult::Unbounded => return self.failure(iterations, LpStatus::Unbounded),
                StepResult::Optimal => {
                    // Refresh from a clean factorization before certifying.
                    if !repaired && (self.needs_refactor() || self.residual() > 1e-9) {
                        repaired = true;
                        if !self.refactor() {
                            return self.failure(iterations, LpStatus::NumericalFailure);
                        }
                        self.compute_basic_values();
                        continue;
                    }
                    if infeasible {
                        return self.infeasible_result(iterations);
                    }
                    self.warm = true;
                    return self.optimal_result(iterations);
                }
            }
        }
    }

    fn infeasible_result(&self, iterations: usize) -> LpSolution {
        let basic_cost: Vec<f64> = self
            .basis
            .iter()
            .map(|&v| {
                let tol = TOLERANCES.primal * (1.0 + self.x[v].abs());
                if self.x[v] < self.lo[v] - tol {
                    -1.0
                } else if self.x[v] > self.hi[v] + tol {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let mut y = self.row_duals(&basic_cost);
        // Round-off multipliers of the wrong sign would void the certificate.
        let scale = y.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        for v in &mut y {
            if v.abs() <= 1e-12 * scale {
                *v = 0.0;
            }
        }
        let mut sol = self.failure(iterations, LpStatus::Infeasible);
        sol.farkas = Some(y);
        sol
    }

    fn optimal_result(&self, iterations: usize) -> LpSolution {
        let basic_cost: Vec<f64> = self.basis.iter().map(|&v| self.cost[v]).collect();
        let y = self.row_duals(&basic_cost);
        let x: Vec<f64> = self.struct_var.iter().map(|&v| self.x[v]).collect();
        let reduced_costs = self
            .struct_var
            .iter()
            .map(|&v| {
                if self.state[v] == VarState::Basic {
                    0.0
                } else {
                    self.reduced_cost(v, self.cost[v], &y)
                }
            })
            .collect();
        let objective = self
            .struct_var
            .iter()
            .map(|&v| self.cost[v] * self.x[v])
            .sum();
        LpSolution {
            status: LpStatus::Optimal,
            x,
            duals: y,
            reduced_costs,
            objective,
            farkas: None,
            iterations,
        }
    }
}

enum ColIter<'a> {
    Sparse(std::slice::Iter<'a, (usize, f64)>),
    Unit(Option<usize>),
}

impl Iterator for ColIter<'_> {
    type Item = (usize, f64);

    fn next(&mut self) -> Option<Self::Item> {
        match self {
            ColIter::Sparse(it) => it.next().copied(),
            ColIter::Unit(slot) => slot.take().map(|i| (i, 1.0)),
        }
    }
}

/// Dual objective `y b + sum_j d_j x_j` over nonbasic bound values. Used to
/// certify strong duality of an optimal solution.
pub fn dual_objective(model: &LpModel, sol: &LpSolution) -> f64 {
    let mut obj: f64 = model.rows.iter().zip(&sol.duals).map(|(r, y)| r.rhs * y).sum();
    for (j, &d) in sol.reduced_costs.iter().enumerate() {
        if d > TOLERANCES.pricing {
            obj += d * model.lower[j];
        } else if d < -TOLERANCES.pricing {
            obj += d * model.upper[j];
        }
    }
    obj
}

/// Checks primal feasibility, dual sign conditions, complementary slackness
/// and strong duality of an `Optimal` solution, scaled by `1 + |obj|`.
pub fn check_optimality(model: &LpModel, sol: &LpSolution, tol: f64) -> Result<(), String> {
    if sol.status != LpStatus::Optimal {
        return Err(format!("status is {:?}", sol.status));
    }
    let scale = 1.0 + sol.objective.abs();
    for j in 0..model.num_cols() {
        let x = sol.x[j];
        if x < model.lower[j] - tol * scale || x > model.upper[j] + tol * scale {
            return Err(format!("column {j} = {x} violates its bounds"));
        }
        let d = sol.reduced_costs[j];
        let at_lower = (x - model.lower[j]).abs() <= tol * scale;
        let at_upper = (x - model.upper[j]).abs() <= tol * scale;
        if (d > tol && !at_lower) || (d < -tol && !at_upper) {
            return Err(format!("column {j}: reduced cost {d} at value {x}"));
        }
    }
    for (i, row) in model.rows.iter().enumerate() {
        if row.violation(&sol.x) > tol * scale {
            return Err(format!("row {i} violated by {}", row.violation(&sol.x)));
        }
        let y = sol.duals[i];
        let slack = (row.activity(&sol.x) - row.rhs).abs();
        let wrong_sign = match row.sense {
            RowSense::Le => y > tol,
            RowSense::Ge => y < -tol,
            RowSense::Eq => false,
        };
        if wrong_sign {
            return Err(format!("row {i} dual {y} has the wrong sign"));
        }
        if (y * slack).abs() > tol * scale {
            return Err(format!("row {i}: dual {y} with slack {slack}"));
        }
    }
    let dual = dual_objective(model, sol);
    if (dual - sol.objective).abs() > tol * scale {
        return Err(format!("primal {} vs dual {dual}", sol.objective));
    }
    Ok(())
}

/// Interval test: the combined row `g x = sum y_i a_i x` must be unable to
/// match any combination of row activities within the row bounds.
pub fn farkas_proves_infeasible(lp: &LpModel, y: &[f64]) -> bool {
    let n = lp.num_cols();
    let mut g = vec![0.0; n];
    let (mut rlo, mut rhi) = (0.0, 0.0);
    for (row, &yi) in lp.rows.iter().zip(y) {
        for &(j, a) in &row.coeffs {
            g[j] += yi * a;
        }
        let (alo, ahi) = match row.sense {
            RowSense::Le => (f64::NEG_INFINITY, row.rhs),
            RowSense::Ge => (row.rhs, f64::INFINITY),
            RowSense::Eq => (row.rhs, row.rhs),
        };
        let (a, b) = if yi >= 0.0 { (yi * alo, yi * ahi) } else { (yi * ahi, yi * alo) };
        if yi != 0.0 {
            rlo += a;
            rhi += b;
        }
    }
    let (mut glo, mut ghi) = (0.0, 0.0);
    for j in 0..n {
        if g[j].abs() < 1e-12 {
            continue;
        }
        let (a, b) = if g[j] > 0.0 {
            (g[j] * lp.lower[j], g[j] * lp.upper[j])
        } else {
            (g[j] * lp.upper[j], g[j] * lp.lower[j])
        };
        glo += a;
        ghi += b;
    }
    ghi < rlo - 1e-9 || glo > rhi + 1e-9
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maximize_single_variable() {
        // max x s.t. x <= 3
        let mut lp = LpModel::new();
        let x = lp.add_col(-1.0, 0.0, f64::INFINITY);
        lp.add_row(vec![(x, 1.0)], RowSense::Le, 3.0);
        let sol = solve(&lp);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective + 3.0).abs() < 1e-9);
        // In maximization terms the dual is +1.
        assert!((sol.duals[0] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_pair_has_certificate() {
        let mut lp = LpModel::new();
        let x = lp.add_col(0.0, f64::NEG_INFINITY, f64::INFINITY);
        lp.add_row(vec![(x, 1.0)], RowSense::Le, 1.0);
        lp.add_row(vec![(x, 1.0)], RowSense::Ge, 2.0);
        let sol = solve(&lp);
        assert_eq!(sol.status, LpStatus::Infeasible);
        let y = sol.farkas.unwrap();
        assert!(farkas_proves_infeasible(&lp, &y));
    }

    #[test]
    fn unbounded_detected() {
        let mut lp = LpModel::new();
        let x = lp.add_col(-1.0, 0.0, f64::INFINITY);
        let y = lp.add_col(0.0, 0.0, f64::INFINITY);
        lp.add_row(vec![(x, 1.0), (y, -1.0)], RowSense::Le, 1.0);
        assert_eq!(solve(&lp).status, LpStatus::Unbounded);
    }

    #[test]
    fn bounded_variables_and_equalities() {
        // min -x - 2y, x + y = 4, 0<=x<=3, 1<=y<=2
        let mut lp = LpModel::new();
        let x = lp.add_col(-1.0, 0.0, 3.0);
        let y = lp.add_col(-2.0, 1.0, 2.0);
        lp.add_row(vec![(x, 1.0), (y, 1.0)], RowSense::Eq, 4.0);
        let sol = solve(&lp);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective + 6.0).abs() < 1e-9);
        assert!((dual_objective(&lp, &sol) - sol.objective).abs() < 1e-9);
    }

    #[test]
    fn warm_start_after_bound_change_and_row() {
        let mut lp = LpModel::new();
        let x = lp.add_col(-1.0, 0.0, 10.0);
        let y = lp.add_col(-1.0, 0.0, 10.0);
        lp.add_row(vec![(x, 1.0), (y, 2.0)], RowSense::Le, 8.0);
        let mut s = Simplex::new(&lp).unwrap();
        let a = s.solve(None);
        assert!((a.objective + 8.0).abs() < 1e-9);
        s.set_col_bounds(x, 0.0, 4.0);
        let b = s.solve(None);
        assert!((b.objective + 6.0).abs() < 1e-9);
        s.add_row(&LpRow::new(vec![(y, 1.0)], RowSense::Le, 1.0));
        let c = s.solve(None);
        assert!((c.objective + 5.0).abs() < 1e-9);
        s.set_col_bounds(x, 0.0, 10.0);
        let d = s.solve(None);
        assert!((d.objective + 8.0).abs() < 1e-9);
    }

    #[test]
    fn lp_text_dump() {
        let mut lp = LpModel::new();
        let x = lp.add_named_col("x", 1.0, 0.0, 1.0);
        lp.add_row(vec![(x, 2.0)], RowSense::Ge, 1.0);
        let text = lp.to_lp_string();
        assert!(text.contains("r0: +2 x >= 1"), "{text}");
    }
}
