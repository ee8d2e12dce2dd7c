use rand::Rng;
use spsched::cumcp::{Job, Objective};
use spsched::lp::{LpModel, RowSense};

/// Random LP `min c x, A x {<=,>=} b, x >= 0` with nonnegative `A` and
/// every column covered by some `<=` row, so it is bounded.
pub fn random_lp<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> LpModel {
    let mut lp = LpModel::new();
    for _ in 0..cols {
        lp.add_col(rng.gen_range(-10..=10) as f64, 0.0, f64::INFINITY);
    }
    for r in 0..rows {
        let coeffs: Vec<(usize, f64)> = (0..cols)
            .filter_map(|j| {
                let a = rng.gen_range(0..=6);
                (a > 0 || r == 0).then_some((j, a.max(1) as f64))
            })
            .collect();
        if r > 0 && rng.gen_bool(0.25) {
            lp.add_row(coeffs, RowSense::Ge, rng.gen_range(1..=15) as f64);
        } else {
            lp.add_row(coeffs, RowSense::Le, rng.gen_range(5..=30) as f64);
        }
    }
    lp
}

fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-10 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in 0..n {
            if r != c {
                let f = a[r][c] / a[c][c];
                if f != 0.0 {
                    for k in c..n {
                        a[r][k] -= f * a[c][k];
                    }
                    b[r] -= f * b[c];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Minimum of a model built by [`random_lp`] over all basic feasible
/// solutions of its slack form. `None` when no basis is feasible.
pub fn lp_vertex_oracle(lp: &LpModel) -> Option<f64> {
    let m = lp.num_rows();
    let n = lp.num_cols();
    // Slack form rows: a x + s = b (Le) or a x - s = b (Ge), s >= 0.
    let mut full = vec![vec![0.0; n + m]; m];
    let mut b = vec![0.0; m];
    for (i, row) in lp.rows.iter().enumerate() {
        for &(j, a) in &row.coeffs {
            full[i][j] += a;
        }
        full[i][n + i] = if row.sense == RowSense::Ge { -1.0 } else { 1.0 };
        b[i] = row.rhs;
    }
    let mut best: Option<f64> = None;
    let total = n + m;
    let mut subset: Vec<usize> = (0..m).collect();
    loop {
        let a: Vec<Vec<f64>> = (0..m).map(|i| subset.iter().map(|&k| full[i][k]).collect()).collect();
        if let Some(xb) = solve_square(a, b.clone()) {
            if xb.iter().all(|&v| v >= -1e-9) {
                let obj: f64 = subset
                    .iter()
                    .zip(&xb)
                    .filter(|(&k, _)| k < n)
                    .map(|(&k, &v)| lp.objective[k] * v)
                    .sum();
                best = Some(best.map_or(obj, |b: f64| b.min(obj)));
            }
        }
        // next combination
        let mut i = m;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if subset[i] < total - m + i {
                subset[i] += 1;
                for k in i + 1..m {
                    subset[k] = subset[k - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Optimal value of a cumulative scheduling problem by trying every start
/// time of every job, `None` when no schedule meets the deadlines. Some
/// optimal schedule is semi-active, so starts beyond `max r + sum p` are
/// never needed.
pub fn brute_force_schedule(jobs: &[Job], capacity: i64, objective: Objective) -> Option<i64> {
    let horizon = jobs.iter().map(|j| j.release).max().unwrap_or(0) + jobs.iter().map(|j| j.processing).sum::<i64>();
    let mut load = vec![0i64; horizon.max(0) as usize];
    let mut starts = vec![0i64; jobs.len()];
    let mut best = None;
    enumerate_starts(jobs, capacity, objective, horizon, 0, &mut load, &mut starts, &mut best);
    best
}

#[allow(clippy::too_many_arguments)]
fn enumerate_starts(
    jobs: &[Job],
    capacity: i64,
    objective: Objective,
    horizon: i64,
    k: usize,
    load: &mut [i64],
    starts: &mut [i64],
    best: &mut Option<i64>,
) {
    if k == jobs.len() {
        let v = objective.evaluate(jobs, starts);
        if best.map_or(true, |b| v < b) {
            *best = Some(v);
        }
        return;
    }
    let job = &jobs[k];
    let mut last = horizon - job.processing;
    if let Some(d) = job.deadline {
        last = last.min(d - job.processing);
    }
    for s in job.release..=last {
        let span = s as usize..(s + job.processing) as usize;
        if load[span.clone()].iter().any(|&l| l + job.consumption > capacity) {
            continue;
        }
        load[span.clone()].iter_mut().for_each(|l| *l += job.consumption);
        starts[k] = s;
        enumerate_starts(jobs, capacity, objective, horizon, k + 1, load, starts, best);
        load[span].iter_mut().for_each(|l| *l -= job.consumption);
    }
}

/// Up to four jobs with `max r + sum p <= 30`; deadlines on some jobs when
/// `deadlines` is set.
pub fn random_jobs<R: Rng>(rng: &mut R, deadlines: bool) -> (Vec<Job>, i64) {
    let capacity = rng.gen_range(1..=5);
    let count = rng.gen_range(1..=4);
    let jobs = (0..count)
        .map(|id| {
            let release = rng.gen_range(0..=6);
            let processing = rng.gen_range(1..=6);
            let mut job = Job::new(id, release, processing, rng.gen_range(1..=capacity))
                .with_due_date(rng.gen_range(0..=15));
            if deadlines && rng.gen_bool(0.4) {
                job = job.with_deadline(release + processing + rng.gen_range(0..=8));
            }
            job
        })
        .collect();
    (jobs, capacity)
}
