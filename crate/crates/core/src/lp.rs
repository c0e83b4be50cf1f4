//! Small dense two-phase simplex with Bland's rule. Sized for the
//! membership and qualification checks, where problems have a few dozen
//! rows and columns.

#[derive(Clone, Debug, Default)]
pub struct LinearProgram {
    pub num_vars: usize,
    /// Minimized objective.
    pub cost: Vec<f64>,
    pub ub_rows: Vec<Vec<f64>>,
    pub ub_rhs: Vec<f64>,
    pub eq_rows: Vec<Vec<f64>>,
    pub eq_rhs: Vec<f64>,
    /// Variables constrained to be nonnegative; all others are free.
    pub nonneg: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

const PIVOT_EPS: f64 = 1e-10;
const FEAS_EPS: f64 = 1e-8;

impl LinearProgram {
    pub fn new(num_vars: usize) -> Self {
        LinearProgram {
            num_vars,
            cost: vec![0.0; num_vars],
            nonneg: vec![false; num_vars],
            ..Default::default()
        }
    }

    pub fn leq(&mut self, row: Vec<f64>, rhs: f64) {
        debug_assert_eq!(row.len(), self.num_vars);
        self.ub_rows.push(row);
        self.ub_rhs.push(rhs);
    }

    pub fn eq(&mut self, row: Vec<f64>, rhs: f64) {
        debug_assert_eq!(row.len(), self.num_vars);
        self.eq_rows.push(row);
        self.eq_rhs.push(rhs);
    }

    pub fn solve(&self) -> LpOutcome {
        // Column layout: for each variable a `+` column, and a `-` column
        // when free; then one slack per inequality row.
        let mut col_of: Vec<(usize, Option<usize>)> = Vec::with_capacity(self.num_vars);
        let mut ncols = 0;
        for j in 0..self.num_vars {
            if self.nonneg.get(j).copied().unwrap_or(false) {
                col_of.push((ncols, None));
                ncols += 1;
            } else {
                col_of.push((ncols, Some(ncols + 1)));
                ncols += 2;
            }
        }
        let n_slack = self.ub_rows.len();
        let n_struct = ncols + n_slack;
        let rows = self.ub_rows.len() + self.eq_rows.len();
        let n_art = rows;
        let width = n_struct + n_art + 1;

        let mut t = vec![vec![0.0; width]; rows + 1];
        let mut basis = vec![0usize; rows];
        let all_rows = self
            .ub_rows
            .iter()
            .zip(&self.ub_rhs)
            .map(|(r, b)| (r, *b, true))
            .chain(self.eq_rows.iter().zip(&self.eq_rhs).map(|(r, b)| (r, *b, false)));
        for (i, (row, rhs, is_ub)) in all_rows.enumerate() {
            let biggest = row.iter().fold(rhs.abs(), |m, v| m.max(v.abs()));
            let scale = if biggest > 0.0 { 1.0 / biggest } else { 1.0 };
            let tr = &mut t[i];
            for (j, &a) in row.iter().enumerate() {
                let (p, m) = col_of[j];
                tr[p] += a * scale;
                if let Some(m) = m {
                    tr[m] -= a * scale;
                }
            }
            if is_ub {
                tr[ncols + i] = scale;
            }
            tr[width - 1] = rhs * scale;
            if tr[width - 1] < 0.0 {
                for v in tr.iter_mut() {
                    *v = -*v;
                }
            }
            tr[n_struct + i] = 1.0;
            basis[i] = n_struct + i;
        }

        // Phase 1: minimize the sum of artificials.
        {
            let mut obj = vec![0.0; width];
            for row in &t[..rows] {
                for j in 0..width {
                    if j < n_struct || j == width - 1 {
                        obj[j] -= row[j];
                    }
                }
            }
            t[rows] = obj;
        }
        if !run_simplex(&mut t, &mut basis, n_struct + n_art) {
            // Phase 1 is bounded below by zero.
            return LpOutcome::Infeasible;
        }
        let infeas = -t[rows][width - 1];
        if infeas > FEAS_EPS {
            return LpOutcome::Infeasible;
        }
        // Drive artificials out of the basis.
        let mut keep = vec![true; rows];
        for i in 0..rows {
            if basis[i] >= n_struct {
                if let Some(j) = (0..n_struct).find(|&j| t[i][j].abs() > 1e-9) {
                    pivot(&mut t, &mut basis, i, j);
                } else {
                    keep[i] = false;
                }
            }
        }

        // Phase 2 objective.
        let mut cost_cols = vec![0.0; n_struct];
        for j in 0..self.num_vars {
            let (p, m) = col_of[j];
            cost_cols[p] += self.cost[j];
            if let Some(m) = m {
                cost_cols[m] -= self.cost[j];
            }
        }
        {
            let mut obj = vec![0.0; width];
            obj[..n_struct].copy_from_slice(&cost_cols);
            for i in 0..rows {
                if !keep[i] {
                    continue;
                }
                let cb = if basis[i] < n_struct { cost_cols[basis[i]] } else { 0.0 };
                if cb != 0.0 {
                    for j in 0..width {
                        obj[j] -= cb * t[i][j];
                    }
                }
            }
            t[rows] = obj;
        }
        // Artificial columns are frozen and redundant rows are skipped.
        for (i, k) in keep.iter().enumerate() {
            if !k {
                t[i].iter_mut().for_each(|v| *v = 0.0);
            }
        }
        if !run_simplex(&mut t, &mut basis, n_struct) {
            return LpOutcome::Unbounded;
        }

        let mut cols = vec![0.0; n_struct];
        for i in 0..rows {
            if keep[i] && basis[i] < n_struct {
                cols[basis[i]] = t[i][width - 1];
            }
        }
        let x: Vec<f64> = col_of
            .iter()
            .map(|&(p, m)| cols[p] - m.map_or(0.0, |m| cols[m]))
            .collect();
        let value = x.iter().zip(&self.cost).map(|(a, b)| a * b).sum();
        LpOutcome::Optimal { x, value }
    }
}

fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], r: usize, c: usize) {
    let width = t[r].len();
    let pv = t[r][c];
    for j in 0..width {
        t[r][j] /= pv;
    }
    let prow = t[r].clone();
    for (i, row) in t.iter_mut().enumerate() {
        if i == r {
            continue;
        }
        let f = row[c];
        if f != 0.0 {
            for j in 0..width {
                row[j] -= f * prow[j];
            }
            row[c] = 0.0;
        }
    }
    basis[r] = c;
}

/// Returns false when the objective is unbounded.
fn run_simplex(
    t: &mut [Vec<f64>],
    basis: &mut [usize],
    ncols: usize,
) -> bool {
    let rows = t.len() - 1;
    let width = t[0].len();
    for _ in 0..50_000 {
        // Bland: first improving column.
        let entering = (0..ncols).find(|&j| t[rows][j] < -PIVOT_EPS);
        let Some(c) = entering else { return true };
        let mut best: Option<(usize, f64)> = None;
        for i in 0..rows {
            let a = t[i][c];
            if a > PIVOT_EPS {
                let ratio = t[i][width - 1] / a;
                match best {
                    None => best = Some((i, ratio)),
                    Some((bi, br)) => {
                        if ratio < br - 1e-12 || (ratio <= br + 1e-12 && basis[i] < basis[bi]) {
                            best = Some((i, ratio));
                        }
                    }
                }
            }
        }
        let Some((r, _)) = best else { return false };
        pivot(t, basis, r, c);
    }
    true
}
