//! Dense bounded primal simplex for the small decoy-state programs.
//!
//! Problems have the form `min/max cᵀx` subject to `lo_i ≤ a_iᵀx ≤ hi_i`
//! and `l_j ≤ x_j ≤ u_j`. Each row gets a logical variable `r_i = a_iᵀx`,
//! fixed variables and empty rows are presolved away, the remainder is
//! row-equilibrated (optionally after geometric sweeps) and then solved in two phases (sum of
//! infeasibilities, then the true objective). Pricing is Dantzig's rule;
//! after a run of degenerate pivots the solver falls back to Bland's rule.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Sense {
    Min,
    Max,
}

/// One two-sided row `lo ≤ Σ coef·x ≤ hi`.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub label: String,
    pub coeffs: Vec<(usize, f64)>,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LPProblem {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub labels: Vec<String>,
}

impl LPProblem {
    pub fn new(sense: Sense) -> Self {
        LPProblem {
            sense,
            objective: vec![],
            rows: vec![],
            lower: vec![],
            upper: vec![],
            labels: vec![],
        }
    }

    /// Add a variable and return its index.
    pub fn add_var(&mut self, label: impl Into<String>, lo: f64, hi: f64) -> usize {
        self.objective.push(0.0);
        self.lower.push(lo);
        self.upper.push(hi);
        self.labels.push(label.into());
        self.objective.len() - 1
    }

    pub fn add_row(
        &mut self,
        label: impl Into<String>,
        coeffs: Vec<(usize, f64)>,
        lo: f64,
        hi: f64,
    ) {
        self.rows.push(Row {
            label: label.into(),
            coeffs,
            lo,
            hi,
        });
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    /// Number of one-sided inequalities the rows encode.
    pub fn num_inequalities(&self) -> usize {
        self.rows
            .iter()
            .map(|r| r.lo.is_finite() as usize + r.hi.is_finite() as usize)
            .sum()
    }

    pub fn var_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    fn check(&self) -> Result<()> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n || self.labels.len() != n {
            return Err(Error::InvalidArgument("LP dimension mismatch".into()));
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument(
                "non-finite objective coefficient".into(),
            ));
        }
        for (j, (l, u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if l.is_nan() || u.is_nan() || *l == f64::INFINITY || *u == f64::NEG_INFINITY {
                return Err(Error::InvalidArgument(format!(
                    "bad bounds on {}",
                    self.labels[j]
                )));
            }
        }
        for r in &self.rows {
            if r.lo.is_nan() || r.hi.is_nan() {
                return Err(Error::InvalidArgument(format!(
                    "NaN bound on row {}",
                    r.label
                )));
            }
            for &(j, a) in &r.coeffs {
                if j >= n || !a.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "bad coefficient in row {}",
                        r.label
                    )));
                }
            }
        }
        Ok(())
    }

    /// Row activity `a_iᵀx`.
    pub fn activity(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.coeffs.iter().map(|&(j, a)| a * x[j]).sum())
            .collect()
    }

    /// Largest bound violation of `x`, relative to the bound magnitude.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rel = |v: f64, b: f64| v / b.abs().max(1.0);
        let mut worst = 0.0f64;
        for (r, a) in self.rows.iter().zip(self.activity(x)) {
            worst = worst.max(rel(r.lo - a, r.lo)).max(rel(a - r.hi, r.hi));
        }
        for j in 0..self.num_vars() {
            worst = worst
                .max(rel(self.lower[j] - x[j], self.lower[j]))
                .max(rel(x[j] - self.upper[j], self.upper[j]));
        }
        worst
    }

    /// Plain-text dump for cross-checking with external solvers.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# lp sense={:?} vars={} rows={}",
            self.sense,
            self.num_vars(),
            self.rows.len()
        );
        let terms = |c: &[(usize, f64)]| {
            c.iter()
                .map(|&(j, a)| format!("{a:+.17e} {}", self.labels[j]))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let obj: Vec<(usize, f64)> = self
            .objective
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(j, c)| (j, *c))
            .collect();
        let _ = writeln!(s, "objective: {}", terms(&obj));
        for j in 0..self.num_vars() {
            let _ = writeln!(
                s,
                "var {} [{:.17e}, {:.17e}]",
                self.labels[j], self.lower[j], self.upper[j]
            );
        }
        for r in &self.rows {
            let _ = writeln!(
                s,
                "row {}: {:.17e} <= {} <= {:.17e}",
                r.label,
                r.lo,
                terms(&r.coeffs),
                r.hi
            );
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LPSolution {
    pub status: LpStatus,
    pub objective: f64,
    pub x: Vec<f64>,
    /// Row multipliers; positive means the lower side binds for a
    /// minimization (signs follow the problem sense).
    pub row_duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    /// Objective of the dual point built from the multipliers.
    pub dual_objective: f64,
    pub max_violation: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub feas_tol: f64,
    pub opt_tol: f64,
    pub pivot_tol: f64,
    pub max_iter: usize,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_after: usize,
    pub refactor_every: usize,
    /// Geometric-mean scaling sweeps before the final row equilibration.
    pub scaling_passes: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            feas_tol: 1e-9,
            opt_tol: 1e-9,
            pivot_tol: 1e-9,
            max_iter: 20_000,
            bland_after: 40,
            refactor_every: 60,
            scaling_passes: 0,
        }
    }
}

pub fn solve(problem: &LPProblem) -> Result<LPSolution> {
    solve_with(problem, &SolverOptions::default())
}

pub fn solve_with(problem: &LPProblem, opts: &SolverOptions) -> Result<LPSolution> {
    problem.check()?;
    let n = problem.num_vars();
    let sign = match problem.sense {
        Sense::Min => 1.0,
        Sense::Max => -1.0,
    };
    for j in 0..n {
        if problem.lower[j] > problem.upper[j] {
            return Ok(infeasible(n, problem.rows.len()));
        }
    }

    // Presolve: drop fixed columns and rows left empty.
    let fixed: Vec<bool> = (0..n)
        .map(|j| problem.lower[j] == problem.upper[j])
        .collect();
    let cols: Vec<usize> = (0..n).filter(|&j| !fixed[j]).collect();
    let mut col_pos = vec![usize::MAX; n];
    for (k, &j) in cols.iter().enumerate() {
        col_pos[j] = k;
    }
    let mut red_rows: Vec<(usize, Vec<(usize, f64)>, f64, f64)> = Vec::new();
    for (i, r) in problem.rows.iter().enumerate() {
        let mut shift = 0.0;
        let mut co: Vec<(usize, f64)> = Vec::new();
        for &(j, a) in &r.coeffs {
            if a == 0.0 {
                continue;
            }
            if fixed[j] {
                shift += a * problem.lower[j];
            } else if let Some(e) = co.iter_mut().find(|e| e.0 == col_pos[j]) {
                e.1 += a;
            } else {
                co.push((col_pos[j], a));
            }
        }
        let (lo, hi) = (r.lo - shift, r.hi - shift);
        if co.is_empty() {
            let scale = [r.lo, r.hi, shift]
                .iter()
                .filter(|v| v.is_finite())
                .fold(1.0f64, |a, v| a.max(v.abs()));
            let tol = opts.feas_tol * scale;
            if lo > tol || hi < -tol {
                return Ok(infeasible(n, problem.rows.len()));
            }
            continue;
        }
        red_rows.push((i, co, lo, hi));
    }
    let nc = cols.len();
    let m = red_rows.len();

    // Geometric scaling, then row equilibration.
    let mut rs = vec![1.0; m];
    let mut cs = vec![1.0; nc];
    for _ in 0..opts.scaling_passes {
        for (i, (_, co, _, _)) in red_rows.iter().enumerate() {
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for &(k, a) in co {
                let v = (a * cs[k]).abs();
                lo = lo.min(v);
                hi = hi.max(v);
            }
            rs[i] = 1.0 / (lo * hi).sqrt();
        }
        let mut lo = vec![f64::INFINITY; nc];
        let mut hi = vec![0.0f64; nc];
        for (i, (_, co, _, _)) in red_rows.iter().enumerate() {
            for &(k, a) in co {
                let v = (a * rs[i]).abs();
                lo[k] = lo[k].min(v);
                hi[k] = hi[k].max(v);
            }
        }
        for k in 0..nc {
            if hi[k] > 0.0 {
                cs[k] = 1.0 / (lo[k] * hi[k]).sqrt();
            }
        }
    }
    for (i, (_, co, _, _)) in red_rows.iter().enumerate() {
        let mx = co
            .iter()
            .map(|&(k, a)| (a * cs[k]).abs())
            .fold(0.0, f64::max);
        rs[i] = 1.0 / mx;
    }

    let ncols = nc + m;
    let mut a = vec![0.0; m * nc];
    for (i, (_, co, _, _)) in red_rows.iter().enumerate() {
        for &(k, v) in co {
            a[i * nc + k] = v * rs[i] * cs[k];
        }
    }
    let mut lo = vec![0.0; ncols];
    let mut hi = vec![0.0; ncols];
    let mut cost = vec![0.0; ncols];
    for (k, &j) in cols.iter().enumerate() {
        lo[k] = problem.lower[j] / cs[k];
        hi[k] = problem.upper[j] / cs[k];
        cost[k] = sign * problem.objective[j] * cs[k];
    }
    for (i, (_, _, l, h)) in red_rows.iter().enumerate() {
        lo[nc + i] = l * rs[i];
        hi[nc + i] = h * rs[i];
    }

    let mut sx = Simplex::new(m, nc, a, lo, hi, *opts);
    let status = sx.run(&cost)?;

    let mut x = problem.lower.clone();
    for (k, &j) in cols.iter().enumerate() {
        x[j] = sx.x[k] * cs[k];
    }
    if status != LpStatus::Optimal {
        let mut s = infeasible(n, problem.rows.len());
        s.status = status;
        s.x = x;
        s.iterations = sx.iterations;
        return Ok(s);
    }

    // Multipliers of the scaled problem mapped back to the original one.
    let d = sx.reduced_costs(&cost);
    let mut row_duals = vec![0.0; problem.rows.len()];
    for (i, (orig, _, _, _)) in red_rows.iter().enumerate() {
        row_duals[*orig] = sign * d[nc + i] * rs[i];
    }
    let mut reduced = vec![0.0; n];
    for (k, &j) in cols.iter().enumerate() {
        reduced[j] = sign * d[k] / cs[k];
    }
    for j in 0..n {
        if fixed[j] {
            let col: f64 = problem
                .rows
                .iter()
                .zip(&row_duals)
                .map(|(r, y)| {
                    r.coeffs
                        .iter()
                        .filter(|e| e.0 == j)
                        .map(|e| e.1)
                        .sum::<f64>()
                        * y
                })
                .sum();
            reduced[j] = problem.objective[j] - col;
        }
    }
    let objective: f64 = problem.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    let pick = |mult: f64, l: f64, u: f64| {
        // For a minimization a positive multiplier sits on the lower bound.
        let b = if sign * mult > 0.0 { l } else { u };
        if mult == 0.0 || !b.is_finite() {
            0.0
        } else {
            mult * b
        }
    };
    let mut dual_objective = 0.0;
    for (r, y) in problem.rows.iter().zip(&row_duals) {
        dual_objective += pick(*y, r.lo, r.hi);
    }
    for j in 0..n {
        dual_objective += pick(reduced[j], problem.lower[j], problem.upper[j]);
    }
    Ok(LPSolution {
        status,
        objective,
        max_violation: problem.max_violation(&x),
        x,
        row_duals,
        reduced_costs: reduced,
        dual_objective,
        iterations: sx.iterations,
    })
}

fn infeasible(n: usize, m: usize) -> LPSolution {
    LPSolution {
        status: LpStatus::Infeasible,
        objective: f64::NAN,
        x: vec![f64::NAN; n],
        row_duals: vec![0.0; m],
        reduced_costs: vec![0.0; n],
        dual_objective: f64::NAN,
        max_violation: f64::NAN,
        iterations: 0,
    }
}

/// Tableau `B⁻¹[A | −I]` over structural and logical columns.
struct Simplex {
    m: usize,
    nc: usize,
    ncols: usize,
    a: Vec<f64>,
    t: Vec<f64>,
    basis: Vec<usize>,
    /// Row of each basic column, `usize::MAX` when nonbasic.
    pos: Vec<usize>,
    x: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    opts: SolverOptions,
    iterations: usize,
}

impl Simplex {
    fn new(
        m: usize,
        nc: usize,
        a: Vec<f64>,
        lo: Vec<f64>,
        hi: Vec<f64>,
        opts: SolverOptions,
    ) -> Self {
        let ncols = nc + m;
        let mut x = vec![0.0; ncols];
        for k in 0..nc {
            x[k] = if lo[k].is_finite() {
                lo[k]
            } else if hi[k].is_finite() {
                hi[k]
            } else {
                0.0
            };
        }
        let basis: Vec<usize> = (nc..ncols).collect();
        let mut pos = vec![usize::MAX; ncols];
        for (i, &b) in basis.iter().enumerate() {
            pos[b] = i;
        }
        let mut s = Simplex {
            m,
            nc,
            ncols,
            a,
            t: vec![0.0; m * ncols],
            basis,
            pos,
            x,
            lo,
            hi,
            opts,
            iterations: 0,
        };
        s.refactor().expect("identity basis");
        s
    }

    fn tol(&self, bound: f64) -> f64 {
        self.opts.feas_tol * bound.abs().max(1.0)
    }

    /// Rebuild the tableau and basic values from the original matrix.
    ///
    /// A numerically singular basis is repaired by swapping the offending
    /// columns for logicals of uncovered rows.
    fn refactor(&mut self) -> Result<()> {
        for _ in 0..=self.m {
            match self.factor() {
                Ok(()) => return Ok(()),
                Err((c, rows)) => {
                    let Some(i) = rows.into_iter().find(|&i| self.pos[self.nc + i] == usize::MAX) else {
                        break;
                    };
                    let out = self.basis[c];
                    self.x[out] = if self.x[out] <= self.lo[out] || !self.hi[out].is_finite() {
                        if self.lo[out].is_finite() { self.lo[out] } else { self.x[out] }
                    } else if self.x[out] >= self.hi[out] || !self.lo[out].is_finite() {
                        self.hi[out]
                    } else if self.x[out] - self.lo[out] < self.hi[out] - self.x[out] {
                        self.lo[out]
                    } else {
                        self.hi[out]
                    };
                    self.pos[out] = usize::MAX;
                    self.basis[c] = self.nc + i;
                    self.pos[self.nc + i] = c;
                }
            }
        }
        Err(Error::Numeric("singular simplex basis".into()))
    }

    /// Gauss–Jordan factorisation; on failure returns the basis position and
    /// the rows not yet pivoted.
    fn factor(&mut self) -> std::result::Result<(), (usize, Vec<usize>)> {
        let (m, nc, ncols) = (self.m, self.nc, self.ncols);
        // B column j: structural k -> A[:,k], logical nc+i -> −e_i
        let mut b = vec![0.0; m * m];
        for (col, &v) in self.basis.iter().enumerate() {
            if v < nc {
                for i in 0..m {
                    b[i * m + col] = self.a[i * nc + v];
                }
            } else {
                b[(v - nc) * m + col] = -1.0;
            }
        }
        // Gauss–Jordan on [B | [A | −I]]
        let mut t = vec![0.0; m * ncols];
        for i in 0..m {
            t[i * ncols..i * ncols + nc].copy_from_slice(&self.a[i * nc..(i + 1) * nc]);
            t[i * ncols + nc + i] = -1.0;
        }
        let mut perm: Vec<usize> = (0..m).collect();
        for c in 0..m {
            let (mut best, mut piv) = (0.0, usize::MAX);
            for r in c..m {
                let v = b[perm[r] * m + c].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if piv == usize::MAX || best < 1e-13 {
                return Err((c, perm[c..].to_vec()));
            }
            perm.swap(c, piv);
            let pr = perm[c];
            let inv = 1.0 / b[pr * m + c];
            for k in 0..m {
                b[pr * m + k] *= inv;
            }
            for k in 0..ncols {
                t[pr * ncols + k] *= inv;
            }
            for r in 0..m {
                if r == pr {
                    continue;
                }
                let f = b[r * m + c];
                if f == 0.0 {
                    continue;
                }
                for k in 0..m {
                    b[r * m + k] -= f * b[pr * m + k];
                }
                for k in 0..ncols {
                    t[r * ncols + k] -= f * t[pr * ncols + k];
                }
            }
        }
        // Row perm[c] of the reduced system now belongs to basis column c.
        let mut out = vec![0.0; m * ncols];
        for c in 0..m {
            out[c * ncols..(c + 1) * ncols]
                .copy_from_slice(&t[perm[c] * ncols..(perm[c] + 1) * ncols]);
        }
        self.t = out;
        self.recompute_basic();
        Ok(())
    }

    fn recompute_basic(&mut self) {
        for i in 0..self.m {
            let row = &self.t[i * self.ncols..(i + 1) * self.ncols];
            let mut v = 0.0;
            for k in 0..self.ncols {
                if self.pos[k] == usize::MAX && self.x[k] != 0.0 {
                    v -= row[k] * self.x[k];
                }
            }
            self.x[self.basis[i]] = v;
        }
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut d = cost.to_vec();
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb == 0.0 {
                continue;
            }
            let row = &self.t[i * self.ncols..(i + 1) * self.ncols];
            for k in 0..self.ncols {
                d[k] -= cb * row[k];
            }
        }
        for &b in &self.basis {
            d[b] = 0.0;
        }
        d
    }

    fn infeasibility_cost(&self) -> (Vec<f64>, f64) {
        let mut c = vec![0.0; self.ncols];
        let mut total = 0.0;
        for &b in &self.basis {
            let v = self.x[b];
            if v < self.lo[b] - self.tol(self.lo[b]) {
                c[b] = -1.0;
                total += self.lo[b] - v;
            } else if v > self.hi[b] + self.tol(self.hi[b]) {
                c[b] = 1.0;
                total += v - self.hi[b];
            }
        }
        (c, total)
    }

    fn run(&mut self, cost: &[f64]) -> Result<LpStatus> {
        let mut degenerate = 0usize;
        let mut since_refactor = 0usize;
        let mut phase_one = true;
        loop {
            if self.iterations >= self.opts.max_iter {
                return Err(Error::Numeric("simplex iteration limit reached".into()));
            }
            if since_refactor >= self.opts.refactor_every {
                self.refactor()?;
                since_refactor = 0;
            }
            let c = if phase_one {
                let (c, total) = self.infeasibility_cost();
                if total == 0.0 {
                    phase_one = false;
                    degenerate = 0;
                    continue;
                }
                c
            } else {
                cost.to_vec()
            };
            let d = self.reduced_costs(&c);
            let bland = degenerate >= self.opts.bland_after;
            let mut enter = usize::MAX;
            let mut best = 0.0;
            for k in 0..self.ncols {
                if self.pos[k] != usize::MAX || self.lo[k] == self.hi[k] {
                    continue;
                }
                let can_up = self.x[k] < self.hi[k];
                let can_down = self.x[k] > self.lo[k];
                let score = if d[k] < -self.opts.opt_tol && can_up {
                    -d[k]
                } else if d[k] > self.opts.opt_tol && can_down {
                    d[k]
                } else {
                    continue;
                };
                if bland {
                    enter = k;
                    break;
                }
                if score > best {
                    best = score;
                    enter = k;
                }
            }
            if enter == usize::MAX {
                if phase_one {
                    // Recheck with fresh factors before declaring infeasibility.
                    if since_refactor > 0 {
                        self.refactor()?;
                        since_refactor = 0;
                        continue;
                    }
                    return Ok(LpStatus::Infeasible);
                }
                if since_refactor > 0 {
                    self.refactor()?;
                    since_refactor = 0;
                    let (_, total) = self.infeasibility_cost();
                    if total > 0.0 {
                        phase_one = true;
                    }
                    continue;
                }
                return Ok(LpStatus::Optimal);
            }
            let dir = if d[enter] < 0.0 { 1.0 } else { -1.0 };

            // Ratio test: entering bound flip or first basic breakpoint.
            let mut step = self.hi[enter] - self.lo[enter];
            let mut leave = usize::MAX;
            let mut leave_to = 0.0;
            let mut leave_piv = 0.0f64;
            for i in 0..self.m {
                let tij = self.t[i * self.ncols + enter];
                if tij.abs() < self.opts.pivot_tol {
                    continue;
                }
                let b = self.basis[i];
                let rate = -dir * tij;
                let v = self.x[b];
                let (l, h) = (self.lo[b], self.hi[b]);
                let below = v < l - self.tol(l);
                let above = v > h + self.tol(h);
                let target = if phase_one && below {
                    if rate > 0.0 {
                        l
                    } else {
                        continue;
                    }
                } else if phase_one && above {
                    if rate < 0.0 {
                        h
                    } else {
                        continue;
                    }
                } else if rate > 0.0 {
                    h
                } else {
                    l
                };
                if !target.is_finite() {
                    continue;
                }
                let ratio = ((target - v) / rate).max(0.0);
                let tie = 1e-12 * step.abs().max(1e-30);
                let better = if leave == usize::MAX {
                    ratio < step
                } else if ratio < step - tie {
                    true
                } else if ratio <= step + tie {
                    if bland {
                        b < self.basis[leave]
                    } else {
                        tij.abs() > leave_piv
                    }
                } else {
                    false
                };
                if better {
                    step = ratio;
                    leave = i;
                    leave_to = target;
                    leave_piv = tij.abs();
                }
            }
            if leave == usize::MAX && !step.is_finite() {
                if phase_one {
                    return Err(Error::Numeric(
                        "unbounded ray while restoring feasibility".into(),
                    ));
                }
                return Ok(LpStatus::Unbounded);
            }
            self.iterations += 1;
            degenerate = if step <= 1e-12 { degenerate + 1 } else { 0 };

            // Move along the edge.
            let delta = dir * step;
            if delta != 0.0 {
                self.x[enter] += delta;
                for i in 0..self.m {
                    let tij = self.t[i * self.ncols + enter];
                    if tij != 0.0 {
                        self.x[self.basis[i]] -= tij * delta;
                    }
                }
            }
            if leave == usize::MAX {
                // bound flip
                self.x[enter] = if dir > 0.0 {
                    self.hi[enter]
                } else {
                    self.lo[enter]
                };
                continue;
            }
            let out = self.basis[leave];
            self.pivot(leave, enter);
            self.x[out] = leave_to;
            since_refactor += 1;
        }
    }

    fn pivot(&mut self, r: usize, k: usize) {
        let nc = self.ncols;
        let p = self.t[r * nc + k];
        let inv = 1.0 / p;
        for c in 0..nc {
            self.t[r * nc + c] *= inv;
        }
        let (head, rest) = self.t.split_at_mut(r * nc);
        let (prow, tail) = rest.split_at_mut(nc);
        for row in head.chunks_mut(nc).chain(tail.chunks_mut(nc)) {
            let f = row[k];
            if f != 0.0 {
                for c in 0..nc {
                    row[c] -= f * prow[c];
                }
                row[k] = 0.0;
            }
        }
        let out = self.basis[r];
        self.pos[out] = usize::MAX;
        self.basis[r] = k;
        self.pos[k] = r;
    }
}
