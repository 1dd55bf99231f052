//! Dense bounded-variable primal simplex.
//!
//! Solves `min c'x s.t. Gx <= h, lb <= x <= ub` with finite bounds on every
//! structural variable. Rows get a slack column each; rows that are violated
//! at the starting point (all variables at their lower bounds) get an
//! artificial column, and phase 1 minimizes the sum of artificials. Bounds
//! are handled implicitly: nonbasic variables sit at either bound and may
//! flip between them without a pivot.
//!
//! Pricing is Dantzig's rule with lowest-index tie-breaks. After a run of
//! degenerate pivots the solver switches to Bland's rule for the rest of the
//! phase, which rules out cycling. Everything is sequential and free of
//! hashing or randomness, so identical inputs give bit-identical outputs.
//!
//! The returned point is always a basic feasible solution, i.e. a vertex of
//! the feasible polyhedron.

use thiserror::Error;

use crate::matrix::{dot, Matrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpOptions {
    /// Primal feasibility tolerance.
    pub feas_tol: f64,
    /// Objective comparison tolerance used by callers.
    pub obj_tol: f64,
    /// Smallest magnitude accepted as a pivot element.
    pub pivot_tol: f64,
    /// Reduced-cost optimality tolerance.
    pub opt_tol: f64,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub degenerate_limit: usize,
    /// Pivots between two refactorizations of the basis.
    pub refactor_every: usize,
    pub max_pivots: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self {
            feas_tol: 1e-8,
            obj_tol: 1e-7,
            pivot_tol: 1e-10,
            opt_tol: 1e-9,
            degenerate_limit: 50,
            refactor_every: 100,
            max_pivots: 200_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("variable {0} has an infinite or inverted bound")]
    InvalidBounds(usize),
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
    #[error("pivot limit of {0} exceeded")]
    IterationLimit(usize),
    #[error("vertex enumeration limited to {limit} variables, got {n}")]
    DimensionTooLarge { n: usize, limit: usize },
}

/// `min objective'x s.t. constraints x <= rhs, lower <= x <= upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub constraints: Matrix,
    pub rhs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LpProblem {
    pub fn new(
        objective: Vec<f64>,
        constraints: Matrix,
        rhs: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self, LpError> {
        let p = Self {
            objective,
            constraints,
            rhs,
            lower,
            upper,
        };
        check_dims(&p.objective, &p.constraints, &p.rhs, &p.lower, &p.upper)?;
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.objective.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpResult {
    pub status: LpStatus,
    /// Optimal vertex (empty when infeasible).
    pub x: Vec<f64>,
    pub value: f64,
    pub is_vertex: bool,
    /// Simplex multipliers of the rows, `<= 0` at optimality: the reduced
    /// cost of a new column `(c, a)` is `c - multipliers' a`.
    pub multipliers: Vec<f64>,
    pub pivots: usize,
}

impl LpResult {
    fn infeasible(pivots: usize) -> Self {
        Self {
            status: LpStatus::Infeasible,
            x: Vec::new(),
            value: f64::INFINITY,
            is_vertex: false,
            multipliers: Vec::new(),
            pivots,
        }
    }
}

pub fn solve_lp(problem: &LpProblem) -> Result<LpResult, LpError> {
    solve_lp_with(problem, &LpOptions::default())
}

pub fn solve_lp_with(problem: &LpProblem, opts: &LpOptions) -> Result<LpResult, LpError> {
    solve_parts(
        &problem.objective,
        &problem.constraints,
        &problem.rhs,
        &problem.lower,
        &problem.upper,
        opts,
    )
}

fn check_dims(c: &[f64], g: &Matrix, h: &[f64], lb: &[f64], ub: &[f64]) -> Result<(), LpError> {
    let n = c.len();
    if g.rows() > 0 && g.cols() != n {
        return Err(LpError::DimensionMismatch(format!(
            "constraint matrix has {} columns, objective has {n}",
            g.cols()
        )));
    }
    if g.rows() != h.len() {
        return Err(LpError::DimensionMismatch(format!(
            "{} constraint rows but {} right-hand sides",
            g.rows(),
            h.len()
        )));
    }
    if lb.len() != n || ub.len() != n {
        return Err(LpError::DimensionMismatch("bound vectors".into()));
    }
    for j in 0..n {
        if !(lb[j].is_finite() && ub[j].is_finite() && lb[j] <= ub[j]) {
            return Err(LpError::InvalidBounds(j));
        }
    }
    Ok(())
}

/// Borrowing entry point used by branch and bound, which re-solves the same
/// rows under different bounds.
pub(crate) fn solve_parts(
    c: &[f64],
    g: &Matrix,
    h: &[f64],
    lb: &[f64],
    ub: &[f64],
    opts: &LpOptions,
) -> Result<LpResult, LpError> {
    check_dims(c, g, h, lb, ub)?;
    let mut s = Simplex::new(g, h, lb, ub, opts);
    if s.n_art > 0 {
        s.set_phase_one_costs();
        s.run()?;
        let infeas: f64 = (0..s.r)
            .filter(|&i| s.basis[i] >= s.n + s.r)
            .map(|i| s.beta[i].max(0.0))
            .sum();
        let hmax = h.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if infeas > opts.feas_tol * (1.0 + hmax) {
            return Ok(LpResult::infeasible(s.pivots));
        }
        s.retire_artificials()?;
    }
    s.set_costs(c);
    s.run()?;
    s.finish(c)
}

#[derive(Debug, Clone, Copy)]
enum Leave {
    Flip,
    Row { row: usize, to_upper: bool },
}

const NONBASIC: usize = usize::MAX;

struct Simplex<'a> {
    g: &'a Matrix,
    h: &'a [f64],
    opts: &'a LpOptions,
    n: usize,
    r: usize,
    n_art: usize,
    nc: usize,
    /// Row owning each artificial column.
    art_row: Vec<usize>,
    /// `B^{-1} [G | I | -E]`, row-major `r x nc`.
    tab: Vec<f64>,
    /// Values of the basic variables.
    beta: Vec<f64>,
    basis: Vec<usize>,
    /// Row of each basic column, `NONBASIC` otherwise.
    pos: Vec<usize>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    at_upper: Vec<bool>,
    cost: Vec<f64>,
    /// Reduced costs.
    d: Vec<f64>,
    bland: bool,
    degenerate_run: usize,
    pivots: usize,
    since_refactor: usize,
    scratch: Vec<f64>,
}

impl<'a> Simplex<'a> {
    fn new(g: &'a Matrix, h: &'a [f64], lb: &[f64], ub: &[f64], opts: &'a LpOptions) -> Self {
        let n = lb.len();
        let r = h.len();
        // Residuals with every structural at its lower bound.
        let res: Vec<f64> = (0..r).map(|i| h[i] - dot(g.row(i), lb)).collect();
        let art_rows: Vec<usize> = (0..r).filter(|&i| res[i] < 0.0).collect();
        let n_art = art_rows.len();
        let nc = n + r + n_art;

        let mut tab = vec![0.0; r * nc];
        let mut beta = vec![0.0; r];
        let mut basis = vec![0; r];
        let mut pos = vec![NONBASIC; nc];
        let mut art_of = vec![NONBASIC; r];
        for (a, &i) in art_rows.iter().enumerate() {
            art_of[i] = a;
        }
        for i in 0..r {
            let row = &mut tab[i * nc..(i + 1) * nc];
            if art_of[i] == NONBASIC {
                row[..n].copy_from_slice(g.row(i));
                row[n + i] = 1.0;
                basis[i] = n + i;
                beta[i] = res[i];
            } else {
                for (t, v) in row[..n].iter_mut().zip(g.row(i)) {
                    *t = -v;
                }
                row[n + i] = -1.0;
                let col = n + r + art_of[i];
                row[col] = 1.0;
                basis[i] = col;
                beta[i] = -res[i];
            }
            pos[basis[i]] = i;
        }
        let mut lbs = Vec::with_capacity(nc);
        lbs.extend_from_slice(lb);
        lbs.resize(nc, 0.0);
        let mut ubs = Vec::with_capacity(nc);
        ubs.extend_from_slice(ub);
        ubs.resize(nc, f64::INFINITY);

        Self {
            g,
            h,
            opts,
            n,
            r,
            n_art,
            nc,
            art_row: art_rows,
            tab,
            beta,
            basis,
            pos,
            lb: lbs,
            ub: ubs,
            at_upper: vec![false; nc],
            cost: vec![0.0; nc],
            d: vec![0.0; nc],
            bland: false,
            degenerate_run: 0,
            pivots: 0,
            since_refactor: 0,
            scratch: vec![0.0; nc],
        }
    }

    #[inline]
    fn value(&self, j: usize) -> f64 {
        if self.pos[j] != NONBASIC {
            self.beta[self.pos[j]]
        } else if self.at_upper[j] {
            self.ub[j]
        } else {
            self.lb[j]
        }
    }

    /// Entry `i` of column `j` of `[G | I | -E]`.
    #[inline]
    fn column_entry(&self, j: usize, i: usize) -> f64 {
        if j < self.n {
            self.g.get(i, j)
        } else if j < self.n + self.r {
            f64::from(u8::from(j - self.n == i))
        } else if self.art_row[j - self.n - self.r] == i {
            -1.0
        } else {
            0.0
        }
    }

    fn set_phase_one_costs(&mut self) {
        self.cost.iter_mut().for_each(|c| *c = 0.0);
        for a in 0..self.n_art {
            self.cost[self.n + self.r + a] = 1.0;
        }
        self.reset_pricing();
    }

    fn set_costs(&mut self, c: &[f64]) {
        self.cost.iter_mut().for_each(|v| *v = 0.0);
        self.cost[..self.n].copy_from_slice(c);
        self.reset_pricing();
    }

    fn reset_pricing(&mut self) {
        self.bland = false;
        self.degenerate_run = 0;
        self.recompute_reduced_costs();
    }

    fn recompute_reduced_costs(&mut self) {
        self.d.copy_from_slice(&self.cost);
        for i in 0..self.r {
            let cb = self.cost[self.basis[i]];
            if cb == 0.0 {
                continue;
            }
            let row = &self.tab[i * self.nc..(i + 1) * self.nc];
            for (d, t) in self.d.iter_mut().zip(row) {
                *d -= cb * t;
            }
        }
        for i in 0..self.r {
            self.d[self.basis[i]] = 0.0;
        }
    }

    fn choose_entering(&self) -> Option<(usize, f64)> {
        let tol = self.opts.opt_tol;
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = 0.0;
        for j in 0..self.nc {
            if self.pos[j] != NONBASIC || self.lb[j] == self.ub[j] {
                continue;
            }
            let dj = self.d[j];
            let (score, dir) = if !self.at_upper[j] && dj < -tol {
                (-dj, 1.0)
            } else if self.at_upper[j] && dj > tol {
                (dj, -1.0)
            } else {
                continue;
            };
            if self.bland {
                return Some((j, dir));
            }
            if score > best_score {
                best_score = score;
                best = Some((j, dir));
            }
        }
        best
    }

    /// Returns the step length and what blocks it, or `None` if unbounded.
    fn ratio_test(&self, q: usize, dir: f64) -> Option<(f64, Leave)> {
        let span = self.ub[q] - self.lb[q];
        let mut best_t = span;
        let mut leave = if span.is_finite() {
            Some(Leave::Flip)
        } else {
            None
        };
        let mut best_alpha = 0.0_f64;
        for i in 0..self.r {
            let a = self.tab[i * self.nc + q];
            if a.abs() <= self.opts.pivot_tol {
                continue;
            }
            let rate = -dir * a;
            let bv = self.basis[i];
            let (t, to_upper) = if rate < 0.0 {
                ((self.beta[i] - self.lb[bv]).max(0.0) / -rate, false)
            } else if self.ub[bv].is_finite() {
                ((self.ub[bv] - self.beta[i]).max(0.0) / rate, true)
            } else {
                continue;
            };
            let eps = 1e-12 * best_t.abs().max(1.0);
            let take = match leave {
                None => true,
                Some(_) if t < best_t - eps => true,
                Some(Leave::Row { row, .. }) if t <= best_t + eps => {
                    if self.bland {
                        bv < self.basis[row]
                    } else {
                        a.abs() > best_alpha
                    }
                }
                _ => false,
            };
            if take {
                best_t = t;
                best_alpha = a.abs();
                leave = Some(Leave::Row { row: i, to_upper });
            }
        }
        leave.map(|l| (best_t, l))
    }

    fn pivot(&mut self, l: usize, q: usize) {
        let nc = self.nc;
        let inv = 1.0 / self.tab[l * nc + q];
        {
            let prow = &mut self.tab[l * nc..(l + 1) * nc];
            for v in prow.iter_mut() {
                *v *= inv;
            }
            prow[q] = 1.0;
            self.scratch.copy_from_slice(prow);
        }
        for i in 0..self.r {
            if i == l {
                continue;
            }
            let row = &mut self.tab[i * nc..(i + 1) * nc];
            let f = row[q];
            if f == 0.0 {
                continue;
            }
            for (t, p) in row.iter_mut().zip(&self.scratch) {
                *t -= f * p;
            }
            row[q] = 0.0;
        }
        let f = self.d[q];
        if f != 0.0 {
            for (d, p) in self.d.iter_mut().zip(&self.scratch) {
                *d -= f * p;
            }
        }
        self.d[q] = 0.0;
    }

    fn run(&mut self) -> Result<(), LpError> {
        loop {
            if self.pivots >= self.opts.max_pivots {
                return Err(LpError::IterationLimit(self.opts.max_pivots));
            }
            if self.since_refactor >= self.opts.refactor_every {
                self.refactor()?;
            }
            let Some((q, dir)) = self.choose_entering() else {
                return Ok(());
            };
            let Some((t, leave)) = self.ratio_test(q, dir) else {
                if self.since_refactor > 0 {
                    self.refactor()?;
                    continue;
                }
                return Err(LpError::NumericalBreakdown(format!(
                    "column {q} has no usable pivot and no finite step"
                )));
            };
            self.step(q, dir, t, leave);
        }
    }

    fn step(&mut self, q: usize, dir: f64, t: f64, leave: Leave) {
        let nc = self.nc;
        let entering_value = self.value(q) + dir * t;
        if t > 0.0 {
            for i in 0..self.r {
                let a = self.tab[i * nc + q];
                if a != 0.0 {
                    self.beta[i] -= dir * t * a;
                }
            }
        }
        match leave {
            Leave::Flip => self.at_upper[q] = !self.at_upper[q],
            Leave::Row { row, to_upper } => {
                let lv = self.basis[row];
                self.pos[lv] = NONBASIC;
                self.at_upper[lv] = to_upper;
                self.pivot(row, q);
                self.basis[row] = q;
                self.pos[q] = row;
                self.at_upper[q] = false;
                self.beta[row] = entering_value;
            }
        }
        self.pivots += 1;
        self.since_refactor += 1;
        if t <= 1e-12 {
            self.degenerate_run += 1;
            if self.degenerate_run > self.opts.degenerate_limit {
                self.bland = true;
            }
        } else {
            self.degenerate_run = 0;
        }
    }

    /// Rebuilds the tableau, basic values and reduced costs from the
    /// original data and the current basis.
    fn refactor(&mut self) -> Result<(), LpError> {
        let r = self.r;
        let nc = self.nc;
        if r == 0 {
            self.since_refactor = 0;
            return Ok(());
        }
        // Gauss-Jordan on [B | I] with partial pivoting.
        let w = 2 * r;
        let mut aug = vec![0.0; r * w];
        for k in 0..r {
            let col = self.basis[k];
            for i in 0..r {
                aug[i * w + k] = self.column_entry(col, i);
            }
        }
        for i in 0..r {
            aug[i * w + r + i] = 1.0;
        }
        for k in 0..r {
            let (mut piv_row, mut piv_abs) = (k, 0.0);
            for i in k..r {
                let v = aug[i * w + k].abs();
                if v > piv_abs {
                    piv_abs = v;
                    piv_row = i;
                }
            }
            if piv_abs < self.opts.pivot_tol {
                return Err(LpError::NumericalBreakdown(format!(
                    "singular basis during refactorization (pivot {piv_abs:e})"
                )));
            }
            if piv_row != k {
                for j in 0..w {
                    aug.swap(k * w + j, piv_row * w + j);
                }
            }
            let inv = 1.0 / aug[k * w + k];
            for j in 0..w {
                aug[k * w + j] *= inv;
            }
            for i in 0..r {
                if i == k {
                    continue;
                }
                let f = aug[i * w + k];
                if f == 0.0 {
                    continue;
                }
                for j in 0..w {
                    aug[i * w + j] -= f * aug[k * w + j];
                }
            }
        }
        // Row k of B^{-1} is aug[k, r..2r]. Basis column k sits in row k.
        let binv = |i: usize, k: usize| aug[i * w + r + k];
        for i in 0..r {
            for j in 0..self.n {
                let mut s = 0.0;
                for k in 0..r {
                    let gkj = self.g.get(k, j);
                    if gkj != 0.0 {
                        s += binv(i, k) * gkj;
                    }
                }
                self.tab[i * nc + j] = s;
            }
            for k in 0..r {
                self.tab[i * nc + self.n + k] = binv(i, k);
            }
            for (a, &row) in self.art_row.iter().enumerate() {
                self.tab[i * nc + self.n + r + a] = -binv(i, row);
            }
        }
        let mut rhs = self.h.to_vec();
        for j in 0..nc {
            if self.pos[j] != NONBASIC {
                continue;
            }
            let v = self.value(j);
            if v == 0.0 {
                continue;
            }
            for (i, ri) in rhs.iter_mut().enumerate() {
                let e = self.column_entry(j, i);
                if e != 0.0 {
                    *ri -= e * v;
                }
            }
        }
        for i in 0..r {
            self.beta[i] = (0..r).map(|k| binv(i, k) * rhs[k]).sum();
        }
        for i in 0..r {
            let q = self.basis[i];
            self.tab[i * nc + q] = 1.0;
        }
        self.recompute_reduced_costs();
        self.since_refactor = 0;
        Ok(())
    }

    /// Fixes artificials at zero and pivots basic ones out where possible.
    fn retire_artificials(&mut self) -> Result<(), LpError> {
        let first_art = self.n + self.r;
        for a in first_art..self.nc {
            self.ub[a] = 0.0;
            self.at_upper[a] = false;
        }
        for l in 0..self.r {
            if self.basis[l] < first_art {
                continue;
            }
            let row = &self.tab[l * self.nc..(l + 1) * self.nc];
            let mut best = None;
            let mut best_abs = 1e-7;
            for (j, &v) in row[..first_art].iter().enumerate() {
                if self.pos[j] == NONBASIC && v.abs() > best_abs {
                    best_abs = v.abs();
                    best = Some(j);
                }
            }
            if let Some(q) = best {
                let lv = self.basis[l];
                let entering_value = self.value(q);
                self.pos[lv] = NONBASIC;
                self.pivot(l, q);
                self.basis[l] = q;
                self.pos[q] = l;
                self.at_upper[q] = false;
                self.beta[l] = entering_value;
                self.pivots += 1;
                self.since_refactor += 1;
            }
        }
        if self.since_refactor > 0 {
            self.refactor()?;
        }
        Ok(())
    }

    fn finish(mut self, c: &[f64]) -> Result<LpResult, LpError> {
        if self.since_refactor > 0 {
            self.refactor()?;
        }
        for i in 0..self.r {
            let bv = self.basis[i];
            let (lo, hi, v) = (self.lb[bv], self.ub[bv], self.beta[i]);
            let slack = 1e-6 * (1.0 + v.abs());
            if v < lo - slack || v > hi + slack {
                return Err(LpError::NumericalBreakdown(format!(
                    "basic variable {bv} = {v:e} outside [{lo:e}, {hi:e}] after refactorization"
                )));
            }
        }
        let x: Vec<f64> = (0..self.n)
            .map(|j| self.value(j).clamp(self.lb[j], self.ub[j]))
            .collect();
        let multipliers = (0..self.r).map(|i| -self.d[self.n + i]).collect();
        Ok(LpResult {
            status: LpStatus::Optimal,
            value: dot(c, &x),
            x,
            is_vertex: true,
            multipliers,
            pivots: self.pivots,
        })
    }
}

/// All vertices of `{x : Gx <= h, lb <= x <= ub}` by brute force over
/// `n`-subsets of the active constraints. Meant as a test oracle: guarded to
/// `n <= 12`. Output is sorted lexicographically and deduplicated.
pub fn enumerate_vertices(problem: &LpProblem) -> Result<Vec<Vec<f64>>, LpError> {
    const LIMIT: usize = 12;
    let n = problem.n();
    if n > LIMIT {
        return Err(LpError::DimensionTooLarge { n, limit: LIMIT });
    }
    let tol = LpOptions::default().feas_tol;
    // Constraint list as (row, rhs): G rows, then x_j <= ub_j, -x_j <= -lb_j.
    let mut rows: Vec<(Vec<f64>, f64)> = (0..problem.constraints.rows())
        .map(|i| (problem.constraints.row(i).to_vec(), problem.rhs[i]))
        .collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        rows.push((e.clone(), problem.upper[j]));
        e[j] = -1.0;
        rows.push((e, -problem.lower[j]));
    }
    let total = rows.len();
    let mut vertices: Vec<Vec<f64>> = Vec::new();
    if n == 0 {
        return Ok(vertices);
    }
    let mut subset: Vec<usize> = (0..n).collect();
    loop {
        if let Some(x) = solve_square(&rows, &subset) {
            let feasible = rows.iter().all(|(a, b)| {
                let scale = 1.0 + b.abs() + a.iter().map(|v| v.abs()).sum::<f64>();
                dot(a, &x) <= b + tol * scale
            });
            if feasible && !vertices.iter().any(|v| close(v, &x, 1e-7)) {
                vertices.push(x);
            }
        }
        // Next combination in lexicographic order.
        let mut i = n;
        loop {
            if i == 0 {
                vertices.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
                return Ok(vertices);
            }
            i -= 1;
            if subset[i] < total - n + i {
                subset[i] += 1;
                for k in i + 1..n {
                    subset[k] = subset[k - 1] + 1;
                }
                break;
            }
        }
    }
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter()
        .zip(b)
        .all(|(x, y)| (x - y).abs() <= tol * (1.0 + x.abs()))
}

fn solve_square(rows: &[(Vec<f64>, f64)], subset: &[usize]) -> Option<Vec<f64>> {
    let n = subset.len();
    let mut m: Vec<Vec<f64>> = subset
        .iter()
        .map(|&k| {
            let mut r = rows[k].0.clone();
            r.push(rows[k].1);
            r
        })
        .collect();
    for k in 0..n {
        let p = (k..n).max_by(|&a, &b| m[a][k].abs().total_cmp(&m[b][k].abs()))?;
        if m[p][k].abs() < 1e-11 {
            return None;
        }
        m.swap(k, p);
        for i in 0..n {
            if i != k {
                let f = m[i][k] / m[k][k];
                if f != 0.0 {
                    for j in k..=n {
                        m[i][j] -= f * m[k][j];
                    }
                }
            }
        }
    }
    Some((0..n).map(|i| m[i][n] / m[i][i]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(c: &[f64], rows: &[Vec<f64>], h: &[f64], lb: &[f64], ub: &[f64]) -> LpProblem {
        LpProblem::new(
            c.to_vec(),
            Matrix::from_rows(rows, c.len()).unwrap(),
            h.to_vec(),
            lb.to_vec(),
            ub.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn bound_attained_optimum() {
        let res = solve_lp(&lp(&[-1.0], &[], &[], &[0.0], &[1.0])).unwrap();
        assert_eq!(res.status, LpStatus::Optimal);
        assert_eq!(res.x, vec![1.0]);
        assert_eq!(res.value, -1.0);
    }

    #[test]
    fn cut_corner_picks_lowest_index() {
        let p = lp(
            &[-1.0, -1.0],
            &[vec![1.0, 1.0]],
            &[1.0],
            &[0.0, 0.0],
            &[1.0, 1.0],
        );
        let res = solve_lp(&p).unwrap();
        assert_eq!(res.value, -1.0);
        assert_eq!(res.x, vec![1.0, 0.0]);
        assert!(res.is_vertex);
    }

    #[test]
    fn contradiction_is_infeasible() {
        let res = solve_lp(&lp(&[1.0], &[vec![1.0]], &[-1.0], &[0.0], &[1.0])).unwrap();
        assert_eq!(res.status, LpStatus::Infeasible);
    }

    #[test]
    fn phase_one_needed() {
        // x + y >= 1.5, min x + 2y over the unit box -> (1, 0.5).
        let p = lp(
            &[1.0, 2.0],
            &[vec![-1.0, -1.0]],
            &[-1.5],
            &[0.0, 0.0],
            &[1.0, 1.0],
        );
        let res = solve_lp(&p).unwrap();
        assert_eq!(res.status, LpStatus::Optimal);
        assert!((res.value - 2.0).abs() < 1e-12);
        assert!((res.x[0] - 1.0).abs() < 1e-12 && (res.x[1] - 0.5).abs() < 1e-12);
        // The row is tight: multiplier -2 (cost of one more unit of rhs).
        assert!((res.multipliers[0] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn bad_bounds_rejected() {
        let err = LpProblem::new(
            vec![1.0],
            Matrix::zeros(0, 1),
            vec![],
            vec![0.0],
            vec![f64::INFINITY],
        )
        .unwrap_err();
        assert_eq!(err, LpError::InvalidBounds(0));
    }

    #[test]
    fn square_vertices() {
        let v = enumerate_vertices(&lp(&[0.0, 0.0], &[], &[], &[0.0, 0.0], &[1.0, 1.0])).unwrap();
        assert_eq!(
            v,
            vec![
                vec![0.0, 0.0],
                vec![0.0, 1.0],
                vec![1.0, 0.0],
                vec![1.0, 1.0]
            ]
        );
    }

    #[test]
    fn triangle_vertices() {
        let p = lp(
            &[0.0, 0.0],
            &[vec![1.0, 1.0]],
            &[1.0],
            &[0.0, 0.0],
            &[1.0, 1.0],
        );
        let v = enumerate_vertices(&p).unwrap();
        assert_eq!(v, vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn empty_polyhedron_has_no_vertices() {
        let p = lp(&[0.0], &[vec![1.0]], &[-1.0], &[0.0], &[1.0]);
        assert!(enumerate_vertices(&p).unwrap().is_empty());
    }

    #[test]
    fn enumeration_guard() {
        let n = 13;
        let p = lp(&vec![0.0; n], &[], &[], &vec![0.0; n], &vec![1.0; n]);
        assert!(matches!(
            enumerate_vertices(&p),
            Err(LpError::DimensionTooLarge { n: 13, .. })
        ));
    }

    #[test]
    fn degenerate_problem_terminates() {
        // Many redundant rows through the optimal vertex.
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|k| vec![1.0, (k as f64) * 0.1, 1.0 - (k as f64) * 0.05])
            .collect();
        let h = vec![0.0; 12];
        let p = lp(&[-1.0, -1.0, -1.0], &rows, &h, &[-1.0; 3], &[1.0; 3]);
        let a = solve_lp(&p).unwrap();
        let b = solve_lp(&p).unwrap();
        assert_eq!(a, b);
        let best = enumerate_vertices(&p)
            .unwrap()
            .iter()
            .map(|v| -v.iter().sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        assert!((a.value - best).abs() < 1e-7);
    }
}
