//! Depth-first branch and bound for small mixed-integer blocks.
//!
//! Node order is fixed: branch on the lowest-index fractional integer
//! variable, explore the down branch (`x_j <= floor`) first, and accept a new
//! incumbent only if it improves by more than the pruning gap. Together with
//! the deterministic simplex underneath, ties between optimal points resolve
//! identically on every run. The coordinator relies on this as its tie-break
//! rule for the agents' best responses.

use thiserror::Error;

use crate::matrix::{dot, Matrix};
use crate::model::{AgentProblem, CoupledInstance};
use crate::simplex::{self, LpError, LpOptions, LpStatus};

/// A set `{x : Gx <= h, lb <= x <= ub, x_j integer for flagged j}`.
pub trait MixedSet {
    fn constraints(&self) -> &Matrix;
    fn rhs(&self) -> &[f64];
    fn lower(&self) -> &[f64];
    fn upper(&self) -> &[f64];
    fn integer(&self) -> &[bool];

    fn dim(&self) -> usize {
        self.lower().len()
    }
}

/// Owned [`MixedSet`], e.g. the stacked monolithic problem.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedBlock {
    pub constraints: Matrix,
    pub rhs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub integer: Vec<bool>,
}

impl MixedSet for MixedBlock {
    fn constraints(&self) -> &Matrix {
        &self.constraints
    }
    fn rhs(&self) -> &[f64] {
        &self.rhs
    }
    fn lower(&self) -> &[f64] {
        &self.lower
    }
    fn upper(&self) -> &[f64] {
        &self.upper
    }
    fn integer(&self) -> &[bool] {
        &self.integer
    }
}

impl MixedBlock {
    /// Appends one continuous column with the given row coefficients.
    pub fn with_extra_column(&self, coeffs: &[f64], lower: f64, upper: f64) -> MixedBlock {
        let rows = self.constraints.rows();
        let cols = self.constraints.cols() + 1;
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            data.extend_from_slice(self.constraints.row(i));
            data.push(coeffs[i]);
        }
        let mut out = self.clone();
        out.constraints = Matrix::from_flat(rows, cols, data);
        out.lower.push(lower);
        out.upper.push(upper);
        out.integer.push(false);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MilpOptions {
    pub node_limit: usize,
    /// Integrality tolerance.
    pub int_tol: f64,
    /// Nodes whose relaxation is not better than the incumbent by more than
    /// this are pruned.
    pub prune_gap: f64,
    pub lp: LpOptions,
}

impl Default for MilpOptions {
    fn default() -> Self {
        Self {
            node_limit: 1_000_000,
            int_tol: 1e-6,
            prune_gap: 1e-9,
            lp: LpOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MilpError {
    #[error("node limit of {0} exceeded")]
    NodeLimitExceeded(usize),
    #[error("LP relaxation failed: {0}")]
    Lp(#[from] LpError),
    #[error("mixed-integer set is empty")]
    Infeasible,
    #[error("multiplier entry {index} is {value}, expected a non-negative number")]
    NegativeMultiplier { index: usize, value: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("enumeration needs {combinations} integer combinations (limit {limit})")]
    DimensionTooLarge { combinations: f64, limit: usize },
}

impl MilpError {
    /// The search hit its node budget rather than proving anything.
    pub fn is_node_limit(&self) -> bool {
        matches!(self, MilpError::NodeLimitExceeded(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MilpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpResult {
    pub status: MilpStatus,
    /// Optimal point with integer coordinates rounded exactly.
    pub x: Vec<f64>,
    pub value: f64,
    pub nodes: usize,
}

impl MilpResult {
    fn infeasible(nodes: usize) -> Self {
        Self {
            status: MilpStatus::Infeasible,
            x: Vec::new(),
            value: f64::INFINITY,
            nodes,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == MilpStatus::Optimal
    }
}

/// Integer-rounded root bounds, or `None` if some integer range is empty.
fn root_bounds(set: &impl MixedSet, int_tol: f64) -> Option<(Vec<f64>, Vec<f64>)> {
    let mut lo = set.lower().to_vec();
    let mut hi = set.upper().to_vec();
    for (j, &is_int) in set.integer().iter().enumerate() {
        if is_int {
            lo[j] = (lo[j] - int_tol).ceil();
            hi[j] = (hi[j] + int_tol).floor();
            if lo[j] > hi[j] {
                return None;
            }
        }
    }
    Some((lo, hi))
}

fn check_objective(set: &impl MixedSet, objective: &[f64]) -> Result<(), MilpError> {
    if objective.len() != set.dim() {
        return Err(MilpError::DimensionMismatch(format!(
            "objective has {} entries, set has {} variables",
            objective.len(),
            set.dim()
        )));
    }
    Ok(())
}

/// Minimizes `objective'x` over the mixed-integer set.
pub fn solve_milp(
    set: &impl MixedSet,
    objective: &[f64],
    opts: &MilpOptions,
) -> Result<MilpResult, MilpError> {
    check_objective(set, objective)?;
    let Some(root) = root_bounds(set, opts.int_tol) else {
        return Ok(MilpResult::infeasible(0));
    };
    let g = set.constraints();
    let h = set.rhs();
    let integer = set.integer();

    let mut stack = vec![root];
    let mut incumbent: Option<(Vec<f64>, f64)> = None;
    let mut nodes = 0;
    while let Some((lo, hi)) = stack.pop() {
        nodes += 1;
        if nodes > opts.node_limit {
            return Err(MilpError::NodeLimitExceeded(opts.node_limit));
        }
        let relax = simplex::solve_parts(objective, g, h, &lo, &hi, &opts.lp)?;
        if relax.status == LpStatus::Infeasible {
            continue;
        }
        if let Some((_, best)) = &incumbent {
            if relax.value >= best - opts.prune_gap {
                continue;
            }
        }
        let fractional = (0..relax.x.len())
            .find(|&j| integer[j] && (relax.x[j] - relax.x[j].round()).abs() > opts.int_tol);
        match fractional {
            None => {
                let mut x = relax.x;
                for (v, &is_int) in x.iter_mut().zip(integer) {
                    if is_int {
                        *v = v.round();
                    }
                }
                let value = dot(objective, &x);
                incumbent = Some((x, value));
            }
            Some(j) => {
                let v = relax.x[j];
                let mut up_lo = lo.clone();
                up_lo[j] = v.ceil();
                let mut down_hi = hi.clone();
                down_hi[j] = v.floor();
                // Last pushed is explored first.
                stack.push((up_lo, hi));
                stack.push((lo, down_hi));
            }
        }
    }
    Ok(match incumbent {
        Some((x, value)) => MilpResult {
            status: MilpStatus::Optimal,
            x,
            value,
            nodes,
        },
        None => MilpResult::infeasible(nodes),
    })
}

/// An agent's answer to a multiplier vector.
#[derive(Debug, Clone, PartialEq)]
pub struct BestResponse {
    pub x: Vec<f64>,
    /// `(c + A'lambda)'x`.
    pub lagrangian_value: f64,
    /// `c'x`.
    pub cost: f64,
    /// `A x`.
    pub image: Vec<f64>,
}

/// `argmin_{x in X_i} (c_i + A_i' lambda)' x` under the deterministic
/// branch-and-bound order.
pub fn best_response(
    agent: &AgentProblem,
    lambda: &[f64],
    opts: &MilpOptions,
) -> Result<BestResponse, MilpError> {
    best_response_with(agent, lambda, opts, None)
}

/// [`best_response`] with an optional table of the agent's integer points.
///
/// A table answer is used only when its minimizer beats every other point
/// by more than [`TABLE_TIE_GAP`]; branch and bound, which prunes with a
/// smaller gap, is then forced to return the same point. Near-ties fall
/// back to branch and bound so its tie-break rule stays authoritative.
pub fn best_response_with(
    agent: &AgentProblem,
    lambda: &[f64],
    opts: &MilpOptions,
    table: Option<&PointTable>,
) -> Result<BestResponse, MilpError> {
    if lambda.len() != agent.p() {
        return Err(MilpError::DimensionMismatch(format!(
            "multiplier has {} entries, coupling has {} rows",
            lambda.len(),
            agent.p()
        )));
    }
    if let Some((index, &value)) = lambda.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(MilpError::NegativeMultiplier { index, value });
    }
    let mut objective = agent.coupling().tr_mul_vec(lambda);
    for (o, c) in objective.iter_mut().zip(agent.cost()) {
        *o += c;
    }
    let (x, value) = match table.and_then(|t| t.unique_argmin(&objective)) {
        Some(found) => found,
        None => {
            let res = solve_milp(agent, &objective, opts)?;
            if !res.is_optimal() {
                return Err(MilpError::Infeasible);
            }
            (res.x, res.value)
        }
    };
    Ok(BestResponse {
        cost: agent.cost_of(&x),
        image: agent.image(&x),
        lagrangian_value: value,
        x,
    })
}

/// Table minimizers must win by more than this to bypass branch and bound.
pub const TABLE_TIE_GAP: f64 = 1e-7;

/// All feasible points of a small pure-integer set.
#[derive(Debug, Clone, PartialEq)]
pub struct PointTable {
    n: usize,
    /// Row-major, one point per row, in odometer order.
    points: Vec<f64>,
}

impl PointTable {
    /// Enumerates the set if it is pure-integer with at most `limit`
    /// integer assignments inside its bounds.
    pub fn build(set: &impl MixedSet, limit: usize, opts: &MilpOptions) -> Option<Self> {
        if set.integer().iter().any(|&b| !b) {
            return None;
        }
        let (lo, hi) = match root_bounds(set, opts.int_tol) {
            Some(b) => b,
            None => {
                return Some(Self {
                    n: set.dim(),
                    points: Vec::new(),
                })
            }
        };
        let combos: f64 = lo.iter().zip(&hi).map(|(l, h)| h - l + 1.0).product();
        if combos > limit as f64 {
            return None;
        }
        let g = set.constraints();
        let h = set.rhs();
        let tol = opts.lp.feas_tol;
        let n = set.dim();
        let mut points = Vec::new();
        let mut x = lo.clone();
        loop {
            if (0..g.rows()).all(|i| dot(g.row(i), &x) <= h[i] + tol * (1.0 + h[i].abs())) {
                points.extend_from_slice(&x);
            }
            let mut advanced = false;
            for j in 0..n {
                if x[j] < hi[j] {
                    x[j] += 1.0;
                    advanced = true;
                    break;
                }
                x[j] = lo[j];
            }
            if !advanced {
                break;
            }
        }
        Some(Self { n, points })
    }

    pub fn len(&self) -> usize {
        if self.n == 0 {
            0
        } else {
            self.points.len() / self.n
        }
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.n..(i + 1) * self.n]
    }

    /// Minimizer and value if it is unique by a margin of
    /// [`TABLE_TIE_GAP`].
    pub fn unique_argmin(&self, objective: &[f64]) -> Option<(Vec<f64>, f64)> {
        let mut best = f64::INFINITY;
        let mut second = f64::INFINITY;
        let mut at = None;
        for i in 0..self.len() {
            let v = dot(objective, self.point(i));
            if v < best {
                second = best;
                best = v;
                at = Some(i);
            } else if v < second {
                second = v;
            }
        }
        let i = at?;
        (second - best > TABLE_TIE_GAP).then(|| (self.point(i).to_vec(), best))
    }
}

/// Stacks all agents into one block: block-diagonal local rows followed by
/// the coupling rows with right-hand side `coupling_rhs`.
pub fn stacked_block(instance: &CoupledInstance, coupling_rhs: &[f64]) -> MixedBlock {
    let n = instance.total_vars();
    let local_rows: usize = instance.agents().iter().map(|a| a.local().rows()).sum();
    let rows = local_rows + instance.p();
    let mut g = Matrix::zeros(rows, n);
    let mut rhs = Vec::with_capacity(rows);
    let (mut lower, mut upper, mut integer) = (Vec::new(), Vec::new(), Vec::new());
    let mut row0 = 0;
    let mut col0 = 0;
    for a in instance.agents() {
        for i in 0..a.local().rows() {
            for (j, &v) in a.local().row(i).iter().enumerate() {
                g.set(row0 + i, col0 + j, v);
            }
        }
        rhs.extend_from_slice(a.local_rhs());
        for i in 0..instance.p() {
            for (j, &v) in a.coupling().row(i).iter().enumerate() {
                g.set(local_rows + i, col0 + j, v);
            }
        }
        lower.extend_from_slice(a.lower());
        upper.extend_from_slice(a.upper());
        integer.extend_from_slice(a.integer());
        row0 += a.local().rows();
        col0 += a.n();
    }
    rhs.extend_from_slice(coupling_rhs);
    MixedBlock {
        constraints: g,
        rhs,
        lower,
        upper,
        integer,
    }
}

pub fn stacked_cost(instance: &CoupledInstance) -> Vec<f64> {
    instance
        .agents()
        .iter()
        .flat_map(|a| a.cost().iter().copied())
        .collect()
}

/// Splits a stacked point into per-agent pieces.
pub fn split_stacked(instance: &CoupledInstance, x: &[f64]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(instance.m());
    let mut at = 0;
    for a in instance.agents() {
        out.push(x[at..at + a.n()].to_vec());
        at += a.n();
    }
    out
}

/// Optimal value and point of the coupled problem, solved as one MILP.
pub fn solve_monolithic(
    instance: &CoupledInstance,
    opts: &MilpOptions,
) -> Result<MilpResult, MilpError> {
    let block = stacked_block(instance, instance.b());
    solve_milp(&block, &stacked_cost(instance), opts)
}

/// Same optimal value as [`solve_monolithic`], reformulated when every
/// agent is pure-integer with at most `limit` assignments: one binary per
/// distinct feasible image, a choose-one row per agent, and the coupling
/// rows. The relaxation of this form is the convex hull of each local set,
/// which keeps the search small. Falls back to the stacked form otherwise.
pub fn solve_monolithic_enumerated(
    instance: &CoupledInstance,
    limit: usize,
    opts: &MilpOptions,
) -> Result<MilpResult, MilpError> {
    let mut tables = Vec::with_capacity(instance.m());
    for a in instance.agents() {
        match PointTable::build(a, limit, opts) {
            Some(t) => tables.push(t),
            None => return solve_monolithic(instance, opts),
        }
    }
    if tables.iter().any(PointTable::is_empty) {
        return Ok(MilpResult::infeasible(0));
    }
    // Cheapest point per distinct image; earlier points win ties.
    let mut choices: Vec<Vec<(usize, f64, Vec<f64>)>> = Vec::with_capacity(instance.m());
    for (a, t) in instance.agents().iter().zip(&tables) {
        let mut kept: Vec<(usize, f64, Vec<f64>)> = Vec::new();
        for s in 0..t.len() {
            let x = t.point(s);
            let (cost, image) = (a.cost_of(x), a.image(x));
            match kept.iter_mut().find(|k| k.2 == image) {
                Some(k) if cost < k.1 => *k = (s, cost, image),
                Some(_) => {}
                None => kept.push((s, cost, image)),
            }
        }
        choices.push(kept);
    }
    let n: usize = choices.iter().map(Vec::len).sum();
    let (m, p) = (instance.m(), instance.p());
    let mut g = Matrix::zeros(2 * m + p, n);
    let mut rhs = Vec::with_capacity(2 * m + p);
    let mut objective = Vec::with_capacity(n);
    let mut col = 0;
    for (i, kept) in choices.iter().enumerate() {
        for (_, cost, image) in kept {
            g.set(2 * i, col, 1.0);
            g.set(2 * i + 1, col, -1.0);
            for (j, v) in image.iter().enumerate() {
                g.set(2 * m + j, col, *v);
            }
            objective.push(*cost);
            col += 1;
        }
        rhs.extend_from_slice(&[1.0, -1.0]);
    }
    rhs.extend_from_slice(instance.b());
    let block = MixedBlock {
        constraints: g,
        rhs,
        lower: vec![0.0; n],
        upper: vec![1.0; n],
        integer: vec![true; n],
    };
    let res = solve_milp(&block, &objective, opts)?;
    if !res.is_optimal() {
        return Ok(res);
    }
    let mut x = Vec::with_capacity(instance.total_vars());
    let mut col = 0;
    for (kept, t) in choices.iter().zip(&tables) {
        let pick = (0..kept.len())
            .find(|&s| res.x[col + s] > 0.5)
            .expect("choose-one row holds");
        x.extend_from_slice(t.point(kept[pick].0));
        col += kept.len();
    }
    Ok(MilpResult {
        status: MilpStatus::Optimal,
        value: dot(&stacked_cost(instance), &x),
        x,
        nodes: res.nodes,
    })
}

pub const ORACLE_COMBINATION_LIMIT: usize = 1 << 20;

/// Exact optimum by enumerating every integer assignment and solving the
/// remaining LP over the continuous coordinates. Test oracle.
pub fn exhaustive_oracle(
    set: &impl MixedSet,
    objective: &[f64],
    opts: &MilpOptions,
) -> Result<MilpResult, MilpError> {
    check_objective(set, objective)?;
    let Some((lo, hi)) = root_bounds(set, opts.int_tol) else {
        return Ok(MilpResult::infeasible(0));
    };
    let int_idx: Vec<usize> = (0..set.dim()).filter(|&j| set.integer()[j]).collect();
    let combinations: f64 = int_idx.iter().map(|&j| hi[j] - lo[j] + 1.0).product();
    if combinations > ORACLE_COMBINATION_LIMIT as f64 {
        return Err(MilpError::DimensionTooLarge {
            combinations,
            limit: ORACLE_COMBINATION_LIMIT,
        });
    }
    let any_continuous = int_idx.len() < set.dim();
    let g = set.constraints();
    let h = set.rhs();
    let tol = opts.lp.feas_tol;

    let mut point = lo.clone();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut visited = 0;
    loop {
        visited += 1;
        let candidate = if any_continuous {
            let mut fl = lo.clone();
            let mut fh = hi.clone();
            for &j in &int_idx {
                fl[j] = point[j];
                fh[j] = point[j];
            }
            let res = simplex::solve_parts(objective, g, h, &fl, &fh, &opts.lp)?;
            (res.status == LpStatus::Optimal).then_some((res.x, res.value))
        } else {
            let ok =
                (0..g.rows()).all(|i| dot(g.row(i), &point) <= h[i] + tol * (1.0 + h[i].abs()));
            ok.then(|| (point.clone(), dot(objective, &point)))
        };
        if let Some((mut x, value)) = candidate {
            if best.as_ref().is_none_or(|(_, b)| value < *b - 1e-12) {
                for &j in &int_idx {
                    x[j] = point[j];
                }
                best = Some((x, value));
            }
        }
        // Odometer over the integer coordinates.
        let mut advanced = false;
        for &j in &int_idx {
            if point[j] < hi[j] {
                point[j] += 1.0;
                advanced = true;
                break;
            }
            point[j] = lo[j];
        }
        if !advanced {
            break;
        }
    }
    Ok(match best {
        Some((x, value)) => MilpResult {
            status: MilpStatus::Optimal,
            x,
            value,
            nodes: visited,
        },
        None => MilpResult::infeasible(visited),
    })
}
