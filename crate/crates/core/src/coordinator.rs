//! Central-unit loop of the decentralized scheme.
//!
//! Agents are [`AgentNode`]s that hold their private data and answer a
//! multiplier vector with an [`AgentMessage`]. The central unit sees only
//! those messages: the image `A_i x_i` and, in the best-feasible variant,
//! the scalar cost `c_i'x_i`. Everything else recorded in a [`RunTrace`]
//! (costs in plain mode, feasibility, raw iterates) is harness-side
//! instrumentation and never feeds back into the multiplier update.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::inf_norm;
use crate::milp::{self, MilpError, MilpOptions, PointTable};
use crate::model::{AgentProblem, CoupledInstance, StepSchedule};
use crate::tightening::{TighteningError, TighteningState, SETTLE_TOL};

/// Coupling rows may exceed `b` by this much and still count as satisfied.
pub const FEAS_TOL: f64 = 1e-8;

/// A multiplier change below this counts as a stalled dual step.
pub const DUAL_STEP_TOL: f64 = 1e-6;

/// Default cap on enumerated integer assignments per agent.
pub const DEFAULT_ENUMERATION_LIMIT: usize = 1 << 16;

/// Consecutive stalled dual steps that declare dual convergence.
pub const DUAL_STALL_RUN: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoordinatorError {
    #[error("agent {agent}: {source}")]
    Solver {
        agent: usize,
        #[source]
        source: MilpError,
    },
    #[error(transparent)]
    Tightening(#[from] TighteningError),
    #[error("invalid stop rule: {0}")]
    InvalidStopRule(String),
    #[error("frozen tightening has {got} entries, coupling has {expected} rows")]
    DimensionMismatch { got: usize, expected: usize },
}

impl CoordinatorError {
    pub fn is_node_limit(&self) -> bool {
        matches!(self, CoordinatorError::Solver { source, .. } if source.is_node_limit())
    }
}

/// Stop when the last `window` iterates were all coupling-feasible with
/// `rho` and `gamma` unchanged across them, or after `max_iter` iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopRule {
    pub window: usize,
    pub max_iter: usize,
}

impl StopRule {
    pub fn new(window: usize, max_iter: usize) -> Result<Self, CoordinatorError> {
        if window == 0 {
            return Err(CoordinatorError::InvalidStopRule(
                "window must be at least 1".into(),
            ));
        }
        if max_iter == 0 {
            return Err(CoordinatorError::InvalidStopRule(
                "max_iter must be at least 1".into(),
            ));
        }
        Ok(Self { window, max_iter })
    }
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            window: 50,
            max_iter: 10_000,
        }
    }
}

/// Window `window`, hard cap `max_iter`.
pub fn default_stop_rule(window: usize, max_iter: usize) -> Result<StopRule, CoordinatorError> {
    StopRule::new(window, max_iter)
}

/// Incremental evaluation of a [`StopRule`].
#[derive(Debug, Clone, PartialEq)]
pub struct StopTracker {
    rule: StopRule,
    run: usize,
}

impl StopTracker {
    pub fn new(rule: StopRule) -> Self {
        Self { rule, run: 0 }
    }

    /// Feeds one iterate; returns `true` when the rule fires.
    pub fn push(&mut self, feasible: bool, tightening_changed: bool) -> bool {
        self.run = match (feasible, tightening_changed) {
            (false, _) => 0,
            (true, true) => 1,
            (true, false) => self.run + 1,
        };
        self.run >= self.rule.window
    }
}

/// What one agent sends to the central unit per iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentMessage {
    pub agent_id: usize,
    /// `A_i x_i(k+1)`.
    pub image: Vec<f64>,
    /// `c_i'x_i(k+1)`, sent only in best-feasible mode.
    pub cost: Option<f64>,
}

/// Every message received by the central unit, one round per iteration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MessageLog {
    pub rounds: Vec<Vec<AgentMessage>>,
}

/// An agent holding its private problem.
pub struct AgentNode<'a> {
    problem: &'a AgentProblem,
    opts: MilpOptions,
    table: Option<PointTable>,
    x: Vec<f64>,
    cost: f64,
}

impl<'a> AgentNode<'a> {
    /// `enumeration_limit` caps the integer assignments enumerated to build
    /// a point table; 0 always uses branch and bound.
    pub fn new(problem: &'a AgentProblem, opts: MilpOptions, enumeration_limit: usize) -> Self {
        let table = (enumeration_limit > 0)
            .then(|| PointTable::build(problem, enumeration_limit, &opts))
            .flatten();
        Self {
            problem,
            opts,
            table,
            x: Vec::new(),
            cost: f64::NAN,
        }
    }

    /// Computes the best response to `lambda` and returns the outgoing
    /// message.
    pub fn respond(
        &mut self,
        lambda: &[f64],
        share_cost: bool,
    ) -> Result<AgentMessage, CoordinatorError> {
        let br = milp::best_response_with(self.problem, lambda, &self.opts, self.table.as_ref())
            .map_err(|source| CoordinatorError::Solver {
                agent: self.problem.id(),
                source,
            })?;
        self.x = br.x;
        self.cost = br.cost;
        Ok(AgentMessage {
            agent_id: self.problem.id(),
            image: br.image,
            cost: share_cost.then_some(br.cost),
        })
    }

    /// Latest local point, for harness-side instrumentation only.
    pub fn local_point(&self) -> &[f64] {
        &self.x
    }

    pub fn local_cost(&self) -> f64 {
        self.cost
    }
}

/// Which loop to run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Mode {
    /// Plain loop, stopped by the [`StopRule`].
    Adaptive,
    /// Best-feasible tracking, stopped by an iteration budget and an
    /// optional wall-clock budget.
    BestFeasible {
        budget: usize,
        wall_clock_s: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub schedule: StepSchedule,
    pub stop: StopRule,
    pub mode: Mode,
    pub milp: MilpOptions,
    /// Agents with at most this many integer assignments answer from a
    /// precomputed point table; 0 disables.
    pub enumeration_limit: usize,
    /// Fan agents out over the rayon pool.
    pub parallel: bool,
    pub record_messages: bool,
    /// Keep every iterate `x(k)`; memory grows with `k * sum n_i`.
    pub record_iterates: bool,
    /// Replace the adaptive tightening with a constant vector.
    pub frozen_rho: Option<Vec<f64>>,
}

impl RunOptions {
    pub fn new(schedule: StepSchedule, stop: StopRule) -> Self {
        Self {
            schedule,
            stop,
            mode: Mode::Adaptive,
            milp: MilpOptions::default(),
            enumeration_limit: DEFAULT_ENUMERATION_LIMIT,
            parallel: false,
            record_messages: false,
            record_iterates: false,
            frozen_rho: None,
        }
    }

    pub fn for_instance(instance: &CoupledInstance) -> Self {
        Self::new(StepSchedule::default_for(instance), StopRule::default())
    }
}

/// One row per iterate `x(k)`, `k >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    /// Multiplier after the update that used `x(k)`.
    pub lambda: Vec<f64>,
    pub max_violation: f64,
    pub rho: Vec<f64>,
    pub rho_inf: f64,
    pub gamma: f64,
    pub cost: f64,
    pub feasible: bool,
    pub best_cost: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Stop rule fired.
    Converged,
    /// `max_iter` reached before the stop rule fired.
    HorizonExhausted,
    /// Best-feasible mode ran its whole iteration budget.
    BudgetSpent,
    /// Best-feasible mode ran out of wall-clock time.
    WallClockSpent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestRecord {
    pub cost: f64,
    pub x: Vec<Vec<f64>>,
    pub found_at: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub iterations: usize,
    pub termination: Termination,
    /// First `k` of the trailing run of feasible iterates.
    pub k_feasible: Option<usize>,
    /// Iterate after which `rho` and `gamma` never changed.
    pub settled: Option<usize>,
    pub final_x: Vec<Vec<f64>>,
    pub final_cost: f64,
    pub final_feasible: bool,
    pub final_lambda: Vec<f64>,
    pub final_rho: Vec<f64>,
    pub final_gamma: f64,
    pub best: Option<BestRecord>,
    /// First `k` closing a run of stalled dual steps.
    pub dual_converged_at: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
    pub summary: RunSummary,
    pub schedule: StepSchedule,
    pub stop: StopRule,
    pub mode: Mode,
    #[serde(skip)]
    pub messages: Option<MessageLog>,
    /// `iterates[k - 1] = x(k)` when recorded.
    #[serde(skip)]
    pub iterates: Option<Vec<Vec<Vec<f64>>>>,
}

impl RunTrace {
    pub fn is_converged(&self) -> bool {
        self.summary.termination == Termination::Converged
    }
}

/// Central-unit state.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinatorState {
    pub lambda: Vec<f64>,
    pub k: usize,
    pub schedule: StepSchedule,
    pub tightening: TighteningState,
    pub best: Option<BestRecord>,
    /// Set once a feasible improving iterate has been seen.
    pub delta_flag: bool,
}

impl CoordinatorState {
    pub fn new(m: usize, p: usize, schedule: StepSchedule) -> Self {
        Self {
            lambda: vec![0.0; p],
            k: 0,
            schedule,
            tightening: TighteningState::new(m, p),
            best: None,
            delta_flag: false,
        }
    }

    /// `lambda <- [lambda + alpha(k) (sum_images - b + rho)]_+`.
    pub fn dual_step(&mut self, sum_images: &[f64], b: &[f64], rho: &[f64]) -> f64 {
        let alpha = self.schedule.alpha(self.k);
        let mut step = 0.0_f64;
        for j in 0..self.lambda.len() {
            let next = (self.lambda[j] + alpha * (sum_images[j] - b[j] + rho[j])).max(0.0);
            step = step.max((next - self.lambda[j]).abs());
            self.lambda[j] = next;
        }
        self.k += 1;
        step
    }
}

/// Plain decentralized loop.
pub fn run_algorithm1(
    instance: &CoupledInstance,
    schedule: StepSchedule,
    stop: StopRule,
) -> Result<RunTrace, CoordinatorError> {
    run(instance, &RunOptions::new(schedule, stop))
}

/// Best-feasible variant with an iteration budget.
pub fn run_algorithm2(
    instance: &CoupledInstance,
    schedule: StepSchedule,
    budget: usize,
) -> Result<RunTrace, CoordinatorError> {
    let mut opts = RunOptions::new(schedule, StopRule::default());
    opts.mode = Mode::BestFeasible {
        budget,
        wall_clock_s: None,
    };
    run(instance, &opts)
}

/// Runs the loop described by `opts`.
pub fn run(instance: &CoupledInstance, opts: &RunOptions) -> Result<RunTrace, CoordinatorError> {
    let m = instance.m();
    let p = instance.p();
    let b = instance.b();
    if let Some(r) = &opts.frozen_rho {
        if r.len() != p {
            return Err(CoordinatorError::DimensionMismatch {
                got: r.len(),
                expected: p,
            });
        }
    }
    let best_feasible = matches!(opts.mode, Mode::BestFeasible { .. });
    let (max_iter, deadline) = match opts.mode {
        Mode::Adaptive => (opts.stop.max_iter, None),
        Mode::BestFeasible {
            budget,
            wall_clock_s,
        } => (
            budget,
            wall_clock_s.map(|s| Instant::now() + Duration::from_secs_f64(s.max(0.0))),
        ),
    };

    let mut nodes: Vec<AgentNode> = instance
        .agents()
        .iter()
        .map(|a| AgentNode::new(a, opts.milp, opts.enumeration_limit))
        .collect();
    let mut state = CoordinatorState::new(m, p, opts.schedule);
    let mut stop = StopTracker::new(opts.stop);
    let mut rows: Vec<TraceRow> = Vec::new();
    let mut messages = opts.record_messages.then(MessageLog::default);
    let mut iterates = opts.record_iterates.then(Vec::new);
    let mut last_change = 0;
    let mut stall_run = 0;
    let mut dual_converged_at = None;
    let mut termination = if best_feasible {
        Termination::BudgetSpent
    } else {
        Termination::HorizonExhausted
    };

    for k in 1..=max_iter {
        let lambda = state.lambda.clone();
        let round: Vec<AgentMessage> = if opts.parallel {
            nodes
                .par_iter_mut()
                .map(|n| n.respond(&lambda, best_feasible))
                .collect::<Result<_, _>>()?
        } else {
            nodes
                .iter_mut()
                .map(|n| n.respond(&lambda, best_feasible))
                .collect::<Result<_, _>>()?
        };

        // Central unit: aggregate images only.
        let mut sum = vec![0.0; p];
        for msg in &round {
            for (s, v) in sum.iter_mut().zip(&msg.image) {
                *s += v;
            }
        }
        let images: Vec<Vec<f64>> = round.iter().map(|msg| msg.image.clone()).collect();

        // Harness-side instrumentation.
        let costs: Vec<f64> = nodes.iter().map(AgentNode::local_cost).collect();
        let changed = state.tightening.observe(&images, &costs)?;
        if changed {
            last_change = k;
        }
        let cost: f64 = costs.iter().sum();
        let max_violation = sum
            .iter()
            .zip(b)
            .map(|(s, bj)| s - bj)
            .fold(f64::NEG_INFINITY, f64::max);
        let feasible = max_violation <= FEAS_TOL;

        if best_feasible {
            let reported: f64 = round.iter().filter_map(|msg| msg.cost).sum();
            if feasible && state.best.as_ref().is_none_or(|bst| reported < bst.cost) {
                state.best = Some(BestRecord {
                    cost: reported,
                    x: nodes.iter().map(|n| n.local_point().to_vec()).collect(),
                    found_at: k,
                });
                state.delta_flag = true;
            }
        }

        let rho = match &opts.frozen_rho {
            Some(r) => r.clone(),
            None => state.tightening.rho().expect("observed").to_vec(),
        };
        let step = state.dual_step(&sum, b, &rho);
        if step <= DUAL_STEP_TOL {
            stall_run += 1;
            if stall_run >= DUAL_STALL_RUN && dual_converged_at.is_none() {
                dual_converged_at = Some(k);
            }
        } else {
            stall_run = 0;
        }

        rows.push(TraceRow {
            k,
            lambda: state.lambda.clone(),
            max_violation,
            rho_inf: inf_norm(&rho),
            rho,
            gamma: state.tightening.gamma().expect("observed"),
            cost,
            feasible,
            best_cost: state.best.as_ref().map(|bst| bst.cost),
        });
        if let Some(log) = &mut messages {
            log.rounds.push(round);
        }
        if let Some(its) = &mut iterates {
            its.push(nodes.iter().map(|n| n.local_point().to_vec()).collect());
        }

        if !best_feasible && stop.push(feasible, changed) {
            termination = Termination::Converged;
            break;
        }
        if best_feasible && k < max_iter {
            if let Some(d) = deadline {
                if Instant::now() >= d {
                    termination = Termination::WallClockSpent;
                    break;
                }
            }
        }
    }

    let last = rows.last().expect("at least one iteration");
    let k_feasible = if last.feasible {
        let trailing_start = rows
            .iter()
            .rposition(|r| !r.feasible)
            .map_or(rows[0].k, |i| rows[i].k + 1);
        Some(trailing_start)
    } else {
        None
    };
    let n = rows.len();
    let settled = if n == 1 || last_change < last.k {
        Some(last_change.max(1))
    } else {
        None
    };
    let summary = RunSummary {
        iterations: n,
        termination,
        k_feasible,
        settled,
        final_x: nodes.iter().map(|n| n.local_point().to_vec()).collect(),
        final_cost: last.cost,
        final_feasible: last.feasible,
        final_lambda: state.lambda.clone(),
        final_rho: last.rho.clone(),
        final_gamma: last.gamma,
        best: state.best,
        dual_converged_at,
    };
    Ok(RunTrace {
        rows,
        summary,
        schedule: opts.schedule,
        stop: opts.stop,
        mode: opts.mode,
        messages,
        iterates,
    })
}

/// Weighted average `sum_r w_r x(r) / sum_r w_r` of per-agent points.
pub fn weighted_average(points: &[Vec<Vec<f64>>], weights: &[f64]) -> Option<Vec<Vec<f64>>> {
    let first = points.first()?;
    let total: f64 = weights.iter().sum();
    if points.len() != weights.len() || total <= 0.0 {
        return None;
    }
    let mut acc: Vec<Vec<f64>> = first.iter().map(|x| vec![0.0; x.len()]).collect();
    for (pt, &w) in points.iter().zip(weights) {
        for (a, x) in acc.iter_mut().zip(pt) {
            for (ai, xi) in a.iter_mut().zip(x) {
                *ai += w * xi;
            }
        }
    }
    for a in &mut acc {
        for v in a.iter_mut() {
            *v /= total;
        }
    }
    Some(acc)
}

/// Step-size weighted running average of the iterates,
/// `sum_{r=1}^{k-1} alpha(r) x(r+1) / sum_{r=1}^{k-1} alpha(r)`, where
/// `iterates[r - 1] = x(r)`. Needs at least two iterates.
pub fn primal_average(
    iterates: &[Vec<Vec<f64>>],
    schedule: &StepSchedule,
) -> Option<Vec<Vec<f64>>> {
    if iterates.len() < 2 {
        return None;
    }
    let weights: Vec<f64> = (1..iterates.len()).map(|r| schedule.alpha(r)).collect();
    weighted_average(&iterates[1..], &weights)
}

/// Whether the trace rows have nondecreasing `rho` and `gamma`.
pub fn tightening_monotone(rows: &[TraceRow]) -> bool {
    rows.windows(2).all(|w| {
        w[1].gamma >= w[0].gamma - SETTLE_TOL
            && w[1]
                .rho
                .iter()
                .zip(&w[0].rho)
                .all(|(a, b)| *a >= b - SETTLE_TOL)
    })
}
