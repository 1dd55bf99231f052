//! Plug-in electric vehicle charging benchmark.
//!
//! Each vehicle decides, slot by slot, whether to charge at its fixed rate
//! (and in the vehicle-to-grid setup, whether to discharge). Its battery
//! must stay within capacity and reach a target state of charge at the end
//! of the horizon. Vehicles share a per-slot network power limit, which is
//! the coupling constraint.
//!
//! The default parameter bands are an approximation chosen for desk-scale
//! experiments, not a published parameter table.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certificates::{self, CertificateError};
use crate::coordinator::{self, CoordinatorError, Mode, RunOptions, StopRule, Termination};
use crate::matrix::{inf_norm, Matrix};
use crate::milp::{self, MilpError};
use crate::model::{AgentProblem, CoupledInstance, StepSchedule};
use crate::tightening::{self, WorstCaseBounds};

pub const PARAMETER_SOURCE: &str = "approximate default bands, not a published parameter table";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PevError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("vehicle {vehicle}: no feasible parameters after {attempts} draws")]
    Resample { vehicle: usize, attempts: usize },
    #[error(transparent)]
    Coordinator(#[from] CoordinatorError),
    #[error(transparent)]
    Certificate(#[from] CertificateError),
    #[error(transparent)]
    Solver(#[from] MilpError),
}

impl PevError {
    pub fn is_node_limit(&self) -> bool {
        match self {
            PevError::Coordinator(e) => e.is_node_limit(),
            PevError::Certificate(e) => e.is_node_limit(),
            PevError::Solver(e) => e.is_node_limit(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setup {
    ChargeOnly,
    V2g,
}

impl Setup {
    pub fn as_str(self) -> &'static str {
        match self {
            Setup::ChargeOnly => "charge_only",
            Setup::V2g => "v2g",
        }
    }
}

/// Uniform distribution on `[lo, hi]`; `lo == hi` is a constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn mean(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.gen_range(self.lo..=self.hi)
        }
    }

    fn check(&self, name: &str, min: f64, max: f64) -> Result<(), PevError> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi) {
            return Err(PevError::Config(format!(
                "{name}: band [{}, {}] is not ordered",
                self.lo, self.hi
            )));
        }
        if self.lo < min || self.hi > max {
            return Err(PevError::Config(format!(
                "{name}: band [{}, {}] outside [{min}, {max}]",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

/// Network limit per slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GridCapacity {
    /// `factor * m * mean(rate)` kW.
    PerVehicle { factor: f64 },
    /// Fixed kW.
    Absolute { kw: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PevConfig {
    /// Number of vehicles.
    pub m: usize,
    /// Number of time slots.
    pub slots: usize,
    pub setup: Setup,
    /// Slot length in hours.
    pub slot_hours: f64,
    /// Energy price per kWh, drawn once per slot.
    pub price: Band,
    /// Each vehicle sees the slot price scaled by `1 + U[-noise, noise]`.
    pub price_noise: f64,
    /// Charging power in kW.
    pub rate: Band,
    /// Battery capacity in kWh.
    pub capacity: Band,
    /// Initial state of charge as a fraction of capacity.
    pub initial_soc: Band,
    /// Required final state of charge as a fraction of capacity.
    pub target_soc: Band,
    /// `None` picks 0.8 per vehicle for charge-only and 0.6 for v2g.
    pub grid: Option<GridCapacity>,
    /// Multiplies the network limit, e.g. 0.63 for a stressed network.
    pub capacity_scale: f64,
    /// Fraction of the price refunded per kWh fed back.
    pub sell_ratio: f64,
    pub seed: u64,
    /// Redraws per vehicle before giving up.
    pub max_resample: usize,
}

impl Default for PevConfig {
    fn default() -> Self {
        Self {
            m: 10,
            slots: 24,
            setup: Setup::ChargeOnly,
            slot_hours: 1.0 / 3.0,
            price: Band::new(0.019, 0.035),
            price_noise: 0.1,
            rate: Band::new(3.0, 5.0),
            capacity: Band::new(8.0, 16.0),
            initial_soc: Band::new(0.2, 0.5),
            target_soc: Band::new(0.55, 0.8),
            grid: None,
            capacity_scale: 1.0,
            sell_ratio: 0.5,
            seed: 0,
            max_resample: 100,
        }
    }
}

impl PevConfig {
    pub fn validate(&self) -> Result<(), PevError> {
        if self.m == 0 {
            return Err(PevError::Config("m must be at least 1".into()));
        }
        if self.slots == 0 {
            return Err(PevError::Config("slots must be at least 1".into()));
        }
        if !(self.slot_hours.is_finite() && self.slot_hours > 0.0) {
            return Err(PevError::Config("slot_hours must be positive".into()));
        }
        self.price.check("price", 0.0, f64::INFINITY)?;
        self.rate.check("rate", f64::MIN_POSITIVE, f64::INFINITY)?;
        self.capacity
            .check("capacity", f64::MIN_POSITIVE, f64::INFINITY)?;
        self.initial_soc.check("initial_soc", 0.0, 1.0)?;
        self.target_soc.check("target_soc", 0.0, 1.0)?;
        if !(self.capacity_scale.is_finite() && self.capacity_scale > 0.0) {
            return Err(PevError::Config("capacity_scale must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.price_noise) {
            return Err(PevError::Config("price_noise must lie in [0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.sell_ratio) {
            return Err(PevError::Config("sell_ratio must lie in [0, 1]".into()));
        }
        if self.max_resample == 0 {
            return Err(PevError::Config("max_resample must be at least 1".into()));
        }
        match self.grid {
            Some(GridCapacity::PerVehicle { factor }) if !(factor > 0.0) => {
                Err(PevError::Config("grid factor must be positive".into()))
            }
            Some(GridCapacity::Absolute { kw }) if !(kw > 0.0) => {
                Err(PevError::Config("grid limit must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    /// Network limit per slot in kW.
    pub fn grid_limit(&self) -> f64 {
        let base = match self.grid {
            Some(GridCapacity::Absolute { kw }) => kw,
            Some(GridCapacity::PerVehicle { factor }) => factor * self.m as f64 * self.rate.mean(),
            None => {
                let factor = match self.setup {
                    Setup::ChargeOnly => 0.8,
                    Setup::V2g => 0.6,
                };
                factor * self.m as f64 * self.rate.mean()
            }
        };
        base * self.capacity_scale
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn with_m(&self, m: usize) -> Self {
        Self { m, ..self.clone() }
    }
}

/// Drawn parameters of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Vehicle {
    rate: f64,
    capacity: f64,
    initial: f64,
    target: f64,
}

impl Vehicle {
    /// Some number of charging slots reaches the target without overflow.
    fn feasible(&self, slots: usize, slot_hours: f64) -> bool {
        let e = self.rate * slot_hours;
        let need = ((self.target - self.initial) / e).ceil().max(0.0);
        let room = ((self.capacity - self.initial) / e).floor();
        need <= room && need <= slots as f64
    }
}

fn vehicle_problem(cfg: &PevConfig, prices: &[f64], v: &Vehicle) -> AgentProblem {
    let t = cfg.slots;
    let e = v.rate * cfg.slot_hours;
    let head = v.capacity - v.initial;
    let need = v.target - v.initial;
    match cfg.setup {
        Setup::ChargeOnly => {
            let mut rows = Vec::with_capacity(t + 1);
            let mut rhs = Vec::with_capacity(t + 1);
            for s in 0..t {
                let mut row = vec![0.0; t];
                row[..=s].iter_mut().for_each(|a| *a = e);
                rows.push(row);
                rhs.push(head);
            }
            rows.push(vec![-e; t]);
            rhs.push(-need);
            let cost: Vec<f64> = prices.iter().map(|p| p * e).collect();
            let mut coupling = Matrix::zeros(t, t);
            for s in 0..t {
                coupling.set(s, s, v.rate);
            }
            AgentProblem::new(
                0,
                cost,
                coupling,
                Matrix::from_rows(&rows, t).expect("rectangular"),
                rhs,
                vec![true; t],
                vec![0.0; t],
                vec![1.0; t],
            )
            .expect("consistent vehicle block")
        }
        Setup::V2g => {
            let n = 2 * t;
            let mut rows = Vec::with_capacity(3 * t + 1);
            let mut rhs = Vec::with_capacity(3 * t + 1);
            for s in 0..t {
                let mut up = vec![0.0; n];
                for tau in 0..=s {
                    up[tau] = e;
                    up[t + tau] = -e;
                }
                let down: Vec<f64> = up.iter().map(|a| -a).collect();
                rows.push(up);
                rhs.push(head);
                rows.push(down);
                rhs.push(v.initial);
            }
            for s in 0..t {
                let mut excl = vec![0.0; n];
                excl[s] = 1.0;
                excl[t + s] = 1.0;
                rows.push(excl);
                rhs.push(1.0);
            }
            let mut fin = vec![-e; n];
            fin[t..].iter_mut().for_each(|a| *a = e);
            rows.push(fin);
            rhs.push(-need);
            let mut cost: Vec<f64> = prices.iter().map(|p| p * e).collect();
            cost.extend(prices.iter().map(|p| -cfg.sell_ratio * p * e));
            let mut coupling = Matrix::zeros(t, n);
            for s in 0..t {
                coupling.set(s, s, v.rate);
                coupling.set(s, t + s, -v.rate);
            }
            AgentProblem::new(
                0,
                cost,
                coupling,
                Matrix::from_rows(&rows, n).expect("rectangular"),
                rhs,
                vec![true; n],
                vec![0.0; n],
                vec![1.0; n],
            )
            .expect("consistent vehicle block")
        }
    }
}

/// Draws a fleet instance. Deterministic in the configuration.
pub fn generate(cfg: &PevConfig) -> Result<CoupledInstance, PevError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let common: Vec<f64> = (0..cfg.slots).map(|_| cfg.price.sample(&mut rng)).collect();
    let mut agents = Vec::with_capacity(cfg.m);
    for i in 0..cfg.m {
        let mut drawn = None;
        for _ in 0..cfg.max_resample {
            let capacity = cfg.capacity.sample(&mut rng);
            let v = Vehicle {
                rate: cfg.rate.sample(&mut rng),
                capacity,
                initial: cfg.initial_soc.sample(&mut rng) * capacity,
                target: cfg.target_soc.sample(&mut rng) * capacity,
            };
            if v.feasible(cfg.slots, cfg.slot_hours) {
                drawn = Some(v);
                break;
            }
        }
        let v = drawn.ok_or(PevError::Resample {
            vehicle: i,
            attempts: cfg.max_resample,
        })?;
        let prices: Vec<f64> = common
            .iter()
            .map(|c| c * (1.0 + cfg.price_noise * rng.gen_range(-1.0..=1.0)))
            .collect();
        agents.push(vehicle_problem(cfg, &prices, &v));
    }
    let b = vec![cfg.grid_limit(); cfg.slots];
    let name = format!(
        "pev-{}-m{}-t{}-seed{}",
        cfg.setup.as_str(),
        cfg.m,
        cfg.slots,
        cfg.seed
    );
    Ok(CoupledInstance::new(name, agents, b).expect("consistent fleet"))
}

/// Step schedule scaled to the benchmark: prices per kW of slot energy over
/// the subgradient magnitude.
pub fn suggested_schedule(cfg: &PevConfig, instance: &CoupledInstance) -> StepSchedule {
    let scale = cfg.price.hi * cfg.slot_hours / inf_norm(instance.b()).max(1.0);
    StepSchedule::harmonic(scale.max(f64::MIN_POSITIVE)).expect("positive scale")
}

/// Adaptive versus worst-case tightening on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rho_bar_inf: f64,
    pub rho_tilde_inf: f64,
    pub gamma_bar: f64,
    pub gamma_tilde: f64,
    /// Cost of the adaptive scheme's final iterate.
    pub j_rho_bar: f64,
    pub alg1_feasible: bool,
    pub alg1_settled: Option<usize>,
    pub alg1_termination: Termination,
    pub alg1_iterations: usize,
    /// Cost of the baseline's recovered point.
    pub j_rho_tilde: Option<f64>,
    /// Convexified problem under `rho_tilde` is infeasible.
    pub baseline_failed: bool,
    pub baseline_feasible: Option<bool>,
    pub baseline_dual_converged: Option<bool>,
    pub baseline_iterations: Option<usize>,
    /// `(|rho_tilde| - |rho_bar|) / |rho_tilde| * 100`.
    pub delta_rho_pct: Option<f64>,
    /// `(J_rho_tilde - J_rho_bar) / |J_rho_tilde| * 100`.
    pub delta_j_pct: Option<f64>,
}

impl ComparisonReport {
    /// The baseline ran and returned a coupling-feasible point.
    pub fn baseline_succeeded(&self) -> bool {
        !self.baseline_failed && self.baseline_feasible == Some(true)
    }
}

/// Relative change in percent, `(reference - value) / |reference| * 100`.
pub fn relative_reduction_pct(reference: f64, value: f64) -> Option<f64> {
    (reference != 0.0).then(|| (reference - value) / reference.abs() * 100.0)
}

/// Runs both schemes with the same options.
pub fn compare(
    instance: &CoupledInstance,
    opts: &RunOptions,
) -> Result<ComparisonReport, PevError> {
    let worst = tightening::worst_case(instance)?;
    compare_with(instance, opts, &worst)
}

pub fn compare_with(
    instance: &CoupledInstance,
    opts: &RunOptions,
    worst: &WorstCaseBounds,
) -> Result<ComparisonReport, PevError> {
    let mut alg1_opts = opts.clone();
    alg1_opts.mode = Mode::Adaptive;
    alg1_opts.frozen_rho = None;
    let alg1 = coordinator::run(instance, &alg1_opts)?;
    let s = &alg1.summary;
    let rho_bar_inf = inf_norm(&s.final_rho);
    let rho_tilde_inf = inf_norm(&worst.rho_tilde);

    let baseline = match certificates::baseline_recover_with(instance, &alg1_opts, worst) {
        Ok(out) => Some(out),
        Err(CertificateError::BaselineInfeasible { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let baseline_failed = baseline.is_none();
    let j_rho_tilde = baseline.as_ref().map(|b| b.cost);
    let delta_rho_pct = if baseline_failed {
        None
    } else if rho_tilde_inf == 0.0 {
        Some(0.0)
    } else {
        relative_reduction_pct(rho_tilde_inf, rho_bar_inf)
    };
    let delta_j_pct = j_rho_tilde.and_then(|j| {
        if j == s.final_cost {
            Some(0.0)
        } else {
            relative_reduction_pct(j, s.final_cost)
        }
    });
    Ok(ComparisonReport {
        rho_bar_inf,
        rho_tilde_inf,
        gamma_bar: s.final_gamma,
        gamma_tilde: worst.gamma_tilde,
        j_rho_bar: s.final_cost,
        alg1_feasible: s.final_feasible,
        alg1_settled: s.settled,
        alg1_termination: s.termination,
        alg1_iterations: s.iterations,
        j_rho_tilde,
        baseline_failed,
        baseline_feasible: baseline.as_ref().map(|b| b.feasible),
        baseline_dual_converged: baseline.as_ref().map(|b| b.dual_converged),
        baseline_iterations: baseline.as_ref().map(|b| b.trace.summary.iterations),
        delta_rho_pct,
        delta_j_pct,
    })
}

/// Settings shared by every trial of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub trials: usize,
    pub stop: StopRule,
    /// Overrides the suggested step scale.
    pub a0: Option<f64>,
    pub exponent: f64,
    /// Solve the coupled problem exactly to report optimality gaps.
    pub oracle: bool,
    /// Iteration budget of the best-feasible run; `None` skips it.
    pub alg2_budget: Option<usize>,
    /// Run trials on the rayon pool.
    pub parallel: bool,
    /// Record wall-clock time per trial; otherwise `runtime_s` is zero so
    /// that outputs are reproducible byte for byte.
    pub timing: bool,
    pub bins: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            trials: 10,
            stop: StopRule::default(),
            a0: None,
            exponent: 1.0,
            oracle: false,
            alg2_budget: None,
            parallel: false,
            timing: true,
            bins: 10,
        }
    }
}

/// One sweep row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub m: usize,
    pub setup: Setup,
    pub seed: u64,
    pub delta_rho_pct: Option<f64>,
    pub delta_j_pct: Option<f64>,
    /// `(J_rho_bar - J*) / |J*| * 100`, when the final iterate is feasible.
    pub alg1_gap_pct: Option<f64>,
    /// `(J_best - J*) / |J*| * 100`.
    pub alg2_gap_pct: Option<f64>,
    pub baseline_failed: bool,
    pub runtime_s: f64,
    pub report: Option<ComparisonReport>,
    pub optimum: Option<f64>,
    pub alg2_best: Option<f64>,
    pub error: Option<String>,
}

fn schedule_for(
    cfg: &PevConfig,
    inst: &CoupledInstance,
    opts: &SweepOptions,
) -> Result<StepSchedule, PevError> {
    let base = suggested_schedule(cfg, inst);
    let a0 = opts.a0.unwrap_or(base.a0);
    StepSchedule::power(a0, opts.exponent).map_err(|e| PevError::Config(e.to_string()))
}

fn gap_pct(value: f64, optimum: f64) -> Option<f64> {
    if optimum == 0.0 {
        (value == 0.0).then_some(0.0)
    } else {
        Some((value - optimum) / optimum.abs() * 100.0)
    }
}

/// Runs one seeded trial.
pub fn run_trial(cfg: &PevConfig, trial: usize, opts: &SweepOptions) -> TrialRecord {
    let start = Instant::now();
    let seed = cfg.seed.wrapping_add(trial as u64);
    let mut rec = TrialRecord {
        trial,
        m: cfg.m,
        setup: cfg.setup,
        seed,
        delta_rho_pct: None,
        delta_j_pct: None,
        alg1_gap_pct: None,
        alg2_gap_pct: None,
        baseline_failed: false,
        runtime_s: 0.0,
        report: None,
        optimum: None,
        alg2_best: None,
        error: None,
    };
    let outcome = (|| -> Result<(), PevError> {
        let trial_cfg = cfg.with_seed(seed);
        let inst = generate(&trial_cfg)?;
        let mut run_opts = RunOptions::new(schedule_for(&trial_cfg, &inst, opts)?, opts.stop);
        run_opts.parallel = false;
        let report = compare(&inst, &run_opts)?;
        rec.delta_rho_pct = report.delta_rho_pct;
        rec.delta_j_pct = report.delta_j_pct;
        rec.baseline_failed = report.baseline_failed;
        if opts.oracle {
            let opt = milp::solve_monolithic_enumerated(
                &inst,
                run_opts.enumeration_limit,
                &run_opts.milp,
            )?;
            if opt.is_optimal() {
                rec.optimum = Some(opt.value);
                // A gap is only meaningful for a coupling-feasible point.
                if report.alg1_feasible {
                    rec.alg1_gap_pct = gap_pct(report.j_rho_bar, opt.value);
                }
            }
        }
        if let Some(budget) = opts.alg2_budget {
            let mut alg2 = run_opts.clone();
            alg2.mode = Mode::BestFeasible {
                budget,
                wall_clock_s: None,
            };
            let trace = coordinator::run(&inst, &alg2)?;
            rec.alg2_best = trace.summary.best.as_ref().map(|b| b.cost);
            if let (Some(best), Some(opt)) = (rec.alg2_best, rec.optimum) {
                rec.alg2_gap_pct = gap_pct(best, opt);
            }
        }
        rec.report = Some(report);
        Ok(())
    })();
    if let Err(e) = outcome {
        rec.error = Some(e.to_string());
    }
    if opts.timing {
        rec.runtime_s = start.elapsed().as_secs_f64();
    }
    rec
}

/// Runs `opts.trials` trials with seeds `cfg.seed + trial`.
pub fn sweep(cfg: &PevConfig, opts: &SweepOptions) -> Vec<TrialRecord> {
    if opts.parallel {
        (0..opts.trials)
            .into_par_iter()
            .map(|t| run_trial(cfg, t, opts))
            .collect()
    } else {
        (0..opts.trials).map(|t| run_trial(cfg, t, opts)).collect()
    }
}

/// One histogram bin `[lo, hi)`, the last bin closed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Equal-width bins spanning the data range.
pub fn histogram(values: &[f64], bins: usize) -> Vec<Bin> {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo {
        (hi - lo) / bins as f64
    } else {
        1.0
    };
    let mut out: Vec<Bin> = (0..bins)
        .map(|b| Bin {
            lo: lo + b as f64 * width,
            hi: lo + (b + 1) as f64 * width,
            count: 0,
        })
        .collect();
    for v in finite {
        let idx = (((v - lo) / width) as usize).min(bins - 1);
        out[idx].count += 1;
    }
    out
}
