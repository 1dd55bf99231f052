//! A-posteriori certificates for a finished run.
//!
//! * [`slater_margin`]: largest uniform slack `zeta` with
//!   `sum_i A_i x_i + m zeta 1 <= b - rho` for some `x_i` in the local sets.
//! * [`baseline_recover`]: the prior-art scheme that tightens by the
//!   worst-case `rho_tilde` from the start.
//! * [`build_certificate`]: suboptimality bounds for the adaptive scheme and
//!   for the baseline, plus the achieved gap when an optimum is known.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coordinator::StopRule;
use crate::coordinator::{self, CoordinatorError, RunOptions, RunTrace, FEAS_TOL};
use crate::matrix::{dot, inf_norm, Matrix};
use crate::milp::{self, MilpError, MilpOptions};
use crate::model::{CoupledInstance, StepSchedule};
use crate::simplex::{self, LpError, LpStatus};
use crate::tightening::{self, WorstCaseBounds};

/// Margins at or below this are reported as absent.
pub const MARGIN_TOL: f64 = 1e-9;

const COLUMN_GENERATION_LIMIT: usize = 2_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CertificateError {
    #[error("run has not settled; rho and gamma were still changing at the horizon")]
    NotSettled,
    #[error("tightened convexified problem is infeasible (residual {residual:.3e})")]
    BaselineInfeasible { residual: f64 },
    #[error(transparent)]
    Solver(#[from] MilpError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Coordinator(#[from] CoordinatorError),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("column generation did not converge in {0} rounds")]
    ColumnGenerationLimit(usize),
}

impl CertificateError {
    pub fn is_node_limit(&self) -> bool {
        match self {
            CertificateError::Solver(e) => e.is_node_limit(),
            CertificateError::Coordinator(e) => e.is_node_limit(),
            _ => false,
        }
    }
}

/// Slack certificate for the tightened problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlaterMargin {
    pub zeta: f64,
    /// Per-agent points attaining `zeta`.
    pub witness: Vec<Vec<f64>>,
}

/// Maximizes `zeta` s.t. `sum_i A_i x_i + m zeta 1 <= b - rho`, `x_i` in
/// the local sets. `None` unless the optimum exceeds [`MARGIN_TOL`].
pub fn slater_margin(
    instance: &CoupledInstance,
    rho: &[f64],
    opts: &MilpOptions,
) -> Result<Option<SlaterMargin>, CertificateError> {
    if rho.len() != instance.p() {
        return Err(CertificateError::DimensionMismatch(format!(
            "rho has {} entries, coupling has {} rows",
            rho.len(),
            instance.p()
        )));
    }
    let rhs: Vec<f64> = instance.b().iter().zip(rho).map(|(b, r)| b - r).collect();
    let block = milp::stacked_block(instance, &rhs);
    let local_rows = block.constraints.rows() - instance.p();
    let m = instance.m() as f64;
    let coeffs: Vec<f64> = (0..block.constraints.rows())
        .map(|i| if i < local_rows { 0.0 } else { m })
        .collect();
    // zeta can never exceed (max rhs - min possible usage) / m.
    let min_usage: f64 = (0..instance.p())
        .map(|j| {
            let row = block.constraints.row(local_rows + j);
            row.iter()
                .enumerate()
                .map(|(c, &a)| (a * block.lower[c]).min(a * block.upper[c]))
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min);
    let upper = ((inf_norm(&rhs) - min_usage) / m).max(0.0) + 1.0;
    let extended = block.with_extra_column(&coeffs, 0.0, upper);
    let mut objective = vec![0.0; extended.lower.len()];
    *objective.last_mut().expect("zeta column") = -1.0;
    let res = milp::solve_milp(&extended, &objective, opts)?;
    if !res.is_optimal() {
        return Ok(None);
    }
    let zeta = -res.value;
    if zeta <= MARGIN_TOL {
        return Ok(None);
    }
    let x = &res.x[..res.x.len() - 1];
    Ok(Some(SlaterMargin {
        zeta,
        witness: milp::split_stacked(instance, x),
    }))
}

/// Outcome of the convex-hull feasibility check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HullCheck {
    pub feasible: bool,
    /// Smallest total coupling excess over convex combinations of points.
    pub residual: f64,
    pub columns: usize,
    pub rounds: usize,
}

/// Decides whether `sum_i A_i y_i <= b - rho` has a solution with every
/// `y_i` in the convex hull of the agent's local set, by column generation
/// over local points.
pub fn hull_feasible(
    instance: &CoupledInstance,
    rho: &[f64],
    opts: &MilpOptions,
) -> Result<HullCheck, CertificateError> {
    let m = instance.m();
    let p = instance.p();
    let rhs: Vec<f64> = instance.b().iter().zip(rho).map(|(b, r)| b - r).collect();
    let tol = 1e-7 * (1.0 + inf_norm(&rhs));

    // Columns: (agent, image). Start from each agent's local optimum.
    let mut columns: Vec<(usize, Vec<f64>)> = Vec::new();
    for a in instance.agents() {
        let br = milp::best_response(a, &vec![0.0; p], opts)?;
        columns.push((a.id(), br.image));
    }
    let slack_cap: f64 = inf_norm(&rhs)
        + instance
            .agents()
            .iter()
            .map(|a| {
                (0..p)
                    .map(|j| {
                        a.coupling()
                            .row(j)
                            .iter()
                            .enumerate()
                            .map(|(c, v)| v.abs() * a.lower()[c].abs().max(a.upper()[c].abs()))
                            .sum::<f64>()
                    })
                    .fold(0.0, f64::max)
            })
            .sum::<f64>()
        + 1.0;

    for round in 1..=COLUMN_GENERATION_LIMIT {
        // Rows: p coupling, m convexity <= 1, m convexity >= 1.
        let nc = columns.len();
        let ncols = nc + p;
        let rows = p + 2 * m;
        let mut g = Matrix::zeros(rows, ncols);
        for (c, (agent, image)) in columns.iter().enumerate() {
            for (j, v) in image.iter().enumerate() {
                g.set(j, c, *v);
            }
            g.set(p + agent, c, 1.0);
            g.set(p + m + agent, c, -1.0);
        }
        for j in 0..p {
            g.set(j, nc + j, -1.0);
        }
        let mut h = rhs.clone();
        h.extend(std::iter::repeat_n(1.0, m));
        h.extend(std::iter::repeat_n(-1.0, m));
        let mut cost = vec![0.0; nc];
        cost.extend(std::iter::repeat_n(1.0, p));
        let lower = vec![0.0; ncols];
        let mut upper = vec![1.0; nc];
        upper.extend(std::iter::repeat_n(slack_cap, p));
        let master = simplex::solve_parts(&cost, &g, &h, &lower, &upper, &opts.lp)?;
        if master.status != LpStatus::Optimal {
            return Err(CertificateError::Lp(LpError::NumericalBreakdown(
                "restricted master lost feasibility".into(),
            )));
        }
        if master.value <= tol {
            return Ok(HullCheck {
                feasible: true,
                residual: master.value,
                columns: nc,
                rounds: round,
            });
        }
        let y = &master.multipliers;
        let y_c = &y[..p];
        let mut added = false;
        for a in instance.agents() {
            let i = a.id();
            // Reduced cost of a point v: -y_c' A v - y_le + y_ge.
            let weights: Vec<f64> = y_c.iter().map(|v| -v.min(0.0)).collect();
            let objective = a.coupling().tr_mul_vec(&weights);
            let res = milp::solve_milp(a, &objective, opts)?;
            if !res.is_optimal() {
                return Err(MilpError::Infeasible.into());
            }
            let image = a.image(&res.x);
            let reduced = -dot(y_c, &image) - y[p + i] + y[p + m + i];
            if reduced < -1e-9 && !columns.iter().any(|(ag, im)| *ag == i && im == &image) {
                columns.push((i, image));
                added = true;
            }
        }
        if !added {
            return Ok(HullCheck {
                feasible: false,
                residual: master.value,
                columns: nc,
                rounds: round,
            });
        }
    }
    Err(CertificateError::ColumnGenerationLimit(
        COLUMN_GENERATION_LIMIT,
    ))
}

/// Result of the worst-case-tightening baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineOutcome {
    pub rho_tilde: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Agent points at the final multiplier.
    pub x: Vec<Vec<f64>>,
    /// `J_rho_tilde`, the cost of `x`.
    pub cost: f64,
    /// `sum_i A_i x_i <= b` within tolerance.
    pub feasible: bool,
    /// Multiplier steps stalled long enough to call the dual converged.
    pub dual_converged: bool,
    pub hull: HullCheck,
    pub trace: RunTrace,
}

/// Runs the dual subgradient loop with tightening frozen at the worst-case
/// `rho_tilde`, after checking that the tightened convexified problem is
/// feasible.
pub fn baseline_recover(
    instance: &CoupledInstance,
    schedule: StepSchedule,
    stop: StopRule,
) -> Result<BaselineOutcome, CertificateError> {
    let mut opts = RunOptions::new(schedule, stop);
    opts.parallel = false;
    baseline_recover_with(instance, &opts, &tightening::worst_case(instance)?)
}

/// [`baseline_recover`] with explicit run options and precomputed bounds.
pub fn baseline_recover_with(
    instance: &CoupledInstance,
    opts: &RunOptions,
    worst: &WorstCaseBounds,
) -> Result<BaselineOutcome, CertificateError> {
    let hull = hull_feasible(instance, &worst.rho_tilde, &opts.milp)?;
    if !hull.feasible {
        return Err(CertificateError::BaselineInfeasible {
            residual: hull.residual,
        });
    }
    let mut run_opts = opts.clone();
    run_opts.frozen_rho = Some(worst.rho_tilde.clone());
    let trace = coordinator::run(instance, &run_opts)?;
    let s = &trace.summary;
    let x = s.final_x.clone();
    Ok(BaselineOutcome {
        rho_tilde: worst.rho_tilde.clone(),
        lambda: s.final_lambda.clone(),
        cost: instance.total_cost(&x),
        feasible: instance.max_violation(&x) <= FEAS_TOL,
        dual_converged: s.dual_converged_at.is_some(),
        x,
        hull,
        trace,
    })
}

/// Bounds attached to a finished run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub gamma_bar: f64,
    pub rho_bar: Vec<f64>,
    pub gamma_tilde: f64,
    pub rho_tilde: Vec<f64>,
    /// Margin under `rho_bar`.
    pub zeta: Option<f64>,
    /// Margin under `rho_tilde`.
    pub zeta_tilde: Option<f64>,
    /// `gamma_bar + |rho_bar|_inf / (p zeta) * gamma_tilde`.
    pub bound_new: Option<f64>,
    /// `gamma_tilde + |rho_tilde|_inf / (p zeta_tilde) * gamma_tilde`.
    pub bound_baseline: Option<f64>,
    /// Final cost minus the optimum, when the optimum is known.
    pub achieved_gap: Option<f64>,
    pub final_cost: f64,
    pub optimum: Option<f64>,
    /// Uniqueness of the primal and dual optima is never checked.
    pub assumptions_unverified: bool,
}

/// `gamma + |rho|_inf / (p zeta) * gamma_tilde`.
pub fn suboptimality_bound(gamma: f64, rho: &[f64], zeta: f64, gamma_tilde: f64) -> f64 {
    let p = rho.len() as f64;
    gamma + inf_norm(rho) / (p * zeta) * gamma_tilde
}

/// Assembles the certificate of a settled run.
pub fn build_certificate(
    run: &RunTrace,
    instance: &CoupledInstance,
    optimum: Option<f64>,
) -> Result<Certificate, CertificateError> {
    let worst = tightening::worst_case(instance)?;
    build_certificate_with(run, instance, optimum, &worst, &MilpOptions::default())
}

/// [`build_certificate`] with precomputed worst-case bounds.
pub fn build_certificate_with(
    run: &RunTrace,
    instance: &CoupledInstance,
    optimum: Option<f64>,
    worst: &WorstCaseBounds,
    opts: &MilpOptions,
) -> Result<Certificate, CertificateError> {
    if run.summary.settled.is_none() {
        return Err(CertificateError::NotSettled);
    }
    let rho_bar = run.summary.final_rho.clone();
    let gamma_bar = run.summary.final_gamma;
    let zeta = slater_margin(instance, &rho_bar, opts)?.map(|s| s.zeta);
    let zeta_tilde = slater_margin(instance, &worst.rho_tilde, opts)?.map(|s| s.zeta);
    Ok(Certificate {
        bound_new: zeta.map(|z| suboptimality_bound(gamma_bar, &rho_bar, z, worst.gamma_tilde)),
        bound_baseline: zeta_tilde.map(|z| {
            suboptimality_bound(worst.gamma_tilde, &worst.rho_tilde, z, worst.gamma_tilde)
        }),
        achieved_gap: optimum.map(|j| run.summary.final_cost - j),
        final_cost: run.summary.final_cost,
        optimum,
        gamma_bar,
        rho_bar,
        gamma_tilde: worst.gamma_tilde,
        rho_tilde: worst.rho_tilde.clone(),
        zeta,
        zeta_tilde,
        assumptions_unverified: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coordinator::run_algorithm1;
    use crate::model::tests::t1;

    #[test]
    fn slater_t1() {
        let opts = MilpOptions::default();
        let s = slater_margin(&t1(1.0), &[0.0], &opts).unwrap().unwrap();
        assert_eq!(s.zeta, 0.5);
        assert_eq!(s.witness, vec![vec![0.0], vec![0.0]]);
        assert_eq!(slater_margin(&t1(1.0), &[1.0], &opts).unwrap(), None);
        let s = slater_margin(&t1(100.0), &[0.0], &opts).unwrap().unwrap();
        assert_eq!(s.zeta, 50.0);
    }

    #[test]
    fn bound_arithmetic() {
        assert_eq!(suboptimality_bound(2.0, &[1.0], 1.0, 3.0), 5.0);
    }

    #[test]
    fn hull_check_t1() {
        let opts = MilpOptions::default();
        assert!(hull_feasible(&t1(1.0), &[1.0], &opts).unwrap().feasible);
        let shrunk = hull_feasible(&t1(0.0), &[1.0], &opts).unwrap();
        assert!(!shrunk.feasible);
        assert!((shrunk.residual - 1.0).abs() < 1e-9);
    }

    #[test]
    fn baseline_t1() {
        let sched = StepSchedule::harmonic(1.0).unwrap();
        let out = baseline_recover(&t1(1.0), sched, StopRule::default()).unwrap();
        assert_eq!(out.rho_tilde, vec![1.0]);
        assert!(out.feasible);
        let err = baseline_recover(&t1(0.0), sched, StopRule::default()).unwrap_err();
        assert!(matches!(err, CertificateError::BaselineInfeasible { .. }));
    }

    #[test]
    fn certificate_t1() {
        let inst = t1(1.0);
        let sched = StepSchedule::harmonic(1.0).unwrap();
        let run = run_algorithm1(&inst, sched, StopRule::default()).unwrap();
        let cert = build_certificate(&run, &inst, Some(-3.0)).unwrap();
        assert_eq!(cert.gamma_tilde, 3.0);
        assert_eq!(cert.rho_tilde, vec![1.0]);
        assert!(cert.rho_bar[0] <= 1.0);
        assert_eq!(cert.achieved_gap, Some(run.summary.final_cost + 3.0));
        if cert.rho_bar == vec![1.0] {
            assert_eq!(cert.zeta, None);
            assert_eq!(cert.bound_new, None);
        }
        assert!(cert.assumptions_unverified);
    }
}
