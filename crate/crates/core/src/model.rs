//! Problem data for the coupled MILP, validation, and the JSON instance format.
//!
//! An instance is a list of agent blocks plus a shared coupling right-hand
//! side `b`:
//!
//! ```text
//!   min  sum_i c_i' x_i
//!   s.t. sum_i A_i x_i <= b
//!        D_i x_i <= d_i,  lb_i <= x_i <= ub_i,  x_ij integer where flagged
//! ```
//!
//! Every variable must carry finite bounds. That makes each local set
//! bounded by construction, so the per-agent minimizations the coordinator
//! performs always attain their minimum once the set is non-empty.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::matrix::Matrix;
use crate::milp::{self, MilpOptions, MilpStatus, MixedSet};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("agent {agent}: variable {var} has no finite {side} bound")]
    Unbounded {
        agent: usize,
        var: usize,
        side: &'static str,
    },
    #[error("agent {agent}: variable {var} has lower bound above upper bound")]
    InvalidBounds { agent: usize, var: usize },
    #[error("agent {agent}: local constraint set is empty")]
    InfeasibleLocalSet { agent: usize },
    #[error("instance must have at least one agent and one coupling row")]
    Empty,
    #[error("unsupported format_version {0} (expected {FORMAT_VERSION})")]
    UnsupportedVersion(u32),
    #[error("feasibility check for agent {agent} failed: {message}")]
    Solver { agent: usize, message: String },
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid instance: {0}")]
    Validation(#[from] ValidationError),
}

/// One agent's private block.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentProblem {
    id: usize,
    cost: Vec<f64>,
    coupling: Matrix,
    local: Matrix,
    local_rhs: Vec<f64>,
    integer: Vec<bool>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl AgentProblem {
    /// Checks dimensions and bounds. `id` is the agent's position in the
    /// instance and is only used in error messages.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: usize,
        cost: Vec<f64>,
        coupling: Matrix,
        local: Matrix,
        local_rhs: Vec<f64>,
        integer: Vec<bool>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self, ValidationError> {
        let n = cost.len();
        let mismatch = |what: &str, got: usize| {
            ValidationError::DimensionMismatch(format!(
                "agent {id}: {what} has {got} entries, expected {n}"
            ))
        };
        if coupling.cols() != n && coupling.rows() > 0 {
            return Err(mismatch("A (columns)", coupling.cols()));
        }
        if local.cols() != n && local.rows() > 0 {
            return Err(mismatch("D (columns)", local.cols()));
        }
        if local.rows() != local_rhs.len() {
            return Err(ValidationError::DimensionMismatch(format!(
                "agent {id}: D has {} rows but d has {} entries",
                local.rows(),
                local_rhs.len()
            )));
        }
        if integer.len() != n {
            return Err(mismatch("integrality", integer.len()));
        }
        if lower.len() != n {
            return Err(mismatch("lb", lower.len()));
        }
        if upper.len() != n {
            return Err(mismatch("ub", upper.len()));
        }
        if n == 0 {
            return Err(ValidationError::DimensionMismatch(format!(
                "agent {id}: no decision variables"
            )));
        }
        for j in 0..n {
            if !lower[j].is_finite() {
                return Err(ValidationError::Unbounded {
                    agent: id,
                    var: j,
                    side: "lower",
                });
            }
            if !upper[j].is_finite() {
                return Err(ValidationError::Unbounded {
                    agent: id,
                    var: j,
                    side: "upper",
                });
            }
            if lower[j] > upper[j] {
                return Err(ValidationError::InvalidBounds { agent: id, var: j });
            }
        }
        // Zero-row matrices may arrive with an unknown column count.
        let local = if local.rows() == 0 {
            Matrix::zeros(0, n)
        } else {
            local
        };
        let coupling = if coupling.rows() == 0 {
            Matrix::zeros(0, n)
        } else {
            coupling
        };
        Ok(Self {
            id,
            cost,
            coupling,
            local,
            local_rhs,
            integer,
            lower,
            upper,
        })
    }

    pub fn id(&self) -> usize {
        self.id
    }
    pub fn n(&self) -> usize {
        self.cost.len()
    }
    /// Number of coupling rows `p`.
    pub fn p(&self) -> usize {
        self.coupling.rows()
    }
    pub fn cost(&self) -> &[f64] {
        &self.cost
    }
    pub fn coupling(&self) -> &Matrix {
        &self.coupling
    }
    pub fn local(&self) -> &Matrix {
        &self.local
    }
    pub fn local_rhs(&self) -> &[f64] {
        &self.local_rhs
    }
    pub fn integer(&self) -> &[bool] {
        &self.integer
    }
    pub fn lower(&self) -> &[f64] {
        &self.lower
    }
    pub fn upper(&self) -> &[f64] {
        &self.upper
    }
    pub fn n_integer(&self) -> usize {
        self.integer.iter().filter(|&&b| b).count()
    }
    pub fn n_continuous(&self) -> usize {
        self.n() - self.n_integer()
    }

    /// `A_i x`.
    pub fn image(&self, x: &[f64]) -> Vec<f64> {
        self.coupling.mul_vec(x)
    }

    /// `c_i' x`.
    pub fn cost_of(&self, x: &[f64]) -> f64 {
        crate::matrix::dot(&self.cost, x)
    }

    fn with_id(mut self, id: usize) -> Self {
        self.id = id;
        self
    }
}

impl MixedSet for AgentProblem {
    fn constraints(&self) -> &Matrix {
        &self.local
    }
    fn rhs(&self) -> &[f64] {
        &self.local_rhs
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

/// The full coupled problem.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledInstance {
    name: String,
    agents: Vec<AgentProblem>,
    b: Vec<f64>,
}

impl CoupledInstance {
    /// Structural checks only (dimensions and bounds); see [`validate`] for
    /// the emptiness check of the local sets.
    pub fn new(
        name: impl Into<String>,
        agents: Vec<AgentProblem>,
        b: Vec<f64>,
    ) -> Result<Self, ValidationError> {
        if agents.is_empty() || b.is_empty() {
            return Err(ValidationError::Empty);
        }
        let p = b.len();
        let agents: Vec<_> = agents
            .into_iter()
            .enumerate()
            .map(|(i, a)| a.with_id(i))
            .collect();
        for a in &agents {
            if a.p() != p {
                return Err(ValidationError::DimensionMismatch(format!(
                    "agent {}: A has {} rows but b has {} entries",
                    a.id(),
                    a.p(),
                    p
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            agents,
            b,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn agents(&self) -> &[AgentProblem] {
        &self.agents
    }
    pub fn agent(&self, i: usize) -> &AgentProblem {
        &self.agents[i]
    }
    pub fn b(&self) -> &[f64] {
        &self.b
    }
    pub fn m(&self) -> usize {
        self.agents.len()
    }
    pub fn p(&self) -> usize {
        self.b.len()
    }
    pub fn total_vars(&self) -> usize {
        self.agents.iter().map(AgentProblem::n).sum()
    }

    /// Same agents with a different coupling right-hand side.
    pub fn with_b(&self, b: Vec<f64>) -> Result<Self, ValidationError> {
        Self::new(self.name.clone(), self.agents.clone(), b)
    }

    /// `sum_i A_i x_i` for per-agent points.
    pub fn coupling_sum(&self, x: &[Vec<f64>]) -> Vec<f64> {
        let mut total = vec![0.0; self.p()];
        for (agent, xi) in self.agents.iter().zip(x) {
            for (t, v) in total.iter_mut().zip(agent.image(xi)) {
                *t += v;
            }
        }
        total
    }

    pub fn total_cost(&self, x: &[Vec<f64>]) -> f64 {
        self.agents.iter().zip(x).map(|(a, xi)| a.cost_of(xi)).sum()
    }

    /// Largest coupling violation `max_j (sum_i A_i x_i - b)_j`; negative
    /// when all rows have slack.
    pub fn max_violation(&self, x: &[Vec<f64>]) -> f64 {
        self.coupling_sum(x)
            .iter()
            .zip(&self.b)
            .map(|(s, b)| s - b)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Stable hex digest of the serialized instance.
    pub fn fingerprint(&self) -> String {
        let text = serde_json::to_string(&InstanceFile::from(self)).expect("serializable");
        let digest = Sha256::digest(text.as_bytes());
        hex::encode(&digest[..16])
    }
}

/// Summary returned by [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub m: usize,
    pub p: usize,
    pub total_vars: usize,
    pub integer_vars: usize,
    pub continuous_vars: usize,
    pub local_rows: usize,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "m={} p={} vars={} (integer {}, continuous {}) local rows={}",
            self.m,
            self.p,
            self.total_vars,
            self.integer_vars,
            self.continuous_vars,
            self.local_rows
        )
    }
}

/// Full validation: structural invariants hold by construction, so this
/// adds the non-emptiness check of every local set (one MILP feasibility
/// solve per agent).
pub fn validate(instance: &CoupledInstance) -> Result<ValidationReport, ValidationError> {
    let opts = MilpOptions::default();
    for agent in instance.agents() {
        let zero = vec![0.0; agent.n()];
        match milp::solve_milp(agent, &zero, &opts) {
            Ok(res) if res.status == MilpStatus::Optimal => {}
            Ok(_) => return Err(ValidationError::InfeasibleLocalSet { agent: agent.id() }),
            Err(e) => {
                return Err(ValidationError::Solver {
                    agent: agent.id(),
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(ValidationReport {
        m: instance.m(),
        p: instance.p(),
        total_vars: instance.total_vars(),
        integer_vars: instance.agents().iter().map(AgentProblem::n_integer).sum(),
        continuous_vars: instance
            .agents()
            .iter()
            .map(AgentProblem::n_continuous)
            .sum(),
        local_rows: instance.agents().iter().map(|a| a.local().rows()).sum(),
    })
}

/// Step sizes `alpha(k) = a0 / (k + 1)^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub kind: StepKind,
    pub a0: f64,
    pub exponent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Harmonic,
    Power,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid step schedule: {0}")]
pub struct ScheduleError(String);

impl StepSchedule {
    pub fn harmonic(a0: f64) -> Result<Self, ScheduleError> {
        Self::power(a0, 1.0).map(|s| Self {
            kind: StepKind::Harmonic,
            ..s
        })
    }

    /// Requires `a0 > 0` and `exponent` in `(0.5, 1]`, which makes the steps
    /// vanish while their sum diverges.
    pub fn power(a0: f64, exponent: f64) -> Result<Self, ScheduleError> {
        if !(a0.is_finite() && a0 > 0.0) {
            return Err(ScheduleError(format!("a0 must be positive, got {a0}")));
        }
        if !(exponent > 0.5 && exponent <= 1.0) {
            return Err(ScheduleError(format!(
                "exponent must lie in (0.5, 1], got {exponent}"
            )));
        }
        let kind = if exponent == 1.0 {
            StepKind::Harmonic
        } else {
            StepKind::Power
        };
        Ok(Self { kind, a0, exponent })
    }

    /// Default scale `1 / max(1, |b|_inf)` with harmonic decay.
    pub fn default_for(instance: &CoupledInstance) -> Self {
        let scale = crate::matrix::inf_norm(instance.b()).max(1.0);
        Self::harmonic(1.0 / scale).expect("positive scale")
    }

    #[inline]
    pub fn alpha(&self, k: usize) -> f64 {
        let base = (k + 1) as f64;
        match self.kind {
            StepKind::Harmonic => self.a0 / base,
            StepKind::Power => self.a0 / base.powf(self.exponent),
        }
    }
}

// ---------------------------------------------------------------------------
// JSON instance format

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    format_version: u32,
    name: String,
    b: Vec<f64>,
    agents: Vec<AgentFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentFile {
    c: Vec<f64>,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "D")]
    d_mat: Vec<Vec<f64>>,
    d: Vec<f64>,
    integrality: Vec<bool>,
    lb: Vec<Option<f64>>,
    ub: Vec<Option<f64>>,
}

impl From<&CoupledInstance> for InstanceFile {
    fn from(inst: &CoupledInstance) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            name: inst.name.clone(),
            b: inst.b.clone(),
            agents: inst
                .agents
                .iter()
                .map(|a| AgentFile {
                    c: a.cost.clone(),
                    a: a.coupling.to_rows(),
                    d_mat: a.local.to_rows(),
                    d: a.local_rhs.clone(),
                    integrality: a.integer.clone(),
                    lb: a.lower.iter().map(|&v| Some(v)).collect(),
                    ub: a.upper.iter().map(|&v| Some(v)).collect(),
                })
                .collect(),
        }
    }
}

impl TryFrom<InstanceFile> for CoupledInstance {
    type Error = ValidationError;

    fn try_from(file: InstanceFile) -> Result<Self, ValidationError> {
        if file.format_version != FORMAT_VERSION {
            return Err(ValidationError::UnsupportedVersion(file.format_version));
        }
        let p = file.b.len();
        let mut agents = Vec::with_capacity(file.agents.len());
        for (i, af) in file.agents.into_iter().enumerate() {
            let n = af.c.len();
            let coupling = Matrix::from_rows(&af.a, n).map_err(|r| {
                ValidationError::DimensionMismatch(format!(
                    "agent {i}: row {r} of A does not have {n} entries"
                ))
            })?;
            if coupling.rows() != p {
                return Err(ValidationError::DimensionMismatch(format!(
                    "agent {i}: A has {} rows but b has {p} entries",
                    coupling.rows()
                )));
            }
            let local = Matrix::from_rows(&af.d_mat, n).map_err(|r| {
                ValidationError::DimensionMismatch(format!(
                    "agent {i}: row {r} of D does not have {n} entries"
                ))
            })?;
            let lower = af
                .lb
                .iter()
                .map(|v| v.unwrap_or(f64::NEG_INFINITY))
                .collect();
            let upper = af.ub.iter().map(|v| v.unwrap_or(f64::INFINITY)).collect();
            agents.push(AgentProblem::new(
                i,
                af.c,
                coupling,
                local,
                af.d,
                af.integrality,
                lower,
                upper,
            )?);
        }
        CoupledInstance::new(file.name, agents, file.b)
    }
}

/// Parses an instance from JSON text and runs [`validate`].
pub fn parse_instance(text: &str) -> Result<CoupledInstance, LoadError> {
    let file: InstanceFile = serde_json::from_str(text).map_err(|e| LoadError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let instance = CoupledInstance::try_from(file)?;
    validate(&instance)?;
    Ok(instance)
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<CoupledInstance, LoadError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_instance(&text)
}

pub fn instance_to_json(instance: &CoupledInstance) -> String {
    serde_json::to_string_pretty(&InstanceFile::from(instance)).expect("serializable")
}

pub fn save_instance(instance: &CoupledInstance, path: impl AsRef<Path>) -> std::io::Result<()> {
    fs::write(path, instance_to_json(instance) + "\n")
}
