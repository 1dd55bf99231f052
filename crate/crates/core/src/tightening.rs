//! Adaptive tightening bookkeeping and worst-case tightening bounds.
//!
//! The adaptive state only ever sees agent images `A_i x_i(k)` and costs
//! `c_i'x_i(k)`; it widens per-agent envelopes `[s_lo, s_hi]` and derives
//! `rho(k) = p * max_i (s_hi_i - s_lo_i)` and the analogous cost spread
//! `gamma(k)`. The worst-case quantities use the same construction with the
//! envelopes taken over the whole local set.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::milp::{self, MilpError, MilpOptions};
use crate::model::{AgentProblem, CoupledInstance};

/// Values closer than this are treated as equal when detecting settling.
pub const SETTLE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TighteningError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Running envelopes of Algorithm-1 style tightening.
#[derive(Debug, Clone, PartialEq)]
pub struct TighteningState {
    p: usize,
    /// Per-agent running maximum of the images.
    s_hi: Vec<Vec<f64>>,
    /// Per-agent running minimum of the images.
    s_lo: Vec<Vec<f64>>,
    /// Per-agent running maximum of the costs.
    cost_hi: Vec<f64>,
    /// Per-agent running minimum of the costs.
    cost_lo: Vec<f64>,
    rho: Vec<f64>,
    gamma: f64,
    k: usize,
}

impl TighteningState {
    pub fn new(m: usize, p: usize) -> Self {
        Self {
            p,
            s_hi: vec![vec![f64::NEG_INFINITY; p]; m],
            s_lo: vec![vec![f64::INFINITY; p]; m],
            cost_hi: vec![f64::NEG_INFINITY; m],
            cost_lo: vec![f64::INFINITY; m],
            rho: vec![0.0; p],
            gamma: 0.0,
            k: 0,
        }
    }

    pub fn m(&self) -> usize {
        self.s_hi.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Number of observations so far.
    pub fn k(&self) -> usize {
        self.k
    }

    /// `rho(k)`, undefined before the first observation.
    pub fn rho(&self) -> Option<&[f64]> {
        (self.k > 0).then_some(&self.rho[..])
    }

    /// `gamma(k)`, undefined before the first observation.
    pub fn gamma(&self) -> Option<f64> {
        (self.k > 0).then_some(self.gamma)
    }

    pub fn s_hi(&self, agent: usize) -> &[f64] {
        &self.s_hi[agent]
    }

    pub fn s_lo(&self, agent: usize) -> &[f64] {
        &self.s_lo[agent]
    }

    /// `rho_i = s_hi_i - s_lo_i`.
    pub fn rho_i(&self, agent: usize) -> Vec<f64> {
        self.s_hi[agent]
            .iter()
            .zip(&self.s_lo[agent])
            .map(|(h, l)| if self.k == 0 { 0.0 } else { h - l })
            .collect()
    }

    /// Folds in one round of images and costs. Returns whether `rho` or
    /// `gamma` moved by more than [`SETTLE_TOL`].
    pub fn observe(&mut self, images: &[Vec<f64>], costs: &[f64]) -> Result<bool, TighteningError> {
        let m = self.m();
        if images.len() != m || costs.len() != m {
            return Err(TighteningError::DimensionMismatch(format!(
                "expected {m} images and costs, got {} and {}",
                images.len(),
                costs.len()
            )));
        }
        if let Some((i, img)) = images.iter().enumerate().find(|(_, v)| v.len() != self.p) {
            return Err(TighteningError::DimensionMismatch(format!(
                "image of agent {i} has {} entries, expected {}",
                img.len(),
                self.p
            )));
        }
        let first = self.k == 0;
        self.k += 1;
        let pf = self.p as f64;
        let mut rho = vec![0.0_f64; self.p];
        let mut spread = 0.0_f64;
        for i in 0..m {
            for j in 0..self.p {
                let v = images[i][j];
                self.s_hi[i][j] = self.s_hi[i][j].max(v);
                self.s_lo[i][j] = self.s_lo[i][j].min(v);
                rho[j] = rho[j].max(self.s_hi[i][j] - self.s_lo[i][j]);
            }
            self.cost_hi[i] = self.cost_hi[i].max(costs[i]);
            self.cost_lo[i] = self.cost_lo[i].min(costs[i]);
            spread = spread.max(self.cost_hi[i] - self.cost_lo[i]);
        }
        for r in &mut rho {
            *r *= pf;
        }
        let gamma = pf * spread;
        let changed = first
            || rho
                .iter()
                .zip(&self.rho)
                .any(|(a, b)| (a - b).abs() > SETTLE_TOL)
            || (gamma - self.gamma).abs() > SETTLE_TOL;
        self.rho = rho;
        self.gamma = gamma;
        Ok(changed)
    }

    pub fn snapshot(&self) -> Option<TighteningSnapshot> {
        Some(TighteningSnapshot {
            k: self.k,
            rho: self.rho()?.to_vec(),
            gamma: self.gamma,
        })
    }
}

/// `rho(k)` and `gamma(k)` at one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TighteningSnapshot {
    pub k: usize,
    pub rho: Vec<f64>,
    pub gamma: f64,
}

fn same(a: &TighteningSnapshot, b: &TighteningSnapshot) -> bool {
    (a.gamma - b.gamma).abs() <= SETTLE_TOL
        && a.rho.len() == b.rho.len()
        && a.rho
            .iter()
            .zip(&b.rho)
            .all(|(x, y)| (x - y).abs() <= SETTLE_TOL)
}

/// Smallest `k` after which `rho` and `gamma` stay constant until the end of
/// the history. `None` if they still change at the last entry.
pub fn settled(history: &[TighteningSnapshot]) -> Option<usize> {
    match history {
        [] => None,
        [only] => Some(only.k),
        _ => {
            let n = history.len();
            let mut start = n - 1;
            while start > 0 && same(&history[start - 1], &history[start]) {
                start -= 1;
            }
            (start < n - 1 || n == 1).then(|| history[start].k)
        }
    }
}

/// Worst-case tightening over the whole local sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseBounds {
    pub rho_tilde: Vec<f64>,
    pub gamma_tilde: f64,
    /// `max - min` of each coupling row over each agent's set, `m x p`.
    pub row_spread: Vec<Vec<f64>>,
    /// `max - min` of each agent's cost over its set.
    pub cost_spread: Vec<f64>,
}

/// `max_x w'x - min_x w'x` over the agent's local set.
fn spread(agent: &AgentProblem, w: &[f64], opts: &MilpOptions) -> Result<f64, MilpError> {
    if w.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let neg: Vec<f64> = w.iter().map(|v| -v).collect();
    let lo = milp::solve_milp(agent, w, opts)?;
    let hi = milp::solve_milp(agent, &neg, opts)?;
    if !lo.is_optimal() || !hi.is_optimal() {
        return Err(MilpError::Infeasible);
    }
    Ok((-hi.value - lo.value).max(0.0))
}

/// Computes the worst-case bounds directly; agents are processed in
/// parallel.
pub fn compute_worst_case(
    instance: &CoupledInstance,
    opts: &MilpOptions,
) -> Result<WorstCaseBounds, MilpError> {
    let per_agent: Vec<(Vec<f64>, f64)> = instance
        .agents()
        .par_iter()
        .map(|a| {
            let rows = (0..a.p())
                .map(|j| spread(a, a.coupling().row(j), opts))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((rows, spread(a, a.cost(), opts)?))
        })
        .collect::<Result<_, MilpError>>()?;
    let p = instance.p();
    let pf = p as f64;
    let mut rho_tilde = vec![0.0_f64; p];
    let mut gamma_tilde = 0.0_f64;
    for (rows, c) in &per_agent {
        for (r, s) in rho_tilde.iter_mut().zip(rows) {
            *r = r.max(*s);
        }
        gamma_tilde = gamma_tilde.max(*c);
    }
    rho_tilde.iter_mut().for_each(|r| *r *= pf);
    let (row_spread, cost_spread) = per_agent.into_iter().unzip();
    Ok(WorstCaseBounds {
        rho_tilde,
        gamma_tilde: pf * gamma_tilde,
        row_spread,
        cost_spread,
    })
}

fn cache() -> &'static Mutex<HashMap<String, WorstCaseBounds>> {
    static CACHE: OnceLock<Mutex<HashMap<String, WorstCaseBounds>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// [`compute_worst_case`] memoized by instance fingerprint.
pub fn worst_case(instance: &CoupledInstance) -> Result<WorstCaseBounds, MilpError> {
    let key = instance.fingerprint();
    if let Some(hit) = cache().lock().expect("cache lock").get(&key) {
        return Ok(hit.clone());
    }
    let bounds = compute_worst_case(instance, &MilpOptions::default())?;
    cache()
        .lock()
        .expect("cache lock")
        .insert(key, bounds.clone());
    Ok(bounds)
}
