//! Seeded random instance families.
//!
//! Coupled instances use nonnegative coupling blocks and local sets that
//! contain the origin, so the all-zero plan always has slack
//! `min_j b_j > 0` and a positive margin under zero tightening.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::milp::MixedBlock;
use crate::model::{AgentProblem, CoupledInstance};
use crate::simplex::LpProblem;

/// Shape of a random coupled instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomFamily {
    pub m_min: usize,
    pub m_max: usize,
    pub p_min: usize,
    pub p_max: usize,
    /// At most this many binaries per agent, at least one.
    pub max_binaries: usize,
    /// Probability that an agent also owns one continuous variable.
    pub continuous_prob: f64,
    /// `b` is drawn as this fraction band of the unconstrained usage.
    pub tightness: (f64, f64),
}

impl Default for RandomFamily {
    fn default() -> Self {
        Self {
            m_min: 3,
            m_max: 10,
            p_min: 1,
            p_max: 3,
            max_binaries: 4,
            continuous_prob: 0.3,
            tightness: (0.4, 0.8),
        }
    }
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

fn random_agent(rng: &mut ChaCha8Rng, p: usize, family: &RandomFamily) -> AgentProblem {
    let nb = rng.gen_range(1..=family.max_binaries.max(1));
    let nc = usize::from(rng.gen_bool(family.continuous_prob));
    let n = nb + nc;
    let cost: Vec<f64> = (0..n).map(|_| round2(-rng.gen_range(1.0..10.0))).collect();
    let coupling: Vec<f64> = (0..p * n)
        .map(|_| round2(rng.gen_range(0.0..3.0)))
        .collect();
    let mut local_rows = Vec::new();
    let mut rhs = Vec::new();
    // One knapsack row over the binaries.
    let weights: Vec<f64> = (0..nb).map(|_| round2(rng.gen_range(0.5..2.0))).collect();
    let total: f64 = weights.iter().sum();
    let mut row = weights;
    row.resize(n, 0.0);
    local_rows.push(row);
    rhs.push(round2(total * rng.gen_range(0.5..1.0)));
    if nc == 1 {
        // The continuous part is switched on by the first binary.
        let mut link = vec![0.0; n];
        link[0] = -1.0;
        link[nb] = 1.0;
        local_rows.push(link);
        rhs.push(0.0);
    }
    let q = local_rows.len();
    let mut integer = vec![true; nb];
    integer.resize(n, false);
    AgentProblem::new(
        0,
        cost,
        Matrix::from_flat(p, n, coupling),
        Matrix::from_rows(&local_rows, n).expect("rectangular"),
        rhs,
        integer,
        vec![0.0; n],
        vec![1.0; n],
    )
    .unwrap_or_else(|e| panic!("generated agent with {q} rows is invalid: {e}"))
}

/// Draws one coupled instance from the family.
pub fn random_instance(seed: u64, family: &RandomFamily) -> CoupledInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.gen_range(family.m_min..=family.m_max);
    let p = rng.gen_range(family.p_min..=family.p_max);
    let agents: Vec<AgentProblem> = (0..m).map(|_| random_agent(&mut rng, p, family)).collect();
    // Usage of the all-ones plan bounds every local optimum's usage.
    let mut usage = vec![0.0; p];
    for a in &agents {
        for (u, v) in usage.iter_mut().zip(a.image(&vec![1.0; a.n()])) {
            *u += v;
        }
    }
    let b: Vec<f64> = usage
        .iter()
        .map(|u| round2((u * rng.gen_range(family.tightness.0..family.tightness.1)).max(1.0)))
        .collect();
    CoupledInstance::new(format!("random-{seed}"), agents, b).expect("consistent dimensions")
}

/// A small bounded mixed-integer block with `n <= max_n` variables and
/// `q <= max_q` rows; may be empty.
pub fn random_block(seed: u64, max_n: usize, max_q: usize) -> (MixedBlock, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=max_n);
    let q = rng.gen_range(0..=max_q);
    let data: Vec<f64> = (0..q * n).map(|_| rng.gen_range(-3..=3) as f64).collect();
    let rhs: Vec<f64> = (0..q).map(|_| rng.gen_range(-2..=6) as f64).collect();
    let integer: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.7)).collect();
    let lower: Vec<f64> = (0..n).map(|_| rng.gen_range(-1..=0) as f64).collect();
    let upper: Vec<f64> = lower
        .iter()
        .map(|l| l + rng.gen_range(1..=3) as f64)
        .collect();
    let objective: Vec<f64> = (0..n).map(|_| rng.gen_range(-5..=5) as f64).collect();
    (
        MixedBlock {
            constraints: Matrix::from_flat(q, n, data),
            rhs,
            lower,
            upper,
            integer,
        },
        objective,
    )
}

/// A small bounded LP with real data.
pub fn random_lp(seed: u64, max_n: usize, max_r: usize) -> LpProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=max_n);
    let r = rng.gen_range(0..=max_r);
    let data: Vec<f64> = (0..r * n)
        .map(|_| round2(rng.gen_range(-2.0..2.0)))
        .collect();
    let rhs: Vec<f64> = (0..r).map(|_| round2(rng.gen_range(-1.0..3.0))).collect();
    let lower: Vec<f64> = (0..n).map(|_| round2(rng.gen_range(-1.0..0.5))).collect();
    let upper: Vec<f64> = lower
        .iter()
        .map(|l| l + round2(rng.gen_range(0.5..2.0)))
        .collect();
    let objective: Vec<f64> = (0..n).map(|_| round2(rng.gen_range(-3.0..3.0))).collect();
    LpProblem::new(objective, Matrix::from_flat(r, n, data), rhs, lower, upper)
        .expect("valid random LP")
}
