//! Known-model oracles: approximate planning via value iteration and the
//! exact density oracle via the resolvent.
//!
//! Values follow the normalized convention `V = <d_pi, r>` (cumulative
//! discounted reward scaled by `1 - gamma`), so planner values and density
//! inner products live on the same scale.

use crate::mdp::{MdpError, PolicyRef, StateDistribution, StationaryPolicy, TabularMDP};
use ndarray::ArrayView1;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("reward entry {index} is {value}; rewards must be finite")]
    NonFiniteReward { index: usize, value: f64 },
    #[error("reward has length {got}; MDP has {expected} states")]
    RewardLength { got: usize, expected: usize },
    #[error("planning tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("value iteration failed to converge within {0} sweeps")]
    NoConvergence(usize),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

/// Outcome of a planning call.
#[derive(Clone, Debug)]
pub struct PlanResult {
    /// Deterministic greedy policy.
    pub policy: StationaryPolicy,
    /// Exact `<d_pi, r>` of the returned policy.
    pub value: f64,
    /// Number of Bellman sweeps performed.
    pub iterations: usize,
}

// Sparse per-(s, a) successor lists; dense tensors of mostly-zero rows make
// Bellman sweeps needlessly quadratic.
fn successor_lists(mdp: &TabularMDP) -> Vec<Vec<(usize, f64)>> {
    let (n, k) = (mdp.n_states(), mdp.n_actions());
    let mut lists = Vec::with_capacity(n * k);
    for s in 0..n {
        for a in 0..k {
            let mut row = Vec::new();
            for next in 0..n {
                let p = mdp.prob(s, a, next);
                if p > 0.0 {
                    row.push((next, p));
                }
            }
            lists.push(row);
        }
    }
    lists
}

/// Plan a deterministic stationary policy whose value is within `eps1` of
/// optimal for the given state-reward vector.
///
/// Bellman backups run on the normalized fixed point
/// `V(s) = (1-gamma) r(s) + gamma max_a E[V(s')]` until the sup-norm step
/// falls below `eps1 (1-gamma)^2 / (2 gamma)`, which bounds the greedy
/// policy's suboptimality by `eps1 (1-gamma) <= eps1`. Greedy ties break
/// toward the lowest action index, so runs are bit-reproducible. The
/// reported value is recomputed exactly from the policy's occupancy.
pub fn value_iteration_plan(
    mdp: &TabularMDP,
    reward: ArrayView1<f64>,
    eps1: f64,
) -> Result<PlanResult, PlanError> {
    if reward.len() != mdp.n_states() {
        return Err(PlanError::RewardLength { got: reward.len(), expected: mdp.n_states() });
    }
    if let Some((i, &v)) = reward.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(PlanError::NonFiniteReward { index: i, value: v });
    }
    if !(eps1 > 0.0) {
        return Err(PlanError::BadTolerance(eps1));
    }

    let n = mdp.n_states();
    let k = mdp.n_actions();
    let gamma = mdp.gamma();
    let successors = successor_lists(mdp);
    let threshold = if gamma > 0.0 {
        eps1 * (1.0 - gamma) * (1.0 - gamma) / (2.0 * gamma)
    } else {
        f64::INFINITY
    };

    // sweep cap: the span contracts by gamma per sweep from its initial size
    let reward_span = reward.iter().fold(0.0f64, |m, &r| m.max(r.abs()));
    let max_sweeps = if gamma > 0.0 {
        let start = (2.0 * reward_span + 1.0).max(1.0);
        ((threshold / start).ln() / gamma.ln()).ceil().max(1.0) as usize + 16
    } else {
        1
    };

    let mut value = vec![0.0f64; n];
    let mut next = vec![0.0f64; n];
    let mut iterations = 0usize;
    loop {
        iterations += 1;
        let mut delta = 0.0f64;
        for s in 0..n {
            let mut best = f64::NEG_INFINITY;
            for a in 0..k {
                let mut exp = 0.0;
                for &(dst, p) in &successors[s * k + a] {
                    exp += p * value[dst];
                }
                if exp > best {
                    best = exp;
                }
            }
            let v = (1.0 - gamma) * reward[s] + gamma * best;
            delta = delta.max((v - value[s]).abs());
            next[s] = v;
        }
        std::mem::swap(&mut value, &mut next);
        if delta <= threshold {
            break;
        }
        if iterations >= max_sweeps {
            return Err(PlanError::NoConvergence(iterations));
        }
    }

    let mut actions = vec![0usize; n];
    for s in 0..n {
        let mut best_a = 0usize;
        let mut best = f64::NEG_INFINITY;
        for a in 0..k {
            let mut exp = 0.0;
            for &(dst, p) in &successors[s * k + a] {
                exp += p * value[dst];
            }
            if exp > best {
                best = exp;
                best_a = a;
            }
        }
        actions[s] = best_a;
    }
    let policy = StationaryPolicy::deterministic(k, &actions);
    let value = mdp.policy_value(&policy, reward)?;
    Ok(PlanResult { policy, value, iterations })
}

/// Exact state distribution oracle: the density-estimate contract with zero
/// error, straight from the resolvent.
pub fn exact_density<'a>(
    mdp: &TabularMDP,
    policy: impl Into<PolicyRef<'a>>,
) -> Result<StateDistribution, MdpError> {
    mdp.occupancy(policy.into())
}
