//! Finite Markov decision processes and exact dynamic-programming solvers.
//!
//! These tabular tools are the verification oracle for the learned agent:
//! value iteration computes the optimal policy of a small MDP exactly, and
//! the agent's greedy policy is checked against it.

use thiserror::Error;

/// Row-stochasticity slack when validating distributions.
pub const PROB_TOL: f64 = 1e-9;

/// Default sup-norm stopping tolerance for the iterative solvers.
pub const DEFAULT_TOL: f64 = 1e-8;

/// Iteration cap shared by the iterative solvers.
pub const MAX_SWEEPS: usize = 100_000;

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("discount factor {0} outside [0, 1]")]
    InvalidGamma(f64),
    #[error("transition probabilities for state {state}, action {action} sum to {sum}")]
    InvalidDistribution {
        state: usize,
        action: usize,
        sum: f64,
    },
    #[error("terminal state {0} must self-transition with probability 1 and reward 0")]
    TerminalNotAbsorbing(usize),
    #[error("dimension mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no convergence within {0} sweeps")]
    NoConvergence(usize),
}

/// A finite MDP with dense transition and reward tables.
#[derive(Debug, Clone)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    /// P(s' | s, a), laid out as `[s][a][s']`.
    transition: Vec<f64>,
    /// Expected immediate reward R(s, a), laid out as `[s][a]`.
    reward: Vec<f64>,
    terminal: Vec<bool>,
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        terminal: Vec<bool>,
    ) -> Result<Self, MdpError> {
        if transition.len() != n_states * n_actions * n_states {
            return Err(MdpError::ShapeMismatch(format!(
                "transition table has {} entries, expected {}",
                transition.len(),
                n_states * n_actions * n_states
            )));
        }
        if reward.len() != n_states * n_actions {
            return Err(MdpError::ShapeMismatch(format!(
                "reward table has {} entries, expected {}",
                reward.len(),
                n_states * n_actions
            )));
        }
        if terminal.len() != n_states {
            return Err(MdpError::ShapeMismatch(format!(
                "terminal flags have {} entries, expected {}",
                terminal.len(),
                n_states
            )));
        }
        let mdp = Self {
            n_states,
            n_actions,
            transition,
            reward,
            terminal,
        };
        for s in 0..n_states {
            for a in 0..n_actions {
                let row = mdp.transition_row(s, a);
                if row.iter().any(|&p| p < 0.0) {
                    return Err(MdpError::InvalidDistribution {
                        state: s,
                        action: a,
                        sum: f64::NAN,
                    });
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > PROB_TOL {
                    return Err(MdpError::InvalidDistribution {
                        state: s,
                        action: a,
                        sum,
                    });
                }
                if mdp.terminal[s] && ((row[s] - 1.0).abs() > PROB_TOL || mdp.reward(s, a) != 0.0)
                {
                    return Err(MdpError::TerminalNotAbsorbing(s));
                }
            }
        }
        Ok(mdp)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let base = (s * self.n_actions + a) * self.n_states;
        &self.transition[base..base + self.n_states]
    }
}

/// A stochastic policy over a tabular MDP, one distribution per state.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    n_states: usize,
    n_actions: usize,
    /// pi(a | s), laid out as `[s][a]`.
    probs: Vec<f64>,
}

impl TabularPolicy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self, MdpError> {
        if probs.len() != n_states * n_actions {
            return Err(MdpError::ShapeMismatch(format!(
                "policy has {} entries, expected {}",
                probs.len(),
                n_states * n_actions
            )));
        }
        for s in 0..n_states {
            let row = &probs[s * n_actions..(s + 1) * n_actions];
            if row.iter().any(|&p| p < 0.0) {
                return Err(MdpError::InvalidDistribution {
                    state: s,
                    action: 0,
                    sum: f64::NAN,
                });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > PROB_TOL {
                return Err(MdpError::InvalidDistribution {
                    state: s,
                    action: 0,
                    sum,
                });
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }

    /// Point-mass policy playing `actions[s]` in state `s`.
    pub fn deterministic(actions: &[usize], n_actions: usize) -> Result<Self, MdpError> {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(MdpError::ShapeMismatch(format!(
                    "action {a} out of range for {n_actions} actions"
                )));
            }
            probs[s * n_actions + a] = 1.0;
        }
        Self::new(actions.len(), n_actions, probs)
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    /// The action played in `s` by a deterministic policy (highest-prob action).
    pub fn action(&self, s: usize) -> usize {
        argmax(&self.probs[s * self.n_actions..(s + 1) * self.n_actions])
    }
}

/// State values and action values of an MDP.
#[derive(Debug, Clone)]
pub struct ValueTable {
    pub n_states: usize,
    pub n_actions: usize,
    /// V(s).
    pub v: Vec<f64>,
    /// Q(s, a), laid out as `[s][a]`.
    pub q: Vec<f64>,
}

impl ValueTable {
    pub fn q_row(&self, s: usize) -> &[f64] {
        &self.q[s * self.n_actions..(s + 1) * self.n_actions]
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Discounted sum of a finite reward sequence: `sum_k gamma^k rewards[k]`.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> Result<f64, MdpError> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(MdpError::InvalidGamma(gamma));
    }
    // Horner evaluation from the tail keeps the recursion
    // G(r0..rn) = r0 + gamma * G(r1..rn) exact.
    Ok(rewards.iter().rev().fold(0.0, |acc, &r| r + gamma * acc))
}

/// Collapses an MDP and a policy into the induced Markov chain:
/// state transition matrix `[s][s']` and per-state expected reward.
pub fn policy_induced_dynamics(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
) -> Result<(Vec<f64>, Vec<f64>), MdpError> {
    if policy.n_states != mdp.n_states || policy.n_actions != mdp.n_actions {
        return Err(MdpError::ShapeMismatch(format!(
            "policy is {}x{}, MDP is {}x{}",
            policy.n_states, policy.n_actions, mdp.n_states, mdp.n_actions
        )));
    }
    let n = mdp.n_states;
    let mut p = vec![0.0; n * n];
    let mut r = vec![0.0; n];
    for s in 0..n {
        for a in 0..mdp.n_actions {
            let w = policy.prob(s, a);
            if w == 0.0 {
                continue;
            }
            r[s] += w * mdp.reward(s, a);
            let row = mdp.transition_row(s, a);
            for s2 in 0..n {
                p[s * n + s2] += w * row[s2];
            }
        }
    }
    Ok((p, r))
}

/// Iterative fixed-point evaluation of `V = R_pi + gamma P_pi V`.
///
/// Stops when the sup-norm change drops below `tol`; errors out after
/// [`MAX_SWEEPS`] sweeps without convergence.
pub fn policy_evaluation(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    gamma: f64,
    tol: f64,
) -> Result<Vec<f64>, MdpError> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(MdpError::InvalidGamma(gamma));
    }
    let (p, r) = policy_induced_dynamics(mdp, policy)?;
    let n = mdp.n_states;
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    for _ in 0..MAX_SWEEPS {
        let mut delta: f64 = 0.0;
        for s in 0..n {
            let mut acc = r[s];
            for s2 in 0..n {
                acc += gamma * p[s * n + s2] * v[s2];
            }
            next[s] = acc;
            delta = delta.max((acc - v[s]).abs());
        }
        std::mem::swap(&mut v, &mut next);
        if delta < tol {
            return Ok(v);
        }
    }
    Err(MdpError::NoConvergence(MAX_SWEEPS))
}

/// Value iteration to the Bellman optimality fixed point.
///
/// Returns the optimal value table and the greedy deterministic policy
/// (ties broken toward the lowest action index).
pub fn value_iteration(
    mdp: &TabularMdp,
    gamma: f64,
    tol: f64,
) -> Result<(ValueTable, TabularPolicy), MdpError> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(MdpError::InvalidGamma(gamma));
    }
    let (n, m) = (mdp.n_states, mdp.n_actions);
    let mut v = vec![0.0; n];
    let mut q = vec![0.0; n * m];
    for _ in 0..MAX_SWEEPS {
        let mut delta: f64 = 0.0;
        for s in 0..n {
            for a in 0..m {
                let mut acc = mdp.reward(s, a);
                let row = mdp.transition_row(s, a);
                for s2 in 0..n {
                    acc += gamma * row[s2] * v[s2];
                }
                q[s * m + a] = acc;
            }
            let best = q[s * m..(s + 1) * m]
                .iter()
                .fold(f64::NEG_INFINITY, |acc, &x| acc.max(x));
            delta = delta.max((best - v[s]).abs());
            v[s] = best;
        }
        if delta < tol {
            let table = ValueTable {
                n_states: n,
                n_actions: m,
                v,
                q,
            };
            let policy = greedy_policy_from_q(&table)?;
            return Ok((table, policy));
        }
    }
    Err(MdpError::NoConvergence(MAX_SWEEPS))
}

/// Deterministic greedy policy from an action-value table.
pub fn greedy_policy_from_q(table: &ValueTable) -> Result<TabularPolicy, MdpError> {
    let actions: Vec<usize> = (0..table.n_states).map(|s| argmax(table.q_row(s))).collect();
    TabularPolicy::deterministic(&actions, table.n_actions)
}
