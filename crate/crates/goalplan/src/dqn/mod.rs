//! Value-based agent: epsilon-greedy action selection over a Q-network,
//! experience replay, a periodically synced target network, and
//! temporal-difference regression updates.

mod network;
mod replay;

pub use network::{Activation, DenseLayer, Gradients, QNetwork};
pub use replay::ReplayBuffer;

use crate::env::{ActionIndex, N_ACTIONS};
use crate::mdp::argmax;
use crate::rng::RngStream;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DqnError {
    #[error("temporal-difference loss is not finite (training diverged)")]
    DivergedLoss,
    #[error("batch is empty")]
    EmptyBatch,
}

/// One stored transition.
#[derive(Debug, Clone)]
pub struct Experience {
    pub state: Vec<f64>,
    pub action: ActionIndex,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// Linear exploration decay from `start` to `end` over `decay_steps` steps,
/// clamped at `end` afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
}

impl EpsilonSchedule {
    pub fn new(start: f64, end: f64, decay_steps: u64) -> Self {
        assert!(start >= end && end >= 0.0 && start <= 1.0);
        assert!(decay_steps > 0);
        Self {
            start,
            end,
            decay_steps,
        }
    }

    pub fn value_at(&self, step: u64) -> f64 {
        if step >= self.decay_steps {
            self.end
        } else {
            self.start + (self.end - self.start) * (step as f64 / self.decay_steps as f64)
        }
    }
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self::new(1.0, 0.01, 100_000)
    }
}

/// Agent hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    /// Discount factor for temporal-difference targets.
    pub gamma: f64,
    /// Step size of the gradient-descent update.
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Optimizer steps between target-network syncs.
    pub target_sync_period: u64,
    /// Stored transitions required before the first update.
    pub warmup_transitions: usize,
    pub hidden_sizes: Vec<usize>,
    pub replay_capacity: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            learning_rate: 1e-3,
            batch_size: 32,
            target_sync_period: 500,
            warmup_transitions: 1_000,
            hidden_sizes: vec![64, 64],
            replay_capacity: 50_000,
        }
    }
}

/// Greedy action under `net`: argmax over action values, ties to the lowest
/// index.
pub fn greedy_action(net: &QNetwork, state: &[f64]) -> ActionIndex {
    let q = net.forward(state);
    ActionIndex::new(argmax(&q)).expect("network output dim matches action count")
}

/// Epsilon-greedy action selection.
///
/// With probability `epsilon` a uniform random action is drawn; otherwise the
/// greedy action. With `epsilon == 0` the result is a pure function of
/// `(net, state)` even though the branch draw is still consumed.
pub fn select_action(
    net: &QNetwork,
    state: &[f64],
    epsilon: f64,
    rng: &mut RngStream,
) -> ActionIndex {
    debug_assert!((0.0..=1.0).contains(&epsilon));
    if rng.next_uniform() < epsilon {
        ActionIndex::new(rng.next_below(N_ACTIONS)).unwrap()
    } else {
        greedy_action(net, state)
    }
}

/// Regression target for one transition: `r + gamma * max_a Q_target(s', a)`,
/// or just `r` on terminal transitions.
pub fn td_target(target: &QNetwork, experience: &Experience, gamma: f64) -> f64 {
    if experience.done {
        experience.reward
    } else {
        let q_next = target.forward(&experience.next_state);
        let best = q_next.iter().fold(f64::NEG_INFINITY, |acc, &x| acc.max(x));
        experience.reward + gamma * best
    }
}

/// One gradient-descent step on the temporal-difference loss of a batch.
///
/// The loss is `1/(2B) * sum_i (Q(s_i, a_i) - y_i)^2` with targets from the
/// frozen `target` network. The 1/2 convention makes the degenerate one-hot
/// linear case coincide exactly with the tabular update
/// `Q(s,a) += lr * (y - Q(s,a))`. The target network is untouched. Returns
/// the loss before the step.
pub fn td_train_batch(
    net: &mut QNetwork,
    target: &QNetwork,
    batch: &[Experience],
    cfg: &AgentConfig,
) -> Result<f64, DqnError> {
    if batch.is_empty() {
        return Err(DqnError::EmptyBatch);
    }
    let inv_b = 1.0 / batch.len() as f64;
    let mut grads = Gradients::zeros(net);
    let mut loss = 0.0;
    for exp in batch {
        let y = td_target(target, exp, cfg.gamma);
        let acts = net.forward_cached(&exp.state);
        let q = acts.last().unwrap()[exp.action.index()];
        let err = q - y;
        loss += 0.5 * err * err * inv_b;
        let mut d_out = vec![0.0; net.output_dim()];
        d_out[exp.action.index()] = err * inv_b;
        net.backward_into(&exp.state, &acts, &d_out, &mut grads);
    }
    if !loss.is_finite() {
        return Err(DqnError::DivergedLoss);
    }
    net.apply_step(&grads, cfg.learning_rate);
    Ok(loss)
}

/// The full learning agent: online network, frozen target copy, replay
/// buffer, and its own exploration and sampling streams.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    net: QNetwork,
    target: QNetwork,
    buffer: ReplayBuffer,
    cfg: AgentConfig,
    exploration: RngStream,
    sampler: RngStream,
    train_steps: u64,
}

// Substream labels under the agent seed.
const STREAM_INIT: u64 = 0;
const STREAM_EXPLORE: u64 = 1;
const STREAM_SAMPLE: u64 = 2;

impl DqnAgent {
    /// Fresh agent with an MLP sized by `cfg.hidden_sizes`.
    pub fn new(cfg: AgentConfig, input_dim: usize, seed: u64) -> Self {
        let mut init_rng = RngStream::substream(seed, STREAM_INIT);
        let net = QNetwork::mlp(input_dim, &cfg.hidden_sizes, N_ACTIONS, &mut init_rng);
        Self::with_network(cfg, net, seed)
    }

    /// Agent around an existing network (restored or purpose-built).
    pub fn with_network(cfg: AgentConfig, net: QNetwork, seed: u64) -> Self {
        assert_eq!(net.output_dim(), N_ACTIONS);
        let target = net.clone();
        let buffer = ReplayBuffer::new(cfg.replay_capacity);
        Self {
            net,
            target,
            buffer,
            cfg,
            exploration: RngStream::substream(seed, STREAM_EXPLORE),
            sampler: RngStream::substream(seed, STREAM_SAMPLE),
            train_steps: 0,
        }
    }

    pub fn net(&self) -> &QNetwork {
        &self.net
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    /// Optimizer steps taken so far.
    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    pub fn act(&mut self, state: &[f64], epsilon: f64) -> ActionIndex {
        select_action(&self.net, state, epsilon, &mut self.exploration)
    }

    pub fn greedy(&self, state: &[f64]) -> ActionIndex {
        greedy_action(&self.net, state)
    }

    pub fn remember(&mut self, experience: Experience) {
        self.buffer.push(experience);
    }

    /// Runs one replay update if warmup has been met; returns the loss when
    /// an update happened. The target network re-syncs every
    /// `target_sync_period` optimizer steps.
    pub fn learn(&mut self) -> Result<Option<f64>, DqnError> {
        if self.buffer.len() < self.cfg.warmup_transitions.max(self.cfg.batch_size) {
            return Ok(None);
        }
        let batch = match self.buffer.sample(self.cfg.batch_size, &mut self.sampler) {
            Some(batch) => batch,
            None => return Ok(None),
        };
        let loss = td_train_batch(&mut self.net, &self.target, &batch, &self.cfg)?;
        self.train_steps += 1;
        if self.train_steps.is_multiple_of(self.cfg.target_sync_period) {
            self.sync_target();
        }
        Ok(Some(loss))
    }

    /// Deep-copies the online network into the target network.
    pub fn sync_target(&mut self) {
        self.target = self.net.clone();
    }

    #[cfg(test)]
    pub(crate) fn target_net(&self) -> &QNetwork {
        &self.target
    }
}
