//! Goals-based financial planning as a reinforcement-learning problem.
//!
//! An investor wants to fund one or more fixed-year goals and still retire
//! comfortably. Each year they choose how much of their income surplus to
//! contribute; markets are stochastic, and whether a strategy works is a
//! question of probability, estimated here by seeded Monte Carlo simulation.
//! A DQN agent learns annual contribution strategies against this
//! environment, and exact value iteration on a discretized version of the
//! problem serves as the correctness oracle for the learned policy.
//!
//! Module map:
//! - [`mdp`]: tabular MDPs, policy evaluation, value iteration.
//! - [`market`]: lognormal return model, balance evolution, success-probability
//!   estimators.
//! - [`env`]: the planning environment (state encoding, contribution grid,
//!   goal rewards, annual dynamics).
//! - [`dqn`]: Q-network, replay buffer, epsilon schedule, TD updates.
//! - [`training`]: episode loop, metrics, checkpoints, greedy evaluation.
//! - [`oracle`]: the discretized planning MDP and agent-vs-solver comparison.
//! - [`config`]: JSON profile documents, validation, defaults.
//! - [`checkpoint`]: plain-text checkpoint persistence.
//! - [`metrics`]: CSV export of training curves.
//! - [`cli`]: `train` / `evaluate` / `oracle` subcommands.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dqn;
pub mod env;
pub mod market;
pub mod mdp;
pub mod metrics;
pub mod oracle;
pub mod rng;
pub mod training;

pub use dqn::{AgentConfig, DqnAgent, EpsilonSchedule, QNetwork};
pub use env::{
    ActionIndex, ClientProfile, EnvState, GoalId, GoalSet, PlanningEnv, PreRetirementGoal,
    RetirementGoal, RewardConfig, SimulationConfig, StepResult,
};
pub use market::{AccountBalances, ContributionSplit, MarketModel};
pub use training::{train, Checkpoint, EpisodeMetrics, EvaluationReport, TrainingConfig};
