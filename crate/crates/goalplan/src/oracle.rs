//! Exact validation of the learned agent on a discretized planning problem.
//!
//! Wealth is snapped to a small grid and the market to a two-point up/down
//! factor, which turns the planning problem into a tabular MDP that value
//! iteration solves exactly. A DQN agent is then trained on simulated
//! transitions of the same MDP (one-hot states, the shared 21-action
//! contribution grid) and its greedy policy is compared against the solver's.
//!
//! Agreement counts an agent action as correct when it attains the optimal
//! action value: distinct actions whose exact Q values tie are
//! interchangeable, so matching on action identity alone would be ill-posed.

use crate::dqn::{AgentConfig, DqnAgent, DqnError, EpsilonSchedule, Experience, QNetwork};
use crate::env::{action_to_contribution, ActionIndex, RewardConfig, N_ACTIONS};
use crate::mdp::{value_iteration, MdpError, TabularMdp, ValueTable};
use crate::rng::{derive_seed, RngStream};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("invalid discretization: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Agent(#[from] DqnError),
}

/// Discretization of the planning problem: `(year, wealth level)` states over
/// a fixed horizon, one funding goal at the horizon, and a two-point market.
#[derive(Debug, Clone, PartialEq)]
pub struct ToySpec {
    /// Wealth grid resolution (at most 50 levels).
    pub wealth_levels: usize,
    /// Episode length in years (at most 10).
    pub horizon_years: usize,
    /// Top of the wealth grid; balances clamp here.
    pub max_wealth: f64,
    /// Funding target checked at the horizon.
    pub goal_amount: f64,
    /// Largest annual contribution; the 21-action grid spans `[0, c_max]`.
    pub c_max: f64,
    /// Gross return in an up year.
    pub up_factor: f64,
    /// Gross return in a down year.
    pub down_factor: f64,
    pub up_prob: f64,
    /// Success threshold entering the goal reward.
    pub threshold: f64,
    pub reward: RewardConfig,
}

impl ToySpec {
    /// Derives the two-point market from a lognormal bucket: up/down factors
    /// are one log-volatility above and below the mean log return.
    pub fn from_market(
        wealth_levels: usize,
        horizon_years: usize,
        max_wealth: f64,
        goal_amount: f64,
        c_max: f64,
        log_mean: f64,
        log_vol: f64,
        threshold: f64,
        reward: RewardConfig,
    ) -> Self {
        Self {
            wealth_levels,
            horizon_years,
            max_wealth,
            goal_amount,
            c_max,
            up_factor: (log_mean + log_vol).exp(),
            down_factor: (log_mean - log_vol).exp(),
            up_prob: 0.5,
            threshold,
            reward,
        }
    }

    fn validate(&self) -> Result<(), OracleError> {
        if !(2..=50).contains(&self.wealth_levels) {
            return Err(OracleError::InvalidSpec(format!(
                "wealth_levels {} outside [2, 50]",
                self.wealth_levels
            )));
        }
        if !(1..=10).contains(&self.horizon_years) {
            return Err(OracleError::InvalidSpec(format!(
                "horizon_years {} outside [1, 10]",
                self.horizon_years
            )));
        }
        if self.max_wealth <= 0.0 || self.goal_amount <= 0.0 || self.c_max < 0.0 {
            return Err(OracleError::InvalidSpec(
                "max_wealth and goal_amount must be positive, c_max nonnegative".into(),
            ));
        }
        if self.up_factor <= 0.0 || self.down_factor <= 0.0 {
            return Err(OracleError::InvalidSpec(
                "market factors must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.up_prob) {
            return Err(OracleError::InvalidSpec(format!(
                "up_prob {} outside [0, 1]",
                self.up_prob
            )));
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        (self.horizon_years + 1) * self.wealth_levels
    }
}

/// The discretized planning MDP plus the index bookkeeping to simulate it.
#[derive(Debug, Clone)]
pub struct ToyPlanningMdp {
    spec: ToySpec,
    mdp: TabularMdp,
}

impl ToyPlanningMdp {
    pub fn build(spec: ToySpec) -> Result<Self, OracleError> {
        spec.validate()?;
        let levels = spec.wealth_levels;
        let n_states = spec.n_states();
        let grid_step = spec.max_wealth / (levels - 1) as f64;

        let mut transition = vec![0.0; n_states * N_ACTIONS * n_states];
        let mut reward = vec![0.0; n_states * N_ACTIONS];
        let mut terminal = vec![false; n_states];
        for w in 0..levels {
            terminal[spec.horizon_years * levels + w] = true;
        }

        for t in 0..=spec.horizon_years {
            for w in 0..levels {
                let s = t * levels + w;
                for a in 0..N_ACTIONS {
                    let base = (s * N_ACTIONS + a) * n_states;
                    if terminal[s] {
                        transition[base + s] = 1.0;
                        continue;
                    }
                    let invested = w as f64 * grid_step
                        + action_to_contribution(ActionIndex::new(a).unwrap(), spec.c_max);
                    let mut expected_reward = 0.0;
                    for (factor, prob) in [
                        (spec.up_factor, spec.up_prob),
                        (spec.down_factor, 1.0 - spec.up_prob),
                    ] {
                        let w_next = snap_level(invested * factor, grid_step, levels);
                        let s_next = (t + 1) * levels + w_next;
                        transition[base + s_next] += prob;
                        if t + 1 == spec.horizon_years {
                            expected_reward += prob * spec.terminal_bonus(w_next, grid_step);
                        }
                    }
                    reward[s * N_ACTIONS + a] = expected_reward;
                }
            }
        }

        let mdp = TabularMdp::new(n_states, N_ACTIONS, transition, reward, terminal)?;
        Ok(Self { spec, mdp })
    }

    pub fn spec(&self) -> &ToySpec {
        &self.spec
    }

    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }
}

impl ToySpec {
    /// Goal reward with a binary outcome: reaching the target pays the bonus,
    /// missing it pays the full-shortfall penalty.
    fn terminal_bonus(&self, wealth_level: usize, grid_step: f64) -> f64 {
        if wealth_level as f64 * grid_step >= self.goal_amount {
            self.reward.bonus
        } else {
            -self.reward.penalty_slope * self.threshold
        }
    }
}

fn snap_level(wealth: f64, grid_step: f64, levels: usize) -> usize {
    ((wealth / grid_step).round() as usize).min(levels - 1)
}

/// Training protocol for the agent-vs-solver comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleTrainParams {
    pub episodes: usize,
    pub gamma: f64,
    pub seed: u64,
}

impl Default for OracleTrainParams {
    fn default() -> Self {
        Self {
            episodes: 30_000,
            gamma: 0.95,
            seed: 7,
        }
    }
}

/// Outcome of the comparison.
#[derive(Debug, Clone)]
pub struct OracleReport {
    pub n_states: usize,
    pub n_nonterminal: usize,
    pub n_matching: usize,
    /// Fraction of nonterminal states where the agent's greedy action attains
    /// the optimal action value.
    pub agreement: f64,
    pub episodes: usize,
}

fn one_hot(s: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[s] = 1.0;
    v
}

fn sample_next(mdp: &TabularMdp, s: usize, a: usize, rng: &mut RngStream) -> usize {
    let row = mdp.transition_row(s, a);
    let mut u = rng.next_uniform();
    for (s2, &p) in row.iter().enumerate() {
        if u < p {
            return s2;
        }
        u -= p;
    }
    row.len() - 1
}

/// Trains a DQN agent on simulated transitions of a tabular MDP.
///
/// States are one-hot encoded and the network is the degenerate linear (table
/// lookup) form, so this is Q-learning with replay and a target network.
/// Episodes use exploring starts (uniform random nonterminal start state) to
/// cover the whole state space.
pub fn train_agent_on_mdp(
    mdp: &TabularMdp,
    params: &OracleTrainParams,
    agent_config: AgentConfig,
    schedule: &EpsilonSchedule,
) -> Result<DqnAgent, OracleError> {
    assert_eq!(mdp.n_actions(), N_ACTIONS);
    let n = mdp.n_states();
    let nonterminal: Vec<usize> = (0..n).filter(|&s| !mdp.is_terminal(s)).collect();
    let net = QNetwork::tabular(n, N_ACTIONS);
    let mut agent = DqnAgent::with_network(agent_config, net, derive_seed(params.seed, 0));
    let mut env_rng = RngStream::substream(params.seed, 1);
    let mut global_step = 0u64;
    for _ in 0..params.episodes {
        let mut s = nonterminal[env_rng.next_below(nonterminal.len())];
        while !mdp.is_terminal(s) {
            let epsilon = schedule.value_at(global_step);
            let action = agent.act(&one_hot(s, n), epsilon);
            let s_next = sample_next(mdp, s, action.index(), &mut env_rng);
            agent.remember(Experience {
                state: one_hot(s, n),
                action,
                reward: mdp.reward(s, action.index()),
                next_state: one_hot(s_next, n),
                done: mdp.is_terminal(s_next),
            });
            agent.learn()?;
            global_step += 1;
            s = s_next;
        }
    }
    Ok(agent)
}

/// Compares a greedy policy against the solved optimal values: a state
/// matches when the chosen action's exact Q value is within `1e-9` of the
/// best Q value there.
pub fn policy_agreement(mdp: &TabularMdp, net: &QNetwork, table: &ValueTable) -> (usize, usize) {
    let mut matching = 0;
    let mut total = 0;
    for s in 0..mdp.n_states() {
        if mdp.is_terminal(s) {
            continue;
        }
        total += 1;
        let agent_action = crate::dqn::greedy_action(net, &one_hot(s, mdp.n_states()));
        let q_row = table.q_row(s);
        let best = q_row.iter().fold(f64::NEG_INFINITY, |acc, &x| acc.max(x));
        if q_row[agent_action.index()] >= best - 1e-9 {
            matching += 1;
        }
    }
    (matching, total)
}

/// Default agent hyperparameters for the tabular comparison runs.
pub fn oracle_agent_config(gamma: f64) -> AgentConfig {
    AgentConfig {
        gamma,
        learning_rate: 0.5,
        batch_size: 32,
        target_sync_period: 200,
        warmup_transitions: 500,
        hidden_sizes: vec![],
        replay_capacity: 25_000,
    }
}

/// Full pipeline: solve the toy MDP exactly, train a DQN agent on it, and
/// report how often the greedy policy is optimal.
pub fn run_oracle_comparison(
    toy: &ToyPlanningMdp,
    params: &OracleTrainParams,
) -> Result<OracleReport, OracleError> {
    let (table, _) = value_iteration(toy.mdp(), params.gamma, 1e-10)?;
    // Decay exploration over roughly the first 60% of expected steps.
    let expected_steps =
        (params.episodes * toy.spec().horizon_years.div_ceil(2)).max(1) as u64;
    let schedule = EpsilonSchedule::new(1.0, 0.1, (expected_steps * 3 / 5).max(1));
    let agent = train_agent_on_mdp(
        toy.mdp(),
        params,
        oracle_agent_config(params.gamma),
        &schedule,
    )?;
    let (matching, total) = policy_agreement(toy.mdp(), agent.net(), &table);
    Ok(OracleReport {
        n_states: toy.mdp().n_states(),
        n_nonterminal: total,
        n_matching: matching,
        agreement: matching as f64 / total as f64,
        episodes: params.episodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> ToySpec {
        ToySpec {
            wealth_levels: 9,
            horizon_years: 4,
            max_wealth: 80_000.0,
            goal_amount: 40_000.0,
            c_max: 10_000.0,
            up_factor: 1.15,
            down_factor: 0.95,
            up_prob: 0.5,
            threshold: 0.70,
            reward: RewardConfig::default(),
        }
    }

    #[test]
    fn toy_mdp_is_well_formed() {
        let toy = ToyPlanningMdp::build(small_spec()).unwrap();
        let mdp = toy.mdp();
        assert_eq!(mdp.n_states(), 45);
        assert_eq!(mdp.n_actions(), N_ACTIONS);
        // Rewards are sparse: only transitions into the horizon year pay.
        for t in 0..3 {
            for w in 0..9 {
                for a in 0..N_ACTIONS {
                    assert_eq!(mdp.reward(t * 9 + w, a), 0.0);
                }
            }
        }
        // Penultimate-year rewards are mixtures of bonus and penalty.
        let bonus = 10.0;
        let penalty = -100.0 * 0.70;
        for w in 0..9 {
            for a in 0..N_ACTIONS {
                let r = mdp.reward(3 * 9 + w, a);
                assert!(r >= penalty - 1e-9 && r <= bonus + 1e-9);
            }
        }
    }

    #[test]
    fn spec_bounds_are_enforced() {
        let mut spec = small_spec();
        spec.wealth_levels = 51;
        assert!(ToyPlanningMdp::build(spec).is_err());
        let mut spec = small_spec();
        spec.horizon_years = 11;
        assert!(ToyPlanningMdp::build(spec).is_err());
    }

    #[test]
    fn rich_states_already_succeed() {
        let toy = ToyPlanningMdp::build(small_spec()).unwrap();
        let (table, _) = value_iteration(toy.mdp(), 0.95, 1e-10).unwrap();
        // At the top of the grid one year before the horizon, wealth stays
        // above the goal under either market move, so every action pays the
        // bonus: the whole Q row ties at the optimum.
        let s = 3 * 9 + 8;
        let q = table.q_row(s);
        for a in 0..N_ACTIONS {
            assert!((q[a] - q[0]).abs() < 1e-12);
        }
        assert!((q[0] - 10.0).abs() < 1e-9);
    }

    /// The ten-state sanity check: a short chain where the agent must learn
    /// to contribute; exact Q-learning should recover the optimal policy
    /// almost everywhere.
    #[test]
    fn agent_matches_solver_on_tiny_mdp() {
        let spec = ToySpec {
            wealth_levels: 5,
            horizon_years: 1,
            max_wealth: 20_000.0,
            goal_amount: 10_000.0,
            c_max: 20_000.0,
            up_factor: 1.1,
            down_factor: 0.9,
            up_prob: 0.5,
            threshold: 0.70,
            reward: RewardConfig::default(),
        };
        let toy = ToyPlanningMdp::build(spec).unwrap();
        assert_eq!(toy.mdp().n_states(), 10);
        let params = OracleTrainParams {
            episodes: 4_000,
            gamma: 0.95,
            seed: 3,
        };
        let report = run_oracle_comparison(&toy, &params).unwrap();
        assert!(
            report.agreement >= 0.9,
            "agreement {:.3} ({} of {})",
            report.agreement,
            report.n_matching,
            report.n_nonterminal
        );
    }
}
