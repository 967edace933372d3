//! Profile documents: a single JSON file describes the investor, their goals,
//! the market model, and every training knob. Unknown fields are rejected and
//! omitted fields fall back to documented defaults.
//!
//! The full schema with defaults is documented in the repository README.

use crate::dqn::{AgentConfig, EpsilonSchedule};
use crate::env::{
    ClientProfile, EnvError, GoalSet, PreRetirementGoal, RetirementGoal, RewardConfig,
    SimulationConfig,
};
use crate::market::{AccountBalances, ContributionSplit, MarketError, MarketModel};
use crate::training::TrainingConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
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
    #[error("invalid configuration: {0}")]
    Validation(String),
}

impl From<EnvError> for ConfigError {
    fn from(e: EnvError) -> Self {
        ConfigError::Validation(e.to_string())
    }
}

impl From<MarketError> for ConfigError {
    fn from(e: MarketError) -> Self {
        ConfigError::Validation(e.to_string())
    }
}

/// On-disk document shape. All optional fields have defaults; see
/// [`defaults`] for the exact values.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileDocument {
    pub profile: ProfileSection,
    pub goals: GoalsSection,
    #[serde(default)]
    pub market: MarketSection,
    #[serde(default)]
    pub reward: RewardSection,
    #[serde(default)]
    pub agent: AgentSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub oracle: OracleSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSection {
    pub current_age: u32,
    #[serde(default)]
    pub domicile: u32,
    pub annual_income: f64,
    pub annual_spending: f64,
    #[serde(default)]
    pub initial_balances: BalancesSection,
    #[serde(default)]
    pub income_growth_rate: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BalancesSection {
    #[serde(default)]
    pub taxable: f64,
    #[serde(default)]
    pub tax_deferred: f64,
    #[serde(default)]
    pub tax_free: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalsSection {
    pub retirement: RetirementGoalSection,
    #[serde(default)]
    pub pre_retirement: Vec<PreRetirementGoalSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetirementGoalSection {
    pub target_year_index: usize,
    pub annual_spending: f64,
    pub threshold: Option<f64>,
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreRetirementGoalSection {
    pub target_year_index: usize,
    pub target_amount: f64,
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSection {
    /// Mean annual log return, identical across buckets.
    pub log_mean: Option<f64>,
    /// Annual log-return standard deviation, identical across buckets.
    pub log_vol: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardSection {
    pub bonus: Option<f64>,
    pub penalty_slope: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSection {
    pub gamma: Option<f64>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub target_sync_period: Option<u64>,
    pub warmup_transitions: Option<usize>,
    pub hidden_sizes: Option<Vec<usize>>,
    pub replay_capacity: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub n_episodes: Option<usize>,
    pub seed: Option<u64>,
    pub epsilon_start: Option<f64>,
    pub epsilon_end: Option<f64>,
    pub epsilon_decay_steps: Option<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub n_paths: Option<usize>,
    pub drawdown_years: Option<usize>,
    /// Contribution fractions `[taxable, tax_deferred, tax_free]`.
    pub contribution_split: Option<[f64; 3]>,
}

/// Discretization used by the `oracle` subcommand.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    pub wealth_levels: Option<usize>,
    pub horizon_years: Option<usize>,
    pub max_wealth: Option<f64>,
    pub goal_amount: Option<f64>,
    pub episodes: Option<usize>,
}

/// Built-in default values for everything a document may omit.
pub mod defaults {
    pub const THRESHOLD: f64 = 0.70;
    pub const TOLERANCE: f64 = 0.06;
    pub const LOG_VOL: f64 = 0.12;
    pub fn log_mean() -> f64 {
        1.05f64.ln()
    }
    pub const N_EPISODES: usize = 6_000;
    pub const SEED: u64 = 42;
    pub const EPSILON_START: f64 = 1.0;
    pub const EPSILON_END: f64 = 0.01;
    pub const EPSILON_DECAY_STEPS: u64 = 100_000;
    pub const ORACLE_WEALTH_LEVELS: usize = 41;
    pub const ORACLE_HORIZON_YEARS: usize = 8;
    pub const ORACLE_EPISODES: usize = 30_000;
}

/// A fully resolved, validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub training: TrainingConfig,
    pub oracle: ResolvedOracleSection,
}

/// Oracle discretization with defaults applied; `max_wealth` and
/// `goal_amount` stay optional so the `oracle` command can derive them from
/// the profile's contribution capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedOracleSection {
    pub wealth_levels: usize,
    pub horizon_years: usize,
    pub max_wealth: Option<f64>,
    pub goal_amount: Option<f64>,
    pub episodes: usize,
}

/// Reads and validates a profile document.
pub fn load_profile(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_profile(&text)
}

/// Parses a profile document from a string.
pub fn parse_profile(text: &str) -> Result<LoadedConfig, ConfigError> {
    // Two stages: syntax errors keep their location; schema errors (missing
    // or unknown fields) become named validation errors.
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
    let document: ProfileDocument = serde_json::from_value(value)
        .map_err(|e| ConfigError::Validation(e.to_string()))?;
    resolve(&document)
}

/// Applies defaults and semantic validation.
pub fn resolve(document: &ProfileDocument) -> Result<LoadedConfig, ConfigError> {
    let p = &document.profile;
    let profile = ClientProfile {
        current_age: p.current_age,
        domicile: p.domicile,
        annual_income: p.annual_income,
        annual_spending: p.annual_spending,
        initial_balances: AccountBalances::new(
            p.initial_balances.taxable,
            p.initial_balances.tax_deferred,
            p.initial_balances.tax_free,
        ),
        income_growth_rate: p.income_growth_rate,
    };
    profile.validate()?;
    if profile.initial_balances.taxable < 0.0
        || profile.initial_balances.tax_deferred < 0.0
        || profile.initial_balances.tax_free < 0.0
    {
        return Err(ConfigError::Validation(
            "profile.initial_balances must be nonnegative".into(),
        ));
    }

    let r = &document.goals.retirement;
    let retirement = RetirementGoal {
        target_year_index: r.target_year_index,
        annual_spending: r.annual_spending,
        threshold: r.threshold.unwrap_or(defaults::THRESHOLD),
        tolerance: r.tolerance.unwrap_or(defaults::TOLERANCE),
    };
    let pre = document
        .goals
        .pre_retirement
        .iter()
        .map(|g| PreRetirementGoal {
            target_year_index: g.target_year_index,
            target_amount: g.target_amount,
            threshold: g.threshold.unwrap_or(defaults::THRESHOLD),
        })
        .collect();
    let goals = GoalSet::new(pre, retirement)?;

    let market = MarketModel::uniform(
        document.market.log_mean.unwrap_or_else(defaults::log_mean),
        document.market.log_vol.unwrap_or(defaults::LOG_VOL),
    )?;

    let reward_defaults = RewardConfig::default();
    let reward = RewardConfig::new(
        document.reward.bonus.unwrap_or(reward_defaults.bonus),
        document
            .reward
            .penalty_slope
            .unwrap_or(reward_defaults.penalty_slope),
    )?;

    let agent_defaults = AgentConfig::default();
    let a = &document.agent;
    let agent = AgentConfig {
        gamma: a.gamma.unwrap_or(agent_defaults.gamma),
        learning_rate: a.learning_rate.unwrap_or(agent_defaults.learning_rate),
        batch_size: a.batch_size.unwrap_or(agent_defaults.batch_size),
        target_sync_period: a
            .target_sync_period
            .unwrap_or(agent_defaults.target_sync_period),
        warmup_transitions: a
            .warmup_transitions
            .unwrap_or(agent_defaults.warmup_transitions),
        hidden_sizes: a
            .hidden_sizes
            .clone()
            .unwrap_or(agent_defaults.hidden_sizes),
        replay_capacity: a.replay_capacity.unwrap_or(agent_defaults.replay_capacity),
    };
    if !(0.0..=1.0).contains(&agent.gamma) {
        return Err(ConfigError::Validation(format!(
            "agent.gamma {} must lie in [0, 1]",
            agent.gamma
        )));
    }
    if agent.learning_rate <= 0.0 {
        return Err(ConfigError::Validation(format!(
            "agent.learning_rate {} must be positive",
            agent.learning_rate
        )));
    }
    if agent.batch_size == 0 || agent.replay_capacity == 0 || agent.target_sync_period == 0 {
        return Err(ConfigError::Validation(
            "agent.batch_size, agent.replay_capacity and agent.target_sync_period must be positive"
                .into(),
        ));
    }

    let t = &document.training;
    let epsilon_start = t.epsilon_start.unwrap_or(defaults::EPSILON_START);
    let epsilon_end = t.epsilon_end.unwrap_or(defaults::EPSILON_END);
    let decay_steps = t.epsilon_decay_steps.unwrap_or(defaults::EPSILON_DECAY_STEPS);
    if !(0.0..=1.0).contains(&epsilon_start)
        || !(0.0..=epsilon_start).contains(&epsilon_end)
        || decay_steps == 0
    {
        return Err(ConfigError::Validation(format!(
            "training epsilon schedule ({epsilon_start} -> {epsilon_end} over {decay_steps} steps) \
             requires 0 <= end <= start <= 1 and a positive step count"
        )));
    }
    let n_episodes = t.n_episodes.unwrap_or(defaults::N_EPISODES);
    if n_episodes == 0 {
        return Err(ConfigError::Validation(
            "training.n_episodes must be at least 1".into(),
        ));
    }

    let s = &document.simulation;
    let sim_defaults = SimulationConfig::default();
    let simulation = SimulationConfig {
        n_paths: s.n_paths.unwrap_or(sim_defaults.n_paths),
        drawdown_years: s.drawdown_years.unwrap_or(sim_defaults.drawdown_years),
        contribution_split: match s.contribution_split {
            Some(fractions) => ContributionSplit::new(fractions)?,
            None => sim_defaults.contribution_split,
        },
    };
    if simulation.n_paths == 0 {
        return Err(ConfigError::Validation(
            "simulation.n_paths must be at least 1".into(),
        ));
    }
    if simulation.drawdown_years == 0 {
        return Err(ConfigError::Validation(
            "simulation.drawdown_years must be at least 1".into(),
        ));
    }

    let o = &document.oracle;
    let oracle = ResolvedOracleSection {
        wealth_levels: o.wealth_levels.unwrap_or(defaults::ORACLE_WEALTH_LEVELS),
        horizon_years: o.horizon_years.unwrap_or(defaults::ORACLE_HORIZON_YEARS),
        max_wealth: o.max_wealth,
        goal_amount: o.goal_amount,
        episodes: o.episodes.unwrap_or(defaults::ORACLE_EPISODES),
    };

    Ok(LoadedConfig {
        training: TrainingConfig {
            n_episodes,
            master_seed: t.seed.unwrap_or(defaults::SEED),
            schedule: EpsilonSchedule::new(epsilon_start, epsilon_end, decay_steps),
            profile,
            goals,
            market,
            reward,
            agent,
            simulation,
        },
        oracle,
    })
}

impl LoadedConfig {
    /// Renders the resolved configuration back into document form with every
    /// field made explicit; reloading the result reproduces `self`.
    pub fn to_document(&self) -> ProfileDocument {
        let t = &self.training;
        ProfileDocument {
            profile: ProfileSection {
                current_age: t.profile.current_age,
                domicile: t.profile.domicile,
                annual_income: t.profile.annual_income,
                annual_spending: t.profile.annual_spending,
                initial_balances: BalancesSection {
                    taxable: t.profile.initial_balances.taxable,
                    tax_deferred: t.profile.initial_balances.tax_deferred,
                    tax_free: t.profile.initial_balances.tax_free,
                },
                income_growth_rate: t.profile.income_growth_rate,
            },
            goals: GoalsSection {
                retirement: RetirementGoalSection {
                    target_year_index: t.goals.retirement().target_year_index,
                    annual_spending: t.goals.retirement().annual_spending,
                    threshold: Some(t.goals.retirement().threshold),
                    tolerance: Some(t.goals.retirement().tolerance),
                },
                pre_retirement: t
                    .goals
                    .pre_retirement()
                    .iter()
                    .map(|g| PreRetirementGoalSection {
                        target_year_index: g.target_year_index,
                        target_amount: g.target_amount,
                        threshold: Some(g.threshold),
                    })
                    .collect(),
            },
            market: MarketSection {
                log_mean: Some(t.market.log_mean(crate::market::Bucket::Taxable)),
                log_vol: Some(t.market.log_vol(crate::market::Bucket::Taxable)),
            },
            reward: RewardSection {
                bonus: Some(t.reward.bonus),
                penalty_slope: Some(t.reward.penalty_slope),
            },
            agent: AgentSection {
                gamma: Some(t.agent.gamma),
                learning_rate: Some(t.agent.learning_rate),
                batch_size: Some(t.agent.batch_size),
                target_sync_period: Some(t.agent.target_sync_period),
                warmup_transitions: Some(t.agent.warmup_transitions),
                hidden_sizes: Some(t.agent.hidden_sizes.clone()),
                replay_capacity: Some(t.agent.replay_capacity),
            },
            training: TrainingSection {
                n_episodes: Some(t.n_episodes),
                seed: Some(t.master_seed),
                epsilon_start: Some(t.schedule.start),
                epsilon_end: Some(t.schedule.end),
                epsilon_decay_steps: Some(t.schedule.decay_steps),
            },
            simulation: SimulationSection {
                n_paths: Some(t.simulation.n_paths),
                drawdown_years: Some(t.simulation.drawdown_years),
                contribution_split: Some(t.simulation.contribution_split.fractions()),
            },
            oracle: OracleSection {
                wealth_levels: Some(self.oracle.wealth_levels),
                horizon_years: Some(self.oracle.horizon_years),
                max_wealth: self.oracle.max_wealth,
                goal_amount: self.oracle.goal_amount,
                episodes: Some(self.oracle.episodes),
            },
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("document serializes")
    }
}
