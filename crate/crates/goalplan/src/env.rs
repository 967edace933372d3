//! The multi-goal financial-planning environment.
//!
//! One episode covers the accumulation years from today until retirement.
//! Each step the agent picks an annual contribution from a 21-level grid,
//! balances evolve under one market draw, and reward is zero except at goal
//! years, where it is computed from a Monte Carlo success-probability
//! estimate of the contribution sequence played so far.
//!
//! State vector layout (17 entries; money scaled by `1e-6`, years and small
//! counts by `1e-2`):
//!
//! | index | entry                        |
//! |-------|------------------------------|
//! | 0     | age                          |
//! | 1     | domicile code                |
//! | 2     | current annual income        |
//! | 3     | annual spending              |
//! | 4     | taxable balance              |
//! | 5     | tax-deferred balance         |
//! | 6     | tax-free balance             |
//! | 7     | total contributions to date  |
//! | 8     | number of custom goals       |
//! | 9     | years until retirement       |
//! | 10    | retirement annual spending   |
//! | 11/13/15 | years until custom goal 1/2/3 |
//! | 12/14/16 | custom goal 1/2/3 amount  |
//!
//! Unused custom-goal slots are zero. Years-left entries keep decrementing
//! past a goal's year, so every entry is nonincreasing over an episode.

use crate::market::{
    estimate_goal_success, estimate_retirement_success, sample_year_factors, step_year,
    withdraw_for_goal, AccountBalances, AccumulationPlan, ContributionSplit, MarketError,
    MarketModel, ScheduledWithdrawal,
};
use crate::rng::{derive_seed, RngStream};
use thiserror::Error;

/// Length of the observation vector.
pub const STATE_DIM: usize = 17;

/// Size of the contribution action grid.
pub const N_ACTIONS: usize = 21;

/// Contribution fraction step between adjacent actions.
pub const CONTRIBUTION_STEP: f64 = 0.05;

/// Most custom goals the fixed state layout can carry.
pub const MAX_CUSTOM_GOALS: usize = 3;

// Observation entries are divided by these (division by an exactly
// representable power of ten keeps e.g. 50_000 -> 0.05 exact).
const MONEY_DENOM: f64 = 1e6;
const YEARS_DENOM: f64 = 1e2;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid goal set: {0}")]
    InvalidGoalSet(String),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("invalid reward configuration: {0}")]
    InvalidRewardConfig(String),
    #[error("action index {0} outside [0, {}]", N_ACTIONS - 1)]
    ActionOutOfRange(usize),
    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("episode already finished; call reset")]
    EpisodeDone,
    #[error(transparent)]
    Market(#[from] MarketError),
}

/// Starting conditions of one investor.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientProfile {
    pub current_age: u32,
    /// Categorical state-of-domicile code.
    pub domicile: u32,
    pub annual_income: f64,
    pub annual_spending: f64,
    pub initial_balances: AccountBalances,
    pub income_growth_rate: f64,
}

impl ClientProfile {
    pub fn validate(&self) -> Result<(), EnvError> {
        if self.current_age == 0 {
            return Err(EnvError::InvalidProfile("age must be positive".into()));
        }
        if self.annual_income < 0.0 || self.annual_spending < 0.0 {
            return Err(EnvError::InvalidProfile(
                "income and spending must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// A funding target at a fixed pre-retirement year.
#[derive(Debug, Clone, PartialEq)]
pub struct PreRetirementGoal {
    pub target_year_index: usize,
    pub target_amount: f64,
    /// Success-probability threshold the strategy must reach.
    pub threshold: f64,
}

/// The retirement objective: sustain `annual_spending` from the target year.
///
/// A strategy counts as successful when its success probability lands inside
/// `[threshold, threshold + tolerance]`; the upper edge discourages
/// over-saving at the expense of pre-retirement quality of life.
#[derive(Debug, Clone, PartialEq)]
pub struct RetirementGoal {
    pub target_year_index: usize,
    pub annual_spending: f64,
    pub threshold: f64,
    pub tolerance: f64,
}

/// One retirement goal plus up to [`MAX_CUSTOM_GOALS`] pre-retirement goals,
/// kept sorted by target year.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalSet {
    pre_retirement: Vec<PreRetirementGoal>,
    retirement: RetirementGoal,
}

impl GoalSet {
    pub fn new(
        mut pre_retirement: Vec<PreRetirementGoal>,
        retirement: RetirementGoal,
    ) -> Result<Self, EnvError> {
        if retirement.target_year_index == 0 {
            return Err(EnvError::InvalidGoalSet(
                "retirement target year must be at least 1".into(),
            ));
        }
        if retirement.annual_spending <= 0.0 {
            return Err(EnvError::InvalidGoalSet(
                "retirement spending must be positive".into(),
            ));
        }
        check_threshold(retirement.threshold, retirement.tolerance)?;
        if pre_retirement.len() > MAX_CUSTOM_GOALS {
            return Err(EnvError::InvalidGoalSet(format!(
                "at most {MAX_CUSTOM_GOALS} custom goals fit the state layout, got {}",
                pre_retirement.len()
            )));
        }
        for goal in &pre_retirement {
            if goal.target_year_index == 0 {
                return Err(EnvError::InvalidGoalSet(
                    "goal target year must be at least 1".into(),
                ));
            }
            if goal.target_year_index >= retirement.target_year_index {
                return Err(EnvError::InvalidGoalSet(format!(
                    "goal year {} must precede retirement year {}",
                    goal.target_year_index, retirement.target_year_index
                )));
            }
            if goal.target_amount <= 0.0 {
                return Err(EnvError::InvalidGoalSet(
                    "goal amount must be positive".into(),
                ));
            }
            check_threshold(goal.threshold, 0.0)?;
        }
        pre_retirement.sort_by_key(|g| g.target_year_index);
        if pre_retirement
            .windows(2)
            .any(|w| w[0].target_year_index == w[1].target_year_index)
        {
            return Err(EnvError::InvalidGoalSet(
                "goal target years must be distinct".into(),
            ));
        }
        Ok(Self {
            pre_retirement,
            retirement,
        })
    }

    pub fn pre_retirement(&self) -> &[PreRetirementGoal] {
        &self.pre_retirement
    }

    pub fn retirement(&self) -> &RetirementGoal {
        &self.retirement
    }

    /// Goal identifiers in chronological order.
    pub fn ids(&self) -> Vec<GoalId> {
        let mut ids: Vec<GoalId> = (0..self.pre_retirement.len()).map(GoalId::Pre).collect();
        ids.push(GoalId::Retirement);
        ids
    }
}

fn check_threshold(threshold: f64, tolerance: f64) -> Result<(), EnvError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(EnvError::InvalidGoalSet(format!(
            "threshold {threshold} must lie strictly inside (0, 1)"
        )));
    }
    if tolerance < 0.0 || threshold + tolerance > 1.0 {
        return Err(EnvError::InvalidGoalSet(format!(
            "tolerance {tolerance} must be nonnegative with threshold + tolerance <= 1"
        )));
    }
    Ok(())
}

/// Scalars of the goal reward signal: `bonus` when a goal's success band is
/// reached, `penalty_slope` times the probability shortfall otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardConfig {
    pub bonus: f64,
    pub penalty_slope: f64,
}

impl RewardConfig {
    pub fn new(bonus: f64, penalty_slope: f64) -> Result<Self, EnvError> {
        if bonus <= 0.0 || penalty_slope <= 0.0 {
            return Err(EnvError::InvalidRewardConfig(format!(
                "bonus {bonus} and penalty slope {penalty_slope} must be positive"
            )));
        }
        Ok(Self {
            bonus,
            penalty_slope,
        })
    }
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            bonus: 10.0,
            penalty_slope: 100.0,
        }
    }
}

/// Monte Carlo and drawdown settings for in-episode reward estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    /// Paths per success-probability estimate.
    pub n_paths: usize,
    /// Post-retirement horizon the spending level must survive.
    pub drawdown_years: usize,
    pub contribution_split: ContributionSplit,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n_paths: 1_000,
            drawdown_years: 30,
            contribution_split: ContributionSplit::all_taxable(),
        }
    }
}

/// The observation vector handed to the agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvState([f64; STATE_DIM]);

impl EnvState {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.to_vec()
    }
}

impl std::ops::Index<usize> for EnvState {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Index into the 21-level contribution grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ActionIndex(usize);

impl ActionIndex {
    pub fn new(index: usize) -> Result<Self, EnvError> {
        if index >= N_ACTIONS {
            return Err(EnvError::ActionOutOfRange(index));
        }
        Ok(Self(index))
    }

    pub fn index(self) -> usize {
        self.0
    }
}

/// Names one goal of a goal set: custom goals by chronological index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GoalId {
    Pre(usize),
    Retirement,
}

impl std::fmt::Display for GoalId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GoalId::Pre(i) => write!(f, "goal{}", i + 1),
            GoalId::Retirement => write!(f, "retirement"),
        }
    }
}

/// Outcome of one environment step.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub next_state: EnvState,
    pub reward: f64,
    pub done: bool,
    /// Success probabilities measured this step; empty on non-goal years.
    pub observed: Vec<(GoalId, f64)>,
}

/// Largest feasible contribution in a given year: income grows at the
/// profile's rate, spending stays flat, and the surplus floors at zero.
pub fn max_contribution(profile: &ClientProfile, year_index: usize) -> f64 {
    let income =
        profile.annual_income * (1.0 + profile.income_growth_rate).powi(year_index as i32);
    (income - profile.annual_spending).max(0.0)
}

/// Maps an action index to currency: 5% of `c_max` per grid level.
pub fn action_to_contribution(action: ActionIndex, c_max: f64) -> f64 {
    CONTRIBUTION_STEP * action.index() as f64 * c_max
}

/// Reward at a pre-retirement goal year: flat bonus when the measured
/// success probability reaches the goal's threshold, otherwise a penalty
/// proportional to the shortfall.
pub fn pre_retirement_reward(
    p_actual: f64,
    goal: &PreRetirementGoal,
    cfg: &RewardConfig,
) -> Result<f64, EnvError> {
    if !(0.0..=1.0).contains(&p_actual) {
        return Err(EnvError::ProbabilityOutOfRange(p_actual));
    }
    if p_actual >= goal.threshold {
        Ok(cfg.bonus)
    } else {
        Ok(cfg.penalty_slope * (p_actual - goal.threshold))
    }
}

/// Reward at the retirement year: flat bonus inside the success band
/// `[threshold, threshold + tolerance]`, a shortfall penalty below it, and an
/// over-saving penalty above it.
pub fn retirement_reward(
    p_actual: f64,
    goal: &RetirementGoal,
    cfg: &RewardConfig,
) -> Result<f64, EnvError> {
    if !(0.0..=1.0).contains(&p_actual) {
        return Err(EnvError::ProbabilityOutOfRange(p_actual));
    }
    let lo = goal.threshold;
    let hi = goal.threshold + goal.tolerance;
    if p_actual < lo {
        Ok(cfg.penalty_slope * (p_actual - lo))
    } else if p_actual > hi {
        Ok(cfg.penalty_slope * (hi - p_actual))
    } else {
        Ok(cfg.bonus)
    }
}

// Substream labels for the per-episode seed.
const STREAM_MARKET: u64 = 0;
const STREAM_GOAL_MC: u64 = 1_000;

/// The planning MDP driven one year per step.
#[derive(Debug, Clone)]
pub struct PlanningEnv {
    profile: ClientProfile,
    goals: GoalSet,
    model: MarketModel,
    reward_cfg: RewardConfig,
    sim: SimulationConfig,
    // Episode state.
    episode_seed: u64,
    market_rng: RngStream,
    year: usize,
    balances: AccountBalances,
    contributions: Vec<f64>,
    done: bool,
}

impl PlanningEnv {
    pub fn new(
        profile: ClientProfile,
        goals: GoalSet,
        model: MarketModel,
        reward_cfg: RewardConfig,
        sim: SimulationConfig,
    ) -> Result<Self, EnvError> {
        profile.validate()?;
        if sim.n_paths == 0 {
            return Err(EnvError::Market(MarketError::NoPaths));
        }
        if sim.drawdown_years == 0 {
            return Err(EnvError::Market(MarketError::EmptyDrawdown));
        }
        let horizon = goals.retirement.target_year_index;
        Ok(Self {
            profile,
            goals,
            model,
            reward_cfg,
            sim,
            episode_seed: 0,
            market_rng: RngStream::new(0),
            year: 0,
            balances: AccountBalances::default(),
            contributions: Vec::with_capacity(horizon),
            done: true,
        })
    }

    pub fn goals(&self) -> &GoalSet {
        &self.goals
    }

    pub fn profile(&self) -> &ClientProfile {
        &self.profile
    }

    /// Episode length in steps.
    pub fn horizon(&self) -> usize {
        self.goals.retirement.target_year_index
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn current_year(&self) -> usize {
        self.year
    }

    /// Contributions recorded so far this episode, in currency per year.
    pub fn contributions(&self) -> &[f64] {
        &self.contributions
    }

    /// Starts a fresh episode at year zero and returns its first observation.
    pub fn reset(&mut self, seed: u64) -> EnvState {
        self.episode_seed = seed;
        self.market_rng = RngStream::substream(seed, STREAM_MARKET);
        self.year = 0;
        self.balances = self.profile.initial_balances;
        self.contributions.clear();
        self.done = false;
        self.encode_state()
    }

    /// Advances one year.
    pub fn step(&mut self, action: ActionIndex) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        let c_max = max_contribution(&self.profile, self.year);
        let contribution = action_to_contribution(action, c_max);
        self.contributions.push(contribution);

        let factors = sample_year_factors(&self.model, &mut self.market_rng);
        self.balances = step_year(
            &self.balances,
            contribution,
            &self.sim.contribution_split,
            factors,
        )?;
        self.year += 1;

        let mut reward = 0.0;
        let mut observed = Vec::new();

        if let Some((idx, goal)) = self
            .goals
            .pre_retirement
            .iter()
            .enumerate()
            .find(|(_, g)| g.target_year_index == self.year)
        {
            let p = self.estimate_pre_goal(idx)?;
            reward = pre_retirement_reward(p, goal, &self.reward_cfg)?;
            observed.push((GoalId::Pre(idx), p));
            // The goal expenditure leaves the portfolio once its year arrives.
            self.balances = withdraw_for_goal(&self.balances, goal.target_amount).0;
        }

        if self.year == self.goals.retirement.target_year_index {
            let p = self.estimate_retirement()?;
            reward = retirement_reward(p, &self.goals.retirement, &self.reward_cfg)?;
            observed.push((GoalId::Retirement, p));
            self.done = true;
        }

        Ok(StepResult {
            next_state: self.encode_state(),
            reward,
            done: self.done,
            observed,
        })
    }

    /// Builds the observation vector for the current internal state.
    pub fn encode_state(&self) -> EnvState {
        let mut s = [0.0; STATE_DIM];
        let year = self.year as f64;
        s[0] = (self.profile.current_age as f64 + year) / YEARS_DENOM;
        s[1] = self.profile.domicile as f64 / YEARS_DENOM;
        s[2] = self.profile.annual_income
            * (1.0 + self.profile.income_growth_rate).powi(self.year as i32)
            / MONEY_DENOM;
        s[3] = self.profile.annual_spending / MONEY_DENOM;
        s[4] = self.balances.taxable / MONEY_DENOM;
        s[5] = self.balances.tax_deferred / MONEY_DENOM;
        s[6] = self.balances.tax_free / MONEY_DENOM;
        s[7] = self.contributions.iter().sum::<f64>() / MONEY_DENOM;
        s[8] = self.goals.pre_retirement.len() as f64 / YEARS_DENOM;
        s[9] = (self.goals.retirement.target_year_index as f64 - year) / YEARS_DENOM;
        s[10] = self.goals.retirement.annual_spending / MONEY_DENOM;
        for (i, goal) in self.goals.pre_retirement.iter().enumerate() {
            s[11 + 2 * i] = (goal.target_year_index as f64 - year) / YEARS_DENOM;
            s[12 + 2 * i] = goal.target_amount / MONEY_DENOM;
        }
        EnvState(s)
    }

    /// Withdrawals scheduled strictly before `year`.
    fn withdrawals_before(&self, year: usize) -> Vec<ScheduledWithdrawal> {
        self.goals
            .pre_retirement
            .iter()
            .filter(|g| g.target_year_index < year)
            .map(|g| ScheduledWithdrawal {
                year_index: g.target_year_index,
                amount: g.target_amount,
            })
            .collect()
    }

    fn estimate_pre_goal(&self, goal_idx: usize) -> Result<f64, EnvError> {
        let goal = &self.goals.pre_retirement[goal_idx];
        let year = goal.target_year_index;
        let withdrawals = self.withdrawals_before(year);
        let plan = AccumulationPlan {
            initial: self.profile.initial_balances,
            contributions: &self.contributions[..year],
            withdrawals: &withdrawals,
            split: self.sim.contribution_split,
        };
        let seed = derive_seed(self.episode_seed, STREAM_GOAL_MC + year as u64);
        Ok(estimate_goal_success(
            &plan,
            goal.target_amount,
            year,
            &self.model,
            self.sim.n_paths,
            seed,
        )?)
    }

    fn estimate_retirement(&self) -> Result<f64, EnvError> {
        let year = self.goals.retirement.target_year_index;
        let withdrawals = self.withdrawals_before(year);
        let plan = AccumulationPlan {
            initial: self.profile.initial_balances,
            contributions: &self.contributions[..year],
            withdrawals: &withdrawals,
            split: self.sim.contribution_split,
        };
        let seed = derive_seed(self.episode_seed, STREAM_GOAL_MC + year as u64);
        Ok(estimate_retirement_success(
            &plan,
            self.goals.retirement.annual_spending,
            self.sim.drawdown_years,
            &self.model,
            self.sim.n_paths,
            seed,
        )?)
    }
}
