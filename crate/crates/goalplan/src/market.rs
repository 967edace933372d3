//! Capital-market model and Monte Carlo wealth simulation.
//!
//! Annual gross returns are i.i.d. lognormal per account bucket. Success
//! probabilities for funding goals are estimated by replaying a recorded
//! contribution sequence under fresh market noise across many paths; path
//! `i` draws from substream `(seed, i)`, so estimates do not depend on how
//! paths are scheduled.

use crate::rng::RngStream;
use thiserror::Error;

/// Tax treatment buckets an account balance can live in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bucket {
    Taxable,
    TaxDeferred,
    TaxFree,
}

pub const N_BUCKETS: usize = 3;

pub const BUCKETS: [Bucket; N_BUCKETS] = [Bucket::Taxable, Bucket::TaxDeferred, Bucket::TaxFree];

impl Bucket {
    pub fn index(self) -> usize {
        match self {
            Bucket::Taxable => 0,
            Bucket::TaxDeferred => 1,
            Bucket::TaxFree => 2,
        }
    }
}

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("contribution must be nonnegative, got {0}")]
    NegativeContribution(f64),
    #[error("invalid contribution split: {0}")]
    InvalidSplit(String),
    #[error("negative volatility {0}")]
    NegativeVolatility(f64),
    #[error("contribution sequence has {got} entries, expected {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("at least one Monte Carlo path is required")]
    NoPaths,
    #[error("drawdown horizon must be at least one year")]
    EmptyDrawdown,
}

/// Lognormal annual-return model, one `(log_mean, log_vol)` pair per bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketModel {
    log_mean: [f64; N_BUCKETS],
    log_vol: [f64; N_BUCKETS],
}

impl MarketModel {
    /// Same parameters for every bucket.
    pub fn uniform(log_mean: f64, log_vol: f64) -> Result<Self, MarketError> {
        Self::per_bucket([log_mean; N_BUCKETS], [log_vol; N_BUCKETS])
    }

    pub fn per_bucket(
        log_mean: [f64; N_BUCKETS],
        log_vol: [f64; N_BUCKETS],
    ) -> Result<Self, MarketError> {
        if let Some(&v) = log_vol.iter().find(|&&v| v < 0.0) {
            return Err(MarketError::NegativeVolatility(v));
        }
        Ok(Self { log_mean, log_vol })
    }

    pub fn log_mean(&self, bucket: Bucket) -> f64 {
        self.log_mean[bucket.index()]
    }

    pub fn log_vol(&self, bucket: Bucket) -> f64 {
        self.log_vol[bucket.index()]
    }

    /// True when every bucket has zero volatility (fully deterministic market).
    pub fn is_deterministic(&self) -> bool {
        self.log_vol.iter().all(|&v| v == 0.0)
    }
}

impl Default for MarketModel {
    /// 5% expected log growth, 12% log volatility, identical across buckets.
    fn default() -> Self {
        Self::uniform(1.05f64.ln(), 0.12).unwrap()
    }
}

/// Account balances by tax bucket. Each component stays nonnegative.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AccountBalances {
    pub taxable: f64,
    pub tax_deferred: f64,
    pub tax_free: f64,
}

impl AccountBalances {
    pub fn new(taxable: f64, tax_deferred: f64, tax_free: f64) -> Self {
        Self {
            taxable,
            tax_deferred,
            tax_free,
        }
    }

    pub fn total(&self) -> f64 {
        self.taxable + self.tax_deferred + self.tax_free
    }

    pub fn get(&self, bucket: Bucket) -> f64 {
        match bucket {
            Bucket::Taxable => self.taxable,
            Bucket::TaxDeferred => self.tax_deferred,
            Bucket::TaxFree => self.tax_free,
        }
    }

    fn get_mut(&mut self, bucket: Bucket) -> &mut f64 {
        match bucket {
            Bucket::Taxable => &mut self.taxable,
            Bucket::TaxDeferred => &mut self.tax_deferred,
            Bucket::TaxFree => &mut self.tax_free,
        }
    }
}

/// How an annual contribution is divided across buckets. Fractions sum to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContributionSplit {
    fractions: [f64; N_BUCKETS],
}

impl ContributionSplit {
    pub fn new(fractions: [f64; N_BUCKETS]) -> Result<Self, MarketError> {
        if fractions.iter().any(|&f| f < 0.0) {
            return Err(MarketError::InvalidSplit(format!(
                "negative fraction in {fractions:?}"
            )));
        }
        let sum: f64 = fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(MarketError::InvalidSplit(format!(
                "fractions sum to {sum}, expected 1"
            )));
        }
        Ok(Self { fractions })
    }

    pub fn all_taxable() -> Self {
        Self {
            fractions: [1.0, 0.0, 0.0],
        }
    }

    pub fn fraction(&self, bucket: Bucket) -> f64 {
        self.fractions[bucket.index()]
    }

    pub fn fractions(&self) -> [f64; N_BUCKETS] {
        self.fractions
    }
}

impl Default for ContributionSplit {
    fn default() -> Self {
        Self::all_taxable()
    }
}

/// A goal expenditure scheduled at the start of a given year.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduledWithdrawal {
    pub year_index: usize,
    pub amount: f64,
}

/// Terminal wealth of each simulated path.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    terminal_wealth: Vec<f64>,
}

impl PathEnsemble {
    pub fn n_paths(&self) -> usize {
        self.terminal_wealth.len()
    }

    pub fn terminal_wealth(&self) -> &[f64] {
        &self.terminal_wealth
    }

    /// Fraction of paths whose terminal wealth reaches `amount`.
    pub fn fraction_at_least(&self, amount: f64) -> f64 {
        let hits = self.terminal_wealth.iter().filter(|&&w| w >= amount).count();
        hits as f64 / self.terminal_wealth.len() as f64
    }
}

/// One year's gross return factor for `bucket`: `exp(z)`, `z ~ N(log_mean, log_vol^2)`.
pub fn sample_annual_return(model: &MarketModel, bucket: Bucket, rng: &mut RngStream) -> f64 {
    let z = rng.next_normal();
    (model.log_mean(bucket) + model.log_vol(bucket) * z).exp()
}

/// Gross return factors for all buckets, drawn in bucket order.
pub fn sample_year_factors(model: &MarketModel, rng: &mut RngStream) -> [f64; N_BUCKETS] {
    let mut factors = [0.0; N_BUCKETS];
    for b in BUCKETS {
        factors[b.index()] = sample_annual_return(model, b, rng);
    }
    factors
}

/// Advances balances by one year: contribute first, then grow.
pub fn step_year(
    balances: &AccountBalances,
    contribution: f64,
    split: &ContributionSplit,
    factors: [f64; N_BUCKETS],
) -> Result<AccountBalances, MarketError> {
    if contribution < 0.0 {
        return Err(MarketError::NegativeContribution(contribution));
    }
    let mut next = AccountBalances::default();
    for b in BUCKETS {
        *next.get_mut(b) = (balances.get(b) + contribution * split.fraction(b)) * factors[b.index()];
    }
    Ok(next)
}

/// Takes up to `amount` out of the portfolio, draining taxable first,
/// then tax-free, then tax-deferred. Returns the new balances and the
/// amount actually withdrawn.
pub fn withdraw_for_goal(balances: &AccountBalances, amount: f64) -> (AccountBalances, f64) {
    debug_assert!(amount >= 0.0);
    let mut next = *balances;
    let mut remaining = amount.max(0.0);
    for bucket in [Bucket::Taxable, Bucket::TaxFree, Bucket::TaxDeferred] {
        let slot = next.get_mut(bucket);
        let take = remaining.min(*slot);
        *slot -= take;
        remaining -= take;
        if remaining == 0.0 {
            break;
        }
    }
    (next, amount.max(0.0) - remaining)
}

/// Inputs for replaying an accumulation phase: starting balances, the fixed
/// per-year contribution sequence, and goal withdrawals already on the books.
#[derive(Debug, Clone)]
pub struct AccumulationPlan<'a> {
    pub initial: AccountBalances,
    pub contributions: &'a [f64],
    pub withdrawals: &'a [ScheduledWithdrawal],
    pub split: ContributionSplit,
}

/// Replays one path over `plan.contributions.len()` years.
///
/// Each year: apply any withdrawal scheduled for that year, then contribute
/// and grow. The returned balances are as of the start of the year after the
/// last contribution.
fn replay_accumulation(
    plan: &AccumulationPlan,
    model: &MarketModel,
    rng: &mut RngStream,
) -> Result<AccountBalances, MarketError> {
    let mut balances = plan.initial;
    for (year, &contribution) in plan.contributions.iter().enumerate() {
        for w in plan.withdrawals.iter().filter(|w| w.year_index == year) {
            balances = withdraw_for_goal(&balances, w.amount).0;
        }
        let factors = sample_year_factors(model, rng);
        balances = step_year(&balances, contribution, &plan.split, factors)?;
    }
    Ok(balances)
}

/// Simulates `n_paths` accumulation paths and collects terminal wealth.
pub fn simulate_accumulation_ensemble(
    plan: &AccumulationPlan,
    model: &MarketModel,
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble, MarketError> {
    if n_paths == 0 {
        return Err(MarketError::NoPaths);
    }
    let mut terminal_wealth = Vec::with_capacity(n_paths);
    for path in 0..n_paths {
        let mut rng = RngStream::substream(seed, path as u64);
        let balances = replay_accumulation(plan, model, &mut rng)?;
        terminal_wealth.push(balances.total());
    }
    Ok(PathEnsemble { terminal_wealth })
}

/// Probability that total wealth at the goal year reaches `goal_amount`,
/// estimated by replaying the contribution sequence under fresh noise.
pub fn estimate_goal_success(
    plan: &AccumulationPlan,
    goal_amount: f64,
    goal_year_index: usize,
    model: &MarketModel,
    n_paths: usize,
    seed: u64,
) -> Result<f64, MarketError> {
    if plan.contributions.len() != goal_year_index {
        return Err(MarketError::LengthMismatch {
            got: plan.contributions.len(),
            expected: goal_year_index,
        });
    }
    let ensemble = simulate_accumulation_ensemble(plan, model, n_paths, seed)?;
    Ok(ensemble.fraction_at_least(goal_amount))
}

/// Probability that the portfolio funds `annual_spending` at every
/// post-retirement year start for `drawdown_years` years.
///
/// Each path accumulates to the retirement year, then alternates
/// withdraw-then-grow. A path succeeds when every withdrawal is fully funded.
pub fn estimate_retirement_success(
    plan: &AccumulationPlan,
    annual_spending: f64,
    drawdown_years: usize,
    model: &MarketModel,
    n_paths: usize,
    seed: u64,
) -> Result<f64, MarketError> {
    if n_paths == 0 {
        return Err(MarketError::NoPaths);
    }
    if drawdown_years == 0 {
        return Err(MarketError::EmptyDrawdown);
    }
    let mut successes = 0usize;
    for path in 0..n_paths {
        let mut rng = RngStream::substream(seed, path as u64);
        let mut balances = replay_accumulation(plan, model, &mut rng)?;
        let mut funded = true;
        for _ in 0..drawdown_years {
            if balances.total() < annual_spending {
                funded = false;
                break;
            }
            balances = withdraw_for_goal(&balances, annual_spending).0;
            let factors = sample_year_factors(model, &mut rng);
            balances = step_year(&balances, 0.0, &plan.split, factors)?;
        }
        if funded {
            successes += 1;
        }
    }
    Ok(successes as f64 / n_paths as f64)
}
