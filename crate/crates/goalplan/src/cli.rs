//! Command-line surface: `train`, `evaluate`, and `oracle`.

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::config::{load_profile, LoadedConfig};
use crate::env::max_contribution;
use crate::market::Bucket;
use crate::metrics::{metrics_to_csv, moving_average_csv, schedule_to_csv};
use crate::oracle::{run_oracle_comparison, OracleTrainParams, ToyPlanningMdp, ToySpec};
use crate::training::{evaluate_policy, moving_average, train_with};
use clap::{Parser, Subcommand};
use std::ffi::OsString;
use std::path::{Path, PathBuf};

/// Window used for the exported moving-average curves.
pub const MOVING_AVERAGE_WINDOW: usize = 100;

#[derive(Parser)]
#[command(
    name = "goalplan",
    version,
    about = "Learn annual contribution strategies for multi-goal financial plans"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent on a profile and write checkpoint + metrics.
    Train {
        /// Profile document (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output directory for checkpoint.txt, metrics.csv, moving_average.csv.
        #[arg(long)]
        out: PathBuf,
        /// Print a progress line every N episodes (0 disables).
        #[arg(long, default_value_t = 500)]
        log_every: usize,
    },
    /// Roll out a trained policy greedily and report success statistics.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Number of evaluation episodes.
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        /// Evaluation seed (defaults to the profile's training seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Where to write the greedy contribution schedule CSV.
        #[arg(long, default_value = "schedule.csv")]
        out: PathBuf,
    },
    /// Solve a discretized version of the profile exactly and report how
    /// often a freshly trained agent picks optimal actions.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        /// Training seed for the comparison agent.
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// Runs the CLI against explicit arguments and returns the process exit code.
pub fn cli_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successful exits.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(message) => {
            eprintln!("error: {message}");
            1
        }
    }
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Train {
            config,
            out,
            log_every,
        } => cmd_train(&config, &out, log_every),
        Command::Evaluate {
            checkpoint,
            config,
            episodes,
            seed,
            out,
        } => cmd_evaluate(&checkpoint, &config, episodes, seed, &out),
        Command::Oracle { config, seed } => cmd_oracle(&config, seed),
    }
}

fn cmd_train(config_path: &Path, out_dir: &Path, log_every: usize) -> Result<(), String> {
    let loaded = load_profile(config_path).map_err(|e| e.to_string())?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| format!("cannot create {}: {e}", out_dir.display()))?;
    let config = &loaded.training;
    println!(
        "training {} episodes over a {}-year horizon (seed {})",
        config.n_episodes,
        config.goals.retirement().target_year_index,
        config.master_seed
    );
    let (checkpoint, metrics) = train_with(config, |m| {
        if log_every > 0 && (m.episode + 1) % log_every == 0 {
            println!(
                "episode {:>6}: reward {:>8.2}, epsilon {:.3}",
                m.episode + 1,
                m.accumulated_reward,
                m.epsilon
            );
        }
    })
    .map_err(|e| e.to_string())?;

    let checkpoint_path = out_dir.join("checkpoint.txt");
    save_checkpoint(&checkpoint_path, &checkpoint).map_err(|e| e.to_string())?;
    let metrics_path = out_dir.join("metrics.csv");
    std::fs::write(&metrics_path, metrics_to_csv(&metrics, &config.goals))
        .map_err(|e| format!("cannot write {}: {e}", metrics_path.display()))?;
    let ma_path = out_dir.join("moving_average.csv");
    let ma = moving_average_csv(&metrics, &config.goals, MOVING_AVERAGE_WINDOW)
        .map_err(|e| e.to_string())?;
    std::fs::write(&ma_path, ma).map_err(|e| format!("cannot write {}: {e}", ma_path.display()))?;

    let rewards: Vec<f64> = metrics.iter().map(|m| m.accumulated_reward).collect();
    let reward_ma = moving_average(&rewards, MOVING_AVERAGE_WINDOW).map_err(|e| e.to_string())?;
    println!(
        "done: final {}-episode mean reward {:.2}",
        MOVING_AVERAGE_WINDOW,
        reward_ma.last().copied().unwrap_or(0.0)
    );
    println!("wrote {}", checkpoint_path.display());
    println!("wrote {}", metrics_path.display());
    println!("wrote {}", ma_path.display());
    Ok(())
}

fn cmd_evaluate(
    checkpoint_path: &Path,
    config_path: &Path,
    episodes: usize,
    seed: Option<u64>,
    out: &Path,
) -> Result<(), String> {
    let loaded = load_profile(config_path).map_err(|e| e.to_string())?;
    let checkpoint = load_checkpoint(checkpoint_path).map_err(|e| e.to_string())?;
    let config = &loaded.training;
    let report = evaluate_policy(
        &checkpoint,
        &config.profile,
        &config.goals,
        &config.market,
        config.reward,
        &config.simulation,
        episodes,
        seed.unwrap_or(config.master_seed),
    )
    .map_err(|e| e.to_string())?;

    println!("evaluated {} greedy episodes", report.episodes);
    println!(
        "mean accumulated reward: {:.3}",
        report.mean_accumulated_reward
    );
    for (id, p) in &report.mean_goal_probabilities {
        println!("{id} mean success probability: {p:.3}");
    }
    println!("contribution schedule (first episode):");
    for (year, c) in report.contribution_schedule.iter().enumerate() {
        println!("  year {year:>2}: {c:>12.2}");
    }
    std::fs::write(out, schedule_to_csv(&report.contribution_schedule))
        .map_err(|e| format!("cannot write {}: {e}", out.display()))?;
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_oracle(config_path: &Path, seed: Option<u64>) -> Result<(), String> {
    let loaded = load_profile(config_path).map_err(|e| e.to_string())?;
    let spec = toy_spec_from_config(&loaded);
    let toy = ToyPlanningMdp::build(spec).map_err(|e| e.to_string())?;
    let params = OracleTrainParams {
        episodes: loaded.oracle.episodes,
        gamma: loaded.training.agent.gamma,
        seed: seed.unwrap_or(loaded.training.master_seed),
    };
    println!(
        "discretized MDP: {} states ({} wealth levels x {} years), 21 actions",
        toy.mdp().n_states(),
        toy.spec().wealth_levels,
        toy.spec().horizon_years
    );
    let report = run_oracle_comparison(&toy, &params).map_err(|e| e.to_string())?;
    println!(
        "trained agent for {} episodes; policy agreement: {:.2}% ({} of {} nonterminal states)",
        report.episodes,
        report.agreement * 100.0,
        report.n_matching,
        report.n_nonterminal
    );
    Ok(())
}

/// Derives the toy discretization from a profile: the wealth grid spans 8x
/// the first-year contribution capacity and the goal defaults to 3x, unless
/// the document pins them explicitly.
pub fn toy_spec_from_config(loaded: &LoadedConfig) -> ToySpec {
    let config = &loaded.training;
    let c_max = max_contribution(&config.profile, 0);
    let max_wealth = loaded.oracle.max_wealth.unwrap_or(8.0 * c_max.max(1.0));
    let goal_amount = loaded.oracle.goal_amount.unwrap_or(3.0 * c_max.max(1.0));
    ToySpec::from_market(
        loaded.oracle.wealth_levels,
        loaded.oracle.horizon_years,
        max_wealth,
        goal_amount,
        c_max,
        config.market.log_mean(Bucket::Taxable),
        config.market.log_vol(Bucket::Taxable),
        config.goals.retirement().threshold,
        config.reward,
    )
}
