//! Acceptance suite: one test per release gate, each printing a PASS line
//! with the measured numbers. Run with
//! `cargo test -p goalplan --test acceptance -- --nocapture` to see them.

use goalplan::checkpoint::{checkpoint_from_str, checkpoint_to_string};
use goalplan::cli::cli_dispatch;
use goalplan::config::load_profile;
use goalplan::dqn::{
    td_target, td_train_batch, AgentConfig, EpsilonSchedule, Experience, Gradients, QNetwork,
};
use goalplan::env::{
    pre_retirement_reward, retirement_reward, ActionIndex, PreRetirementGoal, RetirementGoal,
    RewardConfig, N_ACTIONS,
};
use goalplan::market::{
    estimate_goal_success, AccountBalances, AccumulationPlan, ContributionSplit, MarketModel,
};
use goalplan::oracle::{run_oracle_comparison, OracleTrainParams, ToyPlanningMdp};
use goalplan::rng::RngStream;
use goalplan::training::moving_average;
use goalplan::GoalId;
use std::path::{Path, PathBuf};
use std::time::Instant;

fn check(name: &str, ok: bool, detail: String) {
    println!(
        "acceptance: {name}: {} ({detail})",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "{name}: {detail}");
}

fn repo_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn one_hot(i: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

/// Criterion 1: with a one-hot input and a bias-free linear network, one
/// batch update of size one reproduces the tabular Q-learning update to
/// within 1e-10.
#[test]
fn criterion_1_tabular_update_exactness() {
    let start = Instant::now();
    let n_states = 8;
    let mut rng = RngStream::new(2_001);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let mut net = QNetwork::tabular(n_states, N_ACTIONS);
        let params: Vec<f64> = (0..net.param_count())
            .map(|_| rng.next_normal() * 10.0)
            .collect();
        net.set_params(&params);
        let target = net.clone();

        let s = rng.next_below(n_states);
        let s2 = rng.next_below(n_states);
        let a = rng.next_below(N_ACTIONS);
        let reward = rng.next_normal() * 20.0;
        let done = rng.next_uniform() < 0.25;
        let alpha = 0.5 * rng.next_uniform() + 0.01;
        let gamma = 0.95;

        let q_old = net.forward(&one_hot(s, n_states))[a];
        let bootstrap = target
            .forward(&one_hot(s2, n_states))
            .iter()
            .fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        let y = if done { reward } else { reward + gamma * bootstrap };
        let expected = q_old + alpha * (y - q_old);

        let cfg = AgentConfig {
            learning_rate: alpha,
            gamma,
            ..AgentConfig::default()
        };
        let exp = Experience {
            state: one_hot(s, n_states),
            action: ActionIndex::new(a).unwrap(),
            reward,
            next_state: one_hot(s2, n_states),
            done,
        };
        td_train_batch(&mut net, &target, &[exp], &cfg).unwrap();
        let q_new = net.forward(&one_hot(s, n_states))[a];
        worst = worst.max((q_new - expected).abs());
    }
    let elapsed = start.elapsed();
    check(
        "criterion 1 (tabular update exactness)",
        worst < 1e-10 && elapsed.as_secs_f64() < 1.0,
        format!("max deviation {worst:.3e}, {elapsed:.2?}"),
    );
}

/// Criterion 2: both goal-reward formulas match direct piecewise evaluation
/// on a 1,000-point probability grid plus both band edges, to 1e-12.
#[test]
fn criterion_2_reward_formulas() {
    let cfg = RewardConfig {
        bonus: 10.0,
        penalty_slope: 100.0,
    };
    let pre = PreRetirementGoal {
        target_year_index: 10,
        target_amount: 50_000.0,
        threshold: 0.70,
    };
    let ret = RetirementGoal {
        target_year_index: 30,
        annual_spending: 40_000.0,
        threshold: 0.70,
        tolerance: 0.06,
    };

    let mut worst: f64 = 0.0;
    let mut grid: Vec<f64> = (0..1_000).map(|i| i as f64 / 999.0).collect();
    grid.push(0.70);
    grid.push(0.70 + 0.06);
    for &p in &grid {
        // Independent straight-line transcription of the two formulas.
        let expected_pre = if p >= 0.70 { 10.0 } else { 100.0 * (p - 0.70) };
        let expected_ret = if p >= 0.70 && p <= 0.70 + 0.06 {
            10.0
        } else if p < 0.70 {
            100.0 * (p - 0.70)
        } else {
            100.0 * (0.70 + 0.06 - p)
        };
        worst = worst.max((pre_retirement_reward(p, &pre, &cfg).unwrap() - expected_pre).abs());
        worst = worst.max((retirement_reward(p, &ret, &cfg).unwrap() - expected_ret).abs());
    }
    check(
        "criterion 2 (goal reward formulas)",
        worst < 1e-12,
        format!("max deviation {worst:.3e} over {} points", grid.len()),
    );
}

/// Criterion 3: on the discretized planning MDP (41 wealth levels, 8 years,
/// one goal) the trained agent's greedy policy picks an optimal action in at
/// least 90% of nonterminal states, within five minutes.
#[test]
fn criterion_3_oracle_equivalence() {
    let start = Instant::now();
    let loaded = load_profile(&repo_config("toy_oracle.json")).unwrap();
    let toy = ToyPlanningMdp::build(goalplan::cli::toy_spec_from_config(&loaded)).unwrap();
    let report = run_oracle_comparison(
        &toy,
        &OracleTrainParams {
            episodes: loaded.oracle.episodes,
            gamma: loaded.training.agent.gamma,
            seed: loaded.training.master_seed,
        },
    )
    .unwrap();
    let elapsed = start.elapsed();
    check(
        "criterion 3 (dynamic-programming oracle equivalence)",
        report.agreement >= 0.90 && elapsed.as_secs_f64() < 300.0,
        format!(
            "agreement {:.2}% ({}/{} states), {elapsed:.1?}",
            report.agreement * 100.0,
            report.n_matching,
            report.n_nonterminal
        ),
    );
}

/// Criterion 4: analytic gradients (network Jacobian rows and the TD loss)
/// match central finite differences to relative error 1e-4 across 100 random
/// parameterizations, within one minute.
#[test]
fn criterion_4_gradient_checks() {
    let start = Instant::now();
    let step = 1e-5;
    let rel_err = |a: f64, n: f64| {
        let scale = a.abs().max(n.abs());
        if scale < 1e-10 {
            0.0
        } else {
            (a - n).abs() / scale.max(1.0)
        }
    };
    let mut worst: f64 = 0.0;
    let mut rng = RngStream::new(4_004);

    // 50 parameterizations: full Jacobian row of one random output.
    for _ in 0..50 {
        let net = QNetwork::mlp(5, &[6], N_ACTIONS, &mut rng);
        let input: Vec<f64> = (0..5).map(|_| rng.next_normal()).collect();
        let out_idx = rng.next_below(N_ACTIONS);
        let acts = net.forward_cached(&input);
        let mut d_out = vec![0.0; N_ACTIONS];
        d_out[out_idx] = 1.0;
        let mut grads = Gradients::zeros(&net);
        net.backward_into(&input, &acts, &d_out, &mut grads);
        let analytic = grads.to_flat();

        let params = net.params();
        let mut probe = net.clone();
        for i in 0..params.len() {
            let mut bumped = params.clone();
            bumped[i] += step;
            probe.set_params(&bumped);
            let plus = probe.forward(&input)[out_idx];
            bumped[i] -= 2.0 * step;
            probe.set_params(&bumped);
            let minus = probe.forward(&input)[out_idx];
            worst = worst.max(rel_err(analytic[i], (plus - minus) / (2.0 * step)));
        }
    }

    // 50 parameterizations: TD-loss gradient over a small batch.
    for _ in 0..50 {
        let mut net = QNetwork::mlp(4, &[5], N_ACTIONS, &mut rng);
        let target = QNetwork::mlp(4, &[5], N_ACTIONS, &mut rng);
        let cfg = AgentConfig {
            learning_rate: 0.05,
            ..AgentConfig::default()
        };
        let batch: Vec<Experience> = (0..4)
            .map(|i| Experience {
                state: (0..4).map(|_| rng.next_normal()).collect(),
                action: ActionIndex::new(rng.next_below(N_ACTIONS)).unwrap(),
                reward: rng.next_normal() * 3.0,
                next_state: (0..4).map(|_| rng.next_normal()).collect(),
                done: i == 0,
            })
            .collect();
        let loss_of = |net: &QNetwork| -> f64 {
            batch
                .iter()
                .map(|e| {
                    let q = net.forward(&e.state)[e.action.index()];
                    let y = td_target(&target, e, cfg.gamma);
                    0.5 * (q - y) * (q - y) / batch.len() as f64
                })
                .sum()
        };

        let before = net.params();
        td_train_batch(&mut net, &target, &batch, &cfg).unwrap();
        let after = net.params();
        let mut probe = net.clone();
        for i in 0..before.len() {
            let analytic = (before[i] - after[i]) / cfg.learning_rate;
            let mut bumped = before.clone();
            bumped[i] += step;
            probe.set_params(&bumped);
            let plus = loss_of(&probe);
            bumped[i] -= 2.0 * step;
            probe.set_params(&bumped);
            let minus = loss_of(&probe);
            worst = worst.max(rel_err(analytic, (plus - minus) / (2.0 * step)));
        }
    }

    let elapsed = start.elapsed();
    check(
        "criterion 4 (finite-difference gradient checks)",
        worst < 1e-4 && elapsed.as_secs_f64() < 60.0,
        format!("max relative error {worst:.3e}, {elapsed:.1?}"),
    );
}

/// Criteria 5 and 6 share one full reference training run (6,000 episodes).
///
/// 5: the 100-episode moving average of accumulated reward over the final
///    500 episodes is positive and above its first-500 value, and late
///    reward variance is below early variance.
/// 6: the 100-episode moving average of the pre-retirement goal's observed
///    success probability reaches the 0.70 threshold by the final 500
///    episodes.
#[test]
fn criteria_5_and_6_reference_training_curves() {
    let start = Instant::now();
    let loaded = load_profile(&repo_config("reference.json")).unwrap();
    let config = loaded.training;
    assert_eq!(config.n_episodes, 6_000);
    let (_, metrics) = goalplan::train(&config).unwrap();
    let elapsed = start.elapsed();

    let n = metrics.len();
    let rewards: Vec<f64> = metrics.iter().map(|m| m.accumulated_reward).collect();
    let reward_ma = moving_average(&rewards, 100).unwrap();
    let ma_first = mean(&reward_ma[..500]);
    let ma_final = mean(&reward_ma[n - 500..]);
    let var_first = variance(&rewards[..n / 10]);
    let var_final = variance(&rewards[n - n / 10..]);
    check(
        "criterion 5 (training-curve reproduction)",
        ma_final > 0.0
            && ma_final > ma_first
            && var_final < var_first
            && elapsed.as_secs_f64() < 1_800.0,
        format!(
            "reward MA first/final 500: {ma_first:.2}/{ma_final:.2}, \
             variance first/final 10%: {var_first:.1}/{var_final:.1}, {elapsed:.0?}"
        ),
    );

    let goal_probs: Vec<f64> = metrics
        .iter()
        .map(|m| {
            m.observed
                .iter()
                .find(|(id, _)| *id == GoalId::Pre(0))
                .map(|(_, p)| *p)
                .expect("every episode reaches the goal year")
        })
        .collect();
    let prob_ma = moving_average(&goal_probs, 100).unwrap();
    let prob_final = mean(&prob_ma[n - 500..]);
    check(
        "criterion 6 (success-rate convergence)",
        prob_final >= 0.70,
        format!("goal success MA over final 500 episodes: {prob_final:.3}"),
    );
}

/// Criterion 7: the Monte Carlo estimator is exactly binary when volatility
/// is zero, and its seed-to-seed standard deviation halves (within 25%) when
/// the path count is quadrupled.
#[test]
fn criterion_7_monte_carlo_estimator() {
    let contributions = vec![5_000.0; 10];
    let plan = AccumulationPlan {
        initial: AccountBalances::new(20_000.0, 0.0, 0.0),
        contributions: &contributions,
        withdrawals: &[],
        split: ContributionSplit::all_taxable(),
    };

    let flat = MarketModel::uniform(1.05f64.ln(), 0.0).unwrap();
    let mut binary_ok = true;
    for goal in [10_000.0, 60_000.0, 95_000.0, 200_000.0, 500_000.0] {
        let p = estimate_goal_success(&plan, goal, 10, &flat, 777, 1).unwrap();
        binary_ok &= p == 0.0 || p == 1.0;
    }

    // Noisy market, goal near the median outcome so estimates are interior.
    let noisy = MarketModel::uniform(1.05f64.ln(), 0.25).unwrap();
    let goal = 90_000.0;
    let spread = |n_paths: usize| -> f64 {
        let samples: Vec<f64> = (0..50)
            .map(|seed| estimate_goal_success(&plan, goal, 10, &noisy, n_paths, seed).unwrap())
            .collect();
        variance(&samples).sqrt()
    };
    let sd_250 = spread(250);
    let sd_1000 = spread(1_000);
    let ratio = sd_250 / sd_1000;

    check(
        "criterion 7 (Monte Carlo estimator)",
        binary_ok && (1.5..=2.5).contains(&ratio),
        format!(
            "zero-volatility estimates binary: {binary_ok}, \
             sd(250 paths)/sd(1000 paths) = {sd_250:.4}/{sd_1000:.4} = {ratio:.2}"
        ),
    );
}

/// Criterion 8: identical train invocations produce byte-identical outputs,
/// and a checkpoint round-trip preserves the network's outputs bit for bit
/// on 100 probe states.
#[test]
fn criterion_8_determinism_and_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("config.json");
    std::fs::write(
        &config_path,
        r#"{
            "profile": { "current_age": 40, "annual_income": 100000, "annual_spending": 80000 },
            "goals": {
                "retirement": { "target_year_index": 6, "annual_spending": 15000 },
                "pre_retirement": [ { "target_year_index": 3, "target_amount": 20000 } ]
            },
            "agent": { "warmup_transitions": 32, "hidden_sizes": [16] },
            "training": { "n_episodes": 25, "seed": 5, "epsilon_decay_steps": 120 },
            "simulation": { "n_paths": 100, "drawdown_years": 15 }
        }"#,
    )
    .unwrap();

    let run = |out: &Path| {
        let code = cli_dispatch([
            "goalplan",
            "train",
            "--config",
            config_path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--log-every",
            "0",
        ]);
        assert_eq!(code, 0, "train run failed");
    };
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    run(&out_a);
    run(&out_b);

    let metrics_a = std::fs::read(out_a.join("metrics.csv")).unwrap();
    let metrics_b = std::fs::read(out_b.join("metrics.csv")).unwrap();
    let ck_a = std::fs::read(out_a.join("checkpoint.txt")).unwrap();
    let ck_b = std::fs::read(out_b.join("checkpoint.txt")).unwrap();
    let identical = metrics_a == metrics_b && ck_a == ck_b;

    let checkpoint = checkpoint_from_str(std::str::from_utf8(&ck_a).unwrap()).unwrap();
    let restored = checkpoint_from_str(&checkpoint_to_string(&checkpoint)).unwrap();
    let mut rng = RngStream::new(88);
    let mut probes_exact = true;
    for _ in 0..100 {
        let state: Vec<f64> = (0..checkpoint.network.input_dim())
            .map(|_| rng.next_normal())
            .collect();
        let a = checkpoint.network.forward(&state);
        let b = restored.network.forward(&state);
        probes_exact &= a
            .iter()
            .zip(&b)
            .all(|(x, y)| x.to_bits() == y.to_bits());
    }

    check(
        "criterion 8 (byte determinism and checkpoint round-trip)",
        identical && probes_exact,
        format!("outputs byte-identical: {identical}, 100 probe states bit-exact: {probes_exact}"),
    );
}

/// Criterion 9: the exploration schedule hits its endpoints exactly and the
/// midpoint to 1e-12.
#[test]
fn criterion_9_epsilon_schedule() {
    let schedule = EpsilonSchedule::default();
    let at_zero = schedule.value_at(0);
    let at_end = schedule.value_at(100_000);
    let beyond = schedule.value_at(123_456_789);
    let mid = schedule.value_at(50_000);
    check(
        "criterion 9 (exploration schedule)",
        at_zero == 1.0 && at_end == 0.01 && beyond == 0.01 && (mid - 0.505).abs() < 1e-12,
        format!("eps(0)={at_zero}, eps(100k)={at_end}, eps(50k)={mid}"),
    );
}
