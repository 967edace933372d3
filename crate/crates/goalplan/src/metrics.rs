//! CSV export of training curves.
//!
//! One row per episode: index, steps, accumulated reward, exploration rate,
//! then one success-probability column per goal in chronological order
//! (custom goals first, retirement last). Formatting is fixed at six decimal
//! places so identical metrics always serialize to identical bytes.

use crate::env::{GoalId, GoalSet};
use crate::training::{moving_average, EpisodeMetrics, TrainError};
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Window(#[from] TrainError),
}

fn header(goals: &GoalSet) -> String {
    let mut line = String::from("episode,steps,accumulated_reward,epsilon");
    for id in goals.ids() {
        write!(line, ",{id}_success_prob").unwrap();
    }
    line
}

fn probability_for(metrics: &EpisodeMetrics, id: GoalId) -> f64 {
    metrics
        .observed
        .iter()
        .find(|(g, _)| *g == id)
        .map(|(_, p)| *p)
        .unwrap_or(f64::NAN)
}

/// Renders the per-episode metrics table.
pub fn metrics_to_csv(metrics: &[EpisodeMetrics], goals: &GoalSet) -> String {
    let mut out = header(goals);
    out.push('\n');
    let ids = goals.ids();
    for m in metrics {
        write!(
            out,
            "{},{},{:.6},{:.6}",
            m.episode, m.steps, m.accumulated_reward, m.epsilon
        )
        .unwrap();
        for &id in &ids {
            write!(out, ",{:.6}", probability_for(m, id)).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Renders moving averages of the reward and per-goal success columns.
pub fn moving_average_csv(
    metrics: &[EpisodeMetrics],
    goals: &GoalSet,
    window: usize,
) -> Result<String, MetricsError> {
    let ids = goals.ids();
    let rewards: Vec<f64> = metrics.iter().map(|m| m.accumulated_reward).collect();
    let reward_ma = moving_average(&rewards, window)?;
    let mut prob_mas = Vec::with_capacity(ids.len());
    for &id in &ids {
        let series: Vec<f64> = metrics.iter().map(|m| probability_for(m, id)).collect();
        prob_mas.push(moving_average(&series, window)?);
    }
    let mut out = String::from("episode,accumulated_reward");
    for id in &ids {
        write!(out, ",{id}_success_prob").unwrap();
    }
    out.push('\n');
    for (i, m) in metrics.iter().enumerate() {
        write!(out, "{},{:.6}", m.episode, reward_ma[i]).unwrap();
        for ma in &prob_mas {
            write!(out, ",{:.6}", ma[i]).unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn emit_metrics(
    path: &Path,
    metrics: &[EpisodeMetrics],
    goals: &GoalSet,
) -> Result<(), MetricsError> {
    std::fs::write(path, metrics_to_csv(metrics, goals)).map_err(|source| MetricsError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes the greedy contribution schedule as `year,contribution` rows.
pub fn schedule_to_csv(schedule: &[f64]) -> String {
    let mut out = String::from("year,contribution\n");
    for (year, c) in schedule.iter().enumerate() {
        writeln!(out, "{year},{c:.2}").unwrap();
    }
    out
}
