//! Plain-text checkpoint persistence.
//!
//! The format is line-oriented and versioned: a header line, the training
//! step counter, the agent configuration, then each layer's dimensions and
//! row-major parameters. Floats are written with Rust's shortest
//! round-tripping representation, so a load reproduces the saved network
//! bit for bit. A trailing `end` sentinel catches truncation.

use crate::dqn::{Activation, AgentConfig, DenseLayer, QNetwork};
use crate::training::{Checkpoint, CHECKPOINT_FORMAT_VERSION};
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

const HEADER: &str = "goalplan-checkpoint v1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("incompatible checkpoint: expected header '{HEADER}', found '{0}'")]
    VersionMismatch(String),
    #[error("corrupt checkpoint: {0}")]
    Integrity(String),
}

/// Serializes a checkpoint to its text form.
pub fn checkpoint_to_string(checkpoint: &Checkpoint) -> String {
    let mut out = String::new();
    let cfg = &checkpoint.agent_config;
    writeln!(out, "{HEADER}").unwrap();
    writeln!(out, "train_steps {}", checkpoint.train_steps).unwrap();
    writeln!(out, "gamma {}", cfg.gamma).unwrap();
    writeln!(out, "learning_rate {}", cfg.learning_rate).unwrap();
    writeln!(out, "batch_size {}", cfg.batch_size).unwrap();
    writeln!(out, "target_sync_period {}", cfg.target_sync_period).unwrap();
    writeln!(out, "warmup_transitions {}", cfg.warmup_transitions).unwrap();
    writeln!(out, "replay_capacity {}", cfg.replay_capacity).unwrap();
    write!(out, "hidden_sizes").unwrap();
    for h in &cfg.hidden_sizes {
        write!(out, " {h}").unwrap();
    }
    out.push('\n');
    let net = &checkpoint.network;
    writeln!(out, "input_dim {}", net.input_dim()).unwrap();
    writeln!(out, "layers {}", net.layers().len()).unwrap();
    for layer in net.layers() {
        writeln!(
            out,
            "layer {} {} {} {}",
            layer.in_dim(),
            layer.out_dim(),
            match layer.activation() {
                Activation::Relu => "relu",
                Activation::Identity => "identity",
            },
            if layer.has_bias() { "bias" } else { "nobias" },
        )
        .unwrap();
        write!(out, "weights").unwrap();
        for w in layer.weights() {
            debug_assert!(w.is_finite());
            write!(out, " {w}").unwrap();
        }
        out.push('\n');
        if layer.has_bias() {
            write!(out, "biases").unwrap();
            for b in layer.biases() {
                write!(out, " {b}").unwrap();
            }
            out.push('\n');
        }
    }
    out.push_str("end\n");
    out
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<(), CheckpointError> {
    std::fs::write(path, checkpoint_to_string(checkpoint)).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let text = std::fs::read_to_string(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    checkpoint_from_str(&text)
}

struct Lines<'a> {
    inner: std::str::Lines<'a>,
}

impl<'a> Lines<'a> {
    fn next(&mut self, what: &str) -> Result<&'a str, CheckpointError> {
        self.inner
            .next()
            .ok_or_else(|| CheckpointError::Integrity(format!("file ends before {what}")))
    }

    /// Reads a `key value...` line and returns the value fields.
    fn field(&mut self, key: &str) -> Result<Vec<&'a str>, CheckpointError> {
        let line = self.next(key)?;
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some(k) if k == key => Ok(parts.collect()),
            _ => Err(CheckpointError::Integrity(format!(
                "expected '{key} ...', found '{line}'"
            ))),
        }
    }
}

fn parse_one<T: std::str::FromStr>(fields: &[&str], key: &str) -> Result<T, CheckpointError> {
    if fields.len() != 1 {
        return Err(CheckpointError::Integrity(format!(
            "field '{key}' expects one value, found {}",
            fields.len()
        )));
    }
    fields[0]
        .parse()
        .map_err(|_| CheckpointError::Integrity(format!("cannot parse '{key}' value")))
}

fn parse_floats(fields: &[&str], key: &str, expected: usize) -> Result<Vec<f64>, CheckpointError> {
    if fields.len() != expected {
        return Err(CheckpointError::Integrity(format!(
            "field '{key}' expects {expected} values, found {}",
            fields.len()
        )));
    }
    fields
        .iter()
        .map(|s| {
            s.parse()
                .map_err(|_| CheckpointError::Integrity(format!("cannot parse '{key}' value")))
        })
        .collect()
}

/// Parses the text form produced by [`checkpoint_to_string`].
pub fn checkpoint_from_str(text: &str) -> Result<Checkpoint, CheckpointError> {
    let mut lines = Lines {
        inner: text.lines(),
    };
    let header = lines.next("header")?;
    if header != HEADER {
        return Err(CheckpointError::VersionMismatch(header.to_string()));
    }
    let train_steps = parse_one(&lines.field("train_steps")?, "train_steps")?;
    let gamma = parse_one(&lines.field("gamma")?, "gamma")?;
    let learning_rate = parse_one(&lines.field("learning_rate")?, "learning_rate")?;
    let batch_size = parse_one(&lines.field("batch_size")?, "batch_size")?;
    let target_sync_period = parse_one(&lines.field("target_sync_period")?, "target_sync_period")?;
    let warmup_transitions = parse_one(&lines.field("warmup_transitions")?, "warmup_transitions")?;
    let replay_capacity = parse_one(&lines.field("replay_capacity")?, "replay_capacity")?;
    let hidden_sizes = lines
        .field("hidden_sizes")?
        .iter()
        .map(|s| {
            s.parse()
                .map_err(|_| CheckpointError::Integrity("cannot parse hidden size".into()))
        })
        .collect::<Result<Vec<usize>, _>>()?;
    let input_dim: usize = parse_one(&lines.field("input_dim")?, "input_dim")?;
    let n_layers: usize = parse_one(&lines.field("layers")?, "layers")?;

    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let spec = lines.field("layer")?;
        if spec.len() != 4 {
            return Err(CheckpointError::Integrity(format!(
                "layer line expects 4 fields, found {}",
                spec.len()
            )));
        }
        let in_dim: usize = parse_one(&spec[0..1], "layer in_dim")?;
        let out_dim: usize = parse_one(&spec[1..2], "layer out_dim")?;
        let activation = match spec[2] {
            "relu" => Activation::Relu,
            "identity" => Activation::Identity,
            other => {
                return Err(CheckpointError::Integrity(format!(
                    "unknown activation '{other}'"
                )))
            }
        };
        let has_bias = match spec[3] {
            "bias" => true,
            "nobias" => false,
            other => {
                return Err(CheckpointError::Integrity(format!(
                    "unknown bias flag '{other}'"
                )))
            }
        };
        let weights = parse_floats(&lines.field("weights")?, "weights", in_dim * out_dim)?;
        let biases = if has_bias {
            parse_floats(&lines.field("biases")?, "biases", out_dim)?
        } else {
            Vec::new()
        };
        layers.push(DenseLayer::from_parts(
            in_dim, out_dim, weights, biases, activation,
        ));
    }
    if lines.next("end sentinel")? != "end" {
        return Err(CheckpointError::Integrity("missing end sentinel".into()));
    }
    if layers.is_empty() {
        return Err(CheckpointError::Integrity("checkpoint has no layers".into()));
    }

    Ok(Checkpoint {
        format_version: CHECKPOINT_FORMAT_VERSION,
        agent_config: AgentConfig {
            gamma,
            learning_rate,
            batch_size,
            target_sync_period,
            warmup_transitions,
            hidden_sizes,
            replay_capacity,
        },
        train_steps,
        network: QNetwork::from_layers(input_dim, layers),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use tempfile::tempdir;

    fn sample_checkpoint() -> Checkpoint {
        let mut rng = RngStream::new(5);
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            agent_config: AgentConfig::default(),
            train_steps: 12_345,
            network: QNetwork::mlp(17, &[8, 8], crate::env::N_ACTIONS, &mut rng),
        }
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("checkpoint.txt");
        let original = sample_checkpoint();
        save_checkpoint(&path, &original).unwrap();
        let restored = load_checkpoint(&path).unwrap();
        assert_eq!(restored.train_steps, original.train_steps);
        assert_eq!(restored.agent_config, original.agent_config);
        let before = original.network.params();
        let after = restored.network.params();
        assert_eq!(before.len(), after.len());
        for (a, b) in before.iter().zip(&after) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn wrong_version_is_rejected() {
        let text = checkpoint_to_string(&sample_checkpoint())
            .replace("goalplan-checkpoint v1", "goalplan-checkpoint v9");
        assert!(matches!(
            checkpoint_from_str(&text),
            Err(CheckpointError::VersionMismatch(_))
        ));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let text = checkpoint_to_string(&sample_checkpoint());
        // Drop the sentinel and the last parameter line.
        let cut = text.rfind("biases").unwrap();
        assert!(matches!(
            checkpoint_from_str(&text[..cut]),
            Err(CheckpointError::Integrity(_))
        ));
    }

    #[test]
    fn tabular_networks_roundtrip_too() {
        let mut net = QNetwork::tabular(6, crate::env::N_ACTIONS);
        let params: Vec<f64> = (0..net.param_count()).map(|i| i as f64 * 0.125 - 3.0).collect();
        net.set_params(&params);
        let checkpoint = Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            agent_config: AgentConfig::default(),
            train_steps: 0,
            network: net,
        };
        let restored = checkpoint_from_str(&checkpoint_to_string(&checkpoint)).unwrap();
        assert_eq!(restored.network.params(), params);
        assert!(!restored.network.layers()[0].has_bias());
    }
}
