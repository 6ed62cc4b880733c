//! Declarative run configuration: a line-based `section.key = value` text
//! format with comma-separated lists, no external parser. Unspecified keys
//! fall back to the built-in defaults; `dump` renders every key in a fixed
//! canonical order, so canonical files round-trip byte-identically.

use crate::heli::HeliParams;
use crate::sim::{Gains, SimOptions};
use crate::train::{Optimizer, ResidualNorm, TrainConfig};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config line {line}: missing '=' separator")]
    MissingSeparator { line: usize },
    #[error("config line {line}, key {key}: {reason}")]
    BadValue {
        line: usize,
        key: String,
        reason: String,
    },
    #[error("config line {line}: unknown key {key}")]
    UnknownKey { line: usize, key: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub heli: HeliParams,
    pub train: TrainConfig,
    pub gains: Gains,
    pub sim: SimOptions,
    pub grid_w1: Vec<f64>,
    pub grid_omega: Vec<f64>,
    pub output_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            heli: HeliParams::default(),
            train: TrainConfig::default(),
            gains: Gains::default(),
            sim: SimOptions::default(),
            grid_w1: vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
            grid_omega: vec![0.25, 0.5, 0.75, 1.0],
            output_dir: "out".to_string(),
        }
    }
}

fn parse_f64(line: usize, key: &str, value: &str) -> Result<f64, ConfigError> {
    value.trim().parse().map_err(|_| ConfigError::BadValue {
        line,
        key: key.to_string(),
        reason: format!("expected a number, got {value:?}"),
    })
}

fn parse_usize(line: usize, key: &str, value: &str) -> Result<usize, ConfigError> {
    value.trim().parse().map_err(|_| ConfigError::BadValue {
        line,
        key: key.to_string(),
        reason: format!("expected a nonnegative integer, got {value:?}"),
    })
}

fn parse_u64(line: usize, key: &str, value: &str) -> Result<u64, ConfigError> {
    value.trim().parse().map_err(|_| ConfigError::BadValue {
        line,
        key: key.to_string(),
        reason: format!("expected a nonnegative integer, got {value:?}"),
    })
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.trim() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(ConfigError::BadValue {
            line,
            key: key.to_string(),
            reason: format!("expected true or false, got {other:?}"),
        }),
    }
}

fn parse_list(line: usize, key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    value
        .split(',')
        .map(|part| {
            part.trim().parse().map_err(|_| ConfigError::BadValue {
                line,
                key: key.to_string(),
                reason: format!("bad list entry {part:?}"),
            })
        })
        .collect()
}

fn fmt_list(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v}"))
        .collect::<Vec<_>>()
        .join(", ")
}

impl RunConfig {
    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::MissingSeparator { line: line_no })?;
            let key = key.trim();
            let value = value.trim();
            cfg.apply(line_no, key, value)?;
        }
        Ok(cfg)
    }

    fn apply(&mut self, line: usize, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "heli.m" => self.heli.m = parse_f64(line, key, value)?,
            "heli.g" => self.heli.g = parse_f64(line, key, value)?,
            "heli.jx" => self.heli.jx = parse_f64(line, key, value)?,
            "heli.jy" => self.heli.jy = parse_f64(line, key, value)?,
            "heli.jz" => self.heli.jz = parse_f64(line, key, value)?,
            "heli.l_m" => self.heli.l_m = parse_f64(line, key, value)?,
            "heli.y_m" => self.heli.y_m = parse_f64(line, key, value)?,
            "heli.h_m" => self.heli.h_m = parse_f64(line, key, value)?,
            "heli.h_t" => self.heli.h_t = parse_f64(line, key, value)?,
            "heli.l_t" => self.heli.l_t = parse_f64(line, key, value)?,
            "heli.c_m_q" => self.heli.c_m_q = parse_f64(line, key, value)?,
            "heli.d_m_q" => self.heli.d_m_q = parse_f64(line, key, value)?,
            "heli.c_t_q" => self.heli.c_t_q = parse_f64(line, key, value)?,
            "heli.d_t_q" => self.heli.d_t_q = parse_f64(line, key, value)?,
            "heli.c_b_m" => self.heli.c_b_m = parse_f64(line, key, value)?,
            "heli.c_a_m" => self.heli.c_a_m = parse_f64(line, key, value)?,
            "exo.omega_set" => self.train.omega_set = parse_list(line, key, value)?,
            "train.radii" => self.train.radii = parse_list(line, key, value)?,
            "train.target_samples" => {
                self.train.target_samples = parse_usize(line, key, value)?
            }
            "train.epochs" => self.train.epochs = parse_usize(line, key, value)?,
            "train.lr_init" => self.train.lr_init = parse_f64(line, key, value)?,
            "train.lr_final" => self.train.lr_final = parse_f64(line, key, value)?,
            "train.lambda" => self.train.lambda = parse_f64(line, key, value)?,
            "train.batch_size" => self.train.batch_size = parse_usize(line, key, value)?,
            "train.seed" => self.train.seed = parse_u64(line, key, value)?,
            "train.optimizer" => {
                self.train.optimizer = match value {
                    "adam" => Optimizer::Adam,
                    "sgd" => Optimizer::Sgd,
                    other => {
                        return Err(ConfigError::BadValue {
                            line,
                            key: key.to_string(),
                            reason: format!("expected adam or sgd, got {other:?}"),
                        })
                    }
                }
            }
            "train.residual_norm" => {
                self.train.residual_norm = match value {
                    "squared" => ResidualNorm::Squared,
                    "abs" => ResidualNorm::Abs,
                    other => {
                        return Err(ConfigError::BadValue {
                            line,
                            key: key.to_string(),
                            reason: format!("expected squared or abs, got {other:?}"),
                        })
                    }
                }
            }
            "gains.kr1" => self.gains.kr1 = parse_f64(line, key, value)?,
            "gains.kr2" => self.gains.kr2 = parse_f64(line, key, value)?,
            "gains.kl1" => self.gains.kl1 = parse_f64(line, key, value)?,
            "gains.kl2" => self.gains.kl2 = parse_f64(line, key, value)?,
            "sim.horizon" => self.sim.horizon = parse_f64(line, key, value)?,
            "sim.dt" => self.sim.dt = parse_f64(line, key, value)?,
            "sim.divergence_threshold" => {
                self.sim.divergence_threshold = parse_f64(line, key, value)?
            }
            "sim.actuator_mode" => self.sim.actuator_mode = parse_bool(line, key, value)?,
            "sim.grid_w1" => self.grid_w1 = parse_list(line, key, value)?,
            "sim.grid_omega" => self.grid_omega = parse_list(line, key, value)?,
            "output.dir" => self.output_dir = value.to_string(),
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    /// Canonical serialization: every key, fixed order, shortest float form.
    pub fn dump(&self) -> String {
        let h = &self.heli;
        let t = &self.train;
        let g = &self.gains;
        let s = &self.sim;
        let optimizer = match t.optimizer {
            Optimizer::Adam => "adam",
            Optimizer::Sgd => "sgd",
        };
        let residual_norm = match t.residual_norm {
            ResidualNorm::Squared => "squared",
            ResidualNorm::Abs => "abs",
        };
        let mut out = String::new();
        let mut push = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        push("heli.m", format!("{}", h.m));
        push("heli.g", format!("{}", h.g));
        push("heli.jx", format!("{}", h.jx));
        push("heli.jy", format!("{}", h.jy));
        push("heli.jz", format!("{}", h.jz));
        push("heli.l_m", format!("{}", h.l_m));
        push("heli.y_m", format!("{}", h.y_m));
        push("heli.h_m", format!("{}", h.h_m));
        push("heli.h_t", format!("{}", h.h_t));
        push("heli.l_t", format!("{}", h.l_t));
        push("heli.c_m_q", format!("{}", h.c_m_q));
        push("heli.d_m_q", format!("{}", h.d_m_q));
        push("heli.c_t_q", format!("{}", h.c_t_q));
        push("heli.d_t_q", format!("{}", h.d_t_q));
        push("heli.c_b_m", format!("{}", h.c_b_m));
        push("heli.c_a_m", format!("{}", h.c_a_m));
        push("exo.omega_set", fmt_list(&t.omega_set));
        push("train.radii", fmt_list(&t.radii));
        push("train.target_samples", format!("{}", t.target_samples));
        push("train.epochs", format!("{}", t.epochs));
        push("train.lr_init", format!("{}", t.lr_init));
        push("train.lr_final", format!("{}", t.lr_final));
        push("train.lambda", format!("{}", t.lambda));
        push("train.batch_size", format!("{}", t.batch_size));
        push("train.seed", format!("{}", t.seed));
        push("train.optimizer", optimizer.to_string());
        push("train.residual_norm", residual_norm.to_string());
        push("gains.kr1", format!("{}", g.kr1));
        push("gains.kr2", format!("{}", g.kr2));
        push("gains.kl1", format!("{}", g.kl1));
        push("gains.kl2", format!("{}", g.kl2));
        push("sim.horizon", format!("{}", s.horizon));
        push("sim.dt", format!("{}", s.dt));
        push("sim.divergence_threshold", format!("{}", s.divergence_threshold));
        push("sim.actuator_mode", format!("{}", s.actuator_mode));
        push("sim.grid_w1", fmt_list(&self.grid_w1));
        push("sim.grid_omega", fmt_list(&self.grid_omega));
        push("output.dir", self.output_dir.clone());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_published_tables() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.heli.jx, 0.14241);
        assert_eq!(cfg.heli.m, 4.9);
        assert_eq!(cfg.train.epochs, 100);
        assert_eq!(cfg.train.lr_init, 1e-3);
        assert_eq!(cfg.train.lr_final, 1e-6);
        assert_eq!(cfg.gains.kr1, -2.0);
        assert_eq!(cfg.gains.kl1, -20.0);
        assert_eq!(cfg.sim.horizon, 30.0);
        assert_eq!(cfg.sim.dt, 0.01);
    }

    #[test]
    fn unspecified_keys_fall_back_to_defaults() {
        let cfg = RunConfig::parse("train.epochs = 7\n").unwrap();
        assert_eq!(cfg.train.epochs, 7);
        assert_eq!(cfg.heli.m, 4.9);
        assert_eq!(cfg.train.lr_init, 1e-3);
    }

    #[test]
    fn canonical_dump_round_trips_byte_identically() {
        let mut cfg = RunConfig::default();
        cfg.train.epochs = 42;
        cfg.train.omega_set = vec![0.5, 1.0];
        cfg.output_dir = "results".into();
        let dumped = cfg.dump();
        let parsed = RunConfig::parse(&dumped).unwrap();
        assert_eq!(parsed, cfg);
        assert_eq!(parsed.dump(), dumped);
    }

    #[test]
    fn errors_name_line_and_key() {
        let err = RunConfig::parse("heli.m = 4.9\ntrain.epochs = banana\n").unwrap_err();
        match err {
            ConfigError::BadValue { line, key, .. } => {
                assert_eq!(line, 2);
                assert_eq!(key, "train.epochs");
            }
            other => panic!("unexpected error {other:?}"),
        }
        let err = RunConfig::parse("nope.key = 1\n").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey { line: 1, .. }));
    }

    #[test]
    fn comments_and_blanks_are_ignored() {
        let cfg = RunConfig::parse("# comment\n\n  train.seed = 9\n").unwrap();
        assert_eq!(cfg.train.seed, 9);
    }
}
