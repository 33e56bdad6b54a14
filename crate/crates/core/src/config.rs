//! Run configuration: flat `key = value` text, one pair per line, `#`
//! comments. Unknown keys are rejected; missing keys take the defaults of
//! the two-arm juggling setup.

use std::fs;
use std::path::{Path, PathBuf};

use crate::cortex::CortexConfig;
use crate::env::EnvParams;
use crate::error::{Error, Result};
use crate::trainer::TrainConfig;

/// Everything one experiment needs. Instance `i` runs with seed
/// `seed + i`; the agent-graph shape (three sensory agents, two motor
/// units, five actions) is fixed by the task and not configurable here.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub cortex: CortexConfig,
    pub env: EnvParams,
    pub train: TrainConfig,
    pub n_instances: u32,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            cortex: CortexConfig::default(),
            env: EnvParams::default(),
            train: TrainConfig::default(),
            n_instances: 10,
            out_dir: PathBuf::from("out"),
            seed: 42,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.cortex.validate()?;
        self.env.validate()?;
        self.train.validate()?;
        if self.n_instances == 0 {
            return Err(Error::Config("n_instances must be >= 1".into()));
        }
        Ok(())
    }

    pub fn instance_seed(&self, instance: u32) -> u64 {
        self.seed.wrapping_add(u64::from(instance))
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

/// Parses `key = value` lines over the defaults, then enforces every config
/// invariant. Errors name the offending line.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {line_no}: expected key=value, got {raw:?}"))
        })?;
        let key = key.trim();
        let value = value.trim();
        apply_key(&mut cfg, key, value)
            .map_err(|e| Error::Config(format!("line {line_no}: {e}")))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn apply_key(cfg: &mut RunConfig, key: &str, value: &str) -> std::result::Result<(), String> {
    fn num<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
        value
            .parse::<T>()
            .map_err(|_| format!("invalid value for {key}: {value:?}"))
    }
    fn flag(key: &str, value: &str) -> std::result::Result<bool, String> {
        match value {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            _ => Err(format!("invalid boolean for {key}: {value:?}")),
        }
    }

    match key {
        // agent graph
        "d_m" => cfg.cortex.d_m = num(key, value)?,
        "hidden_width" => cfg.cortex.hidden_width = num(key, value)?,
        // environment (meters, seconds, m/s)
        "gravity" => cfg.env.gravity = num(key, value)?,
        "box_half_width" => cfg.env.box_half_width = num(key, value)?,
        "arm_start_height" => cfg.env.arm_start_height = num(key, value)?,
        "drop_height" => cfg.env.drop_height = num(key, value)?,
        "paddle_half_width" => cfg.env.paddle_half_width = num(key, value)?,
        "move_step" => cfg.env.move_step = num(key, value)?,
        "control_dt" => cfg.env.control_dt = num(key, value)?,
        "impulse_sigma" => cfg.env.impulse_sigma = num(key, value)?,
        "reward_floor" => cfg.env.reward_floor = num(key, value)?,
        "reward_bounce" => cfg.env.reward_bounce = num(key, value)?,
        "reward_move" => cfg.env.reward_move = num(key, value)?,
        "max_steps_per_session" => cfg.env.max_steps_per_session = num(key, value)?,
        // training
        "lr" => cfg.train.lr = num(key, value)?,
        "gamma" => cfg.train.gamma = num(key, value)?,
        "temperature" => cfg.train.temperature = num(key, value)?,
        "epoch_len" => cfg.train.epoch_len = num(key, value)?,
        "total_sessions" => cfg.train.total_sessions = num(key, value)?,
        "learn_in_greedy" => cfg.train.learn_in_greedy = flag(key, value)?,
        // harness
        "n_instances" => cfg.n_instances = num(key, value)?,
        "seed" => cfg.seed = num(key, value)?,
        "out_dir" => cfg.out_dir = PathBuf::from(value),
        _ => return Err(format!("unknown key {key:?}")),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_full_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.n_instances, 10);
        assert_eq!(cfg.train.total_sessions, 5000);
        assert_eq!(cfg.cortex.d_m, 5);
        assert_eq!(cfg.cortex.obs_dims, vec![2, 4, 2]);
    }

    #[test]
    fn out_of_range_gamma_cites_invariant() {
        let err = parse_config("gamma = 1.5").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("0 < gamma < 1"), "unexpected message: {msg}");
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn single_override_keeps_other_defaults() {
        let cfg = parse_config("impulse_sigma = 0.25\n").unwrap();
        assert_eq!(cfg.env.impulse_sigma, 0.25);
        let mut expect = RunConfig::default();
        expect.env.impulse_sigma = 0.25;
        assert_eq!(cfg, expect);
    }

    #[test]
    fn unknown_key_names_line() {
        let err = parse_config("gravity = 9.81\nbogus = 3\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
        assert!(msg.contains("bogus"), "{msg}");
    }

    #[test]
    fn malformed_value_names_line_and_key() {
        let err = parse_config("lr = fast").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 1") && msg.contains("lr"), "{msg}");
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let cfg = parse_config("# a comment\n\nseed = 9  # trailing comment\n").unwrap();
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn epoch_len_must_divide_total_sessions() {
        let err = parse_config("total_sessions = 250\nepoch_len = 100\n").unwrap_err();
        assert!(err.to_string().contains("divide"), "{err}");
    }

    #[test]
    fn instance_seed_derivation() {
        let cfg = parse_config("seed = 100").unwrap();
        assert_eq!(cfg.instance_seed(0), 100);
        assert_eq!(cfg.instance_seed(7), 107);
    }
}
