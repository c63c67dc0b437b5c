//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Every key of
//! [`TrainConfig`] is accepted, plus `baseline_d` and `baseline_iters` for the
//! stand-alone NMF predictor. Later assignments override earlier ones, which
//! is how command-line overrides are layered over a file.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{GarecError, Result};
use crate::nmf::NmfConfig;
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub baseline: NmfConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        RunConfig {
            baseline: NmfConfig::baseline(train.seed),
            train,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| GarecError::InvalidConfig(format!("bad value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(GarecError::InvalidConfig(format!("bad boolean {value:?} for {key}"))),
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "learning_rate" => t.learning_rate = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "max_epochs" => t.max_epochs = parse(key, value)?,
            "patience" => t.patience = parse(key, value)?,
            "seed" => {
                t.seed = parse(key, value)?;
                self.baseline.seed = t.seed;
            }
            "freeze_factors" => t.freeze_factors = parse_bool(key, value)?,
            "cap" | "T" => t.cap = parse(key, value)?,
            "d" => t.d = parse(key, value)?,
            "d_out" => t.d_out = parse(key, value)?,
            "hidden1" => t.hidden1 = parse(key, value)?,
            "hidden2" => t.hidden2 = parse(key, value)?,
            "activation" => t.activation = value.parse()?,
            "separate_keys" => t.separate_keys = parse_bool(key, value)?,
            "validation_fraction" => t.validation_fraction = parse(key, value)?,
            "weight_decay" => t.weight_decay = parse(key, value)?,
            "threads" => t.threads = parse(key, value)?,
            "nmf_iters" => t.nmf_iters = parse(key, value)?,
            "nmf_rel_tol" => t.nmf_rel_tol = parse(key, value)?,
            "nmf_epsilon" => t.nmf_epsilon = parse(key, value)?,
            "baseline_d" => self.baseline.d = parse(key, value)?,
            "baseline_iters" => self.baseline.max_iters = parse(key, value)?,
            other => return Err(GarecError::InvalidConfig(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies every assignment in `text`.
    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (k, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| GarecError::Parse {
                line: k + 1,
                reason: format!("expected `key = value`, found {line:?}"),
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| GarecError::io(path, e))?;
        let mut cfg = RunConfig::default();
        cfg.apply_str(&text)?;
        Ok(cfg)
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| GarecError::InvalidConfig(format!("override {o:?} is not key=value")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.baseline.validate()
    }

    /// The effective configuration in the file syntax; parsing it back gives
    /// the same configuration.
    pub fn echo(&self) -> String {
        let t = &self.train;
        let pairs: Vec<(&str, String)> = vec![
            ("learning_rate", t.learning_rate.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("max_epochs", t.max_epochs.to_string()),
            ("patience", t.patience.to_string()),
            ("seed", t.seed.to_string()),
            ("freeze_factors", t.freeze_factors.to_string()),
            ("cap", t.cap.to_string()),
            ("d", t.d.to_string()),
            ("d_out", t.d_out.to_string()),
            ("hidden1", t.hidden1.to_string()),
            ("hidden2", t.hidden2.to_string()),
            ("activation", t.activation.to_string()),
            ("separate_keys", t.separate_keys.to_string()),
            ("validation_fraction", t.validation_fraction.to_string()),
            ("weight_decay", t.weight_decay.to_string()),
            ("threads", t.threads.to_string()),
            ("nmf_iters", t.nmf_iters.to_string()),
            ("nmf_rel_tol", t.nmf_rel_tol.to_string()),
            ("nmf_epsilon", t.nmf_epsilon.to_string()),
            ("baseline_d", self.baseline.d.to_string()),
            ("baseline_iters", self.baseline.max_iters.to_string()),
        ];
        pairs.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn echo_json(&self) -> serde_json::Value {
        let map = self
            .echo()
            .lines()
            .filter_map(|l| l.split_once(" = "))
            .map(|(k, v)| (k.to_string(), serde_json::Value::String(v.to_string())))
            .collect();
        serde_json::Value::Object(map)
    }
}
