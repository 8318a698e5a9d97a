//! Training configuration as `key = value` text.

use std::fmt::Write as _;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub size: usize,
    pub filters: usize,
    pub seed: u64,
    pub batch_size: usize,
    pub bp_rounds: usize,

    pub stage0_size: usize,
    pub stage0_samples: usize,
    pub stage0_k_min: f64,
    pub stage0_k_max: f64,
    pub stage0_lr: f64,
    pub stage0_epochs: usize,
    pub stage0_holdout: f64,

    pub train_p: f64,
    pub dense_lr: f64,
    pub dense_batches: usize,
    pub global_lr: f64,
    pub global_batches: usize,

    pub calib_rate: f64,
    pub calib_lr: f64,
    pub calib_batches: usize,
    /// Rate the site variables start from; also the baseline input.
    pub calib_initial_p: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            size: 16,
            filters: 64,
            seed: 1,
            batch_size: 50,
            bp_rounds: 7,
            stage0_size: 16,
            stage0_samples: 80_000,
            stage0_k_min: 0.7,
            stage0_k_max: 7.0,
            stage0_lr: 7e-4,
            stage0_epochs: 4,
            stage0_holdout: 0.1,
            train_p: 0.09,
            dense_lr: 1e-3,
            dense_batches: 1000,
            global_lr: 7e-5,
            global_batches: 3000,
            calib_rate: 0.16,
            calib_lr: 2e-4,
            calib_batches: 4500,
            calib_initial_p: 0.09,
        }
    }
}

macro_rules! fields {
    ($m:ident) => {
        $m!(size, filters, seed, batch_size, bp_rounds, stage0_size, stage0_samples, stage0_k_min,
            stage0_k_max, stage0_lr, stage0_epochs, stage0_holdout, train_p, dense_lr, dense_batches,
            global_lr, global_batches, calib_rate, calib_lr, calib_batches, calib_initial_p)
    };
}

impl TrainConfig {
    /// Applies one `key = value` pair.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        macro_rules! apply {
            ($($f:ident),*) => {
                match key {
                    $(stringify!($f) => {
                        self.$f = value.parse().map_err(|_| Error::Config(format!("bad value for {key}: {value}")))?;
                    })*
                    _ => return Err(Error::Config(format!("unknown key: {key}"))),
                }
            };
        }
        fields!(apply);
        Ok(())
    }

    /// Every field, one `key = value` line each, in declaration order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        macro_rules! emit {
            ($($f:ident),*) => {
                $( writeln!(s, "{} = {}", stringify!($f), self.$f).unwrap(); )*
            };
        }
        fields!(emit);
        s
    }

    /// Parses text starting from the defaults. Keys outside this config are
    /// returned untouched so callers can layer their own settings.
    pub fn parse_lenient(text: &str) -> Result<(Self, Vec<(String, String)>)> {
        let mut cfg = Self::default();
        let mut rest = Vec::new();
        for (key, value) in parse_pairs(text)? {
            match cfg.set(&key, &value) {
                Err(Error::Config(msg)) if msg.starts_with("unknown key") => rest.push((key, value)),
                other => other?,
            }
        }
        cfg.validate()?;
        Ok((cfg, rest))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let (cfg, rest) = Self::parse_lenient(text)?;
        if let Some((k, _)) = rest.first() {
            return Err(Error::Config(format!("unknown key: {k}")));
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("size", self.size as f64),
            ("filters", self.filters as f64),
            ("batch_size", self.batch_size as f64),
            ("bp_rounds", self.bp_rounds as f64),
            ("stage0_samples", self.stage0_samples as f64),
            ("stage0_lr", self.stage0_lr),
            ("dense_lr", self.dense_lr),
            ("global_lr", self.global_lr),
            ("calib_lr", self.calib_lr),
            ("train_p", self.train_p),
            ("calib_initial_p", self.calib_initial_p),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be at least 2 for batch normalization".into()));
        }
        if !(self.stage0_k_min < self.stage0_k_max) {
            return Err(Error::Config("stage0_k_min must be below stage0_k_max".into()));
        }
        if !(0.0..1.0).contains(&self.stage0_holdout) {
            return Err(Error::Config("stage0_holdout must lie in [0, 1)".into()));
        }
        for (name, p) in [("train_p", self.train_p), ("calib_rate", self.calib_rate), ("calib_initial_p", self.calib_initial_p)] {
            if !(0.0..0.5).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 0.5)")));
            }
        }
        Ok(())
    }
}

/// `key = value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}
