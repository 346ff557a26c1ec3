//! Experiment configuration and the flat `key = value` config file format.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Global experiment parameters shared by every module.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Total number of users in the cell.
    pub n_users: usize,
    /// Per-slot activation probability of each user.
    pub activity_prob: f64,
    /// Pilot sequence length; also the number of orthogonal pilots available
    /// to the grant-based scheme.
    pub pilot_len: usize,
    /// Per-user pilot SNR in dB: one active user's received pilot energy over
    /// the whole pilot, divided by the per-symbol noise variance.
    pub per_user_snr_db: f64,
    /// Hard cap on AMP iterations.
    pub amp_iters: usize,
    /// Master seed for all random streams.
    pub seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            n_users: 2000,
            activity_prob: 0.05,
            pilot_len: 200,
            per_user_snr_db: 20.0,
            amp_iters: 25,
            seed: 1,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 {
            return Err(Error::Config("n_users must be at least 1".into()));
        }
        if !(self.activity_prob > 0.0 && self.activity_prob <= 1.0) {
            return Err(Error::Config(format!(
                "activity_prob must lie in (0, 1], got {}",
                self.activity_prob
            )));
        }
        if self.pilot_len == 0 {
            return Err(Error::Config("pilot_len must be at least 1".into()));
        }
        if self.amp_iters == 0 {
            return Err(Error::Config("amp_iters must be at least 1".into()));
        }
        if !self.per_user_snr_db.is_finite() {
            return Err(Error::Config("per_user_snr_db must be finite".into()));
        }
        Ok(())
    }

    /// Linear pilot energy scale: the factor applied to the transmitted pilot
    /// so that one active user's received pilot energy equals this multiple of
    /// the unit per-symbol noise variance.
    pub fn snr_linear(&self) -> f64 {
        10f64.powf(self.per_user_snr_db / 10.0)
    }

    /// Apply one config-file key. Returns false if the key is not a
    /// `SystemConfig` field (callers may layer their own keys on top).
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "n_users" => self.n_users = parse_field(key, value)?,
            "activity_prob" => self.activity_prob = parse_field(key, value)?,
            "pilot_len" => self.pilot_len = parse_field(key, value)?,
            "per_user_snr_db" => self.per_user_snr_db = parse_field(key, value)?,
            "amp_iters" => self.amp_iters = parse_field(key, value)?,
            "seed" => self.seed = parse_field(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

fn parse_field<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for key {key:?}")))
}

/// Parse flat `key = value` text: one pair per line, `#` starts a comment,
/// blank lines ignored. Later occurrences of a key override earlier ones.
pub fn parse_kv_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected `key = value`", lineno + 1))
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}
