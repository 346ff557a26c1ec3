//! Effective run settings: built-in defaults, overridden by the config
//! file, overridden by command-line flags.

use std::path::Path;

use anyhow::{bail, Context, Result};
use aoisim_core::analysis::solve_base_prob;
use aoisim_core::config::parse_kv_text;
use aoisim_core::scheduling::ThresholdPolicy;
use aoisim_core::sim::{Activation, Protocol};
use aoisim_core::SystemConfig;

use crate::{BaseArgs, PolicyArg, ProtocolArg};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub cfg: SystemConfig,
    pub protocol: Option<ProtocolChoice>,
    pub policy: PolicyChoice,
    pub sleep_thr: Option<u32>,
    pub force_thr: Option<u32>,
    pub base_prob: Option<f64>,
    pub cold_start: bool,
    pub rho: Option<f64>,
    pub slots: Option<u64>,
    pub burn_in: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolChoice {
    GrantBased,
    GrantFree,
    FixedRho,
}

impl ProtocolChoice {
    pub fn label(self) -> &'static str {
        match self {
            ProtocolChoice::GrantBased => "grant_based",
            ProtocolChoice::GrantFree => "grant_free",
            ProtocolChoice::FixedRho => "fixed_rho",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum PolicyChoice {
    #[default]
    Bernoulli,
    Threshold,
}

impl Settings {
    /// Built-in defaults plus the config file, when given.
    pub fn load(config_path: Option<&Path>, seed: Option<u64>) -> Result<Self> {
        let mut settings = Settings::default();
        if let Some(path) = config_path {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config file {}", path.display()))?;
            let kv = parse_kv_text(&text)?;
            for (key, value) in &kv {
                if settings.cfg.apply_kv(key, value)? {
                    continue;
                }
                settings.apply_extra_key(key, value)?;
            }
        }
        if let Some(seed) = seed {
            settings.cfg.seed = seed;
        }
        Ok(settings)
    }

    fn apply_extra_key(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "protocol" => {
                self.protocol = Some(match value {
                    "grant_based" | "grant-based" => ProtocolChoice::GrantBased,
                    "grant_free" | "grant-free" => ProtocolChoice::GrantFree,
                    "fixed_rho" | "fixed-rho" => ProtocolChoice::FixedRho,
                    _ => bail!("config key protocol: unknown value {value:?}"),
                })
            }
            "policy" => {
                self.policy = match value {
                    "bernoulli" => PolicyChoice::Bernoulli,
                    "threshold" => PolicyChoice::Threshold,
                    _ => bail!("config key policy: unknown value {value:?}"),
                }
            }
            "sleep_thr" => self.sleep_thr = Some(parse(key, value)?),
            "force_thr" => self.force_thr = Some(parse(key, value)?),
            "base_prob" => self.base_prob = Some(parse(key, value)?),
            "cold_start" => self.cold_start = parse(key, value)?,
            "rho" => self.rho = Some(parse(key, value)?),
            "slots" => self.slots = Some(parse(key, value)?),
            "burn_in" => self.burn_in = Some(parse(key, value)?),
            _ => bail!("unknown config key {key:?}"),
        }
        Ok(())
    }

    /// Layer shared command-line flags on top.
    pub fn apply_base(&mut self, args: &BaseArgs) {
        if let Some(n) = args.n_users {
            self.cfg.n_users = n;
        }
        if let Some(eps) = args.activity_prob {
            self.cfg.activity_prob = eps;
        }
        if let Some(l) = args.pilot_len {
            self.cfg.pilot_len = l;
        }
        if let Some(snr) = args.per_user_snr_db {
            self.cfg.per_user_snr_db = snr;
        }
        if let Some(iters) = args.amp_iters {
            self.cfg.amp_iters = iters;
        }
        if let Some(rho) = args.rho {
            self.rho = Some(rho);
        }
        if let Some(slots) = args.slots {
            self.slots = Some(slots);
        }
        if let Some(burn_in) = args.burn_in {
            self.burn_in = Some(burn_in);
        }
        if let Some(policy) = args.policy {
            self.policy = match policy {
                PolicyArg::Bernoulli => PolicyChoice::Bernoulli,
                PolicyArg::Threshold => PolicyChoice::Threshold,
            };
        }
        if let Some(sleep) = args.sleep {
            self.sleep_thr = Some(sleep);
            self.policy = PolicyChoice::Threshold;
        }
        if let Some(force) = args.force {
            self.force_thr = Some(force);
            self.policy = PolicyChoice::Threshold;
        }
        if let Some(base) = args.base_prob {
            self.base_prob = Some(base);
        }
        if args.cold_start {
            self.cold_start = true;
        }
    }

    pub fn protocol_from_arg(&self, arg: Option<ProtocolArg>) -> Result<ProtocolChoice> {
        arg.map(|p| match p {
            ProtocolArg::GrantBased => ProtocolChoice::GrantBased,
            ProtocolArg::GrantFree => ProtocolChoice::GrantFree,
            ProtocolArg::FixedRho => ProtocolChoice::FixedRho,
        })
        .or(self.protocol)
        .context("no protocol selected: pass --protocol or set it in the config file")
    }

    /// Concrete protocol, pulling the success probability for fixed-rho.
    pub fn build_protocol(&self, choice: ProtocolChoice) -> Result<Protocol> {
        Ok(match choice {
            ProtocolChoice::GrantBased => Protocol::GrantBased,
            ProtocolChoice::GrantFree => Protocol::GrantFree,
            ProtocolChoice::FixedRho => {
                let rho = self
                    .rho
                    .context("the fixed-rho protocol needs --rho (or config key rho)")?;
                Protocol::FixedRho(rho)
            }
        })
    }

    /// Resolve the threshold policy from the configured thresholds, solving
    /// the base probability against `activity_prob` unless given explicitly.
    pub fn threshold_policy(&self) -> Result<ThresholdPolicy> {
        let sleep = self
            .sleep_thr
            .context("threshold policy needs --sleep (or config key sleep_thr)")?;
        let force = self
            .force_thr
            .context("threshold policy needs --force (or config key force_thr)")?;
        let base = match self.base_prob {
            Some(base) => base,
            None => {
                let target = self.cfg.activity_prob;
                solve_base_prob(sleep, force, target, 1e-6)
                    .with_context(|| {
                        format!(
                            "pair ({sleep}, {force}) cannot hold the activation \
                             probability at {target}"
                        )
                    })?
                    .base_prob
            }
        };
        Ok(ThresholdPolicy::new(sleep, force, base)?)
    }

    /// Concrete activation policy.
    pub fn build_activation(&self) -> Result<Activation> {
        Ok(match self.policy {
            PolicyChoice::Bernoulli => Activation::Bernoulli,
            PolicyChoice::Threshold => Activation::Threshold {
                policy: self.threshold_policy()?,
                cold_start: self.cold_start,
            },
        })
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| anyhow::anyhow!("bad value {value:?} for config key {key:?}"))
}
