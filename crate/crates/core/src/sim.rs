//! Slot-loop Monte Carlo engine: composes an activation policy with an
//! access protocol, maintains per-user AoI, and estimates the network
//! average AoI with a batch-means confidence interval.
//!
//! Slots are processed in chunks: activation is evolved sequentially (the
//! threshold policy carries state), the per-slot access rounds run in
//! parallel on their own random substreams, and the AoI ledger is then
//! advanced in slot order. Results are bit-identical regardless of worker
//! count.

use rand::Rng;
use rayon::prelude::*;

use crate::access::{grant_based_round, ProtocolKind, SlotOutcome};
use crate::amp::grant_free_round;
use crate::analysis::threshold_steady_state;
use crate::channel::{sample_activity, ActivityVector};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::rng::{slot_rng, StreamLane};
use crate::scheduling::{policy_step, IntervalState, ThresholdPolicy};

/// Access protocol run in each slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Protocol {
    GrantBased,
    GrantFree,
    /// Every attempt succeeds independently with this probability; decouples
    /// the AoI dynamics from the physical layer.
    FixedRho(f64),
}

impl Protocol {
    pub fn kind(&self) -> ProtocolKind {
        match self {
            Protocol::GrantBased => ProtocolKind::GrantBased,
            Protocol::GrantFree => ProtocolKind::GrantFree,
            Protocol::FixedRho(_) => ProtocolKind::FixedRho,
        }
    }
}

/// How users decide to transmit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    /// Independent per-slot activation with `cfg.activity_prob`.
    Bernoulli,
    /// Two-threshold policy; `cold_start` begins all intervals at 1 instead
    /// of warm-starting from the stationary interval distribution.
    Threshold {
        policy: ThresholdPolicy,
        cold_start: bool,
    },
}

/// One simulation request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSpec {
    pub protocol: Protocol,
    pub activation: Activation,
    /// Total slots, burn-in included.
    pub slots: u64,
    /// Leading slots excluded from all estimates.
    pub burn_in: u64,
}

impl SimSpec {
    fn validate(&self) -> Result<()> {
        if self.slots == 0 || self.burn_in >= self.slots {
            return Err(Error::Config(format!(
                "need slots > burn_in >= 0, got slots {} burn_in {}",
                self.slots, self.burn_in
            )));
        }
        if let Protocol::FixedRho(rho) = self.protocol {
            if !(0.0..=1.0).contains(&rho) {
                return Err(Error::Config(format!("rho must lie in [0, 1], got {rho}")));
            }
        }
        Ok(())
    }
}

/// Per-user AoI counters plus running accumulators.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AoiLedger {
    aoi: Vec<u64>,
    current_sum: u128,
    sum_aoi: u128,
    slots_counted: u64,
}

impl AoiLedger {
    /// All users start as if they had just been updated.
    pub fn new(n_users: usize) -> Self {
        AoiLedger {
            aoi: vec![1; n_users],
            current_sum: n_users as u128,
            sum_aoi: 0,
            slots_counted: 0,
        }
    }

    /// Advance one slot: successful users reset to AoI 1, everyone else
    /// ages by one. The slot enters the accumulators only when `record` is
    /// set (burn-in slots pass `false`).
    pub fn step(&mut self, outcome: &SlotOutcome, record: bool) {
        let mut reclaimed: u128 = 0;
        for &user in &outcome.succeeded {
            reclaimed += self.aoi[user] as u128;
            self.aoi[user] = 0;
        }
        for a in &mut self.aoi {
            *a += 1;
        }
        self.current_sum = self.current_sum + self.aoi.len() as u128 - reclaimed;
        if record {
            self.sum_aoi += self.current_sum;
            self.slots_counted += 1;
        }
    }

    pub fn aoi(&self) -> &[u64] {
        &self.aoi
    }

    /// Network mean AoI of the current slot.
    pub fn current_mean(&self) -> f64 {
        self.current_sum as f64 / self.aoi.len() as f64
    }

    /// Accumulated sum of AoI over counted slots and users.
    pub fn sum_aoi(&self) -> u128 {
        self.sum_aoi
    }

    pub fn slots_counted(&self) -> u64 {
        self.slots_counted
    }

    /// Average AoI over counted slots and users.
    pub fn average(&self) -> f64 {
        if self.slots_counted == 0 {
            return f64::NAN;
        }
        self.sum_aoi as f64 / (self.slots_counted as f64 * self.aoi.len() as f64)
    }
}

/// Summary of one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub aaoi_estimate: f64,
    /// Batch-means 95% half-width of the AAoI estimate.
    pub ci95: f64,
    /// Successes per attempt over the recorded slots.
    pub empirical_rho: f64,
    /// Attempts per user-slot over the recorded slots.
    pub empirical_activation: f64,
    /// Recorded (post burn-in) slots.
    pub slots: u64,
    pub seed: u64,
}

/// Per-slot trace record for verbose output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotTrace {
    pub slot: u64,
    pub active_count: usize,
    pub success_count: usize,
    pub mean_aoi: f64,
}

/// Success set of the fixed-success-probability channel: each active user
/// gets through independently with probability `rho`.
pub fn fixed_rho_round(rho: f64, act: &ActivityVector, rng: &mut impl Rng) -> SlotOutcome {
    let active = act.active_indices();
    let succeeded = active
        .iter()
        .copied()
        .filter(|_| rng.random::<f64>() < rho)
        .collect();
    SlotOutcome::new(active, succeeded, ProtocolKind::FixedRho)
}

/// Number of batches targeted by the batch-means CI estimate.
const CI_BATCHES: u64 = 20;

/// Slots evaluated per parallel chunk.
const CHUNK_SLOTS: u64 = 512;

/// Run one simulation to completion. See [`run_simulation_traced`] for the
/// variant that reports per-slot statistics.
pub fn run_simulation(cfg: &SystemConfig, spec: &SimSpec) -> Result<SimReport> {
    run_simulation_traced(cfg, spec, |_| {})
}

/// Run one simulation, invoking `on_slot` for every recorded slot.
pub fn run_simulation_traced(
    cfg: &SystemConfig,
    spec: &SimSpec,
    mut on_slot: impl FnMut(&SlotTrace),
) -> Result<SimReport> {
    cfg.validate()?;
    spec.validate()?;
    let seed = cfg.seed;
    let n_users = cfg.n_users;

    let mut interval_state = match spec.activation {
        Activation::Bernoulli => None,
        Activation::Threshold { policy, cold_start } => Some(if cold_start {
            IntervalState::cold_start(n_users)
        } else {
            let dist = threshold_steady_state(&policy);
            IntervalState::sample_from(
                n_users,
                &dist.probs,
                &mut slot_rng(seed, 0, StreamLane::Setup),
            )
        }),
    };

    let recorded = spec.slots - spec.burn_in;
    let batch_len = recorded.div_ceil(CI_BATCHES);
    let mut batch_means: Vec<f64> = Vec::new();
    let mut batch_acc = 0.0f64;
    let mut batch_count = 0u64;

    let mut ledger = AoiLedger::new(n_users);
    let mut attempts: u64 = 0;
    let mut successes: u64 = 0;

    let mut slot = 0u64;
    while slot < spec.slots {
        let chunk = CHUNK_SLOTS.min(spec.slots - slot);
        // Sequential pass: activation decisions.
        let activities: Vec<ActivityVector> = (slot..slot + chunk)
            .map(|t| {
                let mut rng = slot_rng(seed, t, StreamLane::Policy);
                match (&spec.activation, &mut interval_state) {
                    (Activation::Bernoulli, _) => sample_activity(cfg, &mut rng),
                    (Activation::Threshold { policy, .. }, Some(state)) => {
                        let (next, act) = policy_step(state, policy, &mut rng);
                        *state = next;
                        act
                    }
                    _ => unreachable!(),
                }
            })
            .collect();
        // Parallel pass: access rounds on per-slot substreams.
        let outcomes: Vec<Result<SlotOutcome>> = activities
            .par_iter()
            .enumerate()
            .map(|(offset, act)| {
                let t = slot + offset as u64;
                let mut rng = slot_rng(seed, t, StreamLane::Protocol);
                Ok(match spec.protocol {
                    Protocol::GrantBased => grant_based_round(cfg.pilot_len, act, &mut rng),
                    Protocol::GrantFree => grant_free_round(cfg, act, &mut rng)?,
                    Protocol::FixedRho(rho) => fixed_rho_round(rho, act, &mut rng),
                })
            })
            .collect();
        // Sequential pass: AoI accounting in slot order.
        for (offset, outcome) in outcomes.into_iter().enumerate() {
            let outcome = outcome?;
            let t = slot + offset as u64;
            let record = t >= spec.burn_in;
            ledger.step(&outcome, record);
            if record {
                attempts += outcome.active.len() as u64;
                successes += outcome.succeeded.len() as u64;
                let mean = ledger.current_mean();
                batch_acc += mean;
                batch_count += 1;
                if batch_count == batch_len {
                    batch_means.push(batch_acc / batch_count as f64);
                    batch_acc = 0.0;
                    batch_count = 0;
                }
                on_slot(&SlotTrace {
                    slot: t,
                    active_count: outcome.active.len(),
                    success_count: outcome.succeeded.len(),
                    mean_aoi: mean,
                });
            }
        }
        slot += chunk;
    }
    if batch_count > 0 {
        batch_means.push(batch_acc / batch_count as f64);
    }

    Ok(SimReport {
        aaoi_estimate: ledger.average(),
        ci95: batch_ci95(&batch_means),
        empirical_rho: if attempts > 0 {
            successes as f64 / attempts as f64
        } else {
            0.0
        },
        empirical_activation: attempts as f64 / (recorded as f64 * n_users as f64),
        slots: recorded,
        seed,
    })
}

fn batch_ci95(means: &[f64]) -> f64 {
    if means.len() < 2 {
        return 0.0;
    }
    let n = means.len() as f64;
    let mean = means.iter().sum::<f64>() / n;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1.0);
    1.96 * (var / n).sqrt()
}

/// Burn-in heuristic: ten times the expected AAoI from the closed form when
/// one exists; for grant-free protocols, ten times the closed form at the
/// success rate measured over a short pilot run.
pub fn default_burn_in(cfg: &SystemConfig, protocol: Protocol, activation: Activation) -> Result<u64> {
    let rho = match protocol {
        Protocol::FixedRho(rho) => rho,
        Protocol::GrantBased => {
            crate::access::grant_based_rho(cfg.n_users, cfg.pilot_len, cfg.activity_prob)?
        }
        Protocol::GrantFree => {
            let pilot = SimSpec {
                protocol,
                activation,
                slots: 128,
                burn_in: 0,
            };
            run_simulation(cfg, &pilot)?.empirical_rho
        }
    };
    let horizon = match activation {
        Activation::Bernoulli => {
            if cfg.activity_prob * rho > 0.0 {
                10.0 / (cfg.activity_prob * rho)
            } else {
                return Err(Error::Domain(
                    "update rate is zero; supply an explicit burn-in".into(),
                ));
            }
        }
        Activation::Threshold { policy, .. } => {
            if rho > 0.0 {
                10.0 * policy.force_thr() as f64 / rho
            } else {
                return Err(Error::Domain(
                    "measured success rate is zero; supply an explicit burn-in".into(),
                ));
            }
        }
    };
    Ok(horizon.ceil() as u64)
}
