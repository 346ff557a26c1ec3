//! Per-user activation policies: plain Bernoulli activation is handled by
//! [`crate::channel::sample_activity`]; this module adds the two-threshold
//! policy that forces users to sleep right after an attempt and forces an
//! attempt once they have been silent too long.

use rand::Rng;

use crate::channel::ActivityVector;
use crate::error::{Error, Result};

/// Two-threshold activation policy.
///
/// A user whose inactivity interval is at most `sleep_thr` stays silent, one
/// strictly between the thresholds activates with `base_prob`, and one at
/// `force_thr` transmits unconditionally.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdPolicy {
    sleep_thr: u32,
    force_thr: u32,
    base_prob: f64,
}

impl ThresholdPolicy {
    pub fn new(sleep_thr: u32, force_thr: u32, base_prob: f64) -> Result<Self> {
        if sleep_thr >= force_thr {
            return Err(Error::Config(format!(
                "sleep_thr {sleep_thr} must be below force_thr {force_thr}"
            )));
        }
        if !(base_prob > 0.0 && base_prob < 1.0) {
            return Err(Error::Config(format!(
                "base_prob must lie in (0, 1), got {base_prob}"
            )));
        }
        Ok(ThresholdPolicy {
            sleep_thr,
            force_thr,
            base_prob,
        })
    }

    pub fn sleep_thr(&self) -> u32 {
        self.sleep_thr
    }

    pub fn force_thr(&self) -> u32 {
        self.force_thr
    }

    pub fn base_prob(&self) -> f64 {
        self.base_prob
    }
}

/// Activation probability of a user whose inactivity interval is `interval`.
pub fn activity_prob_at(interval: u32, pol: &ThresholdPolicy) -> Result<f64> {
    if interval == 0 || interval > pol.force_thr {
        return Err(Error::Domain(format!(
            "interval {interval} outside 1..={}",
            pol.force_thr
        )));
    }
    Ok(if interval <= pol.sleep_thr {
        0.0
    } else if interval < pol.force_thr {
        pol.base_prob
    } else {
        1.0
    })
}

/// Per-user inactivity intervals: slots elapsed since each user's last
/// transmission attempt. Intervals live in `1..=force_thr`; the forced
/// attempt at `force_thr` keeps larger values from ever occurring.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntervalState {
    intervals: Vec<u32>,
}

impl IntervalState {
    /// All users start as if they had just transmitted.
    pub fn cold_start(n_users: usize) -> Self {
        IntervalState {
            intervals: vec![1; n_users],
        }
    }

    pub fn from_intervals(intervals: Vec<u32>, pol: &ThresholdPolicy) -> Result<Self> {
        if let Some(bad) = intervals
            .iter()
            .find(|&&t| t == 0 || t > pol.force_thr)
        {
            return Err(Error::Domain(format!(
                "interval {bad} outside 1..={}",
                pol.force_thr
            )));
        }
        Ok(IntervalState { intervals })
    }

    /// Draw every user's initial interval from the distribution `dist` over
    /// intervals `1..=dist.len()` (normally the stationary distribution of
    /// the interval chain, which removes burn-in bias).
    pub fn sample_from(n_users: usize, dist: &[f64], rng: &mut impl Rng) -> Self {
        let total: f64 = dist.iter().sum();
        let intervals = (0..n_users)
            .map(|_| {
                let mut u = rng.random::<f64>() * total;
                for (idx, &p) in dist.iter().enumerate() {
                    u -= p;
                    if u <= 0.0 {
                        return idx as u32 + 1;
                    }
                }
                dist.len() as u32
            })
            .collect();
        IntervalState { intervals }
    }

    pub fn intervals(&self) -> &[u32] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }
}

/// Advance every user by one slot: activate with the interval-dependent
/// probability, reset the interval of users that transmitted, increment the
/// rest.
pub fn policy_step(
    state: &IntervalState,
    pol: &ThresholdPolicy,
    rng: &mut impl Rng,
) -> (IntervalState, ActivityVector) {
    let mut next = Vec::with_capacity(state.len());
    let mut flags = Vec::with_capacity(state.len());
    for &t in &state.intervals {
        let p = if t <= pol.sleep_thr {
            0.0
        } else if t < pol.force_thr {
            pol.base_prob
        } else {
            1.0
        };
        // Draw even for p in {0, 1} so each user consumes exactly one
        // uniform, keeping streams aligned across policies.
        let active = rng.random::<f64>() < p;
        flags.push(active);
        next.push(if active { 1 } else { t + 1 });
    }
    (IntervalState { intervals: next }, ActivityVector::from_flags(flags))
}
