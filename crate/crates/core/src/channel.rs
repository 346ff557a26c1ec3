//! Stochastic primitives: user activation and channel/pilot synthesis.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::SystemConfig;

/// Per-slot activity flags, one per user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivityVector {
    flags: Vec<bool>,
}

impl ActivityVector {
    pub fn from_flags(flags: Vec<bool>) -> Self {
        ActivityVector { flags }
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn is_active(&self, user: usize) -> bool {
        self.flags[user]
    }

    pub fn count_active(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    /// Indices of active users in ascending order.
    pub fn active_indices(&self) -> Vec<usize> {
        self.flags
            .iter()
            .enumerate()
            .filter_map(|(n, &f)| f.then_some(n))
            .collect()
    }
}

/// One slot's fading gains and pilot matrix.
///
/// The pilot matrix is stored column-major: column `n` is user `n`'s pilot,
/// normalized to exactly unit Euclidean norm.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    gains: Vec<Complex64>,
    pilots: Vec<Complex64>,
    pilot_len: usize,
}

impl ChannelRealization {
    pub fn n_users(&self) -> usize {
        self.gains.len()
    }

    pub fn pilot_len(&self) -> usize {
        self.pilot_len
    }

    /// Channel gain of one user.
    pub fn gain(&self, user: usize) -> Complex64 {
        self.gains[user]
    }

    pub fn gains(&self) -> &[Complex64] {
        &self.gains
    }

    /// User `n`'s pilot column.
    pub fn pilot_col(&self, user: usize) -> &[Complex64] {
        &self.pilots[user * self.pilot_len..(user + 1) * self.pilot_len]
    }
}

/// One draw of a circularly-symmetric complex Gaussian with the given variance.
pub fn complex_gaussian(rng: &mut impl Rng, variance: f64) -> Complex64 {
    let scale = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * scale, im * scale)
}

/// Draw each user's activity flag independently with probability
/// `cfg.activity_prob`.
pub fn sample_activity(cfg: &SystemConfig, rng: &mut impl Rng) -> ActivityVector {
    let eps = cfg.activity_prob;
    let flags = (0..cfg.n_users).map(|_| rng.random::<f64>() < eps).collect();
    ActivityVector { flags }
}

/// Draw one slot's channel realization: unit-variance complex Gaussian gains
/// and pilot columns sampled entrywise CN(0, 1/L), then renormalized to unit
/// norm.
pub fn sample_channels(cfg: &SystemConfig, rng: &mut impl Rng) -> ChannelRealization {
    let n = cfg.n_users;
    let l = cfg.pilot_len;
    let gains: Vec<Complex64> = (0..n).map(|_| complex_gaussian(rng, 1.0)).collect();
    let mut pilots = Vec::with_capacity(n * l);
    for _ in 0..n {
        let start = pilots.len();
        for _ in 0..l {
            pilots.push(complex_gaussian(rng, 1.0 / l as f64));
        }
        let norm = pilots[start..]
            .iter()
            .map(|c| c.norm_sqr())
            .sum::<f64>()
            .sqrt();
        // A zero-norm column has probability zero; guard anyway.
        if norm > 0.0 {
            for c in &mut pilots[start..] {
                *c /= norm;
            }
        } else {
            pilots[start] = Complex64::new(1.0, 0.0);
        }
    }
    ChannelRealization {
        gains,
        pilots,
        pilot_len: l,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{slot_rng, StreamLane};

    fn cfg(n_users: usize, activity_prob: f64, pilot_len: usize) -> SystemConfig {
        SystemConfig {
            n_users,
            activity_prob,
            pilot_len,
            ..Default::default()
        }
    }

    #[test]
    fn activity_probability_one_and_zero() {
        let mut rng = slot_rng(1, 0, StreamLane::Policy);
        let all = sample_activity(&cfg(5, 1.0, 10), &mut rng);
        assert_eq!(all.count_active(), 5);
        // activity_prob = 0 fails validation but the sampler itself is total.
        let none = sample_activity(
            &SystemConfig {
                n_users: 5,
                activity_prob: 0.0,
                ..Default::default()
            },
            &mut rng,
        );
        assert_eq!(none.count_active(), 0);
    }

    #[test]
    fn pilot_columns_have_unit_norm() {
        let mut rng = slot_rng(3, 0, StreamLane::Protocol);
        let chan = sample_channels(&cfg(40, 0.1, 16), &mut rng);
        for n in 0..40 {
            let norm_sq: f64 = chan.pilot_col(n).iter().map(|c| c.norm_sqr()).sum();
            assert!((norm_sq - 1.0).abs() < 1e-9, "column {n}: {norm_sq}");
        }
    }

    #[test]
    fn same_seed_same_realization() {
        let c = cfg(30, 0.2, 8);
        let a = sample_channels(&c, &mut slot_rng(7, 5, StreamLane::Protocol));
        let b = sample_channels(&c, &mut slot_rng(7, 5, StreamLane::Protocol));
        assert_eq!(a.gains(), b.gains());
        assert_eq!(a.pilot_col(29), b.pilot_col(29));
        let x = sample_activity(&c, &mut slot_rng(7, 5, StreamLane::Policy));
        let y = sample_activity(&c, &mut slot_rng(7, 5, StreamLane::Policy));
        assert_eq!(x, y);
    }

    #[test]
    fn gain_power_is_unit_on_average() {
        let mut rng = slot_rng(11, 0, StreamLane::Protocol);
        let chan = sample_channels(&cfg(2000, 0.05, 4), &mut rng);
        let mean_power: f64 =
            chan.gains().iter().map(|h| h.norm_sqr()).sum::<f64>() / 2000.0;
        assert!(
            (0.95..=1.05).contains(&mean_power),
            "mean |h|^2 = {mean_power}"
        );
    }

    #[test]
    fn activation_rate_converges() {
        // 4 * sqrt(eps (1-eps) / (N * M)) band around eps.
        let c = cfg(2000, 0.05, 4);
        let slots = 1000u64;
        let mut active_total = 0usize;
        for t in 0..slots {
            let act = sample_activity(&c, &mut slot_rng(2, t, StreamLane::Policy));
            active_total += act.count_active();
        }
        let rate = active_total as f64 / (2000.0 * slots as f64);
        let band = 4.0 * (0.05 * 0.95 / (2000.0 * slots as f64)).sqrt();
        assert!(
            (rate - 0.05).abs() <= band,
            "rate {rate} outside {band} of 0.05"
        );
    }
}
