//! Grant-free activity detection: received-pilot synthesis and approximate
//! message passing with a Bernoulli-Gaussian posterior-mean denoiser.
//!
//! The recursion runs on the noise-normalized observation `y / sqrt(xi)`,
//! where `xi` is the configured pilot energy scale, so the denoiser prior is
//! the unit-variance channel gain switched on with the activation
//! probability. Each iteration applies the matched filter per user, shrinks
//! it through the denoiser, and corrects the residual with the Onsager term
//! built from the mean denoiser divergence.

use num_complex::Complex64;
use rand::Rng;

use crate::access::{ProtocolKind, SlotOutcome};
use crate::channel::{complex_gaussian, sample_channels, ActivityVector, ChannelRealization};
use crate::config::SystemConfig;
use crate::error::{Error, Result};

/// Prior variance of an active user's gain (unit-variance channels).
const PRIOR_GAIN_VARIANCE: f64 = 1.0;

/// Posterior-activity cutoff of the detection rule.
pub const DETECTION_THRESHOLD: f64 = 0.5;

/// Relative residual change below which the iteration stops early.
const EARLY_STOP_TOL: f64 = 1e-8;

/// Numerical floor on the effective noise variance estimate.
const TAU_SQ_FLOOR: f64 = 1e-12;

/// One denoiser evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenoiserOutput {
    /// Posterior mean of the signal given the matched-filter observation.
    pub value: Complex64,
    /// Posterior probability that the user is active.
    pub activity_posterior: f64,
    /// Wirtinger derivative of the denoiser with respect to its input,
    /// averaged into the Onsager correction. Real for this denoiser.
    pub divergence: f64,
}

/// Bernoulli-Gaussian MMSE denoiser: posterior mean of `X` given
/// `X + tau * W = r` with `W ~ CN(0, 1)` under the prior
/// `X ~ eps * CN(0, beta) + (1 - eps) * delta_0`.
pub fn mmse_denoise(r: Complex64, tau_sq: f64, eps: f64, beta: f64) -> Result<DenoiserOutput> {
    if tau_sq <= 0.0 || tau_sq.is_nan() {
        return Err(Error::Domain(format!(
            "tau_sq must be positive, got {tau_sq}"
        )));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::Domain(format!("eps must lie in (0, 1], got {eps}")));
    }
    if beta <= 0.0 || beta.is_nan() {
        return Err(Error::Domain(format!("beta must be positive, got {beta}")));
    }
    let wiener = beta / (beta + tau_sq);
    let u = r.norm_sqr();
    let gamma = beta / (tau_sq * (beta + tau_sq));
    // Posterior activity as a logistic in |r|^2; the log form stays finite
    // for eps = 1 and extreme observations.
    let log_odds = gamma * u - ((1.0 - eps) / eps).ln() - ((beta + tau_sq) / tau_sq).ln();
    let omega = sigmoid(log_odds);
    let value = wiener * omega * r;
    let divergence = wiener * (omega + u * gamma * omega * (1.0 - omega));
    Ok(DenoiserOutput {
        value,
        activity_posterior: omega,
        divergence,
    })
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Synthesize the received pilot signal `sqrt(xi) * A x + z` with `x_n` the
/// gain of user `n` if active (else zero) and `z` per-entry CN(0, 1) noise.
pub fn synthesize_received(
    chan: &ChannelRealization,
    act: &ActivityVector,
    snr_db: f64,
    rng: &mut impl Rng,
) -> Result<Vec<Complex64>> {
    let mut y = signal_part(chan, act, snr_db)?;
    for entry in &mut y {
        *entry += complex_gaussian(rng, 1.0);
    }
    Ok(y)
}

/// Noiseless variant of [`synthesize_received`].
pub fn synthesize_noiseless(
    chan: &ChannelRealization,
    act: &ActivityVector,
    snr_db: f64,
) -> Result<Vec<Complex64>> {
    signal_part(chan, act, snr_db)
}

fn signal_part(
    chan: &ChannelRealization,
    act: &ActivityVector,
    snr_db: f64,
) -> Result<Vec<Complex64>> {
    if act.len() != chan.n_users() {
        return Err(Error::Config(format!(
            "activity length {} does not match {} users",
            act.len(),
            chan.n_users()
        )));
    }
    let amplitude = 10f64.powf(snr_db / 10.0).sqrt();
    let mut y = vec![Complex64::ZERO; chan.pilot_len()];
    for n in 0..chan.n_users() {
        if act.is_active(n) {
            let scale = amplitude * chan.gain(n);
            for (acc, &a) in y.iter_mut().zip(chan.pilot_col(n)) {
                *acc += scale * a;
            }
        }
    }
    Ok(y)
}

/// Running state of one AMP recovery.
#[derive(Debug, Clone)]
pub struct AmpState {
    /// Current estimate of each user's (activity-gated) gain.
    pub estimate: Vec<Complex64>,
    /// Current residual in observation space.
    pub residual: Vec<Complex64>,
    /// Effective noise variance estimate `||residual||^2 / pilot_len`.
    pub tau_sq: f64,
    /// Completed iterations.
    pub iteration: usize,
    /// Activity posteriors from the latest denoiser pass (zero before the
    /// first iteration).
    pub posteriors: Vec<f64>,
}

/// Outcome of one AMP step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Continue,
    /// Relative residual change fell below the early-stop tolerance.
    Converged,
}

/// Stepwise AMP driver. [`amp_iterate`] runs it to completion; tests and
/// diagnostics can drive it one iteration at a time.
pub struct AmpRun<'a> {
    chan: &'a ChannelRealization,
    observed: Vec<Complex64>,
    eps: f64,
    state: AmpState,
}

impl<'a> AmpRun<'a> {
    /// Set up the recursion on the noise-normalized observation: zero
    /// estimate, residual equal to the observation.
    pub fn new(y: &[Complex64], chan: &'a ChannelRealization, cfg: &SystemConfig) -> Result<Self> {
        cfg.validate()?;
        if y.len() != chan.pilot_len() {
            return Err(Error::Config(format!(
                "observation length {} does not match pilot length {}",
                y.len(),
                chan.pilot_len()
            )));
        }
        if chan.n_users() != cfg.n_users {
            return Err(Error::Config(format!(
                "channel has {} users, config has {}",
                chan.n_users(),
                cfg.n_users
            )));
        }
        let scale = 1.0 / cfg.snr_linear().sqrt();
        let observed: Vec<Complex64> = y.iter().map(|&v| v * scale).collect();
        let tau_sq = norm_sqr(&observed) / chan.pilot_len() as f64;
        let state = AmpState {
            estimate: vec![Complex64::ZERO; cfg.n_users],
            residual: observed.clone(),
            tau_sq,
            iteration: 0,
            posteriors: vec![0.0; cfg.n_users],
        };
        Ok(AmpRun {
            chan,
            observed,
            eps: cfg.activity_prob,
            state,
        })
    }

    pub fn state(&self) -> &AmpState {
        &self.state
    }

    pub fn into_state(self) -> AmpState {
        self.state
    }

    /// One matched-filter / denoise / residual-update pass.
    pub fn step(&mut self) -> Result<StepOutcome> {
        let n = self.chan.n_users();
        let l = self.chan.pilot_len();
        let tau_sq = self.state.tau_sq.max(TAU_SQ_FLOOR);

        let mut new_estimate = Vec::with_capacity(n);
        let mut posteriors = Vec::with_capacity(n);
        let mut divergence_sum = 0.0;
        for user in 0..n {
            let filtered = conj_dot(self.chan.pilot_col(user), &self.state.residual)
                + self.state.estimate[user];
            let out = mmse_denoise(filtered, tau_sq, self.eps, PRIOR_GAIN_VARIANCE)?;
            new_estimate.push(out.value);
            posteriors.push(out.activity_posterior);
            divergence_sum += out.divergence;
        }

        // Residual update with the Onsager correction
        // (n_users / pilot_len) * residual * mean divergence.
        let onsager = divergence_sum / l as f64;
        let mut new_residual = self.observed.clone();
        for (user, &x) in new_estimate.iter().enumerate() {
            if x != Complex64::ZERO {
                for (acc, &a) in new_residual.iter_mut().zip(self.chan.pilot_col(user)) {
                    *acc -= x * a;
                }
            }
        }
        for (acc, &r) in new_residual.iter_mut().zip(&self.state.residual) {
            *acc += onsager * r;
        }

        let finite = new_residual.iter().all(|c| c.re.is_finite() && c.im.is_finite())
            && new_estimate.iter().all(|c| c.re.is_finite() && c.im.is_finite());
        if !finite {
            return Err(Error::AmpDiverged {
                iteration: self.state.iteration + 1,
            });
        }

        let change_sq: f64 = new_residual
            .iter()
            .zip(&self.state.residual)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        let prev_sq = norm_sqr(&self.state.residual);
        let converged = if prev_sq > 0.0 {
            (change_sq / prev_sq).sqrt() < EARLY_STOP_TOL
        } else {
            change_sq == 0.0
        };

        self.state.tau_sq = norm_sqr(&new_residual) / l as f64;
        self.state.estimate = new_estimate;
        self.state.posteriors = posteriors;
        self.state.residual = new_residual;
        self.state.iteration += 1;
        Ok(if converged {
            StepOutcome::Converged
        } else {
            StepOutcome::Continue
        })
    }
}

/// Run the AMP recursion for `cfg.amp_iters` iterations or until the
/// residual stops changing.
pub fn amp_iterate(
    y: &[Complex64],
    chan: &ChannelRealization,
    cfg: &SystemConfig,
) -> Result<AmpState> {
    let mut run = AmpRun::new(y, chan, cfg)?;
    while run.state().iteration < cfg.amp_iters {
        if run.step()? == StepOutcome::Converged {
            break;
        }
    }
    Ok(run.into_state())
}

/// Final detection output.
#[derive(Debug, Clone)]
pub struct DetectionResult {
    /// Users declared active, ascending.
    pub detected: Vec<usize>,
    /// Per-user activity posteriors from the final denoiser pass.
    pub posterior_activity: Vec<f64>,
    /// Final signal estimate.
    pub estimate: Vec<Complex64>,
}

/// Declare active every user whose final activity posterior exceeds
/// [`DETECTION_THRESHOLD`].
pub fn detect_active(state: &AmpState) -> DetectionResult {
    let detected = state
        .posteriors
        .iter()
        .enumerate()
        .filter_map(|(n, &p)| (p > DETECTION_THRESHOLD).then_some(n))
        .collect();
    DetectionResult {
        detected,
        posterior_activity: state.posteriors.clone(),
        estimate: state.estimate.clone(),
    }
}

/// One complete grant-free slot: draw channels, synthesize the received
/// pilot, run AMP, detect, and intersect with the true active set (decoding
/// of detected active users is taken as error-free).
pub fn grant_free_round(
    cfg: &SystemConfig,
    act: &ActivityVector,
    rng: &mut impl Rng,
) -> Result<SlotOutcome> {
    grant_free_round_traced(cfg, act, rng, |_| {})
}

/// Per-iteration diagnostic record of one grant-free detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmpIterTrace {
    pub iteration: usize,
    pub tau_sq: f64,
    /// Mean squared change of the estimate relative to the previous
    /// iteration.
    pub estimate_change_ms: f64,
}

/// [`grant_free_round`] with a per-iteration diagnostic callback.
pub fn grant_free_round_traced(
    cfg: &SystemConfig,
    act: &ActivityVector,
    rng: &mut impl Rng,
    mut on_iter: impl FnMut(&AmpIterTrace),
) -> Result<SlotOutcome> {
    let chan = sample_channels(cfg, rng);
    let y = synthesize_received(&chan, act, cfg.per_user_snr_db, rng)?;
    let mut run = AmpRun::new(&y, &chan, cfg)?;
    let mut previous = run.state().estimate.clone();
    while run.state().iteration < cfg.amp_iters {
        let outcome = run.step()?;
        let state = run.state();
        let change = state
            .estimate
            .iter()
            .zip(&previous)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            / cfg.n_users as f64;
        on_iter(&AmpIterTrace {
            iteration: state.iteration,
            tau_sq: state.tau_sq,
            estimate_change_ms: change,
        });
        previous.clone_from(&state.estimate);
        if outcome == StepOutcome::Converged {
            break;
        }
    }
    let detection = detect_active(run.state());
    let active = act.active_indices();
    let succeeded = intersect_sorted(&active, &detection.detected);
    Ok(SlotOutcome::new(active, succeeded, ProtocolKind::GrantFree))
}

fn intersect_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len().min(b.len()));
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

fn conj_dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{slot_rng, StreamLane};
    use approx::assert_relative_eq;

    fn cfg(n_users: usize, activity_prob: f64, pilot_len: usize, snr_db: f64) -> SystemConfig {
        SystemConfig {
            n_users,
            activity_prob,
            pilot_len,
            per_user_snr_db: snr_db,
            ..Default::default()
        }
    }

    #[test]
    fn denoiser_rejects_bad_domain() {
        let r = Complex64::new(1.0, 0.0);
        assert!(mmse_denoise(r, 0.0, 0.5, 1.0).is_err());
        assert!(mmse_denoise(r, -1.0, 0.5, 1.0).is_err());
        assert!(mmse_denoise(r, 1.0, 0.0, 1.0).is_err());
        assert!(mmse_denoise(r, 1.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn denoiser_dense_limit_is_wiener() {
        let r = Complex64::new(1.3, -0.4);
        let out = mmse_denoise(r, 0.25, 1.0, 2.0).unwrap();
        let wiener = 2.0 / 2.25;
        assert_relative_eq!(out.value.re, wiener * r.re, epsilon = 1e-12);
        assert_relative_eq!(out.value.im, wiener * r.im, epsilon = 1e-12);
        assert_eq!(out.activity_posterior, 1.0);
        assert_relative_eq!(out.divergence, wiener, epsilon = 1e-12);
    }

    #[test]
    fn denoiser_zero_input_maps_to_zero() {
        let out = mmse_denoise(Complex64::ZERO, 0.5, 0.1, 1.0).unwrap();
        assert_eq!(out.value, Complex64::ZERO);
        assert!(out.activity_posterior < 0.5);
    }

    #[test]
    fn denoiser_sparse_limit_vanishes() {
        // As eps -> 0 the posterior mean collapses to zero for moderate
        // |r| / tau (up to 4 noise standard deviations here).
        for r in [
            Complex64::new(2.0, 0.0),
            Complex64::new(1.0, -1.0),
            Complex64::new(0.3, 0.1),
        ] {
            let out = mmse_denoise(r, 0.25, 1e-12, 1.0).unwrap();
            assert!(
                out.value.norm() < 1e-6 * r.norm(),
                "r = {r}: |eta| = {}",
                out.value.norm()
            );
            assert!(out.activity_posterior < 1e-6);
        }
    }

    #[test]
    fn zero_observation_is_a_fixed_point() {
        let c = cfg(16, 0.2, 8, 20.0);
        let chan = sample_channels(&c, &mut slot_rng(3, 0, StreamLane::Protocol));
        let y = vec![Complex64::ZERO; 8];
        let mut run = AmpRun::new(&y, &chan, &c).unwrap();
        for _ in 0..5 {
            run.step().unwrap();
            assert!(run.state().estimate.iter().all(|&x| x == Complex64::ZERO));
        }
    }

    #[test]
    fn noiseless_single_user_peaks_at_truth() {
        let c = cfg(32, 0.05, 8, 30.0);
        let mut rng = slot_rng(17, 0, StreamLane::Protocol);
        let chan = sample_channels(&c, &mut rng);
        let mut flags = vec![false; 32];
        flags[13] = true;
        let act = ActivityVector::from_flags(flags);
        let y = synthesize_noiseless(&chan, &act, c.per_user_snr_db).unwrap();
        let state = amp_iterate(&y, &chan, &c).unwrap();
        let best = state
            .estimate
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm_sqr().total_cmp(&b.1.norm_sqr()))
            .unwrap()
            .0;
        assert_eq!(best, 13);
    }

    #[test]
    fn synthesize_trivial_cases() {
        let c = cfg(6, 0.5, 4, 20.0);
        let mut rng = slot_rng(21, 0, StreamLane::Protocol);
        let chan = sample_channels(&c, &mut rng);
        let silent = ActivityVector::from_flags(vec![false; 6]);
        let y = synthesize_noiseless(&chan, &silent, 20.0).unwrap();
        assert!(y.iter().all(|&v| v == Complex64::ZERO));

        let mut flags = vec![false; 6];
        flags[2] = true;
        let act = ActivityVector::from_flags(flags);
        let y = synthesize_noiseless(&chan, &act, 20.0).unwrap();
        let scale = 10.0 * chan.gain(2);
        for (v, &a) in y.iter().zip(chan.pilot_col(2)) {
            assert!((v - scale * a).norm() < 1e-12);
        }
    }

    #[test]
    fn synthesize_checks_dimensions() {
        let c = cfg(6, 0.5, 4, 20.0);
        let chan = sample_channels(&c, &mut slot_rng(0, 0, StreamLane::Protocol));
        let wrong = ActivityVector::from_flags(vec![true; 5]);
        assert!(synthesize_noiseless(&chan, &wrong, 20.0).is_err());
    }

    #[test]
    fn detection_rule_extremes() {
        let state = AmpState {
            estimate: vec![Complex64::ZERO; 4],
            residual: vec![],
            tau_sq: 1.0,
            iteration: 1,
            posteriors: vec![0.0; 4],
        };
        assert!(detect_active(&state).detected.is_empty());
        let state = AmpState {
            posteriors: vec![1.0; 4],
            ..state
        };
        assert_eq!(detect_active(&state).detected, vec![0, 1, 2, 3]);
    }

    #[test]
    fn grant_free_success_subset_of_active() {
        let c = cfg(64, 0.1, 24, 20.0);
        for slot in 0..10 {
            let act = crate::channel::sample_activity(
                &c,
                &mut slot_rng(5, slot, StreamLane::Policy),
            );
            let out =
                grant_free_round(&c, &act, &mut slot_rng(5, slot, StreamLane::Protocol)).unwrap();
            for u in &out.succeeded {
                assert!(out.active.binary_search(u).is_ok());
            }
        }
    }

    #[test]
    fn grant_free_no_active_users() {
        let c = cfg(16, 0.1, 8, 20.0);
        let act = ActivityVector::from_flags(vec![false; 16]);
        let out = grant_free_round(&c, &act, &mut slot_rng(4, 0, StreamLane::Protocol)).unwrap();
        assert!(out.succeeded.is_empty());
    }

    #[test]
    fn non_finite_observation_reports_iteration() {
        let c = cfg(16, 0.2, 8, 20.0);
        let chan = sample_channels(&c, &mut slot_rng(6, 0, StreamLane::Protocol));
        let mut y = vec![Complex64::ZERO; 8];
        y[3] = Complex64::new(f64::INFINITY, 0.0);
        let mut run = AmpRun::new(&y, &chan, &c).unwrap();
        match run.step() {
            Err(crate::error::Error::AmpDiverged { iteration }) => assert_eq!(iteration, 1),
            other => panic!("expected divergence error, got {other:?}"),
        }
    }
}
