//! Closed-form and Markov-chain AoI mathematics: the memoryless baseline,
//! the interval-chain steady state under the two-threshold policy, the joint
//! (AoI, interval) chain recursion, a threshold-pair solver that holds the
//! effective activation probability fixed, and a power-iteration oracle for
//! cross-checking steady states.

use crate::error::{Error, Result};
use crate::scheduling::ThresholdPolicy;

/// Tail mass beyond which the baseline geometric distribution is truncated.
const BASELINE_TAIL: f64 = 1e-12;

/// Hard cap on the AoI horizon of the joint-chain recursion.
const HORIZON_CAP: usize = 1_000_000;

/// Neumaier compensated accumulator: keeps long sums of many tiny
/// probabilities from losing mass to rounding.
#[derive(Debug, Clone, Copy, Default)]
struct Compensated {
    sum: f64,
    c: f64,
}

impl Compensated {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.c
    }
}

/// A truncated discrete distribution over states `1..=probs.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateDist {
    pub probs: Vec<f64>,
    /// Number of retained states.
    pub truncation: usize,
    /// Upper bound on the probability mass beyond the truncation.
    pub tail_mass_bound: f64,
}

impl SteadyStateDist {
    /// First moment sum(n * probs[n-1]) of the retained states.
    pub fn mean(&self) -> f64 {
        let mut acc = Compensated::default();
        for (idx, &p) in self.probs.iter().enumerate() {
            acc.add((idx + 1) as f64 * p);
        }
        acc.value()
    }

    pub fn total_mass(&self) -> f64 {
        let mut acc = Compensated::default();
        for &p in &self.probs {
            acc.add(p);
        }
        acc.value()
    }
}

/// Baseline average AoI `1 / (eps * rho)` of the memoryless chain where each
/// slot updates with probability `eps * rho`. A zero update rate yields
/// `f64::INFINITY` rather than an error.
pub fn baseline_aaoi(eps: f64, rho: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&eps) || !(0.0..=1.0).contains(&rho) {
        return Err(Error::Domain(format!(
            "eps {eps} and rho {rho} must lie in [0, 1]"
        )));
    }
    let p_u = eps * rho;
    if p_u == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(1.0 / p_u)
}

/// Geometric steady state of the baseline AoI chain:
/// `probs[n-1] = p_u * (1 - p_u)^(n-1)`, truncated once the tail drops below
/// 1e-12. Errors if that needs more than `max_states` states.
pub fn baseline_steady_state(p_u: f64, max_states: usize) -> Result<SteadyStateDist> {
    if !(p_u > 0.0 && p_u <= 1.0) {
        return Err(Error::Domain(format!("p_u must lie in (0, 1], got {p_u}")));
    }
    let p_e = 1.0 - p_u;
    let needed = if p_e == 0.0 {
        1
    } else {
        (BASELINE_TAIL.ln() / p_e.ln()).ceil() as usize
    };
    if needed > max_states {
        return Err(Error::Truncation {
            achieved: p_e.powi(max_states as i32),
            requested: BASELINE_TAIL,
        });
    }
    let mut probs = Vec::with_capacity(needed);
    let mut mass = p_u;
    for _ in 0..needed {
        probs.push(mass);
        mass *= p_e;
    }
    Ok(SteadyStateDist {
        probs,
        truncation: needed,
        tail_mass_bound: p_e.powi(needed as i32),
    })
}

/// Steady-state probability of interval 1 under the threshold policy, which
/// equals the policy's long-run activation probability.
fn interval_pi1(sleep_thr: u32, force_thr: u32, base_prob: f64) -> f64 {
    let mut geo_sum = Compensated::default();
    let mut term = 1.0;
    for _ in 0..(force_thr - sleep_thr - 1) {
        term *= 1.0 - base_prob;
        geo_sum.add(term);
    }
    1.0 / (1.0 + sleep_thr as f64 + geo_sum.value())
}

/// Exact steady state of the inactivity-interval chain over `1..=force_thr`:
/// constant through interval `sleep_thr + 1`, then geometric with ratio
/// `1 - base_prob`.
pub fn threshold_steady_state(pol: &ThresholdPolicy) -> SteadyStateDist {
    let force = pol.force_thr() as usize;
    let sleep = pol.sleep_thr() as usize;
    let pi1 = interval_pi1(pol.sleep_thr(), pol.force_thr(), pol.base_prob());
    let mut probs = Vec::with_capacity(force);
    let mut p = pi1;
    for n in 1..=force {
        if n > sleep + 1 {
            p *= 1.0 - pol.base_prob();
        }
        probs.push(p);
    }
    let dist = SteadyStateDist {
        probs,
        truncation: force,
        tail_mass_bound: 0.0,
    };
    debug_assert!((dist.total_mass() - 1.0).abs() < 1e-12);
    dist
}

/// Long-run per-slot activation probability of the threshold policy.
pub fn effective_activation(pol: &ThresholdPolicy) -> f64 {
    interval_pi1(pol.sleep_thr(), pol.force_thr(), pol.base_prob())
}

/// One feasible threshold configuration found by [`solve_threshold_pairs`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdPair {
    pub sleep_thr: u32,
    pub force_thr: u32,
    pub base_prob: f64,
    /// Effective activation probability actually achieved.
    pub achieved: f64,
}

impl ThresholdPair {
    pub fn policy(&self) -> Result<ThresholdPolicy> {
        ThresholdPolicy::new(self.sleep_thr, self.force_thr, self.base_prob)
    }
}

/// Find the base probability putting one (sleep, force) pair's effective
/// activation within `tol` of `target_eps`, or `None` if the pair cannot
/// reach it.
///
/// The effective activation is increasing in the base probability, ranging
/// over `(1/force_thr, 1/(sleep_thr + 1))`; for `sleep_thr = force_thr - 1`
/// it is exactly `1/force_thr` no matter the base probability.
pub fn solve_base_prob(
    sleep_thr: u32,
    force_thr: u32,
    target_eps: f64,
    tol: f64,
) -> Option<ThresholdPair> {
    if sleep_thr >= force_thr {
        return None;
    }
    let pair = |base_prob: f64| {
        let achieved = interval_pi1(sleep_thr, force_thr, base_prob);
        ((achieved - target_eps).abs() <= tol).then_some(ThresholdPair {
            sleep_thr,
            force_thr,
            base_prob,
            achieved,
        })
    };
    if sleep_thr + 1 == force_thr {
        // Deterministic period: base probability has no effect.
        return pair(0.5);
    }
    let g = |e: f64| interval_pi1(sleep_thr, force_thr, e) - target_eps;
    let (mut lo, mut hi) = (1e-9, 1.0 - 1e-9);
    let (g_lo, g_hi) = (g(lo), g(hi));
    if g_lo > 0.0 && g_hi > 0.0 {
        pair(lo)
    } else if g_lo < 0.0 && g_hi < 0.0 {
        pair(hi)
    } else {
        // Sign change: bisect until the bracket collapses.
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) <= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 {
                break;
            }
        }
        pair(0.5 * (lo + hi))
    }
}

/// Enumerate threshold pairs whose effective activation probability matches
/// `target_eps` within `tol`, sweeping integer thresholds up to `theta_max`
/// and bisecting on the base probability. Infeasible combinations are
/// silently skipped.
pub fn solve_threshold_pairs(
    target_eps: f64,
    theta_max: u32,
    tol: f64,
) -> Result<Vec<ThresholdPair>> {
    if !(target_eps > 0.0 && target_eps < 1.0) {
        return Err(Error::Domain(format!(
            "target_eps must lie in (0, 1), got {target_eps}"
        )));
    }
    if tol <= 0.0 || tol.is_nan() {
        return Err(Error::Domain(format!("tol must be positive, got {tol}")));
    }
    let mut pairs = Vec::new();
    for force in 1..=theta_max {
        for sleep in 0..force {
            pairs.extend(solve_base_prob(sleep, force, target_eps, tol));
        }
    }
    Ok(pairs)
}

/// Joint steady-state table over (AoI value `j`, inactivity interval `i`).
#[derive(Debug, Clone)]
pub struct JointStateTable {
    probs: Vec<f64>,
    horizon: usize,
    interval_states: usize,
    tail_mass: f64,
}

impl JointStateTable {
    /// Probability of AoI `j` and interval `i` (both 1-based).
    pub fn prob(&self, j: usize, i: usize) -> f64 {
        assert!((1..=self.horizon).contains(&j) && (1..=self.interval_states).contains(&i));
        self.probs[(j - 1) * self.interval_states + (i - 1)]
    }

    /// Marginal probability of AoI `j`.
    pub fn aoi_marginal(&self, j: usize) -> f64 {
        let row = &self.probs[(j - 1) * self.interval_states..j * self.interval_states];
        let mut acc = Compensated::default();
        for &p in row {
            acc.add(p);
        }
        acc.value()
    }

    /// AoI horizon (number of retained rows).
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Number of interval states (columns), equal to the force threshold.
    pub fn interval_states(&self) -> usize {
        self.interval_states
    }

    /// Probability mass beyond the horizon.
    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }
}

/// Result of the joint-chain AoI computation.
#[derive(Debug, Clone)]
pub struct JointAaoi {
    pub aaoi: f64,
    pub table: JointStateTable,
}

/// Average AoI of one user under the threshold policy when every attempt
/// succeeds with probability `rho`, computed exactly on the joint
/// (AoI, interval) chain.
///
/// The AoI horizon is chosen from the bound that any `force_thr` consecutive
/// slots contain at least one attempt, so the mass beyond `m * force_thr`
/// rows is at most `(1 - rho)^m`; it is capped at 10^6 rows and the achieved
/// tail mass is re-checked against `tail_tol`.
pub fn joint_chain_aaoi(pol: &ThresholdPolicy, rho: f64, tail_tol: f64) -> Result<JointAaoi> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::Domain(format!("rho must lie in (0, 1], got {rho}")));
    }
    if !(tail_tol > 0.0 && tail_tol < 1.0) {
        return Err(Error::Domain(format!(
            "tail_tol must lie in (0, 1), got {tail_tol}"
        )));
    }
    let force = pol.force_thr() as usize;
    let blocks = if rho == 1.0 {
        1.0
    } else {
        (tail_tol.ln() / (1.0 - rho).ln()).ceil().max(1.0)
    };
    let horizon = ((force as f64 * blocks) as usize).clamp(force, HORIZON_CAP);

    let interval_dist = threshold_steady_state(pol);
    let active_prob: Vec<f64> = (1..=force)
        .map(|i| {
            if i <= pol.sleep_thr() as usize {
                0.0
            } else if i < force {
                pol.base_prob()
            } else {
                1.0
            }
        })
        .collect();

    // First row: only (1, 1) is recurrent.
    let mut row = vec![0.0; force];
    row[0] = interval_dist
        .probs
        .iter()
        .zip(&active_prob)
        .map(|(pi, p)| pi * p * rho)
        .sum::<f64>();

    let mut probs = Vec::with_capacity(horizon * force);
    let mut aaoi = Compensated::default();
    let mut total = Compensated::default();
    let sleep = pol.sleep_thr() as usize;
    for j in 1..=horizon {
        if j > 1 {
            let prev = &probs[(j - 2) * force..(j - 1) * force];
            let mut next = vec![0.0; force];
            // Failed attempts from any attempting interval state land on
            // interval 1 with the AoI grown by one.
            let mut failed = Compensated::default();
            for n in sleep..force {
                failed.add(active_prob[n] * (1.0 - rho) * prev[n]);
            }
            next[0] = failed.value();
            // Silent users advance one interval state.
            for i in 1..force {
                next[i] = (1.0 - active_prob[i - 1]) * prev[i - 1];
            }
            row = next;
        }
        let mut row_mass = Compensated::default();
        for &p in &row {
            row_mass.add(p);
        }
        let mass = row_mass.value();
        aaoi.add(j as f64 * mass);
        total.add(mass);
        probs.extend_from_slice(&row);
    }

    let tail_mass = (1.0 - total.value()).max(0.0);
    if tail_mass > tail_tol {
        return Err(Error::Truncation {
            achieved: tail_mass,
            requested: tail_tol,
        });
    }
    Ok(JointAaoi {
        aaoi: aaoi.value(),
        table: JointStateTable {
            probs,
            horizon,
            interval_states: force,
            tail_mass,
        },
    })
}

/// Power-iteration fixed point of a row-stochastic matrix, starting from the
/// uniform distribution and iterating until the max successive-iterate
/// difference drops below `tol`. Used as an independent oracle for the
/// closed-form steady states.
pub fn brute_force_steady_state(transition: &[Vec<f64>], tol: f64) -> Result<Vec<f64>> {
    let n = transition.len();
    if n == 0 {
        return Err(Error::Domain("empty transition matrix".into()));
    }
    let mut entries = Vec::new();
    for (i, row) in transition.iter().enumerate() {
        if row.len() != n {
            return Err(Error::Domain(format!(
                "row {i} has length {}, expected {n}",
                row.len()
            )));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("row {i} sums to {sum}, not 1")));
        }
        for (j, &p) in row.iter().enumerate() {
            if p < 0.0 {
                return Err(Error::Domain(format!("negative entry at ({i}, {j})")));
            }
            if p != 0.0 {
                entries.push((i, j, p));
            }
        }
    }

    const MAX_ITERS: usize = 5_000_000;
    // The successive-iterate difference is only inspected every few steps;
    // slowly-mixing chains spend most of their time in the multiply.
    const CHECK_EVERY: usize = 4;
    let mut dist = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    let mut last_delta = f64::INFINITY;
    for iter in 0..MAX_ITERS {
        next.iter_mut().for_each(|x| *x = 0.0);
        for &(i, j, p) in &entries {
            next[j] += dist[i] * p;
        }
        if iter % CHECK_EVERY == 0 {
            last_delta = dist
                .iter()
                .zip(&next)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if last_delta < tol {
                std::mem::swap(&mut dist, &mut next);
                return Ok(dist);
            }
        }
        std::mem::swap(&mut dist, &mut next);
    }
    Err(Error::NoConvergence {
        iterations: MAX_ITERS,
        last_delta,
    })
}
