//! Slot outcomes and the grant-based (slotted-ALOHA) contention round.

use rand::Rng;

use crate::channel::ActivityVector;
use crate::error::{Error, Result};

/// Which access scheme produced a slot outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolKind {
    GrantBased,
    GrantFree,
    /// Abstract channel where each attempt succeeds with a fixed probability.
    FixedRho,
}

impl ProtocolKind {
    pub fn label(&self) -> &'static str {
        match self {
            ProtocolKind::GrantBased => "grant_based",
            ProtocolKind::GrantFree => "grant_free",
            ProtocolKind::FixedRho => "fixed_rho",
        }
    }
}

/// Result of one access round: who transmitted, and whose update got through.
///
/// `succeeded` is always a subset of `active`; both are sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotOutcome {
    pub active: Vec<usize>,
    pub succeeded: Vec<usize>,
    pub protocol: ProtocolKind,
}

impl SlotOutcome {
    pub fn new(active: Vec<usize>, succeeded: Vec<usize>, protocol: ProtocolKind) -> Self {
        debug_assert!(active.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(succeeded.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(succeeded.iter().all(|u| active.binary_search(u).is_ok()));
        SlotOutcome {
            active,
            succeeded,
            protocol,
        }
    }
}

/// One slotted-ALOHA contention round: every active user picks one of
/// `pilot_len` orthogonal sequences uniformly at random, and a user succeeds
/// iff nobody else picked the same sequence.
pub fn grant_based_round(
    pilot_len: usize,
    act: &ActivityVector,
    rng: &mut impl Rng,
) -> SlotOutcome {
    assert!(pilot_len >= 1, "pilot_len must be at least 1");
    let active = act.active_indices();
    let picks: Vec<usize> = active
        .iter()
        .map(|_| rng.random_range(0..pilot_len))
        .collect();
    let mut counts = vec![0u32; pilot_len];
    for &p in &picks {
        counts[p] += 1;
    }
    let succeeded = active
        .iter()
        .zip(&picks)
        .filter_map(|(&user, &p)| (counts[p] == 1).then_some(user))
        .collect();
    SlotOutcome::new(active, succeeded, ProtocolKind::GrantBased)
}

/// Analytic per-user conditional success probability of the grant-based
/// round: the chance that none of the other `n_users - 1` users is both
/// active and picks the tagged user's sequence,
/// `(1 - eps / pilot_len)^(n_users - 1)`.
pub fn grant_based_rho(n_users: usize, pilot_len: usize, eps: f64) -> Result<f64> {
    if n_users == 0 || pilot_len == 0 {
        return Err(Error::Domain(
            "n_users and pilot_len must be at least 1".into(),
        ));
    }
    if !(0.0..=1.0).contains(&eps) || eps / pilot_len as f64 > 1.0 {
        return Err(Error::Domain(format!(
            "eps {eps} outside [0, 1] for pilot_len {pilot_len}"
        )));
    }
    Ok((1.0 - eps / pilot_len as f64).powi(n_users as i32 - 1))
}
