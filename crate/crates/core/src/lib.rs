//! Slot-synchronous Age-of-Information toolkit for massive random access.
//!
//! This crate provides:
//! - Experiment configuration and deterministic per-slot random substreams
//!   ([`SystemConfig`], [`rng`])
//! - User activation and channel/pilot synthesis ([`channel`])
//! - Grant-based slotted-ALOHA contention and its analytic success rate
//!   ([`access`])
//! - Grant-free activity detection via approximate message passing with a
//!   Bernoulli-Gaussian MMSE denoiser ([`amp`])
//! - Sleep / forced-active threshold scheduling ([`scheduling`])
//! - Closed-form and Markov-chain average-AoI analysis ([`analysis`])
//! - A Monte Carlo slot-loop engine cross-validating the analysis ([`sim`])

pub mod access;
pub mod amp;
pub mod analysis;
pub mod channel;
pub mod config;
pub mod error;
pub mod rng;
pub mod scheduling;
pub mod sim;

pub use access::{ProtocolKind, SlotOutcome};
pub use amp::{AmpState, DetectionResult};
pub use analysis::{JointStateTable, SteadyStateDist, ThresholdPair};
pub use channel::{ActivityVector, ChannelRealization};
pub use config::SystemConfig;
pub use error::{Error, Result};
pub use scheduling::{IntervalState, ThresholdPolicy};
pub use sim::{Activation, AoiLedger, Protocol, SimReport, SimSpec};
