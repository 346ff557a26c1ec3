//! Benchmark-only crate; see `benches/core.rs`.

use aoisim_core::channel::{sample_activity, sample_channels, ActivityVector, ChannelRealization};
use aoisim_core::rng::{slot_rng, StreamLane};
use aoisim_core::SystemConfig;
use num_complex::Complex64;

/// One fixed detection problem for the AMP benchmarks.
pub struct DetectionFixture {
    pub cfg: SystemConfig,
    pub act: ActivityVector,
    pub chan: ChannelRealization,
    pub observed: Vec<Complex64>,
}

pub fn detection_fixture(n_users: usize, pilot_len: usize) -> DetectionFixture {
    let cfg = SystemConfig {
        n_users,
        pilot_len,
        activity_prob: 0.05,
        per_user_snr_db: 20.0,
        seed: 7,
        ..Default::default()
    };
    let act = sample_activity(&cfg, &mut slot_rng(cfg.seed, 0, StreamLane::Policy));
    let mut rng = slot_rng(cfg.seed, 0, StreamLane::Protocol);
    let chan = sample_channels(&cfg, &mut rng);
    let observed =
        aoisim_core::amp::synthesize_received(&chan, &act, cfg.per_user_snr_db, &mut rng).unwrap();
    DetectionFixture {
        cfg,
        act,
        chan,
        observed,
    }
}
