//! Benchmark inputs shared by the criterion targets.

use sphflow_core::case::Vec3;
use sphflow_core::{fixtures, generate_particles, CaseDefinition, ParticleFrame};

/// Jittered lattice of `n` points with spacing `dp`, deterministic.
pub fn lattice(n: usize, dp: f64) -> Vec<Vec3> {
    let side = (n as f64).sqrt().ceil() as usize;
    let mut state = 0x9e37_79b9_7f4a_7c15_u64;
    let mut jitter = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state as f64 / u64::MAX as f64 - 0.5) * 0.2 * dp
    };
    (0..n)
        .map(|k| Vec3::new((k % side) as f64 * dp + jitter(), 0.0, (k / side) as f64 * dp + jitter()))
        .collect()
}

pub fn dam_break() -> (CaseDefinition, ParticleFrame) {
    let case = fixtures::c1_dam_break();
    let frame = generate_particles(&case).expect("fixture generates");
    (case, frame)
}
