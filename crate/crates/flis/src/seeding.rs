//! Deterministic seed derivation.
//!
//! Everything random in this crate (phantom geometry, noise, patch
//! sampling, atom re-seeding) draws from a stream seeded by mixing the
//! run seed with structural indices (stack, slice, class, purpose tag),
//! so any part of a run can be reproduced in isolation and no two parts
//! share a stream by accident.

/// SplitMix64 finalizer; full-period bijection with good avalanche.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds `parts` into one seed; order matters.
pub fn derive(parts: &[u64]) -> u64 {
    let mut h = 0x243f_6a88_85a3_08d3; // arbitrary nonzero start
    for &p in parts {
        h = splitmix(h ^ splitmix(p));
    }
    h
}
