//! Seed derivation and stateless hashing.

/// One round of the splitmix64 generator applied to `x`.
#[inline]
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent per-trial seed from a master seed and a trial index.
pub fn trial_seed(master: u64, trial_index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ splitmix64(trial_index.wrapping_add(0xA076_1D64_78BD_642F)))
}

/// Uniform value in `[-1, 1)` for an integer lattice point.
pub fn lattice_uniform(seed: u64, i: i64, j: i64) -> f64 {
    let h = splitmix64(seed ^ splitmix64((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (j as u64)));
    // 53 random mantissa bits
    let u = (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    2.0 * u - 1.0
}
