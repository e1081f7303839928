//! Seeded random number generation.
//!
//! All stochastic code in the crate draws from [`XorShiftRng`] (xorshift128)
//! seeded through [`seeded`], which expands a 64-bit seed with SplitMix64 so
//! that nearby seeds give unrelated streams. Sub-streams for parallel work are
//! derived with [`substream`], never by sharing a generator across threads.

use rand::SeedableRng;
pub use rand_xorshift::XorShiftRng;

/// SplitMix64 step; used only for seed expansion.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn seeded(seed: u64) -> XorShiftRng {
    let mut s = seed;
    let mut bytes = [0u8; 16];
    bytes[..8].copy_from_slice(&splitmix64(&mut s).to_le_bytes());
    bytes[8..].copy_from_slice(&splitmix64(&mut s).to_le_bytes());
    // xorshift128 rejects the all-zero state
    if bytes.iter().all(|&b| b == 0) {
        bytes[0] = 1;
    }
    XorShiftRng::from_seed(bytes)
}

/// Independent generator for stream `index` under `seed`.
pub fn substream(seed: u64, index: u64) -> XorShiftRng {
    let mut s = seed ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    seeded(splitmix64(&mut s))
}
