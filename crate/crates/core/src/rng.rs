use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type PlannerRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> PlannerRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive an independent seed for item `index` of a stream (splitmix64).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
