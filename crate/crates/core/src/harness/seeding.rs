use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a tuple of words into one 64-bit seed. Order matters, and tuples
/// of different lengths map to different seeds.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut h = splitmix(parts.len() as u64);
    for &x in parts {
        h = splitmix(h ^ splitmix(x));
    }
    h
}

/// Independent ChaCha stream keyed by `parts`.
pub fn stream(parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(parts))
}
