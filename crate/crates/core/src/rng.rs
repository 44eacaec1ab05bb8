//! Stable seed derivation and seeded row splits.
//!
//! Every fit derives its RNG from the user seed plus string keys (target and
//! input names), so results never depend on scheduling or call order.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `seed` with an ordered list of keys (FNV-1a, then splitmix64).
pub fn derive_seed<S: AsRef<str>>(seed: u64, keys: &[S]) -> u64 {
    let mut h = FNV_OFFSET;
    for b in seed.to_le_bytes() {
        h = (h ^ b as u64).wrapping_mul(FNV_PRIME);
    }
    for key in keys {
        for &b in key.as_ref().as_bytes() {
            h = (h ^ b as u64).wrapping_mul(FNV_PRIME);
        }
        // unit separator so ["ab","c"] != ["a","bc"]
        h = (h ^ 0x1f).wrapping_mul(FNV_PRIME);
    }
    splitmix64(h)
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seeded uniform shuffle split. Returns sorted `(train, test)` row indices;
/// the test part has `round(fraction * n)` rows, clamped to `[1, n - 1]`.
pub fn holdout_split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    assert!(n >= 2, "holdout split needs at least two rows");
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from(seed));
    let n_test = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    (train, test)
}

pub fn gather(values: &[f64], rows: &[usize]) -> Vec<f64> {
    rows.iter().map(|&r| values[r]).collect()
}
