//! Polynomial hashing over the Mersenne prime 2^61 - 1, plus the bit-field
//! splits that turn one evaluation into page, distribution and shadow
//! hashes.
//!
//! A `PolyHash` with `k` random coefficients is k-independent on keys
//! below the prime. Keys are reduced modulo the prime before evaluation,
//! so 64-bit keys that differ by a multiple of the prime collide; callers
//! resolve such collisions against the original key.

use crate::bits::{ceil_lg, mask};
use crate::error::{bad_params, Result};

pub const MERSENNE_61: u64 = (1 << 61) - 1;

/// Usable output bits of one evaluation.
pub const HASH_BITS: u32 = 60;

pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A reproducible stream of seeds derived from one run seed.
#[derive(Clone, Debug)]
pub struct SeedStream {
    state: u64,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        SeedStream { state: seed }
    }

    pub fn next_seed(&mut self) -> u64 {
        splitmix64(&mut self.state)
    }

    pub fn state(&self) -> u64 {
        self.state
    }
}

#[inline]
fn reduce(x: u128) -> u64 {
    let lo = (x as u64) & MERSENNE_61;
    let hi = (x >> 61) as u64;
    let mut r = lo + (hi & MERSENNE_61) + (hi >> 61);
    while r >= MERSENNE_61 {
        r -= MERSENNE_61;
    }
    r
}

#[inline]
fn mul_mod(a: u64, b: u64) -> u64 {
    reduce(a as u128 * b as u128)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolyHash {
    seed: u64,
    coeffs: Vec<u64>,
}

impl PolyHash {
    /// `k` coefficients expanded from `seed` with splitmix64.
    pub fn new(seed: u64, k: usize) -> Self {
        let mut state = seed;
        let coeffs = (0..k.max(1))
            .map(|_| loop {
                let c = splitmix64(&mut state) >> 3;
                if c < MERSENNE_61 {
                    break c;
                }
            })
            .collect();
        PolyHash { seed, coeffs }
    }

    /// Independence `2 * ceil(lg n)`, at least 2.
    pub fn for_universe(seed: u64, n: u64) -> Self {
        let k = (2 * ceil_lg(n) as usize).max(2);
        Self::new(seed, k)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn coefficients(&self) -> &[u64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len()
    }

    /// Sum of c_i * key^i modulo 2^61 - 1.
    #[inline]
    pub fn eval(&self, key: u64) -> u64 {
        let x = reduce(key as u128);
        let mut acc = 0u64;
        for &c in self.coeffs.iter().rev() {
            acc = mul_mod(acc, x) + c;
            if acc >= MERSENNE_61 {
                acc -= MERSENNE_61;
            }
        }
        acc
    }

    /// Hash into the universe [n^2]; `n` must be a power of two with
    /// 2 lg n <= 60.
    pub fn shrink_key(&self, key: u64, n: u64) -> Result<u64> {
        if !n.is_power_of_two() {
            return Err(bad_params(format!("n = {n} is not a power of two")));
        }
        let bits = 2 * n.trailing_zeros();
        if bits > HASH_BITS {
            return Err(bad_params(format!("n^2 = 2^{bits} exceeds hash range")));
        }
        Ok(self.eval(key) & mask(bits))
    }

    pub fn partition_hash(&self, key: u64, b: u64, t: u64) -> Result<HashedKey> {
        let layout = FieldLayout::new(b, t)?;
        Ok(layout.split(self.eval(key)))
    }
}

/// Key of one gadget level: page hash in [b], distribution and shadow
/// hashes in [t].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct HashedKey {
    pub page: u32,
    pub dist: u32,
    pub shadow: u32,
}

impl HashedKey {
    pub fn new(page: u32, dist: u32, shadow: u32) -> Self {
        HashedKey { page, dist, shadow }
    }
}

/// Bit layout `[p | d | s]` over the low `lg b + 2 lg t` bits of a hash.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FieldLayout {
    pub lg_b: u32,
    pub lg_t: u32,
}

impl FieldLayout {
    pub fn new(b: u64, t: u64) -> Result<Self> {
        if !b.is_power_of_two() || !t.is_power_of_two() {
            return Err(bad_params(format!("b = {b}, t = {t} must be powers of two")));
        }
        let layout = FieldLayout {
            lg_b: b.trailing_zeros(),
            lg_t: t.trailing_zeros(),
        };
        if layout.bits() > HASH_BITS {
            return Err(bad_params(format!(
                "lg b + 2 lg t = {} exceeds {HASH_BITS} hash bits",
                layout.bits()
            )));
        }
        Ok(layout)
    }

    pub fn bits(&self) -> u32 {
        self.lg_b + 2 * self.lg_t
    }

    #[inline]
    pub fn split(&self, hash: u64) -> HashedKey {
        let t = self.lg_t;
        HashedKey {
            page: ((hash >> (2 * t)) & mask(self.lg_b)) as u32,
            dist: ((hash >> t) & mask(t)) as u32,
            shadow: (hash & mask(t)) as u32,
        }
    }
}

fn half_bits(t: u64) -> Result<u32> {
    if !t.is_power_of_two() || !t.trailing_zeros().is_multiple_of(2) {
        return Err(bad_params(format!("t = {t} needs an even number of bits")));
    }
    Ok(t.trailing_zeros() / 2)
}

/// Most significant half of the lg t bits of `x`.
pub fn high_half(x: u32, t: u64) -> Result<u32> {
    Ok(x >> half_bits(t)?)
}

/// Least significant half of the lg t bits of `x`.
pub fn low_half(x: u32, t: u64) -> Result<u32> {
    Ok(x & mask(half_bits(t)?) as u32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigUint;
    use proptest::prelude::*;

    /// Term-by-term evaluation with arbitrary precision.
    fn oracle_eval(h: &PolyHash, key: u64) -> u64 {
        let p = BigUint::from(MERSENNE_61);
        let x = BigUint::from(key);
        let mut sum = BigUint::from(0u32);
        for (i, &c) in h.coefficients().iter().enumerate() {
            sum += BigUint::from(c) * x.modpow(&BigUint::from(i), &p);
        }
        (sum % p).try_into().unwrap()
    }

    #[test]
    fn splitmix_reference_values() {
        // First outputs of the reference splitmix64 for seed 0.
        let mut s = 0u64;
        assert_eq!(splitmix64(&mut s), 0xe220_a839_7b1d_cdaf);
        assert_eq!(splitmix64(&mut s), 0x6e78_9e6a_a1b9_65f4);
    }

    #[test]
    fn eval_at_zero_is_constant_term() {
        let h = PolyHash::new(99, 8);
        assert_eq!(h.eval(0), h.coefficients()[0]);
    }

    #[test]
    fn coefficients_below_prime_and_seeded() {
        let h = PolyHash::for_universe(42, 1 << 16);
        assert_eq!(h.degree(), 32);
        assert!(h.coefficients().iter().all(|&c| c < MERSENNE_61));
        assert_eq!(h, PolyHash::for_universe(42, 1 << 16));
        assert_ne!(h, PolyHash::for_universe(43, 1 << 16));
    }

    #[test]
    fn golden_eval_seed_42_key_1() {
        let h = PolyHash::for_universe(42, 1 << 16);
        // Computed by the big-integer oracle and frozen.
        assert_eq!(oracle_eval(&h, 1), GOLDEN_EVAL_42_1);
        assert_eq!(h.eval(1), GOLDEN_EVAL_42_1);
        assert_eq!(h.eval(1), h.eval(1));
    }

    #[test]
    fn golden_shrink_seed_42_key_7() {
        let h = PolyHash::for_universe(42, 1 << 16);
        let expected = oracle_eval(&h, 7) % (1u64 << 32);
        assert_eq!(expected, GOLDEN_SHRINK_42_7);
        assert_eq!(h.shrink_key(7, 1 << 16).unwrap(), GOLDEN_SHRINK_42_7);
    }

    #[test]
    fn golden_partition_seed_7_key_123() {
        let h = PolyHash::for_universe(7, 1 << 16);
        let v = oracle_eval(&h, 123);
        let low = v % (1u64 << 28);
        let oracle = (
            (low / (1 << 16)) as u32,
            ((low / (1 << 8)) % 256) as u32,
            (low % 256) as u32,
        );
        assert_eq!(oracle, GOLDEN_PARTITION_7_123);
        let k = h.partition_hash(123, 4096, 256).unwrap();
        assert_eq!((k.page, k.dist, k.shadow), GOLDEN_PARTITION_7_123);
    }

    const GOLDEN_EVAL_42_1: u64 = 1_810_244_403_700_526_673;
    const GOLDEN_SHRINK_42_7: u64 = 3_183_157_684;
    const GOLDEN_PARTITION_7_123: (u32, u32, u32) = (2858, 114, 234);

    #[test]
    fn shrink_with_n_one_is_zero() {
        let h = PolyHash::new(5, 4);
        for k in [0, 1, 77, u64::MAX] {
            assert_eq!(h.shrink_key(k, 1).unwrap(), 0);
        }
        assert!(h.shrink_key(1, 3).is_err());
    }

    #[test]
    fn field_split_extremes() {
        let l = FieldLayout::new(4096, 256).unwrap();
        assert_eq!(l.split(0), HashedKey::new(0, 0, 0));
        assert_eq!(l.split(1 << 28), HashedKey::new(0, 0, 0));
        assert_eq!(l.split((1 << 28) - 1), HashedKey::new(4095, 255, 255));
        assert!(FieldLayout::new(4096, 3).is_err());
        assert!(FieldLayout::new(1 << 20, 1 << 21).is_err());
    }

    #[test]
    fn halves_of_182() {
        assert_eq!(high_half(182, 256).unwrap(), 11);
        assert_eq!(low_half(182, 256).unwrap(), 6);
        assert_eq!(high_half(0, 256).unwrap(), 0);
        assert_eq!(low_half(0, 256).unwrap(), 0);
        assert!(high_half(3, 8).is_err());
    }

    #[test]
    fn collision_count_near_expectation() {
        // 10^4 distinct keys into [2^32]: expected C(10^4, 2) / 2^32 pairs.
        let h = PolyHash::for_universe(3, 1 << 16);
        let mut v: Vec<u64> = (0..10_000u64)
            .map(|k| h.shrink_key(k * 7919 + 13, 1 << 16).unwrap())
            .collect();
        v.sort_unstable();
        let mut collisions = 0u64;
        let mut i = 0;
        while i < v.len() {
            let mut j = i;
            while j < v.len() && v[j] == v[i] {
                j += 1;
            }
            let run = (j - i) as u64;
            collisions += run * (run - 1) / 2;
            i = j;
        }
        let expected = 10_000f64 * 9_999f64 / 2.0 / 2f64.powi(32);
        let sigma = expected.sqrt().max(1.0);
        assert!((collisions as f64 - expected).abs() <= 3.0 * sigma);
    }

    proptest! {
        #[test]
        fn eval_matches_oracle(seed in any::<u64>(), key in any::<u64>(), k in 1usize..12) {
            let h = PolyHash::new(seed, k);
            prop_assert_eq!(h.eval(key), oracle_eval(&h, key % MERSENNE_61));
        }

        #[test]
        fn halves_recombine(x in 0u32..256) {
            let hi = high_half(x, 256).unwrap();
            let lo = low_half(x, 256).unwrap();
            prop_assert_eq!(hi * 16 + lo, x);
        }

        #[test]
        fn fields_are_disjoint_slices(hash in 0u64..(1 << 60)) {
            let l = FieldLayout::new(1 << 12, 1 << 8).unwrap();
            let k = l.split(hash);
            let rebuilt = ((k.page as u64) << 16) | ((k.dist as u64) << 8) | k.shadow as u64;
            prop_assert_eq!(rebuilt, hash & ((1 << 28) - 1));
        }
    }
}
