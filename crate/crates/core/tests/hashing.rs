use emdict::hashing::{FieldLayout, PolyHash};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Upper-tail p-value of Pearson's statistic over `counts` against a
/// uniform expectation.
fn chi_square_p(counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let e = n as f64 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

const ALPHA: f64 = 1e-4;

#[test]
fn shrunk_keys_uniform_in_low_bits() {
    let h = PolyHash::for_universe(11, 1 << 18);
    let mut counts = vec![0u64; 256];
    for k in 0..100_000u64 {
        counts[(h.shrink_key(k, 1 << 18).unwrap() & 255) as usize] += 1;
    }
    assert!(chi_square_p(&counts) > ALPHA);
}

#[test]
fn four_keys_jointly_uniform_over_seeds() {
    // Low two bits of four fixed keys, across independent seeds.
    let keys = [1u64, 2, 3, 1 << 40];
    let mut counts = vec![0u64; 256];
    for seed in 0..40_000u64 {
        let h = PolyHash::for_universe(seed, 1 << 16);
        let cell = keys.iter().fold(0usize, |acc, &k| acc << 2 | (h.eval(k) & 3) as usize);
        counts[cell] += 1;
    }
    assert!(chi_square_p(&counts) > ALPHA);
}

#[test]
fn routing_chunks_balanced_given_prefix() {
    // Top 8 bits of a 36-bit shrunk key, then the next 8 bits among keys
    // sharing one top chunk.
    let n = 1u64 << 18;
    let h = PolyHash::for_universe(5, n);
    let mut top = vec![0u64; 256];
    let mut next = vec![0u64; 256];
    for k in 0..2_000_000u64 {
        let s = h.shrink_key(k, n).unwrap();
        let c0 = (s >> 28) as usize;
        top[c0 & 255] += 1;
        if c0 == 17 {
            next[((s >> 20) & 255) as usize] += 1;
        }
    }
    assert!(chi_square_p(&top) > ALPHA);
    assert!(next.iter().sum::<u64>() > 5_000);
    assert!(chi_square_p(&next) > ALPHA);
}

#[test]
fn partition_fields_balanced() {
    let h = PolyHash::for_universe(9, 1 << 16);
    let layout = FieldLayout::new(4096, 16).unwrap();
    let mut page = vec![0u64; 64];
    let mut dist = vec![0u64; 16];
    let mut shadow = vec![0u64; 16];
    for k in 0..200_000u64 {
        let x = layout.split(h.eval(k));
        page[(x.page & 63) as usize] += 1;
        dist[x.dist as usize] += 1;
        shadow[x.shadow as usize] += 1;
    }
    for c in [&page, &dist, &shadow] {
        assert!(chi_square_p(c) > ALPHA);
    }
}

#[test]
fn skewed_counts_are_rejected() {
    // The statistic itself flags an obviously biased histogram.
    let mut counts = vec![100u64; 16];
    counts[0] = 400;
    assert!(chi_square_p(&counts) < ALPHA);
}
