#![allow(dead_code)]

use std::collections::HashMap;

use emdict::gadget::{Gadget, GadgetElement, GadgetParams};
use emdict::hashing::HashedKey;
use emdict::io_model::PagedMemory;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const B_WORDS: usize = 64;
pub const PAGE_BITS: u64 = 4096;

pub fn memory() -> PagedMemory {
    PagedMemory::new(B_WORDS, 64).unwrap()
}

pub fn params(t: u64, t_min: u64, backptr_bits: u32) -> GadgetParams {
    GadgetParams::new(t, t_min, PAGE_BITS, backptr_bits, 2).unwrap()
}

pub fn random_key(rng: &mut impl Rng, p: &GadgetParams) -> HashedKey {
    HashedKey::new(
        rng.random_range(0..1u32 << p.lg_b),
        rng.random_range(0..p.t() as u32),
        rng.random_range(0..p.t() as u32),
    )
}

/// A gadget plus the uncompressed log of everything inserted into it.
pub struct Filled {
    pub mem: PagedMemory,
    pub g: Gadget,
    pub log: Vec<GadgetElement>,
    pub rng: ChaCha8Rng,
}

impl Filled {
    pub fn new(p: GadgetParams, seed: u64) -> Self {
        Filled {
            mem: memory(),
            g: Gadget::new(p).unwrap(),
            log: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Bulk inserts `count` random elements, 5% of them repeating an
    /// earlier key; backpointers are insertion positions.
    pub fn insert_random(&mut self, count: usize) {
        let p = self.g.params().clone();
        let mut batch = Vec::with_capacity(count);
        for _ in 0..count {
            let key = if !self.log.is_empty() && self.rng.random_bool(0.05) {
                self.log[self.rng.random_range(0..self.log.len())].key
            } else {
                random_key(&mut self.rng, &p)
            };
            let e = GadgetElement::new(key, (self.log.len() + batch.len()) as u64);
            batch.push(e);
        }
        self.g.bulk_insert(&mut self.mem, &batch).unwrap();
        self.log.extend(batch);
    }

    /// Fills to `total` elements in batches of 1..=max_batch.
    pub fn fill_to(&mut self, total: usize, max_batch: usize) {
        while self.log.len() < total {
            let n = self.rng.random_range(1..=max_batch).min(total - self.log.len());
            self.insert_random(n);
        }
    }

    pub fn oracle(&self) -> HashMap<HashedKey, Vec<u64>> {
        let mut m: HashMap<HashedKey, Vec<u64>> = HashMap::new();
        for e in &self.log {
            m.entry(e.key).or_default().push(e.backptr);
        }
        m
    }

    /// A query key: half from the log, a quarter differing from a stored key
    /// only in the low shadow bits, the rest uniform.
    pub fn query_key(&mut self) -> HashedKey {
        let p = self.g.params().clone();
        let r: f64 = self.rng.random();
        if r < 0.5 && !self.log.is_empty() {
            self.log[self.rng.random_range(0..self.log.len())].key
        } else if r < 0.75 && !self.log.is_empty() {
            let mut k = self.log[self.rng.random_range(0..self.log.len())].key;
            k.shadow ^= 1;
            k
        } else {
            random_key(&mut self.rng, &p)
        }
    }
}
