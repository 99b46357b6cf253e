use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dictionary::{DictParams, DEFAULT_CACHE_WORDS, DEFAULT_LAMBDA, DEFAULT_N_MAX, DEFAULT_PAGE_WORDS};
use crate::error::{bad_params, Error, Result};

/// Operation percentages; they sum to 100.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mix {
    pub insert: u32,
    pub delete: u32,
    pub lookup: u32,
}

impl Mix {
    pub fn new(insert: u32, delete: u32, lookup: u32) -> Result<Self> {
        if insert + delete + lookup != 100 {
            return Err(bad_params(format!(
                "mix {insert}:{delete}:{lookup} does not sum to 100"
            )));
        }
        Ok(Mix { insert, delete, lookup })
    }
}

impl Default for Mix {
    fn default() -> Self {
        Mix {
            insert: 45,
            delete: 10,
            lookup: 45,
        }
    }
}

impl FromStr for Mix {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let [i, d, l] = parts[..] else {
            return Err(bad_params(format!("mix {s:?} is not I:D:L")));
        };
        let num = |x: &str| {
            x.trim()
                .parse::<u32>()
                .map_err(|_| bad_params(format!("bad mix component {x:?}")))
        };
        Mix::new(num(i)?, num(d)?, num(l)?)
    }
}

impl fmt::Display for Mix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.insert, self.delete, self.lookup)
    }
}

/// Key distribution of inserts and fresh lookups.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum KeyDist {
    /// Uniform over `[2n]` with `n = n_max / 2`, so the live set never
    /// exceeds `n_max`.
    #[default]
    Universe2n,
    Uniform64,
}

impl FromStr for KeyDist {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "u2n" | "universe2n" => Ok(KeyDist::Universe2n),
            "u64" | "uniform64" => Ok(KeyDist::Uniform64),
            _ => Err(bad_params(format!("unknown key distribution {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WorkloadSpec {
    pub n_max: u64,
    pub page_words: usize,
    pub cache_words: u64,
    pub lambda: u64,
    pub t_min: Option<u64>,
    pub seed: u64,
    pub mix: Mix,
    pub ops: u64,
    pub keys: KeyDist,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            n_max: DEFAULT_N_MAX,
            page_words: DEFAULT_PAGE_WORDS,
            cache_words: DEFAULT_CACHE_WORDS,
            lambda: DEFAULT_LAMBDA,
            t_min: None,
            seed: 1,
            mix: Mix::default(),
            ops: 1_000_000,
            keys: KeyDist::default(),
        }
    }
}

impl WorkloadSpec {
    pub fn dict_params(&self) -> DictParams {
        DictParams {
            n_max: self.n_max,
            page_words: self.page_words,
            cache_words: self.cache_words,
            lambda: self.lambda,
            t_min: self.t_min,
            seed: self.seed,
            ..DictParams::default()
        }
    }

    pub fn ops(&self) -> Workload {
        Workload::new(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Insert(u64, u64),
    Delete(u64),
    Lookup(u64),
}

impl Op {
    pub fn kind(&self) -> &'static str {
        match self {
            Op::Insert(..) => "insert",
            Op::Delete(_) => "delete",
            Op::Lookup(_) => "lookup",
        }
    }

    pub fn key(&self) -> u64 {
        match *self {
            Op::Insert(k, _) | Op::Delete(k) | Op::Lookup(k) => k,
        }
    }

    pub fn is_update(&self) -> bool {
        !matches!(self, Op::Lookup(_))
    }
}

/// Deterministic operation stream. Deletes target live keys; lookups are
/// half live keys and half keys not currently live.
pub struct Workload {
    rng: ChaCha8Rng,
    mix: Mix,
    keys: KeyDist,
    universe: u64,
    remaining: u64,
    live: Vec<u64>,
    pos: HashMap<u64, usize>,
}

impl Workload {
    fn new(spec: &WorkloadSpec) -> Self {
        Workload {
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
            mix: spec.mix,
            keys: spec.keys,
            universe: spec.n_max.max(2),
            remaining: spec.ops,
            live: Vec::new(),
            pos: HashMap::new(),
        }
    }

    fn draw_key(&mut self) -> u64 {
        match self.keys {
            KeyDist::Universe2n => self.rng.random_range(0..self.universe),
            KeyDist::Uniform64 => self.rng.random(),
        }
    }

    fn add_live(&mut self, k: u64) {
        if let std::collections::hash_map::Entry::Vacant(e) = self.pos.entry(k) {
            e.insert(self.live.len());
            self.live.push(k);
        }
    }

    fn remove_live(&mut self, k: u64) {
        if let Some(i) = self.pos.remove(&k) {
            self.live.swap_remove(i);
            if let Some(&moved) = self.live.get(i) {
                self.pos.insert(moved, i);
            }
        }
    }

    fn fresh_key(&mut self) -> u64 {
        for _ in 0..32 {
            let k = self.draw_key();
            if !self.pos.contains_key(&k) {
                return k;
            }
        }
        // Outside the universe, hence never live.
        self.universe + self.rng.random_range(0..self.universe)
    }

    pub fn live_keys(&self) -> &[u64] {
        &self.live
    }
}

impl Iterator for Workload {
    type Item = Op;

    fn next(&mut self) -> Option<Op> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let roll = self.rng.random_range(0..100);
        Some(if roll < self.mix.insert {
            let k = self.draw_key();
            let v = self.rng.random();
            self.add_live(k);
            Op::Insert(k, v)
        } else if roll < self.mix.insert + self.mix.delete {
            let k = if self.live.is_empty() {
                self.draw_key()
            } else {
                self.live[self.rng.random_range(0..self.live.len())]
            };
            self.remove_live(k);
            Op::Delete(k)
        } else if !self.live.is_empty() && self.rng.random_bool(0.5) {
            Op::Lookup(self.live[self.rng.random_range(0..self.live.len())])
        } else {
            Op::Lookup(self.fresh_key())
        })
    }
}
