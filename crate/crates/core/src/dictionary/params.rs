use crate::bits::bits_for;
use crate::error::{bad_params, Result};
use crate::gadget::{GadgetParams, DEFAULT_CAP_FACTOR};

pub const DEFAULT_N_MAX: u64 = 1 << 18;
pub const DEFAULT_PAGE_WORDS: usize = 64;
pub const DEFAULT_WORD_BITS: u32 = 64;
pub const DEFAULT_CACHE_WORDS: u64 = 1 << 16;
pub const DEFAULT_LAMBDA: u64 = 16;

/// Constructor parameters of a [`super::Dictionary`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DictParams {
    /// Maximum live keys; padded to a power of two.
    pub n_max: u64,
    /// Words per page (B).
    pub page_words: usize,
    /// Bits per word (w).
    pub word_bits: u32,
    /// Cache size in words (M).
    pub cache_words: u64,
    pub lambda: u64,
    /// Base threshold; derived from `lambda` when unset.
    pub t_min: Option<u64>,
    /// Node capacity in (shrunk key, log index) pairs; defaults to one pair
    /// per cache word.
    pub m_keys: Option<u64>,
    /// Routing bits per tree level, `eps * lg M`; defaults to `lg M / 2`.
    pub route_bits: Option<u32>,
    pub cap_factor: u64,
    pub seed: u64,
}

impl Default for DictParams {
    fn default() -> Self {
        DictParams {
            n_max: DEFAULT_N_MAX,
            page_words: DEFAULT_PAGE_WORDS,
            word_bits: DEFAULT_WORD_BITS,
            cache_words: DEFAULT_CACHE_WORDS,
            lambda: DEFAULT_LAMBDA,
            t_min: None,
            m_keys: None,
            route_bits: None,
            cap_factor: DEFAULT_CAP_FACTOR,
            seed: 0,
        }
    }
}

/// The power of two whose `t lg t` is closest to `lambda` in ratio.
pub fn t_min_for_lambda(lambda: u64) -> u64 {
    let target = (lambda.max(2) as f64).ln();
    let mut best = 2u64;
    let mut best_err = f64::MAX;
    for lg in 1..=16u32 {
        let t = 1u64 << lg;
        let err = ((t as f64 * lg as f64).ln() - target).abs();
        if err < best_err {
            best = t;
            best_err = err;
        }
    }
    best
}

/// Quantities derived once from [`DictParams`].
#[derive(Clone, Debug)]
pub struct Derived {
    pub lg_n: u32,
    pub n_max: u64,
    pub page_bits: u64,
    /// Width of a shrunk key, `2 lg n`.
    pub h_bits: u32,
    pub log_capacity: u64,
    pub index_bits: u32,
    pub pair_bits: u32,
    pub pairs_per_page: usize,
    pub m_keys: usize,
    pub route_bits: u32,
    pub t_min: u64,
    pub gadget: GadgetParams,
}

impl Derived {
    /// Routing chunk of `h` below a node at `depth`, or `None` at the
    /// deepest level.
    pub fn chunk(&self, h: u64, depth: u32) -> Option<usize> {
        let used = depth * self.route_bits;
        if used >= self.h_bits {
            return None;
        }
        let width = self.route_bits.min(self.h_bits - used);
        let shift = self.h_bits - used - width;
        Some(((h >> shift) & ((1u64 << width) - 1)) as usize)
    }

    pub fn fanout(&self, depth: u32) -> usize {
        let used = depth * self.route_bits;
        if used >= self.h_bits {
            0
        } else {
            1 << self.route_bits.min(self.h_bits - used)
        }
    }

    pub fn is_terminal(&self, depth: u32) -> bool {
        depth * self.route_bits >= self.h_bits
    }
}

impl DictParams {
    pub fn validate(&self) -> Result<Derived> {
        if self.n_max < 2 {
            return Err(bad_params("n_max must be at least 2"));
        }
        let n_max = self.n_max.next_power_of_two();
        let lg_n = n_max.trailing_zeros();
        if 2 * lg_n > crate::hashing::HASH_BITS {
            return Err(bad_params(format!("n_max = {n_max} too large for the shrink hash")));
        }
        if self.word_bits != 64 {
            return Err(bad_params("dictionary requires 64-bit words"));
        }
        if self.page_words < 3 {
            return Err(bad_params("pages must hold at least three words"));
        }
        let page_bits = self.page_words as u64 * self.word_bits as u64;
        if !page_bits.is_power_of_two() {
            return Err(bad_params(format!("b = {page_bits} must be a power of two")));
        }
        if (self.page_words as u64) < lg_n as u64 {
            return Err(bad_params(format!("B = {} below lg n = {lg_n}", self.page_words)));
        }
        if !self.cache_words.is_power_of_two() || self.cache_words < 4 {
            return Err(bad_params("M must be a power of two"));
        }
        let lg_m = self.cache_words.trailing_zeros();
        check_lambda(n_max, self.page_words as u64, self.cache_words, self.lambda)?;

        let h_bits = 2 * lg_n;
        let log_capacity = 2 * n_max;
        let index_bits = bits_for(log_capacity);
        let pair_bits = h_bits + index_bits;
        if pair_bits > 64 {
            return Err(bad_params("pair of shrunk key and log index exceeds a word"));
        }
        let pairs_per_page = (page_bits / pair_bits as u64) as usize;
        let m_keys = self.m_keys.unwrap_or(self.cache_words * self.word_bits as u64 / 64);
        if m_keys < page_bits {
            return Err(bad_params(format!("M_keys = {m_keys} below one page of bits")));
        }
        let route_bits = self.route_bits.unwrap_or(lg_m / 2).max(1);
        let t_min = self.t_min.unwrap_or_else(|| t_min_for_lambda(self.lambda));
        let t = (m_keys / page_bits).max(1).next_power_of_two();
        let gadget = GadgetParams::new(t, t_min, page_bits, index_bits, self.cap_factor)?;
        Ok(Derived {
            lg_n,
            n_max,
            page_bits,
            h_bits,
            log_capacity,
            index_bits,
            pair_bits,
            pairs_per_page,
            m_keys: m_keys as usize,
            route_bits,
            t_min,
            gadget,
        })
    }
}

fn check_lambda(n: u64, b_words: u64, m: u64, lambda: u64) -> Result<()> {
    let lg_n = (n as f64).log2();
    let lo = lg_n.log2().max(lg_n / (m as f64).log2());
    if (lambda as f64) < lo || lambda > b_words {
        return Err(bad_params(format!(
            "lambda = {lambda} outside [max(lg lg n, log_M n), B] = [{lo:.3}, {b_words}]"
        )));
    }
    Ok(())
}

/// Unit-constant cost predictions `(t_u, t_q)`:
/// `t_u = (log_M n + lg lg M + lambda) / B` and `t_q = lg n / lg lambda`.
pub fn predict_costs(n: u64, b_words: u64, m: u64, lambda: u64) -> Result<(f64, f64)> {
    if n < 2 || m < 2 || b_words == 0 || lambda < 2 {
        return Err(bad_params("predict_costs needs n, M, lambda >= 2 and B > 0"));
    }
    check_lambda(n, b_words, m, lambda)?;
    let lg_n = (n as f64).log2();
    let lg_m = (m as f64).log2();
    let t_u = (lg_n / lg_m + lg_m.log2() + lambda as f64) / b_words as f64;
    let t_q = lg_n / (lambda as f64).log2();
    Ok((t_u, t_q))
}
