//! The t-gadget: an insert-only multiset over `([b] x [t] x [t]) x backpointer`
//! supporting Bulk-Insert and Query.
//!
//! A recursive t-gadget keeps every element in an append-only log. Full log
//! blocks are top-compressed (`(p, high(d), high(s))`) into a sqrt(t)-gadget;
//! when that top gadget reaches `b * sqrt(t)` elements its contents are
//! re-read from the log, bottom-compressed (`(p, low(d), low(s))`) and bulk
//! inserted into the bottom gadget selected by `high(d)`. Compressed
//! elements carry the index of the log block holding their full form, so a
//! query can restore the dropped bits and filter false positives.
//!
//! Recursion stops at `t <= t_min` with a base gadget: one buffer page plus
//! a chained hash table addressed by the page hash.
//!
//! Structural metadata (block directories, fill counts, ranges) lives in
//! host memory; only element data is paged.

mod base;
mod recursive;

use std::fmt;

pub use base::BaseGadget;
pub use recursive::RecursiveGadget;

use crate::bits::{bits_for, mask};
use crate::error::{bad_params, Error, Result};
use crate::hashing::{FieldLayout, HashedKey};
use crate::io_model::PagedMemory;

pub const DEFAULT_CAP_FACTOR: u64 = 2;

/// One stored element: a hashed key plus its backpointer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct GadgetElement {
    pub key: HashedKey,
    pub backptr: u64,
}

impl GadgetElement {
    pub fn new(key: HashedKey, backptr: u64) -> Self {
        GadgetElement { key, backptr }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GadgetParams {
    pub lg_t: u32,
    pub lg_t_min: u32,
    pub lg_b: u32,
    pub backptr_bits: u32,
    pub cap_factor: u64,
    pub elem_bits: u32,
    pub elems_per_block: usize,
    pub capacity: usize,
    /// `b * sqrt(t)`; zero for base gadgets.
    pub top_capacity: usize,
    /// Recursion depth below the outermost gadget.
    pub level: u32,
}

/// Smallest `lg t_min * 2^j` that is at least `lg_t`.
pub fn padded_lg_t(lg_t: u32, lg_t_min: u32) -> u32 {
    let mut l = lg_t_min;
    while l < lg_t {
        l *= 2;
    }
    l
}

impl GadgetParams {
    /// Parameters of an outermost gadget. `t` is padded up the ladder
    /// `t_min, t_min^2, t_min^4, ...`; `backptr_bits` is the width of the
    /// associated data carried by each element.
    pub fn new(t: u64, t_min: u64, page_bits: u64, backptr_bits: u32, cap_factor: u64) -> Result<Self> {
        if !t_min.is_power_of_two() || t_min < 2 {
            return Err(bad_params(format!("t_min = {t_min} must be a power of two >= 2")));
        }
        if t == 0 {
            return Err(bad_params("t must be positive"));
        }
        if !page_bits.is_power_of_two() {
            return Err(bad_params(format!("b = {page_bits} must be a power of two")));
        }
        if cap_factor == 0 {
            return Err(bad_params("capacity factor must be positive"));
        }
        let lg_t_min = t_min.trailing_zeros();
        let lg_t = padded_lg_t(bits_for(t), lg_t_min);
        Self::build(lg_t, lg_t_min, page_bits.trailing_zeros(), backptr_bits, cap_factor, 0)
    }

    fn build(lg_t: u32, lg_t_min: u32, lg_b: u32, backptr_bits: u32, cap_factor: u64, level: u32) -> Result<Self> {
        FieldLayout::new(1 << lg_b, 1u64 << lg_t)?;
        let elem_bits = lg_b + 2 * lg_t + backptr_bits;
        if elem_bits > 64 {
            return Err(bad_params(format!(
                "element of {elem_bits} bits does not fit a word (lg t = {lg_t})"
            )));
        }
        let b = 1usize << lg_b;
        let elems_per_block = b / elem_bits.max(1) as usize;
        if elems_per_block < 2 {
            return Err(bad_params("page holds fewer than two elements"));
        }
        let capacity = (cap_factor as usize)
            .checked_mul(b)
            .and_then(|c| c.checked_mul(1usize << lg_t))
            .ok_or_else(|| bad_params("capacity overflows"))?;
        let top_capacity = if lg_t > lg_t_min { b << (lg_t / 2) } else { 0 };
        Ok(GadgetParams {
            lg_t,
            lg_t_min,
            lg_b,
            backptr_bits,
            cap_factor,
            elem_bits,
            elems_per_block,
            capacity,
            top_capacity,
            level,
        })
    }

    pub fn t(&self) -> u64 {
        1 << self.lg_t
    }

    pub fn t_min(&self) -> u64 {
        1 << self.lg_t_min
    }

    pub fn page_bits(&self) -> usize {
        1 << self.lg_b
    }

    pub fn is_base(&self) -> bool {
        self.lg_t <= self.lg_t_min
    }

    pub fn layout(&self) -> FieldLayout {
        FieldLayout {
            lg_b: self.lg_b,
            lg_t: self.lg_t,
        }
    }

    /// Log blocks a full gadget can occupy.
    pub fn max_blocks(&self) -> usize {
        self.capacity.div_ceil(self.elems_per_block)
    }

    /// Parameters shared by the top and bottom sqrt(t)-gadgets. Their
    /// capacity factor doubles so that a full parent overflows a bottom
    /// only when that bottom draws twice its mean share.
    pub fn sub_params(&self) -> Result<GadgetParams> {
        if self.is_base() {
            return Err(bad_params("base gadget has no sub-gadgets"));
        }
        let bp = bits_for(self.max_blocks() as u64);
        if bp > 3 * self.lg_t {
            return Err(bad_params(format!(
                "{} log blocks exceed the [t^3] backpointer range for t = 2^{}",
                self.max_blocks(),
                self.lg_t
            )));
        }
        Self::build(
            self.lg_t / 2,
            self.lg_t_min,
            self.lg_b,
            bp,
            2 * self.cap_factor,
            self.level + 1,
        )
    }

    /// The t values from this level down to the base, following the top
    /// recursion.
    pub fn ladder(&self) -> Vec<u64> {
        let mut out = vec![self.t()];
        let mut l = self.lg_t;
        while l > self.lg_t_min {
            l /= 2;
            out.push(1 << l);
        }
        out
    }

    /// Q(t) = 1 + 2 Q(sqrt t), Q(t_min) = 1: gadget instances one query
    /// visits.
    pub fn query_visits(&self) -> u64 {
        let mut l = self.lg_t;
        let mut q = 1u64;
        while l > self.lg_t_min {
            l /= 2;
            q = 2 * q + 1;
        }
        q
    }

    #[inline]
    pub(crate) fn encode(&self, e: &GadgetElement) -> u64 {
        let t = self.lg_t;
        let bp = self.backptr_bits;
        debug_assert!(e.backptr <= mask(bp), "backpointer {} exceeds {bp} bits", e.backptr);
        ((e.key.page as u64) << (2 * t + bp))
            | ((e.key.dist as u64) << (t + bp))
            | ((e.key.shadow as u64) << bp)
            | (e.backptr & mask(bp))
    }

    #[inline]
    pub(crate) fn decode(&self, v: u64) -> GadgetElement {
        let t = self.lg_t;
        let bp = self.backptr_bits;
        GadgetElement {
            key: HashedKey {
                page: ((v >> (2 * t + bp)) & mask(self.lg_b)) as u32,
                dist: ((v >> (t + bp)) & mask(t)) as u32,
                shadow: ((v >> bp) & mask(t)) as u32,
            },
            backptr: v & mask(bp),
        }
    }

    pub(crate) fn check_key(&self, key: &HashedKey) -> bool {
        (key.page as u64) < (1 << self.lg_b) && (key.dist as u64) < self.t() && (key.shadow as u64) < self.t()
    }

    pub(crate) fn check_elements(&self, elems: &[GadgetElement]) -> Result<()> {
        for e in elems {
            if !self.check_key(&e.key) || e.backptr > mask(self.backptr_bits) {
                return Err(bad_params(format!(
                    "element {e:?} out of range for t = {}, {} backpointer bits",
                    self.t(),
                    self.backptr_bits
                )));
            }
        }
        Ok(())
    }
}

pub(crate) fn decode_block(params: &GadgetParams, page: &[u64], count: usize) -> Vec<GadgetElement> {
    let w = params.elem_bits as usize;
    (0..count)
        .map(|i| params.decode(crate::bits::get_bits(page, i * w, params.elem_bits)))
        .collect()
}

#[inline]
pub(crate) fn encode_slot(params: &GadgetParams, page: &mut [u64], slot: usize, e: &GadgetElement) {
    crate::bits::set_bits(
        page,
        slot * params.elem_bits as usize,
        params.elem_bits,
        params.encode(e),
    );
}

/// Per-query instrumentation, accumulated across the recursion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct QueryStats {
    pub visits: u64,
    pub false_positives: u64,
    pub dist_violations: u64,
    /// Base gadgets queried, and how many of those read more than two
    /// pages.
    pub base_queries: u64,
    pub base_over_two_pages: u64,
}

/// Activity and occupancy of one recursion level, summed over every
/// gadget instance at that level.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LevelStats {
    pub instances: u64,
    pub elements: u64,
    pub bits_written: u64,
    pub little_flushes: u64,
    pub big_flushes: u64,
    pub buffer_flushes: u64,
    pub table_growths: u64,
    pub false_positives: u64,
    pub dist_violations: u64,
}

impl LevelStats {
    fn add_activity(&mut self, o: &LevelStats) {
        self.bits_written += o.bits_written;
        self.little_flushes += o.little_flushes;
        self.big_flushes += o.big_flushes;
        self.buffer_flushes += o.buffer_flushes;
        self.table_growths += o.table_growths;
        self.false_positives += o.false_positives;
        self.dist_violations += o.dist_violations;
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GadgetStats {
    pub elements: u64,
    pub pages: u64,
    /// Index 0 is the gadget itself.
    pub levels: Vec<LevelStats>,
}

impl GadgetStats {
    pub fn false_positives(&self) -> u64 {
        self.levels.iter().map(|l| l.false_positives).sum()
    }

    pub fn big_flushes(&self) -> u64 {
        self.levels.first().map_or(0, |l| l.big_flushes)
    }

    pub fn little_flushes(&self) -> u64 {
        self.levels.first().map_or(0, |l| l.little_flushes)
    }

    pub(crate) fn level_mut(&mut self, depth: usize) -> &mut LevelStats {
        if self.levels.len() <= depth {
            self.levels.resize(depth + 1, LevelStats::default());
        }
        &mut self.levels[depth]
    }

    /// Folds `child` in `offset` levels below this gadget. Occupancy is
    /// added only when `occupancy` is set (live children, not retired ones).
    pub(crate) fn merge(&mut self, child: &GadgetStats, offset: usize, occupancy: bool) {
        for (i, l) in child.levels.iter().enumerate() {
            let dst = self.level_mut(i + offset);
            dst.add_activity(l);
            if occupancy {
                dst.instances += l.instances;
                dst.elements += l.elements;
            }
        }
        if occupancy {
            self.pages += child.pages;
        }
    }
}

/// Result of a full Invariant-1 sweep.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InvariantReport {
    /// Outermost-level classification.
    pub tail: u64,
    pub top: u64,
    pub bottom: u64,
    /// Elements of an outermost base gadget.
    pub base: u64,
    pub violations: u64,
    pub messages: Vec<String>,
}

impl InvariantReport {
    pub fn is_ok(&self) -> bool {
        self.violations == 0
    }

    fn violation(&mut self, count: u64, msg: String) {
        if count > 0 {
            self.violations += count;
            if self.messages.len() < 16 {
                self.messages.push(msg);
            }
        }
    }

    fn absorb_violations(&mut self, o: InvariantReport) {
        self.violations += o.violations;
        for m in o.messages {
            if self.messages.len() < 16 {
                self.messages.push(m);
            }
        }
    }
}

pub enum Gadget {
    Recursive(Box<RecursiveGadget>),
    Base(BaseGadget),
}

impl fmt::Debug for Gadget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.params();
        f.debug_struct("Gadget")
            .field("t", &p.t())
            .field("level", &p.level)
            .field("len", &self.len())
            .finish()
    }
}

impl Gadget {
    /// An empty gadget; pages are allocated on first insert.
    pub fn new(params: GadgetParams) -> Result<Gadget> {
        if params.is_base() {
            Ok(Gadget::Base(BaseGadget::new(params)))
        } else {
            Ok(Gadget::Recursive(Box::new(RecursiveGadget::new(params)?)))
        }
    }

    pub fn params(&self) -> &GadgetParams {
        match self {
            Gadget::Recursive(g) => g.params(),
            Gadget::Base(g) => g.params(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Gadget::Recursive(g) => g.len(),
            Gadget::Base(g) => g.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Appends `elems` to the multiset. On [`Error::NeedsRebuild`] the
    /// gadget may be partially updated and must be discarded.
    pub fn bulk_insert(&mut self, mem: &mut PagedMemory, elems: &[GadgetElement]) -> Result<()> {
        let p = self.params();
        if self.len() + elems.len() > p.capacity {
            return Err(Error::NeedsRebuild {
                len: self.len() + elems.len(),
                capacity: p.capacity,
            });
        }
        p.check_elements(elems)?;
        match self {
            Gadget::Recursive(g) => g.bulk_insert(mem, elems),
            Gadget::Base(g) => g.insert(mem, elems),
        }
    }

    /// Backpointers of every stored element whose key equals `key`, in
    /// ascending insertion order.
    pub fn query(&self, mem: &PagedMemory, key: HashedKey) -> Vec<u64> {
        let mut qs = QueryStats::default();
        self.query_with_stats(mem, key, &mut qs)
    }

    pub fn query_with_stats(&self, mem: &PagedMemory, key: HashedKey, qs: &mut QueryStats) -> Vec<u64> {
        debug_assert!(self.params().check_key(&key));
        match self {
            Gadget::Recursive(g) => g.query(mem, key, qs),
            Gadget::Base(g) => g.query(mem, key, qs),
        }
    }

    /// Pure inspection; performs no counted I/O.
    pub fn stats(&self) -> GadgetStats {
        match self {
            Gadget::Recursive(g) => g.stats(),
            Gadget::Base(g) => g.stats(),
        }
    }

    /// Every stored element (uncounted), in storage order.
    pub fn contents(&self, mem: &PagedMemory) -> Vec<GadgetElement> {
        match self {
            Gadget::Recursive(g) => g.contents(mem),
            Gadget::Base(g) => g.contents(mem),
        }
    }

    /// Full sweep of Invariant 1 over every recursion level (uncounted).
    pub fn check_invariant(&self, mem: &PagedMemory) -> InvariantReport {
        match self {
            Gadget::Recursive(g) => g.check_invariant(mem),
            Gadget::Base(g) => g.check_invariant(mem),
        }
    }

    pub fn as_recursive(&self) -> Option<&RecursiveGadget> {
        match self {
            Gadget::Recursive(g) => Some(g),
            Gadget::Base(_) => None,
        }
    }

    pub fn as_base(&self) -> Option<&BaseGadget> {
        match self {
            Gadget::Base(g) => Some(g),
            Gadget::Recursive(_) => None,
        }
    }

    /// Releases every page owned by the gadget.
    pub fn free(self, mem: &mut PagedMemory) -> Result<()> {
        match self {
            Gadget::Recursive(g) => g.free(mem),
            Gadget::Base(g) => g.free(mem),
        }
    }
}
