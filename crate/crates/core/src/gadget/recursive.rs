use std::cell::Cell;
use std::collections::HashMap;

use super::{decode_block, encode_slot, Gadget, GadgetElement, GadgetParams, GadgetStats, InvariantReport, QueryStats};
use crate::error::Result;
use crate::hashing::HashedKey;
use crate::io_model::{PageId, PagedMemory};

/// A t-gadget for `t > t_min`.
///
/// The log holds elements at positions `0..len`. Positions
/// `top_lo..top_lo + top_len` are top-compressed in `top`; positions below
/// `top_lo` are bottom-compressed in `bottoms[high(d)]`; positions from
/// `top_lo + top_len` on sit in the partially filled tail block.
pub struct RecursiveGadget {
    params: GadgetParams,
    child: GadgetParams,
    log: Vec<PageId>,
    len: usize,
    top_lo: usize,
    top_len: usize,
    top: Option<Gadget>,
    bottoms: Vec<Option<Gadget>>,
    little_flushes: u64,
    big_flushes: u64,
    bits_written: u64,
    false_positives: Cell<u64>,
    dist_violations: Cell<u64>,
    /// Activity of top gadgets destroyed by big flushes.
    retired: GadgetStats,
}

impl RecursiveGadget {
    pub fn new(params: GadgetParams) -> Result<Self> {
        let child = params.sub_params()?;
        let fanout = 1usize << (params.lg_t / 2);
        Ok(RecursiveGadget {
            params,
            child,
            log: Vec::new(),
            len: 0,
            top_lo: 0,
            top_len: 0,
            top: None,
            bottoms: (0..fanout).map(|_| None).collect(),
            little_flushes: 0,
            big_flushes: 0,
            bits_written: 0,
            false_positives: Cell::new(0),
            dist_violations: Cell::new(0),
            retired: GadgetStats::default(),
        })
    }

    pub fn params(&self) -> &GadgetParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn log_pages(&self) -> &[PageId] {
        &self.log
    }

    /// First log position held by the top gadget.
    pub fn top_lo(&self) -> usize {
        self.top_lo
    }

    pub fn top_len(&self) -> usize {
        self.top_len
    }

    pub fn top(&self) -> Option<&Gadget> {
        self.top.as_ref()
    }

    pub fn bottoms(&self) -> impl Iterator<Item = Option<&Gadget>> {
        self.bottoms.iter().map(|b| b.as_ref())
    }

    /// Element count of every bottom gadget, zero when not instantiated.
    pub fn bottom_lens(&self) -> Vec<usize> {
        self.bottoms.iter().map(|b| b.as_ref().map_or(0, |g| g.len())).collect()
    }

    fn half(&self) -> u32 {
        self.params.lg_t / 2
    }

    fn full_len(&self) -> usize {
        self.len / self.params.elems_per_block * self.params.elems_per_block
    }

    fn top_compress(&self, e: &GadgetElement, block: usize) -> GadgetElement {
        let h = self.half();
        GadgetElement::new(
            HashedKey::new(e.key.page, e.key.dist >> h, e.key.shadow >> h),
            block as u64,
        )
    }

    fn bottom_compress(&self, e: &GadgetElement, block: usize) -> GadgetElement {
        let m = (1u32 << self.half()) - 1;
        GadgetElement::new(
            HashedKey::new(e.key.page, e.key.dist & m, e.key.shadow & m),
            block as u64,
        )
    }

    pub(crate) fn bulk_insert(&mut self, mem: &mut PagedMemory, elems: &[GadgetElement]) -> Result<()> {
        if elems.is_empty() {
            return Ok(());
        }
        let epb = self.params.elems_per_block;
        let mut slot = self.len % epb;
        let mut block_idx = self.len / epb;
        let mut image = if slot > 0 {
            mem.read_page(self.log[block_idx])?.to_vec()
        } else {
            vec![0u64; mem.lanes()]
        };
        // Blocks completed by this call, kept in cache for the flushes.
        let mut fresh: Vec<(usize, Vec<u64>)> = Vec::new();
        for e in elems {
            encode_slot(&self.params, &mut image, slot, e);
            slot += 1;
            if slot == epb {
                self.store_block(mem, block_idx, &image)?;
                let done = std::mem::replace(&mut image, vec![0u64; mem.lanes()]);
                fresh.push((block_idx, done));
                slot = 0;
                block_idx += 1;
            }
        }
        if slot > 0 {
            self.store_block(mem, block_idx, &image)?;
        }
        self.len += elems.len();
        self.bits_written += elems.len() as u64 * self.params.elem_bits as u64;

        if fresh.is_empty() {
            return Ok(());
        }
        let cache: HashMap<usize, &[u64]> = fresh.iter().map(|(i, img)| (*i, img.as_slice())).collect();
        let mut batch = Vec::new();
        for (bi, img) in &fresh {
            self.little_flushes += 1;
            for e in decode_block(&self.params, img, epb) {
                batch.push(self.top_compress(&e, *bi));
                if self.top_len + batch.len() == self.params.top_capacity {
                    self.top_insert(mem, &batch)?;
                    batch.clear();
                    self.big_flush(mem, &cache)?;
                }
            }
        }
        if !batch.is_empty() {
            self.top_insert(mem, &batch)?;
        }
        Ok(())
    }

    fn store_block(&mut self, mem: &mut PagedMemory, idx: usize, image: &[u64]) -> Result<()> {
        if idx < self.log.len() {
            mem.write_page(self.log[idx], image)
        } else {
            let id = mem.alloc_page_with(image)?;
            self.log.push(id);
            Ok(())
        }
    }

    fn top_insert(&mut self, mem: &mut PagedMemory, batch: &[GadgetElement]) -> Result<()> {
        if self.top.is_none() {
            self.top = Some(Gadget::new(self.child.clone())?);
        }
        self.top.as_mut().unwrap().bulk_insert(mem, batch)?;
        self.top_len += batch.len();
        Ok(())
    }

    /// Moves every top element into the bottoms: re-read the full elements
    /// from the log, split them by `high(d)` and bulk insert each group.
    fn big_flush(&mut self, mem: &mut PagedMemory, cache: &HashMap<usize, &[u64]>) -> Result<()> {
        let epb = self.params.elems_per_block;
        let lo = self.top_lo;
        let hi = self.top_lo + self.top_len;
        let h = self.half();
        let mut groups: Vec<Vec<GadgetElement>> = vec![Vec::new(); self.bottoms.len()];
        for bi in lo / epb..hi.div_ceil(epb) {
            let owned;
            let img: &[u64] = match cache.get(&bi) {
                Some(img) => img,
                None => {
                    owned = mem.read_page(self.log[bi])?.to_vec();
                    &owned
                }
            };
            let start = lo.max(bi * epb) - bi * epb;
            let end = hi.min((bi + 1) * epb) - bi * epb;
            for e in &decode_block(&self.params, img, end)[start..] {
                groups[(e.key.dist >> h) as usize].push(self.bottom_compress(e, bi));
            }
        }
        for (i, group) in groups.into_iter().enumerate() {
            if group.is_empty() {
                continue;
            }
            if self.bottoms[i].is_none() {
                self.bottoms[i] = Some(Gadget::new(self.child.clone())?);
            }
            self.bottoms[i].as_mut().unwrap().bulk_insert(mem, &group)?;
        }
        if let Some(top) = self.top.take() {
            self.retired.merge(&top.stats(), 0, false);
            top.free(mem)?;
        }
        self.top_lo = hi;
        self.top_len = 0;
        self.big_flushes += 1;
        Ok(())
    }

    pub(crate) fn query(&self, mem: &PagedMemory, key: HashedKey, qs: &mut QueryStats) -> Vec<u64> {
        qs.visits += 1;
        let h = self.half();
        let m = (1u32 << h) - 1;
        let epb = self.params.elems_per_block;
        let full = self.full_len();
        let hd = key.dist >> h;

        let bottom_key = HashedKey::new(key.page, key.dist & m, key.shadow & m);
        let top_key = HashedKey::new(key.page, hd, key.shadow >> h);
        let from_bottom = match &self.bottoms[hd as usize] {
            Some(g) => g.query_with_stats(mem, bottom_key, qs),
            None => {
                qs.visits += self.child.query_visits();
                Vec::new()
            }
        };
        let from_top = match &self.top {
            Some(g) => g.query_with_stats(mem, top_key, qs),
            None => {
                qs.visits += self.child.query_visits();
                Vec::new()
            }
        };

        let mut blocks: Vec<u64> = from_bottom.iter().chain(&from_top).copied().collect();
        blocks.sort_unstable();
        blocks.dedup();

        let mut out = Vec::new();
        let mut attributed = 0u64;
        let mut matches = 0u64;
        for &bi in &blocks {
            let bi = bi as usize;
            let Some(&pid) = self.log.get(bi) else {
                continue;
            };
            let Ok(img) = mem.read_page(pid) else {
                continue;
            };
            for (slot, e) in decode_block(&self.params, img, epb).into_iter().enumerate() {
                let pos = bi * epb + slot;
                if pos >= full {
                    break;
                }
                let compressed_hit = if pos < self.top_lo {
                    self.bottom_compress(&e, bi).key == bottom_key && (e.key.dist >> h) == hd
                } else {
                    self.top_compress(&e, bi).key == top_key
                };
                if compressed_hit {
                    attributed += 1;
                    if e.key == key {
                        matches += 1;
                        out.push(e.backptr);
                    }
                }
            }
        }
        let fp = attributed - matches;
        qs.false_positives += fp;
        self.false_positives.set(self.false_positives.get() + fp);

        // Occurrences the sub-gadgets reported that the log cannot back up.
        let occurrences = (from_bottom.len() + from_top.len()) as u64;
        let violations = occurrences.saturating_sub(attributed);
        qs.dist_violations += violations;
        self.dist_violations.set(self.dist_violations.get() + violations);

        if self.len > full {
            if let Ok(img) = mem.read_page(self.log[full / epb]) {
                for e in decode_block(&self.params, img, self.len - full) {
                    if e.key == key {
                        out.push(e.backptr);
                    }
                }
            }
        }
        out
    }

    pub fn stats(&self) -> GadgetStats {
        let mut s = GadgetStats {
            elements: self.len as u64,
            pages: self.log.len() as u64,
            levels: Vec::new(),
        };
        {
            let l = s.level_mut(0);
            l.instances = 1;
            l.elements = self.len as u64;
            l.bits_written = self.bits_written;
            l.little_flushes = self.little_flushes;
            l.big_flushes = self.big_flushes;
            l.false_positives = self.false_positives.get();
            l.dist_violations = self.dist_violations.get();
        }
        s.merge(&self.retired, 1, false);
        for g in self.top.iter().chain(self.bottoms.iter().flatten()) {
            s.merge(&g.stats(), 1, true);
        }
        s
    }

    pub(crate) fn contents(&self, mem: &PagedMemory) -> Vec<GadgetElement> {
        let epb = self.params.elems_per_block;
        let mut out = Vec::with_capacity(self.len);
        for (bi, &pid) in self.log.iter().enumerate() {
            let count = (self.len - bi * epb).min(epb);
            match mem.peek(pid) {
                Ok(img) => out.extend(decode_block(&self.params, img, count)),
                Err(_) => break,
            }
        }
        out
    }

    pub(crate) fn check_invariant(&self, mem: &PagedMemory) -> InvariantReport {
        let mut rep = InvariantReport::default();
        let epb = self.params.elems_per_block;
        let full = self.full_len();
        let h = self.half();
        let elems = self.contents(mem);
        rep.violation(
            (self.len - elems.len()) as u64,
            format!("t={}: log pages unreadable", self.params.t()),
        );
        rep.violation(
            (self.top_lo + self.top_len != full) as u64,
            format!(
                "t={}: top range {}..{} does not end at full length {full}",
                self.params.t(),
                self.top_lo,
                self.top_lo + self.top_len
            ),
        );
        rep.violation(
            (self.top_len >= self.params.top_capacity) as u64,
            format!("t={}: top holds {} >= b sqrt t elements", self.params.t(), self.top_len),
        );

        let mut want_top: HashMap<GadgetElement, i64> = HashMap::new();
        let mut want_bottom: Vec<HashMap<GadgetElement, i64>> = vec![HashMap::new(); self.bottoms.len()];
        for (pos, e) in elems.iter().enumerate() {
            let bi = pos / epb;
            if pos >= full {
                rep.tail += 1;
            } else if pos >= self.top_lo {
                rep.top += 1;
                *want_top.entry(self.top_compress(e, bi)).or_default() += 1;
            } else {
                rep.bottom += 1;
                *want_bottom[(e.key.dist >> h) as usize]
                    .entry(self.bottom_compress(e, bi))
                    .or_default() += 1;
            }
        }

        let diff = |want: &mut HashMap<GadgetElement, i64>, have: Vec<GadgetElement>| -> u64 {
            for e in have {
                *want.entry(e).or_default() -= 1;
            }
            want.values().map(|c| c.unsigned_abs()).sum()
        };
        let top_have = self.top.as_ref().map(|g| g.contents(mem)).unwrap_or_default();
        rep.violation(
            diff(&mut want_top, top_have),
            format!("t={}: top gadget content differs from log", self.params.t()),
        );
        for (i, want) in want_bottom.iter_mut().enumerate() {
            let have = self.bottoms[i].as_ref().map(|g| g.contents(mem)).unwrap_or_default();
            rep.violation(
                diff(want, have),
                format!("t={}: bottom {i} content differs from log", self.params.t()),
            );
        }
        for g in self.top.iter().chain(self.bottoms.iter().flatten()) {
            rep.absorb_violations(g.check_invariant(mem));
        }
        rep
    }

    pub(crate) fn free(self, mem: &mut PagedMemory) -> Result<()> {
        for pid in self.log {
            mem.free_page(pid)?;
        }
        for g in self.top.into_iter().chain(self.bottoms.into_iter().flatten()) {
            g.free(mem)?;
        }
        Ok(())
    }
}
