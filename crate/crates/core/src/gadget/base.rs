use super::{decode_block, encode_slot, GadgetElement, GadgetParams, GadgetStats, InvariantReport, QueryStats};
use crate::error::Result;
use crate::hashing::HashedKey;
use crate::io_model::{PageId, PagedMemory};

/// Average bucket fill, as a fraction of a page, above which the table
/// doubles.
const MAX_LOAD_NUM: usize = 3;
const MAX_LOAD_DEN: usize = 4;

#[derive(Clone, Debug, Default)]
struct Bucket {
    pages: Vec<PageId>,
    len: usize,
}

/// Base case of the recursion: a one-page insertion buffer in front of a
/// hash table whose buckets are chains of pages, addressed by
/// `p mod P` with `P` a power of two.
pub struct BaseGadget {
    params: GadgetParams,
    buffer: Option<PageId>,
    buffer_len: usize,
    buckets: Vec<Bucket>,
    len: usize,
    bits_written: u64,
    buffer_flushes: u64,
    table_growths: u64,
}

impl BaseGadget {
    pub fn new(params: GadgetParams) -> Self {
        BaseGadget {
            params,
            buffer: None,
            buffer_len: 0,
            buckets: vec![Bucket::default()],
            len: 0,
            bits_written: 0,
            buffer_flushes: 0,
            table_growths: 0,
        }
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

    pub fn bucket_count(&self) -> usize {
        self.buckets.len()
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer_len
    }

    /// Pages a query for `key` reads.
    pub fn query_pages(&self, key: HashedKey) -> usize {
        (self.buffer_len > 0) as usize + self.buckets[self.bucket_of(&key)].pages.len()
    }

    fn bucket_of(&self, key: &HashedKey) -> usize {
        key.page as usize & (self.buckets.len() - 1)
    }

    fn buckets_for(&self, elements: usize) -> usize {
        let per_bucket = (self.params.elems_per_block * MAX_LOAD_NUM / MAX_LOAD_DEN).max(1);
        let need = elements.div_ceil(per_bucket).max(1).next_power_of_two();
        need.min(self.params.page_bits())
    }

    pub(crate) fn insert(&mut self, mem: &mut PagedMemory, elems: &[GadgetElement]) -> Result<()> {
        if elems.is_empty() {
            return Ok(());
        }
        let epb = self.params.elems_per_block;
        let total = self.buffer_len + elems.len();
        if total < epb {
            let mut image = match (self.buffer, self.buffer_len) {
                (Some(pid), n) if n > 0 => mem.read_page(pid)?.to_vec(),
                _ => vec![0u64; mem.lanes()],
            };
            for (i, e) in elems.iter().enumerate() {
                encode_slot(&self.params, &mut image, self.buffer_len + i, e);
            }
            match self.buffer {
                Some(pid) => mem.write_page(pid, &image)?,
                None => self.buffer = Some(mem.alloc_page_with(&image)?),
            }
            self.buffer_len = total;
        } else {
            let mut items = match (self.buffer, self.buffer_len) {
                (Some(pid), n) if n > 0 => decode_block(&self.params, mem.read_page(pid)?, n),
                _ => Vec::new(),
            };
            items.extend_from_slice(elems);
            self.buffer_len = 0;
            self.distribute(mem, items)?;
            self.buffer_flushes += 1;
        }
        self.len += elems.len();
        self.bits_written += elems.len() as u64 * self.params.elem_bits as u64;
        Ok(())
    }

    fn distribute(&mut self, mem: &mut PagedMemory, items: Vec<GadgetElement>) -> Result<()> {
        let in_table = self.table_len();
        let target = self.buckets_for(in_table + items.len());
        let mut groups: Vec<Vec<GadgetElement>>;
        if target > self.buckets.len() {
            // Rehash: every bucket splits by the next bit of p, preserving
            // insertion order within each new bucket.
            let old = std::mem::take(&mut self.buckets);
            self.buckets = vec![Bucket::default(); target];
            groups = vec![Vec::new(); target];
            for b in old {
                let mut left = b.len;
                for pid in b.pages {
                    let n = left.min(self.params.elems_per_block);
                    for e in decode_block(&self.params, mem.read_page(pid)?, n) {
                        groups[self.bucket_of(&e.key)].push(e);
                    }
                    left -= n;
                    mem.free_page(pid)?;
                }
            }
            self.table_growths += 1;
        } else {
            groups = vec![Vec::new(); self.buckets.len()];
        }
        for e in items {
            groups[self.bucket_of(&e.key)].push(e);
        }
        for (i, group) in groups.into_iter().enumerate() {
            if !group.is_empty() {
                self.append_to_bucket(mem, i, &group)?;
            }
        }
        Ok(())
    }

    fn table_len(&self) -> usize {
        self.buckets.iter().map(|b| b.len).sum()
    }

    fn append_to_bucket(&mut self, mem: &mut PagedMemory, i: usize, group: &[GadgetElement]) -> Result<()> {
        let epb = self.params.elems_per_block;
        let lanes = mem.lanes();
        let bucket = &mut self.buckets[i];
        let mut slot = bucket.len % epb;
        let mut image = if slot > 0 {
            mem.read_page(*bucket.pages.last().unwrap())?.to_vec()
        } else {
            vec![0u64; lanes]
        };
        let mut page_idx = bucket.len / epb;
        for e in group {
            encode_slot(&self.params, &mut image, slot, e);
            slot += 1;
            if slot == epb {
                store(mem, &mut bucket.pages, page_idx, &image)?;
                image.iter_mut().for_each(|w| *w = 0);
                slot = 0;
                page_idx += 1;
            }
        }
        if slot > 0 {
            store(mem, &mut bucket.pages, page_idx, &image)?;
        }
        bucket.len += group.len();
        Ok(())
    }

    pub(crate) fn query(&self, mem: &PagedMemory, key: HashedKey, qs: &mut QueryStats) -> Vec<u64> {
        qs.visits += 1;
        qs.base_queries += 1;
        if self.query_pages(key) > 2 {
            qs.base_over_two_pages += 1;
        }
        let epb = self.params.elems_per_block;
        let mut out = Vec::new();
        let bucket = &self.buckets[self.bucket_of(&key)];
        let mut left = bucket.len;
        for &pid in &bucket.pages {
            let n = left.min(epb);
            left -= n;
            if let Ok(img) = mem.read_page(pid) {
                out.extend(
                    decode_block(&self.params, img, n)
                        .into_iter()
                        .filter(|e| e.key == key)
                        .map(|e| e.backptr),
                );
            }
        }
        if let (Some(pid), n) = (self.buffer, self.buffer_len) {
            if n > 0 {
                if let Ok(img) = mem.read_page(pid) {
                    out.extend(
                        decode_block(&self.params, img, n)
                            .into_iter()
                            .filter(|e| e.key == key)
                            .map(|e| e.backptr),
                    );
                }
            }
        }
        out
    }

    pub fn stats(&self) -> GadgetStats {
        let pages = self.buffer.is_some() as u64 + self.buckets.iter().map(|b| b.pages.len() as u64).sum::<u64>();
        let mut s = GadgetStats {
            elements: self.len as u64,
            pages,
            levels: Vec::new(),
        };
        let l = s.level_mut(0);
        l.instances = 1;
        l.elements = self.len as u64;
        l.bits_written = self.bits_written;
        l.buffer_flushes = self.buffer_flushes;
        l.table_growths = self.table_growths;
        s
    }

    /// Table contents bucket by bucket, then the buffer.
    pub(crate) fn contents(&self, mem: &PagedMemory) -> Vec<GadgetElement> {
        self.tagged_contents(mem).into_iter().map(|(_, e)| e).collect()
    }

    /// Elements with the bucket they are stored in (`None` for the buffer).
    fn tagged_contents(&self, mem: &PagedMemory) -> Vec<(Option<usize>, GadgetElement)> {
        let epb = self.params.elems_per_block;
        let mut out = Vec::with_capacity(self.len);
        for (i, b) in self.buckets.iter().enumerate() {
            let mut left = b.len;
            for &pid in &b.pages {
                let n = left.min(epb);
                left -= n;
                if let Ok(img) = mem.peek(pid) {
                    out.extend(decode_block(&self.params, img, n).into_iter().map(|e| (Some(i), e)));
                }
            }
        }
        if let (Some(pid), n) = (self.buffer, self.buffer_len) {
            if let Ok(img) = mem.peek(pid) {
                out.extend(decode_block(&self.params, img, n).into_iter().map(|e| (None, e)));
            }
        }
        out
    }

    pub(crate) fn check_invariant(&self, mem: &PagedMemory) -> InvariantReport {
        let mut rep = InvariantReport::default();
        let tagged = self.tagged_contents(mem);
        rep.base = tagged.len() as u64;
        rep.violation(
            self.len.abs_diff(tagged.len()) as u64,
            format!("base t={}: stored count differs from length", self.params.t()),
        );
        let misplaced = tagged
            .iter()
            .filter(|(b, e)| matches!(b, Some(i) if *i != self.bucket_of(&e.key)))
            .count();
        rep.violation(
            misplaced as u64,
            format!("base t={}: {misplaced} elements in the wrong bucket", self.params.t()),
        );
        rep.violation(
            (self.buffer_len >= self.params.elems_per_block) as u64,
            format!("base t={}: buffer overfull", self.params.t()),
        );
        rep
    }

    pub(crate) fn free(self, mem: &mut PagedMemory) -> Result<()> {
        if let Some(pid) = self.buffer {
            mem.free_page(pid)?;
        }
        for b in self.buckets {
            for pid in b.pages {
                mem.free_page(pid)?;
            }
        }
        Ok(())
    }
}

fn store(mem: &mut PagedMemory, pages: &mut Vec<PageId>, idx: usize, image: &[u64]) -> Result<()> {
    if idx < pages.len() {
        mem.write_page(pages[idx], image)
    } else {
        pages.push(mem.alloc_page_with(image)?);
        Ok(())
    }
}
