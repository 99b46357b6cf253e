use std::collections::HashMap;

use crate::dictionary::{GlobalLog, LogEntry, ReadCache};
use crate::error::{bad_params, Result};
use crate::io_model::{IoStats, PageId, PagedMemory};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BaselineStats {
    pub inserts: u64,
    pub deletes: u64,
    pub height: u32,
    pub internal_nodes: usize,
    pub leaves: usize,
    pub flushes: u64,
    pub splits: u64,
    pub live_pages: usize,
    pub io: IoStats,
}

#[derive(Debug)]
enum BNode {
    Internal {
        buf: Option<PageId>,
        buf_len: usize,
        /// `pivots[i]` is the smallest key routed to `children[i + 1]`.
        pivots: Vec<u64>,
        children: Vec<usize>,
    },
    Leaf {
        page: Option<PageId>,
        len: usize,
    },
}

/// Classic buffer tree over full `(key, log index)` pairs, two words each.
/// Internal nodes carry a one-page buffer and up to `fanout` children;
/// leaves are single sorted pages that split B-tree style. The root buffer
/// lives in cache.
#[derive(Debug)]
pub struct BaselineBufferTree {
    fanout: usize,
    cap: usize,
    mem: PagedMemory,
    log: GlobalLog,
    nodes: Vec<BNode>,
    root: usize,
    root_buf: Vec<(u64, u64)>,
    height: u32,
    inserts: u64,
    deletes: u64,
    flushes: u64,
    splits: u64,
}

type Splits = Vec<(u64, usize)>;

impl BaselineBufferTree {
    pub fn new(fanout: usize, page_words: usize, word_bits: u32) -> Result<Self> {
        let mem = PagedMemory::new(page_words, word_bits)?;
        if word_bits != 64 {
            return Err(bad_params("baseline requires 64-bit words"));
        }
        if fanout < 2 || fanout > page_words {
            return Err(bad_params(format!("fan-out {fanout} outside [2, B = {page_words}]")));
        }
        let cap = mem.lanes() / 2;
        if cap < 2 {
            return Err(bad_params("pages must hold at least two pairs"));
        }
        let log = GlobalLog::new(mem.lanes());
        Ok(BaselineBufferTree {
            fanout,
            cap,
            mem,
            log,
            nodes: vec![
                BNode::Internal {
                    buf: None,
                    buf_len: 0,
                    pivots: Vec::new(),
                    children: vec![1],
                },
                BNode::Leaf { page: None, len: 0 },
            ],
            root: 0,
            root_buf: Vec::new(),
            height: 1,
            inserts: 0,
            deletes: 0,
            flushes: 0,
            splits: 0,
        })
    }

    pub fn fanout(&self) -> usize {
        self.fanout
    }

    /// Pairs per buffer or leaf page.
    pub fn pairs_per_page(&self) -> usize {
        self.cap
    }

    pub fn memory(&self) -> &PagedMemory {
        &self.mem
    }

    pub fn memory_mut(&mut self) -> &mut PagedMemory {
        &mut self.mem
    }

    pub fn io_stats(&self) -> IoStats {
        self.mem.io_stats()
    }

    /// Full pages of the log, oldest first.
    pub fn log_pages(&self) -> &[PageId] {
        self.log.pages()
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn insert(&mut self, key: u64, value: u64) -> Result<()> {
        self.inserts += 1;
        self.append(LogEntry::insert(key, value))
    }

    pub fn delete(&mut self, key: u64) -> Result<()> {
        self.deletes += 1;
        self.append(LogEntry::delete(key))
    }

    fn append(&mut self, e: LogEntry) -> Result<()> {
        let j = self.log.append(&mut self.mem, e)?;
        self.root_buf.push((e.key, j));
        if self.root_buf.len() == self.cap {
            let pairs = std::mem::take(&mut self.root_buf);
            let splits = self.distribute(self.root, pairs)?;
            if !splits.is_empty() {
                let mut children = vec![self.root];
                let mut pivots = Vec::new();
                for (p, id) in splits {
                    pivots.push(p);
                    children.push(id);
                }
                self.nodes.push(BNode::Internal {
                    buf: None,
                    buf_len: 0,
                    pivots,
                    children,
                });
                self.root = self.nodes.len() - 1;
                self.height += 1;
            }
        }
        Ok(())
    }

    fn push(&mut self, id: usize, pairs: Vec<(u64, u64)>) -> Result<Splits> {
        match &self.nodes[id] {
            BNode::Internal { buf, buf_len, .. } => {
                let (buf, buf_len) = (*buf, *buf_len);
                let mut all = match buf {
                    Some(pid) if buf_len > 0 => read_pairs(self.mem.read_page(pid)?, buf_len),
                    _ => Vec::new(),
                };
                all.extend(pairs);
                dedupe(&mut all);
                if all.len() > self.cap {
                    return self.distribute(id, all);
                }
                let img = write_pairs(self.mem.lanes(), &all);
                let pid = match buf {
                    Some(pid) => {
                        self.mem.write_page(pid, &img)?;
                        pid
                    }
                    None => self.mem.alloc_page_with(&img)?,
                };
                self.nodes[id] = match std::mem::replace(&mut self.nodes[id], BNode::Leaf { page: None, len: 0 }) {
                    BNode::Internal { pivots, children, .. } => BNode::Internal {
                        buf: Some(pid),
                        buf_len: all.len(),
                        pivots,
                        children,
                    },
                    leaf => leaf,
                };
                Ok(Vec::new())
            }
            BNode::Leaf { page, len } => {
                let (page, len) = (*page, *len);
                let mut all = match page {
                    Some(pid) if len > 0 => read_pairs(self.mem.read_page(pid)?, len),
                    _ => Vec::new(),
                };
                all.extend(pairs);
                dedupe(&mut all);
                let parts = if all.len() <= self.cap {
                    1
                } else {
                    self.splits += 1;
                    (4 * all.len()).div_ceil(3 * self.cap).max(2)
                };
                let mut splits = Vec::new();
                for (r, chunk) in even_chunks(&all, parts).enumerate() {
                    let img = write_pairs(self.mem.lanes(), chunk);
                    if r == 0 {
                        let pid = match page {
                            Some(pid) => {
                                self.mem.write_page(pid, &img)?;
                                pid
                            }
                            None => self.mem.alloc_page_with(&img)?,
                        };
                        self.nodes[id] = BNode::Leaf {
                            page: Some(pid),
                            len: chunk.len(),
                        };
                    } else {
                        let pid = self.mem.alloc_page_with(&img)?;
                        self.nodes.push(BNode::Leaf {
                            page: Some(pid),
                            len: chunk.len(),
                        });
                        splits.push((chunk[0].0, self.nodes.len() - 1));
                    }
                }
                Ok(splits)
            }
        }
    }

    /// Empties the buffer of internal node `id`, whose contents together
    /// with the incoming pairs are `all`, into its children.
    fn distribute(&mut self, id: usize, mut all: Vec<(u64, u64)>) -> Result<Splits> {
        dedupe(&mut all);
        self.flushes += 1;
        let (pivots, children) = match &mut self.nodes[id] {
            BNode::Internal {
                buf_len,
                pivots,
                children,
                ..
            } => {
                *buf_len = 0;
                (pivots.clone(), children.clone())
            }
            BNode::Leaf { .. } => unreachable!("distribute on a leaf"),
        };
        // `all` is sorted by key, so each child's share is a contiguous run.
        let mut groups: Vec<(usize, Vec<(u64, u64)>)> = Vec::new();
        for pair in all {
            let c = pivots.partition_point(|&p| p <= pair.0);
            match groups.last_mut() {
                Some((gc, g)) if *gc == c => g.push(pair),
                _ => groups.push((c, vec![pair])),
            }
        }
        let mut pivots = pivots;
        let mut children = children;
        for (c, group) in groups.into_iter().rev() {
            let splits = self.push(children[c], group)?;
            for (k, (p, nid)) in splits.into_iter().enumerate() {
                pivots.insert(c + k, p);
                children.insert(c + 1 + k, nid);
            }
        }
        let parts = if children.len() > self.fanout {
            self.splits += 1;
            children.len().div_ceil(self.fanout).max(2)
        } else {
            1
        };
        let bounds: Vec<usize> = (0..=parts).map(|r| r * children.len() / parts).collect();
        let mut out = Vec::new();
        for r in (1..parts).rev() {
            let (a, z) = (bounds[r], bounds[r + 1]);
            let node = BNode::Internal {
                buf: None,
                buf_len: 0,
                pivots: pivots[a..z - 1].to_vec(),
                children: children[a..z].to_vec(),
            };
            self.nodes.push(node);
            out.push((pivots[a - 1], self.nodes.len() - 1));
        }
        out.reverse();
        let keep = bounds[1];
        pivots.truncate(keep - 1);
        children.truncate(keep);
        if let BNode::Internal {
            pivots: p,
            children: ch,
            ..
        } = &mut self.nodes[id]
        {
            *p = pivots;
            *ch = children;
        }
        Ok(out)
    }

    pub fn lookup(&self, key: u64) -> Result<Option<u64>> {
        let mut found = self.root_buf.iter().rev().find(|p| p.0 == key).map(|p| p.1);
        let mut id = self.root;
        while found.is_none() {
            match &self.nodes[id] {
                BNode::Internal {
                    buf,
                    buf_len,
                    pivots,
                    children,
                } => {
                    if let (Some(pid), n) = (buf, *buf_len) {
                        if n > 0 {
                            found = find_pair(self.mem.read_page(*pid)?, n, key);
                        }
                    }
                    id = children[pivots.partition_point(|&p| p <= key)];
                }
                BNode::Leaf { page, len } => {
                    if let (Some(pid), n) = (page, *len) {
                        if n > 0 {
                            found = find_pair(self.mem.read_page(*pid)?, n, key);
                        }
                    }
                    break;
                }
            }
        }
        let Some(j) = found else {
            return Ok(None);
        };
        let mut cache = ReadCache::default();
        match self.log.get(&self.mem, j, &mut cache)? {
            Some(e) if e.key == key && !e.tombstone => Ok(Some(e.value)),
            _ => Ok(None),
        }
    }

    pub fn stats(&self) -> BaselineStats {
        let leaves = self.nodes.iter().filter(|n| matches!(n, BNode::Leaf { .. })).count();
        BaselineStats {
            inserts: self.inserts,
            deletes: self.deletes,
            height: self.height,
            internal_nodes: self.nodes.len() - leaves,
            leaves,
            flushes: self.flushes,
            splits: self.splits,
            live_pages: self.mem.live_pages(),
            io: self.mem.io_stats(),
        }
    }

    /// Uncounted structural check: page occupancy, key ranges, and that
    /// the newest log index of every key is held exactly once.
    pub fn check_invariants(&self) -> Result<Vec<String>> {
        let mut msgs = Vec::new();
        let mut seen: HashMap<u64, usize> = HashMap::new();
        for &(_, j) in &self.root_buf {
            *seen.entry(j).or_default() += 1;
        }
        let mut stack = vec![(self.root, 0u64, u64::MAX, true)];
        while let Some((id, lo, hi, is_root)) = stack.pop() {
            let (page, len, kind) = match &self.nodes[id] {
                BNode::Internal {
                    buf,
                    buf_len,
                    pivots,
                    children,
                } => {
                    if is_root && *buf_len > 0 {
                        msgs.push("root holds a paged buffer".into());
                    }
                    if children.len() > self.fanout || children.len() != pivots.len() + 1 {
                        msgs.push(format!(
                            "node {id}: {} children, {} pivots",
                            children.len(),
                            pivots.len()
                        ));
                    }
                    for (i, &c) in children.iter().enumerate() {
                        let clo = if i == 0 { lo } else { pivots[i - 1] };
                        let chi = pivots.get(i).copied().unwrap_or(hi);
                        stack.push((c, clo, chi, false));
                    }
                    (*buf, *buf_len, "buffer")
                }
                BNode::Leaf { page, len } => (*page, *len, "leaf"),
            };
            if len > self.cap {
                msgs.push(format!("node {id}: {kind} of {len} pairs"));
            }
            if let (Some(pid), true) = (page, len > 0) {
                for (k, j) in read_pairs(self.mem.peek(pid)?, len.min(self.cap)) {
                    if k < lo || (k >= hi && hi != u64::MAX) {
                        msgs.push(format!("node {id}: key {k} outside [{lo}, {hi})"));
                    }
                    *seen.entry(j).or_default() += 1;
                }
            }
        }
        let mut newest: HashMap<u64, u64> = HashMap::new();
        for (j, e) in self.log.scan(&self.mem)?.into_iter().enumerate() {
            newest.insert(e.key, j as u64);
        }
        for (&j, &n) in &seen {
            if n > 1 {
                msgs.push(format!("log index {j} held {n} times"));
            }
        }
        for (k, j) in newest {
            if !seen.contains_key(&j) {
                msgs.push(format!("newest entry {j} of key {k} is missing"));
            }
        }
        Ok(msgs)
    }
}

/// Sorts by key and keeps only the newest pair per key.
fn dedupe(pairs: &mut Vec<(u64, u64)>) {
    pairs.sort_unstable();
    let mut out: Vec<(u64, u64)> = Vec::with_capacity(pairs.len());
    for &p in pairs.iter() {
        match out.last_mut() {
            Some(last) if last.0 == p.0 => *last = p,
            _ => out.push(p),
        }
    }
    *pairs = out;
}

fn even_chunks<T>(v: &[T], parts: usize) -> impl Iterator<Item = &[T]> {
    (0..parts).map(move |r| &v[r * v.len() / parts..(r + 1) * v.len() / parts])
}

fn read_pairs(img: &[u64], n: usize) -> Vec<(u64, u64)> {
    (0..n).map(|i| (img[2 * i], img[2 * i + 1])).collect()
}

fn write_pairs(lanes: usize, pairs: &[(u64, u64)]) -> Vec<u64> {
    let mut img = vec![0u64; lanes];
    for (i, &(k, j)) in pairs.iter().enumerate() {
        img[2 * i] = k;
        img[2 * i + 1] = j;
    }
    img
}

fn find_pair(img: &[u64], n: usize, key: u64) -> Option<u64> {
    (0..n).filter(|&i| img[2 * i] == key).map(|i| img[2 * i + 1]).max()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn root_buffer_is_free() {
        let mut t = BaselineBufferTree::new(4, 64, 64).unwrap();
        for k in 0..31 {
            t.insert(k, k).unwrap();
        }
        assert_eq!(t.io_stats().reads, 0);
        assert_eq!(t.io_stats().writes, 1);
        assert_eq!(t.lookup(5).unwrap(), Some(5));
        assert_eq!(t.io_stats().reads, 1);
    }

    #[test]
    fn splits_keep_order() {
        let mut t = BaselineBufferTree::new(2, 64, 64).unwrap();
        for k in 0..5000u64 {
            t.insert(k.wrapping_mul(0x9E37_79B9_7F4A_7C15), k).unwrap();
        }
        assert!(t.height() > 4);
        assert!(t.check_invariants().unwrap().is_empty());
        for k in (0..5000u64).step_by(37) {
            assert_eq!(t.lookup(k.wrapping_mul(0x9E37_79B9_7F4A_7C15)).unwrap(), Some(k));
        }
    }

    #[test]
    fn rejects_fanout_out_of_range() {
        assert!(BaselineBufferTree::new(1, 64, 64).is_err());
        assert!(BaselineBufferTree::new(65, 64, 64).is_err());
    }
}
