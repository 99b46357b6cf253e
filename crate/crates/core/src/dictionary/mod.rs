//! The dictionary: a global insertion log indexed by a buffer tree whose
//! nodes each hold a plain pair array and a gadget.
//!
//! Keys are shrunk into `[n^2]` and routed by fixed-width prefix chunks of
//! the shrunk key. Lookups collect candidate log indices node by node and
//! verify each against the original key in the log; the newest verified
//! entry wins, so overwrites and tombstones follow recency. Deletions are
//! tombstones, and a global rebuild compacts the log after `n_max / 2` of
//! them or when the log fills.

mod log;
mod node;
mod params;

use std::cell::Cell;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub use log::{GlobalLog, LogEntry, ReadCache};
pub use node::TreeCounters;
pub use params::{
    predict_costs, t_min_for_lambda, Derived, DictParams, DEFAULT_CACHE_WORDS, DEFAULT_LAMBDA, DEFAULT_N_MAX,
    DEFAULT_PAGE_WORDS, DEFAULT_WORD_BITS,
};

use crate::bits::RecordCodec;
use crate::error::{Error, Result};
use crate::gadget::QueryStats;
use crate::hashing::{FieldLayout, PolyHash, SeedStream};
use crate::io_model::{IoStats, PageId, PagedMemory};
use node::{Ctx, Node};

const MANIFEST_FORMAT: &str = "emdict-manifest-1";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LookupStats {
    pub lookups: u64,
    pub gadget: QueryStats,
    /// Log entries dereferenced.
    pub candidates: u64,
    /// Dereferenced entries whose original key differed.
    pub collisions: u64,
    pub nodes_visited: u64,
}

impl LookupStats {
    fn add(&mut self, o: &LookupStats) {
        self.lookups += o.lookups;
        self.gadget.visits += o.gadget.visits;
        self.gadget.false_positives += o.gadget.false_positives;
        self.gadget.dist_violations += o.gadget.dist_violations;
        self.gadget.base_queries += o.gadget.base_queries;
        self.gadget.base_over_two_pages += o.gadget.base_over_two_pages;
        self.candidates += o.candidates;
        self.collisions += o.collisions;
        self.nodes_visited += o.nodes_visited;
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DictStats {
    pub inserts: u64,
    pub deletes: u64,
    pub log_len: u64,
    pub deletions_since_rebuild: u64,
    pub rebuilds: u64,
    pub tree: TreeCounters,
    pub nodes: u64,
    pub depth: u32,
    pub live_pages: u64,
    pub io: IoStats,
    pub lookup: LookupStats,
}

pub struct Dictionary {
    params: DictParams,
    d: Derived,
    mem: PagedMemory,
    log: GlobalLog,
    root: Node,
    /// Newest pairs, held in cache until a page's worth accumulates.
    batch: Vec<(u64, u64)>,
    batch_cap: usize,
    shrink: PolyHash,
    /// Seeds for future rebuilds.
    run_seeds: SeedStream,
    /// Seed the current index was built from.
    build_seed: u64,
    index_seeds: SeedStream,
    deletions: u64,
    inserts: u64,
    deletes: u64,
    rebuilds: u64,
    counters: TreeCounters,
    lookup_totals: Cell<LookupStats>,
}

impl std::fmt::Debug for Dictionary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dictionary")
            .field("params", &self.params)
            .field("log_len", &self.log.len())
            .field("rebuilds", &self.rebuilds)
            .finish()
    }
}

impl Dictionary {
    pub fn new(params: DictParams) -> Result<Self> {
        let d = params.validate()?;
        let mem = PagedMemory::new(params.page_words, params.word_bits)?;
        let mut run_seeds = SeedStream::new(params.seed);
        let build_seed = run_seeds.next_seed();
        Ok(Self::assemble(params, d, mem, run_seeds, build_seed))
    }

    fn assemble(params: DictParams, d: Derived, mem: PagedMemory, run_seeds: SeedStream, build_seed: u64) -> Self {
        let mut index_seeds = SeedStream::new(build_seed);
        let shrink = PolyHash::for_universe(index_seeds.next_seed(), d.n_max);
        let root = Node::new(0, &d, &mut index_seeds);
        let batch_cap = d.pairs_per_page;
        Dictionary {
            log: GlobalLog::new(mem.lanes()),
            params,
            d,
            mem,
            root,
            batch: Vec::with_capacity(batch_cap),
            batch_cap,
            shrink,
            run_seeds,
            build_seed,
            index_seeds,
            deletions: 0,
            inserts: 0,
            deletes: 0,
            rebuilds: 0,
            counters: TreeCounters::default(),
            lookup_totals: Cell::new(LookupStats::default()),
        }
    }

    pub fn params(&self) -> &DictParams {
        &self.params
    }

    pub fn derived(&self) -> &Derived {
        &self.d
    }

    pub fn memory(&self) -> &PagedMemory {
        &self.mem
    }

    /// Direct access for fault injection and counter resets.
    pub fn memory_mut(&mut self) -> &mut PagedMemory {
        &mut self.mem
    }

    pub fn io_stats(&self) -> IoStats {
        self.mem.io_stats()
    }

    pub fn log_len(&self) -> usize {
        self.log.len()
    }

    /// Full pages of the global log, oldest first.
    pub fn log_pages(&self) -> &[PageId] {
        self.log.pages()
    }

    pub fn insert(&mut self, key: u64, value: u64) -> Result<()> {
        self.inserts += 1;
        self.append(LogEntry::insert(key, value))
    }

    pub fn delete(&mut self, key: u64) -> Result<()> {
        self.deletes += 1;
        self.append(LogEntry::delete(key))?;
        self.deletions += 1;
        if self.deletions >= self.d.n_max / 2 {
            self.rebuild()?;
        }
        Ok(())
    }

    fn append(&mut self, e: LogEntry) -> Result<()> {
        if self.log.len() as u64 >= self.d.log_capacity {
            self.rebuild()?;
        }
        let j = self.log.append(&mut self.mem, e)?;
        match self.index(e.key, j) {
            Err(Error::NeedsRebuild { .. }) => self.rebuild(),
            other => other,
        }
    }

    fn ctx_parts(&self) -> (RecordCodec, FieldLayout) {
        (
            RecordCodec::new(self.d.pair_bits, self.d.page_bits as usize),
            FieldLayout::new(self.d.page_bits, self.d.gadget.t()).expect("validated layout"),
        )
    }

    fn shrunk(&self, key: u64) -> u64 {
        self.shrink.shrink_key(key, self.d.n_max).expect("validated n_max")
    }

    fn index(&mut self, key: u64, j: u64) -> Result<()> {
        let h = self.shrunk(key);
        self.batch.push((h, j));
        if self.batch.len() == self.batch_cap {
            self.flush_batch()?;
        }
        Ok(())
    }

    fn flush_batch(&mut self) -> Result<()> {
        if self.batch.is_empty() {
            return Ok(());
        }
        let batch = std::mem::take(&mut self.batch);
        let (codec, layout) = self.ctx_parts();
        let mut ctx = Ctx {
            d: &self.d,
            codec,
            layout,
            seeds: &mut self.index_seeds,
            counters: &mut self.counters,
        };
        let r = self.root.push(&mut ctx, &mut self.mem, &batch);
        self.batch = batch;
        self.batch.clear();
        r
    }

    pub fn lookup(&self, key: u64) -> Result<Option<u64>> {
        let mut ls = LookupStats::default();
        self.lookup_with_stats(key, &mut ls)
    }

    /// Like [`Self::lookup`], also accumulating instrumentation into `ls`.
    pub fn lookup_with_stats(&self, key: u64, ls: &mut LookupStats) -> Result<Option<u64>> {
        let mut one = LookupStats {
            lookups: 1,
            ..LookupStats::default()
        };
        let found = self.find(key, &mut one)?;
        ls.add(&one);
        let mut total = self.lookup_totals.get();
        total.add(&one);
        self.lookup_totals.set(total);
        Ok(found.filter(|e| !e.tombstone).map(|e| e.value))
    }

    fn find(&self, key: u64, ls: &mut LookupStats) -> Result<Option<LogEntry>> {
        let h = self.shrunk(key);
        let mut cache = ReadCache::default();
        for &(bh, j) in self.batch.iter().rev() {
            if bh == h {
                if let Some(e) = self.verify(key, j, &mut cache, ls)? {
                    return Ok(Some(e));
                }
            }
        }
        let (_, layout) = self.ctx_parts();
        let mut node = Some(&self.root);
        while let Some(n) = node {
            ls.nodes_visited += 1;
            for j in n.candidates(&layout, &self.mem, h, &mut ls.gadget) {
                if let Some(e) = self.verify(key, j, &mut cache, ls)? {
                    return Ok(Some(e));
                }
            }
            node = self.d.chunk(h, n.depth).and_then(|c| n.child(c));
        }
        Ok(None)
    }

    fn verify<'a>(
        &'a self,
        key: u64,
        j: u64,
        cache: &mut ReadCache<'a>,
        ls: &mut LookupStats,
    ) -> Result<Option<LogEntry>> {
        ls.candidates += 1;
        match self.log.get(&self.mem, j, cache)? {
            Some(e) if e.key == key => Ok(Some(e)),
            _ => {
                ls.collisions += 1;
                Ok(None)
            }
        }
    }

    /// Compacts the log to its live set and rebuilds the index under fresh
    /// seeds.
    pub fn rebuild(&mut self) -> Result<()> {
        let entries = self.log.scan(&self.mem)?;
        let mut last: HashMap<u64, usize> = HashMap::with_capacity(entries.len());
        for (j, e) in entries.iter().enumerate() {
            last.insert(e.key, j);
        }
        let mut live: Vec<usize> = last.into_values().filter(|&j| !entries[j].tombstone).collect();
        if live.len() as u64 > self.d.n_max {
            return Err(Error::Full {
                live: live.len() as u64,
                n_max: self.d.n_max,
            });
        }
        live.sort_unstable();

        let old_log = std::mem::replace(&mut self.log, GlobalLog::new(self.mem.lanes()));
        old_log.free(&mut self.mem)?;
        self.build_seed = self.run_seeds.next_seed();
        self.reset_index()?;
        self.deletions = 0;
        self.rebuilds += 1;
        for j in live {
            let e = entries[j];
            let nj = self.log.append(&mut self.mem, e)?;
            self.index(e.key, nj)?;
        }
        Ok(())
    }

    /// Frees the index and starts an empty one from `build_seed`.
    fn reset_index(&mut self) -> Result<()> {
        self.index_seeds = SeedStream::new(self.build_seed);
        self.shrink = PolyHash::for_universe(self.index_seeds.next_seed(), self.d.n_max);
        let root = Node::new(0, &self.d, &mut self.index_seeds);
        std::mem::replace(&mut self.root, root).free(&mut self.mem)?;
        self.batch.clear();
        Ok(())
    }

    pub fn stats(&self) -> DictStats {
        let mut nodes = 0u64;
        let mut depth = 0u32;
        let mut stack = vec![&self.root];
        while let Some(n) = stack.pop() {
            nodes += 1;
            depth = depth.max(n.depth);
            stack.extend(n.children());
        }
        DictStats {
            inserts: self.inserts,
            deletes: self.deletes,
            log_len: self.log.len() as u64,
            deletions_since_rebuild: self.deletions,
            rebuilds: self.rebuilds,
            tree: self.counters.clone(),
            nodes,
            depth,
            live_pages: self.mem.live_pages() as u64,
            io: self.mem.io_stats(),
            lookup: self.lookup_totals.get(),
        }
    }

    /// Pending sizes of the root's children, indexed by routing chunk.
    pub fn root_children_lens(&self) -> Vec<usize> {
        (0..self.d.fanout(0))
            .map(|c| self.root.child(c).map_or(0, |n| n.len()))
            .collect()
    }

    pub fn root_len(&self) -> usize {
        self.root.len()
    }

    pub fn batch_len(&self) -> usize {
        self.batch.len()
    }

    /// Uncounted sweep of every node: pending array mirrors the gadget,
    /// and every gadget satisfies its own invariant.
    pub fn check_invariants(&self) -> Result<Vec<String>> {
        let mut problems = Vec::new();
        let mut stack = vec![&self.root];
        while let Some(n) = stack.pop() {
            if !n.check_mirror(&self.d, &self.mem)? {
                problems.push(format!("node at depth {} does not mirror its pending array", n.depth));
            }
            if let Some(g) = n.gadget() {
                let rep = g.check_invariant(&self.mem);
                if !rep.is_ok() {
                    problems.push(format!("gadget at depth {}: {:?}", n.depth, rep.messages));
                }
            }
            stack.extend(n.children());
        }
        Ok(problems)
    }

    /// Base-gadget page statistics gathered by lookups since creation.
    pub fn lookup_totals(&self) -> LookupStats {
        self.lookup_totals.get()
    }

    pub fn reset_lookup_totals(&self) {
        self.lookup_totals.set(LookupStats::default());
    }

    /// Saves the page file to `path` and a manifest beside it.
    pub fn save(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.log.persist_tail(&mut self.mem)?;
        self.mem.save(path)?;
        fs::write(manifest_path(path), self.manifest())?;
        Ok(())
    }

    fn manifest(&self) -> String {
        let p = &self.params;
        let mut s = String::new();
        let opt = |v: Option<u64>| v.map_or("none".to_string(), |v| v.to_string());
        let _ = writeln!(s, "format={MANIFEST_FORMAT}");
        let _ = writeln!(s, "n_max={}", p.n_max);
        let _ = writeln!(s, "page_words={}", p.page_words);
        let _ = writeln!(s, "word_bits={}", p.word_bits);
        let _ = writeln!(s, "cache_words={}", p.cache_words);
        let _ = writeln!(s, "lambda={}", p.lambda);
        let _ = writeln!(s, "t_min={}", opt(p.t_min));
        let _ = writeln!(s, "m_keys={}", opt(p.m_keys));
        let _ = writeln!(s, "route_bits={}", opt(p.route_bits.map(u64::from)));
        let _ = writeln!(s, "cap_factor={}", p.cap_factor);
        let _ = writeln!(s, "seed={}", p.seed);
        let _ = writeln!(s, "run_seed_state={}", self.run_seeds.state());
        let _ = writeln!(s, "build_seed={}", self.build_seed);
        let _ = writeln!(s, "deletions={}", self.deletions);
        let _ = writeln!(s, "inserts={}", self.inserts);
        let _ = writeln!(s, "deletes={}", self.deletes);
        let _ = writeln!(s, "rebuilds={}", self.rebuilds);
        let _ = writeln!(s, "log_len={}", self.log.len());
        let pages: Vec<String> = self.log.pages().iter().map(|p| p.0.to_string()).collect();
        let _ = writeln!(s, "log_pages={}", pages.join(","));
        let _ = writeln!(s, "log_tail_page={}", opt(self.log.tail_page().map(|p| p.0 as u64)));
        s
    }

    /// Loads a dictionary saved by [`Self::save`]. The index is rebuilt by
    /// replaying the log under the saved seeds; I/O counters start at zero.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(manifest_path(path))?;
        let kv: HashMap<&str, &str> = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split_once('=')
                    .ok_or_else(|| Error::Format(format!("bad manifest line {l:?}")))
            })
            .collect::<Result<_>>()?;
        let get = |k: &str| -> Result<&str> {
            kv.get(k)
                .copied()
                .ok_or_else(|| Error::Format(format!("manifest lacks {k}")))
        };
        let num = |k: &str| -> Result<u64> { get(k)?.parse().map_err(|_| Error::Format(format!("bad {k}"))) };
        let opt = |k: &str| -> Result<Option<u64>> {
            match get(k)? {
                "none" => Ok(None),
                v => v.parse().map(Some).map_err(|_| Error::Format(format!("bad {k}"))),
            }
        };
        if get("format")? != MANIFEST_FORMAT {
            return Err(Error::Format("unknown manifest format".into()));
        }
        let params = DictParams {
            n_max: num("n_max")?,
            page_words: num("page_words")? as usize,
            word_bits: num("word_bits")? as u32,
            cache_words: num("cache_words")?,
            lambda: num("lambda")?,
            t_min: opt("t_min")?,
            m_keys: opt("m_keys")?,
            route_bits: opt("route_bits")?.map(|v| v as u32),
            cap_factor: num("cap_factor")?,
            seed: num("seed")?,
        };
        let d = params.validate()?;
        let mut mem = PagedMemory::load(path)?;
        if mem.page_words() != params.page_words || mem.word_bits() != params.word_bits {
            return Err(Error::Format("page file geometry differs from manifest".into()));
        }
        let log_pages: Vec<PageId> = match get("log_pages")? {
            "" => Vec::new(),
            v => v
                .split(',')
                .map(|p| p.parse().map(PageId).map_err(|_| Error::Format("bad log page".into())))
                .collect::<Result<_>>()?,
        };
        let tail_page = opt("log_tail_page")?.map(|p| PageId(p as u32));
        let keep: std::collections::HashSet<PageId> = log_pages.iter().copied().chain(tail_page).collect();
        for i in 0..mem.page_count() {
            let pid = PageId(i as u32);
            if mem.is_live(pid) && !keep.contains(&pid) {
                mem.free_page(pid)?;
            }
        }
        let log = GlobalLog::restore(&mem, log_pages, tail_page, num("log_len")? as usize)?;
        let run_seeds = SeedStream::new(num("run_seed_state")?);
        let mut dict = Self::assemble(params, d, mem, run_seeds, num("build_seed")?);
        dict.log = log;
        dict.deletions = num("deletions")?;
        dict.inserts = num("inserts")?;
        dict.deletes = num("deletes")?;
        dict.rebuilds = num("rebuilds")?;
        let entries = dict.log.scan(&dict.mem)?;
        for (j, e) in entries.iter().enumerate() {
            dict.index(e.key, j as u64)?;
        }
        dict.counters = TreeCounters::default();
        dict.mem.reset_stats();
        Ok(dict)
    }
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}
