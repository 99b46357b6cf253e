use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;

use crate::dictionary::{predict_costs, Dictionary, DEFAULT_WORD_BITS};
use crate::error::{bad_params, Error, Result};
use crate::io_model::{IoStats, PagedMemory};
use crate::reference::BaselineBufferTree;

use super::workload::{Op, WorkloadSpec};

pub const CSV_HEADER: &str = "structure,n,B,M,lambda,upd_reads,upd_writes,q_reads,space_pages,rebuilds,pred_tu,pred_tq";
pub const TRACE_HEADER: &str = "structure,op,kind,reads,writes,pages";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Structure {
    New,
    Baseline,
}

impl Structure {
    pub fn name(self) -> &'static str {
        match self {
            Structure::New => "new",
            Structure::Baseline => "baseline",
        }
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which structures a command runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Selection {
    New,
    Baseline,
    #[default]
    Both,
}

impl Selection {
    pub fn structures(self) -> &'static [Structure] {
        match self {
            Selection::New => &[Structure::New],
            Selection::Baseline => &[Structure::Baseline],
            Selection::Both => &[Structure::New, Structure::Baseline],
        }
    }
}

impl FromStr for Selection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "new" => Ok(Selection::New),
            "baseline" => Ok(Selection::Baseline),
            "both" => Ok(Selection::Both),
            _ => Err(bad_params(format!("unknown structure {s:?}"))),
        }
    }
}

/// The operations shared by the dictionary and the baseline.
pub trait Store {
    fn insert(&mut self, key: u64, value: u64) -> Result<()>;
    fn delete(&mut self, key: u64) -> Result<()>;
    fn lookup(&self, key: u64) -> Result<Option<u64>>;
    fn memory(&self) -> &PagedMemory;
    fn memory_mut(&mut self) -> &mut PagedMemory;
    fn rebuilds(&self) -> u64;

    fn apply(&mut self, op: Op) -> Result<Option<u64>> {
        match op {
            Op::Insert(k, v) => self.insert(k, v).map(|_| None),
            Op::Delete(k) => self.delete(k).map(|_| None),
            Op::Lookup(k) => self.lookup(k),
        }
    }
}

impl Store for Dictionary {
    fn insert(&mut self, key: u64, value: u64) -> Result<()> {
        Dictionary::insert(self, key, value)
    }
    fn delete(&mut self, key: u64) -> Result<()> {
        Dictionary::delete(self, key)
    }
    fn lookup(&self, key: u64) -> Result<Option<u64>> {
        Dictionary::lookup(self, key)
    }
    fn memory(&self) -> &PagedMemory {
        Dictionary::memory(self)
    }
    fn memory_mut(&mut self) -> &mut PagedMemory {
        Dictionary::memory_mut(self)
    }
    fn rebuilds(&self) -> u64 {
        self.stats().rebuilds
    }
}

impl Store for BaselineBufferTree {
    fn insert(&mut self, key: u64, value: u64) -> Result<()> {
        BaselineBufferTree::insert(self, key, value)
    }
    fn delete(&mut self, key: u64) -> Result<()> {
        BaselineBufferTree::delete(self, key)
    }
    fn lookup(&self, key: u64) -> Result<Option<u64>> {
        BaselineBufferTree::lookup(self, key)
    }
    fn memory(&self) -> &PagedMemory {
        BaselineBufferTree::memory(self)
    }
    fn memory_mut(&mut self) -> &mut PagedMemory {
        BaselineBufferTree::memory_mut(self)
    }
    fn rebuilds(&self) -> u64 {
        0
    }
}

/// Builds `structure` for `spec`. The baseline uses `spec.lambda` as its
/// fan-out.
pub fn build(structure: Structure, spec: &WorkloadSpec) -> Result<Box<dyn Store + Send>> {
    Ok(match structure {
        Structure::New => Box::new(Dictionary::new(spec.dict_params())?),
        Structure::Baseline => Box::new(BaselineBufferTree::new(
            spec.lambda as usize,
            spec.page_words,
            DEFAULT_WORD_BITS,
        )?),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub structure: Structure,
    pub n: u64,
    pub page_words: usize,
    pub cache_words: u64,
    pub lambda: u64,
    /// Per update op.
    pub upd_reads: f64,
    pub upd_writes: f64,
    /// Per lookup op.
    pub q_reads: f64,
    pub space_pages: usize,
    pub rebuilds: u64,
    pub pred_tu: f64,
    pub pred_tq: f64,
    pub updates: u64,
    pub lookups: u64,
}

impl BenchRow {
    pub fn upd_total(&self) -> f64 {
        self.upd_reads + self.upd_writes
    }

    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{:.6},{:.6},{:.6},{},{},{:.6},{:.6}",
            self.structure,
            self.n,
            self.page_words,
            self.cache_words,
            self.lambda,
            self.upd_reads,
            self.upd_writes,
            self.q_reads,
            self.space_pages,
            self.rebuilds,
            self.pred_tu,
            self.pred_tq
        )
    }
}

fn per(x: u64, n: u64) -> f64 {
    if n == 0 {
        0.0
    } else {
        x as f64 / n as f64
    }
}

/// Runs the workload of `spec` on one structure and measures it.
pub fn run_point(structure: Structure, spec: &WorkloadSpec) -> Result<BenchRow> {
    let mut store = build(structure, spec)?;
    let mut upd = IoStats::default();
    let mut q_reads = 0u64;
    let (mut updates, mut lookups) = (0u64, 0u64);
    for op in spec.ops() {
        let before = store.memory().io_stats();
        store.apply(op)?;
        let d = store.memory().io_stats() - before;
        if op.is_update() {
            updates += 1;
            upd.reads += d.reads;
            upd.writes += d.writes;
        } else {
            lookups += 1;
            q_reads += d.reads;
        }
    }
    let (pred_tu, pred_tq) = predict_costs(spec.n_max, spec.page_words as u64, spec.cache_words, spec.lambda)
        .unwrap_or((f64::NAN, f64::NAN));
    Ok(BenchRow {
        structure,
        n: spec.n_max,
        page_words: spec.page_words,
        cache_words: spec.cache_words,
        lambda: spec.lambda,
        upd_reads: per(upd.reads, updates),
        upd_writes: per(upd.writes, updates),
        q_reads: per(q_reads, lookups),
        space_pages: store.memory().live_pages(),
        rebuilds: store.rebuilds(),
        pred_tu,
        pred_tq,
        updates,
        lookups,
    })
}

/// One row per (structure, lambda), in parameter order.
pub fn sweep(base: &WorkloadSpec, lambdas: &[u64], selection: Selection) -> Result<Vec<BenchRow>> {
    let mut points = Vec::new();
    for &lambda in lambdas {
        predict_costs(base.n_max, base.page_words as u64, base.cache_words, lambda)?;
        let spec = WorkloadSpec { lambda, ..base.clone() };
        for &s in selection.structures() {
            points.push((s, spec.clone()));
        }
    }
    points.par_iter().map(|(s, spec)| run_point(*s, spec)).collect()
}

pub fn write_csv<W: Write>(rows: &[BenchRow], out: &mut W) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.csv())?;
    }
    Ok(())
}

/// Per-op I/O lines. Returns the summed reads and writes of each structure.
pub fn trace<W: Write>(spec: &WorkloadSpec, selection: Selection, out: &mut W) -> Result<Vec<IoStats>> {
    writeln!(out, "{TRACE_HEADER}")?;
    let mut sums = Vec::new();
    for &s in selection.structures() {
        let mut store = build(s, spec)?;
        let mut sum = IoStats::default();
        for (i, op) in spec.ops().enumerate() {
            let before = store.memory().io_stats();
            store.apply(op)?;
            let d = store.memory().io_stats() - before;
            sum.reads += d.reads;
            sum.writes += d.writes;
            writeln!(
                out,
                "{s},{i},{},{},{},{}",
                op.kind(),
                d.reads,
                d.writes,
                store.memory().page_count()
            )?;
        }
        sums.push(sum);
    }
    Ok(sums)
}
