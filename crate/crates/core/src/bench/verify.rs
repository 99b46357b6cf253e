use std::fmt;
use std::path::PathBuf;

use crate::dictionary::Dictionary;
use crate::error::Result;
use crate::reference::{BaselineBufferTree, OracleMap};

use super::run::{Selection, Store};
use super::workload::{Op, WorkloadSpec};

#[derive(Clone, Debug, Default)]
pub struct VerifyOptions {
    pub selection: Selection,
    /// Saved after the run, reloaded, and rechecked against the oracle.
    pub page_file: Option<PathBuf>,
    /// Corrupts the first log page of every structure after this op.
    pub fault_after: Option<u64>,
}

/// One structure's answer to a lookup.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Answer {
    NotRun,
    Found(u64),
    NotFound,
    Failed(String),
}

impl From<Result<Option<u64>>> for Answer {
    fn from(r: Result<Option<u64>>) -> Self {
        match r {
            Ok(Some(v)) => Answer::Found(v),
            Ok(None) => Answer::NotFound,
            Err(e) => Answer::Failed(e.to_string()),
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Answer::NotRun => f.write_str("-"),
            Answer::Found(v) => write!(f, "{v}"),
            Answer::NotFound => f.write_str("not-found"),
            Answer::Failed(e) => write!(f, "error({e})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Disagreement {
    /// Index of the failing op; equal to the op count for the reload check.
    pub op_index: u64,
    pub key: u64,
    pub dictionary: Answer,
    pub baseline: Answer,
    pub oracle: Answer,
}

impl fmt::Display for Disagreement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "op {} key {}: dictionary={} baseline={} oracle={}",
            self.op_index, self.key, self.dictionary, self.baseline, self.oracle
        )
    }
}

#[derive(Clone, Debug, Default)]
pub struct VerifyReport {
    pub ops: u64,
    pub lookups: u64,
    pub reload_checked: u64,
    pub disagreement: Option<Disagreement>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.disagreement.is_none()
    }
}

fn corrupt(store: &mut dyn Store, page: Option<crate::io_model::PageId>) -> Result<()> {
    if let Some(pid) = page {
        for (i, w) in store.memory_mut().tamper(pid)?.iter_mut().enumerate() {
            if i % 2 == 0 {
                *w ^= 0x5A5A_5A5A_5A5A_5A5A;
            }
        }
    }
    Ok(())
}

/// Runs the selected structures and the oracle in lockstep, comparing
/// every lookup. An update that fails is reported as a disagreement at
/// its op index.
pub fn verify(spec: &WorkloadSpec, opts: &VerifyOptions) -> Result<VerifyReport> {
    let structures = opts.selection.structures();
    let mut dict = if structures.contains(&super::Structure::New) {
        Some(Dictionary::new(spec.dict_params())?)
    } else {
        None
    };
    let mut base = if structures.contains(&super::Structure::Baseline) {
        Some(BaselineBufferTree::new(spec.lambda as usize, spec.page_words, 64)?)
    } else {
        None
    };
    let mut oracle = OracleMap::new();
    let mut report = VerifyReport::default();

    for (i, op) in spec.ops().enumerate() {
        let i = i as u64;
        report.ops += 1;
        let d = dict.as_mut().map(|s| Answer::from(Store::apply(s, op)));
        let b = base.as_mut().map(|s| Answer::from(Store::apply(s, op)));
        let o = match op {
            Op::Insert(k, v) => {
                oracle.insert(k, v);
                Answer::NotFound
            }
            Op::Delete(k) => {
                oracle.delete(k);
                Answer::NotFound
            }
            Op::Lookup(k) => {
                report.lookups += 1;
                Answer::from(Ok(oracle.lookup(k)))
            }
        };
        // Updates answer NotFound when they succeed.
        let bad = |a: &Option<Answer>| a.as_ref().is_some_and(|a| *a != o);
        if bad(&d) || bad(&b) {
            report.disagreement = Some(Disagreement {
                op_index: i,
                key: op.key(),
                dictionary: d.unwrap_or(Answer::NotRun),
                baseline: b.unwrap_or(Answer::NotRun),
                oracle: o,
            });
            return Ok(report);
        }
        if opts.fault_after == Some(i) {
            if let Some(s) = dict.as_mut() {
                let page = s.log_pages().first().copied();
                corrupt(s, page)?;
            }
            if let Some(s) = base.as_mut() {
                let page = s.log_pages().first().copied();
                corrupt(s, page)?;
            }
        }
    }

    if let (Some(path), Some(mut d)) = (opts.page_file.as_ref(), dict) {
        d.save(path)?;
        drop(d);
        let back = Dictionary::load(path)?;
        for key in oracle.live_keys() {
            report.reload_checked += 1;
            let got = Answer::from(back.lookup(key));
            let want = Answer::from(Ok(oracle.lookup(key)));
            if got != want {
                report.disagreement = Some(Disagreement {
                    op_index: report.ops,
                    key,
                    dictionary: got,
                    baseline: Answer::NotRun,
                    oracle: want,
                });
                break;
            }
        }
    }
    Ok(report)
}
