//! Simulated external memory: a growable array of fixed-size pages with
//! exact read/write counters.
//!
//! Every page image is `B * w` bits, stored as little-endian `u64` lanes.
//! Computation on data already fetched is free; only page transfers are
//! charged. Accesses through [`PagedMemory::peek`] and
//! [`PagedMemory::tamper`] bypass the counters and exist for invariant
//! sweeps and fault injection.

use std::cell::Cell;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::ops::Sub;
use std::path::Path;

use crate::error::{bad_params, Error, Result};

pub const DEFAULT_WORD_BITS: u32 = 64;

const MAGIC: &[u8; 4] = b"EMPG";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PageId(pub u32);

impl PageId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct IoStats {
    pub reads: u64,
    pub writes: u64,
}

impl IoStats {
    pub fn total(&self) -> u64 {
        self.reads + self.writes
    }
}

impl Sub for IoStats {
    type Output = IoStats;

    fn sub(self, rhs: IoStats) -> IoStats {
        IoStats {
            reads: self.reads - rhs.reads,
            writes: self.writes - rhs.writes,
        }
    }
}

#[derive(Debug)]
pub struct PagedMemory {
    page_words: usize,
    word_bits: u32,
    lanes: usize,
    data: Vec<u64>,
    live: Vec<bool>,
    free: Vec<PageId>,
    budget: Option<usize>,
    live_count: usize,
    reads: Cell<u64>,
    writes: Cell<u64>,
}

impl PagedMemory {
    /// Pages of `page_words` words of `word_bits` bits each. The page size
    /// in bits must be a positive multiple of 64.
    pub fn new(page_words: usize, word_bits: u32) -> Result<Self> {
        if page_words == 0 || word_bits == 0 || word_bits > 64 {
            return Err(bad_params(format!("page of {page_words} words of {word_bits} bits")));
        }
        let bits = page_words * word_bits as usize;
        if !bits.is_multiple_of(64) {
            return Err(bad_params(format!("page size of {bits} bits is not a multiple of 64")));
        }
        Ok(PagedMemory {
            page_words,
            word_bits,
            lanes: bits / 64,
            data: Vec::new(),
            live: Vec::new(),
            free: Vec::new(),
            budget: None,
            live_count: 0,
            reads: Cell::new(0),
            writes: Cell::new(0),
        })
    }

    /// Caps the number of page slots that may ever be allocated.
    pub fn with_budget(mut self, pages: usize) -> Self {
        self.budget = Some(pages);
        self
    }

    pub fn page_words(&self) -> usize {
        self.page_words
    }

    pub fn word_bits(&self) -> u32 {
        self.word_bits
    }

    /// b: bits per page.
    pub fn page_bits(&self) -> usize {
        self.lanes * 64
    }

    /// Number of `u64` lanes in one page image.
    pub fn lanes(&self) -> usize {
        self.lanes
    }

    /// Total page slots ever allocated (high-water mark).
    pub fn page_count(&self) -> usize {
        self.live.len()
    }

    /// Pages currently allocated and not freed.
    pub fn live_pages(&self) -> usize {
        self.live_count
    }

    pub fn io_stats(&self) -> IoStats {
        IoStats {
            reads: self.reads.get(),
            writes: self.writes.get(),
        }
    }

    pub fn reset_stats(&mut self) {
        self.reads.set(0);
        self.writes.set(0);
    }

    /// Allocates a zeroed page. Counts as one write.
    pub fn alloc_page(&mut self) -> Result<PageId> {
        let id = self.take_slot()?;
        self.slot_mut(id).fill(0);
        self.bump_writes();
        Ok(id)
    }

    /// Allocates a page whose initial image is `image`. The allocation and
    /// the initial transfer are a single write.
    pub fn alloc_page_with(&mut self, image: &[u64]) -> Result<PageId> {
        self.check_len(image)?;
        let id = self.take_slot()?;
        self.slot_mut(id).copy_from_slice(image);
        self.bump_writes();
        Ok(id)
    }

    /// Returns the page to the free list. Not an I/O.
    pub fn free_page(&mut self, id: PageId) -> Result<()> {
        self.check_live(id)?;
        self.live[id.index()] = false;
        self.live_count -= 1;
        self.free.push(id);
        Ok(())
    }

    pub fn read_page(&self, id: PageId) -> Result<&[u64]> {
        self.check_live(id)?;
        self.reads.set(self.reads.get() + 1);
        Ok(self.slot(id))
    }

    pub fn write_page(&mut self, id: PageId, image: &[u64]) -> Result<()> {
        self.check_live(id)?;
        self.check_len(image)?;
        self.slot_mut(id).copy_from_slice(image);
        self.bump_writes();
        Ok(())
    }

    /// Uncounted read, for instrumentation only.
    pub fn peek(&self, id: PageId) -> Result<&[u64]> {
        self.check_live(id)?;
        Ok(self.slot(id))
    }

    /// Uncounted mutable access, for fault-injection tests only.
    pub fn tamper(&mut self, id: PageId) -> Result<&mut [u64]> {
        self.check_live(id)?;
        Ok(self.slot_mut(id))
    }

    /// Page ids currently on the free list, in reuse order.
    pub fn free_list(&self) -> &[PageId] {
        &self.free
    }

    pub fn is_live(&self, id: PageId) -> bool {
        self.live.get(id.index()).copied().unwrap_or(false)
    }

    /// Writes every page slot to `path` in the `EMPG` page-file format.
    /// Not counted: persistence sits outside the I/O model.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        for field in [
            FORMAT_VERSION,
            self.page_words as u32,
            self.word_bits,
            self.live.len() as u32,
        ] {
            w.write_all(&field.to_le_bytes())?;
        }
        let bytes_per_page = self.page_bits() / 8;
        let mut buf = Vec::with_capacity(bytes_per_page);
        for page in self.data.chunks_exact(self.lanes) {
            buf.clear();
            for lane in page {
                buf.extend_from_slice(&lane.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    /// Loads a page file. Every stored page comes back allocated; counters
    /// start at zero.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_from(&mut r)
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}")));
        }
        let mut field = || -> Result<u32> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            Ok(u32::from_le_bytes(b))
        };
        let version = field()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let page_words = field()? as usize;
        let word_bits = field()?;
        let page_count = field()? as usize;
        let mut mem = PagedMemory::new(page_words, word_bits).map_err(|e| Error::Format(e.to_string()))?;
        let bytes_per_page = mem.page_bits() / 8;
        let mut buf = vec![0u8; bytes_per_page];
        mem.data.reserve(page_count * mem.lanes);
        for _ in 0..page_count {
            r.read_exact(&mut buf)?;
            mem.data
                .extend(buf.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())));
        }
        mem.live = vec![true; page_count];
        mem.live_count = page_count;
        Ok(mem)
    }

    fn take_slot(&mut self) -> Result<PageId> {
        let id = if let Some(id) = self.free.pop() {
            id
        } else {
            let next = self.live.len();
            if let Some(budget) = self.budget {
                if next >= budget {
                    return Err(Error::CapacityExhausted { budget });
                }
            }
            self.live.push(false);
            self.data.resize(self.data.len() + self.lanes, 0);
            PageId(next as u32)
        };
        self.live[id.index()] = true;
        self.live_count += 1;
        Ok(id)
    }

    fn check_live(&self, id: PageId) -> Result<()> {
        if self.is_live(id) {
            Ok(())
        } else {
            Err(Error::InvalidPage(id.0))
        }
    }

    fn check_len(&self, image: &[u64]) -> Result<()> {
        if image.len() != self.lanes {
            return Err(Error::SizeMismatch {
                expected: self.page_bits(),
                got: image.len() * 64,
            });
        }
        Ok(())
    }

    fn slot(&self, id: PageId) -> &[u64] {
        let start = id.index() * self.lanes;
        &self.data[start..start + self.lanes]
    }

    fn slot_mut(&mut self, id: PageId) -> &mut [u64] {
        let start = id.index() * self.lanes;
        &mut self.data[start..start + self.lanes]
    }

    fn bump_writes(&mut self) {
        self.writes.set(self.writes.get() + 1);
    }
}
