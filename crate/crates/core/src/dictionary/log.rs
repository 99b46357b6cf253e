use crate::error::Result;
use crate::io_model::{PageId, PagedMemory};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LogEntry {
    pub key: u64,
    pub value: u64,
    pub tombstone: bool,
}

impl LogEntry {
    pub fn insert(key: u64, value: u64) -> Self {
        LogEntry {
            key,
            value,
            tombstone: false,
        }
    }

    pub fn delete(key: u64) -> Self {
        LogEntry {
            key,
            value: 0,
            tombstone: true,
        }
    }
}

/// Append-only log of dictionary operations. Each page holds `(key, value)`
/// word pairs followed by a tombstone bitmap in the last word. The page
/// being filled stays in cache and is written once when full.
#[derive(Debug)]
pub struct GlobalLog {
    pages: Vec<PageId>,
    len: usize,
    per_page: usize,
    tail: Vec<u64>,
    /// Page already holding a persisted copy of the tail, if any.
    tail_page: Option<PageId>,
}

impl GlobalLog {
    pub fn new(lanes: usize) -> Self {
        GlobalLog {
            pages: Vec::new(),
            len: 0,
            per_page: ((lanes - 1) / 2).min(64),
            tail: vec![0; lanes],
            tail_page: None,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn per_page(&self) -> usize {
        self.per_page
    }

    pub fn pages(&self) -> &[PageId] {
        &self.pages
    }

    pub fn tail_page(&self) -> Option<PageId> {
        self.tail_page
    }

    pub fn append(&mut self, mem: &mut PagedMemory, e: LogEntry) -> Result<u64> {
        let j = self.len;
        let slot = j % self.per_page;
        write_slot(&mut self.tail, slot, &e);
        self.len += 1;
        if slot + 1 == self.per_page {
            let pid = match self.tail_page.take() {
                Some(pid) => {
                    mem.write_page(pid, &self.tail)?;
                    pid
                }
                None => mem.alloc_page_with(&self.tail)?,
            };
            self.pages.push(pid);
            self.tail.iter_mut().for_each(|w| *w = 0);
        }
        Ok(j as u64)
    }

    fn in_tail(&self, j: usize) -> bool {
        j >= self.pages.len() * self.per_page
    }

    /// Reads entry `j`, charging a page read unless the page is the cached
    /// tail or already in `cache`.
    pub fn get<'a>(&'a self, mem: &'a PagedMemory, j: u64, cache: &mut ReadCache<'a>) -> Result<Option<LogEntry>> {
        let j = j as usize;
        if j >= self.len {
            return Ok(None);
        }
        let slot = j % self.per_page;
        if self.in_tail(j) {
            return Ok(Some(read_slot(&self.tail, slot)));
        }
        let page = j / self.per_page;
        if let Some((_, img)) = cache.pages.iter().find(|(p, _)| *p == page) {
            return Ok(Some(read_slot(img, slot)));
        }
        let img = mem.read_page(self.pages[page])?;
        cache.pages.push((page, img));
        Ok(Some(read_slot(img, slot)))
    }

    /// Every entry in order, reading each full page once.
    pub fn scan(&self, mem: &PagedMemory) -> Result<Vec<LogEntry>> {
        let mut out = Vec::with_capacity(self.len);
        for &pid in &self.pages {
            let img = mem.read_page(pid)?;
            out.extend((0..self.per_page).map(|s| read_slot(img, s)));
        }
        out.extend((0..self.len - out.len()).map(|s| read_slot(&self.tail, s)));
        Ok(out)
    }

    /// Writes the cached tail to memory so a page file captures it.
    pub fn persist_tail(&mut self, mem: &mut PagedMemory) -> Result<()> {
        if self.len.is_multiple_of(self.per_page) {
            return Ok(());
        }
        match self.tail_page {
            Some(pid) => mem.write_page(pid, &self.tail)?,
            None => self.tail_page = Some(mem.alloc_page_with(&self.tail)?),
        }
        Ok(())
    }

    /// Reattaches a log stored in `mem` by [`Self::persist_tail`].
    pub fn restore(mem: &PagedMemory, pages: Vec<PageId>, tail_page: Option<PageId>, len: usize) -> Result<Self> {
        let mut log = GlobalLog::new(mem.lanes());
        let expect_full = len / log.per_page;
        if pages.len() != expect_full || !len.is_multiple_of(log.per_page) != tail_page.is_some() {
            return Err(crate::Error::Format(format!(
                "log of {len} entries does not match {} pages",
                pages.len()
            )));
        }
        if let Some(pid) = tail_page {
            log.tail.copy_from_slice(mem.peek(pid)?);
        }
        log.pages = pages;
        log.tail_page = tail_page;
        log.len = len;
        Ok(log)
    }

    pub fn free(self, mem: &mut PagedMemory) -> Result<()> {
        for pid in self.pages.into_iter().chain(self.tail_page) {
            mem.free_page(pid)?;
        }
        Ok(())
    }
}

/// Pages fetched during one logical operation.
#[derive(Default)]
pub struct ReadCache<'a> {
    pages: Vec<(usize, &'a [u64])>,
}

fn write_slot(img: &mut [u64], slot: usize, e: &LogEntry) {
    img[2 * slot] = e.key;
    img[2 * slot + 1] = e.value;
    let flags = img.len() - 1;
    if e.tombstone {
        img[flags] |= 1 << slot;
    } else {
        img[flags] &= !(1 << slot);
    }
}

fn read_slot(img: &[u64], slot: usize) -> LogEntry {
    LogEntry {
        key: img[2 * slot],
        value: img[2 * slot + 1],
        tombstone: img[img.len() - 1] >> slot & 1 == 1,
    }
}
