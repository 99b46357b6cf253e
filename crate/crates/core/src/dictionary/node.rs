use crate::bits::RecordCodec;
use crate::error::{Error, Result};
use crate::gadget::{Gadget, GadgetElement, QueryStats};
use crate::hashing::{FieldLayout, PolyHash, SeedStream};
use crate::io_model::{PageId, PagedMemory};

use super::params::Derived;

/// Gadget reseeds attempted before an overflow is reported upward.
const GADGET_RESEEDS: usize = 4;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TreeCounters {
    pub distributions: u64,
    pub gadget_rebuilds: u64,
}

/// A buffer-tree node: a plain array of `(h, j)` pairs mirrored by a
/// gadget over node-hashed `h` with backpointer `j`.
pub(crate) struct Node {
    pub depth: u32,
    pending: Vec<PageId>,
    len: usize,
    gadget: Option<Gadget>,
    hash: PolyHash,
    children: Vec<Option<Box<Node>>>,
}

pub(crate) struct Ctx<'a> {
    pub d: &'a Derived,
    pub codec: RecordCodec,
    pub layout: FieldLayout,
    pub seeds: &'a mut SeedStream,
    pub counters: &'a mut TreeCounters,
}

impl Node {
    pub fn new(depth: u32, d: &Derived, seeds: &mut SeedStream) -> Node {
        Node {
            depth,
            pending: Vec::new(),
            len: 0,
            gadget: None,
            hash: PolyHash::for_universe(seeds.next_seed(), d.n_max),
            children: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn children(&self) -> impl Iterator<Item = &Node> {
        self.children.iter().flatten().map(|c| c.as_ref())
    }

    pub fn child(&self, i: usize) -> Option<&Node> {
        self.children.get(i).and_then(|c| c.as_deref())
    }

    pub fn gadget(&self) -> Option<&Gadget> {
        self.gadget.as_ref()
    }

    pub fn push(&mut self, ctx: &mut Ctx, mem: &mut PagedMemory, pairs: &[(u64, u64)]) -> Result<()> {
        let terminal = ctx.d.is_terminal(self.depth);
        let mut rest = pairs;
        while !rest.is_empty() {
            let room = if terminal { rest.len() } else { ctx.d.m_keys - self.len };
            let (now, later) = rest.split_at(room.min(rest.len()));
            self.append_pending(ctx, mem, now)?;
            self.gadget_insert(ctx, mem, now)?;
            if !terminal && self.len == ctx.d.m_keys {
                self.distribute(ctx, mem)?;
            }
            rest = later;
        }
        Ok(())
    }

    fn element(&self, ctx: &Ctx, h: u64, j: u64) -> GadgetElement {
        GadgetElement::new(ctx.layout.split(self.hash.eval(h)), j)
    }

    fn append_pending(&mut self, ctx: &Ctx, mem: &mut PagedMemory, pairs: &[(u64, u64)]) -> Result<()> {
        let per = ctx.codec.per_page;
        let mut slot = self.len % per;
        let mut page = self.len / per;
        let mut image = if slot > 0 {
            mem.read_page(self.pending[page])?.to_vec()
        } else {
            vec![0u64; mem.lanes()]
        };
        for &(h, j) in pairs {
            ctx.codec.set(&mut image, slot, h << ctx.d.index_bits | j);
            slot += 1;
            if slot == per {
                self.store_pending(mem, page, &image)?;
                image.iter_mut().for_each(|w| *w = 0);
                slot = 0;
                page += 1;
            }
        }
        if slot > 0 {
            self.store_pending(mem, page, &image)?;
        }
        self.len += pairs.len();
        Ok(())
    }

    fn store_pending(&mut self, mem: &mut PagedMemory, page: usize, image: &[u64]) -> Result<()> {
        if page < self.pending.len() {
            mem.write_page(self.pending[page], image)
        } else {
            self.pending.push(mem.alloc_page_with(image)?);
            Ok(())
        }
    }

    fn read_pending(&self, ctx: &Ctx, mem: &PagedMemory) -> Result<Vec<(u64, u64)>> {
        let per = ctx.codec.per_page;
        let jmask = (1u64 << ctx.d.index_bits) - 1;
        let mut out = Vec::with_capacity(self.len);
        for (i, &pid) in self.pending.iter().enumerate() {
            let n = (self.len - i * per).min(per);
            let img = mem.read_page(pid)?;
            out.extend(ctx.codec.decode(img, n).map(|v| (v >> ctx.d.index_bits, v & jmask)));
        }
        Ok(out)
    }

    /// The pending array without charging I/O.
    pub fn peek_pending(&self, d: &Derived, mem: &PagedMemory) -> Result<Vec<(u64, u64)>> {
        let codec = RecordCodec::new(d.pair_bits, d.page_bits as usize);
        let per = codec.per_page;
        let jmask = (1u64 << d.index_bits) - 1;
        let mut out = Vec::with_capacity(self.len);
        for (i, &pid) in self.pending.iter().enumerate() {
            let n = (self.len - i * per).min(per);
            let img = mem.peek(pid)?;
            out.extend(codec.decode(img, n).map(|v| (v >> d.index_bits, v & jmask)));
        }
        Ok(out)
    }

    fn gadget_insert(&mut self, ctx: &mut Ctx, mem: &mut PagedMemory, pairs: &[(u64, u64)]) -> Result<()> {
        let elems: Vec<GadgetElement> = pairs.iter().map(|&(h, j)| self.element(ctx, h, j)).collect();
        if self.gadget.is_none() {
            self.gadget = Some(Gadget::new(ctx.d.gadget.clone())?);
        }
        match self.gadget.as_mut().unwrap().bulk_insert(mem, &elems) {
            Err(Error::NeedsRebuild { .. }) => self.rebuild_gadget(ctx, mem),
            other => other,
        }
    }

    /// Replaces the gadget with one built from the pending array under a
    /// fresh node hash.
    fn rebuild_gadget(&mut self, ctx: &mut Ctx, mem: &mut PagedMemory) -> Result<()> {
        let pairs = self.read_pending(ctx, mem)?;
        let mut last = None;
        for _ in 0..GADGET_RESEEDS {
            if let Some(g) = self.gadget.take() {
                g.free(mem)?;
            }
            ctx.counters.gadget_rebuilds += 1;
            self.hash = PolyHash::for_universe(ctx.seeds.next_seed(), ctx.d.n_max);
            let elems: Vec<GadgetElement> = pairs.iter().map(|&(h, j)| self.element(ctx, h, j)).collect();
            let mut g = Gadget::new(ctx.d.gadget.clone())?;
            match g.bulk_insert(mem, &elems) {
                Ok(()) => {
                    self.gadget = Some(g);
                    return Ok(());
                }
                Err(e @ Error::NeedsRebuild { .. }) => {
                    g.free(mem)?;
                    last = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        Err(last.unwrap())
    }

    fn distribute(&mut self, ctx: &mut Ctx, mem: &mut PagedMemory) -> Result<()> {
        let pairs = self.read_pending(ctx, mem)?;
        let fanout = ctx.d.fanout(self.depth);
        let mut groups: Vec<Vec<(u64, u64)>> = vec![Vec::new(); fanout];
        for &(h, j) in &pairs {
            let c = ctx.d.chunk(h, self.depth).expect("non-terminal node");
            groups[c].push((h, j));
        }
        if self.children.is_empty() {
            self.children = (0..fanout).map(|_| None).collect();
        }
        for (c, group) in groups.into_iter().enumerate() {
            if group.is_empty() {
                continue;
            }
            if self.children[c].is_none() {
                self.children[c] = Some(Box::new(Node::new(self.depth + 1, ctx.d, ctx.seeds)));
            }
            self.children[c].as_mut().unwrap().push(ctx, mem, &group)?;
        }
        for pid in self.pending.drain(..) {
            mem.free_page(pid)?;
        }
        if let Some(g) = self.gadget.take() {
            g.free(mem)?;
        }
        self.len = 0;
        ctx.counters.distributions += 1;
        Ok(())
    }

    /// Log indices whose node-hashed key matches `h`, newest first.
    pub fn candidates(&self, layout: &FieldLayout, mem: &PagedMemory, h: u64, qs: &mut QueryStats) -> Vec<u64> {
        let Some(g) = &self.gadget else {
            return Vec::new();
        };
        let mut js = g.query_with_stats(mem, layout.split(self.hash.eval(h)), qs);
        js.sort_unstable_by(|a, b| b.cmp(a));
        js.dedup();
        js
    }

    /// Uncounted check that the gadget holds exactly the hashed pending
    /// array.
    pub fn check_mirror(&self, d: &Derived, mem: &PagedMemory) -> Result<bool> {
        let layout = FieldLayout::new(d.page_bits, d.gadget.t())?;
        let mut want: Vec<GadgetElement> = self
            .peek_pending(d, mem)?
            .into_iter()
            .map(|(h, j)| GadgetElement::new(layout.split(self.hash.eval(h)), j))
            .collect();
        let mut have = self.gadget.as_ref().map(|g| g.contents(mem)).unwrap_or_default();
        want.sort_unstable();
        have.sort_unstable();
        Ok(want == have)
    }

    pub fn free(self, mem: &mut PagedMemory) -> Result<()> {
        for pid in self.pending {
            mem.free_page(pid)?;
        }
        if let Some(g) = self.gadget {
            g.free(mem)?;
        }
        for c in self.children.into_iter().flatten() {
            c.free(mem)?;
        }
        Ok(())
    }
}
