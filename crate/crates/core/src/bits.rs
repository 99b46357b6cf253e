//! Fixed-width bit packing over `u64` lanes, least significant bit first.

#[inline]
pub fn mask(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

/// Reads `width` bits starting at absolute bit offset `offset`.
#[inline]
pub fn get_bits(lanes: &[u64], offset: usize, width: u32) -> u64 {
    debug_assert!(width <= 64);
    if width == 0 {
        return 0;
    }
    let lane = offset / 64;
    let shift = (offset % 64) as u32;
    let lo = lanes[lane] >> shift;
    if shift + width <= 64 {
        lo & mask(width)
    } else {
        let hi = lanes[lane + 1] << (64 - shift);
        (lo | hi) & mask(width)
    }
}

/// Overwrites `width` bits at `offset` with the low bits of `value`.
#[inline]
pub fn set_bits(lanes: &mut [u64], offset: usize, width: u32, value: u64) {
    debug_assert!(width <= 64);
    if width == 0 {
        return;
    }
    let value = value & mask(width);
    let lane = offset / 64;
    let shift = (offset % 64) as u32;
    let m = mask(width);
    lanes[lane] = (lanes[lane] & !(m << shift)) | (value << shift);
    if shift + width > 64 {
        let spill = shift + width - 64;
        let hm = mask(spill);
        lanes[lane + 1] = (lanes[lane + 1] & !hm) | (value >> (64 - shift));
    }
}

/// Number of bits needed to represent every value in `0..count`.
pub fn bits_for(count: u64) -> u32 {
    if count <= 1 {
        0
    } else {
        64 - (count - 1).leading_zeros()
    }
}

pub fn ceil_lg(x: u64) -> u32 {
    bits_for(x)
}

/// A sequence of fixed-width records packed into one page image.
pub struct RecordCodec {
    pub width: u32,
    pub per_page: usize,
}

impl RecordCodec {
    pub fn new(width: u32, page_bits: usize) -> Self {
        debug_assert!(width > 0 && width <= 64);
        RecordCodec {
            width,
            per_page: page_bits / width as usize,
        }
    }

    #[inline]
    pub fn get(&self, page: &[u64], slot: usize) -> u64 {
        get_bits(page, slot * self.width as usize, self.width)
    }

    #[inline]
    pub fn set(&self, page: &mut [u64], slot: usize, value: u64) {
        set_bits(page, slot * self.width as usize, self.width, value)
    }

    pub fn decode<'a>(&'a self, page: &'a [u64], count: usize) -> impl Iterator<Item = u64> + 'a {
        (0..count).map(move |i| self.get(page, i))
    }
}
