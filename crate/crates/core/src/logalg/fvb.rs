use super::{check_words, slot_stride, store_words, valid_bit, AlgorithmKind, LogError, SlotCodec};
use crate::pmem::{SimMemory, StoreOrder, LINE_SIZE, WORD_SIZE};

const WORDS: usize = LINE_SIZE / WORD_SIZE;
const PAIRS_PER_WORD: usize = 6;
const MAX_META_WORDS: usize = WORDS - 1;

/// Where a line's flexible validity bit landed and what value it has.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FvbPair {
    /// Bit offset within the line, 0..512.
    pub offset: u16,
    pub bit: bool,
}

impl FvbPair {
    fn pack(self) -> u64 {
        (self.offset as u64 & 0x1FF) | ((self.bit as u64) << 9)
    }

    fn unpack(v: u64) -> Self {
        FvbPair { offset: (v & 0x1FF) as u16, bit: v >> 9 & 1 == 1 }
    }
}

/// Picks the flexible bit for overwriting `old` with `new`: the lowest
/// differing bit of the highest differing word. Also returns that word's
/// index, or `None` when nothing changes.
pub fn fvb_diff(old: &[u64; WORDS], new: &[u64; WORDS]) -> (FvbPair, Option<usize>) {
    for j in (0..WORDS).rev() {
        let x = old[j] ^ new[j];
        if x != 0 {
            let b = x.trailing_zeros();
            let pair = FvbPair { offset: (64 * j as u32 + b) as u16, bit: new[j] >> b & 1 == 1 };
            return (pair, Some(j));
        }
    }
    (FvbPair { offset: 0, bit: new[0] & 1 == 1 }, None)
}

/// Overwrites the line at `line_addr` with `new`, storing only up to the
/// last changed word, which goes last with release order.
pub fn fvb_write_cacheline(mem: &mut SimMemory, line_addr: usize, new: &[u64; WORDS]) -> FvbPair {
    let old = mem.read_words::<WORDS>(line_addr);
    let (pair, last) = fvb_diff(&old, new);
    if let Some(j) = last {
        for (i, w) in new.iter().enumerate().take(j) {
            mem.store_u64(line_addr + i * WORD_SIZE, *w, StoreOrder::Relaxed);
        }
        mem.store_u64(line_addr + j * WORD_SIZE, new[j], StoreOrder::Release);
    }
    pair
}

pub fn fvb_check_cacheline(words: &[u64; WORDS], pair: FvbPair) -> bool {
    let (w, b) = (pair.offset as usize / 64, pair.offset % 64);
    (words[w] >> b & 1 == 1) == pair.bit
}

/// A metadata word: up to six offset/bit pairs and, in the first word of
/// an entry, the entry's own validity bit in bit 63.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FvbMeta {
    pub pairs: [FvbPair; PAIRS_PER_WORD],
    pub self_valid: bool,
}

impl FvbMeta {
    pub fn encode(&self) -> u64 {
        let mut w = (self.self_valid as u64) << 63;
        for (i, p) in self.pairs.iter().enumerate() {
            w |= p.pack() << (10 * i);
        }
        w
    }

    pub fn decode(w: u64) -> Self {
        let mut pairs = [FvbPair::default(); PAIRS_PER_WORD];
        for (i, p) in pairs.iter_mut().enumerate() {
            *p = FvbPair::unpack(w >> (10 * i));
        }
        FvbMeta { pairs, self_valid: w >> 63 == 1 }
    }
}

/// Entry = `[meta words][payload]`. The first line is covered by the
/// validity bit of the first meta word; each later line by the flexible
/// bit recorded for it.
#[derive(Debug, Clone)]
pub struct FvbCodec {
    payload_len: usize,
    meta_words: usize,
    lines: usize,
    stride: usize,
}

impl FvbCodec {
    pub fn new(payload_len: usize) -> Result<Self, LogError> {
        check_words(payload_len)?;
        let mut m = 1;
        loop {
            let lines = (m * WORD_SIZE + payload_len).div_ceil(LINE_SIZE);
            if lines - 1 <= PAIRS_PER_WORD * m {
                if m > MAX_META_WORDS {
                    return Err(LogError::PayloadTooLarge {
                        len: payload_len,
                        max: MAX_META_WORDS * PAIRS_PER_WORD * LINE_SIZE,
                        hint: "split the record across several entries",
                    });
                }
                let total = m * WORD_SIZE + payload_len;
                return Ok(FvbCodec { payload_len, meta_words: m, lines, stride: slot_stride(total) });
            }
            m += 1;
        }
    }

    pub fn meta_words(&self) -> usize {
        self.meta_words
    }

    pub fn lines(&self) -> usize {
        self.lines
    }

    fn payload_offset(&self) -> usize {
        self.meta_words * WORD_SIZE
    }
}

impl SlotCodec for FvbCodec {
    fn kind(&self) -> AlgorithmKind {
        AlgorithmKind::CsoFvb
    }

    fn payload_len(&self) -> usize {
        self.payload_len
    }

    fn entry_len(&self) -> usize {
        self.payload_offset() + self.payload_len
    }

    fn stride(&self) -> usize {
        self.stride
    }

    fn encode(&self, mem: &mut SimMemory, addr: usize, payload: &[u8], lap: u32) {
        let off = self.payload_offset();
        let mut metas = vec![FvbMeta::default(); self.meta_words];
        for k in 1..self.lines {
            let line_addr = addr + k * LINE_SIZE;
            let mut new = mem.read_words::<WORDS>(line_addr);
            let lo = k * LINE_SIZE - off;
            let hi = (lo + LINE_SIZE).min(self.payload_len);
            for (i, chunk) in payload[lo..hi].chunks(WORD_SIZE).enumerate() {
                new[i] = u64::from_le_bytes(chunk.try_into().unwrap());
            }
            let pair = fvb_write_cacheline(mem, line_addr, &new);
            metas[(k - 1) / PAIRS_PER_WORD].pairs[(k - 1) % PAIRS_PER_WORD] = pair;
        }
        let first = (LINE_SIZE - off).min(self.payload_len);
        store_words(mem, addr + off, &payload[..first]);
        for (i, m) in metas.iter_mut().enumerate().rev() {
            m.self_valid = valid_bit(lap);
            let order = if i == 0 { StoreOrder::Release } else { StoreOrder::Relaxed };
            mem.store_u64(addr + i * WORD_SIZE, m.encode(), order);
        }
    }

    fn decode(&self, mem: &SimMemory, addr: usize, lap: u32) -> Option<Vec<u8>> {
        let metas: Vec<FvbMeta> =
            (0..self.meta_words).map(|i| FvbMeta::decode(mem.read_u64(addr + i * WORD_SIZE))).collect();
        if metas[0].self_valid != valid_bit(lap) {
            return None;
        }
        for k in 1..self.lines {
            let pair = metas[(k - 1) / PAIRS_PER_WORD].pairs[(k - 1) % PAIRS_PER_WORD];
            if !fvb_check_cacheline(&mem.read_words::<WORDS>(addr + k * LINE_SIZE), pair) {
                return None;
            }
        }
        Some(mem.read(addr + self.payload_offset(), self.payload_len).to_vec())
    }

    fn invalidate(&self, mem: &mut SimMemory, addr: usize, lap: u32) {
        let m = FvbMeta { self_valid: !valid_bit(lap), ..Default::default() };
        mem.store_u64(addr, m.encode(), StoreOrder::Release);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diff_examples() {
        let old = [0u64; 8];
        let mut new = [0u64; 8];
        new[0] = 0b1000;
        assert_eq!(fvb_diff(&old, &new), (FvbPair { offset: 3, bit: true }, Some(0)));
        let mut new = [0u64; 8];
        new[7] = 1 << 3;
        new[2] = 5;
        assert_eq!(fvb_diff(&old, &new), (FvbPair { offset: 451, bit: true }, Some(7)));
        let same = [0xFFu64; 8];
        assert_eq!(fvb_diff(&same, &same), (FvbPair { offset: 0, bit: true }, None));
        // a bit cleared by the overwrite validates with value 0
        let mut old = [0u64; 8];
        old[1] = 0b110;
        let new = [0u64; 8];
        assert_eq!(fvb_diff(&old, &new).0, FvbPair { offset: 65, bit: false });
    }

    #[test]
    fn write_stops_at_last_changed_word() {
        let mut mem = SimMemory::new(64);
        let mut new = [0u64; 8];
        new[0] = 1;
        new[3] = 9;
        let pair = fvb_write_cacheline(&mut mem, 0, &new);
        assert_eq!(pair, FvbPair { offset: 192, bit: true });
        let log = mem.write_log();
        assert_eq!(log.len(), 4);
        assert_eq!(log[3].ordering, StoreOrder::Release);
        assert!(fvb_check_cacheline(&mem.read_words::<8>(0), pair));
        let n = mem.write_log().len();
        fvb_write_cacheline(&mut mem, 0, &new);
        assert_eq!(mem.write_log().len(), n);
    }

    #[test]
    fn meta_word_counts() {
        assert_eq!(FvbCodec::new(24).unwrap().meta_words(), 1);
        assert_eq!(FvbCodec::new(112).unwrap().lines(), 2);
        let c = FvbCodec::new(240).unwrap();
        assert_eq!((c.meta_words(), c.lines(), c.stride()), (1, 4, 256));
        let c = FvbCodec::new(496).unwrap();
        assert_eq!((c.meta_words(), c.lines(), c.stride()), (2, 8, 512));
        let c = FvbCodec::new(432).unwrap();
        assert_eq!((c.meta_words(), c.lines()), (1, 7));
    }

    #[test]
    fn meta_round_trip() {
        let mut m = FvbMeta { self_valid: true, ..Default::default() };
        m.pairs[0] = FvbPair { offset: 511, bit: true };
        m.pairs[5] = FvbPair { offset: 3, bit: false };
        assert_eq!(FvbMeta::decode(m.encode()), m);
    }

    #[test]
    fn encode_decode_multi_line() {
        let codec = FvbCodec::new(240).unwrap();
        let mut mem = SimMemory::new(512);
        let payload: Vec<u8> = (0..240).map(|i| i as u8).collect();
        codec.encode(&mut mem, 0, &payload, 0);
        assert_eq!(codec.decode(&mem, 0, 0), Some(payload.clone()));
        assert_eq!(codec.decode(&mem, 0, 1), None);
        let payload2: Vec<u8> = (0..240).map(|i| (i * 3) as u8).collect();
        codec.encode(&mut mem, 0, &payload2, 1);
        assert_eq!(codec.decode(&mem, 0, 1), Some(payload2));
    }
}
