//! Slot layout of the enhanced persistent log.
//!
//! Line 0: word 0 meta, word 1 header (bits 0..16 value length, 16..23 key
//! length, bit 23 tombstone), bytes 16..64 the start of `key ‖ value`.
//! Every later line: 63 data bytes, then a validity byte whose bits 0 and
//! 1 must both equal `v1`. An append flips bit 0 of every line before it
//! touches that line's data, so no torn line can validate.

use super::meta::StpsMeta;
use super::StpsError;
use crate::pmem::{SimMemory, StoreOrder, LINE_SIZE, WORD_SIZE};

pub const LINE0_DATA: usize = LINE_SIZE - 2 * WORD_SIZE;
pub const LINE_DATA: usize = LINE_SIZE - 1;
pub const MAX_KEY: usize = LINE0_DATA + LINE_DATA;
const TOMBSTONE: u64 = 1 << 23;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EplEntry {
    pub key: Vec<u8>,
    pub value: Vec<u8>,
    pub version: u64,
    pub txncount: u8,
    pub tombstone: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SlotRead {
    Invalid,
    /// Bits equal, version 0: never written or reinitialized.
    Empty,
    Valid(EplEntry),
}

/// `nslots` slots of `node_lines` lines each, starting at `base`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Epl {
    pub base: usize,
    pub nslots: usize,
    pub node_lines: usize,
}

impl Epl {
    pub fn slot_addr(&self, slot: usize) -> usize {
        self.base + slot * self.node_lines * LINE_SIZE
    }

    pub fn region_len(&self) -> usize {
        self.nslots * self.node_lines * LINE_SIZE
    }

    /// Key plus value bytes a slot can hold.
    pub fn data_capacity(&self) -> usize {
        LINE0_DATA + (self.node_lines - 1) * LINE_DATA
    }

    pub fn check(&self, key: &[u8], value: &[u8]) -> Result<(), StpsError> {
        if key.is_empty() {
            return Err(StpsError::EmptyKey);
        }
        if key.len() > MAX_KEY || (key.len() > LINE0_DATA && self.node_lines < 2) {
            return Err(StpsError::KeyTooLong { len: key.len(), max: MAX_KEY.min(self.data_capacity()) });
        }
        if key.len() + value.len() > self.data_capacity() || value.len() > u16::MAX as usize {
            return Err(StpsError::EntryTooLarge { len: key.len() + value.len(), max: self.data_capacity() });
        }
        Ok(())
    }

    fn validity_addr(&self, slot: usize, line: usize) -> usize {
        self.slot_addr(slot) + line * LINE_SIZE + LINE_DATA
    }

    pub fn meta(&self, mem: &SimMemory, slot: usize) -> StpsMeta {
        StpsMeta::decode(mem.read_u64(self.slot_addr(slot)))
    }

    /// Every validity bit of the slot agrees.
    pub fn bits_equal(&self, mem: &SimMemory, slot: usize) -> bool {
        let m = self.meta(mem, slot);
        let want = if m.v1 { 0b11 } else { 0 };
        m.bits_equal() && (1..self.node_lines).all(|l| mem.read(self.validity_addr(slot, l), 1)[0] & 0b11 == want)
    }

    pub fn read(&self, mem: &SimMemory, slot: usize) -> SlotRead {
        if !self.bits_equal(mem, slot) {
            return SlotRead::Invalid;
        }
        let m = self.meta(mem, slot);
        if m.version == 0 {
            return SlotRead::Empty;
        }
        let addr = self.slot_addr(slot);
        let header = mem.read_u64(addr + WORD_SIZE);
        let key_len = (header >> 16 & 0x7F) as usize;
        let value_len = (header & 0xFFFF) as usize;
        if key_len == 0 || key_len + value_len > self.data_capacity() {
            return SlotRead::Invalid;
        }
        let mut stream = Vec::with_capacity(self.data_capacity());
        stream.extend_from_slice(mem.read(addr + 2 * WORD_SIZE, LINE0_DATA));
        for l in 1..self.node_lines {
            stream.extend_from_slice(mem.read(addr + l * LINE_SIZE, LINE_DATA));
        }
        SlotRead::Valid(EplEntry {
            key: stream[..key_len].to_vec(),
            value: stream[key_len..key_len + value_len].to_vec(),
            version: m.version,
            txncount: m.txncount,
            tombstone: header & TOMBSTONE != 0,
        })
    }

    /// Issues the append stores for `e` into `slot`. No flush, no fence.
    pub fn write(&self, mem: &mut SimMemory, slot: usize, e: &EplEntry) -> Result<(), StpsError> {
        self.check(&e.key, &e.value)?;
        if !self.bits_equal(mem, slot) {
            return Err(StpsError::Precondition { slot });
        }
        let addr = self.slot_addr(slot);
        let old = self.meta(mem, slot);
        let new_bit = !old.v1;

        mem.store_u64(addr, StpsMeta { v1: new_bit, ..old }.encode(), StoreOrder::Relaxed);
        let torn = new_bit as u8 | (old.v1 as u8) << 1;
        for l in 1..self.node_lines {
            mem.store(self.validity_addr(slot, l), &[torn], StoreOrder::Relaxed);
        }
        mem.release_fence();

        let mut stream = vec![0u8; self.data_capacity()];
        stream[..e.key.len()].copy_from_slice(&e.key);
        stream[e.key.len()..e.key.len() + e.value.len()].copy_from_slice(&e.value);
        let header = e.value.len() as u64 | (e.key.len() as u64) << 16 | if e.tombstone { TOMBSTONE } else { 0 };
        mem.store_u64(addr + WORD_SIZE, header, StoreOrder::Relaxed);
        store_chunks(mem, addr + 2 * WORD_SIZE, &stream[..LINE0_DATA]);
        for l in 1..self.node_lines {
            let from = LINE0_DATA + (l - 1) * LINE_DATA;
            store_chunks(mem, addr + l * LINE_SIZE, &stream[from..from + LINE_DATA]);
        }

        let meta = StpsMeta { v1: new_bit, v2: new_bit, txncount: e.txncount, version: e.version };
        if self.node_lines > 1 {
            mem.release_fence();
        }
        mem.store_u64(addr, meta.encode(), StoreOrder::Release);
        let byte = if new_bit { 0b11 } else { 0 };
        for l in 1..self.node_lines {
            mem.store(self.validity_addr(slot, l), &[byte], StoreOrder::Relaxed);
        }
        Ok(())
    }

    pub fn flush(&self, mem: &mut SimMemory, slot: usize) {
        mem.flush_range(self.slot_addr(slot), self.node_lines * LINE_SIZE);
    }

    /// Write, flush, fence: one round trip.
    pub fn append(&self, mem: &mut SimMemory, slot: usize, e: &EplEntry) -> Result<(), StpsError> {
        self.write(mem, slot, e)?;
        self.flush(mem, slot);
        mem.sfence();
        Ok(())
    }

    /// Returns the slots to the empty state. Line 0 goes first and is
    /// fenced on its own, so a crash midway can only leave empty or
    /// invalid slots behind.
    pub fn reinit(&self, mem: &mut SimMemory, slots: &[usize]) {
        if slots.is_empty() {
            return;
        }
        let zeros = [0u8; LINE_SIZE];
        for &s in slots {
            mem.store(self.slot_addr(s), &zeros, StoreOrder::Relaxed);
            mem.clflushopt(mem.line_of(self.slot_addr(s)));
        }
        mem.sfence();
        if self.node_lines > 1 {
            for &s in slots {
                for l in 1..self.node_lines {
                    let a = self.slot_addr(s) + l * LINE_SIZE;
                    mem.store(a, &zeros, StoreOrder::Relaxed);
                    mem.clflushopt(mem.line_of(a));
                }
            }
            mem.sfence();
        }
    }

    /// Whole slot is zero bytes.
    pub fn is_zero(&self, mem: &SimMemory, slot: usize) -> bool {
        mem.read(self.slot_addr(slot), self.node_lines * LINE_SIZE).iter().all(|&b| b == 0)
    }
}

/// Word-sized stores, with a shorter final store if `bytes` is ragged.
fn store_chunks(mem: &mut SimMemory, addr: usize, bytes: &[u8]) {
    for (i, c) in bytes.chunks(WORD_SIZE).enumerate() {
        mem.store(addr + i * WORD_SIZE, c, StoreOrder::Relaxed);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(key: &[u8], value: &[u8], version: u64) -> EplEntry {
        EplEntry { key: key.to_vec(), value: value.to_vec(), version, txncount: 1, tombstone: false }
    }

    #[test]
    fn append_and_read_back() {
        for lines in [1, 2, 4] {
            let epl = Epl { base: 0, nslots: 2, node_lines: lines };
            let mut mem = SimMemory::new(epl.region_len());
            assert_eq!(epl.read(&mem, 1), SlotRead::Empty);
            let value = vec![7u8; epl.data_capacity() - 5];
            let e = entry(b"hello", &value, 3);
            let before = mem.stats();
            epl.append(&mut mem, 1, &e).unwrap();
            assert_eq!(mem.stats().since(&before).fenced_roundtrips, 1);
            assert_eq!(epl.read(&mem, 1), SlotRead::Valid(e.clone()));
            let e2 = entry(b"k", b"v", 4);
            epl.append(&mut mem, 1, &e2).unwrap();
            assert_eq!(epl.read(&mem, 1), SlotRead::Valid(e2));
            assert!(epl.bits_equal(&mem, 1));
        }
    }

    #[test]
    fn flips_toggle_polarity() {
        let epl = Epl { base: 0, nslots: 1, node_lines: 1 };
        let mut mem = SimMemory::new(64);
        epl.append(&mut mem, 0, &entry(b"a", b"1", 1)).unwrap();
        assert!(epl.meta(&mem, 0).v1);
        epl.append(&mut mem, 0, &entry(b"a", b"2", 2)).unwrap();
        assert!(!epl.meta(&mem, 0).v1);
        // the first write of an append flips v1 only
        let n = mem.write_log().len();
        epl.write(&mut mem, 0, &entry(b"a", b"3", 3)).unwrap();
        let first = &mem.write_log()[n];
        assert_eq!(first.offset_in_line, 0);
        let m = StpsMeta::decode(u64::from_le_bytes(first.data[..8].try_into().unwrap()));
        assert!(m.v1 && !m.v2 && m.version == 2);
    }

    #[test]
    fn every_line_is_torn_before_its_data() {
        let epl = Epl { base: 0, nslots: 1, node_lines: 3 };
        let mut mem = SimMemory::new(epl.region_len());
        epl.append(&mut mem, 0, &entry(b"a", b"1", 1)).unwrap();
        mem.compact();
        epl.write(&mut mem, 0, &entry(b"a", b"2", 2)).unwrap();
        for l in 1..3 {
            let first = mem.write_log().iter().find(|w| w.line == l).unwrap();
            assert_eq!((first.offset_in_line, first.data.as_slice()), (LINE_DATA, &[0b10u8][..]));
        }
    }

    #[test]
    fn long_keys_need_two_lines() {
        let one = Epl { base: 0, nslots: 1, node_lines: 1 };
        assert!(matches!(one.check(&[1; 49], b""), Err(StpsError::KeyTooLong { .. })));
        let two = Epl { base: 0, nslots: 1, node_lines: 2 };
        two.check(&[1; 111], b"").unwrap();
        assert!(matches!(two.check(&[1; 112], b""), Err(StpsError::KeyTooLong { .. })));
        let mut mem = SimMemory::new(128);
        let e = entry(&[9; 100], b"xy", 1);
        two.append(&mut mem, 0, &e).unwrap();
        assert_eq!(two.read(&mem, 0), SlotRead::Valid(e));
    }

    #[test]
    fn unequal_bits_fail_precondition() {
        let epl = Epl { base: 0, nslots: 1, node_lines: 1 };
        let mut mem = SimMemory::new(64);
        mem.store_u64(0, StpsMeta { v1: true, ..Default::default() }.encode(), StoreOrder::Relaxed);
        assert_eq!(epl.read(&mem, 0), SlotRead::Invalid);
        assert_eq!(epl.write(&mut mem, 0, &entry(b"a", b"", 1)), Err(StpsError::Precondition { slot: 0 }));
        epl.reinit(&mut mem, &[0]);
        assert_eq!(epl.read(&mem, 0), SlotRead::Empty);
    }
}
