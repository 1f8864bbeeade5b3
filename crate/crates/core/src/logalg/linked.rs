use std::collections::VecDeque;

use super::{
    check_words, slot_stride, store_words, zero_fill, AlgorithmKind, EntryRef, HeadWord, LogAlgorithm, LogError,
    LogRegion, RecoveredEntry,
};
use crate::pmem::{SimMemory, StoreOrder, WORD_SIZE};

pub(crate) const ATLAS_PAYLOAD: usize = 24;

/// A singly linked list of slots. Each slot is `[next][payload]`, where
/// `next` is the successor's slot index plus one (0 ends the list). The
/// head word names the dummy slot whose successor is the oldest entry;
/// index 0 means the root pointer in header word 1.
///
/// `TwoRounds` persists the entry, then the link: two fenced round trips.
/// `AtlasLog` saves the second when the link word shares a line with the
/// new entry.
pub struct LinkedLog {
    kind: AlgorithmKind,
    region: LogRegion,
    payload_len: usize,
    stride: usize,
    nslots: usize,
    dummy: Option<usize>,
    next_slot: usize,
    live: VecDeque<EntryRef>,
    ordinal: u64,
}

impl LinkedLog {
    pub fn new(kind: AlgorithmKind, region: LogRegion, payload_len: usize) -> Result<Self, LogError> {
        check_words(payload_len)?;
        if kind == AlgorithmKind::AtlasLog && payload_len != ATLAS_PAYLOAD {
            return Err(LogError::UnsupportedSize { kind, len: payload_len });
        }
        let stride = slot_stride(payload_len + WORD_SIZE);
        let nslots = region.slots(stride)?;
        if nslots < 2 {
            return Err(LogError::RegionTooSmall { base: region.base, size: region.size });
        }
        Ok(LinkedLog {
            kind,
            region,
            payload_len,
            stride,
            nslots,
            dummy: None,
            next_slot: 0,
            live: VecDeque::new(),
            ordinal: 0,
        })
    }

    pub fn slot_addr(&self, slot: usize) -> usize {
        self.region.data_base() + slot * self.stride
    }

    fn link_addr(&self, after: Option<usize>) -> usize {
        match after {
            Some(s) => self.slot_addr(s),
            None => self.region.head_addr() + WORD_SIZE,
        }
    }

    fn head_word(&self) -> HeadWord {
        HeadWord::at(self.dummy.map_or(0, |d| d as u64 + 1), 0)
    }
}

impl LogAlgorithm for LinkedLog {
    fn kind(&self) -> AlgorithmKind {
        self.kind
    }

    fn payload_len(&self) -> usize {
        self.payload_len
    }

    fn region(&self) -> LogRegion {
        self.region
    }

    fn capacity(&self) -> usize {
        self.nslots - 1
    }

    fn format(&mut self, mem: &mut SimMemory) {
        zero_fill(mem, self.region.base, self.region.size);
        mem.sfence();
        self.dummy = None;
        self.next_slot = 0;
        self.live.clear();
        self.head_word().persist(mem, &self.region);
    }

    fn append(&mut self, mem: &mut SimMemory, payload: &[u8]) -> Result<EntryRef, LogError> {
        if payload.len() != self.payload_len {
            return Err(LogError::PayloadLength { expected: self.payload_len, got: payload.len() });
        }
        if self.live.len() >= self.capacity() {
            return Err(LogError::LogFull);
        }
        let slot = self.next_slot;
        let addr = self.slot_addr(slot);
        let link = self.link_addr(self.live.back().map(|e| e.slot).or(self.dummy));
        mem.store_u64(addr, 0, StoreOrder::Relaxed);
        store_words(mem, addr + WORD_SIZE, payload);
        let same_line = mem.line_of(link) == mem.line_of(addr)
            && mem.line_of(addr) == mem.line_of(addr + WORD_SIZE + self.payload_len - 1);
        if self.kind == AlgorithmKind::AtlasLog && same_line {
            mem.store_u64(link, slot as u64 + 1, StoreOrder::Release);
            mem.flush_range(addr, WORD_SIZE + self.payload_len);
            mem.sfence();
        } else {
            mem.flush_range(addr, WORD_SIZE + self.payload_len);
            mem.sfence();
            mem.store_u64(link, slot as u64 + 1, StoreOrder::Release);
            mem.clflushopt(mem.line_of(link));
            mem.sfence();
        }
        let e = EntryRef { slot, lap: 0, ordinal: self.ordinal, span: 1 };
        self.ordinal += 1;
        self.next_slot = (slot + 1) % self.nslots;
        self.live.push_back(e);
        Ok(e)
    }

    fn recover(&mut self, mem: &SimMemory) -> Result<Vec<RecoveredEntry>, LogError> {
        let h = HeadWord::read(mem, &self.region, self.nslots as u64)?;
        self.dummy = h.index.checked_sub(1).map(|d| d as usize);
        self.live.clear();
        self.ordinal = 0;
        let mut out = Vec::new();
        let mut cur = self.dummy;
        while out.len() < self.capacity() {
            let next = mem.read_u64(self.link_addr(cur));
            if next == 0 || next > self.nslots as u64 || Some(next as usize - 1) == self.dummy {
                break;
            }
            let slot = next as usize - 1;
            let payload = mem.read(self.slot_addr(slot) + WORD_SIZE, self.payload_len).to_vec();
            let e = EntryRef { slot, lap: 0, ordinal: self.ordinal, span: 1 };
            self.ordinal += 1;
            self.live.push_back(e);
            out.push(RecoveredEntry { payload, position: e, age_rank: out.len() });
            cur = Some(slot);
        }
        self.next_slot = cur.map_or(0, |s| (s + 1) % self.nslots);
        Ok(out)
    }

    fn trim(&mut self, mem: &mut SimMemory, upto: &EntryRef) -> Result<(), LogError> {
        let n = self.live.iter().position(|e| e == upto).ok_or(LogError::TrimPastTail)? + 1;
        self.dummy = Some(upto.slot);
        self.head_word().persist(mem, &self.region);
        self.live.drain(..n);
        Ok(())
    }

    fn live(&self) -> &VecDeque<EntryRef> {
        &self.live
    }
}
