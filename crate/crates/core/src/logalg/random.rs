use std::collections::VecDeque;

use super::ring::SlotPos;
use super::{
    check_words, slot_stride, store_words, AlgorithmKind, EntryRef, HeadWord, LogAlgorithm, LogError, LogRegion,
    RecoveredEntry,
};
use crate::pmem::{SimMemory, StoreOrder, LINE_SIZE, WORD_SIZE};

/// Free slots hold this word everywhere.
pub const RANDOM_INIT: u64 = 0x9E37_79B9_7F4A_7C15;
/// Fills a slot that follows an entry whose check word equals
/// [`RANDOM_INIT`]. Payloads may not contain it.
pub const SENTINEL: u64 = !RANDOM_INIT;

enum Slot {
    Valid(Vec<u8>),
    /// Complete except that some check word equals [`RANDOM_INIT`].
    Collided(Vec<u8>),
    Sentinel,
    Invalid,
}

/// Entries are valid when no line's last word still holds the init
/// constant. Trimmed slots are re-initialized in a batch after the head
/// moves, so appends need only one round trip.
pub struct CsoRandom {
    region: LogRegion,
    payload_len: usize,
    stride: usize,
    nslots: usize,
    check_offsets: Vec<usize>,
    head: SlotPos,
    tail: SlotPos,
    used: usize,
    live: VecDeque<EntryRef>,
    ordinal: u64,
    init_flushes: u64,
    /// Set by recovery: free slots may hold stale or torn data.
    dirty_free: bool,
}

impl CsoRandom {
    pub fn new(region: LogRegion, payload_len: usize) -> Result<Self, LogError> {
        check_words(payload_len)?;
        let stride = slot_stride(payload_len);
        let nslots = region.slots(stride)?;
        if nslots < 3 {
            return Err(LogError::RegionTooSmall { base: region.base, size: region.size });
        }
        let check_offsets =
            (0..payload_len.div_ceil(LINE_SIZE)).map(|k| ((k + 1) * LINE_SIZE).min(payload_len) - WORD_SIZE).collect();
        let start = SlotPos { slot: 0, lap: 0 };
        Ok(CsoRandom {
            region,
            payload_len,
            stride,
            nslots,
            check_offsets,
            head: start,
            tail: start,
            used: 0,
            live: VecDeque::new(),
            ordinal: 0,
            init_flushes: 0,
            dirty_free: false,
        })
    }

    pub fn slot_addr(&self, slot: usize) -> usize {
        self.region.data_base() + slot * self.stride
    }

    /// Byte offsets of the words that decide validity.
    pub fn check_offsets(&self) -> &[usize] {
        &self.check_offsets
    }

    fn classify(&self, mem: &SimMemory, slot: usize) -> Slot {
        let addr = self.slot_addr(slot);
        let payload = mem.read(addr, self.payload_len);
        let words: Vec<u64> = payload.chunks(WORD_SIZE).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect();
        if words.iter().all(|&w| w == SENTINEL) {
            return Slot::Sentinel;
        }
        if words.contains(&SENTINEL) {
            return Slot::Invalid;
        }
        if self.check_offsets.iter().all(|&o| words[o / WORD_SIZE] != RANDOM_INIT) {
            Slot::Valid(payload.to_vec())
        } else {
            Slot::Collided(payload.to_vec())
        }
    }

    /// Stores the init constant over `n` slots starting at `slot` and
    /// flushes them. No fence.
    fn init_slots(&mut self, mem: &mut SimMemory, slot: usize, n: usize) {
        let line = [RANDOM_INIT.to_le_bytes(); LINE_SIZE / WORD_SIZE].concat();
        let mut lines = Vec::new();
        for i in 0..n {
            let addr = self.slot_addr((slot + i) % self.nslots);
            let mut a = addr;
            while a < addr + self.stride {
                let len = (LINE_SIZE - a % LINE_SIZE).min(addr + self.stride - a);
                mem.store(a, &line[..len], StoreOrder::Relaxed);
                a += len;
            }
            for l in mem.line_of(addr)..=mem.line_of(addr + self.stride - 1) {
                if lines.last() != Some(&l) {
                    lines.push(l);
                }
            }
        }
        for l in lines {
            mem.clflushopt(l);
            self.init_flushes += 1;
        }
    }

    fn write_sentinel(&self, mem: &mut SimMemory, slot: usize) {
        let addr = self.slot_addr(slot);
        let words = vec![SENTINEL.to_le_bytes(); self.payload_len / WORD_SIZE].concat();
        store_words(mem, addr, &words);
        mem.flush_range(addr, self.payload_len);
    }
}

impl LogAlgorithm for CsoRandom {
    fn kind(&self) -> AlgorithmKind {
        AlgorithmKind::CsoRandom
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
        super::zero_fill(mem, self.region.base, LINE_SIZE);
        self.init_slots(mem, 0, self.nslots);
        mem.sfence();
        self.head = SlotPos { slot: 0, lap: 0 };
        self.tail = self.head;
        self.used = 0;
        self.live.clear();
        self.dirty_free = false;
        HeadWord::at(0, 0).persist(mem, &self.region);
    }

    fn append(&mut self, mem: &mut SimMemory, payload: &[u8]) -> Result<EntryRef, LogError> {
        if payload.len() != self.payload_len {
            return Err(LogError::PayloadLength { expected: self.payload_len, got: payload.len() });
        }
        if payload.chunks(WORD_SIZE).any(|c| u64::from_le_bytes(c.try_into().unwrap()) == SENTINEL) {
            return Err(LogError::ReservedWord);
        }
        let collided = self.check_offsets.iter().any(|&o| {
            u64::from_le_bytes(payload[o..o + WORD_SIZE].try_into().unwrap()) == RANDOM_INIT
        });
        let span = if collided { 2 } else { 1 };
        if self.used + span > self.capacity() {
            return Err(LogError::LogFull);
        }
        if self.dirty_free {
            self.init_slots(mem, self.tail.slot, self.nslots - self.used);
            mem.sfence();
            self.dirty_free = false;
        }
        let pos = self.tail;
        let addr = self.slot_addr(pos.slot);
        store_words(mem, addr, payload);
        mem.flush_range(addr, self.payload_len);
        mem.sfence();
        if collided {
            self.write_sentinel(mem, (pos.slot + 1) % self.nslots);
            mem.sfence();
        }
        let e = EntryRef { slot: pos.slot, lap: pos.lap, ordinal: self.ordinal, span };
        self.ordinal += 1;
        self.used += span;
        self.tail = pos.advance(span, self.nslots);
        self.live.push_back(e);
        Ok(e)
    }

    fn recover(&mut self, mem: &SimMemory) -> Result<Vec<RecoveredEntry>, LogError> {
        let h = HeadWord::read(mem, &self.region, self.nslots as u64 - 1)?;
        self.head = SlotPos { slot: h.index as usize, lap: h.lap };
        self.live.clear();
        self.ordinal = 0;
        self.used = 0;
        let mut out = Vec::new();
        let mut pos = self.head;
        while self.used < self.capacity() {
            let (payload, span) = match self.classify(mem, pos.slot) {
                Slot::Valid(p) => (p, 1),
                Slot::Collided(p) if self.used + 2 <= self.capacity() => {
                    match self.classify(mem, (pos.slot + 1) % self.nslots) {
                        Slot::Sentinel => (p, 2),
                        _ => break,
                    }
                }
                _ => break,
            };
            let e = EntryRef { slot: pos.slot, lap: pos.lap, ordinal: self.ordinal, span };
            self.ordinal += 1;
            self.used += span;
            self.live.push_back(e);
            out.push(RecoveredEntry { payload, position: e, age_rank: out.len() });
            pos = pos.advance(span, self.nslots);
        }
        self.tail = pos;
        self.dirty_free = true;
        Ok(out)
    }

    fn trim(&mut self, mem: &mut SimMemory, upto: &EntryRef) -> Result<(), LogError> {
        let n = self.live.iter().position(|e| e == upto).ok_or(LogError::TrimPastTail)? + 1;
        let freed: usize = self.live.iter().take(n).map(|e| e.span).sum();
        let old_head = self.head;
        let new_head = SlotPos { slot: upto.slot, lap: upto.lap }.advance(upto.span, self.nslots);
        HeadWord::at(new_head.slot as u64, new_head.lap).persist(mem, &self.region);
        self.head = new_head;
        self.live.drain(..n);
        self.used -= freed;
        self.init_slots(mem, old_head.slot, freed);
        mem.sfence();
        Ok(())
    }

    fn live(&self) -> &VecDeque<EntryRef> {
        &self.live
    }

    fn background_flushes(&self) -> u64 {
        self.init_flushes
    }
}
