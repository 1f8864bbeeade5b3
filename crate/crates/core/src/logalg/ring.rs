use std::collections::VecDeque;

use super::{
    zero_fill, AlgorithmKind, EntryRef, HeadWord, LogAlgorithm, LogError, LogRegion, RecoveredEntry, LAP_MASK,
};
use crate::pmem::SimMemory;

/// How one algorithm lays out and validates a single slot.
pub trait SlotCodec {
    fn kind(&self) -> AlgorithmKind;
    fn payload_len(&self) -> usize;
    /// Bytes of the slot the entry actually touches.
    fn entry_len(&self) -> usize;
    fn stride(&self) -> usize;
    /// Issues the stores for one entry. No flushes, no fences.
    fn encode(&self, mem: &mut SimMemory, addr: usize, payload: &[u8], lap: u32);
    /// Returns the payload if the slot holds a valid entry for `lap`.
    fn decode(&self, mem: &SimMemory, addr: usize, lap: u32) -> Option<Vec<u8>>;
    /// Makes the slot decode as invalid for `lap` (stores only).
    fn invalidate(&self, mem: &mut SimMemory, addr: usize, lap: u32);
    fn check_payload(&self, payload: &[u8]) -> Result<(), LogError> {
        if payload.len() != self.payload_len() {
            return Err(LogError::PayloadLength { expected: self.payload_len(), got: payload.len() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct SlotPos {
    pub slot: usize,
    pub lap: u32,
}

impl SlotPos {
    pub fn advance(self, n: usize, nslots: usize) -> SlotPos {
        let s = self.slot + n;
        SlotPos { slot: s % nslots, lap: (self.lap + (s / nslots) as u32) & LAP_MASK }
    }
}

/// A circular log whose entries validate themselves: one fenced round
/// trip per append, no tail pointer.
pub struct RingLog<C> {
    codec: C,
    region: LogRegion,
    nslots: usize,
    head: SlotPos,
    tail: SlotPos,
    live: VecDeque<EntryRef>,
    ordinal: u64,
    /// Set by recovery: the tail slot may hold a torn entry that a later
    /// torn append could complete.
    scrub_tail: bool,
}

impl<C: SlotCodec> RingLog<C> {
    pub fn new(codec: C, region: LogRegion) -> Result<Self, LogError> {
        let nslots = region.slots(codec.stride())?;
        let start = SlotPos { slot: 0, lap: 0 };
        Ok(RingLog { codec, region, nslots, head: start, tail: start, live: VecDeque::new(), ordinal: 0, scrub_tail: false })
    }

    pub fn codec(&self) -> &C {
        &self.codec
    }

    pub fn nslots(&self) -> usize {
        self.nslots
    }

    pub fn slot_addr(&self, slot: usize) -> usize {
        self.region.data_base() + slot * self.codec.stride()
    }
}

impl<C: SlotCodec> LogAlgorithm for RingLog<C> {
    fn kind(&self) -> AlgorithmKind {
        self.codec.kind()
    }

    fn payload_len(&self) -> usize {
        self.codec.payload_len()
    }

    fn region(&self) -> LogRegion {
        self.region
    }

    fn capacity(&self) -> usize {
        self.nslots
    }

    fn format(&mut self, mem: &mut SimMemory) {
        zero_fill(mem, self.region.base, self.region.size);
        mem.sfence();
        self.head = SlotPos { slot: 0, lap: 0 };
        self.tail = self.head;
        self.live.clear();
        self.scrub_tail = false;
        HeadWord::at(0, 0).persist(mem, &self.region);
    }

    fn append(&mut self, mem: &mut SimMemory, payload: &[u8]) -> Result<EntryRef, LogError> {
        self.codec.check_payload(payload)?;
        if self.live.len() >= self.nslots {
            return Err(LogError::LogFull);
        }
        let pos = self.tail;
        let addr = self.slot_addr(pos.slot);
        if self.scrub_tail {
            self.codec.invalidate(mem, addr, pos.lap);
            mem.flush_range(addr, self.codec.entry_len());
            mem.sfence();
            self.scrub_tail = false;
        }
        self.codec.encode(mem, addr, payload, pos.lap);
        mem.flush_range(addr, self.codec.entry_len());
        mem.sfence();
        let e = EntryRef { slot: pos.slot, lap: pos.lap, ordinal: self.ordinal, span: 1 };
        self.ordinal += 1;
        self.tail = pos.advance(1, self.nslots);
        self.live.push_back(e);
        Ok(e)
    }

    fn recover(&mut self, mem: &SimMemory) -> Result<Vec<RecoveredEntry>, LogError> {
        let h = HeadWord::read(mem, &self.region, self.nslots as u64 - 1)?;
        self.head = SlotPos { slot: h.index as usize, lap: h.lap };
        self.live.clear();
        self.ordinal = 0;
        let mut out = Vec::new();
        let mut pos = self.head;
        for rank in 0..self.nslots {
            match self.codec.decode(mem, self.slot_addr(pos.slot), pos.lap) {
                Some(payload) => {
                    let e = EntryRef { slot: pos.slot, lap: pos.lap, ordinal: self.ordinal, span: 1 };
                    self.ordinal += 1;
                    self.live.push_back(e);
                    out.push(RecoveredEntry { payload, position: e, age_rank: rank });
                    pos = pos.advance(1, self.nslots);
                }
                None => break,
            }
        }
        self.tail = pos;
        self.scrub_tail = out.len() < self.nslots;
        Ok(out)
    }

    fn trim(&mut self, mem: &mut SimMemory, upto: &EntryRef) -> Result<(), LogError> {
        let n = self.live.iter().position(|e| e == upto).ok_or(LogError::TrimPastTail)? + 1;
        let new_head = SlotPos { slot: upto.slot, lap: upto.lap }.advance(1, self.nslots);
        HeadWord::at(new_head.slot as u64, new_head.lap).persist(mem, &self.region);
        self.head = new_head;
        self.live.drain(..n);
        Ok(())
    }

    fn live(&self) -> &VecDeque<EntryRef> {
        &self.live
    }
}
