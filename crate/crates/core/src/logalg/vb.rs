use super::{check_words, slot_stride, store_words, valid_bit, AlgorithmKind, LogError, SlotCodec};
use crate::pmem::{SimMemory, StoreOrder, LINE_SIZE, WORD_SIZE};

/// Largest payload a validity-bit entry can carry (two lines minus two
/// metadata words).
pub const CSOVB_MAX_PAYLOAD: usize = 2 * LINE_SIZE - 2 * WORD_SIZE;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntryLayout {
    pub payload_len: usize,
    pub total_len: usize,
    /// Byte offsets of the metadata words, in store order.
    pub metadata_slots: Vec<usize>,
    pub payload_offset: usize,
}

/// Single-line entries put the metadata word right after the payload;
/// two-line entries bracket the payload with one word at each end.
pub fn csovb_layout(payload_len: usize) -> Result<EntryLayout, LogError> {
    check_words(payload_len)?;
    if payload_len > CSOVB_MAX_PAYLOAD {
        return Err(LogError::PayloadTooLarge {
            len: payload_len,
            max: CSOVB_MAX_PAYLOAD,
            hint: "use cso-fvb or cso-random for larger entries",
        });
    }
    if payload_len + WORD_SIZE <= LINE_SIZE {
        Ok(EntryLayout {
            payload_len,
            total_len: payload_len + WORD_SIZE,
            metadata_slots: vec![payload_len],
            payload_offset: 0,
        })
    } else {
        Ok(EntryLayout {
            payload_len,
            total_len: 2 * LINE_SIZE,
            metadata_slots: vec![0, 2 * LINE_SIZE - WORD_SIZE],
            payload_offset: WORD_SIZE,
        })
    }
}

#[derive(Debug, Clone)]
pub struct CsoVbCodec {
    layout: EntryLayout,
    stride: usize,
}

impl CsoVbCodec {
    pub fn new(payload_len: usize) -> Result<Self, LogError> {
        let layout = csovb_layout(payload_len)?;
        let stride = slot_stride(layout.total_len);
        Ok(CsoVbCodec { layout, stride })
    }

    pub fn layout(&self) -> &EntryLayout {
        &self.layout
    }

    pub(crate) fn store_payload(&self, mem: &mut SimMemory, addr: usize, payload: &[u8]) {
        store_words(mem, addr + self.layout.payload_offset, payload);
    }

    pub(crate) fn store_meta(&self, mem: &mut SimMemory, addr: usize, lap: u32) {
        for &off in &self.layout.metadata_slots {
            mem.store_u64(addr + off, valid_bit(lap) as u64, StoreOrder::Release);
        }
    }
}

impl SlotCodec for CsoVbCodec {
    fn kind(&self) -> AlgorithmKind {
        AlgorithmKind::CsoVb
    }

    fn payload_len(&self) -> usize {
        self.layout.payload_len
    }

    fn entry_len(&self) -> usize {
        self.layout.total_len
    }

    fn stride(&self) -> usize {
        self.stride
    }

    fn encode(&self, mem: &mut SimMemory, addr: usize, payload: &[u8], lap: u32) {
        self.store_payload(mem, addr, payload);
        self.store_meta(mem, addr, lap);
    }

    fn decode(&self, mem: &SimMemory, addr: usize, lap: u32) -> Option<Vec<u8>> {
        let want = valid_bit(lap) as u64;
        if self.layout.metadata_slots.iter().any(|&off| mem.read_u64(addr + off) & 1 != want) {
            return None;
        }
        let start = addr + self.layout.payload_offset;
        Some(mem.read(start, self.layout.payload_len).to_vec())
    }

    fn invalidate(&self, mem: &mut SimMemory, addr: usize, lap: u32) {
        self.store_meta(mem, addr, lap + 1);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logalg::{LogAlgorithm, LogRegion, RingLog};

    #[test]
    fn layouts() {
        let l = csovb_layout(24).unwrap();
        assert_eq!((l.total_len, l.metadata_slots.clone()), (32, vec![24]));
        assert_eq!(CsoVbCodec::new(24).unwrap().stride(), 32);
        let l = csovb_layout(56).unwrap();
        assert_eq!((l.total_len, l.metadata_slots.clone()), (64, vec![56]));
        let l = csovb_layout(112).unwrap();
        assert_eq!(l.metadata_slots, vec![0, 120]);
        assert_eq!(l.payload_offset, 8);
        assert!(matches!(csovb_layout(120), Err(LogError::PayloadTooLarge { .. })));
        assert!(matches!(csovb_layout(20), Err(LogError::Misaligned(20))));
    }

    #[test]
    fn append_is_one_round_trip() {
        let mut mem = SimMemory::new(64 * 9);
        let mut log = RingLog::new(CsoVbCodec::new(112).unwrap(), LogRegion::new(0, 64 * 9)).unwrap();
        log.format(&mut mem);
        let before = mem.stats();
        log.append(&mut mem, &[7u8; 112]).unwrap();
        assert_eq!(mem.stats().since(&before).fenced_roundtrips, 1);
    }

    #[test]
    fn wraps_with_flipped_polarity() {
        let mut mem = SimMemory::new(64 * 3);
        let region = LogRegion::new(0, 64 * 3);
        let mut log = RingLog::new(CsoVbCodec::new(24).unwrap(), region).unwrap();
        log.format(&mut mem);
        assert_eq!(log.capacity(), 4);
        for round in 0..5u8 {
            for i in 0..3u8 {
                log.append(&mut mem, &[round * 10 + i; 24]).unwrap();
            }
            let mut fresh = RingLog::new(CsoVbCodec::new(24).unwrap(), region).unwrap();
            let got: Vec<u8> = fresh.recover(&mem).unwrap().iter().map(|e| e.payload[0]).collect();
            assert_eq!(got, vec![round * 10, round * 10 + 1, round * 10 + 2]);
            log.trim_oldest(&mut mem, 3).unwrap();
        }
        log.append(&mut mem, &[1; 24]).unwrap();
        log.append(&mut mem, &[2; 24]).unwrap();
        log.append(&mut mem, &[3; 24]).unwrap();
        log.append(&mut mem, &[4; 24]).unwrap();
        assert_eq!(log.append(&mut mem, &[5; 24]), Err(LogError::LogFull));
        let mut fresh = RingLog::new(CsoVbCodec::new(24).unwrap(), region).unwrap();
        assert_eq!(fresh.recover(&mem).unwrap().len(), 4);
    }
}
