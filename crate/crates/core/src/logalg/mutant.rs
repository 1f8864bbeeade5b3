use super::{AlgorithmKind, CsoVbCodec, LogError, SlotCodec};
use crate::pmem::SimMemory;

/// CSO-VB with the metadata stored before the payload. A crash can keep
/// the validity bit and lose the data, so the crash harness must flag it.
#[derive(Debug, Clone)]
pub struct MutantVbCodec(CsoVbCodec);

impl MutantVbCodec {
    pub fn new(payload_len: usize) -> Result<Self, LogError> {
        Ok(MutantVbCodec(CsoVbCodec::new(payload_len)?))
    }
}

impl SlotCodec for MutantVbCodec {
    fn kind(&self) -> AlgorithmKind {
        AlgorithmKind::MutantVb
    }

    fn payload_len(&self) -> usize {
        self.0.payload_len()
    }

    fn entry_len(&self) -> usize {
        self.0.entry_len()
    }

    fn stride(&self) -> usize {
        self.0.stride()
    }

    fn encode(&self, mem: &mut SimMemory, addr: usize, payload: &[u8], lap: u32) {
        self.0.store_meta(mem, addr, lap);
        self.0.store_payload(mem, addr, payload);
    }

    fn decode(&self, mem: &SimMemory, addr: usize, lap: u32) -> Option<Vec<u8>> {
        self.0.decode(mem, addr, lap)
    }

    fn invalidate(&self, mem: &mut SimMemory, addr: usize, lap: u32) {
        self.0.invalidate(mem, addr, lap)
    }
}
