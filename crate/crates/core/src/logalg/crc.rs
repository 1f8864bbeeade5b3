use ::crc::{Crc, CRC_32_ISCSI, CRC_64_ECMA_182};

use super::{check_words, slot_stride, store_words, AlgorithmKind, LogError, SlotCodec, LAP_MASK};
use crate::pmem::{SimMemory, StoreOrder, WORD_SIZE};

const CRC32C: Crc<u32> = Crc::<u32>::new(&CRC_32_ISCSI);
const CRC64: Crc<u64> = Crc::<u64>::new(&CRC_64_ECMA_182);

pub fn crc32c(bytes: &[u8]) -> u32 {
    CRC32C.checksum(bytes)
}

pub fn crc64(bytes: &[u8]) -> u64 {
    CRC64.checksum(bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrcWidth {
    Crc32,
    Crc64,
}

/// Entry = `[seq][len][payload..][checksum]`; the checksum covers
/// everything before it.
#[derive(Debug, Clone)]
pub struct CrcCodec {
    width: CrcWidth,
    payload_len: usize,
    stride: usize,
}

impl CrcCodec {
    pub fn new(width: CrcWidth, payload_len: usize) -> Result<Self, LogError> {
        check_words(payload_len)?;
        Ok(CrcCodec { width, payload_len, stride: slot_stride(payload_len + 3 * WORD_SIZE) })
    }

    pub fn checksum(&self, covered: &[u8]) -> u64 {
        match self.width {
            CrcWidth::Crc32 => crc32c(covered) as u64,
            CrcWidth::Crc64 => crc64(covered),
        }
    }

    /// Bytes covered by the checksum for an entry.
    pub fn covered_bytes(&self, lap: u32, payload: &[u8]) -> Vec<u8> {
        let mut buf = Vec::with_capacity(payload.len() + 2 * WORD_SIZE);
        buf.extend_from_slice(&((lap & LAP_MASK) as u64).to_le_bytes());
        buf.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        buf.extend_from_slice(payload);
        buf
    }

    pub fn checksum_offset(&self) -> usize {
        self.payload_len + 2 * WORD_SIZE
    }
}

impl SlotCodec for CrcCodec {
    fn kind(&self) -> AlgorithmKind {
        match self.width {
            CrcWidth::Crc32 => AlgorithmKind::Crc32,
            CrcWidth::Crc64 => AlgorithmKind::Crc64,
        }
    }

    fn payload_len(&self) -> usize {
        self.payload_len
    }

    fn entry_len(&self) -> usize {
        self.payload_len + 3 * WORD_SIZE
    }

    fn stride(&self) -> usize {
        self.stride
    }

    fn encode(&self, mem: &mut SimMemory, addr: usize, payload: &[u8], lap: u32) {
        let covered = self.covered_bytes(lap, payload);
        store_words(mem, addr, &covered);
        mem.store_u64(addr + self.checksum_offset(), self.checksum(&covered), StoreOrder::Release);
    }

    fn decode(&self, mem: &SimMemory, addr: usize, lap: u32) -> Option<Vec<u8>> {
        let covered = mem.read(addr, self.checksum_offset());
        if covered[..8] != ((lap & LAP_MASK) as u64).to_le_bytes()
            || covered[8..16] != (self.payload_len as u64).to_le_bytes()
        {
            return None;
        }
        if mem.read_u64(addr + self.checksum_offset()) != self.checksum(covered) {
            return None;
        }
        Some(covered[16..].to_vec())
    }

    fn invalidate(&self, mem: &mut SimMemory, addr: usize, _lap: u32) {
        super::store_words(mem, addr, &vec![0u8; self.entry_len()]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn check_values() {
        assert_eq!(crc32c(b"123456789"), 0xE306_9283);
        assert_eq!(crc64(b"123456789"), 0x6C40_DF5F_0B49_7347);
    }

    #[test]
    fn torn_entry_rejected() {
        let codec = CrcCodec::new(CrcWidth::Crc64, 40).unwrap();
        let mut mem = SimMemory::new(128);
        codec.encode(&mut mem, 0, &[9u8; 40], 0);
        assert_eq!(codec.decode(&mem, 0, 0), Some(vec![9u8; 40]));
        assert_eq!(codec.decode(&mem, 0, 1), None);
        mem.store_u64(24, 0, StoreOrder::Relaxed);
        assert_eq!(codec.decode(&mem, 0, 0), None);
    }
}
