use super::{slot_stride, valid_bit, AlgorithmKind, LogError, SlotCodec};
use crate::pmem::{SimMemory, StoreOrder, WORD_SIZE};

const BITS: usize = 63;
const LOW: u64 = (1 << BITS) - 1;

pub fn words_for_bits(bits: usize) -> usize {
    bits.div_ceil(BITS)
}

/// Packs `payload` as an LSB-first bit stream, 63 bits per word, with the
/// top bit of every word set to `bit`.
pub fn tornbit_pack(payload: &[u8], bit: bool) -> Vec<u64> {
    let nbits = payload.len() * 8;
    let mut words = vec![0u64; words_for_bits(nbits)];
    for i in 0..nbits {
        if payload[i / 8] >> (i % 8) & 1 == 1 {
            words[i / BITS] |= 1 << (i % BITS);
        }
    }
    for w in &mut words {
        *w |= (bit as u64) << BITS;
    }
    words
}

/// Inverse of [`tornbit_pack`]; ignores the top bits.
pub fn tornbit_unpack(words: &[u64], len: usize) -> Vec<u8> {
    let mut out = vec![0u8; len];
    for i in 0..len * 8 {
        if (words[i / BITS] & LOW) >> (i % BITS) & 1 == 1 {
            out[i / 8] |= 1 << (i % 8);
        }
    }
    out
}

/// Every word carries a validity bit, at the price of repacking the payload.
#[derive(Debug, Clone)]
pub struct TornbitCodec {
    payload_len: usize,
    words: usize,
    stride: usize,
}

impl TornbitCodec {
    pub fn new(payload_len: usize) -> Result<Self, LogError> {
        if payload_len == 0 {
            return Err(LogError::EmptyPayload);
        }
        let words = words_for_bits(payload_len * 8);
        Ok(TornbitCodec { payload_len, words, stride: slot_stride(words * WORD_SIZE) })
    }
}

impl SlotCodec for TornbitCodec {
    fn kind(&self) -> AlgorithmKind {
        AlgorithmKind::Tornbit
    }

    fn payload_len(&self) -> usize {
        self.payload_len
    }

    fn entry_len(&self) -> usize {
        self.words * WORD_SIZE
    }

    fn stride(&self) -> usize {
        self.stride
    }

    fn encode(&self, mem: &mut SimMemory, addr: usize, payload: &[u8], lap: u32) {
        for (i, w) in tornbit_pack(payload, valid_bit(lap)).into_iter().enumerate() {
            mem.store_u64(addr + i * WORD_SIZE, w, StoreOrder::Relaxed);
        }
    }

    fn decode(&self, mem: &SimMemory, addr: usize, lap: u32) -> Option<Vec<u8>> {
        let want = valid_bit(lap) as u64;
        let words: Vec<u64> = (0..self.words).map(|i| mem.read_u64(addr + i * WORD_SIZE)).collect();
        if words.iter().any(|w| w >> BITS != want) {
            return None;
        }
        Some(tornbit_unpack(&words, self.payload_len))
    }

    fn invalidate(&self, mem: &mut SimMemory, addr: usize, lap: u32) {
        for i in 0..self.words {
            mem.store_u64(addr + i * WORD_SIZE, (!valid_bit(lap) as u64) << BITS, StoreOrder::Relaxed);
        }
    }
}
