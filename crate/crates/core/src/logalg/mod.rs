//! Append/recover/trim logs living in a [`SimMemory`] region.
//!
//! Every algorithm shares one region layout: the first cache line holds the
//! durable head word, the rest is a circular array of fixed-size slots. The
//! tail is volatile and rebuilt by [`LogAlgorithm::recover`].

mod crc;
mod fvb;
mod linked;
mod mutant;
mod random;
mod ring;
mod tornbit;
mod vb;

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use crate::pmem::{SimMemory, StoreOrder, LINE_SIZE, WORD_SIZE};

pub use self::crc::{crc32c, crc64, CrcCodec, CrcWidth};
pub use self::fvb::{fvb_check_cacheline, fvb_diff, fvb_write_cacheline, FvbCodec, FvbMeta, FvbPair};
pub use self::linked::LinkedLog;
pub use self::mutant::MutantVbCodec;
pub use self::random::{CsoRandom, RANDOM_INIT, SENTINEL};
pub use self::ring::{RingLog, SlotCodec};
pub use self::tornbit::{tornbit_pack, tornbit_unpack, words_for_bits, TornbitCodec};
pub use self::vb::{csovb_layout, CsoVbCodec, EntryLayout, CSOVB_MAX_PAYLOAD};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LogError {
    #[error("payload is {got} bytes but this log stores {expected}-byte entries")]
    PayloadLength { expected: usize, got: usize },
    #[error("payload of {len} bytes exceeds the {max}-byte limit; {hint}")]
    PayloadTooLarge { len: usize, max: usize, hint: &'static str },
    #[error("payload length {0} is not a whole number of words")]
    Misaligned(usize),
    #[error("empty payload")]
    EmptyPayload,
    #[error("{kind} does not support {len}-byte payloads")]
    UnsupportedSize { kind: AlgorithmKind, len: usize },
    #[error("log is full")]
    LogFull,
    #[error("payload contains the reserved sentinel word")]
    ReservedWord,
    #[error("trim target is not a live entry")]
    TrimPastTail,
    #[error("unrecoverable log: corrupt head word {0:#018x}")]
    CorruptHead(u64),
    #[error("region at {base:#x}+{size:#x} is misaligned or too small for one slot")]
    RegionTooSmall { base: usize, size: usize },
}

/// Where a log lives: line-aligned, whole lines, first line is the header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogRegion {
    pub base: usize,
    pub size: usize,
}

impl LogRegion {
    pub fn new(base: usize, size: usize) -> Self {
        LogRegion { base, size }
    }

    pub fn head_addr(&self) -> usize {
        self.base
    }

    pub fn data_base(&self) -> usize {
        self.base + LINE_SIZE
    }

    pub fn data_len(&self) -> usize {
        self.size.saturating_sub(LINE_SIZE)
    }

    pub(crate) fn slots(&self, stride: usize) -> Result<usize, LogError> {
        let n = self.data_len() / stride;
        if self.base % LINE_SIZE != 0 || self.size % LINE_SIZE != 0 || n == 0 {
            return Err(LogError::RegionTooSmall { base: self.base, size: self.size });
        }
        Ok(n)
    }
}

/// Lap counters are stored in 23 bits.
pub(crate) const LAP_MASK: u32 = (1 << 23) - 1;

/// The durable head word: bits 0..40 head slot, 40..63 lap, 63 polarity.
///
/// Polarity is the validity-bit value that means VALID for slots in
/// `[head, end)`; slots in `[0, head)` belong to the next lap and use the
/// opposite value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadWord {
    pub index: u64,
    pub lap: u32,
    pub polarity: bool,
}

impl HeadWord {
    pub fn at(index: u64, lap: u32) -> Self {
        HeadWord { index, lap: lap & LAP_MASK, polarity: valid_bit(lap) }
    }

    pub fn encode(&self) -> u64 {
        (self.index & ((1 << 40) - 1)) | ((self.lap as u64 & LAP_MASK as u64) << 40) | ((self.polarity as u64) << 63)
    }

    pub fn decode(word: u64) -> Self {
        HeadWord {
            index: word & ((1 << 40) - 1),
            lap: ((word >> 40) as u32) & LAP_MASK,
            polarity: word >> 63 == 1,
        }
    }

    pub(crate) fn read(mem: &SimMemory, region: &LogRegion, max_index: u64) -> Result<Self, LogError> {
        let raw = mem.read_u64(region.head_addr());
        let h = HeadWord::decode(raw);
        if h.index > max_index || h.polarity != valid_bit(h.lap) {
            return Err(LogError::CorruptHead(raw));
        }
        Ok(h)
    }

    pub(crate) fn persist(&self, mem: &mut SimMemory, region: &LogRegion) {
        mem.store_u64(region.head_addr(), self.encode(), StoreOrder::Release);
        mem.clflushopt(mem.line_of(region.head_addr()));
        mem.sfence();
    }
}

/// Validity-bit value meaning VALID during `lap` (1 on the first lap).
pub fn valid_bit(lap: u32) -> bool {
    lap % 2 == 0
}

/// A live entry's position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EntryRef {
    pub slot: usize,
    pub lap: u32,
    /// Append number since the log object was created or recovered.
    pub ordinal: u64,
    /// Slots occupied (2 when a sentinel follows the entry).
    pub span: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecoveredEntry {
    pub payload: Vec<u8>,
    pub position: EntryRef,
    /// 0 is the oldest.
    pub age_rank: usize,
}

/// The contract every log implements.
pub trait LogAlgorithm {
    fn kind(&self) -> AlgorithmKind;
    fn payload_len(&self) -> usize;
    fn region(&self) -> LogRegion;
    /// Maximum number of live entries.
    fn capacity(&self) -> usize;

    /// Initializes the whole region and persists it.
    fn format(&mut self, mem: &mut SimMemory);

    /// Durably appends `payload`; every later crash recovers it.
    fn append(&mut self, mem: &mut SimMemory, payload: &[u8]) -> Result<EntryRef, LogError>;

    /// Reads the log from a crash image, oldest first, and resets the
    /// volatile tail to follow the last recovered entry.
    fn recover(&mut self, mem: &SimMemory) -> Result<Vec<RecoveredEntry>, LogError>;

    /// Drops every entry up to and including `upto`.
    fn trim(&mut self, mem: &mut SimMemory, upto: &EntryRef) -> Result<(), LogError>;

    fn live(&self) -> &VecDeque<EntryRef>;

    /// Trims the `n` oldest entries. `n == 0` does nothing.
    fn trim_oldest(&mut self, mem: &mut SimMemory, n: usize) -> Result<(), LogError> {
        if n == 0 {
            return Ok(());
        }
        let upto = *self.live().get(n - 1).ok_or(LogError::TrimPastTail)?;
        self.trim(mem, &upto)
    }

    /// Flushes issued off the critical path (log re-initialization).
    fn background_flushes(&self) -> u64 {
        0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AlgorithmKind {
    CsoVb,
    CsoRandom,
    CsoFvb,
    TwoRounds,
    Tornbit,
    Crc32,
    Crc64,
    AtlasLog,
    /// CSO-VB with the validity bit written before the data. Broken on purpose.
    MutantVb,
}

impl AlgorithmKind {
    pub const ALL: [AlgorithmKind; 8] = [
        AlgorithmKind::CsoVb,
        AlgorithmKind::CsoRandom,
        AlgorithmKind::CsoFvb,
        AlgorithmKind::TwoRounds,
        AlgorithmKind::Tornbit,
        AlgorithmKind::Crc32,
        AlgorithmKind::Crc64,
        AlgorithmKind::AtlasLog,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmKind::CsoVb => "cso-vb",
            AlgorithmKind::CsoRandom => "cso-random",
            AlgorithmKind::CsoFvb => "cso-fvb",
            AlgorithmKind::TwoRounds => "two-rounds",
            AlgorithmKind::Tornbit => "tornbit",
            AlgorithmKind::Crc32 => "crc32",
            AlgorithmKind::Crc64 => "crc64",
            AlgorithmKind::AtlasLog => "atlas",
            AlgorithmKind::MutantVb => "mutant-vb",
        }
    }

    /// Whether the algorithm accepts payloads of `len` bytes.
    pub fn supports(&self, len: usize) -> bool {
        if len == 0 {
            return false;
        }
        match self {
            AlgorithmKind::CsoVb | AlgorithmKind::MutantVb => csovb_layout(len).is_ok(),
            AlgorithmKind::AtlasLog => len == linked::ATLAS_PAYLOAD,
            AlgorithmKind::Tornbit => true,
            _ => len % WORD_SIZE == 0,
        }
    }

    /// Builds an unformatted log over `region`.
    pub fn build(&self, region: LogRegion, payload_len: usize) -> Result<Box<dyn LogAlgorithm>, LogError> {
        Ok(match self {
            AlgorithmKind::CsoVb => Box::new(RingLog::new(CsoVbCodec::new(payload_len)?, region)?),
            AlgorithmKind::MutantVb => Box::new(RingLog::new(MutantVbCodec::new(payload_len)?, region)?),
            AlgorithmKind::CsoFvb => Box::new(RingLog::new(FvbCodec::new(payload_len)?, region)?),
            AlgorithmKind::Tornbit => Box::new(RingLog::new(TornbitCodec::new(payload_len)?, region)?),
            AlgorithmKind::Crc32 => Box::new(RingLog::new(CrcCodec::new(CrcWidth::Crc32, payload_len)?, region)?),
            AlgorithmKind::Crc64 => Box::new(RingLog::new(CrcCodec::new(CrcWidth::Crc64, payload_len)?, region)?),
            AlgorithmKind::CsoRandom => Box::new(CsoRandom::new(region, payload_len)?),
            AlgorithmKind::TwoRounds | AlgorithmKind::AtlasLog => Box::new(LinkedLog::new(*self, region, payload_len)?),
        })
    }
}

impl fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AlgorithmKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        AlgorithmKind::ALL
            .iter()
            .chain([AlgorithmKind::MutantVb].iter())
            .find(|k| k.name() == lower)
            .copied()
            .ok_or_else(|| format!("unknown log algorithm `{s}`"))
    }
}

/// Slot stride for an entry of `len` bytes: a power of two inside one
/// line, whole lines beyond that.
pub(crate) fn slot_stride(len: usize) -> usize {
    if len <= LINE_SIZE {
        len.next_power_of_two().max(WORD_SIZE)
    } else {
        len.div_ceil(LINE_SIZE) * LINE_SIZE
    }
}

pub(crate) fn check_words(payload_len: usize) -> Result<(), LogError> {
    if payload_len == 0 {
        return Err(LogError::EmptyPayload);
    }
    if payload_len % WORD_SIZE != 0 {
        return Err(LogError::Misaligned(payload_len));
    }
    Ok(())
}

/// Stores `bytes` one word at a time, relaxed, low address first.
pub(crate) fn store_words(mem: &mut SimMemory, addr: usize, bytes: &[u8]) {
    for (i, chunk) in bytes.chunks(WORD_SIZE).enumerate() {
        mem.store(addr + i * WORD_SIZE, chunk, StoreOrder::Relaxed);
    }
}

/// Zeros `[addr, addr+len)` line by line and flushes it (no fence).
pub(crate) fn zero_fill(mem: &mut SimMemory, addr: usize, len: usize) {
    let zeros = [0u8; LINE_SIZE];
    let mut a = addr;
    while a < addr + len {
        let n = (LINE_SIZE - a % LINE_SIZE).min(addr + len - a);
        mem.store(a, &zeros[..n], StoreOrder::Relaxed);
        a += n;
    }
    mem.flush_range(addr, len);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn head_word_round_trip() {
        for (i, lap) in [(0u64, 0u32), (5, 1), ((1 << 40) - 1, LAP_MASK)] {
            let h = HeadWord::at(i, lap);
            assert_eq!(HeadWord::decode(h.encode()), h);
        }
        assert!(HeadWord::at(0, 0).polarity);
        assert!(!HeadWord::at(0, 1).polarity);
    }

    #[test]
    fn strides() {
        assert_eq!(slot_stride(32), 32);
        assert_eq!(slot_stride(48), 64);
        assert_eq!(slot_stride(64), 64);
        assert_eq!(slot_stride(72), 128);
        assert_eq!(slot_stride(520), 576);
    }

    #[test]
    fn names_parse_back() {
        for k in AlgorithmKind::ALL.iter().chain([AlgorithmKind::MutantVb].iter()) {
            assert_eq!(k.name().parse::<AlgorithmKind>().unwrap(), *k);
        }
        assert!("md5".parse::<AlgorithmKind>().is_err());
    }

    #[test]
    fn corrupt_head_is_reported() {
        let region = LogRegion::new(0, 64 * 4);
        let mut mem = SimMemory::new(64 * 4);
        mem.store_u64(0, HeadWord { index: 2, lap: 0, polarity: false }.encode(), StoreOrder::Relaxed);
        assert!(matches!(HeadWord::read(&mem, &region, 5), Err(LogError::CorruptHead(_))));
        let mut log = AlgorithmKind::CsoVb.build(region, 24).unwrap();
        assert!(matches!(log.recover(&mem), Err(LogError::CorruptHead(_))));
    }
}
