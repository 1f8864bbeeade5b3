use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::suite::log_region;
use crate::logalg::{AlgorithmKind, LogAlgorithm, LogError, SENTINEL};
use crate::pmem::SimMemory;

/// Appends between drains, as in the stress loop.
pub const DRAIN_INTERVAL: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuditResult {
    pub kind: AlgorithmKind,
    pub payload_len: usize,
    pub appends: u64,
    /// Fenced round trips issued inside `append` calls.
    pub roundtrips: u64,
    /// Re-initialization flushes issued outside `append`.
    pub background_flushes: u64,
}

impl AuditResult {
    pub fn per_append(&self) -> f64 {
        self.roundtrips as f64 / self.appends as f64
    }

    pub fn background_per_append(&self) -> f64 {
        self.background_flushes as f64 / self.appends as f64
    }
}

/// Random payload words, never the reserved sentinel.
pub(crate) fn random_payload(rng: &mut ChaCha8Rng, len: usize) -> Vec<u8> {
    let mut p = vec![0u8; len];
    rng.fill_bytes(&mut p);
    for w in p.chunks_mut(8).filter(|w| w.len() == 8) {
        if u64::from_le_bytes(w.try_into().unwrap()) == SENTINEL {
            w[0] ^= 1;
        }
    }
    p
}

/// Reads every live entry through a separate reader, then trims them all.
pub(crate) fn drain(mem: &mut SimMemory, log: &mut dyn LogAlgorithm) -> Result<usize, LogError> {
    let mut reader = log.kind().build(log.region(), log.payload_len())?;
    let read = reader.recover(mem)?.len();
    let n = log.live().len();
    debug_assert_eq!(read, n);
    log.trim_oldest(mem, n)?;
    mem.compact();
    Ok(read)
}

/// Appends `n` random entries, draining every [`DRAIN_INTERVAL`], and
/// counts the fenced round trips spent inside the appends.
pub fn audit_roundtrips(kind: AlgorithmKind, n: usize, payload_len: usize) -> Result<AuditResult, LogError> {
    let region = log_region(payload_len, DRAIN_INTERVAL + 2);
    let mut mem = SimMemory::new(region.base + region.size);
    let mut log = kind.build(region, payload_len)?;
    log.format(&mut mem);
    mem.compact();
    let background_start = log.background_flushes();
    let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
    let mut roundtrips = 0;
    for i in 0..n {
        if i > 0 && i % DRAIN_INTERVAL == 0 {
            drain(&mut mem, log.as_mut())?;
        }
        let p = random_payload(&mut rng, payload_len);
        let before = mem.stats();
        log.append(&mut mem, &p)?;
        roundtrips += mem.stats().since(&before).fenced_roundtrips;
    }
    drain(&mut mem, log.as_mut())?;
    Ok(AuditResult {
        kind,
        payload_len,
        appends: n as u64,
        roundtrips,
        background_flushes: log.background_flushes() - background_start,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_costs() {
        for (kind, len, want) in [
            (AlgorithmKind::CsoVb, 56, 1.0),
            (AlgorithmKind::CsoVb, 112, 1.0),
            (AlgorithmKind::CsoFvb, 240, 1.0),
            (AlgorithmKind::Tornbit, 56, 1.0),
            (AlgorithmKind::Crc32, 56, 1.0),
            (AlgorithmKind::Crc64, 56, 1.0),
            (AlgorithmKind::TwoRounds, 56, 2.0),
            (AlgorithmKind::AtlasLog, 24, 1.5),
            (AlgorithmKind::CsoRandom, 56, 1.0),
        ] {
            let r = audit_roundtrips(kind, 1024, len).unwrap();
            assert_eq!(r.per_append(), want, "{kind}");
        }
    }

    #[test]
    fn random_background_init() {
        let r = audit_roundtrips(AlgorithmKind::CsoRandom, 1024, 56).unwrap();
        assert_eq!(r.background_per_append(), 1.0);
        let r = audit_roundtrips(AlgorithmKind::CsoVb, 1024, 56).unwrap();
        assert_eq!(r.background_flushes, 0);
    }
}
