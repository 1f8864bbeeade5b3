use std::collections::BTreeMap;

use super::script::{ScriptOp, WorkloadScript};
use super::suite::{default_payload_len, log_region, pad};
use crate::logalg::AlgorithmKind;
use crate::pmem::{FlushStats, SimMemory, LINE_SIZE};
use crate::stps::{PersistentSet, StpsConfig};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiffReport {
    /// Payload sequence of the pure replay.
    pub oracle: Vec<Vec<u8>>,
    pub a: (AlgorithmKind, Result<Vec<Vec<u8>>, String>),
    pub b: (AlgorithmKind, Result<Vec<Vec<u8>>, String>),
}

impl DiffReport {
    /// Both algorithms recovered exactly the oracle sequence.
    pub fn agree(&self) -> bool {
        [&self.a.1, &self.b.1].iter().all(|r| r.as_ref().is_ok_and(|got| got == &self.oracle))
    }
}

fn replay_log(kind: AlgorithmKind, script: &WorkloadScript, payload_len: usize) -> Result<Vec<Vec<u8>>, String> {
    let appends = script.ops.iter().filter(|op| matches!(op, ScriptOp::Append(_))).count();
    let region = log_region(payload_len, script.slots.unwrap_or(appends + 2));
    let mut mem = SimMemory::new(region.base + region.size);
    let mut log = kind.build(region, payload_len).map_err(|e| e.to_string())?;
    log.format(&mut mem);
    for op in &script.ops {
        match op {
            ScriptOp::Append(p) => {
                log.append(&mut mem, &pad(p, payload_len)?).map_err(|e| e.to_string())?;
            }
            ScriptOp::Trim(n) => {
                let n = (*n).min(log.live().len());
                log.trim_oldest(&mut mem, n).map_err(|e| e.to_string())?;
            }
            other => return Err(format!("`{other}` is not a log operation")),
        }
    }
    let image = SimMemory::from_image(LINE_SIZE, mem.persisted_image());
    let mut reader = kind.build(region, payload_len).map_err(|e| e.to_string())?;
    let entries = reader.recover(&image).map_err(|e| e.to_string())?;
    Ok(entries.into_iter().map(|e| e.payload).collect())
}

/// Runs a log script crash-free under two algorithms and recovers both
/// from their persisted images.
pub fn differential_recovery(a: AlgorithmKind, b: AlgorithmKind, script: &WorkloadScript) -> DiffReport {
    let payload_len = script.payload_len.unwrap_or_else(|| default_payload_len(script));
    let mut oracle = std::collections::VecDeque::new();
    for op in &script.ops {
        match op {
            ScriptOp::Append(p) => oracle.push_back(pad(p, payload_len).unwrap_or_default()),
            ScriptOp::Trim(n) => {
                let n = (*n).min(oracle.len());
                oracle.drain(..n);
            }
            _ => {}
        }
    }
    DiffReport {
        oracle: oracle.into_iter().collect(),
        a: (a, replay_log(a, script, payload_len)),
        b: (b, replay_log(b, script, payload_len)),
    }
}

type SetMap = BTreeMap<Vec<u8>, Vec<u8>>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SetDiffReport {
    pub oracle: SetMap,
    pub plain: Result<(SetMap, FlushStats), String>,
    pub optimized: Result<(SetMap, FlushStats), String>,
}

impl SetDiffReport {
    /// Identical recovered maps equal to the oracle, and identical flush
    /// and fence counts.
    pub fn agree(&self) -> bool {
        match (&self.plain, &self.optimized) {
            (Ok((m1, s1)), Ok((m2, s2))) => {
                m1 == &self.oracle
                    && m2 == &self.oracle
                    && s1.clflushopt_count == s2.clflushopt_count
                    && s1.fenced_roundtrips == s2.fenced_roundtrips
                    && s1.store_count == s2.store_count
            }
            _ => false,
        }
    }
}

fn replay_set(script: &WorkloadScript, optimized: bool) -> Result<(SetMap, FlushStats), String> {
    let cfg = StpsConfig::new(script.slots.unwrap_or(script.ops.len() * 2 + 8), script.node_lines.unwrap_or(1))
        .with_buckets(64);
    let mut mem = SimMemory::new(cfg.base + cfg.region_len());
    let mut set = PersistentSet::create(&mut mem, cfg).map_err(|e| e.to_string())?;
    let start = mem.stats();
    for op in &script.ops {
        let r = match op {
            ScriptOp::Update(k, v) if optimized => set.update_optimized(&mut mem, k, v),
            ScriptOp::Update(k, v) => set.update(&mut mem, k, v),
            ScriptOp::Remove(k) => set.remove(&mut mem, k).map(|_| ()),
            ScriptOp::Txn(pairs) => set.txn_update(&mut mem, pairs),
            ScriptOp::Get(_) => Ok(()),
            other => return Err(format!("`{other}` is not a set operation")),
        };
        r.map_err(|e| e.to_string())?;
    }
    let stats = mem.stats().since(&start);
    let mut image = SimMemory::from_image(LINE_SIZE, mem.persisted_image());
    let (recovered, _) = PersistentSet::recover(&mut image, cfg).map_err(|e| e.to_string())?;
    Ok((recovered.contents(&image), stats))
}

/// `update` against `update_optimized` on the same set script.
pub fn differential_set(script: &WorkloadScript) -> SetDiffReport {
    let mut oracle = SetMap::new();
    for op in &script.ops {
        match op {
            ScriptOp::Update(k, v) => {
                oracle.insert(k.clone(), v.clone());
            }
            ScriptOp::Remove(k) => {
                oracle.remove(k);
            }
            ScriptOp::Txn(pairs) => oracle.extend(pairs.iter().cloned()),
            _ => {}
        }
    }
    SetDiffReport { oracle, plain: replay_set(script, false), optimized: replay_set(script, true) }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vb_and_crc64_agree() {
        let s = WorkloadScript::parse("payload 56\nA one\nA two\nTRIM 1\nA three\nA hex:ffffffffffffffff").unwrap();
        let r = differential_recovery(AlgorithmKind::CsoVb, AlgorithmKind::Crc64, &s);
        assert!(r.agree(), "{r:?}");
        assert_eq!(r.oracle.len(), 3);
    }

    #[test]
    fn tornbit_is_bit_exact() {
        let s = WorkloadScript::parse("payload 40\nA hex:ffffffffffffffffffffffffffffffffffffffffffffffffffffffffffffffffffffffffffffffff\nA hex:8000000000000001").unwrap();
        assert!(differential_recovery(AlgorithmKind::Tornbit, AlgorithmKind::CsoFvb, &s).agree());
    }

    #[test]
    fn update_paths_agree() {
        let s = WorkloadScript::parse("U a 1\nU b 2\nU a 3\nR b\nT c 4 d 5\nU c 6").unwrap();
        let r = differential_set(&s);
        assert!(r.agree(), "{r:?}");
    }
}
