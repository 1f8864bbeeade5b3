use std::fmt::Write;

use anyhow::{bail, Result};
use nvlog::logalg::{AlgorithmKind, HeadWord, LogRegion, RecoveredEntry};
use nvlog::pmem::{SimMemory, LINE_SIZE};
use nvlog::stps::{Epl, PersistentSet, SlotRead, StpsConfig};

pub enum InspectTarget {
    Log { algo: AlgorithmKind, payload_len: usize, region: Option<LogRegion> },
    Set { node_lines: usize, nslots: Option<usize> },
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn nonzero_lines(mem: &SimMemory) -> Vec<usize> {
    (0..mem.num_lines()).filter(|&l| mem.read(l * LINE_SIZE, LINE_SIZE).iter().any(|&b| b != 0)).collect()
}

/// Recovered entries of a log snapshot. Any slot not listed reads invalid.
pub fn log_entries(mem: &SimMemory, algo: AlgorithmKind, payload_len: usize, region: LogRegion) -> Result<Vec<RecoveredEntry>> {
    let mut log = algo.build(region, payload_len)?;
    Ok(log.recover(mem)?)
}

pub fn inspect(mem: &SimMemory, target: &InspectTarget, dump_lines: bool) -> Result<String> {
    let mut out = String::new();
    let lines = nonzero_lines(mem);
    writeln!(out, "image: {} bytes, {} lines of {} bytes, {} non-zero", mem.capacity(), mem.num_lines(), mem.line_size(), lines.len())?;
    if dump_lines {
        for &l in &lines {
            writeln!(out, "line {l:5}: {}", hex(mem.read(l * LINE_SIZE, LINE_SIZE)))?;
        }
    }
    match *target {
        InspectTarget::Log { algo, payload_len, region } => {
            let region = region.unwrap_or(LogRegion::new(0, mem.capacity()));
            if region.base + region.size > mem.capacity() {
                bail!("region {}+{} exceeds the image", region.base, region.size);
            }
            writeln!(out, "log {algo}, {payload_len}-byte entries, region {}+{}", region.base, region.size)?;
            let head = HeadWord::decode(mem.read_u64(region.head_addr()));
            writeln!(out, "head word: index {} lap {} polarity {}", head.index, head.lap, head.polarity as u8)?;
            match log_entries(mem, algo, payload_len, region) {
                Ok(entries) => {
                    for e in &entries {
                        writeln!(
                            out,
                            "entry {} slot {} lap {}: valid {}",
                            e.age_rank,
                            e.position.slot,
                            e.position.lap,
                            hex(&e.payload)
                        )?;
                    }
                    writeln!(out, "{} valid entries; every other slot reads invalid", entries.len())?;
                }
                Err(e) => writeln!(out, "recovery failed: {e}")?,
            }
        }
        InspectTarget::Set { node_lines, nslots } => {
            let nslots = nslots.unwrap_or(mem.capacity() / (node_lines * LINE_SIZE));
            let cfg = StpsConfig::new(nslots, node_lines);
            if cfg.region_len() > mem.capacity() {
                bail!("{nslots} slots of {node_lines} lines exceed the image");
            }
            writeln!(out, "set, {nslots} slots of {node_lines} lines")?;
            let epl = Epl { base: cfg.base, nslots, node_lines };
            let (mut invalid, mut empty) = (0, 0);
            for slot in 0..nslots {
                match epl.read(mem, slot) {
                    SlotRead::Invalid => {
                        invalid += 1;
                        writeln!(out, "slot {slot}: invalid")?;
                    }
                    SlotRead::Empty => empty += 1,
                    SlotRead::Valid(e) => writeln!(
                        out,
                        "slot {slot}: valid version {} txn {}{} key {} value {}",
                        e.version,
                        e.txncount,
                        if e.tombstone { " remove" } else { "" },
                        hex(&e.key),
                        hex(&e.value)
                    )?,
                }
            }
            writeln!(out, "{empty} empty slots, {invalid} invalid")?;
            let mut scratch = SimMemory::from_image(mem.line_size(), mem.cached().to_vec());
            let (set, stats) = PersistentSet::recover(&mut scratch, cfg)?;
            writeln!(out, "recovered {} live keys ({} valid entries, {} discarded)", set.len(), stats.valid, stats.discarded)?;
            for (k, v) in set.contents(&scratch) {
                writeln!(out, "  {} = {}", hex(&k), hex(&v))?;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_log_has_no_valid_entries() {
        let region = LogRegion::new(0, 512);
        let mut mem = SimMemory::new(512);
        let mut log = AlgorithmKind::CsoVb.build(region, 56).unwrap();
        log.format(&mut mem);
        let text = inspect(&mem, &InspectTarget::Log { algo: AlgorithmKind::CsoVb, payload_len: 56, region: None }, false).unwrap();
        assert!(text.contains("0 valid entries"), "{text}");
        log.append(&mut mem, &[0xAB; 56]).unwrap();
        let text = inspect(&mem, &InspectTarget::Log { algo: AlgorithmKind::CsoVb, payload_len: 56, region: None }, true).unwrap();
        assert!(text.contains("entry 0 slot 0 lap 0: valid abab"), "{text}");
        assert!(text.contains("1 valid entries"));
    }

    #[test]
    fn set_slots_listed() {
        let cfg = StpsConfig::new(4, 1);
        let mut mem = SimMemory::new(cfg.region_len());
        let mut set = PersistentSet::create(&mut mem, cfg).unwrap();
        set.update(&mut mem, b"k", b"v").unwrap();
        set.update(&mut mem, b"k", b"w").unwrap();
        let text = inspect(&mem, &InspectTarget::Set { node_lines: 1, nslots: None }, false).unwrap();
        assert!(text.contains("slot 1: valid version 2 txn 1 key 6b value 77"), "{text}");
        assert!(text.contains("recovered 1 live keys"));
    }
}
