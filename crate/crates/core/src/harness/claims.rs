//! Torn-append check for single log entries of the set.
//!
//! A slot holding an old entry is overwritten and every crash state of
//! the overwrite is read back. Every read must be the old entry, the new
//! entry, or invalid, whatever the entry's size.

use crate::pmem::{SimMemory, LINE_SIZE};
use crate::stps::{Epl, EplEntry, SlotRead};

use super::suite::EXHAUSTIVE_LIMIT;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EplCase {
    pub node_lines: usize,
    /// Appends into the slot before the one under test (0 = empty slot).
    pub prior: usize,
    pub key_len: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EplClaimReport {
    pub states: usize,
    pub old: usize,
    pub new: usize,
    pub invalid: usize,
    pub violations: Vec<String>,
}

fn entry(case: &EplCase, epl: &Epl, round: usize) -> EplEntry {
    let fill = |salt: usize, i: usize| (round * 31 + salt + i * 7) as u8 | 1;
    let key: Vec<u8> = (0..case.key_len).map(|i| fill(0, i)).collect();
    let value: Vec<u8> = (0..epl.data_capacity() - case.key_len).map(|i| fill(101, i)).collect();
    EplEntry { key, value, version: round as u64 + 1, txncount: round as u8 % 3 + 1, tombstone: false }
}

/// Enumerates every crash state of one append and classifies the reads.
pub fn epl_claim_check(case: EplCase) -> Result<EplClaimReport, String> {
    let epl = Epl { base: 0, nslots: 1, node_lines: case.node_lines };
    epl.check(&vec![1; case.key_len], &[]).map_err(|e| e.to_string())?;
    let mut mem = SimMemory::new(epl.region_len());
    let mut old = None;
    for round in 0..case.prior {
        let e = entry(&case, &epl, round);
        epl.append(&mut mem, 0, &e).map_err(|e| e.to_string())?;
        old = Some(e);
    }
    mem.compact();
    let new = entry(&case, &epl, case.prior);
    let start = mem.now();
    epl.append(&mut mem, 0, &new).map_err(|e| e.to_string())?;
    let states = mem.crash_space(start, mem.now()).enumerate(EXHAUSTIVE_LIMIT).map_err(|e| e.to_string())?;

    let mut report = EplClaimReport { states: states.len(), ..Default::default() };
    let mut image = Vec::new();
    for st in &states {
        mem.crash_image_into(st, &mut image).map_err(|e| e.to_string())?;
        let crashed = SimMemory::from_image(LINE_SIZE, std::mem::take(&mut image));
        match (epl.read(&crashed, 0), &old) {
            (SlotRead::Invalid, _) => report.invalid += 1,
            (SlotRead::Empty, None) => report.old += 1,
            (SlotRead::Valid(e), _) if e == new => report.new += 1,
            (SlotRead::Valid(e), Some(o)) if &e == o => report.old += 1,
            (read, _) => report.violations.push(format!("cuts {}: read {read:?}", st.describe())),
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_line_is_strict() {
        for prior in 0..3 {
            let r = epl_claim_check(EplCase { node_lines: 1, prior, key_len: 5 }).unwrap();
            assert!(r.violations.is_empty(), "{:?}", r.violations);
            assert!(r.old > 0 && r.new > 0 && r.invalid > 0);
        }
    }

    #[test]
    fn four_lines_are_strict() {
        for key_len in [8, 48, 100] {
            let r = epl_claim_check(EplCase { node_lines: 4, prior: 2, key_len }).unwrap();
            assert!(r.violations.is_empty(), "{:?}", r.violations);
            assert!(r.new > 0 && r.invalid > 0);
        }
    }
}
