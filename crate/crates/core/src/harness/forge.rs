//! A CRC-32C collision planted in a two-line entry.
//!
//! With 96-byte payloads the CRC log stores `[seq][len][p0..p11][crc]`
//! over two lines; payload word 5 is the last write of the first line.
//! If that write is lost while the second line (holding the checksum)
//! persists, the entry reads back with word 5 still zero. CRC is affine
//! over GF(2), so `crc(m) == crc(m with word 5 zeroed)` holds exactly
//! when `crc(d) == crc(0)` for the message `d` that is zero except for
//! word 5. That is a linear condition on the 64 bits of the word, and
//! 64 unknowns against 32 equations always leave a nonzero solution.

use super::script::{CrashPolicy, ScriptOp, WorkloadScript};
use crate::logalg::crc32c;

pub const FORGE_PAYLOAD: usize = 96;
/// Payload word that sits last in the entry's first line.
pub const FORGED_WORD: usize = 5;
/// Cut tuple of the planted torn state: the first line misses its last
/// write, the second line is complete.
pub const PLANTED_CUTS: &str = "[1:7 2:7]";

/// Checksummed bytes ahead of the payload (sequence and length words).
const PREFIX: usize = 16;

fn delta_crc(word: u64) -> u32 {
    let mut msg = vec![0u8; PREFIX + FORGE_PAYLOAD];
    let at = PREFIX + FORGED_WORD * 8;
    msg[at..at + 8].copy_from_slice(&word.to_le_bytes());
    let zero = vec![0u8; msg.len()];
    crc32c(&msg) ^ crc32c(&zero)
}

/// A nonzero word `x` with `crc(d(x)) == crc(0)`, found by elimination
/// over the images of the 64 unit vectors.
pub fn forged_word() -> u64 {
    // rows: (image, combination of unit vectors producing it)
    let mut basis: Vec<(u32, u64)> = Vec::new();
    for bit in 0..64 {
        let mut img = delta_crc(1 << bit);
        let mut combo = 1u64 << bit;
        for &(b_img, b_combo) in &basis {
            if img ^ b_img < img {
                img ^= b_img;
                combo ^= b_combo;
            }
        }
        if img == 0 {
            return combo;
        }
        basis.push((img, combo));
        basis.sort_unstable_by(|a, b| b.0.cmp(&a.0));
    }
    unreachable!("64 vectors in a 32-dimensional space are dependent")
}

/// Payload whose torn form (word 5 zero) carries the same CRC-32C.
pub fn forged_payload() -> Vec<u8> {
    let mut p: Vec<u8> = (0..FORGE_PAYLOAD as u8).map(|i| i.wrapping_mul(37) ^ 0x5A).collect();
    p[FORGED_WORD * 8..FORGED_WORD * 8 + 8].copy_from_slice(&forged_word().to_le_bytes());
    p
}

/// One append of the forged payload, exhaustively crash-checked.
pub fn forge_crc32_script() -> WorkloadScript {
    WorkloadScript {
        ops: vec![ScriptOp::Append(forged_payload())],
        policy: CrashPolicy::Exhaustive,
        payload_len: Some(FORGE_PAYLOAD),
        slots: Some(2),
        ..Default::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collision_holds() {
        let w = forged_word();
        assert_ne!(w, 0);
        assert_eq!(delta_crc(w), 0);
        let p = forged_payload();
        let mut torn = p.clone();
        torn[40..48].fill(0);
        let covered = |payload: &[u8]| {
            let mut m = 0u64.to_le_bytes().to_vec();
            m.extend_from_slice(&(FORGE_PAYLOAD as u64).to_le_bytes());
            m.extend_from_slice(payload);
            crc32c(&m)
        };
        assert_eq!(covered(&p), covered(&torn));
        assert_ne!(p, torn);
    }
}
