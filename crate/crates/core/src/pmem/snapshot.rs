//! Snapshot file: `"PCSO"`, u32 version, u32 line size, u64 capacity, then
//! the raw durable image. Integers are little-endian.

use std::io::{Read, Write};

use super::{PmemError, SimMemory};

pub const SNAPSHOT_MAGIC: [u8; 4] = *b"PCSO";
pub const SNAPSHOT_VERSION: u32 = 1;

/// Writes the durable image. Fails if flushes are still outstanding.
pub fn write_snapshot<W: Write>(mem: &SimMemory, out: &mut W) -> Result<(), PmemError> {
    if !mem.is_quiesced() {
        return Err(PmemError::NotQuiesced(mem.pending_flushes()));
    }
    out.write_all(&SNAPSHOT_MAGIC)?;
    out.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
    out.write_all(&(mem.line_size() as u32).to_le_bytes())?;
    out.write_all(&(mem.capacity() as u64).to_le_bytes())?;
    out.write_all(&mem.persisted_image())?;
    Ok(())
}

fn read_exact_or<R: Read>(input: &mut R, buf: &mut [u8], what: &str) -> Result<(), PmemError> {
    input.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => PmemError::Format(format!("truncated {what}")),
        _ => PmemError::Io(e),
    })
}

pub fn read_snapshot<R: Read>(input: &mut R) -> Result<SimMemory, PmemError> {
    let mut header = [0u8; 20];
    read_exact_or(input, &mut header, "header")?;
    if header[..4] != SNAPSHOT_MAGIC {
        return Err(PmemError::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != SNAPSHOT_VERSION {
        return Err(PmemError::Format(format!("unsupported version {version}")));
    }
    let line_size = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let capacity = u64::from_le_bytes(header[12..20].try_into().unwrap());
    if line_size == 0 || line_size % 8 != 0 || capacity % line_size as u64 != 0 {
        return Err(PmemError::Format(format!("inconsistent geometry: line {line_size}, capacity {capacity}")));
    }
    let capacity = usize::try_from(capacity).map_err(|_| PmemError::Format("capacity overflow".into()))?;
    let mut image = vec![0u8; capacity];
    read_exact_or(input, &mut image, "image")?;
    let mut extra = [0u8; 1];
    if input.read(&mut extra)? != 0 {
        return Err(PmemError::Format("trailing bytes after image".into()));
    }
    Ok(SimMemory::from_image(line_size, image))
}
