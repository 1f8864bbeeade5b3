//! Benchmarks, crash testing and snapshot inspection on top of `nvlog`.

pub mod bench;
pub mod crashtest;
pub mod inspect;
pub mod ycsb;

/// Desk cost model for modeled throughput, in simulated nanoseconds.
/// Fence latency is the swept parameter and comes on top of these.
pub mod costs {
    /// Per store event (per touched line).
    pub const STORE_NS: u64 = 1;
    pub const FLUSH_NS: u64 = 10;
    /// Fixed CPU work per benchmark operation.
    pub const OP_NS: u64 = 20;
    /// Per chain node visited during set navigation.
    pub const NAV_NS: u64 = 5;
    /// Per entry read while draining a log.
    pub const READ_NS: u64 = 2;
}

/// Writes rows as CSV with a header line.
pub fn write_csv<W: std::io::Write, T: serde::Serialize>(out: W, rows: &[T]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
