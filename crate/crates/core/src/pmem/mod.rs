//! Software model of a CPU cache in front of byte-addressable NVM.
//!
//! Persistence follows Persistent Cache Store Order (PCSO):
//!
//! * stores to the same cache line persist in program order (a crash keeps a
//!   prefix of every line's write history, and each line moves to NVM
//!   atomically);
//! * `W; clflushopt(line(W)); sfence; X` guarantees `W` persists no later
//!   than `X`.
//!
//! Nothing else orders persistence. Dirty lines may be written back at any
//! time, so any prefix of an unflushed line may be durable after a crash.
//!
//! [`SimMemory`] keeps the write history of every line since the last
//! [`SimMemory::compact`] and can enumerate or sample the crash images that
//! PCSO allows (see [`CrashSpace`]).

mod crash;
mod snapshot;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

pub use crash::{CrashSpace, CrashState, VarLine};
pub use snapshot::{read_snapshot, write_snapshot, SNAPSHOT_MAGIC, SNAPSHOT_VERSION};

/// Cache line size in bytes.
pub const LINE_SIZE: usize = 64;
/// Machine word size in bytes.
pub const WORD_SIZE: usize = 8;

static NEXT_HISTORY_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_history_id() -> u64 {
    NEXT_HISTORY_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, thiserror::Error)]
pub enum PmemError {
    #[error("crash space has {product} candidate cut tuples, above the limit of {limit}; use sampling instead")]
    CrashExplosion { product: u128, limit: u128 },
    #[error("crash state does not belong to the current write history")]
    StaleCrashState,
    #[error("memory has {0} pending flushes; issue sfence before taking a snapshot")]
    NotQuiesced(usize),
    #[error("snapshot format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Memory ordering attached to a store.
///
/// A single thread's stores reach the cache in program order, so the
/// distinction is recorded for the trace but does not change crash states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StoreOrder {
    Relaxed,
    Release,
}

/// One store to one cache line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WriteEvent {
    pub seq: u64,
    pub line: usize,
    pub offset_in_line: usize,
    pub data: Vec<u8>,
    pub ordering: StoreOrder,
    /// Sequence number of the most recent release fence, if any.
    pub after_release_fence: Option<u64>,
    /// Number of sfences in the history that precede this store.
    pub(crate) fence_epoch: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlushEventKind {
    /// Asynchronous flush of `line`, covering its first `prefix` writes.
    Clflushopt { line: usize, prefix: u32 },
    /// `fenced` is true when at least one flush was outstanding.
    Sfence { fenced: bool },
    ReleaseFence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlushEvent {
    pub seq: u64,
    pub kind: FlushEventKind,
}

/// Flush and fence counters. All fields only grow.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlushStats {
    pub store_count: u64,
    pub clflushopt_count: u64,
    pub sfence_count: u64,
    /// sfences that had at least one pending flush.
    pub fenced_roundtrips: u64,
    pub simulated_time_ns: u64,
}

impl FlushStats {
    /// Counter-wise difference `self - earlier`.
    pub fn since(&self, earlier: &FlushStats) -> FlushStats {
        FlushStats {
            store_count: self.store_count - earlier.store_count,
            clflushopt_count: self.clflushopt_count - earlier.clflushopt_count,
            sfence_count: self.sfence_count - earlier.sfence_count,
            fenced_roundtrips: self.fenced_roundtrips - earlier.fenced_roundtrips,
            simulated_time_ns: self.simulated_time_ns - earlier.simulated_time_ns,
        }
    }
}

/// Simulated time charged per event. All zero by default.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CostModel {
    /// Charged once per fenced roundtrip. Pipelined flushes share one charge.
    pub fence_latency_ns: u64,
    /// Charged per store event (per touched line).
    pub store_ns: u64,
    /// Charged per clflushopt.
    pub flush_ns: u64,
}

#[derive(Debug, Clone)]
struct FenceRecord {
    seq: u64,
    /// Lines whose durable prefix grew at this fence, with the new prefix.
    raised: Vec<(usize, u32)>,
}

/// Simulated NVM plus the volatile cache view above it.
#[derive(Debug, Clone)]
pub struct SimMemory {
    line_size: usize,
    capacity: usize,
    cached: Vec<u8>,
    /// Image at the start of the recorded history.
    base: Vec<u8>,
    writes: Vec<WriteEvent>,
    line_writes: HashMap<usize, Vec<u32>>,
    flush_log: Vec<FlushEvent>,
    fences: Vec<FenceRecord>,
    durable: HashMap<usize, u32>,
    pending: BTreeMap<usize, u32>,
    next_seq: u64,
    history_start: u64,
    last_release_fence: Option<u64>,
    stats: FlushStats,
    costs: CostModel,
    history_id: u64,
}

impl SimMemory {
    /// Zero-filled memory of `capacity` bytes with 64-byte lines.
    pub fn new(capacity: usize) -> Self {
        Self::with_line_size(capacity, LINE_SIZE)
    }

    pub fn with_line_size(capacity: usize, line_size: usize) -> Self {
        Self::from_image(line_size, vec![0; capacity])
    }

    /// Memory whose cache and NVM both hold `image`.
    ///
    /// # Panics
    /// If the image is not a whole number of lines.
    pub fn from_image(line_size: usize, image: Vec<u8>) -> Self {
        assert!(line_size > 0 && line_size % WORD_SIZE == 0, "bad line size {line_size}");
        assert!(
            image.len() % line_size == 0,
            "capacity {} is not a multiple of the line size {line_size}",
            image.len()
        );
        SimMemory {
            line_size,
            capacity: image.len(),
            cached: image.clone(),
            base: image,
            writes: Vec::new(),
            line_writes: HashMap::new(),
            flush_log: Vec::new(),
            fences: Vec::new(),
            durable: HashMap::new(),
            pending: BTreeMap::new(),
            next_seq: 0,
            history_start: 0,
            last_release_fence: None,
            stats: FlushStats::default(),
            costs: CostModel::default(),
            history_id: fresh_history_id(),
        }
    }

    pub fn line_size(&self) -> usize {
        self.line_size
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn num_lines(&self) -> usize {
        self.capacity / self.line_size
    }

    pub fn line_of(&self, addr: usize) -> usize {
        addr / self.line_size
    }

    pub fn stats(&self) -> FlushStats {
        self.stats
    }

    pub fn costs(&self) -> CostModel {
        self.costs
    }

    pub fn set_costs(&mut self, costs: CostModel) {
        self.costs = costs;
    }

    pub fn set_fence_latency(&mut self, ns: u64) {
        self.costs.fence_latency_ns = ns;
    }

    /// Adds time spent outside the memory system (CPU work, navigation).
    pub fn charge(&mut self, ns: u64) {
        self.stats.simulated_time_ns += ns;
    }

    /// Sequence number the next event will receive. Crash points are
    /// expressed in these units: point `p` means every event with
    /// `seq < p` has executed.
    pub fn now(&self) -> u64 {
        self.next_seq
    }

    /// First sequence number still covered by the recorded history.
    pub fn history_start(&self) -> u64 {
        self.history_start
    }

    pub fn write_log(&self) -> &[WriteEvent] {
        &self.writes
    }

    pub fn flush_log(&self) -> &[FlushEvent] {
        &self.flush_log
    }

    pub fn pending_flushes(&self) -> usize {
        self.pending.len()
    }

    pub fn is_quiesced(&self) -> bool {
        self.pending.is_empty()
    }

    /// Latest program view.
    pub fn cached(&self) -> &[u8] {
        &self.cached
    }

    /// Image at the start of the recorded history.
    pub fn persisted_base(&self) -> &[u8] {
        &self.base
    }

    pub fn read(&self, addr: usize, len: usize) -> &[u8] {
        &self.cached[addr..addr + len]
    }

    pub fn read_u64(&self, addr: usize) -> u64 {
        u64::from_le_bytes(self.cached[addr..addr + 8].try_into().unwrap())
    }

    pub fn read_words<const N: usize>(&self, addr: usize) -> [u64; N] {
        std::array::from_fn(|i| self.read_u64(addr + 8 * i))
    }

    fn take_seq(&mut self) -> u64 {
        let s = self.next_seq;
        self.next_seq += 1;
        s
    }

    /// Stores `data` at `addr`, producing one write event per touched line
    /// (lowest address first).
    ///
    /// # Panics
    /// If the range falls outside the memory.
    pub fn store(&mut self, addr: usize, data: &[u8], ordering: StoreOrder) {
        assert!(
            addr.checked_add(data.len()).is_some_and(|end| end <= self.capacity),
            "store of {} bytes at {addr:#x} exceeds capacity {:#x}",
            data.len(),
            self.capacity
        );
        let mut offset = 0;
        while offset < data.len() {
            let a = addr + offset;
            let line = a / self.line_size;
            let in_line = a % self.line_size;
            let len = (self.line_size - in_line).min(data.len() - offset);
            let chunk = &data[offset..offset + len];
            self.cached[a..a + len].copy_from_slice(chunk);
            let seq = self.take_seq();
            let idx = self.writes.len() as u32;
            self.writes.push(WriteEvent {
                seq,
                line,
                offset_in_line: in_line,
                data: chunk.to_vec(),
                ordering,
                after_release_fence: self.last_release_fence,
                fence_epoch: self.fences.len(),
            });
            self.line_writes.entry(line).or_default().push(idx);
            self.stats.store_count += 1;
            self.stats.simulated_time_ns += self.costs.store_ns;
            offset += len;
        }
    }

    pub fn store_u64(&mut self, addr: usize, value: u64, ordering: StoreOrder) {
        self.store(addr, &value.to_le_bytes(), ordering);
    }

    /// Orders all later stores after all earlier ones on their way to the
    /// cache. Imposes no persist order between lines.
    pub fn release_fence(&mut self) {
        let seq = self.take_seq();
        self.flush_log.push(FlushEvent { seq, kind: FlushEventKind::ReleaseFence });
        self.last_release_fence = Some(seq);
    }

    /// Starts an asynchronous flush of `line`'s current contents.
    pub fn clflushopt(&mut self, line: usize) {
        assert!(line < self.num_lines(), "flush of line {line} beyond memory");
        let prefix = self.line_writes.get(&line).map_or(0, |w| w.len() as u32);
        let slot = self.pending.entry(line).or_insert(0);
        *slot = (*slot).max(prefix);
        let seq = self.take_seq();
        self.flush_log.push(FlushEvent { seq, kind: FlushEventKind::Clflushopt { line, prefix } });
        self.stats.clflushopt_count += 1;
        self.stats.simulated_time_ns += self.costs.flush_ns;
    }

    /// Flushes every line overlapping `[addr, addr + len)`.
    pub fn flush_range(&mut self, addr: usize, len: usize) {
        if len == 0 {
            return;
        }
        let first = addr / self.line_size;
        let last = (addr + len - 1) / self.line_size;
        for line in first..=last {
            self.clflushopt(line);
        }
    }

    /// Waits for all outstanding flushes; their prefixes become durable.
    pub fn sfence(&mut self) {
        let seq = self.take_seq();
        let fenced = !self.pending.is_empty();
        self.stats.sfence_count += 1;
        if fenced {
            self.stats.fenced_roundtrips += 1;
            self.stats.simulated_time_ns += self.costs.fence_latency_ns;
            let mut raised = Vec::new();
            for (line, prefix) in std::mem::take(&mut self.pending) {
                let d = self.durable.entry(line).or_insert(0);
                if prefix > *d {
                    *d = prefix;
                    raised.push((line, prefix));
                }
            }
            self.fences.push(FenceRecord { seq, raised });
        }
        self.flush_log.push(FlushEvent { seq, kind: FlushEventKind::Sfence { fenced } });
    }

    /// The image that is guaranteed durable right now.
    pub fn persisted_image(&self) -> Vec<u8> {
        let mut image = self.base.clone();
        for (&line, &count) in &self.durable {
            self.replay_line(&mut image, line, count);
        }
        image
    }

    fn replay_line(&self, image: &mut [u8], line: usize, count: u32) {
        let Some(idx) = self.line_writes.get(&line) else { return };
        let base = line * self.line_size;
        for &i in &idx[..count as usize] {
            let w = &self.writes[i as usize];
            let start = base + w.offset_in_line;
            image[start..start + w.data.len()].copy_from_slice(&w.data);
        }
    }

    /// Folds every durable write into the base image and forgets history.
    ///
    /// Crash points before this call can no longer be enumerated. Writes that
    /// are not yet durable are kept, as are pending flushes.
    pub fn compact(&mut self) {
        let mut base = std::mem::take(&mut self.base);
        for (&line, &count) in &self.durable {
            self.replay_line(&mut base, line, count);
        }
        self.base = base;

        let old_writes = std::mem::take(&mut self.writes);
        let old_index = std::mem::take(&mut self.line_writes);
        let mut keep: Vec<(u64, usize)> = Vec::new();
        for (line, idx) in &old_index {
            let d = self.durable.get(line).copied().unwrap_or(0) as usize;
            keep.extend(idx[d..].iter().map(|&i| (old_writes[i as usize].seq, i as usize)));
        }
        keep.sort_unstable();
        let mut old_writes: Vec<Option<WriteEvent>> = old_writes.into_iter().map(Some).collect();
        for (_, i) in keep {
            let mut w = old_writes[i].take().unwrap();
            w.fence_epoch = 0;
            let idx = self.writes.len() as u32;
            self.line_writes.entry(w.line).or_default().push(idx);
            self.writes.push(w);
        }
        for (line, prefix) in self.pending.iter_mut() {
            let d = self.durable.get(line).copied().unwrap_or(0);
            *prefix = prefix.saturating_sub(d);
        }
        self.durable.clear();
        self.fences.clear();
        self.flush_log.clear();
        self.history_start = self.next_seq;
        self.history_id = fresh_history_id();
    }

    /// Per-line durable prefix implied by fences with `seq < point`.
    fn durable_before(&self, point: u64) -> HashMap<usize, u32> {
        let mut out = HashMap::new();
        for f in self.fences.iter().take_while(|f| f.seq < point) {
            for &(line, prefix) in &f.raised {
                out.insert(line, prefix);
            }
        }
        out
    }

    /// Crash states for crash points in `[from, to]`.
    pub fn crash_space(&self, from: u64, to: u64) -> CrashSpace {
        CrashSpace::build(self, from.max(self.history_start), to.max(from))
    }

    /// Every PCSO-consistent crash state of the recorded history, in a
    /// deterministic order.
    pub fn enumerate_crash_states(&self, limit: u128) -> Result<Vec<CrashState>, PmemError> {
        self.crash_space(self.history_start, self.next_seq).enumerate(limit)
    }

    /// One crash state drawn from the whole recorded history.
    pub fn sample_crash_state(&self, seed: u64) -> CrashState {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        self.crash_space(self.history_start, self.next_seq).sample(&mut rng)
    }

    /// Writes the NVM image of `state` into `out`.
    pub fn crash_image_into(&self, state: &CrashState, out: &mut Vec<u8>) -> Result<(), PmemError> {
        if state.history_id != self.history_id {
            return Err(PmemError::StaleCrashState);
        }
        out.clear();
        out.extend_from_slice(&self.base);
        for (&line, &cut) in &state.cuts {
            let have = self.line_writes.get(&line).map_or(0, |w| w.len());
            if cut as usize > have {
                return Err(PmemError::StaleCrashState);
            }
            self.replay_line(out, line, cut);
        }
        Ok(())
    }

    /// Fresh memory holding the image `state` describes, with empty logs.
    pub fn apply_crash(&self, state: &CrashState) -> Result<SimMemory, PmemError> {
        let mut image = Vec::with_capacity(self.capacity);
        self.crash_image_into(state, &mut image)?;
        Ok(SimMemory::from_image(self.line_size, image))
    }

    pub fn snapshot_save(&self, path: impl AsRef<Path>) -> Result<(), PmemError> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        write_snapshot(self, &mut file)?;
        use std::io::Write;
        file.flush()?;
        Ok(())
    }

    pub fn snapshot_load(path: impl AsRef<Path>) -> Result<SimMemory, PmemError> {
        let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
        read_snapshot(&mut file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eight(b: u8) -> [u8; 8] {
        [b; 8]
    }

    #[test]
    fn single_line_store_is_one_event() {
        let mut m = SimMemory::new(256);
        m.store(0, &eight(1), StoreOrder::Relaxed);
        assert_eq!(m.write_log().len(), 1);
        assert_eq!(m.write_log()[0].line, 0);
    }

    #[test]
    fn store_across_boundary_splits_low_first() {
        let mut m = SimMemory::new(256);
        m.store(60, &eight(7), StoreOrder::Relaxed);
        let log = m.write_log();
        assert_eq!(log.len(), 2);
        assert_eq!((log[0].line, log[0].offset_in_line, log[0].data.len()), (0, 60, 4));
        assert_eq!((log[1].line, log[1].offset_in_line, log[1].data.len()), (1, 0, 4));
        assert!(log[0].seq < log[1].seq);
    }

    #[test]
    #[should_panic(expected = "exceeds capacity")]
    fn out_of_range_store_panics() {
        let mut m = SimMemory::new(128);
        m.store(124, &eight(0), StoreOrder::Relaxed);
    }

    #[test]
    fn same_line_states_are_prefixes() {
        let mut m = SimMemory::new(128);
        m.store(0, &eight(1), StoreOrder::Relaxed);
        m.store(8, &eight(2), StoreOrder::Release);
        let states = m.enumerate_crash_states(1 << 20).unwrap();
        assert_eq!(states.len(), 3);
        let images: Vec<Vec<u8>> =
            states.iter().map(|s| m.apply_crash(s).unwrap().cached()[..16].to_vec()).collect();
        let mut want = vec![vec![0u8; 16], [eight(1), [0; 8]].concat(), [eight(1), eight(2)].concat()];
        want.sort();
        let mut got = images.clone();
        got.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn release_fence_alone_orders_nothing_across_lines() {
        let mut m = SimMemory::new(128);
        m.release_fence();
        assert_eq!(m.enumerate_crash_states(16).unwrap().len(), 1);
        m.store(0, &eight(1), StoreOrder::Relaxed);
        m.release_fence();
        m.store(64, &eight(2), StoreOrder::Relaxed);
        assert_eq!(m.enumerate_crash_states(16).unwrap().len(), 4);
    }

    #[test]
    fn flush_then_fence_orders_lines() {
        let mut m = SimMemory::new(128);
        m.store(0, &eight(1), StoreOrder::Relaxed);
        m.clflushopt(0);
        m.sfence();
        m.store(64, &eight(2), StoreOrder::Relaxed);
        let states = m.enumerate_crash_states(16).unwrap();
        assert_eq!(states.len(), 3);
        for s in &states {
            let w2 = s.cut(1) > 0;
            let w1 = s.cut(0) > 0;
            assert!(!w2 || w1, "W2 persisted without W1: {s:?}");
        }
    }

    #[test]
    fn flush_of_clean_line_is_legal() {
        let mut m = SimMemory::new(128);
        m.clflushopt(1);
        m.sfence();
        assert_eq!(m.stats().fenced_roundtrips, 1);
        assert_eq!(m.enumerate_crash_states(4).unwrap().len(), 1);
    }

    #[test]
    fn pipelined_flushes_cost_one_roundtrip() {
        let mut m = SimMemory::new(256);
        m.store(0, &eight(1), StoreOrder::Relaxed);
        m.store(64, &eight(2), StoreOrder::Relaxed);
        m.clflushopt(0);
        m.clflushopt(1);
        m.sfence();
        let s = m.stats();
        assert_eq!((s.clflushopt_count, s.sfence_count, s.fenced_roundtrips), (2, 1, 1));
        assert_eq!(m.persisted_image()[..8], eight(1));
        assert_eq!(m.persisted_image()[64..72], eight(2));
    }

    #[test]
    fn empty_sfence_is_not_a_roundtrip() {
        let mut m = SimMemory::new(64);
        m.set_fence_latency(800);
        m.sfence();
        assert_eq!(m.stats().fenced_roundtrips, 0);
        assert_eq!(m.stats().simulated_time_ns, 0);
    }

    #[test]
    fn fence_latency_accumulates_per_roundtrip() {
        let mut m = SimMemory::new(64 * 8);
        m.set_fence_latency(800);
        for i in 0..512usize {
            m.store((i % 8) * 64, &eight(i as u8), StoreOrder::Relaxed);
            m.clflushopt(i % 8);
            m.sfence();
        }
        assert_eq!(m.stats().simulated_time_ns, 409_600);
        assert_eq!(m.stats().fenced_roundtrips, 512);
    }

    #[test]
    fn empty_trace_has_one_state() {
        let m = SimMemory::new(64);
        let states = m.enumerate_crash_states(1).unwrap();
        assert_eq!(states.len(), 1);
        assert_eq!(m.apply_crash(&states[0]).unwrap().cached(), m.cached());
    }

    #[test]
    fn k_writes_one_line_give_k_plus_one_states() {
        let mut m = SimMemory::new(64);
        for k in 0..8 {
            m.store(k * 8, &eight(k as u8 + 1), StoreOrder::Relaxed);
        }
        assert_eq!(m.enumerate_crash_states(100).unwrap().len(), 9);
    }

    #[test]
    fn explosion_is_reported() {
        let mut m = SimMemory::new(64 * 8);
        for line in 0..8 {
            for w in 0..8 {
                m.store(line * 64 + w * 8, &eight(1), StoreOrder::Relaxed);
            }
        }
        match m.enumerate_crash_states(1000) {
            Err(PmemError::CrashExplosion { product, .. }) => assert_eq!(product, 9u128.pow(8)),
            other => panic!("expected explosion, got {other:?}"),
        }
    }

    #[test]
    fn apply_crash_full_and_empty() {
        let mut m = SimMemory::new(128);
        m.store(0, &eight(3), StoreOrder::Relaxed);
        m.store(64, &eight(4), StoreOrder::Relaxed);
        let states = m.enumerate_crash_states(16).unwrap();
        let empty = states.iter().find(|s| s.cuts().is_empty()).unwrap();
        assert_eq!(m.apply_crash(empty).unwrap().cached(), m.persisted_base());
        let full = states.iter().find(|s| s.cut(0) == 1 && s.cut(1) == 1).unwrap();
        assert_eq!(m.apply_crash(full).unwrap().cached(), m.cached());
    }

    #[test]
    fn stale_state_rejected_after_compact() {
        let mut m = SimMemory::new(64);
        m.store(0, &eight(1), StoreOrder::Relaxed);
        let s = m.sample_crash_state(1);
        m.compact();
        assert!(matches!(m.apply_crash(&s), Err(PmemError::StaleCrashState)));
    }

    #[test]
    fn compact_keeps_undurable_writes() {
        let mut m = SimMemory::new(128);
        m.store(0, &eight(1), StoreOrder::Relaxed);
        m.clflushopt(0);
        m.sfence();
        m.store(8, &eight(2), StoreOrder::Relaxed);
        m.store(64, &eight(3), StoreOrder::Relaxed);
        m.clflushopt(1);
        m.compact();
        assert_eq!(m.write_log().len(), 2);
        assert_eq!(m.persisted_base()[..8], eight(1));
        // line 0: 2 states, line 1: 2 states, no cross constraints left
        assert_eq!(m.enumerate_crash_states(16).unwrap().len(), 4);
        // the pending flush of line 1 survives compaction
        m.sfence();
        assert_eq!(m.stats().fenced_roundtrips, 2);
        assert_eq!(m.persisted_image()[64..72], eight(3));
        assert_eq!(m.persisted_image()[8..16], [0; 8]);
    }

    #[test]
    fn crash_space_respects_crash_point() {
        let mut m = SimMemory::new(128);
        m.store(0, &eight(1), StoreOrder::Relaxed);
        m.clflushopt(0);
        m.sfence();
        let mid = m.now();
        m.store(64, &eight(2), StoreOrder::Relaxed);
        // crash strictly after the fence: W1 is durable in every state
        let after = m.crash_space(mid, m.now()).enumerate(16).unwrap();
        assert_eq!(after.len(), 2);
        assert!(after.iter().all(|s| s.cut(0) == 1));
    }
}
