//! Single-trip persistent set: a chained hash map whose nodes are entries
//! of an enhanced persistent log. Only the log is persistent; buckets,
//! links and the reuse queue are rebuilt by [`PersistentSet::recover`].

mod baseline;
mod epl;
mod meta;

use std::cell::Cell;
use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

pub use baseline::TwoRoundsSet;
pub use epl::{Epl, EplEntry, SlotRead, LINE0_DATA, LINE_DATA, MAX_KEY};
pub use meta::{StpsMeta, VERSION_BITS, VERSION_MAX};

use crate::pmem::{SimMemory, LINE_SIZE};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StpsError {
    #[error("empty key")]
    EmptyKey,
    #[error("key of {len} bytes exceeds {max}")]
    KeyTooLong { len: usize, max: usize },
    #[error("key and value take {len} bytes; a node holds {max}")]
    EntryTooLarge { len: usize, max: usize },
    #[error("no free or reusable slot")]
    Full,
    #[error("transaction size {0} outside 1..=255")]
    TxnSize(usize),
    #[error("transaction writes key {0:?} twice")]
    DuplicateKey(Vec<u8>),
    #[error("slot {slot} has unequal validity bits before append")]
    Precondition { slot: usize },
    #[error("bad configuration: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StpsConfig {
    pub base: usize,
    pub nslots: usize,
    pub node_lines: usize,
    /// Power of two.
    pub buckets: usize,
}

impl StpsConfig {
    pub fn new(nslots: usize, node_lines: usize) -> Self {
        StpsConfig { base: 0, nslots, node_lines, buckets: 1 << 16 }
    }

    pub fn with_buckets(mut self, buckets: usize) -> Self {
        self.buckets = buckets;
        self
    }

    pub fn region_len(&self) -> usize {
        self.nslots * self.node_lines * LINE_SIZE
    }

    fn validate(&self) -> Result<(), StpsError> {
        if self.nslots == 0 || self.node_lines == 0 || self.node_lines > 16 {
            return Err(StpsError::BadConfig(format!("{} slots of {} lines", self.nslots, self.node_lines)));
        }
        if !self.buckets.is_power_of_two() || self.base % LINE_SIZE != 0 {
            return Err(StpsError::BadConfig("bucket count must be a power of two, base line-aligned".into()));
        }
        Ok(())
    }

    fn epl(&self) -> Epl {
        Epl { base: self.base, nslots: self.nslots, node_lines: self.node_lines }
    }
}

/// FNV-1a followed by the murmur3 64-bit finalizer.
pub fn key_hash(key: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in key {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    h = h.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    h ^ (h >> 33)
}

#[derive(Debug, Clone, Default)]
struct SlotInfo {
    key: Vec<u8>,
    version: u64,
    txncount: u8,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RecoveryStats {
    pub slots_scanned: usize,
    pub valid: usize,
    pub invalid: usize,
    pub discarded: usize,
    pub reinitialized: usize,
    pub live: usize,
}

/// Volatile FIFO of slots that may be overwritten.
pub type ReuseQueue = VecDeque<usize>;

pub struct PersistentSet {
    cfg: StpsConfig,
    epl: Epl,
    buckets: Vec<Option<usize>>,
    next: Vec<Option<usize>>,
    info: Vec<SlotInfo>,
    /// Empty slots (never written or reinitialized).
    free: VecDeque<usize>,
    reuse: ReuseQueue,
    next_version: u64,
    /// Live elements per multi-entry transaction version.
    txn_live: HashMap<u64, usize>,
    /// Superseded elements kept valid until their transaction is fully dead.
    held: HashMap<u64, Vec<usize>>,
    key_held: HashMap<Vec<u8>, usize>,
    /// Remove entries that must outlive a held entry of the same key.
    waiting: HashMap<Vec<u8>, Vec<usize>>,
    len: usize,
    nav_steps: Cell<u64>,
}

impl PersistentSet {
    /// Zeroes the region and returns an empty set.
    pub fn create(mem: &mut SimMemory, cfg: StpsConfig) -> Result<Self, StpsError> {
        cfg.validate()?;
        let epl = cfg.epl();
        let zeros = [0u8; LINE_SIZE];
        for a in (cfg.base..cfg.base + cfg.region_len()).step_by(LINE_SIZE) {
            mem.store(a, &zeros, crate::pmem::StoreOrder::Relaxed);
        }
        mem.flush_range(cfg.base, cfg.region_len());
        mem.sfence();
        let mut set = Self::empty(cfg, epl);
        set.free = (0..cfg.nslots).collect();
        Ok(set)
    }

    fn empty(cfg: StpsConfig, epl: Epl) -> Self {
        PersistentSet {
            cfg,
            epl,
            buckets: vec![None; cfg.buckets],
            next: vec![None; cfg.nslots],
            info: vec![SlotInfo::default(); cfg.nslots],
            free: VecDeque::new(),
            reuse: VecDeque::new(),
            next_version: 1,
            txn_live: HashMap::new(),
            held: HashMap::new(),
            key_held: HashMap::new(),
            waiting: HashMap::new(),
            len: 0,
            nav_steps: Cell::new(0),
        }
    }

    pub fn config(&self) -> StpsConfig {
        self.cfg
    }

    pub fn epl(&self) -> &Epl {
        &self.epl
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn next_version(&self) -> u64 {
        self.next_version
    }

    pub fn reuse_queue(&self) -> &ReuseQueue {
        &self.reuse
    }

    /// Chain nodes visited by lookups so far.
    pub fn nav_steps(&self) -> u64 {
        self.nav_steps.get()
    }

    /// Slots an append could take right now.
    pub fn available(&self) -> usize {
        self.reuse.len() + self.free.len()
    }

    fn bucket_of(&self, key: &[u8]) -> usize {
        key_hash(key) as usize & (self.cfg.buckets - 1)
    }

    /// `(prev, cur)`: `cur` holds `key`, `prev` is its predecessor in the
    /// chain (`None` means the bucket head).
    fn find(&self, key: &[u8]) -> (Option<usize>, Option<usize>) {
        let mut prev = None;
        let mut cur = self.buckets[self.bucket_of(key)];
        let mut steps = 0;
        while let Some(s) = cur {
            steps += 1;
            if self.info[s].key == key {
                break;
            }
            prev = cur;
            cur = self.next[s];
        }
        self.nav_steps.set(self.nav_steps.get() + steps);
        (prev, cur)
    }

    fn set_link(&mut self, key: &[u8], prev: Option<usize>, to: Option<usize>) {
        match prev {
            Some(p) => self.next[p] = to,
            None => {
                let b = self.bucket_of(key);
                self.buckets[b] = to;
            }
        }
    }

    pub fn get(&self, mem: &SimMemory, key: &[u8]) -> Option<Vec<u8>> {
        let (_, cur) = self.find(key);
        match self.epl.read(mem, cur?) {
            SlotRead::Valid(e) => Some(e.value),
            _ => None,
        }
    }

    pub fn contains(&self, key: &[u8]) -> bool {
        self.find(key).1.is_some()
    }

    fn alloc(&mut self) -> Result<usize, StpsError> {
        self.reuse.pop_front().or_else(|| self.free.pop_front()).ok_or(StpsError::Full)
    }

    fn take_version(&mut self) -> u64 {
        let v = self.next_version;
        self.next_version += 1;
        v
    }

    fn release_waiting(&mut self, key: &[u8]) {
        if self.key_held.get(key).copied().unwrap_or(0) == 0 {
            self.key_held.remove(key);
            if let Some(ts) = self.waiting.remove(key) {
                self.reuse.extend(ts);
            }
        }
    }

    /// A live data entry has been superseded.
    fn retire(&mut self, slot: usize) {
        let SlotInfo { key, version, txncount } = self.info[slot].clone();
        if txncount <= 1 {
            self.reuse.push_back(slot);
            return;
        }
        let left = self.txn_live.get_mut(&version).expect("txn bookkeeping");
        *left -= 1;
        if *left > 0 {
            self.held.entry(version).or_default().push(slot);
            *self.key_held.entry(key).or_default() += 1;
            return;
        }
        self.txn_live.remove(&version);
        let released = self.held.remove(&version).unwrap_or_default();
        self.reuse.push_back(slot);
        self.reuse.extend(released.iter().copied());
        for s in released {
            let k = self.info[s].key.clone();
            *self.key_held.get_mut(&k).expect("held key") -= 1;
            self.release_waiting(&k);
        }
    }

    fn retire_tombstone(&mut self, slot: usize, key: &[u8]) {
        if self.key_held.get(key).copied().unwrap_or(0) > 0 {
            self.waiting.entry(key.to_vec()).or_default().push(slot);
        } else {
            self.reuse.push_back(slot);
        }
    }

    /// Makes `slot` (already written) the node for its key.
    fn link(&mut self, slot: usize) {
        let key = self.info[slot].key.clone();
        let (prev, cur) = self.find(&key);
        match cur {
            Some(old) => {
                self.next[slot] = self.next[old];
                self.set_link(&key, prev, Some(slot));
                self.retire(old);
            }
            None => {
                let b = self.bucket_of(&key);
                self.next[slot] = self.buckets[b];
                self.buckets[b] = Some(slot);
                self.len += 1;
            }
        }
    }

    fn prepare(&mut self, key: &[u8], value: &[u8], txncount: u8) -> Result<(usize, EplEntry), StpsError> {
        self.epl.check(key, value)?;
        let slot = self.alloc()?;
        let version = self.next_version;
        self.info[slot] = SlotInfo { key: key.to_vec(), version, txncount };
        Ok((slot, EplEntry { key: key.to_vec(), value: value.to_vec(), version, txncount, tombstone: false }))
    }

    /// Inserts or overwrites `key`: one fenced round trip.
    pub fn update(&mut self, mem: &mut SimMemory, key: &[u8], value: &[u8]) -> Result<(), StpsError> {
        let (slot, e) = self.prepare(key, value, 1)?;
        self.take_version();
        self.epl.append(mem, slot, &e)?;
        self.link(slot);
        Ok(())
    }

    /// Same as [`update`](Self::update) but walks the chain while the
    /// entry's flush is in flight; the fence comes last.
    pub fn update_optimized(&mut self, mem: &mut SimMemory, key: &[u8], value: &[u8]) -> Result<(), StpsError> {
        let (slot, e) = self.prepare(key, value, 1)?;
        self.take_version();
        self.epl.write(mem, slot, &e)?;
        self.epl.flush(mem, slot);
        self.link(slot);
        mem.sfence();
        Ok(())
    }

    /// Removes `key` by appending a remove entry. Returns whether the key
    /// was present; absent keys cost nothing.
    pub fn remove(&mut self, mem: &mut SimMemory, key: &[u8]) -> Result<bool, StpsError> {
        let (prev, Some(cur)) = self.find(key) else { return Ok(false) };
        self.epl.check(key, b"")?;
        let slot = self.alloc()?;
        let version = self.take_version();
        self.info[slot] = SlotInfo { key: key.to_vec(), version, txncount: 1 };
        let e = EplEntry { key: key.to_vec(), value: Vec::new(), version, txncount: 1, tombstone: true };
        self.epl.append(mem, slot, &e)?;
        self.set_link(key, prev, self.next[cur]);
        self.len -= 1;
        self.retire(cur);
        self.retire_tombstone(slot, key);
        Ok(true)
    }

    /// Writes all pairs under one version with a single fence. Recovery
    /// keeps all of them or none.
    pub fn txn_update(&mut self, mem: &mut SimMemory, pairs: &[(Vec<u8>, Vec<u8>)]) -> Result<(), StpsError> {
        let n = pairs.len();
        if n == 0 || n > 255 {
            return Err(StpsError::TxnSize(n));
        }
        let mut seen = HashSet::new();
        for (k, v) in pairs {
            self.epl.check(k, v)?;
            if !seen.insert(k.as_slice()) {
                return Err(StpsError::DuplicateKey(k.clone()));
            }
        }
        if self.available() < n {
            return Err(StpsError::Full);
        }
        let version = self.take_version();
        let mut slots = Vec::with_capacity(n);
        for (i, (k, v)) in pairs.iter().enumerate() {
            // A remove entry may only be overwritten once the slots queued
            // before it are durably overwritten.
            let tomb_next = self.reuse.front().is_some_and(|&s| self.is_reusable_tombstone(mem, s));
            if i > 0 && tomb_next {
                mem.sfence();
            }
            let slot = self.alloc()?;
            self.info[slot] = SlotInfo { key: k.clone(), version, txncount: n as u8 };
            let e = EplEntry { key: k.clone(), value: v.clone(), version, txncount: n as u8, tombstone: false };
            self.epl.write(mem, slot, &e)?;
            self.epl.flush(mem, slot);
            slots.push(slot);
        }
        mem.sfence();
        if n > 1 {
            self.txn_live.insert(version, n);
        }
        for s in slots {
            self.link(s);
        }
        Ok(())
    }

    fn is_reusable_tombstone(&self, mem: &SimMemory, slot: usize) -> bool {
        matches!(self.epl.read(mem, slot), SlotRead::Valid(e) if e.tombstone)
    }

    /// Live key/value pairs, read from memory.
    pub fn contents(&self, mem: &SimMemory) -> BTreeMap<Vec<u8>, Vec<u8>> {
        let mut out = BTreeMap::new();
        for head in &self.buckets {
            let mut cur = *head;
            while let Some(s) = cur {
                if let SlotRead::Valid(e) = self.epl.read(mem, s) {
                    out.insert(e.key, e.value);
                }
                cur = self.next[s];
            }
        }
        out
    }

    /// Rebuilds a set from the log in `mem`. Entries that are not needed
    /// any more are reinitialized (with fences) before this returns.
    pub fn recover(mem: &mut SimMemory, cfg: StpsConfig) -> Result<(Self, RecoveryStats), StpsError> {
        cfg.validate()?;
        let epl = cfg.epl();
        let mut set = Self::empty(cfg, epl);
        let mut stats = RecoveryStats::default();
        let mut phase1 = Vec::new();
        let mut empty = Vec::new();
        let mut entries: HashMap<usize, EplEntry> = HashMap::new();
        let mut by_version: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        let mut max_version = 0;

        for slot in 0..cfg.nslots {
            stats.slots_scanned += 1;
            match epl.read(mem, slot) {
                SlotRead::Invalid => {
                    stats.invalid += 1;
                    phase1.push(slot);
                }
                SlotRead::Empty => {
                    if epl.is_zero(mem, slot) {
                        empty.push(slot);
                    } else {
                        phase1.push(slot);
                    }
                }
                SlotRead::Valid(e) => {
                    stats.valid += 1;
                    max_version = max_version.max(e.version);
                    by_version.entry(e.version).or_default().push(slot);
                    entries.insert(slot, e);
                }
            }
        }

        let mut map: HashMap<Vec<u8>, usize> = HashMap::new();
        let mut dead = Vec::new();
        let mut tombstones = Vec::new();
        let mut txns: Vec<(u64, Vec<usize>)> = Vec::new();
        for (version, slots) in by_version {
            let count = entries[&slots[0]].txncount as usize;
            if slots.len() != count || slots.iter().any(|s| entries[s].txncount as usize != count) {
                stats.discarded += slots.len();
                phase1.extend(slots);
                continue;
            }
            for &s in &slots {
                let e = &entries[&s];
                set.info[s] = SlotInfo { key: e.key.clone(), version, txncount: e.txncount };
                let prev = if e.tombstone {
                    tombstones.push(s);
                    map.remove(&e.key)
                } else {
                    map.insert(e.key.clone(), s)
                };
                dead.extend(prev);
            }
            if count > 1 {
                txns.push((version, slots));
            }
        }

        let live: HashSet<usize> = map.values().copied().collect();
        let mut held_slots = HashSet::new();
        for (version, slots) in txns {
            let alive = slots.iter().filter(|s| live.contains(s)).count();
            if alive == 0 {
                continue;
            }
            set.txn_live.insert(version, alive);
            for s in slots.into_iter().filter(|s| !live.contains(s)) {
                set.held.entry(version).or_default().push(s);
                *set.key_held.entry(entries[&s].key.clone()).or_default() += 1;
                held_slots.insert(s);
            }
        }
        phase1.extend(dead.into_iter().filter(|s| !held_slots.contains(s)));
        let mut phase2 = Vec::new();
        for t in tombstones {
            let key = &entries[&t].key;
            if set.key_held.get(key).copied().unwrap_or(0) > 0 {
                set.waiting.entry(key.clone()).or_default().push(t);
            } else {
                phase2.push(t);
            }
        }
        phase1.sort_unstable();
        phase2.sort_unstable();
        epl.reinit(mem, &phase1);
        epl.reinit(mem, &phase2);
        stats.reinitialized = phase1.len() + phase2.len();

        let mut live_sorted: Vec<usize> = live.into_iter().collect();
        live_sorted.sort_by_key(|s| set.info[*s].version);
        for s in live_sorted {
            let b = set.bucket_of(&set.info[s].key);
            set.next[s] = set.buckets[b];
            set.buckets[b] = Some(s);
        }
        set.len = map.len();
        stats.live = set.len;
        let mut free: Vec<usize> = empty.into_iter().chain(phase1).chain(phase2).collect();
        free.sort_unstable();
        set.free = free.into();
        set.next_version = max_version + 1;
        Ok((set, stats))
    }
}
