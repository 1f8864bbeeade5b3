use std::collections::{BTreeMap, VecDeque};

use super::{key_hash, StpsError};
use crate::pmem::{SimMemory, StoreOrder, LINE_SIZE, WORD_SIZE};

/// Chained hash set with a persistent bucket array and persistent links.
/// Every update persists the new node, then the pointer to it: two fenced
/// round trips.
///
/// Layout: `buckets` words of bucket heads (node index + 1, 0 = empty),
/// then nodes of `node_lines` lines: `[next][key len | value len << 8]`
/// followed by key and value bytes.
pub struct TwoRoundsSet {
    base: usize,
    buckets: usize,
    nodes: usize,
    node_lines: usize,
    /// Volatile mirror of node keys and links for navigation.
    keys: Vec<Vec<u8>>,
    next: Vec<Option<usize>>,
    heads: Vec<Option<usize>>,
    free: VecDeque<usize>,
    len: usize,
    nav_steps: std::cell::Cell<u64>,
}

impl TwoRoundsSet {
    pub fn region_len(buckets: usize, nodes: usize, node_lines: usize) -> usize {
        (buckets * WORD_SIZE).div_ceil(LINE_SIZE) * LINE_SIZE + nodes * node_lines * LINE_SIZE
    }

    pub fn create(
        mem: &mut SimMemory,
        base: usize,
        buckets: usize,
        nodes: usize,
        node_lines: usize,
    ) -> Result<Self, StpsError> {
        if !buckets.is_power_of_two() || nodes == 0 || node_lines == 0 {
            return Err(StpsError::BadConfig("bucket count must be a power of two".into()));
        }
        let len = Self::region_len(buckets, nodes, node_lines);
        let zeros = [0u8; LINE_SIZE];
        for a in (base..base + len).step_by(LINE_SIZE) {
            mem.store(a, &zeros, StoreOrder::Relaxed);
        }
        mem.flush_range(base, len);
        mem.sfence();
        Ok(TwoRoundsSet {
            base,
            buckets,
            nodes,
            node_lines,
            keys: vec![Vec::new(); nodes],
            next: vec![None; nodes],
            heads: vec![None; buckets],
            free: (0..nodes).collect(),
            len: 0,
            nav_steps: std::cell::Cell::new(0),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn nav_steps(&self) -> u64 {
        self.nav_steps.get()
    }

    fn bucket_addr(&self, b: usize) -> usize {
        self.base + b * WORD_SIZE
    }

    fn node_addr(&self, n: usize) -> usize {
        self.base + (self.buckets * WORD_SIZE).div_ceil(LINE_SIZE) * LINE_SIZE + n * self.node_lines * LINE_SIZE
    }

    fn capacity(&self) -> usize {
        self.node_lines * LINE_SIZE - 2 * WORD_SIZE
    }

    fn find(&self, key: &[u8]) -> (usize, Option<usize>, Option<usize>) {
        let b = key_hash(key) as usize & (self.buckets - 1);
        let (mut prev, mut cur, mut steps) = (None, self.heads[b], 0);
        while let Some(n) = cur {
            steps += 1;
            if self.keys[n] == key {
                break;
            }
            prev = cur;
            cur = self.next[n];
        }
        self.nav_steps.set(self.nav_steps.get() + steps);
        (b, prev, cur)
    }

    pub fn get(&self, mem: &SimMemory, key: &[u8]) -> Option<Vec<u8>> {
        let n = self.find(key).2?;
        let addr = self.node_addr(n);
        let header = mem.read_u64(addr + WORD_SIZE);
        let (kl, vl) = ((header & 0xFF) as usize, (header >> 8) as usize);
        Some(mem.read(addr + 2 * WORD_SIZE + kl, vl).to_vec())
    }

    fn link_addr(&self, bucket: usize, prev: Option<usize>) -> usize {
        match prev {
            Some(p) => self.node_addr(p),
            None => self.bucket_addr(bucket),
        }
    }

    pub fn update(&mut self, mem: &mut SimMemory, key: &[u8], value: &[u8]) -> Result<(), StpsError> {
        if key.is_empty() || key.len() > 255 {
            return Err(StpsError::KeyTooLong { len: key.len(), max: 255 });
        }
        if key.len() + value.len() > self.capacity() {
            return Err(StpsError::EntryTooLarge { len: key.len() + value.len(), max: self.capacity() });
        }
        let (b, prev, cur) = self.find(key);
        let n = self.free.pop_front().ok_or(StpsError::Full)?;
        let succ = match cur {
            Some(c) => self.next[c],
            None => self.heads[b],
        };
        let addr = self.node_addr(n);
        let mut body = Vec::with_capacity(key.len() + value.len());
        body.extend_from_slice(key);
        body.extend_from_slice(value);
        mem.store_u64(addr, succ.map_or(0, |s| s as u64 + 1), StoreOrder::Relaxed);
        mem.store_u64(addr + WORD_SIZE, key.len() as u64 | (value.len() as u64) << 8, StoreOrder::Relaxed);
        for (i, c) in body.chunks(WORD_SIZE).enumerate() {
            mem.store(addr + 2 * WORD_SIZE + i * WORD_SIZE, c, StoreOrder::Relaxed);
        }
        mem.flush_range(addr, 2 * WORD_SIZE + body.len());
        mem.sfence();

        let (link, link_prev) = match cur {
            Some(_) => (self.link_addr(b, prev), prev),
            None => (self.bucket_addr(b), None),
        };
        mem.store_u64(link, n as u64 + 1, StoreOrder::Release);
        mem.clflushopt(mem.line_of(link));
        mem.sfence();

        self.keys[n] = key.to_vec();
        self.next[n] = succ;
        match link_prev {
            Some(p) => self.next[p] = Some(n),
            None => self.heads[b] = Some(n),
        }
        match cur {
            Some(c) => self.free.push_back(c),
            None => self.len += 1,
        }
        Ok(())
    }

    /// Walks the persistent structure only.
    pub fn recover_contents(&self, mem: &SimMemory) -> BTreeMap<Vec<u8>, Vec<u8>> {
        let mut out = BTreeMap::new();
        for b in 0..self.buckets {
            let mut link = mem.read_u64(self.bucket_addr(b));
            let mut guard = 0;
            while link != 0 && link as usize <= self.nodes && guard < self.nodes {
                let addr = self.node_addr(link as usize - 1);
                let header = mem.read_u64(addr + WORD_SIZE);
                let (kl, vl) = ((header & 0xFF) as usize, (header >> 8) as usize);
                let body = mem.read(addr + 2 * WORD_SIZE, kl + vl);
                out.insert(body[..kl].to_vec(), body[kl..].to_vec());
                link = mem.read_u64(addr);
                guard += 1;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_round_trips_and_recoverable() {
        let len = TwoRoundsSet::region_len(4, 8, 1);
        let mut mem = SimMemory::new(len);
        let mut set = TwoRoundsSet::create(&mut mem, 0, 4, 8, 1).unwrap();
        let s0 = mem.stats();
        for i in 0..6u8 {
            set.update(&mut mem, &[b'k', i % 4], &[i; 10]).unwrap();
        }
        assert_eq!(mem.stats().since(&s0).fenced_roundtrips, 12);
        assert_eq!(set.get(&mem, &[b'k', 1]), Some(vec![5; 10]));
        let persisted = SimMemory::from_image(64, mem.persisted_image());
        let got = set.recover_contents(&persisted);
        assert_eq!(got.len(), 4);
        assert_eq!(got[&vec![b'k', 0]], vec![4; 10]);
    }
}
