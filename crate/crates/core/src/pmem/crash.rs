use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng;

use super::{PmemError, SimMemory, StoreOrder};

/// One persisted image: for every line, how many of its writes reached NVM.
///
/// Lines absent from `cuts` kept none of their writes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CrashState {
    pub(crate) history_id: u64,
    pub(crate) cuts: BTreeMap<usize, u32>,
}

impl CrashState {
    pub fn cut(&self, line: usize) -> u32 {
        self.cuts.get(&line).copied().unwrap_or(0)
    }

    pub fn cuts(&self) -> &BTreeMap<usize, u32> {
        &self.cuts
    }

    /// `line:cut` pairs, for reports.
    pub fn describe(&self) -> String {
        let parts: Vec<String> = self.cuts.iter().map(|(l, c)| format!("{l}:{c}")).collect();
        format!("[{}]", parts.join(" "))
    }
}

/// A line whose cut is not pinned in the crash space.
#[derive(Debug, Clone)]
pub struct VarLine {
    pub line: usize,
    /// Writes guaranteed durable at the earliest crash point.
    pub floor: u32,
    /// Writes issued before the latest crash point.
    pub cap: u32,
    /// Cut values that end exactly on a release-ordered write.
    pub release_cuts: Vec<u32>,
    /// Fence epoch of writes `floor+1 ..= cap` (index 0 is write `floor+1`).
    epochs: Vec<usize>,
}

/// All PCSO-consistent crash states for a range of crash points.
///
/// A cut tuple is consistent iff every line keeps a prefix of its writes
/// and, whenever a write `X` is kept, every write that was flushed and
/// fenced before `X` was issued is kept too.
#[derive(Debug, Clone)]
pub struct CrashSpace {
    history_id: u64,
    fixed: Vec<(usize, u32)>,
    vars: Vec<VarLine>,
    /// epoch -> (var index, required cut) for requirements above the floor.
    reqs: HashMap<usize, Vec<(usize, u32)>>,
}

impl CrashSpace {
    pub(crate) fn build(mem: &SimMemory, from: u64, to: u64) -> CrashSpace {
        let floors = mem.durable_before(from);
        let mut lines: Vec<usize> = mem.line_writes.keys().copied().collect();
        lines.sort_unstable();

        let mut fixed = Vec::new();
        let mut vars = Vec::new();
        for line in lines {
            let idx = &mem.line_writes[&line];
            let cap = idx.partition_point(|&i| mem.writes[i as usize].seq < to) as u32;
            if cap == 0 {
                continue;
            }
            let floor = floors.get(&line).copied().unwrap_or(0).min(cap);
            if floor == cap {
                fixed.push((line, cap));
                continue;
            }
            let events = &idx[floor as usize..cap as usize];
            let epochs = events.iter().map(|&i| mem.writes[i as usize].fence_epoch).collect();
            let release_cuts = events
                .iter()
                .enumerate()
                .filter(|(_, &i)| mem.writes[i as usize].ordering == StoreOrder::Release)
                .map(|(k, _)| floor + k as u32 + 1)
                .collect();
            vars.push(VarLine { line, floor, cap, release_cuts, epochs });
        }

        let var_of: HashMap<usize, usize> = vars.iter().enumerate().map(|(i, v)| (v.line, i)).collect();
        let needed: BTreeSet<usize> = vars.iter().flat_map(|v| v.epochs.iter().copied()).collect();
        let mut reqs = HashMap::new();
        let mut cumulative: HashMap<usize, u32> = HashMap::new();
        let mut applied = 0;
        for epoch in needed {
            while applied < epoch {
                for &(line, prefix) in &mem.fences[applied].raised {
                    cumulative.insert(line, prefix);
                }
                applied += 1;
            }
            let mut list: Vec<(usize, u32)> = cumulative
                .iter()
                .filter_map(|(line, &r)| {
                    let &vi = var_of.get(line)?;
                    (r > vars[vi].floor).then_some((vi, r))
                })
                .collect();
            list.sort_unstable();
            if !list.is_empty() {
                reqs.insert(epoch, list);
            }
        }

        CrashSpace { history_id: mem.history_id, fixed, vars, reqs }
    }

    pub fn var_lines(&self) -> &[VarLine] {
        &self.vars
    }

    /// Size of the unconstrained product of per-line choices.
    pub fn product(&self) -> u128 {
        self.vars
            .iter()
            .fold(1u128, |acc, v| acc.saturating_mul((v.cap - v.floor + 1) as u128))
    }

    /// Whether the cut tuple (one entry per var line) obeys the cross-line rule.
    pub fn is_consistent(&self, cuts: &[u32]) -> bool {
        self.vars.iter().zip(cuts).all(|(v, &c)| {
            if c < v.floor || c > v.cap {
                return false;
            }
            if c == v.floor {
                return true;
            }
            let epoch = v.epochs[(c - v.floor - 1) as usize];
            self.reqs
                .get(&epoch)
                .is_none_or(|list| list.iter().all(|&(j, r)| cuts[j] >= r))
        })
    }

    /// Raises cuts until the cross-line rule holds.
    pub fn fix_up(&self, cuts: &mut [u32]) {
        loop {
            let mut changed = false;
            for i in 0..self.vars.len() {
                let v = &self.vars[i];
                if cuts[i] <= v.floor {
                    continue;
                }
                let epoch = v.epochs[(cuts[i] - v.floor - 1) as usize];
                if let Some(list) = self.reqs.get(&epoch) {
                    for &(j, r) in list {
                        if cuts[j] < r {
                            cuts[j] = r;
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                return;
            }
        }
    }

    pub fn state_from_cuts(&self, cuts: &[u32]) -> CrashState {
        let mut map: BTreeMap<usize, u32> = self.fixed.iter().copied().filter(|&(_, c)| c > 0).collect();
        for (v, &c) in self.vars.iter().zip(cuts) {
            if c > 0 {
                map.insert(v.line, c);
            }
        }
        CrashState { history_id: self.history_id, cuts: map }
    }

    /// Every consistent state, in lexicographic order of var-line cuts.
    pub fn enumerate(&self, limit: u128) -> Result<Vec<CrashState>, PmemError> {
        let product = self.product();
        if product > limit {
            return Err(PmemError::CrashExplosion { product, limit });
        }
        let mut out = Vec::new();
        let mut cuts: Vec<u32> = self.vars.iter().map(|v| v.floor).collect();
        loop {
            if self.is_consistent(&cuts) {
                out.push(self.state_from_cuts(&cuts));
            }
            // odometer, last line fastest
            let mut i = self.vars.len();
            loop {
                if i == 0 {
                    return Ok(out);
                }
                i -= 1;
                if cuts[i] < self.vars[i].cap {
                    cuts[i] += 1;
                    break;
                }
                cuts[i] = self.vars[i].floor;
            }
        }
    }

    /// Independent uniform cut per line, then the closure fix-up.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> CrashState {
        let mut cuts: Vec<u32> = self.vars.iter().map(|v| rng.gen_range(v.floor..=v.cap)).collect();
        self.fix_up(&mut cuts);
        self.state_from_cuts(&cuts)
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    /// Brute force over every cut tuple, checking the two persist rules
    /// directly against the event log.
    fn brute_force(mem: &SimMemory) -> BTreeSet<BTreeMap<usize, u32>> {
        let mut lines: Vec<usize> = mem.write_log().iter().map(|w| w.line).collect();
        lines.sort_unstable();
        lines.dedup();
        let per_line: Vec<Vec<&super::super::WriteEvent>> = lines
            .iter()
            .map(|&l| mem.write_log().iter().filter(|w| w.line == l).collect())
            .collect();
        // (write seq, flush seq, fence seq) triples: W <hb flush(line W) <hb sfence.
        let flushes: Vec<(usize, u64)> = mem
            .flush_log()
            .iter()
            .filter_map(|e| match e.kind {
                super::super::FlushEventKind::Clflushopt { line, .. } => Some((line, e.seq)),
                _ => None,
            })
            .collect();
        let fences: Vec<u64> = mem
            .flush_log()
            .iter()
            .filter(|e| matches!(e.kind, super::super::FlushEventKind::Sfence { .. }))
            .map(|e| e.seq)
            .collect();
        let ordered_before = |w: &super::super::WriteEvent, x: &super::super::WriteEvent| {
            flushes.iter().any(|&(fl, fs)| {
                fl == w.line && fs > w.seq && fences.iter().any(|&f| f > fs && f < x.seq)
            })
        };
        let mut out = BTreeSet::new();
        let mut cuts = vec![0usize; lines.len()];
        loop {
            let kept: Vec<&super::super::WriteEvent> =
                per_line.iter().zip(&cuts).flat_map(|(ws, &c)| ws[..c].iter().copied()).collect();
            let all: Vec<&super::super::WriteEvent> = per_line.iter().flatten().copied().collect();
            let ok = kept.iter().all(|x| {
                all.iter().all(|w| !ordered_before(w, x) || kept.iter().any(|k| k.seq == w.seq))
            });
            if ok {
                out.insert(
                    lines.iter().zip(&cuts).filter(|(_, &c)| c > 0).map(|(&l, &c)| (l, c as u32)).collect(),
                );
            }
            let mut i = lines.len();
            loop {
                if i == 0 {
                    return out;
                }
                i -= 1;
                if cuts[i] < per_line[i].len() {
                    cuts[i] += 1;
                    break;
                }
                cuts[i] = 0;
            }
        }
    }

    fn random_trace(seed: u64, writes: usize) -> SimMemory {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = SimMemory::new(64 * 3);
        let mut n = 0;
        while n < writes {
            match rng.gen_range(0..6) {
                0..=2 => {
                    let line = rng.gen_range(0..3);
                    let word = rng.gen_range(0..8);
                    let order = if rng.gen_bool(0.3) { StoreOrder::Release } else { StoreOrder::Relaxed };
                    m.store(line * 64 + word * 8, &[n as u8 + 1; 8], order);
                    n += 1;
                }
                3 => m.clflushopt(rng.gen_range(0..3)),
                4 => m.sfence(),
                _ => m.release_fence(),
            }
        }
        m
    }

    #[test]
    fn enumeration_matches_brute_force() {
        for seed in 0..60 {
            let m = random_trace(seed, 1 + (seed as usize % 12));
            let got: BTreeSet<BTreeMap<usize, u32>> =
                m.enumerate_crash_states(1 << 24).unwrap().into_iter().map(|s| s.cuts).collect();
            assert_eq!(got, brute_force(&m), "seed {seed}");
        }
    }

    #[test]
    fn samples_are_enumerable() {
        for seed in 0..30 {
            let m = random_trace(seed, 10);
            let all: HashSet<CrashState> = m.enumerate_crash_states(1 << 24).unwrap().into_iter().collect();
            for s in 0..50 {
                assert!(all.contains(&m.sample_crash_state(seed * 100 + s)));
            }
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = random_trace(7, 12);
        assert_eq!(m.sample_crash_state(99), m.sample_crash_state(99));
    }

    #[test]
    fn sampling_covers_unfenced_pair() {
        let mut m = SimMemory::new(128);
        m.store(0, &[1; 8], StoreOrder::Relaxed);
        m.store(64, &[2; 8], StoreOrder::Relaxed);
        let space = m.crash_space(0, m.now());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let seen: HashSet<CrashState> = (0..10_000).map(|_| space.sample(&mut rng)).collect();
        assert_eq!(seen.len(), 4);
    }

    #[test]
    fn replayed_lines_match_cut_prefix() {
        let m = random_trace(3, 12);
        for s in m.enumerate_crash_states(1 << 24).unwrap() {
            let img = m.apply_crash(&s).unwrap();
            let mut manual = m.persisted_base().to_vec();
            for w in m.write_log() {
                let keep = m.write_log().iter().filter(|x| x.line == w.line && x.seq <= w.seq).count() as u32;
                if keep <= s.cut(w.line) {
                    let a = w.line * 64 + w.offset_in_line;
                    manual[a..a + w.data.len()].copy_from_slice(&w.data);
                }
            }
            assert_eq!(img.cached(), &manual[..]);
        }
    }
}
