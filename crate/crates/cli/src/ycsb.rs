//! Read/update mix over the persistent set and the two-round-trip set.
//! Keys are drawn uniformly; every update rewrites a whole node.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use anyhow::{bail, Result};
use nvlog::pmem::{CostModel, SimMemory};
use nvlog::stps::{Epl, PersistentSet, StpsConfig, TwoRoundsSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::costs;

/// Operations between history compactions.
const COMPACT_EVERY: usize = 4096;
const KEY_LEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Stps,
    StpsOptimized,
    TwoRoundsSet,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Stps, Variant::StpsOptimized, Variant::TwoRoundsSet];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Stps => "stps",
            Variant::StpsOptimized => "stps-optimized",
            Variant::TwoRoundsSet => "two-rounds-set",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown set variant `{s}` (stps, stps-optimized, two-rounds-set)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct YcsbConfig {
    pub variant: Variant,
    pub read_fraction: f64,
    pub set_size: usize,
    pub node_lines: usize,
    pub latency_ns: u64,
    pub ops: usize,
    pub seed: u64,
}

impl Default for YcsbConfig {
    fn default() -> Self {
        YcsbConfig {
            variant: Variant::Stps,
            read_fraction: 0.5,
            set_size: 2048,
            node_lines: 1,
            latency_ns: 0,
            ops: 20_000,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YcsbRow {
    pub variant: String,
    pub set_size: usize,
    pub node_lines: usize,
    pub latency_ns: u64,
    pub read_fraction: f64,
    pub ops: usize,
    pub throughput_modeled: f64,
    pub throughput_wallclock: f64,
}

enum Set {
    Stps(PersistentSet, bool),
    TwoRounds(TwoRoundsSet),
}

impl Set {
    fn update(&mut self, mem: &mut SimMemory, key: &[u8], value: &[u8]) -> Result<()> {
        match self {
            Set::Stps(s, false) => s.update(mem, key, value)?,
            Set::Stps(s, true) => s.update_optimized(mem, key, value)?,
            Set::TwoRounds(s) => s.update(mem, key, value)?,
        }
        Ok(())
    }

    fn get(&self, mem: &SimMemory, key: &[u8]) -> Option<Vec<u8>> {
        match self {
            Set::Stps(s, _) => s.get(mem, key),
            Set::TwoRounds(s) => s.get(mem, key),
        }
    }

    fn nav_steps(&self) -> u64 {
        match self {
            Set::Stps(s, _) => s.nav_steps(),
            Set::TwoRounds(s) => s.nav_steps(),
        }
    }
}

/// Value bytes that fill a node next to an 8-byte key.
pub fn value_len(node_lines: usize) -> usize {
    Epl { base: 0, nslots: 1, node_lines }.data_capacity() - KEY_LEN
}

pub fn ycsb(cfg: &YcsbConfig) -> Result<YcsbRow> {
    if !(0.0..=1.0).contains(&cfg.read_fraction) {
        bail!("read fraction must be within [0, 1]");
    }
    if !(1..=16).contains(&cfg.node_lines) {
        bail!("node size must be 1..=16 lines");
    }
    if cfg.set_size == 0 {
        bail!("set size must be positive");
    }
    let buckets = cfg.set_size.next_power_of_two();
    // slack for superseded entries awaiting reuse
    let nodes = cfg.set_size + cfg.set_size / 8 + 16;
    let (mut mem, mut set) = match cfg.variant {
        Variant::Stps | Variant::StpsOptimized => {
            let scfg = StpsConfig::new(nodes, cfg.node_lines).with_buckets(buckets);
            let mut mem = SimMemory::new(scfg.base + scfg.region_len());
            let set = PersistentSet::create(&mut mem, scfg)?;
            (mem, Set::Stps(set, cfg.variant == Variant::StpsOptimized))
        }
        Variant::TwoRoundsSet => {
            let mut mem = SimMemory::new(TwoRoundsSet::region_len(buckets, nodes, cfg.node_lines));
            let set = TwoRoundsSet::create(&mut mem, 0, buckets, nodes, cfg.node_lines)?;
            (mem, Set::TwoRounds(set))
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let vlen = value_len(cfg.node_lines);
    let mut value = vec![0u8; vlen];
    for k in 0..cfg.set_size as u64 {
        rng.fill(&mut value[..]);
        set.update(&mut mem, &k.to_le_bytes(), &value)?;
        if k as usize % COMPACT_EVERY == 0 {
            mem.compact();
        }
    }
    mem.compact();
    mem.set_costs(CostModel { fence_latency_ns: cfg.latency_ns, store_ns: costs::STORE_NS, flush_ns: costs::FLUSH_NS });

    let start = mem.stats();
    let nav_start = set.nav_steps();
    let clock = Instant::now();
    for i in 0..cfg.ops {
        let key = rng.gen_range(0..cfg.set_size as u64).to_le_bytes();
        mem.charge(costs::OP_NS);
        if rng.gen_bool(cfg.read_fraction) {
            std::hint::black_box(set.get(&mem, &key));
        } else {
            value[..8].copy_from_slice(&(i as u64).to_le_bytes());
            set.update(&mut mem, &key, &value)?;
        }
        if i % COMPACT_EVERY == COMPACT_EVERY - 1 {
            mem.compact();
        }
    }
    let wall = clock.elapsed().as_secs_f64();
    mem.charge(costs::NAV_NS * (set.nav_steps() - nav_start));
    let modeled_ns = mem.stats().since(&start).simulated_time_ns as f64;
    let n = cfg.ops as f64;
    Ok(YcsbRow {
        variant: cfg.variant.name().to_string(),
        set_size: cfg.set_size,
        node_lines: cfg.node_lines,
        latency_ns: cfg.latency_ns,
        read_fraction: cfg.read_fraction,
        ops: cfg.ops,
        throughput_modeled: n / modeled_ns * 1e9,
        throughput_wallclock: if wall > 0.0 { n / wall } else { f64::INFINITY },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(variant: Variant, latency_ns: u64, read_fraction: f64) -> YcsbRow {
        ycsb(&YcsbConfig { variant, latency_ns, read_fraction, ops: 4000, ..Default::default() }).unwrap()
    }

    #[test]
    fn stps_ahead_of_baseline() {
        for latency in [0, 400, 800] {
            let s = run(Variant::Stps, latency, 0.5);
            let t = run(Variant::TwoRoundsSet, latency, 0.5);
            assert!(s.throughput_modeled > t.throughput_modeled, "{latency}");
        }
    }

    #[test]
    fn read_only_ties() {
        let s = run(Variant::Stps, 800, 1.0);
        let t = run(Variant::TwoRoundsSet, 800, 1.0);
        let ratio = s.throughput_modeled / t.throughput_modeled;
        assert!((ratio - 1.0).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn optimized_matches_plain_in_model() {
        let a = run(Variant::Stps, 200, 0.5);
        let b = run(Variant::StpsOptimized, 200, 0.5);
        assert_eq!(a.throughput_modeled, b.throughput_modeled);
    }

    #[test]
    fn bad_configs() {
        assert!(ycsb(&YcsbConfig { read_fraction: 1.5, ..Default::default() }).is_err());
        assert!(ycsb(&YcsbConfig { node_lines: 17, ..Default::default() }).is_err());
        assert_eq!("two-rounds-set".parse::<Variant>(), Ok(Variant::TwoRoundsSet));
    }
}
