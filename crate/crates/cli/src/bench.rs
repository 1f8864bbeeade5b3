//! Log append stress loop: append, and every `drain_interval` appends read
//! the log back and trim it.

use std::time::Instant;

use anyhow::{bail, Context, Result};
use nvlog::harness::log_region;
use nvlog::logalg::{AlgorithmKind, LogAlgorithm};
use nvlog::pmem::{CostModel, SimMemory};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::costs;

/// Entry sizes in cache lines, with the payload bytes used for each.
pub const ENTRY_SIZES: [(f64, usize); 5] = [(0.5, 24), (1.0, 56), (2.0, 112), (4.0, 240), (8.0, 496)];

pub fn payload_for_lines(lines: f64) -> Result<usize> {
    match ENTRY_SIZES.iter().find(|(l, _)| *l == lines) {
        Some(&(_, bytes)) => Ok(bytes),
        None => bail!("entry size must be one of 0.5, 1, 2, 4, 8 lines (got {lines})"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub algo: AlgorithmKind,
    pub entry_lines: f64,
    pub latency_ns: u64,
    pub iterations: usize,
    pub drain_interval: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            algo: AlgorithmKind::CsoVb,
            entry_lines: 1.0,
            latency_ns: 0,
            iterations: 20_000,
            drain_interval: 512,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub algorithm: String,
    pub entry_lines: f64,
    pub latency_ns: u64,
    pub appends_per_sec_wallclock: f64,
    pub appends_per_sec_modeled: f64,
    pub roundtrips_per_append: f64,
}

fn payload(rng: &mut ChaCha8Rng, len: usize) -> Vec<u8> {
    let mut p = vec![0u8; len];
    rng.fill_bytes(&mut p);
    p
}

fn drain(mem: &mut SimMemory, log: &mut dyn LogAlgorithm) -> Result<()> {
    let mut reader = log.kind().build(log.region(), log.payload_len())?;
    let entries = reader.recover(mem)?;
    mem.charge(costs::READ_NS * entries.len() as u64);
    let n = log.live().len();
    log.trim_oldest(mem, n)?;
    mem.compact();
    Ok(())
}

pub fn bench(cfg: &BenchConfig) -> Result<BenchRow> {
    let len = payload_for_lines(cfg.entry_lines)?;
    if !cfg.algo.supports(len) {
        bail!("{} does not support {} line entries ({len} bytes)", cfg.algo, cfg.entry_lines);
    }
    if cfg.iterations == 0 || cfg.drain_interval == 0 {
        bail!("iterations and drain interval must be positive");
    }
    let region = log_region(len, cfg.drain_interval + 2);
    let mut mem = SimMemory::new(region.base + region.size);
    let mut log = cfg.algo.build(region, len).with_context(|| format!("building {}", cfg.algo))?;
    log.format(&mut mem);
    mem.compact();
    mem.set_costs(CostModel { fence_latency_ns: cfg.latency_ns, store_ns: costs::STORE_NS, flush_ns: costs::FLUSH_NS });

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let payloads: Vec<Vec<u8>> = (0..cfg.drain_interval.min(cfg.iterations)).map(|_| payload(&mut rng, len)).collect();
    let start = mem.stats();
    let mut roundtrips = 0;
    let clock = Instant::now();
    for i in 0..cfg.iterations {
        if i > 0 && i % cfg.drain_interval == 0 {
            drain(&mut mem, log.as_mut())?;
        }
        mem.charge(costs::OP_NS);
        let before = mem.stats().fenced_roundtrips;
        log.append(&mut mem, &payloads[i % payloads.len()])?;
        roundtrips += mem.stats().fenced_roundtrips - before;
    }
    drain(&mut mem, log.as_mut())?;
    let wall = clock.elapsed().as_secs_f64();
    let modeled_ns = mem.stats().since(&start).simulated_time_ns as f64;
    let n = cfg.iterations as f64;
    Ok(BenchRow {
        algorithm: cfg.algo.name().to_string(),
        entry_lines: cfg.entry_lines,
        latency_ns: cfg.latency_ns,
        appends_per_sec_wallclock: if wall > 0.0 { n / wall } else { f64::INFINITY },
        appends_per_sec_modeled: n / modeled_ns * 1e9,
        roundtrips_per_append: roundtrips as f64 / n,
    })
}
