use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt::Debug;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::report::{CheckRow, CrashReport, Violation};
use super::script::{hex, CrashPolicy, ScriptOp, WorkloadScript};
use crate::logalg::{slot_stride, AlgorithmKind, LogAlgorithm, LogRegion};
use crate::pmem::{CrashSpace, CrashState, SimMemory, LINE_SIZE};
use crate::stps::{PersistentSet, StpsConfig};

/// Enumeration bound for exhaustive mode, in unconstrained cut tuples.
pub const EXHAUSTIVE_LIMIT: u128 = 1 << 22;
/// Violations kept in full; the count covers all of them.
const MAX_DETAILED: usize = 64;

/// What the suite runs a script against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuiteTarget {
    Log(AlgorithmKind),
    Set { optimized: bool },
}

impl SuiteTarget {
    pub fn name(&self) -> String {
        match self {
            SuiteTarget::Log(k) => k.name().to_string(),
            SuiteTarget::Set { optimized: false } => "stps".into(),
            SuiteTarget::Set { optimized: true } => "stps-optimized".into(),
        }
    }
}

type LogState = Vec<Vec<u8>>;
type SetState = BTreeMap<Vec<u8>, Vec<u8>>;

/// Something the suite can drive: a live instance plus a pure model.
trait Subject {
    type State: PartialEq + Debug + Clone;
    fn mem(&self) -> &SimMemory;
    fn mem_mut(&mut self) -> &mut SimMemory;
    /// Runs `op` on the live instance and the model. A `Some` return is a
    /// non-crash violation (a wrong lookup result).
    fn apply(&mut self, op: &ScriptOp) -> Result<Option<String>, String>;
    fn model(&self) -> Self::State;
    fn recover(&self, image: Vec<u8>) -> Result<Self::State, String>;
    fn show(state: &Self::State) -> String;
    /// Where `got` departs from `want`, when `show` hides it.
    fn diff_note(_got: &Self::State, _want: &Self::State) -> Option<String> {
        None
    }
}

/// Payload sizes default to the longest append rounded up to a word, at
/// least 24 bytes.
pub fn default_payload_len(script: &WorkloadScript) -> usize {
    let longest = script
        .ops
        .iter()
        .filter_map(|op| match op {
            ScriptOp::Append(p) => Some(p.len()),
            _ => None,
        })
        .max()
        .unwrap_or(0);
    longest.div_ceil(8).max(3) * 8
}

/// Most entries live at once while running the script.
fn peak_live(script: &WorkloadScript) -> usize {
    let (mut live, mut peak) = (0usize, 0usize);
    for op in &script.ops {
        match op {
            ScriptOp::Append(_) => live += 1,
            ScriptOp::Trim(n) => live = live.saturating_sub(*n),
            _ => {}
        }
        peak = peak.max(live);
    }
    peak
}

/// A log region with room for at least `slots` entries of `payload_len`
/// bytes under every algorithm, plus one spare.
pub fn log_region(payload_len: usize, slots: usize) -> LogRegion {
    let stride = slot_stride(payload_len + LINE_SIZE);
    LogRegion::new(0, LINE_SIZE + (slots + 2) * stride)
}

/// The smallest whole-line region where `kind` holds `slots` entries.
pub fn fit_region(kind: AlgorithmKind, payload_len: usize, slots: usize) -> Result<LogRegion, String> {
    let upper = log_region(payload_len, slots).size.next_multiple_of(LINE_SIZE);
    let mut last = None;
    for size in (2 * LINE_SIZE..=upper).step_by(LINE_SIZE) {
        match kind.build(LogRegion::new(0, size), payload_len) {
            Ok(log) if log.capacity() >= slots => return Ok(log.region()),
            Ok(_) => {}
            Err(e) => last = Some(e),
        }
    }
    Err(match last {
        Some(e) => format!("{kind}: {e}"),
        None => format!("{kind}: no region holds {slots} entries"),
    })
}

pub(crate) fn pad(payload: &[u8], len: usize) -> Result<Vec<u8>, String> {
    if payload.len() > len {
        return Err(format!("payload of {} bytes exceeds entry size {len}", payload.len()));
    }
    let mut p = payload.to_vec();
    p.resize(len, 0);
    Ok(p)
}

struct LogSubject {
    kind: AlgorithmKind,
    region: LogRegion,
    payload_len: usize,
    mem: SimMemory,
    log: Box<dyn LogAlgorithm>,
    model: VecDeque<Vec<u8>>,
}

impl LogSubject {
    fn new(kind: AlgorithmKind, script: &WorkloadScript) -> Result<Self, String> {
        let payload_len = script.payload_len.unwrap_or_else(|| default_payload_len(script));
        let slots = script.slots.unwrap_or(peak_live(script) + 2).max(peak_live(script));
        let region = fit_region(kind, payload_len, slots)?;
        let mut mem = SimMemory::new(region.base + region.size);
        let mut log = kind.build(region, payload_len).map_err(|e| format!("{kind}: {e}"))?;
        log.format(&mut mem);
        mem.compact();
        Ok(LogSubject { kind, region, payload_len, mem, log, model: VecDeque::new() })
    }
}

impl Subject for LogSubject {
    type State = LogState;

    fn mem(&self) -> &SimMemory {
        &self.mem
    }

    fn mem_mut(&mut self) -> &mut SimMemory {
        &mut self.mem
    }

    fn apply(&mut self, op: &ScriptOp) -> Result<Option<String>, String> {
        match op {
            ScriptOp::Append(p) => {
                let p = pad(p, self.payload_len)?;
                self.log.append(&mut self.mem, &p).map_err(|e| e.to_string())?;
                self.model.push_back(p);
            }
            ScriptOp::Trim(n) => {
                let n = (*n).min(self.log.live().len());
                self.log.trim_oldest(&mut self.mem, n).map_err(|e| e.to_string())?;
                self.model.drain(..n);
            }
            other => return Err(format!("`{other}` is not a log operation")),
        }
        Ok(None)
    }

    fn model(&self) -> LogState {
        self.model.iter().cloned().collect()
    }

    fn recover(&self, image: Vec<u8>) -> Result<LogState, String> {
        let mem = SimMemory::from_image(LINE_SIZE, image);
        let mut log = self.kind.build(self.region, self.payload_len).map_err(|e| e.to_string())?;
        let entries = log.recover(&mem).map_err(|e| e.to_string())?;
        Ok(entries.into_iter().map(|e| e.payload).collect())
    }

    fn show(state: &LogState) -> String {
        let items: Vec<String> = state.iter().map(|p| short(p)).collect();
        format!("[{}]", items.join(", "))
    }

    fn diff_note(got: &LogState, want: &LogState) -> Option<String> {
        let (i, (g, w)) = got.iter().zip(want).enumerate().find(|(_, (g, w))| g != w)?;
        let first = g.iter().zip(w.iter()).position(|(a, b)| a != b)?;
        let last = g.iter().zip(w.iter()).rposition(|(a, b)| a != b)?;
        Some(format!("entry {i} differs in bytes {first}..={last}"))
    }
}

fn short(bytes: &[u8]) -> String {
    let end = bytes.iter().rposition(|&b| b != 0).map_or(0, |i| i + 1);
    let b = &bytes[..end];
    if b.is_empty() {
        return "zeros".into();
    }
    match std::str::from_utf8(b) {
        Ok(s) if !s.is_empty() && s.chars().all(|c| c.is_ascii_graphic()) => s.to_string(),
        _ if b.len() > 16 => format!("{}..", hex(&b[..16])),
        _ => hex(b),
    }
}

struct SetSubject {
    optimized: bool,
    cfg: StpsConfig,
    mem: SimMemory,
    set: PersistentSet,
    model: SetState,
}

impl SetSubject {
    fn new(optimized: bool, script: &WorkloadScript) -> Result<Self, String> {
        let elements: usize = script
            .ops
            .iter()
            .map(|op| match op {
                ScriptOp::Update(..) | ScriptOp::Remove(_) => 1,
                ScriptOp::Txn(p) => p.len(),
                _ => 0,
            })
            .sum();
        let nslots = script.slots.unwrap_or(elements + 4);
        let cfg = StpsConfig::new(nslots, script.node_lines.unwrap_or(1)).with_buckets(64);
        let mut mem = SimMemory::new(cfg.base + cfg.region_len());
        let set = PersistentSet::create(&mut mem, cfg).map_err(|e| e.to_string())?;
        mem.compact();
        Ok(SetSubject { optimized, cfg, mem, set, model: SetState::new() })
    }
}

impl Subject for SetSubject {
    type State = SetState;

    fn mem(&self) -> &SimMemory {
        &self.mem
    }

    fn mem_mut(&mut self) -> &mut SimMemory {
        &mut self.mem
    }

    fn apply(&mut self, op: &ScriptOp) -> Result<Option<String>, String> {
        match op {
            ScriptOp::Update(k, v) => {
                let r = if self.optimized {
                    self.set.update_optimized(&mut self.mem, k, v)
                } else {
                    self.set.update(&mut self.mem, k, v)
                };
                r.map_err(|e| e.to_string())?;
                self.model.insert(k.clone(), v.clone());
            }
            ScriptOp::Remove(k) => {
                self.set.remove(&mut self.mem, k).map_err(|e| e.to_string())?;
                self.model.remove(k);
            }
            ScriptOp::Txn(pairs) => {
                self.set.txn_update(&mut self.mem, pairs).map_err(|e| e.to_string())?;
                for (k, v) in pairs {
                    self.model.insert(k.clone(), v.clone());
                }
            }
            ScriptOp::Get(k) => {
                let events = self.mem.now();
                let got = self.set.get(&self.mem, k);
                let want = self.model.get(k).cloned();
                if got != want {
                    return Ok(Some(format!(
                        "lookup returned {:?}, expected {:?}",
                        got.as_deref().map(short),
                        want.as_deref().map(short)
                    )));
                }
                if self.mem.now() != events {
                    return Ok(Some("lookup issued memory events".into()));
                }
            }
            other => return Err(format!("`{other}` is not a set operation")),
        }
        Ok(None)
    }

    fn model(&self) -> SetState {
        self.model.clone()
    }

    fn recover(&self, image: Vec<u8>) -> Result<SetState, String> {
        let mut mem = SimMemory::from_image(LINE_SIZE, image);
        let (set, _) = PersistentSet::recover(&mut mem, self.cfg).map_err(|e| e.to_string())?;
        Ok(set.contents(&mem))
    }

    fn show(state: &SetState) -> String {
        let items: Vec<String> = state.iter().map(|(k, v)| format!("{}={}", short(k), short(v))).collect();
        format!("{{{}}}", items.join(", "))
    }
}

/// States always checked in sampled mode: every line at its floor, every
/// line at its cap, and each release-ordered write with and without the
/// write just before it.
pub fn boundary_states(space: &CrashSpace) -> Vec<CrashState> {
    let vars = space.var_lines();
    let floors: Vec<u32> = vars.iter().map(|v| v.floor).collect();
    let caps: Vec<u32> = vars.iter().map(|v| v.cap).collect();
    let mut out = BTreeSet::new();
    let mut push = |mut cuts: Vec<u32>| {
        space.fix_up(&mut cuts);
        out.insert(space.state_from_cuts(&cuts));
    };
    push(floors.clone());
    push(caps.clone());
    for (i, v) in vars.iter().enumerate() {
        for &r in &v.release_cuts {
            let mut lo = floors.clone();
            lo[i] = r;
            push(lo);
            let mut hi = caps.clone();
            hi[i] = r - 1;
            push(hi);
        }
    }
    out.into_iter().collect()
}

enum Mode {
    Exhaustive,
    Sampled(usize),
    Skip,
}

fn check_op<S: Subject>(
    subject: &S,
    mode: Mode,
    span: (u64, u64),
    expect: (&S::State, &S::State),
    rng: &mut ChaCha8Rng,
    label: (usize, String),
    report: &mut CrashReport,
) {
    let (op_index, op) = label;
    let space = subject.mem().crash_space(span.0, span.1);
    let (states, mode_name): (Vec<CrashState>, &str) = match mode {
        Mode::Skip => return,
        Mode::Exhaustive => match space.enumerate(EXHAUSTIVE_LIMIT) {
            Ok(s) => (s, "exhaustive"),
            Err(e) => {
                report.errors.push(format!("op {op_index} `{op}`: {e}; use sampled mode"));
                return;
            }
        },
        Mode::Sampled(k) => {
            let mut s = boundary_states(&space);
            s.extend((0..k).map(|_| space.sample(rng)));
            (s, "sampled")
        }
    };

    let mut verdicts: HashMap<&CrashState, Option<String>> = HashMap::new();
    let mut image = Vec::new();
    let mut violations = 0;
    for st in &states {
        let verdict = verdicts.entry(st).or_insert_with(|| {
            subject.mem().crash_image_into(st, &mut image).expect("state from current history");
            match subject.recover(std::mem::take(&mut image)) {
                Ok(got) if &got == expect.0 || &got == expect.1 => None,
                Ok(got) => {
                    let mut d = format!(
                        "recovered {}, expected {} or {}",
                        S::show(&got),
                        S::show(expect.0),
                        S::show(expect.1)
                    );
                    if let Some(note) = S::diff_note(&got, expect.1) {
                        d += &format!(" ({note})");
                    }
                    Some(d)
                }
                Err(e) => Some(format!("recovery failed: {e}")),
            }
        });
        if let Some(detail) = verdict {
            violations += 1;
            if report.violations.len() < MAX_DETAILED {
                report.violations.push(Violation {
                    op_index: Some(op_index),
                    op: op.clone(),
                    cuts: st.describe(),
                    detail: detail.clone(),
                });
            }
        }
    }
    report.violation_count += violations;
    report.rows.push(CheckRow {
        suite: report.suite.clone(),
        check: format!("op {op_index}"),
        op,
        mode: mode_name.into(),
        states: states.len(),
        distinct_states: verdicts.len(),
        violations,
    });
}

/// Operation text for reports, cut short for long payloads.
fn label(op: &ScriptOp) -> String {
    let text = op.to_string();
    match text.char_indices().nth(40) {
        Some((at, _)) => format!("{}..", &text[..at]),
        None => text,
    }
}

fn run<S: Subject>(subject: Result<S, String>, script: &WorkloadScript, report: &mut CrashReport) {
    let mut subject = match subject {
        Ok(s) => s,
        Err(e) => {
            report.errors.push(e);
            return;
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(script.seed);
    let per_op = |k: usize| k.div_ceil(script.ops.len().max(1));
    for (i, op) in script.ops.iter().enumerate() {
        let before = subject.model();
        let start = subject.mem().now();
        let lookup = match subject.apply(op) {
            Ok(v) => v,
            Err(e) => {
                report.errors.push(format!("op {i} `{op}`: {e}"));
                return;
            }
        };
        if let Some(detail) = lookup {
            report.violation_count += 1;
            report.violations.push(Violation { op_index: Some(i), op: label(op), cuts: "-".into(), detail });
        }
        let end = subject.mem().now();
        let after = subject.model();
        let mode = match (script.policy, matches!(op, ScriptOp::Get(_))) {
            (_, true) => Mode::Skip,
            (CrashPolicy::Exhaustive, _) => Mode::Exhaustive,
            (CrashPolicy::AtOp(j), _) if j == i => Mode::Exhaustive,
            (CrashPolicy::AtOp(_), _) => Mode::Skip,
            (CrashPolicy::Sampled(k), _) => Mode::Sampled(per_op(k)),
        };
        check_op(&subject, mode, (start, end), (&before, &after), &mut rng, (i, label(op)), report);
        subject.mem_mut().compact();
    }

    // quiescent image must hold exactly the final model
    let model = subject.model();
    let verdict = match subject.recover(subject.mem().persisted_image()) {
        Ok(got) if got == model => None,
        Ok(got) => Some(format!("recovered {}, expected {}", S::show(&got), S::show(&model))),
        Err(e) => Some(format!("recovery failed: {e}")),
    };
    let violations = verdict.is_some() as usize;
    if let Some(detail) = verdict {
        report.violation_count += 1;
        report.violations.push(Violation { op_index: None, op: "end".into(), cuts: "final".into(), detail });
    }
    report.rows.push(CheckRow {
        suite: report.suite.clone(),
        check: "final".into(),
        op: "end".into(),
        mode: "quiescent".into(),
        states: 1,
        distinct_states: 1,
        violations,
    });
}

/// Runs `script` against `target`, checking every generated crash state
/// of each operation against the states just before and just after it.
pub fn run_crash_suite(target: SuiteTarget, script: &WorkloadScript) -> CrashReport {
    let mut report = CrashReport::new(target.name());
    match target {
        SuiteTarget::Log(kind) => {
            if script.is_set_script() {
                report.errors.push(format!("{kind} cannot run a set script"));
            } else {
                run(LogSubject::new(kind, script), script, &mut report);
            }
        }
        SuiteTarget::Set { optimized } => {
            if !script.ops.is_empty() && !script.is_set_script() {
                report.errors.push("the set cannot run a log script".into());
            } else {
                run(SetSubject::new(optimized, script), script, &mut report);
            }
        }
    }
    report
}

fn replay<S: Subject>(subject: Result<S, String>, script: &WorkloadScript) -> Result<SimMemory, String> {
    let mut subject = subject?;
    for (i, op) in script.ops.iter().enumerate() {
        subject.apply(op).map_err(|e| format!("op {i} `{op}`: {e}"))?;
    }
    Ok(subject.mem().clone())
}

/// Runs `script` without crashes, on the same layout the suite uses, and
/// returns the final memory.
pub fn replay_script(target: SuiteTarget, script: &WorkloadScript) -> Result<SimMemory, String> {
    match target {
        SuiteTarget::Log(kind) => replay(LogSubject::new(kind, script), script),
        SuiteTarget::Set { optimized } => replay(SetSubject::new(optimized, script), script),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn script(text: &str) -> WorkloadScript {
        WorkloadScript::parse(text).unwrap()
    }

    #[test]
    fn csovb_three_appends_clean() {
        let r = run_crash_suite(SuiteTarget::Log(AlgorithmKind::CsoVb), &script("mode exhaustive\nA one\nA two\nA three"));
        assert!(r.is_clean(), "{}", r.to_text());
        assert_eq!(r.rows.len(), 4);
        // 24 B entries: 3 payload words + meta in one line -> 5 cuts
        assert_eq!(r.rows[0].states, 5);
    }

    #[test]
    fn mutant_is_caught() {
        let r = run_crash_suite(SuiteTarget::Log(AlgorithmKind::MutantVb), &script("mode exhaustive\nA one\nA two"));
        assert!(r.violation_count > 0);
        assert!(r.violations[0].cuts.starts_with('['));
    }

    #[test]
    fn set_ops_clean() {
        let s = script("mode exhaustive\nU a 1\nU b 2\nG a\nR a\nG a\nT a 3 b 4 c 5\nU c 6");
        for optimized in [false, true] {
            let r = run_crash_suite(SuiteTarget::Set { optimized }, &s);
            assert!(r.is_clean(), "{}", r.to_text());
        }
    }

    #[test]
    fn sampled_includes_boundaries() {
        let r = run_crash_suite(SuiteTarget::Log(AlgorithmKind::Crc64), &script("mode sampled 8\nA a\nA b"));
        assert!(r.is_clean(), "{}", r.to_text());
        assert!(r.rows[0].states > 4);
    }

    #[test]
    fn errors_are_reported() {
        let r = run_crash_suite(SuiteTarget::Log(AlgorithmKind::AtlasLog), &script("payload 56\nA a"));
        assert!(!r.errors.is_empty() && !r.is_clean());
        let r = run_crash_suite(SuiteTarget::Log(AlgorithmKind::CsoVb), &script("U a b"));
        assert!(!r.is_clean());
        let r = run_crash_suite(SuiteTarget::Log(AlgorithmKind::CsoVb), &script("payload 8\nA toolongforit"));
        assert!(!r.is_clean());
    }

    #[test]
    fn replay_layout_fills_the_memory() {
        let s = script("payload 56\nA a\nA b");
        let mem = replay_script(SuiteTarget::Log(AlgorithmKind::CsoVb), &s).unwrap();
        let mut log = AlgorithmKind::CsoVb.build(LogRegion::new(0, mem.capacity()), 56).unwrap();
        assert_eq!(log.recover(&mem).unwrap().len(), 2);
        assert!(replay_script(SuiteTarget::Set { optimized: false }, &script("A a")).is_err());
    }

    #[test]
    fn empty_script_is_clean() {
        let r = run_crash_suite(SuiteTarget::Log(AlgorithmKind::CsoVb), &script(""));
        assert!(r.is_clean());
        let r = run_crash_suite(SuiteTarget::Set { optimized: false }, &script(""));
        assert!(r.is_clean());
    }
}
