//! Workload script text format, one item per line, `#` starts a comment.
//!
//! ```text
//! algo cso-vb         # default target (log algorithm, `stps` or `stps-optimized`)
//! payload 24          # log entry size in bytes
//! slots 8             # log slots / set slots
//! lines 1             # set node size in cache lines
//! seed 7
//! mode exhaustive     # or: sampled 10000 | at-op 2
//! A hello             # append (zero-padded); `hex:` prefix for raw bytes
//! TRIM 1              # drop the oldest entries
//! U key value         # set update
//! R key               # set remove
//! T k1 v1 k2 v2       # set transaction
//! G key               # set lookup
//! ```

use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptOp {
    Append(Vec<u8>),
    Trim(usize),
    Update(Vec<u8>, Vec<u8>),
    Remove(Vec<u8>),
    Txn(Vec<(Vec<u8>, Vec<u8>)>),
    Get(Vec<u8>),
}

impl ScriptOp {
    pub fn is_log_op(&self) -> bool {
        matches!(self, ScriptOp::Append(_) | ScriptOp::Trim(_))
    }
}

fn show(bytes: &[u8]) -> String {
    match std::str::from_utf8(bytes) {
        Ok(s) if !s.is_empty() && s.chars().all(|c| c.is_ascii_graphic()) && !s.starts_with("hex:") => s.to_string(),
        _ => format!("hex:{}", hex(bytes)),
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl fmt::Display for ScriptOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScriptOp::Append(p) => {
                let end = p.iter().rposition(|&b| b != 0).map_or(0, |i| i + 1);
                write!(f, "A {}", show(&p[..end.max(1).min(p.len())]))
            }
            ScriptOp::Trim(n) => write!(f, "TRIM {n}"),
            ScriptOp::Update(k, v) => write!(f, "U {} {}", show(k), show(v)),
            ScriptOp::Remove(k) => write!(f, "R {}", show(k)),
            ScriptOp::Txn(pairs) => {
                write!(f, "T")?;
                for (k, v) in pairs {
                    write!(f, " {} {}", show(k), show(v))?;
                }
                Ok(())
            }
            ScriptOp::Get(k) => write!(f, "G {}", show(k)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrashPolicy {
    Exhaustive,
    Sampled(usize),
    /// Exhaustive, but only around operation `i` (0-based).
    AtOp(usize),
}

pub const DEFAULT_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkloadScript {
    pub ops: Vec<ScriptOp>,
    pub seed: u64,
    pub policy: CrashPolicy,
    /// Target named by the script itself.
    pub algo: Option<String>,
    pub payload_len: Option<usize>,
    pub slots: Option<usize>,
    pub node_lines: Option<usize>,
}

impl Default for WorkloadScript {
    fn default() -> Self {
        WorkloadScript {
            ops: Vec::new(),
            seed: 0,
            policy: CrashPolicy::Sampled(DEFAULT_SAMPLES),
            algo: None,
            payload_len: None,
            slots: None,
            node_lines: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {msg}")]
pub struct ScriptError {
    pub line: usize,
    pub msg: String,
}

fn bytes_arg(tok: &str) -> Result<Vec<u8>, String> {
    match tok.strip_prefix("hex:") {
        Some(h) => {
            if h.len() % 2 != 0 {
                return Err(format!("odd-length hex `{h}`"));
            }
            (0..h.len())
                .step_by(2)
                .map(|i| u8::from_str_radix(&h[i..i + 2], 16).map_err(|_| format!("bad hex `{h}`")))
                .collect()
        }
        None => Ok(tok.as_bytes().to_vec()),
    }
}

fn num<T: FromStr>(tok: Option<&str>, what: &str) -> Result<T, String> {
    let tok = tok.ok_or_else(|| format!("missing {what}"))?;
    tok.parse().map_err(|_| format!("bad {what} `{tok}`"))
}

impl WorkloadScript {
    pub fn parse(text: &str) -> Result<Self, ScriptError> {
        let mut s = WorkloadScript::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| ScriptError { line: i + 1, msg };
            let mut toks = line.split_whitespace();
            let head = toks.next().unwrap();
            let rest: Vec<&str> = toks.clone().collect();
            let op = match head {
                "algo" => {
                    s.algo = Some(toks.next().ok_or_else(|| err("missing algorithm name".into()))?.to_string());
                    None
                }
                "payload" => {
                    s.payload_len = Some(num(toks.next(), "payload size").map_err(err)?);
                    None
                }
                "slots" => {
                    s.slots = Some(num(toks.next(), "slot count").map_err(err)?);
                    None
                }
                "lines" => {
                    s.node_lines = Some(num(toks.next(), "line count").map_err(err)?);
                    None
                }
                "seed" => {
                    s.seed = num(toks.next(), "seed").map_err(err)?;
                    None
                }
                "mode" => {
                    s.policy = match toks.next() {
                        Some("exhaustive") => CrashPolicy::Exhaustive,
                        Some("sampled") => match toks.next() {
                            Some(k) => CrashPolicy::Sampled(num(Some(k), "sample count").map_err(err)?),
                            None => CrashPolicy::Sampled(DEFAULT_SAMPLES),
                        },
                        Some("at-op") => CrashPolicy::AtOp(num(toks.next(), "op index").map_err(err)?),
                        other => return Err(err(format!("unknown mode {other:?}"))),
                    };
                    None
                }
                "A" | "a" => {
                    if rest.len() != 1 {
                        return Err(err("append takes one payload token".into()));
                    }
                    Some(ScriptOp::Append(bytes_arg(rest[0]).map_err(err)?))
                }
                "TRIM" | "trim" => Some(ScriptOp::Trim(num(toks.next(), "trim count").map_err(err)?)),
                "U" | "u" => {
                    if rest.len() != 2 {
                        return Err(err("update takes a key and a value".into()));
                    }
                    Some(ScriptOp::Update(bytes_arg(rest[0]).map_err(err)?, bytes_arg(rest[1]).map_err(err)?))
                }
                "R" | "r" => {
                    if rest.len() != 1 {
                        return Err(err("remove takes a key".into()));
                    }
                    Some(ScriptOp::Remove(bytes_arg(rest[0]).map_err(err)?))
                }
                "G" | "g" => {
                    if rest.len() != 1 {
                        return Err(err("get takes a key".into()));
                    }
                    Some(ScriptOp::Get(bytes_arg(rest[0]).map_err(err)?))
                }
                "T" | "t" => {
                    if rest.is_empty() || rest.len() % 2 != 0 {
                        return Err(err("transaction takes key/value pairs".into()));
                    }
                    let pairs = rest
                        .chunks(2)
                        .map(|kv| Ok((bytes_arg(kv[0])?, bytes_arg(kv[1])?)))
                        .collect::<Result<Vec<_>, String>>()
                        .map_err(err)?;
                    Some(ScriptOp::Txn(pairs))
                }
                other => return Err(err(format!("unknown directive `{other}`"))),
            };
            if let Some(op) = op {
                if s.ops.first().is_some_and(|f| f.is_log_op() != op.is_log_op()) {
                    return Err(err("script mixes log and set operations".into()));
                }
                s.ops.push(op);
            }
        }
        Ok(s)
    }

    /// `true` for set scripts; empty scripts count as log scripts.
    pub fn is_set_script(&self) -> bool {
        self.ops.first().is_some_and(|op| !op.is_log_op())
    }

    /// Renders the script back to text.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(a) = &self.algo {
            out += &format!("algo {a}\n");
        }
        if let Some(p) = self.payload_len {
            out += &format!("payload {p}\n");
        }
        if let Some(n) = self.slots {
            out += &format!("slots {n}\n");
        }
        if let Some(n) = self.node_lines {
            out += &format!("lines {n}\n");
        }
        out += &format!("seed {}\n", self.seed);
        out += &match self.policy {
            CrashPolicy::Exhaustive => "mode exhaustive\n".to_string(),
            CrashPolicy::Sampled(k) => format!("mode sampled {k}\n"),
            CrashPolicy::AtOp(i) => format!("mode at-op {i}\n"),
        };
        for op in &self.ops {
            out += &format!("{op}\n");
        }
        out
    }
}

impl FromStr for WorkloadScript {
    type Err = ScriptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        WorkloadScript::parse(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_log_script() {
        let s = WorkloadScript::parse("payload 24\nmode exhaustive # all of them\nA hello\nA hex:00ff\n\nTRIM 1\n").unwrap();
        assert_eq!(s.payload_len, Some(24));
        assert_eq!(s.policy, CrashPolicy::Exhaustive);
        assert_eq!(s.ops, vec![ScriptOp::Append(b"hello".to_vec()), ScriptOp::Append(vec![0, 0xff]), ScriptOp::Trim(1)]);
        assert!(!s.is_set_script());
    }

    #[test]
    fn parses_set_script() {
        let s = WorkloadScript::parse("mode at-op 1\nU k v\nT a 1 b 2\nR k\nG a").unwrap();
        assert_eq!(s.policy, CrashPolicy::AtOp(1));
        assert!(s.is_set_script());
        assert_eq!(s.ops[1], ScriptOp::Txn(vec![(b"a".to_vec(), b"1".to_vec()), (b"b".to_vec(), b"2".to_vec())]));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = WorkloadScript::parse("A x\nU k v").unwrap_err();
        assert_eq!(e.line, 2);
        assert_eq!(WorkloadScript::parse("mode sometimes").unwrap_err().line, 1);
        assert!(WorkloadScript::parse("T a").is_err());
        assert!(WorkloadScript::parse("A hex:abc").is_err());
        assert!(WorkloadScript::parse("FLY away").is_err());
    }

    #[test]
    fn text_round_trip() {
        let s = WorkloadScript::parse("algo crc64\npayload 16\nseed 3\nmode sampled 50\nA hi\nA hex:00ff01\nTRIM 2").unwrap();
        assert_eq!(WorkloadScript::parse(&s.to_text()).unwrap(), s);
    }
}
