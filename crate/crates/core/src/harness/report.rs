use std::io::{self, Write};

use serde::Serialize;

/// One crash-state check: an operation's crash window, or the final image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheckRow {
    pub suite: String,
    pub check: String,
    pub op: String,
    pub mode: String,
    pub states: usize,
    pub distinct_states: usize,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub op_index: Option<usize>,
    pub op: String,
    /// `line:cut` tuple of the offending crash state.
    pub cuts: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrashReport {
    pub suite: String,
    pub rows: Vec<CheckRow>,
    /// The first violations in full.
    pub violations: Vec<Violation>,
    pub violation_count: usize,
    /// Problems that stopped checking (bad script, unsupported sizes).
    pub errors: Vec<String>,
}

impl CrashReport {
    pub fn new(suite: impl Into<String>) -> Self {
        CrashReport {
            suite: suite.into(),
            rows: Vec::new(),
            violations: Vec::new(),
            violation_count: 0,
            errors: Vec::new(),
        }
    }

    pub fn is_clean(&self) -> bool {
        self.violation_count == 0 && self.errors.is_empty()
    }

    pub fn total_states(&self) -> usize {
        self.rows.iter().map(|r| r.states).sum()
    }

    pub fn write_text<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(
            out,
            "suite {}: {} checks, {} crash states, {} violations",
            self.suite,
            self.rows.len(),
            self.total_states(),
            self.violation_count
        )?;
        for r in &self.rows {
            writeln!(
                out,
                "{} `{}` {}: {} states ({} distinct), {} violations",
                r.check, r.op, r.mode, r.states, r.distinct_states, r.violations
            )?;
        }
        for v in &self.violations {
            let at = v.op_index.map_or("end".to_string(), |i| format!("op {i}"));
            writeln!(out, "violation {at} `{}` cuts {}: {}", v.op, v.cuts, v.detail)?;
        }
        if self.violations.len() < self.violation_count {
            writeln!(out, "... {} more violations", self.violation_count - self.violations.len())?;
        }
        for e in &self.errors {
            writeln!(out, "error: {e}")?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf).expect("write to vec");
        String::from_utf8(buf).expect("utf8 report")
    }

    /// One CSV row per check, with a header.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        write_rows(out, &self.rows)
    }
}

/// Writes check rows from any number of reports as one CSV table.
pub fn write_rows<W: Write>(out: W, rows: &[CheckRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
