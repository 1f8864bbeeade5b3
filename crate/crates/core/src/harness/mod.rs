//! Crash-injection testing and round-trip accounting.

mod audit;
mod claims;
mod diff;
mod forge;
mod report;
mod script;
mod suite;

pub use audit::{audit_roundtrips, AuditResult, DRAIN_INTERVAL};
pub use claims::{epl_claim_check, EplCase, EplClaimReport};
pub use diff::{differential_recovery, differential_set, DiffReport, SetDiffReport};
pub use forge::{forge_crc32_script, forged_payload, forged_word, FORGED_WORD, FORGE_PAYLOAD, PLANTED_CUTS};
pub use report::{write_rows, CheckRow, CrashReport, Violation};
pub use script::{CrashPolicy, ScriptError, ScriptOp, WorkloadScript, DEFAULT_SAMPLES};
pub use suite::{boundary_states, default_payload_len, fit_region, log_region, replay_script, run_crash_suite, SuiteTarget, EXHAUSTIVE_LIMIT};
