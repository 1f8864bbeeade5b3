use anyhow::{anyhow, Result};
use nvlog::harness::{run_crash_suite, CrashPolicy, CrashReport, SuiteTarget, WorkloadScript};
use nvlog::logalg::AlgorithmKind;

pub fn parse_target(name: &str) -> Result<SuiteTarget> {
    match name.to_ascii_lowercase().as_str() {
        "stps" => Ok(SuiteTarget::Set { optimized: false }),
        "stps-optimized" => Ok(SuiteTarget::Set { optimized: true }),
        other => other.parse::<AlgorithmKind>().map(SuiteTarget::Log).map_err(|e| anyhow!(e)),
    }
}

/// Target from the command line, else from the script, else the default
/// for the script's kind.
pub fn resolve_target(flag: Option<&str>, script: &WorkloadScript) -> Result<SuiteTarget> {
    match flag.or(script.algo.as_deref()) {
        Some(name) => parse_target(name),
        None if script.is_set_script() => Ok(SuiteTarget::Set { optimized: false }),
        None => Ok(SuiteTarget::Log(AlgorithmKind::CsoVb)),
    }
}

#[derive(Debug, Clone, Default)]
pub struct CrashtestOptions {
    pub algo: Option<String>,
    pub exhaustive: bool,
    pub samples: Option<usize>,
    pub at_op: Option<usize>,
    pub seed: Option<u64>,
}

pub fn crashtest(text: &str, opts: &CrashtestOptions) -> Result<CrashReport> {
    let mut script = WorkloadScript::parse(text)?;
    if opts.exhaustive {
        script.policy = CrashPolicy::Exhaustive;
    }
    if let Some(k) = opts.samples {
        script.policy = CrashPolicy::Sampled(k);
    }
    if let Some(i) = opts.at_op {
        script.policy = CrashPolicy::AtOp(i);
    }
    if let Some(s) = opts.seed {
        script.seed = s;
    }
    let target = resolve_target(opts.algo.as_deref(), &script)?;
    Ok(run_crash_suite(target, &script))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn targets() {
        let log = WorkloadScript::parse("A x").unwrap();
        let set = WorkloadScript::parse("U k v").unwrap();
        let named = WorkloadScript::parse("algo crc64\nA x").unwrap();
        assert_eq!(resolve_target(None, &log).unwrap(), SuiteTarget::Log(AlgorithmKind::CsoVb));
        assert_eq!(resolve_target(None, &set).unwrap(), SuiteTarget::Set { optimized: false });
        assert_eq!(resolve_target(None, &named).unwrap(), SuiteTarget::Log(AlgorithmKind::Crc64));
        assert_eq!(resolve_target(Some("tornbit"), &named).unwrap(), SuiteTarget::Log(AlgorithmKind::Tornbit));
        assert!(resolve_target(Some("nope"), &log).is_err());
    }

    #[test]
    fn empty_script_passes() {
        assert!(crashtest("", &CrashtestOptions::default()).unwrap().is_clean());
    }
}
