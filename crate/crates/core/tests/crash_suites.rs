use nvlog::harness::{
    forge_crc32_script, run_crash_suite, CrashPolicy, SuiteTarget, WorkloadScript, PLANTED_CUTS,
};
use nvlog::logalg::AlgorithmKind;

const CORRECT: [AlgorithmKind; 7] = [
    AlgorithmKind::CsoVb,
    AlgorithmKind::CsoRandom,
    AlgorithmKind::CsoFvb,
    AlgorithmKind::Tornbit,
    AlgorithmKind::Crc64,
    AlgorithmKind::TwoRounds,
    AlgorithmKind::AtlasLog,
];

fn sizes(kind: AlgorithmKind) -> &'static [usize] {
    match kind {
        AlgorithmKind::AtlasLog => &[24],
        AlgorithmKind::CsoVb => &[24, 56, 112],
        AlgorithmKind::CsoFvb => &[56, 112, 240],
        _ => &[24, 56, 112],
    }
}

/// Full-length payload with every byte nonzero.
fn full(len: usize, salt: u8) -> String {
    let bytes: Vec<String> = (0..len).map(|i| format!("{:02x}", (i as u8).wrapping_mul(29) ^ salt | 1)).collect();
    format!("A hex:{}", bytes.concat())
}

fn script(payload: usize, body: &str) -> WorkloadScript {
    WorkloadScript::parse(&format!("payload {payload}\nmode exhaustive\n{body}")).unwrap()
}

#[test]
fn three_appends_every_crash_state() {
    for kind in CORRECT {
        for &len in sizes(kind) {
            let s = script(len, "A first\nA hex:ffffffffffffffff0101\nA third");
            let r = run_crash_suite(SuiteTarget::Log(kind), &s);
            assert!(r.is_clean(), "{kind} {len}: {}", r.to_text());
            assert!(r.total_states() > 3);
            let body = [full(len, 0x10), full(len, 0x80), full(len, 0x33)].join("\n");
            let r = run_crash_suite(SuiteTarget::Log(kind), &script(len, &body));
            assert!(r.is_clean(), "{kind} {len}: {}", r.to_text());
        }
    }
}

#[test]
fn appends_around_trims_and_wraparound() {
    for kind in CORRECT {
        let len = sizes(kind)[0];
        let s = WorkloadScript::parse(&format!(
            "payload {len}\nslots 3\nmode exhaustive\nA a\nA b\nTRIM 1\nA c\nTRIM 2\nA d\nA e\nTRIM 1\nA f"
        ))
        .unwrap();
        let r = run_crash_suite(SuiteTarget::Log(kind), &s);
        assert!(r.is_clean(), "{kind}: {}", r.to_text());
    }
}

#[test]
fn mutant_flagged_at_every_size() {
    for len in [24, 56, 112] {
        let r = run_crash_suite(SuiteTarget::Log(AlgorithmKind::MutantVb), &script(len, "A one\nA two\nA three"));
        assert!(r.violation_count > 0, "{len}");
    }
}

#[test]
fn forged_crc32_false_valid_is_the_planted_one() {
    let s = forge_crc32_script();
    let r = run_crash_suite(SuiteTarget::Log(AlgorithmKind::Crc32), &s);
    assert_eq!(r.violation_count, 1, "{}", r.to_text());
    assert_eq!(r.violations[0].cuts, PLANTED_CUTS);
    for kind in [AlgorithmKind::Crc64, AlgorithmKind::CsoVb] {
        let r = run_crash_suite(SuiteTarget::Log(kind), &s);
        assert!(r.is_clean(), "{kind}: {}", r.to_text());
        let sampled = WorkloadScript { policy: CrashPolicy::Sampled(20_000), ..s.clone() };
        assert!(run_crash_suite(SuiteTarget::Log(kind), &sampled).is_clean());
    }
}
