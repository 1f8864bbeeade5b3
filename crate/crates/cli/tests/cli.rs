use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nvlog::harness::{forge_crc32_script, WorkloadScript};

fn nvlog(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nvlog")).args(args).output().expect("run nvlog")
}

fn script(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scripts").join(name)
}

fn text(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned() + &String::from_utf8_lossy(&o.stderr)
}

#[test]
fn shipped_forge_script_is_current() {
    let shipped = WorkloadScript::parse(&std::fs::read_to_string(script("crc32-forge.nvs")).unwrap()).unwrap();
    assert_eq!(shipped.algo.as_deref(), Some("crc32"));
    assert_eq!(WorkloadScript { algo: None, ..shipped }, forge_crc32_script());
}

#[test]
fn shipped_suites() {
    for name in ["cso-vb.nvs", "stps-txn.nvs", "stps-remove.nvs", "sampled-fvb.nvs"] {
        let o = nvlog(&["crashtest", script(name).to_str().unwrap()]);
        assert!(o.status.success(), "{name}: {}", text(&o));
        assert!(text(&o).contains(" 0 violations"));
    }
    let o = nvlog(&["crashtest", script("mutant-vb.nvs").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", text(&o));
    assert!(text(&o).contains("violation op"));
}

#[test]
fn forged_script_by_algorithm() {
    let path = script("crc32-forge.nvs");
    let p = path.to_str().unwrap();
    let o = nvlog(&["crashtest", p]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).contains("suite crc32: 2 checks, "));
    assert!(text(&o).contains(", 1 violations"));
    for algo in ["crc64", "cso-vb"] {
        let o = nvlog(&["crashtest", p, "--algo", algo, "--samples", "5000"]);
        assert!(o.status.success(), "{algo}: {}", text(&o));
    }
}

#[test]
fn empty_and_broken_scripts() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.nvs");
    std::fs::write(&empty, "# nothing\n").unwrap();
    assert!(nvlog(&["crashtest", empty.to_str().unwrap()]).status.success());
    let bad = dir.path().join("bad.nvs");
    std::fs::write(&bad, "A a\nJUMP\n").unwrap();
    let o = nvlog(&["crashtest", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("line 2"), "{}", text(&o));
}

#[test]
fn crashtest_csv_and_snapshot_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("r.csv");
    let snap = dir.path().join("s.pcso");
    let o = nvlog(&[
        "crashtest",
        script("cso-vb.nvs").to_str().unwrap(),
        "--csv",
        csv_path.to_str().unwrap(),
        "--snapshot",
        snap.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", text(&o));
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    assert!(csv.starts_with("suite,check,op,mode,states,distinct_states,violations\n"));
    assert_eq!(csv.lines().count(), 1 + 5);

    let o = nvlog(&["inspect", snap.to_str().unwrap(), "--algo", "cso-vb", "--payload-bytes", "56"]);
    assert!(o.status.success(), "{}", text(&o));
    let out = text(&o);
    assert!(out.contains("2 valid entries"), "{out}");
    assert!(out.contains(&format!("valid {}", "7365636f6e64")), "{out}");

    let set_snap = dir.path().join("set.pcso");
    let o = nvlog(&["crashtest", script("stps-txn.nvs").to_str().unwrap(), "--at-op", "2", "--snapshot", set_snap.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o));
    let o = nvlog(&["inspect", set_snap.to_str().unwrap(), "--algo", "stps"]);
    assert!(text(&o).contains("recovered 3 live keys"), "{}", text(&o));
}

#[test]
fn bench_and_ycsb_csv() {
    let o = nvlog(&["bench", "--algo", "cso-vb,two-rounds", "--latency-ns", "0,800", "--ops", "1024"]);
    assert!(o.status.success(), "{}", text(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.starts_with(
        "algorithm,entry_lines,latency_ns,appends_per_sec_wallclock,appends_per_sec_modeled,roundtrips_per_append\n"
    ));
    assert_eq!(out.lines().count(), 5);
    let o = nvlog(&["bench", "--algo", "cso-vb", "--entry-lines", "8"]);
    assert_eq!(o.status.code(), Some(2));

    let o = nvlog(&["ycsb", "--latency-ns", "100", "--ops", "2000", "--set-size", "256", "--node-lines", "1,4"]);
    assert!(o.status.success(), "{}", text(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.starts_with("variant,set_size,node_lines,latency_ns,read_fraction,ops,throughput_modeled,throughput_wallclock\n"));
    assert_eq!(out.lines().count(), 5);
}

#[test]
fn modeled_csv_is_reproducible() {
    let run = || {
        let o = nvlog(&["bench", "--algo", "cso-fvb", "--entry-lines", "4", "--latency-ns", "300", "--ops", "1000"]);
        let out = String::from_utf8(o.stdout).unwrap();
        // drop the wall-clock column
        out.lines().map(|l| l.split(',').enumerate().filter(|(i, _)| *i != 3).map(|(_, f)| f).collect::<Vec<_>>().join(",")).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}
