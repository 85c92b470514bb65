use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn vctp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vctp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scenario_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/hospital.scenario")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn scenario_then_registry() {
    let dir = tempfile::tempdir().unwrap();
    let ledger = dir.path().join("ledger.jsonl");
    let ledger = ledger.to_str().unwrap();
    let script = scenario_path();
    let run = vctp(&["--ledger", ledger, "scenario", script.to_str().unwrap()]);
    assert!(run.status.success(), "{}", stdout(&run));
    assert!(stdout(&run).contains("result: PASS"));

    let issuers = stdout(&vctp(&["--ledger", ledger, "registry", "issuer-list"]));
    assert!(issuers.contains("did:example_hos:fcgfc2g823fcdd387\tlevel 1"));
    assert!(issuers.contains("did:example_patient:fcgfc2g823fcdd387\tlevel 2"));

    let h1 = vctp(&["--ledger", ledger, "registry", "state-hash"]);
    let h2 = vctp(&["--ledger", ledger, "registry", "state-hash"]);
    assert_eq!(stdout(&h1), stdout(&h2));
    assert!(stdout(&run).contains(stdout(&h1).trim()));

    let missing = vctp(&[
        "--ledger",
        ledger,
        "registry",
        "credential-show",
        &"ab".repeat(32),
    ]);
    assert_eq!(missing.status.code(), Some(2));

    let ks = dir.path().join("relative2.json");
    let reg = vctp(&[
        "--ledger",
        ledger,
        "registry",
        "did-register",
        "did:example_holder:second",
        "--keystore",
        ks.to_str().unwrap(),
    ]);
    assert!(reg.status.success());
    let keystore: serde_json::Value = serde_json::from_slice(&std::fs::read(&ks).unwrap()).unwrap();
    assert_eq!(keystore["did"], "did:example_holder:second");
    let again = vctp(&[
        "--ledger",
        ledger,
        "registry",
        "did-register",
        "did:example_holder:second",
    ]);
    assert!(!again.status.success());
}

#[test]
fn same_seed_same_transcript() {
    let script = scenario_path();
    let a = vctp(&["scenario", script.to_str().unwrap(), "--seed", "11"]);
    let b = vctp(&["scenario", script.to_str().unwrap(), "--seed", "11"]);
    assert_eq!(stdout(&a), stdout(&b));
}

#[test]
fn failing_scenarios_exit_nonzero_naming_the_step() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenario_path()).unwrap();
    let short = dir.path().join("short.scenario");
    std::fs::write(
        &short,
        text.replace("voters = \"ward\"", "voters = \"short\""),
    )
    .unwrap();
    let out = vctp(&["scenario", short.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("VoteGateFailed at step 5 (onboard)"));

    let nurse = dir.path().join("nurse.scenario");
    std::fs::write(
        &nurse,
        text.replace("to = \"doctor\"", "to = \"nurse1\"").replace(
            "action = \"onboard\"\nactor = \"doctor\"",
            "action = \"onboard\"\nactor = \"nurse1\"",
        ),
    )
    .unwrap();
    let out = vctp(&["scenario", nurse.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("PolicyNotSatisfied"));
}

#[test]
fn genesis_file_overrides_the_script() {
    let dir = tempfile::tempdir().unwrap();
    let genesis = dir.path().join("genesis.toml");
    // The doctor as the only L1 issuer: the hospital can no longer seal.
    std::fs::write(&genesis, "l1_issuers = [\"doctor\"]\nadmin = \"admin\"\n").unwrap();
    let script = scenario_path();
    let out = vctp(&[
        "--genesis",
        genesis.to_str().unwrap(),
        "scenario",
        script.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("NotL1Issuer at step 1 (setup)"));
}

#[test]
fn attacks_report_and_reject_unknown_numbers() {
    let out = vctp(&["attack", "3"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("all defenses held"));
    assert!(!vctp(&["attack", "4"]).status.success());
}

#[test]
fn bench_writes_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bench.toml");
    std::fs::write(
        &config,
        "attribute_counts = [4]\nruns_per_point = 2\nvoter_counts = [5]\nvoter_runs = 1\n\
         concurrency_levels = [4]\nprofile = \"test\"\noutput_dir = \"out\"\n",
    )
    .unwrap();
    let out = vctp(&["bench", config.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("out/pch_timing.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(dir.path().join("out/ledger_throughput.csv").exists());

    std::fs::write(&config, "attribute_counts = [0]\n").unwrap();
    assert!(!vctp(&["bench", config.to_str().unwrap()]).status.success());
}
