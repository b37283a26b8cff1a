use std::path::Path;
use std::process::{Command, Output};

use boardball_core::report::{read_csv, Report, TrialRow};

fn boardball(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_boardball")).args(args).current_dir(dir).output().unwrap()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "stdout:\n{}\nstderr:\n{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr));
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.path().is_file())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap()))
        .collect();
    v.sort();
    v
}

fn jsonl_count(dir: &Path) -> usize {
    dir_bytes(dir).iter().filter(|(n, _)| n.ends_with(".jsonl")).count()
}

#[test]
fn simulate_is_seeded() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    for (seed, out) in [("3", "a"), ("3", "b"), ("4", "c")] {
        ok(&boardball(&["simulate", "--seed", seed, "--conditions", "dyadic", "--trials-per-block", "2", "--out", out], d));
    }
    assert_eq!(jsonl_count(&d.join("a")), 6);
    assert_eq!(dir_bytes(&d.join("a")), dir_bytes(&d.join("b")));
    assert_ne!(dir_bytes(&d.join("a")), dir_bytes(&d.join("c")));
}

#[test]
fn pipeline_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(&boardball(&["simulate", "--seed", "1", "--trials-per-block", "30", "--out", "logs"], d));
    ok(&boardball(&["analyze", "logs", "--out", "m1"], d));
    ok(&boardball(&["analyze", "logs/*.jsonl", "--out", "m2"], d));
    assert_eq!(dir_bytes(&d.join("m1")), dir_bytes(&d.join("m2")));

    let trials: Vec<TrialRow> = read_csv(std::fs::File::open(d.join("m1/trials.csv")).unwrap()).unwrap();
    assert_eq!(trials.len(), 18 * 30);
    for t in trials.iter().filter(|t| t.completion_time.is_some()) {
        assert!(t.np.unwrap() >= 1, "trial {} has no velocity peak", t.trial);
    }

    ok(&boardball(&["report", "m1", "--out", "r", "--svg"], d));
    let report: Report = serde_json::from_slice(&std::fs::read(d.join("r/report.json")).unwrap()).unwrap();
    assert_eq!(report.conditions.len(), 4);
    // 90 trials per condition here: three bins of 30
    for c in ["bimanual_on", "bimanual_off", "dyadic_on", "dyadic_off"] {
        assert_eq!(report.completion_time_bins.iter().filter(|b| b.condition == c).count(), 3, "{c}");
    }
    for s in &report.shares {
        let total = s.cooperative + s.competitive + s.single + s.still;
        assert!((total - 1.0).abs() < 1e-9, "{s:?}");
    }
    assert!(d.join("r/report.md").is_file() && d.join("r/completion_time.svg").is_file());
}

#[test]
fn data_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::create_dir(d.join("empty")).unwrap();
    let o = boardball(&["analyze", "empty"], d);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no logs found"));

    std::fs::write(d.join("empty/broken.jsonl"), "{not json\n").unwrap();
    assert_eq!(boardball(&["analyze", "empty"], d).status.code(), Some(2));

    let o = boardball(&["report", "empty"], d);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("trials.csv"));
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(boardball(&["simulate", "--bogus"], tmp.path()).status.code(), Some(1));
    assert_eq!(boardball(&["simulate", "--conditions", "sideways"], tmp.path()).status.code(), Some(1));
    assert_eq!(boardball(&[], tmp.path()).status.code(), Some(1));
    assert_eq!(boardball(&["--help"], tmp.path()).status.code(), Some(0));
}

#[test]
fn shipped_configs_match_defaults() {
    use boardball_core::agents::{AgentConfig, AgentPair};
    use boardball_core::SimParams;
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let pair = AgentPair::default();
    assert_eq!(AgentConfig::load(&root.join("agent_a.toml")).unwrap(), pair.a);
    assert_eq!(AgentConfig::load(&root.join("agent_b.toml")).unwrap(), pair.b);
    assert_eq!(SimParams::load(&root.join("params.toml")).unwrap(), SimParams::default());
}
