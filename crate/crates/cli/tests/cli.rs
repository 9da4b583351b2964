//! End-to-end runs of the `holoquads` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scratch(name: &str) -> PathBuf {
    let d = Path::new(env!("CARGO_TARGET_TMPDIR")).join(format!("cli-{name}"));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let path = dir.join("run.toml");
    fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_holoquads"))
        .args(args)
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn build_reports_qubit_counts() {
    let dir = scratch("build");
    let o = run(&dir, "[model]\nh = 0.2\nt = [0, 6]\n", &["build"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.join("out/resources.csv")).unwrap();
    let qubits: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    // the herald ancilla reuses a freed wire, so the budget is unchanged
    assert_eq!(qubits, ["3", "9"]);
    assert!(dir.join("out/circuits/holo_t6.txt").exists());
    // 33 qubits: too large for the flat baseline
    assert!(!dir.join("out/circuits/flat_t0.txt").exists());
    let small = scratch("build-small");
    let o = run(&small, "[model]\nh = 0.2\nt = 1\ntwo_l = 8\n", &["build"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(small.join("out/circuits/flat_t1.txt").exists());
}

#[test]
fn missing_field_is_a_config_error() {
    let dir = scratch("missing");
    let o = run(&dir, "[model]\nt = 2\n", &["build"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`h`"), "{}", stderr(&o));
    let o = run(&dir, "[model]\nh = 0.2\nt = 2\nbogus = 1\n", &["build"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bogus"), "{}", stderr(&o));
}

#[test]
fn zero_shots_give_an_empty_stream_and_a_manifest() {
    let dir = scratch("zero");
    let o = run(&dir, "[model]\nh = 0.2\nt = 1\n[sampling]\nshots = 0\n", &["simulate"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let shots = fs::read_to_string(dir.join("out/shots_t1.txt")).unwrap();
    assert_eq!(shots.lines().count(), 1);
    let manifest: toml::Value = toml::from_str(&fs::read_to_string(dir.join("out/manifest.toml")).unwrap()).unwrap();
    assert_eq!(manifest["depth"][0]["shots"].as_integer(), Some(0));
    assert!(manifest["rng"].as_str().unwrap().contains("ChaCha8"));
}

#[test]
fn noiseless_run_discards_nothing_and_repeats_exactly() {
    let config = "[model]\nh = 0.2\nt = 2\n[sampling]\nshots = 200\n";
    let (a, b) = (scratch("repeat-a"), scratch("repeat-b"));
    for d in [&a, &b] {
        let o = run(d, config, &["simulate"]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).contains("discard_fraction = 0"));
    }
    let read = |d: &Path| fs::read(d.join("out/shots_t2.txt")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn estimate_refuses_shots_from_another_config() {
    let dir = scratch("mismatch");
    let o = run(&dir, "[model]\nh = 0.2\nt = 1\n[sampling]\nshots = 50\n", &["simulate"]);
    assert!(o.status.success());
    let o = run(&dir, "[model]\nh = 0.3\nt = 1\n[sampling]\nshots = 50\n", &["estimate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("different configuration"), "{}", stderr(&o));
}

#[test]
fn compare_across_mismatched_depths_fails() {
    let dir = scratch("depths");
    let o = run(&dir, "[model]\nh = 0.2\nt = [0, 1]\n[sampling]\nshots = 50\n", &["compare"]);
    assert!(o.status.success(), "{}", stderr(&o));
    // an oracle table for other depths in the same directory
    let o = run(&dir, "[model]\nh = 0.2\nt = [0, 2]\n[sampling]\nshots = 50\n", &["oracle"]);
    assert!(o.status.success());
    let o = Command::new(env!("CARGO_BIN_EXE_holoquads"))
        .args(["compare", "--config"])
        .arg(dir.join("run.toml"))
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("depth mismatch"), "{}", stderr(&o));
}

#[test]
fn compare_writes_plot_tables() {
    let dir = scratch("compare");
    let o = run(&dir, "[model]\nh = 0.2\nt = [1, 2]\n[sampling]\nshots = 300\n", &["compare"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.join("out");
    let cmp = fs::read_to_string(out.join("compare.csv")).unwrap();
    assert!(cmp.starts_with("r,t,c_expt,c_theory,stderr,epsilon\n"));
    assert!(!cmp.contains('\r'));
    let heat = fs::read_to_string(out.join("heatmap.csv")).unwrap();
    assert!(heat.lines().any(|l| l.ends_with(",theory") && l.split(',').nth(1).unwrap().starts_with('-')));
    assert!(heat.lines().any(|l| l.ends_with(",experiment")));
    let hist = fs::read_to_string(out.join("histogram.csv")).unwrap();
    let total: usize = hist.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(total, cmp.lines().count() - 1);
    assert!(stdout(&o).contains("mean"));
    let r = run(&dir, "[model]\nh = 0.2\nt = [1, 2]\n[sampling]\nshots = 300\n", &["report"]);
    assert!(r.status.success());
    assert!(stdout(&r).contains("# herald statistics"));
}

#[test]
fn shipped_config_parses() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/paper.toml");
    let cfg = holoquads_cli::config::RunConfig::load(&path).unwrap();
    let default = holoquads_cli::config::RunConfig::paper(holoquads_cli::config::Depths::Many((0..=6).collect()));
    assert_eq!(cfg.canonical_text(), default.canonical_text());
}
