use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rfactor"))
}

fn spec(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../specs").join(name)
}

fn run(args: &[&str], spec_file: &Path, out: &Path) -> Output {
    bin()
        .args(args)
        .arg("--spec")
        .arg(spec_file)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = bin().arg("bogus").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn malformed_spec_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[jump]\n[[jump.continuous]]\nweight = 0.4\nfamily = \"exponential\"\nrate = 1.0\n").unwrap();
    let out = run(&["factor"], &bad, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("total mass"));
}

#[test]
fn certify_passes_and_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["certify", "--seed", "7", "--reps", "2000"], &spec("exp1.toml"), dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "certify");
    assert_eq!(manifest["options"]["seed"], 7);
    assert_eq!(manifest["spec_sha256"].as_str().unwrap().len(), 64);
    assert!(dir.path().join("report.txt").exists());
}

#[test]
fn failed_verification_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let out = run(&["simulate", "--seed", "1", "--window", "0:20000"], &spec("gamma2.toml"), &sim);
    assert_eq!(out.status.code(), Some(0));
    let out = bin()
        .args(["verify", "--spec"])
        .arg(spec("exp1.toml"))
        .arg("--input")
        .arg(sim.join("pattern-00000.csv"))
        .arg("--out")
        .arg(dir.path().join("ver"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let args = ["factor", "--seed", "11", "--reps", "16", "--window", "0:30", "--query", "5"];
    assert_eq!(run(&args, &spec("exp1.toml"), &a).status.code(), Some(0));
    let out = bin()
        .args(args)
        .arg("--spec")
        .arg(spec("exp1.toml"))
        .arg("--out")
        .arg(&b)
        .env("RF_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(files(&a), files(&b));
}

#[test]
fn json_format_writes_pattern_arrays() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["simulate", "--seed", "2", "--reps", "3", "--window", "0:10", "--format", "json"],
        &spec("alternating.toml"),
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let patterns: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("pattern.json")).unwrap()).unwrap();
    assert_eq!(patterns.as_array().unwrap().len(), 3);
}

#[test]
fn window_flag_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["simulate", "--window", "5:1"], &spec("exp1.toml"), dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn every_subcommand_runs_on_the_bundled_specs() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [(&str, &str, &[&str]); 7] = [
        ("simulate", "brownian.toml", &["--window", "0:2"]),
        ("factor", "exp1.toml", &["--reps", "2"]),
        ("select", "selection.toml", &[]),
        ("regularize", "gamma2.toml", &["--reps", "4", "--window", "0:5000"]),
        ("regularize", "atom_mix.toml", &["--reps", "2000"]),
        ("mark", "gamma2.toml", &["--reps", "3"]),
        ("verify", "exp1.toml", &["--reps", "500"]),
    ];
    for (i, (cmd, file, extra)) in cases.iter().enumerate() {
        let mut args = vec![*cmd, "--seed", "5"];
        args.extend_from_slice(extra);
        let out = run(&args, &spec(file), &dir.path().join(i.to_string()));
        assert_eq!(out.status.code(), Some(0), "{cmd} {file}: {}", String::from_utf8_lossy(&out.stderr));
    }
}
