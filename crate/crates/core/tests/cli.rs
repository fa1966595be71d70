use std::fs;
use std::path::Path;
use std::process::Command;

use ptf_fedrec::cli::{parse_config, read_summary, run_config, run_preset};

const BIN: &str = env!("CARGO_BIN_EXE_ptf-fedrec");

fn overrides(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

fn tiny() -> Vec<(String, String)> {
    overrides(&[
        ("dataset", "planted(16,48,2)"),
        ("rounds", "2"),
        ("dim", "8"),
        ("alpha", "6"),
        ("seeds", "0,1"),
    ])
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn run_bundle_has_every_artifact_and_is_reproducible() {
    let cfg = parse_config(None, &tiny()).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let summary = run_config(&cfg, a.path()).unwrap();
    run_config(&cfg, b.path()).unwrap();

    for f in ["config.txt", "summary.json", "summary.csv", "per-seed.csv", "summary.txt"] {
        assert!(a.path().join(f).exists(), "{f}");
    }
    for s in [0, 1] {
        for f in [
            format!("report-seed{s}.json"),
            format!("metrics-seed{s}.csv"),
            format!("ledger-seed{s}.csv"),
            format!("server-seed{s}.ptfm"),
        ] {
            assert!(a.path().join("run").join(&f).exists(), "{f}");
        }
    }
    assert_eq!(read_tree(a.path()), read_tree(b.path()));

    let back = read_summary(a.path()).unwrap();
    assert_eq!(back.seeds, vec![0, 1]);
    assert_eq!(back.cells[0].metrics["recall"].values, summary.cells[0].metrics["recall"].values);
    let echoed = fs::read_to_string(a.path().join("config.txt")).unwrap();
    assert!(echoed.contains("rounds = 2"));
}

#[test]
fn comm_preset_writes_one_directory_per_cell() {
    let mut o = tiny();
    o.push(("seeds".into(), "0".into()));
    let cfg = parse_config(None, &o).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let summary = run_preset("comm", &cfg, dir.path()).unwrap();
    assert_eq!(summary.cells.len(), 2);
    assert!(dir.path().join("ptf/server-seed0.ptfm").exists());
    assert!(dir.path().join("fcf/ledger-seed0.csv").exists());
    assert!(!dir.path().join("fcf/server-seed0.ptfm").exists());
    let ptf = summary.cells[0].metrics["bytes_per_client_round"].mean;
    let fcf = summary.cells[1].metrics["bytes_per_client_round"].mean;
    assert!(fcf > ptf);
    assert!(summary.table.contains("fcf"));
}

#[test]
fn binary_runs_and_inspects() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("exp.conf");
    fs::write(&cfg_path, "# tiny world\ndataset = planted(16,48,2)\nrounds = 1\ndim = 8\nalpha = 6\n").unwrap();
    let out = dir.path().join("bundle");
    let run = Command::new(BIN)
        .args(["run", "--config"])
        .arg(&cfg_path)
        .args(["--seeds", "3", "--set", "client_epochs=1", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let echoed = fs::read_to_string(out.join("config.txt")).unwrap();
    assert!(echoed.contains("client_epochs = 1"));
    assert!(echoed.contains("seeds = 3"));

    let inspect = Command::new(BIN).arg("inspect").arg(&out).output().unwrap();
    assert!(inspect.status.success());
    assert!(String::from_utf8_lossy(&inspect.stdout).contains("recall"));

    let ckpt = Command::new(BIN).arg("inspect").arg(out.join("run/server-seed3.ptfm")).output().unwrap();
    assert!(ckpt.status.success());
    assert!(String::from_utf8_lossy(&ckpt.stdout).to_lowercase().contains("neumf"));
}

#[test]
fn binary_rejects_bad_input() {
    let bad = Command::new(BIN)
        .args(["run", "--dataset", "planted(8,16,2)", "--set", "mu=1.5"])
        .output()
        .unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("mu"));

    let unknown = Command::new(BIN).args(["preset", "table9", "--dataset", "planted(8,16,2)"]).output().unwrap();
    assert!(!unknown.status.success());
}
