use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn dkglab(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dkglab"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env("DKGLAB_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn run_dir(out: &Path, command: &str, label: &str) -> PathBuf {
    out.join(command).join(label)
}

#[test]
fn verify_algebra_passes_and_detects_a_bad_beta() {
    let tmp = tempfile::tempdir().unwrap();
    let ok = dkglab(tmp.path(), &["--label", "ok", "verify-algebra", "--samples", "20000"]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));
    let bad = dkglab(tmp.path(), &["--label", "bad", "verify-algebra", "--rep", "beta=I"]);
    assert_eq!(code(&bad), 1);
    let stdout = String::from_utf8_lossy(&bad.stdout);
    assert!(stdout.contains("first failing identity"), "{stdout}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir(tmp.path(), "verify-algebra", "bad").join("algebra.json")).unwrap())
            .unwrap();
    assert_eq!(report["clifford"]["pass"], false);
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&dkglab(tmp.path(), &["region", "s=0", "r=1/2", "colour=red"])), 2);
    assert_eq!(code(&dkglab(tmp.path(), &["region", "s=0"])), 2);
    assert_eq!(code(&dkglab(tmp.path(), &["sharpness", "family=R9"])), 2);
    assert_eq!(code(&dkglab(tmp.path(), &["no-such-command"])), 2);
    assert_eq!(code(&dkglab(tmp.path(), &["solve", "n=notanumber"])), 2);
}

#[test]
fn region_verdicts_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dkglab(tmp.path(), &["--label", "in", "region", "s=0", "r=1/2"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("is inside"));
    let o = dkglab(tmp.path(), &["--label", "out", "region", "s=-0.2", "r=0.3"]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("is outside"));
    let m = dkglab::report::Manifest::from_json(
        &std::fs::read_to_string(run_dir(tmp.path(), "region", "in").join("manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(m.command, "region");
    assert_eq!(m.params["r"], "1/2");
    assert_eq!(m.seed, 1);
}

#[test]
fn config_file_with_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("region.cfg");
    std::fs::write(&cfg, "s = 1/2\nr = 0.1\n").unwrap();
    let o = dkglab(tmp.path(), &["--config", cfg.to_str().unwrap(), "--label", "c", "region", "r=1"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("(0.5, 1) is inside"));
}

#[test]
fn sharpness_csv_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    for label in ["a", "b"] {
        let o = dkglab(tmp.path(), &["--label", label, "sharpness", "family=R1,S", "s=0", "r=1/2", "L=8,16,32"]);
        assert!(code(&o) <= 1, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = std::fs::read(run_dir(tmp.path(), "sharpness", "a").join("scaling.csv")).unwrap();
    let b = std::fs::read(run_dir(tmp.path(), "sharpness", "b").join("scaling.csv")).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("family,s,r,L,lhs,rhs,ratio,fitted_slope,predicted_slope,pass\n"));
    assert_eq!(text.lines().count(), 1 + 2 * 3);
}

#[test]
fn sharpness_exits_zero_on_a_matching_slope() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&dkglab(tmp.path(), &["sharpness", "family=R1", "s=0", "r=3/4", "L=8,16,32,64"])), 0);
}

#[test]
fn solve_writes_trajectory_and_snapshot() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dkglab(tmp.path(), &["--label", "s", "solve", "n=64", "box=36", "dt=0.02", "T=0.2", "record_every=2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let dir = run_dir(tmp.path(), "solve", "s");
    let csv = std::fs::read_to_string(dir.join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("time,charge,psi_hs,phi_hr\n"));
    assert_eq!(csv.lines().count(), 1 + 6);
    let snap = dkglab::report::read_snapshot(&mut std::fs::File::open(dir.join("final.dkgs")).unwrap()).unwrap();
    assert!((snap.time - 0.2).abs() < 1e-12);
    assert_eq!(snap.phi.grid().n(), 64);
}

#[test]
fn blow_up_is_a_numerical_abort() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dkglab(tmp.path(), &["solve", "amp=1e3", "dt=0.2", "T=20", "n=32"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    // The manifest is written before the computation starts.
    let runs: Vec<_> = std::fs::read_dir(tmp.path().join("solve")).unwrap().collect();
    assert_eq!(runs.len(), 1);
    assert!(runs[0].as_ref().unwrap().path().join("manifest.json").exists());
}

#[test]
fn picard_and_hh_scan_run() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dkglab(tmp.path(), &["--label", "p", "picard", "depth=3", "n=32", "T=0.1", "dt=0.01"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let csv = std::fs::read_to_string(run_dir(tmp.path(), "picard", "p").join("picard.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let o = dkglab(tmp.path(), &["--label", "h", "hh-scan", "lambdas=4,8,16", "sign=same"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let o = dkglab(tmp.path(), &["--label", "z", "zheng", "ns=32,64", "sigmas=0.5"]);
    assert!(code(&o) <= 1);
    let csv = std::fs::read_to_string(run_dir(tmp.path(), "zheng", "z").join("zheng.csv")).unwrap();
    assert!(csv.starts_with("sigma,n,norm,relative_change\n"));
}

#[test]
fn strichartz_kinds() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dkglab(tmp.path(), &["--label", "b", "strichartz", "n=64", "box=16", "lambdas=1,2"]);
    assert!(code(&o) <= 1, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(run_dir(tmp.path(), "strichartz", "b").join("strichartz.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let o = dkglab(tmp.path(), &["--label", "q", "strichartz", "kind=square", "lambda=8", "mus=4,8", "n=96"]);
    assert!(code(&o) <= 1, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(run_dir(tmp.path(), "strichartz", "q").join("square_strichartz.csv")).unwrap();
    assert!(csv.starts_with("mu,q,lhs,rhs,ratio\n"));
    assert_eq!(code(&dkglab(tmp.path(), &["strichartz", "kind=round"])), 2);
}
