use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn uaelab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uaelab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("UAELAB_THREADS")
        .output()
        .expect("spawn uaelab")
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Data rows of a CSV written by the CLI (config comment and header skipped).
fn rows(dir: &Path, name: &str) -> Vec<Vec<String>> {
    read(dir, name).lines().skip(2).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn assert_identical_reruns(args: &[&str], files: &[&str]) {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    assert!(uaelab(args, a.path()).status.success());
    assert!(uaelab(args, b.path()).status.success());
    for f in files {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f} differs between reruns");
    }
}

#[test]
fn uae_writes_scores_ranking_and_manifest() {
    let dir = TempDir::new().unwrap();
    let out = uaelab(&["uae"], dir.path());
    assert!(out.status.success());
    assert_eq!(rows(dir.path(), "uae.csv").len(), 42);
    let ranking = rows(dir.path(), "ranking.csv");
    let top_phi1 = ranking.iter().find(|r| r[0] == "phi1" && r[1] == "1").unwrap();
    assert_eq!(top_phi1[2], "GAL");
    assert!(read(dir.path(), "uae.csv").starts_with("# uaelab uae seed=42"));
    let manifest = read(dir.path(), "manifest.txt");
    assert!(manifest.contains("subcommand=uae"));
    assert!(manifest.contains("seed=42"));
    assert!(manifest.contains("uae.csv") && manifest.contains("ranking.csv"));
}

#[test]
fn deterministic_outputs_are_byte_identical() {
    assert_identical_reruns(&["uae"], &["uae.csv", "ranking.csv", "conflicts.csv"]);
    assert_identical_reruns(&["ablate"], &["ablation.csv"]);
    assert_identical_reruns(&["sensitivity"], &["sensitivity_phi3.csv"]);
    assert_identical_reruns(&["verify", "spectral", "--trials", "50"], &["verify_spectral.csv"]);
    assert_identical_reruns(
        &["train", "--blocks", "rb,crb", "--epochs", "2", "--seeds", "1", "--cascade", "2"],
        &["loss_rb_seed42.csv", "loss_crb_seed42.csv", "convergence.csv"],
    );
}

#[test]
fn single_module_corpus_is_accepted() {
    let dir = TempDir::new().unwrap();
    let corpus = dir.path().join("one.desc");
    fs::write(&corpus, "name = RB\nk = 1\nn = 73856\nl = 4\nf = 1\n").unwrap();
    let out = uaelab(&["uae", "--corpus", corpus.to_str().unwrap()], &dir.path().join("out"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(rows(&dir.path().join("out"), "uae.csv").len(), 6);
}

#[test]
fn ablate_only_restricts_the_subset() {
    let dir = TempDir::new().unwrap();
    assert!(uaelab(&["ablate", "--only", "alpha"], dir.path()).status.success());
    let rows = rows(dir.path(), "ablation.csv");
    assert_eq!(rows.len(), 7);
    assert!(rows.iter().all(|r| r[2] == "alpha"));
}

#[test]
fn standard_shapley_residual_is_negligible() {
    let dir = TempDir::new().unwrap();
    assert!(uaelab(&["sensitivity", "--forms", "phi1,phi5"], dir.path()).status.success());
    for form in ["phi1", "phi5"] {
        for r in rows(dir.path(), &format!("sensitivity_{form}.csv")) {
            let residual: f64 = r[7].parse().unwrap();
            assert!(residual.abs() < 1e-6, "{form} {}: {residual}", r[0]);
        }
    }
}

#[test]
fn verify_jacobian_single_case_passes() {
    let dir = TempDir::new().unwrap();
    let out = uaelab(&["verify", "jacobian", "--d", "4", "--l", "12", "--epsilon", "3"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = &rows(dir.path(), "verify_jacobian.csv")[0];
    assert_eq!(r[0], "20");
    assert_eq!(r[1], "20");
}

#[test]
fn epsilon_small_run_writes_heatmaps() {
    let dir = TempDir::new().unwrap();
    let out = uaelab(&["epsilon", "--l", "8", "--epsilon", "1", "--epochs", "2", "--seeds", "1", "--cascade", "2"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = &rows(dir.path(), "epsilon.csv")[0];
    assert_eq!((r[0].as_str(), r[1].as_str(), r[2].as_str()), ("8", "1", "true"));
    let heat = rows(dir.path(), "heatmap_l8_eps1_seed42.csv");
    assert_eq!(heat.len(), 2 * 2);
}

#[test]
fn train_small_run_writes_metrics() {
    let dir = TempDir::new().unwrap();
    let out = uaelab(&["train", "--blocks", "rb,dcrb", "--epochs", "2", "--seeds", "2", "--cascade", "2"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(rows(dir.path(), "convergence.csv").len(), 4);
    let metrics = rows(dir.path(), "metrics.csv");
    assert_eq!(metrics.len(), 2);
    assert_eq!(metrics[1][3], "1280");
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let code = |args: &[&str]| uaelab(args, dir.path()).status.code();
    assert_eq!(code(&["uae", "--forms", "phi7"]), Some(1));
    assert_eq!(code(&["verify", "spectral", "--trials", "0"]), Some(1));
    assert_eq!(code(&["train", "--blocks", "nope"]), Some(1));
    assert_eq!(code(&["epsilon", "--epochs", "0"]), Some(1));
    assert_eq!(code(&["frobnicate"]), Some(1));
    let help = Command::new(env!("CARGO_BIN_EXE_uaelab")).arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(0));
}

#[test]
fn empty_form_list_prints_usage() {
    let dir = TempDir::new().unwrap();
    let out = uaelab(&["uae", "--forms", ""], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage: uaelab uae"));
}

#[test]
fn thread_count_from_environment() {
    let dir = TempDir::new().unwrap();
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_uaelab"))
            .args(["verify", "spectral", "--trials", "20", "--out"])
            .arg(dir.path())
            .env("UAELAB_THREADS", threads)
            .output()
            .unwrap()
            .status
            .code()
    };
    assert_eq!(run("2"), Some(0));
    assert_eq!(run("zero"), Some(1));
    assert_eq!(run("0"), Some(1));
}
