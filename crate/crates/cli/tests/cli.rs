use std::path::Path;
use std::process::{Command, Output};

fn spde(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spde")).args(args).env_remove("SPDE_SEED").output().expect("run spde")
}

fn small_additive(out: &Path) -> Vec<String> {
    ["additive-convergence", "--beta", "1", "--modes", "4", "--ladder", "2..4", "--fine-exponent", "6", "--samples", "3", "--seed", "5", "--out"]
        .iter()
        .map(|s| s.to_string())
        .chain([out.display().to_string()])
        .collect()
}

fn args(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

#[test]
fn help_exits_zero() {
    let o = spde(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("additive-convergence"));
    assert_eq!(spde(&["lemma-lab", "--help"]).status.code(), Some(0));
}

#[test]
fn missing_required_flag_exits_two_with_usage() {
    let o = spde(&["additive-convergence", "--samples", "2"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("--beta"), "{err}");
    assert!(err.contains("Usage"), "{err}");
    assert_eq!(spde(&["ou-check", "--mode-i", "1"]).status.code(), Some(2));
}

#[test]
fn bad_values_exit_two() {
    assert_eq!(spde(&["additive-convergence", "--beta", "-1"]).status.code(), Some(2));
    assert_eq!(spde(&["additive-convergence", "--beta", "abc"]).status.code(), Some(2));
    assert_eq!(spde(&["lemma-lab", "--lemma", "5"]).status.code(), Some(2));
    assert_eq!(spde(&["--jobs", "0", "lemma-lab", "--lemma", "9"]).status.code(), Some(2));
    assert_eq!(spde(&["unknown-subcommand"]).status.code(), Some(2));
}

#[test]
fn config_file_precedence_and_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# small run\nbeta = 1.5\nsamples = 2\nmodes = 4\nladder = 2,3\nfine_exponent = 5\n").unwrap();
    let out = dir.path().join("out");
    let o = spde(&["--config", cfg.to_str().unwrap(), "additive-convergence", "--beta", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("additive_2_2.csv").exists());
    let csv = std::fs::read_to_string(out.join("additive_2_2.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);

    std::fs::write(&cfg, "beta = 1\ncolour = blue\n").unwrap();
    let o = spde(&["--config", cfg.to_str().unwrap(), "additive-convergence"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let mut a = small_additive(dir.path());
    let at = a.iter().position(|s| s == "--seed").unwrap();
    a.drain(at..at + 2);
    let o = Command::new(env!("CARGO_BIN_EXE_spde")).args(args(&a)).env("SPDE_SEED", "99").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let json = std::fs::read_to_string(dir.path().join("additive_1_3.json")).unwrap();
    assert!(json.contains("\"seed\": 99"), "{json}");
}

#[test]
fn identical_argv_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = small_additive(dir.path());
    let first = spde(&args(&a));
    assert_eq!(first.status.code(), Some(0));
    let csv1 = std::fs::read(dir.path().join("additive_1_3.csv")).unwrap();
    let json1 = std::fs::read(dir.path().join("additive_1_3.json")).unwrap();
    let second = spde(&args(&a));
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(csv1, std::fs::read(dir.path().join("additive_1_3.csv")).unwrap());
    assert_eq!(json1, std::fs::read(dir.path().join("additive_1_3.json")).unwrap());
}

#[test]
fn thread_count_does_not_change_results() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let mut a1 = vec!["--jobs".to_string(), "1".into()];
    a1.extend(small_additive(d1.path()));
    let mut a2 = vec!["--jobs".to_string(), "3".into()];
    a2.extend(small_additive(d2.path()));
    assert_eq!(spde(&args(&a1)).status.code(), Some(0));
    assert_eq!(spde(&args(&a2)).status.code(), Some(0));
    assert_eq!(
        std::fs::read(d1.path().join("additive_1_3.csv")).unwrap(),
        std::fs::read(d2.path().join("additive_1_3.csv")).unwrap()
    );
}

#[test]
fn lemma_nine_table() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("l9.csv");
    let o = spde(&["lemma-lab", "--lemma", "9", "--dim", "1", "--out", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("convolution"), "{text}");
    let rows = std::fs::read_to_string(&csv).unwrap();
    // 8 time steps x 3 advections x 2 exponent pairs
    assert_eq!(rows.lines().count(), 1 + 8 * 3 * 2);
}

#[test]
fn ou_check_passes() {
    let o = spde(&["ou-check", "--mode-i", "1", "--mode-j", "2", "--samples", "2000", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("relative diff"));
}

#[test]
fn multiplicative_small_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = spde(&[
        "multiplicative-convergence", "--beta", "2", "--cells", "4", "--ladder", "2,3", "--fine-exponent", "5",
        "--samples", "2", "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("reference check"));
    assert!(dir.path().join("multiplicative_2_2.json").exists());
}
