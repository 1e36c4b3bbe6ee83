use std::fs;
use std::process::{Command, Output};

fn commitsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_commitsim")).args(args).output().expect("spawn commitsim")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == name).unwrap_or_else(|| panic!("no column {name}"));
    lines.map(|l| l.split(',').nth(idx).unwrap().to_string()).collect()
}

#[test]
fn single_run_writes_header_and_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.csv");
    let o = commitsim(&["--protocol", "prc", "--txns", "300", "--trials", "1", "--out", out.to_str().unwrap(), "-q"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.starts_with("protocol,seed,mpl,failure_prob,committed_txns,"));
    assert!(csv.lines().next().unwrap().ends_with(",atomicity_violations"));
    assert_eq!(column(&csv, "protocol"), ["prc"]);
    assert!(stdout(&o).is_empty());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.cfg");
    fs::write(&cfg, "# small run\nprotocol = short\nmpl = 7\ntotal_txns = 200\ntrials = 1\nfailure_prob = 0.01\n").unwrap();
    let o = commitsim(&["--config", cfg.to_str().unwrap(), "--mpl", "5", "--out", "-"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = stdout(&o);
    assert_eq!(column(&csv, "mpl"), ["5"]);
    assert_eq!(column(&csv, "protocol"), ["short"]);
    assert_eq!(column(&csv, "failure_prob"), ["0.01"]);
}

#[test]
fn set_reaches_any_key() {
    let o = commitsim(&["--txns", "100", "--trials", "1", "--set", "mpl=2", "--out", "-"]);
    assert!(o.status.success());
    assert_eq!(column(&stdout(&o), "mpl"), ["2"]);
}

#[test]
fn unknown_config_key_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "mpl = 4\nnot_a_key = 1\n").unwrap();
    let o = commitsim(&["--config", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("not_a_key") && err.contains("line 2"), "{err}");
}

#[test]
fn invalid_values_fail() {
    for args in [&["--mpl", "0"][..], &["--failure-prob", "1.5"], &["--protocol", "3pc"], &["--set", "mpl"], &["--sweep", "size"]] {
        let o = commitsim(args);
        assert!(!o.status.success(), "{args:?} should fail");
        assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"), "{args:?}");
    }
}

#[test]
fn mpl_sweep_emits_fifteen_rows_and_trend_lines() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mpl.csv");
    let o = commitsim(&["--sweep", "mpl", "--txns", "150", "--trials", "1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out).unwrap();
    assert_eq!(csv.lines().count(), 16);
    assert_eq!(column(&csv, "mpl").iter().filter(|m| *m == "8").count(), 3);
    let text = stdout(&o);
    assert!(text.contains("[PASS]") || text.contains("[FAIL]"));
}

#[test]
fn failure_sweep_row_count() {
    let o = commitsim(&["--sweep", "failure", "--txns", "100", "--trials", "1", "--out", "-"]);
    assert!(o.status.success());
    let csv = stdout(&o);
    assert_eq!(csv.lines().count(), 19);
    assert!(column(&csv, "failure_prob").contains(&"0.05".to_string()));
}

#[test]
fn output_is_reproducible() {
    let args = ["--protocol", "short", "--failure-prob", "0.03", "--txns", "400", "--trials", "2", "--seed", "9", "--out", "-"];
    let a = commitsim(&args);
    let b = commitsim(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}
