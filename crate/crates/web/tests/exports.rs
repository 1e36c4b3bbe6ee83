use commitsim_browser::{experiment_json, single_txn_json, sweep_json};
use serde_json::Value;

#[test]
fn clean_transaction_commits_everywhere() {
    let v: Value = serde_json::from_str(&single_txn_json("2pc", "").unwrap()).unwrap();
    assert_eq!(v["forced_writes"], 9);
    assert_eq!(v["messages"], 16);
    let parts: Vec<&Value> = v["sites"].as_array().unwrap().iter().filter(|s| s["role"] == "participant").collect();
    assert_eq!(parts.len(), 4);
    assert!(parts.iter().all(|s| s["phase"] == "Committed"));
    assert!(v["violations"].as_array().unwrap().is_empty());
}

#[test]
fn hazard_schedule_shows_one_violation() {
    let crashes =
        r#"[{"site":1,"at":340,"downtime_ms":100},{"site":5,"at":385,"downtime_ms":1115},{"site":0,"at":390,"downtime_ms":1110}]"#;
    let v: Value = serde_json::from_str(&single_txn_json("short", crashes).unwrap()).unwrap();
    assert_eq!(v["violations"].as_array().unwrap().len(), 1);
    assert!(v["trace"].as_array().unwrap().iter().any(|e| e["kind"] == "Crash"));
    let v: Value = serde_json::from_str(&single_txn_json("prc", crashes).unwrap()).unwrap();
    assert!(v["violations"].as_array().unwrap().is_empty());
}

#[test]
fn bad_inputs_are_reported() {
    assert!(single_txn_json("3pc", "").is_err());
    assert!(single_txn_json("2pc", "not json").is_err());
    assert!(single_txn_json("2pc", r#"[{"site":9,"at":1,"downtime_ms":5}]"#).is_err());
    assert!(experiment_json("mpl = zero").is_err());
    assert!(sweep_json("size", 10, 1).is_err());
}

#[test]
fn experiment_and_sweep_round_trip() {
    let row: Value = serde_json::from_str(&experiment_json("protocol = prc\ntotal_txns = 200\ntrials = 1").unwrap()).unwrap();
    assert_eq!(row["protocol"], "prc");
    let committed = row["metrics"]["committed_txns"].as_f64().unwrap();
    let aborted = row["metrics"]["aborted_txns"].as_f64().unwrap();
    assert_eq!(committed + aborted, 200.0);
    let sw: Value = serde_json::from_str(&sweep_json("mpl", 100, 1).unwrap()).unwrap();
    assert_eq!(sw["rows"].as_array().unwrap().len(), 15);
    assert!(!sw["checks"].as_array().unwrap().is_empty());
}
