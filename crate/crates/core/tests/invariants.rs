//! Randomized invariants over short runs.

use commitsim::metrics::emit_csv;
use commitsim::{run_experiment, run_once, Protocol, SimConfig, Simulation};
use proptest::prelude::*;

fn protocol() -> impl Strategy<Value = Protocol> {
    prop::sample::select(Protocol::ALL.to_vec())
}

fn small_cfg(protocol: Protocol, mpl: usize, failure_prob: f64, txns: usize) -> SimConfig {
    SimConfig { protocol, mpl, failure_prob, total_txns: txns, ..SimConfig::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn locks_and_admission_stay_consistent(p in protocol(), mpl in 1usize..9, fp in 0.0f64..0.08, seed in any::<u64>()) {
        let cfg = small_cfg(p, mpl, fp, 60);
        let mut sim = Simulation::with_seed(&cfg, seed).unwrap();
        while sim.step().unwrap() {
            if let Err(e) = sim.check_invariants() {
                prop_assert!(false, "t={} {}", sim.now(), e);
            }
        }
    }

    #[test]
    fn every_request_is_committed_or_aborted(p in protocol(), mpl in 1usize..9, fp in 0.0f64..0.08, seed in any::<u64>()) {
        let out = run_once(&small_cfg(p, mpl, fp, 80), seed).unwrap();
        prop_assert_eq!(out.metrics.committed_txns + out.metrics.aborted_txns, 80.0);
        let pct = out.metrics.commit_pct + out.metrics.abort_pct;
        prop_assert!((pct - 100.0).abs() < 1e-9);
        for r in out.records.iter().filter(|r| !r.superseded) {
            prop_assert!(r.decision.is_some() || r.conflict.is_some(), "{} left undecided", r.txn);
        }
    }

    #[test]
    fn same_seed_same_run(p in protocol(), fp in 0.0f64..0.05, seed in any::<u64>()) {
        let cfg = small_cfg(p, 4, fp, 60);
        let a = run_once(&cfg, seed).unwrap();
        let b = run_once(&cfg, seed).unwrap();
        prop_assert_eq!(a.events_processed, b.events_processed);
        prop_assert_eq!(a.final_time, b.final_time);
        prop_assert_eq!(a.metrics, b.metrics);
    }

    #[test]
    fn no_failures_no_blocking(p in protocol(), mpl in 1usize..9, seed in any::<u64>()) {
        let out = run_once(&small_cfg(p, mpl, 0.0, 80), seed).unwrap();
        prop_assert_eq!(out.metrics.blocking_frequency, 0.0);
        prop_assert_eq!(out.metrics.atomicity_violations, 0.0);
        prop_assert_eq!(out.counters.crashes, 0);
        prop_assert!(out.safety_events.is_empty());
    }

    #[test]
    fn classic_protocols_never_violate_atomicity(two_phase in any::<bool>(), fp in 0.0f64..0.10, seed in any::<u64>()) {
        let p = if two_phase { Protocol::TwoPhase } else { Protocol::PresumedCommit };
        let out = run_once(&small_cfg(p, 6, fp, 120), seed).unwrap();
        prop_assert!(out.violations.is_empty(), "{:?}", out.violations.first().map(|v| v.txn));
        prop_assert!(out.safety_events.is_empty(), "{:?}", out.safety_events);
    }
}

#[test]
fn experiment_csv_is_reproducible() {
    let cfg = SimConfig { protocol: Protocol::ShortCommit, total_txns: 150, trials: 2, failure_prob: 0.02, ..SimConfig::default() };
    let a = emit_csv(&[run_experiment(&cfg).unwrap().row()]);
    let b = emit_csv(&[run_experiment(&cfg).unwrap().row()]);
    assert_eq!(a, b);
}
