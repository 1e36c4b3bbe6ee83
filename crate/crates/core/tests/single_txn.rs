//! Hand-derived oracles for one transaction on an idle system with default
//! device timings (5 ms CPU, 15 ms disk, 50 ms messages).

use commitsim::Outcome;
use commitsim::{ParticipantPhase, Protocol, ScriptedTxn, SimConfig, Simulation, SiteId, TxnOutcomeRecord};

fn cfg(protocol: Protocol) -> SimConfig {
    SimConfig { protocol, total_txns: 0, ..SimConfig::default() }
}

fn one_txn(protocol: Protocol) -> TxnOutcomeRecord {
    let txn = ScriptedTxn {
        at: 0,
        coordinator: SiteId(0),
        mediator: protocol.has_mediator().then_some(SiteId(5)),
        cohorts: vec![SiteId(1), SiteId(2), SiteId(3), SiteId(4)],
        pages: None,
    };
    let sim = Simulation::scripted(&cfg(protocol), vec![txn], &[]).unwrap().keep_traces(true);
    let out = sim.run().unwrap();
    assert_eq!(out.records.len(), 1);
    assert!(out.violations.is_empty());
    out.records.into_iter().next().unwrap()
}

#[test]
fn forced_write_counts() {
    let r = one_txn(Protocol::TwoPhase);
    assert_eq!((r.forced_writes.coordinator, r.forced_writes.participants), (1, 8));
    let r = one_txn(Protocol::PresumedCommit);
    assert_eq!((r.forced_writes.coordinator, r.forced_writes.participants), (1, 4));
    let r = one_txn(Protocol::ShortCommit);
    assert_eq!(r.forced_writes.mediator, 0);
    assert_eq!((r.forced_writes.coordinator, r.forced_writes.participants), (2, 8));
    assert_eq!(r.forced_writes.total(), 10);
}

#[test]
fn protocol_message_counts() {
    assert_eq!(one_txn(Protocol::TwoPhase).protocol_messages(), 16);
    assert_eq!(one_txn(Protocol::PresumedCommit).protocol_messages(), 12);
    let sc = one_txn(Protocol::ShortCommit);
    assert_eq!(sc.protocol_messages(), 29);
    assert_eq!(sc.message_count("Prepare"), 5);
    assert_eq!(sc.message_count("VoteCommit"), 8);
    assert_eq!(sc.message_count("CommitDecision"), 8);
    assert_eq!(sc.message_count("Ack"), 8);
    for p in Protocol::ALL {
        let r = one_txn(p);
        assert_eq!((r.message_count("Execute"), r.message_count("WorkDone")), (4, 4));
    }
}

#[test]
fn commit_phase_latency() {
    assert_eq!(one_txn(Protocol::TwoPhase).commit_phase_latency(), Some(195));
    assert_eq!(one_txn(Protocol::PresumedCommit).commit_phase_latency(), Some(180));
    assert_eq!(one_txn(Protocol::ShortCommit).commit_phase_latency(), Some(195));
}

#[test]
fn execution_ends_when_last_work_done_arrives() {
    for p in Protocol::ALL {
        assert_eq!(one_txn(p).commit_phase_start, Some(200), "{p}");
    }
}

#[test]
fn two_phase_uncertain_window_is_115ms() {
    let r = one_txn(Protocol::TwoPhase);
    assert_eq!(r.uncertain_time(), Some(115.0));
    for s in &r.sites {
        assert_eq!((s.prepared_at, s.decided_at), (Some(265), Some(380)));
    }
}

#[test]
fn decision_instants() {
    assert_eq!(one_txn(Protocol::TwoPhase).decision, Some((Outcome::Commit, 330)));
    assert_eq!(one_txn(Protocol::PresumedCommit).decision, Some((Outcome::Commit, 330)));
    // Mediator decides on the last vote; the coordinator's commit lands at 345.
    assert_eq!(one_txn(Protocol::ShortCommit).decision, Some((Outcome::Commit, 330)));
}

#[test]
fn everyone_commits() {
    for p in Protocol::ALL {
        let r = one_txn(p);
        assert!(r.sites.iter().all(|s| s.phase == Some(ParticipantPhase::Committed)), "{p}");
        assert!(!r.blocked);
    }
}

#[test]
fn trace_orders_short_commit_messages() {
    let r = one_txn(Protocol::ShortCommit);
    let trace = r.trace.unwrap();
    let at = |kind: &str| trace.iter().filter(|e| e.kind == kind).map(|e| e.at).collect::<Vec<_>>();
    assert!(at("Execute").iter().all(|&t| t == 50));
    assert!(at("WorkDone").iter().all(|&t| t == 200));
    assert!(at("Prepare").iter().all(|&t| t == 265));
    assert!(at("VoteCommit").iter().all(|&t| t == 330));
    let decisions = at("CommitDecision");
    assert_eq!(decisions.iter().filter(|&&t| t == 380).count(), 4);
    assert_eq!(decisions.iter().filter(|&&t| t == 395).count(), 4);
    assert!(trace.iter().all(|e| e.delivered));
}
