//! Per-run metric vector, per-transaction evidence records and the
//! atomicity checker.
//!
//! Metric semantics:
//! - `avg_commit_time_ms`: mean over committed transactions of the first
//!   instant a decision maker reached a durable commit decision (coordinator
//!   commit record forced, PrC coordinator decision, or Short-Commit
//!   mediator decision), measured from the attempt's start.
//! - `avg_abort_time_ms`: the same for aborted transactions.
//! - `uncertain_*_time_ms`: mean over transactions of the mean over their
//!   participants of (decision learned - prepared vote logged).
//! - `blocking_frequency`: transactions in which a prepared participant's
//!   decision wait expired while every decision source for it had failed
//!   since the commit phase began.
//! - `null_txn_restarts`: transactions restarted from scratch because a role
//!   site crashed before voting; `null_commit` / `null_abort` are the
//!   outcomes of those restarted attempts.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::engine::VirtualTime;
use crate::protocol::{FailReason, Outcome, ParticipantPhase, Protocol, TxnId};
use crate::site::SiteId;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub committed_txns: f64,
    pub avg_commit_time_ms: f64,
    pub uncertain_commit_time_ms: f64,
    pub aborted_txns: f64,
    pub avg_abort_time_ms: f64,
    pub uncertain_abort_time_ms: f64,
    pub blocking_frequency: f64,
    pub coordinator_failures: f64,
    pub mediator_failures: f64,
    pub null_txn_restarts: f64,
    pub null_commit: f64,
    pub null_abort: f64,
    pub page_conflicts: f64,
    pub mpl_conflicts: f64,
    pub commit_pct: f64,
    pub abort_pct: f64,
    pub atomicity_violations: f64,
}

pub const METRIC_COLUMNS: [&str; 17] = [
    "committed_txns",
    "avg_commit_time_ms",
    "uncertain_commit_time_ms",
    "aborted_txns",
    "avg_abort_time_ms",
    "uncertain_abort_time_ms",
    "blocking_frequency",
    "coordinator_failures",
    "mediator_failures",
    "null_txn_restarts",
    "null_commit",
    "null_abort",
    "page_conflicts",
    "mpl_conflicts",
    "commit_pct",
    "abort_pct",
    "atomicity_violations",
];

impl RunMetrics {
    pub fn total(&self) -> f64 {
        self.committed_txns + self.aborted_txns
    }

    fn values(&self) -> [f64; 17] {
        [
            self.committed_txns,
            self.avg_commit_time_ms,
            self.uncertain_commit_time_ms,
            self.aborted_txns,
            self.avg_abort_time_ms,
            self.uncertain_abort_time_ms,
            self.blocking_frequency,
            self.coordinator_failures,
            self.mediator_failures,
            self.null_txn_restarts,
            self.null_commit,
            self.null_abort,
            self.page_conflicts,
            self.mpl_conflicts,
            self.commit_pct,
            self.abort_pct,
            self.atomicity_violations,
        ]
    }

    fn from_values(v: [f64; 17]) -> Self {
        RunMetrics {
            committed_txns: v[0],
            avg_commit_time_ms: v[1],
            uncertain_commit_time_ms: v[2],
            aborted_txns: v[3],
            avg_abort_time_ms: v[4],
            uncertain_abort_time_ms: v[5],
            blocking_frequency: v[6],
            coordinator_failures: v[7],
            mediator_failures: v[8],
            null_txn_restarts: v[9],
            null_commit: v[10],
            null_abort: v[11],
            page_conflicts: v[12],
            mpl_conflicts: v[13],
            commit_pct: v[14],
            abort_pct: v[15],
            atomicity_violations: v[16],
        }
    }

    /// Field-wise mean over trials. Percentages are recomputed from the
    /// averaged counts so they still sum to 100.
    pub fn mean(runs: &[RunMetrics]) -> RunMetrics {
        if runs.is_empty() {
            return RunMetrics::default();
        }
        let mut acc = [0.0; 17];
        for r in runs {
            for (a, v) in acc.iter_mut().zip(r.values()) {
                *a += v;
            }
        }
        let n = runs.len() as f64;
        let mut out = RunMetrics::from_values(acc.map(|a| a / n));
        out.set_percentages();
        out
    }

    pub fn set_percentages(&mut self) {
        let total = self.total();
        if total > 0.0 {
            self.commit_pct = 100.0 * self.committed_txns / total;
            self.abort_pct = 100.0 * self.aborted_txns / total;
        } else {
            self.commit_pct = 0.0;
            self.abort_pct = 0.0;
        }
    }
}

fn fmt_num(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:.2}")
    }
}

/// One CSV row: a protocol at one configuration point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub protocol: Protocol,
    pub seed: u64,
    pub mpl: usize,
    pub failure_prob: f64,
    pub metrics: RunMetrics,
}

pub fn csv_header() -> String {
    let mut h = String::from("protocol,seed,mpl,failure_prob");
    for c in METRIC_COLUMNS {
        h.push(',');
        h.push_str(c);
    }
    h
}

impl ReportRow {
    pub fn csv_line(&self) -> String {
        let mut line = format!("{},{},{},{}", self.protocol, self.seed, self.mpl, self.failure_prob);
        for v in self.metrics.values() {
            line.push(',');
            line.push_str(&fmt_num(v));
        }
        line
    }
}

pub fn emit_csv(rows: &[ReportRow]) -> String {
    let mut out = csv_header();
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

/// Human-readable table: one column per row, one line per metric.
pub fn emit_table(rows: &[ReportRow]) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<26}", "protocol");
    for r in rows {
        let _ = write!(out, "{:>12}", r.protocol.as_str());
    }
    out.push('\n');
    let _ = write!(out, "{:<26}", "mpl");
    for r in rows {
        let _ = write!(out, "{:>12}", r.mpl);
    }
    out.push('\n');
    let _ = write!(out, "{:<26}", "failure_prob");
    for r in rows {
        let _ = write!(out, "{:>12}", r.failure_prob);
    }
    out.push('\n');
    for (i, name) in METRIC_COLUMNS.iter().enumerate() {
        let _ = write!(out, "{name:<26}");
        for r in rows {
            let _ = write!(out, "{:>12}", fmt_num(r.metrics.values()[i]));
        }
        out.push('\n');
    }
    out
}

/// Participant-side evidence for one transaction attempt at one site.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteOutcome {
    pub site: SiteId,
    pub phase: Option<ParticipantPhase>,
    pub prepared_at: Option<VirtualTime>,
    /// First instant the participant learned (or took) a decision.
    pub decided_at: Option<VirtualTime>,
    /// Decision applied and locks released.
    pub applied_at: Option<VirtualTime>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForcedWrites {
    pub coordinator: u32,
    pub mediator: u32,
    pub participants: u32,
}

impl ForcedWrites {
    pub fn total(&self) -> u32 {
        self.coordinator + self.mediator + self.participants
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub at: VirtualTime,
    pub from: SiteId,
    pub to: SiteId,
    pub kind: String,
    pub delivered: bool,
}

/// Evidence store for one transaction attempt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TxnOutcomeRecord {
    pub txn: TxnId,
    /// Index of the client request this attempt serves.
    pub logical: usize,
    pub restarted: bool,
    pub coordinator: SiteId,
    pub mediator: Option<SiteId>,
    pub start: VirtualTime,
    pub commit_phase_start: Option<VirtualTime>,
    pub decision: Option<(Outcome, VirtualTime)>,
    pub conflict: Option<FailReason>,
    pub sites: Vec<SiteOutcome>,
    pub forced_writes: ForcedWrites,
    pub messages: BTreeMap<String, u32>,
    pub blocked: bool,
    /// Superseded by a restart; not counted toward outcomes.
    pub superseded: bool,
    /// Sites that applied one outcome and later the other (lost unforced
    /// commit record followed by an abort on recovery).
    pub reversed: Vec<SiteId>,
    pub trace: Option<Vec<TraceEntry>>,
}

#[allow(clippy::too_many_arguments)]
impl TxnOutcomeRecord {
    pub fn new(
        txn: TxnId,
        logical: usize,
        restarted: bool,
        coordinator: SiteId,
        mediator: Option<SiteId>,
        cohorts: &[SiteId],
        start: VirtualTime,
        traced: bool,
    ) -> Self {
        TxnOutcomeRecord {
            txn,
            logical,
            restarted,
            coordinator,
            mediator,
            start,
            commit_phase_start: None,
            decision: None,
            conflict: None,
            sites: cohorts
                .iter()
                .map(|&site| SiteOutcome { site, phase: None, prepared_at: None, decided_at: None, applied_at: None })
                .collect(),
            forced_writes: ForcedWrites::default(),
            messages: BTreeMap::new(),
            blocked: false,
            superseded: false,
            reversed: Vec::new(),
            trace: traced.then(Vec::new),
        }
    }

    pub fn site_mut(&mut self, site: SiteId) -> Option<&mut SiteOutcome> {
        self.sites.iter_mut().find(|s| s.site == site)
    }

    pub fn message_count(&self, name: &str) -> u32 {
        self.messages.get(name).copied().unwrap_or(0)
    }

    /// Protocol messages only (execution traffic excluded).
    pub fn protocol_messages(&self) -> u32 {
        self.messages.iter().filter(|(k, _)| !matches!(k.as_str(), "Execute" | "WorkDone" | "WorkFailed")).map(|(_, v)| *v).sum()
    }

    /// Decision reached and every participant that was ever admitted has
    /// reached a terminal phase.
    pub fn is_complete(&self) -> bool {
        self.decision.is_some() && self.sites.iter().all(|s| s.phase.is_none_or(ParticipantPhase::is_terminal))
    }

    /// Time from the commit phase start until the last participant applied
    /// the decision.
    pub fn commit_phase_latency(&self) -> Option<VirtualTime> {
        let start = self.commit_phase_start?;
        let last = self.sites.iter().map(|s| s.applied_at).collect::<Option<Vec<_>>>()?;
        last.into_iter().max().map(|t| t - start)
    }

    /// Mean participant uncertain window, if any participant prepared.
    pub fn uncertain_time(&self) -> Option<f64> {
        let windows: Vec<f64> = self.sites.iter().filter_map(|s| Some((s.decided_at? - s.prepared_at?) as f64)).collect();
        (!windows.is_empty()).then(|| windows.iter().sum::<f64>() / windows.len() as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomicityViolation {
    pub txn: TxnId,
    pub committed: Vec<SiteId>,
    pub aborted: Vec<SiteId>,
    pub unilateral: Vec<SiteId>,
    pub trace: Vec<TraceEntry>,
}

/// A violation exists iff some site committed while another aborted
/// (unilaterally or not), or a site reversed an applied outcome.
pub fn check_atomicity(record: &TxnOutcomeRecord) -> Option<AtomicityViolation> {
    let of = |want: ParticipantPhase| -> Vec<SiteId> { record.sites.iter().filter(|s| s.phase == Some(want)).map(|s| s.site).collect() };
    let committed = of(ParticipantPhase::Committed);
    let aborted = of(ParticipantPhase::Aborted);
    let unilateral = of(ParticipantPhase::UnilaterallyAborted);
    let disagree = !committed.is_empty() && !(aborted.is_empty() && unilateral.is_empty());
    if !disagree && record.reversed.is_empty() {
        return None;
    }
    Some(AtomicityViolation { txn: record.txn, committed, aborted, unilateral, trace: record.trace.clone().unwrap_or_default() })
}

/// Crash and conflict counters gathered while a run executes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCounters {
    pub coordinator_failures: u64,
    pub mediator_failures: u64,
    pub crashes: u64,
    pub null_restarts: u64,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Fold the attempt records of one run into its metric vector. Each client
/// request is counted once, by its final attempt.
pub fn summarize(records: &[TxnOutcomeRecord], counters: &RunCounters) -> RunMetrics {
    let mut m = RunMetrics::default();
    let (mut commit_t, mut abort_t, mut unc_c, mut unc_a) = (vec![], vec![], vec![], vec![]);
    for r in records {
        if let Some(reason) = r.conflict {
            match reason {
                FailReason::PageConflict => m.page_conflicts += 1.0,
                FailReason::MplConflict => m.mpl_conflicts += 1.0,
            }
        }
        if r.blocked {
            m.blocking_frequency += 1.0;
        }
        if check_atomicity(r).is_some() {
            m.atomicity_violations += 1.0;
        }
        if r.superseded {
            continue;
        }
        let (outcome, at) = r.decision.unwrap_or((Outcome::Abort, r.start));
        let elapsed = (at - r.start) as f64;
        match outcome {
            Outcome::Commit => {
                m.committed_txns += 1.0;
                commit_t.push(elapsed);
                if let Some(u) = r.uncertain_time() {
                    unc_c.push(u);
                }
                if r.restarted {
                    m.null_commit += 1.0;
                }
            }
            Outcome::Abort => {
                m.aborted_txns += 1.0;
                abort_t.push(elapsed);
                if let Some(u) = r.uncertain_time() {
                    unc_a.push(u);
                }
                if r.restarted {
                    m.null_abort += 1.0;
                }
            }
        }
    }
    m.avg_commit_time_ms = mean(&commit_t);
    m.avg_abort_time_ms = mean(&abort_t);
    m.uncertain_commit_time_ms = mean(&unc_c);
    m.uncertain_abort_time_ms = mean(&unc_a);
    m.coordinator_failures = counters.coordinator_failures as f64;
    m.mediator_failures = counters.mediator_failures as f64;
    m.null_txn_restarts = counters.null_restarts as f64;
    m.set_percentages();
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(phases: &[ParticipantPhase]) -> TxnOutcomeRecord {
        let cohorts: Vec<SiteId> = (1..=phases.len()).map(SiteId).collect();
        let mut r = TxnOutcomeRecord::new(TxnId(1), 0, false, SiteId(0), None, &cohorts, 0, true);
        for (s, p) in r.sites.iter_mut().zip(phases) {
            s.phase = Some(*p);
        }
        r
    }

    #[test]
    fn atomicity_checker() {
        use ParticipantPhase::*;
        assert!(check_atomicity(&record(&[Committed; 4])).is_none());
        assert!(check_atomicity(&record(&[Aborted; 4])).is_none());
        let v = check_atomicity(&record(&[Committed, Committed, Committed, UnilaterallyAborted])).unwrap();
        assert_eq!(v.committed.len(), 3);
        assert_eq!(v.unilateral, vec![SiteId(4)]);
    }

    #[test]
    fn empty_run_emits_zero_row() {
        let m = summarize(&[], &RunCounters::default());
        assert_eq!(m, RunMetrics::default());
        let row = ReportRow { protocol: Protocol::TwoPhase, seed: 1, mpl: 4, failure_prob: 0.0, metrics: m };
        let line = row.csv_line();
        assert_eq!(line.split(',').count(), 4 + METRIC_COLUMNS.len());
        assert!(line.ends_with(",0,0,0"));
    }

    #[test]
    fn conflict_abort_counts_without_uncertain_window() {
        let mut r = record(&[ParticipantPhase::Aborted]);
        r.conflict = Some(FailReason::PageConflict);
        r.decision = Some((Outcome::Abort, 120));
        let m = summarize(&[r], &RunCounters::default());
        assert_eq!(m.aborted_txns, 1.0);
        assert_eq!(m.page_conflicts, 1.0);
        assert_eq!(m.uncertain_abort_time_ms, 0.0);
        assert_eq!(m.avg_abort_time_ms, 120.0);
        assert_eq!(m.abort_pct, 100.0);
    }

    #[test]
    fn mean_recomputes_percentages() {
        let mut a = RunMetrics { committed_txns: 3.0, aborted_txns: 1.0, ..Default::default() };
        a.set_percentages();
        let mut b = RunMetrics { committed_txns: 1.0, aborted_txns: 1.0, ..Default::default() };
        b.set_percentages();
        let m = RunMetrics::mean(&[a, b]);
        assert_eq!(m.committed_txns, 2.0);
        assert!((m.commit_pct + m.abort_pct - 100.0).abs() < 1e-9);
        assert!((m.commit_pct - 200.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn csv_has_fixed_header() {
        let h = csv_header();
        assert!(h.starts_with("protocol,seed,mpl,failure_prob,committed_txns,"));
        assert!(h.ends_with(",commit_pct,abort_pct,atomicity_violations"));
    }
}
