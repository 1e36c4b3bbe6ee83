//! Qualitative trend checks over sweep rows, reported next to the CSV.

use serde::{Deserialize, Serialize};

use crate::metrics::{ReportRow, RunMetrics};
use crate::protocol::Protocol;

/// Reference commit times (ms) at MPL 4, p = 0.005, with a ±30% band.
pub const REFERENCE_COMMIT_TIME_MS: [(Protocol, f64); 3] =
    [(Protocol::TwoPhase, 306.2), (Protocol::PresumedCommit, 259.0), (Protocol::ShortCommit, 238.0)];
pub const COMMIT_TIME_BAND: f64 = 0.30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl TrendCheck {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        TrendCheck { name: name.to_string(), pass, detail }
    }

    pub fn line(&self) -> String {
        format!("[{}] {}: {}", if self.pass { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

fn series(rows: &[ReportRow], p: Protocol) -> Vec<&ReportRow> {
    rows.iter().filter(|r| r.protocol == p).collect()
}

fn at(rows: &[ReportRow], p: Protocol, pick: impl Fn(&ReportRow) -> bool) -> Option<&RunMetrics> {
    rows.iter().find(|r| r.protocol == p && pick(r)).map(|r| &r.metrics)
}

/// Commit-percentage ordering at one configuration point.
pub fn commit_ordering(short: &RunMetrics, prc: &RunMetrics, twopc: &RunMetrics) -> TrendCheck {
    let (s, p, t) = (short.commit_pct, prc.commit_pct, twopc.commit_pct);
    let pass = s > p && p >= t - 1.0 && s - t >= 5.0;
    TrendCheck::new(
        "commit% ordering short > prc >= 2pc-1, short-2pc >= 5pp",
        pass,
        format!("short {s:.2}%, prc {p:.2}%, 2pc {t:.2}% (gap {:.2} pp)", s - t),
    )
}

/// Commit-time ordering and the ±30% band around the reference values.
pub fn latency_ordering(short: &RunMetrics, prc: &RunMetrics, twopc: &RunMetrics) -> TrendCheck {
    let (s, p, t) = (short.avg_commit_time_ms, prc.avg_commit_time_ms, twopc.avg_commit_time_ms);
    let ordered = t > p && p > s;
    let banded = [(t, Protocol::TwoPhase), (p, Protocol::PresumedCommit), (s, Protocol::ShortCommit)].iter().all(|&(v, proto)| {
        let reference = REFERENCE_COMMIT_TIME_MS.iter().find(|(q, _)| *q == proto).expect("reference").1;
        (v - reference).abs() <= COMMIT_TIME_BAND * reference
    });
    TrendCheck::new(
        "commit time 2pc > prc > short, each within 30% of reference",
        ordered && banded,
        format!("2pc {t:.1} ms, prc {p:.1} ms, short {s:.1} ms (ordered: {ordered}, in band: {banded})"),
    )
}

/// Checks that need the MPL sweep (p = 0.005, MPL 4..8).
pub fn mpl_trends(rows: &[ReportRow]) -> Vec<TrendCheck> {
    let mut out = Vec::new();
    for p in Protocol::ALL {
        let s = series(rows, p);
        if s.len() < 2 {
            continue;
        }
        let mpl: Vec<f64> = s.iter().map(|r| r.metrics.mpl_conflicts).collect();
        let non_increasing = mpl.windows(2).all(|w| w[1] <= w[0]);
        let (first, last) = (mpl[0], mpl[mpl.len() - 1]);
        let drop = if first > 0.0 { 1.0 - last / first } else { 0.0 };
        out.push(TrendCheck::new(
            &format!("{p}: MPL conflicts non-increasing, -90% overall"),
            non_increasing && drop >= 0.9,
            format!("{mpl:?} (drop {:.1}%)", drop * 100.0),
        ));
        let (pc_lo, pc_hi) = (s[0].metrics.page_conflicts, s[s.len() - 1].metrics.page_conflicts);
        out.push(TrendCheck::new(
            &format!("{p}: page conflicts at top MPL exceed lowest MPL"),
            pc_hi > pc_lo,
            format!("{pc_lo} -> {pc_hi}"),
        ));
    }
    let lowest = rows.iter().map(|r| r.mpl).min();
    if let Some(m) = lowest {
        let pick = |r: &ReportRow| r.mpl == m;
        if let (Some(s), Some(p), Some(t)) =
            (at(rows, Protocol::ShortCommit, pick), at(rows, Protocol::PresumedCommit, pick), at(rows, Protocol::TwoPhase, pick))
        {
            out.push(commit_ordering(s, p, t));
            out.push(latency_ordering(s, p, t));
        }
    }
    out
}

/// Checks that need the failure sweep (p in 0..0.05).
pub fn failure_trends(rows: &[ReportRow]) -> Vec<TrendCheck> {
    let mut out = Vec::new();
    let positive: Vec<f64> = {
        let mut ps: Vec<f64> = rows.iter().map(|r| r.failure_prob).filter(|&p| p > 0.0).collect();
        ps.sort_by(f64::total_cmp);
        ps.dedup();
        ps
    };
    let mut blocking_ok = true;
    let mut detail = Vec::new();
    for &fp in &positive {
        let pick = |r: &ReportRow| r.failure_prob == fp;
        if let (Some(s), Some(t)) = (at(rows, Protocol::ShortCommit, pick), at(rows, Protocol::TwoPhase, pick)) {
            blocking_ok &= s.blocking_frequency < 0.1 * t.blocking_frequency;
            detail.push(format!("p={fp}: {} vs {}", s.blocking_frequency, t.blocking_frequency));
        }
    }
    out.push(TrendCheck::new("short blocking < 10% of 2pc for p > 0", blocking_ok && !detail.is_empty(), detail.join(", ")));

    let twopc = series(rows, Protocol::TwoPhase);
    if let (Some(lo), Some(hi)) = (twopc.first(), twopc.last()) {
        let fall = lo.metrics.commit_pct - hi.metrics.commit_pct;
        out.push(TrendCheck::new(
            "2pc commit% falls >= 8 pp across the sweep",
            fall >= 8.0,
            format!("{:.2}% -> {:.2}% ({fall:.2} pp)", lo.metrics.commit_pct, hi.metrics.commit_pct),
        ));
    }
    let short: Vec<f64> = series(rows, Protocol::ShortCommit).iter().map(|r| r.metrics.commit_pct).collect();
    if !short.is_empty() {
        let spread = short.iter().cloned().fold(f64::MIN, f64::max) - short.iter().cloned().fold(f64::MAX, f64::min);
        out.push(TrendCheck::new(
            "short commit% varies < 2 pp across the sweep",
            spread < 2.0,
            format!("{short:.2?} (spread {spread:.2} pp)"),
        ));
    }
    let classic_violations: f64 = rows.iter().filter(|r| r.protocol != Protocol::ShortCommit).map(|r| r.metrics.atomicity_violations).sum();
    out.push(TrendCheck::new(
        "2pc and prc atomicity violations are zero",
        classic_violations == 0.0,
        format!("{classic_violations} total"),
    ));
    if let Some(zero) = rows
        .iter()
        .filter(|r| r.failure_prob == 0.0)
        .map(|r| r.metrics.blocking_frequency + r.metrics.atomicity_violations)
        .reduce(f64::max)
    {
        out.push(TrendCheck::new("no blocking or violations at p = 0", zero == 0.0, format!("max {zero}")));
    }
    out
}
