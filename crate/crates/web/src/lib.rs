//! Browser bindings. Each export takes plain strings or numbers and returns
//! a JSON document; the `*_json` functions hold the logic so they can be
//! exercised natively.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use commitsim::experiment::SweepAxis;
use commitsim::metrics::{AtomicityViolation, TraceEntry};
use commitsim::{
    failure_trends, mpl_trends, parse_config, run_experiment, sweep, ParticipantPhase, Protocol, ReportRow, SafetyEvent, ScriptedCrash,
    ScriptedTxn, SimConfig, Simulation, SiteId, TrendCheck,
};

/// A crash requested from the page: which site, when, for how long.
#[derive(Debug, Deserialize)]
pub struct CrashSpec {
    pub site: usize,
    pub at: u64,
    pub downtime_ms: u64,
}

#[derive(Debug, Serialize)]
pub struct SiteView {
    pub site: usize,
    pub role: &'static str,
    pub phase: Option<ParticipantPhase>,
    pub prepared_at: Option<u64>,
    pub decided_at: Option<u64>,
}

#[derive(Debug, Serialize)]
pub struct TxnView {
    pub protocol: Protocol,
    pub decision: Option<String>,
    pub sites: Vec<SiteView>,
    pub trace: Vec<TraceEntry>,
    pub violations: Vec<AtomicityViolation>,
    pub safety_events: Vec<SafetyEvent>,
    pub forced_writes: u32,
    pub messages: u32,
}

#[derive(Debug, Serialize)]
pub struct SweepView {
    pub rows: Vec<ReportRow>,
    pub checks: Vec<TrendCheck>,
}

fn protocol(name: &str) -> Result<Protocol, String> {
    name.parse()
}

/// One transaction on an idle six-site system (coordinator S0, cohorts
/// S1..S4, mediator S5 for Short-Commit) under the given crash schedule.
pub fn single_txn_json(protocol_name: &str, crashes_json: &str) -> Result<String, String> {
    let p = protocol(protocol_name)?;
    let specs: Vec<CrashSpec> =
        if crashes_json.trim().is_empty() { vec![] } else { serde_json::from_str(crashes_json).map_err(|e| format!("crash list: {e}"))? };
    if let Some(c) = specs.iter().find(|c| c.site > 5) {
        return Err(format!("site S{} is not part of the demo transaction", c.site));
    }
    let crashes: Vec<ScriptedCrash> =
        specs.iter().map(|c| ScriptedCrash { site: SiteId(c.site), at: c.at, downtime_ms: c.downtime_ms.max(1) }).collect();
    let cfg = SimConfig { protocol: p, total_txns: 0, num_sites: 6, ..SimConfig::default() };
    let txn = ScriptedTxn {
        at: 0,
        coordinator: SiteId(0),
        mediator: p.has_mediator().then_some(SiteId(5)),
        cohorts: (1..=4).map(SiteId).collect(),
        pages: None,
    };
    let out =
        Simulation::scripted(&cfg, vec![txn], &crashes).map_err(|e| e.to_string())?.keep_traces(true).run().map_err(|e| e.to_string())?;
    // A crash in the execution phase restarts the transaction; show the last attempt.
    let r = out.records.last().ok_or("no transaction ran")?;
    let mut sites = vec![SiteView { site: 0, role: "coordinator", phase: None, prepared_at: None, decided_at: None }];
    sites.extend(r.sites.iter().map(|s| SiteView {
        site: s.site.0,
        role: "participant",
        phase: s.phase,
        prepared_at: s.prepared_at,
        decided_at: s.decided_at,
    }));
    if let Some(m) = r.mediator {
        sites.push(SiteView { site: m.0, role: "mediator", phase: None, prepared_at: None, decided_at: None });
    }
    let trace = out.records.iter().flat_map(|r| r.trace.clone().unwrap_or_default()).collect();
    let view = TxnView {
        protocol: p,
        decision: r.decision.map(|(o, at)| format!("{o:?} at {at} ms")),
        sites,
        trace,
        violations: out.violations,
        safety_events: out.safety_events,
        forced_writes: r.forced_writes.total(),
        messages: r.protocol_messages(),
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

/// Averaged metrics for one configuration given as `key=value` lines.
pub fn experiment_json(config_text: &str) -> Result<String, String> {
    let cfg = parse_config(config_text, &[]).map_err(|e| e.to_string())?;
    let row = run_experiment(&cfg).map_err(|e| e.to_string())?.row();
    serde_json::to_string(&row).map_err(|e| e.to_string())
}

/// The MPL or failure sweep with reduced run length, plus its trend checks.
pub fn sweep_json(axis: &str, total_txns: usize, trials: usize) -> Result<String, String> {
    let axis: SweepAxis = axis.parse()?;
    let base = SimConfig { total_txns, trials, ..SimConfig::default() };
    base.validate().map_err(|e| e.to_string())?;
    let rows = sweep(&base, axis).map_err(|e| e.to_string())?;
    let checks = match axis {
        SweepAxis::Mpl => mpl_trends(&rows),
        SweepAxis::Failure => failure_trends(&rows),
    };
    serde_json::to_string(&SweepView { rows, checks }).map_err(|e| e.to_string())
}

#[wasm_bindgen(js_name = singleTxn)]
pub fn single_txn(protocol: &str, crashes_json: &str) -> Result<String, JsValue> {
    single_txn_json(protocol, crashes_json).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = runExperiment)]
pub fn experiment(config_text: &str) -> Result<String, JsValue> {
    experiment_json(config_text).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = runSweep)]
pub fn run_sweep(axis: &str, total_txns: usize, trials: usize) -> Result<String, JsValue> {
    sweep_json(axis, total_txns, trials).map_err(|e| JsValue::from_str(&e))
}
