//! The simulated distributed database: sites, network, workload, crashes and
//! the event dispatch that drives the role handlers in [`crate::protocol`].

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, SimConfig};
use crate::engine::{seeded_rng, Engine, EventId, SimRng, VirtualTime};
use crate::failure::FailurePlan;
use crate::metrics::{check_atomicity, summarize, AtomicityViolation, RunCounters, RunMetrics, TraceEntry, TxnOutcomeRecord};
use crate::protocol::{
    CoordinatorState, LogRecord, MsgKind, Outcome, ParticipantPhase, Protocol, ProtocolMessage, Role, SiteRoles, Timeouts, TxnId,
};
use crate::site::{DeviceTimings, PageId, Site, SiteId};
use crate::workload::{draw_plan, next_interarrival, TxnPlan};

/// Work to resume once a forced log write reaches the disk.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum AfterLog {
    CoordInit,
    CoordCommit,
    CoordAbort,
    PartVote,
    PartDecision,
    PartUnilateral,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum TimerKind {
    Exec,
    Votes,
    Acks,
    Inquiry,
    MedVotes,
    MedAcks,
    Working,
    Decision,
}

#[derive(Clone, Debug)]
pub(crate) enum Event {
    Arrival,
    Scripted(usize),
    Deliver(ProtocolMessage),
    PageDone { site: SiteId, epoch: u32, txn: TxnId },
    LogDone { site: SiteId, epoch: u32, txn: TxnId, record: LogRecord, then: AfterLog },
    Timer { site: SiteId, epoch: u32, txn: TxnId, kind: TimerKind },
    Crash { site: SiteId, role: Option<Role>, downtime: VirtualTime },
    Recover { site: SiteId },
}

/// A transaction with fixed placement, started at `at`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedTxn {
    pub at: VirtualTime,
    pub coordinator: SiteId,
    pub mediator: Option<SiteId>,
    pub cohorts: Vec<SiteId>,
    /// Pages per cohort; `None` gives cohort `i` pages `i*k .. i*k+k`.
    pub pages: Option<Vec<Vec<PageId>>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedCrash {
    pub site: SiteId,
    pub at: VirtualTime,
    pub downtime_ms: VirtualTime,
}

/// Protocol-level anomalies worth surfacing next to the atomicity check.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SafetyEvent {
    /// A participant that had aborted unilaterally received a commit decision.
    CommitAfterUnilateralAbort { txn: TxnId, site: SiteId, at: VirtualTime },
    /// Two decision makers reached different outcomes.
    ConflictingDecision { txn: TxnId, at: VirtualTime },
    /// A site applied one outcome, lost it in a crash, then applied the other.
    Reversal { txn: TxnId, site: SiteId, at: VirtualTime },
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("livelock: {processed} events processed, clock at {now} ms; unfinished: {}", stuck.join("; "))]
    Livelock { processed: u64, now: VirtualTime, stuck: Vec<String> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunOutcome {
    pub protocol: Protocol,
    pub seed: u64,
    pub metrics: RunMetrics,
    pub counters: RunCounters,
    pub records: Vec<TxnOutcomeRecord>,
    pub violations: Vec<AtomicityViolation>,
    pub safety_events: Vec<SafetyEvent>,
    pub final_time: VirtualTime,
    pub events_processed: u64,
}

pub(crate) struct World {
    pub(crate) engine: Engine<Event>,
    pub(crate) protocol: Protocol,
    pub(crate) timings: DeviceTimings,
    pub(crate) timeouts: Timeouts,
    cfg: SimConfig,
    seed: u64,
    workload_rng: SimRng,
    failure_rng: SimRng,
    failure: FailurePlan,
    pub(crate) sites: Vec<Site>,
    pub(crate) roles: Vec<SiteRoles>,
    pub(crate) records: Vec<TxnOutcomeRecord>,
    open_traces: BTreeSet<TxnId>,
    keep_all_traces: bool,
    arrivals_left: usize,
    next_logical: usize,
    scripted: Vec<ScriptedTxn>,
    pub(crate) counters: RunCounters,
    pub(crate) safety: Vec<SafetyEvent>,
}

pub struct Simulation {
    world: World,
}

impl Simulation {
    /// Open-arrival run of `cfg.total_txns` transactions with `cfg.seed`.
    pub fn new(cfg: &SimConfig) -> Result<Self, SimError> {
        Self::with_seed(cfg, cfg.seed)
    }

    pub fn with_seed(cfg: &SimConfig, seed: u64) -> Result<Self, SimError> {
        cfg.validate()?;
        let mut world = World::new(cfg, seed);
        world.arrivals_left = cfg.total_txns;
        if world.arrivals_left > 0 {
            let gap = next_interarrival(cfg.arrival_ms, &mut world.workload_rng);
            world.engine.schedule(gap, Event::Arrival);
        }
        Ok(Simulation { world })
    }

    /// Run exactly the given transactions and crashes. Random crashes are
    /// still drawn when `cfg.failure_prob > 0`.
    pub fn scripted(cfg: &SimConfig, txns: Vec<ScriptedTxn>, crashes: &[ScriptedCrash]) -> Result<Self, SimError> {
        cfg.validate()?;
        let mut world = World::new(cfg, cfg.seed);
        for (i, t) in txns.iter().enumerate() {
            world.engine.schedule_at(t.at, Event::Scripted(i));
        }
        for c in crashes {
            world.engine.schedule_at(c.at, Event::Crash { site: c.site, role: None, downtime: c.downtime_ms });
        }
        world.scripted = txns;
        Ok(Simulation { world })
    }

    /// Keep message traces of every attempt, not only the anomalous ones.
    pub fn keep_traces(mut self, keep: bool) -> Self {
        self.world.keep_all_traces = keep;
        self
    }

    pub fn now(&self) -> VirtualTime {
        self.world.engine.now()
    }

    /// Process one event. Returns `false` once the queue is empty.
    pub fn step(&mut self) -> Result<bool, SimError> {
        let w = &mut self.world;
        if w.engine.processed() >= w.cfg.event_cap {
            return Err(w.livelock());
        }
        match w.engine.pop() {
            Some((id, ev)) => {
                w.handle(id, ev);
                Ok(true)
            }
            None => Ok(false),
        }
    }

    pub fn run(mut self) -> Result<RunOutcome, SimError> {
        while self.step()? {}
        Ok(self.finish())
    }

    /// Lock and admission bookkeeping agree across sites and role states.
    pub fn check_invariants(&self) -> Result<(), String> {
        self.world.check_invariants()
    }

    pub fn records(&self) -> &[TxnOutcomeRecord] {
        &self.world.records
    }

    pub fn finish(self) -> RunOutcome {
        let w = self.world;
        let metrics = summarize(&w.records, &w.counters);
        let violations = w.records.iter().filter_map(check_atomicity).collect();
        RunOutcome {
            protocol: w.protocol,
            seed: w.seed,
            metrics,
            counters: w.counters,
            violations,
            safety_events: w.safety,
            final_time: w.engine.now(),
            events_processed: w.engine.processed(),
            records: w.records,
        }
    }
}

/// Convenience: run one seed to completion.
pub fn run_once(cfg: &SimConfig, seed: u64) -> Result<RunOutcome, SimError> {
    Simulation::with_seed(cfg, seed)?.run()
}

impl World {
    fn new(cfg: &SimConfig, seed: u64) -> Self {
        let timings = cfg.timings();
        let failure = FailurePlan {
            prob_per_site_per_txn: cfg.failure_prob,
            downtime_ms: cfg.downtime_ms,
            window_ms: cfg.execution_estimate() + 6 * timings.msg_delay_ms,
        };
        World {
            engine: Engine::with_event_cap(cfg.event_cap),
            protocol: cfg.protocol,
            timeouts: cfg.timeouts(),
            sites: (0..cfg.num_sites).map(|i| Site::new(SiteId(i), cfg.mpl, &timings)).collect(),
            roles: vec![SiteRoles::default(); cfg.num_sites],
            timings,
            cfg: cfg.clone(),
            seed,
            workload_rng: seeded_rng(seed),
            failure_rng: seeded_rng(seed ^ 0x5bd1_e995_9e37_79b9),
            failure,
            records: Vec::new(),
            open_traces: BTreeSet::new(),
            keep_all_traces: false,
            arrivals_left: 0,
            next_logical: 0,
            scripted: Vec::new(),
            counters: RunCounters::default(),
            safety: Vec::new(),
        }
    }

    pub(crate) fn now(&self) -> VirtualTime {
        self.engine.now()
    }

    fn handle(&mut self, id: EventId, ev: Event) {
        match ev {
            Event::Arrival => {
                self.arrivals_left -= 1;
                if self.arrivals_left > 0 {
                    let gap = next_interarrival(self.cfg.arrival_ms, &mut self.workload_rng);
                    self.engine.schedule(gap, Event::Arrival);
                }
                let logical = self.next_logical;
                self.next_logical += 1;
                let plan = self.draw();
                self.start_attempt(logical, plan, false);
            }
            Event::Scripted(i) => {
                let t = self.scripted[i].clone();
                let k = self.cfg.cohort_size as u32;
                let pages = t
                    .pages
                    .clone()
                    .unwrap_or_else(|| (0..t.cohorts.len() as u32).map(|c| (c * k..c * k + k).map(PageId).collect()).collect());
                let logical = self.next_logical;
                self.next_logical += 1;
                let plan = TxnPlan { coordinator: t.coordinator, mediator: t.mediator, cohorts: t.cohorts, pages };
                self.start_attempt(logical, plan, false);
            }
            Event::Deliver(msg) => self.deliver(msg),
            Event::PageDone { site, epoch, txn } => {
                if self.sites[site.0].epoch() == epoch {
                    self.on_page_done(site, txn);
                }
            }
            Event::LogDone { site, epoch, txn, record, then } => {
                if self.sites[site.0].epoch() != epoch {
                    return;
                }
                self.sites[site.0].complete_forced(record);
                match then {
                    AfterLog::CoordInit => self.on_init_logged(site, txn),
                    AfterLog::CoordCommit => self.on_commit_logged(site, txn),
                    AfterLog::CoordAbort => self.on_abort_logged(site, txn),
                    AfterLog::PartVote => self.on_vote_logged(site, txn),
                    AfterLog::PartDecision => self.on_decision_logged(site, txn),
                    AfterLog::PartUnilateral => self.on_unilateral_logged(site, txn),
                }
            }
            Event::Timer { site, epoch, txn, kind } => {
                if self.sites[site.0].epoch() == epoch && self.take_timer(site, txn, kind, id) {
                    self.on_timer(site, txn, kind);
                }
            }
            Event::Crash { site, role, downtime } => {
                if !self.sites[site.0].is_up() {
                    return;
                }
                match role {
                    Some(Role::Coordinator) => self.counters.coordinator_failures += 1,
                    Some(Role::Mediator) => self.counters.mediator_failures += 1,
                    _ => {}
                }
                self.crash_site(site);
                self.engine.schedule(downtime, Event::Recover { site });
            }
            Event::Recover { site } => {
                self.sites[site.0].recover();
                self.trace_site_event(site, "Recover");
                self.recover_site(site);
            }
        }
    }

    fn on_timer(&mut self, site: SiteId, txn: TxnId, kind: TimerKind) {
        match kind {
            TimerKind::Exec => self.on_exec_timer(site, txn),
            TimerKind::Votes => self.on_votes_timer(site, txn),
            TimerKind::Acks => self.on_ack_timer(site, txn),
            TimerKind::Inquiry => self.on_inquiry_timer(site, txn),
            TimerKind::MedVotes => self.on_mediator_votes_timer(site, txn),
            TimerKind::MedAcks => self.on_mediator_ack_timer(site, txn),
            TimerKind::Working => self.on_working_timer(site, txn),
            TimerKind::Decision => self.on_decision_timer(site, txn),
        }
    }

    fn deliver(&mut self, msg: ProtocolMessage) {
        let up = self.sites[msg.to.0].is_up();
        self.trace(msg.txn, msg.from, msg.to, msg.kind.name(), up);
        if !up {
            return;
        }
        let ProtocolMessage { kind, txn, from, from_role, to, to_role } = msg;
        let from = (from, from_role);
        match to_role {
            Role::Coordinator => self.coordinator_receive(to, txn, from, kind),
            Role::Mediator => self.mediator_receive(to, txn, from.0, kind),
            Role::Participant => self.participant_receive(to, txn, from, kind),
        }
    }

    // ---- services used by the role handlers ----

    /// Messages travel `msg_delay_ms` and are lost if `to` is down on arrival.
    pub(crate) fn send(&mut self, (from, from_role): (SiteId, Role), (to, to_role): (SiteId, Role), txn: TxnId, kind: MsgKind) {
        debug_assert!(self.sites[from.0].is_up());
        *self.rec(txn).messages.entry(kind.name().to_string()).or_insert(0) += 1;
        let msg = ProtocolMessage { kind, txn, from, from_role, to, to_role };
        self.engine.schedule(self.timings.msg_delay_ms, Event::Deliver(msg));
    }

    pub(crate) fn force_log(&mut self, site: SiteId, role: Role, record: LogRecord, then: AfterLog) {
        let txn = record.txn();
        let fw = &mut self.rec(txn).forced_writes;
        match role {
            Role::Coordinator => fw.coordinator += 1,
            Role::Mediator => fw.mediator += 1,
            Role::Participant => fw.participants += 1,
        }
        let now = self.now();
        let s = &mut self.sites[site.0];
        let epoch = s.epoch();
        let done = s.schedule_log_write(now, &self.timings);
        self.engine.schedule_at(done, Event::LogDone { site, epoch, txn, record, then });
    }

    pub(crate) fn schedule_page(&mut self, site: SiteId, txn: TxnId) {
        let now = self.now();
        let s = &mut self.sites[site.0];
        let epoch = s.epoch();
        let done = s.schedule_page_op(now, &self.timings);
        self.engine.schedule_at(done, Event::PageDone { site, epoch, txn });
    }

    pub(crate) fn arm(&mut self, site: SiteId, txn: TxnId, kind: TimerKind, delay: VirtualTime) -> EventId {
        let epoch = self.sites[site.0].epoch();
        self.engine.schedule(delay, Event::Timer { site, epoch, txn, kind })
    }

    pub(crate) fn disarm(&mut self, timer: &mut Option<EventId>) {
        if let Some(id) = timer.take() {
            self.engine.cancel(id);
        }
    }

    /// A timer fires only if it is still the one the role state armed.
    fn take_timer(&mut self, site: SiteId, txn: TxnId, kind: TimerKind, id: EventId) -> bool {
        let roles = &mut self.roles[site.0];
        let slot = match kind {
            TimerKind::Exec | TimerKind::Votes | TimerKind::Acks | TimerKind::Inquiry => {
                roles.coordinators.get_mut(&txn).map(|s| &mut s.timer)
            }
            TimerKind::MedVotes | TimerKind::MedAcks => roles.mediators.get_mut(&txn).map(|s| &mut s.timer),
            TimerKind::Working | TimerKind::Decision => roles.participants.get_mut(&txn).map(|s| &mut s.timer),
        };
        match slot {
            Some(t) if *t == Some(id) => {
                *t = None;
                true
            }
            _ => false,
        }
    }

    pub(crate) fn rec(&mut self, txn: TxnId) -> &mut TxnOutcomeRecord {
        &mut self.records[txn.0 as usize]
    }

    /// Earliest decision by any decision maker is the transaction's decision.
    pub(crate) fn record_decision(&mut self, txn: TxnId, outcome: Outcome) {
        let now = self.now();
        let r = self.rec(txn);
        match r.decision {
            None => r.decision = Some((outcome, now)),
            Some((o, _)) if o != outcome && !r.superseded => {
                self.safety.push(SafetyEvent::ConflictingDecision { txn, at: now });
            }
            _ => {}
        }
        self.maybe_close(txn);
    }

    pub(crate) fn set_phase(&mut self, txn: TxnId, site: SiteId, phase: ParticipantPhase) {
        let now = self.now();
        if let Some(s) = self.rec(txn).site_mut(site) {
            if phase == ParticipantPhase::Prepared && s.prepared_at.is_none() {
                s.prepared_at = Some(now);
            }
            if s.phase.is_none_or(|p| !p.is_terminal()) {
                s.phase = Some(phase);
            }
        }
    }

    pub(crate) fn note_decided(&mut self, txn: TxnId, site: SiteId) {
        let now = self.now();
        if let Some(s) = self.rec(txn).site_mut(site) {
            s.decided_at.get_or_insert(now);
        }
    }

    pub(crate) fn note_terminal(&mut self, txn: TxnId, site: SiteId, phase: ParticipantPhase) {
        debug_assert!(phase.is_terminal());
        let now = self.now();
        let r = &mut self.records[txn.0 as usize];
        let Some(s) = r.site_mut(site) else { return };
        match s.phase {
            Some(prev) if prev.is_terminal() => {
                if prev.outcome() != phase.outcome() {
                    r.reversed.push(site);
                    self.safety.push(SafetyEvent::Reversal { txn, site, at: now });
                }
            }
            _ => {
                s.phase = Some(phase);
                s.applied_at = Some(now);
            }
        }
        self.maybe_close(txn);
    }

    /// Drop the trace of an attempt that finished consistently.
    fn maybe_close(&mut self, txn: TxnId) {
        if self.keep_all_traces || !self.open_traces.contains(&txn) {
            return;
        }
        let r = &mut self.records[txn.0 as usize];
        if r.is_complete() && check_atomicity(r).is_none() {
            r.trace = None;
            self.open_traces.remove(&txn);
        }
    }

    fn trace(&mut self, txn: TxnId, from: SiteId, to: SiteId, kind: &str, delivered: bool) {
        let at = self.now();
        if let Some(t) = self.records[txn.0 as usize].trace.as_mut() {
            t.push(TraceEntry { at, from, to, kind: kind.to_string(), delivered });
        }
    }

    fn trace_site_event(&mut self, site: SiteId, what: &str) {
        let open: Vec<TxnId> = self.open_traces.iter().copied().collect();
        for txn in open {
            let r = &self.records[txn.0 as usize];
            let involved = r.coordinator == site || r.mediator == Some(site) || r.sites.iter().any(|s| s.site == site);
            if involved {
                self.trace(txn, site, site, what, true);
            }
        }
    }

    /// True if `site` is down or crashed at or after `since`.
    pub(crate) fn failed_since(&self, site: SiteId, since: VirtualTime) -> bool {
        let s = &self.sites[site.0];
        !s.is_up() || s.last_crash().is_some_and(|t| t >= since)
    }

    // ---- workload ----

    fn draw(&mut self) -> TxnPlan {
        let up: Vec<bool> = self.sites.iter().map(Site::is_up).collect();
        draw_plan(&self.cfg, self.protocol, &up, &mut self.workload_rng)
    }

    fn start_attempt(&mut self, logical: usize, plan: TxnPlan, restarted: bool) {
        let txn = TxnId(self.records.len() as u64);
        let now = self.now();
        self.records.push(TxnOutcomeRecord::new(txn, logical, restarted, plan.coordinator, plan.mediator, &plan.cohorts, now, true));
        self.open_traces.insert(txn);

        let mut role_sites = vec![(plan.coordinator, Role::Coordinator)];
        role_sites.extend(plan.mediator.map(|m| (m, Role::Mediator)));
        role_sites.extend(plan.cohorts.iter().map(|&c| (c, Role::Participant)));
        for cp in self.failure.sample_crashes(&role_sites, now, &mut self.failure_rng) {
            self.engine.schedule_at(cp.at, Event::Crash { site: cp.site, role: Some(cp.role), downtime: cp.downtime_ms });
        }

        let c = plan.coordinator;
        if !self.sites[c.0].is_up() {
            self.restart_or_abort(txn);
            return;
        }
        if self.sites[c.0].admit(txn) == crate::site::Admission::MplConflict {
            self.rec(txn).conflict = Some(crate::protocol::FailReason::MplConflict);
            self.record_decision(txn, Outcome::Abort);
            return;
        }
        let mut st = CoordinatorState::new(plan.cohorts.clone(), plan.mediator, plan.pages.clone());
        st.timer = Some(self.arm(c, txn, TimerKind::Exec, self.timeouts.exec_wait_ms));
        self.roles[c.0].coordinators.insert(txn, st);
        for (cohort, pages) in plan.cohorts.into_iter().zip(plan.pages) {
            self.send((c, Role::Coordinator), (cohort, Role::Participant), txn, MsgKind::Execute { pages });
        }
    }

    /// A crash stopped the attempt before any vote was requested. The first
    /// such failure restarts the request as a fresh attempt; a second aborts.
    pub(crate) fn restart_or_abort(&mut self, txn: TxnId) {
        let now = self.now();
        let r = self.rec(txn);
        if r.decision.is_some() {
            return;
        }
        if r.restarted {
            self.record_decision(txn, Outcome::Abort);
            return;
        }
        r.superseded = true;
        r.decision = Some((Outcome::Abort, now));
        let logical = r.logical;
        self.counters.null_restarts += 1;
        self.maybe_close(txn);
        let plan = self.draw();
        self.start_attempt(logical, plan, true);
    }

    // ---- crash and recovery ----

    fn crash_site(&mut self, site: SiteId) {
        self.counters.crashes += 1;
        self.trace_site_event(site, "Crash");
        let roles = std::mem::take(&mut self.roles[site.0]);
        for st in roles.coordinators.values() {
            if let Some(id) = st.timer {
                self.engine.cancel(id);
            }
        }
        for st in roles.mediators.values() {
            if let Some(id) = st.timer {
                self.engine.cancel(id);
            }
        }
        for (&txn, st) in &roles.participants {
            if let Some(id) = st.timer {
                self.engine.cancel(id);
            }
            if st.phase == ParticipantPhase::Working {
                self.note_terminal(txn, site, ParticipantPhase::Aborted);
            }
        }
        let now = self.now();
        self.sites[site.0].crash(now);
        let restart: Vec<TxnId> =
            roles.coordinators.iter().filter(|(_, st)| st.phase == crate::protocol::CoordinatorPhase::Init).map(|(&t, _)| t).collect();
        for txn in restart {
            self.restart_or_abort(txn);
        }
        // Without an init record nothing survives to resume the commit
        // phase, so an undecided coordinator's transaction is presumed aborted.
        if !self.protocol.logs_init() {
            for (&txn, st) in &roles.coordinators {
                if st.phase != crate::protocol::CoordinatorPhase::Init && st.decision.is_none() {
                    self.record_decision(txn, Outcome::Abort);
                }
            }
        }
    }

    /// Rebuild in-doubt role states from the stable log.
    fn recover_site(&mut self, site: SiteId) {
        #[derive(Default)]
        struct Scan {
            init: Option<(Vec<SiteId>, Option<SiteId>)>,
            prepared: Option<LogRecord>,
            decision: Option<(Outcome, Vec<SiteId>)>,
            end: bool,
        }
        let mut scan: BTreeMap<TxnId, Scan> = BTreeMap::new();
        for r in self.sites[site.0].stable_log() {
            let e = scan.entry(r.txn()).or_default();
            match r {
                LogRecord::TxnInit { participants, mediator, .. } => e.init = Some((participants.clone(), *mediator)),
                LogRecord::PreparedVote { .. } => e.prepared = Some(r.clone()),
                LogRecord::Commit { participants, .. } => e.decision = Some((Outcome::Commit, participants.clone())),
                LogRecord::Abort { participants, .. } => e.decision = Some((Outcome::Abort, participants.clone())),
                LogRecord::End { .. } => e.end = true,
            }
        }
        for (txn, e) in scan {
            if let Some(prepared) = e.prepared {
                if e.decision.is_none() {
                    self.recover_participant(site, txn, prepared);
                }
            } else if !e.end {
                match (e.decision, e.init) {
                    (Some((outcome, participants)), init) => {
                        let mediator = init.and_then(|(_, m)| m);
                        self.recover_decided_coordinator(site, txn, outcome, participants, mediator);
                    }
                    (None, Some((participants, mediator))) => self.recover_undecided_coordinator(site, txn, participants, mediator),
                    (None, None) => {}
                }
            }
        }
    }

    fn livelock(&self) -> SimError {
        let stuck = self
            .records
            .iter()
            .filter(|r| !r.is_complete())
            .take(8)
            .map(|r| {
                let sites: Vec<String> = r.sites.iter().map(|s| format!("{}:{:?}", s.site, s.phase)).collect();
                format!("{} decision={:?} [{}]", r.txn, r.decision, sites.join(","))
            })
            .collect();
        SimError::Livelock { processed: self.engine.processed(), now: self.engine.now(), stuck }
    }

    fn check_invariants(&self) -> Result<(), String> {
        for (i, site) in self.sites.iter().enumerate() {
            let believed: usize = self.roles[i].participants.values().filter(|p| !p.phase.is_terminal()).map(|p| p.locked).sum();
            if believed != site.held_pages() {
                return Err(format!("{}: lock table holds {} pages, participants claim {}", site.id, site.held_pages(), believed));
            }
            if site.active_count() > site.mpl_limit() {
                return Err(format!("{}: {} active transactions exceed MPL {}", site.id, site.active_count(), site.mpl_limit()));
            }
            if !site.is_up() && (site.held_pages() > 0 || site.active_count() > 0) {
                return Err(format!("{}: down but holds state", site.id));
            }
        }
        Ok(())
    }
}
