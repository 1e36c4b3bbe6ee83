//! Coordinator role, shared by all three protocols. Protocol differences are
//! the flags on [`Protocol`] plus the recovery paths in the sibling modules.

use crate::protocol::{
    CoordinatorPhase, CoordinatorState, FailReason, LogKind, LogRecord, MsgKind, Outcome, Protocol, Role, TxnId, TxnStatus,
};
use crate::sim::{AfterLog, TimerKind, World};
use crate::site::SiteId;

pub(crate) fn decision_msg(o: Outcome) -> MsgKind {
    match o {
        Outcome::Commit => MsgKind::CommitDecision,
        Outcome::Abort => MsgKind::AbortDecision,
    }
}

const COORD: Role = Role::Coordinator;
const PART: Role = Role::Participant;

impl World {
    pub(crate) fn coord(&mut self, c: SiteId, txn: TxnId) -> Option<&mut CoordinatorState> {
        self.roles[c.0].coordinators.get_mut(&txn)
    }

    pub(crate) fn coordinator_receive(&mut self, c: SiteId, txn: TxnId, from: (SiteId, Role), kind: MsgKind) {
        match kind {
            MsgKind::WorkDone => self.on_work_report(c, txn, from.0, None),
            MsgKind::WorkFailed(reason) => self.on_work_report(c, txn, from.0, Some(reason)),
            MsgKind::VoteCommit => self.on_vote(c, txn, from.0, true),
            MsgKind::VoteAbort => self.on_vote(c, txn, from.0, false),
            MsgKind::Ack => self.on_ack(c, txn, from.0),
            MsgKind::StatusInquiry => self.on_coord_inquiry(c, txn, from),
            MsgKind::StatusReply(status) => match self.protocol {
                Protocol::PresumedCommit => self.prc_status_reply(c, txn, from.0, status),
                Protocol::ShortCommit => self.sc_status_reply(c, txn, from.0, status),
                Protocol::TwoPhase => {}
            },
            // A participant's unilateral abort announcement.
            MsgKind::AbortDecision => match self.coord(c, txn).map(|s| s.phase) {
                Some(CoordinatorPhase::CollectingVotes) => self.on_vote(c, txn, from.0, false),
                Some(CoordinatorPhase::Recovering) => self.sc_status_reply(c, txn, from.0, TxnStatus::Aborted),
                _ => {}
            },
            _ => {}
        }
    }

    fn on_work_report(&mut self, c: SiteId, txn: TxnId, from: SiteId, failed: Option<FailReason>) {
        let Some(st) = self.coord(c, txn) else { return };
        if st.phase != CoordinatorPhase::Init {
            return;
        }
        match failed {
            None => {
                st.work_done.insert(from);
                if st.work_done.len() == st.participants.len() {
                    self.begin_commit(c, txn);
                }
            }
            Some(reason) => {
                self.rec(txn).conflict.get_or_insert(reason);
                self.abort_unprepared(c, txn, Some(from));
                self.record_decision(txn, Outcome::Abort);
            }
        }
    }

    /// Abort before any vote was requested: nothing logged, no acks awaited.
    fn abort_unprepared(&mut self, c: SiteId, txn: TxnId, skip: Option<SiteId>) {
        let Some(st) = self.coord(c, txn) else { return };
        let targets: Vec<SiteId> = st.participants.iter().copied().filter(|&p| Some(p) != skip).collect();
        for p in targets {
            self.send((c, COORD), (p, PART), txn, MsgKind::AbortDecision);
        }
        self.finish_coordinator(c, txn, false);
    }

    pub(crate) fn on_exec_timer(&mut self, c: SiteId, txn: TxnId) {
        let Some(st) = self.coord(c, txn) else { return };
        let silent: Vec<SiteId> = st.participants.iter().copied().filter(|p| !st.work_done.contains(p)).collect();
        let start = self.records[txn.0 as usize].start;
        let crashed = silent.iter().any(|&p| self.failed_since(p, start));
        self.abort_unprepared(c, txn, None);
        if crashed {
            self.restart_or_abort(txn);
        } else {
            self.record_decision(txn, Outcome::Abort);
        }
    }

    fn begin_commit(&mut self, c: SiteId, txn: TxnId) {
        let now = self.now();
        self.rec(txn).commit_phase_start = Some(now);
        let st = self.roles[c.0].coordinators.get_mut(&txn).expect("coordinator state");
        let mut timer = st.timer.take();
        let (participants, mediator) = (st.participants.clone(), st.mediator);
        self.disarm(&mut timer);
        if self.protocol.logs_init() {
            self.force_log(c, COORD, LogRecord::TxnInit { txn, participants, mediator }, AfterLog::CoordInit);
        } else {
            self.send_prepare(c, txn);
        }
    }

    pub(crate) fn on_init_logged(&mut self, c: SiteId, txn: TxnId) {
        if self.coord(c, txn).is_some_and(|s| s.phase == CoordinatorPhase::Init) {
            self.send_prepare(c, txn);
        }
    }

    fn send_prepare(&mut self, c: SiteId, txn: TxnId) {
        let st = self.coord(c, txn).expect("coordinator state");
        st.phase = CoordinatorPhase::CollectingVotes;
        let (participants, mediator) = (st.participants.clone(), st.mediator);
        let prepare = MsgKind::Prepare { participants: participants.clone(), mediator };
        if let Some(m) = mediator {
            self.send((c, COORD), (m, Role::Mediator), txn, prepare.clone());
        }
        for p in participants {
            self.send((c, COORD), (p, PART), txn, prepare.clone());
        }
        self.arm_votes_timer(c, txn);
    }

    pub(crate) fn arm_votes_timer(&mut self, c: SiteId, txn: TxnId) {
        let id = self.arm(c, txn, TimerKind::Votes, self.timeouts.vote_collection_ms);
        self.coord(c, txn).expect("coordinator state").timer = Some(id);
    }

    fn on_vote(&mut self, c: SiteId, txn: TxnId, from: SiteId, commit: bool) {
        let Some(st) = self.coord(c, txn) else {
            if commit {
                self.orphan_vote(c, txn, from);
            }
            return;
        };
        match (st.phase, st.decision) {
            (CoordinatorPhase::CollectingVotes, _) => {
                st.votes.insert(from, commit);
                if !commit {
                    self.decide_abort(c, txn);
                } else if st.all_voted_commit() {
                    self.decide_commit(c, txn);
                }
            }
            // Late vote after the decision: repeat it to the voter.
            (CoordinatorPhase::Committing | CoordinatorPhase::Aborting, Some(o)) if commit => {
                if o == Outcome::Abort {
                    st.votes.insert(from, true);
                    st.expected_acks.insert(from);
                }
                self.send((c, COORD), (from, PART), txn, decision_msg(o));
            }
            _ => {}
        }
    }

    /// Commit vote for a transaction this coordinator holds no state for.
    fn orphan_vote(&mut self, c: SiteId, txn: TxnId, from: SiteId) {
        let site = &self.sites[c.0];
        let answer = match site.logged_decision(txn) {
            Some(o) => o,
            None if site.has_logged(txn, LogKind::TxnInit) => return,
            None => self.protocol.presumption(),
        };
        self.send((c, COORD), (from, PART), txn, decision_msg(answer));
    }

    pub(crate) fn on_votes_timer(&mut self, c: SiteId, txn: TxnId) {
        let retries = self.timeouts.still_waiting_retries;
        let Some(st) = self.coord(c, txn) else { return };
        if st.phase != CoordinatorPhase::CollectingVotes {
            return;
        }
        if st.retries_used < retries {
            st.retries_used += 1;
            let missing: Vec<SiteId> = st.participants.iter().copied().filter(|p| !st.votes.contains_key(p)).collect();
            for p in missing {
                self.send((c, COORD), (p, PART), txn, MsgKind::StillWaiting);
            }
            self.arm_votes_timer(c, txn);
        } else {
            self.decide_abort(c, txn);
        }
    }

    pub(crate) fn decide_commit(&mut self, c: SiteId, txn: TxnId) {
        let st = self.coord(c, txn).expect("coordinator state");
        st.phase = CoordinatorPhase::Committing;
        let mut timer = st.timer.take();
        let record = LogRecord::Commit { txn, participants: st.participants.clone() };
        self.disarm(&mut timer);
        if self.protocol.forces_coordinator_commit() {
            self.force_log(c, COORD, record, AfterLog::CoordCommit);
        } else {
            self.sites[c.0].append_unforced(record);
            self.on_commit_logged(c, txn);
        }
    }

    pub(crate) fn on_commit_logged(&mut self, c: SiteId, txn: TxnId) {
        let Some(st) = self.coord(c, txn) else { return };
        st.decision = Some(Outcome::Commit);
        self.record_decision(txn, Outcome::Commit);
        self.announce(c, txn);
    }

    pub(crate) fn decide_abort(&mut self, c: SiteId, txn: TxnId) {
        let st = self.coord(c, txn).expect("coordinator state");
        st.phase = CoordinatorPhase::Aborting;
        let mut timer = st.timer.take();
        let record = LogRecord::Abort { txn, participants: st.participants.clone() };
        self.disarm(&mut timer);
        self.force_log(c, COORD, record, AfterLog::CoordAbort);
    }

    pub(crate) fn on_abort_logged(&mut self, c: SiteId, txn: TxnId) {
        let Some(st) = self.coord(c, txn) else { return };
        st.decision = Some(Outcome::Abort);
        self.record_decision(txn, Outcome::Abort);
        self.announce(c, txn);
    }

    /// Send the (durable) decision and wait for the acks the protocol requires.
    pub(crate) fn announce(&mut self, c: SiteId, txn: TxnId) {
        let acks_commit = self.protocol.acks_commit();
        let st = self.coord(c, txn).expect("coordinator state");
        let outcome = st.decision.expect("decided");
        let targets: Vec<SiteId> = match outcome {
            Outcome::Commit => st.participants.clone(),
            Outcome::Abort => st.participants.iter().copied().filter(|p| st.votes.get(p) != Some(&false)).collect(),
        };
        st.expected_acks = match outcome {
            Outcome::Commit if acks_commit => targets.iter().copied().collect(),
            Outcome::Commit => Default::default(),
            Outcome::Abort => targets.iter().copied().filter(|p| st.votes.get(p) == Some(&true)).collect(),
        };
        let done = st.expected_acks.is_subset(&st.acks);
        for p in targets {
            self.send((c, COORD), (p, PART), txn, decision_msg(outcome));
        }
        if done {
            let end = outcome == Outcome::Abort || acks_commit;
            self.finish_coordinator(c, txn, end);
        } else {
            let id = self.arm(c, txn, TimerKind::Acks, self.timeouts.decision_wait_ms);
            self.coord(c, txn).expect("coordinator state").timer = Some(id);
        }
    }

    fn on_ack(&mut self, c: SiteId, txn: TxnId, from: SiteId) {
        let Some(st) = self.coord(c, txn) else { return };
        if st.decision.is_none() {
            return;
        }
        st.acks.insert(from);
        if st.expected_acks.is_subset(&st.acks) {
            self.finish_coordinator(c, txn, true);
        }
    }

    pub(crate) fn on_ack_timer(&mut self, c: SiteId, txn: TxnId) {
        let Some(st) = self.coord(c, txn) else { return };
        let Some(outcome) = st.decision else { return };
        let missing: Vec<SiteId> = st.expected_acks.difference(&st.acks).copied().collect();
        for p in missing {
            self.send((c, COORD), (p, PART), txn, decision_msg(outcome));
        }
        let id = self.arm(c, txn, TimerKind::Acks, self.timeouts.decision_wait_ms);
        self.coord(c, txn).expect("coordinator state").timer = Some(id);
    }

    pub(crate) fn finish_coordinator(&mut self, c: SiteId, txn: TxnId, write_end: bool) {
        let Some(mut st) = self.roles[c.0].coordinators.remove(&txn) else { return };
        self.disarm(&mut st.timer);
        if write_end {
            self.sites[c.0].append_unforced(LogRecord::End { txn });
        }
        if st.admitted {
            self.sites[c.0].release_all(txn);
        }
    }

    /// Answer from volatile state, then from the log, then by presumption.
    /// An undecided coordinator stays silent.
    fn on_coord_inquiry(&mut self, c: SiteId, txn: TxnId, from: (SiteId, Role)) {
        let answer = match self.coord(c, txn) {
            Some(st) => st.decision,
            None => {
                let site = &self.sites[c.0];
                match site.logged_decision(txn) {
                    Some(o) => Some(o),
                    None if site.has_logged(txn, LogKind::TxnInit) => None,
                    None => Some(self.protocol.presumption()),
                }
            }
        };
        if let Some(o) = answer {
            self.send((c, COORD), from, txn, MsgKind::StatusReply(o.into()));
        }
    }

    pub(crate) fn on_inquiry_timer(&mut self, c: SiteId, txn: TxnId) {
        match self.protocol {
            Protocol::PresumedCommit => self.prc_inquiry_timer(c, txn),
            Protocol::ShortCommit => self.sc_inquiry_timer(c, txn),
            Protocol::TwoPhase => {}
        }
    }

    /// Restart with a durable decision but missing acks: announce it again.
    pub(crate) fn recover_decided_coordinator(
        &mut self,
        c: SiteId,
        txn: TxnId,
        outcome: Outcome,
        participants: Vec<SiteId>,
        mediator: Option<SiteId>,
    ) {
        if outcome == Outcome::Commit && !self.protocol.acks_commit() {
            return;
        }
        let mut st = CoordinatorState::new(participants, mediator, Vec::new());
        st.admitted = false;
        st.phase = match outcome {
            Outcome::Commit => CoordinatorPhase::Committing,
            Outcome::Abort => CoordinatorPhase::Aborting,
        };
        st.decision = Some(outcome);
        // Votes are lost; any participant may be prepared and owe an ack.
        st.votes = st.participants.iter().map(|&p| (p, true)).collect();
        self.roles[c.0].coordinators.insert(txn, st);
        self.announce(c, txn);
    }

    /// Restart with TxnInit but no decision.
    pub(crate) fn recover_undecided_coordinator(&mut self, c: SiteId, txn: TxnId, participants: Vec<SiteId>, mediator: Option<SiteId>) {
        let mut st = CoordinatorState::new(participants, mediator, Vec::new());
        st.admitted = false;
        st.phase = CoordinatorPhase::Recovering;
        self.roles[c.0].coordinators.insert(txn, st);
        match self.protocol {
            Protocol::PresumedCommit => self.start_prc_recovery(c, txn),
            Protocol::ShortCommit => self.start_sc_recovery(c, txn),
            Protocol::TwoPhase => {
                self.roles[c.0].coordinators.remove(&txn);
            }
        }
    }
}
