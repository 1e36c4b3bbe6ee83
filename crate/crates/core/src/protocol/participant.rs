//! Participant (cohort) role: execution, voting, applying decisions, and
//! the prepared-state timeout that differs between the protocol families.

use crate::protocol::coordinator::decision_msg;
use crate::protocol::FailReason;
use crate::protocol::{LogKind, LogRecord, MsgKind, Outcome, ParticipantPhase, ParticipantState, Protocol, Role, TxnId, TxnStatus};
use crate::sim::{AfterLog, SafetyEvent, TimerKind, World};
use crate::site::{Admission, LockResult, PageId, SiteId};

const PART: Role = Role::Participant;

impl World {
    fn part(&mut self, p: SiteId, txn: TxnId) -> Option<&mut ParticipantState> {
        self.roles[p.0].participants.get_mut(&txn)
    }

    pub(crate) fn participant_receive(&mut self, p: SiteId, txn: TxnId, from: (SiteId, Role), kind: MsgKind) {
        match kind {
            MsgKind::Execute { pages } => self.on_execute(p, txn, from.0, pages),
            MsgKind::Prepare { participants, mediator } => self.on_prepare(p, txn, from, Some((participants, mediator))),
            MsgKind::StillWaiting => self.on_prepare(p, txn, from, None),
            MsgKind::CommitDecision => self.on_decision(p, txn, from, Outcome::Commit, true),
            MsgKind::AbortDecision => self.on_decision(p, txn, from, Outcome::Abort, true),
            MsgKind::StatusInquiry => self.on_part_inquiry(p, txn, from),
            MsgKind::StatusReply(TxnStatus::Committed) => self.on_decision(p, txn, from, Outcome::Commit, false),
            MsgKind::StatusReply(TxnStatus::Aborted) => self.on_decision(p, txn, from, Outcome::Abort, false),
            _ => {}
        }
    }

    fn on_execute(&mut self, p: SiteId, txn: TxnId, coordinator: SiteId, pages: Vec<PageId>) {
        if self.roles[p.0].participants.contains_key(&txn) {
            return;
        }
        if self.sites[p.0].admit(txn) == Admission::MplConflict {
            let reply = MsgKind::WorkFailed(FailReason::MplConflict);
            self.send((p, PART), (coordinator, Role::Coordinator), txn, reply);
            return;
        }
        self.roles[p.0].participants.insert(txn, ParticipantState::new(coordinator, pages));
        self.set_phase(txn, p, ParticipantPhase::Working);
        self.run_next_page(p, txn);
    }

    fn run_next_page(&mut self, p: SiteId, txn: TxnId) {
        let st = self.part(p, txn).expect("participant state");
        let coordinator = st.coordinator;
        let Some(&page) = st.pages.get(st.next_page) else {
            st.work_done = true;
            self.send((p, PART), (coordinator, Role::Coordinator), txn, MsgKind::WorkDone);
            let wait = self.timeouts.exec_wait_ms + self.timeouts.decision_wait_ms;
            let id = self.arm(p, txn, TimerKind::Working, wait);
            self.part(p, txn).expect("participant state").timer = Some(id);
            return;
        };
        match self.sites[p.0].acquire_page(txn, page) {
            LockResult::Granted => {
                self.part(p, txn).expect("participant state").locked += 1;
                self.schedule_page(p, txn);
            }
            LockResult::PageConflict { .. } => {
                self.abort_local(p, txn);
                let reply = MsgKind::WorkFailed(FailReason::PageConflict);
                self.send((p, PART), (coordinator, Role::Coordinator), txn, reply);
            }
        }
    }

    pub(crate) fn on_page_done(&mut self, p: SiteId, txn: TxnId) {
        let Some(st) = self.part(p, txn) else { return };
        if st.phase != ParticipantPhase::Working || st.work_done {
            return;
        }
        st.next_page += 1;
        self.run_next_page(p, txn);
    }

    /// Abort before preparing: locks go, nothing is logged.
    fn abort_local(&mut self, p: SiteId, txn: TxnId) {
        let st = self.part(p, txn).expect("participant state");
        st.phase = ParticipantPhase::Aborted;
        st.locked = 0;
        let mut timer = st.timer.take();
        self.disarm(&mut timer);
        self.sites[p.0].release_all(txn);
        self.note_terminal(txn, p, ParticipantPhase::Aborted);
    }

    pub(crate) fn on_working_timer(&mut self, p: SiteId, txn: TxnId) {
        if self.part(p, txn).is_some_and(|s| s.phase == ParticipantPhase::Working && !s.voting) {
            self.abort_local(p, txn);
        }
    }

    fn on_prepare(&mut self, p: SiteId, txn: TxnId, from: (SiteId, Role), info: Option<(Vec<SiteId>, Option<SiteId>)>) {
        let Some(st) = self.part(p, txn) else {
            let vote = match self.sites[p.0].logged_decision(txn) {
                Some(Outcome::Commit) => MsgKind::VoteCommit,
                _ => MsgKind::VoteAbort,
            };
            self.send((p, PART), from, txn, vote);
            return;
        };
        match st.phase {
            ParticipantPhase::Working => {
                if let Some((participants, mediator)) = info {
                    st.participants = participants;
                    st.mediator = mediator;
                }
                if !st.work_done || st.voting {
                    return;
                }
                st.voting = true;
                let mut timer = st.timer.take();
                let record = LogRecord::PreparedVote {
                    txn,
                    coordinator: st.coordinator,
                    mediator: st.mediator,
                    participants: st.participants.clone(),
                    pages: st.pages.clone(),
                };
                self.disarm(&mut timer);
                self.force_log(p, PART, record, AfterLog::PartVote);
            }
            ParticipantPhase::Prepared | ParticipantPhase::Committed => {
                self.send((p, PART), from, txn, MsgKind::VoteCommit);
            }
            ParticipantPhase::Aborted | ParticipantPhase::UnilaterallyAborted => {
                self.send((p, PART), from, txn, MsgKind::VoteAbort);
            }
        }
    }

    pub(crate) fn on_vote_logged(&mut self, p: SiteId, txn: TxnId) {
        let Some(st) = self.part(p, txn) else { return };
        if st.phase != ParticipantPhase::Working {
            return;
        }
        st.phase = ParticipantPhase::Prepared;
        st.voting = false;
        let (coordinator, mediator) = (st.coordinator, st.mediator);
        self.set_phase(txn, p, ParticipantPhase::Prepared);
        self.send((p, PART), (coordinator, Role::Coordinator), txn, MsgKind::VoteCommit);
        if let Some(m) = mediator {
            self.send((p, PART), (m, Role::Mediator), txn, MsgKind::VoteCommit);
        }
        self.arm_decision_timer(p, txn);
    }

    fn arm_decision_timer(&mut self, p: SiteId, txn: TxnId) {
        let id = self.arm(p, txn, TimerKind::Decision, self.timeouts.decision_wait_ms);
        self.part(p, txn).expect("participant state").timer = Some(id);
    }

    /// `ack` is false for decisions learned from a status reply, which the
    /// replier does not track.
    fn on_decision(&mut self, p: SiteId, txn: TxnId, from: (SiteId, Role), outcome: Outcome, ack: bool) {
        let from_decider = ack && from.1 != Role::Participant;
        let wants_ack = from_decider && (outcome == Outcome::Abort || self.protocol.acks_commit());
        let now = self.now();
        let Some(st) = self.part(p, txn) else {
            let logged = self.sites[p.0].logged_decision(txn);
            if outcome == Outcome::Commit && logged == Some(Outcome::Abort) && self.sites[p.0].has_logged(txn, LogKind::PreparedVote) {
                self.safety.push(SafetyEvent::CommitAfterUnilateralAbort { txn, site: p, at: now });
            }
            if from_decider {
                self.send((p, PART), from, txn, MsgKind::Ack);
            }
            return;
        };
        match st.phase {
            ParticipantPhase::Working => {
                if outcome == Outcome::Abort && !st.voting {
                    self.abort_local(p, txn);
                }
            }
            ParticipantPhase::Prepared => {
                if let Some(pending) = st.applying {
                    if wants_ack {
                        st.pending_acks.push(from);
                    }
                    if pending == Outcome::Abort && outcome == Outcome::Commit && self.protocol == Protocol::ShortCommit {
                        self.safety.push(SafetyEvent::CommitAfterUnilateralAbort { txn, site: p, at: now });
                    }
                    return;
                }
                st.applying = Some(outcome);
                if wants_ack {
                    st.pending_acks.push(from);
                }
                let mut timer = st.timer.take();
                self.disarm(&mut timer);
                self.note_decided(txn, p);
                let record = match outcome {
                    Outcome::Commit => LogRecord::Commit { txn, participants: Vec::new() },
                    Outcome::Abort => LogRecord::Abort { txn, participants: Vec::new() },
                };
                if outcome == Outcome::Abort || self.protocol.forces_participant_commit() {
                    self.force_log(p, PART, record, AfterLog::PartDecision);
                } else {
                    self.sites[p.0].append_unforced(record);
                    self.on_decision_logged(p, txn);
                }
            }
            ParticipantPhase::Committed | ParticipantPhase::Aborted => {
                if st.phase.outcome() == Some(outcome) && wants_ack {
                    self.send((p, PART), from, txn, MsgKind::Ack);
                }
            }
            ParticipantPhase::UnilaterallyAborted => {
                if outcome == Outcome::Commit {
                    self.safety.push(SafetyEvent::CommitAfterUnilateralAbort { txn, site: p, at: now });
                }
                // Ack either way so the sender stops retrying.
                if from_decider {
                    self.send((p, PART), from, txn, MsgKind::Ack);
                }
            }
        }
    }

    pub(crate) fn on_decision_logged(&mut self, p: SiteId, txn: TxnId) {
        let Some(st) = self.part(p, txn) else { return };
        let Some(outcome) = st.applying.take() else { return };
        let phase = match outcome {
            Outcome::Commit => ParticipantPhase::Committed,
            Outcome::Abort => ParticipantPhase::Aborted,
        };
        self.settle(p, txn, phase);
    }

    /// Enter a terminal phase: release locks and send queued acks.
    fn settle(&mut self, p: SiteId, txn: TxnId, phase: ParticipantPhase) {
        let st = self.part(p, txn).expect("participant state");
        st.phase = phase;
        st.locked = 0;
        let acks = std::mem::take(&mut st.pending_acks);
        let mut timer = st.timer.take();
        self.disarm(&mut timer);
        self.sites[p.0].release_all(txn);
        for to in acks {
            self.send((p, PART), to, txn, MsgKind::Ack);
        }
        self.note_terminal(txn, p, phase);
    }

    /// Count the attempt as blocked if every decision source has failed
    /// since the commit phase began.
    fn note_blocking(&mut self, txn: TxnId) {
        let r = &self.records[txn.0 as usize];
        let since = r.commit_phase_start.unwrap_or(r.start);
        let coordinator_gone = self.failed_since(r.coordinator, since);
        let mediator_gone = match (self.protocol.has_mediator(), r.mediator) {
            (true, Some(m)) => self.failed_since(m, since),
            _ => true,
        };
        if coordinator_gone && mediator_gone {
            self.rec(txn).blocked = true;
        }
    }

    pub(crate) fn on_decision_timer(&mut self, p: SiteId, txn: TxnId) {
        let Some(st) = self.part(p, txn) else { return };
        if st.phase != ParticipantPhase::Prepared {
            return;
        }
        let (applying, coordinator) = (st.applying.is_some(), st.coordinator);
        self.note_blocking(txn);
        if applying {
            self.arm_decision_timer(p, txn);
        } else if self.protocol == Protocol::ShortCommit {
            self.part(p, txn).expect("participant state").applying = Some(Outcome::Abort);
            self.note_decided(txn, p);
            let record = LogRecord::Abort { txn, participants: Vec::new() };
            self.force_log(p, PART, record, AfterLog::PartUnilateral);
        } else {
            self.send((p, PART), (coordinator, Role::Coordinator), txn, MsgKind::StatusInquiry);
            self.arm_decision_timer(p, txn);
        }
    }

    pub(crate) fn on_unilateral_logged(&mut self, p: SiteId, txn: TxnId) {
        let Some(st) = self.part(p, txn) else { return };
        if st.phase != ParticipantPhase::Prepared {
            return;
        }
        st.applying = None;
        let coordinator = st.coordinator;
        let mediator = st.mediator;
        let others: Vec<SiteId> = st.participants.iter().copied().filter(|&q| q != p).collect();
        self.settle(p, txn, ParticipantPhase::UnilaterallyAborted);
        let abort = decision_msg(Outcome::Abort);
        for q in others {
            self.send((p, PART), (q, PART), txn, abort.clone());
        }
        self.send((p, PART), (coordinator, Role::Coordinator), txn, abort.clone());
        if let Some(m) = mediator {
            self.send((p, PART), (m, Role::Mediator), txn, abort);
        }
    }

    fn on_part_inquiry(&mut self, p: SiteId, txn: TxnId, from: (SiteId, Role)) {
        let status = match self.part(p, txn) {
            Some(st) => st.status(),
            None => match self.sites[p.0].logged_decision(txn) {
                Some(o) => o.into(),
                None => TxnStatus::Unknown,
            },
        };
        self.send((p, PART), from, txn, MsgKind::StatusReply(status));
    }

    /// Rebuild a prepared participant from its PreparedVote record.
    pub(crate) fn recover_participant(&mut self, p: SiteId, txn: TxnId, record: LogRecord) {
        let LogRecord::PreparedVote { coordinator, mediator, participants, pages, .. } = record else {
            unreachable!("recovery needs a PreparedVote record")
        };
        let mut st = ParticipantState::new(coordinator, pages.clone());
        st.phase = ParticipantPhase::Prepared;
        st.mediator = mediator;
        st.participants = participants;
        st.work_done = true;
        st.next_page = pages.len();
        let site = &mut self.sites[p.0];
        site.readmit(txn);
        st.locked = pages.iter().filter(|&&pg| site.acquire_page(txn, pg) == LockResult::Granted).count();
        self.roles[p.0].participants.insert(txn, st);
        self.send((p, PART), (coordinator, Role::Coordinator), txn, MsgKind::StatusInquiry);
        if let Some(m) = mediator {
            self.send((p, PART), (m, Role::Mediator), txn, MsgKind::StatusInquiry);
        }
        self.arm_decision_timer(p, txn);
    }
}
