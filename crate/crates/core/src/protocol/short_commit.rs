//! Short-Commit specifics: the mediator, and coordinator recovery by
//! sequential participant inquiry. The participant-side unilateral abort
//! lives with the rest of the participant role.
//!
//! The mediator keeps votes in memory only and writes no log. On a full set
//! of commit votes it announces commit itself, in parallel with the
//! coordinator's forced commit; on an abort vote it drops the transaction
//! and leaves the abort broadcast to the coordinator.

use crate::protocol::coordinator::decision_msg;
use crate::protocol::{CoordinatorPhase, LogRecord, MediatorPhase, MediatorState, MsgKind, Outcome, Role, TxnId, TxnStatus};
use crate::sim::{TimerKind, World};
use crate::site::SiteId;

const MED: Role = Role::Mediator;
const PART: Role = Role::Participant;

impl World {
    fn med(&mut self, m: SiteId, txn: TxnId) -> Option<&mut MediatorState> {
        self.roles[m.0].mediators.get_mut(&txn)
    }

    pub(crate) fn mediator_receive(&mut self, m: SiteId, txn: TxnId, from: SiteId, kind: MsgKind) {
        match kind {
            MsgKind::Prepare { participants, .. } => self.on_mediator_prepare(m, txn, from, participants),
            MsgKind::VoteCommit => self.on_mediator_vote(m, txn, from, true),
            MsgKind::VoteAbort | MsgKind::AbortDecision => self.on_mediator_vote(m, txn, from, false),
            MsgKind::Ack => self.on_mediator_ack(m, txn, from),
            MsgKind::StatusInquiry => {
                let decision = self.med(m, txn).and_then(|s| s.decision);
                if let Some(o) = decision {
                    self.send((m, MED), (from, PART), txn, MsgKind::StatusReply(o.into()));
                }
            }
            _ => {}
        }
    }

    fn on_mediator_prepare(&mut self, m: SiteId, txn: TxnId, coordinator: SiteId, participants: Vec<SiteId>) {
        if self.roles[m.0].mediators.contains_key(&txn) {
            return;
        }
        let st = MediatorState {
            phase: MediatorPhase::CollectingVotes,
            coordinator,
            participants,
            votes: Default::default(),
            decision: None,
            acks: Default::default(),
            timer: None,
            retries_used: 0,
        };
        self.roles[m.0].mediators.insert(txn, st);
        self.arm_mediator_timer(m, txn, TimerKind::MedVotes, self.timeouts.vote_collection_ms);
    }

    fn arm_mediator_timer(&mut self, m: SiteId, txn: TxnId, kind: TimerKind, delay: u64) {
        let id = self.arm(m, txn, kind, delay);
        self.med(m, txn).expect("mediator state").timer = Some(id);
    }

    fn drop_mediator(&mut self, m: SiteId, txn: TxnId) {
        if let Some(mut st) = self.roles[m.0].mediators.remove(&txn) {
            self.disarm(&mut st.timer);
        }
    }

    fn on_mediator_vote(&mut self, m: SiteId, txn: TxnId, from: SiteId, commit: bool) {
        let Some(st) = self.med(m, txn) else { return };
        match st.phase {
            MediatorPhase::CollectingVotes => {
                st.votes.insert(from, commit);
                if !commit {
                    self.drop_mediator(m, txn);
                } else if st.participants.iter().all(|p| st.votes.get(p) == Some(&true)) {
                    st.phase = MediatorPhase::Deciding;
                    st.decision = Some(Outcome::Commit);
                    let mut timer = st.timer.take();
                    let participants = st.participants.clone();
                    self.disarm(&mut timer);
                    self.record_decision(txn, Outcome::Commit);
                    for p in participants {
                        self.send((m, MED), (p, PART), txn, decision_msg(Outcome::Commit));
                    }
                    self.arm_mediator_timer(m, txn, TimerKind::MedAcks, self.timeouts.decision_wait_ms);
                }
            }
            // A unilateral abort after our commit: the sender will never ack.
            MediatorPhase::Deciding if !commit => {
                st.acks.insert(from);
                self.mediator_maybe_done(m, txn);
            }
            _ => {}
        }
    }

    fn on_mediator_ack(&mut self, m: SiteId, txn: TxnId, from: SiteId) {
        let Some(st) = self.med(m, txn) else { return };
        if st.phase == MediatorPhase::Deciding {
            st.acks.insert(from);
            self.mediator_maybe_done(m, txn);
        }
    }

    fn mediator_maybe_done(&mut self, m: SiteId, txn: TxnId) {
        let Some(st) = self.med(m, txn) else { return };
        if st.participants.iter().all(|p| st.acks.contains(p)) {
            st.phase = MediatorPhase::Done;
            self.drop_mediator(m, txn);
        }
    }

    pub(crate) fn on_mediator_votes_timer(&mut self, m: SiteId, txn: TxnId) {
        let retries = self.timeouts.still_waiting_retries;
        let Some(st) = self.med(m, txn) else { return };
        if st.phase != MediatorPhase::CollectingVotes {
            return;
        }
        if st.retries_used < retries {
            st.retries_used += 1;
            let missing: Vec<SiteId> = st.participants.iter().copied().filter(|p| !st.votes.contains_key(p)).collect();
            for p in missing {
                self.send((m, MED), (p, PART), txn, MsgKind::StillWaiting);
            }
            self.arm_mediator_timer(m, txn, TimerKind::MedVotes, self.timeouts.vote_collection_ms);
        } else {
            // Give up; the coordinator owns the abort.
            self.drop_mediator(m, txn);
        }
    }

    pub(crate) fn on_mediator_ack_timer(&mut self, m: SiteId, txn: TxnId) {
        let Some(st) = self.med(m, txn) else { return };
        let missing: Vec<SiteId> = st.participants.iter().copied().filter(|p| !st.acks.contains(p)).collect();
        for p in missing {
            self.send((m, MED), (p, PART), txn, decision_msg(Outcome::Commit));
        }
        self.arm_mediator_timer(m, txn, TimerKind::MedAcks, self.timeouts.decision_wait_ms);
    }

    /// Ask participants one at a time, in site order.
    pub(crate) fn start_sc_recovery(&mut self, c: SiteId, txn: TxnId) {
        self.ask_next_participant(c, txn);
    }

    fn ask_next_participant(&mut self, c: SiteId, txn: TxnId) {
        let st = self.coord(c, txn).expect("coordinator state");
        let mut order = st.participants.clone();
        order.sort();
        match order.get(st.inquiry_next) {
            Some(&p) => {
                self.send((c, Role::Coordinator), (p, PART), txn, MsgKind::StatusInquiry);
                self.arm_inquiry_timer(c, txn);
            }
            None => self.decide_abort(c, txn),
        }
    }

    pub(crate) fn sc_inquiry_timer(&mut self, c: SiteId, txn: TxnId) {
        let Some(st) = self.coord(c, txn) else { return };
        if st.phase != CoordinatorPhase::Recovering {
            return;
        }
        st.inquiry_next += 1;
        self.ask_next_participant(c, txn);
    }

    pub(crate) fn sc_status_reply(&mut self, c: SiteId, txn: TxnId, from: SiteId, status: TxnStatus) {
        let Some(st) = self.coord(c, txn) else { return };
        if st.phase != CoordinatorPhase::Recovering {
            return;
        }
        st.replies.insert(from, status);
        let mut timer = st.timer.take();
        match status {
            TxnStatus::Committed => {
                // The mediator committed; adopt its decision.
                st.phase = CoordinatorPhase::Committing;
                let record = LogRecord::Commit { txn, participants: st.participants.clone() };
                self.disarm(&mut timer);
                self.sites[c.0].append_unforced(record);
                self.on_commit_logged(c, txn);
            }
            TxnStatus::Aborted | TxnStatus::Unknown => {
                st.votes.insert(from, false);
                self.disarm(&mut timer);
                self.decide_abort(c, txn);
            }
            TxnStatus::Prepared => {
                // Nobody decided yet: collect votes again.
                st.phase = CoordinatorPhase::CollectingVotes;
                st.votes.clear();
                st.retries_used = 0;
                let participants = st.participants.clone();
                self.disarm(&mut timer);
                for p in participants {
                    self.send((c, Role::Coordinator), (p, PART), txn, MsgKind::StillWaiting);
                }
                self.arm_votes_timer(c, txn);
            }
        }
    }
}
