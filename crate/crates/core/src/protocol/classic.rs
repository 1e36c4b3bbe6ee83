//! Presumed Commit coordinator recovery. A restarted coordinator that finds
//! TxnInit without a decision asks every participant what it knows.

use crate::protocol::{CoordinatorPhase, LogRecord, MsgKind, Role, TxnId, TxnStatus};
use crate::sim::{TimerKind, World};
use crate::site::SiteId;

impl World {
    pub(crate) fn start_prc_recovery(&mut self, c: SiteId, txn: TxnId) {
        let participants = self.coord(c, txn).expect("coordinator state").participants.clone();
        for p in participants {
            self.send((c, Role::Coordinator), (p, Role::Participant), txn, MsgKind::StatusInquiry);
        }
        self.arm_inquiry_timer(c, txn);
    }

    pub(crate) fn arm_inquiry_timer(&mut self, c: SiteId, txn: TxnId) {
        let id = self.arm(c, txn, TimerKind::Inquiry, self.timeouts.decision_wait_ms);
        self.coord(c, txn).expect("coordinator state").timer = Some(id);
    }

    /// Any Committed reply means the lost decision was commit. Aborted or
    /// Unknown means some participant never prepared, so commit was never
    /// sent. Prepared from everyone means every vote was yes and nobody has
    /// aborted, so commit is safe (and necessary if the unforced commit
    /// records were lost everywhere).
    pub(crate) fn prc_status_reply(&mut self, c: SiteId, txn: TxnId, from: SiteId, status: TxnStatus) {
        let Some(st) = self.coord(c, txn) else { return };
        if st.phase != CoordinatorPhase::Recovering {
            return;
        }
        st.replies.insert(from, status);
        st.votes.insert(from, status == TxnStatus::Prepared || status == TxnStatus::Committed);
        match status {
            TxnStatus::Committed => self.prc_recover_commit(c, txn),
            TxnStatus::Aborted | TxnStatus::Unknown => self.decide_abort(c, txn),
            TxnStatus::Prepared => {
                if st.replies.len() == st.participants.len() {
                    self.prc_recover_commit(c, txn);
                }
            }
        }
    }

    fn prc_recover_commit(&mut self, c: SiteId, txn: TxnId) {
        let st = self.coord(c, txn).expect("coordinator state");
        st.phase = CoordinatorPhase::Committing;
        let record = LogRecord::Commit { txn, participants: st.participants.clone() };
        let mut timer = st.timer.take();
        self.disarm(&mut timer);
        self.sites[c.0].append_unforced(record);
        self.on_commit_logged(c, txn);
    }

    /// A silent participant may have committed or may never have voted, so
    /// there is no safe unilateral answer; keep asking until it recovers.
    pub(crate) fn prc_inquiry_timer(&mut self, c: SiteId, txn: TxnId) {
        let Some(st) = self.coord(c, txn) else { return };
        if st.phase != CoordinatorPhase::Recovering {
            return;
        }
        let silent: Vec<SiteId> = st.participants.iter().copied().filter(|p| !st.replies.contains_key(p)).collect();
        for p in silent {
            self.send((c, Role::Coordinator), (p, Role::Participant), txn, MsgKind::StatusInquiry);
        }
        self.arm_inquiry_timer(c, txn);
    }
}
