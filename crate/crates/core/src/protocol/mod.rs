//! Message and log vocabulary shared by the three commit protocols, plus the
//! per-transaction role state kept in a site's volatile memory.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::{EventId, VirtualTime};
use crate::site::{DeviceTimings, PageId, SiteId};

pub mod classic;
pub mod coordinator;
pub mod participant;
pub mod short_commit;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TxnId(pub u64);

impl fmt::Display for TxnId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Protocol {
    #[serde(rename = "2pc")]
    TwoPhase,
    #[serde(rename = "prc")]
    PresumedCommit,
    #[serde(rename = "short")]
    ShortCommit,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::TwoPhase, Protocol::PresumedCommit, Protocol::ShortCommit];

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::TwoPhase => "2pc",
            Protocol::PresumedCommit => "prc",
            Protocol::ShortCommit => "short",
        }
    }

    /// Coordinator force-writes a TxnInit record before sending Prepare.
    pub fn logs_init(self) -> bool {
        !matches!(self, Protocol::TwoPhase)
    }

    /// Coordinator forces its commit record before announcing the decision.
    pub fn forces_coordinator_commit(self) -> bool {
        !matches!(self, Protocol::PresumedCommit)
    }

    /// Participants force their commit record before releasing locks.
    pub fn forces_participant_commit(self) -> bool {
        !matches!(self, Protocol::PresumedCommit)
    }

    /// Commit decisions are acknowledged. Abort decisions always are.
    pub fn acks_commit(self) -> bool {
        !matches!(self, Protocol::PresumedCommit)
    }

    pub fn has_mediator(self) -> bool {
        matches!(self, Protocol::ShortCommit)
    }

    /// Answer a coordinator gives for a transaction it holds no record of.
    pub fn presumption(self) -> Outcome {
        match self {
            Protocol::PresumedCommit => Outcome::Commit,
            _ => Outcome::Abort,
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "2pc" | "twopc" | "two-phase" => Ok(Protocol::TwoPhase),
            "prc" | "presumed-commit" | "prcom" => Ok(Protocol::PresumedCommit),
            "short" | "short-commit" | "sc" | "newcom" => Ok(Protocol::ShortCommit),
            other => Err(format!("unknown protocol `{other}` (expected 2pc, prc or short)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Commit,
    Abort,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FailReason {
    PageConflict,
    MplConflict,
}

/// What a site knows about a transaction when asked.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TxnStatus {
    Committed,
    Aborted,
    Prepared,
    Unknown,
}

impl From<Outcome> for TxnStatus {
    fn from(o: Outcome) -> Self {
        match o {
            Outcome::Commit => TxnStatus::Committed,
            Outcome::Abort => TxnStatus::Aborted,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MsgKind {
    /// Execution request for one cohort.
    Execute {
        pages: Vec<PageId>,
    },
    WorkDone,
    WorkFailed(FailReason),
    Prepare {
        participants: Vec<SiteId>,
        mediator: Option<SiteId>,
    },
    StillWaiting,
    VoteCommit,
    VoteAbort,
    CommitDecision,
    AbortDecision,
    Ack,
    StatusInquiry,
    StatusReply(TxnStatus),
}

impl MsgKind {
    pub fn name(&self) -> &'static str {
        match self {
            MsgKind::Execute { .. } => "Execute",
            MsgKind::WorkDone => "WorkDone",
            MsgKind::WorkFailed(_) => "WorkFailed",
            MsgKind::Prepare { .. } => "Prepare",
            MsgKind::StillWaiting => "StillWaiting",
            MsgKind::VoteCommit => "VoteCommit",
            MsgKind::VoteAbort => "VoteAbort",
            MsgKind::CommitDecision => "CommitDecision",
            MsgKind::AbortDecision => "AbortDecision",
            MsgKind::Ack => "Ack",
            MsgKind::StatusInquiry => "StatusInquiry",
            MsgKind::StatusReply(_) => "StatusReply",
        }
    }

    /// Execution-phase traffic, as opposed to commit-protocol traffic.
    pub fn is_execution(&self) -> bool {
        matches!(self, MsgKind::Execute { .. } | MsgKind::WorkDone | MsgKind::WorkFailed(_))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProtocolMessage {
    pub kind: MsgKind,
    pub txn: TxnId,
    pub from: SiteId,
    pub from_role: Role,
    pub to: SiteId,
    /// Role instance at `to` the message is addressed to.
    pub to_role: Role,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LogKind {
    TxnInit,
    PreparedVote,
    CommitRecord,
    AbortRecord,
    EndRecord,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LogRecord {
    TxnInit {
        txn: TxnId,
        participants: Vec<SiteId>,
        mediator: Option<SiteId>,
    },
    PreparedVote {
        txn: TxnId,
        coordinator: SiteId,
        mediator: Option<SiteId>,
        participants: Vec<SiteId>,
        pages: Vec<PageId>,
    },
    /// `participants` is filled in by coordinators so that recovery can
    /// re-announce the decision; participants leave it empty.
    Commit {
        txn: TxnId,
        participants: Vec<SiteId>,
    },
    Abort {
        txn: TxnId,
        participants: Vec<SiteId>,
    },
    End {
        txn: TxnId,
    },
}

impl LogRecord {
    pub fn txn(&self) -> TxnId {
        match self {
            LogRecord::TxnInit { txn, .. }
            | LogRecord::PreparedVote { txn, .. }
            | LogRecord::Commit { txn, .. }
            | LogRecord::Abort { txn, .. }
            | LogRecord::End { txn } => *txn,
        }
    }

    pub fn kind(&self) -> LogKind {
        match self {
            LogRecord::TxnInit { .. } => LogKind::TxnInit,
            LogRecord::PreparedVote { .. } => LogKind::PreparedVote,
            LogRecord::Commit { .. } => LogKind::CommitRecord,
            LogRecord::Abort { .. } => LogKind::AbortRecord,
            LogRecord::End { .. } => LogKind::EndRecord,
        }
    }

    pub fn decision(&self) -> Option<Outcome> {
        match self {
            LogRecord::Commit { .. } => Some(Outcome::Commit),
            LogRecord::Abort { .. } => Some(Outcome::Abort),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    Coordinator,
    Mediator,
    Participant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timeouts {
    /// Coordinator (and mediator) wait per vote-collection round.
    pub vote_collection_ms: VirtualTime,
    /// A prepared participant's patience before it re-inquires (classic)
    /// or aborts unilaterally (Short-Commit). Also the ack/inquiry retry period.
    pub decision_wait_ms: VirtualTime,
    pub still_waiting_retries: u32,
    /// Coordinator wait for every cohort to finish executing.
    pub exec_wait_ms: VirtualTime,
}

impl Timeouts {
    pub fn derived(t: &DeviceTimings) -> Self {
        Timeouts {
            vote_collection_ms: 4 * t.msg_delay_ms + 2 * t.page_disk_ms,
            decision_wait_ms: 10 * t.msg_delay_ms,
            still_waiting_retries: 2,
            exec_wait_ms: 20 * t.msg_delay_ms,
        }
    }
}

impl Default for Timeouts {
    fn default() -> Self {
        Self::derived(&DeviceTimings::default())
    }
}

/// Phases shared by the 2PC, PrC and Short-Commit coordinators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoordinatorPhase {
    /// Cohorts executing, or the TxnInit write in flight.
    Init,
    CollectingVotes,
    Committing,
    Aborting,
    /// Restarted from the stable log; resolving an in-doubt transaction.
    Recovering,
    Done,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MediatorPhase {
    CollectingVotes,
    Deciding,
    Done,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParticipantPhase {
    Working,
    Prepared,
    Committed,
    Aborted,
    /// Short-Commit only: decision timer expired while prepared.
    UnilaterallyAborted,
}

impl ParticipantPhase {
    pub fn is_terminal(self) -> bool {
        !matches!(self, ParticipantPhase::Working | ParticipantPhase::Prepared)
    }

    pub fn outcome(self) -> Option<Outcome> {
        match self {
            ParticipantPhase::Committed => Some(Outcome::Commit),
            ParticipantPhase::Aborted | ParticipantPhase::UnilaterallyAborted => Some(Outcome::Abort),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CoordinatorState {
    pub phase: CoordinatorPhase,
    pub participants: Vec<SiteId>,
    pub mediator: Option<SiteId>,
    pub pages: Vec<Vec<PageId>>,
    pub work_done: BTreeSet<SiteId>,
    pub votes: BTreeMap<SiteId, bool>,
    pub expected_acks: BTreeSet<SiteId>,
    pub acks: BTreeSet<SiteId>,
    pub decision: Option<Outcome>,
    pub timer: Option<EventId>,
    pub retries_used: u32,
    /// Recovery inquiry bookkeeping: next participant index to ask, replies so far.
    pub inquiry_next: usize,
    pub replies: BTreeMap<SiteId, TxnStatus>,
    /// Holds an MPL slot at its site (false for states rebuilt by recovery).
    pub admitted: bool,
}

impl CoordinatorState {
    pub fn new(participants: Vec<SiteId>, mediator: Option<SiteId>, pages: Vec<Vec<PageId>>) -> Self {
        CoordinatorState {
            phase: CoordinatorPhase::Init,
            participants,
            mediator,
            pages,
            work_done: BTreeSet::new(),
            votes: BTreeMap::new(),
            expected_acks: BTreeSet::new(),
            acks: BTreeSet::new(),
            decision: None,
            timer: None,
            retries_used: 0,
            inquiry_next: 0,
            replies: BTreeMap::new(),
            admitted: true,
        }
    }

    pub fn all_voted_commit(&self) -> bool {
        self.participants.iter().all(|p| self.votes.get(p) == Some(&true))
    }
}

#[derive(Clone, Debug)]
pub struct MediatorState {
    pub phase: MediatorPhase,
    pub coordinator: SiteId,
    pub participants: Vec<SiteId>,
    pub votes: BTreeMap<SiteId, bool>,
    pub decision: Option<Outcome>,
    pub acks: BTreeSet<SiteId>,
    pub timer: Option<EventId>,
    pub retries_used: u32,
}

#[derive(Clone, Debug)]
pub struct ParticipantState {
    pub phase: ParticipantPhase,
    pub coordinator: SiteId,
    pub mediator: Option<SiteId>,
    pub participants: Vec<SiteId>,
    pub pages: Vec<PageId>,
    pub next_page: usize,
    pub work_done: bool,
    /// PreparedVote write in flight.
    pub voting: bool,
    /// Decision write in flight; further decision senders queue for an ack.
    pub applying: Option<Outcome>,
    pub pending_acks: Vec<(SiteId, Role)>,
    /// Page locks this participant believes it holds.
    pub locked: usize,
    pub timer: Option<EventId>,
}

impl ParticipantState {
    pub fn new(coordinator: SiteId, pages: Vec<PageId>) -> Self {
        ParticipantState {
            phase: ParticipantPhase::Working,
            coordinator,
            mediator: None,
            participants: Vec::new(),
            pages,
            next_page: 0,
            work_done: false,
            voting: false,
            applying: None,
            pending_acks: Vec::new(),
            locked: 0,
            timer: None,
        }
    }

    pub fn status(&self) -> TxnStatus {
        match self.phase {
            ParticipantPhase::Working => TxnStatus::Unknown,
            ParticipantPhase::Prepared => TxnStatus::Prepared,
            ParticipantPhase::Committed => TxnStatus::Committed,
            ParticipantPhase::Aborted | ParticipantPhase::UnilaterallyAborted => TxnStatus::Aborted,
        }
    }
}

/// All role instances hosted in one site's main memory. Keyed by transaction,
/// one map per role, so a (site, txn, role) triple has at most one state.
#[derive(Clone, Debug, Default)]
pub struct SiteRoles {
    pub coordinators: BTreeMap<TxnId, CoordinatorState>,
    pub mediators: BTreeMap<TxnId, MediatorState>,
    pub participants: BTreeMap<TxnId, ParticipantState>,
}

impl SiteRoles {
    pub fn clear(&mut self) {
        self.coordinators.clear();
        self.mediators.clear();
        self.participants.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_timeouts_follow_device_timings() {
        let t = Timeouts::default();
        assert_eq!(t.vote_collection_ms, 230);
        assert_eq!(t.decision_wait_ms, 500);
        assert_eq!(t.still_waiting_retries, 2);
    }

    #[test]
    fn protocol_round_trips_through_str() {
        for p in Protocol::ALL {
            assert_eq!(p.as_str().parse::<Protocol>().unwrap(), p);
        }
        assert!("3pc".parse::<Protocol>().is_err());
    }

    #[test]
    fn presumptions() {
        assert_eq!(Protocol::TwoPhase.presumption(), Outcome::Abort);
        assert_eq!(Protocol::PresumedCommit.presumption(), Outcome::Commit);
        assert_eq!(Protocol::ShortCommit.presumption(), Outcome::Abort);
    }
}
