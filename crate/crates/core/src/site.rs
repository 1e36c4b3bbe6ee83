//! A database site: data pages under exclusive page locks, an MPL admission
//! bound, FIFO devices (CPU, data disks, log disk) and a stable log.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::engine::VirtualTime;
use crate::protocol::{LogRecord, Outcome, TxnId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SiteId(pub usize);

impl fmt::Display for SiteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PageId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceTimings {
    pub page_cpu_ms: VirtualTime,
    pub page_disk_ms: VirtualTime,
    pub msg_delay_ms: VirtualTime,
    pub num_cpus: usize,
    pub num_data_disks: usize,
    pub num_log_disks: usize,
}

impl Default for DeviceTimings {
    fn default() -> Self {
        DeviceTimings { page_cpu_ms: 5, page_disk_ms: 15, msg_delay_ms: 50, num_cpus: 1, num_data_disks: 2, num_log_disks: 1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Admission {
    Admitted,
    MplConflict,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LockResult {
    Granted,
    PageConflict { holder: TxnId },
}

/// A single FIFO server. Jobs are reserved in arrival order; the returned
/// instant is the job's completion.
#[derive(Clone, Copy, Debug, Default)]
struct Device {
    free_at: VirtualTime,
}

impl Device {
    fn reserve(&mut self, ready: VirtualTime, service: VirtualTime) -> VirtualTime {
        let start = ready.max(self.free_at);
        self.free_at = start + service;
        self.free_at
    }
}

fn earliest_free(devices: &mut [Device]) -> &mut Device {
    devices.iter_mut().min_by_key(|d| d.free_at).expect("site has no device of this kind")
}

#[derive(Clone, Debug)]
pub struct Site {
    pub id: SiteId,
    mpl_limit: usize,
    up: bool,
    /// Incremented on every crash; continuations carry the epoch they were issued in.
    epoch: u32,
    last_crash: Option<VirtualTime>,
    active: BTreeSet<TxnId>,
    locks: HashMap<PageId, TxnId>,
    held: HashMap<TxnId, Vec<PageId>>,
    cpus: Vec<Device>,
    data_disks: Vec<Device>,
    next_data_disk: usize,
    log_disks: Vec<Device>,
    stable_log: Vec<LogRecord>,
    log_tail: Vec<LogRecord>,
}

impl Site {
    pub fn new(id: SiteId, mpl_limit: usize, timings: &DeviceTimings) -> Self {
        assert!(mpl_limit > 0);
        Site {
            id,
            mpl_limit,
            up: true,
            epoch: 0,
            last_crash: None,
            active: BTreeSet::new(),
            locks: HashMap::new(),
            held: HashMap::new(),
            cpus: vec![Device::default(); timings.num_cpus],
            data_disks: vec![Device::default(); timings.num_data_disks],
            next_data_disk: 0,
            log_disks: vec![Device::default(); timings.num_log_disks],
            stable_log: Vec::new(),
            log_tail: Vec::new(),
        }
    }

    pub fn is_up(&self) -> bool {
        self.up
    }

    pub fn epoch(&self) -> u32 {
        self.epoch
    }

    pub fn last_crash(&self) -> Option<VirtualTime> {
        self.last_crash
    }

    pub fn mpl_limit(&self) -> usize {
        self.mpl_limit
    }

    pub fn active_count(&self) -> usize {
        self.active.len()
    }

    pub fn is_active(&self, txn: TxnId) -> bool {
        self.active.contains(&txn)
    }

    pub fn admit(&mut self, txn: TxnId) -> Admission {
        debug_assert!(self.up);
        if self.active.contains(&txn) {
            return Admission::Admitted;
        }
        if self.active.len() >= self.mpl_limit {
            return Admission::MplConflict;
        }
        self.active.insert(txn);
        assert!(self.active.len() <= self.mpl_limit);
        Admission::Admitted
    }

    /// Re-admit a prepared transaction found in the stable log after a
    /// restart. The active set was empty at restart and held at most
    /// `mpl_limit` transactions before the crash, so the bound still holds.
    pub fn readmit(&mut self, txn: TxnId) {
        self.active.insert(txn);
    }

    pub fn acquire_page(&mut self, txn: TxnId, page: PageId) -> LockResult {
        match self.locks.get(&page) {
            Some(&holder) if holder == txn => LockResult::Granted,
            Some(&holder) => LockResult::PageConflict { holder },
            None => {
                self.locks.insert(page, txn);
                self.held.entry(txn).or_default().push(page);
                LockResult::Granted
            }
        }
    }

    pub fn holder(&self, page: PageId) -> Option<TxnId> {
        self.locks.get(&page).copied()
    }

    pub fn held_by(&self, txn: TxnId) -> usize {
        self.held.get(&txn).map_or(0, Vec::len)
    }

    pub fn held_pages(&self) -> usize {
        self.locks.len()
    }

    /// Frees every page held by `txn` and drops it from the active set.
    pub fn release_all(&mut self, txn: TxnId) -> usize {
        self.active.remove(&txn);
        let pages = self.held.remove(&txn).unwrap_or_default();
        for page in &pages {
            let removed = self.locks.remove(page);
            debug_assert_eq!(removed, Some(txn));
        }
        pages.len()
    }

    /// Reserve one page operation: PageCPU on the earliest-free CPU, then
    /// PageDisk on the next data disk in round-robin order. Returns completion.
    pub fn schedule_page_op(&mut self, now: VirtualTime, t: &DeviceTimings) -> VirtualTime {
        let cpu_done = earliest_free(&mut self.cpus).reserve(now, t.page_cpu_ms);
        let disk = self.next_data_disk;
        self.next_data_disk = (self.next_data_disk + 1) % self.data_disks.len();
        self.data_disks[disk].reserve(cpu_done, t.page_disk_ms)
    }

    /// Reserve a forced log write. The record becomes stable only when
    /// [`Site::complete_forced`] runs at the returned instant.
    pub fn schedule_log_write(&mut self, now: VirtualTime, t: &DeviceTimings) -> VirtualTime {
        earliest_free(&mut self.log_disks).reserve(now, t.page_disk_ms)
    }

    /// A forced write reached the disk; the buffered tail goes with it.
    pub fn complete_forced(&mut self, record: LogRecord) {
        self.stable_log.append(&mut self.log_tail);
        self.stable_log.push(record);
    }

    pub fn append_unforced(&mut self, record: LogRecord) {
        self.log_tail.push(record);
    }

    pub fn stable_log(&self) -> &[LogRecord] {
        &self.stable_log
    }

    /// Stable records followed by the not-yet-flushed tail.
    pub fn log_records(&self) -> impl Iterator<Item = &LogRecord> {
        self.stable_log.iter().chain(self.log_tail.iter())
    }

    /// Latest recorded decision for `txn`, scanning stable log and tail.
    pub fn logged_decision(&self, txn: TxnId) -> Option<Outcome> {
        self.log_records().filter(|r| r.txn() == txn).filter_map(LogRecord::decision).last()
    }

    pub fn has_logged(&self, txn: TxnId, kind: crate::protocol::LogKind) -> bool {
        self.log_records().any(|r| r.txn() == txn && r.kind() == kind)
    }

    /// Loses all volatile state: locks, active set, queued device work and
    /// the unforced log tail. The stable log survives.
    pub fn crash(&mut self, now: VirtualTime) {
        assert!(self.up, "{} crashed while already down", self.id);
        self.up = false;
        self.epoch += 1;
        self.last_crash = Some(now);
        self.active.clear();
        self.locks.clear();
        self.held.clear();
        self.log_tail.clear();
        for d in self.cpus.iter_mut().chain(self.data_disks.iter_mut()).chain(self.log_disks.iter_mut()) {
            d.free_at = now;
        }
    }

    pub fn recover(&mut self) {
        assert!(!self.up, "{} recovered while up", self.id);
        self.up = true;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::LogKind;

    fn site(mpl: usize) -> Site {
        Site::new(SiteId(0), mpl, &DeviceTimings::default())
    }

    #[test]
    fn admission_respects_mpl() {
        let mut s = site(4);
        for i in 0..3 {
            assert_eq!(s.admit(TxnId(i)), Admission::Admitted);
        }
        assert_eq!(s.admit(TxnId(3)), Admission::Admitted);
        assert_eq!(s.admit(TxnId(4)), Admission::MplConflict);
        assert_eq!(s.active_count(), 4);

        let mut s = site(8);
        for i in 0..7 {
            s.admit(TxnId(i));
        }
        assert_eq!(s.admit(TxnId(7)), Admission::Admitted);
    }

    #[test]
    fn page_locks_are_exclusive_and_reentrant() {
        let mut s = site(4);
        assert_eq!(s.acquire_page(TxnId(1), PageId(9)), LockResult::Granted);
        assert_eq!(s.acquire_page(TxnId(1), PageId(9)), LockResult::Granted);
        assert_eq!(s.acquire_page(TxnId(2), PageId(9)), LockResult::PageConflict { holder: TxnId(1) });
        assert_eq!(s.held_by(TxnId(1)), 1);
    }

    #[test]
    fn release_all_is_idempotent() {
        let mut s = site(4);
        s.admit(TxnId(1));
        for p in 0..5 {
            s.acquire_page(TxnId(1), PageId(p));
        }
        assert_eq!(s.release_all(TxnId(1)), 5);
        assert_eq!(s.release_all(TxnId(1)), 0);
        assert_eq!(s.release_all(TxnId(2)), 0);
        assert_eq!(s.held_pages(), 0);
        assert_eq!(s.active_count(), 0);
    }

    #[test]
    fn page_op_timing() {
        let t = DeviceTimings::default();
        let mut s = site(4);
        assert_eq!(s.schedule_page_op(0, &t), 20);

        // CPU still busy for 5 ms when the next request arrives.
        let mut s = site(4);
        s.cpus[0].free_at = 5;
        assert_eq!(s.schedule_page_op(0, &t), 25);

        // Five sequential operations on an idle site.
        let mut s = site(4);
        let mut now = 0;
        for _ in 0..5 {
            now = s.schedule_page_op(now, &t);
        }
        assert_eq!(now, 100);
    }

    #[test]
    fn forced_writes_serialize_on_log_disk() {
        let t = DeviceTimings::default();
        let mut s = site(4);
        assert_eq!(s.schedule_log_write(0, &t), 15);
        assert_eq!(s.schedule_log_write(0, &t), 30);
    }

    #[test]
    fn device_serialization_k_jobs() {
        let t = DeviceTimings::default();
        let mut s = site(4);
        let last = (0..7).map(|_| s.schedule_log_write(100, &t)).last().unwrap();
        assert_eq!(last, 100 + 7 * t.page_disk_ms);
    }

    #[test]
    fn crash_keeps_stable_log_only() {
        let mut s = site(4);
        s.admit(TxnId(1));
        s.acquire_page(TxnId(1), PageId(3));
        s.complete_forced(LogRecord::Commit { txn: TxnId(1), participants: vec![] });
        s.append_unforced(LogRecord::End { txn: TxnId(1) });
        s.crash(10);
        assert_eq!(s.held_pages(), 0);
        assert_eq!(s.active_count(), 0);
        assert!(s.has_logged(TxnId(1), LogKind::CommitRecord));
        assert!(!s.has_logged(TxnId(1), LogKind::EndRecord));
        s.recover();
        assert!(s.is_up());
        assert_eq!(s.epoch(), 1);
    }

    #[test]
    fn forced_write_flushes_tail() {
        let mut s = site(4);
        s.append_unforced(LogRecord::Commit { txn: TxnId(1), participants: vec![] });
        s.complete_forced(LogRecord::Abort { txn: TxnId(2), participants: vec![] });
        s.crash(0);
        assert_eq!(s.logged_decision(TxnId(1)), Some(Outcome::Commit));
    }
}
