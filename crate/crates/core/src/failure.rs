//! Site crash sampling.
//!
//! Each site taking part in a transaction (coordinator, mediator, cohorts)
//! crashes with probability `prob_per_site_per_txn`, at an instant drawn
//! uniformly over the transaction's estimated protocol window. Sampling
//! happens once, when the transaction starts.

use rand::Rng;

use crate::engine::{SimRng, VirtualTime};
use crate::protocol::Role;
use crate::site::SiteId;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FailurePlan {
    pub prob_per_site_per_txn: f64,
    pub downtime_ms: VirtualTime,
    /// Length of the window after transaction start in which a crash may land.
    pub window_ms: VirtualTime,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CrashPoint {
    pub site: SiteId,
    pub role: Role,
    pub at: VirtualTime,
    pub downtime_ms: VirtualTime,
}

impl FailurePlan {
    pub fn none() -> Self {
        FailurePlan { prob_per_site_per_txn: 0.0, downtime_ms: 1, window_ms: 0 }
    }

    /// Sample crash points for the given role sites of a transaction that
    /// starts at `start`. With probability zero the RNG is not consumed.
    pub fn sample_crashes(&self, roles: &[(SiteId, Role)], start: VirtualTime, rng: &mut SimRng) -> Vec<CrashPoint> {
        if self.prob_per_site_per_txn <= 0.0 {
            return Vec::new();
        }
        roles
            .iter()
            .filter_map(|&(site, role)| {
                if rng.gen_bool(self.prob_per_site_per_txn) {
                    let at = start + rng.gen_range(0..=self.window_ms);
                    Some(CrashPoint { site, role, at, downtime_ms: self.downtime_ms })
                } else {
                    None
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::seeded_rng;

    fn roles(n: usize) -> Vec<(SiteId, Role)> {
        (0..n).map(|i| (SiteId(i), if i == 0 { Role::Coordinator } else { Role::Participant })).collect()
    }

    #[test]
    fn zero_probability_never_crashes() {
        let plan = FailurePlan { prob_per_site_per_txn: 0.0, downtime_ms: 500, window_ms: 500 };
        let mut rng = seeded_rng(3);
        for t in 0..1000 {
            assert!(plan.sample_crashes(&roles(6), t, &mut rng).is_empty());
        }
    }

    #[test]
    fn certain_crash_on_single_site() {
        let plan = FailurePlan { prob_per_site_per_txn: 1.0, downtime_ms: 500, window_ms: 500 };
        let mut rng = seeded_rng(3);
        let crashes = plan.sample_crashes(&roles(1), 100, &mut rng);
        assert_eq!(crashes.len(), 1);
        assert!((100..=600).contains(&crashes[0].at));
        assert_eq!(crashes[0].downtime_ms, 500);
    }

    #[test]
    fn expected_crash_count() {
        // p=0.005 over 20,000 transactions with 5 role sites: mean 500, sd ~22.
        let plan = FailurePlan { prob_per_site_per_txn: 0.005, downtime_ms: 500, window_ms: 500 };
        let mut rng = seeded_rng(11);
        let n: usize = (0..20_000).map(|t| plan.sample_crashes(&roles(5), t, &mut rng).len()).sum();
        assert!((400..=600).contains(&n), "{n} crashes");
    }
}
