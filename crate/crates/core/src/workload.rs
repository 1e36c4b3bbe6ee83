//! Transaction generation: role placement, page selection and arrivals.

use rand::seq::index::sample;
use rand::Rng;

use crate::config::SimConfig;
use crate::engine::{SimRng, VirtualTime};
use crate::protocol::Protocol;
use crate::site::{PageId, SiteId};

/// Roles and data footprint of one transaction attempt.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TxnPlan {
    pub coordinator: SiteId,
    pub mediator: Option<SiteId>,
    pub cohorts: Vec<SiteId>,
    /// `pages[i]` are the distinct pages cohort `i` writes, in access order.
    pub pages: Vec<Vec<PageId>>,
}

impl TxnPlan {
    pub fn page_count(&self) -> usize {
        self.pages.iter().map(Vec::len).sum()
    }
}

/// Draw a plan: coordinator, `dist_degree` cohorts and (Short-Commit) a
/// mediator, all distinct. Sites currently up are preferred; if too few are
/// up the draw falls back to all sites.
pub fn draw_plan(cfg: &SimConfig, protocol: Protocol, up: &[bool], rng: &mut SimRng) -> TxnPlan {
    let needed = 1 + cfg.dist_degree + usize::from(protocol.has_mediator());
    let live: Vec<usize> = (0..cfg.num_sites).filter(|&s| up.get(s).copied().unwrap_or(true)).collect();
    let pool: Vec<usize> = if live.len() >= needed { live } else { (0..cfg.num_sites).collect() };
    assert!(pool.len() >= needed, "not enough sites for a transaction");
    let picked: Vec<SiteId> = sample(rng, pool.len(), needed).into_iter().map(|i| SiteId(pool[i])).collect();
    let coordinator = picked[0];
    let cohorts = picked[1..=cfg.dist_degree].to_vec();
    let mediator = protocol.has_mediator().then(|| picked[needed - 1]);
    let pages = cohorts
        .iter()
        .map(|_| sample(rng, cfg.db_size as usize, cfg.cohort_size).into_iter().map(|p| PageId(p as u32)).collect())
        .collect();
    TxnPlan { coordinator, mediator, cohorts, pages }
}

/// Exponential inter-arrival gap with the given mean, rounded to whole ms.
pub fn next_interarrival(mean_ms: f64, rng: &mut SimRng) -> VirtualTime {
    let u: f64 = rng.gen();
    (-(1.0 - u).ln() * mean_ms).round() as VirtualTime
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::seeded_rng;
    use std::collections::BTreeSet;

    #[test]
    fn default_plan_touches_twenty_pages() {
        let cfg = SimConfig::default();
        let mut rng = seeded_rng(1);
        for _ in 0..200 {
            let plan = draw_plan(&cfg, Protocol::ShortCommit, &[true; 15], &mut rng);
            assert_eq!(plan.cohorts.len(), 4);
            assert_eq!(plan.page_count(), 20);
            let mut sites: BTreeSet<SiteId> = plan.cohorts.iter().copied().collect();
            assert!(sites.insert(plan.coordinator));
            assert!(sites.insert(plan.mediator.unwrap()));
            for pages in &plan.pages {
                let distinct: BTreeSet<_> = pages.iter().collect();
                assert_eq!(distinct.len(), pages.len());
                assert!(pages.iter().all(|p| p.0 < 2500));
            }
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let cfg = SimConfig::default();
        let draw = |seed| {
            let mut rng = seeded_rng(seed);
            (0..50).map(|_| draw_plan(&cfg, Protocol::TwoPhase, &[true; 15], &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
        assert_ne!(draw(9), draw(10));
    }

    #[test]
    fn single_cohort_topology() {
        let cfg = SimConfig { dist_degree: 1, ..SimConfig::default() };
        let mut rng = seeded_rng(2);
        let plan = draw_plan(&cfg, Protocol::TwoPhase, &[true; 15], &mut rng);
        assert_eq!(plan.cohorts.len(), 1);
        assert!(plan.mediator.is_none());
    }

    #[test]
    fn prefers_live_sites() {
        let cfg = SimConfig::default();
        let mut up = [true; 15];
        up[..7].iter_mut().for_each(|u| *u = false);
        let mut rng = seeded_rng(5);
        for _ in 0..100 {
            let plan = draw_plan(&cfg, Protocol::ShortCommit, &up, &mut rng);
            assert!(plan.coordinator.0 >= 7);
            assert!(plan.cohorts.iter().all(|c| c.0 >= 7));
        }
    }

    #[test]
    fn interarrival_mean() {
        let mut rng = seeded_rng(4);
        let n = 20_000;
        let total: u64 = (0..n).map(|_| next_interarrival(100.0, &mut rng)).sum();
        let mean = total as f64 / n as f64;
        assert!((mean - 100.0).abs() < 3.0, "{mean}");
    }
}
