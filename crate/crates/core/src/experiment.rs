//! Multi-trial experiments and parameter sweeps.

use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::metrics::{AtomicityViolation, ReportRow, RunMetrics};
use crate::protocol::Protocol;
use crate::sim::{run_once, SimError};

pub const MPL_SWEEP: [usize; 5] = [4, 5, 6, 7, 8];
pub const MPL_SWEEP_FAILURE_PROB: f64 = 0.005;
pub const FAILURE_SWEEP: [f64; 6] = [0.0, 0.01, 0.02, 0.03, 0.04, 0.05];
/// The failure sweep's conflict counts at p = 0 sit at the MPL 5 level of
/// the MPL sweep, so it runs there.
pub const FAILURE_SWEEP_MPL: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    Mpl,
    Failure,
}

impl std::str::FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mpl" => Ok(SweepAxis::Mpl),
            "failure" => Ok(SweepAxis::Failure),
            other => Err(format!("unknown sweep `{other}` (expected mpl or failure)")),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: SimConfig,
    /// One entry per trial, seeds `config.seed ..`.
    pub trials: Vec<RunMetrics>,
    pub mean: RunMetrics,
    /// Violations found in any trial, with the trial's seed.
    pub violations: Vec<(u64, AtomicityViolation)>,
}

impl ExperimentResult {
    pub fn row(&self) -> ReportRow {
        ReportRow {
            protocol: self.config.protocol,
            seed: self.config.seed,
            mpl: self.config.mpl,
            failure_prob: self.config.failure_prob,
            metrics: self.mean.clone(),
        }
    }
}

/// Run every (config, seed) job, in parallel where threads exist.
type JobResult = Result<(RunMetrics, Vec<AtomicityViolation>), SimError>;

fn run_jobs(jobs: &[(SimConfig, u64)]) -> Vec<JobResult> {
    let run = |(cfg, seed): &(SimConfig, u64)| run_once(cfg, *seed).map(|o| (o.metrics, o.violations));
    #[cfg(not(target_arch = "wasm32"))]
    {
        use std::sync::atomic::{AtomicUsize, Ordering};
        use std::sync::Mutex;
        let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len()).max(1);
        if threads > 1 {
            let next = AtomicUsize::new(0);
            let results: Mutex<Vec<Option<JobResult>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
            std::thread::scope(|s| {
                for _ in 0..threads {
                    s.spawn(|| loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= jobs.len() {
                            break;
                        }
                        let r = run(&jobs[i]);
                        results.lock().expect("results lock")[i] = Some(r);
                    });
                }
            });
            return results.into_inner().expect("results lock").into_iter().map(|r| r.expect("job ran")).collect();
        }
    }
    jobs.iter().map(run).collect()
}

/// Average `cfg.trials` independent runs.
pub fn run_experiment(cfg: &SimConfig) -> Result<ExperimentResult, SimError> {
    Ok(run_experiments(std::slice::from_ref(cfg))?.remove(0))
}

/// Several experiments sharing one job pool.
pub fn run_experiments(cfgs: &[SimConfig]) -> Result<Vec<ExperimentResult>, SimError> {
    let (done, err) = run_experiments_partial(cfgs);
    match err {
        Some(e) => Err(e),
        None => Ok(done),
    }
}

/// Like [`run_experiments`], but keeps the results that precede the first
/// failing configuration.
pub fn run_experiments_partial(cfgs: &[SimConfig]) -> (Vec<ExperimentResult>, Option<SimError>) {
    for cfg in cfgs {
        if let Err(e) = cfg.validate() {
            return (Vec::new(), Some(e.into()));
        }
    }
    let jobs: Vec<(SimConfig, u64)> = cfgs.iter().flat_map(|c| (0..c.trials as u64).map(move |k| (c.clone(), c.seed + k))).collect();
    let mut results = run_jobs(&jobs).into_iter();
    let mut done = Vec::new();
    for c in cfgs {
        let mut trials = Vec::with_capacity(c.trials);
        let mut violations = Vec::new();
        for (k, r) in results.by_ref().take(c.trials).enumerate() {
            match r {
                Ok((m, v)) => {
                    trials.push(m);
                    violations.extend(v.into_iter().map(|v| (c.seed + k as u64, v)));
                }
                Err(e) => return (done, Some(e)),
            }
        }
        done.push(ExperimentResult { config: c.clone(), mean: RunMetrics::mean(&trials), trials, violations });
    }
    (done, None)
}

/// Configurations of a sweep, protocol-major.
pub fn sweep_configs(base: &SimConfig, axis: SweepAxis) -> Vec<SimConfig> {
    let mut out = Vec::new();
    for protocol in Protocol::ALL {
        match axis {
            SweepAxis::Mpl => {
                for mpl in MPL_SWEEP {
                    out.push(SimConfig { protocol, mpl, failure_prob: MPL_SWEEP_FAILURE_PROB, ..base.clone() });
                }
            }
            SweepAxis::Failure => {
                for failure_prob in FAILURE_SWEEP {
                    out.push(SimConfig { protocol, mpl: FAILURE_SWEEP_MPL, failure_prob, ..base.clone() });
                }
            }
        }
    }
    out
}

/// 15 rows for the MPL sweep, 18 for the failure sweep.
pub fn sweep(base: &SimConfig, axis: SweepAxis) -> Result<Vec<ReportRow>, SimError> {
    Ok(run_experiments(&sweep_configs(base, axis))?.iter().map(ExperimentResult::row).collect())
}

/// Sweep that returns the rows completed before any run error.
pub fn sweep_partial(base: &SimConfig, axis: SweepAxis) -> (Vec<ReportRow>, Option<SimError>) {
    let (done, err) = run_experiments_partial(&sweep_configs(base, axis));
    (done.iter().map(ExperimentResult::row).collect(), err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_shapes() {
        let base = SimConfig::default();
        assert_eq!(sweep_configs(&base, SweepAxis::Mpl).len(), 15);
        assert_eq!(sweep_configs(&base, SweepAxis::Failure).len(), 18);
        assert!(sweep_configs(&base, SweepAxis::Mpl).iter().all(|c| c.failure_prob == 0.005));
        assert!(sweep_configs(&base, SweepAxis::Failure).iter().all(|c| c.mpl == FAILURE_SWEEP_MPL));
    }

    #[test]
    fn experiment_is_deterministic_and_averages_trials() {
        let cfg = SimConfig { total_txns: 300, trials: 3, failure_prob: 0.02, ..SimConfig::default() };
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.trials.len(), 3);
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.mean.total(), 300.0);
    }
}
