//! Deterministic discrete-event simulator of a distributed database running
//! one of three atomic commit protocols: two-phase commit, Presumed Commit,
//! and Short-Commit (a mediator-assisted variant that lets prepared
//! participants abort unilaterally).
//!
//! ```
//! use commitsim::{run_once, Protocol, SimConfig};
//!
//! let cfg = SimConfig { protocol: Protocol::TwoPhase, total_txns: 50, ..SimConfig::default() };
//! let out = run_once(&cfg, 7).unwrap();
//! assert_eq!(out.metrics.total(), 50.0);
//! ```

pub mod config;
pub mod engine;
pub mod experiment;
pub mod failure;
pub mod metrics;
pub mod protocol;
pub mod sim;
pub mod site;
pub mod trends;
pub mod workload;

pub use config::{parse_config, ConfigError, SimConfig};
pub use engine::{Engine, EngineError, VirtualTime};
pub use experiment::{run_experiment, run_experiments, sweep, sweep_partial, ExperimentResult, SweepAxis, FAILURE_SWEEP_MPL};
pub use metrics::{emit_csv, emit_table, AtomicityViolation, ReportRow, RunMetrics, TxnOutcomeRecord};
pub use protocol::{Outcome, ParticipantPhase, Protocol, Role, TxnId};
pub use sim::{run_once, RunOutcome, SafetyEvent, ScriptedCrash, ScriptedTxn, SimError, Simulation};
pub use site::{PageId, SiteId};
pub use trends::{failure_trends, mpl_trends, TrendCheck};
