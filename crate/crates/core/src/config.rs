//! Simulation configuration and the plain-text `key=value` config format.

use serde::{Deserialize, Serialize};

use crate::engine::{VirtualTime, DEFAULT_EVENT_CAP};
use crate::protocol::{Protocol, Timeouts};
use crate::site::DeviceTimings;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransType {
    Sequential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub num_sites: usize,
    pub db_size: u32,
    pub trans_type: TransType,
    pub dist_degree: usize,
    pub cohort_size: usize,
    pub mpl: usize,
    pub num_cpus: usize,
    pub num_data_disks: usize,
    pub num_log_disks: usize,
    pub page_cpu: VirtualTime,
    pub page_disk: VirtualTime,
    pub msg_delay: VirtualTime,
    pub total_txns: usize,
    pub failure_prob: f64,
    pub protocol: Protocol,
    pub seed: u64,
    pub trials: usize,
    /// Mean of the exponential inter-arrival time of new transactions.
    pub arrival_ms: f64,
    pub downtime_ms: VirtualTime,
    pub vote_collection_ms: VirtualTime,
    pub decision_wait_ms: VirtualTime,
    pub still_waiting_retries: u32,
    pub exec_wait_ms: VirtualTime,
    pub event_cap: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        let timings = DeviceTimings::default();
        let timeouts = Timeouts::derived(&timings);
        SimConfig {
            num_sites: 15,
            db_size: 2500,
            trans_type: TransType::Sequential,
            dist_degree: 4,
            cohort_size: 5,
            mpl: 4,
            num_cpus: timings.num_cpus,
            num_data_disks: timings.num_data_disks,
            num_log_disks: timings.num_log_disks,
            page_cpu: timings.page_cpu_ms,
            page_disk: timings.page_disk_ms,
            msg_delay: timings.msg_delay_ms,
            total_txns: 20_000,
            failure_prob: 0.0,
            protocol: Protocol::ShortCommit,
            seed: 1,
            trials: 4,
            arrival_ms: 125.0,
            downtime_ms: 10 * timings.msg_delay_ms,
            vote_collection_ms: timeouts.vote_collection_ms,
            decision_wait_ms: timeouts.decision_wait_ms,
            still_waiting_retries: timeouts.still_waiting_retries,
            exec_wait_ms: timeouts.exec_wait_ms,
            event_cap: DEFAULT_EVENT_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key=value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKeyAt { line: usize, key: String },
    #[error("unknown key `{key}`")]
    UnknownKey { key: String },
    #[error("`{key}`: cannot parse `{value}`: {reason}")]
    Type { key: String, value: String, reason: String },
    #[error("`{key}`: {reason}")]
    Range { key: String, reason: String },
}

impl SimConfig {
    pub fn timings(&self) -> DeviceTimings {
        DeviceTimings {
            page_cpu_ms: self.page_cpu,
            page_disk_ms: self.page_disk,
            msg_delay_ms: self.msg_delay,
            num_cpus: self.num_cpus,
            num_data_disks: self.num_data_disks,
            num_log_disks: self.num_log_disks,
        }
    }

    pub fn timeouts(&self) -> Timeouts {
        Timeouts {
            vote_collection_ms: self.vote_collection_ms,
            decision_wait_ms: self.decision_wait_ms,
            still_waiting_retries: self.still_waiting_retries,
            exec_wait_ms: self.exec_wait_ms,
        }
    }

    /// Worst-case execution time of one cohort on an idle site, plus the
    /// request/reply messages.
    pub fn execution_estimate(&self) -> VirtualTime {
        2 * self.msg_delay + self.cohort_size as VirtualTime * (self.page_cpu + self.page_disk)
    }

    pub const KEYS: &'static [&'static str] = &[
        "num_sites",
        "db_size",
        "trans_type",
        "dist_degree",
        "cohort_size",
        "mpl",
        "num_cpus",
        "num_data_disks",
        "num_log_disks",
        "page_cpu",
        "page_disk",
        "msg_delay",
        "total_txns",
        "failure_prob",
        "protocol",
        "seed",
        "trials",
        "arrival_ms",
        "downtime_ms",
        "vote_collection_ms",
        "decision_wait_ms",
        "still_waiting_retries",
        "exec_wait_ms",
        "event_cap",
    ];

    /// Set one field by key. Values are checked for type here and for
    /// range in [`SimConfig::validate`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            value.parse::<T>().map_err(|e| ConfigError::Type { key: key.to_string(), value: value.to_string(), reason: e.to_string() })
        }
        match key {
            "num_sites" => self.num_sites = num(key, value)?,
            "db_size" => self.db_size = num(key, value)?,
            "trans_type" => {
                if !value.eq_ignore_ascii_case("sequential") {
                    return Err(ConfigError::Type {
                        key: key.into(),
                        value: value.into(),
                        reason: "only `sequential` is supported".into(),
                    });
                }
                self.trans_type = TransType::Sequential;
            }
            "dist_degree" => self.dist_degree = num(key, value)?,
            "cohort_size" => self.cohort_size = num(key, value)?,
            "mpl" => self.mpl = num(key, value)?,
            "num_cpus" => self.num_cpus = num(key, value)?,
            "num_data_disks" => self.num_data_disks = num(key, value)?,
            "num_log_disks" => self.num_log_disks = num(key, value)?,
            "page_cpu" => self.page_cpu = num(key, value)?,
            "page_disk" => self.page_disk = num(key, value)?,
            "msg_delay" => self.msg_delay = num(key, value)?,
            "total_txns" => self.total_txns = num(key, value)?,
            "failure_prob" => self.failure_prob = num(key, value)?,
            "protocol" => {
                self.protocol = value.parse().map_err(|reason| ConfigError::Type { key: key.into(), value: value.into(), reason })?
            }
            "seed" => self.seed = num(key, value)?,
            "trials" => self.trials = num(key, value)?,
            "arrival_ms" => self.arrival_ms = num(key, value)?,
            "downtime_ms" => self.downtime_ms = num(key, value)?,
            "vote_collection_ms" => self.vote_collection_ms = num(key, value)?,
            "decision_wait_ms" => self.decision_wait_ms = num(key, value)?,
            "still_waiting_retries" => self.still_waiting_retries = num(key, value)?,
            "exec_wait_ms" => self.exec_wait_ms = num(key, value)?,
            "event_cap" => self.event_cap = num(key, value)?,
            _ => return Err(ConfigError::UnknownKey { key: key.to_string() }),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let range = |key: &str, reason: &str| Err(ConfigError::Range { key: key.into(), reason: reason.into() });
        let positive: [(&str, u64); 16] = [
            ("num_sites", self.num_sites as u64),
            ("db_size", self.db_size as u64),
            ("dist_degree", self.dist_degree as u64),
            ("cohort_size", self.cohort_size as u64),
            ("mpl", self.mpl as u64),
            ("num_cpus", self.num_cpus as u64),
            ("num_data_disks", self.num_data_disks as u64),
            ("num_log_disks", self.num_log_disks as u64),
            ("page_cpu", self.page_cpu),
            ("page_disk", self.page_disk),
            ("msg_delay", self.msg_delay),
            ("trials", self.trials as u64),
            ("downtime_ms", self.downtime_ms),
            ("vote_collection_ms", self.vote_collection_ms),
            ("decision_wait_ms", self.decision_wait_ms),
            ("exec_wait_ms", self.exec_wait_ms),
        ];
        for (key, v) in positive {
            if v == 0 {
                return range(key, "must be positive");
            }
        }
        if self.dist_degree >= self.num_sites {
            return range("dist_degree", "must be smaller than num_sites");
        }
        if self.protocol.has_mediator() && self.dist_degree + 2 > self.num_sites {
            return range("dist_degree", "short-commit needs a separate mediator site");
        }
        if self.cohort_size as u64 > self.db_size as u64 {
            return range("cohort_size", "cannot exceed db_size");
        }
        if !(0.0..=1.0).contains(&self.failure_prob) {
            return range("failure_prob", "must lie in [0, 1]");
        }
        if !(self.arrival_ms.is_finite() && self.arrival_ms > 0.0) {
            return range("arrival_ms", "must be a positive number");
        }
        if self.event_cap == 0 {
            return range("event_cap", "must be positive");
        }
        Ok(())
    }
}

/// Parse a `key=value` config file, then apply `overrides` in order.
/// Blank lines and `#` comments are ignored.
pub fn parse_config(text: &str, overrides: &[(String, String)]) -> Result<SimConfig, ConfigError> {
    let mut cfg = SimConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax { line: idx + 1, text: raw.trim().to_string() })?;
        let key = key.trim();
        if !SimConfig::KEYS.contains(&key) {
            return Err(ConfigError::UnknownKeyAt { line: idx + 1, key: key.to_string() });
        }
        cfg.set(key, value)?;
    }
    for (key, value) in overrides {
        cfg.set(key, value)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_baseline() {
        let cfg = parse_config("", &[]).unwrap();
        assert_eq!(cfg, SimConfig::default());
        assert_eq!(cfg.num_sites, 15);
        assert_eq!(cfg.db_size, 2500);
        assert_eq!(cfg.dist_degree, 4);
        assert_eq!(cfg.cohort_size, 5);
        assert_eq!((cfg.num_cpus, cfg.num_data_disks, cfg.num_log_disks), (1, 2, 1));
        assert_eq!((cfg.page_cpu, cfg.page_disk, cfg.msg_delay), (5, 15, 50));
        assert_eq!(cfg.total_txns, 20_000);
    }

    #[test]
    fn flag_overrides_file() {
        let cfg = parse_config("mpl=4\n", &[("mpl".into(), "7".into())]).unwrap();
        assert_eq!(cfg.mpl, 7);
    }

    #[test]
    fn negative_page_disk_rejected() {
        let err = parse_config("page_disk=-1", &[]).unwrap_err();
        assert!(matches!(err, ConfigError::Type { ref key, .. } if key == "page_disk"), "{err}");
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = parse_config("# comment\nmpl=5\nfoo=1\n", &[]).unwrap_err();
        assert_eq!(err, ConfigError::UnknownKeyAt { line: 3, key: "foo".into() });
    }

    #[test]
    fn range_violations() {
        assert!(matches!(
            parse_config("dist_degree=15", &[]),
            Err(ConfigError::Range { ref key, .. }) if key == "dist_degree"
        ));
        assert!(matches!(
            parse_config("failure_prob=1.5", &[]),
            Err(ConfigError::Range { ref key, .. }) if key == "failure_prob"
        ));
        assert!(matches!(parse_config("mpl=0", &[]), Err(ConfigError::Range { .. })));
    }

    #[test]
    fn syntax_errors_and_comments() {
        assert!(matches!(parse_config("mpl 4", &[]), Err(ConfigError::Syntax { line: 1, .. })));
        let cfg = parse_config("protocol = 2pc   # baseline\n\nfailure_prob=0.01", &[]).unwrap();
        assert_eq!(cfg.protocol, Protocol::TwoPhase);
        assert_eq!(cfg.failure_prob, 0.01);
    }
}
