//! Ablation suites: component ablation, importance metrics, reset strategies
//! and reset frequencies.

use std::fmt;
use std::str::FromStr;

use wsc_core::consolidation::{ImportanceMetric, ResetFrequency, ResetStrategy};

use crate::config::{Method, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Suite {
    /// Replay, averaging only, reset only, both.
    Components,
    Metrics,
    Strategies,
}

impl Suite {
    pub const ALL: [Suite; 3] = [Suite::Components, Suite::Metrics, Suite::Strategies];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Components => "components",
            Suite::Metrics => "metrics",
            Suite::Strategies => "strategies",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Suite::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| format!("unknown suite '{s}' (expected components, metrics or strategies)"))
    }
}

fn labeled(base: &RunConfig, label: String, edit: impl FnOnce(&mut RunConfig)) -> RunConfig {
    let mut cfg = base.clone();
    cfg.method = Method::Wsc;
    edit(&mut cfg);
    cfg.label = Some(label);
    cfg
}

/// Replay without consolidation.
pub fn replay_variant(base: &RunConfig) -> RunConfig {
    labeled(base, "replay".into(), |c| c.method = Method::Replay)
}

/// Averaging only: nothing is reset.
pub fn no_reset_variant(base: &RunConfig) -> RunConfig {
    labeled(base, "wsc_no_reset".into(), |c| {
        c.reset.retain_fraction = 1.0;
        c.schedule.averaging = true;
    })
}

/// Reset only: no running average and no final swap.
pub fn no_avg_variant(base: &RunConfig) -> RunConfig {
    labeled(base, "wsc_no_avg".into(), |c| c.schedule.averaging = false)
}

pub fn full_variant(base: &RunConfig) -> RunConfig {
    labeled(base, "wsc".into(), |c| c.schedule.averaging = true)
}

/// Configurations of one suite, all sharing the base stream, seeds and budgets.
pub fn variants(base: &RunConfig, suite: Suite) -> Vec<RunConfig> {
    match suite {
        Suite::Components => vec![
            replay_variant(base),
            no_reset_variant(base),
            no_avg_variant(base),
            full_variant(base),
        ],
        Suite::Metrics => ImportanceMetric::ALL
            .iter()
            .map(|&m| {
                labeled(base, format!("metric_{m}"), |c| {
                    c.reset.metric = m;
                    c.reset.strategy = ResetStrategy::SoftBlend;
                })
            })
            .collect(),
        Suite::Strategies => {
            let mut out: Vec<RunConfig> = ResetStrategy::ALL
                .iter()
                .map(|&s| {
                    labeled(base, format!("strategy_{s}"), |c| {
                        c.reset.strategy = s;
                        c.schedule.reset_frequency = ResetFrequency::Once;
                    })
                })
                .collect();
            for &f in ResetFrequency::ALL.iter().filter(|&&f| f != ResetFrequency::Once) {
                out.push(labeled(base, format!("frequency_{f}"), |c| {
                    c.reset.strategy = ResetStrategy::SoftBlend;
                    c.schedule.reset_frequency = f;
                }));
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn components_are_definitional() {
        let base = RunConfig::default();
        let v = variants(&base, Suite::Components);
        assert_eq!(v.len(), 4);
        assert_eq!(v[0].method, Method::Replay);
        assert_eq!(v[1].reset.retain_fraction, 1.0);
        assert!(v[1].schedule.averaging);
        assert!(!v[2].schedule.averaging);
        assert_eq!(v[2].reset, base.reset);
        assert_eq!(v[3].reset, base.reset);
        assert_eq!(v[3].schedule, base.schedule);
    }

    #[test]
    fn suites_have_distinct_run_ids() {
        let base = RunConfig::default();
        let mut ids = std::collections::BTreeSet::new();
        for suite in Suite::ALL {
            for cfg in variants(&base, suite) {
                ids.insert(cfg.run_id(20, 0));
            }
        }
        assert_eq!(ids.len(), 4 + 6 + 5 + 2);
    }
}
