use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

macro_rules! named_enum {
    ($(#[$meta:meta])* $name:ident { $($(#[$vmeta:meta])* $variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
        pub enum $name {
            $($(#[$vmeta])* $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(Error::Config(format!(
                        concat!("unknown ", stringify!($name), " '{}'"),
                        other
                    ))),
                }
            }
        }
    };
}

named_enum! {
    /// How `n_avg` is chosen in the running-average update.
    AvgCountMode {
        /// `n_avg = floor(i / j)` with `i` the epoch index.
        Paper => "paper",
        /// `n_avg` counts earlier updates within the task; the first update copies.
        Snapshots => "snapshots",
    }
}

named_enum! {
    ResetFrequency {
        Once => "once",
        EveryEpoch => "every_epoch",
        EveryIteration => "every_iteration",
    }
}

named_enum! {
    ImportanceMetric {
        /// `|m_hat| * v_hat` from the shadow gradient moments.
        Moment => "moment",
        ParamDrift => "param_drift",
        Fisher => "fisher",
        HessianHutchinson => "hessian_hutchinson",
        FirstMomentOnly => "first_moment_only",
        SecondMomentOnly => "second_moment_only",
    }
}

named_enum! {
    ResetStrategy {
        SoftBlend => "soft_blend",
        RandomReinit => "random_reinit",
        Revert => "revert",
        ShrinkPerturb => "shrink_perturb",
        ContinualBackprop => "continual_backprop",
    }
}

named_enum! {
    RankingScope {
        Global => "global",
        PerLayer => "per_layer",
    }
}

/// Per-task epoch schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsolidationSchedule {
    /// Epochs per task.
    pub n_iter: usize,
    /// Warm-up epochs before the first reset.
    pub n_warm: usize,
    /// Epochs between running-average updates.
    pub avg_interval: usize,
    pub avg_count_mode: AvgCountMode,
    pub reset_frequency: ResetFrequency,
    /// Disables the running average and the end-of-task swap.
    pub averaging: bool,
}

impl ConsolidationSchedule {
    /// `j = 5`, warm-up a quarter of the epochs (at least one).
    pub fn with_epochs(n_iter: usize) -> Self {
        Self {
            n_iter,
            n_warm: (n_iter / 4).max(1).min(n_iter.saturating_sub(1)),
            avg_interval: 5,
            avg_count_mode: AvgCountMode::Snapshots,
            reset_frequency: ResetFrequency::Once,
            averaging: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_iter == 0 {
            return Err(Error::Config("schedule.n_iter must be >= 1".into()));
        }
        if self.n_warm >= self.n_iter {
            return Err(Error::Config(format!(
                "schedule.n_warm ({}) must be below schedule.n_iter ({})",
                self.n_warm, self.n_iter
            )));
        }
        if self.avg_interval == 0 {
            return Err(Error::Config("schedule.avg_interval must be >= 1".into()));
        }
        Ok(())
    }
}

impl Default for ConsolidationSchedule {
    fn default() -> Self {
        Self::with_epochs(20)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResetConfig {
    pub metric: ImportanceMetric,
    /// Fraction `q` of eligible coordinates kept; the rest are reset.
    pub retain_fraction: f64,
    /// Weight on the current value in the soft blend.
    pub blend: f64,
    pub strategy: ResetStrategy,
    pub ranking_scope: RankingScope,
    /// Leave output rows of classes unseen before the task out of scoring and resets.
    pub exclude_unseen_head: bool,
    /// Use raw instead of bias-corrected moments for the moment metrics.
    pub raw_moments: bool,
    pub sp_shrink: f64,
    /// Shrink-and-perturb noise, relative to each layer's init standard deviation.
    pub sp_noise_scale: f64,
    pub cbp_reset_fraction: f64,
    pub hutchinson_probes: usize,
    /// Per-sample gradients averaged by the Fisher metric.
    pub fisher_samples: usize,
}

impl Default for ResetConfig {
    fn default() -> Self {
        Self {
            metric: ImportanceMetric::Moment,
            retain_fraction: 0.2,
            blend: 0.5,
            strategy: ResetStrategy::SoftBlend,
            ranking_scope: RankingScope::Global,
            exclude_unseen_head: true,
            raw_moments: false,
            sp_shrink: 0.5,
            sp_noise_scale: 0.01,
            cbp_reset_fraction: 0.2,
            hutchinson_probes: 8,
            fisher_samples: 128,
        }
    }
}

impl ResetConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64, name: &str| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("reset.{name} must be in [0, 1]")))
            }
        };
        unit(self.retain_fraction, "retain_fraction")?;
        unit(self.blend, "blend")?;
        unit(self.cbp_reset_fraction, "cbp_reset_fraction")?;
        if !(self.sp_shrink.is_finite() && self.sp_noise_scale.is_finite() && self.sp_noise_scale >= 0.0) {
            return Err(Error::Config("reset.sp_shrink / reset.sp_noise_scale must be finite, noise >= 0".into()));
        }
        if self.hutchinson_probes == 0 {
            return Err(Error::Config("reset.hutchinson_probes must be >= 1".into()));
        }
        if self.fisher_samples == 0 {
            return Err(Error::Config("reset.fisher_samples must be >= 1".into()));
        }
        Ok(())
    }

    /// True when `retain_fraction` keeps everything, which disables every strategy but shrink-and-perturb.
    pub fn is_noop(&self) -> bool {
        self.retain_fraction >= 1.0
            && matches!(
                self.strategy,
                ResetStrategy::SoftBlend
                    | ResetStrategy::RandomReinit
                    | ResetStrategy::Revert
                    | ResetStrategy::ContinualBackprop
            )
    }
}
