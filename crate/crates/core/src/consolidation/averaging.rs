use super::config::{AvgCountMode, ConsolidationSchedule};
use crate::error::{Error, Result};
use crate::nn::ParameterSet;
use crate::scalar::Scalar;

/// In-training running weight average `Theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningAverage<T> {
    average: ParameterSet<T>,
    updates: usize,
}

impl<T: Scalar> RunningAverage<T> {
    /// Starts from `init`, the parameters at the beginning of the task.
    pub fn new(init: ParameterSet<T>) -> Self {
        Self {
            average: init,
            updates: 0,
        }
    }

    pub fn average(&self) -> &ParameterSet<T> {
        &self.average
    }

    pub fn into_average(self) -> ParameterSet<T> {
        self.average
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    /// `Theta <- (n_avg Theta + theta) / (n_avg + 1)` after epoch `epoch`.
    ///
    /// Only valid past warm-up on the averaging cadence. Returns the `n_avg`
    /// used for this update.
    pub fn update(&mut self, theta: &ParameterSet<T>, epoch: usize, schedule: &ConsolidationSchedule) -> Result<usize> {
        self.average.check_layout(theta)?;
        if schedule.avg_interval == 0 || epoch <= schedule.n_warm || !epoch.is_multiple_of(schedule.avg_interval) {
            return Err(Error::Contract(format!(
                "average update at epoch {epoch} outside the guard (n_warm {}, interval {})",
                schedule.n_warm, schedule.avg_interval
            )));
        }
        let n_avg = match schedule.avg_count_mode {
            AvgCountMode::Paper => epoch / schedule.avg_interval,
            AvgCountMode::Snapshots => self.updates,
        };
        let n = T::from_usize_lossy(n_avg);
        let inv = T::one() / (n + T::one());
        for (a, &x) in self.average.values_mut().iter_mut().zip(theta.values()) {
            *a = (n * *a + x) * inv;
        }
        self.updates += 1;
        Ok(n_avg)
    }
}

/// Functional form of [`RunningAverage::update`].
pub fn update_running_average<T: Scalar>(
    mut avg: RunningAverage<T>,
    theta: &ParameterSet<T>,
    epoch: usize,
    schedule: &ConsolidationSchedule,
) -> Result<(RunningAverage<T>, usize)> {
    let n = avg.update(theta, epoch, schedule)?;
    Ok((avg, n))
}
