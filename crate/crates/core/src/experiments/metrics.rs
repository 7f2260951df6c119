use std::io::Write;

use crate::env::EnvironmentSpec;
use crate::error::{Error, Result};

/// One online step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRecord {
    /// 1-based step number.
    pub t: usize,
    pub arm: usize,
    pub reward: f64,
    pub best_reward: f64,
    pub violation: bool,
    /// Environment item shown at this step.
    pub item: usize,
}

impl TrajectoryRecord {
    pub fn gap(&self) -> f64 {
        self.best_reward - self.reward
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryLog {
    records: Vec<TrajectoryRecord>,
    horizon: usize,
    truncated: bool,
}

impl TrajectoryLog {
    pub fn with_capacity(horizon: usize, capacity: usize) -> Self {
        Self {
            records: Vec::with_capacity(capacity),
            horizon,
            truncated: false,
        }
    }

    pub fn from_records(records: Vec<TrajectoryRecord>) -> Self {
        let horizon = records.len();
        Self {
            records,
            horizon,
            truncated: false,
        }
    }

    pub fn push(&mut self, record: TrajectoryRecord) {
        self.records.push(record);
    }

    pub fn mark_truncated(&mut self) {
        self.truncated = true;
    }

    pub fn is_truncated(&self) -> bool {
        self.truncated
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[TrajectoryRecord] {
        &self.records
    }

    pub fn items(&self) -> impl Iterator<Item = usize> + '_ {
        self.records.iter().map(|r| r.item)
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.records.len() {
            return Err(Error::Index {
                index: t,
                len: self.records.len(),
            });
        }
        Ok(())
    }

    /// `R(t)` for every prefix, computed with one running sum.
    pub fn regret_curve(&self) -> Vec<f64> {
        let mut sum = 0.0;
        self.records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                sum += r.gap();
                sum / (i + 1) as f64
            })
            .collect()
    }

    /// `E(t)` for every prefix.
    pub fn error_curve(&self) -> Vec<u64> {
        let mut count = 0;
        self.records
            .iter()
            .map(|r| {
                count += u64::from(r.violation);
                count
            })
            .collect()
    }

    /// Writes `t,arm,reward,best_reward,violation,cum_avg_regret,cum_error`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(TRAJECTORY_COLUMNS)?;
        for ((r, regret), error) in self
            .records
            .iter()
            .zip(self.regret_curve())
            .zip(self.error_curve())
        {
            w.write_record(&[
                r.t.to_string(),
                r.arm.to_string(),
                r.reward.to_string(),
                r.best_reward.to_string(),
                u8::from(r.violation).to_string(),
                regret.to_string(),
                error.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub const TRAJECTORY_COLUMNS: [&str; 7] = [
    "t",
    "arm",
    "reward",
    "best_reward",
    "violation",
    "cum_avg_regret",
    "cum_error",
];

/// `R(t) = Σ_{s≤t} (best_reward(s) − reward(s)) / t`.
pub fn cumulative_average_regret(log: &TrajectoryLog, t: usize) -> Result<f64> {
    log.check_t(t)?;
    let sum: f64 = log.records[..t].iter().map(TrajectoryRecord::gap).sum();
    Ok(sum / t as f64)
}

/// `E(t)`: number of violations among the first `t` steps.
pub fn behavioral_error(log: &TrajectoryLog, t: usize) -> Result<u64> {
    log.check_t(t)?;
    Ok(log.records[..t].iter().filter(|r| r.violation).count() as u64)
}

/// Best realized reward of every step of `env`.
pub fn reference_rewards(env: &EnvironmentSpec) -> Vec<f64> {
    (0..env.horizon())
        .map(|t| env.best_reward(t).expect("t within stream"))
        .collect()
}
