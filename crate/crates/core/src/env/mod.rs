//! Simulation environments.
//!
//! An [`EnvironmentSpec`] is a finite stream of steps. Each step points at an
//! [`EnvItem`] (a movie, a patient) carrying the context, the reward of every
//! arm and the allowed flag of every arm. Items are shared behind an `Arc` so
//! re-ordered views (folds, teaching streams) are cheap.

pub mod folds;
pub mod movie;
pub mod warfarin;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ContextVector;

pub use folds::{split_folds, Fold};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Movie,
    Warfarin,
    Synthetic,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Movie => "movie",
            Scenario::Warfarin => "warfarin",
            Scenario::Synthetic => "synthetic",
        })
    }
}

/// One distinct context together with its per-arm reward and allowed flags.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvItem {
    pub context: ContextVector,
    pub rewards: Vec<f64>,
    pub allowed: Vec<bool>,
}

impl EnvItem {
    pub fn best_reward(&self) -> f64 {
        self.rewards
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub allowed: bool,
    pub violation: bool,
    pub best_reward: f64,
}

#[derive(Debug, Clone)]
pub struct EnvironmentSpec {
    scenario: Scenario,
    num_arms: usize,
    dim: usize,
    items: Arc<Vec<EnvItem>>,
    order: Vec<usize>,
}

impl EnvironmentSpec {
    /// Validates items and the step order.
    ///
    /// Every item must have at least one allowed arm and rewards in `[0, 1]`.
    pub fn new(
        scenario: Scenario,
        num_arms: usize,
        items: Vec<EnvItem>,
        order: Vec<usize>,
    ) -> Result<Self> {
        if num_arms == 0 {
            return Err(Error::EmptyArmSet);
        }
        let dim = items
            .first()
            .map(|it| it.context.dim())
            .ok_or_else(|| Error::Construction("environment has no items".into()))?;
        for (i, item) in items.iter().enumerate() {
            if item.context.dim() != dim {
                return Err(Error::Construction(format!(
                    "item {i} has context length {} (expected {dim})",
                    item.context.dim()
                )));
            }
            if item.rewards.len() != num_arms || item.allowed.len() != num_arms {
                return Err(Error::Construction(format!(
                    "item {i} does not cover {num_arms} arms"
                )));
            }
            if let Some(r) = item
                .rewards
                .iter()
                .find(|r| !(r.is_finite() && (0.0..=1.0).contains(*r)))
            {
                return Err(Error::Construction(format!(
                    "item {i} has reward {r} outside [0, 1]"
                )));
            }
            if !item.allowed.iter().any(|&a| a) {
                return Err(Error::Construction(format!("item {i} has no allowed arm")));
            }
        }
        let env = Self {
            scenario,
            num_arms,
            dim,
            items: Arc::new(items),
            order: Vec::new(),
        };
        env.with_order(order)
    }

    /// The same items presented in a different step order.
    pub fn with_order(&self, order: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = order.iter().find(|&&i| i >= self.items.len()) {
            return Err(Error::Index {
                index: bad,
                len: self.items.len(),
            });
        }
        Ok(Self {
            scenario: self.scenario,
            num_arms: self.num_arms,
            dim: self.dim,
            items: Arc::clone(&self.items),
            order,
        })
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn num_arms(&self) -> usize {
        self.num_arms
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of steps in the stream.
    pub fn horizon(&self) -> usize {
        self.order.len()
    }

    pub fn items(&self) -> &[EnvItem] {
        &self.items
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn item_index(&self, t: usize) -> Result<usize> {
        self.order.get(t).copied().ok_or(Error::Index {
            index: t,
            len: self.order.len(),
        })
    }

    pub fn item(&self, t: usize) -> Result<&EnvItem> {
        Ok(&self.items[self.item_index(t)?])
    }

    pub fn context(&self, t: usize) -> Result<&ContextVector> {
        Ok(&self.item(t)?.context)
    }

    pub fn reward(&self, t: usize, arm: usize) -> Result<f64> {
        let item = self.item(t)?;
        self.check_arm(arm)?;
        Ok(item.rewards[arm])
    }

    pub fn allowed(&self, t: usize, arm: usize) -> Result<bool> {
        let item = self.item(t)?;
        self.check_arm(arm)?;
        Ok(item.allowed[arm])
    }

    pub fn allowed_row(&self, t: usize) -> Result<&[bool]> {
        Ok(&self.item(t)?.allowed)
    }

    pub fn best_reward(&self, t: usize) -> Result<f64> {
        Ok(self.item(t)?.best_reward())
    }

    /// Reward is delivered whether or not the arm is allowed.
    pub fn step(&self, t: usize, arm: usize) -> Result<StepOutcome> {
        let item = self.item(t)?;
        self.check_arm(arm)?;
        let allowed = item.allowed[arm];
        Ok(StepOutcome {
            reward: item.rewards[arm],
            allowed,
            violation: !allowed,
            best_reward: item.best_reward(),
        })
    }

    fn check_arm(&self, arm: usize) -> Result<()> {
        if arm >= self.num_arms {
            return Err(Error::Index {
                index: arm,
                len: self.num_arms,
            });
        }
        Ok(())
    }
}
