//! Closed-form regret bounds for the blended agent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub d: usize,
    pub z: f64,
    pub gamma: f64,
    pub sigma_online: f64,
    /// Optimal blend weight; only used by [`theorem2_bound`].
    pub sigma_star: f64,
    pub horizon: u64,
    pub teaching_budget: u64,
    /// Largest context 2-norm over the horizon.
    pub c_max: f64,
    /// `max_k ‖μ̃*_k‖₁`.
    pub mu_star_max: f64,
    /// `max_k ‖μᵉ_k‖₁`. The reward-driven bound adds it to `mu_star_max`
    /// (the derivation bounds the difference by the sum of the maxima).
    pub mu_e_extreme: f64,
}

impl BoundInputs {
    fn validate(&self) -> Result<()> {
        if self.d < 1 {
            return Err(Error::domain("d must be at least 1"));
        }
        if !(self.z > 0.0 && self.z <= 1.0) {
            return Err(Error::domain(format!(
                "z must lie in (0, 1], got {}",
                self.z
            )));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::domain(format!(
                "gamma must lie in (0, 1], got {}",
                self.gamma
            )));
        }
        for (name, s) in [
            ("sigma_online", self.sigma_online),
            ("sigma_star", self.sigma_star),
        ] {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::domain(format!("{name} must lie in [0, 1], got {s}")));
            }
        }
        for (name, x) in [
            ("c_max", self.c_max),
            ("mu_star_max", self.mu_star_max),
            ("mu_e_extreme", self.mu_e_extreme),
        ] {
            if !(x.is_finite() && x >= 0.0) {
                return Err(Error::domain(format!(
                    "{name} must be finite and nonnegative, got {x}"
                )));
            }
        }
        Ok(())
    }
}

/// Thompson sampling regret term `(dγ/z)·sqrt(n^{z+1})·(ln(n)·d)·ln(1/γ)`.
pub fn cts_regret_term(d: usize, z: f64, gamma: f64, n: u64) -> f64 {
    let d = d as f64;
    let n = n as f64;
    (d * gamma / z) * n.powf(z + 1.0).sqrt() * (n.ln() * d) * (1.0 / gamma).ln()
}

/// Regret bound against the reward-driven optimal policy.
///
/// `σ·term(T) + (1−σ)·c_max·T·|μ̃*_max + μᵉ_extreme|`. Zero-weight terms are
/// exactly zero.
pub fn theorem1_bound(b: &BoundInputs) -> Result<f64> {
    b.validate()?;
    if b.horizon < 1 {
        return Err(Error::domain("horizon must be at least 1"));
    }
    let sigma = b.sigma_online;
    let online = if sigma == 0.0 {
        0.0
    } else {
        sigma * cts_regret_term(b.d, b.z, b.gamma, b.horizon)
    };
    let constrained = if sigma == 1.0 {
        0.0
    } else {
        (1.0 - sigma) * b.c_max * b.horizon as f64 * (b.mu_star_max + b.mu_e_extreme).abs()
    };
    Ok(online + constrained)
}

/// Regret bound against the optimal blended policy with weight `σ*`.
///
/// `max(σ*, σ)·term(T) + max(1−σ*, 1−σ)·term(N)`.
pub fn theorem2_bound(b: &BoundInputs) -> Result<f64> {
    b.validate()?;
    if b.horizon < 1 || b.teaching_budget < 1 {
        return Err(Error::domain(
            "horizon and teaching budget must be at least 1",
        ));
    }
    let w_online = b.sigma_star.max(b.sigma_online);
    let w_teach = (1.0 - b.sigma_star).max(1.0 - b.sigma_online);
    let online = if w_online == 0.0 {
        0.0
    } else {
        w_online * cts_regret_term(b.d, b.z, b.gamma, b.horizon)
    };
    let teach = if w_teach == 0.0 {
        0.0
    } else {
        w_teach * cts_regret_term(b.d, b.z, b.gamma, b.teaching_budget)
    };
    Ok(online + teach)
}
