//! Per-arm Bayesian linear posteriors and the Gaussian weight sampling that
//! drives Thompson sampling.
//!
//! Each arm keeps the precision accumulator `B = I + Σ c cᵀ`, the
//! reward-weighted context sum `g = Σ c r` and the posterior mean
//! `μ̂ = B⁻¹ g`. Weight draws come from `N(μ̂, v² B⁻¹)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default sub-Gaussian reward scale.
pub const DEFAULT_R: f64 = 1.0;
/// Default exploration constant.
pub const DEFAULT_Z: f64 = 0.5;
/// Default confidence parameter.
pub const DEFAULT_GAMMA: f64 = 0.1;

/// Sampling scale `v = R·sqrt((24/z)·d·ln(1/γ))`.
pub fn compute_v(r: f64, z: f64, gamma: f64, d: usize) -> Result<f64> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::domain(format!(
            "R must be positive and finite, got {r}"
        )));
    }
    if !(z > 0.0 && z <= 1.0) {
        return Err(Error::domain(format!("z must lie in (0, 1], got {z}")));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::domain(format!(
            "gamma must lie in (0, 1], got {gamma}"
        )));
    }
    if d < 1 {
        return Err(Error::domain("context dimensionality must be at least 1"));
    }
    Ok(r * ((24.0 / z) * d as f64 * (1.0 / gamma).ln()).sqrt())
}

/// Thompson sampling constants together with the derived scale `v`.
///
/// `gamma = 1` is accepted and yields `v = 0`, i.e. greedy selection on the
/// posterior mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerParams {
    r: f64,
    z: f64,
    gamma: f64,
    d: usize,
    v: f64,
}

impl SamplerParams {
    pub fn new(r: f64, z: f64, gamma: f64, d: usize) -> Result<Self> {
        let v = compute_v(r, z, gamma, d)?;
        Ok(Self { r, z, gamma, d, v })
    }

    /// Default constants (`R = 1`, `z = 0.5`, `γ = 0.1`) for dimensionality `d`.
    pub fn with_defaults(d: usize) -> Result<Self> {
        Self::new(DEFAULT_R, DEFAULT_Z, DEFAULT_GAMMA, d)
    }

    /// Zero-variance sampler: every draw equals the posterior mean.
    pub fn greedy(d: usize) -> Result<Self> {
        Self::new(DEFAULT_R, DEFAULT_Z, 1.0, d)
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn v(&self) -> f64 {
        self.v
    }
}

/// A finite, nonempty feature vector revealed before each decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ContextVector(DVector<f64>);

impl ContextVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::domain(
                "context vectors must have at least one entry",
            ));
        }
        if let Some(bad) = entries.iter().find(|x| !x.is_finite()) {
            return Err(Error::NumericDomain(format!(
                "context entry {bad} is not finite"
            )));
        }
        Ok(Self(DVector::from_vec(entries)))
    }

    pub fn zeros(d: usize) -> Result<Self> {
        Self::new(vec![0.0; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}

impl TryFrom<Vec<f64>> for ContextVector {
    type Error = Error;

    fn try_from(entries: Vec<f64>) -> Result<Self> {
        Self::new(entries)
    }
}

impl From<ContextVector> for Vec<f64> {
    fn from(c: ContextVector) -> Self {
        c.0.as_slice().to_vec()
    }
}

/// A sampled coefficient vector `μ̃`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSample(DVector<f64>);

impl WeightSample {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::NumericDomain(
                "weight sample has non-finite entries".into(),
            ));
        }
        Ok(Self(DVector::from_vec(entries)))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }
}

/// Inner product `μ̃ᵀc`.
pub fn score(w: &WeightSample, c: &ContextVector) -> Result<f64> {
    if w.dim() != c.dim() {
        return Err(Error::Shape {
            expected: w.dim(),
            found: c.dim(),
        });
    }
    Ok(w.0.dot(&c.0))
}

/// Bayesian linear-regression state for one arm.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmPosterior {
    precision: DMatrix<f64>,
    accum: DVector<f64>,
    mean: DVector<f64>,
    update_count: u64,
    // lower Cholesky factor of `precision`
    factor: DMatrix<f64>,
}

impl ArmPosterior {
    /// Fresh posterior: `B = I`, `g = 0`, `μ̂ = 0`.
    pub fn new(d: usize) -> Result<Self> {
        if d < 1 {
            return Err(Error::domain("posterior dimensionality must be at least 1"));
        }
        Ok(Self {
            precision: DMatrix::identity(d, d),
            accum: DVector::zeros(d),
            mean: DVector::zeros(d),
            update_count: 0,
            factor: DMatrix::identity(d, d),
        })
    }

    /// Rebuilds a posterior from persisted `(B, g, μ̂)`. `B` must be SPD.
    pub fn from_parts(
        precision: DMatrix<f64>,
        accum: DVector<f64>,
        mean: DVector<f64>,
        update_count: u64,
    ) -> Result<Self> {
        let d = precision.nrows();
        if d < 1 || precision.ncols() != d {
            return Err(Error::domain(
                "precision matrix must be square and nonempty",
            ));
        }
        for len in [accum.len(), mean.len()] {
            if len != d {
                return Err(Error::Shape {
                    expected: d,
                    found: len,
                });
            }
        }
        if precision
            .iter()
            .chain(accum.iter())
            .chain(mean.iter())
            .any(|x| !x.is_finite())
        {
            return Err(Error::NumericDomain(
                "posterior parts contain non-finite values".into(),
            ));
        }
        if precision != precision.transpose() {
            return Err(Error::InvariantViolation(
                "precision matrix is not symmetric".into(),
            ));
        }
        let factor = precision
            .clone()
            .cholesky()
            .ok_or_else(|| {
                Error::InvariantViolation("precision matrix is not positive definite".into())
            })?
            .unpack();
        Ok(Self {
            precision,
            accum,
            mean,
            update_count,
            factor,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn accum(&self) -> &DVector<f64> {
        &self.accum
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn update_count(&self) -> u64 {
        self.update_count
    }

    /// Posterior-mean score `μ̂ᵀc`.
    pub fn mean_score(&self, c: &ContextVector) -> Result<f64> {
        self.check_dim(c)?;
        Ok(self.mean.dot(c.as_vector()))
    }

    /// Applies `B += c cᵀ`, `g += c r` and re-solves `B μ̂ = g`.
    ///
    /// The state is left untouched on error.
    pub fn update(&mut self, c: &ContextVector, reward: f64) -> Result<()> {
        self.check_dim(c)?;
        if !reward.is_finite() || !(0.0..=1.0).contains(&reward) {
            return Err(Error::NumericDomain(format!(
                "reward {reward} is outside [0, 1]"
            )));
        }
        let x = c.as_vector();
        let mut precision = self.precision.clone();
        precision.ger(1.0, x, x, 1.0);
        let mut accum = self.accum.clone();
        accum.axpy(reward, x, 1.0);

        let chol = precision.clone().cholesky().ok_or_else(|| {
            Error::InvariantViolation("precision matrix lost positive definiteness".into())
        })?;
        self.mean = chol.solve(&accum);
        self.factor = chol.unpack();
        self.precision = precision;
        self.accum = accum;
        self.update_count += 1;
        Ok(())
    }

    /// Draws `μ̃ ~ N(μ̂, v² B⁻¹)`.
    ///
    /// With `B = L Lᵀ`, `μ̂ + v L⁻ᵀ ε` has the required covariance. Consumes
    /// exactly `d` standard normals from `rng` when `v > 0` and none otherwise.
    pub fn sample<R: Rng + ?Sized>(&self, v: f64, rng: &mut R) -> Result<WeightSample> {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::domain(format!(
                "sampling scale must be nonnegative, got {v}"
            )));
        }
        if v == 0.0 {
            return Ok(WeightSample(self.mean.clone()));
        }
        let eps = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let offset = self
            .factor
            .tr_solve_lower_triangular(&eps)
            .ok_or_else(|| Error::InvariantViolation("singular Cholesky factor".into()))?;
        Ok(WeightSample(&self.mean + offset * v))
    }

    fn check_dim(&self, c: &ContextVector) -> Result<()> {
        if c.dim() != self.dim() {
            return Err(Error::Shape {
                expected: self.dim(),
                found: c.dim(),
            });
        }
        Ok(())
    }
}
