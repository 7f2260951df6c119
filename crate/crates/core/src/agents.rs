//! Arm-selection policies and the two phases of behavior constrained
//! Thompson sampling: learning a constrained policy from a teacher, then
//! blending it with reward-driven Thompson sampling online.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::EnvironmentSpec;
use crate::error::{Error, Result};
use crate::experiments::{TrajectoryLog, TrajectoryRecord};
use crate::model::{score, ArmPosterior, ContextVector, SamplerParams};
use crate::rng::AgentStreams;

/// How the agent picks arms while the teacher is revealing constraint feedback.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TeachingMethod {
    Cts,
    Random,
}

impl TeachingMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            TeachingMethod::Cts => "cts",
            TeachingMethod::Random => "random",
        }
    }
}

impl fmt::Display for TeachingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Whether the constrained term of the blend uses a posterior draw or the
/// posterior mean.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstrainedTerm {
    #[default]
    Sampled,
    Mean,
}

/// Per-arm posteriors over the allowed indicator, frozen after teaching.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedPolicy {
    posteriors: Vec<ArmPosterior>,
    method: TeachingMethod,
    budget: usize,
}

impl ConstrainedPolicy {
    pub fn new(
        posteriors: Vec<ArmPosterior>,
        method: TeachingMethod,
        budget: usize,
    ) -> Result<Self> {
        let d = posteriors.first().ok_or(Error::EmptyArmSet)?.dim();
        if let Some(p) = posteriors.iter().find(|p| p.dim() != d) {
            return Err(Error::Shape {
                expected: d,
                found: p.dim(),
            });
        }
        Ok(Self {
            posteriors,
            method,
            budget,
        })
    }

    pub fn untrained(num_arms: usize, d: usize, method: TeachingMethod) -> Result<Self> {
        let posteriors = (0..num_arms)
            .map(|_| ArmPosterior::new(d))
            .collect::<Result<Vec<_>>>()?;
        Self::new(posteriors, method, 0)
    }

    pub fn posteriors(&self) -> &[ArmPosterior] {
        &self.posteriors
    }

    pub fn num_arms(&self) -> usize {
        self.posteriors.len()
    }

    pub fn dim(&self) -> usize {
        self.posteriors[0].dim()
    }

    pub fn method(&self) -> TeachingMethod {
        self.method
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    /// Greedy choice on the posterior means `μ̂ᵉ_kᵀc`.
    pub fn greedy_arm(&self, c: &ContextVector) -> Result<usize> {
        let scores = self
            .posteriors
            .iter()
            .map(|p| p.mean_score(c))
            .collect::<Result<Vec<_>>>()?;
        argmax_lowest(&scores)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlendConfig {
    sigma_online: f64,
}

impl BlendConfig {
    pub fn new(sigma_online: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&sigma_online) {
            return Err(Error::domain(format!(
                "sigma_online must lie in [0, 1], got {sigma_online}"
            )));
        }
        Ok(Self { sigma_online })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma_online
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AgentKind {
    /// Contextual Thompson sampling on the online reward only.
    Cts,
    /// Uniformly random arms.
    Random,
    /// Blend of online Thompson sampling and the learned constrained policy.
    Bcts,
    /// Thompson sampling restricted to the true allowed set.
    Mask,
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax_lowest(scores: &[f64]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, &s) in scores.iter().enumerate() {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((k, s));
        }
    }
    best.map(|(k, _)| k).ok_or(Error::EmptyArmSet)
}

/// Argmax restricted to arms flagged in `allowed`.
pub fn masked_argmax(scores: &[f64], allowed: &[bool]) -> Result<usize> {
    if scores.is_empty() {
        return Err(Error::EmptyArmSet);
    }
    if allowed.len() != scores.len() {
        return Err(Error::Shape {
            expected: scores.len(),
            found: allowed.len(),
        });
    }
    let mut best: Option<(usize, f64)> = None;
    for (k, (&s, &ok)) in scores.iter().zip(allowed).enumerate() {
        if ok && best.is_none_or(|(_, b)| s > b) {
            best = Some((k, s));
        }
    }
    best.map(|(k, _)| k).ok_or(Error::InfeasibleRound)
}

/// `σ·online + (1 − σ)·constrained`, arm by arm.
pub fn blend_scores(online: &[f64], constrained: &[f64], sigma: f64) -> Vec<f64> {
    online
        .iter()
        .zip(constrained)
        .map(|(&o, &e)| sigma * o + (1.0 - sigma) * e)
        .collect()
}

/// One Thompson draw per arm scored against `c`.
pub fn thompson_scores<R: Rng + ?Sized>(
    posteriors: &[ArmPosterior],
    v: f64,
    c: &ContextVector,
    rng: &mut R,
) -> Result<Vec<f64>> {
    posteriors
        .iter()
        .map(|p| score(&p.sample(v, rng)?, c))
        .collect()
}

pub fn select_cts<R: Rng + ?Sized>(
    posteriors: &[ArmPosterior],
    v: f64,
    c: &ContextVector,
    rng: &mut R,
) -> Result<usize> {
    if posteriors.is_empty() {
        return Err(Error::EmptyArmSet);
    }
    argmax_lowest(&thompson_scores(posteriors, v, c, rng)?)
}

pub fn select_random<R: Rng + ?Sized>(num_arms: usize, rng: &mut R) -> Result<usize> {
    if num_arms == 0 {
        return Err(Error::EmptyArmSet);
    }
    Ok(rng.random_range(0..num_arms))
}

/// Agent state for one run: online posteriors plus, for the blended kind, the
/// frozen constrained policy.
#[derive(Debug, Clone)]
pub struct Agent {
    kind: AgentKind,
    online: Vec<ArmPosterior>,
    constrained: Option<Arc<ConstrainedPolicy>>,
    blend: Option<BlendConfig>,
    sampler: SamplerParams,
    constrained_sampler: SamplerParams,
    constrained_term: ConstrainedTerm,
}

impl Agent {
    fn plain(kind: AgentKind, num_arms: usize, sampler: SamplerParams) -> Result<Self> {
        if num_arms == 0 {
            return Err(Error::EmptyArmSet);
        }
        let online = (0..num_arms)
            .map(|_| ArmPosterior::new(sampler.dim()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kind,
            online,
            constrained: None,
            blend: None,
            sampler,
            constrained_sampler: sampler,
            constrained_term: ConstrainedTerm::Sampled,
        })
    }

    pub fn cts(num_arms: usize, sampler: SamplerParams) -> Result<Self> {
        Self::plain(AgentKind::Cts, num_arms, sampler)
    }

    pub fn random(num_arms: usize, sampler: SamplerParams) -> Result<Self> {
        Self::plain(AgentKind::Random, num_arms, sampler)
    }

    pub fn mask(num_arms: usize, sampler: SamplerParams) -> Result<Self> {
        Self::plain(AgentKind::Mask, num_arms, sampler)
    }

    /// Blended agent over `policy`. The constrained term uses the online
    /// sampler's scale unless overridden with [`Agent::with_constrained_sampler`].
    pub fn bcts(
        policy: Arc<ConstrainedPolicy>,
        blend: BlendConfig,
        sampler: SamplerParams,
    ) -> Result<Self> {
        if policy.dim() != sampler.dim() {
            return Err(Error::Configuration(format!(
                "constrained policy has dimension {}, sampler {}",
                policy.dim(),
                sampler.dim()
            )));
        }
        let mut agent = Self::plain(AgentKind::Bcts, policy.num_arms(), sampler)?;
        agent.constrained = Some(policy);
        agent.blend = Some(blend);
        Ok(agent)
    }

    pub fn with_constrained_sampler(mut self, sampler: SamplerParams) -> Result<Self> {
        if sampler.dim() != self.sampler.dim() {
            return Err(Error::Configuration(
                "constrained sampler dimension differs".into(),
            ));
        }
        self.constrained_sampler = sampler;
        Ok(self)
    }

    pub fn with_constrained_term(mut self, term: ConstrainedTerm) -> Self {
        self.constrained_term = term;
        self
    }

    pub fn kind(&self) -> AgentKind {
        self.kind
    }

    pub fn num_arms(&self) -> usize {
        self.online.len()
    }

    pub fn dim(&self) -> usize {
        self.sampler.dim()
    }

    pub fn online(&self) -> &[ArmPosterior] {
        &self.online
    }

    pub fn constrained(&self) -> Option<&ConstrainedPolicy> {
        self.constrained.as_deref()
    }

    pub fn sampler(&self) -> &SamplerParams {
        &self.sampler
    }

    /// Online Thompson scores; draws from the online stream only.
    pub fn online_scores(&self, c: &ContextVector, streams: &mut AgentStreams) -> Result<Vec<f64>> {
        thompson_scores(&self.online, self.sampler.v(), c, &mut streams.online)
    }

    /// Constrained-policy scores; draws from the constrained stream only.
    pub fn constrained_scores(
        &self,
        c: &ContextVector,
        streams: &mut AgentStreams,
    ) -> Result<Vec<f64>> {
        let policy = self
            .constrained
            .as_ref()
            .ok_or_else(|| Error::Configuration("no constrained policy attached".into()))?;
        match self.constrained_term {
            ConstrainedTerm::Sampled => thompson_scores(
                policy.posteriors(),
                self.constrained_sampler.v(),
                c,
                &mut streams.constrained,
            ),
            ConstrainedTerm::Mean => policy
                .posteriors()
                .iter()
                .map(|p| p.mean_score(c))
                .collect(),
        }
    }

    pub fn select_cts(&self, c: &ContextVector, streams: &mut AgentStreams) -> Result<usize> {
        argmax_lowest(&self.online_scores(c, streams)?)
    }

    pub fn select_bcts(&self, c: &ContextVector, streams: &mut AgentStreams) -> Result<usize> {
        let blend = self
            .blend
            .ok_or_else(|| Error::Configuration("blended selection needs a blend weight".into()))?;
        let constrained = self.constrained_scores(c, streams)?;
        let online = self.online_scores(c, streams)?;
        argmax_lowest(&blend_scores(&online, &constrained, blend.sigma()))
    }

    /// Samples every arm, then takes the argmax over the allowed ones.
    pub fn select_mask(
        &self,
        c: &ContextVector,
        allowed: &[bool],
        streams: &mut AgentStreams,
    ) -> Result<usize> {
        masked_argmax(&self.online_scores(c, streams)?, allowed)
    }

    /// Picks an arm according to the agent kind. `allowed` is consulted only
    /// by the mask agent.
    pub fn select(
        &self,
        c: &ContextVector,
        allowed: Option<&[bool]>,
        streams: &mut AgentStreams,
    ) -> Result<usize> {
        match self.kind {
            AgentKind::Cts => self.select_cts(c, streams),
            AgentKind::Random => select_random(self.num_arms(), &mut streams.explore),
            AgentKind::Bcts => self.select_bcts(c, streams),
            AgentKind::Mask => {
                let allowed = allowed.ok_or_else(|| {
                    Error::Configuration("mask agent needs the allowed set of every round".into())
                })?;
                self.select_mask(c, allowed, streams)
            }
        }
    }

    /// Updates the online posterior of `arm` only.
    pub fn observe(&mut self, arm: usize, c: &ContextVector, reward: f64) -> Result<()> {
        let len = self.online.len();
        self.online
            .get_mut(arm)
            .ok_or(Error::Index { index: arm, len })?
            .update(c, reward)
    }
}

/// Constraint-learning phase.
///
/// Each of the `budget` rounds draws a context uniformly from the teacher's
/// stream, picks an arm (Thompson sampling on the constraint feedback, or
/// uniformly at random), and updates that arm's posterior with the teacher's
/// allowed indicator (1 = allowed).
pub fn learn_constraints<R: Rng + ?Sized>(
    teacher: &EnvironmentSpec,
    budget: usize,
    method: TeachingMethod,
    sampler: &SamplerParams,
    rng: &mut R,
) -> Result<ConstrainedPolicy> {
    if sampler.dim() != teacher.dim() {
        return Err(Error::Shape {
            expected: teacher.dim(),
            found: sampler.dim(),
        });
    }
    let num_arms = teacher.num_arms();
    let mut posteriors = (0..num_arms)
        .map(|_| ArmPosterior::new(teacher.dim()))
        .collect::<Result<Vec<_>>>()?;
    if budget > 0 && teacher.horizon() == 0 {
        return Err(Error::domain(
            "teacher environment has an empty context stream",
        ));
    }
    for _ in 0..budget {
        let t = rng.random_range(0..teacher.horizon());
        let c = teacher.context(t)?;
        let arm = match method {
            TeachingMethod::Cts => select_cts(&posteriors, sampler.v(), c, rng)?,
            TeachingMethod::Random => select_random(num_arms, rng)?,
        };
        let feedback = if teacher.allowed(t, arm)? { 1.0 } else { 0.0 };
        posteriors[arm].update(c, feedback)?;
    }
    ConstrainedPolicy::new(posteriors, method, budget)
}

/// Online recommendation phase: `horizon` rounds of selection and reward
/// feedback. Only the chosen arm's online posterior is updated and no
/// constraint feedback is consumed.
///
/// If the environment stream is shorter than `horizon` the steps it does
/// cover are run and returned inside [`Error::TruncatedRun`].
pub fn run_online(
    env: &EnvironmentSpec,
    agent: &mut Agent,
    horizon: usize,
    streams: &mut AgentStreams,
) -> Result<TrajectoryLog> {
    if horizon == 0 {
        return Err(Error::domain("horizon must be at least 1"));
    }
    if agent.num_arms() != env.num_arms() {
        return Err(Error::Shape {
            expected: env.num_arms(),
            found: agent.num_arms(),
        });
    }
    if agent.dim() != env.dim() {
        return Err(Error::Shape {
            expected: env.dim(),
            found: agent.dim(),
        });
    }
    let steps = horizon.min(env.horizon());
    let mut log = TrajectoryLog::with_capacity(horizon, steps);
    for t in 0..steps {
        let c = env.context(t)?;
        let allowed = match agent.kind() {
            AgentKind::Mask => Some(env.allowed_row(t)?),
            _ => None,
        };
        let arm = agent.select(c, allowed, streams)?;
        let outcome = env.step(t, arm)?;
        agent.observe(arm, c, outcome.reward)?;
        log.push(TrajectoryRecord {
            t: t + 1,
            arm,
            reward: outcome.reward,
            best_reward: outcome.best_reward,
            violation: outcome.violation,
            item: env.item_index(t)?,
        });
    }
    if steps < horizon {
        log.mark_truncated();
        return Err(Error::TruncatedRun {
            requested: horizon,
            partial: Box::new(log),
        });
    }
    Ok(log)
}
