//! Warfarin dosing scenario with a synthetic patient cohort.
//!
//! Contexts are 39 clinical features followed by two binary risk flags. Arms
//! are the three dose levels plus a "no dose" arm. A dose arm is disallowed
//! exactly when both risk flags are set; "no dose" is always allowed and never
//! rewarded.

use std::io::Read;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::env::{EnvItem, EnvironmentSpec, Scenario};
use crate::error::{Error, Result};
use crate::model::ContextVector;
use crate::rng::{substream, Purpose};

pub const BASE_FEATURES: usize = 39;
pub const RISK_FLAGS: usize = 2;
pub const NUM_ARMS: usize = 4;
pub const NO_DOSE_ARM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DoseLabel {
    Low,
    Medium,
    High,
}

impl DoseLabel {
    pub fn arm(self) -> usize {
        match self {
            DoseLabel::Low => 0,
            DoseLabel::Medium => 1,
            DoseLabel::High => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DoseLabel::Low => "low",
            DoseLabel::Medium => "medium",
            DoseLabel::High => "high",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "low" => Ok(DoseLabel::Low),
            "medium" => Ok(DoseLabel::Medium),
            "high" => Ok(DoseLabel::High),
            other => Err(Error::parse(
                "warfarin csv",
                format!("unknown dose label `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Patient {
    pub features: Vec<f64>,
    pub flags: [bool; RISK_FLAGS],
    pub label: DoseLabel,
}

impl Patient {
    pub fn both_flags(&self) -> bool {
        self.flags.iter().all(|&f| f)
    }

    pub fn context(&self) -> Result<ContextVector> {
        let mut v = self.features.clone();
        v.extend(self.flags.iter().map(|&f| if f { 1.0 } else { 0.0 }));
        ContextVector::new(v)
    }

    pub fn reward(&self, arm: usize) -> f64 {
        if arm == self.label.arm() {
            1.0
        } else {
            0.0
        }
    }

    pub fn allowed(&self, arm: usize) -> bool {
        arm == NO_DOSE_ARM || !self.both_flags()
    }
}

/// Linear scoring rule with two cut points separating low/medium/high.
#[derive(Debug, Clone, PartialEq)]
pub struct DoseModel {
    pub weights: Vec<f64>,
    pub cuts: (f64, f64),
}

impl DoseModel {
    /// Fixed pseudo-random weights; cut points are set later from the cohort.
    pub fn synthetic(dim: usize) -> Self {
        let mut rng = substream(0x5741_5246, Purpose::Data);
        let normal = Normal::new(0.0, 1.0).expect("valid normal");
        Self {
            weights: (0..dim).map(|_| normal.sample(&mut rng)).collect(),
            cuts: (0.0, 0.0),
        }
    }

    pub fn score(&self, features: &[f64]) -> f64 {
        self.weights.iter().zip(features).map(|(w, x)| w * x).sum()
    }

    pub fn label(&self, features: &[f64]) -> DoseLabel {
        let s = self.score(features);
        if s < self.cuts.0 {
            DoseLabel::Low
        } else if s < self.cuts.1 {
            DoseLabel::Medium
        } else {
            DoseLabel::High
        }
    }

    /// Places the cut points at the tercile boundaries of the cohort's scores.
    pub fn fit_terciles(&mut self, cohort: &[Vec<f64>]) {
        let mut scores: Vec<f64> = cohort.iter().map(|f| self.score(f)).collect();
        if scores.is_empty() {
            return;
        }
        scores.sort_by(f64::total_cmp);
        let at = |q: f64| scores[((scores.len() as f64 * q) as usize).min(scores.len() - 1)];
        self.cuts = (at(1.0 / 3.0), at(2.0 / 3.0));
    }
}

/// One synthetic feature row: a bias term, four continuous measurements in
/// `[0, 1]`, then binary indicators with varying prevalence.
fn synthetic_features<R: Rng + ?Sized>(rng: &mut R) -> Vec<f64> {
    let mut f = Vec::with_capacity(BASE_FEATURES);
    f.push(1.0);
    for _ in 0..4 {
        f.push(rng.random::<f64>());
    }
    for j in 5..BASE_FEATURES {
        let p = 0.1 + 0.4 * ((j % 5) as f64 / 4.0);
        f.push(if rng.random_bool(p) { 1.0 } else { 0.0 });
    }
    f
}

fn draw_flags<R: Rng + ?Sized>(flag_probability: f64, rng: &mut R) -> [bool; RISK_FLAGS] {
    [
        rng.random_bool(flag_probability),
        rng.random_bool(flag_probability),
    ]
}

fn check_probability(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!(
            "flag_probability must lie in [0, 1], got {p}"
        )));
    }
    Ok(())
}

/// Generates `num_patients` synthetic patients labelled by `model`; when
/// `model` is `None` the synthetic dose model is fitted to the cohort.
pub fn generate_patients<R: Rng + ?Sized>(
    num_patients: usize,
    flag_probability: f64,
    model: Option<&DoseModel>,
    rng: &mut R,
) -> Result<Vec<Patient>> {
    if num_patients == 0 {
        return Err(Error::domain("need at least one patient"));
    }
    check_probability(flag_probability)?;
    let features: Vec<Vec<f64>> = (0..num_patients).map(|_| synthetic_features(rng)).collect();
    let model = match model {
        Some(m) => m.clone(),
        None => {
            let mut m = DoseModel::synthetic(BASE_FEATURES);
            m.fit_terciles(&features);
            m
        }
    };
    Ok(features
        .into_iter()
        .map(|f| {
            let label = model.label(&f);
            Patient {
                features: f,
                flags: draw_flags(flag_probability, rng),
                label,
            }
        })
        .collect())
}

/// Reads `f_1,...,f_39,label`; risk flags are drawn with `flag_probability`.
pub fn read_warfarin_csv<Rd: Read, R: Rng + ?Sized>(
    reader: Rd,
    flag_probability: f64,
    rng: &mut R,
) -> Result<Vec<Patient>> {
    check_probability(flag_probability)?;
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected: Vec<String> = (1..=BASE_FEATURES)
        .map(|i| format!("f_{i}"))
        .chain(std::iter::once("label".to_string()))
        .collect();
    if headers
        .iter()
        .map(str::trim)
        .ne(expected.iter().map(String::as_str))
    {
        return Err(Error::parse(
            "warfarin csv",
            "header must be `f_1,...,f_39,label`",
        ));
    }
    let mut patients = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let features = rec
            .iter()
            .take(BASE_FEATURES)
            .map(|cell| {
                cell.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| {
                        Error::parse(
                            "warfarin csv",
                            format!("record {}: bad feature `{cell}`", line + 1),
                        )
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        let label = DoseLabel::parse(&rec[BASE_FEATURES])?;
        patients.push(Patient {
            features,
            flags: draw_flags(flag_probability, rng),
            label,
        });
    }
    Ok(patients)
}

pub fn write_warfarin_csv<W: std::io::Write>(writer: W, patients: &[Patient]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (1..=BASE_FEATURES).map(|i| format!("f_{i}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for p in patients {
        let mut rec: Vec<String> = p.features.iter().map(|x| x.to_string()).collect();
        rec.push(p.label.as_str().into());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// One item per patient, presented in index order unless `order` is given.
pub fn build_warfarin_env(
    patients: &[Patient],
    order: Option<Vec<usize>>,
) -> Result<EnvironmentSpec> {
    let items = patients
        .iter()
        .map(|p| {
            if p.features.len() != BASE_FEATURES {
                return Err(Error::Shape {
                    expected: BASE_FEATURES,
                    found: p.features.len(),
                });
            }
            Ok(EnvItem {
                context: p.context()?,
                rewards: (0..NUM_ARMS).map(|a| p.reward(a)).collect(),
                allowed: (0..NUM_ARMS).map(|a| p.allowed(a)).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let order = order.unwrap_or_else(|| (0..items.len()).collect());
    EnvironmentSpec::new(Scenario::Warfarin, NUM_ARMS, items, order)
}
