use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::agents::TeachingMethod;
use crate::env::Scenario;
use crate::error::{Error, Result};

pub const SUMMARY_COLUMNS: [&str; 8] = [
    "scenario", "method", "N", "sigma", "fold", "seed", "R_T", "E_T",
];
pub const AGG: &str = "AGG";

/// Which agent produced a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RunMethod {
    Bcts(TeachingMethod),
    Cts,
    Mask,
}

impl RunMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            RunMethod::Bcts(TeachingMethod::Cts) => "bcts-cts",
            RunMethod::Bcts(TeachingMethod::Random) => "bcts-random",
            RunMethod::Cts => "cts",
            RunMethod::Mask => "mask",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "bcts-cts" => Ok(RunMethod::Bcts(TeachingMethod::Cts)),
            "bcts-random" => Ok(RunMethod::Bcts(TeachingMethod::Random)),
            "cts" => Ok(RunMethod::Cts),
            "mask" => Ok(RunMethod::Mask),
            other => Err(Error::parse(
                "summary csv",
                format!("unknown method `{other}`"),
            )),
        }
    }
}

impl fmt::Display for RunMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Identity of one online run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunKey {
    pub method: RunMethod,
    pub budget: Option<usize>,
    pub sigma: Option<f64>,
    pub fold: usize,
    pub seed: u64,
}

impl RunKey {
    /// File stem unique per (scenario, method, N, σ, fold, seed).
    pub fn file_stem(&self, scenario: Scenario) -> String {
        let mut stem = format!("{scenario}_{}", self.method);
        if let Some(n) = self.budget {
            stem.push_str(&format!("_N{n}"));
        }
        if let Some(s) = self.sigma {
            stem.push_str(&format!("_sigma{s}"));
        }
        stem.push_str(&format!("_fold{}_seed{}", self.fold, self.seed));
        stem
    }

    /// Aggregation group: everything but fold and seed.
    pub fn group(&self) -> GroupKey {
        GroupKey {
            method: self.method,
            budget: self.budget,
            sigma: self.sigma,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupKey {
    pub method: RunMethod,
    pub budget: Option<usize>,
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunRow {
    pub key: RunKey,
    pub regret: f64,
    pub error: u64,
}

/// Mean over folds and seeds with the observed range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateRow {
    pub group: GroupKey,
    pub runs: usize,
    pub regret_mean: f64,
    pub regret_min: f64,
    pub regret_max: f64,
    pub error_mean: f64,
    pub error_min: f64,
    pub error_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub scenario: Scenario,
    pub rows: Vec<RunRow>,
    pub aggregates: Vec<AggregateRow>,
}

/// Groups `(group, R, E)` triples in first-appearance order and averages them
/// in input order.
fn aggregate_values(values: impl IntoIterator<Item = (GroupKey, f64, f64)>) -> Vec<AggregateRow> {
    let mut groups: Vec<(GroupKey, Vec<(f64, f64)>)> = Vec::new();
    for (g, r, e) in values {
        match groups.iter_mut().find(|(k, _)| *k == g) {
            Some((_, v)) => v.push((r, e)),
            None => groups.push((g, vec![(r, e)])),
        }
    }
    groups
        .into_iter()
        .map(|(group, vals)| {
            let n = vals.len() as f64;
            let fold = |f: fn(f64, f64) -> f64, init: f64, pick: fn(&(f64, f64)) -> f64| {
                vals.iter().map(pick).fold(init, f)
            };
            AggregateRow {
                group,
                runs: vals.len(),
                regret_mean: vals.iter().map(|v| v.0).sum::<f64>() / n,
                regret_min: fold(f64::min, f64::INFINITY, |v| v.0),
                regret_max: fold(f64::max, f64::NEG_INFINITY, |v| v.0),
                error_mean: vals.iter().map(|v| v.1).sum::<f64>() / n,
                error_min: fold(f64::min, f64::INFINITY, |v| v.1),
                error_max: fold(f64::max, f64::NEG_INFINITY, |v| v.1),
            }
        })
        .collect()
}

impl ResultTable {
    pub fn from_rows(scenario: Scenario, rows: Vec<RunRow>) -> Self {
        let aggregates = aggregate_values(
            rows.iter()
                .map(|r| (r.key.group(), r.regret, r.error as f64)),
        );
        Self {
            scenario,
            rows,
            aggregates,
        }
    }

    pub fn aggregate(
        &self,
        method: RunMethod,
        budget: Option<usize>,
        sigma: Option<f64>,
    ) -> Option<&AggregateRow> {
        let g = GroupKey {
            method,
            budget,
            sigma,
        };
        self.aggregates.iter().find(|a| a.group == g)
    }

    /// Writes the run rows followed by one `AGG` row per group.
    pub fn write_summary_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(SUMMARY_COLUMNS)?;
        for row in &self.rows {
            w.write_record(SummaryRow::from_run(self.scenario, row).fields())?;
        }
        for agg in &self.aggregates {
            w.write_record(SummaryRow::from_aggregate(self.scenario, agg).fields())?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A parsed line of the summary CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scenario: String,
    pub method: RunMethod,
    pub budget: Option<usize>,
    pub sigma: Option<f64>,
    /// Fold index, or `AGG`.
    pub fold: String,
    /// Seed, or `AGG`.
    pub seed: String,
    pub regret: f64,
    pub error: f64,
}

fn opt_string<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl SummaryRow {
    fn from_run(scenario: Scenario, row: &RunRow) -> Self {
        Self {
            scenario: scenario.to_string(),
            method: row.key.method,
            budget: row.key.budget,
            sigma: row.key.sigma,
            fold: row.key.fold.to_string(),
            seed: row.key.seed.to_string(),
            regret: row.regret,
            error: row.error as f64,
        }
    }

    fn from_aggregate(scenario: Scenario, agg: &AggregateRow) -> Self {
        Self {
            scenario: scenario.to_string(),
            method: agg.group.method,
            budget: agg.group.budget,
            sigma: agg.group.sigma,
            fold: AGG.into(),
            seed: AGG.into(),
            regret: agg.regret_mean,
            error: agg.error_mean,
        }
    }

    pub fn is_aggregate(&self) -> bool {
        self.fold == AGG
    }

    pub fn fields(&self) -> [String; 8] {
        [
            self.scenario.clone(),
            self.method.to_string(),
            opt_string(self.budget),
            opt_string(self.sigma),
            self.fold.clone(),
            self.seed.clone(),
            self.regret.to_string(),
            self.error.to_string(),
        ]
    }

    fn group(&self) -> GroupKey {
        GroupKey {
            method: self.method,
            budget: self.budget,
            sigma: self.sigma,
        }
    }
}

fn parse_opt<T: std::str::FromStr>(field: &str, name: &str) -> Result<Option<T>> {
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse()
        .map(Some)
        .map_err(|_| Error::parse("summary csv", format!("bad {name} `{field}`")))
}

fn parse_f64(field: &str, name: &str) -> Result<f64> {
    field
        .parse()
        .map_err(|_| Error::parse("summary csv", format!("bad {name} `{field}`")))
}

pub fn read_summary_csv<R: Read>(reader: R) -> Result<Vec<SummaryRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let missing: Vec<String> = SUMMARY_COLUMNS
        .iter()
        .filter(|c| !headers.iter().any(|h| h == **c))
        .map(|c| c.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingColumns(missing));
    }
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .expect("checked above")
    };
    let idx: Vec<usize> = SUMMARY_COLUMNS.iter().map(|c| col(c)).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let f = |i: usize| rec.get(idx[i]).unwrap_or("");
        rows.push(SummaryRow {
            scenario: f(0).to_string(),
            method: RunMethod::parse(f(1))?,
            budget: parse_opt(f(2), "N")?,
            sigma: parse_opt(f(3), "sigma")?,
            fold: f(4).to_string(),
            seed: f(5).to_string(),
            regret: parse_f64(f(6), "R_T")?,
            error: parse_f64(f(7), "E_T")?,
        });
    }
    Ok(rows)
}

/// Recomputes the `AGG` rows from the per-run rows of a summary.
pub fn recompute_aggregates(rows: &[SummaryRow]) -> Vec<SummaryRow> {
    let scenario = rows.first().map(|r| r.scenario.clone()).unwrap_or_default();
    aggregate_values(
        rows.iter()
            .filter(|r| !r.is_aggregate())
            .map(|r| (r.group(), r.regret, r.error)),
    )
    .into_iter()
    .map(|agg| SummaryRow {
        scenario: scenario.clone(),
        method: agg.group.method,
        budget: agg.group.budget,
        sigma: agg.group.sigma,
        fold: AGG.into(),
        seed: AGG.into(),
        regret: agg.regret_mean,
        error: agg.error_mean,
    })
    .collect()
}
