//! Experiment configuration, read from a TOML file.
//!
//! Only `scenario` and `horizon` (alias `T`) are required; every other key
//! has a default. Unknown keys are rejected.
//!
//! ```toml
//! scenario = "movie"
//! horizon = 5000
//! teaching_budgets = [1000, 5000]
//! sigmas = [0.0, 0.25, 1.0]
//! teaching_methods = ["random"]
//! seeds = [0, 1, 2]
//!
//! [sampler]
//! R = 0.01
//!
//! [movie.synthetic]
//! anticorrelated = true
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::{ConstrainedTerm, TeachingMethod};
use crate::env::movie::{SyntheticMovieConfig, AGE_BANDS, DEFAULT_GENRES, DEFAULT_RATING_DIVISOR};
use crate::env::Scenario;
use crate::error::{Error, Result};
use crate::model::{SamplerParams, DEFAULT_GAMMA, DEFAULT_R, DEFAULT_Z};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    #[serde(rename = "R")]
    pub r: f64,
    pub z: f64,
    pub gamma: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            r: DEFAULT_R,
            z: DEFAULT_Z,
            gamma: DEFAULT_GAMMA,
        }
    }
}

impl SamplerConfig {
    pub fn params(&self, d: usize) -> Result<SamplerParams> {
        SamplerParams::new(self.r, self.z, self.gamma, d)
    }

    fn validate(&self, key: &str) -> Result<()> {
        if !(self.r.is_finite() && self.r > 0.0) {
            return Err(invalid(format!("{key}.R"), "must be positive"));
        }
        if !(self.z > 0.0 && self.z <= 1.0) {
            return Err(invalid(format!("{key}.z"), "must lie in (0, 1]"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(invalid(format!("{key}.gamma"), "must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MovieConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratings_csv: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub genres_csv: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constraint_matrix: Option<PathBuf>,
    pub band_weights: Vec<f64>,
    pub genre_names: Vec<String>,
    pub rating_divisor: f64,
    pub data_seed: u64,
    pub synthetic: SyntheticMovieConfig,
}

impl Default for MovieConfig {
    fn default() -> Self {
        Self {
            ratings_csv: None,
            genres_csv: None,
            constraint_matrix: None,
            band_weights: vec![1.0; AGE_BANDS.len()],
            genre_names: DEFAULT_GENRES.iter().map(|s| s.to_string()).collect(),
            rating_divisor: DEFAULT_RATING_DIVISOR,
            data_seed: 7,
            synthetic: SyntheticMovieConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WarfarinConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    pub num_patients: usize,
    pub flag_probability: f64,
    pub data_seed: u64,
}

impl Default for WarfarinConfig {
    fn default() -> Self {
        Self {
            csv: None,
            num_patients: 2000,
            flag_probability: 0.5,
            data_seed: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub write_trajectories: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            write_trajectories: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    #[serde(alias = "T")]
    pub horizon: usize,
    #[serde(default = "default_budgets")]
    pub teaching_budgets: Vec<usize>,
    #[serde(default = "default_sigmas")]
    pub sigmas: Vec<f64>,
    #[serde(default = "default_methods")]
    pub teaching_methods: Vec<TeachingMethod>,
    #[serde(default = "default_folds")]
    pub n_folds: usize,
    #[serde(default = "default_train_size")]
    pub train_size: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub constrained_term: ConstrainedTerm,
    /// Also run the plain CTS (σ = 1) and mask agents.
    #[serde(default = "default_true")]
    pub baselines: bool,
    #[serde(default)]
    pub sampler: SamplerConfig,
    /// Sampler for the constrained term; defaults to `sampler`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constrained_sampler: Option<SamplerConfig>,
    /// Sampler for CTS teaching; defaults to `sampler`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teaching_sampler: Option<SamplerConfig>,
    #[serde(default)]
    pub movie: MovieConfig,
    #[serde(default)]
    pub warfarin: WarfarinConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_budgets() -> Vec<usize> {
    vec![50_000]
}

fn default_sigmas() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 0.75, 1.0]
}

fn default_methods() -> Vec<TeachingMethod> {
    vec![TeachingMethod::Cts, TeachingMethod::Random]
}

fn default_folds() -> usize {
    5
}

fn default_train_size() -> usize {
    200
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_true() -> bool {
    true
}

fn invalid(key: impl Into<String>, message: impl Into<String>) -> Error {
    Error::InvalidConfig {
        key: key.into(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    /// Defaults for everything but the scenario and horizon.
    pub fn new(scenario: Scenario, horizon: usize) -> Self {
        Self {
            scenario,
            horizon,
            teaching_budgets: default_budgets(),
            sigmas: default_sigmas(),
            teaching_methods: default_methods(),
            n_folds: default_folds(),
            train_size: default_train_size(),
            seeds: default_seeds(),
            constrained_term: ConstrainedTerm::default(),
            baselines: true,
            sampler: SamplerConfig::default(),
            constrained_sampler: None,
            teaching_sampler: None,
            movie: MovieConfig::default(),
            warfarin: WarfarinConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str, source_name: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| Error::parse(source_name, e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::parse("config", e.to_string()))
    }

    pub fn constrained_sampler(&self) -> SamplerConfig {
        self.constrained_sampler.unwrap_or(self.sampler)
    }

    pub fn teaching_sampler(&self) -> SamplerConfig {
        self.teaching_sampler.unwrap_or(self.sampler)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenario == Scenario::Synthetic {
            return Err(invalid("scenario", "must be `movie` or `warfarin`"));
        }
        if self.horizon < 1 {
            return Err(invalid("horizon", "must be at least 1"));
        }
        if self.teaching_budgets.is_empty() {
            return Err(invalid("teaching_budgets", "must not be empty"));
        }
        if self.sigmas.is_empty() {
            return Err(invalid("sigmas", "must not be empty"));
        }
        for (i, s) in self.sigmas.iter().enumerate() {
            if !(0.0..=1.0).contains(s) {
                return Err(invalid(
                    format!("sigmas[{i}]"),
                    format!("{s} is outside [0, 1]"),
                ));
            }
        }
        if self.teaching_methods.is_empty() {
            return Err(invalid("teaching_methods", "must not be empty"));
        }
        if self.n_folds < 1 {
            return Err(invalid("n_folds", "must be at least 1"));
        }
        if self.train_size < 1 {
            return Err(invalid("train_size", "must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "must not be empty"));
        }
        self.sampler.validate("sampler")?;
        if let Some(s) = &self.constrained_sampler {
            s.validate("constrained_sampler")?;
        }
        if let Some(s) = &self.teaching_sampler {
            s.validate("teaching_sampler")?;
        }

        let m = &self.movie;
        if m.band_weights.len() != AGE_BANDS.len() {
            return Err(invalid(
                "movie.band_weights",
                format!("needs {} entries, one per age band", AGE_BANDS.len()),
            ));
        }
        for (i, w) in m.band_weights.iter().enumerate() {
            if !(w.is_finite() && *w >= 0.0) {
                return Err(invalid(
                    format!("movie.band_weights[{i}]"),
                    "must be finite and nonnegative",
                ));
            }
        }
        if m.band_weights.iter().sum::<f64>() <= 0.0 {
            return Err(invalid("movie.band_weights", "must not be all zero"));
        }
        if m.genre_names.is_empty() {
            return Err(invalid("movie.genre_names", "must not be empty"));
        }
        if !(m.rating_divisor.is_finite() && m.rating_divisor >= 5.0) {
            return Err(invalid(
                "movie.rating_divisor",
                "must be at least 5 so rewards stay in [0, 1]",
            ));
        }
        if m.ratings_csv.is_some() != m.genres_csv.is_some() {
            return Err(invalid(
                "movie.ratings_csv",
                "ratings_csv and genres_csv must be given together",
            ));
        }
        let s = &m.synthetic;
        if s.num_users < 1 {
            return Err(invalid("movie.synthetic.num_users", "must be at least 1"));
        }
        if s.num_movies < 1 {
            return Err(invalid("movie.synthetic.num_movies", "must be at least 1"));
        }
        if !(s.density > 0.0 && s.density <= 1.0) {
            return Err(invalid("movie.synthetic.density", "must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&s.genre_probability) {
            return Err(invalid(
                "movie.synthetic.genre_probability",
                "must lie in [0, 1]",
            ));
        }
        if !s.restricted_boost.is_finite() {
            return Err(invalid(
                "movie.synthetic.restricted_boost",
                "must be finite",
            ));
        }

        let w = &self.warfarin;
        if w.num_patients < 1 {
            return Err(invalid("warfarin.num_patients", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&w.flag_probability) {
            return Err(invalid("warfarin.flag_probability", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Reads, parses and validates a config file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    ExperimentConfig::from_toml_str(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg =
            ExperimentConfig::from_toml_str("scenario = \"movie\"\nT = 100\n", "inline").unwrap();
        assert_eq!(cfg.horizon, 100);
        assert_eq!(cfg.n_folds, 5);
        assert_eq!(cfg.train_size, 200);
        assert_eq!(cfg.sampler.z, 0.5);
        assert_eq!(cfg.sampler.gamma, 0.1);
        assert_eq!(cfg.sampler.r, 1.0);
        assert_eq!(cfg, ExperimentConfig::new(Scenario::Movie, 100));
    }

    #[test]
    fn bad_sigma_names_key() {
        let err = ExperimentConfig::from_toml_str(
            "scenario = \"movie\"\nhorizon = 10\nsigmas = [0.0, 1.5]\n",
            "inline",
        )
        .unwrap_err();
        match err {
            Error::InvalidConfig { key, .. } => assert_eq!(key, "sigmas[1]"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = ExperimentConfig::from_toml_str(
            "scenario = \"movie\"\nhorizon = 10\nfoo = 1\n",
            "inline",
        )
        .unwrap_err();
        assert!(err.to_string().contains("foo"), "{err}");
        let err = ExperimentConfig::from_toml_str(
            "scenario = \"movie\"\nhorizon = 10\n[sampler]\nr = 1.0\n",
            "inline",
        )
        .unwrap_err();
        assert!(err.to_string().contains('r'), "{err}");
    }

    #[test]
    fn missing_horizon_rejected() {
        assert!(ExperimentConfig::from_toml_str("scenario = \"warfarin\"\n", "inline").is_err());
    }

    #[test]
    fn roundtrip() {
        let mut cfg = ExperimentConfig::new(Scenario::Warfarin, 321);
        cfg.sigmas = vec![0.0, 0.25];
        cfg.teaching_sampler = Some(SamplerConfig {
            r: 0.5,
            z: 0.3,
            gamma: 0.2,
        });
        cfg.movie.constraint_matrix = Some(PathBuf::from("cm.txt"));
        let text = cfg.to_toml_string().unwrap();
        let back = ExperimentConfig::from_toml_str(&text, "roundtrip").unwrap();
        assert_eq!(back, cfg);
    }
}
