//! Cross-validated sweep over teaching methods, budgets and blend weights.

use std::collections::BTreeMap;
use std::fs::File;
use std::sync::Arc;

use log::info;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::agents::{
    learn_constraints, run_online, Agent, BlendConfig, ConstrainedPolicy, TeachingMethod,
};
use crate::config::ExperimentConfig;
use crate::env::movie::{
    bands_for, build_movie_env, cf_complete, generate_movie_data, read_genres_csv,
    read_ratings_csv, BehaviorConstraintMatrix, MovieData,
};
use crate::env::warfarin::{build_warfarin_env, generate_patients, read_warfarin_csv, Patient};
use crate::env::{split_folds, EnvironmentSpec, Fold, Scenario};
use crate::error::{Error, Result};
use crate::experiments::metrics::TrajectoryLog;
use crate::experiments::table::{ResultTable, RunKey, RunMethod, RunRow};
use crate::rng::{derive_seed, substream, AgentStreams, Purpose};

const FOLD_TAG: u64 = 0xF01D;

/// Identity of a learned constrained policy within a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PolicyKey {
    pub method: TeachingMethod,
    pub budget: usize,
    pub fold: usize,
    pub seed: u64,
}

impl PolicyKey {
    /// Folds depend on the master seed, so it is part of the name: a policy
    /// learned under one master seed is never picked up by a run under another.
    pub fn file_name(&self, scenario: Scenario, master_seed: u64) -> String {
        format!(
            "{scenario}_{}_N{}_fold{}_seed{}_master{master_seed}.policy",
            self.method, self.budget, self.fold, self.seed
        )
    }
}

pub type PolicyMap = BTreeMap<PolicyKey, Arc<ConstrainedPolicy>>;

#[derive(Debug, Clone, Default)]
pub struct RunOptions<'a> {
    pub master_seed: u64,
    /// Worker threads; `0` lets rayon decide.
    pub threads: usize,
    pub keep_trajectories: bool,
    /// Previously learned policies; missing keys are learned on the fly.
    pub policies: Option<&'a PolicyMap>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub table: ResultTable,
    /// Per-run logs in row order, when requested.
    pub trajectories: Vec<(RunKey, TrajectoryLog)>,
}

/// Loads the movie data named in the config, or generates it synthetically.
pub fn load_movie_data(
    cfg: &ExperimentConfig,
) -> Result<(MovieData, Vec<usize>, BehaviorConstraintMatrix)> {
    let m = &cfg.movie;
    let cm = match &m.constraint_matrix {
        Some(path) => BehaviorConstraintMatrix::load(path)?,
        None => BehaviorConstraintMatrix::default_matrix(),
    };
    if cm.bands() != m.band_weights.len() {
        return Err(Error::InvalidConfig {
            key: "movie.constraint_matrix".into(),
            message: format!("{} rows but {} age bands", cm.bands(), m.band_weights.len()),
        });
    }
    if cm.genres() != m.genre_names.len() {
        return Err(Error::InvalidConfig {
            key: "movie.genre_names".into(),
            message: format!(
                "{} names but the constraint matrix has {} columns",
                m.genre_names.len(),
                cm.genres()
            ),
        });
    }
    let data = match (&m.ratings_csv, &m.genres_csv) {
        (Some(ratings), Some(genres)) => {
            let (movie_ids, table) = read_genres_csv(File::open(genres)?)?;
            let (user_ids, matrix) = read_ratings_csv(File::open(ratings)?, &movie_ids)?;
            MovieData {
                ratings: matrix,
                genres: table,
                user_ids,
                movie_ids,
            }
        }
        _ => {
            let bands = bands_for(m.synthetic.num_users, &m.band_weights, m.data_seed)?;
            generate_movie_data(&m.synthetic, &cm, &bands, m.data_seed)?
        }
    };
    let bands = bands_for(data.ratings.users(), &m.band_weights, m.data_seed)?;
    Ok((data, bands, cm))
}

pub fn load_patients(cfg: &ExperimentConfig) -> Result<Vec<Patient>> {
    let w = &cfg.warfarin;
    let mut rng = substream(w.data_seed, Purpose::Data);
    match &w.csv {
        Some(path) => read_warfarin_csv(File::open(path)?, w.flag_probability, &mut rng),
        None => generate_patients(w.num_patients, w.flag_probability, None, &mut rng),
    }
}

/// Full environment for the configured scenario, every item once in index order.
pub fn prepare_environment(cfg: &ExperimentConfig) -> Result<EnvironmentSpec> {
    match cfg.scenario {
        Scenario::Movie => {
            let (data, bands, cm) = load_movie_data(cfg)?;
            let completion = cf_complete(&data.ratings)?;
            let movie_env = build_movie_env(
                &completion.ratings,
                &data.genres,
                &bands,
                &cm,
                None,
                cfg.movie.rating_divisor,
            )?;
            if !movie_env.dropped.is_empty() {
                info!(
                    "dropped {} movies restricted for every user",
                    movie_env.dropped.len()
                );
            }
            Ok(movie_env.env)
        }
        Scenario::Warfarin => build_warfarin_env(&load_patients(cfg)?, None),
        Scenario::Synthetic => Err(Error::InvalidConfig {
            key: "scenario".into(),
            message: "synthetic environments are built programmatically".into(),
        }),
    }
}

/// Repeated shuffled passes over `pool`, truncated to `len` steps.
pub fn stream_order<R: Rng + ?Sized>(
    pool: &[usize],
    len: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if pool.is_empty() {
        return Err(Error::domain(
            "cannot build a context stream from an empty pool",
        ));
    }
    let mut order = Vec::with_capacity(len + pool.len());
    let mut pass = pool.to_vec();
    while order.len() < len {
        pass.shuffle(rng);
        order.extend_from_slice(&pass);
    }
    order.truncate(len);
    Ok(order)
}

fn folds_for(cfg: &ExperimentConfig, env: &EnvironmentSpec, master_seed: u64) -> Result<Vec<Fold>> {
    let mut rng = substream(derive_seed(master_seed, &[FOLD_TAG]), Purpose::Context);
    split_folds(env.items().len(), cfg.n_folds, cfg.train_size, &mut rng).map_err(|e| {
        Error::InvalidConfig {
            key: "train_size".into(),
            message: e.to_string(),
        }
    })
}

fn unit_seed(master_seed: u64, fold: usize, seed: u64) -> u64 {
    derive_seed(master_seed, &[fold as u64, seed])
}

fn teaching_seed(unit: u64, method: TeachingMethod, budget: usize) -> u64 {
    derive_seed(unit, &[method as u64 + 1, budget as u64])
}

struct Unit {
    fold: usize,
    seed: u64,
}

fn units(cfg: &ExperimentConfig) -> Vec<Unit> {
    (0..cfg.n_folds)
        .flat_map(|fold| cfg.seeds.iter().map(move |&seed| Unit { fold, seed }))
        .collect()
}

fn learn_for(
    cfg: &ExperimentConfig,
    teacher: &EnvironmentSpec,
    key: PolicyKey,
    unit: u64,
) -> Result<ConstrainedPolicy> {
    let sampler = cfg.teaching_sampler().params(teacher.dim())?;
    let mut rng = substream(
        teaching_seed(unit, key.method, key.budget),
        Purpose::Teaching,
    );
    learn_constraints(teacher, key.budget, key.method, &sampler, &mut rng)
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Configuration(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Every policy the sweep grid needs, in a fixed order.
pub fn policy_keys(cfg: &ExperimentConfig) -> Vec<PolicyKey> {
    units(cfg)
        .into_iter()
        .flat_map(|u| {
            cfg.teaching_methods.iter().flat_map(move |&method| {
                cfg.teaching_budgets.iter().map(move |&budget| PolicyKey {
                    method,
                    budget,
                    fold: u.fold,
                    seed: u.seed,
                })
            })
        })
        .collect()
}

/// Learns every constrained policy of the sweep grid.
///
/// Each policy is identical to the one [`run_experiment_on`] would learn on
/// the fly for the same master seed.
pub fn learn_policies(
    cfg: &ExperimentConfig,
    env: &EnvironmentSpec,
    master_seed: u64,
    threads: usize,
) -> Result<Vec<(PolicyKey, ConstrainedPolicy)>> {
    cfg.validate()?;
    let folds = folds_for(cfg, env, master_seed)?;
    let keys = policy_keys(cfg);
    with_pool(threads, || {
        keys.par_iter()
            .map(|&key| {
                let teacher = env.with_order(folds[key.fold].train.clone())?;
                let unit = unit_seed(master_seed, key.fold, key.seed);
                Ok((key, learn_for(cfg, &teacher, key, unit)?))
            })
            .collect::<Result<Vec<_>>>()
    })?
}

type UnitOutput = Vec<(RunRow, Option<TrajectoryLog>)>;

fn run_unit(
    cfg: &ExperimentConfig,
    env: &EnvironmentSpec,
    fold: &Fold,
    fold_index: usize,
    seed: u64,
    opts: &RunOptions<'_>,
) -> Result<UnitOutput> {
    let unit = unit_seed(opts.master_seed, fold_index, seed);
    let teacher = env.with_order(fold.train.clone())?;
    let order = stream_order(
        &fold.test,
        cfg.horizon,
        &mut substream(unit, Purpose::Context),
    )?;
    let online_env = env.with_order(order)?;
    let d = env.dim();
    let sampler = cfg.sampler.params(d)?;
    let constrained_sampler = cfg.constrained_sampler().params(d)?;

    let mut out = Vec::new();
    let mut record = |key: RunKey, agent: &mut Agent| -> Result<()> {
        let log = run_online(
            &online_env,
            agent,
            cfg.horizon,
            &mut AgentStreams::from_seed(unit),
        )?;
        let regret = log.regret_curve().last().copied().unwrap_or(0.0);
        let error = log.error_curve().last().copied().unwrap_or(0);
        out.push((
            RunRow { key, regret, error },
            opts.keep_trajectories.then_some(log),
        ));
        Ok(())
    };

    let base = |method| RunKey {
        method,
        budget: None,
        sigma: None,
        fold: fold_index,
        seed,
    };
    if cfg.baselines {
        record(
            base(RunMethod::Cts),
            &mut Agent::cts(env.num_arms(), sampler)?,
        )?;
        record(
            base(RunMethod::Mask),
            &mut Agent::mask(env.num_arms(), sampler)?,
        )?;
    }
    for &method in &cfg.teaching_methods {
        for &budget in &cfg.teaching_budgets {
            let key = PolicyKey {
                method,
                budget,
                fold: fold_index,
                seed,
            };
            let policy = match opts.policies.and_then(|m| m.get(&key)) {
                Some(p) => {
                    if p.num_arms() != env.num_arms() || p.dim() != d {
                        return Err(Error::Configuration(format!(
                            "stored policy {} does not match the environment",
                            key.file_name(cfg.scenario, opts.master_seed)
                        )));
                    }
                    Arc::clone(p)
                }
                None => Arc::new(learn_for(cfg, &teacher, key, unit)?),
            };
            for &sigma in &cfg.sigmas {
                let mut agent =
                    Agent::bcts(Arc::clone(&policy), BlendConfig::new(sigma)?, sampler)?
                        .with_constrained_sampler(constrained_sampler)?
                        .with_constrained_term(cfg.constrained_term);
                let key = RunKey {
                    method: RunMethod::Bcts(method),
                    budget: Some(budget),
                    sigma: Some(sigma),
                    fold: fold_index,
                    seed,
                };
                record(key, &mut agent)?;
            }
        }
    }
    Ok(out)
}

/// Runs the full grid of a config on a prepared environment.
///
/// For every fold and seed the online context order is drawn once and shared
/// by every agent, so runs differ only through their selection rule.
pub fn run_experiment_on(
    cfg: &ExperimentConfig,
    env: &EnvironmentSpec,
    opts: &RunOptions<'_>,
) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let folds = folds_for(cfg, env, opts.master_seed)?;
    let units = units(cfg);
    let results = with_pool(opts.threads, || {
        units
            .par_iter()
            .map(|u| run_unit(cfg, env, &folds[u.fold], u.fold, u.seed, opts))
            .collect::<Result<Vec<_>>>()
    })??;

    let mut rows = Vec::new();
    let mut trajectories = Vec::new();
    for (row, log) in results.into_iter().flatten() {
        if let Some(log) = log {
            trajectories.push((row.key, log));
        }
        rows.push(row);
    }
    Ok(ExperimentOutput {
        table: ResultTable::from_rows(cfg.scenario, rows),
        trajectories,
    })
}

/// Prepares the configured environment and runs the sweep.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions<'_>) -> Result<ExperimentOutput> {
    let env = prepare_environment(cfg)?;
    run_experiment_on(cfg, &env, opts)
}
