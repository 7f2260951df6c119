use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use bcts::config::{parse_config, ExperimentConfig};
use bcts::env::movie::{write_genres_csv, write_ratings_csv};
use bcts::env::warfarin::write_warfarin_csv;
use bcts::experiments::runner::{load_movie_data, load_patients};
use bcts::experiments::table::{read_summary_csv, recompute_aggregates, SUMMARY_COLUMNS};
use bcts::experiments::{
    learn_policies, policy_keys, prepare_environment, run_experiment_on, PolicyMap, RunOptions,
};
use bcts::plot::{read_trajectory_csv, summary_series, LineChart, PlotKind};
use bcts::policy_io::{load_policy, save_policy};
use bcts::Scenario;
use clap::{Parser, Subcommand};
use log::{info, warn};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "bcts",
    version,
    about = "Behavior constrained Thompson sampling experiments"
)]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed for folds, teaching and online runs.
    #[arg(long, global = true, env = "BCTS_SEED")]
    seed: Option<u64>,

    /// Output directory; defaults to `output.dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for the sweep (0 = one per core).
    #[arg(long, global = true, default_value_t = 1)]
    parallel: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the synthetic dataset of the configured scenario as CSV.
    GenData,
    /// Learn and store the constrained policies of the sweep grid.
    Learn,
    /// Run the sweep, writing trajectories and the summary table.
    Run,
    /// Print the aggregate rows of a summary CSV, recomputed from its runs.
    Report {
        /// Summary CSV; defaults to `<out>/summary.csv`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Render regret or behavioral-error curves as SVG.
    Plot {
        /// A summary CSV, or one or more trajectory CSVs.
        #[arg(long, num_args = 1..)]
        input: Vec<PathBuf>,
        /// `regret` or `error`.
        #[arg(long, default_value = "regret")]
        kind: String,
        /// Output file; defaults to `<out>/plots/<kind>.svg`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    version: &'a str,
    master_seed: u64,
    config: Option<&'a ExperimentConfig>,
    /// Paths relative to the output directory.
    outputs: Vec<String>,
    /// Wall-clock seconds per phase.
    timings: BTreeMap<String, f64>,
}

struct Session {
    out: PathBuf,
    seed: u64,
    threads: usize,
    config: Option<ExperimentConfig>,
    outputs: Vec<String>,
    timings: BTreeMap<String, f64>,
}

impl Session {
    fn config(&self) -> Result<&ExperimentConfig> {
        self.config.as_ref().context("this command needs --config")
    }

    fn record(&mut self, path: &Path) {
        let rel = path.strip_prefix(&self.out).unwrap_or(path);
        self.outputs.push(rel.display().to_string());
    }

    fn timed<T>(&mut self, phase: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let v = f(self)?;
        self.timings
            .insert(phase.into(), start.elapsed().as_secs_f64());
        Ok(v)
    }

    fn write_manifest(&mut self, command: &str) -> Result<()> {
        let path = self.out.join(format!("manifest_{command}.json"));
        let manifest = RunManifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            master_seed: self.seed,
            config: self.config.as_ref(),
            outputs: self.outputs.clone(),
            timings: self.timings.clone(),
        };
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        serde_json::to_writer_pretty(BufWriter::new(f), &manifest)?;
        Ok(())
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn gen_data(s: &mut Session) -> Result<()> {
    let cfg = s.config()?.clone();
    let dir = s.out.join("data");
    match cfg.scenario {
        Scenario::Movie => {
            let (data, _, cm) = load_movie_data(&cfg)?;
            let ratings = dir.join("ratings.csv");
            write_ratings_csv(
                create(&ratings)?,
                &data.user_ids,
                &data.movie_ids,
                &data.ratings,
            )?;
            let genres = dir.join("genres.csv");
            write_genres_csv(create(&genres)?, &data.movie_ids, &data.genres)?;
            let matrix = dir.join("constraint_matrix.txt");
            create(&matrix)?.write_all(cm.to_text().as_bytes())?;
            for p in [ratings, genres, matrix] {
                s.record(&p);
            }
        }
        Scenario::Warfarin => {
            let patients = load_patients(&cfg)?;
            let path = dir.join("warfarin.csv");
            write_warfarin_csv(create(&path)?, &patients)?;
            s.record(&path);
        }
        Scenario::Synthetic => bail!("gen-data supports the movie and warfarin scenarios"),
    }
    info!("wrote dataset to {}", dir.display());
    Ok(())
}

fn learn(s: &mut Session) -> Result<()> {
    let cfg = s.config()?.clone();
    let env = s.timed("prepare", |_| Ok(prepare_environment(&cfg)?))?;
    let (seed, threads) = (s.seed, s.threads);
    let policies = s.timed("learn", |_| Ok(learn_policies(&cfg, &env, seed, threads)?))?;
    let dir = s.out.join("policies");
    fs::create_dir_all(&dir)?;
    for (key, policy) in &policies {
        let path = dir.join(key.file_name(cfg.scenario, seed));
        save_policy(&path, policy).with_context(|| format!("writing {}", path.display()))?;
        s.record(&path);
    }
    info!("stored {} policies in {}", policies.len(), dir.display());
    Ok(())
}

/// Stored policies for this config and seed; files are only read.
fn stored_policies(s: &Session, cfg: &ExperimentConfig) -> Result<PolicyMap> {
    let dir = s.out.join("policies");
    let mut map = PolicyMap::new();
    if !dir.is_dir() {
        return Ok(map);
    }
    for key in policy_keys(cfg) {
        let path = dir.join(key.file_name(cfg.scenario, s.seed));
        if path.is_file() {
            let policy =
                load_policy(&path).with_context(|| format!("reading {}", path.display()))?;
            if policy.method() != key.method || policy.budget() != key.budget {
                bail!("{} does not match its file name", path.display());
            }
            map.insert(key, Arc::new(policy));
        }
    }
    Ok(map)
}

fn run(s: &mut Session) -> Result<()> {
    let cfg = s.config()?.clone();
    let env = s.timed("prepare", |_| Ok(prepare_environment(&cfg)?))?;
    let policies = stored_policies(s, &cfg)?;
    if !policies.is_empty() {
        info!("using {} stored policies", policies.len());
    }
    let opts = RunOptions {
        master_seed: s.seed,
        threads: s.threads,
        keep_trajectories: cfg.output.write_trajectories,
        policies: Some(&policies),
    };
    let output = s.timed("run", |_| Ok(run_experiment_on(&cfg, &env, &opts)?))?;

    for (key, log) in &output.trajectories {
        let path = s
            .out
            .join("trajectories")
            .join(format!("{}.csv", key.file_stem(cfg.scenario)));
        let mut w = create(&path)?;
        log.write_csv(&mut w)?;
        w.flush()?;
        s.record(&path);
    }
    let summary = s.out.join("summary.csv");
    let mut w = create(&summary)?;
    output.table.write_summary_csv(&mut w)?;
    w.flush()?;
    s.record(&summary);
    info!("wrote {}", summary.display());
    Ok(())
}

fn report(s: &Session, input: Option<PathBuf>) -> Result<()> {
    let path = input.unwrap_or_else(|| s.out.join("summary.csv"));
    let rows =
        read_summary_csv(File::open(&path).with_context(|| format!("opening {}", path.display()))?)
            .with_context(|| format!("reading {}", path.display()))?;
    let recomputed = recompute_aggregates(&rows);
    let stored: Vec<_> = rows.iter().filter(|r| r.is_aggregate()).cloned().collect();
    if !stored.is_empty() && stored != recomputed {
        warn!(
            "stored AGG rows of {} differ from the recomputed means",
            path.display()
        );
    }
    let stdout = io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "{}", SUMMARY_COLUMNS.join(","))?;
    for row in &recomputed {
        writeln!(out, "{}", row.fields().join(","))?;
    }
    Ok(())
}

fn plot(s: &mut Session, inputs: Vec<PathBuf>, kind: &str, output: Option<PathBuf>) -> Result<()> {
    let kind = PlotKind::parse(kind)?;
    let inputs = if inputs.is_empty() {
        vec![s.out.join("summary.csv")]
    } else {
        inputs
    };
    let header = |p: &Path| -> Result<String> {
        let text = fs::read_to_string(p).with_context(|| format!("opening {}", p.display()))?;
        Ok(text.lines().next().unwrap_or("").to_string())
    };
    let is_summary = header(&inputs[0])?.split(',').any(|c| c == "sigma");
    let chart = if is_summary {
        if inputs.len() > 1 {
            bail!("plot takes a single summary CSV");
        }
        let rows = read_summary_csv(File::open(&inputs[0])?)
            .with_context(|| format!("reading {}", inputs[0].display()))?;
        LineChart {
            title: format!("{} at T by blend weight", kind.y_label()),
            x_label: "sigma".into(),
            y_label: kind.y_label().into(),
            series: summary_series(&rows, kind),
        }
    } else {
        let mut series = Vec::new();
        for p in &inputs {
            let curves = read_trajectory_csv(File::open(p)?, &p.display().to_string())
                .with_context(|| format!("reading {}", p.display()))?;
            let label = p
                .file_stem()
                .map(|x| x.to_string_lossy().into_owned())
                .unwrap_or_default();
            series.push(curves.series(label, kind));
        }
        LineChart {
            title: format!("{} over time", kind.y_label()),
            x_label: "t".into(),
            y_label: kind.y_label().into(),
            series,
        }
    };
    let path = output.unwrap_or_else(|| {
        let name = match kind {
            PlotKind::Regret => "regret.svg",
            PlotKind::Error => "error.svg",
        };
        s.out.join("plots").join(name)
    });
    let svg = chart.to_svg()?;
    create(&path)?.write_all(svg.as_bytes())?;
    s.record(&path);
    info!("wrote {}", path.display());
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(p) => Some(parse_config(p)?),
        None => None,
    };
    let out = cli
        .out
        .clone()
        .or_else(|| config.as_ref().map(|c| c.output.dir.clone()))
        .unwrap_or_else(|| PathBuf::from("out"));
    let mut s = Session {
        out,
        seed: cli.seed.unwrap_or(0),
        threads: cli.parallel,
        config,
        outputs: Vec::new(),
        timings: BTreeMap::new(),
    };
    let name = match &cli.command {
        Command::GenData => "gen-data",
        Command::Learn => "learn",
        Command::Run => "run",
        Command::Report { .. } => "report",
        Command::Plot { .. } => "plot",
    };
    match cli.command {
        Command::GenData => s.timed("gen-data", gen_data)?,
        Command::Learn => learn(&mut s)?,
        Command::Run => run(&mut s)?,
        // report writes only to stdout
        Command::Report { input } => return report(&s, input),
        Command::Plot {
            input,
            kind,
            output,
        } => plot(&mut s, input, &kind, output)?,
    }
    fs::create_dir_all(&s.out)?;
    s.write_manifest(name)
}

/// Exit status per failure class.
fn exit_code(err: &anyhow::Error) -> u8 {
    use bcts::Error as E;
    match err.chain().find_map(|e| e.downcast_ref::<E>()) {
        Some(E::InvalidConfig { .. } | E::Parse { .. } | E::MissingColumns(_)) => 2,
        Some(E::Io(_) | E::Csv(_)) => 3,
        Some(_) => 4,
        None if err.chain().any(|e| e.is::<io::Error>()) => 3,
        None => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
