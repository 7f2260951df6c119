use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const CONFIG: &str = r#"
scenario = "warfarin"
T = 250
teaching_budgets = [300]
sigmas = [0.0, 1.0]
teaching_methods = ["random"]
n_folds = 2
train_size = 100
seeds = [0, 1]

[sampler]
R = 0.01

[warfarin]
num_patients = 400
"#;

struct Sandbox {
    dir: tempfile::TempDir,
}

impl Sandbox {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("config.toml"), config).unwrap();
        Self { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn bcts(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_bcts"))
            .current_dir(self.dir.path())
            .args(args)
            .env("RUST_LOG", "warn")
            .env_remove("BCTS_SEED")
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.bcts(args);
        assert!(
            out.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }
}

fn files_under(root: &Path) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().display().to_string());
            }
        }
    }
    out
}

const RUN: [&str; 7] = [
    "--config",
    "config.toml",
    "--out",
    "out",
    "--seed",
    "5",
    "run",
];

#[test]
fn run_is_byte_identical_across_invocations() {
    let sb = Sandbox::new(CONFIG);
    sb.ok(&RUN);
    let first = sb.path("first");
    fs::rename(sb.path("out"), &first).unwrap();
    sb.ok(&[
        "--config",
        "config.toml",
        "--out",
        "out",
        "--seed",
        "5",
        "--parallel",
        "2",
        "run",
    ]);
    let files: Vec<String> = files_under(&first)
        .into_iter()
        .filter(|f| f.ends_with(".csv"))
        .collect();
    assert_eq!(files.len(), 2 * 2 * 4 + 1);
    for f in files {
        assert_eq!(
            fs::read(first.join(&f)).unwrap(),
            fs::read(sb.path("out").join(&f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn seed_falls_back_to_environment() {
    let sb = Sandbox::new(CONFIG);
    sb.ok(&RUN);
    let out = Command::new(env!("CARGO_BIN_EXE_bcts"))
        .current_dir(sb.dir.path())
        .args(["--config", "config.toml", "--out", "env_out", "run"])
        .env("BCTS_SEED", "5")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(
        fs::read(sb.path("out/summary.csv")).unwrap(),
        fs::read(sb.path("env_out/summary.csv")).unwrap()
    );
}

#[test]
fn manifest_lists_every_output() {
    let sb = Sandbox::new(CONFIG);
    sb.ok(&RUN);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(sb.path("out/manifest_run.json")).unwrap())
            .unwrap();
    let listed: BTreeSet<String> = manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    let mut on_disk = files_under(&sb.path("out"));
    on_disk.remove("manifest_run.json");
    assert_eq!(listed, on_disk);
    assert_eq!(manifest["master_seed"], 5);
    assert_eq!(manifest["config"]["horizon"], 250);
}

#[test]
fn report_reproduces_aggregate_rows() {
    let sb = Sandbox::new(CONFIG);
    sb.ok(&RUN);
    let printed = sb.ok(&["--out", "out", "report"]);
    let summary = fs::read_to_string(sb.path("out/summary.csv")).unwrap();
    let mut lines = summary.lines();
    let header = lines.next().unwrap();
    let stored: Vec<&str> = lines.filter(|l| l.contains(",AGG,AGG,")).collect();
    let mut expected = vec![header];
    expected.extend(stored);
    assert_eq!(printed.lines().collect::<Vec<_>>(), expected);
}

#[test]
fn learned_policy_is_reused_but_never_modified() {
    let sb = Sandbox::new(&CONFIG.replace("sigmas = [0.0, 1.0]", "sigmas = [0.0]"));
    sb.ok(&[
        "--config",
        "config.toml",
        "--out",
        "out",
        "--seed",
        "5",
        "learn",
    ]);
    let policies = sb.path("out/policies");
    let snapshot: Vec<(PathBuf, Vec<u8>, std::time::SystemTime)> = fs::read_dir(&policies)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            let meta = fs::metadata(&p).unwrap();
            (p.clone(), fs::read(&p).unwrap(), meta.modified().unwrap())
        })
        .collect();
    assert_eq!(snapshot.len(), 4);

    sb.ok(&RUN);
    for (p, bytes, mtime) in &snapshot {
        assert_eq!(&fs::read(p).unwrap(), bytes);
        assert_eq!(&fs::metadata(p).unwrap().modified().unwrap(), mtime);
    }

    // learning on the fly gives the same numbers
    sb.ok(&[
        "--config",
        "config.toml",
        "--out",
        "fresh",
        "--seed",
        "5",
        "run",
    ]);
    assert_eq!(
        fs::read(sb.path("out/summary.csv")).unwrap(),
        fs::read(sb.path("fresh/summary.csv")).unwrap()
    );
}

fn polyline_points(svg: &str) -> Vec<Vec<(f64, f64)>> {
    svg.split("<polyline")
        .skip(1)
        .map(|chunk| {
            let pts = chunk
                .split("points=\"")
                .nth(1)
                .unwrap()
                .split('"')
                .next()
                .unwrap();
            pts.split_whitespace()
                .map(|p| {
                    let (x, y) = p.split_once(',').unwrap();
                    (x.parse().unwrap(), y.parse().unwrap())
                })
                .collect()
        })
        .collect()
}

#[test]
fn plots_from_trajectories_and_summary() {
    let sb = Sandbox::new(CONFIG);
    sb.ok(&RUN);
    let traj = "out/trajectories/warfarin_bcts-random_N300_sigma0_fold0_seed0.csv";
    sb.ok(&[
        "--out", "out", "plot", "--kind", "regret", "--input", traj, "--output", "one.svg",
    ]);
    let lines = polyline_points(&fs::read_to_string(sb.path("one.svg")).unwrap());
    assert_eq!(lines.len(), 1);
    assert_eq!(lines[0].len(), 250);

    let mask = "out/trajectories/warfarin_mask_fold1_seed1.csv";
    sb.ok(&[
        "plot", "--kind", "error", "--input", mask, "--output", "mask.svg",
    ]);
    let svg = fs::read_to_string(sb.path("mask.svg")).unwrap();
    let mask_line = &polyline_points(&svg)[0];
    assert!(mask_line.iter().all(|p| p.1 == mask_line[0].1));
    assert!(svg.contains(">E(t)</text>") && svg.contains(">t</text>"));

    sb.ok(&["--out", "out", "plot", "--kind", "error"]);
    let svg = fs::read_to_string(sb.path("out/plots/error.svg")).unwrap();
    // one line per blended configuration plus the two baselines
    assert_eq!(polyline_points(&svg).len(), 3);
    assert!(svg.contains("data-label=\"mask\""));
}

#[test]
fn plot_rejects_bad_inputs_without_writing() {
    let sb = Sandbox::new(CONFIG);
    fs::write(
        sb.path("empty.csv"),
        "t,arm,reward,best_reward,violation,cum_avg_regret,cum_error\n",
    )
    .unwrap();
    let out = sb.bcts(&["plot", "--input", "empty.csv", "--output", "empty.svg"]);
    assert!(!out.status.success());
    assert!(!sb.path("empty.svg").exists());

    fs::write(sb.path("bad.csv"), "t,arm,reward\n1,0,1\n").unwrap();
    let out = sb.bcts(&["plot", "--input", "bad.csv", "--output", "bad.svg"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("best_reward, violation, cum_avg_regret, cum_error"),
        "{err}"
    );
    assert_eq!(err.lines().count(), 1);
    assert!(!sb.path("bad.svg").exists());
}

#[test]
fn invalid_config_names_the_key() {
    let sb = Sandbox::new(&CONFIG.replace("sigmas = [0.0, 1.0]", "sigmas = [0.0, 1.5]"));
    let out = sb.bcts(&RUN);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("sigmas[1]"), "{err}");

    let sb = Sandbox::new(&format!("{CONFIG}\nbogus = 1\n"));
    let out = sb.bcts(&RUN);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));

    let out = sb.bcts(&["--config", "missing.toml", "run"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn generated_movie_csvs_reload_to_the_same_experiment() {
    let sb = Sandbox::new(
        r#"
scenario = "movie"
T = 200
teaching_budgets = [200]
sigmas = [0.5]
teaching_methods = ["cts"]
n_folds = 1
train_size = 60
seeds = [0]
baselines = false

[movie.synthetic]
num_users = 10
num_movies = 150
"#,
    );
    sb.ok(&["--config", "config.toml", "--out", "gen", "gen-data"]);
    for f in ["ratings.csv", "genres.csv", "constraint_matrix.txt"] {
        assert!(sb.path("gen/data").join(f).is_file(), "{f}");
    }
    sb.ok(&["--config", "config.toml", "--out", "synthetic", "run"]);
    let loaded = fs::read_to_string(sb.path("config.toml")).unwrap().replace(
        "[movie.synthetic]",
        "[movie]\nratings_csv = \"gen/data/ratings.csv\"\ngenres_csv = \"gen/data/genres.csv\"\n\
         constraint_matrix = \"gen/data/constraint_matrix.txt\"\n\n[movie.synthetic]",
    );
    fs::write(sb.path("loaded.toml"), loaded).unwrap();
    sb.ok(&["--config", "loaded.toml", "--out", "loaded", "run"]);
    assert_eq!(
        fs::read(sb.path("synthetic/summary.csv")).unwrap(),
        fs::read(sb.path("loaded/summary.csv")).unwrap()
    );
}
