//! The `run`, `compare`, `curve` and `measures` commands.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;
use taml_core::inequality::{self, DEFAULT_FLOOR};
use taml_core::nn::{Head, MlpSpec};
use taml_core::rng::{SeedStreams, Stream};
use taml_core::tasks::navigation::{self, NavigationSpec};
use taml_core::tasks::{EpisodeSpec, SinusoidSpec, SyntheticSpec, Task, TaskDistribution};
use taml_core::trainer::{
    evaluate_meta_test, mean_ci, sample_test_tasks, train, EvalSummary, MetaState, StepSummary, TrainConfig, TrainError,
};

use crate::checkpoint::{self, CheckpointError};
use crate::config::{parse_config, ConfigError, ExperimentConfig, ParsedConfig, TaskKind, DISTRIBUTION_KEYS};
use crate::omniglot::{self, IngestError, SplitManifest};
use crate::records::{MetaTest, MetricsLine, Status, Summary, WallClock};

/// Relative `output_dir`s are placed under this directory when it is set.
pub const OUTPUT_ROOT_ENV: &str = "TAML_OUTPUT_ROOT";

pub const CONFIG_FILE: &str = "config.resolved";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MANIFEST_FILE: &str = "split_manifest.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const INITIAL_CHECKPOINT: &str = "initial.ckpt";
pub const CURVE_HEADER: &str = "gradient_step,mean_metric,ci_halfwidth";
pub const COMPARISON_HEADER: &str = "config,method,shots,seed,metric,gradient_step,mean,ci_half_width";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{path}: {source}")]
    Config {
        path: String,
        #[source]
        source: ConfigError,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{0}")]
    Train(#[from] TrainError),
    #[error("run in {dir} failed: {message}")]
    Failed { dir: String, message: String },
    #[error("{0}")]
    Rejected(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn read(path: &Path) -> Result<String, RunError> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn write(path: &Path, contents: &str) -> Result<(), RunError> {
    fs::write(path, contents).map_err(io_err(path))
}

pub fn resolve_output_dir(dir: &Path, root: Option<&Path>) -> PathBuf {
    match root {
        Some(r) if dir.is_relative() => r.join(dir),
        _ => dir.to_path_buf(),
    }
}

pub fn output_dir(cfg: &ExperimentConfig) -> PathBuf {
    let root = std::env::var_os(OUTPUT_ROOT_ENV)
        .filter(|r| !r.is_empty())
        .map(PathBuf::from);
    resolve_output_dir(&cfg.output_dir, root.as_deref())
}

pub fn load_config(path: &Path, seed: Option<u64>) -> Result<ParsedConfig, RunError> {
    let text = read(path)?;
    let overrides: Vec<(&str, String)> = seed.map(|s| ("seed", s.to_string())).into_iter().collect();
    parse_config(&text, &overrides).map_err(|source| RunError::Config {
        path: path.display().to_string(),
        source,
    })
}

/// Everything a run needs, built from a parsed config.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub train: TrainConfig,
    pub test_distribution: TaskDistribution,
    pub manifest: Option<SplitManifest>,
}

pub fn model_spec(cfg: &ExperimentConfig) -> Result<MlpSpec, TrainError> {
    let (input, output, head) = match cfg.task {
        TaskKind::Synthetic => (cfg.feature_dim, cfg.ways, Head::SoftmaxClassifier),
        TaskKind::Sinusoid => (1, 1, Head::LinearRegressor),
        TaskKind::Omniglot => (cfg.image_side * cfg.image_side, cfg.ways, Head::SoftmaxClassifier),
        TaskKind::Navigation => (
            2,
            2,
            Head::GaussianPolicy {
                stddev: cfg.policy_stddev,
            },
        ),
    };
    let mut layers = vec![input];
    layers.extend(&cfg.hidden);
    layers.push(output);
    Ok(MlpSpec::new(layers, cfg.activation, head)?)
}

fn task_error(e: impl std::fmt::Display) -> RunError {
    RunError::Train(TrainError::Config(e.to_string()))
}

pub fn build(cfg: &ExperimentConfig) -> Result<Experiment, RunError> {
    let mut manifest = None;
    let (train_dist, test_dist) = match cfg.task {
        TaskKind::Synthetic => {
            let spec = |q| {
                SyntheticSpec::new(
                    cfg.feature_dim,
                    cfg.ways,
                    cfg.shots,
                    q,
                    cfg.cluster_spread,
                    cfg.difficulty_mix.clone(),
                )
                .map(TaskDistribution::Synthetic)
                .map_err(task_error)
            };
            (spec(cfg.queries)?, spec(cfg.test_queries)?)
        }
        TaskKind::Sinusoid => {
            let spec = |q| {
                SinusoidSpec::new(cfg.shots, q)
                    .map(TaskDistribution::Sinusoid)
                    .map_err(task_error)
            };
            (spec(cfg.queries)?, spec(cfg.test_queries)?)
        }
        TaskKind::Omniglot => {
            let root = cfg.omniglot_root.as_deref().expect("validated");
            let data = omniglot::ingest(root, cfg.image_side, cfg.rotations)?;
            let split = data.split(cfg.train_characters, cfg.val_characters, cfg.seed)?;
            manifest = Some(split.manifest);
            let episode = |queries| EpisodeSpec {
                ways: cfg.ways,
                shots: cfg.shots,
                queries,
            };
            (
                TaskDistribution::Pool {
                    pool: Arc::new(split.train),
                    episode: episode(cfg.queries),
                },
                TaskDistribution::Pool {
                    pool: Arc::new(split.test),
                    episode: episode(cfg.test_queries),
                },
            )
        }
        TaskKind::Navigation => {
            let spec = NavigationSpec {
                horizon: cfg.horizon,
                action_clip: cfg.action_clip,
                goal_radius: cfg.goal_radius,
            };
            (TaskDistribution::Navigation(spec), TaskDistribution::Navigation(spec))
        }
    };
    if let TaskDistribution::Pool { pool, episode } = &test_dist {
        pool.check(episode)
            .map_err(|e| task_error(format!("test split: {e}")))?;
    }
    let mut train = TrainConfig::new(
        model_spec(cfg)?,
        cfg.objective(),
        cfg.inner_rule(cfg.inner_steps_train),
        train_dist,
    );
    train.meta_batch = cfg.meta_batch;
    train.beta = cfg.beta;
    train.iterations = cfg.meta_iterations;
    train.optimizer = cfg.optimizer;
    train.learn_alphas = cfg.learn_alphas;
    train.entropy_samples = cfg.entropy_samples;
    train.floor = cfg.floor;
    train.trajectories = cfg.trajectories;
    train.validate()?;
    Ok(Experiment {
        train,
        test_distribution: test_dist,
        manifest,
    })
}

/// Result of a completed run.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub dir: PathBuf,
    pub summary: Summary,
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable record");
    s.push('\n');
    s
}

/// Meta-test of `state` on the run's test tasks.
pub fn meta_test(
    cfg: &ExperimentConfig,
    exp: &Experiment,
    state: &MetaState,
    steps: usize,
) -> Result<EvalSummary, RunError> {
    let tasks = sample_test_tasks(&exp.test_distribution, cfg.test_tasks, cfg.seed);
    let rule = cfg.inner_rule(steps.max(1));
    Ok(evaluate_meta_test(
        state,
        &exp.train.spec,
        &rule,
        &tasks,
        steps,
        cfg.trajectories,
    )?)
}

fn execute(parsed: &ParsedConfig, dir: &Path, summary: &mut Summary, clock: &mut WallClock) -> Result<(), RunError> {
    let cfg = &parsed.config;
    let exp = build(cfg)?;
    if let Some(m) = &exp.manifest {
        write(&dir.join(MANIFEST_FILE), &to_json(m))?;
    }
    let spec = &exp.train.spec;
    let ckpt_dir = dir.join(CHECKPOINT_DIR);
    let save = |name: &str, state: &MetaState, list: &mut Vec<String>| -> Result<(), RunError> {
        let path = ckpt_dir.join(name);
        checkpoint::save(&path, spec, state).map_err(io_err(&path))?;
        list.push(format!("{CHECKPOINT_DIR}/{name}"));
        Ok(())
    };

    let init = MetaState::initial(spec, &exp.train.rule, cfg.seed);
    save(INITIAL_CHECKPOINT, &init, &mut summary.checkpoints)?;

    let metrics_path = dir.join(METRICS_FILE);
    let mut out = BufWriter::new(fs::File::create(&metrics_path).map_err(io_err(&metrics_path))?);
    let started = Instant::now();
    let mut last = Instant::now();
    let mut done = 0;
    let result = train::<RunError, _>(&exp.train, init, |state, m| {
        let wall = cfg.timing.then(|| ms_since(last));
        last = Instant::now();
        let line = serde_json::to_string(&MetricsLine::new(m, wall)).expect("metrics line");
        writeln!(out, "{line}").map_err(io_err(&metrics_path))?;
        done = state.iteration;
        if cfg.checkpoint_every > 0 && state.iteration % cfg.checkpoint_every == 0 {
            save(
                &format!("iter-{:08}.ckpt", state.iteration),
                state,
                &mut summary.checkpoints,
            )?;
        }
        Ok(())
    });
    out.flush().map_err(io_err(&metrics_path))?;
    summary.iterations_completed = done;
    clock.train_ms = ms_since(started);
    let state = result?;

    save(FINAL_CHECKPOINT, &state, &mut summary.checkpoints)?;
    let started = Instant::now();
    let eval = meta_test(cfg, &exp, &state, cfg.inner_steps_test)?;
    clock.eval_ms = ms_since(started);
    summary.meta_test = Some(MetaTest::from(&eval));
    Ok(())
}

/// Trains and meta-tests one config, writing `config.resolved`,
/// `metrics.jsonl`, `checkpoints/` and `summary.json` to its output
/// directory. A failed run keeps what it wrote and marks the summary failed.
pub fn run(parsed: &ParsedConfig) -> Result<RunRecord, RunError> {
    let cfg = &parsed.config;
    let dir = output_dir(cfg);
    let ckpt = dir.join(CHECKPOINT_DIR);
    fs::create_dir_all(&ckpt).map_err(io_err(&ckpt))?;
    write(&dir.join(CONFIG_FILE), &parsed.resolved)?;
    // stale metrics from an earlier run must not survive a failure here
    let _ = fs::remove_file(dir.join(METRICS_FILE));

    let started = Instant::now();
    let mut summary = Summary {
        status: Status::Failed,
        error: None,
        method: cfg.method.to_string(),
        task: parsed.values["task"].clone(),
        seed: cfg.seed,
        iterations_completed: 0,
        config: CONFIG_FILE.into(),
        metrics: METRICS_FILE.into(),
        checkpoints: Vec::new(),
        meta_test: None,
        wall_clock: WallClock::default(),
    };
    let mut clock = WallClock::default();
    let outcome = execute(parsed, &dir, &mut summary, &mut clock);
    clock.total_ms = ms_since(started);
    summary.wall_clock = clock;
    match &outcome {
        Ok(()) => summary.status = Status::Completed,
        Err(e) => summary.error = Some(e.to_string()),
    }
    write(&dir.join(SUMMARY_FILE), &to_json(&summary))?;
    match outcome {
        Ok(()) => Ok(RunRecord { dir, summary }),
        Err(e) => Err(RunError::Failed {
            dir: dir.display().to_string(),
            message: e.to_string(),
        }),
    }
}

/// A completed run in `dir` whose resolved config matches `parsed`.
fn completed_run(parsed: &ParsedConfig, dir: &Path) -> Option<Summary> {
    let resolved = fs::read_to_string(dir.join(CONFIG_FILE)).ok()?;
    if resolved != parsed.resolved {
        return None;
    }
    let summary: Summary = serde_json::from_str(&fs::read_to_string(dir.join(SUMMARY_FILE)).ok()?).ok()?;
    (summary.status == Status::Completed && summary.meta_test.is_some()).then_some(summary)
}

fn mismatch(a: &ParsedConfig, b: &ParsedConfig) -> Vec<String> {
    DISTRIBUTION_KEYS
        .iter()
        .filter(|k| a.values[**k] != b.values[**k])
        .map(|k| format!("{k} ({} vs {})", a.values[*k], b.values[*k]))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub config: String,
    pub method: String,
    pub shots: usize,
    pub seed: u64,
    pub meta_test: MetaTest,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub text: String,
    pub csv: String,
}

/// Runs (or reuses) each config and tabulates their meta-test curves.
/// Configs must agree on every key that shapes the meta-test tasks.
pub fn compare(configs: &[PathBuf], out: &Path) -> Result<Comparison, RunError> {
    if configs.len() < 2 {
        return Err(RunError::Rejected("compare needs at least two configs".into()));
    }
    let parsed: Vec<ParsedConfig> = configs.iter().map(|p| load_config(p, None)).collect::<Result<_, _>>()?;
    for (p, c) in configs.iter().zip(&parsed).skip(1) {
        let diff = mismatch(&parsed[0], c);
        if !diff.is_empty() {
            return Err(RunError::Rejected(format!(
                "{} and {} sample different task distributions: {}",
                configs[0].display(),
                p.display(),
                diff.join(", ")
            )));
        }
    }
    let mut rows = Vec::new();
    for (path, p) in configs.iter().zip(&parsed) {
        let dir = output_dir(&p.config);
        let summary = match completed_run(p, &dir) {
            Some(s) => s,
            None => run(p)?.summary,
        };
        rows.push(ComparisonRow {
            config: path.display().to_string(),
            method: p.config.method.to_string(),
            shots: p.config.shots,
            seed: p.config.seed,
            meta_test: summary.meta_test.expect("completed run has a meta-test"),
        });
    }
    let (text, csv) = render_comparison(&rows);
    fs::create_dir_all(out).map_err(io_err(out))?;
    write(&out.join("comparison.txt"), &text)?;
    write(&out.join("comparison.csv"), &csv)?;
    Ok(Comparison { rows, text, csv })
}

fn render_comparison(rows: &[ComparisonRow]) -> (String, String) {
    let steps = rows.iter().map(|r| r.meta_test.curve.len()).max().unwrap_or(0);
    let first = &rows[0].meta_test;
    let mut header = vec!["config".to_string(), "method".into(), "shots".into(), "seed".into()];
    header.extend((0..steps).map(|k| format!("step {k}")));
    let mut table = vec![header];
    for r in rows {
        let mut cells = vec![
            r.config.clone(),
            r.method.clone(),
            r.shots.to_string(),
            r.seed.to_string(),
        ];
        cells.extend((0..steps).map(|k| match r.meta_test.curve.get(k) {
            Some(p) => format!("{:.4} ± {:.4}", p.mean, p.ci_half_width),
            None => "-".into(),
        }));
        table.push(cells);
    }
    let widths: Vec<usize> = (0..table[0].len())
        .map(|c| table.iter().map(|row| row[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut text = format!("meta-test {} over {} tasks, mean ± 95% CI\n", first.metric, first.tasks);
    for row in &table {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(s, w)| format!("{s}{}", " ".repeat(w - s.chars().count())))
            .collect();
        let _ = writeln!(text, "{}", cells.join("  ").trim_end());
    }

    let mut csv = format!("{COMPARISON_HEADER}\n");
    for r in rows {
        for p in &r.meta_test.curve {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{},{}",
                csv_field(&r.config),
                r.method,
                r.shots,
                r.seed,
                r.meta_test.metric,
                p.step,
                p.mean,
                p.ci_half_width
            );
        }
    }
    (text, csv)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Starting point for an adaptation curve.
#[derive(Copy, Clone, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum CurveInit {
    /// The run's final checkpoint.
    Trained,
    /// The run's untrained initialization.
    Random,
    /// Straight-line policy toward the goal (navigation only).
    Oracle,
}

fn oracle_curve(cfg: &ExperimentConfig, exp: &Experiment, max_steps: usize) -> Result<Vec<StepSummary>, RunError> {
    let TaskDistribution::Navigation(_) = exp.test_distribution else {
        return Err(RunError::Rejected("the oracle init exists only for navigation".into()));
    };
    let tasks = sample_test_tasks(&exp.test_distribution, cfg.test_tasks, cfg.seed);
    let streams = SeedStreams::new(cfg.seed);
    let returns: Vec<f64> = tasks
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let Task::Navigation(nav) = t else {
                unreachable!("navigation distribution")
            };
            let mut rng = streams.rng(Stream::TestTrajectories, i as u64);
            let trajs = navigation::rollout(nav, cfg.trajectories, cfg.policy_stddev, &mut rng, |s| {
                navigation::oracle_action(nav, s)
            });
            navigation::mean_return(&trajs)
        })
        .collect();
    let (mean, ci_half_width) = mean_ci(&returns);
    // the oracle does not adapt, so every step scores the same
    Ok((0..=max_steps)
        .map(|step| StepSummary {
            step,
            mean,
            ci_half_width,
        })
        .collect())
}

/// Meta-test metric after `0..=max_steps` adaptation steps, as CSV.
pub fn curve(run_dir: &Path, max_steps: usize, init: CurveInit) -> Result<String, RunError> {
    let config_path = run_dir.join(CONFIG_FILE);
    if !config_path.is_file() {
        return Err(RunError::Rejected(format!(
            "{} is not a run directory (no {CONFIG_FILE})",
            run_dir.display()
        )));
    }
    let parsed = load_config(&config_path, None)?;
    let cfg = &parsed.config;
    let exp = build(cfg)?;
    let points = match init {
        CurveInit::Oracle => oracle_curve(cfg, &exp, max_steps)?,
        CurveInit::Random | CurveInit::Trained => {
            let state = if init == CurveInit::Trained {
                let ckpt = run_dir.join(CHECKPOINT_DIR).join(FINAL_CHECKPOINT);
                if !ckpt.is_file() {
                    return Err(RunError::Rejected(format!("missing checkpoint {}", ckpt.display())));
                }
                checkpoint::load(&ckpt, &exp.train.spec)?
            } else {
                MetaState::initial(&exp.train.spec, &exp.train.rule, cfg.seed)
            };
            meta_test(cfg, &exp, &state, max_steps)?.curve
        }
    };
    let mut csv = format!("{CURVE_HEADER}\n");
    for p in points {
        let _ = writeln!(csv, "{},{},{}", p.step, p.mean, p.ci_half_width);
    }
    Ok(csv)
}

#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct Measures {
    pub theil: f64,
    pub ge0: f64,
    pub ge1: f64,
    pub ge2: f64,
    pub atkinson1: f64,
    pub gini: f64,
    pub vl: f64,
}

/// Losses from CSV text: numbers separated by commas, whitespace or
/// newlines. A non-numeric first line is taken as a header.
pub fn parse_losses(text: &str) -> Result<Vec<f64>, RunError> {
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let tokens: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .collect();
        let parsed: Result<Vec<f64>, _> = tokens.iter().map(|t| t.parse::<f64>()).collect();
        match parsed {
            Ok(v) => values.extend(v),
            Err(_) if i == 0 => continue,
            Err(_) => {
                return Err(RunError::Rejected(format!(
                    "line {}: `{line}` is not a list of numbers",
                    i + 1
                )))
            }
        }
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(RunError::Rejected(format!("loss {bad} is not finite")));
    }
    if values.len() < 2 {
        return Err(RunError::Rejected(format!(
            "need at least 2 loss values, got {}",
            values.len()
        )));
    }
    Ok(values)
}

pub fn measures(text: &str) -> Result<Measures, RunError> {
    let losses = parse_losses(text)?;
    let s = inequality::summarize(&losses, DEFAULT_FLOOR).map_err(|e| RunError::Rejected(e.to_string()))?;
    Ok(Measures {
        theil: s.theil,
        ge0: s.ge0,
        ge1: s.ge1,
        ge2: s.ge2,
        atkinson1: s.atkinson1,
        gini: s.gini,
        vl: s.vl,
    })
}
