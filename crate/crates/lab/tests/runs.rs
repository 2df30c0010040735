use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;
use taml_lab::checkpoint;
use taml_lab::records::{Status, Summary};
use taml_lab::runner::{self, CurveInit, RunError, CURVE_HEADER};
use taml_lab::{parse_config, ParsedConfig};

const SMALL: &str = "\
task = synthetic
N = 3
K = 1
Q = 3
test_queries = 4
feature_dim = 4
hidden = 8
M = 4
alpha = 0.4
beta = 0.05
meta_iterations = 12
test_tasks = 30
inner_steps_test = 2
difficulty_mix = 0.5:0.5,3:0.5
";

fn key(line: &str) -> &str {
    line.split('=').next().unwrap().trim()
}

/// `SMALL` with the lines of `extra` replacing those with the same key.
fn config(dir: &Path, name: &str, extra: &str) -> ParsedConfig {
    let base = SMALL.lines().filter(|l| !extra.lines().any(|e| key(e) == key(l)));
    let mut text: String = base.chain(extra.lines()).map(|l| format!("{l}\n")).collect();
    text.push_str(&format!("output_dir = {}\n", dir.join(name).display()));
    parse_config(&text, &[]).unwrap()
}

fn summary(dir: &Path) -> Summary {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn write_config(dir: &Path, name: &str, extra: &str) -> PathBuf {
    let path = dir.join(format!("{name}.cfg"));
    fs::write(&path, config(dir, name, extra).resolved).unwrap();
    path
}

#[test]
fn run_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let p = config(tmp.path(), "a", "method = taml-theil\ncheckpoint_every = 5");
    let record = runner::run(&p).unwrap();
    let dir = &record.dir;
    assert_eq!(fs::read_to_string(dir.join("config.resolved")).unwrap(), p.resolved);
    assert_eq!(record.summary, summary(dir));
    assert_eq!(record.summary.status, Status::Completed);
    assert_eq!(record.summary.iterations_completed, 12);
    assert_eq!(
        record.summary.checkpoints,
        [
            "checkpoints/initial.ckpt",
            "checkpoints/iter-00000005.ckpt",
            "checkpoints/iter-00000010.ckpt",
            "checkpoints/final.ckpt"
        ]
    );
    for c in &record.summary.checkpoints {
        assert!(dir.join(c).is_file(), "{c}");
    }
    let mt = record.summary.meta_test.as_ref().unwrap();
    assert_eq!(mt.metric, "accuracy");
    assert_eq!(mt.tasks, 30);
    assert_eq!(mt.curve.len(), 3);

    let spec = runner::model_spec(&p.config).unwrap();
    let last = checkpoint::load(&dir.join("checkpoints/final.ckpt"), &spec).unwrap();
    assert_eq!(last.iteration, 12);
    assert_eq!(last.seed, 0);
}

#[test]
fn metrics_lines_follow_the_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let record = runner::run(&config(tmp.path(), "a", "method = taml-gini")).unwrap();
    let text = fs::read_to_string(record.dir.join("metrics.jsonl")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 12);
    for (i, line) in lines.iter().enumerate() {
        let v: Value = serde_json::from_str(line).unwrap();
        let obj = v.as_object().unwrap();
        let mut keys: Vec<&str> = obj.keys().map(String::as_str).collect();
        keys.sort_unstable();
        assert_eq!(
            keys,
            [
                "grad_norm",
                "iteration",
                "mean_post_loss",
                "mean_pre_loss",
                "pre_loss_theil",
                "regularizer_value",
                "wall_ms"
            ]
        );
        assert_eq!(obj["iteration"].as_u64(), Some(i as u64));
        for k in [
            "mean_pre_loss",
            "mean_post_loss",
            "regularizer_value",
            "pre_loss_theil",
            "grad_norm",
        ] {
            assert!(obj[k].as_f64().unwrap().is_finite(), "{k}");
        }
        assert!(obj["regularizer_value"].as_f64().unwrap() >= 0.0);
        assert!(obj["wall_ms"].is_null());
    }

    let timed = runner::run(&config(tmp.path(), "b", "timing = true\nmeta_iterations = 2")).unwrap();
    let text = fs::read_to_string(timed.dir.join("metrics.jsonl")).unwrap();
    for line in text.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert!(v["wall_ms"].as_f64().unwrap() >= 0.0);
    }
}

#[test]
fn zero_iterations_meta_test_the_initial_parameters() {
    let tmp = tempfile::tempdir().unwrap();
    let p = config(tmp.path(), "a", "meta_iterations = 0\ninner_steps_test = 0");
    let record = runner::run(&p).unwrap();
    assert_eq!(record.summary.iterations_completed, 0);
    assert_eq!(fs::read_to_string(record.dir.join("metrics.jsonl")).unwrap(), "");
    let curve = &record.summary.meta_test.unwrap().curve;
    assert_eq!(curve.len(), 1);
    let csv = runner::curve(&record.dir, 0, CurveInit::Random).unwrap();
    let row: Vec<f64> = csv
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .map(|x| x.parse().unwrap())
        .collect();
    assert_eq!(row, vec![0.0, curve[0].mean, curve[0].ci_half_width]);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    for extra in [
        "method = taml-theil+metasgd\noptimizer = adam",
        "method = taml-entropy",
        "task = sinusoid\nmethod = taml-atkinson(0.5)",
        "task = navigation\nmethod = maml-first-order\nhidden = 8\nM = 2\ntrajectories = 3\nhorizon = 10\nalpha = 0.001\nmeta_iterations = 3\ntest_tasks = 2",
    ] {
        let a = runner::run(&config(tmp.path(), "a", extra)).unwrap();
        let b = runner::run(&config(tmp.path(), "b", extra)).unwrap();
        let read = |d: &Path| fs::read(d.join("metrics.jsonl")).unwrap();
        assert!(!read(&a.dir).is_empty());
        assert_eq!(read(&a.dir), read(&b.dir), "{extra}");
        assert_eq!(a.summary.meta_test, b.summary.meta_test);
        let other = runner::run(&config(tmp.path(), "c", &format!("{extra}\nseed = 1"))).unwrap();
        assert_ne!(read(&a.dir), read(&other.dir), "{extra}");
    }
}

#[test]
fn theil_with_zero_lambda_matches_maml() {
    let tmp = tempfile::tempdir().unwrap();
    let maml = runner::run(&config(tmp.path(), "maml", "method = maml")).unwrap();
    let taml = runner::run(&config(tmp.path(), "taml", "method = taml-theil\nlambda = 0")).unwrap();
    assert_eq!(maml.summary.meta_test, taml.summary.meta_test);
    assert_eq!(
        fs::read(maml.dir.join("metrics.jsonl")).unwrap(),
        fs::read(taml.dir.join("metrics.jsonl")).unwrap()
    );
}

#[test]
fn failed_run_keeps_partial_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let p = config(
        tmp.path(),
        "a",
        "task = sinusoid\nalpha = 50\nbeta = 50\noptimizer = sgd\nmeta_iterations = 100\ncheckpoint_every = 1",
    );
    let err = runner::run(&p).unwrap_err();
    assert!(matches!(err, RunError::Failed { .. }), "{err}");
    let dir = tmp.path().join("a");
    let s = summary(&dir);
    assert_eq!(s.status, Status::Failed);
    assert!(s.error.unwrap().contains("non-finite meta-gradient"));
    assert!(s.meta_test.is_none());
    let lines = fs::read_to_string(dir.join("metrics.jsonl")).unwrap().lines().count() as u64;
    assert_eq!(lines, s.iterations_completed);
    assert!(lines < 100);
    assert!(dir.join("checkpoints/initial.ckpt").is_file());
    assert!(!dir.join("checkpoints/final.ckpt").exists());
}

#[test]
fn infeasible_experiments_fail_before_training() {
    let tmp = tempfile::tempdir().unwrap();
    let mut p = parse_config(
        "task = omniglot\nomniglot_root = /nonexistent/dir\nmeta_iterations = 1",
        &[],
    )
    .unwrap();
    p.config.output_dir = tmp.path().join("b");
    let err = runner::run(&p).unwrap_err();
    assert!(err.to_string().contains("/nonexistent/dir"), "{err}");
    assert_eq!(summary(&tmp.path().join("b")).status, Status::Failed);
}

fn check_curve_csv(csv: &str, max_steps: usize) -> Vec<(f64, f64)> {
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CURVE_HEADER));
    let rows: Vec<(f64, f64)> = lines
        .enumerate()
        .map(|(k, line)| {
            let cells: Vec<&str> = line.split(',').collect();
            assert_eq!(cells.len(), 3, "{line}");
            assert_eq!(cells[0].parse::<usize>().unwrap(), k);
            let mean: f64 = cells[1].parse().unwrap();
            let ci: f64 = cells[2].parse().unwrap();
            assert!(mean.is_finite() && ci.is_finite() && ci >= 0.0, "{line}");
            (mean, ci)
        })
        .collect();
    assert_eq!(rows.len(), max_steps + 1);
    rows
}

#[test]
fn curves_from_checkpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let record = runner::run(&config(tmp.path(), "a", "")).unwrap();
    let mt = record.summary.meta_test.unwrap();

    let trained = check_curve_csv(&runner::curve(&record.dir, 2, CurveInit::Trained).unwrap(), 2);
    for (row, p) in trained.iter().zip(&mt.curve) {
        assert_eq!(*row, (p.mean, p.ci_half_width));
    }
    assert_eq!(
        check_curve_csv(&runner::curve(&record.dir, 0, CurveInit::Trained).unwrap(), 0).len(),
        1
    );
    let random = check_curve_csv(&runner::curve(&record.dir, 4, CurveInit::Random).unwrap(), 4);
    // the untrained classifier starts near chance for 3 ways
    assert!((random[0].0 - 1.0 / 3.0).abs() < 0.1, "{random:?}");
    assert!(runner::curve(&record.dir, 2, CurveInit::Oracle).is_err());

    fs::remove_file(record.dir.join("checkpoints/final.ckpt")).unwrap();
    let err = runner::curve(&record.dir, 2, CurveInit::Trained).unwrap_err();
    assert!(err.to_string().contains("missing checkpoint"), "{err}");
    assert!(runner::curve(tmp.path(), 2, CurveInit::Trained).is_err());
}

#[test]
fn oracle_curve_is_flat_and_beats_the_untrained_policy() {
    let tmp = tempfile::tempdir().unwrap();
    let p = config(
        tmp.path(),
        "nav",
        "task = navigation\nmethod = maml-first-order\nhidden = 8\nM = 2\ntrajectories = 4\nalpha = 0.0001\nmeta_iterations = 1\ntest_tasks = 10",
    );
    let record = runner::run(&p).unwrap();
    let oracle = check_curve_csv(&runner::curve(&record.dir, 3, CurveInit::Oracle).unwrap(), 3);
    assert!(oracle.windows(2).all(|w| w[0] == w[1]));
    let random = check_curve_csv(&runner::curve(&record.dir, 0, CurveInit::Random).unwrap(), 0);
    assert!(oracle[0].0 > random[0].0, "{oracle:?} vs {random:?}");
}

fn check_comparison_csv(csv: &str, runs: usize, steps: usize) {
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(runner::COMPARISON_HEADER));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), runs * steps);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r.len(), 8);
        r[2].parse::<usize>().unwrap();
        r[3].parse::<u64>().unwrap();
        assert_eq!(r[5].parse::<usize>().unwrap(), i % steps);
        assert!(r[6].parse::<f64>().unwrap().is_finite());
        assert!(r[7].parse::<f64>().unwrap() >= 0.0);
    }
}

#[test]
fn compare_tabulates_matching_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let a = write_config(tmp.path(), "maml", "method = maml");
    let b = write_config(tmp.path(), "twin", "method = maml");
    let c = write_config(tmp.path(), "theil", "method = taml-theil\nlambda = 0.5\nK = 2");
    let out = tmp.path().join("cmp");
    let cmp = runner::compare(&[a.clone(), b, c], &out).unwrap();
    assert_eq!(cmp.rows.len(), 3);
    assert_eq!(cmp.rows[0].meta_test, cmp.rows[1].meta_test);
    assert_eq!(cmp.rows[2].method, "taml-theil");
    assert_eq!(cmp.rows[2].shots, 2);
    assert_eq!(fs::read_to_string(out.join("comparison.txt")).unwrap(), cmp.text);
    assert_eq!(fs::read_to_string(out.join("comparison.csv")).unwrap(), cmp.csv);
    check_comparison_csv(&cmp.csv, 3, 3);
    let text_rows: Vec<&str> = cmp.text.lines().collect();
    assert_eq!(text_rows.len(), 5);
    assert!(text_rows[0].starts_with("meta-test accuracy over 30 tasks"));
    assert!(text_rows.iter().skip(2).all(|l| l.matches('±').count() == 3));

    // completed runs are reused rather than retrained
    let metrics = tmp.path().join("maml/metrics.jsonl");
    fs::write(&metrics, "sentinel").unwrap();
    runner::compare(&[a.clone(), a], &out).unwrap();
    assert_eq!(fs::read_to_string(&metrics).unwrap(), "sentinel");
}

#[test]
fn compare_rejects_mismatched_distributions() {
    let tmp = tempfile::tempdir().unwrap();
    let a = write_config(tmp.path(), "a", "");
    for (name, extra) in [
        ("b", "N = 4"),
        ("c", "difficulty_mix = 1:1"),
        ("d", "task = sinusoid"),
        ("e", "test_tasks = 31"),
    ] {
        let b = write_config(tmp.path(), name, extra);
        let err = runner::compare(&[a.clone(), b], &tmp.path().join("cmp")).unwrap_err();
        assert!(matches!(err, RunError::Rejected(_)));
        assert!(err.to_string().contains("different task distributions"), "{err}");
    }
    assert!(!tmp.path().join("a").exists(), "nothing runs before the check");
    assert!(runner::compare(&[a], &tmp.path().join("cmp")).is_err());
}

#[test]
fn measures_of_a_loss_column() {
    let m = runner::measures("loss\n1\n3\n").unwrap();
    assert!((m.theil - 0.13081).abs() < 1e-5);
    assert_eq!(m.ge1, m.theil);
    let flat = runner::measures("2,2,2,2").unwrap();
    for v in [
        flat.theil,
        flat.ge0,
        flat.ge1,
        flat.ge2,
        flat.atkinson1,
        flat.gini,
        flat.vl,
    ] {
        assert_eq!(v, 0.0);
    }
    assert!(runner::measures("1").is_err());
    assert!(runner::measures("").is_err());
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut count = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        if let Err(e) = parse_config(&text, &[]) {
            panic!("{}: {e}", path.display());
        }
        count += 1;
    }
    assert!(count >= 5);
}
