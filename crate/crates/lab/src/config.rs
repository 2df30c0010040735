//! Flat `key = value` experiment configs.
//!
//! Every key has a default. Unknown keys, duplicate keys and out-of-range
//! values are reported together, one diagnostic per field. The resolved
//! form of a config is the input text followed by the defaults it did not
//! set, so it re-parses to the same [`ExperimentConfig`].

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use taml_core::inequality::MeasureKind;
use taml_core::nn::{Activation, DEFAULT_LEAKY_SLOPE};
use taml_core::objectives::ObjectiveKind;
use taml_core::trainer::{EntropySamples, InnerKind, InnerRule, MetaOptimizer, Order};

/// `(key, default)` in canonical order.
pub const KEYS: &[(&str, &str)] = &[
    ("method", "maml"),
    ("order", "second"),
    ("task", "synthetic"),
    ("N", "5"),
    ("K", "1"),
    ("Q", "5"),
    ("test_queries", "15"),
    ("M", "32"),
    ("alpha", "0.4"),
    ("beta", "0.01"),
    ("lambda", "0.1"),
    ("optimizer", "adam"),
    ("inner_steps_train", "1"),
    ("inner_steps_test", "1"),
    ("meta_iterations", "1000"),
    ("test_tasks", "600"),
    ("seed", "0"),
    ("checkpoint_every", "0"),
    ("output_dir", "runs/default"),
    ("hidden", "32,32"),
    ("activation", "leaky_relu"),
    ("entropy_samples", "support"),
    ("learn_alphas", "true"),
    ("floor", "1e-8"),
    ("timing", "false"),
    ("feature_dim", "8"),
    ("cluster_spread", "0.4"),
    ("difficulty_mix", "1:1"),
    ("omniglot_root", ""),
    ("image_side", "28"),
    ("rotations", "true"),
    ("train_characters", "1200"),
    ("val_characters", "100"),
    ("horizon", "100"),
    ("action_clip", "0.1"),
    ("goal_radius", "0.01"),
    ("policy_stddev", "0.1"),
    ("trajectories", "20"),
];

/// Keys that describe the task distribution seen at meta-test time.
/// `compare` requires them to agree across configs.
pub const DISTRIBUTION_KEYS: &[&str] = &[
    "task",
    "N",
    "test_queries",
    "test_tasks",
    "feature_dim",
    "cluster_spread",
    "difficulty_mix",
    "omniglot_root",
    "image_side",
    "rotations",
    "train_characters",
    "val_characters",
    "horizon",
    "action_clip",
    "goal_radius",
    "policy_stddev",
    "trajectories",
];

#[derive(Clone, Debug, PartialEq)]
pub struct FieldError {
    pub key: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.key, self.message),
            None => write!(f, "{}: {}", self.key, self.message),
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub struct ConfigError {
    pub fields: Vec<FieldError>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "invalid config ({} problem{}):",
            self.fields.len(),
            if self.fields.len() == 1 { "" } else { "s" }
        )?;
        for e in &self.fields {
            writeln!(f, "  {e}")?;
        }
        Ok(())
    }
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub enum Regularizer {
    Entropy,
    EntropyMaxOnly,
    Inequality(MeasureKind),
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub enum Method {
    Maml,
    MamlFirstOrder,
    MetaSgd,
    Taml { regularizer: Regularizer, meta_sgd: bool },
}

impl Method {
    pub fn uses_meta_sgd(&self) -> bool {
        matches!(self, Method::MetaSgd | Method::Taml { meta_sgd: true, .. })
    }

    pub fn objective(&self, lambda: f64) -> ObjectiveKind {
        match *self {
            Method::Maml | Method::MamlFirstOrder | Method::MetaSgd => ObjectiveKind::Maml,
            Method::Taml { regularizer, .. } => match regularizer {
                Regularizer::Entropy => ObjectiveKind::EntropyReduction { lambda },
                Regularizer::EntropyMaxOnly => ObjectiveKind::EntropyMaxOnly { lambda },
                Regularizer::Inequality(measure) => ObjectiveKind::Inequality { measure, lambda },
            },
        }
    }
}

fn parse_call(s: &str, name: &str) -> Option<Result<f64, String>> {
    let rest = s.strip_prefix(name)?.strip_prefix('(')?.strip_suffix(')')?;
    Some(
        rest.trim()
            .parse::<f64>()
            .map_err(|_| format!("`{rest}` is not a number")),
    )
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        match s {
            "maml" => return Ok(Method::Maml),
            "maml-first-order" => return Ok(Method::MamlFirstOrder),
            "metasgd" => return Ok(Method::MetaSgd),
            _ => {}
        }
        let (base, meta_sgd) = match s.strip_suffix("+metasgd") {
            Some(b) => (b, true),
            None => (s, false),
        };
        let regularizer = match base {
            "taml-entropy" => Regularizer::Entropy,
            "taml-entropy-maxonly" => Regularizer::EntropyMaxOnly,
            "taml-theil" => Regularizer::Inequality(MeasureKind::Theil),
            "taml-gini" => Regularizer::Inequality(MeasureKind::Gini),
            "taml-vl" => Regularizer::Inequality(MeasureKind::VarianceOfLogarithms),
            _ => {
                if let Some(x) = parse_call(base, "taml-ge") {
                    Regularizer::Inequality(MeasureKind::GeneralizedEntropy(x?))
                } else if let Some(x) = parse_call(base, "taml-atkinson") {
                    let x = x?;
                    if x < 0.0 {
                        return Err(format!("Atkinson aversion must be >= 0, got {x}"));
                    }
                    Regularizer::Inequality(MeasureKind::Atkinson(x))
                } else {
                    return Err(format!(
                        "unknown method `{s}` (expected maml, maml-first-order, metasgd, taml-entropy, taml-entropy-maxonly, taml-theil, taml-ge(x), taml-atkinson(x), taml-gini, taml-vl, optionally with +metasgd)"
                    ));
                }
            }
        };
        Ok(Method::Taml { regularizer, meta_sgd })
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Maml => f.write_str("maml"),
            Method::MamlFirstOrder => f.write_str("maml-first-order"),
            Method::MetaSgd => f.write_str("metasgd"),
            Method::Taml { regularizer, meta_sgd } => {
                match regularizer {
                    Regularizer::Entropy => f.write_str("taml-entropy")?,
                    Regularizer::EntropyMaxOnly => f.write_str("taml-entropy-maxonly")?,
                    Regularizer::Inequality(m) => match m {
                        MeasureKind::Theil => f.write_str("taml-theil")?,
                        MeasureKind::GeneralizedEntropy(x) => write!(f, "taml-ge({x})")?,
                        MeasureKind::Atkinson(x) => write!(f, "taml-atkinson({x})")?,
                        MeasureKind::Gini => f.write_str("taml-gini")?,
                        MeasureKind::VarianceOfLogarithms => f.write_str("taml-vl")?,
                    },
                }
                if *meta_sgd {
                    f.write_str("+metasgd")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum TaskKind {
    Synthetic,
    Sinusoid,
    Omniglot,
    Navigation,
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "synthetic" => Ok(TaskKind::Synthetic),
            "sinusoid" => Ok(TaskKind::Sinusoid),
            "omniglot" => Ok(TaskKind::Omniglot),
            "navigation" => Ok(TaskKind::Navigation),
            _ => Err(format!(
                "unknown task `{s}` (expected synthetic, sinusoid, omniglot or navigation)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub method: Method,
    pub order: Order,
    pub task: TaskKind,
    pub ways: usize,
    pub shots: usize,
    pub queries: usize,
    pub test_queries: usize,
    pub meta_batch: usize,
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub optimizer: MetaOptimizer,
    pub inner_steps_train: usize,
    pub inner_steps_test: usize,
    pub meta_iterations: u64,
    pub test_tasks: usize,
    pub seed: u64,
    pub checkpoint_every: u64,
    pub output_dir: PathBuf,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub entropy_samples: EntropySamples,
    pub learn_alphas: bool,
    pub floor: f64,
    pub timing: bool,
    pub feature_dim: usize,
    pub cluster_spread: f64,
    pub difficulty_mix: Vec<(f64, f64)>,
    pub omniglot_root: Option<PathBuf>,
    pub image_side: usize,
    pub rotations: bool,
    pub train_characters: usize,
    pub val_characters: usize,
    pub horizon: usize,
    pub action_clip: f64,
    pub goal_radius: f64,
    pub policy_stddev: f64,
    pub trajectories: usize,
}

/// A parsed config together with the text it resolves to.
#[derive(Clone, Debug, PartialEq)]
pub struct ParsedConfig {
    pub config: ExperimentConfig,
    /// Effective value of every key, in canonical order.
    pub values: BTreeMap<String, String>,
    pub resolved: String,
}

impl ParsedConfig {
    /// Canonical `key = value` lines for the keys that define the meta-test
    /// task distribution.
    pub fn distribution_signature(&self) -> String {
        let mut s = String::new();
        for k in DISTRIBUTION_KEYS {
            let _ = writeln!(s, "{k} = {}", self.values[*k]);
        }
        s
    }
}

struct Entry {
    value: String,
    line: usize,
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn read_entries(text: &str, errors: &mut Vec<FieldError>) -> BTreeMap<String, Entry> {
    let mut out: BTreeMap<String, Entry> = BTreeMap::new();
    for (line, l) in lines(text) {
        let Some((k, v)) = l.split_once('=') else {
            errors.push(FieldError {
                key: l.to_string(),
                line: Some(line),
                message: "expected `key = value`".into(),
            });
            continue;
        };
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.iter().any(|(key, _)| *key == k) {
            errors.push(FieldError {
                key: k.to_string(),
                line: Some(line),
                message: "unknown key".into(),
            });
            continue;
        }
        if let Some(prev) = out.get(k) {
            errors.push(FieldError {
                key: k.to_string(),
                line: Some(line),
                message: format!("duplicate key (first set on line {})", prev.line),
            });
            continue;
        }
        out.insert(
            k.to_string(),
            Entry {
                value: v.to_string(),
                line,
            },
        );
    }
    out
}

struct Fields<'a> {
    entries: &'a BTreeMap<String, Entry>,
    errors: Vec<FieldError>,
}

impl Fields<'_> {
    fn raw(&self, key: &str) -> (&str, Option<usize>) {
        match self.entries.get(key) {
            Some(e) => (e.value.as_str(), Some(e.line)),
            None => (KEYS.iter().find(|(k, _)| *k == key).expect("known key").1, None),
        }
    }

    fn fail(&mut self, key: &str, message: String) {
        let line = self.entries.get(key).map(|e| e.line);
        self.errors.push(FieldError {
            key: key.to_string(),
            line,
            message,
        });
    }

    fn parse<T>(&mut self, key: &str, fallback: T, f: impl FnOnce(&str) -> Result<T, String>) -> T {
        let (raw, _) = self.raw(key);
        match f(raw) {
            Ok(v) => v,
            Err(m) => {
                self.fail(key, m);
                fallback
            }
        }
    }

    fn int(&mut self, key: &str, min: u64, max: u64) -> u64 {
        self.parse(key, min, |s| {
            let v: u64 = s.parse().map_err(|_| format!("`{s}` is not a non-negative integer"))?;
            if v < min || v > max {
                return Err(format!("{v} is outside [{min}, {max}]"));
            }
            Ok(v)
        })
    }

    fn usize(&mut self, key: &str, min: u64, max: u64) -> usize {
        self.int(key, min, max) as usize
    }

    fn real(&mut self, key: &str, min: f64, max: f64, min_inclusive: bool) -> f64 {
        self.parse(key, min.max(f64::MIN_POSITIVE), |s| {
            let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
            let low_ok = if min_inclusive { v >= min } else { v > min };
            if !v.is_finite() || !low_ok || v > max {
                let open = if min_inclusive { "[" } else { "(" };
                return Err(format!("{v} is outside {open}{min}, {max}]"));
            }
            Ok(v)
        })
    }

    fn boolean(&mut self, key: &str) -> bool {
        self.parse(key, false, |s| match s {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(format!("`{s}` is not true or false")),
        })
    }
}

fn parse_activation(s: &str) -> Result<Activation, String> {
    match s {
        "relu" => Ok(Activation::Relu),
        "leaky_relu" => Ok(Activation::LeakyRelu(DEFAULT_LEAKY_SLOPE)),
        _ => match parse_call(s, "leaky_relu") {
            Some(Ok(x)) if (0.0..1.0).contains(&x) => Ok(Activation::LeakyRelu(x)),
            Some(Ok(x)) => Err(format!("leaky slope must be in [0, 1), got {x}")),
            Some(Err(e)) => Err(e),
            None => Err(format!(
                "unknown activation `{s}` (expected relu, leaky_relu or leaky_relu(slope))"
            )),
        },
    }
}

fn parse_mix(s: &str) -> Result<Vec<(f64, f64)>, String> {
    let mut mix = Vec::new();
    for part in s.split(',') {
        let (a, b) = part
            .split_once(':')
            .ok_or_else(|| format!("`{part}` is not `spread:weight`"))?;
        let spread: f64 = a.trim().parse().map_err(|_| format!("`{a}` is not a number"))?;
        let weight: f64 = b.trim().parse().map_err(|_| format!("`{b}` is not a number"))?;
        if !(spread > 0.0 && weight > 0.0 && spread.is_finite() && weight.is_finite()) {
            return Err(format!("`{part}`: spread and weight must be positive"));
        }
        mix.push((spread, weight));
    }
    let total: f64 = mix.iter().map(|p| p.1).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(format!("weights sum to {total}, not 1"));
    }
    Ok(mix)
}

fn parse_hidden(s: &str) -> Result<Vec<usize>, String> {
    let v: Result<Vec<usize>, _> = s.split(',').map(|x| x.trim().parse::<usize>()).collect();
    match v {
        Ok(v) if !v.is_empty() && v.iter().all(|&h| (1..=4096).contains(&h)) => Ok(v),
        _ => Err(format!(
            "`{s}` is not a comma-separated list of layer widths in [1, 4096]"
        )),
    }
}

/// Parses `text`, applying `overrides` (`key`, `value`) on top. Overridden
/// keys are commented out in the resolved text and restated at the end.
pub fn parse_config(text: &str, overrides: &[(&str, String)]) -> Result<ParsedConfig, ConfigError> {
    let mut errors = Vec::new();
    let mut entries = read_entries(text, &mut errors);
    for (k, v) in overrides {
        entries.insert(
            k.to_string(),
            Entry {
                value: v.clone(),
                line: 0,
            },
        );
    }
    let mut f = Fields {
        entries: &entries,
        errors,
    };

    let method = f.parse("method", Method::Maml, Method::from_str);
    let task = f.parse("task", TaskKind::Synthetic, TaskKind::from_str);
    // first order is the only choice for these, so it is also their default
    let first_only = method == Method::MamlFirstOrder || task == TaskKind::Navigation;
    let order = if entries.contains_key("order") {
        f.parse("order", Order::Second, |s| match s {
            "second" => Ok(Order::Second),
            "first" => Ok(Order::First),
            _ => Err(format!("`{s}` is not first or second")),
        })
    } else if first_only {
        Order::First
    } else {
        Order::Second
    };
    if order == Order::Second && method == Method::MamlFirstOrder {
        f.fail("order", "maml-first-order cannot run with order = second".into());
    } else if order == Order::Second && task == TaskKind::Navigation {
        f.fail(
            "order",
            "navigation adapts with first-order inner gradients only".into(),
        );
    }
    let ways = f.usize("N", 2, 1000);
    let shots = f.usize("K", 1, 1000);
    let queries = f.usize("Q", 1, 1000);
    let test_queries = f.usize("test_queries", 1, 1000);
    let meta_batch = f.usize("M", 1, 4096);
    let alpha = f.real("alpha", 0.0, 1e3, true);
    let beta = f.real("beta", 0.0, 1e3, true);
    let lambda = f.real("lambda", 0.0, 1e6, true);
    let optimizer = f.parse("optimizer", MetaOptimizer::Sgd, |s| match s {
        "sgd" => Ok(MetaOptimizer::Sgd),
        "adam" => Ok(MetaOptimizer::adam()),
        _ => Err(format!("`{s}` is not sgd or adam")),
    });
    let inner_steps_train = f.usize("inner_steps_train", 1, 100);
    let inner_steps_test = f.usize("inner_steps_test", 0, 100);
    let meta_iterations = f.int("meta_iterations", 0, 10_000_000);
    let test_tasks = f.usize("test_tasks", 1, 1_000_000);
    let seed = f.int("seed", 0, u64::MAX);
    let checkpoint_every = f.int("checkpoint_every", 0, 10_000_000);
    let output_dir = f.parse("output_dir", PathBuf::new(), |s| {
        if s.is_empty() {
            Err("must not be empty".into())
        } else {
            Ok(PathBuf::from(s))
        }
    });
    let hidden = f.parse("hidden", vec![1], parse_hidden);
    let activation = f.parse("activation", Activation::Relu, parse_activation);
    let entropy_samples = f.parse("entropy_samples", EntropySamples::Support, |s| match s {
        "support" => Ok(EntropySamples::Support),
        "query" => Ok(EntropySamples::Query),
        _ => Err(format!("`{s}` is not support or query")),
    });
    let learn_alphas = f.boolean("learn_alphas");
    let floor = f.real("floor", 0.0, 1.0, false);
    let timing = f.boolean("timing");
    let feature_dim = f.usize("feature_dim", 1, 100_000);
    let cluster_spread = f.real("cluster_spread", 0.0, 1e6, false);
    let difficulty_mix = f.parse("difficulty_mix", vec![(1.0, 1.0)], parse_mix);
    let omniglot_root = f.parse("omniglot_root", None, |s| Ok((!s.is_empty()).then(|| PathBuf::from(s))));
    let image_side = f.usize("image_side", 1, 256);
    let rotations = f.boolean("rotations");
    let train_characters = f.usize("train_characters", 1, 1_000_000);
    let val_characters = f.usize("val_characters", 0, 1_000_000);
    let horizon = f.usize("horizon", 1, 100_000);
    let action_clip = f.real("action_clip", 0.0, 1e3, false);
    let goal_radius = f.real("goal_radius", 0.0, 1e3, true);
    let policy_stddev = f.real("policy_stddev", 0.0, 1e3, false);
    let trajectories = f.usize("trajectories", 1, 100_000);

    if task == TaskKind::Omniglot && omniglot_root.is_none() {
        f.fail("omniglot_root", "required when task = omniglot".into());
    }
    let objective = method.objective(lambda);
    if matches!(objective, ObjectiveKind::Inequality { .. }) && lambda > 0.0 && meta_batch < 2 {
        f.fail("M", "inequality methods need M >= 2".into());
    }
    if matches!(
        objective,
        ObjectiveKind::EntropyReduction { .. } | ObjectiveKind::EntropyMaxOnly { .. }
    ) && !matches!(task, TaskKind::Synthetic | TaskKind::Omniglot)
    {
        f.fail("method", "entropy methods need a classification task".into());
    }

    if !f.errors.is_empty() {
        return Err(ConfigError { fields: f.errors });
    }

    let mut values: BTreeMap<String, String> = KEYS
        .iter()
        .map(|(k, _)| (k.to_string(), f.raw(k).0.to_string()))
        .collect();
    let order_name = match order {
        Order::First => "first",
        Order::Second => "second",
    };
    values.insert("order".into(), order_name.into());
    let resolved = resolve_text(text, &entries, overrides, &values);
    Ok(ParsedConfig {
        config: ExperimentConfig {
            method,
            order,
            task,
            ways,
            shots,
            queries,
            test_queries,
            meta_batch,
            alpha,
            beta,
            lambda,
            optimizer,
            inner_steps_train,
            inner_steps_test,
            meta_iterations,
            test_tasks,
            seed,
            checkpoint_every,
            output_dir,
            hidden,
            activation,
            entropy_samples,
            learn_alphas,
            floor,
            timing,
            feature_dim,
            cluster_spread,
            difficulty_mix,
            omniglot_root,
            image_side,
            rotations,
            train_characters,
            val_characters,
            horizon,
            action_clip,
            goal_radius,
            policy_stddev,
            trajectories,
        },
        values,
        resolved,
    })
}

fn resolve_text(
    text: &str,
    entries: &BTreeMap<String, Entry>,
    overrides: &[(&str, String)],
    values: &BTreeMap<String, String>,
) -> String {
    let overridden = |k: &str| overrides.iter().any(|(o, _)| *o == k);
    let mut out = String::new();
    for raw in text.lines() {
        let l = raw.trim();
        let key = l.split_once('=').map(|(k, _)| k.trim());
        match key {
            Some(k) if !l.starts_with('#') && overridden(k) => {
                let _ = writeln!(out, "# {l}  (overridden on the command line)");
            }
            _ => {
                out.push_str(raw);
                out.push('\n');
            }
        }
    }
    if !overrides.is_empty() {
        out.push_str("# command-line overrides\n");
        for (k, v) in overrides {
            let _ = writeln!(out, "{k} = {v}");
        }
    }
    let missing: Vec<&str> = KEYS
        .iter()
        .map(|(k, _)| *k)
        .filter(|k| !entries.contains_key(*k))
        .collect();
    if !missing.is_empty() {
        out.push_str("# resolved defaults\n");
        for k in missing {
            let _ = writeln!(out, "{k} = {}", values[k]);
        }
    }
    out
}

impl ExperimentConfig {
    pub fn inner_rule(&self, steps: usize) -> InnerRule {
        let kind = if self.method.uses_meta_sgd() {
            InnerKind::MetaSgd(self.alpha)
        } else {
            InnerKind::FixedStep(self.alpha)
        };
        InnerRule {
            kind,
            steps,
            order: self.order,
        }
    }

    pub fn objective(&self) -> ObjectiveKind {
        self.method.objective(self.lambda)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse() {
        let p = parse_config("", &[]).unwrap();
        assert_eq!(p.config.method, Method::Maml);
        assert_eq!(p.config.ways, 5);
        assert_eq!(p.config.hidden, vec![32, 32]);
        assert_eq!(p.values.len(), KEYS.len());
    }

    #[test]
    fn method_strings_round_trip() {
        for s in [
            "maml",
            "maml-first-order",
            "metasgd",
            "taml-entropy",
            "taml-entropy-maxonly",
            "taml-theil",
            "taml-ge(2)",
            "taml-ge(0.5)",
            "taml-atkinson(1)",
            "taml-gini",
            "taml-vl",
            "taml-theil+metasgd",
            "taml-gini+metasgd",
        ] {
            let m: Method = s.parse().unwrap();
            assert_eq!(m.to_string(), s);
        }
        assert!("taml-atkinson(-1)".parse::<Method>().is_err());
        assert!("taml-ge(x)".parse::<Method>().is_err());
        assert!("reptile".parse::<Method>().is_err());
        assert!("taml-theil+metasgd".parse::<Method>().unwrap().uses_meta_sgd());
    }

    #[test]
    fn unknown_and_invalid_keys_are_all_reported() {
        let e = parse_config(
            "method = maml\nlearning_rate = 3\nN = 1\nalpha = -1\nbeta = x\nN = 4\n",
            &[],
        )
        .unwrap_err();
        let keys: Vec<&str> = e.fields.iter().map(|f| f.key.as_str()).collect();
        assert!(keys.contains(&"learning_rate"));
        assert!(keys.contains(&"alpha"));
        assert!(keys.contains(&"beta"));
        assert_eq!(keys.iter().filter(|k| **k == "N").count(), 2);
        assert!(e.to_string().contains("line 2: learning_rate: unknown key"));
    }

    #[test]
    fn resolved_config_round_trips() {
        let text = "# paired run\nmethod = taml-theil\nlambda = 0.5\nseed = 3\n\ndifficulty_mix = 0.5:0.5, 3:0.5\n";
        let p = parse_config(text, &[]).unwrap();
        assert!(p.resolved.starts_with(text));
        let again = parse_config(&p.resolved, &[]).unwrap();
        assert_eq!(again.config, p.config);
        assert_eq!(again.values, p.values);

        let o = parse_config(text, &[("seed", "9".into())]).unwrap();
        assert_eq!(o.config.seed, 9);
        let again = parse_config(&o.resolved, &[]).unwrap();
        assert_eq!(again.config, o.config);
    }

    #[test]
    fn cross_field_checks() {
        assert!(parse_config("task = omniglot", &[]).is_err());
        assert!(parse_config("task = navigation\norder = second", &[]).is_err());
        let nav = parse_config("task = navigation", &[]).unwrap();
        assert_eq!(nav.config.order, Order::First);
        assert_eq!(parse_config(&nav.resolved, &[]).unwrap().config, nav.config);
        assert!(parse_config("method = taml-entropy\ntask = sinusoid", &[]).is_err());
        assert!(parse_config("method = taml-theil\nM = 1", &[]).is_err());
        assert!(parse_config("method = maml-first-order\norder = second", &[]).is_err());
        let p = parse_config("method = maml-first-order", &[]).unwrap();
        assert_eq!(p.config.order, Order::First);
        assert!(p.resolved.contains("order = first"));
        assert_eq!(parse_config(&p.resolved, &[]).unwrap().config, p.config);
    }

    #[test]
    fn difficulty_mix_and_activation() {
        let p = parse_config("difficulty_mix = 0.5:0.25,2:0.75\nactivation = leaky_relu(0.2)", &[]).unwrap();
        assert_eq!(p.config.difficulty_mix, vec![(0.5, 0.25), (2.0, 0.75)]);
        assert_eq!(p.config.activation, Activation::LeakyRelu(0.2));
        assert!(parse_config("difficulty_mix = 1:0.5", &[]).is_err());
        assert!(parse_config("activation = tanh", &[]).is_err());
    }
}
