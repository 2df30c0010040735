//! Plain-text checkpoints of a [`MetaState`].
//!
//! ```text
//! taml-checkpoint v1
//! layers 8,32,32,5
//! activation leaky_relu(0.01)
//! head softmax
//! seed 7
//! iteration 500
//! theta 1477
//! <one value per line>
//! alphas none            (or `alphas <count>` followed by values)
//! adam none              (or `adam <t>`, then `m`/`v` blocks of values)
//! ```
//!
//! Floats use Rust's shortest round-trip formatting, so loading a saved
//! state gives back the same bits.

use std::fmt::Write as _;
use std::path::Path;

use taml_core::nn::{Activation, Head, MlpSpec, ModelParams};
use taml_core::trainer::{AdamState, MetaState};

pub const MAGIC: &str = "taml-checkpoint v1";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("cannot read checkpoint {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("checkpoint was saved for a different model: {0}")]
    Mismatch(String),
}

fn format_activation(a: Activation) -> String {
    match a {
        Activation::Relu => "relu".into(),
        Activation::LeakyRelu(s) => format!("leaky_relu({s})"),
    }
}

fn format_head(h: Head) -> String {
    match h {
        Head::SoftmaxClassifier => "softmax".into(),
        Head::LinearRegressor => "linear".into(),
        Head::GaussianPolicy { stddev } => format!("gaussian({stddev})"),
    }
}

fn push_values(out: &mut String, xs: &[f64]) {
    for x in xs {
        let _ = writeln!(out, "{x}");
    }
}

pub fn to_text(spec: &MlpSpec, state: &MetaState) -> String {
    let mut out = String::new();
    let layers: Vec<String> = spec.layer_sizes().iter().map(|n| n.to_string()).collect();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "layers {}", layers.join(","));
    let _ = writeln!(out, "activation {}", format_activation(spec.activation()));
    let _ = writeln!(out, "head {}", format_head(spec.head()));
    let _ = writeln!(out, "seed {}", state.seed);
    let _ = writeln!(out, "iteration {}", state.iteration);
    let _ = writeln!(out, "theta {}", state.theta.len());
    push_values(&mut out, &state.theta.0);
    match &state.alphas {
        None => out.push_str("alphas none\n"),
        Some(a) => {
            let _ = writeln!(out, "alphas {}", a.len());
            push_values(&mut out, &a.0);
        }
    }
    match &state.adam {
        None => out.push_str("adam none\n"),
        Some(st) => {
            let _ = writeln!(out, "adam {}", st.t);
            let _ = writeln!(out, "m {}", st.m.len());
            push_values(&mut out, &st.m);
            let _ = writeln!(out, "v {}", st.v.len());
            push_values(&mut out, &st.v);
        }
    }
    out
}

struct Reader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, message: impl Into<String>) -> CheckpointError {
        CheckpointError::Format {
            line: self.line,
            message: message.into(),
        }
    }

    fn next(&mut self) -> Result<&'a str, CheckpointError> {
        match self.lines.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l)
            }
            None => {
                self.line += 1;
                Err(self.err("unexpected end of file"))
            }
        }
    }

    fn field(&mut self, name: &str) -> Result<&'a str, CheckpointError> {
        let l = self.next()?;
        match l.split_once(' ') {
            Some((k, v)) if k == name => Ok(v),
            _ => Err(self.err(format!("expected `{name} ...`, found `{l}`"))),
        }
    }

    fn number<T: std::str::FromStr>(&self, s: &str) -> Result<T, CheckpointError> {
        s.parse().map_err(|_| self.err(format!("`{s}` is not a valid number")))
    }

    fn values(&mut self, count: usize) -> Result<Vec<f64>, CheckpointError> {
        (0..count)
            .map(|_| {
                let l = self.next()?;
                self.number(l)
            })
            .collect()
    }

    fn counted(&mut self, name: &str) -> Result<Option<Vec<f64>>, CheckpointError> {
        let v = self.field(name)?;
        if v == "none" {
            return Ok(None);
        }
        let n = self.number(v)?;
        self.values(n).map(Some)
    }
}

/// Parses a checkpoint and checks it was written for `spec`.
pub fn from_text(text: &str, spec: &MlpSpec) -> Result<MetaState, CheckpointError> {
    let mut r = Reader {
        lines: text.lines().enumerate(),
        line: 0,
    };
    if r.next()? != MAGIC {
        return Err(r.err(format!("missing `{MAGIC}` header")));
    }
    let expect = |found: &str, want: String, what: &str| {
        if found == want {
            Ok(())
        } else {
            Err(CheckpointError::Mismatch(format!(
                "{what} is {found}, config expects {want}"
            )))
        }
    };
    let layers: Vec<String> = spec.layer_sizes().iter().map(|n| n.to_string()).collect();
    expect(r.field("layers")?, layers.join(","), "layers")?;
    expect(
        r.field("activation")?,
        format_activation(spec.activation()),
        "activation",
    )?;
    expect(r.field("head")?, format_head(spec.head()), "head")?;
    let seed = r.field("seed")?;
    let seed = r.number(seed)?;
    let iteration = r.field("iteration")?;
    let iteration = r.number(iteration)?;
    let theta = r.counted("theta")?.ok_or_else(|| r.err("theta cannot be `none`"))?;
    if theta.len() != spec.param_count() {
        return Err(CheckpointError::Mismatch(format!(
            "{} parameters, model has {}",
            theta.len(),
            spec.param_count()
        )));
    }
    let alphas = r.counted("alphas")?;
    if alphas.as_ref().is_some_and(|a| a.len() != theta.len()) {
        return Err(r.err("alphas and theta differ in length"));
    }
    let adam = match r.field("adam")? {
        "none" => None,
        t => {
            let t = r.number(t)?;
            let m = r.counted("m")?.ok_or_else(|| r.err("m cannot be `none`"))?;
            let v = r.counted("v")?.ok_or_else(|| r.err("v cannot be `none`"))?;
            if m.len() != v.len() {
                return Err(r.err("adam moments differ in length"));
            }
            Some(AdamState { m, v, t })
        }
    };
    Ok(MetaState {
        theta: ModelParams(theta),
        alphas: alphas.map(ModelParams),
        iteration,
        seed,
        adam,
    })
}

pub fn save(path: &Path, spec: &MlpSpec, state: &MetaState) -> std::io::Result<()> {
    std::fs::write(path, to_text(spec, state))
}

pub fn load(path: &Path, spec: &MlpSpec) -> Result<MetaState, CheckpointError> {
    let text = std::fs::read_to_string(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    from_text(&text, spec)
}
