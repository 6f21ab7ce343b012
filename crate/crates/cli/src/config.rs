//! Experiment settings: a JSON or TOML file overlaid by command-line flags.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Why a run stopped; selects the exit code.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Experiment(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Experiment(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config: {m}"),
            Failure::Experiment(m) => write!(f, "experiment: {m}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Repr {
    Auto,
    Linear,
    Log,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum WhiteningArg {
    InverseV,
    Fitted,
    Off,
}

/// Every experiment setting. Keys in a config file use the field names
/// below (`L` for the depth); flags use the same names in kebab case.
#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// JSON or TOML file with settings; flags override it.
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Experiment kind; only checked against the subcommand.
    #[arg(skip)]
    pub kind: Option<String>,

    /// Output directory.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, env = "RHM_WORKERS")]
    pub workers: Option<usize>,

    /// Vocabulary size per level.
    #[arg(long)]
    pub v: Option<usize>,
    /// Grammar depth.
    #[arg(long = "depth", visible_alias = "L")]
    #[serde(rename = "L", alias = "depth")]
    pub depth: Option<usize>,
    #[arg(long)]
    pub m2: Option<usize>,
    #[arg(long)]
    pub m3: Option<usize>,
    /// Sets both grammatical fractions.
    #[arg(long)]
    pub f: Option<f64>,
    #[arg(long)]
    pub f2: Option<f64>,
    #[arg(long)]
    pub f3: Option<f64>,
    /// Use f2 = f3 = 1/v.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub f_inverse_v: Option<bool>,
    /// Probability of a binary rewrite.
    #[arg(long)]
    pub p2: Option<f64>,

    /// Grammar JSON to load instead of generating one.
    #[arg(long, value_name = "FILE")]
    pub grammar: Option<PathBuf>,
    /// Dataset file to load instead of sampling one.
    #[arg(long, value_name = "FILE")]
    pub data: Option<PathBuf>,

    /// Sentences to sample, or the training size for `learn`.
    #[arg(long)]
    pub n: Option<usize>,
    /// Held-out sentences.
    #[arg(long)]
    pub n_test: Option<usize>,

    #[arg(long, value_delimiter = ',')]
    pub f_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub v_grid: Option<Vec<usize>>,
    #[arg(long = "l-grid", value_delimiter = ',')]
    #[serde(rename = "l_grid")]
    pub l_grid: Option<Vec<usize>>,
    /// Explicit training sizes; otherwise a log grid from `p_min` to `p_max`.
    #[arg(long, value_delimiter = ',')]
    pub p_grid: Option<Vec<u64>>,
    #[arg(long)]
    pub p_min: Option<u64>,
    #[arg(long)]
    pub p_max: Option<u64>,
    #[arg(long)]
    pub p_points: Option<usize>,

    /// Grammars per grid point in the entropy sweep.
    #[arg(long)]
    pub grammars: Option<usize>,
    /// Sentences per grammar in the entropy sweep.
    #[arg(long)]
    pub sentences: Option<usize>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long, value_enum)]
    pub representation: Option<Repr>,

    /// Cosine threshold of the learner.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Absolute slice-norm cut for pairs and triples.
    #[arg(long)]
    pub discard: Option<f64>,
    #[arg(long, value_enum)]
    pub whitening: Option<WhiteningArg>,
    /// Fail on incoherent clusters and weak alignments.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub strict: Option<bool>,

    /// Loss or SNR^-1 level defining P*.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Extra thresholds reported for sensitivity.
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
    /// Reference sample size over the largest grid point.
    #[arg(long)]
    pub reference_factor: Option<f64>,

    /// Seeds derived from `seed`, written for the record; ignored on input.
    #[arg(skip)]
    pub derived_seeds: Option<Value>,
}

/// The config file text, kept to point errors at lines.
#[derive(Default)]
pub struct Source {
    path: Option<PathBuf>,
    text: String,
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl Source {
    pub fn load(path: Option<&Path>) -> Result<(Source, Settings), Failure> {
        let Some(path) = path else {
            return Ok((Source::default(), Settings::default()));
        };
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        let src = Source {
            path: Some(path.to_path_buf()),
            text,
        };
        let json = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let settings = if json {
            serde_json::from_str(&src.text)
                .map_err(|e| src.at(Some(e.line()), strip_position(&e.to_string())))?
        } else {
            toml::from_str(&src.text).map_err(|e| {
                let line = e.span().map(|s| line_of_offset(&src.text, s.start));
                src.at(line, e.message().to_string())
            })?
        };
        Ok((src, settings))
    }

    fn at(&self, line: Option<usize>, msg: impl fmt::Display) -> Failure {
        match (&self.path, line) {
            (Some(p), Some(l)) => Failure::Config(format!("{}:{l}: {msg}", p.display())),
            (Some(p), None) => Failure::Config(format!("{}: {msg}", p.display())),
            (None, _) => Failure::Config(msg.to_string()),
        }
    }

    /// Line where `key` is set in the file, if it is.
    fn line_of(&self, key: &str) -> Option<usize> {
        self.text
            .lines()
            .position(|line| {
                let t = line
                    .trim_start()
                    .trim_start_matches(['{', ','])
                    .trim_start();
                let rest = t
                    .strip_prefix('"')
                    .and_then(|t| t.strip_prefix(key))
                    .and_then(|t| t.strip_prefix('"'));
                let rest = rest.or_else(|| t.strip_prefix(key));
                rest.is_some_and(|r| matches!(r.trim_start().chars().next(), Some('=' | ':')))
            })
            .map(|i| i + 1)
    }

    /// A config error about `key`, with its file line when the file sets it.
    pub fn error(&self, key: &str, msg: impl fmt::Display) -> Failure {
        match self.line_of(key) {
            Some(line) => self.at(Some(line), format!("`{key}`: {msg}")),
            None => Failure::Config(format!("`{key}`: {msg}")),
        }
    }
}

fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

/// `base` with every field set in `flags` replaced.
pub fn overlay(base: &Settings, flags: &Settings) -> Settings {
    let mut merged = serde_json::to_value(base).expect("settings serialize");
    let over = serde_json::to_value(flags).expect("settings serialize");
    if let (Value::Object(m), Value::Object(o)) = (&mut merged, over) {
        for (k, v) in o {
            if !v.is_null() {
                m.insert(k, v);
            }
        }
    }
    let mut out: Settings = serde_json::from_value(merged).expect("settings round-trip");
    out.config = flags.config.clone();
    out
}

/// Settings as written to `resolved_config.json`: unset fields dropped.
pub fn resolved_json(s: &Settings) -> Value {
    let mut v = serde_json::to_value(s).expect("settings serialize");
    if let Value::Object(m) = &mut v {
        m.retain(|_, x| !x.is_null());
    }
    v
}
