//! Grammar JSON and dataset TSV formats.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grammar::{Example, Grammar, GrammarParams, RuleLevel, Symbol};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub(crate) struct LevelFile {
    pub binary: Vec<[Symbol; 3]>,
    pub ternary: Vec<[Symbol; 4]>,
}

impl LevelFile {
    pub(crate) fn of(level: &RuleLevel) -> Self {
        LevelFile {
            binary: level.binary_rules().map(|(z, [a, b])| [z, a, b]).collect(),
            ternary: level
                .ternary_rules()
                .map(|(z, [a, b, c])| [z, a, b, c])
                .collect(),
        }
    }

    pub(crate) fn to_level(&self, v: usize) -> Result<RuleLevel> {
        let binary: Vec<_> = self.binary.iter().map(|&[z, a, b]| (z, [a, b])).collect();
        let ternary: Vec<_> = self
            .ternary
            .iter()
            .map(|&[z, a, b, c]| (z, [a, b, c]))
            .collect();
        RuleLevel::new(v, &binary, &ternary)
    }
}

#[derive(Serialize, Deserialize)]
struct GrammarFile {
    format_version: u64,
    #[serde(flatten)]
    params: GrammarParams,
    levels: Vec<LevelFile>,
}

fn json_error(e: serde_json::Error) -> Error {
    Error::Format {
        line: e.line(),
        message: e.to_string(),
    }
}

/// Parses a versioned JSON document, checking `format_version` first.
pub(crate) fn parse_versioned<T: DeserializeOwned>(text: &str) -> Result<T> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(json_error)?;
    match value.get("format_version").and_then(|v| v.as_u64()) {
        Some(FORMAT_VERSION) => {}
        Some(found) => {
            return Err(Error::FormatVersion {
                found,
                expected: FORMAT_VERSION,
            })
        }
        None => {
            return Err(Error::Format {
                line: 1,
                message: "missing format_version".into(),
            })
        }
    }
    serde_json::from_value(value).map_err(json_error)
}

pub fn grammar_to_json(g: &Grammar) -> String {
    let file = GrammarFile {
        format_version: FORMAT_VERSION,
        params: g.params().clone(),
        levels: g.levels().iter().map(LevelFile::of).collect(),
    };
    serde_json::to_string_pretty(&file).expect("grammar serializes")
}

pub fn grammar_from_json(text: &str) -> Result<Grammar> {
    let file: GrammarFile = parse_versioned(text)?;
    let levels = file
        .levels
        .iter()
        .map(|l| l.to_level(file.params.v))
        .collect::<Result<Vec<_>>>()?;
    Grammar::from_levels(file.params, levels)
}

pub fn write_grammar(path: &Path, g: &Grammar) -> Result<()> {
    fs::write(path, grammar_to_json(g) + "\n")?;
    Ok(())
}

pub fn read_grammar(path: &Path) -> Result<Grammar> {
    grammar_from_json(&fs::read_to_string(path)?)
}

/// `format_version\t1`, then one `label\ttok tok ...` line per example.
pub fn write_dataset(out: impl Write, data: &[Example]) -> Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "format_version\t{FORMAT_VERSION}")?;
    for ex in data {
        write!(w, "{}\t", ex.label)?;
        for (k, t) in ex.tokens.iter().enumerate() {
            if k > 0 {
                w.write_all(b" ")?;
            }
            write!(w, "{t}")?;
        }
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(input: impl BufRead) -> Result<Vec<Example>> {
    let mut lines = input.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    match header.split_once('\t') {
        Some(("format_version", v)) => {
            let found: u64 = v.trim().parse().map_err(|_| Error::Format {
                line: 1,
                message: format!("bad format_version {v:?}"),
            })?;
            if found != FORMAT_VERSION {
                return Err(Error::FormatVersion {
                    found,
                    expected: FORMAT_VERSION,
                });
            }
        }
        _ => {
            return Err(Error::Format {
                line: 1,
                message: "expected a format_version header".into(),
            })
        }
    }
    let mut out = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        let lineno = k + 2;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Format {
            line: lineno,
            message,
        };
        let (label, tokens) = line
            .split_once('\t')
            .ok_or_else(|| bad("missing tab separator".into()))?;
        let label = label
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad label {label:?}")))?;
        let tokens = tokens
            .split_ascii_whitespace()
            .map(|t| t.parse().map_err(|_| bad(format!("bad token {t:?}"))))
            .collect::<Result<Vec<Symbol>>>()?;
        if tokens.is_empty() {
            return Err(bad("empty sentence".into()));
        }
        out.push(Example { label, tokens });
    }
    Ok(out)
}

pub fn save_dataset(path: &Path, data: &[Example]) -> Result<()> {
    write_dataset(fs::File::create(path)?, data)
}

pub fn load_dataset(path: &Path) -> Result<Vec<Example>> {
    read_dataset(BufReader::new(fs::File::open(path)?))
}
