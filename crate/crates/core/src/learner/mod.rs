//! Level-by-level method-of-moments grammar learner.

pub mod cluster;
pub mod curve;
pub mod detectors;
pub mod infer;
pub mod moments;

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grammar::{Example, Grammar, RuleLevel, Symbol};
use crate::io::{parse_versioned, LevelFile, FORMAT_VERSION};

pub use curve::{curve_p_star, learning_curve, log_grid, summarize, CurvePoint, CurveSummary};
pub use detectors::Detector;
pub use infer::{
    infer_binary_rules, infer_ternary_rules, whiten, ClusterAssignment, ClusterMethod, Discard,
    InferenceFailure, LearnerConfig, Whitening,
};
pub use moments::{estimate_moments, CountTable, MomentTensors, SlotPolicy};

/// Rules recovered per level plus the map from inferred root ids to labels.
#[derive(Clone, Debug)]
pub struct LearnedGrammar {
    v: usize,
    depth: usize,
    /// Grammar order: `levels[0]` rewrites the root.
    levels: Vec<RuleLevel>,
    label_map: Vec<Option<Symbol>>,
    detector: Detector,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Abstain {
    InvalidTokens,
    NoParse,
    Ambiguous,
    UnmappedRoot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Prediction {
    Label(Symbol),
    Abstain(Abstain),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    /// Abstentions count as errors.
    pub accuracy: f64,
    pub abstain_rate: f64,
    /// Cross-entropy with one-hot predictions and a uniform guess on
    /// abstentions and errors, divided by `ln v`; equals `1 - accuracy`.
    pub normalized_loss: f64,
}

impl Metrics {
    pub fn chance() -> Self {
        Metrics {
            n: 0,
            accuracy: 0.0,
            abstain_rate: 1.0,
            normalized_loss: 1.0,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct LearnedFile {
    format_version: u64,
    v: usize,
    #[serde(rename = "L")]
    depth: usize,
    inferred: bool,
    label_map: Vec<Option<Symbol>>,
    levels: Vec<LevelFile>,
}

impl LearnedGrammar {
    pub fn new(
        v: usize,
        depth: usize,
        levels: Vec<RuleLevel>,
        label_map: Vec<Option<Symbol>>,
    ) -> Result<Self> {
        if levels.len() != depth || levels.iter().any(|l| l.v() != v) {
            return Err(Error::Params(format!("need {depth} levels over v={v}")));
        }
        let mut detector = Detector::new(v, depth);
        for l in levels.iter().rev() {
            detector.push(l.clone());
        }
        Ok(LearnedGrammar {
            v,
            depth,
            levels,
            label_map,
            detector,
        })
    }

    pub fn v(&self) -> usize {
        self.v
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Rules of grammar level `l` (1-based).
    pub fn level(&self, l: usize) -> &RuleLevel {
        &self.levels[l - 1]
    }

    pub fn levels(&self) -> &[RuleLevel] {
        &self.levels
    }

    pub fn label_map(&self) -> &[Option<Symbol>] {
        &self.label_map
    }

    /// Inferred root ids of a complete Boolean parse.
    pub fn root_ids(&self, tokens: &[Symbol]) -> Option<Vec<Symbol>> {
        let d = tokens.len();
        let (lo, hi) = crate::splits::span_window(self.depth);
        let cells = self.detector.apply(tokens)?;
        if !(lo..=hi).contains(&d) {
            return Some(Vec::new());
        }
        Some(
            cells
                .cell(0, d)
                .iter()
                .enumerate()
                .filter(|(_, &b)| b)
                .map(|(z, _)| z as Symbol)
                .collect(),
        )
    }

    pub fn classify(&self, tokens: &[Symbol]) -> Prediction {
        match self.root_ids(tokens).as_deref() {
            None => Prediction::Abstain(Abstain::InvalidTokens),
            Some([]) => Prediction::Abstain(Abstain::NoParse),
            Some([z]) => match self.label_map.get(*z as usize).copied().flatten() {
                Some(label) => Prediction::Label(label),
                None => Prediction::Abstain(Abstain::UnmappedRoot),
            },
            Some(_) => Prediction::Abstain(Abstain::Ambiguous),
        }
    }

    pub fn evaluate(&self, data: &[Example]) -> Metrics {
        let (correct, abstained) = data
            .par_iter()
            .map(|ex| match self.classify(&ex.tokens) {
                Prediction::Label(l) => ((l == ex.label) as usize, 0),
                Prediction::Abstain(_) => (0, 1),
            })
            .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        let n = data.len();
        if n == 0 {
            return Metrics::chance();
        }
        let accuracy = correct as f64 / n as f64;
        Metrics {
            n,
            accuracy,
            abstain_rate: abstained as f64 / n as f64,
            normalized_loss: 1.0 - accuracy,
        }
    }

    pub fn to_json(&self) -> String {
        let file = LearnedFile {
            format_version: FORMAT_VERSION,
            v: self.v,
            depth: self.depth,
            inferred: true,
            label_map: self.label_map.clone(),
            levels: self.levels.iter().map(LevelFile::of).collect(),
        };
        serde_json::to_string_pretty(&file).expect("learned grammar serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: LearnedFile = parse_versioned(text)?;
        let levels = file
            .levels
            .iter()
            .map(|l| l.to_level(file.v))
            .collect::<Result<Vec<_>>>()?;
        LearnedGrammar::new(file.v, file.depth, levels, file.label_map)
    }
}

/// Everything `learn` produced before it stopped.
#[derive(Clone, Debug)]
pub struct LearnReport {
    pub grammar: Option<LearnedGrammar>,
    /// Grammar levels whose rules were inferred, bottom-up.
    pub binary: Vec<ClusterAssignment>,
    pub ternary: Vec<ClusterAssignment>,
    pub failure: Option<(usize, InferenceFailure)>,
}

/// Runs the learner, keeping partial results on failure.
pub fn learn_report(data: &[Example], v: usize, depth: usize, cfg: &LearnerConfig) -> LearnReport {
    let mut report = LearnReport {
        grammar: None,
        binary: Vec::new(),
        ternary: Vec::new(),
        failure: None,
    };
    let mut detector = Detector::new(v, depth);
    for level in (1..=depth).rev() {
        let m = estimate_moments(data, &detector, cfg.slots);
        let binary = match infer_binary_rules(&m, cfg) {
            Ok(b) => b,
            Err(e) => {
                report.failure = Some((level, e));
                return report;
            }
        };
        let ternary = match infer_ternary_rules(&m, &binary, cfg) {
            Ok(t) => t,
            Err(e) => {
                report.binary.push(binary);
                report.failure = Some((level, e));
                return report;
            }
        };
        let rules = RuleLevel::new(v, &binary.rules::<2>(), &ternary.rules::<3>())
            .expect("tuples are distinct");
        report.binary.push(binary);
        report.ternary.push(ternary);
        detector.push(rules);
    }
    let levels: Vec<RuleLevel> = detector.levels().iter().rev().cloned().collect();
    let mut g = LearnedGrammar::new(v, depth, levels, vec![None; v]).expect("levels match");
    g.label_map = fit_label_map(&g, data);
    report.grammar = Some(g);
    report
}

pub fn learn(
    data: &[Example],
    v: usize,
    depth: usize,
    cfg: &LearnerConfig,
) -> Result<LearnedGrammar> {
    let report = learn_report(data, v, depth, cfg);
    match (report.grammar, report.failure) {
        (Some(g), _) => Ok(g),
        (None, Some((level, f))) => Err(Error::Inference {
            level,
            reason: f.reason,
        }),
        (None, None) => unreachable!("learner stops with a grammar or a failure"),
    }
}

/// Majority training label per inferred root id, over sentences with a
/// unique parse. Ties go to the smaller label.
fn fit_label_map(g: &LearnedGrammar, data: &[Example]) -> Vec<Option<Symbol>> {
    let v = g.v;
    let votes = data
        .par_iter()
        .fold(
            || vec![0u64; v * v],
            |mut acc, ex| {
                if let Some([z]) = g.root_ids(&ex.tokens).as_deref() {
                    if (ex.label as usize) < v {
                        acc[*z as usize * v + ex.label as usize] += 1;
                    }
                }
                acc
            },
        )
        .reduce(
            || vec![0u64; v * v],
            |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect(),
        );
    votes
        .chunks(v)
        .map(|row| {
            let (label, &count) = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))?;
            (count > 0).then_some(label as Symbol)
        })
        .collect()
}

/// Whether `learned` equals `truth` level by level up to a renaming of the
/// nonterminals at each level.
pub fn rules_match(learned: &[RuleLevel], truth: &Grammar) -> bool {
    let v = truth.v();
    if learned.len() != truth.depth() {
        return false;
    }
    // rename[s]: learned symbol s at the level below -> true symbol.
    let mut rename: Vec<Symbol> = (0..v as Symbol).collect();
    for l in (1..=truth.depth()).rev() {
        let (ours, theirs) = (&learned[l - 1], truth.level(l));
        let canon = |rules: &RuleLevel,
                     map: &dyn Fn(Symbol) -> Symbol|
         -> Vec<(Vec<[Symbol; 2]>, Vec<[Symbol; 3]>)> {
            (0..v as Symbol)
                .map(|z| {
                    let mut b: Vec<[Symbol; 2]> =
                        rules.binary_of(z).iter().map(|t| t.map(map)).collect();
                    let mut t: Vec<[Symbol; 3]> =
                        rules.ternary_of(z).iter().map(|t| t.map(map)).collect();
                    b.sort_unstable();
                    t.sort_unstable();
                    (b, t)
                })
                .collect()
        };
        let ours = canon(ours, &|s| rename[s as usize]);
        let theirs = canon(theirs, &|s| s);
        let index: HashMap<_, Symbol> = theirs
            .iter()
            .enumerate()
            .map(|(z, r)| (r, z as Symbol))
            .collect();
        let mut next = vec![0 as Symbol; v];
        let mut used = vec![false; v];
        for (z, r) in ours.iter().enumerate() {
            match index.get(r) {
                Some(&t) if !used[t as usize] => {
                    used[t as usize] = true;
                    next[z] = t;
                }
                _ => return false,
            }
        }
        rename = next;
    }
    true
}
