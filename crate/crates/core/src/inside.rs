//! Inside algorithm, CYK recognition, and class posteriors.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chart::{fill, Boolean, Chart, FillOptions, LogReal, Real, Semiring};
use crate::error::{invalid, Result};
use crate::grammar::{Grammar, GrammarParams, Symbol};
use crate::rng::{SeedStream, StreamKind};
use crate::splits::{span_window, SplitTables};

/// Depth from which [`Representation::Auto`] switches to log space.
pub const LOG_SPACE_DEPTH: usize = 4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    #[default]
    Auto,
    Linear,
    Log,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InsideOptions {
    pub representation: Representation,
    pub fill: FillOptions,
}

impl Default for InsideOptions {
    fn default() -> Self {
        InsideOptions {
            representation: Representation::Auto,
            fill: FillOptions::default(),
        }
    }
}

/// Inside tensors `M^{(l)}_{i,λ}(z) = Pr(x_{i..i+λ} | z)`, linear or log.
#[derive(Clone, Debug, PartialEq)]
pub enum InsideChart {
    Linear(Chart<f64>),
    Log(Chart<f64>),
}

impl InsideChart {
    pub fn is_log(&self) -> bool {
        matches!(self, InsideChart::Log(_))
    }

    pub fn chart(&self) -> &Chart<f64> {
        match self {
            InsideChart::Linear(c) | InsideChart::Log(c) => c,
        }
    }

    /// `ln Pr(x | α)` for every root label.
    pub fn root_log_likelihoods(&self) -> Vec<f64> {
        match self {
            InsideChart::Linear(c) => c.root_cell().iter().map(|p| p.ln()).collect(),
            InsideChart::Log(c) => c.root_cell().to_vec(),
        }
    }
}

pub type BooleanChart = Chart<bool>;

/// Root labels that derive the whole sentence.
pub fn root_labels(chart: &BooleanChart) -> Vec<Symbol> {
    chart
        .root_cell()
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(z, _)| z as Symbol)
        .collect()
}

fn check_sentence(g: &Grammar, x: &[Symbol], splits: &SplitTables) -> Result<()> {
    let (lo, hi) = span_window(g.depth());
    if !(lo..=hi).contains(&x.len()) {
        return invalid(format!("sentence length {} outside [{lo}, {hi}]", x.len()));
    }
    if let Some(t) = x.iter().find(|&&t| t as usize >= g.v()) {
        return invalid(format!("token {t} out of range for v={}", g.v()));
    }
    if splits.depth() < g.depth() {
        return invalid(format!(
            "split tables of depth {} for a depth-{} grammar",
            splits.depth(),
            g.depth()
        ));
    }
    Ok(())
}

pub fn inside(g: &Grammar, x: &[Symbol], splits: &SplitTables) -> Result<InsideChart> {
    inside_with(g, x, splits, InsideOptions::default())
}

pub fn inside_with(
    g: &Grammar,
    x: &[Symbol],
    splits: &SplitTables,
    opts: InsideOptions,
) -> Result<InsideChart> {
    check_sentence(g, x, splits)?;
    let log = match opts.representation {
        Representation::Auto => g.depth() >= LOG_SPACE_DEPTH,
        Representation::Linear => false,
        Representation::Log => true,
    };
    let (p2, p3) = (g.binary_prob(), g.ternary_prob());
    Ok(if log {
        InsideChart::Log(fill::<LogReal>(
            g.levels(),
            LogReal::weight(p2),
            LogReal::weight(p3),
            x,
            splits,
            opts.fill,
        ))
    } else {
        InsideChart::Linear(fill::<Real>(g.levels(), p2, p3, x, splits, opts.fill))
    })
}

pub fn cyk(g: &Grammar, x: &[Symbol], splits: &SplitTables) -> Result<BooleanChart> {
    cyk_with(g, x, splits, FillOptions::default())
}

pub fn cyk_with(
    g: &Grammar,
    x: &[Symbol],
    splits: &SplitTables,
    opts: FillOptions,
) -> Result<BooleanChart> {
    check_sentence(g, x, splits)?;
    Ok(fill::<Boolean>(g.levels(), true, true, x, splits, opts))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassPosterior {
    /// `Pr(α | x)` under the uniform root prior.
    pub probs: Vec<f64>,
    /// `ln Pr(x) = ln (1/v) Σ_α Pr(x | α)`.
    pub log_likelihood: f64,
}

impl ClassPosterior {
    /// `H(α | x)` in nats.
    pub fn entropy(&self) -> f64 {
        entropy(&self.probs)
    }

    pub fn n_support(&self) -> usize {
        self.probs.iter().filter(|&&p| p > 0.0).count()
    }
}

pub fn entropy(probs: &[f64]) -> f64 {
    0.0 - probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// Posterior over root labels; `None` when no root derives the sentence.
pub fn class_posterior(chart: &InsideChart) -> Option<ClassPosterior> {
    let logs = chart.root_log_likelihoods();
    let total = crate::chart::log_sum_exp(&logs);
    if total == f64::NEG_INFINITY {
        return None;
    }
    let probs = logs.iter().map(|l| (l - total).exp()).collect();
    Some(ClassPosterior {
        probs,
        log_likelihood: total - (logs.len() as f64).ln(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyPoint {
    pub f: f64,
    pub depth: usize,
    /// Mean of `H(α|x) / ln v`.
    pub mean: f64,
    pub stderr: f64,
    pub n_samples: usize,
}

/// Settings for [`expected_class_entropy`].
#[derive(Clone, Debug, PartialEq)]
pub struct EntropySweep {
    pub v: usize,
    pub depth: usize,
    pub p2: f64,
    pub n_grammars: usize,
    pub n_sentences: usize,
    pub seed: u64,
    pub representation: Representation,
}

/// Mean normalized class entropy at each `f` (with `f2 = f3 = f`).
///
/// Grammar `k` of grid point `j` has seed `Experiment.derive(j * n_grammars + k)`
/// and draws its sentences from that seed's data stream. With several
/// sentences per grammar the standard error is taken over per-grammar means.
pub fn expected_class_entropy(sweep: &EntropySweep, f_grid: &[f64]) -> Result<Vec<EntropyPoint>> {
    if sweep.n_grammars == 0 || sweep.n_sentences == 0 {
        return invalid("n_grammars and n_sentences must be at least 1");
    }
    if f_grid.is_empty() {
        return invalid("empty f grid");
    }
    let splits = SplitTables::new(sweep.depth);
    let master = SeedStream::new(sweep.seed, StreamKind::Experiment);
    let ln_v = (sweep.v as f64).ln();
    let opts = InsideOptions {
        representation: sweep.representation,
        fill: FillOptions {
            parallel: false,
            root_only: true,
        },
    };
    f_grid
        .iter()
        .enumerate()
        .map(|(j, &f)| {
            let per_grammar: Vec<Vec<f64>> = (0..sweep.n_grammars)
                .into_par_iter()
                .map(|k| -> Result<Vec<f64>> {
                    let seed = master.derive((j * sweep.n_grammars + k) as u64);
                    let params = GrammarParams::from_fractions(sweep.v, sweep.depth, f, f, seed)?
                        .with_branching(sweep.p2);
                    let g = Grammar::generate(&params)?;
                    let data = SeedStream::new(seed, StreamKind::Data);
                    (0..sweep.n_sentences as u64)
                        .map(|s| {
                            let d = g.sample(&mut data.rng(s));
                            let chart = inside_with(&g, &d.sentence, &splits, opts)?;
                            let post =
                                class_posterior(&chart).expect("sampled sentence has a parse");
                            Ok(post.entropy() / ln_v)
                        })
                        .collect()
                })
                .collect::<Result<_>>()?;
            let n_samples = sweep.n_grammars * sweep.n_sentences;
            let (mean, stderr) = if sweep.n_sentences > 1 {
                let means: Vec<f64> = per_grammar
                    .iter()
                    .map(|h| h.iter().sum::<f64>() / h.len() as f64)
                    .collect();
                mean_stderr(&means)
            } else {
                mean_stderr(&per_grammar.concat())
            };
            Ok(EntropyPoint {
                f,
                depth: sweep.depth,
                mean,
                stderr,
                n_samples,
            })
        })
        .collect()
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
