//! Learning curves: held-out loss of the learner against training size.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grammar::{make_dataset, Grammar, GrammarParams};
use crate::rng::{SeedStream, StreamKind};
use crate::snr::{extract_p_star, PStar};

use super::{learn_report, rules_match, LearnerConfig, Metrics};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    #[serde(rename = "P")]
    pub p: u64,
    pub replicate: usize,
    pub grammar_seed: u64,
    pub metrics: Metrics,
    /// Exact rule recovery up to relabelling.
    pub recovered: bool,
    /// `level: reason` when the learner stopped.
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    #[serde(rename = "P")]
    pub p: u64,
    pub normalized_loss: f64,
    pub accuracy: f64,
    pub abstain_rate: f64,
    pub recovery_rate: f64,
    pub failures: usize,
    pub replicates: usize,
}

/// Grammar seed of replicate `r` under master `seed`.
pub fn replicate_seed(seed: u64, r: usize) -> u64 {
    SeedStream::new(seed, StreamKind::Experiment).derive(r as u64)
}

/// One point per (replicate, P). Replicate `r` draws its grammar from
/// [`replicate_seed`]; training sets are nested prefixes of the data stream
/// and the test set comes from the test stream. Learner failures score as
/// chance.
pub fn learning_curve(
    params: &GrammarParams,
    grid: &[u64],
    n_test: usize,
    replicates: usize,
    seed: u64,
    cfg: &LearnerConfig,
) -> Result<Vec<CurvePoint>> {
    let mut out = Vec::with_capacity(grid.len() * replicates);
    for r in 0..replicates {
        let grammar_seed = replicate_seed(seed, r);
        let g = Grammar::generate(&GrammarParams {
            seed: grammar_seed,
            ..params.clone()
        })?;
        let max = grid.iter().copied().max().unwrap_or(0) as usize;
        let train = make_dataset(
            &g,
            max.max(1),
            &SeedStream::new(grammar_seed, StreamKind::Data),
        )?;
        let test = make_dataset(&g, n_test, &SeedStream::new(grammar_seed, StreamKind::Test))?;
        for &p in grid {
            let report = learn_report(&train[..p as usize], g.v(), g.depth(), cfg);
            let (metrics, recovered) = match &report.grammar {
                Some(learned) => (learned.evaluate(&test), rules_match(learned.levels(), &g)),
                None => (
                    Metrics {
                        n: test.len(),
                        ..Metrics::chance()
                    },
                    false,
                ),
            };
            out.push(CurvePoint {
                p,
                replicate: r,
                grammar_seed,
                metrics,
                recovered,
                failure: report
                    .failure
                    .map(|(level, f)| format!("{level}: {}", f.reason)),
            });
        }
    }
    Ok(out)
}

/// Replicate means per grid point, in grid order.
pub fn summarize(points: &[CurvePoint]) -> Vec<CurveSummary> {
    let mut grid: Vec<u64> = points.iter().map(|p| p.p).collect();
    grid.sort_unstable();
    grid.dedup();
    grid.into_iter()
        .map(|p| {
            let at: Vec<&CurvePoint> = points.iter().filter(|q| q.p == p).collect();
            let n = at.len() as f64;
            let mean = |f: &dyn Fn(&CurvePoint) -> f64| at.iter().map(|q| f(q)).sum::<f64>() / n;
            CurveSummary {
                p,
                normalized_loss: mean(&|q| q.metrics.normalized_loss),
                accuracy: mean(&|q| q.metrics.accuracy),
                abstain_rate: mean(&|q| q.metrics.abstain_rate),
                recovery_rate: mean(&|q| q.recovered as u8 as f64),
                failures: at.iter().filter(|q| q.failure.is_some()).count(),
                replicates: at.len(),
            }
        })
        .collect()
}

/// Training size where the mean normalized loss first reaches `threshold`.
pub fn curve_p_star(summary: &[CurveSummary], threshold: f64) -> PStar {
    let grid: Vec<f64> = summary.iter().map(|s| s.p as f64).collect();
    let loss: Vec<f64> = summary.iter().map(|s| s.normalized_loss).collect();
    extract_p_star(&grid, &loss, threshold)
}

/// `n` points from `lo` to `hi` evenly spaced in `ln P`, rounded and deduplicated.
pub fn log_grid(lo: u64, hi: u64, n: usize) -> Vec<u64> {
    if n <= 1 || lo >= hi {
        return vec![lo];
    }
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut g: Vec<u64> = (0..n)
        .map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp().round() as u64)
        .collect();
    g.dedup();
    g
}
