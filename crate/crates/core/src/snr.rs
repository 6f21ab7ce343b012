//! Signal-to-noise ratio of root posteriors conditioned on a fixed-position
//! token triple, and threshold crossings of sample-size curves.

use std::collections::HashMap;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grammar::{pack3, sample_derivation, Grammar, Symbol};
use crate::rng::{SeedStream, StreamKind};

/// 1-based anchor `I = floor(<s>^L / 2)`; the triple occupies positions
/// `I, I+1, I+2`.
pub fn anchor(g: &Grammar) -> usize {
    ((g.params().mean_arity().powi(g.depth() as i32) / 2.0).floor() as usize).max(1)
}

/// Root counts for every grammatical triple of the last level seen at the
/// anchor.
#[derive(Clone, Debug, PartialEq)]
pub struct TripleCounts {
    v: usize,
    anchor: usize,
    triples: Vec<[Symbol; 3]>,
    index: HashMap<u64, usize>,
    /// `counts[k * v + α]`.
    counts: Vec<u64>,
    pub n_sentences: u64,
    /// Sentences shorter than `I + 2`.
    pub n_short: u64,
}

impl TripleCounts {
    pub fn new(g: &Grammar) -> Self {
        let v = g.v();
        let triples: Vec<[Symbol; 3]> =
            g.level(g.depth()).ternary_rules().map(|(_, t)| t).collect();
        let index = triples
            .iter()
            .enumerate()
            .map(|(k, t)| (pack3(v, t[0], t[1], t[2]), k))
            .collect();
        TripleCounts {
            v,
            anchor: anchor(g),
            counts: vec![0; triples.len() * v],
            triples,
            index,
            n_sentences: 0,
            n_short: 0,
        }
    }

    pub fn anchor(&self) -> usize {
        self.anchor
    }

    pub fn triples(&self) -> &[[Symbol; 3]] {
        &self.triples
    }

    pub fn add(&mut self, tokens: &[Symbol], root: Symbol) {
        self.n_sentences += 1;
        let i = self.anchor - 1;
        if tokens.len() < self.anchor + 2 {
            self.n_short += 1;
            return;
        }
        let t = &tokens[i..i + 3];
        if let Some(&k) = self.index.get(&pack3(self.v, t[0], t[1], t[2])) {
            self.counts[k * self.v + root as usize] += 1;
        }
    }

    pub fn merge(&mut self, other: &TripleCounts) {
        assert_eq!(self.triples, other.triples);
        self.counts
            .iter_mut()
            .zip(&other.counts)
            .for_each(|(a, b)| *a += b);
        self.n_sentences += other.n_sentences;
        self.n_short += other.n_short;
    }

    /// Adds sentences `range` of `stream`, in parallel.
    pub fn add_range(&mut self, g: &Grammar, stream: &SeedStream, range: Range<u64>) {
        let empty = TripleCounts {
            counts: vec![0; self.counts.len()],
            n_sentences: 0,
            n_short: 0,
            ..self.clone()
        };
        let part = range
            .into_par_iter()
            .fold(
                || empty.clone(),
                |mut acc, k| {
                    let d = sample_derivation(g, &mut stream.rng(k));
                    acc.add(&d.sentence, d.root);
                    acc
                },
            )
            .reduce(
                || empty.clone(),
                |mut a, b| {
                    a.merge(&b);
                    a
                },
            );
        self.merge(&part);
    }

    pub fn count(&self, k: usize) -> u64 {
        self.counts[k * self.v..(k + 1) * self.v].iter().sum()
    }

    /// Empirical `Pr(α | triple k at I)`, or `None` if never seen.
    pub fn posterior(&self, k: usize) -> Option<Vec<f64>> {
        let row = &self.counts[k * self.v..(k + 1) * self.v];
        let n: u64 = row.iter().sum();
        (n > 0).then(|| row.iter().map(|&c| c as f64 / n as f64).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnrPoint {
    #[serde(rename = "P")]
    pub p: u64,
    pub mean_inv_snr: f64,
    pub stderr: f64,
    pub n_triples_included: usize,
    /// Grammatical triples not yet seen at this `P`.
    pub n_triples_excluded: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnrCurve {
    pub anchor: usize,
    pub n_reference: u64,
    /// Grammatical triples absent from the reference sample; never averaged.
    pub n_unseen_reference: usize,
    /// Grammatical triples whose reference posterior is exactly uniform.
    pub n_uniform_reference: usize,
    pub points: Vec<SnrPoint>,
}

fn sq_dist(a: &[f64], b: impl Iterator<Item = f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// `SNR^-1` on a sorted grid of sample sizes, measured on the prefixes of
/// `data` against the asymptote in `reference`.
pub fn snr_curve(
    g: &Grammar,
    grid: &[u64],
    reference: &TripleCounts,
    data: &SeedStream,
) -> Result<SnrCurve> {
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) || grid[0] == 0 {
        return Err(Error::Params(
            "P grid must be nonempty, positive and increasing".into(),
        ));
    }
    let v = g.v();
    let uniform = 1.0 / v as f64;
    let asym: Vec<Option<Vec<f64>>> = (0..reference.triples.len())
        .map(|k| reference.posterior(k))
        .collect();
    let signal: Vec<Option<f64>> = asym
        .iter()
        .map(|p| p.as_ref().map(|p| sq_dist(p, std::iter::repeat(uniform))))
        .collect();
    let n_unseen_reference = signal.iter().filter(|s| s.is_none()).count();
    let n_uniform_reference = signal.iter().filter(|s| **s == Some(0.0)).count();

    let mut counts = TripleCounts::new(g);
    let mut points = Vec::with_capacity(grid.len());
    let mut done = 0;
    for &p in grid {
        counts.add_range(g, data, done..p);
        done = p;
        let mut ratios = Vec::new();
        let mut excluded = 0;
        for k in 0..counts.triples.len() {
            let (Some(target), Some(sig)) = (&asym[k], signal[k]) else {
                continue;
            };
            if sig == 0.0 {
                continue;
            }
            match counts.posterior(k) {
                Some(est) => ratios.push(sq_dist(&est, target.iter().copied()) / sig),
                None => excluded += 1,
            }
        }
        let n = ratios.len();
        let (mean, stderr) = if n == 0 {
            (f64::NAN, f64::NAN)
        } else {
            let mean = ratios.iter().sum::<f64>() / n as f64;
            let var = if n > 1 {
                ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            };
            (mean, (var / n as f64).sqrt())
        };
        points.push(SnrPoint {
            p,
            mean_inv_snr: mean,
            stderr,
            n_triples_included: n,
            n_triples_excluded: excluded,
        });
    }
    Ok(SnrCurve {
        anchor: counts.anchor,
        n_reference: reference.n_sentences,
        n_unseen_reference,
        n_uniform_reference,
        points,
    })
}

/// Reference counts from `n_reference` sentences of the reference stream.
pub fn reference_counts(g: &Grammar, n_reference: u64, seed: u64) -> TripleCounts {
    let mut r = TripleCounts::new(g);
    r.add_range(
        g,
        &SeedStream::new(seed, StreamKind::Reference),
        0..n_reference,
    );
    r
}

/// `SNR^-1` against a reference sample `reference_factor` times the largest
/// grid point; measurement and reference use independent streams of `seed`.
pub fn empirical_snr(
    g: &Grammar,
    grid: &[u64],
    reference_factor: f64,
    seed: u64,
) -> Result<SnrCurve> {
    let max = *grid
        .iter()
        .max()
        .ok_or_else(|| Error::Params("empty P grid".into()))?;
    let n_reference = (max as f64 * reference_factor).ceil() as u64;
    let reference = reference_counts(g, n_reference, seed);
    snr_curve(
        g,
        grid,
        &reference,
        &SeedStream::new(seed, StreamKind::Data),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Crossing {
    /// Interpolated between two grid points.
    Within,
    /// Already at or below the threshold at the first grid point.
    BelowGrid,
    /// Never reaches the threshold.
    AboveGrid,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PStar {
    pub threshold: f64,
    /// `None` when the curve never crosses.
    pub p_star: Option<f64>,
    pub crossing: Crossing,
}

/// First downward crossing of `threshold`, interpolated linearly in the
/// value against `ln P`. NaN values are skipped.
pub fn extract_p_star(grid: &[f64], values: &[f64], threshold: f64) -> PStar {
    let pts: Vec<(f64, f64)> = grid
        .iter()
        .zip(values)
        .filter(|(_, y)| !y.is_nan())
        .map(|(&p, &y)| (p, y))
        .collect();
    let out = |p_star, crossing| PStar {
        threshold,
        p_star,
        crossing,
    };
    let Some(&(p0, y0)) = pts.first() else {
        return out(None, Crossing::AboveGrid);
    };
    if y0 <= threshold {
        return out(Some(p0), Crossing::BelowGrid);
    }
    for w in pts.windows(2) {
        let ((pa, ya), (pb, yb)) = (w[0], w[1]);
        if yb <= threshold {
            let t = if ya == yb {
                1.0
            } else {
                (ya - threshold) / (ya - yb)
            };
            let lp = pa.ln() + t * (pb.ln() - pa.ln());
            return out(Some(lp.exp()), Crossing::Within);
        }
    }
    out(None, Crossing::AboveGrid)
}

impl SnrCurve {
    pub fn p_star(&self, threshold: f64) -> PStar {
        let grid: Vec<f64> = self.points.iter().map(|p| p.p as f64).collect();
        let vals: Vec<f64> = self.points.iter().map(|p| p.mean_inv_snr).collect();
        extract_p_star(&grid, &vals, threshold)
    }

    /// Least-squares slope of `ln SNR^-1` against `ln P` over the points
    /// where every triple is covered (all points if fewer than three are).
    pub fn log_slope(&self) -> f64 {
        let covered: Vec<&SnrPoint> = self
            .points
            .iter()
            .filter(|p| p.n_triples_excluded == 0 && p.mean_inv_snr > 0.0)
            .collect();
        let use_pts: Vec<&SnrPoint> = if covered.len() >= 3 {
            covered
        } else {
            self.points
                .iter()
                .filter(|p| p.mean_inv_snr > 0.0)
                .collect()
        };
        let xy: Vec<(f64, f64)> = use_pts
            .iter()
            .map(|p| ((p.p as f64).ln(), p.mean_inv_snr.ln()))
            .collect();
        log_fit(&xy).0
    }
}

/// Least-squares `(slope, intercept)` of `y` on `x`.
pub fn log_fit(xy: &[(f64, f64)]) -> (f64, f64) {
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = xy.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xy.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossing_is_interpolated_in_log_p() {
        let grid = [100.0, 1000.0, 10000.0];
        let p = extract_p_star(&grid, &[2.0, 1.0, 0.0], 0.5);
        assert_eq!(p.crossing, Crossing::Within);
        assert!((p.p_star.unwrap() - 1000f64 * 10f64.sqrt()).abs() < 1e-9);
        let p = extract_p_star(&grid, &[2.0, 1.0, 0.9], 0.5);
        assert_eq!((p.crossing, p.p_star), (Crossing::AboveGrid, None));
        let p = extract_p_star(&grid, &[0.4, 0.2, 0.1], 0.5);
        assert_eq!((p.crossing, p.p_star), (Crossing::BelowGrid, Some(100.0)));
    }

    #[test]
    fn higher_threshold_crosses_earlier() {
        let grid: Vec<f64> = (0..8).map(|k| 100.0 * 2f64.powi(k)).collect();
        let vals: Vec<f64> = grid.iter().map(|p| 300.0 / p).collect();
        let a = extract_p_star(&grid, &vals, 0.25).p_star.unwrap();
        let b = extract_p_star(&grid, &vals, 0.5).p_star.unwrap();
        let c = extract_p_star(&grid, &vals, 1.0).p_star.unwrap();
        assert!(a > b && b > c);
    }
}
