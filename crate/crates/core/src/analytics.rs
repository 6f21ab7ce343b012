//! Closed-form and recursive predictions: sentence lengths, tree topology
//! counts, the grammatical fraction, the exact `L = 2` class entropy, and the
//! bottom-up latent density map.

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::chart::log_sum_exp;
use crate::error::{invalid, Result};
use crate::splits::span_window;

/// Mean arity at `p2 = 1/2`.
pub const MEAN_ARITY: f64 = 2.5;

/// `floor(2.5^L)`.
pub fn typical_length(depth: usize) -> usize {
    MEAN_ARITY.powi(depth as i32).floor() as usize
}

#[derive(Clone, Copy, Debug, Default)]
struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }
}

/// `ln k!` for `k = 0..=n`.
fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = Kahan::default();
    out.push(0.0);
    for k in 1..=n {
        acc.add((k as f64).ln());
        out.push(acc.sum);
    }
    out
}

/// Parent counts `d'` that can produce `d` children with arities 2 and 3,
/// together with the number `k = d - 2d'` of ternary parents.
fn parent_counts(d: usize, parents: (usize, usize)) -> impl Iterator<Item = (usize, usize)> {
    let lo = d.div_ceil(3).max(parents.0);
    let hi = (d / 2).min(parents.1);
    (lo..=hi).map(move |dp| (dp, d - 2 * dp))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthDistribution {
    pub depth: usize,
    pub span_min: usize,
    /// `probs[d - span_min] = P(d, L)`.
    pub probs: Vec<f64>,
}

impl LengthDistribution {
    pub fn prob(&self, d: usize) -> f64 {
        d.checked_sub(self.span_min)
            .and_then(|k| self.probs.get(k))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .map(|(k, &p)| (k + self.span_min, p))
    }

    pub fn mean(&self) -> f64 {
        self.iter().map(|(d, p)| d as f64 * p).sum()
    }
}

/// `P(d, L)` at the default branching `p2 = 1/2`.
pub fn length_distribution(depth: usize) -> LengthDistribution {
    length_distribution_with(depth, 0.5)
}

/// `P(d, L)` from the top-down master equation with `P(d, 0) = δ_{d,1}`:
/// a level of `d'` nodes with `k` ternary branchings yields `d' + k + d'`
/// children with probability `C(d', k) p3^k p2^(d'-k)`.
pub fn length_distribution_with(depth: usize, p2: f64) -> LengthDistribution {
    let p3 = 1.0 - p2;
    let lnf = ln_factorials(span_window(depth).1);
    let mut probs = vec![1.0];
    for t in 1..=depth {
        let below = span_window(t - 1);
        let (lo, hi) = span_window(t);
        let mut next = Vec::with_capacity(hi - lo + 1);
        for d in lo..=hi {
            let mut acc = Kahan::default();
            for (dp, k) in parent_counts(d, below) {
                let ln_c = lnf[dp] - lnf[k] - lnf[dp - k];
                let w = (ln_c + k as f64 * p3.ln() + (dp - k) as f64 * p2.ln()).exp();
                acc.add(w * probs[dp - below.0]);
            }
            next.push(acc.sum);
        }
        let mut total = Kahan::default();
        next.iter().for_each(|&p| total.add(p));
        probs = next.into_iter().map(|p| p / total.sum).collect();
    }
    LengthDistribution {
        depth,
        span_min: span_window(depth).0,
        probs,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TopologyTable {
    pub depth: usize,
    pub span_min: usize,
    /// `counts[d - span_min] = N_t(d, L)`.
    pub counts: Vec<BigUint>,
}

impl TopologyTable {
    pub fn count(&self, d: usize) -> BigUint {
        d.checked_sub(self.span_min)
            .and_then(|k| self.counts.get(k))
            .cloned()
            .unwrap_or_else(BigUint::zero)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &BigUint)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .map(|(k, n)| (k + self.span_min, n))
    }

    pub fn total(&self) -> BigUint {
        self.counts.iter().sum()
    }
}

/// Exact number of tree topologies `N_t(d, L)` for every `d` in `[2^L, 3^L]`.
pub fn topology_count(depth: usize) -> Result<TopologyTable> {
    if depth == 0 {
        return invalid("topology counts need depth >= 1");
    }
    let mut counts = vec![BigUint::one()];
    for t in 1..=depth {
        let below = span_window(t - 1);
        let (lo, hi) = span_window(t);
        let mut next = vec![BigUint::zero(); hi - lo + 1];
        for (dp, n) in (below.0..=below.1).zip(&counts) {
            // d' parents with k ternary branchings give 2d' + k children.
            let mut choose = BigUint::one();
            for k in 0..=dp {
                next[2 * dp + k - lo] += &choose * n;
                choose = choose * (dp - k) / (k + 1);
            }
        }
        counts = next;
    }
    Ok(TopologyTable {
        depth,
        span_min: span_window(depth).0,
        counts,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FractionTable {
    pub depth: usize,
    pub f: f64,
    pub span_min: usize,
    /// `ln F(d, L)`, kept in log space because `F` underflows quickly.
    pub ln_fraction: Vec<f64>,
}

impl FractionTable {
    pub fn ln_fraction(&self, d: usize) -> f64 {
        d.checked_sub(self.span_min)
            .and_then(|k| self.ln_fraction.get(k))
            .copied()
            .unwrap_or(f64::NEG_INFINITY)
    }

    pub fn fraction(&self, d: usize) -> f64 {
        self.ln_fraction(d).exp()
    }
}

/// Fraction `F(d, L)` of grammatical sentences given the topology, averaged
/// over topologies compatible with `(d, L)`:
///
/// `F(d, L+1) = Σ_{d'} C(d', k) 2^{-d'} f^{d'} F(d', L) / Σ_{d'} C(d', k) 2^{-d'}`
/// with `F(d, 1) = f` for `d ∈ {2, 3}`.
pub fn grammatical_fraction(depth: usize, f: f64) -> Result<FractionTable> {
    if depth == 0 {
        return invalid("grammatical fraction needs depth >= 1");
    }
    if !(f > 0.0 && f <= 1.0) {
        return invalid(format!("f must lie in (0, 1], got {f}"));
    }
    let lnf = ln_factorials(span_window(depth).1);
    let ln_half = 0.5f64.ln();
    let mut ln_fraction = vec![f.ln(); 2];
    for t in 2..=depth {
        let below = span_window(t - 1);
        let (lo, hi) = span_window(t);
        ln_fraction = (lo..=hi)
            .map(|d| {
                let (num, den): (Vec<f64>, Vec<f64>) = parent_counts(d, below)
                    .map(|(dp, k)| {
                        let w = lnf[dp] - lnf[k] - lnf[dp - k] + dp as f64 * ln_half;
                        (w + dp as f64 * f.ln() + ln_fraction[dp - below.0], w)
                    })
                    .unzip();
                log_sum_exp(&num) - log_sum_exp(&den)
            })
            .collect();
    }
    Ok(FractionTable {
        depth,
        f,
        span_min: span_window(depth).0,
        ln_fraction,
    })
}

fn shannon(probs: &[f64]) -> f64 {
    -probs.iter().map(|p| p * p.ln()).sum::<f64>()
}

/// Expected class entropy (nats) at depth 2 for `f2 = f3 = f`, valid for large `v`.
pub fn class_entropy_l2(f: f64) -> f64 {
    let h_half = shannon(&[0.5, 0.5]);
    let h_third = shannon(&[1.0 / 3.0, 2.0 / 3.0]);
    let h_uniform3 = shannon(&[1.0 / 3.0; 3]);
    let (f3, f4, f8) = (f.powi(3), f.powi(4), f.powi(8));
    0.25 * f3 * h_half
        + 3.0 / 16.0 * (2.0 / 3.0 * f3 + 1.0 / 3.0 * f4) * h_third
        + 3.0 / 8.0 * (2.0 * f4 * (1.0 - f4) * h_half + f8 * h_uniform3)
}

/// Sample-complexity scale `(p2^2/2)^{1-L} v m3 m2^{L-1}`.
pub fn predicted_sample_complexity(v: usize, m2: usize, m3: usize, depth: usize, p2: f64) -> f64 {
    let exp = 1 - depth as i32;
    (p2 * p2 / 2.0).powi(exp) * v as f64 * m3 as f64 * (m2 as f64).powi(depth as i32 - 1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityLevel {
    /// Reversed level (tokens are 0).
    pub level: usize,
    pub span_min: usize,
    /// `n[λ - span_min]`, average candidate count at span `λ`.
    pub n: Vec<f64>,
}

impl DensityLevel {
    pub fn at(&self, span: usize) -> f64 {
        span.checked_sub(self.span_min)
            .and_then(|k| self.n.get(k))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn at_typical(&self) -> f64 {
        self.at(typical_length(self.level))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentDensityTrajectory {
    pub f2: f64,
    pub f3: f64,
    pub corrected: bool,
    /// Entry `t` is reversed level `t`.
    pub levels: Vec<DensityLevel>,
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len() + b.len() - 1;
    if a.len() * b.len() <= 1 << 22 {
        let mut out = vec![0.0; n];
        for (i, &x) in a.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (j, &y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        return out;
    }
    let size = n.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let lift = |xs: &[f64]| {
        let mut v: Vec<Complex<f64>> = xs.iter().map(|&x| Complex::new(x, 0.0)).collect();
        v.resize(size, Complex::new(0.0, 0.0));
        fwd.process(&mut v);
        v
    };
    let (fa, fb) = (lift(a), lift(b));
    let mut prod: Vec<Complex<f64>> = fa.iter().zip(&fb).map(|(x, y)| x * y).collect();
    inv.process(&mut prod);
    prod.iter()
        .take(n)
        .map(|c| (c.re / size as f64).max(0.0))
        .collect()
}

/// One step of `n^{(t)} = f2 (n ⊛ n) + f3 (n ⊛ n ⊛ n)`; the span windows
/// make the admissible-split constraints implicit in the convolutions.
fn density_step(below: &DensityLevel, f2: f64, f3: f64) -> DensityLevel {
    let level = below.level + 1;
    let (lo, hi) = span_window(level);
    let pair = convolve(&below.n, &below.n);
    let triple = convolve(&pair, &below.n);
    let mut n = vec![0.0; hi - lo + 1];
    // pair[k] is span 2*span_min + k, triple[k] is span 3*span_min + k.
    for (k, &x) in pair.iter().enumerate() {
        n[2 * below.span_min + k - lo] += f2 * x;
    }
    for (k, &x) in triple.iter().enumerate() {
        n[3 * below.span_min + k - lo] += f3 * x;
    }
    DensityLevel {
        level,
        span_min: lo,
        n,
    }
}

fn density_start(f2: f64, f3: f64, corrected: bool) -> Vec<DensityLevel> {
    let tokens = DensityLevel {
        level: 0,
        span_min: 1,
        n: vec![1.0],
    };
    if corrected {
        // Planted-tree correction at the first level: the true latent
        // occupies a fraction 1/(2<s>) of each span length.
        let planted = 1.0 / (2.0 * MEAN_ARITY);
        let first = DensityLevel {
            level: 1,
            span_min: 2,
            n: vec![
                planted + f2 * (1.0 - planted),
                planted + f3 * (1.0 - planted),
            ],
        };
        vec![tokens, first]
    } else {
        let first = density_step(&tokens, f2, f3);
        vec![tokens, first]
    }
}

fn check_fractions(f2: f64, f3: f64) -> Result<()> {
    if !((0.0..=1.0).contains(&f2) && (0.0..=1.0).contains(&f3)) {
        return invalid(format!(
            "fractions must lie in [0, 1], got f2={f2}, f3={f3}"
        ));
    }
    Ok(())
}

/// The latent density map iterated up to reversed level `depth`.
pub fn latent_density(
    f2: f64,
    f3: f64,
    depth: usize,
    corrected: bool,
) -> Result<LatentDensityTrajectory> {
    check_fractions(f2, f3)?;
    if depth == 0 {
        return invalid("latent density needs depth >= 1");
    }
    let mut levels = density_start(f2, f3, corrected);
    while levels.len() <= depth {
        let next = density_step(levels.last().expect("nonempty"), f2, f3);
        levels.push(next);
    }
    Ok(LatentDensityTrajectory {
        f2,
        f3,
        corrected,
        levels,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Diverges,
    Decays,
    Undetermined,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Diverges => "diverges",
            Verdict::Decays => "decays",
            Verdict::Undetermined => "undetermined",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bifurcation {
    pub verdict: Verdict,
    /// Reversed level at which the verdict was reached (or the last one tried).
    pub level: usize,
    /// Density at the typical span of that level.
    pub n_final: f64,
}

pub const DIVERGENCE_THRESHOLD: f64 = 1e3;
pub const DECAY_THRESHOLD: f64 = 1e-3;
pub const MAX_DENSITY_DEPTH: usize = 12;

/// Follows the density at the typical span `floor(2.5^t)` until it leaves
/// `[1e-3, 1e3]` or `t` reaches 12.
pub fn bifurcation(f2: f64, f3: f64, corrected: bool) -> Result<Bifurcation> {
    check_fractions(f2, f3)?;
    let mut levels = density_start(f2, f3, corrected);
    let mut current = levels.pop().expect("nonempty");
    loop {
        let n = current.at_typical();
        let verdict = if n > DIVERGENCE_THRESHOLD {
            Verdict::Diverges
        } else if n < DECAY_THRESHOLD {
            Verdict::Decays
        } else if current.level >= MAX_DENSITY_DEPTH {
            Verdict::Undetermined
        } else {
            current = density_step(&current, f2, f3);
            continue;
        };
        return Ok(Bifurcation {
            verdict,
            level: current.level,
            n_final: n,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_one_lengths() {
        let p = length_distribution(1);
        assert_eq!(p.probs, vec![0.5, 0.5]);
    }

    #[test]
    fn depth_two_six_tokens() {
        // 3-3 with both children binary, or 2-2-2 with all three binary:
        // (1/2)(1/2)^2 + (1/2)(1/2)^3.
        let p = length_distribution(2);
        assert!((p.prob(6) - 3.0 / 16.0).abs() < 1e-15);
        assert_eq!(p.prob(3), 0.0);
    }

    #[test]
    fn mean_length_at_depth_three() {
        assert!((length_distribution(3).mean() - 15.625).abs() < 1e-9);
    }

    #[test]
    fn skewed_branching_mean() {
        let p = length_distribution_with(4, 0.8);
        assert!((p.mean() - 2.2f64.powi(4)).abs() < 1e-9);
    }

    #[test]
    fn topology_counts_at_depth_two() {
        let t = topology_count(2).unwrap();
        assert_eq!(t.total(), BigUint::from(12u32));
        assert_eq!(t.count(4), BigUint::from(1u32));
        assert_eq!(t.count(5), BigUint::from(2u32));
        assert_eq!(t.count(7), BigUint::from(3u32));
        assert_eq!(t.count(8), BigUint::from(3u32));
        assert_eq!(t.count(10), BigUint::zero());
        assert!(topology_count(0).is_err());
    }

    #[test]
    fn topology_counts_exceed_u64() {
        let t = topology_count(7).unwrap();
        assert!(t.count(typical_length(7)).bits() > 64);
    }

    #[test]
    fn fraction_initial_and_saturated() {
        let t = grammatical_fraction(1, 0.3).unwrap();
        assert!((t.fraction(2) - 0.3).abs() < 1e-15 && (t.fraction(3) - 0.3).abs() < 1e-15);
        let one = grammatical_fraction(4, 1.0).unwrap();
        assert!(one.ln_fraction.iter().all(|x| x.abs() < 1e-12));
        assert!(grammatical_fraction(2, 0.0).is_err());
    }

    #[test]
    fn l2_entropy_at_endpoints() {
        assert_eq!(class_entropy_l2(0.0), 0.0);
        let h = 0.25 * 2f64.ln()
            + 3.0 / 16.0 * shannon(&[1.0 / 3.0, 2.0 / 3.0])
            + 3.0 / 8.0 * 3f64.ln();
        assert!((class_entropy_l2(1.0) - h).abs() < 1e-15);
    }

    #[test]
    fn sample_complexity_scale() {
        assert_eq!(predicted_sample_complexity(8, 2, 16, 2, 0.5), 2048.0);
        assert_eq!(predicted_sample_complexity(5, 3, 7, 1, 0.5), 35.0);
    }

    #[test]
    fn convolution_paths_agree() {
        let a: Vec<f64> = (0..3000)
            .map(|k| ((k * 7919) % 101) as f64 / 101.0)
            .collect();
        let b: Vec<f64> = (0..2000)
            .map(|k| ((k * 104729) % 37) as f64 / 37.0)
            .collect();
        let direct = {
            let mut out = vec![0.0; a.len() + b.len() - 1];
            for (i, x) in a.iter().enumerate() {
                for (j, y) in b.iter().enumerate() {
                    out[i + j] += x * y;
                }
            }
            out
        };
        let fast = convolve(&a, &b);
        for (x, y) in direct.iter().zip(&fast) {
            assert!((x - y).abs() < 1e-8 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn corrected_start() {
        let tr = latent_density(0.25, 0.25, 2, true).unwrap();
        assert_eq!(tr.levels[1].n, vec![0.4, 0.4]);
    }

    #[test]
    fn far_from_critical_verdicts() {
        assert_eq!(
            bifurcation(0.2, 0.2, false).unwrap().verdict,
            Verdict::Decays
        );
        assert_eq!(
            bifurcation(0.8, 0.8, false).unwrap().verdict,
            Verdict::Diverges
        );
    }
}
