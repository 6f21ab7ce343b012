//! Layered span charts, generic over the semiring.
//!
//! One [`LevelTensor`] per level holds `d x n_spans x v` entries, with the
//! span axis offset by the level's minimum span. The same fill routine runs
//! the inside algorithm (linear or log space) and CYK (Boolean); only the
//! [`Semiring`] changes.
//!
//! Every cell is the semiring sum, over its splits in table order, of the
//! per-split partial sums. Serial and parallel fills evaluate exactly the
//! same expression tree, so they agree bit for bit.

use std::fmt::Debug;

use rayon::prelude::*;

use crate::grammar::{RuleLevel, Symbol};
use crate::splits::{span_window, LevelSplits, SplitTables};

pub trait Semiring: Send + Sync + 'static {
    type Elem: Copy + Send + Sync + PartialEq + Debug;

    fn zero() -> Self::Elem;
    fn one() -> Self::Elem;
    fn is_zero(x: Self::Elem) -> bool;
    /// Embeds a rule probability.
    fn weight(p: f64) -> Self::Elem;
    fn mul(a: Self::Elem, b: Self::Elem) -> Self::Elem;
    /// Sum of `terms`, evaluated in the given order.
    fn sum(terms: &[Self::Elem]) -> Self::Elem;
}

/// Probabilities.
#[derive(Debug)]
pub struct Real;

/// Log-probabilities; zero is `-inf`.
#[derive(Debug)]
pub struct LogReal;

/// Derivability only.
#[derive(Debug)]
pub struct Boolean;

impl Semiring for Real {
    type Elem = f64;
    fn zero() -> f64 {
        0.0
    }
    fn one() -> f64 {
        1.0
    }
    fn is_zero(x: f64) -> bool {
        x == 0.0
    }
    fn weight(p: f64) -> f64 {
        p
    }
    fn mul(a: f64, b: f64) -> f64 {
        a * b
    }
    fn sum(terms: &[f64]) -> f64 {
        terms.iter().fold(0.0, |acc, x| acc + x)
    }
}

impl Semiring for LogReal {
    type Elem = f64;
    fn zero() -> f64 {
        f64::NEG_INFINITY
    }
    fn one() -> f64 {
        0.0
    }
    fn is_zero(x: f64) -> bool {
        x == f64::NEG_INFINITY
    }
    fn weight(p: f64) -> f64 {
        p.ln()
    }
    fn mul(a: f64, b: f64) -> f64 {
        a + b
    }
    fn sum(terms: &[f64]) -> f64 {
        log_sum_exp(terms)
    }
}

impl Semiring for Boolean {
    type Elem = bool;
    fn zero() -> bool {
        false
    }
    fn one() -> bool {
        true
    }
    fn is_zero(x: bool) -> bool {
        !x
    }
    fn weight(p: f64) -> bool {
        p > 0.0
    }
    fn mul(a: bool, b: bool) -> bool {
        a && b
    }
    fn sum(terms: &[bool]) -> bool {
        terms.iter().any(|&x| x)
    }
}

/// `ln sum exp(x)` with the maximum shifted out.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    if max == f64::INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Chart entries of one level, indexed `(start, span, symbol)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelTensor<E> {
    reversed_level: usize,
    d: usize,
    v: usize,
    span_min: usize,
    span_max: usize,
    data: Vec<E>,
}

impl<E: Copy> LevelTensor<E> {
    pub fn new(reversed_level: usize, d: usize, v: usize, zero: E) -> Self {
        let (span_min, span_max) = span_window(reversed_level);
        let n = d * (span_max - span_min + 1) * v;
        LevelTensor {
            reversed_level,
            d,
            v,
            span_min,
            span_max,
            data: vec![zero; n],
        }
    }

    pub fn reversed_level(&self) -> usize {
        self.reversed_level
    }

    pub fn span_range(&self) -> (usize, usize) {
        (self.span_min, self.span_max)
    }

    /// `(d, n_spans, v)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.d, self.span_max - self.span_min + 1, self.v)
    }

    #[inline]
    fn base(&self, start: usize, span: usize) -> usize {
        debug_assert!(start < self.d && (self.span_min..=self.span_max).contains(&span));
        (start * (self.span_max - self.span_min + 1) + (span - self.span_min)) * self.v
    }

    pub fn in_window(&self, start: usize, span: usize) -> bool {
        start < self.d && (self.span_min..=self.span_max).contains(&span)
    }

    /// The `v` entries of cell `(start, span)`.
    pub fn cell(&self, start: usize, span: usize) -> &[E] {
        let b = self.base(start, span);
        &self.data[b..b + self.v]
    }

    pub fn cell_mut(&mut self, start: usize, span: usize) -> &mut [E] {
        let b = self.base(start, span);
        &mut self.data[b..b + self.v]
    }

    pub fn get(&self, start: usize, span: usize, z: Symbol) -> E {
        self.cell(start, span)[z as usize]
    }

    pub fn data(&self) -> &[E] {
        &self.data
    }
}

/// Nonzero entries per cell, in symbol order.
struct Support<E> {
    span_min: usize,
    n_spans: usize,
    cells: Vec<Vec<(Symbol, E)>>,
}

impl<E: Copy + Send + Sync> Support<E> {
    fn of<S: Semiring<Elem = E>>(t: &LevelTensor<E>) -> Self {
        let n_spans = t.span_max - t.span_min + 1;
        let cells = t
            .data
            .chunks(t.v)
            .map(|cell| {
                cell.iter()
                    .enumerate()
                    .filter(|(_, x)| !S::is_zero(**x))
                    .map(|(z, x)| (z as Symbol, *x))
                    .collect()
            })
            .collect();
        Support {
            span_min: t.span_min,
            n_spans,
            cells,
        }
    }

    #[inline]
    fn at(&self, start: usize, span: usize) -> &[(Symbol, E)] {
        &self.cells[start * self.n_spans + span - self.span_min]
    }
}

/// Per-symbol term lists, reused across cells.
struct Accumulator<E> {
    terms: Vec<Vec<E>>,
    touched: Vec<Symbol>,
}

impl<E: Copy> Accumulator<E> {
    fn new(v: usize) -> Self {
        Accumulator {
            terms: vec![Vec::new(); v],
            touched: Vec::new(),
        }
    }

    #[inline]
    fn push(&mut self, z: Symbol, x: E) {
        let slot = &mut self.terms[z as usize];
        if slot.is_empty() {
            self.touched.push(z);
        }
        slot.push(x);
    }

    fn drain<S: Semiring<Elem = E>>(&mut self) -> Vec<(Symbol, E)> {
        let mut out = Vec::with_capacity(self.touched.len());
        for &z in &self.touched {
            let slot = &mut self.terms[z as usize];
            out.push((z, S::sum(slot)));
            slot.clear();
        }
        self.touched.clear();
        out.sort_unstable_by_key(|(z, _)| *z);
        out
    }
}

#[derive(Clone, Copy, Debug)]
enum Split {
    Binary(usize),
    Ternary(usize, usize),
}

/// How a level is filled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FillOptions {
    pub parallel: bool,
    /// Only fill the full-sentence cell at the root level.
    pub root_only: bool,
}

impl Default for FillOptions {
    fn default() -> Self {
        FillOptions {
            parallel: true,
            root_only: false,
        }
    }
}

struct StepContext<'a, S: Semiring> {
    rules: &'a RuleLevel,
    w2: S::Elem,
    w3: S::Elem,
    below: &'a Support<S::Elem>,
}

impl<S: Semiring> StepContext<'_, S> {
    fn partial(
        &self,
        start: usize,
        span: usize,
        split: Split,
        acc: &mut Accumulator<S::Elem>,
    ) -> Vec<(Symbol, S::Elem)> {
        match split {
            Split::Binary(q) => {
                let right = self.below.at(start + q, span - q);
                if right.is_empty() {
                    return Vec::new();
                }
                for &(a, x) in self.below.at(start, q) {
                    for &(b, y) in right {
                        if let Some(z) = self.rules.binary_parent(a, b) {
                            acc.push(z, S::mul(self.w2, S::mul(x, y)));
                        }
                    }
                }
            }
            Split::Ternary(q, r) => {
                let mid = self.below.at(start + q, r);
                let right = self.below.at(start + q + r, span - q - r);
                if mid.is_empty() || right.is_empty() {
                    return Vec::new();
                }
                for &(a, x) in self.below.at(start, q) {
                    for &(b, y) in mid {
                        let xy = S::mul(x, y);
                        for &(c, w) in right {
                            if let Some(z) = self.rules.ternary_parent(a, b, c) {
                                acc.push(z, S::mul(self.w3, S::mul(xy, w)));
                            }
                        }
                    }
                }
            }
        }
        acc.drain::<S>()
    }

    fn combine(
        partials: impl Iterator<Item = Vec<(Symbol, S::Elem)>>,
        acc: &mut Accumulator<S::Elem>,
    ) -> Vec<(Symbol, S::Elem)> {
        for p in partials {
            for (z, x) in p {
                acc.push(z, x);
            }
        }
        acc.drain::<S>()
    }
}

/// The token level: `N(i, 1, z) = [x_i = z]`.
pub fn token_level<S: Semiring>(sentence: &[Symbol], v: usize) -> LevelTensor<S::Elem> {
    let mut t = LevelTensor::new(0, sentence.len(), v, S::zero());
    for (i, &x) in sentence.iter().enumerate() {
        t.cell_mut(i, 1)[x as usize] = S::one();
    }
    t
}

/// Builds reversed level `below.reversed_level() + 1` by applying `rules`
/// to every admissible split.
pub fn step<S: Semiring>(
    rules: &RuleLevel,
    w2: S::Elem,
    w3: S::Elem,
    below: &LevelTensor<S::Elem>,
    splits: &LevelSplits,
    opts: FillOptions,
) -> LevelTensor<S::Elem> {
    let t = below.reversed_level + 1;
    let d = below.d;
    let v = rules.v();
    let support = Support::of::<S>(below);
    let ctx = StepContext::<S> {
        rules,
        w2,
        w3,
        below: &support,
    };
    let mut out = LevelTensor::new(t, d, v, S::zero());
    let (span_min, span_max) = splits.span_range();
    debug_assert_eq!((span_min, span_max), span_window(t));

    for span in span_min..=span_max.min(d) {
        let starts: Vec<usize> = if opts.root_only {
            if span == d {
                vec![0]
            } else {
                Vec::new()
            }
        } else {
            (0..=d - span).collect()
        };
        if starts.is_empty() {
            continue;
        }
        let split_list: Vec<Split> = splits
            .binary(span)
            .iter()
            .map(|&q| Split::Binary(q as usize))
            .chain(splits.ternary(span).map(|(q, r)| Split::Ternary(q, r)))
            .collect();

        let serial_cell = |start: usize, acc: &mut Accumulator<S::Elem>| {
            let partials: Vec<_> = split_list
                .iter()
                .map(|&s| ctx.partial(start, span, s, acc))
                .collect();
            StepContext::<S>::combine(partials.into_iter(), acc)
        };

        let cells: Vec<(usize, Vec<(Symbol, S::Elem)>)> = if !opts.parallel {
            let mut acc = Accumulator::new(v);
            starts
                .iter()
                .map(|&i| (i, serial_cell(i, &mut acc)))
                .collect()
        } else if starts.len() >= split_list.len() {
            starts
                .par_iter()
                .map_init(|| Accumulator::new(v), |acc, &i| (i, serial_cell(i, acc)))
                .collect()
        } else {
            let mut acc = Accumulator::new(v);
            starts
                .iter()
                .map(|&i| {
                    let partials: Vec<_> = split_list
                        .par_iter()
                        .map_init(|| Accumulator::new(v), |a, &s| ctx.partial(i, span, s, a))
                        .collect();
                    (i, StepContext::<S>::combine(partials.into_iter(), &mut acc))
                })
                .collect()
        };
        for (i, entries) in cells {
            let cell = out.cell_mut(i, span);
            for (z, x) in entries {
                cell[z as usize] = x;
            }
        }
    }
    out
}

/// A full bottom-up chart; `levels[t]` is reversed level `t` (tokens at 0).
#[derive(Clone, Debug, PartialEq)]
pub struct Chart<E> {
    levels: Vec<LevelTensor<E>>,
}

impl<E: Copy> Chart<E> {
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn sentence_len(&self) -> usize {
        self.levels[0].d
    }

    /// Tensor of grammar level `l` (`0` = root, `L` = tokens).
    pub fn level(&self, l: usize) -> &LevelTensor<E> {
        &self.levels[self.depth() - l]
    }

    pub fn reversed(&self, t: usize) -> &LevelTensor<E> {
        &self.levels[t]
    }

    /// Root entries of the full-sentence cell, one per class label.
    pub fn root_cell(&self) -> &[E] {
        self.levels[self.depth()].cell(0, self.sentence_len())
    }
}

/// Fills every level of `sentence` with the given rule levels (grammar levels
/// `1..=L`) and per-arity rule weights.
pub fn fill<S: Semiring>(
    levels: &[RuleLevel],
    w2: S::Elem,
    w3: S::Elem,
    sentence: &[Symbol],
    splits: &SplitTables,
    opts: FillOptions,
) -> Chart<S::Elem> {
    let depth = levels.len();
    let v = levels[0].v();
    let mut out = vec![token_level::<S>(sentence, v)];
    for t in 1..=depth {
        let rules = &levels[depth - t];
        let level_opts = FillOptions {
            root_only: opts.root_only && t == depth,
            ..opts
        };
        let next = step::<S>(rules, w2, w3, &out[t - 1], splits.level(t), level_opts);
        out.push(next);
    }
    Chart { levels: out }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        let x = log_sum_exp(&[1234.0, 1232.0]);
        assert!((x - 1234.126928011043).abs() < 1e-12);
        assert!((log_sum_exp(&[0.5, 2.0]) - 2.2014132779827524).abs() < 1e-15);
    }

    #[test]
    fn tensor_shape_and_offsets() {
        let t = LevelTensor::new(2, 9, 5, 0.0f64);
        assert_eq!(t.shape(), (9, 6, 5));
        assert_eq!(t.span_range(), (4, 9));
        assert!(t.in_window(0, 9) && !t.in_window(0, 3));
    }

    #[test]
    fn token_level_is_one_hot() {
        let t = token_level::<Real>(&[2, 0, 1], 3);
        assert_eq!(t.cell(0, 1), &[0.0, 0.0, 1.0]);
        assert_eq!(t.cell(2, 1), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn hand_built_grammar() {
        // 0 -> (1 2) | (0 0 0); 1 -> (2 2) at the top, tokens below.
        let top = RuleLevel::new(3, &[(0, [1, 2])], &[(1, [0, 1, 2])]).unwrap();
        let bottom = RuleLevel::new(3, &[(1, [0, 1]), (2, [2, 2])], &[(0, [0, 0, 0])]).unwrap();
        let splits = SplitTables::new(2);
        let levels = vec![top, bottom];
        // 0 1 | 2 2  ->  1 2  ->  0
        let chart = fill::<Real>(
            &levels,
            0.5,
            0.25,
            &[0, 1, 2, 2],
            &splits,
            FillOptions::default(),
        );
        assert_eq!(chart.level(1).get(0, 2, 1), 0.5);
        assert_eq!(chart.level(1).get(2, 2, 2), 0.5);
        assert_eq!(chart.root_cell(), &[0.125, 0.0, 0.0]);
        let b = fill::<Boolean>(
            &levels,
            true,
            true,
            &[0, 1, 2, 2],
            &splits,
            FillOptions::default(),
        );
        assert_eq!(b.root_cell(), &[true, false, false]);
    }
}
