//! Uniform-depth random grammars with binary and ternary productions.
//!
//! Level `0` holds the class labels (roots), level `L` the tokens. Every
//! level uses the same dense symbol range `0..v`; a [`RuleLevel`] at index
//! `l` rewrites level-`(l-1)` symbols into level-`l` tuples.

use std::collections::HashMap;
use std::ops::Range;

use rand::seq::index;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{Rng, SeedStream};

pub type Symbol = u32;

const NO_PARENT: u32 = u32::MAX;
const DENSE_LOOKUP_LIMIT: usize = 1 << 24;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrammarParams {
    /// Symbols per level; also the number of class labels.
    pub v: usize,
    /// Depth `L`.
    #[serde(rename = "L")]
    pub depth: usize,
    /// Binary rules per nonterminal.
    pub m2: usize,
    /// Ternary rules per nonterminal.
    pub m3: usize,
    pub p2: f64,
    pub p3: f64,
    pub seed: u64,
}

impl GrammarParams {
    pub fn new(v: usize, depth: usize, m2: usize, m3: usize, seed: u64) -> Self {
        GrammarParams {
            v,
            depth,
            m2,
            m3,
            p2: 0.5,
            p3: 0.5,
            seed,
        }
    }

    /// Rule counts from grammatical fractions: `m2 = round(f2 v)`,
    /// `m3 = round(f3 v^2)`, each at least one.
    pub fn from_fractions(v: usize, depth: usize, f2: f64, f3: f64, seed: u64) -> Result<Self> {
        if !(f2 > 0.0 && f2 <= 1.0 && f3 > 0.0 && f3 <= 1.0) {
            return invalid(format!(
                "fractions must lie in (0, 1], got f2={f2}, f3={f3}"
            ));
        }
        let m2 = ((f2 * v as f64).round() as usize).max(1);
        let m3 = ((f3 * (v * v) as f64).round() as usize).max(1);
        let p = GrammarParams::new(v, depth, m2, m3, seed);
        p.validate()?;
        Ok(p)
    }

    pub fn with_branching(mut self, p2: f64) -> Self {
        self.p2 = p2;
        self.p3 = 1.0 - p2;
        self
    }

    pub fn f2(&self) -> f64 {
        self.m2 as f64 / self.v as f64
    }

    pub fn f3(&self) -> f64 {
        self.m3 as f64 / (self.v * self.v) as f64
    }

    /// Mean branching ratio `2 p2 + 3 p3`.
    pub fn mean_arity(&self) -> f64 {
        2.0 * self.p2 + 3.0 * self.p3
    }

    pub fn validate(&self) -> Result<()> {
        if self.v == 0 || self.depth == 0 {
            return invalid("v and L must be positive");
        }
        if self.m2 == 0 || self.m3 == 0 {
            return invalid("m2 and m3 must be at least 1");
        }
        if self.v > u32::MAX as usize / 2 {
            return invalid("vocabulary too large");
        }
        if self.m2 > self.v {
            return invalid(format!(
                "v*m2 = {} exceeds v^2 = {}",
                self.v * self.m2,
                self.v * self.v
            ));
        }
        if self.m3 > self.v * self.v {
            return invalid(format!(
                "v*m3 = {} exceeds v^3 = {}",
                self.v * self.m3,
                self.v * self.v * self.v
            ));
        }
        if !(self.p2 > 0.0 && self.p2 < 1.0 && self.p3 > 0.0 && self.p3 < 1.0) {
            return invalid("branching probabilities must lie in (0, 1)");
        }
        if (self.p2 + self.p3 - 1.0).abs() > 1e-12 {
            return invalid("p2 + p3 must equal 1");
        }
        Ok(())
    }
}

/// Child-tuple → parent lookup, dense when the tuple space is small.
#[derive(Clone, Debug)]
enum TupleIndex {
    Dense(Vec<u32>),
    Sparse(HashMap<u64, u32>),
}

impl TupleIndex {
    fn new(space: usize) -> Self {
        if space <= DENSE_LOOKUP_LIMIT {
            TupleIndex::Dense(vec![NO_PARENT; space])
        } else {
            TupleIndex::Sparse(HashMap::new())
        }
    }

    /// Returns false if the key was already taken.
    fn insert(&mut self, key: u64, parent: u32) -> bool {
        match self {
            TupleIndex::Dense(t) => {
                let slot = &mut t[key as usize];
                if *slot != NO_PARENT {
                    return false;
                }
                *slot = parent;
                true
            }
            TupleIndex::Sparse(m) => m.insert(key, parent).is_none(),
        }
    }

    #[inline]
    fn get(&self, key: u64) -> Option<u32> {
        match self {
            TupleIndex::Dense(t) => {
                let p = t[key as usize];
                (p != NO_PARENT).then_some(p)
            }
            TupleIndex::Sparse(m) => m.get(&key).copied(),
        }
    }
}

/// The productions of one level, grouped by parent.
///
/// Right-hand tuples are distinct within each arity, so every tuple has at
/// most one parent.
#[derive(Clone, Debug)]
pub struct RuleLevel {
    v: usize,
    binary: Vec<[Symbol; 2]>,
    binary_offsets: Vec<usize>,
    ternary: Vec<[Symbol; 3]>,
    ternary_offsets: Vec<usize>,
    binary_index: TupleIndex,
    ternary_index: TupleIndex,
}

impl PartialEq for RuleLevel {
    fn eq(&self, other: &Self) -> bool {
        self.v == other.v
            && self.binary == other.binary
            && self.binary_offsets == other.binary_offsets
            && self.ternary == other.ternary
            && self.ternary_offsets == other.ternary_offsets
    }
}

fn group_by_parent<const N: usize>(
    v: usize,
    rules: &[(Symbol, [Symbol; N])],
) -> (Vec<[Symbol; N]>, Vec<usize>) {
    let mut offsets = vec![0usize; v + 1];
    for (p, _) in rules {
        offsets[*p as usize + 1] += 1;
    }
    for k in 0..v {
        offsets[k + 1] += offsets[k];
    }
    let mut cursor = offsets.clone();
    let mut out = vec![[0; N]; rules.len()];
    for (p, t) in rules {
        out[cursor[*p as usize]] = *t;
        cursor[*p as usize] += 1;
    }
    (out, offsets)
}

impl RuleLevel {
    /// Builds a level from `(parent, tuple)` lists. Within a parent the given
    /// order is kept.
    pub fn new(
        v: usize,
        binary: &[(Symbol, [Symbol; 2])],
        ternary: &[(Symbol, [Symbol; 3])],
    ) -> Result<Self> {
        let in_range = |s: Symbol| (s as usize) < v;
        if let Some((p, t)) = binary
            .iter()
            .find(|(p, t)| !in_range(*p) || !t.iter().all(|s| in_range(*s)))
        {
            return invalid(format!("binary rule {p} -> {t:?} out of range for v={v}"));
        }
        if let Some((p, t)) = ternary
            .iter()
            .find(|(p, t)| !in_range(*p) || !t.iter().all(|s| in_range(*s)))
        {
            return invalid(format!("ternary rule {p} -> {t:?} out of range for v={v}"));
        }
        let mut binary_index = TupleIndex::new(v * v);
        for (p, t) in binary {
            if !binary_index.insert(pack2(v, t[0], t[1]), *p) {
                return invalid(format!("binary tuple {t:?} has two parents"));
            }
        }
        let mut ternary_index = TupleIndex::new(v * v * v);
        for (p, t) in ternary {
            if !ternary_index.insert(pack3(v, t[0], t[1], t[2]), *p) {
                return invalid(format!("ternary tuple {t:?} has two parents"));
            }
        }
        let (binary, binary_offsets) = group_by_parent(v, binary);
        let (ternary, ternary_offsets) = group_by_parent(v, ternary);
        Ok(RuleLevel {
            v,
            binary,
            binary_offsets,
            ternary,
            ternary_offsets,
            binary_index,
            ternary_index,
        })
    }

    pub fn empty(v: usize) -> Self {
        RuleLevel::new(v, &[], &[]).expect("empty level is valid")
    }

    pub fn v(&self) -> usize {
        self.v
    }

    pub fn binary_of(&self, parent: Symbol) -> &[[Symbol; 2]] {
        let p = parent as usize;
        &self.binary[self.binary_offsets[p]..self.binary_offsets[p + 1]]
    }

    pub fn ternary_of(&self, parent: Symbol) -> &[[Symbol; 3]] {
        let p = parent as usize;
        &self.ternary[self.ternary_offsets[p]..self.ternary_offsets[p + 1]]
    }

    #[inline]
    pub fn binary_parent(&self, a: Symbol, b: Symbol) -> Option<Symbol> {
        self.binary_index.get(pack2(self.v, a, b))
    }

    #[inline]
    pub fn ternary_parent(&self, a: Symbol, b: Symbol, c: Symbol) -> Option<Symbol> {
        self.ternary_index.get(pack3(self.v, a, b, c))
    }

    pub fn binary_rules(&self) -> impl Iterator<Item = (Symbol, [Symbol; 2])> + '_ {
        (0..self.v as Symbol).flat_map(move |p| self.binary_of(p).iter().map(move |t| (p, *t)))
    }

    pub fn ternary_rules(&self) -> impl Iterator<Item = (Symbol, [Symbol; 3])> + '_ {
        (0..self.v as Symbol).flat_map(move |p| self.ternary_of(p).iter().map(move |t| (p, *t)))
    }

    pub fn n_binary(&self) -> usize {
        self.binary.len()
    }

    pub fn n_ternary(&self) -> usize {
        self.ternary.len()
    }
}

#[inline]
pub fn pack2(v: usize, a: Symbol, b: Symbol) -> u64 {
    a as u64 * v as u64 + b as u64
}

#[inline]
pub fn pack3(v: usize, a: Symbol, b: Symbol, c: Symbol) -> u64 {
    (a as u64 * v as u64 + b as u64) * v as u64 + c as u64
}

/// A generated grammar instance.
#[derive(Clone, Debug, PartialEq)]
pub struct Grammar {
    params: GrammarParams,
    levels: Vec<RuleLevel>,
}

impl Grammar {
    /// Samples `v*m_s` distinct tuples per arity and level without
    /// replacement; consecutive blocks of `m_s` tuples go to nonterminals
    /// `0, 1, ..., v-1`.
    pub fn generate(params: &GrammarParams) -> Result<Self> {
        params.validate()?;
        let v = params.v;
        let stream = SeedStream::new(params.seed, crate::rng::StreamKind::Grammar);
        let levels = (0..params.depth)
            .map(|l| {
                let mut rng = stream.rng(l as u64);
                let binary: Vec<(Symbol, [Symbol; 2])> =
                    index::sample(&mut rng, v * v, v * params.m2)
                        .into_iter()
                        .enumerate()
                        .map(|(k, t)| {
                            let parent = (k / params.m2) as Symbol;
                            (parent, [(t / v) as Symbol, (t % v) as Symbol])
                        })
                        .collect();
                let ternary: Vec<(Symbol, [Symbol; 3])> =
                    index::sample(&mut rng, v * v * v, v * params.m3)
                        .into_iter()
                        .enumerate()
                        .map(|(k, t)| {
                            let parent = (k / params.m3) as Symbol;
                            (
                                parent,
                                [
                                    (t / (v * v)) as Symbol,
                                    ((t / v) % v) as Symbol,
                                    (t % v) as Symbol,
                                ],
                            )
                        })
                        .collect();
                RuleLevel::new(v, &binary, &ternary)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Grammar {
            params: params.clone(),
            levels,
        })
    }

    /// Assembles a grammar from explicit rule levels (e.g. a file). Every
    /// nonterminal must own exactly `m2` binary and `m3` ternary rules.
    pub fn from_levels(params: GrammarParams, levels: Vec<RuleLevel>) -> Result<Self> {
        params.validate()?;
        if levels.len() != params.depth {
            return invalid(format!(
                "expected {} levels, found {}",
                params.depth,
                levels.len()
            ));
        }
        for (l, level) in levels.iter().enumerate() {
            if level.v() != params.v {
                return invalid(format!("level {} has v={}", l + 1, level.v()));
            }
            for z in 0..params.v as Symbol {
                if level.binary_of(z).len() != params.m2 || level.ternary_of(z).len() != params.m3 {
                    return invalid(format!(
                        "level {}: nonterminal {z} has {} binary and {} ternary rules",
                        l + 1,
                        level.binary_of(z).len(),
                        level.ternary_of(z).len()
                    ));
                }
            }
        }
        Ok(Grammar { params, levels })
    }

    pub fn params(&self) -> &GrammarParams {
        &self.params
    }

    pub fn v(&self) -> usize {
        self.params.v
    }

    pub fn depth(&self) -> usize {
        self.params.depth
    }

    /// Rules rewriting level-`(l-1)` symbols into level-`l` tuples, `1 <= l <= L`.
    pub fn level(&self, l: usize) -> &RuleLevel {
        &self.levels[l - 1]
    }

    pub fn levels(&self) -> &[RuleLevel] {
        &self.levels
    }

    pub fn binary_prob(&self) -> f64 {
        self.params.p2 / self.params.m2 as f64
    }

    pub fn ternary_prob(&self) -> f64 {
        self.params.p3 / self.params.m3 as f64
    }

    pub fn sample(&self, rng: &mut Rng) -> Derivation {
        sample_derivation(self, rng)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Node {
    pub symbol: Symbol,
    pub start: usize,
    pub span: usize,
    /// Number of children; 0 at the token level.
    pub arity: u8,
}

/// A sampled sentence with its full parse tree, stored level by level. The
/// children of a node are a contiguous run of the next level.
#[derive(Clone, Debug, PartialEq)]
pub struct Derivation {
    pub root: Symbol,
    pub levels: Vec<Vec<Node>>,
    pub sentence: Vec<Symbol>,
}

impl Derivation {
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    /// Index range of the children of node `k` at level `l` within level `l+1`.
    pub fn children(&self, l: usize, k: usize) -> Range<usize> {
        let start: usize = self.levels[l][..k].iter().map(|n| n.arity as usize).sum();
        start..start + self.levels[l][k].arity as usize
    }

    /// `ln Pr(x | T)`: sum of log rule probabilities over the tree.
    pub fn log_likelihood(&self, g: &Grammar) -> f64 {
        let (lb, lt) = (g.binary_prob().ln(), g.ternary_prob().ln());
        self.levels[..self.depth()]
            .iter()
            .flatten()
            .map(|n| if n.arity == 2 { lb } else { lt })
            .sum()
    }

    /// Checks that every production is a rule of `g`, that child spans tile
    /// their parent and that the leaves spell the sentence.
    pub fn verify(&self, g: &Grammar) -> std::result::Result<(), String> {
        if self.levels.len() != g.depth() + 1 {
            return Err("wrong number of levels".into());
        }
        if self.levels[0].len() != 1 || self.levels[0][0].symbol != self.root {
            return Err("level 0 must hold the root alone".into());
        }
        for l in 0..g.depth() {
            let rules = g.level(l + 1);
            let mut cursor = 0;
            for (k, node) in self.levels[l].iter().enumerate() {
                let kids = &self.levels[l + 1][self.children(l, k)];
                let parent = match kids.len() {
                    2 => rules.binary_parent(kids[0].symbol, kids[1].symbol),
                    3 => rules.ternary_parent(kids[0].symbol, kids[1].symbol, kids[2].symbol),
                    n => return Err(format!("node ({l},{k}) has {n} children")),
                };
                if parent != Some(node.symbol) {
                    return Err(format!("production at ({l},{k}) is not a rule"));
                }
                let mut at = node.start;
                for kid in kids {
                    if kid.start != at {
                        return Err(format!("children of ({l},{k}) are not contiguous"));
                    }
                    at += kid.span;
                }
                if at != node.start + node.span {
                    return Err(format!("children of ({l},{k}) do not cover the parent"));
                }
                cursor += kids.len();
            }
            if cursor != self.levels[l + 1].len() {
                return Err(format!("orphan nodes at level {}", l + 1));
            }
        }
        let leaves = &self.levels[g.depth()];
        if leaves
            .iter()
            .map(|n| n.symbol)
            .ne(self.sentence.iter().copied())
            || leaves.iter().any(|n| n.span != 1 || n.arity != 0)
        {
            return Err("leaves do not spell the sentence".into());
        }
        Ok(())
    }
}

/// Draws a root uniformly, then rewrites level by level: arity 2 with
/// probability `p2` (else 3), then a uniform rule of that arity.
pub fn sample_derivation(g: &Grammar, rng: &mut Rng) -> Derivation {
    let v = g.v();
    let p2 = g.params.p2;
    let root = rng.random_range(0..v) as Symbol;
    let mut symbols: Vec<Vec<Symbol>> = vec![vec![root]];
    let mut arities: Vec<Vec<u8>> = Vec::with_capacity(g.depth() + 1);
    for l in 0..g.depth() {
        let rules = g.level(l + 1);
        let parents = &symbols[l];
        let mut next = Vec::with_capacity(parents.len() * 3);
        let mut ar = Vec::with_capacity(parents.len());
        for &z in parents {
            if rng.random_bool(p2) {
                let options = rules.binary_of(z);
                next.extend_from_slice(&options[rng.random_range(0..options.len())]);
                ar.push(2);
            } else {
                let options = rules.ternary_of(z);
                next.extend_from_slice(&options[rng.random_range(0..options.len())]);
                ar.push(3);
            }
        }
        arities.push(ar);
        symbols.push(next);
    }
    arities.push(vec![0; symbols[g.depth()].len()]);

    // Spans bottom-up, starts top-down.
    let depth = g.depth();
    let mut spans: Vec<Vec<usize>> = vec![Vec::new(); depth + 1];
    spans[depth] = vec![1; symbols[depth].len()];
    for l in (0..depth).rev() {
        let mut cursor = 0;
        spans[l] = arities[l]
            .iter()
            .map(|&a| {
                let s = spans[l + 1][cursor..cursor + a as usize].iter().sum();
                cursor += a as usize;
                s
            })
            .collect();
    }
    let levels = (0..=depth)
        .map(|l| {
            let mut start = 0;
            symbols[l]
                .iter()
                .zip(&spans[l])
                .zip(&arities[l])
                .map(|((&symbol, &span), &arity)| {
                    let n = Node {
                        symbol,
                        start,
                        span,
                        arity,
                    };
                    start += span;
                    n
                })
                .collect()
        })
        .collect();
    let sentence = symbols.pop().unwrap_or_default();
    Derivation {
        root,
        levels,
        sentence,
    }
}

/// A labelled sentence.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Example {
    pub label: Symbol,
    pub tokens: Vec<Symbol>,
}

/// `count` independent labelled sentences; sentence `k` is drawn from
/// `stream.rng(k)`, so the result does not depend on thread scheduling.
pub fn make_dataset(g: &Grammar, count: usize, stream: &SeedStream) -> Result<Vec<Example>> {
    if count == 0 {
        return Err(Error::Params("dataset size must be at least 1".into()));
    }
    Ok((0..count as u64)
        .into_par_iter()
        .map(|k| {
            let d = sample_derivation(g, &mut stream.rng(k));
            Example {
                label: d.root,
                tokens: d.sentence,
            }
        })
        .collect())
}

/// Derivations rather than bare examples, same seeding as [`make_dataset`].
pub fn sample_derivations(g: &Grammar, count: usize, stream: &SeedStream) -> Vec<Derivation> {
    (0..count as u64)
        .into_par_iter()
        .map(|k| sample_derivation(g, &mut stream.rng(k)))
        .collect()
}
