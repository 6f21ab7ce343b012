//! Root-to-tuple co-occurrence counts and the covariances derived from them.
//!
//! A *slot* is one placement of `s` adjacent spans, all inside the span
//! window of the counted level, at some start position of some sentence.
//! Every slot contributes to the root marginal of its arity; every detected
//! tuple in a slot contributes one count to `N(tuple, α)`. Counts are exact
//! integers, so moments from disjoint shards merge into the moments of the
//! union.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chart::LevelTensor;
use crate::grammar::{Example, Symbol};
use crate::splits::{span_window, Admissible};

use super::detectors::Detector;

/// Dense tables up to this vocabulary size.
pub const DENSE_LIMIT: usize = 32;

#[derive(Clone, Debug, PartialEq)]
enum Store {
    Dense(Vec<u64>),
    Sparse(HashMap<u64, Vec<u64>>),
}

/// Counts `N(tuple, α)` for tuples of one arity.
#[derive(Clone, Debug, PartialEq)]
pub struct CountTable {
    v: usize,
    arity: usize,
    store: Store,
}

impl CountTable {
    pub fn new(v: usize, arity: usize) -> Self {
        let store = if v <= DENSE_LIMIT {
            Store::Dense(vec![0; v.pow(arity as u32) * v])
        } else {
            Store::Sparse(HashMap::new())
        };
        CountTable { v, arity, store }
    }

    pub fn v(&self) -> usize {
        self.v
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn key(&self, tuple: &[Symbol]) -> u64 {
        debug_assert_eq!(tuple.len(), self.arity);
        tuple
            .iter()
            .fold(0u64, |k, &a| k * self.v as u64 + a as u64)
    }

    pub fn tuple(&self, mut key: u64) -> Vec<Symbol> {
        let mut out = vec![0; self.arity];
        for slot in out.iter_mut().rev() {
            *slot = (key % self.v as u64) as Symbol;
            key /= self.v as u64;
        }
        out
    }

    #[inline]
    pub fn add(&mut self, key: u64, root: Symbol) {
        let v = self.v;
        match &mut self.store {
            Store::Dense(d) => d[key as usize * v + root as usize] += 1,
            Store::Sparse(m) => m.entry(key).or_insert_with(|| vec![0; v])[root as usize] += 1,
        }
    }

    /// Per-root counts of `key`, or `None` if the tuple never occurred.
    pub fn counts(&self, key: u64) -> Option<&[u64]> {
        let slice = match &self.store {
            Store::Dense(d) => {
                let b = key as usize * self.v;
                &d[b..b + self.v]
            }
            Store::Sparse(m) => m.get(&key)?,
        };
        slice.iter().any(|&c| c > 0).then_some(slice)
    }

    /// Keys of observed tuples, ascending.
    pub fn keys(&self) -> Vec<u64> {
        let mut keys: Vec<u64> = match &self.store {
            Store::Dense(d) => d
                .chunks(self.v)
                .enumerate()
                .filter(|(_, c)| c.iter().any(|&x| x > 0))
                .map(|(k, _)| k as u64)
                .collect(),
            Store::Sparse(m) => m.keys().copied().collect(),
        };
        keys.sort_unstable();
        keys
    }

    pub fn merge(&mut self, other: &CountTable) {
        assert_eq!((self.v, self.arity), (other.v, other.arity));
        match (&mut self.store, &other.store) {
            (Store::Dense(a), Store::Dense(b)) => a.iter_mut().zip(b).for_each(|(x, y)| *x += y),
            (Store::Sparse(a), Store::Sparse(b)) => {
                for (k, counts) in b {
                    let e = a.entry(*k).or_insert_with(|| vec![0; counts.len()]);
                    e.iter_mut().zip(counts).for_each(|(x, y)| *x += y);
                }
            }
            _ => unreachable!("tables with equal v share a representation"),
        }
    }
}

/// Root co-occurrence counts for singles, pairs and triples at one level.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentTensors {
    /// Grammar level of the counted symbols (`L` for tokens).
    pub level: usize,
    pub v: usize,
    pub n_sentences: u64,
    /// Tables for arity 1, 2 and 3.
    pub tables: [CountTable; 3],
    /// `slots[s-1][α]`: slots of arity `s` in sentences labelled `α`.
    pub slots: [Vec<u64>; 3],
}

impl MomentTensors {
    pub fn new(level: usize, v: usize) -> Self {
        MomentTensors {
            level,
            v,
            n_sentences: 0,
            tables: [
                CountTable::new(v, 1),
                CountTable::new(v, 2),
                CountTable::new(v, 3),
            ],
            slots: [vec![0; v], vec![0; v], vec![0; v]],
        }
    }

    pub fn table(&self, arity: usize) -> &CountTable {
        &self.tables[arity - 1]
    }

    pub fn total_slots(&self, arity: usize) -> u64 {
        self.slots[arity - 1].iter().sum()
    }

    /// `C(tuple, α) = N(tuple, α)/T - (N(tuple)/T)(T_α/T)`; zero if unseen.
    pub fn covariance(&self, tuple: &[Symbol]) -> Vec<f64> {
        let table = self.table(tuple.len());
        match table.counts(table.key(tuple)) {
            Some(c) => self.centered(tuple.len(), c),
            None => vec![0.0; self.v],
        }
    }

    pub fn covariance_of_key(&self, arity: usize, key: u64) -> Vec<f64> {
        match self.table(arity).counts(key) {
            Some(c) => self.centered(arity, c),
            None => vec![0.0; self.v],
        }
    }

    fn centered(&self, arity: usize, counts: &[u64]) -> Vec<f64> {
        let t = self.total_slots(arity) as f64;
        let n: u64 = counts.iter().sum();
        let p = n as f64 / t;
        counts
            .iter()
            .zip(&self.slots[arity - 1])
            .map(|(&c, &s)| c as f64 / t - p * (s as f64 / t))
            .collect()
    }

    pub fn merge(&mut self, other: &MomentTensors) {
        assert_eq!((self.level, self.v), (other.level, other.v));
        self.n_sentences += other.n_sentences;
        for (a, b) in self.tables.iter_mut().zip(&other.tables) {
            a.merge(b);
        }
        for (a, b) in self.slots.iter_mut().zip(&other.slots) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    /// Adds the slots of one sentence's detector tensor. With a mask, only
    /// slots that are one node or one split of a node of some complete tree
    /// are counted.
    pub fn add_sentence(
        &mut self,
        cells: &LevelTensor<bool>,
        d: usize,
        label: Symbol,
        mask: Option<&Admissible>,
    ) {
        let t = cells.reversed_level();
        let (lo, hi) = span_window(t);
        let node = |i: usize, s: usize| mask.is_none_or(|m| m.contains(t, i, s));
        let parent = |i: usize, s: usize| mask.is_none_or(|m| m.contains(t + 1, i, s));
        let support = |i: usize, s: usize| -> Vec<Symbol> {
            cells
                .cell(i, s)
                .iter()
                .enumerate()
                .filter(|(_, &b)| b)
                .map(|(z, _)| z as Symbol)
                .collect()
        };
        // support[i][s - lo]
        let sup: Vec<Vec<Vec<Symbol>>> = (0..d)
            .map(|i| {
                (lo..=hi)
                    .map(|s| {
                        if i + s <= d {
                            support(i, s)
                        } else {
                            Vec::new()
                        }
                    })
                    .collect()
            })
            .collect();
        let at = |i: usize, s: usize| &sup[i][s - lo];
        let root = label as usize;
        self.n_sentences += 1;
        let [t1, t2, t3] = &mut self.tables;
        for i in 0..d {
            for s1 in lo..=hi.min(d - i) {
                if node(i, s1) {
                    self.slots[0][root] += 1;
                    for &a in at(i, s1) {
                        t1.add(a as u64, label);
                    }
                }
                let j = i + s1;
                for s2 in lo..=hi.min(d - j) {
                    let (left, mid) = (at(i, s1), at(j, s2));
                    if parent(i, s1 + s2) {
                        self.slots[1][root] += 1;
                        for &a in left {
                            for &b in mid {
                                t2.add(a as u64 * self.v as u64 + b as u64, label);
                            }
                        }
                    }
                    let k = j + s2;
                    for s3 in lo..=hi.min(d - k) {
                        if !parent(i, s1 + s2 + s3) {
                            continue;
                        }
                        self.slots[2][root] += 1;
                        let right = at(k, s3);
                        if left.is_empty() || mid.is_empty() || right.is_empty() {
                            continue;
                        }
                        for &a in left {
                            for &b in mid {
                                let ab = (a as u64 * self.v as u64 + b as u64) * self.v as u64;
                                for &c in right {
                                    t3.add(ab + c as u64, label);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Which placements of adjacent spans count as slots.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotPolicy {
    /// Every placement inside the span window.
    All,
    /// Placements that are a node or a split of a node in some complete tree.
    #[default]
    Admissible,
}

/// Moments of the level reached by `detector` (tokens if it has no levels),
/// accumulated in parallel shards and merged.
pub fn estimate_moments(
    data: &[Example],
    detector: &Detector,
    policy: SlotPolicy,
) -> MomentTensors {
    let level = detector.counted_level();
    let v = detector.v();
    data.par_chunks(1024)
        .map(|chunk| {
            let mut m = MomentTensors::new(level, v);
            for ex in chunk {
                if let Some(cells) = detector.apply(&ex.tokens) {
                    let d = ex.tokens.len();
                    let mask = match policy {
                        SlotPolicy::All => None,
                        SlotPolicy::Admissible => match detector.admissible(d) {
                            Some(m) => Some(m),
                            None => continue,
                        },
                    };
                    m.add_sentence(&cells, d, ex.label, mask);
                }
            }
            m
        })
        .reduce(
            || MomentTensors::new(level, v),
            |mut a, b| {
                a.merge(&b);
                a
            },
        )
}
