//! Candidate-nonterminal detectors: Boolean inside steps over learned rules.

use crate::chart::{step, token_level, Boolean, FillOptions, LevelTensor};
use crate::grammar::{RuleLevel, Symbol};
use crate::splits::{span_window, Admissible, SplitTables};

/// Learned rule levels applied bottom-up, starting from the tokens.
#[derive(Clone, Debug)]
pub struct Detector {
    v: usize,
    depth: usize,
    /// `levels[k]` rewrites into grammar level `L - k`.
    levels: Vec<RuleLevel>,
    splits: SplitTables,
    /// Indexed by `d - 2^L`.
    admissible: Vec<Admissible>,
}

impl Detector {
    pub fn new(v: usize, depth: usize) -> Self {
        let splits = SplitTables::new(depth);
        let (lo, hi) = span_window(depth);
        let admissible = (lo..=hi).map(|d| Admissible::new(&splits, d)).collect();
        Detector {
            v,
            depth,
            levels: Vec::new(),
            splits,
            admissible,
        }
    }

    pub fn v(&self) -> usize {
        self.v
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Grammar level whose candidate symbols [`Detector::apply`] returns.
    pub fn counted_level(&self) -> usize {
        self.depth - self.levels.len()
    }

    pub fn push(&mut self, rules: RuleLevel) {
        assert!(
            self.levels.len() < self.depth,
            "detector already reaches the root"
        );
        self.levels.push(rules);
    }

    pub fn levels(&self) -> &[RuleLevel] {
        &self.levels
    }

    /// Tree-consistent spans for sentences of length `d`.
    pub fn admissible(&self, d: usize) -> Option<&Admissible> {
        let lo = span_window(self.depth).0;
        d.checked_sub(lo).and_then(|k| self.admissible.get(k))
    }

    /// Boolean tensor of candidate nonterminals at the counted level, or
    /// `None` if a token is out of range.
    pub fn apply(&self, tokens: &[Symbol]) -> Option<LevelTensor<bool>> {
        if tokens.is_empty() || tokens.iter().any(|&t| t as usize >= self.v) {
            return None;
        }
        let mut cells = token_level::<Boolean>(tokens, self.v);
        let opts = FillOptions {
            parallel: false,
            root_only: false,
        };
        for (k, rules) in self.levels.iter().enumerate() {
            cells = step::<Boolean>(rules, true, true, &cells, self.splits.level(k + 1), opts);
        }
        Some(cells)
    }
}
