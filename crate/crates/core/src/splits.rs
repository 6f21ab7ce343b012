//! Admissible binary and ternary splits for layered span charts.
//!
//! At reversed level `t` (tokens are `t = 0`, the root `t = L`) spans lie in
//! `[2^t, 3^t]`. A split of a level-`t` span must put every child span in the
//! level-`(t-1)` window. For a fixed span and first child `q`, the admissible
//! second children `r` form an interval, so ternary splits are stored as runs.

/// Span window `[2^t, 3^t]` at reversed level `t`.
pub fn span_window(t: usize) -> (usize, usize) {
    (1 << t, 3usize.pow(t as u32))
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct TernaryRun {
    q: u32,
    r_lo: u32,
    r_hi: u32,
}

#[derive(Clone, Debug)]
pub struct LevelSplits {
    span_min: usize,
    span_max: usize,
    child_min: usize,
    child_max: usize,
    binary: Vec<Vec<u32>>,
    ternary: Vec<Vec<TernaryRun>>,
    ternary_counts: Vec<usize>,
}

impl LevelSplits {
    fn new(t: usize) -> Self {
        let (span_min, span_max) = span_window(t);
        let (child_min, child_max) = span_window(t - 1);
        let mut binary = Vec::with_capacity(span_max - span_min + 1);
        let mut ternary = Vec::with_capacity(span_max - span_min + 1);
        let mut ternary_counts = Vec::with_capacity(span_max - span_min + 1);
        for span in span_min..=span_max {
            let lo = child_min.max(span.saturating_sub(child_max));
            let hi = child_max.min(span.saturating_sub(child_min));
            binary.push((lo..=hi).map(|q| q as u32).collect());

            let mut runs = Vec::new();
            let mut count = 0;
            for q in child_min..=child_max {
                if q + 2 * child_min > span {
                    break;
                }
                let rest = span - q;
                let r_lo = child_min.max(rest.saturating_sub(child_max));
                let r_hi = child_max.min(rest - child_min);
                if r_lo <= r_hi {
                    count += r_hi - r_lo + 1;
                    runs.push(TernaryRun {
                        q: q as u32,
                        r_lo: r_lo as u32,
                        r_hi: r_hi as u32,
                    });
                }
            }
            ternary.push(runs);
            ternary_counts.push(count);
        }
        LevelSplits {
            span_min,
            span_max,
            child_min,
            child_max,
            binary,
            ternary,
            ternary_counts,
        }
    }

    pub fn span_range(&self) -> (usize, usize) {
        (self.span_min, self.span_max)
    }

    pub fn child_range(&self) -> (usize, usize) {
        (self.child_min, self.child_max)
    }

    /// First-child lengths `q` of the admissible binary splits of `span`.
    pub fn binary(&self, span: usize) -> &[u32] {
        match self.offset(span) {
            Some(k) => &self.binary[k],
            None => &[],
        }
    }

    /// Admissible ternary splits `(q, r)` of `span`, in lexicographic order.
    pub fn ternary(&self, span: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let runs: &[TernaryRun] = match self.offset(span) {
            Some(k) => &self.ternary[k],
            None => &[],
        };
        runs.iter()
            .flat_map(|run| (run.r_lo..=run.r_hi).map(move |r| (run.q as usize, r as usize)))
    }

    pub fn n_binary(&self, span: usize) -> usize {
        self.binary(span).len()
    }

    pub fn n_ternary(&self, span: usize) -> usize {
        self.offset(span).map_or(0, |k| self.ternary_counts[k])
    }

    fn offset(&self, span: usize) -> Option<usize> {
        (self.span_min..=self.span_max)
            .contains(&span)
            .then(|| span - self.span_min)
    }
}

/// Split tables for every reversed level `1..=L`.
#[derive(Clone, Debug)]
pub struct SplitTables {
    depth: usize,
    levels: Vec<LevelSplits>,
}

impl SplitTables {
    pub fn new(depth: usize) -> Self {
        assert!(depth >= 1, "split tables need depth >= 1");
        SplitTables {
            depth,
            levels: (1..=depth).map(LevelSplits::new).collect(),
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Splits used to build reversed level `t` (`1 <= t <= L`) from level `t-1`.
    pub fn level(&self, t: usize) -> &LevelSplits {
        &self.levels[t - 1]
    }
}

/// Spans `(i, λ)` at each reversed level that lie on at least one complete
/// depth-`L` tree over a sentence of `d` tokens.
#[derive(Clone, Debug)]
pub struct Admissible {
    d: usize,
    /// `levels[t][i * n_spans(t) + λ - 2^t]`.
    levels: Vec<Vec<bool>>,
}

impl Admissible {
    pub fn new(tables: &SplitTables, d: usize) -> Self {
        let depth = tables.depth();
        let mut levels: Vec<Vec<bool>> = (0..=depth)
            .map(|t| {
                let (lo, hi) = span_window(t);
                vec![false; d * (hi - lo + 1)]
            })
            .collect();
        let index = |t: usize, i: usize, s: usize| {
            let (lo, hi) = span_window(t);
            i * (hi - lo + 1) + s - lo
        };
        let (lo, hi) = span_window(depth);
        if (lo..=hi).contains(&d) {
            levels[depth][index(depth, 0, d)] = true;
        }
        for t in (1..=depth).rev() {
            let (lo, hi) = span_window(t);
            let splits = tables.level(t);
            for i in 0..d {
                for s in lo..=hi.min(d - i) {
                    if !levels[t][index(t, i, s)] {
                        continue;
                    }
                    for &q in splits.binary(s) {
                        let q = q as usize;
                        levels[t - 1][index(t - 1, i, q)] = true;
                        levels[t - 1][index(t - 1, i + q, s - q)] = true;
                    }
                    for (q, r) in splits.ternary(s) {
                        levels[t - 1][index(t - 1, i, q)] = true;
                        levels[t - 1][index(t - 1, i + q, r)] = true;
                        levels[t - 1][index(t - 1, i + q + r, s - q - r)] = true;
                    }
                }
            }
        }
        Admissible { d, levels }
    }

    pub fn sentence_len(&self) -> usize {
        self.d
    }

    pub fn contains(&self, t: usize, i: usize, s: usize) -> bool {
        let (lo, hi) = span_window(t);
        (lo..=hi).contains(&s) && i + s <= self.d && self.levels[t][i * (hi - lo + 1) + s - lo]
    }
}
