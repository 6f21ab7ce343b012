#![allow(dead_code)]

use std::collections::HashMap;

use rhm::{Example, Grammar, Symbol};

/// Every sentence of `g` with `Pr(x | α)` for each root `α`, by summing over
/// all parse trees.
pub fn enumerate_support(g: &Grammar) -> HashMap<Vec<Symbol>, Vec<f64>> {
    fn expand(g: &Grammar, l: usize, z: Symbol) -> Vec<(Vec<Symbol>, f64)> {
        if l > g.depth() {
            return vec![(vec![z], 1.0)];
        }
        let rules = g.level(l);
        let (pb, pt) = (g.binary_prob(), g.ternary_prob());
        let mut out = Vec::new();
        for t in rules.binary_of(z) {
            for (x, px) in expand(g, l + 1, t[0]) {
                for (y, py) in expand(g, l + 1, t[1]) {
                    out.push(([x.clone(), y].concat(), pb * px * py));
                }
            }
        }
        for t in rules.ternary_of(z) {
            for (x, px) in expand(g, l + 1, t[0]) {
                for (y, py) in expand(g, l + 1, t[1]) {
                    for (u, pu) in expand(g, l + 1, t[2]) {
                        out.push(([x.clone(), y.clone(), u].concat(), pt * px * py * pu));
                    }
                }
            }
        }
        out
    }
    let mut table: HashMap<Vec<Symbol>, Vec<f64>> = HashMap::new();
    for z in 0..g.v() as Symbol {
        for (x, p) in expand(g, 1, z) {
            table.entry(x).or_insert_with(|| vec![0.0; g.v()])[z as usize] += p;
        }
    }
    table
}

/// Largest relative deviation of the inside root probabilities from the
/// enumeration over the whole support.
pub fn inside_oracle_error(g: &Grammar, log: bool) -> f64 {
    use rhm::inside::{inside_with, InsideOptions, Representation};
    let splits = rhm::splits::SplitTables::new(g.depth());
    let representation = if log {
        Representation::Log
    } else {
        Representation::Linear
    };
    let opts = InsideOptions {
        representation,
        ..InsideOptions::default()
    };
    let mut worst = 0.0f64;
    for (x, probs) in enumerate_support(g) {
        let chart = inside_with(g, &x, &splits, opts).unwrap();
        let cell = chart.chart().root_cell();
        let got: Vec<f64> = if chart.is_log() {
            cell.iter().map(|l| l.exp()).collect()
        } else {
            cell.to_vec()
        };
        for (got, want) in got.iter().zip(&probs) {
            let err = match (*got, *want) {
                (0.0, 0.0) => 0.0,
                (_, 0.0) => f64::INFINITY,
                (a, b) => (a - b).abs() / b,
            };
            worst = worst.max(err);
        }
    }
    worst
}

/// Every derivation of `g` with an integer weight proportional to its
/// probability (`p2 = p3 = 1/2`).
pub fn support(g: &Grammar) -> Vec<(Example, u64)> {
    let (m2, m3) = (g.params().m2 as u64, g.params().m3 as u64);
    // A node of arity 2 has probability m3 / (2 m2 m3), of arity 3 m2 / (2 m2 m3).
    fn expand(g: &Grammar, l: usize, z: Symbol, w: (u64, u64)) -> Vec<(Vec<Symbol>, u64, u32)> {
        if l > g.depth() {
            return vec![(vec![z], 1, 0)];
        }
        let rules = g.level(l);
        let mut out = Vec::new();
        for t in rules.binary_of(z) {
            for (x, wx, nx) in expand(g, l + 1, t[0], w) {
                for (y, wy, ny) in expand(g, l + 1, t[1], w) {
                    out.push(([x.clone(), y].concat(), w.0 * wx * wy, 1 + nx + ny));
                }
            }
        }
        for t in rules.ternary_of(z) {
            for (x, wx, nx) in expand(g, l + 1, t[0], w) {
                for (y, wy, ny) in expand(g, l + 1, t[1], w) {
                    for (u, wu, nu) in expand(g, l + 1, t[2], w) {
                        out.push((
                            [x.clone(), y.clone(), u].concat(),
                            w.1 * wx * wy * wu,
                            1 + nx + ny + nu,
                        ));
                    }
                }
            }
        }
        out
    }
    let max_nodes = (3u32.pow(g.depth() as u32) - 1) / 2;
    let mut out = Vec::new();
    for z in 0..g.v() as Symbol {
        for (tokens, w, nodes) in expand(g, 1, z, (m3, m2)) {
            let pad = (2 * m2 * m3).pow(max_nodes - nodes);
            out.push((Example { label: z, tokens }, w * pad));
        }
    }
    out
}

pub fn population(g: &Grammar) -> Vec<Example> {
    support(g)
        .into_iter()
        .flat_map(|(ex, w)| std::iter::repeat_n(ex, w as usize))
        .collect()
}
