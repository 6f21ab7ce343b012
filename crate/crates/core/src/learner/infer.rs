//! Rule inference from moment tensors: discard, cluster, align.

use serde::{Deserialize, Serialize};

use crate::grammar::Symbol;

use super::cluster::{
    average_linkage, centroids, dot, greedy_match, log_gap_threshold, nearest, norm,
    otsu_threshold, threshold_components, unit,
};
use super::moments::{MomentTensors, SlotPolicy};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterMethod {
    /// Connected components of the cosine graph at `tau`.
    Components,
    /// Average linkage down to `v` clusters; every member must then lie
    /// within cosine `tau` of its centroid.
    #[default]
    AverageLinkage,
}

/// How sibling tuples are told apart from noise by slice norm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discard {
    /// Two-class Otsu split of the log norms.
    Otsu,
    /// Widest gap in the log norms leaving at least `v` tuples above it.
    LogGap,
    /// Fixed absolute norm.
    Absolute(f64),
}

/// Coefficient of the pair slices subtracted from each triple slice.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Whitening {
    /// `1/v`.
    InverseV,
    /// Least-squares fit of the triple slices on their pair slices.
    #[default]
    Fitted,
    Fixed(f64),
    Off,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    pub tau: f64,
    pub method: ClusterMethod,
    pub pair_discard: Discard,
    pub triple_discard: Discard,
    pub whitening: Whitening,
    /// Smallest centroid cosine accepted when aligning ternary to binary clusters.
    pub min_alignment: f64,
    pub slots: SlotPolicy,
    /// Also fail on incoherent pair clusters and weak alignments. Off, only
    /// the cluster count, distinct centroids and one-to-one matching are
    /// enforced.
    pub strict: bool,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            tau: 0.5,
            method: ClusterMethod::default(),
            pair_discard: Discard::LogGap,
            triple_discard: Discard::Otsu,
            whitening: Whitening::Fitted,
            min_alignment: 0.5,
            slots: SlotPolicy::default(),
            strict: false,
        }
    }
}

/// Tuples kept as siblings, their inferred parent and the parent directions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub items: Vec<Vec<Symbol>>,
    pub labels: Vec<Symbol>,
    pub centroids: Vec<Vec<f64>>,
    /// Norm cut that was applied.
    pub threshold: f64,
}

impl ClusterAssignment {
    pub fn rules<const N: usize>(&self) -> Vec<(Symbol, [Symbol; N])> {
        self.items
            .iter()
            .zip(&self.labels)
            .map(|(t, &z)| (z, t.as_slice().try_into().expect("tuple arity")))
            .collect()
    }
}

/// Why a clustering step failed, with what it saw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceFailure {
    pub reason: String,
    /// Slice norms of all observed tuples, descending.
    pub norms: Vec<f64>,
    /// Cosines of the retained directions to their own centroid, ascending.
    pub similarities: Vec<f64>,
}

impl InferenceFailure {
    fn new(reason: impl Into<String>, norms: &[f64]) -> Self {
        let mut norms = norms.to_vec();
        norms.sort_by(|a, b| b.total_cmp(a));
        InferenceFailure {
            reason: reason.into(),
            norms,
            similarities: Vec::new(),
        }
    }
}

fn sorted_similarities(dirs: &[Vec<f64>], labels: &[usize], cents: &[Vec<f64>]) -> Vec<f64> {
    let mut s: Vec<f64> = dirs
        .iter()
        .zip(labels)
        .map(|(d, &l)| dot(d, &cents[l]))
        .collect();
    s.sort_by(f64::total_cmp);
    s
}

/// Keeps tuples whose norm clears the cut; all of them when the norms show
/// no split. Returns `(threshold, kept indices)`.
fn discard(norms: &[f64], rule: Discard, v: usize) -> (f64, Vec<usize>) {
    let t = match rule {
        Discard::Otsu => otsu_threshold(norms),
        Discard::LogGap => log_gap_threshold(norms, v),
        Discard::Absolute(t) => Some(t),
    };
    let t = t.unwrap_or_else(|| {
        norms
            .iter()
            .copied()
            .filter(|&x| x > 0.0)
            .fold(f64::INFINITY, f64::min)
    });
    (
        t,
        (0..norms.len())
            .filter(|&k| norms[k] >= t && norms[k] > 0.0)
            .collect(),
    )
}

/// Pair slices cluster into one group per parent nonterminal.
pub fn infer_binary_rules(
    m: &MomentTensors,
    cfg: &LearnerConfig,
) -> Result<ClusterAssignment, InferenceFailure> {
    let v = m.v;
    let table = m.table(2);
    let keys = table.keys();
    let slices: Vec<Vec<f64>> = keys.iter().map(|&k| m.covariance_of_key(2, k)).collect();
    let norms: Vec<f64> = slices.iter().map(|s| norm(s)).collect();
    let (threshold, kept) = discard(&norms, cfg.pair_discard, v);
    if kept.len() < v {
        return Err(InferenceFailure::new(
            format!("{} pairs kept, need at least {v}", kept.len()),
            &norms,
        ));
    }
    let dirs: Vec<Vec<f64>> = kept
        .iter()
        .map(|&k| unit(&slices[k]).expect("kept slices are nonzero"))
        .collect();
    let labels = match cfg.method {
        ClusterMethod::Components => threshold_components(&dirs, cfg.tau),
        ClusterMethod::AverageLinkage => average_linkage(&dirs, v),
    };
    let n_clusters = labels.iter().max().map_or(0, |m| m + 1);
    if n_clusters != v {
        return Err(InferenceFailure::new(
            format!("{n_clusters} pair clusters, expected {v}"),
            &norms,
        ));
    }
    let cents: Vec<Vec<f64>> = centroids(&dirs, &labels, v)
        .into_iter()
        .map(|c| c.unwrap_or_default())
        .collect();
    let sims = sorted_similarities(&dirs, &labels, &cents);
    if cfg.strict && cfg.method == ClusterMethod::AverageLinkage && sims[0] < cfg.tau {
        let mut f = InferenceFailure::new(
            format!("a pair lies at cosine {:.3} from its centroid", sims[0]),
            &norms,
        );
        f.similarities = sims;
        return Err(f);
    }
    // Coinciding centroids mean the slices do not separate at all. Strict
    // mode also wants every member strictly closest to its own centroid.
    let coincide = (0..v).any(|a| (0..a).any(|b| dot(&cents[a], &cents[b]) >= 1.0 - 1e-12));
    let ambiguous = cfg.strict
        && dirs.iter().zip(&labels).any(|(d, &l)| {
            let own = dot(d, &cents[l]);
            cents
                .iter()
                .enumerate()
                .any(|(k, c)| k != l && dot(d, c) >= own)
        });
    if coincide || ambiguous {
        let mut f = InferenceFailure::new("pair clusters are not separated", &norms);
        f.similarities = sims;
        return Err(f);
    }
    Ok(ClusterAssignment {
        items: kept.iter().map(|&k| table.tuple(keys[k])).collect(),
        labels: labels.iter().map(|&l| l as Symbol).collect(),
        centroids: cents,
        threshold,
    })
}

/// `C3(abc) - κ (C2(ab) + C2(bc))`.
pub fn whiten(m: &MomentTensors, triple: &[Symbol], kappa: f64) -> Vec<f64> {
    let c3 = m.covariance(triple);
    let ab = m.covariance(&triple[..2]);
    let bc = m.covariance(&triple[1..]);
    c3.iter()
        .zip(ab.iter().zip(&bc))
        .map(|(x, (p, q))| x - kappa * (p + q))
        .collect()
}

/// Least-squares `κ` over all observed triples; zero when the raw slice
/// norms show no noise mode, since then nothing is contaminated.
pub fn fitted_kappa(m: &MomentTensors) -> f64 {
    let table = m.table(3);
    let raw: Vec<(Vec<Symbol>, Vec<f64>)> = table
        .keys()
        .into_iter()
        .map(|key| {
            let t = table.tuple(key);
            let c3 = m.covariance(&t);
            (t, c3)
        })
        .collect();
    let norms: Vec<f64> = raw.iter().map(|(_, c)| norm(c)).collect();
    if otsu_threshold(&norms).is_none() {
        return 0.0;
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (t, c3) in &raw {
        let s: Vec<f64> = m
            .covariance(&t[..2])
            .iter()
            .zip(m.covariance(&t[1..]))
            .map(|(a, b)| a + b)
            .collect();
        num += dot(c3, &s);
        den += dot(&s, &s);
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

pub fn whitening_coefficient(m: &MomentTensors, w: Whitening) -> f64 {
    match w {
        Whitening::InverseV => 1.0 / m.v as f64,
        Whitening::Fitted => fitted_kappa(m),
        Whitening::Fixed(k) => k,
        Whitening::Off => 0.0,
    }
}

/// Whitened triple slices split into siblings and noise by norm, then
/// grouped by refining the binary centroids and matched one-to-one to them.
/// Triples whose direction stays below cosine `tau` to every centroid are
/// dropped as noise.
pub fn infer_ternary_rules(
    m: &MomentTensors,
    binary: &ClusterAssignment,
    cfg: &LearnerConfig,
) -> Result<ClusterAssignment, InferenceFailure> {
    let v = m.v;
    let kappa = whitening_coefficient(m, cfg.whitening);
    let table = m.table(3);
    let keys = table.keys();
    let tuples: Vec<Vec<Symbol>> = keys.iter().map(|&k| table.tuple(k)).collect();
    let slices: Vec<Vec<f64>> = tuples.iter().map(|t| whiten(m, t, kappa)).collect();
    let norms: Vec<f64> = slices.iter().map(|s| norm(s)).collect();
    let (threshold, kept) = discard(&norms, cfg.triple_discard, v);
    if kept.len() < v {
        return Err(InferenceFailure::new(
            format!("{} triples kept, need at least {v}", kept.len()),
            &norms,
        ));
    }
    let dirs: Vec<Vec<f64>> = kept
        .iter()
        .map(|&k| unit(&slices[k]).expect("kept slices are nonzero"))
        .collect();

    // Refine from the binary centroids; directions farther than `tau` from
    // every centroid are noise and drop out of the assignment.
    let mut cents = binary.centroids.clone();
    let assign = |cents: &[Vec<f64>]| -> Vec<Option<usize>> {
        dirs.iter()
            .map(|d| {
                let (z, s) = nearest(d, cents);
                (s >= cfg.tau).then_some(z)
            })
            .collect()
    };
    let mut labels = assign(&cents);
    for _ in 0..100 {
        let members: Vec<usize> = (0..dirs.len()).filter(|&k| labels[k].is_some()).collect();
        let sub: Vec<Vec<f64>> = members.iter().map(|&k| dirs[k].clone()).collect();
        let sub_labels: Vec<usize> = members.iter().map(|&k| labels[k].unwrap()).collect();
        let fresh = centroids(&sub, &sub_labels, v);
        if fresh.iter().any(Option::is_none) {
            return Err(InferenceFailure::new(
                "an inferred ternary cluster is empty",
                &norms,
            ));
        }
        cents = fresh.into_iter().map(Option::unwrap).collect();
        let next = assign(&cents);
        if next == labels {
            break;
        }
        labels = next;
    }
    let members: Vec<usize> = (0..dirs.len()).filter(|&k| labels[k].is_some()).collect();
    let labels: Vec<usize> = members.iter().map(|&k| labels[k].unwrap()).collect();
    let dirs: Vec<Vec<f64>> = members.iter().map(|&k| dirs[k].clone()).collect();
    let kept: Vec<usize> = members.iter().map(|&k| kept[k]).collect();
    let matched = greedy_match(&cents, &binary.centroids);
    let mut relabel = vec![0usize; v];
    for (a, m) in matched.iter().enumerate() {
        match m {
            Some((b, s)) if *s >= cfg.min_alignment || !cfg.strict => relabel[a] = *b,
            Some((_, s)) => {
                let mut f = InferenceFailure::new(
                    format!("ternary cluster aligns at cosine {s:.3}"),
                    &norms,
                );
                f.similarities = sorted_similarities(&dirs, &labels, &cents);
                return Err(f);
            }
            None => {
                return Err(InferenceFailure::new(
                    "ternary alignment is not one-to-one",
                    &norms,
                ))
            }
        }
    }
    let mut aligned = vec![Vec::new(); v];
    for (a, c) in cents.into_iter().enumerate() {
        aligned[relabel[a]] = c;
    }
    Ok(ClusterAssignment {
        items: kept.iter().map(|&k| tuples[k].clone()).collect(),
        labels: labels.iter().map(|&l| relabel[l] as Symbol).collect(),
        centroids: aligned,
        threshold,
    })
}
