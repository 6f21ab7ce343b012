//! Small deterministic clustering helpers for covariance directions.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `a / |a|`, or `None` for the zero vector.
pub fn unit(a: &[f64]) -> Option<Vec<f64>> {
    let n = norm(a);
    (n > 0.0 && n.is_finite()).then(|| a.iter().map(|x| x / n).collect())
}

fn sorted_logs(values: &[f64]) -> Vec<f64> {
    let mut logs: Vec<f64> = values
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|x| x.ln())
        .collect();
    logs.sort_by(f64::total_cmp);
    logs
}

/// Smallest ratio between the geometric means of the two Otsu classes for
/// the split to count as two modes.
pub const MIN_MODE_RATIO: f64 = 2.0;

/// Index `k` of the Otsu cut between `logs[k-1]` and `logs[k]`, if the
/// classes are [`MIN_MODE_RATIO`] apart.
fn otsu_split(logs: &[f64]) -> Option<usize> {
    let n = logs.len();
    let total: f64 = logs.iter().sum();
    let mut below = 0.0;
    let mut best: Option<(f64, usize, f64)> = None;
    for k in 1..n {
        below += logs[k - 1];
        if logs[k] == logs[k - 1] {
            continue;
        }
        let w0 = k as f64 / n as f64;
        let m0 = below / k as f64;
        let m1 = (total - below) / (n - k) as f64;
        let score = w0 * (1.0 - w0) * (m0 - m1).powi(2);
        if best.is_none_or(|(s, _, _)| score > s) {
            best = Some((score, k, m1 - m0));
        }
    }
    best.filter(|&(_, _, sep)| sep >= MIN_MODE_RATIO.ln())
        .map(|(_, k, _)| k)
}

/// Two-class Otsu split of `ln(values)`: the cut maximizing between-class
/// variance, returned on the original scale as the geometric midpoint of the
/// two values it falls between. `None` when there are not two modes.
pub fn otsu_threshold(values: &[f64]) -> Option<f64> {
    let logs = sorted_logs(values);
    otsu_split(&logs).map(|k| ((logs[k - 1] + logs[k]) / 2.0).exp())
}

/// Widest gap between consecutive sorted `ln(values)` at or above the Otsu
/// cut that still leaves at least `min_above` values above it. Otsu alone
/// splits inside the lower mode when the upper one is small; the lower tail
/// of near-zero values has wide gaps of its own, hence the Otsu floor.
pub fn log_gap_threshold(values: &[f64], min_above: usize) -> Option<f64> {
    let logs = sorted_logs(values);
    let n = logs.len();
    let start = otsu_split(&logs)?;
    let mut best: Option<(f64, usize)> = None;
    for k in start..n {
        if n - k < min_above.max(1) {
            break;
        }
        let g = logs[k] - logs[k - 1];
        if best.is_none_or(|(b, _)| g > b) {
            best = Some((g, k));
        }
    }
    best.filter(|(g, _)| *g > 0.0)
        .map(|(_, k)| ((logs[k - 1] + logs[k]) / 2.0).exp())
}

/// Connected components of the graph joining unit vectors whose cosine is at
/// least `tau`. Components are numbered by their first member.
pub fn threshold_components(dirs: &[Vec<f64>], tau: f64) -> Vec<usize> {
    let n = dirs.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for i in 0..n {
        for j in 0..i {
            if dot(&dirs[i], &dirs[j]) >= tau {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    renumber(&roots)
}

/// Average-linkage agglomeration of unit vectors down to `k` clusters
/// (cosine similarity). Ties merge the lowest-indexed pair.
pub fn average_linkage(dirs: &[Vec<f64>], k: usize) -> Vec<usize> {
    let n = dirs.len();
    let mut sim = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..i {
            let s = dot(&dirs[i], &dirs[j]);
            sim[i][j] = s;
            sim[j][i] = s;
        }
    }
    let mut size = vec![1usize; n];
    let mut alive = vec![true; n];
    let mut owner: Vec<usize> = (0..n).collect();
    for _ in k..n {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            for j in i + 1..n {
                if alive[j] && best.is_none_or(|(s, _, _)| sim[i][j] > s) {
                    best = Some((sim[i][j], i, j));
                }
            }
        }
        let Some((_, i, j)) = best else { break };
        for c in 0..n {
            if alive[c] && c != i && c != j {
                let s = (size[i] as f64 * sim[i][c] + size[j] as f64 * sim[j][c])
                    / (size[i] + size[j]) as f64;
                sim[i][c] = s;
                sim[c][i] = s;
            }
        }
        size[i] += size[j];
        alive[j] = false;
        owner.iter_mut().filter(|o| **o == j).for_each(|o| *o = i);
    }
    renumber(&owner)
}

/// Relabels arbitrary ids to `0, 1, ...` in order of first appearance.
fn renumber(ids: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    ids.iter()
        .map(|id| {
            let next = map.len();
            *map.entry(*id).or_insert(next)
        })
        .collect()
}

/// Normalized mean direction of each label; `None` for empty clusters.
pub fn centroids(dirs: &[Vec<f64>], labels: &[usize], k: usize) -> Vec<Option<Vec<f64>>> {
    let dim = dirs.first().map_or(0, Vec::len);
    let mut sums = vec![vec![0.0; dim]; k];
    for (d, &l) in dirs.iter().zip(labels) {
        sums[l].iter_mut().zip(d).for_each(|(s, x)| *s += x);
    }
    sums.iter().map(|s| unit(s)).collect()
}

/// Index of the most similar centroid, first on ties.
pub fn nearest(dir: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    centroids
        .iter()
        .enumerate()
        .map(|(k, c)| (k, dot(dir, c)))
        .fold((0, f64::NEG_INFINITY), |best, cur| {
            if cur.1 > best.1 {
                cur
            } else {
                best
            }
        })
}

/// Greedy one-to-one matching by decreasing cosine. `result[a] = b` pairs
/// row `a` of `from` with row `b` of `to`, together with the cosine.
pub fn greedy_match(from: &[Vec<f64>], to: &[Vec<f64>]) -> Vec<Option<(usize, f64)>> {
    let mut cand: Vec<(f64, usize, usize)> = Vec::with_capacity(from.len() * to.len());
    for (a, x) in from.iter().enumerate() {
        for (b, y) in to.iter().enumerate() {
            cand.push((dot(x, y), a, b));
        }
    }
    cand.sort_by(|p, q| q.0.total_cmp(&p.0).then(p.1.cmp(&q.1)).then(p.2.cmp(&q.2)));
    let mut out = vec![None; from.len()];
    let mut used = vec![false; to.len()];
    for (s, a, b) in cand {
        if out[a].is_none() && !used[b] {
            out[a] = Some((b, s));
            used[b] = true;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn otsu_splits_two_modes() {
        let v = [1e-6, 2e-6, 1.5e-6, 1e-3, 2e-3, 3e-3];
        let t = otsu_threshold(&v).unwrap();
        assert!(t > 2e-6 && t < 1e-3);
        assert!(otsu_threshold(&[1.0]).is_none());
        assert!(otsu_threshold(&[2.0, 2.0]).is_none());
        assert!(otsu_threshold(&[1.0, 1.2, 1.1, 1.5]).is_none());
    }

    #[test]
    fn log_gap_respects_minimum_count() {
        // Broad noise over two decades, two signals well above it.
        let mut v: Vec<f64> = (0..60)
            .map(|k| 1e-6 * 100f64.powf(k as f64 / 59.0))
            .collect();
        v.extend([3e-3, 4e-3]);
        let t = log_gap_threshold(&v, 2).unwrap();
        assert!(t > 2e-4 && t < 3e-3);
        // Needing more survivors moves the cut into the noise.
        let t = log_gap_threshold(&v, 5).unwrap();
        assert!(t < 2e-4);
        assert!(log_gap_threshold(&v, 100).is_none());
    }

    #[test]
    fn components_and_linkage_agree_on_clean_clusters() {
        let dirs: Vec<Vec<f64>> = [
            [1.0, 0.1, 0.0],
            [0.0, 1.0, 0.1],
            [1.0, 0.0, 0.1],
            [0.1, 1.0, 0.0],
            [0.0, 0.0, 1.0],
        ]
        .iter()
        .map(|d| unit(d).unwrap())
        .collect();
        let expected = vec![0, 1, 0, 1, 2];
        assert_eq!(threshold_components(&dirs, 0.5), expected);
        assert_eq!(average_linkage(&dirs, 3), expected);
    }

    #[test]
    fn greedy_match_is_one_to_one() {
        let a = vec![vec![1.0, 0.0], vec![0.8, 0.6]];
        let b = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let m = greedy_match(&a, &b);
        assert_eq!(m[0].unwrap().0, 1);
        assert_eq!(m[1].unwrap().0, 0);
    }
}
