use proptest::prelude::*;
use rhm::grammar::make_dataset;
use rhm::learner::log_grid;
use rhm::snr::*;
use rhm::*;

fn grammar(v: usize, depth: usize, m2: usize, m3: usize, seed: u64) -> Grammar {
    Grammar::generate(&GrammarParams::new(v, depth, m2, m3, seed)).unwrap()
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    idx.iter()
        .enumerate()
        .for_each(|(rank, &i)| r[i] = rank as f64);
    r
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let d2: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - y).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

#[test]
fn anchor_follows_mean_arity() {
    assert_eq!(anchor(&grammar(4, 2, 1, 4, 0)), 3);
    assert_eq!(anchor(&grammar(4, 3, 1, 4, 0)), 7);
    let skewed = Grammar::generate(&GrammarParams::new(4, 2, 1, 4, 0).with_branching(0.9)).unwrap();
    assert_eq!(anchor(&skewed), 2);
}

#[test]
fn inverse_snr_decreases_with_sample_size() {
    for (v, seed) in [(6, 1), (8, 2), (10, 3)] {
        let g = grammar(v, 2, 1, v, seed);
        let grid = log_grid(100, 100_000, 7);
        let curve = empirical_snr(&g, &grid, 20.0, seed).unwrap();
        let p: Vec<f64> = curve.points.iter().map(|q| q.p as f64).collect();
        let y: Vec<f64> = curve.points.iter().map(|q| q.mean_inv_snr).collect();
        assert!(spearman(&p, &y) <= -0.9, "v={v}: {y:?}");
        let slope = curve.log_slope();
        assert!((slope + 1.0).abs() < 0.3, "v={v}: slope {slope}");
    }
}

#[test]
fn excluded_triples_vanish_as_p_grows() {
    let g = grammar(8, 2, 2, 16, 4);
    let curve = empirical_snr(&g, &log_grid(20, 50_000, 8), 10.0, 4).unwrap();
    let excluded: Vec<usize> = curve.points.iter().map(|q| q.n_triples_excluded).collect();
    assert!(excluded[0] > 0);
    assert!(excluded.windows(2).all(|w| w[1] <= w[0]), "{excluded:?}");
    assert_eq!(*excluded.last().unwrap(), 0);
    assert_eq!(curve.n_unseen_reference, 0);
}

#[test]
fn the_reference_itself_has_no_noise() {
    let g = grammar(6, 2, 1, 6, 5);
    let data = SeedStream::new(5, StreamKind::Data);
    let mut reference = TripleCounts::new(&g);
    reference.add_range(&g, &data, 0..4000);
    let curve = snr_curve(&g, &[1000, 4000], &reference, &data).unwrap();
    assert!(curve.points[0].mean_inv_snr > 0.0);
    assert_eq!(curve.points[1].mean_inv_snr, 0.0);
}

#[test]
fn counts_match_the_training_stream() {
    let g = grammar(5, 2, 2, 10, 6);
    let stream = SeedStream::new(6, StreamKind::Data);
    let mut by_range = TripleCounts::new(&g);
    by_range.add_range(&g, &stream, 0..3000);
    let mut by_hand = TripleCounts::new(&g);
    for ex in make_dataset(&g, 3000, &stream).unwrap() {
        by_hand.add(&ex.tokens, ex.label);
    }
    assert_eq!(by_range, by_hand);
    let short = make_dataset(&g, 3000, &stream)
        .unwrap()
        .iter()
        .filter(|e| e.tokens.len() < 5)
        .count();
    assert_eq!(by_range.n_short, short as u64);
}

#[test]
fn grids_must_increase() {
    let g = grammar(4, 2, 1, 4, 7);
    let reference = TripleCounts::new(&g);
    let data = SeedStream::new(7, StreamKind::Data);
    assert!(snr_curve(&g, &[], &reference, &data).is_err());
    assert!(snr_curve(&g, &[10, 10], &reference, &data).is_err());
    assert!(snr_curve(&g, &[0, 10], &reference, &data).is_err());
}

#[test]
fn crossing_boundaries_are_flagged() {
    let grid = [100.0, 1000.0, 10000.0];
    let p = extract_p_star(&grid, &[0.4, 0.2, 0.1], 0.5);
    assert_eq!((p.p_star, p.crossing), (Some(100.0), Crossing::BelowGrid));
    let p = extract_p_star(&grid, &[4.0, 2.0, 1.0], 0.5);
    assert_eq!((p.p_star, p.crossing), (None, Crossing::AboveGrid));
    let p = extract_p_star(&grid, &[f64::NAN, 2.0, 0.25], 0.5);
    assert_eq!(p.crossing, Crossing::Within);
    assert!(p.p_star.unwrap() > 1000.0 && p.p_star.unwrap() < 10000.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn merged_counts_equal_one_pass(seed in any::<u64>(), split in 1u64..400) {
        let g = grammar(4, 2, 2, 6, seed);
        let stream = SeedStream::new(seed, StreamKind::Data);
        let mut whole = TripleCounts::new(&g);
        whole.add_range(&g, &stream, 0..400);
        let mut a = TripleCounts::new(&g);
        a.add_range(&g, &stream, 0..split);
        let mut b = TripleCounts::new(&g);
        b.add_range(&g, &stream, split..400);
        a.merge(&b);
        prop_assert_eq!(a, whole);
    }

    #[test]
    fn higher_thresholds_never_cross_later(values in proptest::collection::vec(0.01f64..10.0, 2..12), t in 0.05f64..5.0) {
        let mut values = values;
        values.sort_by(|a, b| b.total_cmp(a));
        let grid: Vec<f64> = (0..values.len()).map(|k| 100.0 * 2f64.powi(k as i32)).collect();
        let low = extract_p_star(&grid, &values, t);
        let high = extract_p_star(&grid, &values, 2.0 * t);
        if let (Some(a), Some(b)) = (low.p_star, high.p_star) {
            prop_assert!(b <= a * (1.0 + 1e-12));
        }
        prop_assert!(!(low.p_star.is_some() && high.p_star.is_none()));
    }
}
