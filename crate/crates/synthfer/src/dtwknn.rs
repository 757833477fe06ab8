//! Dynamic-time-warping distance and the KNN baseline classifier.

use serde::{Deserialize, Serialize};

use crate::dataio::LabeledSequence;
use crate::error::{Error, Result};
use crate::signalgen::{EmotionLabel, NUM_CHANNELS, NUM_CLASSES};

/// DTW parameters. The local cost is fixed to the Euclidean distance
/// between 14-channel frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DtwConfig {
    /// Optional Sakoe-Chiba window width, counted in diagonals: `band = 1`
    /// restricts the alignment to the main diagonal, `band = 2` allows one
    /// cell of deviation, and so on. For unequal lengths the window is
    /// widened to `|Ta - Tb|` when necessary so the end cell stays
    /// reachable. `None` leaves the alignment unconstrained.
    pub band: Option<usize>,
}

impl DtwConfig {
    pub fn unconstrained() -> DtwConfig {
        DtwConfig { band: None }
    }

    pub fn banded(band: usize) -> DtwConfig {
        DtwConfig { band: Some(band) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.band == Some(0) {
            return Err(Error::Validation("DTW band must be at least 1".into()));
        }
        Ok(())
    }
}

fn local_cost(a: &[f32; NUM_CHANNELS], b: &[f32; NUM_CHANNELS]) -> f64 {
    let mut sum = 0.0f64;
    for c in 0..NUM_CHANNELS {
        let d = a[c] as f64 - b[c] as f64;
        sum += d * d;
    }
    sum.sqrt()
}

/// Dynamic-time-warping distance between two sequences.
///
/// Standard DP over the cost matrix `c(i,j) = ||a_i - b_j||` with
/// `D(i,j) = c(i,j) + min(D(i-1,j), D(i,j-1), D(i-1,j-1))`, accumulated in
/// f64. Symmetric in its arguments and zero iff the sequences are
/// elementwise equal.
pub fn dtw_distance(
    a: &[[f32; NUM_CHANNELS]],
    b: &[[f32; NUM_CHANNELS]],
    cfg: &DtwConfig,
) -> Result<f64> {
    cfg.validate()?;
    if a.is_empty() || b.is_empty() {
        return Err(Error::Validation("DTW requires non-empty sequences".into()));
    }
    let (ta, tb) = (a.len(), b.len());
    let gap = ta.abs_diff(tb);
    let width = match cfg.band {
        Some(band) => {
            if band < gap {
                return Err(Error::InfeasibleBand { band, gap });
            }
            // The corner cell sits |Ta-Tb| off the diagonal; widen the
            // window to reach it when the band alone is too narrow.
            (band - 1).max(gap)
        }
        None => ta.max(tb),
    };

    let mut prev = vec![f64::INFINITY; tb];
    let mut curr = vec![f64::INFINITY; tb];
    for (i, a_frame) in a.iter().enumerate() {
        curr.fill(f64::INFINITY);
        let j_lo = i.saturating_sub(width);
        let j_hi = (i + width).min(tb - 1);
        for j in j_lo..=j_hi {
            let c = local_cost(a_frame, &b[j]);
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let mut m = f64::INFINITY;
                if i > 0 {
                    m = m.min(prev[j]);
                }
                if j > 0 {
                    m = m.min(curr[j - 1]);
                }
                if i > 0 && j > 0 {
                    m = m.min(prev[j - 1]);
                }
                m
            };
            curr[j] = c + best;
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    Ok(prev[tb - 1])
}

/// Classifies a query by majority vote among its `k` nearest training
/// sequences under DTW.
///
/// Neighbor selection and vote ties are fully content-deterministic:
/// neighbors sort by (distance, label order, id), vote ties break by the
/// smaller summed neighbor distance and then by label enumeration order.
pub fn knn_classify(
    train: &[&LabeledSequence],
    query: &LabeledSequence,
    k: usize,
    cfg: &DtwConfig,
) -> Result<EmotionLabel> {
    if train.is_empty() {
        return Err(Error::Validation("KNN requires a non-empty training set".into()));
    }
    if k == 0 || k > train.len() {
        return Err(Error::Validation(format!(
            "k = {k} outside [1, {}]",
            train.len()
        )));
    }

    let mut scored: Vec<(f64, usize, &LabeledSequence)> = train
        .iter()
        .map(|seq| Ok((dtw_distance(&seq.values, &query.values, cfg)?, seq.label.index(), *seq)))
        .collect::<Result<_>>()?;
    scored.sort_by(|x, y| {
        x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.id.cmp(&y.2.id))
    });

    let mut votes = [0usize; NUM_CLASSES];
    let mut summed = [0.0f64; NUM_CLASSES];
    for (dist, label_idx, _) in &scored[..k] {
        votes[*label_idx] += 1;
        summed[*label_idx] += dist;
    }
    let winner = (0..NUM_CLASSES)
        .max_by(|&x, &y| {
            votes[x]
                .cmp(&votes[y])
                .then(summed[y].total_cmp(&summed[x]))
                .then(y.cmp(&x))
        })
        .unwrap();
    Ok(EmotionLabel::from_index(winner).unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Lifts a 1-channel series into the 14-channel frame format.
    pub(crate) fn lift(xs: &[f32]) -> Vec<[f32; NUM_CHANNELS]> {
        xs.iter()
            .map(|&x| {
                let mut row = [0.0; NUM_CHANNELS];
                row[0] = x;
                row
            })
            .collect()
    }

    /// Brute-force DTW: minimum total cost over every monotone alignment
    /// path, enumerated recursively. Only viable for tiny inputs.
    pub(crate) fn dtw_brute_force(a: &[[f32; NUM_CHANNELS]], b: &[[f32; NUM_CHANNELS]]) -> f64 {
        fn explore(
            a: &[[f32; NUM_CHANNELS]],
            b: &[[f32; NUM_CHANNELS]],
            i: usize,
            j: usize,
            acc: f64,
            best: &mut f64,
        ) {
            let acc = acc + local_cost(&a[i], &b[j]);
            if i == a.len() - 1 && j == b.len() - 1 {
                *best = best.min(acc);
                return;
            }
            if i + 1 < a.len() {
                explore(a, b, i + 1, j, acc, best);
            }
            if j + 1 < b.len() {
                explore(a, b, i, j + 1, acc, best);
            }
            if i + 1 < a.len() && j + 1 < b.len() {
                explore(a, b, i + 1, j + 1, acc, best);
            }
        }
        let mut best = f64::INFINITY;
        explore(a, b, 0, 0, 0.0, &mut best);
        best
    }

    fn seq(id: &str, label: EmotionLabel, xs: &[f32]) -> LabeledSequence {
        let mut s = crate::dataio::testutil::test_sequence(id, label, xs.len());
        s.values = lift(xs);
        s
    }

    #[test]
    fn self_distance_is_zero() {
        let a = lift(&[0.3, 0.7, 0.2, 0.9]);
        assert_eq!(dtw_distance(&a, &a, &DtwConfig::unconstrained()).unwrap(), 0.0);
    }

    #[test]
    fn repeated_element_aligns_for_free() {
        let a = lift(&[1.0, 2.0, 3.0]);
        let b = lift(&[1.0, 2.0, 2.0, 3.0]);
        let d = dtw_distance(&a, &b, &DtwConfig::unconstrained()).unwrap();
        assert!(d.abs() < 1e-12);
    }

    #[test]
    fn single_cell_distance() {
        let a = lift(&[0.0]);
        let b = lift(&[3.0]);
        assert_eq!(dtw_distance(&a, &b, &DtwConfig::unconstrained()).unwrap(), 3.0);
    }

    #[test]
    fn symmetric_in_arguments() {
        let a = lift(&[0.1, 0.9, 0.4, 0.4, 0.8]);
        let b = lift(&[0.5, 0.2, 0.7]);
        let cfg = DtwConfig::unconstrained();
        assert_eq!(
            dtw_distance(&a, &b, &cfg).unwrap(),
            dtw_distance(&b, &a, &cfg).unwrap()
        );
    }

    #[test]
    fn band_one_equal_lengths_is_framewise_sum() {
        let a = lift(&[0.1, 0.5, 0.9, 0.3]);
        let b = lift(&[0.2, 0.4, 0.6, 0.7]);
        let d = dtw_distance(&a, &b, &DtwConfig::banded(1)).unwrap();
        let expect: f64 = a
            .iter()
            .zip(&b)
            .map(|(x, y)| local_cost(x, y))
            .sum();
        assert!((d - expect).abs() < 1e-12);
    }

    #[test]
    fn infeasible_band_is_an_error() {
        let a = lift(&[0.0; 8]);
        let b = lift(&[0.0; 3]);
        match dtw_distance(&a, &b, &DtwConfig::banded(2)) {
            Err(Error::InfeasibleBand { band: 2, gap: 5 }) => {}
            other => panic!("expected infeasible band, got {other:?}"),
        }
        assert!(dtw_distance(&a, &b, &DtwConfig::banded(5)).is_ok());
    }

    #[test]
    fn matches_brute_force_on_small_pairs() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let ta = rng.random_range(1..=6);
            let tb = rng.random_range(1..=6);
            let a: Vec<[f32; NUM_CHANNELS]> = (0..ta)
                .map(|_| std::array::from_fn(|_| rng.random_range(0.0..1.0)))
                .collect();
            let b: Vec<[f32; NUM_CHANNELS]> = (0..tb)
                .map(|_| std::array::from_fn(|_| rng.random_range(0.0..1.0)))
                .collect();
            let dp = dtw_distance(&a, &b, &DtwConfig::unconstrained()).unwrap();
            let brute = dtw_brute_force(&a, &b);
            let denom = brute.abs().max(1.0);
            assert!(
                (dp - brute).abs() / denom < 1e-12,
                "dp {dp} vs brute {brute}"
            );
        }
    }

    #[test]
    fn wider_bands_never_increase_distance() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let a: Vec<[f32; NUM_CHANNELS]> =
            (0..10).map(|_| std::array::from_fn(|_| rng.random_range(0.0..1.0))).collect();
        let b: Vec<[f32; NUM_CHANNELS]> =
            (0..12).map(|_| std::array::from_fn(|_| rng.random_range(0.0..1.0))).collect();
        let mut prev = f64::INFINITY;
        for band in 2..=12 {
            let d = dtw_distance(&a, &b, &DtwConfig::banded(band)).unwrap();
            assert!(d <= prev + 1e-12, "band {band}: {d} > {prev}");
            prev = d;
        }
        let unconstrained = dtw_distance(&a, &b, &DtwConfig::unconstrained()).unwrap();
        assert!((prev - unconstrained).abs() < 1e-12);
    }

    #[test]
    fn exact_match_wins_at_k1() {
        let train_owned = [seq("a", EmotionLabel::Confusion, &[0.1, 0.2, 0.3]),
            seq("b", EmotionLabel::Anger, &[0.9, 0.8, 0.7]),
            seq("c", EmotionLabel::Disgust, &[0.5, 0.5, 0.5])];
        let train: Vec<&LabeledSequence> = train_owned.iter().collect();
        let query = seq("q", EmotionLabel::Confusion, &[0.9, 0.8, 0.7]);
        let got = knn_classify(&train, &query, 1, &DtwConfig::unconstrained()).unwrap();
        assert_eq!(got, EmotionLabel::Anger);
    }

    #[test]
    fn majority_vote_at_k3() {
        let train_owned = [seq("a1", EmotionLabel::Anger, &[1.0, 1.0]),
            seq("a2", EmotionLabel::Anger, &[0.95, 1.0]),
            seq("d1", EmotionLabel::Disgust, &[0.9, 0.9]),
            seq("c1", EmotionLabel::Confusion, &[0.0, 0.0])];
        let train: Vec<&LabeledSequence> = train_owned.iter().collect();
        let query = seq("q", EmotionLabel::Confusion, &[1.0, 0.98]);
        let got = knn_classify(&train, &query, 3, &DtwConfig::unconstrained()).unwrap();
        assert_eq!(got, EmotionLabel::Anger);
    }

    #[test]
    fn vote_tie_breaks_by_summed_distance() {
        let train_owned = [seq("a", EmotionLabel::Anger, &[0.5, 0.5]),
            seq("d", EmotionLabel::Disgust, &[0.8, 0.8])];
        let train: Vec<&LabeledSequence> = train_owned.iter().collect();
        let query = seq("q", EmotionLabel::Confusion, &[0.45, 0.45]);
        // One vote each; Anger is closer, so it wins the tie.
        let got = knn_classify(&train, &query, 2, &DtwConfig::unconstrained()).unwrap();
        assert_eq!(got, EmotionLabel::Anger);
    }

    #[test]
    fn order_independent_classification() {
        let mut train_owned = [seq("x1", EmotionLabel::Confusion, &[0.2, 0.2, 0.2]),
            seq("x2", EmotionLabel::Anger, &[0.2, 0.2, 0.2]),
            seq("x3", EmotionLabel::Disgust, &[0.7, 0.7, 0.7])];
        let query = seq("q", EmotionLabel::Disgust, &[0.2, 0.2, 0.2]);
        let cfg = DtwConfig::unconstrained();
        let forward: Vec<&LabeledSequence> = train_owned.iter().collect();
        let first = knn_classify(&forward, &query, 2, &cfg).unwrap();
        train_owned.reverse();
        let reversed: Vec<&LabeledSequence> = train_owned.iter().collect();
        let second = knn_classify(&reversed, &query, 2, &cfg).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn knn_input_validation() {
        let train_owned = [seq("a", EmotionLabel::Anger, &[0.5])];
        let train: Vec<&LabeledSequence> = train_owned.iter().collect();
        let query = seq("q", EmotionLabel::Anger, &[0.5]);
        let cfg = DtwConfig::unconstrained();
        assert!(knn_classify(&[], &query, 1, &cfg).is_err());
        assert!(knn_classify(&train, &query, 0, &cfg).is_err());
        assert!(knn_classify(&train, &query, 2, &cfg).is_err());
    }
}
