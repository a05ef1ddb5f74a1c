//! Image-level decision fusion (pipeline module 3).
//!
//! Each image is summarized by the descending top-M center anomaly scores of
//! its detected spots. M is grid-searched on validation data; the five
//! classifiers at the chosen M values vote, majority wins. Evaluation uses
//! the averaged false-alarm/missed-detection error rate.

use alloc::vec::Vec;

use crate::gbdt::{self, GbdtConfig, GbdtError, GbdtModel};
use crate::spots::SpotList;

/// Per-classifier stego vote cutoff.
pub const VOTE_CUTOFF: f64 = 0.5;
/// Fill value when an image has fewer spots than M.
pub const PAD_VALUE: f64 = 0.0;
/// The reference M grid, tuned for 250x250 anomaly maps.
pub const GRID_BASE: core::ops::RangeInclusive<usize> = 100..=1000;
pub const GRID_STEP: usize = 50;
/// Interior pixel count the reference grid presumes (250x250 maps).
pub const GRID_REFERENCE_INTERIOR: usize = 62_500;
/// Smallest M after scaling.
pub const GRID_MIN_M: usize = 5;
/// Ensemble size.
pub const ENSEMBLE: usize = 5;

/// The five-classifier fusion ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    /// Ascending, distinct.
    pub m_values: Vec<usize>,
    /// Classifier `i` consumes a `m_values[i]`-vector.
    pub classifiers: Vec<GbdtModel>,
}

/// One point of the accuracy-vs-M validation curve.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub m: usize,
    pub accuracy: f64,
}

/// Detection error rates per the averaged-error metric.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub p_fa: f64,
    pub p_md: f64,
    pub p_e: f64,
    pub n_cover: usize,
    pub n_stego: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FusionError {
    /// Scaling left fewer grid values than the ensemble needs.
    GridTooSmall { have: usize },
    /// The search needs at least one pair in each fold.
    TooFewPairs { have: usize },
    /// Evaluation requires both classes in the truth.
    MissingClass,
    Gbdt(GbdtError),
}

impl From<GbdtError> for FusionError {
    fn from(e: GbdtError) -> Self {
        FusionError::Gbdt(e)
    }
}

impl core::fmt::Display for FusionError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            FusionError::GridTooSmall { have } => {
                write!(f, "M grid has {have} values after scaling, need {ENSEMBLE}")
            }
            FusionError::TooFewPairs { have } => {
                write!(f, "grid search needs at least 2 validation pairs, got {have}")
            }
            FusionError::MissingClass => write!(f, "truth contains only one class"),
            FusionError::Gbdt(e) => write!(f, "gbdt: {e}"),
        }
    }
}

/// Descending `center_anomaly_score` values (ties broken by ascending
/// `(row, col)`), truncated to `m` and right-padded with [`PAD_VALUE`].
/// Uses partial selection, so only the top `m` get fully sorted.
pub fn topm_vector(spots: &SpotList, m: usize) -> Vec<f64> {
    assert!(m >= 1);
    let mut keys: Vec<(f64, u32, u32)> = spots
        .iter()
        .map(|s| (s.center_anomaly_score, s.row, s.col))
        .collect();
    let cmp = |a: &(f64, u32, u32), b: &(f64, u32, u32)| {
        b.0.total_cmp(&a.0).then_with(|| (a.1, a.2).cmp(&(b.1, b.2)))
    };
    if keys.len() > m {
        keys.select_nth_unstable_by(m - 1, cmp);
        keys.truncate(m);
    }
    keys.sort_unstable_by(cmp);
    let mut out: Vec<f64> = keys.into_iter().map(|k| k.0).collect();
    out.resize(m, PAD_VALUE);
    out
}

/// The reference grid scaled by `interior_pixels / 62_500`, rounded,
/// clamped to at least [`GRID_MIN_M`], deduplicated, ascending.
pub fn scaled_grid(interior_pixels: usize) -> Vec<usize> {
    let ratio = interior_pixels as f64 / GRID_REFERENCE_INTERIOR as f64;
    let mut out: Vec<usize> = GRID_BASE
        .step_by(GRID_STEP)
        .map(|m| (((m as f64 * ratio) + 0.5) as usize).max(GRID_MIN_M))
        .collect();
    out.dedup();
    out
}

/// Indices of the grid-maximum accuracy plus its two neighbors on each
/// side, with the window shifted (not shrunk) at the grid edges.
pub fn window_indices(curve_len: usize, best: usize) -> [usize; ENSEMBLE] {
    debug_assert!(curve_len >= ENSEMBLE && best < curve_len);
    let lo = best.saturating_sub(2).min(curve_len - ENSEMBLE);
    [lo, lo + 1, lo + 2, lo + 3, lo + 4]
}

fn fit_at_m(
    pairs: &[(&SpotList, &SpotList)],
    m: usize,
    config: &GbdtConfig,
) -> Result<GbdtModel, FusionError> {
    let mut features = Vec::with_capacity(2 * pairs.len() * m);
    let mut labels = Vec::with_capacity(2 * pairs.len());
    for (cover, stego) in pairs {
        features.extend_from_slice(&topm_vector(cover, m));
        labels.push(false);
        features.extend_from_slice(&topm_vector(stego, m));
        labels.push(true);
    }
    Ok(gbdt::fit(&features, &labels, m, config)?)
}

fn accuracy_at_m(pairs: &[(&SpotList, &SpotList)], m: usize, model: &GbdtModel) -> f64 {
    let mut correct = 0usize;
    for (cover, stego) in pairs {
        if model.predict(&topm_vector(cover, m)) <= VOTE_CUTOFF {
            correct += 1;
        }
        if model.predict(&topm_vector(stego, m)) > VOTE_CUTOFF {
            correct += 1;
        }
    }
    correct as f64 / (2 * pairs.len()) as f64
}

/// Grid-searches M on the validation pairs (even-index pairs train the
/// temporary classifiers, odd-index pairs score them), then trains the five
/// final classifiers on all pairs at the grid optimum and its four nearest
/// grid neighbors. Returns the model and the accuracy-vs-M curve.
pub fn fit_fusion(
    pairs: &[(SpotList, SpotList)],
    interior_pixels: usize,
    config: &GbdtConfig,
) -> Result<(FusionModel, Vec<GridPoint>), FusionError> {
    let grid = scaled_grid(interior_pixels);
    if grid.len() < ENSEMBLE {
        return Err(FusionError::GridTooSmall { have: grid.len() });
    }
    if pairs.len() < 2 {
        return Err(FusionError::TooFewPairs { have: pairs.len() });
    }
    let train_fold: Vec<(&SpotList, &SpotList)> = pairs
        .iter()
        .enumerate()
        .filter(|(i, _)| i % 2 == 0)
        .map(|(_, (c, s))| (c, s))
        .collect();
    let held_fold: Vec<(&SpotList, &SpotList)> = pairs
        .iter()
        .enumerate()
        .filter(|(i, _)| i % 2 == 1)
        .map(|(_, (c, s))| (c, s))
        .collect();

    let mut curve = Vec::with_capacity(grid.len());
    for &m in &grid {
        let temp = fit_at_m(&train_fold, m, config)?;
        curve.push(GridPoint {
            m,
            accuracy: accuracy_at_m(&held_fold, m, &temp),
        });
    }
    let best = curve
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| {
            a.accuracy
                .total_cmp(&b.accuracy)
                .then(ib.cmp(ia)) // ties go to the earlier (smaller-M) point
        })
        .map(|(i, _)| i)
        .unwrap();

    let all: Vec<(&SpotList, &SpotList)> = pairs.iter().map(|(c, s)| (c, s)).collect();
    let mut m_values = Vec::with_capacity(ENSEMBLE);
    let mut classifiers = Vec::with_capacity(ENSEMBLE);
    for idx in window_indices(curve.len(), best) {
        let m = grid[idx];
        m_values.push(m);
        classifiers.push(fit_at_m(&all, m, config)?);
    }
    Ok((
        FusionModel {
            m_values,
            classifiers,
        },
        curve,
    ))
}

/// Majority vote of the five classifiers: stego iff at least 3 scores
/// exceed [`VOTE_CUTOFF`]. Returns the label (true = stego) and the five
/// soft scores.
pub fn classify_image(spots: &SpotList, model: &FusionModel) -> (bool, [f64; ENSEMBLE]) {
    let mut scores = [0.0; ENSEMBLE];
    let mut votes = 0;
    for i in 0..ENSEMBLE {
        scores[i] = model.classifiers[i].predict(&topm_vector(spots, model.m_values[i]));
        if scores[i] > VOTE_CUTOFF {
            votes += 1;
        }
    }
    (votes >= 3, scores)
}

/// Error report over `(label, truth)` decisions (true = stego).
pub fn evaluate(decisions: &[(bool, bool)]) -> Result<EvalReport, FusionError> {
    let n_cover = decisions.iter().filter(|(_, truth)| !truth).count();
    let n_stego = decisions.len() - n_cover;
    if n_cover == 0 || n_stego == 0 {
        return Err(FusionError::MissingClass);
    }
    let false_alarms = decisions.iter().filter(|(label, truth)| *label && !truth).count();
    let missed = decisions.iter().filter(|(label, truth)| !label && *truth).count();
    let p_fa = false_alarms as f64 / n_cover as f64;
    let p_md = missed as f64 / n_stego as f64;
    Ok(EvalReport {
        p_fa,
        p_md,
        p_e: (p_fa + p_md) / 2.0,
        n_cover,
        n_stego,
    })
}

/// Area under the ROC curve by the rank statistic (ties get half credit).
pub fn auc(pos: &[f64], neg: &[f64]) -> f64 {
    assert!(!pos.is_empty() && !neg.is_empty(), "auc needs both classes");
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0; // sum of positive ranks, average rank on ties
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        let pos_in_tie = all[i..j].iter().filter(|(_, is_pos)| *is_pos).count();
        rank_sum += avg_rank * pos_in_tie as f64;
        i = j;
    }
    let np = pos.len() as f64;
    let nn = neg.len() as f64;
    (rank_sum - np * (np + 1.0) / 2.0) / (np * nn)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::spots::Spot;

    fn spot(row: u32, col: u32, score: f64) -> Spot {
        Spot {
            row,
            col,
            group_id: 0,
            spot_score: 1.0,
            center_anomaly_score: score,
        }
    }

    #[test]
    fn topm_sorts_truncates_and_pads() {
        let spots = vec![spot(0, 0, 0.9), spot(0, 1, 0.5), spot(0, 2, 0.7)];
        assert_eq!(topm_vector(&spots, 2), vec![0.9, 0.7]);
        assert_eq!(topm_vector(&Vec::new(), 4), vec![0.0; 4]);
        assert_eq!(topm_vector(&spots, 5), vec![0.9, 0.7, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn topm_matches_full_sort_oracle() {
        let mut r = rng::seed_rng(51);
        let spots: Vec<Spot> = (0..10_000)
            .map(|i| spot((i / 120) as u32, (i % 120) as u32, rng::uniform_f64(&mut r)))
            .collect();
        let got = topm_vector(&spots, 100);
        let mut oracle: Vec<f64> = spots.iter().map(|s| s.center_anomaly_score).collect();
        oracle.sort_unstable_by(|a, b| b.total_cmp(a));
        assert_eq!(got, oracle[..100]);
    }

    #[test]
    fn topm_is_permutation_invariant_and_tie_stable() {
        let mut spots = vec![
            spot(5, 5, 0.7),
            spot(1, 1, 0.7),
            spot(3, 3, 0.9),
            spot(2, 2, 0.7),
        ];
        let a = topm_vector(&spots, 3);
        spots.reverse();
        let b = topm_vector(&spots, 3);
        spots.swap(0, 2);
        let c = topm_vector(&spots, 3);
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert_eq!(a, vec![0.9, 0.7, 0.7]);
    }

    #[test]
    fn padding_spots_are_neutral_when_enough_real_ones() {
        let mut spots = vec![spot(0, 0, 0.9), spot(0, 1, 0.8), spot(0, 2, 0.7)];
        let before = topm_vector(&spots, 3);
        spots.push(spot(9, 9, 0.0));
        spots.push(spot(9, 10, 0.0));
        assert_eq!(topm_vector(&spots, 3), before);
    }

    #[test]
    fn grid_scales_with_interior_area() {
        let reference = scaled_grid(GRID_REFERENCE_INTERIOR);
        assert_eq!(reference.len(), 19);
        assert_eq!(reference[0], 100);
        assert_eq!(*reference.last().unwrap(), 1000);

        let desk = scaled_grid(58 * 58);
        assert!(desk.len() >= ENSEMBLE);
        assert!(desk.iter().all(|&m| m >= GRID_MIN_M));
        assert!(desk.windows(2).all(|w| w[0] < w[1]));
        assert!(*desk.last().unwrap() <= 60);

        // A tiny map collapses the grid entirely.
        assert_eq!(scaled_grid(4), vec![GRID_MIN_M]);
    }

    #[test]
    fn window_shifts_at_edges() {
        assert_eq!(window_indices(19, 0), [0, 1, 2, 3, 4]);
        assert_eq!(window_indices(19, 1), [0, 1, 2, 3, 4]);
        assert_eq!(window_indices(19, 9), [7, 8, 9, 10, 11]);
        assert_eq!(window_indices(19, 18), [14, 15, 16, 17, 18]);
        assert_eq!(window_indices(5, 2), [0, 1, 2, 3, 4]);
    }

    /// Separable toy data: stego images carry many high spots, covers few
    /// weak ones. Every cover leads with a spot at exactly 0.1, so held-out
    /// cover features never exceed the training span (histogram thresholds
    /// sit at training sample values).
    fn separable_pairs(n: usize) -> Vec<(SpotList, SpotList)> {
        (0..n)
            .map(|k| {
                let mut cover: SpotList = vec![spot(0, 0, 0.1)];
                for i in 1..3u32 {
                    let jitter = ((k + i as usize) % 7 + 1) as f64 * 0.001;
                    cover.push(spot(i, i, 0.1 - jitter));
                }
                let stego: SpotList = (0..40 + k % 5)
                    .map(|i| {
                        let jitter = ((k + i) % 9) as f64 * 0.001;
                        spot((i / 8) as u32, (i % 8) as u32, 0.9 + jitter)
                    })
                    .collect();
                (cover, stego)
            })
            .collect()
    }

    #[test]
    fn separable_data_gives_flat_curve_and_smallest_ms() {
        let pairs = separable_pairs(12);
        let config = GbdtConfig {
            n_trees: 15,
            ..GbdtConfig::default()
        };
        let (model, curve) = fit_fusion(&pairs, 58 * 58, &config).unwrap();
        let grid = scaled_grid(58 * 58);
        assert_eq!(curve.len(), grid.len());
        let dump: Vec<(usize, f64)> = curve.iter().map(|p| (p.m, p.accuracy)).collect();
        assert!(curve.iter().all(|p| p.accuracy == 1.0), "curve: {dump:?}");
        assert_eq!(model.m_values, grid[..ENSEMBLE].to_vec());
        assert_eq!(model.classifiers.len(), ENSEMBLE);
        assert!(model.m_values.windows(2).all(|w| w[0] < w[1]));

        // The trained ensemble separates fresh draws.
        let probe = separable_pairs(4);
        for (cover, stego) in &probe {
            assert!(!classify_image(cover, &model).0);
            assert!(classify_image(stego, &model).0);
        }

        // Refit is bit-identical.
        let (again, curve2) = fit_fusion(&pairs, 58 * 58, &config).unwrap();
        assert_eq!(model, again);
        assert_eq!(curve, curve2);
    }

    #[test]
    fn fusion_error_cases() {
        let pairs = separable_pairs(1);
        let config = GbdtConfig::default();
        assert!(matches!(
            fit_fusion(&pairs, 58 * 58, &config),
            Err(FusionError::TooFewPairs { have: 1 })
        ));
        let pairs = separable_pairs(4);
        assert!(matches!(
            fit_fusion(&pairs, 4, &config),
            Err(FusionError::GridTooSmall { have: 1 })
        ));
    }

    fn constant_model(scores: [f64; 5]) -> FusionModel {
        let logit = |p: f64| crate::math::ln(p / (1.0 - p));
        FusionModel {
            m_values: vec![1, 2, 3, 4, 5],
            classifiers: scores
                .iter()
                .enumerate()
                .map(|(i, &p)| GbdtModel::constant(logit(p), i + 1))
                .collect(),
        }
    }

    #[test]
    fn majority_vote_cases() {
        let spots = vec![spot(0, 0, 0.5)];
        let (label, scores) = classify_image(&spots, &constant_model([0.9, 0.8, 0.6, 0.2, 0.1]));
        assert!(label);
        assert!(scores[0] > 0.89 && scores[0] < 0.91);
        let (label, _) = classify_image(&spots, &constant_model([0.2, 0.3, 0.8, 0.9, 0.4]));
        assert!(!label);
        // Five identical classifiers behave like one.
        let (label, _) = classify_image(&spots, &constant_model([0.7; 5]));
        assert!(label);
        let (label, _) = classify_image(&spots, &constant_model([0.3; 5]));
        assert!(!label);
    }

    #[test]
    fn evaluate_reproduces_error_arithmetic() {
        // All correct.
        let perfect: Vec<(bool, bool)> = (0..10).map(|i| (i % 2 == 0, i % 2 == 0)).collect();
        let report = evaluate(&perfect).unwrap();
        assert_eq!(report.p_e, 0.0);

        // p_fa = 0.2, p_md = 0.1 -> p_e = 0.15 exactly.
        let mut decisions = Vec::new();
        for i in 0..10 {
            decisions.push((i < 2, false)); // 2 of 10 covers called stego
        }
        for i in 0..10 {
            decisions.push((i >= 1, true)); // 1 of 10 stegos called cover
        }
        let report = evaluate(&decisions).unwrap();
        assert_eq!(report.p_fa, 0.2);
        assert_eq!(report.p_md, 0.1);
        // p_e is exactly the mean of the two rates (the 0.15 differs from
        // the f64 literal only in the last bit).
        assert_eq!(report.p_e, (report.p_fa + report.p_md) / 2.0);
        assert!((report.p_e - 0.15).abs() < 1e-15);
        assert_eq!((report.n_cover, report.n_stego), (10, 10));

        // Chance-level on label-independent decisions.
        let mut r = rng::seed_rng(65);
        let chance: Vec<(bool, bool)> = (0..20_000)
            .map(|i| (rng::uniform_f64(&mut r) < 0.5, i % 2 == 0))
            .collect();
        let report = evaluate(&chance).unwrap();
        assert!((report.p_e - 0.5).abs() < 0.02);

        // Same confusion matrix in a different arrangement -> same report.
        let mut shuffled = decisions.clone();
        shuffled.rotate_left(7);
        assert_eq!(evaluate(&shuffled).unwrap(), report_of(&decisions));

        assert!(matches!(
            evaluate(&[(true, true)]),
            Err(FusionError::MissingClass)
        ));
    }

    fn report_of(decisions: &[(bool, bool)]) -> EvalReport {
        evaluate(decisions).unwrap()
    }

    #[test]
    fn auc_hand_cases_and_pairwise_oracle() {
        assert_eq!(auc(&[0.9, 0.8], &[0.1, 0.2]), 1.0);
        assert_eq!(auc(&[0.1, 0.2], &[0.9, 0.8]), 0.0);
        assert_eq!(auc(&[0.5, 0.5], &[0.5, 0.5]), 0.5);

        let mut r = rng::seed_rng(66);
        let pos: Vec<f64> = (0..150).map(|_| rng::uniform_f64(&mut r) * 0.8 + 0.2).collect();
        let neg: Vec<f64> = (0..220)
            .map(|_| (rng::uniform_f64(&mut r) * 10.0).round() / 10.0 * 0.8)
            .collect();
        let got = auc(&pos, &neg);
        let mut credit = 0.0;
        for &p in &pos {
            for &n in &neg {
                if p > n {
                    credit += 1.0;
                } else if p == n {
                    credit += 0.5;
                }
            }
        }
        let oracle = credit / (pos.len() * neg.len()) as f64;
        assert!((got - oracle).abs() < 1e-12);
    }
}

