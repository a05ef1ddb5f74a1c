//! Anomaly-spot detection (pipeline module 2).
//!
//! A 3x3 block of the anomaly map is a candidate embedding spot. Per cost
//! group, a matched filter (the element-wise mean of positive training
//! blocks) is correlated against the map, a boosted classifier consumes the
//! 9 raw scores plus the 9 filter responses, and an F1-optimal threshold
//! picks which blocks survive as detected spots.

use alloc::vec::Vec;

use crate::anomaly::AnomalyScoreMap;
use crate::gbdt::{self, GbdtConfig, GbdtError, GbdtModel};
use crate::image::ChangeIntegral;
use crate::rng::{self, Reservoir, Stream};
use crate::saab::PATCH_MARGIN;

/// Spot side length (blocks are `SPOT x SPOT` anomaly-map regions).
pub const SPOT: usize = 3;
/// Feature vector: 9 raw scores + 9 matched-filter responses.
pub const BLOCK_FEATURES: usize = 18;
/// Valid block centers sit at least this far from the map border: the block
/// needs 1, and each block pixel's own filter window needs 1 more.
pub const SPOT_MARGIN: usize = 2;
/// The F1 sweep grid is {0.00, 0.01, ..., 1.00}.
pub const F1_SWEEP_STEPS: usize = 101;

/// Element-wise mean of the positive anomaly blocks of one group.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedFilter {
    pub group_id: u8,
    pub taps: [f64; SPOT * SPOT],
}

/// The spot-detection bundle for one cost group.
#[derive(Debug, Clone, PartialEq)]
pub struct Group2Model {
    pub group_id: u8,
    pub filter: MatchedFilter,
    pub classifier: GbdtModel,
    pub threshold: f64,
}

/// A group's slot in the trained detector.
#[derive(Debug, Clone, PartialEq)]
pub enum Group2Slot {
    Trained(Group2Model),
    /// No positive blocks were seen for this group; it emits no spots.
    Disabled,
}

/// One detected embedding location.
#[derive(Debug, Clone, PartialEq)]
pub struct Spot {
    pub row: u32,
    pub col: u32,
    pub group_id: u8,
    pub spot_score: f64,
    pub center_anomaly_score: f64,
}

/// Detected spots of one image, in row-major center order.
pub type SpotList = Vec<Spot>;

#[derive(Debug, Clone, PartialEq)]
pub enum SpotError {
    NoBlocks,
    NoPositives,
    Gbdt(GbdtError),
}

impl From<GbdtError> for SpotError {
    fn from(e: GbdtError) -> Self {
        SpotError::Gbdt(e)
    }
}

impl core::fmt::Display for SpotError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SpotError::NoBlocks => write!(f, "no blocks supplied"),
            SpotError::NoPositives => write!(f, "group has no positive blocks"),
            SpotError::Gbdt(e) => write!(f, "gbdt: {e}"),
        }
    }
}

/// Element-wise mean of flattened 3x3 blocks.
pub fn fit_matched_filter(group_id: u8, blocks: &[f64]) -> Result<MatchedFilter, SpotError> {
    let d = SPOT * SPOT;
    assert!(blocks.len() % d == 0, "block buffer not a multiple of {d}");
    let count = blocks.len() / d;
    if count == 0 {
        return Err(SpotError::NoBlocks);
    }
    let mut taps = [0.0; SPOT * SPOT];
    for b in 0..count {
        for (t, v) in taps.iter_mut().zip(&blocks[b * d..(b + 1) * d]) {
            *t += v;
        }
    }
    for t in taps.iter_mut() {
        *t /= count as f64;
    }
    Ok(MatchedFilter { group_id, taps })
}

/// The 18 features of the block whose center sits at `(2, 2)` of a 5x5
/// score patch: dims 0-8 are the raw block scores (row-major), dims 9-17
/// the filter correlated (no flip, no normalization) with each block
/// pixel's own 3x3 neighborhood.
pub fn block_features_from_patch(patch: &[f64], filter: &MatchedFilter) -> [f64; BLOCK_FEATURES] {
    debug_assert_eq!(patch.len(), 25);
    let mut out = [0.0; BLOCK_FEATURES];
    for r in 0..SPOT {
        for c in 0..SPOT {
            out[r * SPOT + c] = patch[(r + 1) * 5 + (c + 1)];
            let mut acc = 0.0;
            for i in 0..SPOT {
                for j in 0..SPOT {
                    acc += filter.taps[i * SPOT + j] * patch[(r + i) * 5 + (c + j)];
                }
            }
            out[9 + r * SPOT + c] = acc;
        }
    }
    out
}

/// [`block_features_from_patch`] reading straight from a score map. The
/// center must be at least [`SPOT_MARGIN`] from every map border.
pub fn block_features(
    map: &AnomalyScoreMap,
    row: usize,
    col: usize,
    filter: &MatchedFilter,
) -> [f64; BLOCK_FEATURES] {
    assert!(
        row >= SPOT_MARGIN
            && col >= SPOT_MARGIN
            && row + SPOT_MARGIN < map.height
            && col + SPOT_MARGIN < map.width,
        "block center ({row}, {col}) too close to the border of a {}x{} map",
        map.width,
        map.height
    );
    let mut patch = [0.0; 25];
    copy_score_patch(map, row, col, &mut patch);
    block_features_from_patch(&patch, filter)
}

fn copy_score_patch(map: &AnomalyScoreMap, row: usize, col: usize, out: &mut [f64; 25]) {
    for dy in 0..5 {
        let base = (row + dy - 2) * map.width + col - 2;
        out[dy * 5..dy * 5 + 5].copy_from_slice(&map.scores[base..base + 5]);
    }
}

/// F1 score from a confusion count.
fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    if 2 * tp + fp + fn_ == 0 {
        return 0.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}

/// Sweeps thresholds {0.00, 0.01, ..., 1.00} over `score > t` predictions
/// and returns `(threshold, f1)` maximizing F1, ties going to the smaller
/// threshold.
pub fn select_f1_threshold(scores: &[f64], labels: &[bool]) -> (f64, f64) {
    assert_eq!(scores.len(), labels.len());
    let mut best = (0.0, f64::NEG_INFINITY);
    for step in 0..F1_SWEEP_STEPS {
        let t = step as f64 / 100.0;
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for (&s, &y) in scores.iter().zip(labels.iter()) {
            match (s > t, y) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        let score = f1(tp, fp, fn_);
        if score > best.1 {
            best = (t, score);
        }
    }
    best
}

/// One cover/stego pair at the score-map level, for module-2 training.
pub struct MapPair<'a> {
    pub cover_map: &'a AnomalyScoreMap,
    pub stego_map: &'a AnomalyScoreMap,
    /// Ground-truth change map of the underlying image.
    pub change_map: &'a [i8],
    pub image_width: usize,
    pub image_height: usize,
}

/// Paired 5x5 score patches for one group: `pos_patches[i]` comes from the
/// stego map, `neg_patches[i]` from the cover map at the same center.
#[derive(Debug, Clone, Default)]
pub struct Group2Samples {
    pub pos_patches: Vec<f64>,
    pub neg_patches: Vec<f64>,
}

impl Group2Samples {
    pub fn pair_count(&self) -> usize {
        self.pos_patches.len() / 25
    }
}

/// Collects per-group block samples: a center is a candidate when the 3x3
/// image region co-located with its block contains at least one embedding
/// change; the stego-map block is the positive, the co-located cover-map
/// block the negative. Pairs are grouped by the cover map's center group id
/// and capped by seeded reservoir sampling.
pub fn sample_blocks(
    pairs: &[MapPair],
    group_count: usize,
    cap_per_group: usize,
    seed: u64,
) -> Vec<Group2Samples> {
    let mut reservoirs: Vec<Reservoir<(u32, u16, u16)>> = (0..group_count)
        .map(|_| Reservoir::new(cap_per_group))
        .collect();
    let mut rngs: Vec<_> = (0..group_count)
        .map(|g| rng::stream_rng(seed, Stream::BlockSample, g as u64))
        .collect();

    for (idx, pair) in pairs.iter().enumerate() {
        let (mw, mh) = (pair.cover_map.width, pair.cover_map.height);
        if mw < 2 * SPOT_MARGIN + 1 || mh < 2 * SPOT_MARGIN + 1 {
            continue;
        }
        let integral = ChangeIntegral::new(pair.change_map, pair.image_width, pair.image_height);
        for row in SPOT_MARGIN..mh - SPOT_MARGIN {
            for col in SPOT_MARGIN..mw - SPOT_MARGIN {
                // Map center (row, col) sits at image pixel
                // (row + PATCH_MARGIN, col + PATCH_MARGIN); the block covers
                // the 3x3 image region around it.
                let iy = row + PATCH_MARGIN;
                let ix = col + PATCH_MARGIN;
                if integral.window(iy - 1, ix - 1, iy + 2, ix + 2) == 0 {
                    continue;
                }
                let g = pair.cover_map.group(row, col) as usize;
                reservoirs[g].push(&mut rngs[g], (idx as u32, row as u16, col as u16));
            }
        }
    }

    let mut out = Vec::with_capacity(group_count);
    let mut patch = [0.0; 25];
    for reservoir in reservoirs {
        let picks = reservoir.into_items();
        let mut samples = Group2Samples::default();
        samples.pos_patches.reserve(picks.len() * 25);
        samples.neg_patches.reserve(picks.len() * 25);
        for (idx, row, col) in picks {
            let pair = &pairs[idx as usize];
            copy_score_patch(pair.stego_map, row as usize, col as usize, &mut patch);
            samples.pos_patches.extend_from_slice(&patch);
            copy_score_patch(pair.cover_map, row as usize, col as usize, &mut patch);
            samples.neg_patches.extend_from_slice(&patch);
        }
        out.push(samples);
    }
    out
}

/// Trains one group's spot detector: matched filter from the training
/// positives only, classifier on the 18-D features of both classes, then
/// the F1 threshold sweep on the held-out validation samples. An empty
/// validation set falls back to the neutral threshold 0.5.
pub fn train_group2(
    group_id: u8,
    train: &Group2Samples,
    validation: &Group2Samples,
    config: &GbdtConfig,
) -> Result<Group2Model, SpotError> {
    let pairs = train.pair_count();
    if pairs == 0 {
        return Err(SpotError::NoPositives);
    }
    let filter = {
        let mut blocks = Vec::with_capacity(pairs * 9);
        for p in 0..pairs {
            let patch = &train.pos_patches[p * 25..(p + 1) * 25];
            for r in 0..SPOT {
                for c in 0..SPOT {
                    blocks.push(patch[(r + 1) * 5 + (c + 1)]);
                }
            }
        }
        fit_matched_filter(group_id, &blocks)?
    };

    let featurize = |samples: &Group2Samples| -> (Vec<f64>, Vec<bool>) {
        let n = samples.pair_count();
        let mut features = Vec::with_capacity(2 * n * BLOCK_FEATURES);
        let mut labels = Vec::with_capacity(2 * n);
        for (buf, label) in [(&samples.pos_patches, true), (&samples.neg_patches, false)] {
            for p in 0..n {
                features
                    .extend_from_slice(&block_features_from_patch(&buf[p * 25..(p + 1) * 25], &filter));
                labels.push(label);
            }
        }
        (features, labels)
    };

    let (features, labels) = featurize(train);
    let classifier = gbdt::fit(&features, &labels, BLOCK_FEATURES, config)?;

    let threshold = if validation.pair_count() == 0 {
        0.5
    } else {
        let (val_features, val_labels) = featurize(validation);
        let scores: Vec<f64> = (0..val_labels.len())
            .map(|i| classifier.predict(&val_features[i * BLOCK_FEATURES..(i + 1) * BLOCK_FEATURES]))
            .collect();
        select_f1_threshold(&scores, &val_labels).0
    };

    Ok(Group2Model {
        group_id,
        filter,
        classifier,
        threshold,
    })
}

/// Classifies every valid block center with the center pixel's group model
/// and returns the centers whose spot score clears the group threshold, each
/// carrying its center's module-1 anomaly score. No non-maximum suppression;
/// overlapping spots are kept. Row-major center order.
pub fn detect_spots(map: &AnomalyScoreMap, groups: &[Group2Slot]) -> SpotList {
    let mut spots = Vec::new();
    if map.width < 2 * SPOT_MARGIN + 1 || map.height < 2 * SPOT_MARGIN + 1 {
        return spots;
    }
    let mut patch = [0.0; 25];
    for row in SPOT_MARGIN..map.height - SPOT_MARGIN {
        for col in SPOT_MARGIN..map.width - SPOT_MARGIN {
            let g = map.group(row, col);
            let model = match &groups[g as usize] {
                Group2Slot::Trained(m) => m,
                Group2Slot::Disabled => continue,
            };
            copy_score_patch(map, row, col, &mut patch);
            let features = block_features_from_patch(&patch, &model.filter);
            let spot_score = model.classifier.predict(&features);
            if spot_score > model.threshold {
                spots.push(Spot {
                    row: row as u32,
                    col: col as u32,
                    group_id: g,
                    spot_score,
                    center_anomaly_score: map.score(row, col),
                });
            }
        }
    }
    spots
}
