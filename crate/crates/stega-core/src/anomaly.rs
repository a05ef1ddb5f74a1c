//! Per-pixel anomaly scoring (pipeline module 1).
//!
//! Patches are grouped by their local embedding cost; each group gets its own
//! Saab feature banks, feature selection, and a two-round boosted classifier.
//! Round 1 scores every patch; round 2 re-classifies with a model specialized
//! to the round-1 score decile, sharpening the separation near the decision
//! regions. Scoring an image yields one anomaly score per interior pixel.

use alloc::vec;
use alloc::vec::Vec;

use crate::cost::CostMap;
use crate::dft::{self, DftError};
use crate::gbdt::{self, GbdtConfig, GbdtError, GbdtModel};
use crate::image::GrayImage;
use crate::math;
use crate::rng::{self, Reservoir, Stream};
use crate::saab::{self, SaabError, SaabTriple, FEATURE_DIM, PATCH_MARGIN};

/// Patch side length for feature extraction.
pub const PATCH: usize = 7;
/// Number of round-1 score deciles, each with its own round-2 model.
pub const SCORE_BINS: usize = 10;

/// How patch costs map to groups.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSpec {
    pub group_count: usize,
    /// `group_count + 1` strictly ascending edges; first 0, last +inf.
    pub boundaries: Vec<f64>,
    /// Odd window over which per-pixel costs are averaged into a patch cost.
    pub cost_window: usize,
}

/// Smallest representable value above `v` (for non-negative finite `v`).
fn next_up(v: f64) -> f64 {
    if v == 0.0 {
        f64::from_bits(1)
    } else {
        f64::from_bits(v.to_bits() + 1)
    }
}

impl GroupSpec {
    /// Unit-width ranges `[0,1), [1,2), ..., [G-1, inf)`.
    pub fn fixed_width(group_count: usize, cost_window: usize) -> Self {
        assert!(group_count >= 1 && cost_window % 2 == 1);
        let mut boundaries: Vec<f64> = (0..group_count).map(|i| i as f64).collect();
        boundaries.push(f64::INFINITY);
        GroupSpec {
            group_count,
            boundaries,
            cost_window,
        }
    }

    /// Equal-mass ranges from a sample of training patch costs. Collapsed
    /// quantiles (heavily repeated costs) are nudged to the next float so the
    /// edges stay strictly ascending; the squeezed groups simply end up
    /// empty and untrainable.
    pub fn equal_mass(mut sample: Vec<f64>, group_count: usize, cost_window: usize) -> Self {
        assert!(group_count >= 1 && cost_window % 2 == 1);
        assert!(!sample.is_empty(), "need a non-empty cost sample");
        sample.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
        let n = sample.len();
        let mut boundaries = Vec::with_capacity(group_count + 1);
        boundaries.push(0.0);
        for i in 1..group_count {
            let mut b = sample[i * n / group_count];
            let prev = *boundaries.last().unwrap();
            if b <= prev {
                b = next_up(prev);
            }
            boundaries.push(b);
        }
        boundaries.push(f64::INFINITY);
        GroupSpec {
            group_count,
            boundaries,
            cost_window,
        }
    }

    /// The unique group with `boundaries[g] <= cost < boundaries[g+1]`;
    /// costs below the first edge or at/above the last finite edge land in
    /// the nearest group.
    pub fn assign(&self, cost: f64) -> usize {
        let mut g = 0;
        while g + 1 < self.group_count && cost >= self.boundaries[g + 1] {
            g += 1;
        }
        g
    }

    /// Mean per-pixel cost over the `cost_window` square centered at
    /// `(row, col)`; the center must be interior for the window.
    pub fn patch_cost(&self, costs: &CostMap, row: usize, col: usize) -> f64 {
        let m = self.cost_window / 2;
        assert!(
            row >= m && col >= m && row + m < costs.height && col + m < costs.width,
            "cost window exceeds the map at ({row}, {col})"
        );
        let mut sum = 0.0;
        for y in row - m..=row + m {
            let base = y * costs.width;
            for x in col - m..=col + m {
                sum += costs.costs[base + x];
            }
        }
        sum / (self.cost_window * self.cost_window) as f64
    }
}

/// One cover/stego training pair with its ground truth and cover costs.
pub struct TrainPair<'a> {
    pub cover: &'a GrayImage,
    pub stego: &'a GrayImage,
    pub change_map: &'a [i8],
    /// Cost map of the cover (grouping uses cover costs during training).
    pub costs: &'a CostMap,
}

/// Flattened 7x7 patches for one group; `positives[i]` (stego) and
/// `negatives[i]` (cover) are the same image location.
#[derive(Debug, Clone, Default)]
pub struct GroupSamples {
    pub positives: Vec<f64>,
    pub negatives: Vec<f64>,
}

impl GroupSamples {
    pub fn pair_count(&self) -> usize {
        self.positives.len() / (PATCH * PATCH)
    }
}

/// Collects per-group paired samples: a positive is a stego patch whose 7x7
/// window contains at least one embedding change; its negative is the
/// co-located cover patch. Groups are capped by seeded reservoir sampling
/// over pairs, so both classes stay equinumerous.
pub fn sample_pairs(
    pairs: &[TrainPair],
    spec: &GroupSpec,
    cap_per_group: usize,
    seed: u64,
) -> Vec<GroupSamples> {
    let mut reservoirs: Vec<Reservoir<(u32, u16, u16)>> = (0..spec.group_count)
        .map(|_| Reservoir::new(cap_per_group))
        .collect();
    let mut rngs: Vec<_> = (0..spec.group_count)
        .map(|g| rng::stream_rng(seed, Stream::PairSample, g as u64))
        .collect();

    for (img_idx, pair) in pairs.iter().enumerate() {
        let (w, h) = (pair.cover.width, pair.cover.height);
        if w < PATCH || h < PATCH {
            continue;
        }
        // Integral image of |change| for O(1) window-occupancy queries.
        let integral = crate::image::ChangeIntegral::new(pair.change_map, w, h);
        for row in PATCH_MARGIN..h - PATCH_MARGIN {
            for col in PATCH_MARGIN..w - PATCH_MARGIN {
                let changed = integral.window(
                    row - PATCH_MARGIN,
                    col - PATCH_MARGIN,
                    row + PATCH_MARGIN + 1,
                    col + PATCH_MARGIN + 1,
                );
                if changed == 0 {
                    continue;
                }
                let g = spec.assign(spec.patch_cost(pair.costs, row, col));
                reservoirs[g].push(&mut rngs[g], (img_idx as u32, row as u16, col as u16));
            }
        }
    }

    let mut out = Vec::with_capacity(spec.group_count);
    let mut window = [0.0; PATCH * PATCH];
    for reservoir in reservoirs {
        let picks = reservoir.into_items();
        let mut samples = GroupSamples::default();
        samples.positives.reserve(picks.len() * PATCH * PATCH);
        samples.negatives.reserve(picks.len() * PATCH * PATCH);
        for (img_idx, row, col) in picks {
            let pair = &pairs[img_idx as usize];
            crate::image::copy_patch(pair.stego, col as usize, row as usize, PATCH, &mut window);
            samples.positives.extend_from_slice(&window);
            crate::image::copy_patch(pair.cover, col as usize, row as usize, PATCH, &mut window);
            samples.negatives.extend_from_slice(&window);
        }
        out.push(samples);
    }
    out
}

/// Patches fed to the transform fit are reservoir-capped at this count.
pub const SAAB_FIT_CAP: usize = 100_000;

/// Round-2 model slot for one round-1 score decile.
#[derive(Debug, Clone, PartialEq)]
pub enum Round2Slot {
    Trained(GbdtModel),
    /// The decile was empty during training; round-1 scores pass through.
    ReuseRound1,
}

/// The full classifier chain for one cost group.
#[derive(Debug, Clone, PartialEq)]
pub struct Group1Model {
    pub saab: SaabTriple,
    /// Ascending indices into the 83-vector.
    pub selected: Vec<usize>,
    /// All 83 selection losses, kept for diagnostics.
    pub dft_losses: Vec<f64>,
    pub round1: GbdtModel,
    pub round2: Vec<Round2Slot>,
}

/// A group's slot in the trained detector.
#[derive(Debug, Clone, PartialEq)]
pub enum Group1Slot {
    Trained(Group1Model),
    /// No training pairs landed in this group; it scores a flat 0.5.
    Untrainable,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnomalyError {
    Saab(SaabError),
    Dft(DftError),
    Gbdt(GbdtError),
    NoSamples,
    ImageTooSmall { width: usize, height: usize },
}

impl From<SaabError> for AnomalyError {
    fn from(e: SaabError) -> Self {
        AnomalyError::Saab(e)
    }
}
impl From<DftError> for AnomalyError {
    fn from(e: DftError) -> Self {
        AnomalyError::Dft(e)
    }
}
impl From<GbdtError> for AnomalyError {
    fn from(e: GbdtError) -> Self {
        AnomalyError::Gbdt(e)
    }
}

impl core::fmt::Display for AnomalyError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            AnomalyError::Saab(e) => write!(f, "saab: {e}"),
            AnomalyError::Dft(e) => write!(f, "feature selection: {e}"),
            AnomalyError::Gbdt(e) => write!(f, "gbdt: {e}"),
            AnomalyError::NoSamples => write!(f, "group has no training pairs"),
            AnomalyError::ImageTooSmall { width, height } => {
                write!(f, "image {width}x{height} smaller than the {PATCH}x{PATCH} patch")
            }
        }
    }
}

/// Round-1 score decile: `[0, 0.1) -> 0, ..., [0.9, 1.0] -> 9`.
#[inline]
pub fn score_bin(score: f64) -> usize {
    let b = math::floor(score * SCORE_BINS as f64) as usize;
    b.min(SCORE_BINS - 1)
}

/// Trains one group's chain: Saab banks on the pooled patches, selection of
/// the `k_select` most discriminant of the 83 responses, the round-1
/// classifier, then one round-2 classifier per populated round-1 decile of
/// the positives (each positive drags its paired negative into its decile).
///
/// Deciles holding fewer than `round2_min_pairs` pairs reuse the round-1
/// model: a full boosted ensemble fitted on a handful of pairs memorizes
/// noise and scores worse than the model it was meant to refine.
pub fn train_group(
    samples: &GroupSamples,
    config: &GbdtConfig,
    k_select: usize,
    round2_min_pairs: usize,
) -> Result<Group1Model, AnomalyError> {
    let pairs = samples.pair_count();
    if pairs == 0 {
        return Err(AnomalyError::NoSamples);
    }
    let d = PATCH * PATCH;
    let mut pooled = Vec::with_capacity(2 * pairs * d);
    pooled.extend_from_slice(&samples.positives);
    pooled.extend_from_slice(&samples.negatives);
    // The transform fit is capped; classifier training still sees everything.
    let saab = if 2 * pairs <= SAAB_FIT_CAP {
        saab::fit_triple(&pooled)?
    } else {
        let mut reservoir = Reservoir::new(SAAB_FIT_CAP);
        let mut r = rng::stream_rng(config.seed, Stream::SaabSample, 0);
        for i in 0..2 * pairs {
            reservoir.push(&mut r, i);
        }
        let mut sub = Vec::with_capacity(SAAB_FIT_CAP * d);
        for i in reservoir.into_items() {
            sub.extend_from_slice(&pooled[i * d..(i + 1) * d]);
        }
        saab::fit_triple(&sub)?
    };

    // 83-D responses, positives first, then negatives.
    let n = 2 * pairs;
    let mut features = Vec::with_capacity(n * FEATURE_DIM);
    for p in 0..n {
        features.extend_from_slice(&saab::patch_features(&saab, &pooled[p * d..(p + 1) * d]));
    }
    let mut labels = vec![true; pairs];
    labels.extend(core::iter::repeat(false).take(pairs));

    let report = dft::select_features(&features, n, FEATURE_DIM, &labels, k_select)?;
    let selected = report.selected.clone();
    let mut reduced = Vec::with_capacity(n * k_select);
    for p in 0..n {
        for &idx in &selected {
            reduced.push(features[p * FEATURE_DIM + idx]);
        }
    }
    let round1 = gbdt::fit(&reduced, &labels, k_select, config)?;

    // Route pairs into deciles by the positive's round-1 score.
    let mut decile_members: Vec<Vec<usize>> = vec![Vec::new(); SCORE_BINS];
    for pair_idx in 0..pairs {
        let x = &reduced[pair_idx * k_select..(pair_idx + 1) * k_select];
        decile_members[score_bin(round1.predict(x))].push(pair_idx);
    }
    let mut round2 = Vec::with_capacity(SCORE_BINS);
    for members in &decile_members {
        if members.len() < round2_min_pairs.max(1) {
            round2.push(Round2Slot::ReuseRound1);
            continue;
        }
        let mut bin_features = Vec::with_capacity(2 * members.len() * k_select);
        let mut bin_labels = Vec::with_capacity(2 * members.len());
        for &pair_idx in members {
            bin_features
                .extend_from_slice(&reduced[pair_idx * k_select..(pair_idx + 1) * k_select]);
            bin_labels.push(true);
        }
        for &pair_idx in members {
            let neg = pairs + pair_idx;
            bin_features.extend_from_slice(&reduced[neg * k_select..(neg + 1) * k_select]);
            bin_labels.push(false);
        }
        round2.push(Round2Slot::Trained(gbdt::fit(
            &bin_features,
            &bin_labels,
            k_select,
            config,
        )?));
    }

    Ok(Group1Model {
        saab,
        selected,
        dft_losses: report.losses,
        round1,
        round2,
    })
}

impl Group1Model {
    /// Anomaly score for one interior center; `buf` must hold
    /// `selected.len()` slots.
    pub fn score_center(&self, img: &GrayImage, row: usize, col: usize, buf: &mut [f64]) -> f64 {
        self.saab
            .extract_selected(img, row, col, &self.selected, buf);
        let s1 = self.round1.predict(buf);
        match &self.round2[score_bin(s1)] {
            Round2Slot::Trained(m) => m.predict(buf),
            Round2Slot::ReuseRound1 => s1,
        }
    }

    /// Round-1 score only (diagnostics).
    pub fn score_center_round1(
        &self,
        img: &GrayImage,
        row: usize,
        col: usize,
        buf: &mut [f64],
    ) -> f64 {
        self.saab
            .extract_selected(img, row, col, &self.selected, buf);
        self.round1.predict(buf)
    }

    /// `(round-1, round-2)` scores for a flattened 7x7 patch; matches the
    /// image path bit for bit.
    pub fn score_patch_rounds(&self, patch: &[f64]) -> (f64, f64) {
        let feats = saab::patch_features(&self.saab, patch);
        let mut buf = [0.0; FEATURE_DIM];
        for (slot, &idx) in buf.iter_mut().zip(&self.selected) {
            *slot = feats[idx];
        }
        let x = &buf[..self.selected.len()];
        let s1 = self.round1.predict(x);
        let s2 = match &self.round2[score_bin(s1)] {
            Round2Slot::Trained(m) => m.predict(x),
            Round2Slot::ReuseRound1 => s1,
        };
        (s1, s2)
    }
}

/// Anomaly scores over the interior grid, `(height-6) x (width-6)` for the
/// 7x7 patch, row-major, plus each center's group id.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyScoreMap {
    pub width: usize,
    pub height: usize,
    pub scores: Vec<f64>,
    pub groups: Vec<u8>,
}

impl AnomalyScoreMap {
    #[inline]
    pub fn score(&self, row: usize, col: usize) -> f64 {
        self.scores[row * self.width + col]
    }

    #[inline]
    pub fn group(&self, row: usize, col: usize) -> u8 {
        self.groups[row * self.width + col]
    }
}

/// Scores every interior center of `img` with the group models, grouping by
/// the image's own cost map.
pub fn score_image(
    img: &GrayImage,
    costs: &CostMap,
    groups: &[Group1Slot],
    spec: &GroupSpec,
) -> Result<AnomalyScoreMap, AnomalyError> {
    assert_eq!(groups.len(), spec.group_count, "group/model count mismatch");
    assert!(
        costs.width == img.width && costs.height == img.height,
        "cost map does not match the image"
    );
    if img.width < PATCH || img.height < PATCH {
        return Err(AnomalyError::ImageTooSmall {
            width: img.width,
            height: img.height,
        });
    }
    let w = img.width - PATCH + 1;
    let h = img.height - PATCH + 1;
    let mut scores = vec![0.0; w * h];
    let mut group_ids = vec![0u8; w * h];
    let mut buf = vec![0.0; FEATURE_DIM];
    for row in PATCH_MARGIN..img.height - PATCH_MARGIN {
        for col in PATCH_MARGIN..img.width - PATCH_MARGIN {
            let g = spec.assign(spec.patch_cost(costs, row, col));
            let i = (row - PATCH_MARGIN) * w + (col - PATCH_MARGIN);
            group_ids[i] = g as u8;
            scores[i] = match &groups[g] {
                Group1Slot::Trained(model) => {
                    model.score_center(img, row, col, &mut buf[..model.selected.len()])
                }
                Group1Slot::Untrainable => 0.5,
            };
        }
    }
    Ok(AnomalyScoreMap {
        width: w,
        height: h,
        scores,
        groups: group_ids,
    })
}
