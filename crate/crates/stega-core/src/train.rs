//! End-to-end detector fitting: group boundaries and the three modules,
//! with held-out diagnostics along the way.
//!
//! Split roles: modules 1 and 2 fit on the training pairs; the module-2
//! F1 thresholds, the M grid search, and the fusion classifiers all use the
//! validation pairs, so image-level decisions never tune on scores the
//! earlier modules memorized.

use alloc::string::String;
use alloc::vec::Vec;

use crate::anomaly::{
    self, AnomalyError, AnomalyScoreMap, Group1Slot, GroupSpec, TrainPair, PATCH,
};
use crate::cost::{CostError, CostMap, Scheme};
use crate::fusion::{self, FusionError, GridPoint};
use crate::gbdt::GbdtConfig;
use crate::image::GrayImage;
use crate::model::{FORMAT_VERSION, GsModel, Preprocessing, Provenance};
use crate::rng::{self, Reservoir, Stream};
use crate::saab::SaabError;
use crate::spots::{self, Group2Slot, MapPair, SpotError, SpotList};

/// XORed into the master seed for validation-side sampling so it draws a
/// stream independent of the training-side reservoirs.
const VAL_SEED_SALT: u64 = 0x7661_6c5f_7361_6d70;

/// One cover/stego training pair with its ground-truth change map.
#[derive(Debug, Clone)]
pub struct ImagePair {
    pub cover: GrayImage,
    pub stego: GrayImage,
    pub change_map: Vec<i8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryMode {
    /// Quantiles of the training cover patch-cost distribution (default).
    EqualMass,
    /// Unit-width ranges [0,1), [1,2), ...
    FixedWidth,
}

/// Every tunable of the fit; defaults are the reference configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub group_count: usize,
    pub cost_window: usize,
    pub boundary_mode: BoundaryMode,
    /// Features kept per group out of the 83 responses.
    pub k_select: usize,
    pub gbdt: GbdtConfig,
    /// Module-1 pair cap per group, per class.
    pub pair_cap_per_group: usize,
    /// Module-2 block-pair cap per group.
    pub block_cap_per_group: usize,
    /// Patch costs sampled for the equal-mass boundary fit.
    pub boundary_sample_cap: usize,
    /// Groups with fewer training pairs than this go untrainable.
    pub min_pairs_per_group: usize,
    /// Round-1 score deciles with fewer pairs than this reuse the round-1
    /// model instead of fitting a round-2 classifier.
    pub round2_min_pairs: usize,
    /// Validation pair cap per group for the held-out score diagnostics.
    pub val_pair_cap_per_group: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            group_count: 10,
            cost_window: 3,
            boundary_mode: BoundaryMode::EqualMass,
            k_select: 15,
            gbdt: GbdtConfig::default(),
            pair_cap_per_group: 50_000,
            block_cap_per_group: 50_000,
            boundary_sample_cap: 200_000,
            min_pairs_per_group: 1,
            round2_min_pairs: 1000,
            val_pair_cap_per_group: 10_000,
        }
    }
}

/// Held-out quality measures collected during the fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitDiagnostics {
    /// Module-1 training pairs that survived the cap, per group.
    pub group_pair_counts: Vec<usize>,
    /// Module-2 training block pairs, per group.
    pub group_block_counts: Vec<usize>,
    /// Round-1 AUC on validation patches; None when the group is
    /// untrainable or validation has no patches for it.
    pub round1_val_auc: Vec<Option<f64>>,
    /// Same pairs scored through the round-2 stage.
    pub round2_val_auc: Vec<Option<f64>>,
    /// The grid-search accuracy curve behind the five chosen M values.
    pub m_curve: Vec<GridPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FitError {
    EmptyTrain,
    EmptyVal,
    /// Pair `index` of the named split has inconsistent dimensions.
    ShapeMismatch { split: &'static str, index: usize },
    Cost(CostError),
    Anomaly(AnomalyError),
    Spot(SpotError),
    Fusion(FusionError),
}

impl From<CostError> for FitError {
    fn from(e: CostError) -> Self {
        FitError::Cost(e)
    }
}

impl From<AnomalyError> for FitError {
    fn from(e: AnomalyError) -> Self {
        FitError::Anomaly(e)
    }
}

impl From<SpotError> for FitError {
    fn from(e: SpotError) -> Self {
        FitError::Spot(e)
    }
}

impl From<FusionError> for FitError {
    fn from(e: FusionError) -> Self {
        FitError::Fusion(e)
    }
}

impl core::fmt::Display for FitError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            FitError::EmptyTrain => write!(f, "no training pairs"),
            FitError::EmptyVal => write!(f, "no validation pairs"),
            FitError::ShapeMismatch { split, index } => {
                write!(f, "{split} pair {index}: cover/stego/change-map shapes disagree")
            }
            FitError::Cost(e) => write!(f, "cost map: {e}"),
            FitError::Anomaly(e) => write!(f, "module 1: {e}"),
            FitError::Spot(e) => write!(f, "module 2: {e}"),
            FitError::Fusion(e) => write!(f, "module 3: {e}"),
        }
    }
}

fn check_shapes(split: &'static str, pairs: &[ImagePair]) -> Result<(), FitError> {
    for (index, p) in pairs.iter().enumerate() {
        let consistent = p.cover.width == p.stego.width
            && p.cover.height == p.stego.height
            && p.change_map.len() == p.cover.width * p.cover.height;
        if !consistent {
            return Err(FitError::ShapeMismatch { split, index });
        }
    }
    Ok(())
}

fn cost_maps(pairs: &[ImagePair], scheme: Scheme) -> Result<(Vec<CostMap>, Vec<CostMap>), FitError> {
    let mut cover = Vec::with_capacity(pairs.len());
    let mut stego = Vec::with_capacity(pairs.len());
    for p in pairs {
        cover.push(scheme.cost(&p.cover)?);
        stego.push(scheme.cost(&p.stego)?);
    }
    Ok((cover, stego))
}

/// Equal-mass boundaries from a reservoir of training cover patch costs,
/// taken at the same interior centers scoring will use.
fn fit_boundaries(
    train: &[ImagePair],
    cover_costs: &[CostMap],
    config: &TrainConfig,
    seed: u64,
) -> GroupSpec {
    if config.boundary_mode == BoundaryMode::FixedWidth {
        return GroupSpec::fixed_width(config.group_count, config.cost_window);
    }
    let probe = GroupSpec::fixed_width(config.group_count, config.cost_window);
    let margin = PATCH / 2;
    let mut reservoir = Reservoir::new(config.boundary_sample_cap);
    let mut r = rng::stream_rng(seed, Stream::BoundarySample, 0);
    for (pair, costs) in train.iter().zip(cover_costs) {
        let (w, h) = (pair.cover.width, pair.cover.height);
        for row in margin..h - margin {
            for col in margin..w - margin {
                reservoir.push(&mut r, probe.patch_cost(costs, row, col));
            }
        }
    }
    GroupSpec::equal_mass(reservoir.into_items(), config.group_count, config.cost_window)
}

/// Held-out AUC of both scoring rounds for one trained group.
fn val_aucs(model: &anomaly::Group1Model, samples: &anomaly::GroupSamples) -> Option<(f64, f64)> {
    let pairs = samples.pair_count();
    if pairs == 0 {
        return None;
    }
    let d = PATCH * PATCH;
    let score_all = |patches: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut r1 = Vec::with_capacity(pairs);
        let mut r2 = Vec::with_capacity(pairs);
        for p in 0..pairs {
            let (s1, s2) = model.score_patch_rounds(&patches[p * d..(p + 1) * d]);
            r1.push(s1);
            r2.push(s2);
        }
        (r1, r2)
    };
    let (pos1, pos2) = score_all(&samples.positives);
    let (neg1, neg2) = score_all(&samples.negatives);
    Some((fusion::auc(&pos1, &neg1), fusion::auc(&pos2, &neg2)))
}

/// Fits the complete detector. Images are used as given; when
/// `preprocessing` is not `None` the caller must have already applied it,
/// and the tag is stored so detection repeats it.
pub fn fit_detector(
    train: &[ImagePair],
    val: &[ImagePair],
    scheme: Scheme,
    preprocessing: Preprocessing,
    config: &TrainConfig,
    seed: u64,
    dataset_fingerprint: u64,
    config_snapshot: String,
) -> Result<(GsModel, FitDiagnostics), FitError> {
    if train.is_empty() {
        return Err(FitError::EmptyTrain);
    }
    if val.is_empty() {
        return Err(FitError::EmptyVal);
    }
    check_shapes("train", train)?;
    check_shapes("validation", val)?;

    let (train_cover_costs, train_stego_costs) = cost_maps(train, scheme)?;
    let (val_cover_costs, val_stego_costs) = cost_maps(val, scheme)?;

    let spec = fit_boundaries(train, &train_cover_costs, config, seed);

    // Module 1: per-group two-round scoring chains from training patches.
    let train_view: Vec<TrainPair> = train
        .iter()
        .zip(&train_cover_costs)
        .map(|(p, c)| TrainPair {
            cover: &p.cover,
            stego: &p.stego,
            change_map: &p.change_map,
            costs: c,
        })
        .collect();
    let group_samples = anomaly::sample_pairs(&train_view, &spec, config.pair_cap_per_group, seed);
    let group_pair_counts: Vec<usize> = group_samples.iter().map(|s| s.pair_count()).collect();

    let mut group1 = Vec::with_capacity(config.group_count);
    for samples in &group_samples {
        if samples.pair_count() < config.min_pairs_per_group.max(1) {
            group1.push(Group1Slot::Untrainable);
            continue;
        }
        match anomaly::train_group(
            samples,
            &config.gbdt,
            config.k_select,
            config.round2_min_pairs,
        ) {
            Ok(m) => group1.push(Group1Slot::Trained(m)),
            // Degenerate content (constant patches) or a group too thin to
            // estimate a patch covariance degrades gracefully.
            Err(AnomalyError::Saab(SaabError::ZeroCovariance))
            | Err(AnomalyError::Saab(SaabError::TooFewPatches { .. })) => {
                group1.push(Group1Slot::Untrainable)
            }
            Err(e) => return Err(e.into()),
        }
    }

    // Held-out diagnostics: the same sampler on validation pairs, scored
    // through both rounds.
    let val_view: Vec<TrainPair> = val
        .iter()
        .zip(&val_cover_costs)
        .map(|(p, c)| TrainPair {
            cover: &p.cover,
            stego: &p.stego,
            change_map: &p.change_map,
            costs: c,
        })
        .collect();
    let val_samples = anomaly::sample_pairs(
        &val_view,
        &spec,
        config.val_pair_cap_per_group,
        seed ^ VAL_SEED_SALT,
    );
    let mut round1_val_auc = Vec::with_capacity(config.group_count);
    let mut round2_val_auc = Vec::with_capacity(config.group_count);
    for (slot, samples) in group1.iter().zip(&val_samples) {
        match slot {
            Group1Slot::Trained(m) => match val_aucs(m, samples) {
                Some((a1, a2)) => {
                    round1_val_auc.push(Some(a1));
                    round2_val_auc.push(Some(a2));
                }
                None => {
                    round1_val_auc.push(None);
                    round2_val_auc.push(None);
                }
            },
            Group1Slot::Untrainable => {
                round1_val_auc.push(None);
                round2_val_auc.push(None);
            }
        }
    }

    // Anomaly maps for every image, each from its own cost map (matching
    // detection-time conditions).
    let score_all = |pairs: &[ImagePair],
                     cover_costs: &[CostMap],
                     stego_costs: &[CostMap]|
     -> Result<Vec<(AnomalyScoreMap, AnomalyScoreMap)>, FitError> {
        pairs
            .iter()
            .zip(cover_costs.iter().zip(stego_costs))
            .map(|(p, (cc, sc))| {
                let cover = anomaly::score_image(&p.cover, cc, &group1, &spec)?;
                let stego = anomaly::score_image(&p.stego, sc, &group1, &spec)?;
                Ok((cover, stego))
            })
            .collect()
    };
    let train_maps = score_all(train, &train_cover_costs, &train_stego_costs)?;
    let val_maps = score_all(val, &val_cover_costs, &val_stego_costs)?;

    // Module 2: matched filters and block classifiers from training maps,
    // F1 thresholds from validation maps.
    let train_map_view: Vec<MapPair> = train
        .iter()
        .zip(&train_maps)
        .map(|(p, (c, s))| MapPair {
            cover_map: c,
            stego_map: s,
            change_map: &p.change_map,
            image_width: p.cover.width,
            image_height: p.cover.height,
        })
        .collect();
    let val_map_view: Vec<MapPair> = val
        .iter()
        .zip(&val_maps)
        .map(|(p, (c, s))| MapPair {
            cover_map: c,
            stego_map: s,
            change_map: &p.change_map,
            image_width: p.cover.width,
            image_height: p.cover.height,
        })
        .collect();
    let block_samples = spots::sample_blocks(
        &train_map_view,
        config.group_count,
        config.block_cap_per_group,
        seed,
    );
    let val_blocks = spots::sample_blocks(
        &val_map_view,
        config.group_count,
        config.block_cap_per_group,
        seed ^ VAL_SEED_SALT,
    );
    let group_block_counts: Vec<usize> = block_samples.iter().map(|s| s.pair_count()).collect();

    let mut group2 = Vec::with_capacity(config.group_count);
    for g in 0..config.group_count {
        match spots::train_group2(g as u8, &block_samples[g], &val_blocks[g], &config.gbdt) {
            Ok(m) => group2.push(Group2Slot::Trained(m)),
            Err(SpotError::NoPositives) => group2.push(Group2Slot::Disabled),
            Err(e) => return Err(e.into()),
        }
    }

    // Module 3: spots of every validation map, then the M grid search and
    // the five fusion classifiers. The grid scales by the mean validation
    // interior area.
    let fusion_pairs: Vec<(SpotList, SpotList)> = val_maps
        .iter()
        .map(|(c, s)| (spots::detect_spots(c, &group2), spots::detect_spots(s, &group2)))
        .collect();
    let area_sum: usize = val_maps.iter().map(|(c, _)| c.width * c.height).sum();
    let interior_pixels = (area_sum + val_maps.len() / 2) / val_maps.len();
    let (fusion_model, m_curve) = fusion::fit_fusion(&fusion_pairs, interior_pixels, &config.gbdt)?;

    let model = GsModel {
        format_version: FORMAT_VERSION,
        preprocessing,
        scheme,
        group_spec: spec,
        group1,
        group2,
        fusion: fusion_model,
        gbdt_config: config.gbdt,
        provenance: Provenance {
            seed,
            dataset_fingerprint,
            config_snapshot,
        },
    };
    let diagnostics = FitDiagnostics {
        group_pair_counts,
        group_block_counts,
        round1_val_auc,
        round2_val_auc,
        m_curve,
    };
    Ok((model, diagnostics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::simulate_embedding;
    use crate::synth::synthetic_cover;
    use alloc::string::ToString;

    fn make_pairs(count: usize, width: usize, height: usize, master: u64) -> Vec<ImagePair> {
        (0..count)
            .map(|i| {
                let cover = synthetic_cover(width, height, master, i as u64);
                let costs = Scheme::Hill.cost(&cover).unwrap();
                let embedded = simulate_embedding(&cover, &costs, 0.4, master ^ i as u64).unwrap();
                ImagePair {
                    cover,
                    stego: embedded.stego,
                    change_map: embedded.change_map,
                }
            })
            .collect()
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            group_count: 4,
            pair_cap_per_group: 1_500,
            block_cap_per_group: 1_500,
            boundary_sample_cap: 20_000,
            val_pair_cap_per_group: 800,
            ..TrainConfig::default()
        }
    }

    fn fit_small(train_n: usize, val_n: usize) -> (GsModel, FitDiagnostics) {
        let train = make_pairs(train_n, 32, 32, 100);
        let val = make_pairs(val_n, 32, 32, 200);
        fit_detector(
            &train,
            &val,
            Scheme::Hill,
            Preprocessing::None,
            &small_config(),
            42,
            0xfeed,
            "test".to_string(),
        )
        .unwrap()
    }

    #[test]
    fn small_fit_produces_a_coherent_model() {
        let (model, diag) = fit_small(16, 8);
        assert!(model.validate());
        assert_eq!(model.format_version, FORMAT_VERSION);
        assert_eq!(model.provenance.seed, 42);
        assert_eq!(model.group_spec.group_count, 4);
        assert_eq!(diag.group_pair_counts.len(), 4);
        assert_eq!(diag.group_block_counts.len(), 4);
        assert_eq!(diag.round1_val_auc.len(), 4);
        assert!(!diag.m_curve.is_empty());
        assert!(diag.m_curve.windows(2).all(|w| w[0].m < w[1].m));
        // The dense 0.4 bpp embedding leaves every group trainable here.
        assert!(model
            .group1
            .iter()
            .any(|s| matches!(s, Group1Slot::Trained(_))));
        // Any trained group got an AUC, and every AUC is a probability.
        for (slot, auc) in model.group1.iter().zip(&diag.round1_val_auc) {
            if matches!(slot, Group1Slot::Trained(_)) {
                let a = auc.expect("trained group has validation patches here");
                assert!((0.0..=1.0).contains(&a));
            }
        }
        // The model analyzes fresh images end to end.
        let fresh = make_pairs(2, 32, 32, 300);
        for pair in &fresh {
            let analysis = model.analyze(&pair.cover).unwrap();
            assert_eq!((analysis.map.width, analysis.map.height), (26, 26));
            for s in analysis.scores {
                assert!((0.0..=1.0).contains(&s));
            }
        }
    }

    #[test]
    fn refit_is_bit_identical() {
        let (a, da) = fit_small(10, 6);
        let (b, db) = fit_small(10, 6);
        assert_eq!(a, b);
        assert_eq!(da, db);
    }

    #[test]
    fn fixed_width_mode_uses_unit_ranges() {
        let train = make_pairs(6, 32, 32, 100);
        let val = make_pairs(4, 32, 32, 200);
        let config = TrainConfig {
            boundary_mode: BoundaryMode::FixedWidth,
            ..small_config()
        };
        let (model, _) = fit_detector(
            &train,
            &val,
            Scheme::Hill,
            Preprocessing::None,
            &config,
            7,
            0,
            String::new(),
        )
        .unwrap();
        assert_eq!(model.group_spec.boundaries[..4], [0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn empty_splits_are_rejected() {
        let pairs = make_pairs(2, 32, 32, 100);
        let err = fit_detector(
            &[],
            &pairs,
            Scheme::Hill,
            Preprocessing::None,
            &small_config(),
            1,
            0,
            String::new(),
        )
        .unwrap_err();
        assert_eq!(err, FitError::EmptyTrain);
        let err = fit_detector(
            &pairs,
            &[],
            Scheme::Hill,
            Preprocessing::None,
            &small_config(),
            1,
            0,
            String::new(),
        )
        .unwrap_err();
        assert_eq!(err, FitError::EmptyVal);
    }

    #[test]
    fn shape_mismatch_is_reported_with_its_index() {
        let mut train = make_pairs(3, 32, 32, 100);
        train[1].change_map.pop();
        let val = make_pairs(2, 32, 32, 200);
        let err = fit_detector(
            &train,
            &val,
            Scheme::Hill,
            Preprocessing::None,
            &small_config(),
            1,
            0,
            String::new(),
        )
        .unwrap_err();
        assert_eq!(
            err,
            FitError::ShapeMismatch {
                split: "train",
                index: 1
            }
        );
    }

    #[test]
    fn min_pairs_floor_forces_untrainable_groups() {
        let train = make_pairs(6, 32, 32, 100);
        let val = make_pairs(4, 32, 32, 200);
        let config = TrainConfig {
            min_pairs_per_group: usize::MAX,
            ..small_config()
        };
        let err = fit_detector(
            &train,
            &val,
            Scheme::Hill,
            Preprocessing::None,
            &config,
            7,
            0,
            String::new(),
        );
        // Every group goes untrainable; module 2 then sees flat 0.5 maps
        // whose blocks all still sample, so the fit either completes with
        // untrainable module-1 slots or fails in a later module -- both
        // prove the floor was applied.
        match err {
            Ok((model, _)) => assert!(model
                .group1
                .iter()
                .all(|s| matches!(s, Group1Slot::Untrainable))),
            Err(e) => assert!(
                matches!(e, FitError::Spot(_) | FitError::Fusion(_)),
                "unexpected error {e:?}"
            ),
        }
    }

}
