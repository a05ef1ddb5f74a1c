//! The trained detector bundle and the per-image detection pipeline.

use alloc::string::String;
use alloc::vec::Vec;

use crate::anomaly::{self, AnomalyError, AnomalyScoreMap, Group1Slot, GroupSpec};
use crate::cost::{CostError, Scheme};
use crate::fusion::{self, FusionModel, ENSEMBLE};
use crate::gbdt::GbdtConfig;
use crate::image::GrayImage;
use crate::spots::{self, Group2Slot, SpotList};

/// Bumped on any change to the model file layout.
pub const FORMAT_VERSION: u32 = 1;

/// Input normalization applied before analysis (training data must have
/// been prepared the same way).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preprocessing {
    None,
    /// 2x box downscale, as used when training on downsized sources.
    HalfSize,
}

impl Preprocessing {
    pub fn apply(&self, img: &GrayImage) -> GrayImage {
        match self {
            Preprocessing::None => img.clone(),
            Preprocessing::HalfSize => img.resize_half(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Preprocessing::None => "none",
            Preprocessing::HalfSize => "half",
        }
    }
}

/// Where a model came from, for reproducibility audits.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub seed: u64,
    /// Order-sensitive digest of the training manifest entries.
    pub dataset_fingerprint: u64,
    /// The flattened key=value configuration the fit ran with.
    pub config_snapshot: String,
}

/// A complete trained detector.
#[derive(Debug, Clone, PartialEq)]
pub struct GsModel {
    pub format_version: u32,
    pub preprocessing: Preprocessing,
    pub scheme: Scheme,
    pub group_spec: GroupSpec,
    pub group1: Vec<Group1Slot>,
    pub group2: Vec<Group2Slot>,
    pub fusion: FusionModel,
    /// The classifier configuration the model was trained with; budget
    /// audits read the nominal tree count/depth from here.
    pub gbdt_config: GbdtConfig,
    pub provenance: Provenance,
}

/// Everything the pipeline produces for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub map: AnomalyScoreMap,
    pub spots: SpotList,
    /// true = stego.
    pub stego: bool,
    pub scores: [f64; ENSEMBLE],
}

#[derive(Debug, Clone, PartialEq)]
pub enum DetectError {
    Cost(CostError),
    Anomaly(AnomalyError),
}

impl From<CostError> for DetectError {
    fn from(e: CostError) -> Self {
        DetectError::Cost(e)
    }
}

impl From<AnomalyError> for DetectError {
    fn from(e: AnomalyError) -> Self {
        DetectError::Anomaly(e)
    }
}

impl core::fmt::Display for DetectError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            DetectError::Cost(e) => write!(f, "cost map: {e}"),
            DetectError::Anomaly(e) => write!(f, "anomaly scoring: {e}"),
        }
    }
}

impl GsModel {
    /// Structural sanity: one module-1 and module-2 slot per group, five
    /// fusion members.
    pub fn validate(&self) -> bool {
        self.group1.len() == self.group_spec.group_count
            && self.group2.len() == self.group_spec.group_count
            && self.fusion.m_values.len() == ENSEMBLE
            && self.fusion.classifiers.len() == ENSEMBLE
            && self
                .fusion
                .m_values
                .windows(2)
                .all(|w| w[0] < w[1])
    }

    /// Runs the full pipeline: preprocessing, the image's own cost map,
    /// per-pixel anomaly scores, spot detection, and the fused decision.
    pub fn analyze(&self, img: &GrayImage) -> Result<Analysis, DetectError> {
        let img = self.preprocessing.apply(img);
        let costs = self.scheme.cost(&img)?;
        let map = anomaly::score_image(&img, &costs, &self.group1, &self.group_spec)?;
        let spots = spots::detect_spots(&map, &self.group2);
        let (stego, scores) = fusion::classify_image(&spots, &self.fusion);
        Ok(Analysis {
            map,
            spots,
            stego,
            scores,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbdt::GbdtModel;
    use crate::math;
    use alloc::string::ToString;
    use alloc::vec;

    fn neutral_model(scheme: Scheme) -> GsModel {
        let spec = GroupSpec::fixed_width(10, 3);
        let logit = |p: f64| math::ln(p / (1.0 - p));
        GsModel {
            format_version: FORMAT_VERSION,
            preprocessing: Preprocessing::None,
            scheme,
            group_spec: spec,
            group1: (0..10).map(|_| Group1Slot::Untrainable).collect(),
            group2: (0..10).map(|_| Group2Slot::Disabled).collect(),
            fusion: FusionModel {
                m_values: vec![1, 2, 3, 4, 5],
                classifiers: (0..5)
                    .map(|i| GbdtModel::constant(logit(0.25), i + 1))
                    .collect(),
            },
            gbdt_config: GbdtConfig::default(),
            provenance: Provenance {
                seed: 1,
                dataset_fingerprint: 0,
                config_snapshot: "".to_string(),
            },
        }
    }

    #[test]
    fn neutral_pipeline_runs_end_to_end() {
        let model = neutral_model(Scheme::Hill);
        assert!(model.validate());
        let img = crate::synth::synthetic_cover(32, 40, 7, 0);
        let analysis = model.analyze(&img).unwrap();
        assert_eq!((analysis.map.width, analysis.map.height), (26, 34));
        assert!(analysis.spots.is_empty()); // all groups disabled
        assert!(!analysis.stego); // constant 0.25 scores lose all votes
        for s in analysis.scores {
            assert!((s - 0.25).abs() < 1e-12);
        }
        // Determinism.
        assert_eq!(model.analyze(&img).unwrap(), analysis);
    }

    #[test]
    fn different_sizes_fit_through_one_model() {
        let model = neutral_model(Scheme::Hill);
        for (w, h) in [(20usize, 20usize), (33, 57)] {
            let img = crate::synth::synthetic_cover(w, h, 9, 1);
            let analysis = model.analyze(&img).unwrap();
            assert_eq!((analysis.map.width, analysis.map.height), (w - 6, h - 6));
        }
    }

    #[test]
    fn undersized_inputs_are_rejected() {
        let model = neutral_model(Scheme::Hill);
        // Below HILL's 15x15 minimum.
        let img = crate::synth::synthetic_cover(10, 10, 3, 0);
        assert!(matches!(
            model.analyze(&img),
            Err(DetectError::Cost(CostError::ImageTooSmall { .. }))
        ));
    }

    #[test]
    fn half_size_preprocessing_shrinks_the_map() {
        let mut model = neutral_model(Scheme::Hill);
        model.preprocessing = Preprocessing::HalfSize;
        let img = crate::synth::synthetic_cover(64, 64, 5, 0);
        let analysis = model.analyze(&img).unwrap();
        assert_eq!((analysis.map.width, analysis.map.height), (26, 26));
    }

    #[test]
    fn validate_catches_shape_mismatches() {
        let mut model = neutral_model(Scheme::Hill);
        model.group2.pop();
        assert!(!model.validate());
    }
}
