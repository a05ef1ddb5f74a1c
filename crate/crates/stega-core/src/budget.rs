//! Parameter and FLOP audits of a trained detector.
//!
//! Two conventions are reported side by side:
//!
//! * `Paper` reproduces the published accounting: classifiers are counted
//!   at a nominal 1K parameters and `2*trees*depth + trees` FLOPs from the
//!   configured architecture, per-pixel transform cost is summed across
//!   groups, and the matched filter is charged for a single correlation.
//! * `Exact` counts what the stored models actually hold and what a worst
//!   case pixel actually executes: real node/leaf counts, the deepest
//!   group's selected filters only, and all nine block correlations.
//!
//! The gap between the two is the point of the audit: the nominal ledger
//! rounds generously, and the exact column shows by how much.

use crate::fusion::FusionModel;
use crate::gbdt::GbdtModel;
use crate::model::GsModel;
use crate::saab::{SaabTriple, FEATURE_DIM};
use crate::spots::{Group2Slot, SPOT};

/// Tap count of one full bank triple (9x9 + 25x25 + 49x49).
pub const FULL_TRIPLE_TAPS: u64 = 9 * 9 + 25 * 25 + 49 * 49;

/// Nominal parameter allowance per classifier under the paper convention.
pub const NOMINAL_CLASSIFIER_PARAMS: u64 = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convention {
    Paper,
    Exact,
}

impl Convention {
    pub fn name(&self) -> &'static str {
        match self {
            Convention::Paper => "paper",
            Convention::Exact => "exact",
        }
    }
}

/// Model size in stored parameters. `saab_full` is the undeployed
/// alternative (every filter of every group) and stays out of `total`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamsReport {
    pub convention: Convention,
    pub saab_selected: u64,
    pub saab_full: u64,
    pub module1_classifiers: u64,
    pub module1_total: u64,
    pub module2_classifiers: u64,
    pub module3_classifiers: u64,
    pub total: u64,
}

/// Per-pixel work. `saab_full` is again the undeployed alternative;
/// `module3_amortized` spreads the image-level ensemble over the interior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlopsReport {
    pub convention: Convention,
    pub interior_pixels: u64,
    pub patch_cost: f64,
    pub saab_selected: f64,
    pub saab_full: f64,
    pub module1_classifiers: f64,
    pub module1_subtotal: f64,
    pub module2_matched_filter: f64,
    pub module2_classifier: f64,
    pub module2_subtotal: f64,
    pub module3_amortized: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetReport {
    pub params: ParamsReport,
    pub flops: FlopsReport,
}

/// Stored taps across one group's selected filters.
fn selected_taps(selected: &[usize]) -> u64 {
    selected
        .iter()
        .map(|&f| SaabTriple::feature_taps(f) as u64)
        .sum()
}

/// Stored parameters of one module-1 chain (both rounds; reused slots add
/// nothing).
fn group1_exact_params(m: &crate::anomaly::Group1Model) -> u64 {
    let round2: u64 = m
        .round2
        .iter()
        .map(|slot| match slot {
            crate::anomaly::Round2Slot::Trained(g) => g.count_params() as u64,
            crate::anomaly::Round2Slot::ReuseRound1 => 0,
        })
        .sum();
    m.round1.count_params() as u64 + round2
}

/// Worst-case per-pixel classifier FLOPs of one module-1 chain: round 1
/// plus the most expensive round-2 route.
fn group1_exact_flops(m: &crate::anomaly::Group1Model) -> u64 {
    let worst2 = m
        .round2
        .iter()
        .map(|slot| match slot {
            crate::anomaly::Round2Slot::Trained(g) => g.count_flops_exact() as u64,
            crate::anomaly::Round2Slot::ReuseRound1 => 0,
        })
        .max()
        .unwrap_or(0);
    m.round1.count_flops_exact() as u64 + worst2
}

fn nominal_flops(trees: usize, depth: usize) -> f64 {
    (2 * trees * depth + trees) as f64
}

fn fusion_exact_flops(fusion: &FusionModel) -> u64 {
    fusion
        .classifiers
        .iter()
        .map(|c: &GbdtModel| c.count_flops_exact() as u64)
        .sum()
}

pub fn audit_params(model: &GsModel, convention: Convention) -> ParamsReport {
    let g = model.group_spec.group_count as u64;
    let saab_selected: u64 = model
        .group1
        .iter()
        .map(|slot| match slot {
            crate::anomaly::Group1Slot::Trained(m) => selected_taps(&m.selected),
            crate::anomaly::Group1Slot::Untrainable => 0,
        })
        .sum();
    let saab_full = g * FULL_TRIPLE_TAPS;

    let (module1_classifiers, module2_classifiers, module3_classifiers) = match convention {
        Convention::Paper => {
            // Nominal 1K per classifier slot of the architecture: one
            // round-1 plus SCORE_BINS round-2 models per group, one block
            // classifier per group, and the fusion ensemble.
            let m1 = NOMINAL_CLASSIFIER_PARAMS * (g + g * crate::anomaly::SCORE_BINS as u64);
            let m2 = NOMINAL_CLASSIFIER_PARAMS * g;
            let m3 = NOMINAL_CLASSIFIER_PARAMS * model.fusion.classifiers.len() as u64;
            (m1, m2, m3)
        }
        Convention::Exact => {
            let m1 = model
                .group1
                .iter()
                .map(|slot| match slot {
                    crate::anomaly::Group1Slot::Trained(m) => group1_exact_params(m),
                    crate::anomaly::Group1Slot::Untrainable => 0,
                })
                .sum();
            // Block classifier plus the nine filter taps and the threshold.
            let m2 = model
                .group2
                .iter()
                .map(|slot| match slot {
                    Group2Slot::Trained(m) => {
                        m.classifier.count_params() as u64 + (SPOT * SPOT) as u64 + 1
                    }
                    Group2Slot::Disabled => 0,
                })
                .sum();
            let m3 = model
                .fusion
                .classifiers
                .iter()
                .map(|c| c.count_params() as u64)
                .sum();
            (m1, m2, m3)
        }
    };
    let module1_total = saab_selected + module1_classifiers;
    ParamsReport {
        convention,
        saab_selected,
        saab_full,
        module1_classifiers,
        module1_total,
        module2_classifiers,
        module3_classifiers,
        total: module1_total + module2_classifiers + module3_classifiers,
    }
}

pub fn audit_flops(model: &GsModel, convention: Convention, interior_pixels: usize) -> FlopsReport {
    let g = model.group_spec.group_count;
    let w = model.group_spec.cost_window as f64;
    let any_group2 = model
        .group2
        .iter()
        .any(|s| matches!(s, Group2Slot::Trained(_)));
    let interior = interior_pixels.max(1) as f64;

    let patch_cost = if g > 0 { w * w } else { 0.0 };
    let saab_full = if g > 0 { 2.0 * FULL_TRIPLE_TAPS as f64 } else { 0.0 };

    let report = match convention {
        Convention::Paper => {
            // Published method: two FLOPs per selected tap, summed over all
            // groups' selections.
            let saab_selected: f64 = model
                .group1
                .iter()
                .map(|slot| match slot {
                    crate::anomaly::Group1Slot::Trained(m) => {
                        2.0 * selected_taps(&m.selected) as f64
                    }
                    crate::anomaly::Group1Slot::Untrainable => 0.0,
                })
                .sum();
            let nominal = nominal_flops(model.gbdt_config.n_trees, model.gbdt_config.max_depth);
            let module1_classifiers = if g > 0 { nominal } else { 0.0 };
            let module2_matched_filter = if any_group2 {
                (2 * SPOT * SPOT - 1) as f64
            } else {
                0.0
            };
            let module2_classifier = if any_group2 { nominal } else { 0.0 };
            let module3_amortized =
                model.fusion.classifiers.len() as f64 * nominal / interior;
            (
                saab_selected,
                module1_classifiers,
                module2_matched_filter,
                module2_classifier,
                module3_amortized,
            )
        }
        Convention::Exact => {
            // Worst-case pixel: the most expensive group's selection at
            // 2*taps - 1 FLOPs per filter, real tree depths, and all nine
            // block correlations behind the 18-D features.
            let saab_selected = model
                .group1
                .iter()
                .map(|slot| match slot {
                    crate::anomaly::Group1Slot::Trained(m) => m
                        .selected
                        .iter()
                        .map(|&f| 2 * SaabTriple::feature_taps(f) as u64 - 1)
                        .sum(),
                    crate::anomaly::Group1Slot::Untrainable => 0,
                })
                .max()
                .unwrap_or(0) as f64;
            let module1_classifiers = model
                .group1
                .iter()
                .map(|slot| match slot {
                    crate::anomaly::Group1Slot::Trained(m) => group1_exact_flops(m),
                    crate::anomaly::Group1Slot::Untrainable => 0,
                })
                .max()
                .unwrap_or(0) as f64;
            let correlation = (2 * SPOT * SPOT - 1) as f64;
            let module2_matched_filter = if any_group2 {
                (SPOT * SPOT) as f64 * correlation
            } else {
                0.0
            };
            let module2_classifier = model
                .group2
                .iter()
                .map(|slot| match slot {
                    Group2Slot::Trained(m) => m.classifier.count_flops_exact() as u64,
                    Group2Slot::Disabled => 0,
                })
                .max()
                .unwrap_or(0) as f64;
            let module3_amortized = fusion_exact_flops(&model.fusion) as f64 / interior;
            (
                saab_selected,
                module1_classifiers,
                module2_matched_filter,
                module2_classifier,
                module3_amortized,
            )
        }
    };
    let (saab_selected, module1_classifiers, module2_matched_filter, module2_classifier, module3_amortized) =
        report;
    let module1_subtotal = saab_selected + module1_classifiers;
    let module2_subtotal = module2_matched_filter + module2_classifier;
    FlopsReport {
        convention,
        interior_pixels: interior_pixels as u64,
        patch_cost,
        saab_selected,
        saab_full,
        module1_classifiers,
        module1_subtotal,
        module2_matched_filter,
        module2_classifier,
        module2_subtotal,
        module3_amortized,
        total: patch_cost + module1_subtotal + module2_subtotal + module3_amortized,
    }
}

pub fn audit(model: &GsModel, convention: Convention, interior_pixels: usize) -> BudgetReport {
    BudgetReport {
        params: audit_params(model, convention),
        flops: audit_flops(model, convention, interior_pixels),
    }
}

/// The 83-feature dimensionality the tap table is defined over; exposed so
/// downstream fixtures can sanity-check their selections.
pub fn max_feature_index() -> usize {
    FEATURE_DIM - 1
}
