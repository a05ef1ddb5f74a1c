//! Gradient-boosted decision trees for binary classification.
//!
//! Newton boosting on the logistic loss: per round, each sample contributes
//! gradient `g = p - y` and hessian `h = p (1 - p)`; splits are chosen among
//! global 32-quantile boundaries per feature by the regularized gain
//! `0.5 [G_L^2/(H_L+l) + G_R^2/(H_R+l) - G^2/(H+l)]`, and leaves score
//! `-G/(H+l)` scaled by the learning rate. No row or column subsampling, so
//! training is fully deterministic.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;

/// Number of histogram bins; split candidates are the bin boundaries.
pub const HIST_BINS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbdtConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    /// Reserved for subsampling extensions; training currently has no
    /// stochastic steps and ignores it.
    pub seed: u64,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        GbdtConfig {
            n_trees: 100,
            max_depth: 2,
            learning_rate: 0.3,
            lambda: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GbdtError {
    TooFewSamples { got: usize },
    SingleClass,
    NoFeatures,
    ShapeMismatch,
}

impl core::fmt::Display for GbdtError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            GbdtError::TooFewSamples { got } => write!(f, "need at least 2 samples, got {got}"),
            GbdtError::SingleClass => write!(f, "both classes must be present"),
            GbdtError::NoFeatures => write!(f, "feature dimension is zero"),
            GbdtError::ShapeMismatch => write!(f, "feature matrix and labels disagree in size"),
        }
    }
}

/// One tree node; trees are tiny (depth <= 2 by default), so boxed children
/// keep the representation simple.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Split {
        feature: u32,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        score: f64,
    },
}

impl TreeNode {
    /// Leaf value for `x`, branching left on `x[feature] <= threshold`.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { score } => return *score,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature as usize] <= *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn internal_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.internal_count() + right.internal_count(),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }
}

/// A fitted boosted ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct GbdtModel {
    pub trees: Vec<TreeNode>,
    pub learning_rate: f64,
    /// Log-odds of the training prior, clipped to +-5.
    pub base_score: f64,
    pub feature_dim: usize,
    /// Depth cap the model was trained with (used by FLOP accounting).
    pub max_depth: usize,
}

/// Comparisons and additions performed by one instrumented prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PredictCost {
    pub comparisons: u64,
    pub additions: u64,
}

impl GbdtModel {
    /// A treeless model that always answers `sigmoid(base_score)`.
    pub fn constant(base_score: f64, feature_dim: usize) -> Self {
        GbdtModel {
            trees: Vec::new(),
            learning_rate: 0.3,
            base_score,
            feature_dim,
            max_depth: 0,
        }
    }

    /// Raw log-odds margin for `x`.
    pub fn predict_margin(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.feature_dim, "feature dimension mismatch");
        let mut m = self.base_score;
        for tree in &self.trees {
            m += tree.evaluate(x);
        }
        m
    }

    /// Soft prediction in (0, 1).
    pub fn predict(&self, x: &[f64]) -> f64 {
        math::sigmoid(self.predict_margin(x))
    }

    /// Prediction plus the exact comparison/addition count it incurred.
    pub fn predict_instrumented(&self, x: &[f64]) -> (f64, PredictCost) {
        assert_eq!(x.len(), self.feature_dim, "feature dimension mismatch");
        let mut cost = PredictCost::default();
        let mut m = self.base_score;
        for tree in &self.trees {
            let mut node = tree;
            loop {
                match node {
                    TreeNode::Leaf { score } => {
                        m += score;
                        cost.additions += 1;
                        break;
                    }
                    TreeNode::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => {
                        cost.comparisons += 1;
                        node = if x[*feature as usize] <= *threshold {
                            left
                        } else {
                            right
                        };
                    }
                }
            }
        }
        (math::sigmoid(m), cost)
    }

    /// Parameter count: 2 per internal node, 1 per leaf, 1 for the base
    /// score.
    pub fn count_params(&self) -> usize {
        1 + self
            .trees
            .iter()
            .map(|t| 2 * t.internal_count() + t.leaf_count())
            .sum::<usize>()
    }

    /// FLOPs per prediction under the published accounting convention:
    /// `depth x trees x 2 + trees`.
    pub fn count_flops_paper(&self) -> usize {
        self.max_depth * self.trees.len() * 2 + self.trees.len()
    }

    /// Input-independent exact bound: the longest root-to-leaf comparison
    /// path of every tree, plus one accumulation per tree.
    pub fn count_flops_exact(&self) -> usize {
        self.trees.iter().map(|t| t.depth() + 1).sum()
    }
}

struct Histogram {
    /// Per (feature, bin): summed gradient, hessian, and occupancy.
    grad: Vec<f64>,
    hess: Vec<f64>,
    count: Vec<u32>,
}

impl Histogram {
    fn new(dim: usize) -> Self {
        Histogram {
            grad: vec![0.0; dim * HIST_BINS],
            hess: vec![0.0; dim * HIST_BINS],
            count: vec![0; dim * HIST_BINS],
        }
    }

    fn clear(&mut self) {
        self.grad.iter_mut().for_each(|v| *v = 0.0);
        self.hess.iter_mut().for_each(|v| *v = 0.0);
        self.count.iter_mut().for_each(|v| *v = 0);
    }

    fn add(&mut self, bins: &[u8], g: f64, h: f64) {
        for (d, &b) in bins.iter().enumerate() {
            self.grad[d * HIST_BINS + b as usize] += g;
            self.hess[d * HIST_BINS + b as usize] += h;
            self.count[d * HIST_BINS + b as usize] += 1;
        }
    }
}

struct Trainer<'a> {
    bins: &'a [u8],
    boundaries: &'a [Vec<f64>],
    dim: usize,
    lambda: f64,
    learning_rate: f64,
    max_depth: usize,
    grad: Vec<f64>,
    hess: Vec<f64>,
}

impl Trainer<'_> {
    fn leaf(&self, g: f64, h: f64) -> TreeNode {
        TreeNode::Leaf {
            score: -g / (h + self.lambda) * self.learning_rate,
        }
    }

    fn build(&self, samples: &[u32], depth: usize, hist: &mut Histogram) -> TreeNode {
        let mut g_total = 0.0;
        let mut h_total = 0.0;
        for &i in samples {
            g_total += self.grad[i as usize];
            h_total += self.hess[i as usize];
        }
        if depth >= self.max_depth || samples.len() < 2 {
            return self.leaf(g_total, h_total);
        }

        hist.clear();
        for &i in samples {
            let row = &self.bins[i as usize * self.dim..(i as usize + 1) * self.dim];
            hist.add(row, self.grad[i as usize], self.hess[i as usize]);
        }

        let parent_term = g_total * g_total / (h_total + self.lambda);
        let mut best_gain = 0.0;
        let mut best: Option<(usize, usize)> = None;
        for d in 0..self.dim {
            let n_bounds = self.boundaries[d].len();
            let mut g_left = 0.0;
            let mut h_left = 0.0;
            let mut n_left = 0u32;
            for b in 0..n_bounds {
                g_left += hist.grad[d * HIST_BINS + b];
                h_left += hist.hess[d * HIST_BINS + b];
                n_left += hist.count[d * HIST_BINS + b];
                // Only boundaries that actually separate this node's samples
                // are candidates.
                if n_left == 0 {
                    continue;
                }
                if n_left as usize == samples.len() {
                    break;
                }
                let g_right = g_total - g_left;
                let h_right = h_total - h_left;
                let gain = 0.5
                    * (g_left * g_left / (h_left + self.lambda)
                        + g_right * g_right / (h_right + self.lambda)
                        - parent_term);
                if gain > best_gain {
                    best_gain = gain;
                    best = Some((d, b));
                }
            }
        }

        let Some((feature, boundary)) = best else {
            return self.leaf(g_total, h_total);
        };
        let mut left_samples = Vec::new();
        let mut right_samples = Vec::new();
        for &i in samples {
            if self.bins[i as usize * self.dim + feature] as usize <= boundary {
                left_samples.push(i);
            } else {
                right_samples.push(i);
            }
        }
        // A boundary chosen from the node's own histogram always separates
        // at least one occupied bin from another.
        debug_assert!(!left_samples.is_empty() && !right_samples.is_empty());
        let left = self.build(&left_samples, depth + 1, hist);
        let right = self.build(&right_samples, depth + 1, hist);
        TreeNode::Split {
            feature: feature as u32,
            threshold: self.boundaries[feature][boundary],
            left: Box::new(left),
            right: Box::new(right),
        }
    }
}

/// Global 32-quantile split candidates for one feature column (deduplicated,
/// max value dropped since it cannot split).
fn quantile_boundaries(mut column: Vec<f64>) -> Vec<f64> {
    column.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    let n = column.len();
    let max = column[n - 1];
    let mut out = Vec::new();
    for q in 1..HIST_BINS {
        let v = column[q * n / HIST_BINS];
        if v < max && out.last() != Some(&v) {
            out.push(v);
        }
    }
    out
}

/// Bin index of `v`: the first boundary with `v <= boundary`, or one past the
/// last. Splitting at boundary `b` sends bins `0..=b` left, which is exactly
/// the `v <= boundary` rule used at prediction time.
fn bin_of(v: f64, boundaries: &[f64]) -> u8 {
    let mut lo = 0usize;
    let mut hi = boundaries.len();
    while lo < hi {
        let mid = (lo + hi) / 2;
        if v <= boundaries[mid] {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    lo as u8
}

/// Fits a model; `features` is row-major `n x dim`.
pub fn fit(
    features: &[f64],
    labels: &[bool],
    dim: usize,
    config: &GbdtConfig,
) -> Result<GbdtModel, GbdtError> {
    fit_traced(features, labels, dim, config).map(|(m, _)| m)
}

/// Like [`fit`], also returning the training logistic loss before boosting
/// and after every round (`n_trees + 1` entries, non-increasing).
pub fn fit_traced(
    features: &[f64],
    labels: &[bool],
    dim: usize,
    config: &GbdtConfig,
) -> Result<(GbdtModel, Vec<f64>), GbdtError> {
    let n = labels.len();
    if dim == 0 {
        return Err(GbdtError::NoFeatures);
    }
    if features.len() != n * dim {
        return Err(GbdtError::ShapeMismatch);
    }
    if n < 2 {
        return Err(GbdtError::TooFewSamples { got: n });
    }
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 || pos == n {
        return Err(GbdtError::SingleClass);
    }

    let base_score = math::ln(pos as f64 / (n - pos) as f64).clamp(-5.0, 5.0);

    let mut boundaries = Vec::with_capacity(dim);
    for d in 0..dim {
        let column: Vec<f64> = (0..n).map(|i| features[i * dim + d]).collect();
        boundaries.push(quantile_boundaries(column));
    }
    let mut bins = vec![0u8; n * dim];
    for i in 0..n {
        for d in 0..dim {
            bins[i * dim + d] = bin_of(features[i * dim + d], &boundaries[d]);
        }
    }

    let mut margins = vec![base_score; n];
    let logistic_loss = |margins: &[f64]| -> f64 {
        let mut loss = 0.0;
        for (m, &y) in margins.iter().zip(labels.iter()) {
            let p = math::sigmoid(*m);
            loss -= if y { math::ln(p) } else { math::ln(1.0 - p) };
        }
        loss / n as f64
    };
    let mut trace = vec![logistic_loss(&margins)];

    let mut trainer = Trainer {
        bins: &bins,
        boundaries: &boundaries,
        dim,
        lambda: config.lambda,
        learning_rate: config.learning_rate,
        max_depth: config.max_depth,
        grad: vec![0.0; n],
        hess: vec![0.0; n],
    };
    let mut hist = Histogram::new(dim);
    let all: Vec<u32> = (0..n as u32).collect();
    let mut trees = Vec::with_capacity(config.n_trees);
    for _ in 0..config.n_trees {
        for i in 0..n {
            let p = math::sigmoid(margins[i]);
            trainer.grad[i] = p - if labels[i] { 1.0 } else { 0.0 };
            trainer.hess[i] = p * (1.0 - p);
        }
        let tree = trainer.build(&all, 0, &mut hist);
        for (i, m) in margins.iter_mut().enumerate() {
            *m += tree.evaluate(&features[i * dim..(i + 1) * dim]);
        }
        trace.push(logistic_loss(&margins));
        trees.push(tree);
    }

    Ok((
        GbdtModel {
            trees,
            learning_rate: config.learning_rate,
            base_score,
            feature_dim: dim,
            max_depth: config.max_depth,
        },
        trace,
    ))
}
