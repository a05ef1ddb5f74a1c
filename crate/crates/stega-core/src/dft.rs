//! Discriminant feature test: rank feature dimensions by the weighted binary
//! entropy of their best single-threshold split and keep the k best.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;

/// Number of uniform bins whose interior boundaries serve as candidate
/// thresholds (31 candidates).
pub const DFT_BINS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DftError {
    TooFewSamples { got: usize },
    SingleClass,
    LengthMismatch,
}

impl core::fmt::Display for DftError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            DftError::TooFewSamples { got } => write!(f, "need at least 2 samples, got {got}"),
            DftError::SingleClass => write!(f, "both classes must be present"),
            DftError::LengthMismatch => write!(f, "values and labels differ in length"),
        }
    }
}

/// Loss of one feature dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DftOutcome {
    /// Weighted binary entropy in bits, in [0, 1].
    pub loss: f64,
    /// True when all values are identical, so no split exists; the loss is
    /// then the label entropy itself.
    pub degenerate: bool,
}

/// Per-dimension losses and the selected subset.
#[derive(Debug, Clone, PartialEq)]
pub struct DftReport {
    /// One loss per dimension; degenerate dimensions are pinned to 1.0 here
    /// so they never outrank an informative dimension.
    pub losses: Vec<f64>,
    pub degenerate: Vec<bool>,
    /// The k smallest-loss dimensions (ties to the lower index), ascending.
    pub selected: Vec<usize>,
    pub k: usize,
}

/// Minimum weighted binary entropy over the 31 interior boundaries of a
/// 32-bin uniform partition of `[min, max]`, splitting into `{v <= t}` and
/// `{v > t}`.
pub fn dft_loss(values: &[f64], labels: &[bool]) -> Result<DftOutcome, DftError> {
    let n = values.len();
    if labels.len() != n {
        return Err(DftError::LengthMismatch);
    }
    if n < 2 {
        return Err(DftError::TooFewSamples { got: n });
    }
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 || pos == n {
        return Err(DftError::SingleClass);
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo == hi {
        return Ok(DftOutcome {
            loss: math::binary_entropy(pos as f64 / n as f64),
            degenerate: true,
        });
    }

    // Histogram pass: per-bin totals and positives. A value landing exactly
    // on an interior boundary belongs to the left side of that boundary's
    // split, so it is pushed into the lower bin.
    let mut count = [0usize; DFT_BINS];
    let mut positive = [0usize; DFT_BINS];
    let width_inv = DFT_BINS as f64 / (hi - lo);
    for (&v, &l) in values.iter().zip(labels.iter()) {
        let u = (v - lo) * width_inv;
        let mut b = math::floor(u) as usize;
        if b > 0 && u == b as f64 {
            b -= 1;
        }
        if b >= DFT_BINS {
            b = DFT_BINS - 1;
        }
        count[b] += 1;
        if l {
            positive[b] += 1;
        }
    }

    // Sweep the 31 interior boundaries via prefix sums.
    let mut best = f64::INFINITY;
    let mut nl = 0usize;
    let mut pl = 0usize;
    for b in 0..DFT_BINS - 1 {
        nl += count[b];
        pl += positive[b];
        let nr = n - nl;
        let pr = pos - pl;
        let mut loss = 0.0;
        if nl > 0 {
            loss += nl as f64 / n as f64 * math::binary_entropy(pl as f64 / nl as f64);
        }
        if nr > 0 {
            loss += nr as f64 / n as f64 * math::binary_entropy(pr as f64 / nr as f64);
        }
        if loss < best {
            best = loss;
        }
    }
    Ok(DftOutcome {
        loss: best,
        degenerate: false,
    })
}

/// Scores every dimension of a row-major `n x dim` matrix and selects the
/// `k` most discriminant.
pub fn select_features(
    matrix: &[f64],
    n: usize,
    dim: usize,
    labels: &[bool],
    k: usize,
) -> Result<DftReport, DftError> {
    assert_eq!(matrix.len(), n * dim, "matrix shape mismatch");
    assert!(k <= dim, "cannot select {k} of {dim} dimensions");
    let mut losses = vec![0.0; dim];
    let mut degenerate = vec![false; dim];
    let mut column = vec![0.0; n];
    for d in 0..dim {
        for (i, slot) in column.iter_mut().enumerate() {
            *slot = matrix[i * dim + d];
        }
        let outcome = dft_loss(&column, labels)?;
        degenerate[d] = outcome.degenerate;
        losses[d] = if outcome.degenerate { 1.0 } else { outcome.loss };
    }
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| {
        losses[i]
            .partial_cmp(&losses[j])
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    let mut selected: Vec<usize> = order.into_iter().take(k).collect();
    selected.sort_unstable();
    Ok(DftReport {
        losses,
        degenerate,
        selected,
        k,
    })
}
