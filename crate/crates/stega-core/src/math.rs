//! Float helpers that work without std.
//!
//! All transcendental calls in this crate go through these wrappers so the
//! same `libm` code paths are used under both std and no_std builds, keeping
//! results bit-identical across configurations.

#[inline]
pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn log2(x: f64) -> f64 {
    libm::log2(x)
}

#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}

/// Binary Shannon entropy of a two-class distribution, in bits.
/// `p` is the fraction of one class; empty or pure inputs give 0.
pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * log2(p) - (1.0 - p) * log2(1.0 - p)
}

/// Ternary entropy of a symmetric +/-1 change distribution, in bits.
/// `p` is the per-direction change probability, so the no-change mass is
/// `1 - 2p`. Defined for `p` in `[0, 0.5]`; the `p = 0` limit is 0.
pub fn ternary_entropy(p: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    let q = 1.0 - 2.0 * p;
    let mut h = -2.0 * p * log2(p);
    if q > 0.0 {
        h -= q * log2(q);
    }
    h
}

/// Logistic sigmoid.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}
