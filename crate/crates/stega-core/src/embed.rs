//! Payload-limited simulated ±1 embedding.
//!
//! Instead of running an actual syndrome-trellis coder, each pixel is flipped
//! independently with the optimal change probability
//! `p_i = exp(-lambda * rho_i) / (1 + 2 exp(-lambda * rho_i))` per direction,
//! where `lambda` is solved so the total ternary entropy equals the requested
//! payload. This is the standard simulated sender and is statistically
//! equivalent to optimal coding for detector training purposes.

use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::rand_core::RngCore;

use crate::cost::CostMap;
use crate::image::GrayImage;
use crate::math;
use crate::rng;

/// Result of one simulated embedding.
#[derive(Debug, Clone)]
pub struct EmbeddingResult {
    pub stego: GrayImage,
    /// Row-major applied changes in {-1, 0, +1}; always `stego - cover`.
    pub change_map: Vec<i8>,
    /// Entropy actually encoded, in bits per pixel.
    pub realized_payload: f64,
    /// The solved Lagrange multiplier.
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EmbedError {
    /// Cover/cost dimension mismatch or payload outside (0, 1].
    BadRequest,
    /// Requested payload exceeds the capacity of the non-wet pixels.
    PayloadInfeasible { capacity_bpp: f64 },
    /// Bisection failed to reach the tolerance within the iteration budget.
    NoConvergence { iterations: u32 },
}

impl core::fmt::Display for EmbedError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            EmbedError::BadRequest => write!(f, "payload must be in (0, 1] and costs must match the cover"),
            EmbedError::PayloadInfeasible { capacity_bpp } => {
                write!(f, "payload exceeds cover capacity of {capacity_bpp} bpp")
            }
            EmbedError::NoConvergence { iterations } => {
                write!(f, "lambda search did not converge in {iterations} iterations")
            }
        }
    }
}

const LAMBDA_ITERS: u32 = 200;
const PAYLOAD_RTOL: f64 = 1e-4;

/// Per-direction change probability at a given lambda; wet pixels get 0.
#[inline]
fn change_probability(lambda: f64, rho: f64, wet: f64) -> f64 {
    if rho >= wet {
        return 0.0;
    }
    let e = math::exp(-lambda * rho);
    e / (1.0 + 2.0 * e)
}

fn total_entropy(lambda: f64, costs: &CostMap) -> f64 {
    let wet = costs.wet_threshold;
    costs
        .costs
        .iter()
        .map(|&rho| math::ternary_entropy(change_probability(lambda, rho, wet)))
        .sum()
}

/// Solves for the lambda whose change probabilities carry `target` bits.
///
/// The entropy is strictly decreasing in lambda, from `log2(3)` per non-wet
/// pixel at lambda = 0 toward 0, so plain bisection converges; the bracket's
/// upper end is grown by doubling first.
fn solve_lambda(costs: &CostMap, target: f64) -> Result<(f64, f64), EmbedError> {
    let capacity = total_entropy(0.0, costs);
    if capacity < target {
        return Err(EmbedError::PayloadInfeasible {
            capacity_bpp: capacity / costs.costs.len() as f64,
        });
    }
    let tol = PAYLOAD_RTOL * target;
    if capacity - target <= tol {
        return Ok((0.0, capacity));
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut iters = 0;
    while total_entropy(hi, costs) > target {
        lo = hi;
        hi *= 2.0;
        iters += 1;
        if iters >= LAMBDA_ITERS {
            return Err(EmbedError::NoConvergence { iterations: iters });
        }
    }
    while iters < LAMBDA_ITERS {
        let mid = 0.5 * (lo + hi);
        let h = total_entropy(mid, costs);
        if math::abs(h - target) <= tol {
            return Ok((mid, h));
        }
        if h > target {
            lo = mid;
        } else {
            hi = mid;
        }
        iters += 1;
    }
    Err(EmbedError::NoConvergence {
        iterations: LAMBDA_ITERS,
    })
}

/// Embeds `payload_bpp` bits per pixel into `cover` under `costs`, seeded.
///
/// Each pixel consumes exactly one random draw whether or not it changes, so
/// the change pattern at one pixel is independent of the costs elsewhere.
/// Saturated pixels flip inward (0 goes to +1, 255 goes to -1).
pub fn simulate_embedding(
    cover: &GrayImage,
    costs: &CostMap,
    payload_bpp: f64,
    seed: u64,
) -> Result<EmbeddingResult, EmbedError> {
    if !(payload_bpp > 0.0 && payload_bpp <= 1.0)
        || costs.width != cover.width
        || costs.height != cover.height
        || costs.costs.len() != cover.len()
    {
        return Err(EmbedError::BadRequest);
    }
    let n = cover.len() as f64;
    let target = payload_bpp * n;
    let (lambda, realized) = solve_lambda(costs, target)?;

    let mut rng = rng::seed_rng(seed);
    let wet = costs.wet_threshold;
    let mut stego = cover.clone();
    let mut change_map = vec![0i8; cover.len()];
    for i in 0..cover.len() {
        let draw = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        let p = change_probability(lambda, costs.costs[i], wet);
        let mut delta: i8 = if draw < p {
            -1
        } else if draw < 2.0 * p {
            1
        } else {
            0
        };
        let v = cover.pixels[i];
        if v == 0 && delta == -1 {
            delta = 1;
        } else if v == 255 && delta == 1 {
            delta = -1;
        }
        change_map[i] = delta;
        stego.pixels[i] = (v as i16 + delta as i16) as u8;
    }
    Ok(EmbeddingResult {
        stego,
        change_map,
        realized_payload: realized / n,
        lambda,
    })
}
