//! Embedding-cost models for content-adaptive ±1 steganography.
//!
//! Two cost functions are provided: HILL (a high-pass filter followed by two
//! box-average smoothings, inverted) and S-UNIWARD (relative wavelet-domain
//! change under a Daubechies-8 filter bank). Both use mirror-padded,
//! same-size correlation so the cost map matches the image dimensions.

use alloc::vec;
use alloc::vec::Vec;

use crate::image::GrayImage;
use crate::math;

/// Costs at or above this value mark pixels as "wet": never modified.
pub const WET_THRESHOLD: f64 = 1e10;

/// Per-pixel embedding costs for one image.
#[derive(Debug, Clone)]
pub struct CostMap {
    pub width: usize,
    pub height: usize,
    /// Row-major, non-negative, clamped to `wet_threshold`.
    pub costs: Vec<f64>,
    pub wet_threshold: f64,
}

impl CostMap {
    #[inline]
    pub fn is_wet(&self, i: usize) -> bool {
        self.costs[i] >= self.wet_threshold
    }

    pub fn wet_count(&self) -> usize {
        self.costs.iter().filter(|&&c| c >= self.wet_threshold).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostError {
    /// Image smaller than the scheme's largest filter window.
    ImageTooSmall {
        min: usize,
        width: usize,
        height: usize,
    },
}

impl core::fmt::Display for CostError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            CostError::ImageTooSmall { min, width, height } => write!(
                f,
                "image {width}x{height} is smaller than the {min}x{min} filter window"
            ),
        }
    }
}

/// Supported cost schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Hill,
    Suniward,
}

impl Scheme {
    pub fn cost(self, img: &GrayImage) -> Result<CostMap, CostError> {
        match self {
            Scheme::Hill => hill_cost(img),
            Scheme::Suniward => suniward_cost(img),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Hill => "hill",
            Scheme::Suniward => "suniward",
        }
    }
}

/// Maps an out-of-range coordinate into `[0, n)` by symmetric, edge-inclusive
/// reflection (`-1 -> 0`, `-2 -> 1`, `n -> n-1`, ...).
#[inline]
pub fn mirror_index(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    loop {
        if i < 0 {
            i = -1 - i;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Same-size correlation of a scalar field with an odd `k x k` kernel,
/// reading out-of-bounds samples through mirror reflection.
pub fn correlate_mirror(field: &[f64], w: usize, h: usize, kernel: &[f64], k: usize) -> Vec<f64> {
    assert!(k % 2 == 1, "kernel size must be odd");
    assert_eq!(field.len(), w * h);
    assert_eq!(kernel.len(), k * k);
    let m = (k / 2) as isize;
    let mut out = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = 0.0;
            let mut t = 0;
            for dy in -m..=m {
                let sy = mirror_index(y + dy, h);
                let row = sy * w;
                for dx in -m..=m {
                    let sx = mirror_index(x + dx, w);
                    acc += kernel[t] * field[row + sx];
                    t += 1;
                }
            }
            out[y as usize * w + x as usize] = acc;
        }
    }
    out
}

/// HILL high-pass kernel.
pub const HILL_KB: [f64; 9] = [
    -0.25, 0.5, -0.25, //
    0.5, -1.0, 0.5, //
    -0.25, 0.5, -0.25,
];

fn box_kernel(k: usize) -> Vec<f64> {
    vec![1.0 / (k * k) as f64; k * k]
}

/// HILL cost: the inverse of a twice-smoothed high-pass residual magnitude.
/// Zero-residual positions (e.g. flat regions) become wet.
pub fn hill_cost(img: &GrayImage) -> Result<CostMap, CostError> {
    if img.width < 15 || img.height < 15 {
        return Err(CostError::ImageTooSmall {
            min: 15,
            width: img.width,
            height: img.height,
        });
    }
    let field: Vec<f64> = img.pixels.iter().map(|&p| p as f64).collect();
    let mut r = correlate_mirror(&field, img.width, img.height, &HILL_KB, 3);
    r = correlate_mirror(&r, img.width, img.height, &box_kernel(3), 3);
    for v in r.iter_mut() {
        *v = math::abs(*v);
    }
    let d = correlate_mirror(&r, img.width, img.height, &box_kernel(15), 15);
    let costs = d
        .iter()
        .map(|&den| {
            if den == 0.0 {
                WET_THRESHOLD
            } else {
                let c = 1.0 / den;
                if c > WET_THRESHOLD {
                    WET_THRESHOLD
                } else {
                    c
                }
            }
        })
        .collect();
    Ok(CostMap {
        width: img.width,
        height: img.height,
        costs,
        wet_threshold: WET_THRESHOLD,
    })
}

/// Daubechies-8 high-pass decomposition filter.
pub const DB8_HPDF: [f64; 16] = [
    -0.0544158422,
    0.3128715909,
    -0.6756307363,
    0.5853546837,
    0.0158291053,
    -0.2840155430,
    -0.0004724846,
    0.1287474266,
    0.0173693010,
    -0.0440882539,
    -0.0139810279,
    0.0087460940,
    0.0048703530,
    -0.0003917404,
    -0.0006754494,
    -0.0001174768,
];

/// Daubechies-8 low-pass decomposition filter: `lpdf[i] = (-1)^i hpdf[15-i]`.
pub fn db8_lpdf() -> [f64; 16] {
    let mut lp = [0.0; 16];
    for (i, v) in lp.iter_mut().enumerate() {
        let s = if i % 2 == 0 { 1.0 } else { -1.0 };
        *v = s * DB8_HPDF[15 - i];
    }
    lp
}

/// The three 16x16 directional kernels (LH, HL, HH) as outer products of the
/// 1-D pair, row-major with `K[r][c] = row_filter[r] * col_filter[c]`.
pub fn suniward_kernels() -> [Vec<f64>; 3] {
    let lp = db8_lpdf();
    let hp = DB8_HPDF;
    let outer = |a: &[f64; 16], b: &[f64; 16]| -> Vec<f64> {
        let mut k = Vec::with_capacity(256);
        for &ar in a.iter() {
            for &bc in b.iter() {
                k.push(ar * bc);
            }
        }
        k
    };
    [outer(&lp, &hp), outer(&hp, &lp), outer(&hp, &hp)]
}

/// Offset of the anchor tap within a 16-tap filter: coefficient `(u, v)`
/// covers pixels `(u + r - 7, v + c - 7)` for tap `(r, c)`.
const SU_ANCHOR: isize = 7;
/// Coefficient grid extends this far beyond the image on each side so every
/// coefficient whose support touches the image is present.
const SU_APRON: usize = 8;

/// S-UNIWARD cost: for each pixel, the sum over the three directional
/// subbands of |tap| / (sigma + |coefficient|) across every wavelet
/// coefficient whose support covers the pixel, with sigma = 1 and the
/// undecimated coefficients computed under mirror padding.
pub fn suniward_cost(img: &GrayImage) -> Result<CostMap, CostError> {
    if img.width < 16 || img.height < 16 {
        return Err(CostError::ImageTooSmall {
            min: 16,
            width: img.width,
            height: img.height,
        });
    }
    const SIGMA: f64 = 1.0;
    let (w, h) = (img.width, img.height);
    let (gw, gh) = (w + 2 * SU_APRON - 1, h + 2 * SU_APRON - 1);
    let kernels = suniward_kernels();
    let mut costs = vec![0.0; w * h];
    for kern in kernels.iter() {
        // Coefficient magnitudes on the extended grid, pre-inverted.
        let mut inv = vec![0.0; gw * gh];
        for gu in 0..gh {
            let u = gu as isize - SU_APRON as isize;
            for gv in 0..gw {
                let v = gv as isize - SU_APRON as isize;
                let mut acc = 0.0;
                for r in 0..16 {
                    let y = mirror_index(u + r as isize - SU_ANCHOR, h);
                    let row = y * w;
                    for c in 0..16 {
                        let x = mirror_index(v + c as isize - SU_ANCHOR, w);
                        acc += kern[r * 16 + c] * img.pixels[row + x] as f64;
                    }
                }
                inv[gu * gw + gv] = 1.0 / (SIGMA + math::abs(acc));
            }
        }
        // Scatter-free gather: pixel (i, j) is covered by coefficient
        // (i + 7 - r, j + 7 - c) at tap (r, c).
        for i in 0..h {
            for j in 0..w {
                let mut acc = 0.0;
                for r in 0..16 {
                    let gu = i + SU_ANCHOR as usize + SU_APRON - r;
                    let grow = gu * gw;
                    for c in 0..16 {
                        let gv = j + SU_ANCHOR as usize + SU_APRON - c;
                        acc += math::abs(kern[r * 16 + c]) * inv[grow + gv];
                    }
                }
                costs[i * w + j] += acc;
            }
        }
    }
    for c in costs.iter_mut() {
        if *c > WET_THRESHOLD {
            *c = WET_THRESHOLD;
        }
    }
    Ok(CostMap {
        width: w,
        height: h,
        costs,
        wet_threshold: WET_THRESHOLD,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn mirror_reflects_edges_inclusively() {
        assert_eq!(mirror_index(-1, 5), 0);
        assert_eq!(mirror_index(-2, 5), 1);
        assert_eq!(mirror_index(0, 5), 0);
        assert_eq!(mirror_index(4, 5), 4);
        assert_eq!(mirror_index(5, 5), 4);
        assert_eq!(mirror_index(7, 5), 2);
        // Period-10 reflection: -10 -> 0, -11 -> 0, -12 -> 1.
        assert_eq!(mirror_index(-12, 5), 1);
    }

    #[test]
    fn db8_pair_is_a_valid_qmf() {
        let lp = db8_lpdf();
        let hp = DB8_HPDF;
        let sum_lp: f64 = lp.iter().sum();
        let sum_hp: f64 = hp.iter().sum();
        assert!((sum_lp - core::f64::consts::SQRT_2).abs() < 1e-9);
        assert!(sum_hp.abs() < 1e-9);
        let e_lp: f64 = lp.iter().map(|v| v * v).sum();
        let e_hp: f64 = hp.iter().map(|v| v * v).sum();
        assert!((e_lp - 1.0).abs() < 1e-8);
        assert!((e_hp - 1.0).abs() < 1e-8);
        let cross: f64 = lp.iter().zip(hp.iter()).map(|(a, b)| a * b).sum();
        assert!(cross.abs() < 1e-12);
    }

    #[test]
    fn hill_constant_image_is_all_wet() {
        let img = GrayImage::from_pixels(16, 16, vec![128; 256]);
        let cm = hill_cost(&img).unwrap();
        assert!(cm.costs.iter().all(|&c| c == WET_THRESHOLD));
        assert_eq!(cm.wet_count(), 256);
    }

    #[test]
    fn hill_impulse_lowers_nearby_costs() {
        let mut img = GrayImage::from_pixels(31, 31, vec![100; 31 * 31]);
        img.set(15, 15, 200);
        let cm = hill_cost(&img).unwrap();
        let center = cm.costs[15 * 31 + 15];
        let corner = cm.costs[0];
        assert!(center < corner);
        // The global minimum sits within the impulse's 17x17 reach
        // (3x3 high-pass + 3x3 average keeps the residual within +-2,
        // then the 15x15 average extends it by +-7).
        let (mut best, mut best_xy) = (f64::INFINITY, (0usize, 0usize));
        for y in 0..31 {
            for x in 0..31 {
                if cm.costs[y * 31 + x] < best {
                    best = cm.costs[y * 31 + x];
                    best_xy = (x, y);
                }
            }
        }
        assert!(best_xy.0.abs_diff(15) <= 9 && best_xy.1.abs_diff(15) <= 9);
    }

    #[test]
    fn hill_costs_stay_in_range() {
        let mut r = rng::seed_rng(11);
        let pixels: Vec<u8> = (0..32 * 32)
            .map(|_| (rng::uniform_f64(&mut r) * 256.0) as u8)
            .collect();
        let img = GrayImage::from_pixels(32, 32, pixels);
        let cm = hill_cost(&img).unwrap();
        assert!(cm.costs.iter().all(|&c| (0.0..=WET_THRESHOLD).contains(&c)));
    }

    #[test]
    fn hill_rejects_small_images() {
        let img = GrayImage::new(14, 20);
        assert!(matches!(
            hill_cost(&img),
            Err(CostError::ImageTooSmall { min: 15, .. })
        ));
    }

    #[test]
    fn suniward_flat_cost_matches_filter_mass() {
        // On a constant image every coefficient is 0 (high-pass in at least
        // one direction), so each pixel's cost is the total absolute tap
        // mass: 3 * (sum|lpdf| * sum|hpdf|) ... with lp/hp L1 norms equal.
        let img = GrayImage::from_pixels(24, 24, vec![77; 24 * 24]);
        let cm = suniward_cost(&img).unwrap();
        let l1: f64 = DB8_HPDF.iter().map(|v| math::abs(*v)).sum();
        let expect = 3.0 * l1 * l1;
        for &c in &cm.costs {
            assert!((c - expect).abs() < 1e-9, "cost {c} vs {expect}");
        }
    }

    #[test]
    fn suniward_flat_region_costs_exceed_textured() {
        // Left half flat, right half noisy.
        let mut r = rng::seed_rng(5);
        let mut img = GrayImage::new(48, 32);
        for y in 0..32 {
            for x in 0..48 {
                let v = if x < 24 {
                    120
                } else {
                    (rng::uniform_f64(&mut r) * 256.0) as u8
                };
                img.set(x, y, v);
            }
        }
        let cm = suniward_cost(&img).unwrap();
        // Compare deep interiors to avoid cross-talk at the boundary.
        let mean = |x0: usize, x1: usize| -> f64 {
            let mut s = 0.0;
            let mut n = 0;
            for y in 0..32 {
                for x in x0..x1 {
                    s += cm.costs[y * 48 + x];
                    n += 1;
                }
            }
            s / n as f64
        };
        assert!(mean(0, 8) > mean(40, 48));
    }

    #[test]
    fn suniward_rejects_small_images() {
        let img = GrayImage::new(16, 15);
        assert!(matches!(
            suniward_cost(&img),
            Err(CostError::ImageTooSmall { min: 16, .. })
        ));
    }
}
