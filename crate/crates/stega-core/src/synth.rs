//! Synthetic cover images for desk-scale experiments.
//!
//! Each cover starts from seeded uniform noise; a repeatedly box-smoothed
//! copy and the raw noise are then mixed half-and-half as alternating blocks
//! of a checkerboard. The result has both smooth and textured regions, so
//! content-adaptive cost maps are non-degenerate, and the block size is kept
//! small relative to typical cost-smoothing windows so embedding spreads into
//! statistically trackable areas rather than hiding entirely in pure noise.
//!
//! The smoothing is applied [`SMOOTH_PASSES`] times: a single 5x5 box pass
//! leaves the "smooth" half with a pixel-level innovation of several gray
//! levels, which drowns the +-1 embedding changes and makes desk-scale
//! detection impossible in principle. Repeated passes push the smooth
//! regions down to quantization-limited local variation, so embedding
//! changes that land there are statistically visible while the raw-noise
//! blocks stay effectively opaque, mirroring the easy/hard content split of
//! natural photographs.

use alloc::vec::Vec;

use crate::cost::{correlate_mirror, mirror_index};
use crate::image::GrayImage;
use crate::rng::{self, Stream};

/// Side length of the alternating smooth/textured blocks. Must comfortably
/// exceed the 7x7 analysis patch so that a useful share of patches sits
/// entirely inside one region type.
pub const BLOCK: usize = 16;

/// Number of 5x5 box-filter passes applied to the smooth half.
pub const SMOOTH_PASSES: usize = 6;

/// Generates the `index`-th synthetic cover of a seeded corpus.
pub fn synthetic_cover(width: usize, height: usize, master_seed: u64, index: u64) -> GrayImage {
    let mut r = rng::stream_rng(master_seed, Stream::SyntheticCover, index);
    let n = width * height;
    let noise: Vec<f64> = (0..n).map(|_| rng::uniform_f64(&mut r) * 255.0).collect();
    let kernel = [1.0 / 25.0; 25];
    let mut smooth = noise.clone();
    for _ in 0..SMOOTH_PASSES {
        smooth = correlate_mirror(&smooth, width, height, &kernel, 5);
    }
    let mut img = GrayImage::new(width, height);
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            let textured = ((x / BLOCK) + (y / BLOCK)) % 2 == 1;
            let v = if textured { noise[i] } else { smooth[i] };
            img.pixels[i] = quantize(v);
        }
    }
    img
}

#[inline]
fn quantize(v: f64) -> u8 {
    let r = crate::math::round(v);
    if r <= 0.0 {
        0
    } else if r >= 255.0 {
        255
    } else {
        r as u8
    }
}

/// Sample variance of the pixels in one block (diagnostic helper).
pub fn block_variance(img: &GrayImage, bx: usize, by: usize) -> f64 {
    let mut sum = 0.0;
    let mut sq = 0.0;
    let mut n = 0.0;
    for dy in 0..BLOCK {
        for dx in 0..BLOCK {
            let x = mirror_index((bx * BLOCK + dx) as isize, img.width);
            let y = mirror_index((by * BLOCK + dy) as isize, img.height);
            let v = img.get(x, y) as f64;
            sum += v;
            sq += v * v;
            n += 1.0;
        }
    }
    let mean = sum / n;
    sq / n - mean * mean
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covers_are_deterministic_and_indexed() {
        let a = synthetic_cover(64, 64, 5, 0);
        let b = synthetic_cover(64, 64, 5, 0);
        let c = synthetic_cover(64, 64, 5, 1);
        assert_eq!(a.pixels, b.pixels);
        assert_ne!(a.pixels, c.pixels);
    }

    #[test]
    fn smooth_and_textured_blocks_alternate() {
        let img = synthetic_cover(64, 64, 9, 3);
        // Block (0,0) is smoothed, block (1,0) is raw noise: the raw block
        // must be far more variable.
        let smooth_var = block_variance(&img, 0, 0);
        let noise_var = block_variance(&img, 1, 0);
        assert!(
            noise_var > 4.0 * smooth_var,
            "noise {noise_var} vs smooth {smooth_var}"
        );
    }

    #[test]
    fn both_region_types_cover_half_the_image() {
        let w = 64;
        let mut textured = 0;
        for y in 0..w {
            for x in 0..w {
                if ((x / BLOCK) + (y / BLOCK)) % 2 == 1 {
                    textured += 1;
                }
            }
        }
        assert_eq!(textured, w * w / 2);
    }

    #[test]
    fn pixels_span_a_wide_range() {
        let img = synthetic_cover(64, 64, 1, 0);
        let min = *img.pixels.iter().min().unwrap();
        let max = *img.pixels.iter().max().unwrap();
        assert!(min < 60 && max > 195, "range [{min}, {max}] too narrow");
    }
}
