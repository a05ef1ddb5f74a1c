//! Grayscale images and patch geometry.

use alloc::vec;
use alloc::vec::Vec;

/// An 8-bit grayscale image in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        GrayImage {
            width,
            height,
            pixels: vec![0; width * height],
        }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<u8>) -> Self {
        assert_eq!(pixels.len(), width * height, "pixel buffer size mismatch");
        GrayImage {
            width,
            height,
            pixels,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Downscales by 2 in each dimension: each output pixel is the rounded
    /// mean of a 2x2 block. Odd trailing rows/columns are dropped.
    pub fn resize_half(&self) -> GrayImage {
        let w = self.width / 2;
        let h = self.height / 2;
        let mut out = GrayImage::new(w, h);
        for y in 0..h {
            for x in 0..w {
                let sum = self.get(2 * x, 2 * y) as u32
                    + self.get(2 * x + 1, 2 * y) as u32
                    + self.get(2 * x, 2 * y + 1) as u32
                    + self.get(2 * x + 1, 2 * y + 1) as u32;
                out.set(x, y, ((sum + 2) >> 2) as u8);
            }
        }
        out
    }
}

/// Geometry of dense odd-sized patch extraction with stride 1 and no padding.
///
/// A patch of size `P` is identified by its center pixel; valid centers are
/// those whose patch lies fully inside the image, i.e. the interior margin is
/// `P/2` on each side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGeometry {
    pub width: usize,
    pub height: usize,
    pub patch: usize,
}

impl PatchGeometry {
    pub fn new(width: usize, height: usize, patch: usize) -> Self {
        assert!(patch % 2 == 1, "patch size must be odd");
        assert!(
            width >= patch && height >= patch,
            "image smaller than patch"
        );
        PatchGeometry {
            width,
            height,
            patch,
        }
    }

    #[inline]
    pub fn margin(&self) -> usize {
        self.patch / 2
    }

    /// Number of valid patch centers per row.
    #[inline]
    pub fn cols(&self) -> usize {
        self.width - self.patch + 1
    }

    /// Number of valid patch centers per column.
    #[inline]
    pub fn rows(&self) -> usize {
        self.height - self.patch + 1
    }

    /// Total number of valid patch centers.
    #[inline]
    pub fn count(&self) -> usize {
        self.cols() * self.rows()
    }

    /// Iterates interior centers in row-major order as `(x, y)` pixel
    /// coordinates.
    pub fn interior_coords(&self) -> impl Iterator<Item = (usize, usize)> {
        let m = self.margin();
        let w = self.width;
        let h = self.height;
        (m..h - m).flat_map(move |y| (m..w - m).map(move |x| (x, y)))
    }

    /// Flat interior index of a center, row-major over valid centers.
    #[inline]
    pub fn interior_index(&self, x: usize, y: usize) -> usize {
        let m = self.margin();
        (y - m) * self.cols() + (x - m)
    }
}

/// Summed-area table over |change| of a ternary change map, for O(1)
/// "does this window contain a change?" queries.
pub struct ChangeIntegral {
    width: usize,
    sums: Vec<u32>,
}

impl ChangeIntegral {
    pub fn new(changes: &[i8], width: usize, height: usize) -> Self {
        assert_eq!(changes.len(), width * height);
        let mut sums = vec![0u32; (width + 1) * (height + 1)];
        for y in 0..height {
            for x in 0..width {
                sums[(y + 1) * (width + 1) + (x + 1)] = changes[y * width + x].unsigned_abs()
                    as u32
                    + sums[y * (width + 1) + (x + 1)]
                    + sums[(y + 1) * (width + 1) + x]
                    - sums[y * (width + 1) + x];
            }
        }
        ChangeIntegral { width, sums }
    }

    /// Number of changed pixels in rows `y0..y1`, columns `x0..x1`
    /// (half-open, in bounds).
    #[inline]
    pub fn window(&self, y0: usize, x0: usize, y1: usize, x1: usize) -> u32 {
        let w = self.width + 1;
        self.sums[y1 * w + x1] + self.sums[y0 * w + x0]
            - self.sums[y0 * w + x1]
            - self.sums[y1 * w + x0]
    }
}

/// Copies the `P x P` patch centered at `(cx, cy)` into `out` as f64,
/// row-major. The center must be interior.
pub fn copy_patch(img: &GrayImage, cx: usize, cy: usize, patch: usize, out: &mut [f64]) {
    let m = patch / 2;
    debug_assert!(out.len() == patch * patch);
    let mut k = 0;
    for dy in 0..patch {
        let y = cy + dy - m;
        let row = y * img.width;
        for dx in 0..patch {
            let x = cx + dx - m;
            out[k] = img.pixels[row + x] as f64;
            k += 1;
        }
    }
}
