//! Saab filter banks: one constant (DC) kernel plus PCA-derived AC kernels.
//!
//! A bank of size `n` holds `n*n` kernels of `n*n` taps. The DC kernel is the
//! constant `1/n` filter; the AC kernels are the eigenvectors of the
//! covariance of mean-removed training patches, ordered by descending
//! eigenvalue. Fitting works in Helmert coordinates — an explicit orthonormal
//! basis of the subspace orthogonal to the constant vector — so every AC
//! kernel is exactly mean-free by construction and the spurious
//! zero-eigenvalue direction never enters the eigenproblem.

use alloc::vec;
use alloc::vec::Vec;

use crate::image::{copy_patch, GrayImage};
use crate::linalg::jacobi_eigh;
use crate::math;

/// The three bank sizes, smallest first.
pub const KERNEL_SIZES: [usize; 3] = [3, 5, 7];
/// Concatenated response dimension: 9 + 25 + 49.
pub const FEATURE_DIM: usize = 83;
/// Interior margin required so all three windows fit.
pub const PATCH_MARGIN: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaabError {
    TooFewPatches { needed: usize, got: usize },
    /// All training patches identical after mean removal.
    ZeroCovariance,
}

impl core::fmt::Display for SaabError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SaabError::TooFewPatches { needed, got } => {
                write!(f, "need at least {needed} patches, got {got}")
            }
            SaabError::ZeroCovariance => write!(f, "training patches have zero variance"),
        }
    }
}

/// One fitted filter bank.
#[derive(Debug, Clone, PartialEq)]
pub struct SaabBank {
    pub kernel_size: usize,
    /// `n*n` kernels of `n*n` taps each, flattened; kernel 0 is DC.
    pub kernels: Vec<f64>,
    /// Descending, one per AC kernel.
    pub eigenvalues: Vec<f64>,
}

impl SaabBank {
    #[inline]
    pub fn dim(&self) -> usize {
        self.kernel_size * self.kernel_size
    }

    #[inline]
    pub fn kernel(&self, k: usize) -> &[f64] {
        let d = self.dim();
        &self.kernels[k * d..(k + 1) * d]
    }

    /// Response of kernel `k` to a flattened window.
    #[inline]
    pub fn respond(&self, window: &[f64], k: usize) -> f64 {
        let kern = self.kernel(k);
        debug_assert_eq!(window.len(), kern.len());
        let mut acc = 0.0;
        for (w, t) in window.iter().zip(kern.iter()) {
            acc += w * t;
        }
        acc
    }
}

/// The per-group triple of banks (3x3, 5x5, 7x7).
#[derive(Debug, Clone, PartialEq)]
pub struct SaabTriple {
    pub banks: [SaabBank; 3],
}

impl SaabTriple {
    pub fn feature_dim(&self) -> usize {
        FEATURE_DIM
    }

    /// Maps a feature index in `0..83` to `(bank_index, kernel_index)`.
    pub fn locate_feature(feature: usize) -> (usize, usize) {
        assert!(feature < FEATURE_DIM);
        if feature < 9 {
            (0, feature)
        } else if feature < 34 {
            (1, feature - 9)
        } else {
            (2, feature - 34)
        }
    }

    /// Taps in the kernel behind a feature index (9, 25, or 49).
    pub fn feature_taps(feature: usize) -> usize {
        let sizes = [3usize, 5, 7];
        let (bank, _) = Self::locate_feature(feature);
        sizes[bank] * sizes[bank]
    }

    /// Extracts the full 83-dimensional response vector at an interior
    /// center, given as `(row, col)`.
    pub fn extract(&self, img: &GrayImage, row: usize, col: usize) -> [f64; FEATURE_DIM] {
        assert!(
            col >= PATCH_MARGIN
                && row >= PATCH_MARGIN
                && col + PATCH_MARGIN < img.width
                && row + PATCH_MARGIN < img.height,
            "center ({row}, {col}) too close to the border of a {}x{} image",
            img.width,
            img.height
        );
        let mut out = [0.0; FEATURE_DIM];
        let mut window = [0.0; 49];
        let mut at = 0;
        for bank in self.banks.iter() {
            let n = bank.kernel_size;
            copy_patch(img, col, row, n, &mut window[..n * n]);
            for k in 0..n * n {
                out[at] = bank.respond(&window[..n * n], k);
                at += 1;
            }
        }
        out
    }

    /// Extracts only the responses named by `selected` (indices into the
    /// 83-vector), writing them to `out` in the same order. Computes just the
    /// needed kernels, which is what keeps inference cheap after feature
    /// selection.
    pub fn extract_selected(
        &self,
        img: &GrayImage,
        row: usize,
        col: usize,
        selected: &[usize],
        out: &mut [f64],
    ) {
        debug_assert_eq!(selected.len(), out.len());
        let mut window = [0.0; 49];
        let mut loaded = usize::MAX;
        for (slot, &feature) in out.iter_mut().zip(selected.iter()) {
            let (b, k) = Self::locate_feature(feature);
            let bank = &self.banks[b];
            let n = bank.kernel_size;
            if loaded != n {
                copy_patch(img, col, row, n, &mut window[..n * n]);
                loaded = n;
            }
            *slot = bank.respond(&window[..n * n], k);
        }
    }
}

/// Writes Helmert row `k` (1-based, `1..d`) of dimension `d` into `out`:
/// `k` leading entries of `1/sqrt(k(k+1))`, then `-k/sqrt(k(k+1))`, then
/// zeros. Rows are orthonormal and exactly orthogonal to the constant vector.
pub fn helmert_row(k: usize, d: usize, out: &mut [f64]) {
    debug_assert!(k >= 1 && k < d && out.len() == d);
    let s = 1.0 / math::sqrt((k * (k + 1)) as f64);
    for slot in out.iter_mut() {
        *slot = 0.0;
    }
    for slot in out.iter_mut().take(k) {
        *slot = s;
    }
    out[k] = -(k as f64) * s;
}

/// Projects a patch onto the `d-1` Helmert coordinates (the mean-free
/// subspace). Runs in O(d) via a running prefix sum.
pub fn helmert_coords(patch: &[f64], out: &mut [f64]) {
    let d = patch.len();
    debug_assert_eq!(out.len(), d - 1);
    let mut prefix = patch[0];
    for k in 1..d {
        let s = 1.0 / math::sqrt((k * (k + 1)) as f64);
        out[k - 1] = (prefix - k as f64 * patch[k]) * s;
        prefix += patch[k];
    }
}

/// Fits one bank from flattened `n*n` patches (`patches.len()` a multiple of
/// `n*n`). See the module docs for the construction.
pub fn fit_bank(patches: &[f64], n: usize) -> Result<SaabBank, SaabError> {
    let d = n * n;
    assert!(patches.len() % d == 0, "patch buffer not a multiple of {d}");
    let count = patches.len() / d;
    if count < d {
        return Err(SaabError::TooFewPatches {
            needed: d,
            got: count,
        });
    }
    let m = d - 1;

    // Accumulate mean and second moment in Helmert coordinates.
    let mut mean = vec![0.0; m];
    let mut moment = vec![0.0; m * m];
    let mut y = vec![0.0; m];
    for p in 0..count {
        helmert_coords(&patches[p * d..(p + 1) * d], &mut y);
        for i in 0..m {
            mean[i] += y[i];
            let yi = y[i];
            for j in i..m {
                moment[i * m + j] += yi * y[j];
            }
        }
    }
    let inv = 1.0 / count as f64;
    for v in mean.iter_mut() {
        *v *= inv;
    }
    let mut cov = vec![0.0; m * m];
    for i in 0..m {
        for j in i..m {
            let c = moment[i * m + j] * inv - mean[i] * mean[j];
            cov[i * m + j] = c;
            cov[j * m + i] = c;
        }
    }
    let trace: f64 = (0..m).map(|i| cov[i * m + i]).sum();
    if trace <= 1e-12 {
        return Err(SaabError::ZeroCovariance);
    }

    let (raw_values, vectors) = jacobi_eigh(&cov, m);

    let mut kernels = vec![0.0; d * d];
    // DC kernel: all taps 1/n, so a constant-c patch responds with n*c.
    for t in 0..d {
        kernels[t] = 1.0 / n as f64;
    }
    let mut row = vec![0.0; d];
    for j in 0..m {
        let coeffs = &vectors[j * m..(j + 1) * m];
        let kernel = &mut kernels[(j + 1) * d..(j + 2) * d];
        for (k, &c) in coeffs.iter().enumerate() {
            helmert_row(k + 1, d, &mut row);
            for t in 0..d {
                kernel[t] += c * row[t];
            }
        }
        // Deterministic sign: largest-magnitude tap positive.
        let mut best = 0;
        for t in 1..d {
            if math::abs(kernel[t]) > math::abs(kernel[best]) {
                best = t;
            }
        }
        if kernel[best] < 0.0 {
            for t in kernel.iter_mut() {
                *t = -*t;
            }
        }
    }
    let eigenvalues = raw_values.iter().map(|&v| v.max(0.0)).collect();
    Ok(SaabBank {
        kernel_size: n,
        kernels,
        eigenvalues,
    })
}

/// Fits all three banks from flattened 7x7 patches; the 3x3 and 5x5 banks
/// train on the central sub-windows of the same patches.
pub fn fit_triple(patches7: &[f64]) -> Result<SaabTriple, SaabError> {
    assert!(patches7.len() % 49 == 0);
    let count = patches7.len() / 49;
    let crop = |n: usize| -> Vec<f64> {
        let off = (7 - n) / 2;
        let mut out = Vec::with_capacity(count * n * n);
        for p in 0..count {
            let patch = &patches7[p * 49..(p + 1) * 49];
            for r in 0..n {
                for c in 0..n {
                    out.push(patch[(r + off) * 7 + (c + off)]);
                }
            }
        }
        out
    };
    let b3 = fit_bank(&crop(3), 3)?;
    let b5 = fit_bank(&crop(5), 5)?;
    let b7 = fit_bank(patches7, 7)?;
    Ok(SaabTriple {
        banks: [b3, b5, b7],
    })
}

/// Full 83-dimensional response vector of one flattened 7x7 patch: the
/// training-side counterpart of [`SaabTriple::extract`]. Both read the same
/// pixel values in the same order, so the responses are bit-identical.
pub fn patch_features(triple: &SaabTriple, patch7: &[f64]) -> [f64; FEATURE_DIM] {
    assert_eq!(patch7.len(), 49);
    let mut out = [0.0; FEATURE_DIM];
    let mut window = [0.0; 49];
    let mut at = 0;
    for bank in triple.banks.iter() {
        let n = bank.kernel_size;
        let off = (7 - n) / 2;
        for r in 0..n {
            for c in 0..n {
                window[r * n + c] = patch7[(r + off) * 7 + (c + off)];
            }
        }
        for k in 0..n * n {
            out[at] = bank.respond(&window[..n * n], k);
            at += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand_chacha::ChaCha12Rng;

    fn random_patches(count: usize, d: usize, seed: u64) -> Vec<f64> {
        let mut r = rng::seed_rng(seed);
        (0..count * d)
            .map(|_| rng::uniform_f64(&mut r) * 255.0)
            .collect()
    }

    fn assert_bank_invariants(bank: &SaabBank) {
        let d = bank.dim();
        let n = bank.kernel_size;
        // DC taps.
        for t in 0..d {
            assert_eq!(bank.kernels[t], 1.0 / n as f64);
        }
        // AC orthonormality and mean-freedom.
        for j in 1..d {
            let kj = bank.kernel(j);
            let ones: f64 = kj.iter().sum();
            assert!(ones.abs() < 1e-10, "kernel {j} not mean-free: {ones}");
            for k in 1..=j {
                let dot: f64 = kj.iter().zip(bank.kernel(k).iter()).map(|(a, b)| a * b).sum();
                let expect = if j == k { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-9, "kernels {j},{k} dot {dot}");
            }
        }
        // Eigenvalues sorted, non-negative.
        for j in 1..bank.eigenvalues.len() {
            assert!(bank.eigenvalues[j - 1] >= bank.eigenvalues[j]);
        }
        assert!(bank.eigenvalues.iter().all(|&v| v >= 0.0));
        assert_eq!(bank.eigenvalues.len(), d - 1);
    }

    #[test]
    fn helmert_rows_are_orthonormal_and_mean_free() {
        for d in [9usize, 25, 49] {
            let mut a = vec![0.0; d];
            let mut b = vec![0.0; d];
            for k in 1..d {
                helmert_row(k, d, &mut a);
                let ones: f64 = a.iter().sum();
                assert!(ones.abs() < 1e-12);
                for l in 1..=k {
                    helmert_row(l, d, &mut b);
                    let dot: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
                    let expect = if l == k { 1.0 } else { 0.0 };
                    assert!((dot - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn helmert_coords_match_explicit_rows() {
        let patch: Vec<f64> = (0..9).map(|i| (i * i) as f64).collect();
        let mut fast = vec![0.0; 8];
        helmert_coords(&patch, &mut fast);
        let mut row = vec![0.0; 9];
        for k in 1..9 {
            helmert_row(k, 9, &mut row);
            let slow: f64 = row.iter().zip(patch.iter()).map(|(a, b)| a * b).sum();
            assert!((fast[k - 1] - slow).abs() < 1e-12);
        }
    }

    #[test]
    fn banks_satisfy_invariants_on_random_data() {
        for n in KERNEL_SIZES {
            let bank = fit_bank(&random_patches(500, n * n, 42), n).unwrap();
            assert_bank_invariants(&bank);
            assert_eq!(bank.kernels.len(), n * n * n * n);
        }
    }

    #[test]
    fn two_component_model_is_recovered() {
        // Patches = a*v1 + b*v2 + c*1 with var(a) >> var(b) >> 0; the top-2
        // AC kernels must span {v1, v2}.
        let d = 9;
        let mut v1 = vec![0.0; d];
        let mut v2 = vec![0.0; d];
        helmert_row(3, d, &mut v1);
        helmert_row(6, d, &mut v2);
        let mut r = rng::seed_rng(9);
        let mut patches = Vec::new();
        for _ in 0..2000 {
            let a = (rng::uniform_f64(&mut r) - 0.5) * 20.0;
            let b = (rng::uniform_f64(&mut r) - 0.5) * 6.0;
            let c = rng::uniform_f64(&mut r) * 100.0;
            for t in 0..d {
                patches.push(a * v1[t] + b * v2[t] + c);
            }
        }
        let bank = fit_bank(&patches, 3).unwrap();
        // Eigenvalue 3 onward is numerically zero.
        assert!(bank.eigenvalues[1] > 1e-3);
        assert!(bank.eigenvalues[2] < 1e-9);
        // Span check: projecting v1 and v2 onto span(k1, k2) preserves norm.
        for v in [&v1, &v2] {
            let mut kept = 0.0;
            for k in 1..=2 {
                let dot: f64 = bank.kernel(k).iter().zip(v.iter()).map(|(a, b)| a * b).sum();
                kept += dot * dot;
            }
            assert!(
                (kept - 1.0).abs() < 1e-10,
                "component outside recovered span: {kept}"
            );
        }
    }

    #[test]
    fn refit_is_bit_identical() {
        let patches = random_patches(300, 25, 7);
        let a = fit_bank(&patches, 5).unwrap();
        let b = fit_bank(&patches, 5).unwrap();
        assert_eq!(a.kernels, b.kernels);
        assert_eq!(a.eigenvalues, b.eigenvalues);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert_eq!(
            fit_bank(&random_patches(8, 9, 1), 3).unwrap_err(),
            SaabError::TooFewPatches { needed: 9, got: 8 }
        );
        let constant = vec![5.0; 20 * 9];
        assert_eq!(fit_bank(&constant, 3).unwrap_err(), SaabError::ZeroCovariance);
        // Patches that differ only by their mean are still degenerate.
        let mut shifted = Vec::new();
        for p in 0..20 {
            shifted.extend(core::iter::repeat(p as f64).take(9));
        }
        assert_eq!(fit_bank(&shifted, 3).unwrap_err(), SaabError::ZeroCovariance);
    }

    fn fit_random_triple(seed: u64) -> SaabTriple {
        fit_triple(&random_patches(400, 49, seed)).unwrap()
    }

    fn random_image(w: usize, h: usize, r: &mut ChaCha12Rng) -> GrayImage {
        GrayImage::from_pixels(
            w,
            h,
            (0..w * h)
                .map(|_| (rng::uniform_f64(r) * 256.0) as u8)
                .collect(),
        )
    }

    #[test]
    fn extract_has_dc_convention_and_zero_ac_on_constant() {
        let triple = fit_random_triple(3);
        let img = GrayImage::from_pixels(9, 9, vec![50; 81]);
        let f = triple.extract(&img, 4, 4);
        assert_eq!(f.len(), FEATURE_DIM);
        // DC responses: n * 50 for n in {3, 5, 7} at positions 0, 9, 34.
        assert!((f[0] - 150.0).abs() < 1e-9);
        assert!((f[9] - 250.0).abs() < 1e-9);
        assert!((f[34] - 350.0).abs() < 1e-9);
        for (i, &v) in f.iter().enumerate() {
            if i != 0 && i != 9 && i != 34 {
                assert!(v.abs() < 1e-9, "AC response {i} = {v} on constant window");
            }
        }
    }

    #[test]
    fn energy_ordering_holds_on_training_data() {
        let patches = random_patches(600, 9, 12);
        let bank = fit_bank(&patches, 3).unwrap();
        let mut vars = Vec::new();
        for k in 1..9 {
            let mut sum = 0.0;
            let mut sq = 0.0;
            for p in 0..600 {
                let resp = bank.respond(&patches[p * 9..(p + 1) * 9], k);
                sum += resp;
                sq += resp * resp;
            }
            let mean = sum / 600.0;
            vars.push(sq / 600.0 - mean * mean);
        }
        for k in 1..vars.len() {
            assert!(
                vars[k - 1] >= vars[k] - 1e-9,
                "variance not ordered at {k}: {:?}",
                vars
            );
        }
        // And each equals its eigenvalue.
        for k in 0..8 {
            assert!((vars[k] - bank.eigenvalues[k]).abs() < 1e-6 * (1.0 + vars[k]));
        }
    }

    #[test]
    fn shift_consistency() {
        let triple = fit_random_triple(8);
        let mut r = rng::seed_rng(31);
        let img = random_image(16, 12, &mut r);
        for (row, col) in [(3, 3), (5, 9), (8, 12)] {
            let direct = triple.extract(&img, row, col);
            // Crop the 7x7 window and extract at its center.
            let mut crop = GrayImage::new(7, 7);
            for dy in 0..7 {
                for dx in 0..7 {
                    crop.set(dx, dy, img.get(col + dx - 3, row + dy - 3));
                }
            }
            let cropped = triple.extract(&crop, 3, 3);
            for i in 0..FEATURE_DIM {
                assert!((direct[i] - cropped[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn selected_extraction_matches_full() {
        let triple = fit_random_triple(4);
        let mut r = rng::seed_rng(5);
        let img = random_image(20, 20, &mut r);
        let selected = [0usize, 5, 9, 30, 34, 82, 1];
        let mut out = [0.0; 7];
        triple.extract_selected(&img, 9, 11, &selected, &mut out);
        let full = triple.extract(&img, 9, 11);
        for (i, &idx) in selected.iter().enumerate() {
            assert_eq!(out[i], full[idx]);
        }
    }

    #[test]
    fn patch_features_match_image_extraction_bitwise() {
        let triple = fit_random_triple(6);
        let mut r = rng::seed_rng(7);
        let img = random_image(18, 15, &mut r);
        let mut patch = [0.0; 49];
        for (row, col) in [(3usize, 3usize), (7, 9), (11, 14)] {
            copy_patch(&img, col, row, 7, &mut patch);
            let via_patch = patch_features(&triple, &patch);
            let via_image = triple.extract(&img, row, col);
            assert_eq!(via_patch[..], via_image[..]);
        }
    }

    #[test]
    fn locate_feature_covers_all_banks() {
        assert_eq!(SaabTriple::locate_feature(0), (0, 0));
        assert_eq!(SaabTriple::locate_feature(8), (0, 8));
        assert_eq!(SaabTriple::locate_feature(9), (1, 0));
        assert_eq!(SaabTriple::locate_feature(33), (1, 24));
        assert_eq!(SaabTriple::locate_feature(34), (2, 0));
        assert_eq!(SaabTriple::locate_feature(82), (2, 48));
    }
}
