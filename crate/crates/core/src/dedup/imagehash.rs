//! 64-bit perceptual hashes of grayscale rasters.
//!
//! Bit `i` of a hash is stored at position `63 - i`, so the hex form reads in
//! bit order. Downscaling is exact area averaging done in integers: target
//! cells are compared through their weighted pixel sums, which share one
//! denominator, so uniform images never produce spurious gradients.

use crate::raster::Raster;

/// Weighted source-pixel sums of each cell of a `tw × th` area-average
/// downscale. Every cell's weights total `w * h`.
pub fn box_sums(raster: &Raster, tw: usize, th: usize) -> Vec<u64> {
    let (w, h) = (raster.width() as usize, raster.height() as usize);
    // Overlap of source index s (span [s*t, (s+1)*t)) with cell c (span [c*n, (c+1)*n)).
    let spans = |n: usize, t: usize| -> Vec<Vec<(usize, u64)>> {
        (0..t)
            .map(|c| {
                let (lo, hi) = (c * n, (c + 1) * n);
                (lo / t..=((hi - 1) / t).min(n - 1))
                    .filter_map(|s| {
                        let o = ((s + 1) * t).min(hi).saturating_sub((s * t).max(lo));
                        (o > 0).then_some((s, o as u64))
                    })
                    .collect()
            })
            .collect()
    };
    let xs = spans(w, tw);
    let ys = spans(h, th);
    let px = raster.pixels();
    let mut row_sums = vec![0u64; h * tw];
    for y in 0..h {
        let row = &px[y * w..(y + 1) * w];
        for (cx, span) in xs.iter().enumerate() {
            row_sums[y * tw + cx] = span.iter().map(|&(x, o)| u64::from(row[x]) * o).sum();
        }
    }
    let mut out = vec![0u64; tw * th];
    for (cy, span) in ys.iter().enumerate() {
        for cx in 0..tw {
            out[cy * tw + cx] = span.iter().map(|&(y, o)| row_sums[y * tw + cx] * o).sum();
        }
    }
    out
}

/// Area-average downscale to `tw × th` as floating-point intensities.
pub fn downscale(raster: &Raster, tw: usize, th: usize) -> Vec<f64> {
    let denom = (raster.width() as u64 * raster.height() as u64) as f64;
    box_sums(raster, tw, th)
        .into_iter()
        .map(|s| s as f64 / denom)
        .collect()
}

const DCT_N: usize = 32;

fn dct_basis() -> &'static [[f64; DCT_N]; DCT_N] {
    use std::sync::OnceLock;
    static BASIS: OnceLock<[[f64; DCT_N]; DCT_N]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let n = DCT_N as f64;
        let mut b = [[0.0; DCT_N]; DCT_N];
        for (k, row) in b.iter_mut().enumerate() {
            let alpha = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            for (x, v) in row.iter_mut().enumerate() {
                *v = alpha * (std::f64::consts::PI * (2 * x + 1) as f64 * k as f64 / (2.0 * n)).cos();
            }
        }
        b
    })
}

/// Orthonormal 2-D type-II DCT of a row-major 32×32 block; `out[v][u]` has
/// vertical frequency `v` and horizontal frequency `u`.
pub fn dct32(block: &[f64]) -> Vec<[f64; DCT_N]> {
    assert_eq!(block.len(), DCT_N * DCT_N);
    let b = dct_basis();
    // rows: tmp[y][u] = Σx f[y][x] b[u][x]
    let mut tmp = vec![[0.0; DCT_N]; DCT_N];
    for y in 0..DCT_N {
        for u in 0..DCT_N {
            tmp[y][u] = (0..DCT_N).map(|x| block[y * DCT_N + x] * b[u][x]).sum();
        }
    }
    let mut out = vec![[0.0; DCT_N]; DCT_N];
    for v in 0..DCT_N {
        for u in 0..DCT_N {
            out[v][u] = (0..DCT_N).map(|y| tmp[y][u] * b[v][y]).sum();
        }
    }
    out
}

/// The 64 frequencies used by [`phash`]: the 8×8 low block in row-major order
/// without DC, then `(8, 0)`, the first coefficient outside the block in
/// zigzag order.
pub const PHASH_COEFFS: [(usize, usize); 64] = {
    let mut out = [(0, 0); 64];
    let mut k = 0;
    let mut i = 1;
    while i < 64 {
        out[k] = (i / 8, i % 8);
        k += 1;
        i += 1;
    }
    out[63] = (8, 0);
    out
};

/// Coefficients are rounded to 1e-6 before thresholding so that
/// floating-point residue on flat images compares equal.
fn quantize(c: f64) -> f64 {
    (c * 1e6).round() / 1e6
}

/// Builds a hash from 64 values: bit `i` set iff value `i` is strictly above
/// the median (mean of the two middle values).
pub fn threshold_bits(values: &[f64; 64]) -> u64 {
    let mut sorted = *values;
    sorted.sort_by(f64::total_cmp);
    let median = (sorted[31] + sorted[32]) / 2.0;
    values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > median)
        .fold(0u64, |h, (i, _)| h | (1 << (63 - i)))
}

/// DCT-based perceptual hash. `None` for zero-sized rasters.
pub fn phash(raster: &Raster) -> Option<u64> {
    if raster.is_degenerate() {
        return None;
    }
    let small = downscale(raster, DCT_N, DCT_N);
    let coeffs = dct32(&small);
    let mut values = [0.0; 64];
    for (slot, &(v, u)) in values.iter_mut().zip(PHASH_COEFFS.iter()) {
        *slot = quantize(coeffs[v][u]);
    }
    Some(threshold_bits(&values))
}

/// Gradient hash: downscale to 9×8, bit `(r, c)` set iff cell `(r, c)` is
/// strictly brighter than `(r, c+1)`. `None` for zero-sized rasters.
pub fn dhash(raster: &Raster) -> Option<u64> {
    if raster.is_degenerate() {
        return None;
    }
    let s = box_sums(raster, 9, 8);
    let mut h = 0u64;
    for r in 0..8 {
        for c in 0..8 {
            if s[r * 9 + c] > s[r * 9 + c + 1] {
                h |= 1 << (63 - (r * 8 + c));
            }
        }
    }
    Some(h)
}

pub fn hamming(a: u64, b: u64) -> u32 {
    (a ^ b).count_ones()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_rasters_have_no_hash() {
        let r = Raster::filled(0, 5, 1);
        assert!(phash(&r).is_none() && dhash(&r).is_none());
    }

    #[test]
    fn uniform_raster_hashes_to_zero() {
        for (w, h, v) in [(256, 512, 200u8), (7, 13, 0), (33, 31, 255)] {
            let r = Raster::filled(w, h, v);
            assert_eq!(dhash(&r), Some(0));
            assert_eq!(phash(&r), Some(0), "{w}x{h}");
        }
    }

    #[test]
    fn decreasing_gradient_sets_every_dhash_bit() {
        let r = Raster::from_fn(256, 512, |x, _| 255 - x as u8);
        assert_eq!(dhash(&r), Some(u64::MAX));
        let inc = Raster::from_fn(256, 512, |x, _| x as u8);
        assert_eq!(dhash(&inc), Some(0));
    }

    #[test]
    fn box_sums_conserve_mass() {
        let r = Raster::from_fn(37, 23, |x, y| ((x * 7 + y * 3) % 251) as u8);
        let total: u64 = r.pixels().iter().map(|&p| u64::from(p)).sum();
        for (tw, th) in [(9, 8), (32, 32), (37, 23), (5, 50)] {
            let s: u64 = box_sums(&r, tw, th).iter().sum();
            assert_eq!(s, total * (tw * th) as u64, "{tw}x{th}");
        }
    }

    #[test]
    fn coefficient_slots_are_distinct() {
        let set: std::collections::BTreeSet<_> = PHASH_COEFFS.iter().collect();
        assert_eq!(set.len(), 64);
        assert!(!set.contains(&(0, 0)));
    }
}
