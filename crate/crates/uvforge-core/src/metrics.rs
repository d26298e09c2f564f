//! Brightness Symmetry Error: the L1 distance between a blurred luma plane
//! and its horizontal mirror, reported as a mean per-pixel difference on a
//! 0-255 scale. A texture lit evenly is left/right symmetric in brightness,
//! so lower is better; a mirror-symmetric input scores exactly zero.

use crate::error::Result;
use crate::image::{gaussian_blur, hflip_gray, luma, BlurParams, ImageGray, ImageRgb};

#[derive(Debug, Clone, Copy)]
pub struct BsErrorParams {
    /// Gaussian kernel size (odd); 55 by default.
    pub kernel_size: usize,
    /// Reporting scale; 255 by default (8-bit convention).
    pub value_scale: f64,
}

impl Default for BsErrorParams {
    fn default() -> Self {
        Self {
            kernel_size: 55,
            value_scale: 255.0,
        }
    }
}

/// Brightness Symmetry Error of a texture. With `mask` given, the mean runs
/// over masked pixels only.
pub fn bs_error(tex: &ImageRgb, params: &BsErrorParams) -> Result<f64> {
    bs_error_masked(tex, params, None)
}

pub fn bs_error_masked(
    tex: &ImageRgb,
    params: &BsErrorParams,
    mask: Option<&ImageGray>,
) -> Result<f64> {
    let blur = BlurParams::from_kernel_size(params.kernel_size)?;
    let blurred = gaussian_blur(&luma(tex), blur);
    let flipped = hflip_gray(&blurred);
    let (w, h) = (blurred.width(), blurred.height());
    if let Some(m) = mask {
        let mut total = 0.0;
        let mut count = 0usize;
        for (i, (a, b)) in blurred.data().iter().zip(flipped.data()).enumerate() {
            if m.data()[i] >= 0.5 {
                total += (a - b).abs();
                count += 1;
            }
        }
        if count == 0 {
            return Ok(0.0);
        }
        return Ok(total / count as f64 * params.value_scale);
    }
    // Full-map case: accumulate mirrored column pairs together, which makes
    // the metric invariant under horizontal flip bit-exactly.
    let mut total = 0.0;
    for y in 0..h {
        let mut row_acc = 0.0;
        for x in 0..w / 2 {
            let left = (blurred.get(x, y) - flipped.get(x, y)).abs();
            let xr = w - 1 - x;
            let right = (blurred.get(xr, y) - flipped.get(xr, y)).abs();
            row_acc += left + right;
        }
        if w % 2 == 1 {
            row_acc += (blurred.get(w / 2, y) - flipped.get(w / 2, y)).abs();
        }
        total += row_acc;
    }
    Ok(total / (w * h) as f64 * params.value_scale)
}
