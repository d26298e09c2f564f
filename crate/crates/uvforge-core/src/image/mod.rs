//! Raster buffers and the small set of image operations the texture pipeline
//! is built from: YUV conversion, Gaussian blur, horizontal flip, dilation.
//!
//! All pixel data is `f64` in `[0, 1]` (masks too). Channels are stored as
//! planes. Border policy is replicate throughout, so constant images stay
//! constant under every filter here.

mod io;

pub use io::{
    load_gray, load_labels, load_rgb, save_gray, save_gray_u16, save_labels, save_rgb, save_rgb_u16,
};

use crate::error::{Error, Result};

/// RGB raster, planar storage, values nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRgb {
    width: usize,
    height: usize,
    channels: [Vec<f64>; 3],
}

/// Single-channel raster. Serves both luma planes and region masks
/// (mask values are kept in `[0, 1]`).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGray {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImageRgb {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        check_dims(width, height)?;
        let n = width * height;
        Ok(Self {
            width,
            height,
            channels: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Self {
        let mut img = Self::new(width, height).expect("positive dimensions");
        for y in 0..height {
            for x in 0..width {
                img.set_pixel(x, y, f(x, y));
            }
        }
        img
    }

    pub fn constant(width: usize, height: usize, value: [f64; 3]) -> Self {
        Self::from_fn(width, height, |_, _| value)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.channels[c]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.channels[c]
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = y * self.width + x;
        [
            self.channels[0][i],
            self.channels[1][i],
            self.channels[2][i],
        ]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = y * self.width + x;
        self.channels[0][i] = rgb[0];
        self.channels[1][i] = rgb[1];
        self.channels[2][i] = rgb[2];
    }

    pub fn same_size(&self, other: &ImageRgb) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn clamp01(&mut self) {
        for ch in &mut self.channels {
            for v in ch.iter_mut() {
                *v = v.clamp(0.0, 1.0);
            }
        }
    }

    /// Bilinear sample at continuous coordinates where integer coordinates
    /// are pixel centers. Out-of-range positions clamp to the border.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> [f64; 3] {
        let (x0, y0, x1, y1, fx, fy) = bilinear_setup(x, y, self.width, self.height);
        let mut out = [0.0; 3];
        for (c, ch) in self.channels.iter().enumerate() {
            let v00 = ch[y0 * self.width + x0];
            let v10 = ch[y0 * self.width + x1];
            let v01 = ch[y1 * self.width + x0];
            let v11 = ch[y1 * self.width + x1];
            out[c] = lerp(lerp(v00, v10, fx), lerp(v01, v11, fx), fy);
        }
        out
    }
}

impl ImageGray {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            data: vec![0.0; width * height],
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut img = Self::new(width, height).expect("positive dimensions");
        for y in 0..height {
            for x in 0..width {
                img.set(x, y, f(x, y));
            }
        }
        img
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::InvalidDimensions { width, height });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Self {
        Self::from_fn(width, height, |_, _| value)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn same_size(&self, other: &ImageGray) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn clamp01(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let (x0, y0, x1, y1, fx, fy) = bilinear_setup(x, y, self.width, self.height);
        let v00 = self.data[y0 * self.width + x0];
        let v10 = self.data[y0 * self.width + x1];
        let v01 = self.data[y1 * self.width + x0];
        let v11 = self.data[y1 * self.width + x1];
        lerp(lerp(v00, v10, fx), lerp(v01, v11, fx), fy)
    }

    /// Fraction of pixels that binarize to 1 (threshold 0.5).
    pub fn on_fraction(&self) -> f64 {
        let on = self.data.iter().filter(|&&v| v >= 0.5).count();
        on as f64 / self.data.len() as f64
    }
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 || width.checked_mul(height).is_none() {
        return Err(Error::InvalidDimensions { width, height });
    }
    Ok(())
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

#[inline]
fn bilinear_setup(
    x: f64,
    y: f64,
    width: usize,
    height: usize,
) -> (usize, usize, usize, usize, f64, f64) {
    let x = x.clamp(0.0, (width - 1) as f64);
    let y = y.clamp(0.0, (height - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    (x0, y0, x1, y1, x - x0 as f64, y - y0 as f64)
}

// --- YUV conversion -------------------------------------------------------
//
// BT.601 full-range with U and V centered at zero:
//   Y = 0.299 R + 0.587 G + 0.114 B
//   U = (B - Y) * 0.5 / (1 - 0.114)
//   V = (R - Y) * 0.5 / (1 - 0.299)
// The inverse uses the same constants, so the round trip is exact up to
// float rounding.

const KR: f64 = 0.299;
const KG: f64 = 0.587;
const KB: f64 = 0.114;

#[inline]
pub fn rgb_pixel_to_yuv(rgb: [f64; 3]) -> [f64; 3] {
    let [r, g, b] = rgb;
    let y = KR * r + KG * g + KB * b;
    let u = (b - y) * (0.5 / (1.0 - KB));
    let v = (r - y) * (0.5 / (1.0 - KR));
    [y, u, v]
}

#[inline]
pub fn yuv_pixel_to_rgb(yuv: [f64; 3]) -> [f64; 3] {
    let [y, u, v] = yuv;
    let r = y + v * (2.0 * (1.0 - KR));
    let b = y + u * (2.0 * (1.0 - KB));
    let g = (y - KR * r - KB * b) / KG;
    [r, g, b]
}

/// Split an RGB image into Y, U, V planes (U and V centered at 0).
pub fn rgb_to_yuv(img: &ImageRgb) -> [ImageGray; 3] {
    let (w, h) = (img.width, img.height);
    let mut planes = [
        ImageGray::new(w, h).unwrap(),
        ImageGray::new(w, h).unwrap(),
        ImageGray::new(w, h).unwrap(),
    ];
    for i in 0..w * h {
        let rgb = [img.channels[0][i], img.channels[1][i], img.channels[2][i]];
        let yuv = rgb_pixel_to_yuv(rgb);
        planes[0].data[i] = yuv[0];
        planes[1].data[i] = yuv[1];
        planes[2].data[i] = yuv[2];
    }
    planes
}

/// Recombine Y, U, V planes into RGB. Planes must share one size.
pub fn yuv_to_rgb(planes: &[ImageGray; 3]) -> Result<ImageRgb> {
    let (w, h) = (planes[0].width, planes[0].height);
    for p in planes {
        if p.width != w || p.height != h {
            return Err(Error::SizeMismatch {
                expected_w: w,
                expected_h: h,
                got_w: p.width,
                got_h: p.height,
            });
        }
    }
    let mut img = ImageRgb::new(w, h)?;
    for i in 0..w * h {
        let rgb = yuv_pixel_to_rgb([planes[0].data[i], planes[1].data[i], planes[2].data[i]]);
        img.channels[0][i] = rgb[0];
        img.channels[1][i] = rgb[1];
        img.channels[2][i] = rgb[2];
    }
    Ok(img)
}

/// Luma plane only (first YUV channel).
pub fn luma(img: &ImageRgb) -> ImageGray {
    let mut out = ImageGray::new(img.width, img.height).unwrap();
    for i in 0..img.width * img.height {
        out.data[i] = KR * img.channels[0][i] + KG * img.channels[1][i] + KB * img.channels[2][i];
    }
    out
}

// --- Gaussian blur --------------------------------------------------------

/// Gaussian blur parameters. Sigma is derived from the kernel size with the
/// common default `0.3*((k-1)*0.5 - 1) + 0.8`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlurParams {
    pub kernel_size: usize,
    pub sigma: f64,
}

impl BlurParams {
    pub fn from_kernel_size(kernel_size: usize) -> Result<Self> {
        if kernel_size == 0 || kernel_size.is_multiple_of(2) {
            return Err(Error::EvenKernel(kernel_size));
        }
        let sigma = 0.3 * ((kernel_size as f64 - 1.0) * 0.5 - 1.0) + 0.8;
        Ok(Self { kernel_size, sigma })
    }

    /// Normalized 1-D kernel weights (length `kernel_size`, sum 1).
    pub fn weights(&self) -> Vec<f64> {
        let r = (self.kernel_size / 2) as i64;
        let mut w: Vec<f64> = (-r..=r)
            .map(|i| (-(i * i) as f64 / (2.0 * self.sigma * self.sigma)).exp())
            .collect();
        let sum: f64 = w.iter().sum();
        for v in &mut w {
            *v /= sum;
        }
        w
    }
}

/// Separable Gaussian blur with replicate borders.
pub fn gaussian_blur(img: &ImageGray, params: BlurParams) -> ImageGray {
    let weights = params.weights();
    let tmp = convolve_rows(&img.data, img.width, img.height, &weights);
    let out = convolve_cols(&tmp, img.width, img.height, &weights);
    ImageGray {
        width: img.width,
        height: img.height,
        data: out,
    }
}

// Taps accumulate as symmetric pairs (left + right), so blurring commutes
// with horizontal flip bit-exactly: mirroring swaps the operands of one
// addition per pair.
fn convolve_rows(data: &[f64], w: usize, h: usize, weights: &[f64]) -> Vec<f64> {
    let r = weights.len() / 2;
    let mut out = vec![0.0; data.len()];
    for y in 0..h {
        let row = &data[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = weights[r] * row[x];
            for k in 1..=r {
                let left = row[x.saturating_sub(k)];
                let right = row[(x + k).min(w - 1)];
                acc += weights[r - k] * (left + right);
            }
            out[y * w + x] = acc;
        }
    }
    out
}

fn convolve_cols(data: &[f64], w: usize, h: usize, weights: &[f64]) -> Vec<f64> {
    let r = (weights.len() / 2) as i64;
    let mut out = vec![0.0; data.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &wk) in weights.iter().enumerate() {
                let yi = (y as i64 + k as i64 - r).clamp(0, h as i64 - 1) as usize;
                acc += wk * data[yi * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

// --- Flip and dilation ----------------------------------------------------

/// Horizontal flip (column reversal). Involution.
pub fn hflip_gray(img: &ImageGray) -> ImageGray {
    let mut out = img.clone();
    for y in 0..img.height {
        let row = &mut out.data[y * img.width..(y + 1) * img.width];
        row.reverse();
    }
    out
}

pub fn hflip_rgb(img: &ImageRgb) -> ImageRgb {
    let mut out = img.clone();
    for ch in &mut out.channels {
        for y in 0..img.height {
            ch[y * img.width..(y + 1) * img.width].reverse();
        }
    }
    out
}

/// Morphological dilation with a square structuring element of side
/// `2*radius + 1`. The input is binarized at 0.5 first; output is 0/1.
pub fn dilate(mask: &ImageGray, radius: usize) -> ImageGray {
    let (w, h) = (mask.width, mask.height);
    let bin: Vec<bool> = mask.data.iter().map(|&v| v >= 0.5).collect();
    let r = radius as i64;
    let mut out = ImageGray::new(w, h).unwrap();
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let mut on = false;
            'scan: for dy in -r..=r {
                let yy = y + dy;
                if yy < 0 || yy >= h as i64 {
                    continue;
                }
                for dx in -r..=r {
                    let xx = x + dx;
                    if xx < 0 || xx >= w as i64 {
                        continue;
                    }
                    if bin[yy as usize * w + xx as usize] {
                        on = true;
                        break 'scan;
                    }
                }
            }
            out.data[y as usize * w + x as usize] = if on { 1.0 } else { 0.0 };
        }
    }
    out
}

/// Bilinear resize; used to adapt shipped mask assets to the configured
/// UV resolution.
pub fn resize_bilinear_gray(img: &ImageGray, width: usize, height: usize) -> Result<ImageGray> {
    check_dims(width, height)?;
    let sx = img.width as f64 / width as f64;
    let sy = img.height as f64 / height as f64;
    Ok(ImageGray::from_fn(width, height, |x, y| {
        img.sample_bilinear((x as f64 + 0.5) * sx - 0.5, (y as f64 + 0.5) * sy - 0.5)
    }))
}

pub fn resize_bilinear_rgb(img: &ImageRgb, width: usize, height: usize) -> Result<ImageRgb> {
    check_dims(width, height)?;
    let sx = img.width as f64 / width as f64;
    let sy = img.height as f64 / height as f64;
    Ok(ImageRgb::from_fn(width, height, |x, y| {
        img.sample_bilinear((x as f64 + 0.5) * sx - 0.5, (y as f64 + 0.5) * sy - 0.5)
    }))
}
