//! Color matching between texture maps, mask-weighted fusion, and
//! Gaussian/Laplacian pyramids with multiresolution blending.
//!
//! Color matching maps a source texture onto a target's statistics per YUV
//! channel:
//!
//! ```text
//! out = (src - mean(src)) / (std(src) * omega) * std(target) + mean(target)
//! ```
//!
//! with the means and standard deviations taken over caller-supplied masks,
//! and `omega` controlling the contrast of the output (default 1.5).
//! Pyramids use the 5-tap binomial kernel `[1,4,6,4,1]/16` with replicate
//! borders; upsampling zero-inserts and blurs with doubled weights, so the
//! Laplacian pyramid reconstructs exactly up to float rounding.

use crate::error::{Error, Result};
use crate::image::{rgb_to_yuv, yuv_to_rgb, ImageGray, ImageRgb};

/// Contrast factor for color matching; the pipeline default is 1.5.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorMatchParams {
    pub omega: f64,
}

impl Default for ColorMatchParams {
    fn default() -> Self {
        Self { omega: 1.5 }
    }
}

impl ColorMatchParams {
    pub fn new(omega: f64) -> Result<Self> {
        if omega.is_nan() || !omega.is_finite() || omega <= 0.0 {
            return Err(Error::ColorMatch(format!(
                "omega must be positive, got {omega}"
            )));
        }
        Ok(Self { omega })
    }
}

/// Population mean and standard deviation of `plane` over `mask >= 0.5`.
fn masked_stats(plane: &ImageGray, mask: &ImageGray) -> Result<(f64, f64)> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (v, m) in plane.data().iter().zip(mask.data()) {
        if *m >= 0.5 {
            sum += v;
            count += 1;
        }
    }
    if count < 2 {
        return Err(Error::ColorMatch(format!(
            "stats mask selects {count} texels; need at least 2"
        )));
    }
    let mean = sum / count as f64;
    let mut var = 0.0;
    for (v, m) in plane.data().iter().zip(mask.data()) {
        if *m >= 0.5 {
            var += (v - mean) * (v - mean);
        }
    }
    Ok((mean, (var / count as f64).sqrt()))
}

/// Color-match `source` toward `target` per YUV channel. Statistics are
/// computed over the respective masks; the transform is applied to every
/// source texel; the result is converted back to RGB and clamped to [0, 1].
pub fn match_color(
    source: &ImageRgb,
    target: &ImageRgb,
    source_stats_mask: &ImageGray,
    target_stats_mask: &ImageGray,
    params: ColorMatchParams,
) -> Result<ImageRgb> {
    if source.width() != source_stats_mask.width() || source.height() != source_stats_mask.height()
    {
        return Err(Error::SizeMismatch {
            expected_w: source.width(),
            expected_h: source.height(),
            got_w: source_stats_mask.width(),
            got_h: source_stats_mask.height(),
        });
    }
    if target.width() != target_stats_mask.width() || target.height() != target_stats_mask.height()
    {
        return Err(Error::SizeMismatch {
            expected_w: target.width(),
            expected_h: target.height(),
            got_w: target_stats_mask.width(),
            got_h: target_stats_mask.height(),
        });
    }

    let src_yuv = rgb_to_yuv(source);
    let tgt_yuv = rgb_to_yuv(target);
    let mut out_planes = src_yuv.clone();
    for c in 0..3 {
        let (mu_s, sigma_s) = masked_stats(&src_yuv[c], source_stats_mask)?;
        let (mu_t, sigma_t) = masked_stats(&tgt_yuv[c], target_stats_mask)?;
        if sigma_s <= 1e-8 {
            return Err(Error::ColorMatch(format!(
                "source std {sigma_s:.3e} on channel {c} is too small"
            )));
        }
        let gain = sigma_t / (sigma_s * params.omega);
        for v in out_planes[c].data_mut() {
            *v = (*v - mu_s) * gain + mu_t;
        }
    }
    let mut out = yuv_to_rgb(&out_planes)?;
    out.clamp01();
    Ok(out)
}

/// Per-texel convex combination of textures after renormalizing the weights
/// to sum to one. Errors if any texel has zero total weight.
pub fn linear_blend(textures: &[ImageRgb], weights: &[ImageGray]) -> Result<ImageRgb> {
    assert_eq!(textures.len(), weights.len());
    assert!(!textures.is_empty());
    let (w, h) = (textures[0].width(), textures[0].height());
    for t in textures {
        if t.width() != w || t.height() != h {
            return Err(Error::SizeMismatch {
                expected_w: w,
                expected_h: h,
                got_w: t.width(),
                got_h: t.height(),
            });
        }
    }
    for m in weights {
        if m.width() != w || m.height() != h {
            return Err(Error::SizeMismatch {
                expected_w: w,
                expected_h: h,
                got_w: m.width(),
                got_h: m.height(),
            });
        }
    }
    let mut out = ImageRgb::new(w, h)?;
    for y in 0..h {
        for x in 0..w {
            let total: f64 = weights.iter().map(|m| m.get(x, y)).sum();
            if total <= 0.0 {
                return Err(Error::ZeroBlendWeight { x, y });
            }
            let mut rgb = [0.0; 3];
            for (t, m) in textures.iter().zip(weights) {
                let wv = m.get(x, y) / total;
                let p = t.pixel(x, y);
                for c in 0..3 {
                    rgb[c] += wv * p[c];
                }
            }
            out.set_pixel(x, y, rgb);
        }
    }
    Ok(out)
}

// --- Pyramids ---------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PyramidKind {
    Gaussian,
    Laplacian,
}

/// Image pyramid over single-channel planes; RGB images are carried as three
/// plane pyramids by the blend entry points.
#[derive(Debug, Clone)]
pub struct Pyramid {
    pub levels: Vec<ImageGray>,
    pub kind: PyramidKind,
}

const BINOMIAL: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

fn blur5(img: &ImageGray) -> ImageGray {
    let (w, h) = (img.width(), img.height());
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &wk) in BINOMIAL.iter().enumerate() {
                let xi = (x as i64 + k as i64 - 2).clamp(0, w as i64 - 1) as usize;
                acc += wk * img.get(xi, y);
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = ImageGray::new(w, h).unwrap();
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &wk) in BINOMIAL.iter().enumerate() {
                let yi = (y as i64 + k as i64 - 2).clamp(0, h as i64 - 1) as usize;
                acc += wk * tmp[yi * w + x];
            }
            out.set(x, y, acc);
        }
    }
    out
}

/// Blur then decimate by two (keep even rows/columns; sizes use ceiling
/// division).
fn downsample(img: &ImageGray) -> ImageGray {
    let blurred = blur5(img);
    let (w, h) = (img.width(), img.height());
    let (dw, dh) = (w.div_ceil(2), h.div_ceil(2));
    ImageGray::from_fn(dw, dh, |x, y| blurred.get(x * 2, y * 2))
}

/// Per-position tap normalizers for one upsampling axis: the summed kernel
/// weight that lands on inserted (even, in-bounds) samples. Without this,
/// borders and odd sizes would be attenuated or inflated.
fn upsample_axis_weights(dst: usize) -> Vec<f64> {
    (0..dst)
        .map(|x| {
            let mut total = 0.0;
            for (k, &wk) in BINOMIAL.iter().enumerate() {
                let xi = x as i64 + k as i64 - 2;
                if xi >= 0 && xi < dst as i64 && xi % 2 == 0 {
                    total += 2.0 * wk;
                }
            }
            total
        })
        .collect()
}

/// Zero-insert to `(dst_w, dst_h)`, then blur with doubled kernel weights,
/// normalized per axis so constants upsample to constants exactly.
fn upsample(img: &ImageGray, dst_w: usize, dst_h: usize) -> ImageGray {
    let mut sparse = ImageGray::new(dst_w, dst_h).unwrap();
    for y in 0..img.height() {
        for x in 0..img.width() {
            let (dx, dy) = (x * 2, y * 2);
            if dx < dst_w && dy < dst_h {
                sparse.set(dx, dy, img.get(x, y));
            }
        }
    }
    let wx = upsample_axis_weights(dst_w);
    let wy = upsample_axis_weights(dst_h);
    let mut tmp = vec![0.0; dst_w * dst_h];
    for y in 0..dst_h {
        for x in 0..dst_w {
            let mut acc = 0.0;
            for (k, &wk) in BINOMIAL.iter().enumerate() {
                let xi = x as i64 + k as i64 - 2;
                if xi >= 0 && xi < dst_w as i64 {
                    acc += 2.0 * wk * sparse.get(xi as usize, y);
                }
            }
            tmp[y * dst_w + x] = acc / wx[x];
        }
    }
    let mut out = ImageGray::new(dst_w, dst_h).unwrap();
    for y in 0..dst_h {
        for x in 0..dst_w {
            let mut acc = 0.0;
            for (k, &wk) in BINOMIAL.iter().enumerate() {
                let yi = y as i64 + k as i64 - 2;
                if yi >= 0 && yi < dst_h as i64 && yi % 2 == 0 {
                    acc += 2.0 * wk * tmp[yi as usize * dst_w + x];
                }
            }
            out.set(x, y, acc / wy[y]);
        }
    }
    out
}

fn check_levels(width: usize, height: usize, levels: usize) -> Result<()> {
    if levels == 0 {
        return Err(Error::Pyramid("need at least one level".into()));
    }
    let (mut w, mut h) = (width, height);
    for _ in 1..levels {
        w = w.div_ceil(2);
        h = h.div_ceil(2);
    }
    if w.min(h) < 2 {
        return Err(Error::Pyramid(format!(
            "{levels} levels infeasible for {width}x{height} (coarsest {w}x{h})"
        )));
    }
    Ok(())
}

/// Default level count: `floor(log2(min(W,H))) - 4`, clamped to `[1, 6]`.
pub fn default_levels(width: usize, height: usize) -> usize {
    let m = width.min(height).max(1);
    let log2 = (usize::BITS - 1 - m.leading_zeros()) as i64;
    (log2 - 4).clamp(1, 6) as usize
}

pub fn build_gaussian(img: &ImageGray, levels: usize) -> Result<Pyramid> {
    check_levels(img.width(), img.height(), levels)?;
    let mut out = vec![img.clone()];
    for _ in 1..levels {
        out.push(downsample(out.last().unwrap()));
    }
    Ok(Pyramid {
        levels: out,
        kind: PyramidKind::Gaussian,
    })
}

pub fn build_laplacian(img: &ImageGray, levels: usize) -> Result<Pyramid> {
    let gauss = build_gaussian(img, levels)?.levels;
    let mut out = Vec::with_capacity(levels);
    for i in 0..levels - 1 {
        let up = upsample(&gauss[i + 1], gauss[i].width(), gauss[i].height());
        let mut detail = gauss[i].clone();
        for (d, u) in detail.data_mut().iter_mut().zip(up.data()) {
            *d -= u;
        }
        out.push(detail);
    }
    out.push(gauss[levels - 1].clone()); // Gaussian residual
    Ok(Pyramid {
        levels: out,
        kind: PyramidKind::Laplacian,
    })
}

/// Invert a pyramid. For a Laplacian pyramid this reconstructs the original
/// image exactly up to float rounding; for a Gaussian pyramid it returns the
/// finest level.
pub fn reconstruct(pyr: &Pyramid) -> ImageGray {
    match pyr.kind {
        PyramidKind::Gaussian => pyr.levels[0].clone(),
        PyramidKind::Laplacian => {
            let mut acc = pyr.levels.last().unwrap().clone();
            for i in (0..pyr.levels.len() - 1).rev() {
                let mut up = upsample(&acc, pyr.levels[i].width(), pyr.levels[i].height());
                for (u, d) in up.data_mut().iter_mut().zip(pyr.levels[i].data()) {
                    *u += d;
                }
                acc = up;
            }
            acc
        }
    }
}

fn split_channels(img: &ImageRgb) -> [ImageGray; 3] {
    let (w, h) = (img.width(), img.height());
    [0, 1, 2].map(|c| ImageGray::from_data(w, h, img.channel(c).to_vec()).unwrap())
}

fn join_channels(planes: [ImageGray; 3]) -> ImageRgb {
    let (w, h) = (planes[0].width(), planes[0].height());
    let mut out = ImageRgb::new(w, h).unwrap();
    for c in 0..3 {
        out.channel_mut(c).copy_from_slice(planes[c].data());
    }
    out
}

/// Multiresolution blend: per level, mix the Laplacian pyramids of `a` and
/// `b` with the Gaussian pyramid of `mask` (mask weights `a`), then
/// reconstruct and clamp to [0, 1].
pub fn pyramid_blend(
    a: &ImageRgb,
    b: &ImageRgb,
    mask: &ImageGray,
    levels: usize,
) -> Result<ImageRgb> {
    if !a.same_size(b) || a.width() != mask.width() || a.height() != mask.height() {
        return Err(Error::SizeMismatch {
            expected_w: a.width(),
            expected_h: a.height(),
            got_w: b.width(),
            got_h: b.height(),
        });
    }
    let mask_pyr = build_gaussian(mask, levels)?.levels;
    let a_planes = split_channels(a);
    let b_planes = split_channels(b);
    let mut out_planes = Vec::with_capacity(3);
    for c in 0..3 {
        let la = build_laplacian(&a_planes[c], levels)?.levels;
        let lb = build_laplacian(&b_planes[c], levels)?.levels;
        let blended: Vec<ImageGray> = la
            .iter()
            .zip(&lb)
            .zip(&mask_pyr)
            .map(|((pa, pb), pm)| {
                let mut lvl = pa.clone();
                for ((v, vb), m) in lvl.data_mut().iter_mut().zip(pb.data()).zip(pm.data()) {
                    *v = m * *v + (1.0 - m) * vb;
                }
                lvl
            })
            .collect();
        out_planes.push(reconstruct(&Pyramid {
            levels: blended,
            kind: PyramidKind::Laplacian,
        }));
    }
    let mut out = join_channels([
        out_planes.remove(0),
        out_planes.remove(0),
        out_planes.remove(0),
    ]);
    out.clamp01();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gray_rgb(values: &[f64], w: usize, h: usize) -> ImageRgb {
        let mut img = ImageRgb::new(w, h).unwrap();
        for (i, &v) in values.iter().enumerate() {
            img.set_pixel(i % w, i / w, [v, v, v]);
        }
        img
    }

    #[test]
    fn match_color_hand_case() {
        // Direct evaluation on the Y channel: src Y {0.2,0.4}, tgt Y
        // {0.5,0.7}, omega 1.5 => out Y = (x-0.3)/(0.1*1.5)*0.1 + 0.6
        // = {0.5333…, 0.6667…}. U/V carry small nonconstant values so every
        // channel has usable statistics.
        let from_yuv = |pixels: [[f64; 3]; 2]| {
            let mut img = ImageRgb::new(2, 1).unwrap();
            for (i, yuv) in pixels.iter().enumerate() {
                img.set_pixel(i, 0, crate::image::yuv_pixel_to_rgb(*yuv));
            }
            img
        };
        let src = from_yuv([[0.2, 0.05, -0.03], [0.4, -0.02, 0.04]]);
        let tgt = from_yuv([[0.5, 0.03, 0.01], [0.7, -0.04, -0.02]]);
        let full = ImageGray::constant(2, 1, 1.0);
        let out = match_color(&src, &tgt, &full, &full, ColorMatchParams { omega: 1.5 }).unwrap();
        let y0 = crate::image::rgb_pixel_to_yuv(out.pixel(0, 0))[0];
        let y1 = crate::image::rgb_pixel_to_yuv(out.pixel(1, 0))[0];
        assert_abs_diff_eq!(y0, 8.0 / 15.0, epsilon = 1e-9);
        assert_abs_diff_eq!(y1, 10.0 / 15.0, epsilon = 1e-9);
        // mean 0.6, std = std(target)/1.5
        assert_abs_diff_eq!((y0 + y1) / 2.0, 0.6, epsilon = 1e-9);
        assert_abs_diff_eq!((y1 - y0) / 2.0, 0.1 / 1.5, epsilon = 1e-9);
    }

    #[test]
    fn match_color_identity_at_omega_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let img = ImageRgb::from_fn(12, 9, |_, _| {
            [
                rng.gen_range(0.1..0.9),
                rng.gen_range(0.1..0.9),
                rng.gen_range(0.1..0.9),
            ]
        });
        let full = ImageGray::constant(12, 9, 1.0);
        let out = match_color(&img, &img, &full, &full, ColorMatchParams { omega: 1.0 }).unwrap();
        for c in 0..3 {
            for (a, b) in img.channel(c).iter().zip(out.channel(c)) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn match_color_statistics_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let src = ImageRgb::from_fn(16, 16, |_, _| {
            [
                rng.gen_range(0.2..0.8),
                rng.gen_range(0.2..0.8),
                rng.gen_range(0.2..0.8),
            ]
        });
        let tgt = ImageRgb::from_fn(16, 16, |_, _| {
            [
                rng.gen_range(0.3..0.7),
                rng.gen_range(0.3..0.7),
                rng.gen_range(0.3..0.7),
            ]
        });
        let full = ImageGray::constant(16, 16, 1.0);
        let omega = 1.5;
        // Pre-clamp contract, evaluated in YUV on the unclamped transform.
        let src_yuv = rgb_to_yuv(&src);
        let tgt_yuv = rgb_to_yuv(&tgt);
        for c in 0..3 {
            let (mu_s, sd_s) = masked_stats(&src_yuv[c], &full).unwrap();
            let (mu_t, sd_t) = masked_stats(&tgt_yuv[c], &full).unwrap();
            let gain = sd_t / (sd_s * omega);
            let transformed: Vec<f64> = src_yuv[c]
                .data()
                .iter()
                .map(|v| (v - mu_s) * gain + mu_t)
                .collect();
            let plane = ImageGray::from_data(16, 16, transformed).unwrap();
            let (mu_o, sd_o) = masked_stats(&plane, &full).unwrap();
            assert_abs_diff_eq!(mu_o, mu_t, epsilon = 1e-9);
            assert_abs_diff_eq!(sd_o, sd_t / omega, epsilon = 1e-9);
        }
    }

    #[test]
    fn match_color_rejects_degenerate_stats() {
        let flat = ImageRgb::constant(4, 4, [0.5; 3]);
        let tgt = gray_rgb(&(0..16).map(|i| i as f64 / 16.0).collect::<Vec<_>>(), 4, 4);
        let full = ImageGray::constant(4, 4, 1.0);
        assert!(match_color(&flat, &tgt, &full, &full, ColorMatchParams::default()).is_err());

        let empty = ImageGray::constant(4, 4, 0.0);
        assert!(match_color(&tgt, &tgt, &empty, &full, ColorMatchParams::default()).is_err());
    }

    #[test]
    fn blend_basics() {
        let a = ImageRgb::constant(4, 4, [0.2; 3]);
        let b = ImageRgb::constant(4, 4, [0.8; 3]);
        let one = ImageGray::constant(4, 4, 1.0);
        let zero = ImageGray::constant(4, 4, 0.0);
        let three = ImageGray::constant(4, 4, 3.0);

        let first = linear_blend(&[a.clone(), b.clone()], &[one.clone(), zero.clone()]).unwrap();
        assert_eq!(first.pixel(2, 2), [0.2; 3]);

        // (1*0.2 + 3*0.8) / 4 = 0.65
        let mixed = linear_blend(&[a.clone(), b.clone()], &[one.clone(), three]).unwrap();
        for c in 0..3 {
            assert_abs_diff_eq!(mixed.pixel(1, 3)[c], 0.65, epsilon = 1e-12);
        }

        let same = linear_blend(&[a.clone(), a.clone()], &[one.clone(), one.clone()]).unwrap();
        assert_eq!(same.pixel(0, 0), [0.2; 3]);

        let err = linear_blend(&[a, b], &[zero.clone(), zero]);
        assert!(matches!(err, Err(Error::ZeroBlendWeight { x: 0, y: 0 })));
    }

    #[test]
    fn blend_output_within_input_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let a = ImageRgb::from_fn(8, 8, |_, _| [rng.gen(), rng.gen(), rng.gen()]);
        let b = ImageRgb::from_fn(8, 8, |_, _| [rng.gen(), rng.gen(), rng.gen()]);
        let wa = ImageGray::from_fn(8, 8, |_, _| rng.gen_range(0.01..1.0));
        let wb = ImageGray::from_fn(8, 8, |_, _| rng.gen_range(0.01..1.0));
        let out = linear_blend(&[a.clone(), b.clone()], &[wa, wb]).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                for c in 0..3 {
                    let lo = a.pixel(x, y)[c].min(b.pixel(x, y)[c]);
                    let hi = a.pixel(x, y)[c].max(b.pixel(x, y)[c]);
                    let v = out.pixel(x, y)[c];
                    assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
                }
            }
        }
    }

    #[test]
    fn laplacian_single_level_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let img = ImageGray::from_fn(10, 10, |_, _| rng.gen());
        let pyr = build_laplacian(&img, 1).unwrap();
        assert_eq!(pyr.levels.len(), 1);
        assert_eq!(reconstruct(&pyr).data(), img.data());
    }

    #[test]
    fn laplacian_perfect_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for &levels in &[2usize, 4, 6] {
            let img = ImageGray::from_fn(67, 41, |_, _| rng.gen());
            let pyr = build_laplacian(&img, levels).unwrap();
            let back = reconstruct(&pyr);
            for (a, b) in img.data().iter().zip(back.data()) {
                assert!((a - b).abs() <= 1e-4, "levels {levels}: {} vs {}", a, b);
            }
        }
    }

    #[test]
    fn laplacian_constant_image_detail_is_zero() {
        let img = ImageGray::constant(32, 32, 0.42);
        let pyr = build_laplacian(&img, 4).unwrap();
        for lvl in &pyr.levels[..3] {
            for &v in lvl.data() {
                assert!(v.abs() <= 1e-5);
            }
        }
        for &v in pyr.levels[3].data() {
            assert_abs_diff_eq!(v, 0.42, epsilon = 1e-9);
        }
    }

    #[test]
    fn infeasible_levels_rejected() {
        let img = ImageGray::constant(8, 8, 0.0);
        assert!(build_gaussian(&img, 4).is_err());
        assert!(build_gaussian(&img, 0).is_err());
        assert!(build_gaussian(&img, 3).is_ok());
    }

    #[test]
    fn default_levels_formula() {
        assert_eq!(default_levels(1024, 1024), 6);
        assert_eq!(default_levels(512, 512), 5);
        assert_eq!(default_levels(64, 64), 2);
        assert_eq!(default_levels(16, 16), 1);
    }

    #[test]
    fn pyramid_blend_degenerate_masks() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = ImageRgb::from_fn(32, 32, |_, _| {
            [
                rng.gen_range(0.1..0.9),
                rng.gen_range(0.1..0.9),
                rng.gen_range(0.1..0.9),
            ]
        });
        let b = ImageRgb::from_fn(32, 32, |_, _| {
            [
                rng.gen_range(0.1..0.9),
                rng.gen_range(0.1..0.9),
                rng.gen_range(0.1..0.9),
            ]
        });

        let same = pyramid_blend(&a, &a, &ImageGray::constant(32, 32, 0.37), 3).unwrap();
        for c in 0..3 {
            for (x, y) in a.channel(c).iter().zip(same.channel(c)) {
                assert!((x - y).abs() <= 1e-4);
            }
        }

        let keep_a = pyramid_blend(&a, &b, &ImageGray::constant(32, 32, 1.0), 3).unwrap();
        for c in 0..3 {
            for (x, y) in a.channel(c).iter().zip(keep_a.channel(c)) {
                assert!((x - y).abs() <= 1e-4);
            }
        }

        let keep_b = pyramid_blend(&a, &b, &ImageGray::constant(32, 32, 0.0), 3).unwrap();
        for c in 0..3 {
            for (x, y) in b.channel(c).iter().zip(keep_b.channel(c)) {
                assert!((x - y).abs() <= 1e-4);
            }
        }
    }

    #[test]
    fn pyramid_blend_half_plane_seam() {
        let levels = 3usize;
        let a = ImageRgb::constant(64, 64, [0.9, 0.2, 0.2]);
        let b = ImageRgb::constant(64, 64, [0.1, 0.1, 0.8]);
        let mask = ImageGray::from_fn(64, 64, |x, _| if x < 32 { 1.0 } else { 0.0 });
        let out = pyramid_blend(&a, &b, &mask, levels).unwrap();
        // Far from the seam (>= 2^levels px) each side equals its input.
        let margin = 1usize << levels;
        for y in 0..64 {
            for c in 0..3 {
                assert!((out.pixel(32 - margin - 8, y)[c] - a.pixel(0, 0)[c]).abs() <= 1e-3);
                assert!((out.pixel(32 + margin + 8, y)[c] - b.pixel(0, 0)[c]).abs() <= 1e-3);
            }
        }
        // Monotone transition along the seam on the red channel.
        for y in 0..64 {
            let mut prev = out.pixel(0, y)[0];
            for x in 1..64 {
                let cur = out.pixel(x, y)[0];
                assert!(cur <= prev + 1e-6, "profile not monotone at ({x},{y})");
                prev = cur;
            }
        }
    }
}
