//! Texture correction and completion.
//!
//! Eye and mouth-interior regions predicted by face parsing are dilated in
//! image space, unwrapped to UV, and binarized; nostrils are picked by
//! brightness thresholding inside a nose ROI. The union of these artifact
//! masks is filled from the template texture with Poisson editing (one solve
//! per connected component). The remaining non-face regions are completed by
//! color-matching the template toward the corrected texture and blending the
//! two with a Laplacian pyramid over the face mask.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::geometry::{CameraPose, FaceMesh};
use crate::image::{dilate, luma, resize_bilinear_gray, ImageGray, ImageRgb};
use crate::poisson::{poisson_clone, PoissonProblem, SolverParams};
use crate::texture::{default_levels, match_color, pyramid_blend, ColorMatchParams};
use crate::unwrap::unwrap_mask;

/// Label codes used by parsing rasters. Values are the raw 8-bit samples of
/// the label PNG.
pub mod labels {
    pub const OTHER: u8 = 0;
    pub const FACE_SKIN: u8 = 1;
    pub const LEFT_EYE: u8 = 2;
    pub const RIGHT_EYE: u8 = 3;
    pub const MOUTH_INTERIOR: u8 = 4;
    pub const NOSE: u8 = 5;
    pub const MAX_CODE: u8 = NOSE;
}

/// Face-parsing label raster in image space.
#[derive(Debug, Clone)]
pub struct ParsingLabels {
    width: usize,
    height: usize,
    codes: Vec<u8>,
}

impl ParsingLabels {
    pub fn new(width: usize, height: usize, codes: Vec<u8>) -> Result<Self> {
        if codes.len() != width * height {
            return Err(Error::InvalidDimensions { width, height });
        }
        if let Some(bad) = codes.iter().find(|&&c| c > labels::MAX_CODE) {
            return Err(Error::Config(format!(
                "label code {bad} outside the declared palette 0..={}",
                labels::MAX_CODE
            )));
        }
        Ok(Self {
            width,
            height,
            codes,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn code(&self, x: usize, y: usize) -> u8 {
        self.codes[y * self.width + x]
    }

    /// Binary mask of one label code.
    pub fn mask_for(&self, code: u8) -> ImageGray {
        ImageGray::from_fn(self.width, self.height, |x, y| {
            if self.code(x, y) == code {
                1.0
            } else {
                0.0
            }
        })
    }

    /// Mask of every facial code (skin, eyes, mouth interior, nose).
    pub fn face_mask(&self) -> ImageGray {
        ImageGray::from_fn(self.width, self.height, |x, y| {
            if self.code(x, y) != labels::OTHER {
                1.0
            } else {
                0.0
            }
        })
    }
}

/// UV-space artifact masks (eyes, mouth interior, nostrils).
#[derive(Debug, Clone)]
pub struct ArtifactMasks {
    pub m_leye: ImageGray,
    pub m_reye: ImageGray,
    pub m_mouth: ImageGray,
    pub m_nostril: ImageGray,
}

impl ArtifactMasks {
    pub fn empty(uv_size: usize) -> Self {
        let zero = ImageGray::constant(uv_size, uv_size, 0.0);
        Self {
            m_leye: zero.clone(),
            m_reye: zero.clone(),
            m_mouth: zero.clone(),
            m_nostril: zero,
        }
    }

    pub fn union(&self) -> ImageGray {
        let mut out = self.m_leye.clone();
        for other in [&self.m_reye, &self.m_mouth, &self.m_nostril] {
            for (v, o) in out.data_mut().iter_mut().zip(other.data()) {
                if *o >= 0.5 {
                    *v = 1.0;
                }
            }
        }
        for v in out.data_mut() {
            *v = if *v >= 0.5 { 1.0 } else { 0.0 };
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.union().data().iter().all(|&v| v < 0.5)
    }
}

/// Template texture with its UV face-region mask.
#[derive(Debug, Clone)]
pub struct TemplateTexture {
    pub image: ImageRgb,
    pub face_mask: ImageGray,
}

/// Texels this close to the UV border are always cleared from artifact
/// masks, keeping Poisson regions strictly interior.
pub const UV_BORDER_FRAME: usize = 2;

fn clear_border_frame(mask: &mut ImageGray, frame: usize) {
    let (w, h) = (mask.width(), mask.height());
    for y in 0..h {
        for x in 0..w {
            if x < frame || y < frame || x >= w - frame || y >= h - frame {
                mask.set(x, y, 0.0);
            }
        }
    }
}

/// Linear-interpolation percentile of a sample (p in [0, 100]).
fn percentile(values: &mut [f64], p: f64) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n == 1 {
        return values[0];
    }
    let h = (p / 100.0).clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    values[lo] + (h - lo as f64) * (values[hi] - values[lo])
}

/// Build the four artifact masks. Eye and mouth labels are dilated in image
/// space, unwrapped to UV, and binarized; the nostril mask collects texels
/// of `tex` inside `nose_roi` whose luma falls below the given percentile of
/// the ROI. A 2-texel border frame is always cleared.
#[allow(clippy::too_many_arguments)]
pub fn build_artifact_masks(
    parsing: &ParsingLabels,
    tex: &ImageRgb,
    mesh: &FaceMesh,
    pose: &CameraPose,
    uv_size: usize,
    dilation_radius: usize,
    nose_roi: &ImageGray,
    nostril_percentile: f64,
) -> Result<ArtifactMasks> {
    let unwrap_label = |code: u8| -> Result<ImageGray> {
        let image_mask = dilate(&parsing.mask_for(code), dilation_radius);
        let (uv, _skipped) = unwrap_mask(&image_mask, mesh, pose, uv_size)?;
        let mut out = ImageGray::from_fn(uv_size, uv_size, |x, y| {
            if uv.get(x, y) >= 0.5 {
                1.0
            } else {
                0.0
            }
        });
        clear_border_frame(&mut out, UV_BORDER_FRAME);
        Ok(out)
    };
    let m_leye = unwrap_label(labels::LEFT_EYE)?;
    let m_reye = unwrap_label(labels::RIGHT_EYE)?;
    let m_mouth = unwrap_label(labels::MOUTH_INTERIOR)?;

    let roi = if nose_roi.width() == uv_size && nose_roi.height() == uv_size {
        nose_roi.clone()
    } else {
        resize_bilinear_gray(nose_roi, uv_size, uv_size)?
    };
    let y_plane = luma(tex);
    let mut roi_values: Vec<f64> = (0..uv_size * uv_size)
        .filter(|&i| roi.data()[i] >= 0.5)
        .map(|i| y_plane.data()[i])
        .collect();
    if roi_values.is_empty() {
        return Err(Error::Config("nose ROI selects no texels".into()));
    }
    let threshold = percentile(&mut roi_values, nostril_percentile);
    let mut m_nostril = ImageGray::from_fn(uv_size, uv_size, |x, y| {
        if roi.get(x, y) >= 0.5 && y_plane.get(x, y) < threshold {
            1.0
        } else {
            0.0
        }
    });
    clear_border_frame(&mut m_nostril, UV_BORDER_FRAME);

    Ok(ArtifactMasks {
        m_leye,
        m_reye,
        m_mouth,
        m_nostril,
    })
}

/// 4-connected components of a binary mask.
fn connected_components(mask: &ImageGray) -> Vec<ImageGray> {
    let (w, h) = (mask.width(), mask.height());
    let mut seen = vec![false; w * h];
    let mut components = Vec::new();
    for start in 0..w * h {
        if seen[start] || mask.data()[start] < 0.5 {
            continue;
        }
        let mut comp = ImageGray::new(w, h).unwrap();
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            comp.data_mut()[i] = 1.0;
            let (x, y) = (i % w, i / w);
            let mut push = |j: usize| {
                if !seen[j] && mask.data()[j] >= 0.5 {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                push(i - 1);
            }
            if x + 1 < w {
                push(i + 1);
            }
            if y > 0 {
                push(i - w);
            }
            if y + 1 < h {
                push(i + w);
            }
        }
        components.push(comp);
    }
    components
}

pub struct CorrectionOutcome {
    pub image: ImageRgb,
    pub components: usize,
    /// Summed CG iterations across components and channels.
    pub total_iterations: usize,
    pub converged: bool,
}

/// Fill the union of the artifact masks from the template via Poisson
/// editing, one solve per connected component. Texels outside the union are
/// untouched.
pub fn correct_artifacts(
    tex: &ImageRgb,
    masks: &ArtifactMasks,
    template: &TemplateTexture,
    params: SolverParams,
) -> Result<CorrectionOutcome> {
    if !tex.same_size(&template.image) {
        return Err(Error::SizeMismatch {
            expected_w: tex.width(),
            expected_h: tex.height(),
            got_w: template.image.width(),
            got_h: template.image.height(),
        });
    }
    let union = masks.union();
    let components = connected_components(&union);
    let mut image = tex.clone();
    let mut total_iterations = 0usize;
    let mut converged = true;
    for comp in &components {
        let outcome = poisson_clone(&PoissonProblem {
            region: comp,
            target: &image,
            source: &template.image,
            params,
        })?;
        total_iterations += outcome.iterations.iter().sum::<usize>();
        converged &= outcome.converged;
        // Only component texels change; copy them over.
        for c in 0..3 {
            let src = outcome.image.channel(c).to_vec();
            let dst = image.channel_mut(c);
            for (i, &m) in comp.data().iter().enumerate() {
                if m >= 0.5 {
                    dst[i] = src[i];
                }
            }
        }
    }
    Ok(CorrectionOutcome {
        image,
        components: components.len(),
        total_iterations,
        converged,
    })
}

/// Complete non-face regions: color-match the template toward the corrected
/// texture (statistics over the respective face regions), then pyramid-blend
/// with the face mask weighting the corrected texture.
pub fn complete_texture(
    tex_hat: &ImageRgb,
    face_mask: &ImageGray,
    template: &TemplateTexture,
    omega: f64,
    levels: Option<usize>,
) -> Result<ImageRgb> {
    if face_mask.data().iter().all(|&v| v < 0.5) {
        return Err(Error::Config("completion face mask is empty".into()));
    }
    let matched = match_color(
        &template.image,
        tex_hat,
        &template.face_mask,
        face_mask,
        ColorMatchParams::new(omega)?,
    )?;
    let levels = levels.unwrap_or_else(|| default_levels(tex_hat.width(), tex_hat.height()));
    pyramid_blend(tex_hat, &matched, face_mask, levels)
}

pub struct HybridReport {
    pub hybrid_seconds: f64,
    pub poisson_seconds: f64,
    pub speedup: f64,
    /// Mean L1 difference between the two results inside the face region.
    pub mean_l1_face: f64,
}

/// Compare the hybrid pipeline (Poisson on artifact masks + pyramid
/// completion) against Poisson editing over the entire non-face region.
pub fn hybrid_vs_poisson_report(
    tex: &ImageRgb,
    masks: &ArtifactMasks,
    face_mask: &ImageGray,
    template: &TemplateTexture,
    omega: f64,
    levels: Option<usize>,
    params: SolverParams,
) -> Result<HybridReport> {
    let start = Instant::now();
    let corrected = correct_artifacts(tex, masks, template, params)?;
    let hybrid = complete_texture(&corrected.image, face_mask, template, omega, levels)?;
    let hybrid_seconds = start.elapsed().as_secs_f64();

    // Poisson-everywhere baseline: one region covering the artifact masks
    // plus everything outside the face, anchored at a template-valued
    // 1-pixel border frame.
    let start = Instant::now();
    let (w, h) = (tex.width(), tex.height());
    let union = masks.union();
    let mut region = ImageGray::from_fn(w, h, |x, y| {
        if face_mask.get(x, y) < 0.5 || union.get(x, y) >= 0.5 {
            1.0
        } else {
            0.0
        }
    });
    clear_border_frame(&mut region, 1);
    let mut anchored = tex.clone();
    for y in 0..h {
        for x in 0..w {
            if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
                anchored.set_pixel(x, y, template.image.pixel(x, y));
            }
        }
    }
    let poisson_everywhere = if region.data().iter().any(|&v| v >= 0.5) {
        poisson_clone(&PoissonProblem {
            region: &region,
            target: &anchored,
            source: &template.image,
            params,
        })?
        .image
    } else {
        tex.clone()
    };
    let poisson_seconds = start.elapsed().as_secs_f64();

    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..w * h {
        if face_mask.data()[i] < 0.5 {
            continue;
        }
        for c in 0..3 {
            total += (hybrid.channel(c)[i] - poisson_everywhere.channel(c)[i]).abs();
        }
        count += 3;
    }
    let mean_l1_face = if count > 0 { total / count as f64 } else { 0.0 };

    Ok(HybridReport {
        hybrid_seconds,
        poisson_seconds,
        speedup: poisson_seconds / hybrid_seconds.max(1e-9),
        mean_l1_face,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poisson::dense_oracle;

    fn template(uv: usize) -> TemplateTexture {
        TemplateTexture {
            image: crate::synthetic::smooth_texture(uv, 900, [0.7, 0.55, 0.45], 0.05),
            face_mask: ImageGray::from_fn(uv, uv, |x, y| {
                let dx = x as f64 / uv as f64 - 0.5;
                let dy = y as f64 / uv as f64 - 0.5;
                if dx * dx + dy * dy < 0.16 {
                    1.0
                } else {
                    0.0
                }
            }),
        }
    }

    #[test]
    fn empty_labels_give_empty_masks() {
        let parsing = ParsingLabels::new(32, 32, vec![labels::FACE_SKIN; 32 * 32]).unwrap();
        let (mesh, pose) = crate::unwrap::affine_test_mesh(32, 32);
        let tex = ImageRgb::constant(24, 24, [0.5; 3]);
        let roi = ImageGray::constant(24, 24, 1.0);
        // Percentile 0 with strict < keeps the nostril mask empty too.
        let masks = build_artifact_masks(&parsing, &tex, &mesh, &pose, 24, 2, &roi, 0.0).unwrap();
        assert!(masks.is_empty());
    }

    #[test]
    fn nostril_percentile_fraction() {
        // Distinct luma values over the ROI: strict-< thresholding at the
        // p-th percentile selects about p% of the texels.
        let uv = 20;
        let parsing = ParsingLabels::new(8, 8, vec![labels::OTHER; 64]).unwrap();
        let (mesh, pose) = crate::unwrap::affine_test_mesh(8, 8);
        let tex = ImageRgb::from_fn(uv, uv, |x, y| {
            let v = (y * uv + x) as f64 / (uv * uv) as f64;
            [v, v, v]
        });
        let roi = ImageGray::constant(uv, uv, 1.0);
        let p = 30.0;
        let masks = build_artifact_masks(&parsing, &tex, &mesh, &pose, uv, 0, &roi, p).unwrap();
        let selected: usize = masks.m_nostril.data().iter().filter(|&&v| v >= 0.5).count();
        // The 2-texel border frame is cleared, so compare against the
        // unclipped count with a slack proportional to the frame area.
        let expect = (uv * uv) as f64 * p / 100.0;
        assert!(
            (selected as f64) <= expect + 1.0,
            "selected {selected}, expected <= {expect}"
        );
        assert!(
            (selected as f64) >= expect - (uv * UV_BORDER_FRAME * 4) as f64,
            "selected {selected}, expected near {expect}"
        );
    }

    #[test]
    fn constant_roi_yields_empty_nostril_mask() {
        let uv = 16;
        let parsing = ParsingLabels::new(8, 8, vec![labels::OTHER; 64]).unwrap();
        let (mesh, pose) = crate::unwrap::affine_test_mesh(8, 8);
        let tex = ImageRgb::constant(uv, uv, [0.4; 3]);
        let roi = ImageGray::constant(uv, uv, 1.0);
        let masks = build_artifact_masks(&parsing, &tex, &mesh, &pose, uv, 0, &roi, 30.0).unwrap();
        assert!(masks.m_nostril.data().iter().all(|&v| v < 0.5));
    }

    #[test]
    fn empty_roi_is_error() {
        let uv = 16;
        let parsing = ParsingLabels::new(8, 8, vec![labels::OTHER; 64]).unwrap();
        let (mesh, pose) = crate::unwrap::affine_test_mesh(8, 8);
        let tex = ImageRgb::constant(uv, uv, [0.4; 3]);
        let roi = ImageGray::constant(uv, uv, 0.0);
        assert!(build_artifact_masks(&parsing, &tex, &mesh, &pose, uv, 0, &roi, 30.0).is_err());
    }

    #[test]
    fn eye_disc_unwraps_to_expected_area() {
        // A 10 px eye disc dilated by 4 lands on the affine test triangle;
        // compare the unwrapped mask area against the analytic preimage of
        // the dilated disc.
        let img_size = 64usize;
        let uv = 64usize;
        let (cx, cy, r) = (20.0f64, 40.0f64, 5.0f64);
        let mut codes = vec![labels::OTHER; img_size * img_size];
        for y in 0..img_size {
            for x in 0..img_size {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                if d2 <= r * r {
                    codes[y * img_size + x] = labels::LEFT_EYE;
                }
            }
        }
        let parsing = ParsingLabels::new(img_size, img_size, codes).unwrap();
        let (mesh, pose) = crate::unwrap::affine_test_mesh(img_size, img_size);
        let tex = ImageRgb::constant(uv, uv, [0.5; 3]);
        let roi = ImageGray::constant(uv, uv, 1.0);
        let radius = 4usize;
        let masks =
            build_artifact_masks(&parsing, &tex, &mesh, &pose, uv, radius, &roi, 0.0).unwrap();

        // Analytic: the square-element dilation of a disc of radius 5 by 4
        // in image space, pulled back through the affine map (pixel x = u*63,
        // pixel y = (1-v)*63), intersected with the covered UV triangle.
        let mut expected = 0usize;
        let mut got = 0usize;
        for ty in 0..uv {
            for tx in 0..uv {
                let u = (tx as f64 + 0.5) / uv as f64;
                let v = 1.0 - (ty as f64 + 0.5) / uv as f64;
                if u + v > 1.0 {
                    continue; // outside the UV triangle
                }
                let px = u * 63.0;
                let py = (1.0 - v) * 63.0;
                // Chebyshev-ball dilation of the euclidean disc.
                let dx = (px - cx).abs() - radius as f64;
                let dy = (py - cy).abs() - radius as f64;
                let inside = (dx.max(0.0)).powi(2) + (dy.max(0.0)).powi(2) <= r * r;
                if inside {
                    expected += 1;
                }
                if masks.m_leye.get(tx, ty) >= 0.5 {
                    got += 1;
                }
            }
        }
        let rel = (got as f64 - expected as f64).abs() / expected as f64;
        assert!(
            rel <= 0.15,
            "unwrapped eye-mask area {got} vs analytic {expected} (rel {rel})"
        );
    }

    #[test]
    fn correct_artifacts_empty_masks_is_identity() {
        let tex = crate::synthetic::smooth_texture(32, 901, [0.5, 0.5, 0.5], 0.1);
        let out = correct_artifacts(
            &tex,
            &ArtifactMasks::empty(32),
            &template(32),
            SolverParams::default(),
        )
        .unwrap();
        assert_eq!(out.components, 0);
        assert_eq!(out.image, tex);
    }

    #[test]
    fn correct_artifacts_template_fixed_point() {
        let tpl = template(32);
        let mut masks = ArtifactMasks::empty(32);
        for y in 10..18 {
            for x in 8..15 {
                masks.m_leye.set(x, y, 1.0);
            }
        }
        let out = correct_artifacts(&tpl.image, &masks, &tpl, SolverParams::default()).unwrap();
        for c in 0..3 {
            for (a, b) in out.image.channel(c).iter().zip(tpl.image.channel(c)) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn correct_artifacts_changes_nothing_outside_union() {
        let tex = crate::synthetic::smooth_texture(32, 902, [0.4, 0.5, 0.6], 0.2);
        let mut masks = ArtifactMasks::empty(32);
        for y in 5..12 {
            for x in 5..11 {
                masks.m_reye.set(x, y, 1.0);
            }
        }
        for y in 20..26 {
            for x in 18..25 {
                masks.m_mouth.set(x, y, 1.0);
            }
        }
        let out = correct_artifacts(&tex, &masks, &template(32), SolverParams::default()).unwrap();
        assert_eq!(out.components, 2);
        let union = masks.union();
        for c in 0..3 {
            for (i, (a, b)) in out.image.channel(c).iter().zip(tex.channel(c)).enumerate() {
                if union.data()[i] < 0.5 {
                    assert_eq!(a, b, "texel {i} outside the union changed");
                }
            }
        }
    }

    #[test]
    fn correct_artifacts_matches_dense_oracle() {
        // Checkerboard texture, constant-ish template, one 8x8 mask.
        let tex = ImageRgb::from_fn(24, 24, |x, y| {
            if (x / 3 + y / 3) % 2 == 0 {
                [0.8, 0.2, 0.2]
            } else {
                [0.2, 0.2, 0.8]
            }
        });
        let tpl = TemplateTexture {
            image: ImageRgb::constant(24, 24, [0.5, 0.5, 0.5]),
            face_mask: ImageGray::constant(24, 24, 1.0),
        };
        let mut masks = ArtifactMasks::empty(24);
        for y in 8..16 {
            for x in 8..16 {
                masks.m_mouth.set(x, y, 1.0);
            }
        }
        let params = SolverParams {
            tolerance: 1e-12,
            max_iters: None,
        };
        let out = correct_artifacts(&tex, &masks, &tpl, params).unwrap();
        let oracle = dense_oracle(&PoissonProblem {
            region: &masks.union(),
            target: &tex,
            source: &tpl.image,
            params,
        })
        .unwrap();
        for c in 0..3 {
            for (a, b) in out.image.channel(c).iter().zip(oracle.channel(c)) {
                assert!((a - b).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn complete_texture_mask_extremes() {
        let tpl = template(64);
        let tex = crate::synthetic::smooth_texture(64, 903, [0.6, 0.5, 0.45], 0.08);

        let all_face = ImageGray::constant(64, 64, 1.0);
        let kept = complete_texture(&tex, &all_face, &tpl, 1.5, Some(3)).unwrap();
        for c in 0..3 {
            for (a, b) in kept.channel(c).iter().zip(tex.channel(c)) {
                assert!((a - b).abs() <= 1e-4);
            }
        }

        // face_mask = 0 is rejected as empty; a single-texel mask shows the
        // other extreme: output follows the color-matched template away from
        // that texel.
        let empty = ImageGray::constant(64, 64, 0.0);
        assert!(complete_texture(&tex, &empty, &tpl, 1.5, Some(3)).is_err());
    }

    #[test]
    fn complete_texture_keeps_interior_of_face_region() {
        // Deep inside the face mask (where every pyramid level of the mask
        // is still 1) the output equals the corrected texture.
        let tpl = template(64);
        let tex = crate::synthetic::smooth_texture(64, 905, [0.55, 0.5, 0.45], 0.1);
        let levels = 3usize;
        let face = ImageGray::from_fn(64, 64, |x, _| if x < 40 { 1.0 } else { 0.0 });
        let out = complete_texture(&tex, &face, &tpl, 1.5, Some(levels)).unwrap();
        let margin = 2usize << levels;
        for y in 0..64 {
            for x in 0..40 - margin {
                for c in 0..3 {
                    let (a, b) = (out.pixel(x, y)[c], tex.pixel(x, y)[c]);
                    assert!((a - b).abs() <= 1e-3, "({x},{y}) ch{c}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn complete_texture_identity_at_omega_one() {
        let tpl = template(64);
        let face = ImageGray::constant(64, 64, 1.0);
        let out = complete_texture(&tpl.image, &face, &tpl, 1.0, Some(3)).unwrap();
        for c in 0..3 {
            for (a, b) in out.channel(c).iter().zip(tpl.image.channel(c)) {
                assert!((a - b).abs() <= 1e-3);
            }
        }
    }

    #[test]
    fn hybrid_report_empty_nonface() {
        let tpl = template(32);
        let tex = crate::synthetic::smooth_texture(32, 904, [0.6, 0.5, 0.4], 0.05);
        let face = ImageGray::constant(32, 32, 1.0);
        let report = hybrid_vs_poisson_report(
            &tex,
            &ArtifactMasks::empty(32),
            &face,
            &tpl,
            1.0,
            Some(2),
            SolverParams::default(),
        )
        .unwrap();
        assert!(report.mean_l1_face <= 1e-4, "l1 {}", report.mean_l1_face);
    }
}
