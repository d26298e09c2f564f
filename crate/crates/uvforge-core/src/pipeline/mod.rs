//! End-to-end texture pipeline: unwrap three views, color-match the sides to
//! the frontal map, fuse with visibility masks, build artifact masks,
//! correct from the template via Poisson editing, complete the non-face
//! regions, and score the result.
//!
//! Every stage hands its outputs through the same 16-bit quantization the
//! intermediate PNG files use, so rerunning a single stage from saved
//! intermediates reproduces the pipeline output bit for bit.

pub mod config;

pub use config::{validate_config, PipelineConfig, PipelineParams, ValidationReport};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::correction::{
    build_artifact_masks, complete_texture, correct_artifacts, ArtifactMasks, ParsingLabels,
    TemplateTexture,
};
use crate::error::{Error, Result};
use crate::geometry::{load_obj, CameraPose, FaceMesh};
use crate::image::{
    load_labels, load_rgb, save_gray_u16, save_rgb, save_rgb_u16, ImageGray, ImageRgb,
};
use crate::metrics::{bs_error, BsErrorParams};
use crate::poisson::SolverParams;
use crate::texture::{linear_blend, match_color, ColorMatchParams};
use crate::unwrap::{unwrap_mask, unwrap_texture};

/// Quantize to the 16-bit grid used by intermediate PNGs.
pub fn quantize16_rgb(img: &ImageRgb) -> ImageRgb {
    let mut out = img.clone();
    for c in 0..3 {
        for v in out.channel_mut(c) {
            *v = (v.clamp(0.0, 1.0) * 65535.0).round() / 65535.0;
        }
    }
    out
}

pub fn quantize16_gray(img: &ImageGray) -> ImageGray {
    let mut out = img.clone();
    for v in out.data_mut() {
        *v = (v.clamp(0.0, 1.0) * 65535.0).round() / 65535.0;
    }
    out
}

/// Per-view unwrap products (quantized).
pub struct ViewUnwrap {
    pub texture: ImageRgb,
    pub coverage: ImageGray,
    /// Coverage restricted to face-labelled pixels; soft in [0,1].
    pub face_weight: ImageGray,
    pub degenerate_triangles: usize,
}

pub fn stage_unwrap(
    photo: &ImageRgb,
    parsing: &ParsingLabels,
    mesh: &FaceMesh,
    pose: &CameraPose,
    uv_size: usize,
) -> Result<ViewUnwrap> {
    let unwrapped = unwrap_texture(photo, mesh, pose, uv_size)?;
    let (face_uv, _) = unwrap_mask(&parsing.face_mask(), mesh, pose, uv_size)?;
    let mut face_weight = face_uv;
    for (w, c) in face_weight
        .data_mut()
        .iter_mut()
        .zip(unwrapped.coverage.data())
    {
        *w *= c;
    }
    Ok(ViewUnwrap {
        texture: quantize16_rgb(&unwrapped.texture),
        coverage: quantize16_gray(&unwrapped.coverage),
        face_weight: quantize16_gray(&face_weight),
        degenerate_triangles: unwrapped.degenerate_triangles,
    })
}

/// Color-match a side view toward the frontal view; statistics run over the
/// overlap of the two face-weight masks.
pub fn stage_match(
    side_tex: &ImageRgb,
    frontal_tex: &ImageRgb,
    side_weight: &ImageGray,
    frontal_weight: &ImageGray,
    omega: f64,
) -> Result<ImageRgb> {
    let overlap = ImageGray::from_fn(side_weight.width(), side_weight.height(), |x, y| {
        if side_weight.get(x, y) >= 0.5 && frontal_weight.get(x, y) >= 0.5 {
            1.0
        } else {
            0.0
        }
    });
    let matched = match_color(
        side_tex,
        frontal_tex,
        &overlap,
        &overlap,
        ColorMatchParams::new(omega)?,
    )?;
    Ok(quantize16_rgb(&matched))
}

pub struct FuseOutput {
    pub texture: ImageRgb,
    /// Texels carried by at least one view (the UV face region).
    pub face_mask: ImageGray,
    /// Texels that fell back to the template.
    pub template_filled: usize,
}

const FUSE_WEIGHT_EPS: f64 = 1e-6;

/// Blend the color-matched views with their visibility weights; texels no
/// view covers fall back to the template so later stages always see valid
/// colors.
pub fn stage_fuse(
    textures: &[ImageRgb; 3],
    view_weights: &[ImageGray; 3],
    template: &ImageRgb,
) -> Result<FuseOutput> {
    let (w, h) = (textures[0].width(), textures[0].height());
    let mut template_weight = ImageGray::new(w, h)?;
    let mut face_mask = ImageGray::new(w, h)?;
    let mut template_filled = 0usize;
    for y in 0..h {
        for x in 0..w {
            let total: f64 = view_weights.iter().map(|m| m.get(x, y)).sum();
            if total < FUSE_WEIGHT_EPS {
                template_weight.set(x, y, 1.0);
                template_filled += 1;
            } else {
                face_mask.set(x, y, 1.0);
            }
        }
    }
    let fused = linear_blend(
        &[
            textures[0].clone(),
            textures[1].clone(),
            textures[2].clone(),
            template.clone(),
        ],
        &[
            view_weights[0].clone(),
            view_weights[1].clone(),
            view_weights[2].clone(),
            template_weight,
        ],
    )?;
    Ok(FuseOutput {
        texture: quantize16_rgb(&fused),
        face_mask,
        template_filled,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PoissonStats {
    pub components: usize,
    pub iterations: usize,
    pub converged: bool,
}

pub fn stage_correct(
    tex: &ImageRgb,
    masks: &ArtifactMasks,
    template: &TemplateTexture,
    tolerance: f64,
) -> Result<(ImageRgb, PoissonStats)> {
    let outcome = correct_artifacts(
        tex,
        masks,
        template,
        SolverParams {
            tolerance,
            max_iters: None,
        },
    )?;
    Ok((
        quantize16_rgb(&outcome.image),
        PoissonStats {
            components: outcome.components,
            iterations: outcome.total_iterations,
            converged: outcome.converged,
        },
    ))
}

pub fn stage_complete(
    tex_hat: &ImageRgb,
    face_mask: &ImageGray,
    template: &TemplateTexture,
    omega: f64,
    levels: Option<usize>,
) -> Result<ImageRgb> {
    Ok(quantize16_rgb(&complete_texture(
        tex_hat, face_mask, template, omega, levels,
    )?))
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    pub stage_seconds: BTreeMap<String, f64>,
    pub bs_error: f64,
    pub poisson: PoissonStats,
    pub degenerate_triangles: usize,
    pub template_filled_texels: usize,
    pub warnings: Vec<String>,
    pub output: PathBuf,
}

pub struct PipelineOutput {
    pub report: PipelineReport,
    pub final_texture: ImageRgb,
    /// Fused (pre-correction) texture; artifact masks; the completion face
    /// mask. Kept for stage-level tooling and tests.
    pub fused_texture: ImageRgb,
    pub artifact_masks: ArtifactMasks,
    pub face_mask: ImageGray,
}

fn stage_err(stage: &str, input: impl Into<String>) -> impl FnOnce(Error) -> Error {
    let stage = stage.to_string();
    let input = input.into();
    move |source| Error::Stage {
        stage,
        input,
        source: Box::new(source),
    }
}

fn load_parsing(path: &Path) -> Result<ParsingLabels> {
    let (w, h, codes) = load_labels(path)?;
    ParsingLabels::new(w, h, codes)
}

/// Run the full pipeline for one face. `keep_intermediates` writes each
/// stage's outputs as 16-bit PNGs into `<output_dir>/intermediates/`.
pub fn run_pipeline(config: &PipelineConfig, keep_intermediates: bool) -> Result<PipelineOutput> {
    let mut stage_seconds = BTreeMap::new();
    let mut warnings = Vec::new();
    let uv_size = config.params.uv_size;

    // Load every input up front; failures here are configuration problems.
    let mesh = load_obj(&config.mesh)?;
    let assets = config.asset_files().load(uv_size)?;
    let views = [
        ("frontal", &config.views.frontal),
        ("left", &config.views.left),
        ("right", &config.views.right),
    ];
    let mut photos = Vec::new();
    for (_, view) in &views {
        photos.push((
            load_rgb(&view.photo)?,
            CameraPose::load_json(&view.pose)?,
            load_parsing(&view.labels)?,
        ));
    }

    let out_dir = &config.output_dir;
    std::fs::create_dir_all(out_dir).map_err(|source| Error::Io {
        path: out_dir.clone(),
        source,
    })?;
    let inter_dir = out_dir.join("intermediates");
    if keep_intermediates {
        std::fs::create_dir_all(&inter_dir).map_err(|source| Error::Io {
            path: inter_dir.clone(),
            source,
        })?;
    }

    // Unwrap each view.
    let t0 = Instant::now();
    let mut unwraps = Vec::new();
    let mut degenerate_triangles = 0usize;
    for ((name, view), (photo, pose, parsing)) in views.iter().zip(&photos) {
        let uw = stage_unwrap(photo, parsing, &mesh, pose, uv_size)
            .map_err(stage_err("unwrap", view.photo.display().to_string()))?;
        degenerate_triangles += uw.degenerate_triangles;
        if keep_intermediates {
            save_rgb_u16(&uw.texture, inter_dir.join(format!("unwrap_{name}.png")))?;
            save_gray_u16(&uw.coverage, inter_dir.join(format!("coverage_{name}.png")))?;
            save_gray_u16(&uw.face_weight, inter_dir.join(format!("face_{name}.png")))?;
        }
        unwraps.push(uw);
    }
    stage_seconds.insert("unwrap".into(), t0.elapsed().as_secs_f64());

    // Color-match the side views toward the frontal view.
    let t0 = Instant::now();
    let omega = config.params.omega;
    let matched_left = stage_match(
        &unwraps[1].texture,
        &unwraps[0].texture,
        &unwraps[1].face_weight,
        &unwraps[0].face_weight,
        omega,
    )
    .map_err(stage_err("match-color", "left view"))?;
    let matched_right = stage_match(
        &unwraps[2].texture,
        &unwraps[0].texture,
        &unwraps[2].face_weight,
        &unwraps[0].face_weight,
        omega,
    )
    .map_err(stage_err("match-color", "right view"))?;
    if keep_intermediates {
        save_rgb_u16(&matched_left, inter_dir.join("matched_left.png"))?;
        save_rgb_u16(&matched_right, inter_dir.join("matched_right.png"))?;
    }
    stage_seconds.insert("match".into(), t0.elapsed().as_secs_f64());

    // Fuse with the visibility masks.
    let t0 = Instant::now();
    let weight_of = |uw: &ViewUnwrap, vis: &ImageGray| {
        let mut w = uw.face_weight.clone();
        for (v, m) in w.data_mut().iter_mut().zip(vis.data()) {
            *v *= m;
        }
        quantize16_gray(&w)
    };
    let view_weights = [
        weight_of(&unwraps[0], &assets.visibility[0]),
        weight_of(&unwraps[1], &assets.visibility[1]),
        weight_of(&unwraps[2], &assets.visibility[2]),
    ];
    let fused = stage_fuse(
        &[unwraps[0].texture.clone(), matched_left, matched_right],
        &view_weights,
        &assets.template.image,
    )
    .map_err(stage_err("fuse", "fused texture"))?;
    if keep_intermediates {
        save_rgb_u16(&fused.texture, inter_dir.join("fused.png"))?;
        save_gray_u16(&fused.face_mask, inter_dir.join("face_mask.png"))?;
        for (name, w) in ["frontal", "left", "right"].iter().zip(&view_weights) {
            save_gray_u16(w, inter_dir.join(format!("weight_{name}.png")))?;
        }
    }
    stage_seconds.insert("fuse".into(), t0.elapsed().as_secs_f64());

    // Artifact masks from the frontal parsing.
    let t0 = Instant::now();
    let masks = build_artifact_masks(
        &photos[0].2,
        &fused.texture,
        &mesh,
        &photos[0].1,
        uv_size,
        config.params.scaled_dilation_radius(),
        &assets.nose_roi,
        config.params.nostril_percentile,
    )
    .map_err(stage_err(
        "masks",
        config.views.frontal.labels.display().to_string(),
    ))?;
    if keep_intermediates {
        save_gray_u16(&masks.m_leye, inter_dir.join("mask_leye.png"))?;
        save_gray_u16(&masks.m_reye, inter_dir.join("mask_reye.png"))?;
        save_gray_u16(&masks.m_mouth, inter_dir.join("mask_mouth.png"))?;
        save_gray_u16(&masks.m_nostril, inter_dir.join("mask_nostril.png"))?;
    }
    stage_seconds.insert("masks".into(), t0.elapsed().as_secs_f64());

    // Poisson correction from the template.
    let t0 = Instant::now();
    let (corrected, poisson) = stage_correct(
        &fused.texture,
        &masks,
        &assets.template,
        config.params.poisson_tolerance,
    )
    .map_err(stage_err("correct", "fused texture"))?;
    if keep_intermediates {
        save_rgb_u16(&corrected, inter_dir.join("corrected.png"))?;
    }
    stage_seconds.insert("correct".into(), t0.elapsed().as_secs_f64());

    // Completion: corrected regions must stay, so the face mask includes the
    // artifact masks.
    let t0 = Instant::now();
    let mut completion_mask = fused.face_mask.clone();
    for (v, m) in completion_mask
        .data_mut()
        .iter_mut()
        .zip(masks.union().data())
    {
        if *m >= 0.5 {
            *v = 1.0;
        }
    }
    let final_texture = stage_complete(
        &corrected,
        &completion_mask,
        &assets.template,
        omega,
        config.params.pyramid_levels,
    )
    .map_err(stage_err("complete", "corrected texture"))?;
    stage_seconds.insert("complete".into(), t0.elapsed().as_secs_f64());

    // Score and write outputs.
    let t0 = Instant::now();
    let score = bs_error(&final_texture, &BsErrorParams::default())?;
    stage_seconds.insert("bs-error".into(), t0.elapsed().as_secs_f64());

    let output = out_dir.join("t_hat_final.png");
    save_rgb(&final_texture, &output)?;
    if !poisson.converged {
        warnings.push("poisson solver did not reach tolerance".into());
    }
    if degenerate_triangles > 0 {
        warnings.push(format!(
            "{degenerate_triangles} degenerate UV triangles skipped"
        ));
    }

    let report = PipelineReport {
        stage_seconds,
        bs_error: score,
        poisson,
        degenerate_triangles,
        template_filled_texels: fused.template_filled,
        warnings,
        output,
    };
    let report_path = out_dir.join("report.json");
    std::fs::write(
        &report_path,
        serde_json::to_string_pretty(&report).expect("report serializes"),
    )
    .map_err(|source| Error::Io {
        path: report_path,
        source,
    })?;

    Ok(PipelineOutput {
        report,
        final_texture,
        fused_texture: fused.texture,
        artifact_masks: masks,
        face_mask: completion_mask,
    })
}
