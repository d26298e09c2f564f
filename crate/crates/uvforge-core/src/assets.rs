//! Bundled pipeline assets: the template texture with its face mask, the
//! per-view visibility masks, and the nose ROI, all in UV space and aligned
//! with the synthetic face topology ([`crate::synthetic::face_shell`]).
//!
//! The files are generated deterministically (`uvforge gen-assets`) and
//! shipped in the repository's `assets/` directory. Loaders resize to the
//! configured UV resolution. `UVFORGE_ASSET_DIR` overrides the directory.

use std::path::{Path, PathBuf};

use crate::correction::TemplateTexture;
use crate::error::{Error, Result};
use crate::image::{
    load_gray, load_rgb, resize_bilinear_gray, resize_bilinear_rgb, save_gray, save_rgb, ImageGray,
    ImageRgb,
};
use crate::synthetic::UV_MARGIN;

pub const TEMPLATE_TEXTURE: &str = "template_texture.png";
pub const TEMPLATE_FACE_MASK: &str = "template_face_mask.png";
pub const VIS_FRONTAL: &str = "vis_frontal.png";
pub const VIS_LEFT: &str = "vis_left.png";
pub const VIS_RIGHT: &str = "vis_right.png";
pub const NOSE_ROI: &str = "nose_roi.png";
pub const TINY_MODEL_DIR: &str = "tiny_model";

pub const ENV_ASSET_DIR: &str = "UVFORGE_ASSET_DIR";

/// Side-view yaw used when deriving the visibility masks.
pub const SIDE_VIEW_YAW: f64 = 0.55;

/// Asset directory: the explicit override, else `UVFORGE_ASSET_DIR`, else
/// `./assets`.
pub fn asset_dir(explicit: Option<&Path>) -> PathBuf {
    if let Some(dir) = explicit {
        return dir.to_path_buf();
    }
    if let Ok(env) = std::env::var(ENV_ASSET_DIR) {
        if !env.is_empty() {
            return PathBuf::from(env);
        }
    }
    PathBuf::from("assets")
}

/// Ellipsoid normal of the face shell at island coordinates `(u, v)` in
/// [0,1]^2 (analytic; matches the mesh the masks are meant for).
fn shell_normal(u: f64, v: f64) -> [f64; 3] {
    let (a, b, c) = (0.9, 1.1, 0.95);
    let theta = (u - 0.5) * std::f64::consts::PI * 0.85;
    let phi = (v - 0.5) * std::f64::consts::PI * 0.80;
    let p = [
        a * theta.sin() * phi.cos(),
        b * phi.sin(),
        c * theta.cos() * phi.cos(),
    ];
    let n = [p[0] / (a * a), p[1] / (b * b), p[2] / (c * c)];
    let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    [n[0] / len, n[1] / len, n[2] / len]
}

/// Island coordinates of a texel, or `None` outside the UV island.
fn island_uv(x: usize, y: usize, size: usize) -> Option<(f64, f64)> {
    let u = (x as f64 + 0.5) / size as f64;
    let v = 1.0 - (y as f64 + 0.5) / size as f64;
    let span = 1.0 - 2.0 * UV_MARGIN;
    let iu = (u - UV_MARGIN) / span;
    let iv = (v - UV_MARGIN) / span;
    if (0.0..=1.0).contains(&iu) && (0.0..=1.0).contains(&iv) {
        Some((iu, iv))
    } else {
        None
    }
}

fn view_weight(normal: [f64; 3], dir: [f64; 3]) -> f64 {
    let d = normal[0] * dir[0] + normal[1] * dir[1] + normal[2] * dir[2];
    d.max(0.0).powi(4)
}

/// Model-space direction toward the camera for a yaw-rotated view.
fn view_dir(yaw: f64) -> [f64; 3] {
    [-yaw.sin(), 0.0, yaw.cos()]
}

pub struct GeneratedAssets {
    pub template: ImageRgb,
    pub template_face_mask: ImageGray,
    pub vis_frontal: ImageGray,
    pub vis_left: ImageGray,
    pub vis_right: ImageGray,
    pub nose_roi: ImageGray,
}

/// Build the default assets at the given resolution.
pub fn generate(size: usize) -> GeneratedAssets {
    let template = crate::synthetic::smooth_texture(size, 4242, [0.72, 0.55, 0.45], 0.04);

    let template_face_mask = ImageGray::from_fn(size, size, |x, y| {
        if island_uv(x, y, size).is_some() {
            1.0
        } else {
            0.0
        }
    });

    let frontal_dir = view_dir(0.0);
    // A view that turns the head left (positive yaw) exposes the right side
    // of the face toward the camera, and vice versa.
    let left_dir = view_dir(SIDE_VIEW_YAW);
    let right_dir = view_dir(-SIDE_VIEW_YAW);
    let vis = |dir: [f64; 3]| {
        ImageGray::from_fn(size, size, |x, y| match island_uv(x, y, size) {
            Some((u, v)) => view_weight(shell_normal(u, v), dir),
            None => 0.0,
        })
    };
    let vis_frontal = vis(frontal_dir);
    let vis_left = vis(left_dir);
    let vis_right = vis(right_dir);

    // Nose ROI: a small ellipse slightly below the island center.
    let nose_roi = ImageGray::from_fn(size, size, |x, y| match island_uv(x, y, size) {
        Some((u, v)) => {
            let du = (u - 0.5) / 0.10;
            let dv = (v - 0.42) / 0.12;
            if du * du + dv * dv <= 1.0 {
                1.0
            } else {
                0.0
            }
        }
        None => 0.0,
    });

    GeneratedAssets {
        template,
        template_face_mask,
        vis_frontal,
        vis_left,
        vis_right,
        nose_roi,
    }
}

/// Generate and write the asset files plus the tiny morphable model.
pub fn write_assets(dir: impl AsRef<Path>, size: usize) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let assets = generate(size);
    save_rgb(&assets.template, dir.join(TEMPLATE_TEXTURE))?;
    save_gray(&assets.template_face_mask, dir.join(TEMPLATE_FACE_MASK))?;
    save_gray(&assets.vis_frontal, dir.join(VIS_FRONTAL))?;
    save_gray(&assets.vis_left, dir.join(VIS_LEFT))?;
    save_gray(&assets.vis_right, dir.join(VIS_RIGHT))?;
    save_gray(&assets.nose_roi, dir.join(NOSE_ROI))?;
    crate::fitting::save_model(&crate::synthetic::tiny_model(7), dir.join(TINY_MODEL_DIR))
}

/// Assets loaded and resized for a pipeline run.
pub struct LoadedAssets {
    pub template: TemplateTexture,
    pub visibility: [ImageGray; 3], // frontal, left, right
    pub nose_roi: ImageGray,
}

pub struct AssetFiles {
    pub template: PathBuf,
    pub template_face_mask: PathBuf,
    pub vis_frontal: PathBuf,
    pub vis_left: PathBuf,
    pub vis_right: PathBuf,
    pub nose_roi: PathBuf,
}

impl AssetFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            template: dir.join(TEMPLATE_TEXTURE),
            template_face_mask: dir.join(TEMPLATE_FACE_MASK),
            vis_frontal: dir.join(VIS_FRONTAL),
            vis_left: dir.join(VIS_LEFT),
            vis_right: dir.join(VIS_RIGHT),
            nose_roi: dir.join(NOSE_ROI),
        }
    }

    pub fn all_paths(&self) -> [&PathBuf; 6] {
        [
            &self.template,
            &self.template_face_mask,
            &self.vis_frontal,
            &self.vis_left,
            &self.vis_right,
            &self.nose_roi,
        ]
    }

    pub fn load(&self, uv_size: usize) -> Result<LoadedAssets> {
        let template = resize_bilinear_rgb(&load_rgb(&self.template)?, uv_size, uv_size)?;
        let resize = |path: &PathBuf| -> Result<ImageGray> {
            resize_bilinear_gray(&load_gray(path)?, uv_size, uv_size)
        };
        Ok(LoadedAssets {
            template: TemplateTexture {
                image: template,
                face_mask: resize(&self.template_face_mask)?,
            },
            visibility: [
                resize(&self.vis_frontal)?,
                resize(&self.vis_left)?,
                resize(&self.vis_right)?,
            ],
            nose_roi: resize(&self.nose_roi)?,
        })
    }
}
