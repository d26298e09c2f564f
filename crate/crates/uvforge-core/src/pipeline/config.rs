//! Pipeline configuration: JSON schema, validation, and asset resolution.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::assets::{asset_dir, AssetFiles};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViewInput {
    pub photo: PathBuf,
    pub pose: PathBuf,
    pub labels: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Views {
    pub frontal: ViewInput,
    pub left: ViewInput,
    pub right: ViewInput,
}

/// Explicit asset files; any omitted entry falls back to the standard file
/// name inside the asset directory (`assets/` or `UVFORGE_ASSET_DIR`).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AssetConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_face_mask: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vis_frontal: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vis_left: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vis_right: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nose_roi: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineParams {
    #[serde(default = "default_omega")]
    pub omega: f64,
    /// Dilation radius in pixels at 1024 UV resolution; scaled
    /// proportionally for other sizes.
    #[serde(default = "default_dilation")]
    pub dilation_radius: usize,
    #[serde(default = "default_percentile")]
    pub nostril_percentile: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pyramid_levels: Option<usize>,
    #[serde(default = "default_tolerance")]
    pub poisson_tolerance: f64,
    #[serde(default = "default_uv_size")]
    pub uv_size: usize,
}

fn default_omega() -> f64 {
    1.5
}
fn default_dilation() -> usize {
    6
}
fn default_percentile() -> f64 {
    30.0
}
fn default_tolerance() -> f64 {
    1e-8
}
fn default_uv_size() -> usize {
    1024
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            omega: default_omega(),
            dilation_radius: default_dilation(),
            nostril_percentile: default_percentile(),
            pyramid_levels: None,
            poisson_tolerance: default_tolerance(),
            uv_size: default_uv_size(),
        }
    }
}

impl PipelineParams {
    /// Dilation radius scaled from the 1024-reference to the configured
    /// UV size, at least 1.
    pub fn scaled_dilation_radius(&self) -> usize {
        ((self.dilation_radius * self.uv_size + 512) / 1024).max(1)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub mesh: PathBuf,
    pub views: Views,
    #[serde(default)]
    pub assets: AssetConfig,
    #[serde(default)]
    pub params: PipelineParams,
    pub output_dir: PathBuf,
}

const KNOWN_TOP_KEYS: &[&str] = &["mesh", "views", "assets", "params", "output_dir"];
const KNOWN_PARAM_KEYS: &[&str] = &[
    "omega",
    "dilation_radius",
    "nostril_percentile",
    "pyramid_levels",
    "poisson_tolerance",
    "uv_size",
];
const KNOWN_ASSET_KEYS: &[&str] = &[
    "dir",
    "template",
    "template_face_mask",
    "vis_frontal",
    "vis_left",
    "vis_right",
    "nose_roi",
];

#[derive(Debug)]
pub struct ValidationReport {
    pub config: PipelineConfig,
    pub warnings: Vec<String>,
}

impl PipelineConfig {
    /// Resolved asset file paths (explicit entries win; the rest come from
    /// the asset directory).
    pub fn asset_files(&self) -> AssetFiles {
        let dir = asset_dir(self.assets.dir.as_deref());
        let mut files = AssetFiles::in_dir(&dir);
        if let Some(p) = &self.assets.template {
            files.template = p.clone();
        }
        if let Some(p) = &self.assets.template_face_mask {
            files.template_face_mask = p.clone();
        }
        if let Some(p) = &self.assets.vis_frontal {
            files.vis_frontal = p.clone();
        }
        if let Some(p) = &self.assets.vis_left {
            files.vis_left = p.clone();
        }
        if let Some(p) = &self.assets.vis_right {
            files.vis_right = p.clone();
        }
        if let Some(p) = &self.assets.nose_roi {
            files.nose_roi = p.clone();
        }
        files
    }

    fn referenced_inputs(&self) -> Vec<PathBuf> {
        let mut paths = vec![self.mesh.clone()];
        for view in [&self.views.frontal, &self.views.left, &self.views.right] {
            paths.push(view.photo.clone());
            paths.push(view.pose.clone());
            paths.push(view.labels.clone());
        }
        for p in self.asset_files().all_paths() {
            paths.push(p.clone());
        }
        paths
    }
}

/// Parse and validate a config file: schema, unknown-key warnings, value
/// ranges, and existence of every referenced input. No computation.
pub fn validate_config(path: impl AsRef<Path>) -> Result<ValidationReport> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;

    let mut warnings = Vec::new();
    let mut warn_unknown = |value: &serde_json::Value, known: &[&str], scope: &str| {
        if let Some(obj) = value.as_object() {
            for key in obj.keys() {
                if !known.contains(&key.as_str()) {
                    warnings.push(format!("unknown key '{key}' in {scope}"));
                }
            }
        }
    };
    warn_unknown(&raw, KNOWN_TOP_KEYS, "config");
    warn_unknown(&raw["params"], KNOWN_PARAM_KEYS, "params");
    warn_unknown(&raw["assets"], KNOWN_ASSET_KEYS, "assets");

    let config: PipelineConfig = serde_json::from_value(raw).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;

    if config.params.uv_size < 64 {
        return Err(Error::Config(format!(
            "uv_size must be at least 64, got {}",
            config.params.uv_size
        )));
    }
    if config.params.omega.is_nan() || config.params.omega <= 0.0 {
        return Err(Error::Config(format!(
            "omega must be positive, got {}",
            config.params.omega
        )));
    }
    if !(config.params.poisson_tolerance > 0.0 && config.params.poisson_tolerance < 1.0) {
        return Err(Error::Config(format!(
            "poisson_tolerance must be in (0,1), got {}",
            config.params.poisson_tolerance
        )));
    }
    if !(0.0..=100.0).contains(&config.params.nostril_percentile) {
        return Err(Error::Config(format!(
            "nostril_percentile must be in [0,100], got {}",
            config.params.nostril_percentile
        )));
    }

    for p in config.referenced_inputs() {
        if !p.exists() {
            return Err(Error::Config(format!(
                "referenced file does not exist: {}",
                p.display()
            )));
        }
    }
    Ok(ValidationReport { config, warnings })
}
