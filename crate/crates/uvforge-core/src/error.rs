use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid image dimensions {width}x{height}")]
    InvalidDimensions { width: usize, height: usize },

    #[error("image size mismatch: expected {expected_w}x{expected_h}, got {got_w}x{got_h}")]
    SizeMismatch {
        expected_w: usize,
        expected_h: usize,
        got_w: usize,
        got_h: usize,
    },

    #[error("blur kernel size must be odd and >= 1, got {0}")]
    EvenKernel(usize),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to decode {path}: {source}")]
    ImageDecode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("failed to encode {path}: {source}")]
    ImageEncode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("unsupported image format in {path}: {detail}")]
    UnsupportedImage { path: PathBuf, detail: String },

    #[error("OBJ parse error at {path}:{line}: {detail}")]
    ObjParse {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    #[error("mesh is invalid: {0}")]
    InvalidMesh(String),

    #[error("landmark list must have 68 entries, got {0}")]
    BadLandmarkCount(usize),

    #[error("JSON error in {path}: {detail}")]
    Json { path: PathBuf, detail: String },

    #[error("color matching failed: {0}")]
    ColorMatch(String),

    #[error("blend weights sum to zero at texel ({x}, {y})")]
    ZeroBlendWeight { x: usize, y: usize },

    #[error("pyramid: {0}")]
    Pyramid(String),

    #[error("poisson: {0}")]
    Poisson(String),

    #[error("lighting: {0}")]
    Lighting(String),

    #[error("fitting: {0}")]
    Fitting(String),

    #[error("morphable model: {0}")]
    Model(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("pipeline stage '{stage}' failed on {input}: {source}")]
    Stage {
        stage: String,
        input: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
