//! Facial UV-texture toolkit: extraction of texture UV-maps from posed face
//! images, artifact correction and completion against a template texture,
//! illumination-evenness scoring, and single-image fitting of a linear
//! morphable model with spherical-harmonic lighting.
//!
//! The crate is organized around the texture pipeline:
//!
//! 1. [`unwrap`] rasterizes photographs into UV space over a fitted mesh.
//! 2. [`texture`] color-matches the per-view maps and fuses them with
//!    visibility masks; it also provides Laplacian pyramids and blending.
//! 3. [`correction`] builds artifact masks (eyes, mouth, nostrils), fills
//!    them from a template via [`poisson`] editing, and completes non-face
//!    regions with color matching plus pyramid blending.
//! 4. [`metrics`] scores the result's brightness symmetry.
//! 5. [`fitting`] reconstructs shape, texture, pose, and lighting
//!    coefficients from a single image.
//!
//! [`pipeline`] wires the stages together behind a JSON config; the
//! `uvforge` binary exposes each stage as a subcommand.

// Index-based loops over rasters and coefficient blocks are the house style.
#![allow(clippy::needless_range_loop)]

pub mod assets;
pub mod correction;
pub mod error;
pub mod fitting;
pub mod geometry;
pub mod image;
pub mod lighting;
pub mod metrics;
pub mod pipeline;
pub mod poisson;
pub mod raster;
pub mod render;
pub mod synthetic;
pub mod texture;
pub mod unwrap;

pub use error::{Error, Result};
