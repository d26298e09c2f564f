//! Triangle meshes with UV atlases, the weak-perspective camera, projection,
//! and vertex normals.
//!
//! Conventions, fixed once here and relied on everywhere else:
//! - Euler order XYZ: `R = Rz(roll) * Ry(yaw) * Rx(pitch)` (pitch applied
//!   first).
//! - Pixel coordinates have y pointing down; integer coordinates are pixel
//!   centers; the model origin projects to the image center plus translation.
//! - Camera depth is camera-space z; larger depth is closer to the camera.
//! - A triangle is front-facing iff its camera-space normal has positive z
//!   (equivalently, positive projected signed area in a y-up frame).

mod obj;

pub use obj::{load_obj, save_obj};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LANDMARK_COUNT: usize = 68;

/// Triangle mesh with one UV per vertex and 68 landmark vertex indices.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceMesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[usize; 3]>,
    pub uvs: Vec<[f64; 2]>,
    pub landmark_indices: Vec<usize>,
}

impl FaceMesh {
    pub fn new(
        vertices: Vec<[f64; 3]>,
        triangles: Vec<[usize; 3]>,
        uvs: Vec<[f64; 2]>,
        landmark_indices: Vec<usize>,
    ) -> Result<Self> {
        let mesh = Self {
            vertices,
            triangles,
            uvs,
            landmark_indices,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if self.uvs.len() != n {
            return Err(Error::InvalidMesh(format!(
                "{} vertices but {} uvs",
                n,
                self.uvs.len()
            )));
        }
        for (ti, tri) in self.triangles.iter().enumerate() {
            for &vi in tri {
                if vi >= n {
                    return Err(Error::InvalidMesh(format!(
                        "triangle {ti} references vertex {vi} of {n}"
                    )));
                }
            }
        }
        if !self.landmark_indices.is_empty() {
            if self.landmark_indices.len() != LANDMARK_COUNT {
                return Err(Error::BadLandmarkCount(self.landmark_indices.len()));
            }
            for &vi in &self.landmark_indices {
                if vi >= n {
                    return Err(Error::InvalidMesh(format!(
                        "landmark references vertex {vi} of {n}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Signed area of a triangle in UV space (CCW positive).
    pub fn uv_area(&self, tri: usize) -> f64 {
        let [a, b, c] = self.triangles[tri];
        let (ua, ub, uc) = (self.uvs[a], self.uvs[b], self.uvs[c]);
        0.5 * ((ub[0] - ua[0]) * (uc[1] - ua[1]) - (uc[0] - ua[0]) * (ub[1] - ua[1]))
    }
}

/// Weak-perspective camera: rotation, 2-D image-plane translation in pixels,
/// isotropic scale in pixels per model unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    /// Euler angles (pitch, yaw, roll) in radians.
    pub rotation: [f64; 3],
    /// Image-plane offset in pixels.
    pub translation: [f64; 2],
    /// Pixels per model unit; must be positive.
    pub scale: f64,
}

impl CameraPose {
    pub fn identity() -> Self {
        Self {
            rotation: [0.0; 3],
            translation: [0.0; 2],
            scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale.is_nan() || !self.scale.is_finite() || self.scale <= 0.0 {
            return Err(Error::InvalidMesh(format!(
                "pose scale must be positive, got {}",
                self.scale
            )));
        }
        Ok(())
    }

    /// Row-major rotation matrix `Rz(roll) * Ry(yaw) * Rx(pitch)`.
    pub fn rotation_matrix(&self) -> [[f64; 3]; 3] {
        let [rx, ry, rz] = self.rotation;
        let (sx, cx) = rx.sin_cos();
        let (sy, cy) = ry.sin_cos();
        let (sz, cz) = rz.sin_cos();
        // Rz * Ry * Rx, expanded.
        [
            [cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx],
            [sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx],
            [-sy, cy * sx, cy * cx],
        ]
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let pose: CameraPose = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        pose.validate()?;
        Ok(pose)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("pose serializes");
        std::fs::write(path, text).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

#[inline]
pub fn rotate(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

/// Projection of every vertex: pixel position, camera depth, and a
/// per-vertex "in front" flag (always true for weak perspective; kept so
/// downstream code has one visibility record per vertex).
#[derive(Debug, Clone)]
pub struct ProjectedMesh {
    pub pixel_coords: Vec<[f64; 2]>,
    pub camera_depth: Vec<f64>,
    pub visible: Vec<bool>,
}

/// Weak-perspective projection:
/// `pixel = scale * (R v).xy * (1, -1) + image_center + translation`,
/// `depth = (R v).z`.
pub fn project(mesh: &FaceMesh, pose: &CameraPose, image_size: (usize, usize)) -> ProjectedMesh {
    let rot = pose.rotation_matrix();
    let cx = image_size.0 as f64 / 2.0;
    let cy = image_size.1 as f64 / 2.0;
    let mut pixel_coords = Vec::with_capacity(mesh.vertices.len());
    let mut camera_depth = Vec::with_capacity(mesh.vertices.len());
    for &v in &mesh.vertices {
        let r = rotate(&rot, v);
        pixel_coords.push([
            pose.scale * r[0] + cx + pose.translation[0],
            pose.scale * -r[1] + cy + pose.translation[1],
        ]);
        camera_depth.push(r[2]);
    }
    let visible = vec![true; mesh.vertices.len()];
    ProjectedMesh {
        pixel_coords,
        camera_depth,
        visible,
    }
}

#[inline]
fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Area-weighted vertex normals. The cross product of two triangle edges has
/// magnitude twice the triangle area, so summing raw cross products weights
/// by area. Vertices whose accumulated normal has (near-)zero length fall
/// back to +z.
pub fn vertex_normals(mesh: &FaceMesh) -> Vec<[f64; 3]> {
    let mut acc = vec![[0.0f64; 3]; mesh.vertices.len()];
    for tri in &mesh.triangles {
        let [a, b, c] = *tri;
        let n = cross(
            sub(mesh.vertices[b], mesh.vertices[a]),
            sub(mesh.vertices[c], mesh.vertices[a]),
        );
        for &vi in tri {
            acc[vi][0] += n[0];
            acc[vi][1] += n[1];
            acc[vi][2] += n[2];
        }
    }
    for n in &mut acc {
        let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        if len > 1e-12 {
            n[0] /= len;
            n[1] /= len;
            n[2] /= len;
        } else {
            *n = [0.0, 0.0, 1.0];
        }
    }
    acc
}

/// Landmark sidecar: `{"landmarks": [i0..i67]}`.
pub fn load_landmark_indices(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    #[derive(Deserialize)]
    struct Sidecar {
        landmarks: Vec<usize>,
    }
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let sidecar: Sidecar = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    if sidecar.landmarks.len() != LANDMARK_COUNT {
        return Err(Error::BadLandmarkCount(sidecar.landmarks.len()));
    }
    Ok(sidecar.landmarks)
}
