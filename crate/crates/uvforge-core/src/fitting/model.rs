//! Linear morphable model: mean shape/texture plus identity, expression, and
//! texture PCA components over a shared triangulation.
//!
//! On-disk form is a directory of little-endian 32-bit float (or u32 for
//! triangles) binary arrays described by a `manifest.json`; see the README
//! for the schema.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{FaceMesh, LANDMARK_COUNT};

#[derive(Debug, Clone)]
pub struct MorphableModel {
    num_vertices: usize,
    mean_shape: Vec<f64>,
    id_basis: Vec<Vec<f64>>,
    exp_basis: Vec<Vec<f64>>,
    mean_texture: Vec<f64>,
    tex_basis: Vec<Vec<f64>>,
    triangles: Vec<[usize; 3]>,
    uvs: Vec<[f64; 2]>,
    landmark_indices: Vec<usize>,
}

impl MorphableModel {
    /// Build a model, validating shapes and column-normalizing every basis
    /// component to unit Frobenius norm.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        mean_shape: Vec<f64>,
        id_basis: Vec<Vec<f64>>,
        exp_basis: Vec<Vec<f64>>,
        mean_texture: Vec<f64>,
        tex_basis: Vec<Vec<f64>>,
        triangles: Vec<[usize; 3]>,
        uvs: Vec<[f64; 2]>,
        landmark_indices: Vec<usize>,
    ) -> Result<Self> {
        if !mean_shape.len().is_multiple_of(3) || mean_shape.is_empty() {
            return Err(Error::Model("mean shape length must be 3N".into()));
        }
        let num_vertices = mean_shape.len() / 3;
        let check = |name: &str, v: &[f64]| -> Result<()> {
            if v.len() != num_vertices * 3 {
                return Err(Error::Model(format!(
                    "{name} has {} entries, expected {}",
                    v.len(),
                    num_vertices * 3
                )));
            }
            Ok(())
        };
        check("mean_texture", &mean_texture)?;
        for (name, basis) in [("id", &id_basis), ("exp", &exp_basis), ("tex", &tex_basis)] {
            for (k, comp) in basis.iter().enumerate() {
                check(&format!("{name}_basis[{k}]"), comp)?;
            }
        }
        if uvs.len() != num_vertices {
            return Err(Error::Model(format!(
                "{} uvs for {num_vertices} vertices",
                uvs.len()
            )));
        }
        for tri in &triangles {
            if tri.iter().any(|&v| v >= num_vertices) {
                return Err(Error::Model("triangle index out of range".into()));
            }
        }
        if landmark_indices.len() != LANDMARK_COUNT {
            return Err(Error::BadLandmarkCount(landmark_indices.len()));
        }
        if landmark_indices.iter().any(|&v| v >= num_vertices) {
            return Err(Error::Model("landmark index out of range".into()));
        }

        let normalize = |basis: Vec<Vec<f64>>| -> Result<Vec<Vec<f64>>> {
            basis
                .into_iter()
                .enumerate()
                .map(|(k, mut comp)| {
                    let norm = comp.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm <= 1e-12 {
                        return Err(Error::Model(format!("basis component {k} is zero")));
                    }
                    for v in &mut comp {
                        *v /= norm;
                    }
                    Ok(comp)
                })
                .collect()
        };

        Ok(Self {
            num_vertices,
            mean_shape,
            id_basis: normalize(id_basis)?,
            exp_basis: normalize(exp_basis)?,
            mean_texture,
            tex_basis: normalize(tex_basis)?,
            triangles,
            uvs,
            landmark_indices,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (
            self.id_basis.len(),
            self.exp_basis.len(),
            self.tex_basis.len(),
        )
    }

    pub fn mean_shape(&self) -> &[f64] {
        &self.mean_shape
    }

    pub fn mean_texture(&self) -> &[f64] {
        &self.mean_texture
    }

    pub fn id_basis(&self) -> &[Vec<f64>] {
        &self.id_basis
    }

    pub fn exp_basis(&self) -> &[Vec<f64>] {
        &self.exp_basis
    }

    pub fn tex_basis(&self) -> &[Vec<f64>] {
        &self.tex_basis
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn uvs(&self) -> &[[f64; 2]] {
        &self.uvs
    }

    pub fn landmark_indices(&self) -> &[usize] {
        &self.landmark_indices
    }

    /// Mesh at given vertex positions, keeping the model's topology.
    pub fn mesh_with_vertices(&self, vertices: Vec<[f64; 3]>) -> FaceMesh {
        FaceMesh {
            vertices,
            triangles: self.triangles.clone(),
            uvs: self.uvs.clone(),
            landmark_indices: self.landmark_indices.clone(),
        }
    }
}

// --- Disk format ------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct Manifest {
    num_vertices: usize,
    num_triangles: usize,
    dims: ManifestDims,
    landmark_indices: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct ManifestDims {
    id: usize,
    exp: usize,
    tex: usize,
}

fn read_f32(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(io_err)?
        .read_to_end(&mut bytes)
        .map_err(io_err)?;
    if bytes.len() != expected * 4 {
        return Err(Error::Model(format!(
            "{}: expected {} f32 values, file holds {} bytes",
            path.display(),
            expected,
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

fn write_f32(path: &Path, values: &[f64]) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = Vec::with_capacity(values.len() * 4);
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    std::fs::File::create(path)
        .map_err(io_err)?
        .write_all(&out)
        .map_err(io_err)
}

fn read_u32(path: &Path, expected: usize) -> Result<Vec<u32>> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(io_err)?
        .read_to_end(&mut bytes)
        .map_err(io_err)?;
    if bytes.len() != expected * 4 {
        return Err(Error::Model(format!(
            "{}: expected {} u32 values, file holds {} bytes",
            path.display(),
            expected,
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn save_model(model: &MorphableModel, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let (d_id, d_exp, d_tex) = model.dims();
    let manifest = Manifest {
        num_vertices: model.num_vertices,
        num_triangles: model.triangles.len(),
        dims: ManifestDims {
            id: d_id,
            exp: d_exp,
            tex: d_tex,
        },
        landmark_indices: model.landmark_indices.clone(),
    };
    let manifest_path = dir.join("manifest.json");
    std::fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )
    .map_err(|source| Error::Io {
        path: manifest_path,
        source,
    })?;

    write_f32(&dir.join("mean_shape.bin"), &model.mean_shape)?;
    write_f32(&dir.join("mean_texture.bin"), &model.mean_texture)?;
    let flat = |basis: &[Vec<f64>]| -> Vec<f64> { basis.concat() };
    write_f32(&dir.join("id_basis.bin"), &flat(&model.id_basis))?;
    write_f32(&dir.join("exp_basis.bin"), &flat(&model.exp_basis))?;
    write_f32(&dir.join("tex_basis.bin"), &flat(&model.tex_basis))?;
    let uvs_flat: Vec<f64> = model.uvs.iter().flatten().copied().collect();
    write_f32(&dir.join("uvs.bin"), &uvs_flat)?;

    let tris_path = dir.join("triangles.bin");
    let mut bytes = Vec::with_capacity(model.triangles.len() * 12);
    for t in &model.triangles {
        for &v in t {
            bytes.extend_from_slice(&(v as u32).to_le_bytes());
        }
    }
    std::fs::write(&tris_path, bytes).map_err(|source| Error::Io {
        path: tris_path,
        source,
    })
}

pub fn load_model(dir: impl AsRef<Path>) -> Result<MorphableModel> {
    let dir = dir.as_ref();
    let manifest_path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&manifest_path).map_err(|source| Error::Io {
        path: manifest_path.clone(),
        source,
    })?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: manifest_path,
        detail: e.to_string(),
    })?;
    let n3 = manifest.num_vertices * 3;

    let mean_shape = read_f32(&dir.join("mean_shape.bin"), n3)?;
    let mean_texture = read_f32(&dir.join("mean_texture.bin"), n3)?;
    let split = |flat: Vec<f64>, dims: usize| -> Vec<Vec<f64>> {
        flat.chunks_exact(n3)
            .map(|c| c.to_vec())
            .collect::<Vec<_>>()[..dims]
            .to_vec()
    };
    let id_basis = split(
        read_f32(&dir.join("id_basis.bin"), n3 * manifest.dims.id)?,
        manifest.dims.id,
    );
    let exp_basis = split(
        read_f32(&dir.join("exp_basis.bin"), n3 * manifest.dims.exp)?,
        manifest.dims.exp,
    );
    let tex_basis = split(
        read_f32(&dir.join("tex_basis.bin"), n3 * manifest.dims.tex)?,
        manifest.dims.tex,
    );
    let uvs_flat = read_f32(&dir.join("uvs.bin"), manifest.num_vertices * 2)?;
    let uvs: Vec<[f64; 2]> = uvs_flat.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
    let tris = read_u32(&dir.join("triangles.bin"), manifest.num_triangles * 3)?;
    let triangles: Vec<[usize; 3]> = tris
        .chunks_exact(3)
        .map(|c| [c[0] as usize, c[1] as usize, c[2] as usize])
        .collect();

    MorphableModel::new(
        mean_shape,
        id_basis,
        exp_basis,
        mean_texture,
        tex_basis,
        triangles,
        uvs,
        manifest.landmark_indices,
    )
}
