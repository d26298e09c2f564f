//! Image-space rendering of posed meshes: either sampling a UV texture or
//! interpolating per-vertex colors. Shares the rasterizer with [`crate::unwrap`],
//! just pointed the other way (destination = image).

use crate::error::Result;
use crate::geometry::{project, CameraPose, FaceMesh, ProjectedMesh};
use crate::image::{ImageGray, ImageRgb};
use crate::raster::{rasterize, CoverageMap, NO_TRIANGLE};
use crate::unwrap::{facing_mask, uv_to_texel};

pub(crate) fn image_raster(
    mesh: &FaceMesh,
    proj: &ProjectedMesh,
    facing: &[bool],
    image_size: (usize, usize),
) -> CoverageMap {
    rasterize(
        image_size.0,
        image_size.1,
        mesh.triangles.len(),
        |t| {
            let [a, b, c] = mesh.triangles[t];
            [
                proj.pixel_coords[a],
                proj.pixel_coords[b],
                proj.pixel_coords[c],
            ]
        },
        |t| {
            let [a, b, c] = mesh.triangles[t];
            [
                proj.camera_depth[a],
                proj.camera_depth[b],
                proj.camera_depth[c],
            ]
        },
        |t| facing[t],
    )
}

/// Render the mesh textured with a UV map. Returns the image and its
/// coverage mask.
pub fn render_textured(
    mesh: &FaceMesh,
    pose: &CameraPose,
    texture: &ImageRgb,
    image_size: (usize, usize),
) -> Result<(ImageRgb, ImageGray)> {
    pose.validate()?;
    mesh.validate()?;
    let proj = project(mesh, pose, image_size);
    let facing = facing_mask(mesh, pose);
    let map = image_raster(mesh, &proj, &facing, image_size);

    let mut img = ImageRgb::new(image_size.0, image_size.1)?;
    let mut cov = ImageGray::new(image_size.0, image_size.1)?;
    for y in 0..image_size.1 {
        for x in 0..image_size.0 {
            let idx = y * image_size.0 + x;
            let t = map.triangle[idx];
            if t == NO_TRIANGLE {
                continue;
            }
            let [a, b, c] = mesh.triangles[t];
            let w = map.bary[idx];
            let u = w[0] * mesh.uvs[a][0] + w[1] * mesh.uvs[b][0] + w[2] * mesh.uvs[c][0];
            let v = w[0] * mesh.uvs[a][1] + w[1] * mesh.uvs[b][1] + w[2] * mesh.uvs[c][1];
            let [tx, ty] = uv_to_texel([u, v], texture.width());
            img.set_pixel(x, y, texture.sample_bilinear(tx, ty));
            cov.set(x, y, 1.0);
        }
    }
    Ok((img, cov))
}

/// Render the mesh with per-vertex colors (barycentric interpolation).
pub fn render_vertex_colors(
    mesh: &FaceMesh,
    pose: &CameraPose,
    colors: &[[f64; 3]],
    image_size: (usize, usize),
) -> Result<(ImageRgb, ImageGray)> {
    pose.validate()?;
    mesh.validate()?;
    let proj = project(mesh, pose, image_size);
    let facing = facing_mask(mesh, pose);
    let map = image_raster(mesh, &proj, &facing, image_size);

    let mut img = ImageRgb::new(image_size.0, image_size.1)?;
    let mut cov = ImageGray::new(image_size.0, image_size.1)?;
    for y in 0..image_size.1 {
        for x in 0..image_size.0 {
            let idx = y * image_size.0 + x;
            let t = map.triangle[idx];
            if t == NO_TRIANGLE {
                continue;
            }
            let [a, b, c] = mesh.triangles[t];
            let w = map.bary[idx];
            let mut rgb = [0.0; 3];
            for ch in 0..3 {
                rgb[ch] = w[0] * colors[a][ch] + w[1] * colors[b][ch] + w[2] * colors[c][ch];
            }
            img.set_pixel(x, y, rgb);
            cov.set(x, y, 1.0);
        }
    }
    Ok((img, cov))
}
