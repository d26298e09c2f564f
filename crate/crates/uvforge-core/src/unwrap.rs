//! Texture extraction: rasterize an input photograph into UV space over a
//! posed mesh, and transport image-space masks the same way.
//!
//! Rasterization is destination-driven: triangles are scanned in UV space so
//! every texel gets exactly one sample decision and a clean coverage mask.
//! Visibility is a per-texel depth test over front-facing triangles.

use crate::error::Result;
use crate::geometry::{project, rotate, CameraPose, FaceMesh, ProjectedMesh};
use crate::image::{ImageGray, ImageRgb};
use crate::raster::{rasterize, CoverageMap, NO_TRIANGLE};

/// UV-space texture plus the coverage mask of texels that received a sample.
pub struct UnwrapResult {
    pub texture: ImageRgb,
    pub coverage: ImageGray,
    /// Triangles skipped because their UV footprint was degenerate.
    pub degenerate_triangles: usize,
}

/// Map a UV coordinate to continuous texel coordinates (v = 0 is the bottom
/// of the atlas, texel centers at integers).
#[inline]
pub fn uv_to_texel(uv: [f64; 2], uv_size: usize) -> [f64; 2] {
    [
        uv[0] * uv_size as f64 - 0.5,
        (1.0 - uv[1]) * uv_size as f64 - 0.5,
    ]
}

/// Per-triangle front-facing flags: positive camera-space normal z under the
/// CCW convention. Edge-on triangles (zero area) are back-facing.
pub fn facing_mask(mesh: &FaceMesh, pose: &CameraPose) -> Vec<bool> {
    let rot = pose.rotation_matrix();
    let rotated: Vec<[f64; 3]> = mesh.vertices.iter().map(|&v| rotate(&rot, v)).collect();
    mesh.triangles
        .iter()
        .map(|&[a, b, c]| {
            let e1 = [rotated[b][0] - rotated[a][0], rotated[b][1] - rotated[a][1]];
            let e2 = [rotated[c][0] - rotated[a][0], rotated[c][1] - rotated[a][1]];
            e1[0] * e2[1] - e1[1] * e2[0] > 0.0
        })
        .collect()
}

/// Rasterize the mesh's UV layout with depth from the projection.
fn uv_raster(
    mesh: &FaceMesh,
    proj: &ProjectedMesh,
    facing: &[bool],
    uv_size: usize,
) -> CoverageMap {
    rasterize(
        uv_size,
        uv_size,
        mesh.triangles.len(),
        |t| {
            let [a, b, c] = mesh.triangles[t];
            [
                uv_to_texel(mesh.uvs[a], uv_size),
                uv_to_texel(mesh.uvs[b], uv_size),
                uv_to_texel(mesh.uvs[c], uv_size),
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

/// Winning fragment's interpolated image position.
#[inline]
fn frag_pixel(mesh: &FaceMesh, proj: &ProjectedMesh, map: &CoverageMap, idx: usize) -> [f64; 2] {
    let [a, b, c] = mesh.triangles[map.triangle[idx]];
    let w = map.bary[idx];
    [
        w[0] * proj.pixel_coords[a][0]
            + w[1] * proj.pixel_coords[b][0]
            + w[2] * proj.pixel_coords[c][0],
        w[0] * proj.pixel_coords[a][1]
            + w[1] * proj.pixel_coords[b][1]
            + w[2] * proj.pixel_coords[c][1],
    ]
}

/// Unwrap a photograph into UV space. For each covered texel the projected
/// image position is interpolated barycentrically and the photo sampled
/// bilinearly.
pub fn unwrap_texture(
    img: &ImageRgb,
    mesh: &FaceMesh,
    pose: &CameraPose,
    uv_size: usize,
) -> Result<UnwrapResult> {
    pose.validate()?;
    mesh.validate()?;
    let proj = project(mesh, pose, (img.width(), img.height()));
    let facing = facing_mask(mesh, pose);
    let map = uv_raster(mesh, &proj, &facing, uv_size);

    let mut texture = ImageRgb::new(uv_size, uv_size)?;
    let mut coverage = ImageGray::new(uv_size, uv_size)?;
    for y in 0..uv_size {
        for x in 0..uv_size {
            let idx = y * uv_size + x;
            if map.triangle[idx] == NO_TRIANGLE {
                continue;
            }
            let [px, py] = frag_pixel(mesh, &proj, &map, idx);
            texture.set_pixel(x, y, img.sample_bilinear(px, py));
            coverage.set(x, y, 1.0);
        }
    }
    Ok(UnwrapResult {
        texture,
        coverage,
        degenerate_triangles: map.degenerate_skipped,
    })
}

/// Unwrap an image-space mask into UV space. Uncovered texels are 0.
pub fn unwrap_mask(
    mask: &ImageGray,
    mesh: &FaceMesh,
    pose: &CameraPose,
    uv_size: usize,
) -> Result<(ImageGray, usize)> {
    pose.validate()?;
    mesh.validate()?;
    let proj = project(mesh, pose, (mask.width(), mask.height()));
    let facing = facing_mask(mesh, pose);
    let map = uv_raster(mesh, &proj, &facing, uv_size);

    let mut out = ImageGray::new(uv_size, uv_size)?;
    for y in 0..uv_size {
        for x in 0..uv_size {
            let idx = y * uv_size + x;
            if map.triangle[idx] == NO_TRIANGLE {
                continue;
            }
            let [px, py] = frag_pixel(mesh, &proj, &map, idx);
            out.set(x, y, mask.sample_bilinear(px, py));
        }
    }
    Ok((out, map.degenerate_skipped))
}

/// Coverage mask alone (depends only on mesh UVs, facing, and `uv_size`).
pub fn coverage_mask(mesh: &FaceMesh, pose: &CameraPose, uv_size: usize) -> Result<ImageGray> {
    pose.validate()?;
    mesh.validate()?;
    let proj = project(mesh, pose, (2, 2)); // image size irrelevant for coverage
    let facing = facing_mask(mesh, pose);
    let map = uv_raster(mesh, &proj, &facing, uv_size);
    let mut out = ImageGray::new(uv_size, uv_size)?;
    for (i, &t) in map.triangle.iter().enumerate() {
        if t != NO_TRIANGLE {
            out.data_mut()[i] = 1.0;
        }
    }
    Ok(out)
}

/// Test fixture: one triangle covering the lower-left UV half, projected so
/// the UV to image map is affine: image pixel = (u * (W-1), (1-v) * (H-1)).
#[cfg(test)]
pub(crate) fn affine_test_mesh(img_w: usize, img_h: usize) -> (FaceMesh, CameraPose) {
    let w = (img_w - 1) as f64;
    let h = (img_h - 1) as f64;
    let cx = img_w as f64 / 2.0;
    let cy = img_h as f64 / 2.0;
    // pixel = (x + cx, -y + cy) at identity pose, scale 1
    let v = |px: f64, py: f64| [px - cx, cy - py, 0.0];
    let mesh = FaceMesh::new(
        vec![v(0.0, h), v(w, h), v(0.0, 0.0)],
        vec![[0, 1, 2]],
        vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
        vec![],
    )
    .unwrap();
    (mesh, CameraPose::identity())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_unwraps_constant() {
        let (mesh, pose) = affine_test_mesh(64, 64);
        let img = ImageRgb::constant(64, 64, [0.3, 0.6, 0.9]);
        let res = unwrap_texture(&img, &mesh, &pose, 32).unwrap();
        assert_eq!(res.degenerate_triangles, 0);
        let mut covered = 0;
        for y in 0..32 {
            for x in 0..32 {
                if res.coverage.get(x, y) > 0.5 {
                    covered += 1;
                    let p = res.texture.pixel(x, y);
                    for (c, want) in [0.3, 0.6, 0.9].iter().enumerate() {
                        assert!((p[c] - want).abs() < 1e-12);
                    }
                } else {
                    assert_eq!(res.texture.pixel(x, y), [0.0; 3]);
                }
            }
        }
        // Roughly half the texels (the UV triangle).
        assert!(covered > 32 * 32 / 3 && covered < 2 * 32 * 32 / 3);
    }

    #[test]
    fn gradient_image_matches_affine_map() {
        let (mesh, pose) = affine_test_mesh(64, 64);
        let img = ImageRgb::from_fn(64, 64, |x, _| {
            let g = x as f64 / 63.0;
            [g, g, g]
        });
        let uv_size = 32;
        let res = unwrap_texture(&img, &mesh, &pose, uv_size).unwrap();
        for y in 0..uv_size {
            for x in 0..uv_size {
                if res.coverage.get(x, y) < 0.5 {
                    continue;
                }
                // Analytic affine map: gradient value at texel = u.
                let u = (x as f64 + 0.5) / uv_size as f64;
                let got = res.texture.pixel(x, y)[0];
                assert!(
                    (got - u).abs() <= 1.0 / 255.0,
                    "texel ({x},{y}): got {got}, expected {u}"
                );
            }
        }
    }

    #[test]
    fn closer_layer_wins() {
        // Two coincident UV triangles; the near layer (depth 2) is red, the
        // far layer (depth 1) would sample a green part of the image.
        let size = 16usize;
        let cx = size as f64 / 2.0;
        // Near layer projects onto the left (red) half, far layer onto the
        // right (green) half.
        let near = vec![[-cx, cx, 2.0], [-cx + 6.0, cx, 2.0], [-cx, cx - 6.0, 2.0]];
        let far = vec![[2.0, cx, 1.0], [8.0, cx, 1.0], [2.0, cx - 6.0, 1.0]];
        let mut vertices = far;
        vertices.extend(near);
        let uv = vec![
            [0.0, 0.0],
            [1.0, 0.0],
            [0.0, 1.0],
            [0.0, 0.0],
            [1.0, 0.0],
            [0.0, 1.0],
        ];
        let mesh = FaceMesh::new(vertices, vec![[0, 1, 2], [3, 4, 5]], uv, vec![]).unwrap();
        let img = ImageRgb::from_fn(size, size, |x, _| {
            if x < size / 2 {
                [1.0, 0.0, 0.0]
            } else {
                [0.0, 1.0, 0.0]
            }
        });
        let res = unwrap_texture(&img, &mesh, &CameraPose::identity(), 8).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                if res.coverage.get(x, y) > 0.5 {
                    let p = res.texture.pixel(x, y);
                    assert!(p[0] > 0.9 && p[1] < 0.1, "near red layer must win: {p:?}");
                }
            }
        }
    }

    #[test]
    fn facing_flags() {
        let mesh = crate::synthetic::face_shell(5);
        let pose = CameraPose::identity();
        assert!(facing_mask(&mesh, &pose).iter().all(|&f| f));

        let flipped = CameraPose {
            rotation: [0.0, std::f64::consts::PI, 0.0],
            ..CameraPose::identity()
        };
        assert!(facing_mask(&mesh, &flipped).iter().all(|&f| !f));
    }

    #[test]
    fn edge_on_triangle_back_facing() {
        let mesh = FaceMesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 1.0], [2.0, 0.0, 2.0]],
            vec![[0, 1, 2]],
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![],
        )
        .unwrap();
        assert_eq!(facing_mask(&mesh, &CameraPose::identity()), vec![false]);
    }

    #[test]
    fn mask_unwrap_full_frame_equals_coverage() {
        let (mesh, pose) = affine_test_mesh(32, 32);
        let full = ImageGray::constant(32, 32, 1.0);
        let (uv_mask, _) = unwrap_mask(&full, &mesh, &pose, 24).unwrap();
        let cov = coverage_mask(&mesh, &pose, 24).unwrap();
        assert_eq!(uv_mask.data(), cov.data());

        let zero = ImageGray::constant(32, 32, 0.0);
        let (uv_zero, _) = unwrap_mask(&zero, &mesh, &pose, 24).unwrap();
        assert!(uv_zero.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn half_plane_mask_maps_to_analytic_preimage() {
        let (mesh, pose) = affine_test_mesh(64, 64);
        let mask = ImageGray::from_fn(64, 64, |x, _| if x >= 32 { 1.0 } else { 0.0 });
        let uv_size = 32;
        let (uv_mask, _) = unwrap_mask(&mask, &mesh, &pose, uv_size).unwrap();
        let cov = coverage_mask(&mesh, &pose, uv_size).unwrap();
        // Analytic preimage: pixel x = u*63 >= 32  =>  u >= 32/63.
        for y in 0..uv_size {
            for x in 0..uv_size {
                if cov.get(x, y) < 0.5 {
                    continue;
                }
                let u = (x as f64 + 0.5) / uv_size as f64;
                let expect = u >= 32.0 / 63.0;
                let got = uv_mask.get(x, y) >= 0.5;
                // One texel of slack at the transition.
                if (u - 32.0 / 63.0).abs() > 1.0 / uv_size as f64 {
                    assert_eq!(got, expect, "texel ({x},{y}), u={u}");
                }
            }
        }
    }

    #[test]
    fn occlusion_matches_brute_force() {
        // Random small scenes: the rasterizer's winner per texel must agree
        // with an exhaustive scan over all triangles.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(71);
        for _ in 0..5 {
            let tri_count = rng.gen_range(2..=10);
            let mut vertices = Vec::new();
            let mut uvs = Vec::new();
            let mut triangles = Vec::new();
            for t in 0..tri_count {
                let base = vertices.len();
                let (cu, cv) = (rng.gen_range(0.2..0.8), rng.gen_range(0.2..0.8));
                let depth = rng.gen_range(-1.0..1.0);
                for _ in 0..3 {
                    let u: f64 = (cu + rng.gen_range(-0.3..0.3f64)).clamp(0.0, 1.0);
                    let v: f64 = (cv + rng.gen_range(-0.3..0.3f64)).clamp(0.0, 1.0);
                    vertices.push([u, v, depth]);
                    uvs.push([u, v]);
                }
                // Keep the UV winding positive so the triangle is accepted.
                let area = (uvs[base + 1][0] - uvs[base][0]) * (uvs[base + 2][1] - uvs[base][1])
                    - (uvs[base + 2][0] - uvs[base][0]) * (uvs[base + 1][1] - uvs[base][1]);
                if area < 0.0 {
                    uvs.swap(base + 1, base + 2);
                    vertices.swap(base + 1, base + 2);
                }
                triangles.push([base, base + 1, base + 2]);
                let _ = t;
            }
            let mesh = FaceMesh::new(vertices, triangles, uvs, vec![]).unwrap();
            let proj = project(&mesh, &CameraPose::identity(), (16, 16));
            let facing = facing_mask(&mesh, &CameraPose::identity());
            let uv_size = 24;
            let map = super::uv_raster(&mesh, &proj, &facing, uv_size);

            for y in 0..uv_size {
                for x in 0..uv_size {
                    // Brute force: scan every accepted triangle.
                    let mut best: Option<(usize, f64)> = None;
                    for (t, tri) in mesh.triangles.iter().enumerate() {
                        if !facing[t] {
                            continue;
                        }
                        let p = [
                            uv_to_texel(mesh.uvs[tri[0]], uv_size),
                            uv_to_texel(mesh.uvs[tri[1]], uv_size),
                            uv_to_texel(mesh.uvs[tri[2]], uv_size),
                        ];
                        let Some(w) = crate::raster::barycentric(&p, [x as f64, y as f64]) else {
                            continue;
                        };
                        if w[0] < 0.0 || w[1] < 0.0 || w[2] < 0.0 {
                            continue;
                        }
                        let depth = w[0] * proj.camera_depth[tri[0]]
                            + w[1] * proj.camera_depth[tri[1]]
                            + w[2] * proj.camera_depth[tri[2]];
                        let better = match best {
                            None => true,
                            Some((_, d)) => depth > d,
                        };
                        if better {
                            best = Some((t, depth));
                        }
                    }
                    let got = map.triangle[y * uv_size + x];
                    match best {
                        None => assert_eq!(got, crate::raster::NO_TRIANGLE),
                        Some((t, _)) => assert_eq!(got, t, "texel ({x},{y})"),
                    }
                }
            }
        }
    }

    #[test]
    fn coverage_independent_of_image() {
        let (mesh, pose) = affine_test_mesh(48, 48);
        let a = unwrap_texture(&ImageRgb::constant(48, 48, [0.1; 3]), &mesh, &pose, 16).unwrap();
        let b = unwrap_texture(
            &ImageRgb::from_fn(48, 48, |x, y| [(x as f64) / 48.0, (y as f64) / 48.0, 0.5]),
            &mesh,
            &pose,
            16,
        )
        .unwrap();
        assert_eq!(a.coverage.data(), b.coverage.data());
    }
}
