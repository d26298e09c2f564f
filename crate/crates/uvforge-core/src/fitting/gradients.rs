//! Analytic gradients of the fitting losses under frozen rasterization.
//!
//! Every optimization step re-renders, freezing the pixel-to-triangle
//! assignment, the barycentric weights' denominators, and the shading
//! normals for that step. Under the freeze:
//!
//! - texture and lighting gradients are exact (they do not move geometry);
//! - pose and shape gradients flow through the projected vertex positions,
//!   both in the landmark term (exact) and in the pixel term via the
//!   barycentric weights' dependence on the triangle's projected corners.

use crate::error::{Error, Result};
use crate::geometry::{project, rotate, CameraPose, ProjectedMesh};
use crate::image::{ImageGray, ImageRgb};
use crate::lighting::{sh_basis, BAND_ATTENUATION, SH_COUNT};
use crate::raster::{CoverageMap, NO_TRIANGLE};
use crate::render::image_raster;
use crate::unwrap::facing_mask;

use super::model::MorphableModel;
use super::{instantiate, FitParams};

/// Gradient with the same block structure as [`FitParams`].
#[derive(Debug, Clone)]
pub struct ParamGradient {
    pub p_id: Vec<f64>,
    pub p_exp: Vec<f64>,
    pub p_tex: Vec<f64>,
    pub rotation: [f64; 3],
    pub translation: [f64; 2],
    pub scale: f64,
    pub light: Vec<[f64; SH_COUNT]>,
}

impl ParamGradient {
    pub fn zeros_like(params: &FitParams) -> Self {
        Self {
            p_id: vec![0.0; params.p_id.len()],
            p_exp: vec![0.0; params.p_exp.len()],
            p_tex: vec![0.0; params.p_tex.len()],
            rotation: [0.0; 3],
            translation: [0.0; 2],
            scale: 0.0,
            light: vec![[0.0; SH_COUNT]; params.light.num_channels()],
        }
    }
}

/// One rendered step with everything the backward pass needs.
pub struct FrozenRender {
    pub image: ImageRgb,
    pub coverage: ImageGray,
    pub map: CoverageMap,
    pub shape: Vec<[f64; 3]>,
    /// Albedo before the [0,1] clamp.
    pub albedo_raw: Vec<[f64; 3]>,
    /// Shading factor before the nonnegativity clamp, per vertex/channel.
    pub shading_raw: Vec<[f64; 3]>,
    /// SH basis at each vertex's camera-space normal.
    pub basis: Vec<[f64; SH_COUNT]>,
    /// Final per-vertex colors fed to the rasterizer.
    pub colors: Vec<[f64; 3]>,
    pub proj: ProjectedMesh,
    /// Camera-space vertex positions `R * shape_v`.
    pub rotated: Vec<[f64; 3]>,
}

pub fn forward(
    model: &MorphableModel,
    params: &FitParams,
    image_size: (usize, usize),
) -> Result<FrozenRender> {
    params.pose.validate()?;
    let (shape, albedo_raw) = instantiate(model, params)?;
    let mesh = model.mesh_with_vertices(shape.clone());

    let rot = params.pose.rotation_matrix();
    let normals = crate::geometry::vertex_normals(&mesh);
    let mut basis = Vec::with_capacity(shape.len());
    let mut shading_raw = Vec::with_capacity(shape.len());
    let mut colors = Vec::with_capacity(shape.len());
    for (v, n) in normals.iter().enumerate() {
        let cam_n = rotate(&rot, *n);
        let b = sh_basis(cam_n)?;
        let mut s = [0.0; 3];
        let mut rgb = [0.0; 3];
        for c in 0..3 {
            s[c] = params.light.shade(&b, c);
            rgb[c] = albedo_raw[v][c].clamp(0.0, 1.0) * s[c].max(0.0);
        }
        basis.push(b);
        shading_raw.push(s);
        colors.push(rgb);
    }

    let proj = project(&mesh, &params.pose, image_size);
    let facing = facing_mask(&mesh, &params.pose);
    let map = image_raster(&mesh, &proj, &facing, image_size);

    let mut image = ImageRgb::new(image_size.0, image_size.1)?;
    let mut coverage = ImageGray::new(image_size.0, image_size.1)?;
    for y in 0..image_size.1 {
        for x in 0..image_size.0 {
            let idx = y * image_size.0 + x;
            let t = map.triangle[idx];
            if t == NO_TRIANGLE {
                continue;
            }
            let [a, b, c] = model.triangles()[t];
            let w = map.bary[idx];
            let mut rgb = [0.0; 3];
            for ch in 0..3 {
                rgb[ch] = w[0] * colors[a][ch] + w[1] * colors[b][ch] + w[2] * colors[c][ch];
            }
            image.set_pixel(x, y, rgb);
            coverage.set(x, y, 1.0);
        }
    }

    let rotated = shape.iter().map(|&v| rotate(&rot, v)).collect();
    Ok(FrozenRender {
        image,
        coverage,
        map,
        shape,
        albedo_raw,
        shading_raw,
        basis,
        colors,
        proj,
        rotated,
    })
}

/// Elementary rotations and their angle derivatives.
fn rot_x(a: f64) -> [[f64; 3]; 3] {
    let (s, c) = a.sin_cos();
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
}
fn rot_y(a: f64) -> [[f64; 3]; 3] {
    let (s, c) = a.sin_cos();
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}
fn rot_z(a: f64) -> [[f64; 3]; 3] {
    let (s, c) = a.sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}
fn drot_x(a: f64) -> [[f64; 3]; 3] {
    let (s, c) = a.sin_cos();
    [[0.0, 0.0, 0.0], [0.0, -s, -c], [0.0, c, -s]]
}
fn drot_y(a: f64) -> [[f64; 3]; 3] {
    let (s, c) = a.sin_cos();
    [[-s, 0.0, c], [0.0, 0.0, 0.0], [-c, 0.0, -s]]
}
fn drot_z(a: f64) -> [[f64; 3]; 3] {
    let (s, c) = a.sin_cos();
    [[-s, -c, 0.0], [c, -s, 0.0], [0.0, 0.0, 0.0]]
}

fn mat_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

/// Chain from projected-position gradients to pose and shape parameters.
pub struct PositionChain {
    rot: [[f64; 3]; 3],
    drot: [[[f64; 3]; 3]; 3],
    scale: f64,
}

impl PositionChain {
    pub fn new(pose: &CameraPose) -> Self {
        let [ax, ay, az] = pose.rotation;
        let (rx, ry, rz) = (rot_x(ax), rot_y(ay), rot_z(az));
        let rot = mat_mul(&rz, &mat_mul(&ry, &rx));
        let drot = [
            mat_mul(&rz, &mat_mul(&ry, &drot_x(ax))),
            mat_mul(&rz, &mat_mul(&drot_y(ay), &rx)),
            mat_mul(&drot_z(az), &mat_mul(&ry, &rx)),
        ];
        Self {
            rot,
            drot,
            scale: pose.scale,
        }
    }

    /// Accumulate the gradient of a loss through `q_v = s*(R x_v).xy*(1,-1)
    /// + center + t`, given `gq = dL/dq_v` at vertex `v` with model-space
    /// position `x_v`.
    pub fn accumulate(
        &self,
        model: &MorphableModel,
        v: usize,
        x_v: [f64; 3],
        gq: [f64; 2],
        grad: &mut ParamGradient,
    ) {
        grad.translation[0] += gq[0];
        grad.translation[1] += gq[1];

        let r = rotate(&self.rot, x_v);
        grad.scale += gq[0] * r[0] - gq[1] * r[1];

        for (i, dr) in self.drot.iter().enumerate() {
            let d = rotate(dr, x_v);
            grad.rotation[i] += self.scale * (gq[0] * d[0] - gq[1] * d[1]);
        }

        // Shape coefficients move the vertex in model space.
        let (d_id, d_exp, _) = model.dims();
        for j in 0..d_id {
            let b = basis_vec(&model.id_basis()[j], v);
            let d = rotate(&self.rot, b);
            grad.p_id[j] += self.scale * (gq[0] * d[0] - gq[1] * d[1]);
        }
        for j in 0..d_exp {
            let b = basis_vec(&model.exp_basis()[j], v);
            let d = rotate(&self.rot, b);
            grad.p_exp[j] += self.scale * (gq[0] * d[0] - gq[1] * d[1]);
        }
    }
}

#[inline]
fn basis_vec(component: &[f64], v: usize) -> [f64; 3] {
    [component[v * 3], component[v * 3 + 1], component[v * 3 + 2]]
}

/// Inverse of the barycentric system matrix for a triangle's projected
/// corners; `None` for degenerate triangles.
fn bary_inverse(p: &[[f64; 2]; 3]) -> Option<[[f64; 3]; 3]> {
    // A = [[x0,x1,x2],[y0,y1,y2],[1,1,1]]
    let a = [
        [p[0][0], p[1][0], p[2][0]],
        [p[0][1], p[1][1], p[2][1]],
        [1.0, 1.0, 1.0],
    ];
    let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv_det = 1.0 / det;
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (r0, r1) = ((i + 1) % 3, (i + 2) % 3);
            let (c0, c1) = ((j + 1) % 3, (j + 2) % 3);
            // Cofactor transpose.
            inv[j][i] = (a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0]) * inv_det;
        }
    }
    Some(inv)
}

/// Accumulate the gradient of an image-space loss whose derivative with
/// respect to the rendered image is `residual` (zero where the loss ignores
/// the pixel). Texture and lighting gradients are exact; pose and shape flow
/// through the barycentric weights.
pub fn backprop_image_loss(
    model: &MorphableModel,
    params: &FitParams,
    fr: &FrozenRender,
    residual: &ImageRgb,
    grad: &mut ParamGradient,
) {
    let n = model.num_vertices();
    let (w_img, h_img) = (fr.image.width(), fr.image.height());
    let mut g_color = vec![[0.0f64; 3]; n];
    let mut g_q = vec![[0.0f64; 2]; n];

    // Per-triangle cached data: barycentric inverse contracted with colors.
    let mut cache: Vec<Option<([f64; 3], [f64; 3])>> = vec![None; model.triangles().len()];
    let mut cache_minv: Vec<Option<[[f64; 3]; 3]>> = vec![None; model.triangles().len()];

    for y in 0..h_img {
        for x in 0..w_img {
            let idx = y * w_img + x;
            let t = fr.map.triangle[idx];
            if t == NO_TRIANGLE {
                continue;
            }
            let r = [
                residual.channel(0)[idx],
                residual.channel(1)[idx],
                residual.channel(2)[idx],
            ];
            if r == [0.0; 3] {
                continue;
            }
            let [a, b, c] = model.triangles()[t];
            let w = fr.map.bary[idx];
            for (slot, &v) in [a, b, c].iter().enumerate() {
                for ch in 0..3 {
                    g_color[v][ch] += r[ch] * w[slot];
                }
            }

            // Pose/shape path: dI/dq_j = -w_j * (sum_i Minv[i][col] * color_i).
            if cache[t].is_none() {
                let p = [
                    fr.proj.pixel_coords[a],
                    fr.proj.pixel_coords[b],
                    fr.proj.pixel_coords[c],
                ];
                let Some(minv) = bary_inverse(&p) else {
                    continue;
                };
                let mut s0 = [0.0; 3];
                let mut s1 = [0.0; 3];
                for (i, &v) in [a, b, c].iter().enumerate() {
                    for ch in 0..3 {
                        s0[ch] += minv[i][0] * fr.colors[v][ch];
                        s1[ch] += minv[i][1] * fr.colors[v][ch];
                    }
                }
                cache[t] = Some((s0, s1));
                cache_minv[t] = Some(minv);
            }
            let (s0, s1) = cache[t].unwrap();
            let r_dot_s0: f64 = (0..3).map(|ch| r[ch] * s0[ch]).sum();
            let r_dot_s1: f64 = (0..3).map(|ch| r[ch] * s1[ch]).sum();
            for (slot, &v) in [a, b, c].iter().enumerate() {
                g_q[v][0] -= w[slot] * r_dot_s0;
                g_q[v][1] -= w[slot] * r_dot_s1;
            }
        }
    }

    // Vertex-level chains.
    let (_, _, d_tex) = model.dims();
    let mono = params.light.num_channels() == 1;
    for v in 0..n {
        for ch in 0..3 {
            let gc = g_color[v][ch];
            if gc == 0.0 {
                continue;
            }
            let a_raw = fr.albedo_raw[v][ch];
            let s_raw = fr.shading_raw[v][ch];
            let a_cl = a_raw.clamp(0.0, 1.0);
            let s_cl = s_raw.max(0.0);

            // Albedo path (subgradient zero where the clamp is active).
            if (0.0..=1.0).contains(&a_raw) {
                let g_albedo = gc * s_cl;
                for j in 0..d_tex {
                    grad.p_tex[j] += g_albedo * model.tex_basis()[j][v * 3 + ch];
                }
            }
            // Lighting path.
            if s_raw > 0.0 {
                let g_shade = gc * a_cl;
                let light_ch = if mono { 0 } else { ch };
                for k in 0..SH_COUNT {
                    grad.light[light_ch][k] += g_shade * BAND_ATTENUATION[k] * fr.basis[v][k];
                }
            }
        }
    }

    let chain = PositionChain::new(&params.pose);
    for v in 0..n {
        if g_q[v] != [0.0; 2] {
            chain.accumulate(model, v, fr.shape[v], g_q[v], grad);
        }
    }
}

/// Mean squared landmark distance and its gradient (exact through the
/// projection; no rasterization involved).
pub fn landmark_loss_and_grad(
    model: &MorphableModel,
    params: &FitParams,
    detected: &[[f64; 2]],
    image_size: (usize, usize),
    weight: f64,
    grad: Option<&mut ParamGradient>,
) -> Result<f64> {
    if detected.len() != model.landmark_indices().len() {
        return Err(Error::Fitting(format!(
            "expected {} landmarks, got {}",
            model.landmark_indices().len(),
            detected.len()
        )));
    }
    if detected.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Fitting("detected landmarks contain NaN".into()));
    }
    let (shape, _) = instantiate(model, params)?;
    let mesh = model.mesh_with_vertices(shape.clone());
    let proj = project(&mesh, &params.pose, image_size);
    let k = detected.len() as f64;

    let mut loss = 0.0;
    let chain = grad.map(|g| (PositionChain::new(&params.pose), g));
    let mut chain = chain;
    for (lm, d) in model.landmark_indices().iter().zip(detected) {
        let q = proj.pixel_coords[*lm];
        let dx = q[0] - d[0];
        let dy = q[1] - d[1];
        loss += dx * dx + dy * dy;
        if let Some((ch, g)) = chain.as_mut() {
            let gq = [weight * 2.0 / k * dx, weight * 2.0 / k * dy];
            ch.accumulate(model, *lm, shape[*lm], gq, g);
        }
    }
    Ok(loss / k)
}
