//! Deterministic synthetic geometry, textures, and morphable models.
//!
//! Everything here is seeded and reproducible. The builders back the test
//! suites and generate the repository's default assets (template texture,
//! visibility masks, tiny morphable model).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fitting::{forward, instantiate, FitParams, MorphableModel};
use crate::geometry::{project, CameraPose, FaceMesh, LANDMARK_COUNT};
use crate::image::{ImageGray, ImageRgb};
use crate::lighting::SHCoefficients;

/// Margin between the UV island and the atlas border, as a fraction of the
/// atlas. Keeps artifact masks clear of the border frame.
pub const UV_MARGIN: f64 = 0.08;

/// Front half-shell of an ellipsoid on an `n x n` grid, facing +z, with a
/// rectangular UV island inset by [`UV_MARGIN`]. For `n >= 13` the mesh
/// carries 68 landmark indices spread over interior grid points.
pub fn face_shell(n: usize) -> FaceMesh {
    face_shell_with_span(n, 0.85, 0.80)
}

/// [`face_shell`] with explicit angular extents (fractions of a half turn).
/// Small spans give milder grazing angles at the island edges.
pub fn face_shell_with_span(n: usize, theta_frac: f64, phi_frac: f64) -> FaceMesh {
    assert!(n >= 2, "grid must be at least 2x2");
    let mut vertices = Vec::with_capacity(n * n);
    let mut uvs = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let u = i as f64 / (n - 1) as f64;
            let v = j as f64 / (n - 1) as f64;
            let theta = (u - 0.5) * std::f64::consts::PI * theta_frac;
            let phi = (v - 0.5) * std::f64::consts::PI * phi_frac;
            vertices.push([
                0.9 * theta.sin() * phi.cos(),
                1.1 * phi.sin(),
                0.95 * theta.cos() * phi.cos(),
            ]);
            uvs.push([
                UV_MARGIN + (1.0 - 2.0 * UV_MARGIN) * u,
                UV_MARGIN + (1.0 - 2.0 * UV_MARGIN) * v,
            ]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * (n - 1) * (n - 1));
    for j in 0..n - 1 {
        for i in 0..n - 1 {
            let a = j * n + i;
            let b = j * n + i + 1;
            let c = (j + 1) * n + i + 1;
            let d = (j + 1) * n + i;
            // CCW as seen from +z (x right, y up).
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    let landmark_indices = face_shell_landmarks(n);
    FaceMesh::new(vertices, triangles, uvs, landmark_indices).expect("valid synthetic mesh")
}

/// 68 interior grid indices, evenly strided; empty when the grid is too
/// small to host them.
fn face_shell_landmarks(n: usize) -> Vec<usize> {
    if n < 13 {
        return Vec::new();
    }
    let interior: Vec<usize> = (2..n - 2)
        .flat_map(|j| (2..n - 2).map(move |i| j * n + i))
        .collect();
    let stride = interior.len() as f64 / LANDMARK_COUNT as f64;
    (0..LANDMARK_COUNT)
        .map(|k| interior[(k as f64 * stride) as usize])
        .collect()
}

/// Unit sphere with `lon x lat` tessellation (poles collapsed), outward CCW
/// triangles. Used for normal-direction checks.
pub fn uv_sphere(lon: usize, lat: usize) -> FaceMesh {
    assert!(lon >= 3 && lat >= 2);
    let mut vertices = Vec::new();
    let mut uvs = Vec::new();
    for j in 0..=lat {
        let phi = std::f64::consts::PI * (j as f64 / lat as f64) - std::f64::consts::FRAC_PI_2;
        for i in 0..lon {
            let theta = std::f64::consts::TAU * (i as f64 / lon as f64);
            vertices.push([phi.cos() * theta.cos(), phi.sin(), phi.cos() * theta.sin()]);
            uvs.push([
                (i as f64 + 0.5) / (lon + 1) as f64,
                (j as f64 + 0.5) / (lat + 1) as f64,
            ]);
        }
    }
    let mut triangles = Vec::new();
    for j in 0..lat {
        for i in 0..lon {
            let i1 = (i + 1) % lon;
            let a = j * lon + i;
            let b = j * lon + i1;
            let c = (j + 1) * lon + i1;
            let d = (j + 1) * lon + i;
            if j > 0 {
                triangles.push([a, c, b]);
            }
            if j < lat - 1 {
                triangles.push([a, d, c]);
            }
        }
    }
    FaceMesh::new(vertices, triangles, uvs, vec![]).expect("valid sphere")
}

/// Smooth low-frequency RGB field around a base color; amplitude bounds the
/// deviation per channel.
pub fn smooth_texture(size: usize, seed: u64, base: [f64; 3], amplitude: f64) -> ImageRgb {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // A handful of random cosine modes per channel.
    let mut modes = Vec::new();
    for _ in 0..3 {
        let ch: Vec<(f64, f64, f64, f64)> = (0..4)
            .map(|_| {
                (
                    rng.gen_range(0.5..2.5),
                    rng.gen_range(0.5..2.5),
                    rng.gen_range(0.0..std::f64::consts::TAU),
                    rng.gen_range(0.4..1.0),
                )
            })
            .collect();
        modes.push(ch);
    }
    ImageRgb::from_fn(size, size, |x, y| {
        let u = x as f64 / size as f64;
        let v = y as f64 / size as f64;
        let mut rgb = [0.0; 3];
        for c in 0..3 {
            let mut acc = 0.0;
            let mut norm = 0.0;
            for &(fu, fv, ph, w) in &modes[c] {
                acc += w * (std::f64::consts::TAU * (fu * u + fv * v) + ph).cos();
                norm += w;
            }
            rgb[c] = (base[c] + amplitude * acc / norm).clamp(0.02, 0.98);
        }
        rgb
    })
}

/// Tiny morphable model on the face shell: `23 x 23` grid (529 vertices),
/// eight identity, expression, and texture components each. Bases are smooth
/// seeded fields, column-normalized on construction.
pub fn tiny_model(seed: u64) -> MorphableModel {
    let n = 23;
    let mesh = face_shell(n);
    let num_vertices = mesh.vertices.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let smooth_field = |rng: &mut ChaCha8Rng, scale: f64| -> Vec<f64> {
        let modes: Vec<(f64, f64, f64, f64)> = (0..3)
            .map(|_| {
                (
                    rng.gen_range(0.5..2.0),
                    rng.gen_range(0.5..2.0),
                    rng.gen_range(0.0..std::f64::consts::TAU),
                    rng.gen_range(0.5..1.0),
                )
            })
            .collect();
        (0..num_vertices * 3)
            .map(|idx| {
                let vtx = idx / 3;
                let axis = idx % 3;
                let i = vtx % n;
                let j = vtx / n;
                let u = i as f64 / (n - 1) as f64;
                let v = j as f64 / (n - 1) as f64;
                let mut acc = 0.0;
                for (k, &(fu, fv, ph, w)) in modes.iter().enumerate() {
                    let shift = (axis + k) as f64 * 0.7;
                    acc += w * (std::f64::consts::TAU * (fu * u + fv * v) + ph + shift).cos();
                }
                scale * acc
            })
            .collect()
    };

    let dims = 8;
    let mut id_basis = Vec::with_capacity(dims);
    let mut exp_basis = Vec::with_capacity(dims);
    let mut tex_basis = Vec::with_capacity(dims);
    for _ in 0..dims {
        id_basis.push(smooth_field(&mut rng, 0.2));
        exp_basis.push(smooth_field(&mut rng, 0.1));
        tex_basis.push(smooth_field(&mut rng, 0.3));
    }

    let mean_texture: Vec<f64> = (0..num_vertices)
        .flat_map(|vtx| {
            let i = vtx % n;
            let j = vtx / n;
            let u = i as f64 / (n - 1) as f64;
            let v = j as f64 / (n - 1) as f64;
            let warm = 0.08 * (std::f64::consts::TAU * 0.9 * (u + 0.3 * v)).cos();
            [0.72 + warm, 0.55 + 0.6 * warm, 0.45 + 0.4 * warm]
        })
        .collect();

    let mean_shape: Vec<f64> = mesh.vertices.iter().flatten().copied().collect();

    MorphableModel::new(
        mean_shape,
        id_basis,
        exp_basis,
        mean_texture,
        tex_basis,
        mesh.triangles.clone(),
        mesh.uvs.clone(),
        mesh.landmark_indices.clone(),
    )
    .expect("valid tiny model")
}

/// Minimal 6-vertex model (2x3 grid, four triangles, front-facing) for
/// gradient oracles. Landmark slots cycle over the six vertices.
pub fn six_vertex_model(seed: u64) -> MorphableModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean_shape = vec![
        -1.0, -0.6, 0.2, 0.0, -0.6, 0.25, 1.0, -0.6, 0.2, // bottom row
        -1.0, 0.6, 0.22, 0.0, 0.6, 0.3, 1.0, 0.6, 0.2, // top row
    ];
    let uvs = vec![
        [0.1, 0.1],
        [0.5, 0.1],
        [0.9, 0.1],
        [0.1, 0.9],
        [0.5, 0.9],
        [0.9, 0.9],
    ];
    let triangles = vec![[0, 1, 4], [0, 4, 3], [1, 2, 5], [1, 5, 4]];
    let mut field =
        |scale: f64| -> Vec<f64> { (0..18).map(|_| rng.gen_range(-scale..scale)).collect() };
    let dims = 3;
    let id_basis: Vec<Vec<f64>> = (0..dims).map(|_| field(0.2)).collect();
    let exp_basis: Vec<Vec<f64>> = (0..dims).map(|_| field(0.1)).collect();
    let tex_basis: Vec<Vec<f64>> = (0..dims).map(|_| field(0.3)).collect();
    let mean_texture = vec![
        0.6, 0.5, 0.4, 0.55, 0.5, 0.45, 0.6, 0.45, 0.5, 0.5, 0.55, 0.45, 0.65, 0.5, 0.4, 0.55, 0.5,
        0.5,
    ];
    let landmarks: Vec<usize> = (0..LANDMARK_COUNT).map(|k| k % 6).collect();
    MorphableModel::new(
        mean_shape,
        id_basis,
        exp_basis,
        mean_texture,
        tex_basis,
        triangles,
        uvs,
        landmarks,
    )
    .expect("valid six-vertex model")
}

/// Ground truth plus observations for a synthetic fitting problem.
pub struct FitScene {
    pub truth: FitParams,
    pub image: ImageRgb,
    pub face_mask: ImageGray,
    pub landmarks: Vec<[f64; 2]>,
    pub image_size: (usize, usize),
}

/// Random but well-posed ground truth parameters for the tiny model: modest
/// coefficients, a mild pose, and lighting that stays positive everywhere.
pub fn truth_params(model: &MorphableModel, seed: u64) -> FitParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d_id, d_exp, d_tex) = model.dims();
    let mut light = [0.0; crate::lighting::SH_COUNT];
    light[0] = 1.05 / (crate::lighting::BAND_ATTENUATION[0] * 0.282_094_791_773_878_1);
    for l in light.iter_mut().skip(1) {
        *l = rng.gen_range(-0.04..0.04);
    }
    FitParams {
        p_id: (0..d_id).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        p_exp: (0..d_exp).map(|_| rng.gen_range(-0.3..0.3)).collect(),
        p_tex: (0..d_tex).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        pose: CameraPose {
            rotation: [
                rng.gen_range(-0.08..0.08),
                rng.gen_range(-0.08..0.08),
                rng.gen_range(-0.05..0.05),
            ],
            translation: [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)],
            scale: rng.gen_range(26.0..30.0),
        },
        light: SHCoefficients::monochrome(light),
    }
}

/// Render a noiseless observation of [`truth_params`] at 96x96 with exact
/// landmark detections.
pub fn fit_scene(model: &MorphableModel, seed: u64) -> FitScene {
    let image_size = (96usize, 96usize);
    let truth = truth_params(model, seed);
    let fr = forward(model, &truth, image_size).expect("synthetic render");
    let (shape, _) = instantiate(model, &truth).expect("instantiate");
    let mesh = model.mesh_with_vertices(shape);
    let proj = project(&mesh, &truth.pose, image_size);
    let landmarks = model
        .landmark_indices()
        .iter()
        .map(|&i| proj.pixel_coords[i])
        .collect();
    FitScene {
        truth,
        image: fr.image,
        face_mask: fr.coverage,
        landmarks,
        image_size,
    }
}

/// Paths and ground truth of a generated three-view pipeline scene.
pub struct ThreeViewScene {
    pub config_path: std::path::PathBuf,
    pub truth_texture: ImageRgb,
    /// UV island mask at the scene's UV size (the face region the views can
    /// cover).
    pub island_mask: ImageGray,
    pub uv_size: usize,
}

/// Generate a complete synthetic pipeline input set on disk: a textured
/// face shell rendered from frontal/left/right poses, parsing labels with
/// eye and mouth discs on the frontal view, matching assets, and a pipeline
/// config pointing at all of it. The ground-truth texture is the asset
/// template plus a smooth variation inside the UV island, so the corrected
/// and completed output can be compared against it directly.
pub fn write_three_view_scene(
    dir: &std::path::Path,
    uv_size: usize,
    image_size: usize,
    seed: u64,
) -> crate::error::Result<ThreeViewScene> {
    use crate::correction::labels;
    use crate::image::{save_labels, save_rgb_u16};
    use crate::render::render_textured;

    std::fs::create_dir_all(dir).map_err(|source| crate::error::Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let asset_dir = dir.join("assets");
    crate::assets::write_assets(&asset_dir, uv_size)?;
    let assets = crate::assets::generate(uv_size);

    // Ground truth: template plus smooth variation inside the island.
    let variation = smooth_texture(uv_size, seed, [0.0, 0.0, 0.0], 1.0);
    let island_mask = assets.template_face_mask.clone();
    let mut truth_texture = assets.template.clone();
    for c in 0..3 {
        let island = island_mask.data().to_vec();
        for (i, v) in truth_texture.channel_mut(c).iter_mut().enumerate() {
            if island[i] >= 0.5 {
                // variation holds clamped cosine fields around 0.02..0.98;
                // recenter to +-0.08.
                let dev = (variation.channel(c)[i] - 0.5) * 0.16;
                *v = (*v + dev).clamp(0.02, 0.98);
            }
        }
    }

    let mesh = face_shell(33);
    let mesh_path = dir.join("face.obj");
    crate::geometry::save_obj(&mesh, &mesh_path)?;

    let scale = image_size as f64 * 0.36;
    let poses = [
        ("frontal", [0.0, 0.0, 0.0]),
        ("left", [0.0, crate::assets::SIDE_VIEW_YAW, 0.0]),
        ("right", [0.0, -crate::assets::SIDE_VIEW_YAW, 0.0]),
    ];

    // Eye and mouth anchor vertices on the 33x33 grid (island coordinates).
    let grid_vertex = |a: f64, b: f64| -> usize {
        let i = (a * 32.0).round() as usize;
        let j = (b * 32.0).round() as usize;
        j * 33 + i
    };
    let anchors = [
        (labels::LEFT_EYE, grid_vertex(0.32, 0.62)),
        (labels::RIGHT_EYE, grid_vertex(0.68, 0.62)),
        (labels::MOUTH_INTERIOR, grid_vertex(0.5, 0.28)),
    ];

    let mut view_json = serde_json::Map::new();
    for (name, rotation) in poses {
        let pose = CameraPose {
            rotation,
            translation: [0.0, 0.0],
            scale,
        };
        let (photo, coverage) =
            render_textured(&mesh, &pose, &truth_texture, (image_size, image_size))?;
        let photo_path = dir.join(format!("{name}.png"));
        save_rgb_u16(&photo, &photo_path)?;
        let pose_path = dir.join(format!("{name}_pose.json"));
        pose.save_json(&pose_path)?;

        // Labels: face skin over the rendered coverage; the frontal view
        // additionally gets eye and mouth discs.
        let mut codes = vec![labels::OTHER; image_size * image_size];
        for (i, &c) in coverage.data().iter().enumerate() {
            if c >= 0.5 {
                codes[i] = labels::FACE_SKIN;
            }
        }
        if name == "frontal" {
            let proj = project(&mesh, &pose, (image_size, image_size));
            let radius = (image_size as f64 / 42.0).round().max(2.0);
            for (code, vertex) in anchors {
                let [cx, cy] = proj.pixel_coords[vertex];
                let r = radius as i64;
                for dy in -r..=r {
                    for dx in -r..=r {
                        if (dx * dx + dy * dy) as f64 > radius * radius {
                            continue;
                        }
                        let (x, y) = (cx.round() as i64 + dx, cy.round() as i64 + dy);
                        if x >= 0
                            && y >= 0
                            && (x as usize) < image_size
                            && (y as usize) < image_size
                        {
                            codes[y as usize * image_size + x as usize] = code;
                        }
                    }
                }
            }
        }
        let labels_path = dir.join(format!("{name}_labels.png"));
        save_labels(image_size, image_size, &codes, &labels_path)?;

        view_json.insert(
            name.to_string(),
            serde_json::json!({
                "photo": photo_path,
                "pose": pose_path,
                "labels": labels_path,
            }),
        );
    }

    let config = serde_json::json!({
        "mesh": mesh_path,
        "views": view_json,
        "assets": { "dir": asset_dir },
        "params": { "uv_size": uv_size },
        "output_dir": dir.join("out"),
    });
    let config_path = dir.join("pipeline.json");
    std::fs::write(
        &config_path,
        serde_json::to_string_pretty(&config).expect("config serializes"),
    )
    .map_err(|source| crate::error::Error::Io {
        path: config_path.clone(),
        source,
    })?;

    Ok(ThreeViewScene {
        config_path,
        truth_texture,
        island_mask,
        uv_size,
    })
}

/// Perturb ground truth for round-trip fits: coefficients get +0.3 noise,
/// rotation +-2 degrees, translation +-3 px, scale +-3%.
pub fn perturb_params(truth: &FitParams, seed: u64) -> FitParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = truth.clone();
    for v in out
        .p_id
        .iter_mut()
        .chain(out.p_exp.iter_mut())
        .chain(out.p_tex.iter_mut())
    {
        *v += 0.3 * rng.gen_range(-1.0..1.0);
    }
    let two_deg = 2.0_f64.to_radians();
    for r in out.pose.rotation.iter_mut() {
        *r += rng.gen_range(-two_deg..two_deg);
    }
    for t in out.pose.translation.iter_mut() {
        *t += rng.gen_range(-3.0..3.0);
    }
    out.pose.scale *= 1.0 + rng.gen_range(-0.03..0.03);
    out
}
