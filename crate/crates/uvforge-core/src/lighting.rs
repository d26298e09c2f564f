//! Order-2 spherical-harmonic lighting: basis evaluation, Lambertian
//! irradiance shading over mesh normals, least-squares estimation from
//! observed shading, and the lighting-normalization target that keeps only
//! the uniform (DC) term.
//!
//! Real SH without the Condon-Shortley sign, ordered
//! `(0,0), (1,-1), (1,0), (1,1), (2,-2), (2,-1), (2,0), (2,1), (2,2)`.
//! Constants to six decimals: 0.282095, 0.488603, 1.092548, 0.315392,
//! 0.546274. Irradiance convolution attenuates bands by `(pi, 2pi/3, pi/4)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::{rotate, vertex_normals, CameraPose, FaceMesh};

pub const SH_COUNT: usize = 9;

const C0: f64 = 0.282_094_791_773_878_1; // 0.5 * sqrt(1/pi)
const C1: f64 = 0.488_602_511_902_919_9; // sqrt(3 / (4 pi))
const C2: f64 = 1.092_548_430_592_079_2; // sqrt(15 / (4 pi))
const C3: f64 = 0.315_391_565_252_520_05; // sqrt(5 / (16 pi))
const C4: f64 = 0.546_274_215_296_039_6; // sqrt(15 / (16 pi))

/// Per-band Lambertian attenuation, expanded per coefficient.
pub const BAND_ATTENUATION: [f64; SH_COUNT] = {
    const A0: f64 = std::f64::consts::PI;
    const A1: f64 = 2.0 * std::f64::consts::PI / 3.0;
    const A2: f64 = std::f64::consts::PI / 4.0;
    [A0, A1, A1, A1, A2, A2, A2, A2, A2]
};

/// Evaluate the nine basis functions at a unit normal.
pub fn sh_basis(normal: [f64; 3]) -> Result<[f64; SH_COUNT]> {
    let [x, y, z] = normal;
    let len = (x * x + y * y + z * z).sqrt();
    if (len - 1.0).abs() > 1e-6 {
        return Err(Error::Lighting(format!(
            "basis needs a unit normal, |n| = {len}"
        )));
    }
    Ok([
        C0,
        C1 * y,
        C1 * z,
        C1 * x,
        C2 * x * y,
        C2 * y * z,
        C3 * (3.0 * z * z - 1.0),
        C2 * x * z,
        C4 * (x * x - y * y),
    ])
}

/// SH lighting coefficients: one 9-vector (monochrome, the default) or three
/// (per RGB channel).
#[derive(Debug, Clone, PartialEq)]
pub struct SHCoefficients {
    channels: Vec<[f64; SH_COUNT]>,
}

impl SHCoefficients {
    pub fn monochrome(coeffs: [f64; SH_COUNT]) -> Self {
        Self {
            channels: vec![coeffs],
        }
    }

    pub fn rgb(coeffs: [[f64; SH_COUNT]; 3]) -> Self {
        Self {
            channels: coeffs.to_vec(),
        }
    }

    pub fn zero_monochrome() -> Self {
        Self::monochrome([0.0; SH_COUNT])
    }

    /// Monochrome DC value that shades every normal with factor 1.
    pub fn identity_monochrome() -> Self {
        let mut c = [0.0; SH_COUNT];
        c[0] = 1.0 / (BAND_ATTENUATION[0] * C0);
        Self::monochrome(c)
    }

    pub fn is_monochrome(&self) -> bool {
        self.channels.len() == 1
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    /// Coefficients used for color channel `c` (monochrome broadcasts).
    #[inline]
    pub fn for_channel(&self, c: usize) -> &[f64; SH_COUNT] {
        if self.channels.len() == 1 {
            &self.channels[0]
        } else {
            &self.channels[c]
        }
    }

    pub fn channels(&self) -> &[[f64; SH_COUNT]] {
        &self.channels
    }

    pub fn from_channels(channels: Vec<[f64; SH_COUNT]>) -> Result<Self> {
        if channels.len() != 1 && channels.len() != 3 {
            return Err(Error::Lighting(format!(
                "expected 1 or 3 coefficient channels, got {}",
                channels.len()
            )));
        }
        Ok(Self { channels })
    }

    /// Shading factor for a unit normal on channel `c`.
    pub fn shade(&self, basis: &[f64; SH_COUNT], c: usize) -> f64 {
        let coeffs = self.for_channel(c);
        let mut acc = 0.0;
        for k in 0..SH_COUNT {
            acc += coeffs[k] * BAND_ATTENUATION[k] * basis[k];
        }
        acc
    }
}

/// Keep only the first (uniform) dimension, resetting the rest to zero.
/// Lighting with the result is direction-independent. Idempotent.
pub fn normalized_target(coeffs: &SHCoefficients) -> SHCoefficients {
    let channels = coeffs
        .channels
        .iter()
        .map(|ch| {
            let mut out = [0.0; SH_COUNT];
            out[0] = ch[0];
            out
        })
        .collect();
    SHCoefficients { channels }
}

/// Camera-space unit normals of a posed mesh.
pub fn shaded_normals(mesh: &FaceMesh, pose: &CameraPose) -> Vec<[f64; 3]> {
    let rot = pose.rotation_matrix();
    vertex_normals(mesh)
        .into_iter()
        .map(|n| rotate(&rot, n))
        .collect()
}

/// Lambertian irradiance shading: `color_v = albedo_v * sum_k c_k A_k Y_k(n_v)`,
/// clamped to be nonnegative.
pub fn render_irradiance(
    mesh: &FaceMesh,
    pose: &CameraPose,
    albedo: &[[f64; 3]],
    coeffs: &SHCoefficients,
) -> Result<Vec<[f64; 3]>> {
    if albedo.len() != mesh.vertices.len() {
        return Err(Error::Lighting(format!(
            "{} albedo entries for {} vertices",
            albedo.len(),
            mesh.vertices.len()
        )));
    }
    let normals = shaded_normals(mesh, pose);
    let mut out = Vec::with_capacity(albedo.len());
    for (n, a) in normals.iter().zip(albedo) {
        let basis = sh_basis(*n)?;
        let mut rgb = [0.0; 3];
        for c in 0..3 {
            rgb[c] = (a[c].clamp(0.0, 1.0) * coeffs.shade(&basis, c)).max(0.0);
        }
        out.push(rgb);
    }
    Ok(out)
}

pub enum ShMode {
    Monochrome,
    Rgb,
}

pub struct ShEstimate {
    pub coeffs: SHCoefficients,
    /// Root-mean-square residual of the least-squares fit.
    pub residual: f64,
    /// Condition number of the design matrix (singular value ratio).
    pub condition: f64,
}

const ALBEDO_EPS: f64 = 1e-4;

/// Least-squares SH estimation from observed per-vertex colors and known
/// albedo: regress `observed / albedo` against the attenuated basis.
/// Requires at least nine usable vertices with normals spanning a
/// full-rank basis.
pub fn estimate_sh(
    observed: &[[f64; 3]],
    albedo: &[[f64; 3]],
    normals: &[[f64; 3]],
    mode: ShMode,
) -> Result<ShEstimate> {
    if observed.len() != albedo.len() || observed.len() != normals.len() {
        return Err(Error::Lighting(
            "observed/albedo/normals lengths differ".into(),
        ));
    }
    let usable: Vec<usize> = (0..observed.len())
        .filter(|&i| albedo[i].iter().all(|&a| a > ALBEDO_EPS))
        .collect();
    if usable.len() < SH_COUNT {
        return Err(Error::Lighting(format!(
            "{} usable vertices; need at least {SH_COUNT}",
            usable.len()
        )));
    }

    let mut design = DMatrix::<f64>::zeros(usable.len(), SH_COUNT);
    for (row, &i) in usable.iter().enumerate() {
        let basis = sh_basis(normals[i])?;
        for k in 0..SH_COUNT {
            design[(row, k)] = BAND_ATTENUATION[k] * basis[k];
        }
    }

    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    if smin <= smax * 1e-10 {
        return Err(Error::Lighting(format!(
            "rank-deficient design matrix (condition {condition:.3e})"
        )));
    }

    let solve_channel = |obs: &dyn Fn(usize) -> f64| -> ([f64; SH_COUNT], f64) {
        let b = nalgebra::DVector::from_iterator(usable.len(), usable.iter().map(|&i| obs(i)));
        let x = svd.solve(&b, 0.0).expect("svd solve");
        let r = &design * &x - &b;
        let rms = (r.norm_squared() / usable.len() as f64).sqrt();
        let mut out = [0.0; SH_COUNT];
        for k in 0..SH_COUNT {
            out[k] = x[k];
        }
        (out, rms)
    };

    match mode {
        ShMode::Monochrome => {
            let (coeffs, rms) = solve_channel(&|i| {
                let mut acc = 0.0;
                for c in 0..3 {
                    acc += observed[i][c] / albedo[i][c];
                }
                acc / 3.0
            });
            Ok(ShEstimate {
                coeffs: SHCoefficients::monochrome(coeffs),
                residual: rms,
                condition,
            })
        }
        ShMode::Rgb => {
            let mut channels = Vec::with_capacity(3);
            let mut worst = 0.0f64;
            for c in 0..3 {
                let (coeffs, rms) = solve_channel(&|i| observed[i][c] / albedo[i][c]);
                channels.push(coeffs);
                worst = worst.max(rms);
            }
            Ok(ShEstimate {
                coeffs: SHCoefficients { channels },
                residual: worst,
                condition,
            })
        }
    }
}

// --- JSON form --------------------------------------------------------------

/// Serialize as a bare array of 9 numbers (monochrome) or 3 arrays of 9.
pub fn coeffs_to_json(coeffs: &SHCoefficients) -> serde_json::Value {
    if coeffs.is_monochrome() {
        serde_json::json!(coeffs.channels[0].to_vec())
    } else {
        serde_json::json!(coeffs
            .channels
            .iter()
            .map(|c| c.to_vec())
            .collect::<Vec<_>>())
    }
}

pub fn coeffs_from_json(value: &serde_json::Value) -> Result<SHCoefficients> {
    let bad = || Error::Lighting("expected 9 numbers or 3x9 numbers".into());
    let arr = value.as_array().ok_or_else(bad)?;
    if arr.iter().all(|v| v.is_number()) {
        if arr.len() != SH_COUNT {
            return Err(bad());
        }
        let mut c = [0.0; SH_COUNT];
        for (k, v) in arr.iter().enumerate() {
            c[k] = v.as_f64().ok_or_else(bad)?;
        }
        Ok(SHCoefficients::monochrome(c))
    } else {
        if arr.len() != 3 {
            return Err(bad());
        }
        let mut channels = Vec::with_capacity(3);
        for ch in arr {
            let ch = ch.as_array().ok_or_else(bad)?;
            if ch.len() != SH_COUNT {
                return Err(bad());
            }
            let mut c = [0.0; SH_COUNT];
            for (k, v) in ch.iter().enumerate() {
                c[k] = v.as_f64().ok_or_else(bad)?;
            }
            channels.push(c);
        }
        SHCoefficients::from_channels(channels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unit(rng: &mut ChaCha8Rng) -> [f64; 3] {
        loop {
            let v: [f64; 3] = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            let len = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if len > 0.1 && len <= 1.0 {
                return [v[0] / len, v[1] / len, v[2] / len];
            }
        }
    }

    #[test]
    fn basis_constants() {
        let b = sh_basis([0.0, 0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(b[0], 0.282095, epsilon = 1e-6);
        assert_abs_diff_eq!(b[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b[2], 0.488603, epsilon = 1e-6);
        assert_abs_diff_eq!(b[3], 0.0, epsilon = 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(55);
        for _ in 0..20 {
            let n = random_unit(&mut rng);
            assert_abs_diff_eq!(sh_basis(n).unwrap()[0], 0.282095, epsilon = 1e-6);
        }
    }

    #[test]
    fn basis_parity() {
        let mut rng = ChaCha8Rng::seed_from_u64(56);
        for _ in 0..20 {
            let n = random_unit(&mut rng);
            let m = [-n[0], -n[1], -n[2]];
            let bn = sh_basis(n).unwrap();
            let bm = sh_basis(m).unwrap();
            assert_eq!(bn[0], bm[0]);
            for k in 1..4 {
                assert_abs_diff_eq!(bn[k], -bm[k], epsilon = 1e-12);
            }
            for k in 4..9 {
                assert_abs_diff_eq!(bn[k], bm[k], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn basis_rejects_non_unit() {
        assert!(sh_basis([0.0, 0.0, 2.0]).is_err());
    }

    #[test]
    fn dc_identity_renders_albedo() {
        let mesh = crate::synthetic::face_shell(9);
        let albedo: Vec<[f64; 3]> = (0..mesh.vertices.len())
            .map(|i| {
                let t = i as f64 / mesh.vertices.len() as f64;
                [0.2 + 0.6 * t, 0.5, 0.8 - 0.5 * t]
            })
            .collect();
        let shaded = render_irradiance(
            &mesh,
            &CameraPose::identity(),
            &albedo,
            &SHCoefficients::identity_monochrome(),
        )
        .unwrap();
        for (s, a) in shaded.iter().zip(&albedo) {
            for c in 0..3 {
                assert_abs_diff_eq!(s[c], a[c], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn zero_coefficients_render_black() {
        let mesh = crate::synthetic::face_shell(7);
        let albedo = vec![[0.7, 0.6, 0.5]; mesh.vertices.len()];
        let shaded = render_irradiance(
            &mesh,
            &CameraPose::identity(),
            &albedo,
            &SHCoefficients::zero_monochrome(),
        )
        .unwrap();
        assert!(shaded.iter().all(|p| *p == [0.0; 3]));
    }

    #[test]
    fn band1_z_shading_matches_formula() {
        // Single (1,0) coefficient: shading = c * (2pi/3) * 0.488603 * n_z.
        let c = 0.8;
        let mut raw = [0.0; SH_COUNT];
        raw[2] = c;
        let coeffs = SHCoefficients::monochrome(raw);
        for n in [[0.0, 0.0, 1.0], [0.6, 0.0, 0.8], [0.0, -0.8, 0.6]] {
            let basis = sh_basis(n).unwrap();
            let got = coeffs.shade(&basis, 0);
            let want = c * (2.0 * std::f64::consts::PI / 3.0) * C1 * n[2];
            assert_abs_diff_eq!(got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn estimate_recovers_known_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(57);
        let normals: Vec<[f64; 3]> = (0..40).map(|_| random_unit(&mut rng)).collect();
        let mut truth = [0.0; SH_COUNT];
        truth[0] = 1.0;
        for c in truth.iter_mut().skip(1) {
            *c = rng.gen_range(-0.08..0.08);
        }
        let coeffs = SHCoefficients::monochrome(truth);
        let albedo: Vec<[f64; 3]> = (0..normals.len())
            .map(|_| [rng.gen_range(0.3..0.9); 3])
            .collect();
        let observed: Vec<[f64; 3]> = normals
            .iter()
            .zip(&albedo)
            .map(|(n, a)| {
                let basis = sh_basis(*n).unwrap();
                let s = coeffs.shade(&basis, 0);
                assert!(s > 0.0, "test lighting must stay positive");
                [a[0] * s, a[1] * s, a[2] * s]
            })
            .collect();
        let est = estimate_sh(&observed, &albedo, &normals, ShMode::Monochrome).unwrap();
        for k in 0..SH_COUNT {
            assert_abs_diff_eq!(est.coeffs.channels()[0][k], truth[k], epsilon = 1e-6);
        }
        assert!(est.residual < 1e-9);
        assert!(est.condition.is_finite());
    }

    #[test]
    fn estimate_zero_observed_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(58);
        let normals: Vec<[f64; 3]> = (0..20).map(|_| random_unit(&mut rng)).collect();
        let albedo = vec![[0.5, 0.5, 0.5]; 20];
        let observed = vec![[0.0, 0.0, 0.0]; 20];
        let est = estimate_sh(&observed, &albedo, &normals, ShMode::Monochrome).unwrap();
        for k in 0..SH_COUNT {
            assert_abs_diff_eq!(est.coeffs.channels()[0][k], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn estimate_rank_deficient_with_eight_normals() {
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        let eight: Vec<[f64; 3]> = (0..8).map(|_| random_unit(&mut rng)).collect();
        // Repeat one normal so there are >= 9 rows but only 8 distinct.
        let mut normals = eight.clone();
        normals.push(eight[0]);
        normals.push(eight[1]);
        let albedo = vec![[0.5; 3]; normals.len()];
        let observed = vec![[0.4; 3]; normals.len()];
        assert!(estimate_sh(&observed, &albedo, &normals, ShMode::Monochrome).is_err());
    }

    #[test]
    fn normalized_target_rules() {
        let mut raw = [0.0; SH_COUNT];
        for (k, v) in raw.iter_mut().enumerate() {
            *v = k as f64 + 0.5;
        }
        let coeffs = SHCoefficients::monochrome(raw);
        let norm = normalized_target(&coeffs);
        assert_eq!(norm.channels()[0][0], 0.5);
        assert!(norm.channels()[0][1..].iter().all(|&v| v == 0.0));
        // Idempotent; zero maps to zero.
        assert_eq!(normalized_target(&norm), norm);
        let zero = SHCoefficients::zero_monochrome();
        assert_eq!(normalized_target(&zero), zero);
    }

    #[test]
    fn dc_only_shading_is_isotropic() {
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let mut raw = [0.0; SH_COUNT];
        for v in raw.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let normalized = normalized_target(&SHCoefficients::monochrome(raw));
        let mut values = Vec::new();
        for _ in 0..50 {
            let basis = sh_basis(random_unit(&mut rng)).unwrap();
            values.push(normalized.shade(&basis, 0));
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64;
        assert!(var <= 1e-12, "variance {var}");
    }

    #[test]
    fn json_round_trip() {
        let mono = SHCoefficients::monochrome([0.5, 0.0, 0.1, 0.0, 0.0, 0.0, 0.2, 0.0, 0.0]);
        assert_eq!(coeffs_from_json(&coeffs_to_json(&mono)).unwrap(), mono);
        let rgb = SHCoefficients::rgb([[0.5; 9], [0.4; 9], [0.3; 9]]);
        assert_eq!(coeffs_from_json(&coeffs_to_json(&rgb)).unwrap(), rgb);
    }
}
