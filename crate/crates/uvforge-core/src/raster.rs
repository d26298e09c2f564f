//! Shared destination-driven triangle rasterizer.
//!
//! One rasterization pass resolves, per destination texel, which triangle
//! wins the depth test and with what barycentric weights; shading happens in
//! a second pass owned by the caller. Depth is camera-space z with larger
//! values closer; ties keep the lower triangle index, so the result is a
//! total order and independent of traversal order.

/// Winner-per-texel record produced by [`rasterize`].
pub struct CoverageMap {
    pub width: usize,
    pub height: usize,
    /// Winning triangle index per texel; `usize::MAX` = uncovered.
    pub triangle: Vec<usize>,
    /// Barycentric weights of the winning fragment.
    pub bary: Vec<[f64; 3]>,
    pub depth: Vec<f64>,
    /// Triangles skipped because their destination-space area vanished.
    pub degenerate_skipped: usize,
}

pub const NO_TRIANGLE: usize = usize::MAX;

impl CoverageMap {
    #[inline]
    pub fn covered(&self, x: usize, y: usize) -> bool {
        self.triangle[y * self.width + x] != NO_TRIANGLE
    }
}

#[inline]
fn cross2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Barycentric weights of point `q` in triangle `p`; `None` when the
/// triangle is degenerate.
#[inline]
pub fn barycentric(p: &[[f64; 2]; 3], q: [f64; 2]) -> Option<[f64; 3]> {
    let e1 = [p[1][0] - p[0][0], p[1][1] - p[0][1]];
    let e2 = [p[2][0] - p[0][0], p[2][1] - p[0][1]];
    let denom = cross2(e1, e2);
    if denom.abs() < 1e-14 {
        return None;
    }
    let d = [q[0] - p[0][0], q[1] - p[0][1]];
    let w1 = cross2(d, e2) / denom;
    let w2 = cross2(e1, d) / denom;
    Some([1.0 - w1 - w2, w1, w2])
}

/// Rasterize `num_triangles` triangles onto a `width x height` grid whose
/// texel centers sit at integer coordinates. `positions` yields the three
/// destination-space vertex positions of a triangle, `depths` the vertex
/// depths, and `accept` gates triangles (back-face culling lives there).
pub fn rasterize(
    width: usize,
    height: usize,
    num_triangles: usize,
    positions: impl Fn(usize) -> [[f64; 2]; 3],
    depths: impl Fn(usize) -> [f64; 3],
    accept: impl Fn(usize) -> bool,
) -> CoverageMap {
    let mut map = CoverageMap {
        width,
        height,
        triangle: vec![NO_TRIANGLE; width * height],
        bary: vec![[0.0; 3]; width * height],
        depth: vec![f64::NEG_INFINITY; width * height],
        degenerate_skipped: 0,
    };
    for t in 0..num_triangles {
        let p = positions(t);
        let e1 = [p[1][0] - p[0][0], p[1][1] - p[0][1]];
        let e2 = [p[2][0] - p[0][0], p[2][1] - p[0][1]];
        if cross2(e1, e2).abs() < 1e-14 {
            map.degenerate_skipped += 1;
            continue;
        }
        if !accept(t) {
            continue;
        }
        let d = depths(t);

        let min_x = p.iter().map(|v| v[0]).fold(f64::INFINITY, f64::min);
        let max_x = p.iter().map(|v| v[0]).fold(f64::NEG_INFINITY, f64::max);
        let min_y = p.iter().map(|v| v[1]).fold(f64::INFINITY, f64::min);
        let max_y = p.iter().map(|v| v[1]).fold(f64::NEG_INFINITY, f64::max);
        if max_x < 0.0 || max_y < 0.0 || min_x > (width - 1) as f64 || min_y > (height - 1) as f64 {
            continue;
        }
        let x0 = min_x.ceil().max(0.0) as usize;
        let x1 = max_x.floor().min((width - 1) as f64) as usize;
        let y0 = min_y.ceil().max(0.0) as usize;
        let y1 = max_y.floor().min((height - 1) as f64) as usize;

        for y in y0..=y1 {
            for x in x0..=x1 {
                let Some(bary) = barycentric(&p, [x as f64, y as f64]) else {
                    continue;
                };
                if bary[0] < 0.0 || bary[1] < 0.0 || bary[2] < 0.0 {
                    continue;
                }
                let depth = bary[0] * d[0] + bary[1] * d[1] + bary[2] * d[2];
                let idx = y * width + x;
                // Strict > keeps the lower-index triangle on exact ties.
                if depth > map.depth[idx] {
                    map.depth[idx] = depth;
                    map.triangle[idx] = t;
                    map.bary[idx] = bary;
                }
            }
        }
    }
    map
}
