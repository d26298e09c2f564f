//! Wavefront OBJ I/O restricted to `v`, `vt`, and triangulated `f v/vt`
//! records. A corner that reuses a vertex with a different `vt` duplicates
//! the vertex at load time, so the loaded mesh always has exactly one UV per
//! vertex.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::FaceMesh;

pub fn load_obj(path: impl AsRef<Path>) -> Result<FaceMesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;

    let parse_err = |line: usize, detail: String| Error::ObjParse {
        path: path.to_path_buf(),
        line,
        detail,
    };

    let mut positions: Vec<[f64; 3]> = Vec::new();
    let mut texcoords: Vec<[f64; 2]> = Vec::new();
    let mut corners: Vec<[(usize, usize); 3]> = Vec::new(); // (v, vt), 0-based

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let coords: Vec<f64> = parts
                    .map(|p| p.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| parse_err(lineno, format!("bad vertex: {e}")))?;
                if coords.len() < 3 {
                    return Err(parse_err(lineno, "vertex needs 3 coordinates".into()));
                }
                positions.push([coords[0], coords[1], coords[2]]);
            }
            Some("vt") => {
                let coords: Vec<f64> = parts
                    .map(|p| p.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| parse_err(lineno, format!("bad texcoord: {e}")))?;
                if coords.len() < 2 {
                    return Err(parse_err(lineno, "texcoord needs 2 coordinates".into()));
                }
                texcoords.push([coords[0], coords[1]]);
            }
            Some("f") => {
                let refs: Vec<&str> = parts.collect();
                if refs.len() != 3 {
                    return Err(parse_err(
                        lineno,
                        format!("faces must be triangles, got {} corners", refs.len()),
                    ));
                }
                let mut tri = [(0usize, 0usize); 3];
                for (slot, r) in refs.iter().enumerate() {
                    let mut fields = r.split('/');
                    let v_str = fields.next().unwrap_or("");
                    let vt_str = fields.next().unwrap_or("");
                    if vt_str.is_empty() {
                        return Err(parse_err(
                            lineno,
                            format!("corner '{r}' is missing a vt index"),
                        ));
                    }
                    let v: i64 = v_str
                        .parse()
                        .map_err(|e| parse_err(lineno, format!("bad v index '{v_str}': {e}")))?;
                    let vt: i64 = vt_str
                        .parse()
                        .map_err(|e| parse_err(lineno, format!("bad vt index '{vt_str}': {e}")))?;
                    if v < 1 || vt < 1 {
                        return Err(parse_err(
                            lineno,
                            format!("indices are 1-based and positive, got {v}/{vt}"),
                        ));
                    }
                    let (v, vt) = (v as usize - 1, vt as usize - 1);
                    if v >= positions.len() || vt >= texcoords.len() {
                        return Err(parse_err(
                            lineno,
                            format!(
                                "index out of range: v {}/{} vt {}/{}",
                                v + 1,
                                positions.len(),
                                vt + 1,
                                texcoords.len()
                            ),
                        ));
                    }
                    tri[slot] = (v, vt);
                }
                corners.push(tri);
            }
            // Ignore normals, groups, materials, smoothing.
            _ => {}
        }
    }

    // Collapse corner UVs to per-vertex UVs, duplicating vertices whose
    // corners disagree on the texcoord.
    let mut vertices: Vec<[f64; 3]> = Vec::new();
    let mut uvs: Vec<[f64; 2]> = Vec::new();
    let mut remap: HashMap<(usize, usize), usize> = HashMap::new();
    let mut triangles: Vec<[usize; 3]> = Vec::with_capacity(corners.len());
    for tri in corners {
        let mut out = [0usize; 3];
        for (slot, &(v, vt)) in tri.iter().enumerate() {
            let idx = *remap.entry((v, vt)).or_insert_with(|| {
                vertices.push(positions[v]);
                uvs.push(texcoords[vt]);
                vertices.len() - 1
            });
            out[slot] = idx;
        }
        triangles.push(out);
    }

    FaceMesh::new(vertices, triangles, uvs, vec![])
}

pub fn save_obj(mesh: &FaceMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut w = std::io::BufWriter::new(file);
    let mut emit = || -> std::io::Result<()> {
        for v in &mesh.vertices {
            writeln!(w, "v {:.9} {:.9} {:.9}", v[0], v[1], v[2])?;
        }
        for uv in &mesh.uvs {
            writeln!(w, "vt {:.9} {:.9}", uv[0], uv[1])?;
        }
        for t in &mesh.triangles {
            writeln!(
                w,
                "f {}/{} {}/{} {}/{}",
                t[0] + 1,
                t[0] + 1,
                t[1] + 1,
                t[1] + 1,
                t[2] + 1,
                t[2] + 1
            )?;
        }
        w.flush()
    };
    emit().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_obj(content: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mesh.obj");
        std::fs::write(&path, content).unwrap();
        (dir, path)
    }

    #[test]
    fn single_triangle() {
        let (_dir, path) =
            write_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 0 1\nf 1/1 2/2 3/3\n");
        let mesh = load_obj(&path).unwrap();
        assert_eq!(mesh.vertices.len(), 3);
        assert_eq!(mesh.triangles.len(), 1);
        assert_eq!(mesh.uvs[1], [1.0, 0.0]);
    }

    #[test]
    fn conflicting_corner_uvs_duplicate_vertex() {
        // Vertex 1 is used with two different texcoords.
        let (_dir, path) = write_obj(
            "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\n\
             vt 0 0\nvt 1 0\nvt 0 1\nvt 0.5 0.5\n\
             f 1/1 2/2 3/3\nf 1/4 3/3 4/2\n",
        );
        let mesh = load_obj(&path).unwrap();
        assert_eq!(mesh.vertices.len(), 5);
        assert_eq!(mesh.vertices[0], mesh.vertices[3]);
        assert_ne!(mesh.uvs[0], mesh.uvs[3]);
    }

    #[test]
    fn round_trip_preserves_coordinates() {
        // The loader may renumber vertices (corner collapsing), so compare
        // triangle corners rather than raw vertex order.
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("roundtrip.obj");
        let mesh = crate::synthetic::face_shell(9);
        save_obj(&mesh, &path).unwrap();
        let back = load_obj(&path).unwrap();
        assert_eq!(back.vertices.len(), mesh.vertices.len());
        assert_eq!(back.triangles.len(), mesh.triangles.len());
        for (ta, tb) in mesh.triangles.iter().zip(&back.triangles) {
            for slot in 0..3 {
                let (va, vb) = (ta[slot], tb[slot]);
                for c in 0..3 {
                    assert!((mesh.vertices[va][c] - back.vertices[vb][c]).abs() <= 1e-6);
                }
                for c in 0..2 {
                    assert!((mesh.uvs[va][c] - back.uvs[vb][c]).abs() <= 1e-6);
                }
            }
        }
    }

    #[test]
    fn zero_index_is_error() {
        let (_dir, path) = write_obj("v 0 0 0\nvt 0 0\nf 0/1 1/1 1/1\n");
        assert!(matches!(load_obj(&path), Err(Error::ObjParse { .. })));
    }

    #[test]
    fn quad_face_is_error() {
        let (_dir, path) =
            write_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvt 0 0\nf 1/1 2/1 3/1 4/1\n");
        assert!(matches!(load_obj(&path), Err(Error::ObjParse { .. })));
    }

    #[test]
    fn missing_vt_is_error() {
        let (_dir, path) = write_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nf 1 2 3\n");
        assert!(matches!(load_obj(&path), Err(Error::ObjParse { .. })));
    }

    #[test]
    fn out_of_range_index_is_error() {
        let (_dir, path) = write_obj("v 0 0 0\nvt 0 0\nf 1/1 2/1 3/1\n");
        assert!(matches!(load_obj(&path), Err(Error::ObjParse { .. })));
    }
}
