//! Tet mesh file readers.
//!
//! Two formats are supported:
//! - MEDIT `.mesh`: `Vertices` / `Tetrahedra` / `Triangles` sections with
//!   1-based indices.
//! - Plain `.tet`: a `<n_verts> <n_tets>` header line, then one `x y z` line
//!   per vertex, then one `i j k l` line per tet (0-based).
//!
//! Feature annotations can be supplied in a sidecar `.fea` file containing
//! `e i j` lines for sharp edges and `c i` lines for corners (0-based vertex
//! indices into the input file).

use std::fs;
use std::path::Path;

use super::{MeshError, TetMesh};
use crate::math::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Medit,
    Tet,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<MeshFormat> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("mesh") => Some(MeshFormat::Medit),
            Some("tet") => Some(MeshFormat::Tet),
            _ => None,
        }
    }
}

/// Load a tet mesh file, validate it, and normalize coordinates.
pub fn load_tet_mesh(path: &Path, format: MeshFormat) -> Result<TetMesh, MeshError> {
    let text = fs::read_to_string(path)?;
    let (vertices, tets) = match format {
        MeshFormat::Medit => parse_medit(&text)?,
        MeshFormat::Tet => parse_tet(&text)?,
    };
    TetMesh::build(vertices, tets)
}

fn parse_err(line: usize, msg: impl Into<String>) -> MeshError {
    MeshError::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_medit(text: &str) -> Result<(Vec<Point>, Vec<[usize; 4]>), MeshError> {
    let mut vertices = Vec::new();
    let mut tets = Vec::new();
    let mut lines = text.lines().enumerate().peekable();

    let next_content = |lines: &mut std::iter::Peekable<
        std::iter::Enumerate<std::str::Lines>,
    >|
     -> Option<(usize, String)> {
        while let Some((ln, raw)) = lines.next() {
            let s = raw.trim();
            if !s.is_empty() && !s.starts_with('#') {
                return Some((ln + 1, s.to_string()));
            }
        }
        None
    };

    while let Some((ln, line)) = next_content(&mut lines) {
        let keyword = line.split_whitespace().next().unwrap_or("");
        match keyword {
            "MeshVersionFormatted" | "Dimension" => {
                // Value may be on the same line or the next; skip it either way.
                if line.split_whitespace().count() < 2 {
                    next_content(&mut lines);
                }
            }
            "Vertices" => {
                let (cln, cnt) = next_content(&mut lines)
                    .ok_or_else(|| parse_err(ln, "missing vertex count"))?;
                let n: usize = cnt
                    .split_whitespace()
                    .next()
                    .unwrap()
                    .parse()
                    .map_err(|_| parse_err(cln, "bad vertex count"))?;
                for _ in 0..n {
                    let (vln, vl) = next_content(&mut lines)
                        .ok_or_else(|| parse_err(cln, "unexpected end of vertex list"))?;
                    let nums: Vec<f64> = vl
                        .split_whitespace()
                        .take(3)
                        .map(|t| t.parse::<f64>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| parse_err(vln, "bad vertex line"))?;
                    if nums.len() != 3 {
                        return Err(parse_err(vln, "vertex line needs 3 coordinates"));
                    }
                    vertices.push(Point::new(nums[0], nums[1], nums[2]));
                }
            }
            "Tetrahedra" => {
                let (cln, cnt) = next_content(&mut lines)
                    .ok_or_else(|| parse_err(ln, "missing tetrahedra count"))?;
                let n: usize = cnt
                    .split_whitespace()
                    .next()
                    .unwrap()
                    .parse()
                    .map_err(|_| parse_err(cln, "bad tetrahedra count"))?;
                for _ in 0..n {
                    let (tln, tl) = next_content(&mut lines)
                        .ok_or_else(|| parse_err(cln, "unexpected end of tet list"))?;
                    let nums: Vec<usize> = tl
                        .split_whitespace()
                        .take(4)
                        .map(|t| t.parse::<usize>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| parse_err(tln, "bad tetrahedron line"))?;
                    if nums.len() != 4 || nums.iter().any(|&i| i == 0) {
                        return Err(parse_err(tln, "tetrahedron line needs 4 one-based indices"));
                    }
                    tets.push([nums[0] - 1, nums[1] - 1, nums[2] - 1, nums[3] - 1]);
                }
            }
            "Triangles" | "Edges" | "Quadrilaterals" | "Corners" | "Ridges" => {
                // Sections we derive ourselves; skip their payload.
                let (cln, cnt) = next_content(&mut lines)
                    .ok_or_else(|| parse_err(ln, "missing section count"))?;
                let n: usize = cnt
                    .split_whitespace()
                    .next()
                    .unwrap()
                    .parse()
                    .map_err(|_| parse_err(cln, "bad section count"))?;
                for _ in 0..n {
                    next_content(&mut lines);
                }
            }
            "End" => break,
            other => {
                return Err(parse_err(ln, format!("unknown MEDIT keyword '{other}'")));
            }
        }
    }
    Ok((vertices, tets))
}

fn parse_tet(text: &str) -> Result<(Vec<Point>, Vec<[usize; 4]>), MeshError> {
    let mut content = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (hln, header) = content.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let counts: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| parse_err(hln, "header must be '<n_verts> <n_tets>'"))?;
    if counts.len() != 2 {
        return Err(parse_err(hln, "header must be '<n_verts> <n_tets>'"));
    }
    let (nv, nt) = (counts[0], counts[1]);
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = content
            .next()
            .ok_or_else(|| parse_err(hln, "unexpected end of vertex list"))?;
        let nums: Vec<f64> = l
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| parse_err(ln, "bad vertex line"))?;
        if nums.len() != 3 {
            return Err(parse_err(ln, "vertex line needs 3 coordinates"));
        }
        vertices.push(Point::new(nums[0], nums[1], nums[2]));
    }
    let mut tets = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (ln, l) = content
            .next()
            .ok_or_else(|| parse_err(hln, "unexpected end of tet list"))?;
        let nums: Vec<usize> = l
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|_| parse_err(ln, "bad tet line"))?;
        if nums.len() != 4 {
            return Err(parse_err(ln, "tet line needs 4 zero-based indices"));
        }
        tets.push([nums[0], nums[1], nums[2], nums[3]]);
    }
    Ok((vertices, tets))
}

/// Read a `.fea` sidecar next to `mesh_path`, if present, and annotate the
/// mesh with its sharp edges and corners. Returns true when a sidecar was
/// found and applied.
pub fn read_feature_sidecar(mesh: &mut TetMesh, mesh_path: &Path) -> Result<bool, MeshError> {
    let sidecar = mesh_path.with_extension("fea");
    if !sidecar.exists() {
        return Ok(false);
    }
    let text = fs::read_to_string(&sidecar)?;
    let mut feature_edges = Vec::new();
    let mut corners = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("e") => {
                let a: usize = toks
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| parse_err(i + 1, "edge line needs two indices"))?;
                let b: usize = toks
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| parse_err(i + 1, "edge line needs two indices"))?;
                let convex = super::features::edge_is_convex(mesh, a, b)
                    .ok_or_else(|| parse_err(i + 1, "edge is not a surface edge"))?;
                feature_edges.push(super::FeatureEdge {
                    verts: if a < b { [a, b] } else { [b, a] },
                    convex,
                });
            }
            Some("c") => {
                let v: usize = toks
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| parse_err(i + 1, "corner line needs an index"))?;
                corners.push(v);
            }
            Some(other) => {
                return Err(parse_err(i + 1, format!("unknown record '{other}'")));
            }
            None => {}
        }
    }
    feature_edges.sort_by_key(|e| e.verts);
    feature_edges.dedup();
    corners.sort_unstable();
    corners.dedup();
    mesh.feature_edges = feature_edges;
    mesh.corners = corners;
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn roundtrip_tet_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.tet");
        let mut f = fs::File::create(&path).unwrap();
        writeln!(f, "4 1").unwrap();
        writeln!(f, "0 0 0\n1 0 0\n0 1 0\n0 0 1").unwrap();
        writeln!(f, "0 1 2 3").unwrap();
        drop(f);
        let mesh = load_tet_mesh(&path, MeshFormat::Tet).unwrap();
        assert_eq!(mesh.tets.len(), 1);
        assert_eq!(mesh.surface_tris.len(), 4);
    }

    #[test]
    fn medit_single_tet() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.mesh");
        fs::write(
            &path,
            "MeshVersionFormatted 2\nDimension 3\nVertices\n4\n0 0 0 0\n1 0 0 0\n0 1 0 0\n0 0 1 0\nTetrahedra\n1\n1 2 3 4 0\nEnd\n",
        )
        .unwrap();
        let mesh = load_tet_mesh(&path, MeshFormat::Medit).unwrap();
        assert_eq!(mesh.tets.len(), 1);
        assert_eq!(mesh.surface_tris.len(), 4);
    }

    #[test]
    fn parse_failure_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.tet");
        fs::write(&path, "4 1\n0 0 0\n1 0 x\n0 1 0\n0 0 1\n0 1 2 3\n").unwrap();
        let err = load_tet_mesh(&path, MeshFormat::Tet).unwrap_err();
        assert!(matches!(err, MeshError::Parse { line: 3, .. }));
    }
}
