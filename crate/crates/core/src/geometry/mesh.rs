use std::fmt::Write as _;
use std::path::Path;

use super::Vec3;
use crate::error::{Error, Result};

/// Indexed triangle set in the canonical object frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = TriangleMesh { vertices, faces };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        for (i, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&v| v >= n) {
                return Err(Error::Record { index: i, message: format!("face {f:?} indexes past {n} vertices") });
            }
            if f[0] == f[1] && f[1] == f[2] {
                return Err(Error::Record { index: i, message: "degenerate face".into() });
            }
        }
        if self.vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::Numerical("mesh vertex coordinate".into()));
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[face];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.triangle(face);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    /// Appends another mesh, offsetting its indices.
    pub fn append(&mut self, other: &TriangleMesh) {
        let base = self.vertices.len();
        self.vertices.extend_from_slice(&other.vertices);
        self.faces.extend(other.faces.iter().map(|f| [f[0] + base, f[1] + base, f[2] + base]));
    }

    /// Signed enclosed volume (positive for outward winding of a closed mesh).
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|&[a, b, c]| self.vertices[a].dot(&self.vertices[b].cross(&self.vertices[c])) / 6.0)
            .sum()
    }

    /// `v x y z` / `f i j k` text with 1-based indices.
    pub fn to_obj_string(&self) -> String {
        let mut s = String::with_capacity(32 * (self.vertices.len() + self.faces.len()));
        for v in &self.vertices {
            // `{}` on f64 prints the shortest representation that round-trips
            let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
        }
        for f in &self.faces {
            let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
        s
    }

    pub fn from_obj_str(text: &str) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let ctx = || format!("mesh line {}", lineno + 1);
            let mut parts = line.split_whitespace();
            let tag = parts.next().unwrap_or_default();
            let fields: Vec<&str> = parts.collect();
            match tag {
                "v" => {
                    if fields.len() != 3 {
                        return Err(Error::parse(ctx(), "vertex needs 3 coordinates"));
                    }
                    let mut c = [0.0; 3];
                    for (dst, f) in c.iter_mut().zip(&fields) {
                        *dst = f.parse::<f64>().map_err(|e| Error::parse(ctx(), e))?;
                    }
                    vertices.push(Vec3::new(c[0], c[1], c[2]));
                }
                "f" => {
                    if fields.len() != 3 {
                        return Err(Error::parse(ctx(), "only triangles are supported"));
                    }
                    let mut idx = [0usize; 3];
                    for (dst, f) in idx.iter_mut().zip(&fields) {
                        // tolerate `i/t/n` references by keeping the vertex index
                        let head = f.split('/').next().unwrap_or_default();
                        let i: usize = head.parse().map_err(|e| Error::parse(ctx(), e))?;
                        if i == 0 {
                            return Err(Error::parse(ctx(), "face indices are 1-based"));
                        }
                        *dst = i - 1;
                    }
                    faces.push(idx);
                }
                other => return Err(Error::parse(ctx(), format!("unsupported record '{other}'"))),
            }
        }
        TriangleMesh::new(vertices, faces)
    }

    pub fn read_obj(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_obj_str(&text).map_err(|e| match e {
            Error::Parse { context, message } => {
                Error::Parse { context: format!("{}: {context}", path.display()), message }
            }
            other => other,
        })
    }

    pub fn write_obj(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_obj_string()).map_err(|e| Error::io(path, e))
    }
}
