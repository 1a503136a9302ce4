use std::collections::HashMap;

use crate::geometry::{TriangleMesh, Vec3};

pub const WELD_TOLERANCE: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshDiagnostics {
    pub surface_area: f64,
    pub euler_characteristic: i64,
    /// Every undirected edge (after welding) borders exactly two faces.
    pub watertight: bool,
    pub welded_vertices: usize,
    pub edges: usize,
    pub faces: usize,
}

fn weld_key(v: &Vec3) -> [i64; 3] {
    [0, 1, 2].map(|i| (v[i] / WELD_TOLERANCE).round() as i64)
}

/// Area, Euler characteristic V - E + F and closedness. Vertices closer than
/// the weld tolerance are merged first; faces that collapse under welding are
/// ignored for the topological counts but not for the area.
pub fn mesh_diagnostics(mesh: &TriangleMesh) -> MeshDiagnostics {
    let surface_area = (0..mesh.faces.len()).map(|f| mesh.face_area(f)).sum();

    let mut ids: HashMap<[i64; 3], usize> = HashMap::new();
    let welded: Vec<usize> = mesh
        .vertices
        .iter()
        .map(|v| {
            let n = ids.len();
            *ids.entry(weld_key(v)).or_insert(n)
        })
        .collect();

    let mut used = vec![false; ids.len()];
    let mut edges: HashMap<(usize, usize), u32> = HashMap::new();
    let mut faces = 0usize;
    for f in &mesh.faces {
        let w = f.map(|i| welded[i]);
        if w[0] == w[1] || w[1] == w[2] || w[0] == w[2] {
            continue;
        }
        faces += 1;
        for k in 0..3 {
            used[w[k]] = true;
            let (a, b) = (w[k], w[(k + 1) % 3]);
            *edges.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    let v = used.iter().filter(|&&u| u).count();
    MeshDiagnostics {
        surface_area,
        euler_characteristic: v as i64 - edges.len() as i64 + faces as i64,
        watertight: edges.values().all(|&c| c == 2),
        welded_vertices: v,
        edges: edges.len(),
        faces,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_mesh() {
        let d = mesh_diagnostics(&TriangleMesh::default());
        assert_eq!((d.surface_area, d.euler_characteristic, d.watertight), (0.0, 0, true));
    }

    #[test]
    fn right_triangle() {
        let m = TriangleMesh::new(vec![Vec3::zeros(), Vec3::new(3.0, 0.0, 0.0), Vec3::new(0.0, 4.0, 0.0)], vec![[0, 1, 2]])
            .unwrap();
        let d = mesh_diagnostics(&m);
        assert_eq!(d.surface_area, 6.0);
        assert!(!d.watertight);
        assert_eq!(d.euler_characteristic, 1);
    }

    #[test]
    fn tetrahedron_with_duplicated_vertices_welds_closed() {
        let p = [Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()];
        let faces = [[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]];
        // every face gets its own copy of its corners
        let mut vertices = Vec::new();
        let mut out = Vec::new();
        for f in faces {
            let base = vertices.len();
            vertices.extend(f.iter().map(|&i| p[i] + Vec3::repeat(1e-9)));
            out.push([base, base + 1, base + 2]);
        }
        let d = mesh_diagnostics(&TriangleMesh::new(vertices, out).unwrap());
        assert!(d.watertight);
        assert_eq!(d.euler_characteristic, 2);
        assert_eq!((d.welded_vertices, d.edges, d.faces), (4, 6, 4));
    }
}
