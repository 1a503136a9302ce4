//! Occupancy grid to triangle mesh, plus mesh diagnostics and area-weighted
//! surface sampling.

mod diagnostics;
mod sampling;
mod table;

use rayon::prelude::*;

pub use diagnostics::{mesh_diagnostics, MeshDiagnostics};
pub use sampling::{sample_surface_points, SurfaceSample};

use crate::geometry::{TriangleMesh, Vec3, VoxelGrid};
use crate::error::{Error, Result};
use table::{case_table, CORNERS, EDGES};

pub const DEFAULT_ISO: f64 = 0.5;

/// Extracts the `iso` level set of `grid`.
///
/// The lattice points are the cell centres; a corner is above the surface
/// when its occupancy is strictly greater than `iso`. Vertices are linearly
/// interpolated along crossed cell edges and are shared within a cell but
/// duplicated across neighbouring cells. Triangles are wound so normals point
/// from the above-iso region toward the below-iso region. Cells are emitted in
/// x-major order regardless of how the slabs are scheduled.
pub fn marching_cubes(grid: &VoxelGrid, iso: f64) -> Result<TriangleMesh> {
    let [nx, ny, nz] = grid.dims();
    if nx < 2 || ny < 2 || nz < 2 {
        return Err(Error::invalid(format!("marching cubes needs at least 2 cells per axis, got {:?}", grid.dims())));
    }
    if !(iso > 0.0 && iso < 1.0) {
        return Err(Error::invalid(format!("iso level must lie in (0, 1), got {iso}")));
    }
    let slabs: Vec<TriangleMesh> = (0..nx - 1).into_par_iter().map(|x| march_slab(grid, iso, x)).collect();
    let mut mesh = TriangleMesh::default();
    for slab in &slabs {
        mesh.append(slab);
    }
    Ok(mesh)
}

fn march_slab(grid: &VoxelGrid, iso: f64, x: usize) -> TriangleMesh {
    let [_, ny, nz] = grid.dims();
    let table = case_table();
    let mut mesh = TriangleMesh::default();
    let mut values = [0f64; 8];
    let mut lattice = [[0usize; 3]; 8];
    for y in 0..ny - 1 {
        for z in 0..nz - 1 {
            let mut case = 0u8;
            for (c, off) in CORNERS.iter().enumerate() {
                lattice[c] = [x + off[0], y + off[1], z + off[2]];
                values[c] = grid.get(lattice[c][0], lattice[c][1], lattice[c][2]) as f64;
                if values[c] > iso {
                    case |= 1 << c;
                }
            }
            let tris = &table[case as usize];
            if tris.is_empty() {
                continue;
            }
            let mut edge_vertex = [usize::MAX; 12];
            for tri in tris {
                let mut face = [0usize; 3];
                for (slot, &e) in face.iter_mut().zip(tri) {
                    let e = e as usize;
                    if edge_vertex[e] == usize::MAX {
                        edge_vertex[e] = mesh.vertices.len();
                        mesh.vertices.push(edge_point(grid, iso, &lattice, &values, e));
                    }
                    *slot = edge_vertex[e];
                }
                mesh.faces.push(face);
            }
        }
    }
    mesh
}

/// Interpolates from the lower lattice corner of the edge so both cells that
/// share an edge produce bit-identical vertices.
fn edge_point(grid: &VoxelGrid, iso: f64, lattice: &[[usize; 3]; 8], values: &[f64; 8], edge: usize) -> Vec3 {
    let [a, b] = EDGES[edge];
    let (lo, hi) = if lattice[a] < lattice[b] { (a, b) } else { (b, a) };
    let t = (iso - values[lo]) / (values[hi] - values[lo]);
    let p_lo = grid.cell_center(lattice[lo][0], lattice[lo][1], lattice[lo][2]);
    let p_hi = grid.cell_center(lattice[hi][0], lattice[hi][1], lattice[hi][2]);
    let mut p = p_lo;
    let axis = (0..3).find(|&i| lattice[lo][i] != lattice[hi][i]).expect("edge spans one axis");
    p[axis] = p_lo[axis] + t * (p_hi[axis] - p_lo[axis]);
    p
}
