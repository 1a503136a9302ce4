//! Deterministic synthetic shapes: analytic meshes and partial-volume
//! occupancy grids that fit well inside the default camera frustum.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{TriangleMesh, Vec3, VoxelGrid};

pub mod corpus;

pub use corpus::{generate_corpus, make_corpus, Category, Corpus, CorpusParams};

/// Occupancy that ramps from 1 to 0 across one cell around the surface of
/// the region where `inside(p) > 0`; `inside` should be a (roughly) metric
/// signed distance in world units.
pub fn ramp_grid(n: usize, inside: impl Fn(Vec3) -> f64) -> VoxelGrid {
    let h = 1.0 / n as f64;
    VoxelGrid::from_fn([n, n, n], |p| 0.5 + inside(p) / h)
}

pub fn sphere_grid(n: usize, radius: f64) -> VoxelGrid {
    ramp_grid(n, |p| radius - p.norm())
}

pub fn box_grid(n: usize, half: [f64; 3]) -> VoxelGrid {
    ramp_grid(n, |p| (half[0] - p.x.abs()).min(half[1] - p.y.abs()).min(half[2] - p.z.abs()))
}

pub fn wedge_grid(n: usize) -> VoxelGrid {
    let planes = convex_planes(&wedge_mesh());
    ramp_grid(n, |p| planes.iter().map(|(normal, offset)| offset - normal.dot(&p)).fold(f64::INFINITY, f64::min))
}

/// Outward face planes `(normal, offset)` of a closed convex mesh.
fn convex_planes(mesh: &TriangleMesh) -> Vec<(Vec3, f64)> {
    (0..mesh.faces.len())
        .map(|f| {
            let [a, b, c] = mesh.triangle(f);
            let n = (b - a).cross(&(c - a)).normalize();
            (n, n.dot(&a))
        })
        .collect()
}

/// Asymmetric truncated wedge: a scalene triangular cross-section in the
/// x-z plane, extruded along y and shrunk toward +y. No rotation or mirror
/// maps it onto itself, so every pose has a distinct silhouette.
pub fn wedge_mesh() -> TriangleMesh {
    let section = [(-0.30, -0.15), (0.30, -0.15), (-0.08, 0.22)];
    let mut vertices = Vec::with_capacity(6);
    for (y, scale) in [(-0.18, 1.0), (0.18, 0.65)] {
        for &(x, z) in &section {
            vertices.push(Vec3::new(x * scale, y, z * scale));
        }
    }
    let mut faces = vec![[0, 1, 2], [3, 5, 4]];
    for k in 0..3 {
        let j = (k + 1) % 3;
        faces.push([k, j + 3, j]);
        faces.push([k, k + 3, j + 3]);
    }
    orient_outward(TriangleMesh::new(vertices, faces).expect("valid wedge"))
}

/// Flips every face whose normal points toward the centroid. Only meant for
/// star-shaped meshes.
fn orient_outward(mut mesh: TriangleMesh) -> TriangleMesh {
    let centroid = mesh.vertices.iter().sum::<Vec3>() / mesh.vertices.len() as f64;
    for f in 0..mesh.faces.len() {
        let [a, b, c] = mesh.triangle(f);
        if (b - a).cross(&(c - a)).dot(&(a - centroid)) < 0.0 {
            mesh.faces[f].swap(1, 2);
        }
    }
    mesh
}

/// Subdivided icosahedron projected onto a sphere.
pub fn icosphere(radius: f64, subdivisions: usize) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints = std::collections::HashMap::new();
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<Vec3>| {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                vertices.push(((vertices[a] + vertices[b]) / 2.0).normalize());
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    for v in &mut vertices {
        *v *= radius;
    }
    TriangleMesh::new(vertices, faces).expect("valid icosphere")
}

/// Seeded star-shaped genus-0 blob: an icosphere with smooth random radial
/// bumps and anisotropic scaling, bounded by radius 0.45.
pub fn random_blob(seed: u64) -> TriangleMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mesh = icosphere(1.0, 2);
    let bumps: Vec<(Vec3, f64, f64)> = (0..4)
        .map(|_| {
            let dir = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let dir = if dir.norm() < 1e-3 { Vec3::z() } else { dir.normalize() };
            (dir, rng.random_range(-0.25..0.35), rng.random_range(2.0..6.0))
        })
        .collect();
    let scale = Vec3::new(rng.random_range(0.6..1.0), rng.random_range(0.6..1.0), rng.random_range(0.6..1.0));
    for v in &mut mesh.vertices {
        let r = 1.0 + bumps.iter().map(|(d, amp, width)| amp * (width * (v.dot(d) - 1.0)).exp()).sum::<f64>();
        *v = (*v * r).component_mul(&scale);
    }
    let max = mesh.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max);
    for v in &mut mesh.vertices {
        *v *= 0.45 / max;
    }
    mesh
}
