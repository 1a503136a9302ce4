use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{TriangleMesh, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceSample {
    pub position: Vec3,
    pub face_index: usize,
    pub barycentric: [f64; 3],
}

impl SurfaceSample {
    /// Position rebuilt from the owning face and barycentric weights.
    pub fn reconstruct(&self, mesh: &TriangleMesh) -> Vec3 {
        let [a, b, c] = mesh.triangle(self.face_index);
        a * self.barycentric[0] + b * self.barycentric[1] + c * self.barycentric[2]
    }
}

/// `n` points drawn uniformly by area: faces chosen proportionally to area,
/// then a uniform point inside the chosen triangle. Fully determined by `seed`.
pub fn sample_surface_points(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<Vec<SurfaceSample>> {
    if mesh.is_empty() {
        return Err(Error::invalid("cannot sample an empty mesh"));
    }
    if n == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    let mut cdf = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in 0..mesh.faces.len() {
        total += mesh.face_area(f);
        cdf.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::invalid("mesh has zero surface area"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n)
        .map(|_| {
            let target = rng.random::<f64>() * total;
            let face_index = cdf.partition_point(|&c| c <= target).min(cdf.len() - 1);
            let r1: f64 = rng.random::<f64>().sqrt();
            let r2: f64 = rng.random();
            let barycentric = [1.0 - r1, r1 * (1.0 - r2), r1 * r2];
            let [a, b, c] = mesh.triangle(face_index);
            SurfaceSample { position: a * barycentric[0] + b * barycentric[1] + c * barycentric[2], face_index, barycentric }
        })
        .collect();
    Ok(samples)
}
