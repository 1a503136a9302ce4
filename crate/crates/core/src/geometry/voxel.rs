//! Dense occupancy grid over the canonical cube and its `VOXF` file format:
//! magic `VOXF`, three little-endian u32 dims (nx, ny, nz), then nx*ny*nz
//! little-endian f32 values with z varying fastest, then y, then x.

use std::path::Path;

use super::Vec3;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"VOXF";
const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    dims: [usize; 3],
    values: Vec<f32>,
}

impl VoxelGrid {
    pub fn new(dims: [usize; 3], values: Vec<f32>) -> Result<Self> {
        let expected = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        if expected != Some(values.len()) {
            return Err(Error::Dimension(format!("grid {dims:?} needs {expected:?} values, got {}", values.len())));
        }
        if let Some(i) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Record { index: i, message: format!("occupancy {} outside [0, 1]", values[i]) });
        }
        Ok(VoxelGrid { dims, values })
    }

    pub fn zeros(dims: [usize; 3]) -> Self {
        VoxelGrid { dims, values: vec![0.0; dims[0] * dims[1] * dims[2]] }
    }

    /// Samples `f` at every cell centre, clamping into `[0, 1]`.
    pub fn from_fn(dims: [usize; 3], f: impl Fn(Vec3) -> f64) -> Self {
        let mut grid = Self::zeros(dims);
        for x in 0..dims[0] {
            for y in 0..dims[1] {
                for z in 0..dims[2] {
                    let idx = grid.index(x, y, z);
                    grid.values[idx] = f(grid.cell_center(x, y, z)).clamp(0.0, 1.0) as f32;
                }
            }
        }
        grid
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (x * self.dims[1] + y) * self.dims[2] + z
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.values[self.index(x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, value: f32) {
        let i = self.index(x, y, z);
        self.values[i] = value.clamp(0.0, 1.0);
    }

    pub fn cell_size(&self) -> Vec3 {
        Vec3::new(1.0 / self.dims[0] as f64, 1.0 / self.dims[1] as f64, 1.0 / self.dims[2] as f64)
    }

    /// Cell centres span `[-0.5 + h/2, 0.5 - h/2]` on each axis.
    pub fn cell_center(&self, x: usize, y: usize, z: usize) -> Vec3 {
        let h = self.cell_size();
        Vec3::new(-0.5 + h.x * (x as f64 + 0.5), -0.5 + h.y * (y as f64 + 0.5), -0.5 + h.z * (z as f64 + 0.5))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.values.len());
        out.extend_from_slice(MAGIC);
        for d in self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fail = |offset: usize, message: &str| Error::Binary { offset, message: message.to_string() };
        if bytes.len() < 4 {
            return Err(fail(bytes.len(), "unexpected end of voxel header"));
        }
        if &bytes[..4] != MAGIC {
            return Err(fail(0, "bad magic, expected VOXF"));
        }
        if bytes.len() < HEADER_LEN {
            return Err(fail(bytes.len(), "unexpected end of voxel header"));
        }
        let mut dims = [0usize; 3];
        for (i, d) in dims.iter_mut().enumerate() {
            let o = 4 + 4 * i;
            *d = u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        }
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| fail(4, "grid dimensions overflow"))?;
        let payload = &bytes[HEADER_LEN..];
        let need = count.checked_mul(4).ok_or_else(|| fail(4, "grid dimensions overflow"))?;
        if payload.len() < need {
            let whole = payload.len() / 4 * 4;
            return Err(fail(HEADER_LEN + whole, "unexpected end of voxel payload"));
        }
        if payload.len() > need {
            return Err(fail(HEADER_LEN + need, "trailing bytes after voxel payload"));
        }
        let mut values = Vec::with_capacity(count);
        for (i, chunk) in payload.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !(0.0..=1.0).contains(&v) {
                return Err(fail(HEADER_LEN + 4 * i, &format!("occupancy {v} outside [0, 1]")));
            }
            values.push(v);
        }
        Ok(VoxelGrid { dims, values })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}
