//! Sparse octrees: per-frame trees, structure unification, the Fourier
//! PlenOctree and ray traversal.

mod build;
mod fpo;
mod structure;
mod traverse;

pub use build::{build_frame_octree, pad_endpoints, unify_structures, FieldSampler, FramePlenOctree};
pub use fpo::{assemble_fpo, assemble_padded, FourierPlenOctree};
pub use structure::{Child, Structure, VoxelCoord, EMPTY_SLOT, LEAF_FLAG};
pub use traverse::RaySegment;

use crate::math::Vec3;

pub const MAX_DEPTH: u32 = 10;

/// Default density above which a voxel centre produces a stored leaf.
pub const DEFAULT_OCCUPANCY_THRESHOLD: f64 = 1e-4;

/// Axis-aligned cube given by centre and half side length.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Bounds {
    pub center: Vec3,
    pub half_extent: f64,
}

impl Bounds {
    pub fn new(center: Vec3, half_extent: f64) -> Self {
        Bounds { center, half_extent }
    }

    pub fn min(&self) -> Vec3 {
        self.center - Vec3::splat(self.half_extent)
    }

    pub fn max(&self) -> Vec3 {
        self.center + Vec3::splat(self.half_extent)
    }

    pub fn voxel_size(&self, depth: u32) -> f64 {
        2.0 * self.half_extent / (1u64 << depth) as f64
    }

    /// Lower corner and upper corner of a max-depth voxel.
    pub fn voxel_box(&self, coord: VoxelCoord, depth: u32) -> (Vec3, Vec3) {
        let size = self.voxel_size(depth);
        let lo = self.min() + Vec3::new(coord.x as f64, coord.y as f64, coord.z as f64) * size;
        (lo, lo + Vec3::splat(size))
    }

    pub fn voxel_center(&self, coord: VoxelCoord, depth: u32) -> Vec3 {
        let (lo, hi) = self.voxel_box(coord, depth);
        (lo + hi) * 0.5
    }

    /// Voxel containing `p`, if inside the cube.
    pub fn voxel_of(&self, p: Vec3, depth: u32) -> Option<VoxelCoord> {
        let n = 1u64 << depth;
        let size = self.voxel_size(depth);
        let rel = p - self.min();
        let mut c = [0u16; 3];
        for (axis, slot) in c.iter_mut().enumerate() {
            let f = rel[axis] / size;
            if !(f >= 0.0) || f >= n as f64 {
                return None;
            }
            *slot = crate::math::floor(f) as u16;
        }
        Some(VoxelCoord::new(c[0], c[1], c[2]))
    }
}
