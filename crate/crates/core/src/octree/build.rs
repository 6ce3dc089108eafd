use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::math::Vec3;
use crate::sh;

use super::{Bounds, Structure, VoxelCoord, MAX_DEPTH};

/// Source of per-frame density and radiance samples.
pub trait FieldSampler {
    fn density(&self, p: Vec3) -> f64;

    /// Writes `sh_count * 3` pre-sigmoid SH coefficients for the point.
    fn radiance(&self, p: Vec3, sh_count: usize, out: &mut [f64]);

    /// Conservative emptiness test: return `false` only if the density is
    /// zero everywhere in the box.
    fn may_be_occupied(&self, _lo: Vec3, _hi: Vec3) -> bool {
        true
    }
}

/// Static octree of one frame: density and SH coefficients per leaf.
#[derive(Clone, Debug, PartialEq)]
pub struct FramePlenOctree {
    pub structure: Structure,
    pub bounds: Bounds,
    pub sh_count: usize,
    /// One density per leaf.
    pub sigma: Vec<f64>,
    /// `sh_count * 3` coefficients per leaf.
    pub sh: Vec<f64>,
}

impl FramePlenOctree {
    pub fn new(structure: Structure, bounds: Bounds, sh_count: usize, sigma: Vec<f64>, sh: Vec<f64>) -> Result<Self> {
        if !sh::is_valid_count(sh_count) {
            return Err(invalid(alloc::format!("unsupported SH count {sh_count}")));
        }
        if sigma.len() != structure.leaf_count() || sh.len() != structure.leaf_count() * sh_count * 3 {
            return Err(invalid("payload length does not match leaf count"));
        }
        if sigma.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::Data("leaf density must be finite and non-negative".into()));
        }
        if sh.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite SH coefficient".into()));
        }
        Ok(FramePlenOctree { structure, bounds, sh_count, sigma, sh })
    }

    pub fn leaf_count(&self) -> usize {
        self.structure.leaf_count()
    }

    pub fn leaf_sh(&self, leaf: usize) -> &[f64] {
        let n = self.sh_count * 3;
        &self.sh[leaf * n..(leaf + 1) * n]
    }
}

/// Samples `field` at every max-depth voxel centre and keeps the voxels whose
/// density exceeds `occupancy_threshold`.
pub fn build_frame_octree<F: FieldSampler + ?Sized>(
    field: &F,
    bounds: Bounds,
    max_depth: u32,
    occupancy_threshold: f64,
    sh_count: usize,
) -> Result<FramePlenOctree> {
    if max_depth == 0 || max_depth > MAX_DEPTH {
        return Err(invalid(alloc::format!("max_depth {max_depth} outside [1, {MAX_DEPTH}]")));
    }
    if !(bounds.half_extent > 0.0) || !bounds.center.is_finite() {
        return Err(invalid("bounds must be finite with positive extent"));
    }
    if !sh::is_valid_count(sh_count) {
        return Err(invalid(alloc::format!("unsupported SH count {sh_count}")));
    }
    let mut state = BuildState {
        field,
        bounds,
        max_depth,
        threshold: occupancy_threshold,
        sh_count,
        codes: Vec::new(),
        sigma: Vec::new(),
        sh: Vec::new(),
        scratch: alloc::vec![0.0; sh_count * 3],
    };
    state.visit(0, 0, [0, 0, 0])?;
    let BuildState { codes, sigma, sh, .. } = state;
    let structure = Structure::from_sorted_codes(max_depth, codes)?;
    Ok(FramePlenOctree { structure, bounds, sh_count, sigma, sh })
}

struct BuildState<'a, F: ?Sized> {
    field: &'a F,
    bounds: Bounds,
    max_depth: u32,
    threshold: f64,
    sh_count: usize,
    codes: Vec<u64>,
    sigma: Vec<f64>,
    sh: Vec<f64>,
    scratch: Vec<f64>,
}

impl<F: FieldSampler + ?Sized> BuildState<'_, F> {
    // Children are visited in slot order, so leaves come out Morton-sorted.
    fn visit(&mut self, level: u32, code: u64, origin: [u32; 3]) -> Result<()> {
        let span = 1u32 << (self.max_depth - level);
        let size = self.bounds.voxel_size(self.max_depth);
        let lo = self.bounds.min() + Vec3::new(origin[0] as f64, origin[1] as f64, origin[2] as f64) * size;
        let hi = lo + Vec3::splat(span as f64 * size);
        if !self.field.may_be_occupied(lo, hi) {
            return Ok(());
        }
        if level == self.max_depth {
            let coord = VoxelCoord::new(origin[0] as u16, origin[1] as u16, origin[2] as u16);
            let p = self.bounds.voxel_center(coord, self.max_depth);
            let density = self.field.density(p);
            if !density.is_finite() {
                return Err(Error::Data(alloc::format!("non-finite density at {p:?}")));
            }
            if density > self.threshold {
                self.field.radiance(p, self.sh_count, &mut self.scratch);
                if self.scratch.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Data(alloc::format!("non-finite radiance at {p:?}")));
                }
                self.codes.push(code);
                self.sigma.push(density);
                self.sh.extend_from_slice(&self.scratch);
            }
            return Ok(());
        }
        let half = span / 2;
        for slot in 0..8u32 {
            let child = [
                origin[0] + (slot & 1) * half,
                origin[1] + ((slot >> 1) & 1) * half,
                origin[2] + ((slot >> 2) & 1) * half,
            ];
            self.visit(level + 1, (code << 3) | slot as u64, child)?;
        }
        Ok(())
    }
}

/// Union of the per-frame occupancy sets in local voxel coordinates.
pub fn unify_structures(trees: &[FramePlenOctree]) -> Result<Structure> {
    let first = trees.first().ok_or_else(|| invalid("no frame trees to unify"))?;
    let depth = first.structure.max_depth();
    for (i, t) in trees.iter().enumerate() {
        if t.structure.max_depth() != depth {
            return Err(invalid(alloc::format!("frame {i} has depth {} != {depth}", t.structure.max_depth())));
        }
        if t.bounds.half_extent != first.bounds.half_extent {
            return Err(invalid(alloc::format!("frame {i} has a different half extent")));
        }
        if t.sh_count != first.sh_count {
            return Err(invalid(alloc::format!("frame {i} has a different SH count")));
        }
    }
    let mut codes: Vec<u64> = trees.iter().flat_map(|t| t.structure.leaf_codes().iter().copied()).collect();
    codes.sort_unstable();
    codes.dedup();
    Structure::from_sorted_codes(depth, codes)
}

/// Duplicates the first and last frame.
pub fn pad_endpoints(trees: &[FramePlenOctree]) -> Vec<FramePlenOctree> {
    let mut out = Vec::with_capacity(trees.len() + 2);
    if let (Some(first), Some(last)) = (trees.first(), trees.last()) {
        out.push(first.clone());
        out.extend(trees.iter().cloned());
        out.push(last.clone());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Zero;
    impl FieldSampler for Zero {
        fn density(&self, _: Vec3) -> f64 {
            0.0
        }
        fn radiance(&self, _: Vec3, _: usize, out: &mut [f64]) {
            out.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    struct PositiveOctant;
    impl FieldSampler for PositiveOctant {
        fn density(&self, p: Vec3) -> f64 {
            if p.x > 0.0 && p.y > 0.0 && p.z > 0.0 { 10.0 } else { 0.0 }
        }
        fn radiance(&self, p: Vec3, _: usize, out: &mut [f64]) {
            out.iter_mut().enumerate().for_each(|(i, v)| *v = p.x + i as f64);
        }
    }

    struct Ball {
        center: Vec3,
        radius: f64,
        prune: bool,
    }
    impl FieldSampler for Ball {
        fn density(&self, p: Vec3) -> f64 {
            if (p - self.center).norm() <= self.radius { 3.0 } else { 0.0 }
        }
        fn radiance(&self, _: Vec3, _: usize, out: &mut [f64]) {
            out.iter_mut().for_each(|v| *v = 0.25);
        }
        fn may_be_occupied(&self, lo: Vec3, hi: Vec3) -> bool {
            if !self.prune {
                return true;
            }
            let mut d2 = 0.0;
            for a in 0..3 {
                let c = self.center[a].clamp(lo[a], hi[a]);
                d2 += (c - self.center[a]).powi(2);
            }
            d2 <= self.radius * self.radius
        }
    }

    struct Nan;
    impl FieldSampler for Nan {
        fn density(&self, _: Vec3) -> f64 {
            f64::NAN
        }
        fn radiance(&self, _: Vec3, _: usize, _: &mut [f64]) {}
    }

    fn unit() -> Bounds {
        Bounds::new(Vec3::ZERO, 1.0)
    }

    #[test]
    fn zero_field_has_no_leaves() {
        let t = build_frame_octree(&Zero, unit(), 3, 1e-4, 9).unwrap();
        assert_eq!(t.leaf_count(), 0);
    }

    #[test]
    fn positive_octant_depth_one() {
        let t = build_frame_octree(&PositiveOctant, unit(), 1, 1e-4, 9).unwrap();
        assert_eq!(t.leaf_count(), 1);
        assert_eq!(t.structure.leaf_coord(0), VoxelCoord::new(1, 1, 1));
        assert_eq!(t.sigma, vec![10.0]);
        assert_eq!(t.leaf_sh(0)[0], 0.5);
    }

    #[test]
    fn non_finite_field_is_data_error() {
        assert!(matches!(build_frame_octree(&Nan, unit(), 2, 1e-4, 1), Err(Error::Data(_))));
    }

    #[test]
    fn ball_matches_brute_force_scan() {
        for depth in 1..=5u32 {
            let ball = Ball { center: Vec3::new(0.1, -0.2, 0.05), radius: 0.55, prune: true };
            let tree = build_frame_octree(&ball, unit(), depth, 1e-4, 1).unwrap();
            let b = unit();
            let side = 1u16 << depth;
            let mut count = 0;
            for x in 0..side {
                for y in 0..side {
                    for z in 0..side {
                        let c = VoxelCoord::new(x, y, z);
                        let inside = ball.density(b.voxel_center(c, depth)) > 1e-4;
                        count += inside as usize;
                        assert_eq!(tree.structure.lookup(c).is_some(), inside);
                    }
                }
            }
            assert_eq!(tree.leaf_count(), count);
            let unpruned = build_frame_octree(&Ball { prune: false, ..ball }, unit(), depth, 1e-4, 1).unwrap();
            assert_eq!(unpruned, tree);
        }
    }

    fn random_tree(rng: &mut ChaCha8Rng, depth: u32) -> FramePlenOctree {
        let side = 1u16 << depth;
        let mut codes: Vec<u64> = (0..rng.gen_range(0..60))
            .map(|_| VoxelCoord::new(rng.gen_range(0..side), rng.gen_range(0..side), rng.gen_range(0..side)).morton())
            .collect();
        codes.sort_unstable();
        codes.dedup();
        let n = codes.len();
        let s = Structure::from_sorted_codes(depth, codes).unwrap();
        FramePlenOctree::new(s, unit(), 1, vec![1.0; n], vec![0.0; n * 3]).unwrap()
    }

    #[test]
    fn unification_is_set_union() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let a = random_tree(&mut rng, 4);
            let b = random_tree(&mut rng, 4);
            let u = unify_structures(&[a.clone(), b.clone()]).unwrap();
            for x in 0..16 {
                for y in 0..16 {
                    for z in 0..16 {
                        let c = VoxelCoord::new(x, y, z);
                        let expected = a.structure.lookup(c).is_some() || b.structure.lookup(c).is_some();
                        assert_eq!(u.lookup(c).is_some(), expected);
                    }
                }
            }
            assert!(u.leaf_count() >= a.leaf_count().max(b.leaf_count()));
            assert_eq!(unify_structures(std::slice::from_ref(&a)).unwrap(), a.structure);
        }
    }

    #[test]
    fn unification_rejects_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_tree(&mut rng, 3);
        let b = random_tree(&mut rng, 4);
        assert!(unify_structures(&[a.clone(), b]).is_err());
        let mut c = a.clone();
        c.bounds.half_extent = 2.0;
        assert!(unify_structures(&[a, c]).is_err());
        assert!(unify_structures(&[]).is_err());
    }

    #[test]
    fn two_disjoint_leaves() {
        let mk = |c: VoxelCoord| {
            let s = Structure::from_sorted_codes(2, vec![c.morton()]).unwrap();
            FramePlenOctree::new(s, unit(), 1, vec![1.0], vec![0.0; 3]).unwrap()
        };
        let u = unify_structures(&[mk(VoxelCoord::new(0, 0, 0)), mk(VoxelCoord::new(3, 3, 3))]).unwrap();
        assert_eq!(u.leaf_count(), 2);
    }

    #[test]
    fn padding_duplicates_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let trees: Vec<_> = (0..3).map(|_| random_tree(&mut rng, 2)).collect();
        let padded = pad_endpoints(&trees);
        assert_eq!(padded.len(), 5);
        assert_eq!(padded[0], trees[0]);
        assert_eq!(padded[4], trees[2]);
        assert_eq!(&padded[1..4], &trees[..]);
    }
}
