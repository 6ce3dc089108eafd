use alloc::vec::Vec;
use core::ops::ControlFlow;

use crate::math::Vec3;
use crate::render::Ray;

use super::{Bounds, Child, Structure};

/// One stored leaf crossed by a ray, with parametric entry and exit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RaySegment {
    pub leaf: u32,
    pub enter: f64,
    pub exit: f64,
}

impl RaySegment {
    pub fn length(&self) -> f64 {
        self.exit - self.enter
    }
}

/// Parametric interval of `ray` inside the axis-aligned box.
pub(crate) fn slab_interval(ray: &Ray, lo: Vec3, hi: Vec3) -> Option<(f64, f64)> {
    let mut t0 = ray.near;
    let mut t1 = ray.far;
    for a in 0..3 {
        let o = ray.origin[a];
        let d = ray.direction[a];
        if d == 0.0 {
            if o < lo[a] || o > hi[a] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d;
        let (mut e, mut x) = ((lo[a] - o) * inv, (hi[a] - o) * inv);
        if e > x {
            core::mem::swap(&mut e, &mut x);
        }
        t0 = t0.max(e);
        t1 = t1.min(x);
    }
    (t1 > t0).then_some((t0, t1))
}

struct Walker<'a, F> {
    structure: &'a Structure,
    origin: Vec3,
    dir: Vec3,
    inv: Vec3,
    visit: F,
}

impl<F: FnMut(RaySegment) -> ControlFlow<()>> Walker<'_, F> {
    // The node cube is split by its three mid planes; crossings inside
    // [t0, t1] cut the interval into at most four pieces, each inside one
    // child. The child is picked from the piece's midpoint.
    fn node(&mut self, node: u32, center: Vec3, half: f64, t0: f64, t1: f64) -> ControlFlow<()> {
        let mut cuts = [t0, t1, t1, t1, t1];
        let mut n = 1;
        for a in 0..3 {
            if self.dir[a] != 0.0 {
                let t = (center[a] - self.origin[a]) * self.inv[a];
                if t > t0 && t < t1 {
                    cuts[n] = t;
                    n += 1;
                }
            }
        }
        cuts[n] = t1;
        cuts[1..n].sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        let quarter = half * 0.5;
        let slots = self.structure.nodes()[node as usize];
        for i in 0..n {
            let (s, e) = (cuts[i], cuts[i + 1]);
            if !(e > s) {
                continue;
            }
            let m = self.origin + self.dir * (0.5 * (s + e));
            let bx = (m.x >= center.x) as usize;
            let by = (m.y >= center.y) as usize;
            let bz = (m.z >= center.z) as usize;
            let slot = bx | (by << 1) | (bz << 2);
            match Child::decode(slots[slot]) {
                Child::Empty => {}
                Child::Leaf(leaf) => (self.visit)(RaySegment { leaf, enter: s, exit: e })?,
                Child::Node(child) => {
                    let sign = |b: usize| if b == 1 { quarter } else { -quarter };
                    let c = center + Vec3::new(sign(bx), sign(by), sign(bz));
                    self.node(child, c, quarter, s, e)?;
                }
            }
        }
        ControlFlow::Continue(())
    }
}

impl Structure {
    /// Calls `visit` for every stored leaf the ray crosses inside
    /// `[near, far]`, front to back. Returning `Break` stops the walk.
    pub fn traverse_with<F>(&self, bounds: &Bounds, ray: &Ray, visit: F)
    where
        F: FnMut(RaySegment) -> ControlFlow<()>,
    {
        let Some((t0, t1)) = slab_interval(ray, bounds.min(), bounds.max()) else {
            return;
        };
        let d = ray.direction;
        let inv = Vec3::new(1.0 / d.x, 1.0 / d.y, 1.0 / d.z);
        let mut walker = Walker { structure: self, origin: ray.origin, dir: d, inv, visit };
        let _ = walker.node(0, bounds.center, bounds.half_extent, t0, t1);
    }

    pub fn traverse(&self, bounds: &Bounds, ray: &Ray) -> Vec<RaySegment> {
        let mut out = Vec::new();
        self.traverse_with(bounds, ray, |s| {
            out.push(s);
            ControlFlow::Continue(())
        });
        out
    }
}
