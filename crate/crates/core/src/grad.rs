//! Hand-derived gradients of the summed squared image error with respect to
//! every stored Fourier coefficient, plus a sparse Adam update.
//!
//! For the composited colour `C = sum_i T_i a_i c_i + T_N bg` with
//! `a_i = 1 - exp(-sigma_i d_i)`:
//!
//! * `dC/dc_i = T_i a_i`
//! * `dC/dsigma_i = d_i (T_{i+1} c_i - R_i)` where `R_i` is everything
//!   composited behind leaf `i`, background included.
//!
//! Density reaches the coefficients through the IDFT, the optional `exp(y)-1`
//! and the ReLU; colour through the IDFT, SH evaluation and the sigmoid.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::ControlFlow;

use crate::encoding;
use crate::error::{invalid, Error, Result};
use crate::math;
use crate::octree::FourierPlenOctree;
use crate::render::{Ray, RenderParams};
use crate::sh;
use crate::signal::Coefficient;

/// A ray, the content time step it belongs to (internal frame index) and its
/// ground-truth colour.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainRay {
    pub ray: Ray,
    pub t: usize,
    pub target: [f64; 3],
}

/// Sum of squared per-channel differences.
pub fn loss(pred: &[[f64; 3]], gt: &[[f64; 3]]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(invalid(alloc::format!("loss over {} predictions and {} targets", pred.len(), gt.len())));
    }
    Ok(pred.iter().zip(gt).map(|(p, g)| sq_err(p, g)).sum())
}

#[inline]
fn sq_err(p: &[f64; 3], g: &[f64; 3]) -> f64 {
    let d = [p[0] - g[0], p[1] - g[1], p[2] - g[2]];
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

/// Accumulates gradient rows for the leaves a set of rays touches.
#[derive(Clone, Debug)]
pub struct GradAccumulator {
    stride: usize,
    slot_of: Vec<u32>,
    leaves: Vec<u32>,
    rows: Vec<f64>,
}

const NO_SLOT: u32 = u32::MAX;

impl GradAccumulator {
    pub fn new(leaf_count: usize, stride: usize) -> Self {
        GradAccumulator { stride, slot_of: vec![NO_SLOT; leaf_count], leaves: Vec::new(), rows: Vec::new() }
    }

    pub fn for_fpo<S: Coefficient>(fpo: &FourierPlenOctree<S>) -> Self {
        Self::new(fpo.leaf_count(), fpo.stride())
    }

    pub fn row_mut(&mut self, leaf: u32) -> &mut [f64] {
        let mut slot = self.slot_of[leaf as usize];
        if slot == NO_SLOT {
            slot = self.leaves.len() as u32;
            self.slot_of[leaf as usize] = slot;
            self.leaves.push(leaf);
            self.rows.resize(self.rows.len() + self.stride, 0.0);
        }
        let s = slot as usize * self.stride;
        &mut self.rows[s..s + self.stride]
    }

    /// Adds `other` row by row, in `other`'s insertion order.
    pub fn merge(&mut self, other: &GradAccumulator) {
        for (i, &leaf) in other.leaves.iter().enumerate() {
            let src = &other.rows[i * other.stride..(i + 1) * other.stride];
            for (d, s) in self.row_mut(leaf).iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    pub fn clear(&mut self) {
        for &leaf in &self.leaves {
            self.slot_of[leaf as usize] = NO_SLOT;
        }
        self.leaves.clear();
        self.rows.clear();
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    /// Rows sorted by leaf id.
    pub fn to_store(&self) -> GradientStore {
        let mut order: Vec<usize> = (0..self.leaves.len()).collect();
        order.sort_unstable_by_key(|&i| self.leaves[i]);
        let mut rows = Vec::with_capacity(self.rows.len());
        for &i in &order {
            rows.extend_from_slice(&self.rows[i * self.stride..(i + 1) * self.stride]);
        }
        GradientStore { stride: self.stride, leaves: order.iter().map(|&i| self.leaves[i]).collect(), rows }
    }
}

/// Per-leaf gradients in payload layout. Leaves absent from the store have
/// zero gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientStore {
    stride: usize,
    leaves: Vec<u32>,
    rows: Vec<f64>,
}

impl GradientStore {
    pub fn touched_leaves(&self) -> &[u32] {
        &self.leaves
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn get(&self, leaf: u32) -> Option<&[f64]> {
        self.leaves.binary_search(&leaf).ok().map(|i| &self.rows[i * self.stride..(i + 1) * self.stride])
    }

    /// Gradient of one payload entry (zero if the leaf was untouched).
    pub fn coefficient(&self, leaf: u32, index: usize) -> f64 {
        self.get(leaf).map_or(0.0, |r| r[index])
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &[f64])> {
        self.leaves.iter().copied().zip(self.rows.chunks_exact(self.stride.max(1)))
    }

    pub fn is_finite(&self) -> bool {
        self.rows.iter().all(|v| v.is_finite())
    }
}

struct Hit {
    leaf: u32,
    delta: f64,
    y: f64,
    trans: f64,
    decay: f64,
    color: [f64; 3],
}

/// Composited colour of a training ray, accumulated in double precision.
pub fn forward_ray<S: Coefficient>(fpo: &FourierPlenOctree<S>, ray: &Ray, t: usize, params: &RenderParams) -> [f64; 3] {
    crate::render::render_pixel(fpo, ray, t, params).rgb
}

/// Adds the ray's gradient into `acc` and returns its loss and prediction.
pub fn backward_ray<S: Coefficient>(
    fpo: &FourierPlenOctree<S>,
    sample: &TrainRay,
    ray_id: usize,
    params: &RenderParams,
    acc: &mut GradAccumulator,
) -> Result<(f64, [f64; 3])> {
    let cfg = *fpo.config();
    let n_sh = fpo.sh_count() * 3;
    let t = sample.t;
    let dir = sample.ray.direction;
    let mut hits: Vec<Hit> = Vec::new();
    let mut rgb = [0.0f64; 3];
    let mut trans = 1.0f64;
    let mut z = [0.0f64; 27];
    fpo.structure().traverse_with(&fpo.bounds(t), &sample.ray, |seg| {
        let y = fpo.sigma_raw(seg.leaf, t);
        let sigma = encoding::decode_value(y, cfg.use_log);
        if sigma <= 0.0 {
            return ControlFlow::Continue(());
        }
        let delta = seg.length();
        let decay = math::exp(-sigma * delta);
        fpo.radiance(seg.leaf, t, &mut z);
        let color = sh::eval_color(&z[..n_sh], dir);
        let w = trans * (1.0 - decay);
        for ch in 0..3 {
            rgb[ch] += w * color[ch];
        }
        hits.push(Hit { leaf: seg.leaf, delta, y, trans, decay, color });
        trans *= decay;
        if trans < params.transmittance_cutoff {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    });
    for ch in 0..3 {
        rgb[ch] += trans * params.background[ch];
    }
    let loss = sq_err(&rgb, &sample.target);
    if !loss.is_finite() {
        let leaf = hits.last().map_or(u32::MAX, |h| h.leaf);
        return Err(Error::Numerical { leaf, ray: ray_id, what: "loss" });
    }
    let g = [2.0 * (rgb[0] - sample.target[0]), 2.0 * (rgb[1] - sample.target[1]), 2.0 * (rgb[2] - sample.target[2])];

    let k_sigma = cfg.k_sigma;
    let basis = sh::sh_basis(dir);
    let mut behind = [trans * params.background[0], trans * params.background[1], trans * params.background[2]];
    for hit in hits.iter().rev() {
        let after = hit.trans * hit.decay;
        let w = hit.trans - after;
        let mut d_sigma = 0.0;
        for ch in 0..3 {
            d_sigma += g[ch] * (after * hit.color[ch] - behind[ch]);
        }
        d_sigma *= hit.delta;
        let d_y = d_sigma * encoding::decode_derivative(hit.y, cfg.use_log);
        let mut d_u = [0.0; 3];
        for ch in 0..3 {
            let c = hit.color[ch];
            d_u[ch] = g[ch] * w * c * (1.0 - c);
            behind[ch] += w * c;
        }
        if !(d_y.is_finite() && d_u.iter().all(|v| v.is_finite())) {
            return Err(Error::Numerical { leaf: hit.leaf, ray: ray_id, what: "gradient" });
        }
        let row = acc.row_mut(hit.leaf);
        let sigma_table = fpo.sigma_table();
        for (k, r) in row[..k_sigma].iter_mut().enumerate() {
            *r += d_y * sigma_table.synthesis(k, t);
        }
        let sh_table = fpo.sh_table();
        let sh_rows = &mut row[k_sigma..];
        for k in 0..cfg.k_z {
            let b = sh_table.synthesis(k, t);
            let chunk = &mut sh_rows[k * n_sh..(k + 1) * n_sh];
            for (i, y_basis) in basis.iter().enumerate().take(n_sh / 3) {
                let f = b * y_basis;
                chunk[i * 3] += d_u[0] * f;
                chunk[i * 3 + 1] += d_u[1] * f;
                chunk[i * 3 + 2] += d_u[2] * f;
            }
        }
    }
    Ok((loss, rgb))
}

/// Loss and gradient of a batch, single-threaded, rays in order.
pub fn backward_batch<S: Coefficient>(
    fpo: &FourierPlenOctree<S>,
    batch: &[TrainRay],
    params: &RenderParams,
) -> Result<(f64, GradientStore)> {
    let mut acc = GradAccumulator::for_fpo(fpo);
    let mut total = 0.0;
    for (i, sample) in batch.iter().enumerate() {
        total += backward_ray(fpo, sample, i, params, &mut acc)?.0;
    }
    Ok((total, acc.to_store()))
}

/// Summed loss of a batch without gradients.
pub fn batch_loss<S: Coefficient>(fpo: &FourierPlenOctree<S>, batch: &[TrainRay], params: &RenderParams) -> f64 {
    batch.iter().map(|s| sq_err(&forward_ray(fpo, &s.ray, s.t, params), &s.target)).sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr_sigma: f64,
    pub lr_sh: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr_sigma: 1e-2, lr_sh: 1e-2, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam over the FPO payload. Only rows present in a step's gradient store
/// are updated; moments of other leaves stay untouched until they are hit.
#[derive(Clone, Debug)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f32>,
    v: Vec<f32>,
    steps: u64,
}

impl Adam {
    pub fn new<S: Coefficient>(cfg: AdamConfig, fpo: &FourierPlenOctree<S>) -> Self {
        let n = fpo.payload().len();
        Adam { cfg, m: vec![0.0; n], v: vec![0.0; n], steps: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step<S: Coefficient>(&mut self, fpo: &mut FourierPlenOctree<S>, grads: &GradientStore) {
        self.steps += 1;
        let c = self.cfg;
        let bias1 = 1.0 - libm::pow(c.beta1, self.steps as f64);
        let bias2 = 1.0 - libm::pow(c.beta2, self.steps as f64);
        let stride = fpo.stride();
        let k_sigma = fpo.config().k_sigma;
        let payload = fpo.payload_mut();
        for (leaf, row) in grads.iter() {
            let base = leaf as usize * stride;
            for (j, &g) in row.iter().enumerate() {
                let i = base + j;
                let m = c.beta1 * self.m[i] as f64 + (1.0 - c.beta1) * g;
                let v = c.beta2 * self.v[i] as f64 + (1.0 - c.beta2) * g * g;
                self.m[i] = m as f32;
                self.v[i] = v as f32;
                let lr = if j < k_sigma { c.lr_sigma } else { c.lr_sh };
                let update = lr * (m / bias1) / (math::sqrt(v / bias2) + c.eps);
                payload[i] = S::from_f64(payload[i].to_f64() - update);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::{Encoding, EncodingConfig};
    use crate::math::Vec3;
    use crate::octree::{Structure, VoxelCoord};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn loss_definition() {
        assert_eq!(loss(&[[0.2, 0.4, 0.1]], &[[0.2, 0.4, 0.1]]).unwrap(), 0.0);
        assert_eq!(loss(&[[1.0; 3]], &[[0.0; 3]]).unwrap(), 3.0);
        assert!(loss(&[[1.0; 3]], &[]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a: Vec<[f64; 3]> = (0..50).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
        let b: Vec<[f64; 3]> = (0..50).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
        let mut brute = 0.0;
        for i in 0..50 {
            for c in 0..3 {
                brute += (a[i][c] - b[i][c]) * (a[i][c] - b[i][c]);
            }
        }
        assert!((loss(&a, &b).unwrap() - brute).abs() < 1e-12);
    }

    fn random_fpo(rng: &mut ChaCha8Rng, encoding: Encoding, depth: u32, frames: usize) -> FourierPlenOctree<f64> {
        let side = 1u16 << depth;
        let mut codes: Vec<u64> = (0..(side as usize).pow(3) / 3)
            .map(|_| VoxelCoord::new(rng.gen_range(0..side), rng.gen_range(0..side), rng.gen_range(0..side)).morton())
            .collect();
        codes.sort_unstable();
        codes.dedup();
        let s = Structure::from_sorted_codes(depth, codes).unwrap();
        let cfg = EncodingConfig::new(encoding, 3, 2);
        let stride = cfg.k_sigma + cfg.k_z * 27;
        let mut payload = vec![0.0; s.leaf_count() * stride];
        for leaf in 0..s.leaf_count() {
            let p = &mut payload[leaf * stride..(leaf + 1) * stride];
            p[0] = if encoding.use_log() { rng.gen_range(0.2..1.5) } else { rng.gen_range(0.5..4.0) };
            for v in &mut p[1..3] {
                *v = rng.gen_range(-0.3..0.3);
            }
            for v in &mut p[3..] {
                *v = rng.gen_range(-0.8..0.8);
            }
        }
        FourierPlenOctree::from_parts(s, 1.0, vec![Vec3::ZERO; frames], cfg, 9, false, payload).unwrap()
    }

    fn random_rays(rng: &mut ChaCha8Rng, n: usize, frames: usize) -> Vec<TrainRay> {
        (0..n)
            .map(|_| {
                let o = Vec3::new(rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8), -3.0);
                let target = Vec3::new(rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8), 3.0);
                let ray = Ray::new(o, (target - o).normalized(), 0.0, 50.0).unwrap();
                TrainRay { ray, t: rng.gen_range(0..frames), target: [rng.gen(), rng.gen(), rng.gen()] }
            })
            .collect()
    }

    fn fd_params() -> RenderParams {
        RenderParams { transmittance_cutoff: 0.0, background: [0.3, 0.1, 0.7], count_color_evals: false }
    }

    #[test]
    fn finite_differences_all_encodings() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let params = fd_params();
        for enc in Encoding::ALL {
            let mut fpo = random_fpo(&mut rng, enc, 2, 4);
            let batch = random_rays(&mut rng, 12, 4);
            let (_, grads) = backward_batch(&fpo, &batch, &params).unwrap();
            let mut checked = 0;
            for &leaf in grads.touched_leaves() {
                for j in 0..fpo.stride() {
                    let idx = leaf as usize * fpo.stride() + j;
                    let orig = fpo.payload()[idx];
                    let h = 1e-4;
                    fpo.payload_mut()[idx] = orig + h;
                    let up = batch_loss(&fpo, &batch, &params);
                    fpo.payload_mut()[idx] = orig - h;
                    let down = batch_loss(&fpo, &batch, &params);
                    fpo.payload_mut()[idx] = orig;
                    let fd = (up - down) / (2.0 * h);
                    let an = grads.coefficient(leaf, j);
                    let scale = fd.abs().max(an.abs());
                    if scale > 1e-6 {
                        assert!((fd - an).abs() / scale < 1e-4, "{enc} leaf {leaf} coeff {j}: fd {fd} vs {an}");
                        checked += 1;
                    }
                }
            }
            assert!(checked > 50, "{enc}: only {checked} coefficients checked");
        }
    }

    #[test]
    fn single_leaf_closed_form() {
        // One leaf, K_sigma = 1: sigma = w0 and C = (1 - e^{-w0 d}) c.
        let s = Structure::from_sorted_codes(1, vec![VoxelCoord::new(1, 1, 0).morton()]).unwrap();
        let cfg = EncodingConfig::new(Encoding::None, 1, 1);
        let mut payload = vec![0.0; 1 + 27];
        payload[0] = 0.8;
        payload[1..4].copy_from_slice(&[1.1; 3]);
        let fpo = FourierPlenOctree::<f64>::from_parts(s, 1.0, vec![Vec3::ZERO], cfg, 9, false, payload).unwrap();
        let ray = Ray::new(Vec3::new(0.5, 0.5, -5.0), Vec3::new(0.0, 0.0, 1.0), 0.0, 50.0).unwrap();
        let gt = [0.1, 0.2, 0.3];
        let sample = TrainRay { ray, t: 0, target: gt };
        let params = RenderParams { transmittance_cutoff: 0.0, background: [0.0; 3], count_color_evals: false };
        let (_, grads) = backward_batch(&fpo, &[sample], &params).unwrap();
        let c = math::sigmoid(1.1 * 0.282_094_791_773_878_14);
        let delta = 1.0;
        let alpha = 1.0 - (-0.8f64 * delta).exp();
        let mut expected = 0.0;
        for ch in 0..3 {
            expected += 2.0 * (alpha * c - gt[ch]) * c * delta * (-0.8f64 * delta).exp();
        }
        assert!((grads.coefficient(0, 0) - expected).abs() < 1e-12);
    }

    #[test]
    fn missing_rays_give_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fpo = random_fpo(&mut rng, Encoding::LogComp, 2, 3);
        let ray = Ray::new(Vec3::new(5.0, 5.0, -3.0), Vec3::new(0.0, 0.0, 1.0), 0.0, 50.0).unwrap();
        let params = RenderParams { background: [1.0, 1.0, 1.0], ..fd_params() };
        let (l, grads) = backward_batch(&fpo, &[TrainRay { ray, t: 1, target: [0.5; 3] }], &params).unwrap();
        assert!((l - 0.75).abs() < 1e-12);
        assert!(grads.touched_leaves().is_empty());
    }

    #[test]
    fn locality_and_relu_deadness() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut fpo = random_fpo(&mut rng, Encoding::Log, 2, 3);
        let dead = 0u32;
        let k_sigma = fpo.config().k_sigma;
        for v in &mut fpo.payload_mut()[..k_sigma] {
            *v = 0.0;
        }
        fpo.payload_mut()[0] = -0.5;
        let batch = random_rays(&mut rng, 64, 3);
        let params = fd_params();
        let (_, grads) = backward_batch(&fpo, &batch, &params).unwrap();
        assert!(grads.get(dead).is_none());
        let hit: alloc::collections::BTreeSet<u32> = batch
            .iter()
            .flat_map(|s| fpo.structure().traverse(&fpo.bounds(s.t), &s.ray).into_iter().map(|seg| seg.leaf))
            .collect();
        for &leaf in grads.touched_leaves() {
            assert!(hit.contains(&leaf));
        }
    }

    #[test]
    fn small_step_descends() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let fpo = random_fpo(&mut rng, Encoding::LogComp, 2, 3);
        let batch = random_rays(&mut rng, 40, 3);
        let params = fd_params();
        let (base, grads) = backward_batch(&fpo, &batch, &params).unwrap();
        let mut lr = 1.0;
        let mut ok = false;
        for _ in 0..20 {
            let mut cand = fpo.clone();
            for (leaf, row) in grads.iter() {
                let s = leaf as usize * cand.stride();
                for (j, g) in row.iter().enumerate() {
                    cand.payload_mut()[s + j] -= lr * g;
                }
            }
            if batch_loss(&cand, &batch, &params) <= base {
                ok = true;
                break;
            }
            lr *= 0.5;
        }
        assert!(ok);
    }

    #[test]
    fn adam_zero_lr_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let fpo64 = random_fpo(&mut rng, Encoding::None, 2, 3);
        let mut fpo: FourierPlenOctree<f32> = fpo64.cast();
        let before = fpo.clone();
        let batch = random_rays(&mut rng, 30, 3);
        let cfg = AdamConfig { lr_sigma: 0.0, lr_sh: 0.0, ..Default::default() };
        let mut adam = Adam::new(cfg, &fpo);
        for _ in 0..3 {
            let (_, g) = backward_batch(&fpo, &batch, &fd_params()).unwrap();
            adam.step(&mut fpo, &g);
        }
        assert_eq!(fpo.payload(), before.payload());
        assert_eq!(adam.steps(), 3);
    }

    #[test]
    fn accumulator_merge_matches_single_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let fpo = random_fpo(&mut rng, Encoding::Comp, 2, 3);
        let batch = random_rays(&mut rng, 20, 3);
        let params = fd_params();
        let (_, whole) = backward_batch(&fpo, &batch, &params).unwrap();
        let mut total = GradAccumulator::for_fpo(&fpo);
        for chunk in batch.chunks(7) {
            let mut part = GradAccumulator::for_fpo(&fpo);
            for (i, s) in chunk.iter().enumerate() {
                backward_ray(&fpo, s, i, &params, &mut part).unwrap();
            }
            total.merge(&part);
        }
        let merged = total.to_store();
        assert_eq!(merged.touched_leaves(), whole.touched_leaves());
        for (leaf, row) in whole.iter() {
            for (a, b) in row.iter().zip(merged.get(leaf).unwrap()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
