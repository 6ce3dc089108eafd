//! Fine-tuning of all Fourier coefficients against posed images.

use std::fmt::Write as _;
use std::time::Instant;

use anyhow::{bail, Result};
use fpo_core::grad::{backward_ray, forward_ray, Adam, AdamConfig, GradAccumulator, TrainRay};
use fpo_core::{Error, FourierPlenOctree, RenderParams};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::View;
use fpo_core::metrics;

/// Rays handled by one task; gradients are merged in task order.
const CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Abort when the training loss exceeds this multiple of the initial one.
    pub divergence_factor: f64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig { epochs: 10, batch_size: 4096, adam: AdamConfig::default(), seed: 0, divergence_factor: 10.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Summed squared error over every training ray after the epoch.
    pub train_loss: f64,
    /// Mean PSNR over the validation views.
    pub val_psnr: f64,
    pub wall_s: f64,
}

pub const CSV_HEADER: &str = "epoch,train_loss,val_psnr,wall_s";

pub fn csv_row(r: &EpochRecord) -> String {
    format!("{},{:.8e},{:.6},{:.3}", r.epoch, r.train_loss, r.val_psnr, r.wall_s)
}

pub fn to_csv(records: &[EpochRecord]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(s, "{}", csv_row(r));
    }
    s
}

/// Every pixel of a set of equally sized views, addressed by a flat index.
pub struct RaySet<'a> {
    views: &'a [View],
    frames: Vec<usize>,
    pixels: usize,
}

impl<'a> RaySet<'a> {
    /// Maps each view's content frame to the FPO's internal frame, so the
    /// duplicated endpoints of a padded tree never receive rays.
    pub fn new(fpo: &FourierPlenOctree, views: &'a [View]) -> Result<Self> {
        let Some(first) = views.first() else { bail!("no training views") };
        let pixels = (first.camera.width * first.camera.height) as usize;
        let mut frames = Vec::with_capacity(views.len());
        for v in views {
            if (v.camera.width * v.camera.height) as usize != pixels {
                bail!("training views must share one resolution");
            }
            if v.t >= fpo.content_frames() {
                bail!("view at frame {} but the tree covers {} frames", v.t, fpo.content_frames());
            }
            frames.push(fpo.frame_index(v.t));
        }
        Ok(RaySet { views, frames, pixels })
    }

    pub fn len(&self) -> usize {
        self.views.len() * self.pixels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ray(&self, i: usize) -> TrainRay {
        let v = &self.views[i / self.pixels];
        let p = (i % self.pixels) as u32;
        let (x, y) = (p % v.camera.width, p / v.camera.width);
        let c = v.image.get(x, y);
        TrainRay { ray: v.camera.generate_ray(x, y), t: self.frames[i / self.pixels], target: [c[0] as f64, c[1] as f64, c[2] as f64] }
    }
}

/// Summed squared error over all rays, reduced in a fixed order.
pub fn total_loss(fpo: &FourierPlenOctree, rays: &RaySet, params: &RenderParams) -> f64 {
    let n = rays.len();
    let parts: Vec<f64> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            (c * CHUNK..((c + 1) * CHUNK).min(n))
                .map(|i| {
                    let r = rays.ray(i);
                    let p = forward_ray(fpo, &r.ray, r.t, params);
                    (0..3).map(|k| (p[k] - r.target[k]).powi(2)).sum::<f64>()
                })
                .sum()
        })
        .collect();
    parts.iter().sum()
}

/// Mean PSNR of the tree rendered at the given views.
pub fn validation_psnr(fpo: &FourierPlenOctree, views: &[View], params: &RenderParams) -> Result<f64> {
    if views.is_empty() {
        return Ok(f64::NAN);
    }
    let mut sum = 0.0;
    for v in views {
        let (img, _) = crate::parallel::render_image(fpo, &v.camera, fpo.frame_index(v.t), params);
        sum += metrics::psnr(&img, &v.image)?;
    }
    Ok(sum / views.len() as f64)
}

/// Runs `cfg.epochs` epochs of Adam over shuffled ray batches. The returned
/// records start with epoch 0, the state before any update.
pub fn finetune(
    fpo: &mut FourierPlenOctree,
    train: &[View],
    val: &[View],
    cfg: &FinetuneConfig,
    params: &RenderParams,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<Vec<EpochRecord>> {
    if cfg.batch_size == 0 {
        bail!("batch size must be positive");
    }
    let start = Instant::now();
    let rays = RaySet::new(fpo, train)?;
    let initial = total_loss(fpo, &rays, params);
    let mut records = vec![EpochRecord { epoch: 0, train_loss: initial, val_psnr: validation_psnr(fpo, val, params)?, wall_s: start.elapsed().as_secs_f64() }];
    on_epoch(&records[0]);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cfg.adam, fpo);
    let mut order: Vec<u32> = (0..rays.len() as u32).collect();
    let mut acc = GradAccumulator::for_fpo(fpo);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let snapshot: &FourierPlenOctree = fpo;
            let parts: Vec<fpo_core::Result<GradAccumulator>> = batch
                .par_chunks(CHUNK)
                .map(|chunk| {
                    let mut local = GradAccumulator::for_fpo(snapshot);
                    for &i in chunk {
                        backward_ray(snapshot, &rays.ray(i as usize), i as usize, params, &mut local)?;
                    }
                    Ok(local)
                })
                .collect();
            acc.clear();
            for part in parts {
                acc.merge(&part?);
            }
            let grads = acc.to_store();
            adam.step(fpo, &grads);
        }
        let loss = total_loss(fpo, &rays, params);
        let limit = cfg.divergence_factor * initial;
        if !loss.is_finite() || loss > limit {
            return Err(Error::Diverged { epoch, loss, limit }.into());
        }
        let rec = EpochRecord { epoch, train_loss: loss, val_psnr: validation_psnr(fpo, val, params)?, wall_s: start.elapsed().as_secs_f64() };
        on_epoch(&rec);
        records.push(rec);
    }
    Ok(records)
}
