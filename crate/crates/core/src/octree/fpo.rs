use alloc::vec;
use alloc::vec::Vec;

use crate::encoding::{self, EncodingConfig};
use crate::error::{invalid, Error, Result};
use crate::math::Vec3;
use crate::sh;
use crate::signal::{BasisTable, Coefficient, TimeSignal};

use super::{unify_structures, Bounds, FramePlenOctree, Structure};

/// Unified sparse octree whose leaves hold truncated Fourier coefficients of
/// density (`K_sigma` values) and SH radiance (`K_z x Z x 3` values).
///
/// Leaf payload layout: `[sigma_0..sigma_{Ks-1}, sh(k=0)[Z*3], .., sh(k=Kz-1)[Z*3]]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierPlenOctree<S: Coefficient = f32> {
    structure: Structure,
    half_extent: f64,
    centers: Vec<Vec3>,
    cfg: EncodingConfig,
    sh_count: usize,
    padded: bool,
    payload: Vec<S>,
    sigma_table: BasisTable,
    sh_table: BasisTable,
}

impl<S: Coefficient> FourierPlenOctree<S> {
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        structure: Structure,
        half_extent: f64,
        centers: Vec<Vec3>,
        cfg: EncodingConfig,
        sh_count: usize,
        padded: bool,
        payload: Vec<S>,
    ) -> Result<Self> {
        let frames = centers.len();
        if frames == 0 {
            return Err(invalid("FPO needs at least one frame"));
        }
        cfg.validate(frames)?;
        if !sh::is_valid_count(sh_count) {
            return Err(invalid(alloc::format!("unsupported SH count {sh_count}")));
        }
        if !(half_extent > 0.0 && half_extent.is_finite()) || centers.iter().any(|c| !c.is_finite()) {
            return Err(invalid("bounds must be finite with positive extent"));
        }
        if padded && frames < 3 {
            return Err(invalid("padded FPO needs at least three frames"));
        }
        let stride = cfg.k_sigma + cfg.k_z * sh_count * 3;
        if payload.len() != structure.leaf_count() * stride {
            return Err(invalid(alloc::format!(
                "payload has {} values, expected {} leaves x {stride}",
                payload.len(),
                structure.leaf_count()
            )));
        }
        if payload.iter().any(|v| !v.to_f64().is_finite()) {
            return Err(Error::Data("non-finite coefficient in payload".into()));
        }
        let sigma_table = BasisTable::new(cfg.k_sigma, frames)?;
        let sh_table = BasisTable::new(cfg.k_z, frames)?;
        Ok(FourierPlenOctree { structure, half_extent, centers, cfg, sh_count, padded, payload, sigma_table, sh_table })
    }

    pub fn structure(&self) -> &Structure {
        &self.structure
    }

    pub fn frames(&self) -> usize {
        self.centers.len()
    }

    pub fn config(&self) -> &EncodingConfig {
        &self.cfg
    }

    pub fn sh_count(&self) -> usize {
        self.sh_count
    }

    pub fn half_extent(&self) -> f64 {
        self.half_extent
    }

    pub fn centers(&self) -> &[Vec3] {
        &self.centers
    }

    /// Whether frames 0 and T-1 are duplicated padding.
    pub fn is_padded(&self) -> bool {
        self.padded
    }

    /// Number of non-padding frames.
    pub fn content_frames(&self) -> usize {
        if self.padded { self.frames() - 2 } else { self.frames() }
    }

    /// Internal frame index of content frame `t`.
    pub fn frame_index(&self, content_t: usize) -> usize {
        content_t + self.padded as usize
    }

    pub fn bounds(&self, t: usize) -> Bounds {
        Bounds::new(self.centers[t], self.half_extent)
    }

    pub fn leaf_count(&self) -> usize {
        self.structure.leaf_count()
    }

    pub fn stride(&self) -> usize {
        self.cfg.k_sigma + self.cfg.k_z * self.sh_count * 3
    }

    pub fn payload(&self) -> &[S] {
        &self.payload
    }

    pub fn payload_mut(&mut self) -> &mut [S] {
        &mut self.payload
    }

    pub fn leaf_payload(&self, leaf: u32) -> &[S] {
        let s = self.stride();
        &self.payload[leaf as usize * s..(leaf as usize + 1) * s]
    }

    pub fn sigma_table(&self) -> &BasisTable {
        &self.sigma_table
    }

    pub fn sh_table(&self) -> &BasisTable {
        &self.sh_table
    }

    /// Raw IDFT value of the density channel, before log decoding and ReLU.
    #[inline]
    pub fn sigma_raw(&self, leaf: u32, t: usize) -> f64 {
        let p = self.leaf_payload(leaf);
        self.sigma_table.reconstruct(&p[..self.cfg.k_sigma], t)
    }

    #[inline]
    pub fn density(&self, leaf: u32, t: usize) -> f64 {
        encoding::decode_value(self.sigma_raw(leaf, t), self.cfg.use_log)
    }

    /// Writes the `Z * 3` SH coefficients at frame `t`.
    pub fn radiance(&self, leaf: u32, t: usize, out: &mut [f64]) {
        let n = self.sh_count * 3;
        let p = &self.leaf_payload(leaf)[self.cfg.k_sigma..];
        out[..n].iter_mut().for_each(|v| *v = 0.0);
        for k in 0..self.cfg.k_z {
            let b = self.sh_table.synthesis(k, t);
            for (o, w) in out[..n].iter_mut().zip(&p[k * n..(k + 1) * n]) {
                *o += w.to_f64() * b;
            }
        }
    }

    /// Converts the coefficient storage type.
    pub fn cast<T: Coefficient>(&self) -> FourierPlenOctree<T> {
        FourierPlenOctree {
            structure: self.structure.clone(),
            half_extent: self.half_extent,
            centers: self.centers.clone(),
            cfg: self.cfg,
            sh_count: self.sh_count,
            padded: self.padded,
            payload: self.payload.iter().map(|v| T::from_f64(v.to_f64())).collect(),
            sigma_table: self.sigma_table.clone(),
            sh_table: self.sh_table.clone(),
        }
    }
}

/// Unifies the frame trees and compresses every leaf's time series.
/// Frames lacking a leaf contribute zero density and zero SH coefficients.
pub fn assemble_fpo<S: Coefficient>(trees: &[FramePlenOctree], cfg: &EncodingConfig) -> Result<FourierPlenOctree<S>> {
    assemble(trees, cfg, false)
}

/// Like [`assemble_fpo`] after duplicating the first and last frame.
pub fn assemble_padded<S: Coefficient>(trees: &[FramePlenOctree], cfg: &EncodingConfig) -> Result<FourierPlenOctree<S>> {
    let padded = super::pad_endpoints(trees);
    assemble(&padded, cfg, true)
}

fn assemble<S: Coefficient>(trees: &[FramePlenOctree], cfg: &EncodingConfig, padded: bool) -> Result<FourierPlenOctree<S>> {
    let structure = unify_structures(trees)?;
    let frames = trees.len();
    cfg.validate(frames)?;
    let sh_count = trees[0].sh_count;
    let n_sh = sh_count * 3;
    let sigma_table = BasisTable::new(cfg.k_sigma, frames)?;
    let sh_table = BasisTable::new(cfg.k_z, frames)?;
    let stride = cfg.k_sigma + cfg.k_z * n_sh;
    let mut payload = vec![S::default(); structure.leaf_count() * stride];

    let mut sigma_seq = vec![0.0; frames];
    let mut sh_seq = vec![0.0; frames * n_sh];
    let mut channel = vec![0.0; frames];
    let mut sigma_out = vec![0.0; cfg.k_sigma];
    let mut sh_out = vec![0.0; cfg.k_z];
    for (leaf, &code) in structure.leaf_codes().iter().enumerate() {
        sigma_seq.iter_mut().for_each(|v| *v = 0.0);
        sh_seq.iter_mut().for_each(|v| *v = 0.0);
        for (t, tree) in trees.iter().enumerate() {
            if let Ok(i) = tree.structure.leaf_codes().binary_search(&code) {
                sigma_seq[t] = tree.sigma[i];
                sh_seq[t * n_sh..(t + 1) * n_sh].copy_from_slice(tree.leaf_sh(i));
            }
        }
        let encoded = encoding::encode_density_values(&TimeSignal::new(sigma_seq.clone())?, cfg)?;
        sigma_table.compress_into(encoded.values(), &mut sigma_out);
        let dst = &mut payload[leaf * stride..(leaf + 1) * stride];
        for (d, v) in dst[..cfg.k_sigma].iter_mut().zip(&sigma_out) {
            *d = S::from_f64(*v);
        }
        for j in 0..n_sh {
            for t in 0..frames {
                channel[t] = sh_seq[t * n_sh + j];
            }
            sh_table.compress_into(&channel, &mut sh_out);
            for (k, v) in sh_out.iter().enumerate() {
                dst[cfg.k_sigma + k * n_sh + j] = S::from_f64(*v);
            }
        }
    }
    let centers = trees.iter().map(|t| t.bounds.center).collect();
    FourierPlenOctree::from_parts(structure, trees[0].bounds.half_extent, centers, *cfg, sh_count, padded, payload)
}
