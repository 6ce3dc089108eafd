//! Frame-tree construction, compression and the inputs of the analysis sweeps.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fpo_core::octree::{assemble_fpo, assemble_padded, build_frame_octree, FourierPlenOctree, FramePlenOctree};
use fpo_core::scene::SceneSpec;
use fpo_core::{EncodingConfig, TimeSignal};
use rand::Rng;
use rayon::prelude::*;

use crate::format;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BuildConfig {
    pub depth: u32,
    pub sh_count: usize,
    /// Stratified density samples per voxel axis.
    pub supersample: usize,
    pub threshold: f64,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig { depth: 6, sh_count: 9, supersample: 2, threshold: fpo_core::octree::DEFAULT_OCCUPANCY_THRESHOLD }
    }
}

/// One static tree per scene frame.
pub fn build_frames(scene: &SceneSpec, cfg: &BuildConfig) -> Result<Vec<FramePlenOctree>> {
    scene.validate()?;
    let b = scene.bounds;
    let voxel = b.voxel_size(cfg.depth);
    (0..scene.frames)
        .into_par_iter()
        .map(|t| Ok(build_frame_octree(&scene.frame(t, voxel, cfg.supersample), b, cfg.depth, cfg.threshold, cfg.sh_count)?))
        .collect()
}

pub fn frame_path(dir: &Path, t: usize) -> PathBuf {
    dir.join(format!("frame_{t:04}.fpo"))
}

pub fn save_frames(dir: &Path, trees: &[FramePlenOctree]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (t, tree) in trees.iter().enumerate() {
        format::save_frame(&frame_path(dir, t), tree).with_context(|| format!("writing frame {t}"))?;
    }
    Ok(())
}

/// Loads `frame_0000.fpo`, `frame_0001.fpo`, ... until the first gap.
pub fn load_frames(dir: &Path) -> Result<Vec<FramePlenOctree>> {
    let mut trees = Vec::new();
    loop {
        let p = frame_path(dir, trees.len());
        if !p.exists() {
            break;
        }
        trees.push(format::load_frame(&p).with_context(|| format!("loading {}", p.display()))?);
    }
    if trees.is_empty() {
        bail!("no frame trees found in {}", dir.display());
    }
    Ok(trees)
}

pub fn compress(trees: &[FramePlenOctree], cfg: &EncodingConfig, pad: bool) -> Result<FourierPlenOctree> {
    Ok(if pad { assemble_padded(trees, cfg)? } else { assemble_fpo(trees, cfg)? })
}

/// The `K = ceil(T/2) * 2 - 1` rule for short sequences, capped at `max`.
pub fn scaled_components(frames: usize, max: usize) -> usize {
    (frames.div_ceil(2) * 2 - 1).min(max)
}

/// Density time series of the leaf with the largest summed density.
pub fn densest_leaf_series(trees: &[FramePlenOctree]) -> Result<TimeSignal> {
    let union = fpo_core::octree::unify_structures(trees)?;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for &code in union.leaf_codes() {
        let series: Vec<f64> = trees
            .iter()
            .map(|tree| tree.structure.leaf_codes().binary_search(&code).map_or(0.0, |i| tree.sigma[i]))
            .collect();
        let total: f64 = series.iter().sum();
        if best.as_ref().is_none_or(|(b, _)| total > *b) {
            best = Some((total, series));
        }
    }
    match best {
        Some((_, s)) => Ok(TimeSignal::new(s)?),
        None => bail!("frame trees have no leaves"),
    }
}

/// Nonnegative series with a low background (half of the samples zero) and
/// one to eight spikes of height 50 to 500.
pub fn spiky_signal<R: Rng>(rng: &mut R, frames: usize) -> TimeSignal {
    let mut v: Vec<f64> = (0..frames).map(|_| if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0.0..5.0) }).collect();
    for _ in 0..rng.gen_range(1..=8) {
        let i = rng.gen_range(0..frames);
        v[i] = rng.gen_range(50.0..500.0);
    }
    TimeSignal::new(v).expect("finite samples")
}

/// Whitespace- or comma-separated samples.
pub fn read_signal(path: &Path) -> Result<TimeSignal> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let values = text
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().with_context(|| format!("bad sample '{s}'")))
        .collect::<Result<Vec<_>>>()?;
    Ok(TimeSignal::new(values)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use fpo_core::scene::standard_scene;

    #[test]
    fn frames_roundtrip_through_files() {
        let scene = standard_scene("pulse", 4).unwrap();
        let cfg = BuildConfig { depth: 3, sh_count: 1, ..Default::default() };
        let trees = build_frames(&scene, &cfg).unwrap();
        assert_eq!(trees.len(), 4);
        assert_eq!(trees[3].leaf_count(), 0);
        let dir = tempfile::tempdir().unwrap();
        save_frames(dir.path(), &trees).unwrap();
        let back = load_frames(dir.path()).unwrap();
        for (a, b) in trees.iter().zip(&back) {
            assert_eq!(a.structure, b.structure);
            for (x, y) in a.sigma.iter().zip(&b.sigma) {
                assert_eq!(*x as f32 as f64, *y);
            }
        }
    }

    #[test]
    fn scaled_rule() {
        assert_eq!(scaled_components(20, 31), 19);
        assert_eq!(scaled_components(21, 31), 21);
        assert_eq!(scaled_components(60, 31), 31);
    }
}
