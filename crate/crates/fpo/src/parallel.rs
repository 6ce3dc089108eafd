//! Multi-threaded image rendering.

use std::time::Instant;

use fpo_core::render::{render_rows, Baseline, RadianceSource, RenderStats};
use fpo_core::FourierPlenOctree;
use fpo_core::{Camera, Image, RenderParams};
use rayon::prelude::*;
use serde::Serialize;

const ROWS_PER_TASK: usize = 4;

/// Renders the image row-parallel. Output and colour-evaluation count are
/// identical to the single-threaded renderer.
pub fn render_image<R: RadianceSource + Sync + ?Sized>(source: &R, camera: &Camera, t: usize, params: &RenderParams) -> (Image, RenderStats) {
    let mut img = Image::filled(camera.width, camera.height, [0.0; 3]);
    let w = camera.width as usize;
    let evals: u64 = img
        .pixels
        .par_chunks_mut(w * ROWS_PER_TASK)
        .enumerate()
        .map(|(i, chunk)| render_rows(source, camera, t, params, (i * ROWS_PER_TASK) as u32, chunk))
        .sum();
    (img, RenderStats { color_evals: evals })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TimedStats {
    pub time_step: usize,
    pub wall_ms: f64,
    pub color_evals: u64,
}

pub fn render_timed<R: RadianceSource + Sync + ?Sized>(source: &R, camera: &Camera, t: usize, params: &RenderParams) -> (Image, TimedStats) {
    let start = Instant::now();
    let (img, stats) = render_image(source, camera, t, params);
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    (img, TimedStats { time_step: t, wall_ms, color_evals: stats.color_evals })
}

/// Which decode path a render uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Honour the encoding flags stored with the tree.
    #[default]
    AsLoaded,
    /// Ignore the encodings, as if the coefficients were plain density.
    ForceBaseline,
}

impl std::str::FromStr for Variant {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> anyhow::Result<Self> {
        match s {
            "as-loaded" => Ok(Variant::AsLoaded),
            "force-baseline" => Ok(Variant::ForceBaseline),
            _ => anyhow::bail!("unknown variant '{s}' (expected as-loaded or force-baseline)"),
        }
    }
}

pub fn render_variant(fpo: &FourierPlenOctree, variant: Variant, camera: &Camera, t: usize, params: &RenderParams) -> (Image, TimedStats) {
    match variant {
        Variant::AsLoaded => render_timed(fpo, camera, t, params),
        Variant::ForceBaseline => render_timed(&Baseline(fpo), camera, t, params),
    }
}
