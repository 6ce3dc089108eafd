//! Per-frame image quality of a tree against held-out views.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use anyhow::{bail, Result};
use fpo_core::metrics::MetricReport;
use fpo_core::{FourierPlenOctree, RenderParams};

use crate::dataset::View;
use crate::parallel::{render_variant, Variant};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameMetrics {
    pub frame: usize,
    pub psnr: f64,
    pub ssim: f64,
    /// Colour evaluations summed over the frame's views.
    pub color_evals: u64,
    pub views: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub frames: Vec<FrameMetrics>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    /// Mean colour evaluations per rendered view.
    pub color_evals_per_view: f64,
}

pub const CSV_HEADER: &str = "frame,psnr,ssim,color_evals";

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for f in &self.frames {
            let _ = writeln!(s, "{},{:.6},{:.6},{}", f.frame, f.psnr, f.ssim, f.color_evals);
        }
        let _ = writeln!(s, "mean,{:.6},{:.6},{:.1}", self.mean_psnr, self.mean_ssim, self.color_evals_per_view);
        s
    }
}

/// Renders every view at its content frame and averages PSNR and SSIM per
/// frame; the overall means are taken over all views.
pub fn evaluate(fpo: &FourierPlenOctree, views: &[View], variant: Variant, params: &RenderParams) -> Result<EvalReport> {
    if views.is_empty() {
        bail!("no views to evaluate");
    }
    let mut per_frame: BTreeMap<usize, (Vec<MetricReport>, u64)> = BTreeMap::new();
    let mut all = Vec::with_capacity(views.len());
    let mut evals = 0u64;
    for v in views {
        if v.t >= fpo.content_frames() {
            bail!("view at frame {} but the tree covers {} frames", v.t, fpo.content_frames());
        }
        let (img, stats) = render_variant(fpo, variant, &v.camera, fpo.frame_index(v.t), params);
        let m = MetricReport::compare(&img, &v.image)?;
        let e = per_frame.entry(v.t).or_default();
        e.0.push(m);
        e.1 += stats.color_evals;
        evals += stats.color_evals;
        all.push(m);
    }
    let frames = per_frame
        .into_iter()
        .map(|(frame, (ms, ev))| {
            let mean = MetricReport::mean(&ms).expect("non-empty");
            FrameMetrics { frame, psnr: mean.psnr, ssim: mean.ssim, color_evals: ev, views: ms.len() }
        })
        .collect();
    let mean = MetricReport::mean(&all).expect("non-empty");
    Ok(EvalReport { frames, mean_psnr: mean.psnr, mean_ssim: mean.ssim, color_evals_per_view: evals as f64 / views.len() as f64 })
}
