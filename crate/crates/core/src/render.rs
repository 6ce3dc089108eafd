//! Emission-absorption rendering of octree leaves.
//!
//! Per stored leaf crossed by a ray, density is decoded and clipped at zero,
//! radiance is reconstructed, evaluated in the ray direction and passed
//! through a sigmoid, and the segment is composited front to back. Leaves
//! with zero density are skipped without touching their colour.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::ControlFlow;

use crate::encoding;
use crate::error::{invalid, Result};
use crate::math::{self, Rigid, Vec3};
use crate::octree::{Bounds, FourierPlenOctree, FramePlenOctree, Structure};
use crate::sh;
use crate::signal::Coefficient;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit length.
    pub direction: Vec3,
    pub near: f64,
    pub far: f64,
}

impl Ray {
    pub fn new(origin: Vec3, direction: Vec3, near: f64, far: f64) -> Result<Self> {
        if (direction.norm() - 1.0).abs() > 1e-6 {
            return Err(invalid("ray direction must be normalized"));
        }
        if !(near >= 0.0 && near < far) {
            return Err(invalid("ray needs 0 <= near < far"));
        }
        Ok(Ray { origin, direction, near, far })
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// Pinhole camera, x right / y down / z forward in camera space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera {
    pub world_from_camera: Rigid,
    pub focal: f64,
    pub width: u32,
    pub height: u32,
    pub cx: f64,
    pub cy: f64,
    pub near: f64,
    pub far: f64,
}

impl Camera {
    pub const DEFAULT_NEAR: f64 = 0.05;
    pub const DEFAULT_FAR: f64 = 100.0;

    /// Camera with the principal point at the image centre.
    pub fn new(world_from_camera: Rigid, focal: f64, width: u32, height: u32) -> Result<Self> {
        if !(focal > 0.0) || width == 0 || height == 0 {
            return Err(invalid("camera needs positive focal length and size"));
        }
        Ok(Camera {
            world_from_camera,
            focal,
            width,
            height,
            cx: width as f64 * 0.5,
            cy: height as f64 * 0.5,
            near: Self::DEFAULT_NEAR,
            far: Self::DEFAULT_FAR,
        })
    }

    /// Ray through the centre of pixel `(px, py)`.
    pub fn generate_ray(&self, px: u32, py: u32) -> Ray {
        self.ray_through(px as f64 + 0.5, py as f64 + 0.5)
    }

    pub fn ray_through(&self, u: f64, v: f64) -> Ray {
        let local = Vec3::new((u - self.cx) / self.focal, (v - self.cy) / self.focal, 1.0);
        let dir = self.world_from_camera.rotate(local).normalized();
        Ray { origin: self.world_from_camera.translation, direction: dir, near: self.near, far: self.far }
    }

    /// Image-plane coordinates of a world point in front of the camera.
    pub fn project(&self, p: Vec3) -> Option<(f64, f64)> {
        let local = self.world_from_camera.inverse().transform_point(p);
        (local.z > 0.0).then(|| (self.cx + self.focal * local.x / local.z, self.cy + self.focal * local.y / local.z))
    }
}

/// Linear RGB framebuffer, row-major from the top-left pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<[f32; 3]>,
}

impl Image {
    pub fn filled(width: u32, height: u32, rgb: [f32; 3]) -> Self {
        Image { width, height, pixels: vec![rgb; width as usize * height as usize] }
    }

    pub fn from_pixels(width: u32, height: u32, pixels: Vec<[f32; 3]>) -> Result<Self> {
        if pixels.len() != width as usize * height as usize {
            return Err(invalid("pixel count does not match image size"));
        }
        Ok(Image { width, height, pixels })
    }

    pub fn get(&self, x: u32, y: u32) -> [f32; 3] {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, rgb: [f32; 3]) {
        let w = self.width as usize;
        self.pixels[y as usize * w + x as usize] = rgb;
    }

    /// 8-bit RGB, rounded to nearest after clamping to [0, 1].
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .flat_map(|p| p.map(|c| math::round((c.clamp(0.0, 1.0) as f64) * 255.0) as u8))
            .collect()
    }

    pub fn from_rgb8(width: u32, height: u32, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != width as usize * height as usize * 3 {
            return Err(invalid("byte count does not match image size"));
        }
        let pixels = bytes.chunks_exact(3).map(|c| [c[0] as f32 / 255.0, c[1] as f32 / 255.0, c[2] as f32 / 255.0]).collect();
        Ok(Image { width, height, pixels })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderParams {
    /// Stop once the running transmittance falls below this value.
    pub transmittance_cutoff: f64,
    pub background: [f64; 3],
    pub count_color_evals: bool,
}

impl Default for RenderParams {
    fn default() -> Self {
        RenderParams { transmittance_cutoff: 1e-3, background: [0.0; 3], count_color_evals: true }
    }
}

/// Anything the renderer can pull decoded leaf values from.
pub trait RadianceSource {
    fn structure(&self) -> &Structure;
    fn frames(&self) -> usize;
    fn bounds(&self, t: usize) -> Bounds;
    fn sh_count(&self) -> usize;
    /// Decoded, non-negative density.
    fn density(&self, leaf: u32, t: usize) -> f64;
    /// `sh_count * 3` pre-sigmoid SH coefficients.
    fn radiance(&self, leaf: u32, t: usize, out: &mut [f64]);
}

impl<S: Coefficient> RadianceSource for FourierPlenOctree<S> {
    fn structure(&self) -> &Structure {
        FourierPlenOctree::structure(self)
    }
    fn frames(&self) -> usize {
        FourierPlenOctree::frames(self)
    }
    fn bounds(&self, t: usize) -> Bounds {
        FourierPlenOctree::bounds(self, t)
    }
    fn sh_count(&self) -> usize {
        FourierPlenOctree::sh_count(self)
    }
    #[inline]
    fn density(&self, leaf: u32, t: usize) -> f64 {
        FourierPlenOctree::density(self, leaf, t)
    }
    #[inline]
    fn radiance(&self, leaf: u32, t: usize, out: &mut [f64]) {
        FourierPlenOctree::radiance(self, leaf, t, out)
    }
}

/// Renders an FPO as if its header carried no encodings.
pub struct Baseline<'a, S: Coefficient>(pub &'a FourierPlenOctree<S>);

impl<S: Coefficient> RadianceSource for Baseline<'_, S> {
    fn structure(&self) -> &Structure {
        self.0.structure()
    }
    fn frames(&self) -> usize {
        self.0.frames()
    }
    fn bounds(&self, t: usize) -> Bounds {
        self.0.bounds(t)
    }
    fn sh_count(&self) -> usize {
        self.0.sh_count()
    }
    fn density(&self, leaf: u32, t: usize) -> f64 {
        encoding::decode_value(self.0.sigma_raw(leaf, t), false)
    }
    fn radiance(&self, leaf: u32, t: usize, out: &mut [f64]) {
        self.0.radiance(leaf, t, out)
    }
}

/// A static frame tree, the same at every time step.
impl RadianceSource for FramePlenOctree {
    fn structure(&self) -> &Structure {
        &self.structure
    }
    fn frames(&self) -> usize {
        1
    }
    fn bounds(&self, _t: usize) -> Bounds {
        self.bounds
    }
    fn sh_count(&self) -> usize {
        self.sh_count
    }
    fn density(&self, leaf: u32, _t: usize) -> f64 {
        self.sigma[leaf as usize]
    }
    fn radiance(&self, leaf: u32, _t: usize, out: &mut [f64]) {
        out[..self.sh_count * 3].copy_from_slice(self.leaf_sh(leaf as usize));
    }
}

/// Every leaf of one time step decoded up front.
pub struct DecodedFrame<'a, R: RadianceSource + ?Sized> {
    source: &'a R,
    t: usize,
    density: Vec<f64>,
    radiance: Vec<f64>,
}

impl<'a, R: RadianceSource + ?Sized> DecodedFrame<'a, R> {
    pub fn new(source: &'a R, t: usize) -> Self {
        let n = source.structure().leaf_count();
        let z = source.sh_count() * 3;
        let mut radiance = vec![0.0; n * z];
        let density = (0..n as u32)
            .map(|leaf| {
                let d = source.density(leaf, t);
                if d > 0.0 {
                    source.radiance(leaf, t, &mut radiance[leaf as usize * z..(leaf as usize + 1) * z]);
                }
                d
            })
            .collect();
        DecodedFrame { source, t, density, radiance }
    }

    pub fn time_step(&self) -> usize {
        self.t
    }
}

impl<R: RadianceSource + ?Sized> RadianceSource for DecodedFrame<'_, R> {
    fn structure(&self) -> &Structure {
        self.source.structure()
    }
    fn frames(&self) -> usize {
        self.source.frames()
    }
    fn bounds(&self, t: usize) -> Bounds {
        self.source.bounds(t)
    }
    fn sh_count(&self) -> usize {
        self.source.sh_count()
    }
    fn density(&self, leaf: u32, t: usize) -> f64 {
        debug_assert_eq!(t, self.t);
        self.density[leaf as usize]
    }
    fn radiance(&self, leaf: u32, _t: usize, out: &mut [f64]) {
        let z = self.source.sh_count() * 3;
        out[..z].copy_from_slice(&self.radiance[leaf as usize * z..(leaf as usize + 1) * z]);
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PixelResult {
    pub rgb: [f64; 3],
    /// Accumulated alpha `1 - T_final`.
    pub opacity: f64,
    pub color_evals: u32,
}

pub fn render_pixel<R: RadianceSource + ?Sized>(source: &R, ray: &Ray, t: usize, params: &RenderParams) -> PixelResult {
    let mut rgb = [0.0f64; 3];
    let mut transmittance = 1.0f64;
    let mut evals = 0u32;
    let mut z = [0.0f64; 27];
    let n_sh = source.sh_count() * 3;
    let bounds = source.bounds(t);
    source.structure().traverse_with(&bounds, ray, |seg| {
        let sigma = source.density(seg.leaf, t);
        if sigma <= 0.0 {
            return ControlFlow::Continue(());
        }
        let decay = math::exp(-sigma * seg.length());
        let weight = transmittance * (1.0 - decay);
        source.radiance(seg.leaf, t, &mut z);
        let c = sh::eval_color(&z[..n_sh], ray.direction);
        evals += 1;
        for ch in 0..3 {
            rgb[ch] += weight * c[ch];
        }
        let next = transmittance * decay;
        debug_assert!(next <= transmittance && next >= 0.0);
        transmittance = next;
        if transmittance < params.transmittance_cutoff {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    });
    for ch in 0..3 {
        rgb[ch] += transmittance * params.background[ch];
    }
    PixelResult { rgb, opacity: 1.0 - transmittance, color_evals: if params.count_color_evals { evals } else { 0 } }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RenderStats {
    pub color_evals: u64,
}

/// Renders rows `[y0, y0 + out.len() / width)` into `out`.
pub fn render_rows<R: RadianceSource + ?Sized>(
    source: &R,
    camera: &Camera,
    t: usize,
    params: &RenderParams,
    y0: u32,
    out: &mut [[f32; 3]],
) -> u64 {
    let w = camera.width as usize;
    let mut evals = 0u64;
    for (i, px) in out.iter_mut().enumerate() {
        let x = (i % w) as u32;
        let y = y0 + (i / w) as u32;
        let r = render_pixel(source, &camera.generate_ray(x, y), t, params);
        evals += r.color_evals as u64;
        *px = r.rgb.map(|c| c as f32);
    }
    evals
}

/// Single-threaded whole-image render.
pub fn render_image<R: RadianceSource + ?Sized>(source: &R, camera: &Camera, t: usize, params: &RenderParams) -> (Image, RenderStats) {
    let mut img = Image::filled(camera.width, camera.height, [0.0; 3]);
    let evals = render_rows(source, camera, t, params, 0, &mut img.pixels);
    (img, RenderStats { color_evals: evals })
}
