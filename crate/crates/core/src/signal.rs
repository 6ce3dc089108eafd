//! Truncated real DFT over per-leaf time series.
//!
//! Component `k` is a cosine of frequency `k/2` for even `k` and a sine of
//! frequency `(k+1)/2` for odd `k`, both over `T` samples. Analysis carries
//! the `1/T` normalisation; synthesis does not. With `K = 2T-1` components the
//! pair is an exact inverse.

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::math;

/// Storage scalar for Fourier coefficients.
pub trait Coefficient: Copy + Default + PartialEq + Send + Sync + core::fmt::Debug + 'static {
    fn to_f64(self) -> f64;
    fn from_f64(v: f64) -> Self;
}

impl Coefficient for f32 {
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
}

impl Coefficient for f64 {
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
}

/// Largest meaningful component count for `frames` samples.
pub const fn max_components(frames: usize) -> usize {
    2 * frames - 1
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimeSignal {
    values: Vec<f64>,
}

impl TimeSignal {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("time signal needs at least one sample"));
        }
        if let Some(t) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(alloc::format!("non-finite sample at t={t}")));
        }
        Ok(TimeSignal { values })
    }

    pub fn frames(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FourierCoeffs {
    omega: Vec<f64>,
    frames: usize,
}

impl FourierCoeffs {
    pub fn new(omega: Vec<f64>, frames: usize) -> Result<Self> {
        check_components(omega.len(), frames)?;
        if omega.iter().any(|w| !w.is_finite()) {
            return Err(Error::Data("non-finite Fourier coefficient".into()));
        }
        Ok(FourierCoeffs { omega, frames })
    }

    pub fn components(&self) -> usize {
        self.omega.len()
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }
}

pub(crate) fn check_components(components: usize, frames: usize) -> Result<()> {
    if frames == 0 {
        return Err(invalid("frame count must be positive"));
    }
    if components == 0 || components > max_components(frames) {
        return Err(invalid(alloc::format!(
            "component count {components} outside [1, {}] for T={frames}",
            max_components(frames)
        )));
    }
    Ok(())
}

#[inline]
fn basis_angle(k: usize, t: usize, frames: usize) -> f64 {
    let freq = if k.is_multiple_of(2) { k } else { k + 1 };
    (freq as f64) * PI * (t as f64) / (frames as f64)
}

/// Synthesis basis: `cos(k*pi*t/T)` for even `k`, `sin((k+1)*pi*t/T)` for odd `k`.
#[inline]
pub fn idft_basis(k: usize, t: usize, frames: usize) -> f64 {
    debug_assert!(t < frames);
    let a = basis_angle(k, t, frames);
    if k.is_multiple_of(2) {
        math::cos(a)
    } else {
        math::sin(a)
    }
}

/// Analysis basis, `idft_basis / T`.
#[inline]
pub fn dft_basis(k: usize, t: usize, frames: usize) -> f64 {
    idft_basis(k, t, frames) / frames as f64
}

/// Precomputed `K x T` analysis and synthesis tables, shared by every leaf
/// compressed or decoded with the same `(K, T)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisTable {
    components: usize,
    frames: usize,
    analysis: Vec<f64>,
    synthesis: Vec<f64>,
}

impl BasisTable {
    pub fn new(components: usize, frames: usize) -> Result<Self> {
        check_components(components, frames)?;
        let mut analysis = Vec::with_capacity(components * frames);
        let mut synthesis = Vec::with_capacity(components * frames);
        for k in 0..components {
            for t in 0..frames {
                analysis.push(dft_basis(k, t, frames));
                synthesis.push(idft_basis(k, t, frames));
            }
        }
        Ok(BasisTable { components, frames, analysis, synthesis })
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    #[inline]
    pub fn synthesis(&self, k: usize, t: usize) -> f64 {
        self.synthesis[k * self.frames + t]
    }

    /// Synthesis weights of every component at time `t`.
    pub fn synthesis_column(&self, t: usize, out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate().take(self.components) {
            *o = self.synthesis[k * self.frames + t];
        }
    }

    /// Writes `omega_k = sum_t x(t) DFT_k(t)` into `out` (length `K`).
    pub fn compress_into(&self, values: &[f64], out: &mut [f64]) {
        debug_assert_eq!(values.len(), self.frames);
        for (k, o) in out.iter_mut().enumerate().take(self.components) {
            let row = &self.analysis[k * self.frames..(k + 1) * self.frames];
            *o = row.iter().zip(values).map(|(b, x)| b * x).sum();
        }
    }

    pub fn reconstruct<S: Coefficient>(&self, omega: &[S], t: usize) -> f64 {
        omega
            .iter()
            .take(self.components)
            .enumerate()
            .map(|(k, w)| w.to_f64() * self.synthesis[k * self.frames + t])
            .sum()
    }
}

pub fn compress(signal: &TimeSignal, components: usize) -> Result<FourierCoeffs> {
    let table = BasisTable::new(components, signal.frames())?;
    let mut omega = alloc::vec![0.0; components];
    table.compress_into(signal.values(), &mut omega);
    Ok(FourierCoeffs { omega, frames: signal.frames() })
}

pub fn reconstruct(coeffs: &FourierCoeffs, t: usize) -> f64 {
    debug_assert!(t < coeffs.frames);
    coeffs
        .omega
        .iter()
        .enumerate()
        .map(|(k, w)| w * idft_basis(k, t, coeffs.frames))
        .sum()
}

/// Reconstructs every time step.
pub fn reconstruct_all(coeffs: &FourierCoeffs) -> Vec<f64> {
    (0..coeffs.frames).map(|t| reconstruct(coeffs, t)).collect()
}
