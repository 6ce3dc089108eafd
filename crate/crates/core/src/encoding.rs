//! Density encodings applied before compression.
//!
//! The logarithmic part is inverted after every reconstruction. The
//! component-dependent part only shapes the initial coefficients and is never
//! inverted.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{invalid, Result};
use crate::math;
use crate::signal::{self, check_components, FourierCoeffs, TimeSignal};

/// Samples at or below this value count as empty space for the shift rule.
pub const DEFAULT_ZERO_EPSILON: f64 = 1e-8;

/// The four ablation variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Encoding {
    None,
    Log,
    Comp,
    LogComp,
}

impl Encoding {
    pub const ALL: [Encoding; 4] = [Encoding::None, Encoding::Log, Encoding::Comp, Encoding::LogComp];

    pub fn from_flags(use_log: bool, use_comp: bool) -> Self {
        match (use_log, use_comp) {
            (false, false) => Encoding::None,
            (true, false) => Encoding::Log,
            (false, true) => Encoding::Comp,
            (true, true) => Encoding::LogComp,
        }
    }

    pub fn use_log(self) -> bool {
        matches!(self, Encoding::Log | Encoding::LogComp)
    }

    pub fn use_comp(self) -> bool {
        matches!(self, Encoding::Comp | Encoding::LogComp)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Encoding::None => "none",
            Encoding::Log => "log",
            Encoding::Comp => "comp",
            Encoding::LogComp => "log+comp",
        }
    }
}

impl fmt::Display for Encoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Encoding {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Encoding::None),
            "log" => Ok(Encoding::Log),
            "comp" => Ok(Encoding::Comp),
            "log+comp" | "comp+log" => Ok(Encoding::LogComp),
            other => Err(invalid(alloc::format!("unknown encoding '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EncodingConfig {
    pub use_log: bool,
    pub use_comp: bool,
    pub k_sigma: usize,
    pub k_z: usize,
    pub zero_epsilon: f64,
}

impl EncodingConfig {
    pub fn new(encoding: Encoding, k_sigma: usize, k_z: usize) -> Self {
        EncodingConfig {
            use_log: encoding.use_log(),
            use_comp: encoding.use_comp(),
            k_sigma,
            k_z,
            zero_epsilon: DEFAULT_ZERO_EPSILON,
        }
    }

    pub fn encoding(&self) -> Encoding {
        Encoding::from_flags(self.use_log, self.use_comp)
    }

    /// Same component counts, no encodings.
    pub fn baseline(&self) -> Self {
        EncodingConfig { use_log: false, use_comp: false, ..*self }
    }

    pub fn validate(&self, frames: usize) -> Result<()> {
        check_components(self.k_sigma, frames)?;
        check_components(self.k_z, frames)?;
        if !(self.zero_epsilon >= 0.0) {
            return Err(invalid("zero_epsilon must be non-negative"));
        }
        Ok(())
    }
}

pub fn encode_log(sigma: f64) -> Result<f64> {
    if !(sigma >= 0.0) {
        return Err(invalid(alloc::format!("log encoding needs sigma >= 0, got {sigma}")));
    }
    Ok(math::ln_1p(sigma))
}

/// `exp(y) - 1`; negative inputs land in `(-1, 0)` and keep their sign.
#[inline]
pub fn decode_log(y: f64) -> f64 {
    math::exp_m1(y)
}

/// `0.5 (K + 1) / T`.
pub fn scaling_ratio(k_sigma: usize, frames: usize) -> f64 {
    0.5 * (k_sigma as f64 + 1.0) / frames as f64
}

/// Mean shift followed by `1/s(K)` scaling. The shift is the series mean when
/// any sample is (numerically) zero and 0 otherwise.
pub fn encode_comp(signal: &TimeSignal, k_sigma: usize, zero_epsilon: f64) -> TimeSignal {
    let values = signal.values();
    let s = scaling_ratio(k_sigma, values.len());
    let shift = if values.iter().any(|&v| v <= zero_epsilon) { signal.mean() } else { 0.0 };
    let out: Vec<f64> = values.iter().map(|&v| (v - shift) / s + shift).collect();
    TimeSignal::new(out).expect("finite input stays finite")
}

pub fn encode_density_sequence(signal: &TimeSignal, cfg: &EncodingConfig) -> Result<FourierCoeffs> {
    let encoded = encode_density_values(signal, cfg)?;
    signal::compress(&encoded, cfg.k_sigma)
}

/// The pre-compression part of [`encode_density_sequence`].
pub fn encode_density_values(signal: &TimeSignal, cfg: &EncodingConfig) -> Result<TimeSignal> {
    let mut current = signal.clone();
    if cfg.use_log {
        let logged = signal.values().iter().map(|&v| encode_log(v)).collect::<Result<Vec<_>>>()?;
        current = TimeSignal::new(logged)?;
    } else if let Some(v) = signal.values().iter().find(|v| **v < 0.0) {
        return Err(invalid(alloc::format!("density sequence has negative sample {v}")));
    }
    if cfg.use_comp {
        current = encode_comp(&current, cfg.k_sigma, cfg.zero_epsilon);
    }
    Ok(current)
}

/// Maps a raw reconstruction to a non-negative density.
#[inline]
pub fn decode_value(y: f64, use_log: bool) -> f64 {
    let v = if use_log { decode_log(y) } else { y };
    v.max(0.0)
}

/// `d sigma / d y` of [`decode_value`], zero wherever the ReLU clips.
#[inline]
pub fn decode_derivative(y: f64, use_log: bool) -> f64 {
    if use_log {
        if y > 0.0 { math::exp(y) } else { 0.0 }
    } else if y > 0.0 {
        1.0
    } else {
        0.0
    }
}

pub fn decode_density(coeffs: &FourierCoeffs, t: usize, cfg: &EncodingConfig) -> f64 {
    decode_value(signal::reconstruct(coeffs, t), cfg.use_log)
}
