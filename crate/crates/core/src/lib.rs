//! Fourier PlenOctree codec and renderer.
//!
//! Per-leaf time series of density and spherical-harmonic radiance are
//! compressed with a truncated real DFT, optionally after a logarithmic and a
//! component-dependent density encoding. The crate is `no_std` (with `alloc`)
//! and contains only the numerical core: IO, threading and the CLI live in the
//! `fpo` crate.

#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod analysis;
pub mod encoding;
pub mod error;
pub mod grad;
pub mod math;
pub mod metrics;
pub mod octree;
pub mod render;
pub mod scene;
pub mod sh;
pub mod signal;

pub use encoding::{Encoding, EncodingConfig};
pub use error::{Error, Result};
pub use math::{Rigid, Vec3};
pub use octree::{Bounds, FourierPlenOctree, FramePlenOctree, RaySegment, Structure};
pub use render::{Camera, Image, Ray, RenderParams};
pub use signal::{Coefficient, FourierCoeffs, TimeSignal};
