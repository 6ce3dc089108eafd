//! `FPO1` container for Fourier PlenOctrees and per-frame trees.
//!
//! Layout (little-endian):
//!
//! ```text
//! "FPO1" | version u32 | T u32 | K_sigma u32 | K_z u32 | Z u32 | max_depth u32 | flags u32
//! half_extent f64 | T x (x, y, z) f64
//! node_count u32 | leaf_count u32 | node_count x 8 u32
//! leaf_count x (K_sigma + K_z * Z * 3) f32
//! ```
//!
//! Flags: bit 0 log encoding, bit 1 component-dependent encoding, bit 2
//! endpoint padding. A per-frame tree is stored with `T = K_sigma = K_z = 1`
//! and no flags, so its payload holds density and SH coefficients directly.

use std::fs;
use std::path::Path;

use fpo_core::encoding::DEFAULT_ZERO_EPSILON;
use fpo_core::octree::{Bounds, FourierPlenOctree, FramePlenOctree, Structure, MAX_DEPTH};
use fpo_core::{sh, signal, EncodingConfig, Vec3};

pub const MAGIC: [u8; 4] = *b"FPO1";
pub const VERSION: u32 = 1;

pub const FLAG_LOG: u32 = 1;
pub const FLAG_COMP: u32 = 1 << 1;
pub const FLAG_PADDED: u32 = 1 << 2;
const KNOWN_FLAGS: u32 = FLAG_LOG | FLAG_COMP | FLAG_PADDED;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("byte {offset}: {message}")]
    Invalid { offset: usize, message: String },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

fn bad(offset: usize, message: impl Into<String>) -> FormatError {
    FormatError::Invalid { offset, message: message.into() }
}

pub fn flags_of(fpo: &FourierPlenOctree) -> u32 {
    let cfg = fpo.config();
    (cfg.use_log as u32) | ((cfg.use_comp as u32) << 1) | ((fpo.is_padded() as u32) << 2)
}

/// Bytes before the node table.
pub fn header_len(frames: usize) -> usize {
    4 + 7 * 4 + 8 + frames * 24 + 8
}

pub fn encoded_len(frames: usize, node_count: usize, leaf_count: usize, stride: usize) -> usize {
    header_len(frames) + node_count * 32 + leaf_count * stride * 4
}

pub fn encode_fpo(fpo: &FourierPlenOctree) -> Vec<u8> {
    let s = fpo.structure();
    let cfg = fpo.config();
    let mut out = Vec::with_capacity(encoded_len(fpo.frames(), s.node_count(), s.leaf_count(), fpo.stride()));
    out.extend_from_slice(&MAGIC);
    for v in [
        VERSION,
        fpo.frames() as u32,
        cfg.k_sigma as u32,
        cfg.k_z as u32,
        fpo.sh_count() as u32,
        s.max_depth(),
        flags_of(fpo),
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&fpo.half_extent().to_le_bytes());
    for c in fpo.centers() {
        for v in c.to_array() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.extend_from_slice(&(s.node_count() as u32).to_le_bytes());
    out.extend_from_slice(&(s.leaf_count() as u32).to_le_bytes());
    for node in s.nodes() {
        for slot in node {
            out.extend_from_slice(&slot.to_le_bytes());
        }
    }
    for v in fpo.payload() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self, what: &str) -> Result<[u8; N], FormatError> {
        let end = self.pos + N;
        if end > self.bytes.len() {
            return Err(bad(self.pos, format!("truncated while reading {what}")));
        }
        let mut a = [0u8; N];
        a.copy_from_slice(&self.bytes[self.pos..end]);
        self.pos = end;
        Ok(a)
    }

    fn u32(&mut self, what: &str) -> Result<u32, FormatError> {
        self.take::<4>(what).map(u32::from_le_bytes)
    }

    fn f64(&mut self, what: &str) -> Result<f64, FormatError> {
        self.take::<8>(what).map(f64::from_le_bytes)
    }
}

pub fn decode_fpo(bytes: &[u8]) -> Result<FourierPlenOctree, FormatError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take::<4>("magic")? != MAGIC {
        return Err(bad(0, "bad magic, expected FPO1"));
    }
    let at = r.pos;
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(bad(at, format!("unsupported version {version}")));
    }
    let at = r.pos;
    let frames = r.u32("frame count")? as usize;
    if frames == 0 || frames > 1 << 16 {
        return Err(bad(at, format!("frame count {frames} out of range")));
    }
    let max_k = signal::max_components(frames);
    let at = r.pos;
    let k_sigma = r.u32("K_sigma")? as usize;
    if k_sigma == 0 || k_sigma > max_k {
        return Err(bad(at, format!("K_sigma {k_sigma} outside [1, {max_k}]")));
    }
    let at = r.pos;
    let k_z = r.u32("K_z")? as usize;
    if k_z == 0 || k_z > max_k {
        return Err(bad(at, format!("K_z {k_z} outside [1, {max_k}]")));
    }
    let at = r.pos;
    let sh_count = r.u32("SH count")? as usize;
    if !sh::is_valid_count(sh_count) {
        return Err(bad(at, format!("unsupported SH count {sh_count}")));
    }
    let at = r.pos;
    let max_depth = r.u32("max depth")?;
    if max_depth == 0 || max_depth > MAX_DEPTH {
        return Err(bad(at, format!("max depth {max_depth} outside [1, {MAX_DEPTH}]")));
    }
    let at = r.pos;
    let flags = r.u32("flags")?;
    if flags & !KNOWN_FLAGS != 0 {
        return Err(bad(at, format!("unknown flag bits {flags:#x}")));
    }
    let padded = flags & FLAG_PADDED != 0;
    if padded && frames < 3 {
        return Err(bad(at, "padded file needs at least three frames"));
    }
    let at = r.pos;
    let half_extent = r.f64("half extent")?;
    if !(half_extent > 0.0 && half_extent.is_finite()) {
        return Err(bad(at, format!("half extent {half_extent} is not positive and finite")));
    }
    let mut centers = Vec::with_capacity(frames);
    for t in 0..frames {
        let at = r.pos;
        let c = Vec3::new(r.f64("center")?, r.f64("center")?, r.f64("center")?);
        if !c.is_finite() {
            return Err(bad(at, format!("non-finite center for frame {t}")));
        }
        centers.push(c);
    }
    let at = r.pos;
    let node_count = r.u32("node count")? as usize;
    if node_count == 0 {
        return Err(bad(at, "node table is empty"));
    }
    let leaf_count = r.u32("leaf count")? as usize;
    let stride = k_sigma + k_z * sh_count * 3;
    let expected = encoded_len(frames, node_count, leaf_count, stride);
    if bytes.len() != expected {
        let offset = bytes.len().min(expected);
        return Err(bad(offset, format!("file has {} bytes, header implies {expected}", bytes.len())));
    }
    let nodes_at = r.pos;
    let mut nodes = Vec::with_capacity(node_count);
    for _ in 0..node_count {
        let mut n = [0u32; 8];
        for slot in &mut n {
            *slot = r.u32("node")?;
        }
        nodes.push(n);
    }
    let structure = Structure::from_nodes(max_depth, nodes, leaf_count).map_err(|e| bad(nodes_at, e.to_string()))?;
    let payload_at = r.pos;
    let mut payload = Vec::with_capacity(leaf_count * stride);
    for i in 0..leaf_count * stride {
        let v = f32::from_le_bytes(r.take::<4>("payload")?);
        if !v.is_finite() {
            return Err(bad(payload_at + 4 * i, "non-finite coefficient"));
        }
        payload.push(v);
    }
    let cfg = EncodingConfig {
        use_log: flags & FLAG_LOG != 0,
        use_comp: flags & FLAG_COMP != 0,
        k_sigma,
        k_z,
        zero_epsilon: DEFAULT_ZERO_EPSILON,
    };
    FourierPlenOctree::from_parts(structure, half_extent, centers, cfg, sh_count, padded, payload).map_err(|e| bad(0, e.to_string()))
}

pub fn save_fpo(path: &Path, fpo: &FourierPlenOctree) -> Result<(), FormatError> {
    fs::write(path, encode_fpo(fpo))?;
    Ok(())
}

pub fn load_fpo(path: &Path) -> Result<FourierPlenOctree, FormatError> {
    decode_fpo(&fs::read(path)?)
}

/// A frame tree as a single-frame, single-component container.
pub fn frame_to_fpo(tree: &FramePlenOctree) -> Result<FourierPlenOctree, FormatError> {
    let n_sh = tree.sh_count * 3;
    let mut payload = Vec::with_capacity(tree.leaf_count() * (1 + n_sh));
    for leaf in 0..tree.leaf_count() {
        payload.push(tree.sigma[leaf] as f32);
        payload.extend(tree.leaf_sh(leaf).iter().map(|&v| v as f32));
    }
    let cfg = EncodingConfig::new(fpo_core::Encoding::None, 1, 1);
    FourierPlenOctree::from_parts(tree.structure.clone(), tree.bounds.half_extent, vec![tree.bounds.center], cfg, tree.sh_count, false, payload)
        .map_err(|e| bad(0, e.to_string()))
}

pub fn fpo_to_frame(fpo: &FourierPlenOctree) -> Result<FramePlenOctree, FormatError> {
    let cfg = fpo.config();
    if fpo.frames() != 1 || cfg.k_sigma != 1 || cfg.k_z != 1 || flags_of(fpo) != 0 {
        return Err(bad(8, "not a frame tree (expects T = K_sigma = K_z = 1 and no flags)"));
    }
    let n_sh = fpo.sh_count() * 3;
    let mut sigma = Vec::with_capacity(fpo.leaf_count());
    let mut shv = Vec::with_capacity(fpo.leaf_count() * n_sh);
    for leaf in 0..fpo.leaf_count() as u32 {
        let p = fpo.leaf_payload(leaf);
        sigma.push(p[0] as f64);
        shv.extend(p[1..].iter().map(|&v| v as f64));
    }
    let bounds = Bounds::new(fpo.centers()[0], fpo.half_extent());
    FramePlenOctree::new(fpo.structure().clone(), bounds, fpo.sh_count(), sigma, shv).map_err(|e| bad(header_len(1), e.to_string()))
}

pub fn save_frame(path: &Path, tree: &FramePlenOctree) -> Result<(), FormatError> {
    save_fpo(path, &frame_to_fpo(tree)?)
}

pub fn load_frame(path: &Path) -> Result<FramePlenOctree, FormatError> {
    fpo_to_frame(&load_fpo(path)?)
}
