//! Diagnostic sweeps over single time series: how peaks fall off under
//! truncation, and how much of the error survives the transfer function.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::encoding;
use crate::error::{invalid, Result};
use crate::math;
use crate::signal::{self, TimeSignal};

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub k: usize,
    pub peak_ratio: f64,
    pub l2_error: f64,
    pub post_transfer_l2: f64,
    pub variant: String,
}

pub const CSV_HEADER: &str = "k,peak_ratio,l2_error,post_transfer_l2,variant";

/// CSV with a fixed header and nine significant digits per value.
pub fn to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{:.8e},{:.8e},{:.8e},{}", r.k, r.peak_ratio, r.l2_error, r.post_transfer_l2, r.variant);
    }
    out
}

/// Opacity of a segment of length `delta`.
pub fn transfer(sigma: f64, delta: f64) -> f64 {
    -math::exp_m1(-sigma * delta)
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    math::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Index of the largest sample (first on ties).
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn log_values(signal: &TimeSignal) -> Result<Vec<f64>> {
    signal.values().iter().map(|&v| encoding::encode_log(v)).collect()
}

/// Raw reconstruction (no clipping) with `k` components.
fn roundtrip(values: &[f64], k: usize) -> Result<Vec<f64>> {
    let sig = TimeSignal::new(values.to_vec())?;
    let coeffs = signal::compress(&sig, k)?;
    Ok(signal::reconstruct_all(&coeffs))
}

/// For every `k`, reconstructs the signal from `k` components and reports the
/// reconstructed-to-original ratio at `peak` (the global maximum if `None`),
/// the L2 error and the L2 error after the transfer function with `delta`.
pub fn peak_falloff_sweep(signal: &TimeSignal, peak: Option<usize>, ks: &[usize], delta: f64) -> Result<Vec<SweepRow>> {
    let x = signal.values();
    let p = peak.unwrap_or_else(|| argmax(x));
    if p >= x.len() {
        return Err(invalid(format!("peak index {p} outside {} frames", x.len())));
    }
    if x[p] == 0.0 {
        return Err(invalid(format!("signal is zero at peak index {p}")));
    }
    let alpha: Vec<f64> = x.iter().map(|&v| transfer(v.max(0.0), delta)).collect();
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let y = roundtrip(x, k)?;
        let y_alpha: Vec<f64> = y.iter().map(|&v| transfer(v.max(0.0), delta)).collect();
        rows.push(SweepRow {
            k,
            peak_ratio: y[p] / x[p],
            l2_error: l2(x, &y),
            post_transfer_l2: l2(&alpha, &y_alpha),
            variant: String::from("raw"),
        });
    }
    Ok(rows)
}

/// Reconstruction errors of a nonnegative density series with and without the
/// logarithmic encoding, measured on density and on opacity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransferErrors {
    pub raw_l2: f64,
    pub post_transfer_l2: f64,
    pub log_raw_l2: f64,
    pub log_post_transfer_l2: f64,
    pub post_transfer_max: f64,
    pub log_post_transfer_max: f64,
}

pub fn transfer_error_study(signal: &TimeSignal, k: usize, delta: f64) -> Result<TransferErrors> {
    if !(delta > 0.0) {
        return Err(invalid(format!("segment length must be positive, got {delta}")));
    }
    let x = signal.values();
    let alpha: Vec<f64> = x.iter().map(|&v| transfer(v, delta)).collect();

    let plain: Vec<f64> = roundtrip(x, k)?.into_iter().map(|y| encoding::decode_value(y, false)).collect();
    let logged = log_values(signal)?;
    let log: Vec<f64> = roundtrip(&logged, k)?.into_iter().map(|y| encoding::decode_value(y, true)).collect();

    let plain_alpha: Vec<f64> = plain.iter().map(|&v| transfer(v, delta)).collect();
    let log_alpha: Vec<f64> = log.iter().map(|&v| transfer(v, delta)).collect();
    Ok(TransferErrors {
        raw_l2: l2(x, &plain),
        post_transfer_l2: l2(&alpha, &plain_alpha),
        log_raw_l2: l2(x, &log),
        log_post_transfer_l2: l2(&alpha, &log_alpha),
        post_transfer_max: max_abs(&alpha, &plain_alpha),
        log_post_transfer_max: max_abs(&alpha, &log_alpha),
    })
}

/// `transfer_error_study` over several `k`, as `raw` and `log` rows.
pub fn transfer_sweep(signal: &TimeSignal, ks: &[usize], delta: f64) -> Result<Vec<SweepRow>> {
    let x = signal.values();
    let p = argmax(x);
    let logged = log_values(signal)?;
    let mut rows = Vec::with_capacity(2 * ks.len());
    for &k in ks {
        let e = transfer_error_study(signal, k, delta)?;
        let plain = roundtrip(x, k)?;
        let log = roundtrip(&logged, k)?;
        let ratio = |v: f64| if x[p] == 0.0 { 1.0 } else { v / x[p] };
        rows.push(SweepRow {
            k,
            peak_ratio: ratio(encoding::decode_value(plain[p], false)),
            l2_error: e.raw_l2,
            post_transfer_l2: e.post_transfer_l2,
            variant: String::from("raw"),
        });
        rows.push(SweepRow {
            k,
            peak_ratio: ratio(encoding::decode_value(log[p], true)),
            l2_error: e.log_raw_l2,
            post_transfer_l2: e.log_post_transfer_l2,
            variant: String::from("log"),
        });
    }
    Ok(rows)
}

/// Pearson correlation coefficient. Constant inputs give `None`.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some(sab / math::sqrt(saa * sbb))
}
