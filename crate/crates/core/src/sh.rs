//! Real spherical harmonics up to degree 2.
//!
//! Coefficients are laid out coefficient-major: `z[i * 3 + channel]`.

use crate::math::{self, Vec3};

pub const MAX_SH: usize = 9;

const C0: f64 = 0.282_094_791_773_878_14;
const C1: f64 = 0.488_602_511_902_919_9;
const C2_0: f64 = 1.092_548_430_592_079_2;
const C2_1: f64 = 0.315_391_565_252_520_05;
const C2_2: f64 = 0.546_274_215_296_039_6;

/// Basis ordering: Y00; Y1-1, Y10, Y11; Y2-2, Y2-1, Y20, Y21, Y22.
pub fn sh_basis(d: Vec3) -> [f64; MAX_SH] {
    let (x, y, z) = (d.x, d.y, d.z);
    [
        C0,
        C1 * y,
        C1 * z,
        C1 * x,
        C2_0 * x * y,
        C2_0 * y * z,
        C2_1 * (3.0 * z * z - 1.0),
        C2_0 * x * z,
        C2_2 * (x * x - y * y),
    ]
}

/// Whether `count` is a complete band set (1, 4 or 9).
pub fn is_valid_count(count: usize) -> bool {
    matches!(count, 1 | 4 | 9)
}

/// Per-channel radiance before the sigmoid.
pub fn eval_sh(z: &[f64], d: Vec3) -> [f64; 3] {
    let count = z.len() / 3;
    debug_assert!(count <= MAX_SH && z.len() == count * 3);
    let basis = sh_basis(d);
    let mut out = [0.0; 3];
    for (i, b) in basis.iter().enumerate().take(count) {
        out[0] += b * z[i * 3];
        out[1] += b * z[i * 3 + 1];
        out[2] += b * z[i * 3 + 2];
    }
    out
}

/// `sigmoid(eval_sh(z, d))`.
pub fn eval_color(z: &[f64], d: Vec3) -> [f64; 3] {
    let raw = eval_sh(z, d);
    [math::sigmoid(raw[0]), math::sigmoid(raw[1]), math::sigmoid(raw[2])]
}

/// Coefficients whose sigmoid reproduces a view-independent colour.
pub fn constant_color_coeffs(rgb: [f64; 3], count: usize, out: &mut [f64]) {
    out[..count * 3].iter_mut().for_each(|v| *v = 0.0);
    for c in 0..3 {
        out[c] = math::logit(rgb[c]) / C0;
    }
}

/// Direction `i` of an `n`-point Fibonacci sphere.
pub fn fibonacci_direction(i: usize, n: usize) -> Vec3 {
    let golden = core::f64::consts::PI * (3.0 - math::sqrt(5.0));
    let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
    let r = math::sqrt((1.0 - z * z).max(0.0));
    let phi = golden * i as f64;
    Vec3::new(r * math::cos(phi), r * math::sin(phi), z)
}

/// Projects a directional function onto the first `count` basis functions
/// with an `n`-point equal-weight quadrature.
pub fn project<F: Fn(Vec3) -> [f64; 3]>(f: F, count: usize, n: usize, out: &mut [f64]) {
    out[..count * 3].iter_mut().for_each(|v| *v = 0.0);
    let weight = 4.0 * core::f64::consts::PI / n as f64;
    for i in 0..n {
        let d = fibonacci_direction(i, n);
        let basis = sh_basis(d);
        let v = f(d);
        for (k, b) in basis.iter().enumerate().take(count) {
            for c in 0..3 {
                out[k * 3 + c] += weight * b * v[c];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dir(rng: &mut ChaCha8Rng) -> Vec3 {
        loop {
            let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let n = v.norm();
            if n > 0.1 && n < 1.0 {
                return v * (1.0 / n);
            }
        }
    }

    #[test]
    fn dc_band_is_isotropic() {
        let mut z = [0.0; 27];
        z[0] = 2.0;
        z[1] = -1.0;
        z[2] = 0.5;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let out = eval_sh(&z, random_dir(&mut rng));
            assert!((out[0] - 2.0 * 0.282_094_791_8).abs() < 1e-9);
            assert!((out[1] + 0.282_094_791_8).abs() < 1e-9);
            assert!((out[2] - 0.5 * 0.282_094_791_8).abs() < 1e-9);
        }
        assert_eq!(eval_sh(&[0.0; 27], Vec3::new(0.0, 0.0, 1.0)), [0.0; 3]);
    }

    // Y00 normalisation: integral of Y00^2 over the sphere is 1.
    #[test]
    fn basis_orthonormal_by_quadrature() {
        let n = 20_000;
        let mut gram = [[0.0; MAX_SH]; MAX_SH];
        for i in 0..n {
            let b = sh_basis(fibonacci_direction(i, n));
            for a in 0..MAX_SH {
                for c in 0..MAX_SH {
                    gram[a][c] += b[a] * b[c] * 4.0 * core::f64::consts::PI / n as f64;
                }
            }
        }
        for a in 0..MAX_SH {
            for c in 0..MAX_SH {
                let expected = if a == c { 1.0 } else { 0.0 };
                assert!((gram[a][c] - expected).abs() < 1e-3, "({a},{c}) = {}", gram[a][c]);
            }
        }
    }

    // Degree-1 band transforms like a vector (y, z, x): rotating the direction
    // and the coefficient vector together is invariant.
    #[test]
    fn band_one_rotation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let axis = random_dir(&mut rng);
            let angle: f64 = rng.gen_range(0.0..6.0);
            let rot = rotation_matrix(axis, angle);
            let d = random_dir(&mut rng);
            let coeff_vec = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let z = band1_coeffs(coeff_vec, 0.3);
            let rd = apply(&rot, d);
            let rz = band1_coeffs(apply(&rot, coeff_vec), 0.3);
            let a = eval_sh(&z, d);
            let b = eval_sh(&rz, rd);
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() < 1e-12);
            }
        }
    }

    fn band1_coeffs(v: Vec3, dc: f64) -> [f64; 12] {
        let mut z = [0.0; 12];
        for c in 0..3 {
            z[c] = dc;
            z[3 + c] = v.y;
            z[6 + c] = v.z;
            z[9 + c] = v.x;
        }
        z
    }

    fn rotation_matrix(axis: Vec3, angle: f64) -> [[f64; 3]; 3] {
        let (s, c) = (angle.sin(), angle.cos());
        let (x, y, z) = (axis.x, axis.y, axis.z);
        let t = 1.0 - c;
        [
            [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
            [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
            [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
        ]
    }

    fn apply(m: &[[f64; 3]; 3], v: Vec3) -> Vec3 {
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    #[test]
    fn constant_color_roundtrip() {
        let mut z = [0.0; 27];
        constant_color_coeffs([0.2, 0.5, 0.9], 9, &mut z);
        let c = eval_color(&z, Vec3::new(0.0, 1.0, 0.0));
        assert!((c[0] - 0.2).abs() < 1e-12 && (c[1] - 0.5).abs() < 1e-12 && (c[2] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn projection_recovers_band_limited_function() {
        let mut truth = [0.0; 27];
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        truth.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        let mut got = [0.0; 27];
        project(|d| eval_sh(&truth, d), 9, 4096, &mut got);
        for (a, b) in got.iter().zip(truth.iter()) {
            assert!((a - b).abs() < 2e-2, "{a} vs {b}");
        }
    }
}
