//! Orthonormal 2-D DCT-II and its inverse.
//!
//! The forward transform of an H×W plane is
//!
//! ```text
//! F[u,v] = c(u) c(v) Σ_x Σ_y M[x,y] cos(π(2x+1)u / 2H) cos(π(2y+1)v / 2W)
//! ```
//!
//! with `c(0) = sqrt(1/N)` and `c(k>0) = sqrt(2/N)` per dimension. Under
//! this normalization the transform matrix is orthogonal, so the inverse is
//! its transpose and energy is preserved (Parseval): perturbing one
//! coefficient by `m` adds exactly `m²` of squared-pixel energy.

use std::f64::consts::PI;

/// N×N orthonormal DCT-II basis matrix, row `u`, column `x`.
fn dct_matrix(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for u in 0..n {
        let c = if u == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        for x in 0..n {
            m[u * n + x] = c * (PI * (2.0 * x as f64 + 1.0) * u as f64 / (2.0 * n as f64)).cos();
        }
    }
    m
}

/// out = a (p×q) · b (q×r)
fn matmul(a: &[f64], b: &[f64], p: usize, q: usize, r: usize) -> Vec<f64> {
    let mut out = vec![0.0; p * r];
    for i in 0..p {
        for k in 0..q {
            let aik = a[i * q + k];
            if aik == 0.0 {
                continue;
            }
            let b_row = &b[k * r..(k + 1) * r];
            let o_row = &mut out[i * r..(i + 1) * r];
            for j in 0..r {
                o_row[j] += aik * b_row[j];
            }
        }
    }
    out
}

/// out = a (p×q) · bᵀ where b is r×q
fn matmul_bt(a: &[f64], b: &[f64], p: usize, q: usize, r: usize) -> Vec<f64> {
    let mut out = vec![0.0; p * r];
    for i in 0..p {
        let a_row = &a[i * q..(i + 1) * q];
        for j in 0..r {
            let b_row = &b[j * q..(j + 1) * q];
            let mut acc = 0.0;
            for k in 0..q {
                acc += a_row[k] * b_row[k];
            }
            out[i * r + j] = acc;
        }
    }
    out
}

/// out = aᵀ (a is q×p) · b (q×r)
fn matmul_at(a: &[f64], b: &[f64], p: usize, q: usize, r: usize) -> Vec<f64> {
    let mut out = vec![0.0; p * r];
    for k in 0..q {
        let a_row = &a[k * p..(k + 1) * p];
        let b_row = &b[k * r..(k + 1) * r];
        for i in 0..p {
            let aki = a_row[i];
            if aki == 0.0 {
                continue;
            }
            let o_row = &mut out[i * r..(i + 1) * r];
            for j in 0..r {
                o_row[j] += aki * b_row[j];
            }
        }
    }
    out
}

/// Forward orthonormal 2-D DCT-II of a row-major `h`×`w` plane:
/// `F = C_h · M · C_wᵀ`.
pub fn dct2(plane: &[f64], h: usize, w: usize) -> Vec<f64> {
    assert_eq!(plane.len(), h * w, "plane length must be h*w");
    let ch = dct_matrix(h);
    let cw = dct_matrix(w);
    let tmp = matmul(&ch, plane, h, h, w);
    matmul_bt(&tmp, &cw, h, w, w)
}

/// Inverse transform (transpose of the forward): `M = C_hᵀ · F · C_w`.
pub fn idct2(freq: &[f64], h: usize, w: usize) -> Vec<f64> {
    assert_eq!(freq.len(), h * w, "plane length must be h*w");
    let ch = dct_matrix(h);
    let cw = dct_matrix(w);
    let tmp = matmul_at(&ch, freq, h, h, w);
    matmul(&tmp, &cw, h, w, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    use crate::rng::{stream_rng, Stream};

    /// Brute-force O(N^4) evaluation of the defining double sum.
    pub(crate) fn dct2_double_sum(plane: &[f64], h: usize, w: usize) -> Vec<f64> {
        let c = |k: usize, n: usize| {
            if k == 0 {
                (1.0 / n as f64).sqrt()
            } else {
                (2.0 / n as f64).sqrt()
            }
        };
        let mut out = vec![0.0; h * w];
        for u in 0..h {
            for v in 0..w {
                let mut acc = 0.0;
                for x in 0..h {
                    for y in 0..w {
                        acc += plane[x * w + y]
                            * (PI * (2.0 * x as f64 + 1.0) * u as f64 / (2.0 * h as f64)).cos()
                            * (PI * (2.0 * y as f64 + 1.0) * v as f64 / (2.0 * w as f64)).cos();
                    }
                }
                out[u * w + v] = c(u, h) * c(v, w) * acc;
            }
        }
        out
    }

    fn random_plane(seed: u64, h: usize, w: usize) -> Vec<f64> {
        let mut rng = stream_rng(seed, Stream::Synth(9));
        (0..h * w).map(|_| rng.gen_range(0.0..255.0)).collect()
    }

    #[test]
    fn constant_plane_has_only_dc() {
        let plane = vec![1.0; 32 * 32];
        let f = dct2(&plane, 32, 32);
        assert!((f[0] - 32.0).abs() < 1e-12);
        for (i, &v) in f.iter().enumerate().skip(1) {
            assert!(v.abs() < 1e-12, "coefficient {i} = {v}");
        }
    }

    #[test]
    fn dc_only_inverts_to_constant() {
        let mut f = vec![0.0; 32 * 32];
        f[0] = 32.0;
        let m = idct2(&f, 32, 32);
        for &v in &m {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn round_trip_and_parseval() {
        for seed in 0..10 {
            let plane = random_plane(seed, 32, 32);
            let f = dct2(&plane, 32, 32);
            let back = idct2(&f, 32, 32);
            for (a, b) in plane.iter().zip(&back) {
                assert!((a - b).abs() < 1e-9);
            }
            let e_pix: f64 = plane.iter().map(|v| v * v).sum();
            let e_freq: f64 = f.iter().map(|v| v * v).sum();
            assert!((e_pix - e_freq).abs() / e_pix < 1e-9);
        }
    }

    #[test]
    fn matches_double_sum_oracle_on_8x8() {
        for seed in 0..5 {
            let plane = random_plane(seed + 100, 8, 8);
            let fast = dct2(&plane, 8, 8);
            let slow = dct2_double_sum(&plane, 8, 8);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn non_square_round_trip() {
        let plane = random_plane(7, 5, 9);
        let back = idct2(&dct2(&plane, 5, 9), 5, 9);
        for (a, b) in plane.iter().zip(&back) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn one_by_one_is_identity() {
        let f = dct2(&[4.0], 1, 1);
        assert!((f[0] - 4.0).abs() < 1e-15);
    }
}
