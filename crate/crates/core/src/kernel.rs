//! In-place statevector kernels.
//!
//! A vector over `n` slots has length `2^n`; slot `s` is bit `n - 1 - s` of the
//! basis index, so slot 0 is the most significant qubit and `a ⊗ b` on slots
//! `(s, s+1)` matches the usual Kronecker ordering.

use crate::linalg::{Mat2, Mat4};
use num_complex::Complex64 as C64;

#[inline]
fn mask(n: usize, slot: usize) -> usize {
    1 << (n - 1 - slot)
}

pub fn apply_1q(amps: &mut [C64], n: usize, slot: usize, m: &Mat2) {
    debug_assert_eq!(amps.len(), 1 << n);
    let b = mask(n, slot);
    let (m00, m01, m10, m11) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    for i in 0..amps.len() {
        if i & b == 0 {
            let a0 = amps[i];
            let a1 = amps[i | b];
            amps[i] = m00 * a0 + m01 * a1;
            amps[i | b] = m10 * a0 + m11 * a1;
        }
    }
}

/// Applies `m` with `first` as the more significant factor.
pub fn apply_2q(amps: &mut [C64], n: usize, first: usize, second: usize, m: &Mat4) {
    debug_assert_eq!(amps.len(), 1 << n);
    debug_assert_ne!(first, second);
    let ba = mask(n, first);
    let bb = mask(n, second);
    for i in 0..amps.len() {
        if i & ba == 0 && i & bb == 0 {
            let idx = [i, i | bb, i | ba, i | ba | bb];
            let v = [amps[idx[0]], amps[idx[1]], amps[idx[2]], amps[idx[3]]];
            for (r, &out) in idx.iter().enumerate() {
                amps[out] = m[(r, 0)] * v[0] + m[(r, 1)] * v[1] + m[(r, 2)] * v[2] + m[(r, 3)] * v[3];
            }
        }
    }
}

/// Probability that `slot` reads 0 in the computational basis.
pub fn prob_zero(amps: &[C64], n: usize, slot: usize) -> f64 {
    let b = mask(n, slot);
    amps.iter().enumerate().filter(|(i, _)| i & b == 0).map(|(_, a)| a.norm_sqr()).sum()
}

/// `1/sqrt(w)` for a kept branch weight; a zero branch stays zero.
fn rescale(weight: f64) -> f64 {
    if weight > 0.0 {
        1.0 / weight.sqrt()
    } else {
        0.0
    }
}

/// Projects `slot` onto `outcome`, drops it from the register and rescales
/// to unit norm. Returns the reduced `2^(n-1)` vector.
///
/// The scale comes from the kept amplitudes themselves rather than from a
/// branch probability computed as `1 - p`, which loses relative precision on
/// rare branches.
pub fn project_out(amps: &[C64], n: usize, slot: usize, outcome: u8) -> Vec<C64> {
    let shift = n - 1 - slot;
    let low = (1usize << shift) - 1;
    let mut out: Vec<C64> = (0..1usize << (n - 1))
        .map(|j| amps[((j & !low) << 1) | ((outcome as usize) << shift) | (j & low)])
        .collect();
    let scale = rescale(norm_sqr(&out));
    out.iter_mut().for_each(|a| *a *= scale);
    out
}

/// Projects `slot` onto `outcome` in place (slot kept) and renormalizes.
pub fn project_keep(amps: &mut [C64], n: usize, slot: usize, outcome: u8) {
    let b = mask(n, slot);
    for (i, a) in amps.iter_mut().enumerate() {
        if u8::from(i & b != 0) != outcome {
            *a = C64::new(0.0, 0.0);
        }
    }
    let scale = rescale(norm_sqr(amps));
    amps.iter_mut().for_each(|a| *a *= scale);
}

/// Appends a fresh `|0⟩` slot as the least significant qubit.
pub fn push_zero(amps: &[C64]) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); amps.len() * 2];
    for (i, a) in amps.iter().enumerate() {
        out[2 * i] = *a;
    }
    out
}

pub fn norm_sqr(amps: &[C64]) -> f64 {
    amps.iter().map(|a| a.norm_sqr()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{cnot, hadamard, kron, to_dmatrix2, to_dmatrix4};
    use nalgebra::{DMatrix, DVector};

    fn dense_1q(n: usize, slot: usize, m: &Mat2) -> DMatrix<C64> {
        let mut op = DMatrix::<C64>::identity(1, 1);
        for s in 0..n {
            let f = if s == slot { to_dmatrix2(m) } else { DMatrix::identity(2, 2) };
            op = op.kronecker(&f);
        }
        op
    }

    #[test]
    fn one_qubit_kernel_matches_kronecker() {
        let h = hadamard();
        let mut v: Vec<C64> = (0..8).map(|k| C64::new(k as f64, 1.0 - k as f64)).collect();
        let reference = dense_1q(3, 1, &h) * DVector::from_vec(v.clone());
        apply_1q(&mut v, 3, 1, &h);
        for (a, b) in v.iter().zip(reference.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn adjacent_two_qubit_kernel_matches_kronecker() {
        let m = cnot() * kron(&hadamard(), &hadamard());
        let mut v: Vec<C64> = (0..8).map(|k| C64::new((k * k) as f64, k as f64)).collect();
        let op = DMatrix::<C64>::identity(2, 2).kronecker(&to_dmatrix4(&m));
        let reference = op * DVector::from_vec(v.clone());
        apply_2q(&mut v, 3, 1, 2, &m);
        for (a, b) in v.iter().zip(reference.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn projection_drops_the_slot() {
        // |1⟩ ⊗ (|0⟩ + |1⟩)/√2 on 2 slots, measure slot 0 -> outcome 1
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let v = vec![C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(s, 0.0), C64::new(s, 0.0)];
        assert!((prob_zero(&v, 2, 0) - 0.0).abs() < 1e-15);
        let r = project_out(&v, 2, 0, 1);
        assert_eq!(r.len(), 2);
        assert!((r[0].re - s).abs() < 1e-15 && (r[1].re - s).abs() < 1e-15);
    }

    #[test]
    fn rare_branch_is_renormalized_exactly() {
        // amplitude 1e-6 on |1⟩: the branch weight 1e-12 is far below the
        // resolution of 1 - p0
        let e: f64 = 1e-6;
        let v = vec![C64::new((1.0 - e * e).sqrt(), 0.0), C64::new(e, 0.0)];
        let r = project_out(&v, 1, 0, 1);
        assert!((norm_sqr(&r) - 1.0).abs() < 1e-15);
        let mut k = v.clone();
        project_keep(&mut k, 1, 0, 1);
        assert!((norm_sqr(&k) - 1.0).abs() < 1e-15);
    }
}
