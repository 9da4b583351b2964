//! Small dense linear-algebra helpers shared across the crate.

use nalgebra::{DMatrix, Matrix2, Matrix4};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type Mat2 = Matrix2<C64>;
pub type Mat4 = Matrix4<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Single-qubit Pauli operators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];

    pub fn matrix(self) -> Mat2 {
        match self {
            Pauli::X => Mat2::new(ZERO, ONE, ONE, ZERO),
            Pauli::Y => Mat2::new(ZERO, -I, I, ZERO),
            Pauli::Z => Mat2::new(ONE, ZERO, ZERO, -ONE),
        }
    }

    pub fn label(self) -> char {
        match self {
            Pauli::X => 'x',
            Pauli::Y => 'y',
            Pauli::Z => 'z',
        }
    }

    pub fn from_label(c: char) -> Option<Self> {
        match c.to_ascii_lowercase() {
            'x' => Some(Pauli::X),
            'y' => Some(Pauli::Y),
            'z' => Some(Pauli::Z),
            _ => None,
        }
    }
}

pub fn identity2() -> Mat2 {
    Mat2::identity()
}

pub fn hadamard() -> Mat2 {
    let s = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    Mat2::new(s, s, s, -s)
}

/// `exp(-i θ σ)` for a Pauli `σ`.
pub fn pauli_rotation(p: Pauli, theta: f64) -> Mat2 {
    identity2() * C64::new(theta.cos(), 0.0) - p.matrix() * C64::new(0.0, theta.sin())
}

/// `exp(-i θ σ⊗σ)` for a Pauli `σ`.
pub fn pauli_pair_rotation(p: Pauli, theta: f64) -> Mat4 {
    let pp = kron(&p.matrix(), &p.matrix());
    Mat4::identity() * C64::new(theta.cos(), 0.0) - pp * C64::new(0.0, theta.sin())
}

/// `exp(i θ σ^z⊗σ^z)`.
pub fn zz_phase(theta: f64) -> Mat4 {
    pauli_pair_rotation(Pauli::Z, -theta)
}

/// The rotated Mølmer–Sørensen gate `exp(i π/4 σ^z⊗σ^z)`.
pub fn ms_gate() -> Mat4 {
    zz_phase(std::f64::consts::FRAC_PI_4)
}

pub fn cnot() -> Mat4 {
    let mut m = Mat4::zeros();
    m[(0, 0)] = ONE;
    m[(1, 1)] = ONE;
    m[(2, 3)] = ONE;
    m[(3, 2)] = ONE;
    m
}

pub fn swap() -> Mat4 {
    let mut m = Mat4::zeros();
    m[(0, 0)] = ONE;
    m[(1, 2)] = ONE;
    m[(2, 1)] = ONE;
    m[(3, 3)] = ONE;
    m
}

/// Kronecker product `a ⊗ b` of two single-qubit operators; `a` acts on the
/// more significant bit.
pub fn kron(a: &Mat2, b: &Mat2) -> Mat4 {
    let mut m = Mat4::zeros();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    m[(2 * i + k, 2 * j + l)] = a[(i, j)] * b[(k, l)];
                }
            }
        }
    }
    m
}

pub fn dkron(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a.kronecker(b)
}

pub fn to_dmatrix4(m: &Mat4) -> DMatrix<C64> {
    DMatrix::from_fn(4, 4, |i, j| m[(i, j)])
}

pub fn to_dmatrix2(m: &Mat2) -> DMatrix<C64> {
    DMatrix::from_fn(2, 2, |i, j| m[(i, j)])
}

/// Max-norm distance between two equally-shaped matrices.
pub fn max_abs_diff<R, C, S1, S2>(a: &nalgebra::Matrix<C64, R, C, S1>, b: &nalgebra::Matrix<C64, R, C, S2>) -> f64
where
    R: nalgebra::Dim,
    C: nalgebra::Dim,
    S1: nalgebra::RawStorage<C64, R, C>,
    S2: nalgebra::RawStorage<C64, R, C>,
{
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Max-norm deviation of `U†U` from the identity.
pub fn unitarity_defect<R, S>(u: &nalgebra::Matrix<C64, R, R, S>) -> f64
where
    R: nalgebra::Dim,
    S: nalgebra::RawStorage<C64, R, R>,
{
    let n = u.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let mut acc = ZERO;
            for k in 0..n {
                acc += u[(k, i)].conj() * u[(k, j)];
            }
            if i == j {
                acc -= ONE;
            }
            worst = worst.max(acc.norm());
        }
    }
    worst
}

pub fn is_unitary<R, S>(u: &nalgebra::Matrix<C64, R, R, S>, tol: f64) -> bool
where
    R: nalgebra::Dim,
    S: nalgebra::RawStorage<C64, R, R>,
{
    unitarity_defect(u) <= tol
}

/// Distance between `a` and `b` after removing the best global phase
/// (aligned on the largest entry of `b`). Returns `(distance, phase)` with
/// `a ≈ phase · b`.
pub fn diff_up_to_phase(a: &DMatrix<C64>, b: &DMatrix<C64>) -> (f64, C64) {
    assert_eq!(a.shape(), b.shape());
    let (idx, _) = b
        .iter()
        .enumerate()
        .fold((0, 0.0), |(bi, bv), (i, v)| if v.norm() > bv { (i, v.norm()) } else { (bi, bv) });
    let bv = b.as_slice()[idx];
    let av = a.as_slice()[idx];
    if bv.norm() == 0.0 || av.norm() == 0.0 {
        return (max_abs_diff(a, b), ONE);
    }
    let phase = av / bv;
    let phase = phase / phase.norm();
    let scaled = b * phase;
    (max_abs_diff(a, &scaled), phase)
}

/// Haar-random `n × n` unitary from the QR decomposition of a complex
/// Ginibre matrix, with the diagonal phases of `R` divided out.
pub fn haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<C64> {
    let z = DMatrix::from_fn(n, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    });
    let qr = z.qr();
    let (mut q, r) = qr.unpack();
    for j in 0..n {
        let d = r[(j, j)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { ONE };
        for i in 0..n {
            q[(i, j)] *= ph;
        }
    }
    q
}

pub fn haar_unitary4<R: Rng + ?Sized>(rng: &mut R) -> Mat4 {
    let u = haar_unitary(4, rng);
    Mat4::from_fn(|i, j| u[(i, j)])
}

pub fn haar_unitary2<R: Rng + ?Sized>(rng: &mut R) -> Mat2 {
    let u = haar_unitary(2, rng);
    Mat2::from_fn(|i, j| u[(i, j)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rotations_are_unitary() {
        for p in Pauli::ALL {
            assert!(is_unitary(&pauli_rotation(p, 0.37), 1e-14));
            assert!(is_unitary(&pauli_pair_rotation(p, 1.1), 1e-14));
        }
    }

    #[test]
    fn ms_squared_is_zz_up_to_phase() {
        let ms2 = ms_gate() * ms_gate();
        let zz = kron(&Pauli::Z.matrix(), &Pauli::Z.matrix());
        let (d, _) = diff_up_to_phase(&to_dmatrix4(&ms2), &to_dmatrix4(&zz));
        assert!(d < 1e-14);
    }

    #[test]
    fn haar_samples_are_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [2, 4, 8] {
            let u = haar_unitary(n, &mut rng);
            assert!(unitarity_defect(&u) < 1e-13);
        }
    }

    #[test]
    fn kron_matches_nalgebra() {
        let a = pauli_rotation(Pauli::X, 0.3);
        let b = pauli_rotation(Pauli::Y, -0.8);
        let k = to_dmatrix4(&kron(&a, &b));
        let reference = to_dmatrix2(&a).kronecker(&to_dmatrix2(&b));
        assert!(max_abs_diff(&k, &reference) < 1e-15);
    }
}
