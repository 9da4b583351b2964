//! Self-dual kicked Ising gates, brick-wall Floquet circuits, solvable MPS
//! tensors and the qMPS unit-cell circuit.
//!
//! Sites are numbered from 1. A unit cell is the site pair `(2k-1, 2k)`.
//! Odd layers couple neighbouring cells, i.e. act on `(2,3), (4,5), …`; even
//! layers act inside cells on `(1,2), (3,4), …`. With this parity the
//! holographic circuit needs `n_b + 2⌈t/2⌉ + 2` qubits.

use std::f64::consts::FRAC_PI_4;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::circuit::{Basis, BitLabel, Circuit, CircuitBuilder, DualUnitaryTag};
use crate::linalg::{self, cnot, hadamard, identity2, pauli_pair_rotation, pauli_rotation, Mat2, Mat4, Pauli};

/// Kick parameters of the default initial state.
pub const PAPER_KICKS: [f64; 3] = [0.3, 0.5, 1.25];
/// Longitudinal field of the default run.
pub const PAPER_FIELD: f64 = 0.2;

#[derive(Debug, Error, PartialEq)]
pub enum SdkiError {
    #[error("window size 2L = {0} must be a positive even number")]
    OddWindow(usize),
    #[error("W is not unitary (defect {0:.3e})")]
    NotUnitary(f64),
    #[error("W must be 2χ×2χ with χ a power of two, got {0}×{1}")]
    BadShape(usize, usize),
    #[error("circuit realization supports χ ≤ 2 only, got χ = {0}")]
    Unsupported(usize),
    #[error("{qubits} qubits exceed the cap of {cap}")]
    TooManyQubits { qubits: usize, cap: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SdkiParams {
    pub h: f64,
    pub t: usize,
    pub two_l: usize,
}

impl SdkiParams {
    pub fn new(h: f64, t: usize, two_l: usize) -> Result<Self, SdkiError> {
        if two_l == 0 || two_l % 2 != 0 {
            return Err(SdkiError::OddWindow(two_l));
        }
        Ok(Self { h, t, two_l })
    }

    pub fn num_cells(&self) -> usize {
        self.two_l / 2
    }
}

/// Single-qubit factors of the SDKI gate.
pub fn sdki_factors(h: f64) -> DualUnitaryTag {
    let x = pauli_rotation(Pauli::X, -FRAC_PI_4);
    let y = pauli_rotation(Pauli::Y, FRAC_PI_4);
    let y_inv = pauli_rotation(Pauli::Y, -FRAC_PI_4);
    let field = pauli_rotation(Pauli::Z, h);
    let u_plus = field * x * y;
    let u_minus = x * y;
    let v_minus = y_inv * field;
    let v_plus = y_inv;
    DualUnitaryTag { u: [u_plus, u_minus], v: [v_minus, v_plus], coupling: 0.0 }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualUnitaryGate {
    pub matrix: Mat4,
    pub factors: DualUnitaryTag,
}

impl DualUnitaryGate {
    pub fn new(factors: DualUnitaryTag) -> Self {
        Self { matrix: factors.matrix(), factors }
    }
}

pub fn sdki_gate(h: f64) -> DualUnitaryGate {
    DualUnitaryGate::new(sdki_factors(h))
}

/// Space-time dual: `⟨k l|Ũ|i j⟩ = ⟨j l|U|i k⟩`.
pub fn dual_of(u: &Mat4) -> Mat4 {
    Mat4::from_fn(|row, col| {
        let (k, l) = (row >> 1, row & 1);
        let (i, j) = (col >> 1, col & 1);
        u[(2 * j + l, 2 * i + k)]
    })
}

/// Left sites `a` of the pairs `(a, a+1)` acted on by `layer` (1-based) in a
/// chain of `n_sites`.
pub fn layer_pairs(layer: usize, n_sites: usize) -> Vec<usize> {
    let start = if layer % 2 == 1 { 2 } else { 1 };
    (start..n_sites).step_by(2).collect()
}

/// One gate of the brick wall.
#[derive(Clone, Debug, PartialEq)]
pub struct FloquetGate {
    pub layer: usize,
    /// Left site (1-based); the gate acts on `(site, site + 1)`.
    pub site: usize,
    pub tag: DualUnitaryTag,
}

/// Gates of `t` brick-wall layers over `n_sites`, in layer order. Without
/// the temporal boundary the first layer drops its `v` factors and the last
/// layer drops its `u` factors.
pub fn floquet_gates(h: f64, t: usize, n_sites: usize, include_temporal_boundary: bool) -> Vec<FloquetGate> {
    let base = sdki_factors(h);
    let mut out = Vec::new();
    for layer in 1..=t {
        let mut tag = base.clone();
        if !include_temporal_boundary {
            if layer == 1 {
                tag.v = [identity2(), identity2()];
            }
            if layer == t {
                tag.u = [identity2(), identity2()];
            }
        }
        for site in layer_pairs(layer, n_sites) {
            out.push(FloquetGate { layer, site, tag: tag.clone() });
        }
    }
    out
}

/// Brick-wall circuit over `2L` wires; wire `w` holds site `w + 1`.
pub fn floquet_circuit(params: &SdkiParams, include_temporal_boundary: bool) -> Circuit {
    let mut b = CircuitBuilder::new();
    for w in 0..params.two_l {
        b.qubit(w);
    }
    for g in floquet_gates(params.h, params.t, params.two_l, include_temporal_boundary) {
        b.gate2_tagged(g.tag, g.site - 1, g.site);
    }
    b.build()
}

/// Number of two-qubit gates in `t` layers over `2L` sites.
pub fn floquet_gate_count(t: usize, two_l: usize) -> usize {
    let l = two_l / 2;
    t * l - t.div_ceil(2)
}

/// `exp[-i Σ_α K_α σ^α⊗σ^α]`.
pub fn kick_unitary(k: [f64; 3]) -> Mat4 {
    pauli_pair_rotation(Pauli::X, k[0]) * pauli_pair_rotation(Pauli::Y, k[1]) * pauli_pair_rotation(Pauli::Z, k[2])
}

/// Generic translation-invariant MPS with a two-site unit cell. `a[σ][σ']`
/// is the `χ×χ` matrix for the cell's spins, `left` the boundary vector; the
/// right bond stays open.
#[derive(Clone, Debug, PartialEq)]
pub struct CellMps {
    pub chi: usize,
    pub a: [[DMatrix<C64>; 2]; 2],
    pub left: DVector<C64>,
}

impl CellMps {
    /// Product state with every site in `|σ⟩`, `σ ∈ {0, 1}`.
    pub fn product(spin: u8) -> Self {
        let z = || DMatrix::<C64>::zeros(1, 1);
        let mut a = [[z(), z()], [z(), z()]];
        a[spin as usize][spin as usize][(0, 0)] = C64::new(1.0, 0.0);
        Self { chi: 1, a, left: DVector::from_element(1, C64::new(1.0, 0.0)) }
    }

    /// Transfer matrix `Σ A ⊗ conj(A)` over the cell's spins.
    pub fn transfer_matrix(&self) -> DMatrix<C64> {
        let c = self.chi;
        let mut e = DMatrix::<C64>::zeros(c * c, c * c);
        for row in &self.a {
            for m in row {
                e += m.kronecker(&m.map(|z| z.conj()));
            }
        }
        e
    }

    /// Moduli of the transfer-matrix spectrum, sorted descending.
    pub fn transfer_spectrum(&self) -> Vec<f64> {
        let e = self.transfer_matrix();
        let mut ev: Vec<f64> = if e.nrows() == 1 {
            vec![e[(0, 0)].norm()]
        } else {
            e.eigenvalues().expect("complex Schur converges").iter().map(|z| z.norm()).collect()
        };
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }

    /// Second-largest transfer eigenvalue modulus (0 for χ = 1).
    pub fn second_eigenvalue(&self) -> f64 {
        self.transfer_spectrum().get(1).copied().unwrap_or(0.0)
    }

    pub fn is_injective(&self) -> bool {
        self.second_eigenvalue() < 1.0 - 1e-8
    }

    /// Dense state of `cells` unit cells, spins first (site 1 most
    /// significant), open right bond last.
    pub fn dense_state(&self, cells: usize) -> DVector<C64> {
        // rows: spin configurations so far; columns: bond index
        let mut acc = DMatrix::<C64>::from_fn(1, self.chi, |_, j| self.left[j]);
        for _ in 0..cells {
            let rows = acc.nrows();
            let mut next = DMatrix::<C64>::zeros(rows * 4, self.chi);
            for r in 0..rows {
                for s in 0..2 {
                    for sp in 0..2 {
                        let v = acc.row(r) * &self.a[s][sp];
                        next.row_mut(4 * r + 2 * s + sp).copy_from(&v);
                    }
                }
            }
            acc = next;
        }
        DVector::from_iterator(acc.len(), acc.transpose().iter().copied())
    }
}

/// Rank-4 tensor `N^{(σ,σ')}_{i,j}`.
#[derive(Clone, Debug, PartialEq)]
pub struct MpsTensor {
    pub chi: usize,
    data: Vec<C64>,
}

impl MpsTensor {
    pub fn get(&self, i: usize, j: usize, s: usize, sp: usize) -> C64 {
        self.data[((i * self.chi + j) * 2 + s) * 2 + sp]
    }

    pub fn matrix(&self, s: usize, sp: usize) -> DMatrix<C64> {
        DMatrix::from_fn(self.chi, self.chi, |i, j| self.get(i, j, s, sp))
    }

    pub fn from_fn(chi: usize, f: impl Fn(usize, usize, usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(chi * chi * 4);
        for i in 0..chi {
            for j in 0..chi {
                for s in 0..2 {
                    for sp in 0..2 {
                        data.push(f(i, j, s, sp));
                    }
                }
            }
        }
        Self { chi, data }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.chi, other.chi);
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }
}

/// MPS whose cell tensor is read off a unitary `W` on bond ⊗ spin; the bond
/// factor is the more significant one. The left boundary is the bond state
/// `|0⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct SolvableMps {
    pub chi: usize,
    pub w: DMatrix<C64>,
    pub kicks: Option<[f64; 3]>,
}

impl SolvableMps {
    pub fn from_kicks(k: [f64; 3]) -> Self {
        Self { chi: 2, w: linalg::to_dmatrix4(&kick_unitary(k)), kicks: Some(k) }
    }

    pub fn paper() -> Self {
        Self::from_kicks(PAPER_KICKS)
    }

    pub fn from_unitary(w: DMatrix<C64>) -> Result<Self, SdkiError> {
        let (r, c) = w.shape();
        if r != c || r < 2 || r % 2 != 0 || !(r / 2).is_power_of_two() {
            return Err(SdkiError::BadShape(r, c));
        }
        let d = linalg::unitarity_defect(&w);
        if d > 1e-12 {
            return Err(SdkiError::NotUnitary(d));
        }
        Ok(Self { chi: r / 2, w, kicks: None })
    }

    /// Number of bond qubits.
    pub fn n_b(&self) -> usize {
        self.chi.trailing_zeros() as usize
    }

    pub fn boundary(&self) -> DVector<C64> {
        let mut l = DVector::zeros(self.chi);
        l[0] = C64::new(1.0, 0.0);
        l
    }

    pub fn tensor(&self) -> MpsTensor {
        mps_tensor(self)
    }

    /// Normalized cell MPS, `A = N/√2`.
    pub fn cell_mps(&self) -> CellMps {
        let n = self.tensor();
        let s = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        CellMps {
            chi: self.chi,
            a: [[n.matrix(0, 0) * s, n.matrix(0, 1) * s], [n.matrix(1, 0) * s, n.matrix(1, 1) * s]],
            left: self.boundary(),
        }
    }

    pub fn w4(&self) -> Result<Mat4, SdkiError> {
        if self.chi != 2 {
            return Err(SdkiError::Unsupported(self.chi));
        }
        Ok(Mat4::from_fn(|i, j| self.w[(i, j)]))
    }
}

/// `N^{(σ,σ')}_{i,j} = ⟨j|⟨σ'| W |i⟩|σ⟩`.
pub fn mps_tensor(mps: &SolvableMps) -> MpsTensor {
    MpsTensor::from_fn(mps.chi, |i, j, s, sp| mps.w[(2 * j + sp, 2 * i + s)])
}

/// Appends the preparation of one unit cell on fresh wires `s1`, `s2` (in
/// `|0⟩`) coupled to the bond wire: a Bell pair on the two spins, then `W` on
/// bond ⊗ `s2`. The result is `Σ N^{(σ,σ')}_{b,b'}/√2 |σ⟩|σ'⟩|b'⟩`.
pub fn append_unit_cell(b: &mut CircuitBuilder, w: &Mat4, bond: usize, s1: usize, s2: usize) {
    b.gate1(hadamard(), s1);
    b.gate2(cnot(), s1, s2);
    b.gate2(*w, bond, s2);
}

/// The unit-cell fragment on wires `[bond, s1, s2] = [0, 1, 2]`.
pub fn qmps_unit_cell_circuit(mps: &SolvableMps) -> Result<Circuit, SdkiError> {
    let w = mps.w4()?;
    let mut b = CircuitBuilder::new();
    append_unit_cell(&mut b, &w, 0, 1, 2);
    Ok(b.build())
}

/// Reads `N` back out of the fragment's unitary.
pub fn extract_tensor(fragment: &Circuit) -> MpsTensor {
    let u = crate::circuit::unitary_of(fragment).expect("fragment is unitary");
    let r2 = std::f64::consts::SQRT_2;
    MpsTensor::from_fn(2, |i, j, s, sp| u[(4 * j + 2 * s + sp, 4 * i)] * r2)
}

/// Default engine cap for the flat reference.
pub const FLAT_QUBIT_CAP: usize = 24;

/// Number of unit cells appended to the right of a window so that the light
/// cones of measured sites never reach the open end.
pub fn padding_cells(t: usize) -> usize {
    t.div_ceil(2)
}

/// Non-holographic baseline: prepare `window + ⌈t/2⌉` cells, run the brick
/// wall over all of them, then measure the `2·window` leftmost sites in X.
/// Wire 0 is the bond; wire `s` holds site `s`.
pub fn flat_reference_circuit(
    h: f64,
    t: usize,
    mps: &SolvableMps,
    window: usize,
    include_temporal_boundary: bool,
) -> Result<Circuit, SdkiError> {
    let cells = window + padding_cells(t);
    let qubits = 2 * cells + mps.n_b();
    if qubits > FLAT_QUBIT_CAP {
        return Err(SdkiError::TooManyQubits { qubits, cap: FLAT_QUBIT_CAP });
    }
    let w = mps.w4()?;
    let mut b = CircuitBuilder::new();
    b.qubit(0);
    for k in 1..=cells {
        append_unit_cell(&mut b, &w, 0, 2 * k - 1, 2 * k);
    }
    for g in floquet_gates(h, t, 2 * cells, include_temporal_boundary) {
        b.gate2_tagged(g.tag, g.site, g.site + 1);
    }
    for s in 1..=2 * window {
        b.measure(s, Basis::X, BitLabel::Site(s));
    }
    Ok(b.build())
}

pub fn is_identity(m: &Mat2) -> bool {
    (m - identity2()).iter().all(|z| z.norm() < 1e-15)
}
