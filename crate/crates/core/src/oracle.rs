//! Reference correlators without sampling.
//!
//! Two independent evaluators of `⟨ψ_t|σ^α_j σ^β_k|ψ_t⟩` on the same finite
//! geometry (window cells plus right padding, left edge at site 1):
//! a dense statevector over all sites and the open bond, and an MPS evolved
//! by two-site gates with SVD recompression (TEBD). Both feed the same
//! site-averaging window.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::linalg::{Mat2, Mat4, Pauli};
use crate::par::map_indices;
use crate::sdki::{floquet_gates, padding_cells, CellMps};

/// Dense oracle cap on spins plus bond qubits.
pub const DENSE_QUBIT_CAP: usize = 14;
/// Largest imaginary part tolerated on an off-site correlator.
pub const IMAG_TOL: f64 = 1e-10;
/// Discarded weight allowed in exact mode.
pub const EXACT_DISCARD_TOL: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("{qubits} qubits exceed the dense oracle cap of {cap}")]
    TooManyQubits { qubits: usize, cap: usize },
    #[error("truncation discarded weight {discarded:.3e} in exact mode")]
    Precision { discarded: f64 },
    #[error("correlator <{alpha}{beta}> at ({j}, {k}) has imaginary part {imag:.3e}")]
    ImaginaryResidue { alpha: char, beta: char, j: usize, k: usize, imag: f64 },
    #[error("SVD failed: {0}")]
    Svd(String),
    #[error("invalid TEBD config: {0}")]
    Config(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("table row {row}: {message}")]
    Parse { row: usize, message: String },
}

/// Site-averaging window over `2L` measured sites: for distance `r`, sites
/// `j` run from `j_min` to `2(L - ⌈r/2⌉ - 1)` and the partner is
/// `j + r + δ`, `δ ∈ {0, 1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AveragingWindow {
    pub two_l: usize,
    pub j_min: usize,
}

impl AveragingWindow {
    /// Window used for the hardware-style comparison (starts at site 9).
    pub fn standard(two_l: usize) -> Self {
        Self { two_l, j_min: 9 }
    }

    /// Every site from the left edge.
    pub fn full(two_l: usize) -> Self {
        Self { two_l, j_min: 1 }
    }

    pub fn j_max(&self, r: usize) -> Option<usize> {
        let l = self.two_l / 2;
        let c = r.div_ceil(2);
        if l < c + 1 {
            return None;
        }
        let jm = 2 * (l - c - 1);
        (jm >= self.j_min.max(1)).then_some(jm)
    }

    /// `(j, k)` pairs averaged for distance `r`; empty when the window is.
    pub fn terms(&self, r: usize) -> Vec<(usize, usize)> {
        let Some(jm) = self.j_max(r) else { return Vec::new() };
        let mut out = Vec::with_capacity(2 * (jm + 1 - self.j_min));
        for j in self.j_min.max(1)..=jm {
            for delta in 0..2 {
                let k = j + r + delta;
                debug_assert!(k <= self.two_l);
                out.push((j, k));
            }
        }
        out
    }

    /// Distances with a non-empty window, in increasing order.
    pub fn distances(&self) -> Vec<usize> {
        (0..self.two_l).take_while(|&r| self.j_max(r).is_some()).collect()
    }

    /// Highest site touched by any term.
    pub fn reach(&self) -> usize {
        self.distances().iter().flat_map(|&r| self.terms(r)).map(|(_, k)| k).max().unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelatorEntry {
    pub alpha: Pauli,
    pub beta: Pauli,
    /// Distance, or the first member of the bin `{r, r+1}` when `binned`.
    pub r: usize,
    pub t: usize,
    pub value: f64,
    pub stderr: f64,
    pub n_terms: usize,
    pub binned: bool,
}

pub type EntryKey = (Pauli, Pauli, usize, usize, bool);

impl CorrelatorEntry {
    pub fn key(&self) -> EntryKey {
        (self.alpha, self.beta, self.r, self.t, self.binned)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorrelatorTable {
    pub entries: Vec<CorrelatorEntry>,
}

const CSV_HEADER: [&str; 8] = ["alpha", "beta", "r", "t", "value", "stderr", "n_terms", "binned"];

impl CorrelatorTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, alpha: Pauli, beta: Pauli, r: usize, t: usize, binned: bool) -> Option<&CorrelatorEntry> {
        self.entries.iter().find(|e| e.key() == (alpha, beta, r, t, binned))
    }

    /// Distinct depths present, sorted.
    pub fn depths(&self) -> Vec<usize> {
        let mut ts: Vec<usize> = self.entries.iter().map(|e| e.t).collect();
        ts.sort_unstable();
        ts.dedup();
        ts
    }

    pub fn extend(&mut self, other: CorrelatorTable) {
        self.entries.extend(other.entries);
    }

    /// Sorts by `(t, α, β, binned, r)` so output order does not depend on how
    /// the table was assembled.
    pub fn sort(&mut self) {
        self.entries.sort_by_key(|e| (e.t, e.alpha, e.beta, e.binned, e.r));
    }

    /// Largest value difference over shared keys; `None` if the key sets
    /// differ.
    pub fn max_abs_diff(&self, other: &CorrelatorTable) -> Option<f64> {
        let a: BTreeMap<_, _> = self.entries.iter().map(|e| (e.key(), e.value)).collect();
        let b: BTreeMap<_, _> = other.entries.iter().map(|e| (e.key(), e.value)).collect();
        if a.len() != b.len() || a.keys().any(|k| !b.contains_key(k)) {
            return None;
        }
        Some(a.iter().map(|(k, v)| (v - b[k]).abs()).fold(0.0, f64::max))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), OracleError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(CSV_HEADER)?;
        for e in &self.entries {
            w.write_record([
                e.alpha.label().to_string(),
                e.beta.label().to_string(),
                e.r.to_string(),
                e.t.to_string(),
                e.value.to_string(),
                e.stderr.to_string(),
                e.n_terms.to_string(),
                e.binned.to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, OracleError> {
        let mut rd = csv::Reader::from_reader(input);
        let header = rd.headers()?.clone();
        if header.iter().ne(CSV_HEADER.iter().copied()) {
            return Err(OracleError::Parse { row: 1, message: format!("expected header {}", CSV_HEADER.join(",")) });
        }
        let mut entries = Vec::new();
        for (i, rec) in rd.records().enumerate() {
            let rec = rec?;
            let row = i + 2;
            let err = |m: &str| OracleError::Parse { row, message: m.to_string() };
            let pauli = |s: &str| {
                let mut c = s.chars();
                match (c.next(), c.next()) {
                    (Some(ch), None) => Pauli::from_label(ch),
                    _ => None,
                }
            };
            entries.push(CorrelatorEntry {
                alpha: pauli(&rec[0]).ok_or_else(|| err("bad alpha"))?,
                beta: pauli(&rec[1]).ok_or_else(|| err("bad beta"))?,
                r: rec[2].parse().map_err(|_| err("bad r"))?,
                t: rec[3].parse().map_err(|_| err("bad t"))?,
                value: rec[4].parse().map_err(|_| err("bad value"))?,
                stderr: rec[5].parse().map_err(|_| err("bad stderr"))?,
                n_terms: rec[6].parse().map_err(|_| err("bad n_terms"))?,
                binned: rec[7].parse().map_err(|_| err("bad binned"))?,
            });
        }
        Ok(Self { entries })
    }
}

/// What to evaluate: field, depth, window, which Pauli pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleSpec {
    pub h: f64,
    pub t: usize,
    pub window: AveragingWindow,
    pub pairs: Vec<(Pauli, Pauli)>,
    pub include_temporal_boundary: bool,
}

impl OracleSpec {
    pub fn xx(h: f64, t: usize, window: AveragingWindow) -> Self {
        Self { h, t, window, pairs: vec![(Pauli::X, Pauli::X)], include_temporal_boundary: true }
    }

    fn window_cells(&self) -> usize {
        self.window.two_l / 2
    }
}

/// Two-point values `⟨σ^α_j σ^β_k⟩` for `1 ≤ j ≤ k ≤ sites` (window-relative
/// site numbers).
#[derive(Clone, Debug, PartialEq)]
pub struct PairValues {
    pub sites: usize,
    values: Vec<f64>,
}

impl PairValues {
    pub fn get(&self, j: usize, k: usize) -> f64 {
        let (j, k) = if j <= k { (j, k) } else { (k, j) };
        self.values[(j - 1) * self.sites + (k - 1)]
    }

    pub fn max_abs_diff(&self, other: &PairValues) -> f64 {
        assert_eq!(self.sites, other.sites);
        let diff = |(a, b): (&f64, &f64)| match (a.is_nan(), b.is_nan()) {
            (true, true) => 0.0,
            (false, false) => (a - b).abs(),
            _ => f64::INFINITY,
        };
        self.values.iter().zip(&other.values).map(diff).fold(0.0, f64::max)
    }
}

fn check_real(z: C64, alpha: Pauli, beta: Pauli, j: usize, k: usize) -> Result<f64, OracleError> {
    if j != k && z.im.abs() >= IMAG_TOL {
        return Err(OracleError::ImaginaryResidue { alpha: alpha.label(), beta: beta.label(), j, k, imag: z.im });
    }
    // on one site σ^ασ^β is not Hermitian for α ≠ β; keep its Hermitian part
    Ok(z.re)
}

/// Smoothed correlators for every distance with a non-empty window.
pub fn smooth(alpha: Pauli, beta: Pauli, t: usize, window: &AveragingWindow, pairs: &PairValues) -> CorrelatorTable {
    let entries = window
        .distances()
        .into_iter()
        .map(|r| {
            let terms = window.terms(r);
            let sum: f64 = terms.iter().map(|&(j, k)| pairs.get(j, k)).sum();
            CorrelatorEntry {
                alpha,
                beta,
                r,
                t,
                value: sum / terms.len() as f64,
                stderr: 0.0,
                n_terms: terms.len(),
                binned: false,
            }
        })
        .collect();
    CorrelatorTable { entries }
}

// ---------------------------------------------------------------- dense

/// Statevector over `n` spins (site 1 most significant) and a `χ`-level
/// bond as the least significant factor.
struct DenseChain {
    n: usize,
    chi: usize,
    psi: Vec<C64>,
}

impl DenseChain {
    fn stride(&self, site: usize) -> usize {
        self.chi << (self.n - site)
    }

    fn apply_pair(&mut self, site: usize, g: &Mat4) {
        let (sa, sb) = (self.stride(site), self.stride(site + 1));
        for base in 0..self.psi.len() {
            if base & sa != 0 || base & sb != 0 {
                continue;
            }
            let idx = [base, base + sb, base + sa, base + sa + sb];
            let v = idx.map(|i| self.psi[i]);
            for (row, &i) in idx.iter().enumerate() {
                self.psi[i] = (0..4).map(|c| g[(row, c)] * v[c]).sum();
            }
        }
    }

    fn apply_single(&self, site: usize, m: &Mat2) -> Vec<C64> {
        let s = self.stride(site);
        let mut out = self.psi.clone();
        for base in 0..self.psi.len() {
            if base & s != 0 {
                continue;
            }
            let (a, b) = (self.psi[base], self.psi[base + s]);
            out[base] = m[(0, 0)] * a + m[(0, 1)] * b;
            out[base + s] = m[(1, 0)] * a + m[(1, 1)] * b;
        }
        out
    }
}

fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Evolved dense chain for the window plus `⌈t/2⌉` padding cells.
fn dense_chain(spec: &OracleSpec, mps: &CellMps) -> Result<DenseChain, OracleError> {
    let cells = spec.window_cells() + padding_cells(spec.t);
    let n = 2 * cells;
    let bond_qubits = mps.chi.next_power_of_two().trailing_zeros() as usize;
    if n + bond_qubits > DENSE_QUBIT_CAP {
        return Err(OracleError::TooManyQubits { qubits: n + bond_qubits, cap: DENSE_QUBIT_CAP });
    }
    let psi = mps.dense_state(cells).iter().copied().collect();
    let mut chain = DenseChain { n, chi: mps.chi, psi };
    for g in floquet_gates(spec.h, spec.t, n, spec.include_temporal_boundary) {
        chain.apply_pair(g.site, &g.tag.matrix());
    }
    Ok(chain)
}

/// All two-point values over the window sites from the dense oracle.
pub fn dense_pair_values(spec: &OracleSpec, mps: &CellMps, alpha: Pauli, beta: Pauli) -> Result<PairValues, OracleError> {
    let chain = dense_chain(spec, mps)?;
    let sites = spec.window.two_l;
    let a: Vec<Vec<C64>> = (1..=sites).map(|j| chain.apply_single(j, &alpha.matrix())).collect();
    let b: Vec<Vec<C64>> = (1..=sites).map(|k| chain.apply_single(k, &beta.matrix())).collect();
    let mut values = vec![f64::NAN; sites * sites];
    for j in 1..=sites {
        for k in j..=sites {
            values[(j - 1) * sites + (k - 1)] = check_real(inner(&a[j - 1], &b[k - 1]), alpha, beta, j, k)?;
        }
    }
    Ok(PairValues { sites, values })
}

/// Single-site expectations `⟨σ^α_j⟩`, `j = 1..=2L`, from the dense oracle.
pub fn dense_site_values(spec: &OracleSpec, mps: &CellMps, alpha: Pauli) -> Result<Vec<f64>, OracleError> {
    let chain = dense_chain(spec, mps)?;
    Ok((1..=spec.window.two_l).map(|j| inner(&chain.psi, &chain.apply_single(j, &alpha.matrix())).re).collect())
}

pub fn dense_correlators(spec: &OracleSpec, mps: &CellMps) -> Result<CorrelatorTable, OracleError> {
    let mut table = CorrelatorTable::default();
    for &(alpha, beta) in &spec.pairs {
        let pv = dense_pair_values(spec, mps, alpha, beta)?;
        table.extend(smooth(alpha, beta, spec.t, &spec.window, &pv));
    }
    Ok(table)
}

// ---------------------------------------------------------------- TEBD

#[derive(Clone, Debug, PartialEq)]
pub struct TebdConfig {
    pub max_bond: usize,
    /// Singular values below this are dropped.
    pub svd_cutoff: f64,
    /// Cells added left of the window (0 keeps the physical left edge).
    pub left_padding_cells: usize,
    /// Cells right of the window; `None` means `⌈t/2⌉`, enough for the
    /// light cone to stay clear of the open end.
    pub right_padding_cells: Option<usize>,
    /// Fail if any truncation discards more than [`EXACT_DISCARD_TOL`].
    pub exact_mode: bool,
}

impl Default for TebdConfig {
    fn default() -> Self {
        Self { max_bond: 512, svd_cutoff: 1e-13, left_padding_cells: 0, right_padding_cells: None, exact_mode: true }
    }
}

impl TebdConfig {
    pub fn validate(&self) -> Result<(), OracleError> {
        if self.max_bond == 0 {
            return Err(OracleError::Config("max_bond must be positive".into()));
        }
        if !(self.svd_cutoff >= 0.0 && self.svd_cutoff < 1.0) {
            return Err(OracleError::Config(format!("svd_cutoff {} outside [0, 1)", self.svd_cutoff)));
        }
        Ok(())
    }

    /// Total number of spins in the chain for a window of `window_cells`.
    pub fn sites(&self, window_cells: usize, t: usize) -> usize {
        2 * (self.left_padding_cells + window_cells + self.right_padding_cells.unwrap_or(padding_cells(t)))
    }
}

/// Rank-3 tensor `(left, physical, right)`, row-major.
#[derive(Clone, Debug)]
struct Site {
    dl: usize,
    d: usize,
    dr: usize,
    data: Vec<C64>,
}

impl Site {
    fn at(&self, l: usize, s: usize, r: usize) -> C64 {
        self.data[(l * self.d + s) * self.dr + r]
    }

    /// `(dl·d) × dr` grouping.
    fn left_matrix(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.dl * self.d, self.dr, &self.data)
    }

    /// `dl × (d·dr)` grouping.
    fn right_matrix(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.dl, self.d * self.dr, &self.data)
    }

    fn from_left_matrix(m: &DMatrix<C64>, d: usize) -> Self {
        let (rows, dr) = m.shape();
        Self { dl: rows / d, d, dr, data: m.transpose().iter().copied().collect() }
    }

    fn from_right_matrix(m: &DMatrix<C64>, d: usize) -> Self {
        let (dl, cols) = m.shape();
        Self { dl, d, dr: cols / d, data: m.transpose().iter().copied().collect() }
    }

    fn slice(&self, s: usize) -> DMatrix<C64> {
        DMatrix::from_fn(self.dl, self.dr, |l, r| self.at(l, s, r))
    }
}

/// Thin SVD `m = U·diag(s)·Vᵀ†` with `s` nonincreasing.
fn thin_svd(m: &DMatrix<C64>) -> Result<(DMatrix<C64>, Vec<f64>, DMatrix<C64>), OracleError> {
    let fm = faer::Mat::<C64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
    let svd = fm.thin_svd().map_err(|e| OracleError::Svd(format!("{e:?}")))?;
    let (u, v) = (svd.U(), svd.V());
    let k = u.ncols();
    let s = (0..k).map(|i| svd.S().column_vector()[i].re).collect();
    let u = DMatrix::from_fn(m.nrows(), k, |i, j| u[(i, j)]);
    let vt = DMatrix::from_fn(k, m.ncols(), |i, j| v[(j, i)].conj());
    Ok((u, s, vt))
}

/// Open-boundary MPS of spins followed by one `χ`-level bond site. Sites
/// left of `center` are left-canonical, right of it right-canonical.
#[derive(Clone, Debug)]
pub struct Mps {
    sites: Vec<Site>,
    center: usize,
    discarded: f64,
}

impl Mps {
    /// `cells` unit cells of `mps`. Each cell is split exactly into two
    /// sites through a `2χ` bond, then the chain is brought to canonical
    /// form.
    pub fn from_cells(mps: &CellMps, cells: usize) -> Self {
        let chi = mps.chi;
        let mut sites = Vec::with_capacity(2 * cells + 1);
        for k in 0..cells {
            let dl = if k == 0 { 1 } else { chi };
            let mut first = Site { dl, d: 2, dr: 2 * chi, data: vec![C64::new(0.0, 0.0); dl * 4 * chi] };
            for i in 0..chi {
                for s in 0..2 {
                    let m = i * 2 + s;
                    if k == 0 {
                        first.data[s * 2 * chi + m] = mps.left[i];
                    } else {
                        first.data[(i * 2 + s) * 2 * chi + m] = C64::new(1.0, 0.0);
                    }
                }
            }
            let mut second = Site { dl: 2 * chi, d: 2, dr: chi, data: vec![C64::new(0.0, 0.0); 4 * chi * chi] };
            for i in 0..chi {
                for s in 0..2 {
                    for sp in 0..2 {
                        for j in 0..chi {
                            second.data[((i * 2 + s) * 2 + sp) * chi + j] = mps.a[s][sp][(i, j)];
                        }
                    }
                }
            }
            sites.push(first);
            sites.push(second);
        }
        let dl = if cells == 0 { 1 } else { chi };
        let d = if cells == 0 { 1 } else { chi };
        let mut end = Site { dl, d, dr: 1, data: vec![C64::new(0.0, 0.0); dl * d] };
        if cells == 0 {
            end.data[0] = C64::new(1.0, 0.0);
        } else {
            for j in 0..chi {
                end.data[j * chi + j] = C64::new(1.0, 0.0);
            }
        }
        sites.push(end);
        let last = sites.len() - 1;
        let mut out = Self { sites, center: last, discarded: 0.0 };
        out.move_center(0);
        out
    }

    /// Number of spin sites (the trailing bond site excluded).
    pub fn num_spins(&self) -> usize {
        self.sites.len() - 1
    }

    pub fn max_bond(&self) -> usize {
        self.sites.iter().map(|s| s.dr).max().unwrap_or(1)
    }

    pub fn discarded_weight(&self) -> f64 {
        self.discarded
    }

    fn move_center(&mut self, to: usize) {
        while self.center < to {
            let c = self.center;
            let qr = self.sites[c].left_matrix().qr();
            let (q, r) = (qr.q(), qr.r());
            let d = self.sites[c].d;
            self.sites[c] = Site::from_left_matrix(&q, d);
            let next = &self.sites[c + 1];
            let merged = r * next.right_matrix();
            self.sites[c + 1] = Site::from_right_matrix(&merged, next.d);
            self.center += 1;
        }
        while self.center > to {
            let c = self.center;
            let qr = self.sites[c].right_matrix().adjoint().qr();
            let (q, r) = (qr.q(), qr.r());
            let d = self.sites[c].d;
            self.sites[c] = Site::from_right_matrix(&q.adjoint(), d);
            let prev = &self.sites[c - 1];
            let merged = prev.left_matrix() * r.adjoint();
            self.sites[c - 1] = Site::from_left_matrix(&merged, prev.d);
            self.center -= 1;
        }
    }

    /// Applies `g` to spins `(site, site + 1)` (1-based, `site` the more
    /// significant factor) and recompresses. Leaves the center on `site + 1`.
    pub fn apply_pair(&mut self, site: usize, g: &Mat4, cfg: &TebdConfig) -> Result<(), OracleError> {
        let a = site - 1;
        self.move_center(a);
        let (left, right) = (&self.sites[a], &self.sites[a + 1]);
        let (dl, dr) = (left.dl, right.dr);
        let theta = left.left_matrix() * right.right_matrix();
        // theta rows (l, s1), columns (s2, r)
        let mut out = DMatrix::<C64>::zeros(dl * 2, 2 * dr);
        for l in 0..dl {
            for r in 0..dr {
                let v = [theta[(l * 2, r)], theta[(l * 2, dr + r)], theta[(l * 2 + 1, r)], theta[(l * 2 + 1, dr + r)]];
                for s1 in 0..2 {
                    for s2 in 0..2 {
                        let row = 2 * s1 + s2;
                        out[(l * 2 + s1, s2 * dr + r)] = (0..4).map(|c| g[(row, c)] * v[c]).sum();
                    }
                }
            }
        }
        let (u, sv, vt) = thin_svd(&out)?;
        let keep = sv.iter().take_while(|&&s| s > cfg.svd_cutoff).count().clamp(1, cfg.max_bond);
        let dropped: f64 = sv.iter().skip(keep).map(|s| s * s).sum();
        self.discarded += dropped;
        if cfg.exact_mode && self.discarded > EXACT_DISCARD_TOL {
            return Err(OracleError::Precision { discarded: self.discarded });
        }
        let u = u.columns(0, keep).into_owned();
        let mut svt = vt.rows(0, keep).into_owned();
        for (i, mut row) in svt.row_iter_mut().enumerate() {
            row *= C64::new(sv[i], 0.0);
        }
        self.sites[a] = Site::from_left_matrix(&u, 2);
        self.sites[a + 1] = Site::from_right_matrix(&svt, 2);
        self.center = a + 1;
        Ok(())
    }

    fn identity_step_left(env: &DMatrix<C64>, s: &Site) -> DMatrix<C64> {
        let mut out = DMatrix::zeros(s.dr, s.dr);
        for p in 0..s.d {
            let m = s.slice(p);
            out += m.adjoint() * env * &m;
        }
        out
    }

    fn op_step_left(env: &DMatrix<C64>, s: &Site, op: &Mat2) -> DMatrix<C64> {
        let slices: Vec<DMatrix<C64>> = (0..2).map(|p| s.slice(p)).collect();
        let mut out = DMatrix::zeros(s.dr, s.dr);
        for sp in 0..2 {
            let em = env * &slices[sp];
            for p in 0..2 {
                let o = op[(p, sp)];
                if o.norm() > 0.0 {
                    out += slices[p].adjoint() * &em * o;
                }
            }
        }
        out
    }

    fn identity_step_right(env: &DMatrix<C64>, s: &Site) -> DMatrix<C64> {
        let mut out = DMatrix::zeros(s.dl, s.dl);
        for p in 0..s.d {
            let m = s.slice(p);
            out += m.map(|z| z.conj()) * env * m.transpose();
        }
        out
    }

    fn close(l: &DMatrix<C64>, r: &DMatrix<C64>) -> C64 {
        l.iter().zip(r.iter()).map(|(a, b)| a * b).sum()
    }

    /// Left environments `L[i]` (sites before `i` contracted) and right
    /// environments `R[i]` (sites from `i` on contracted).
    fn environments(&self) -> (Vec<DMatrix<C64>>, Vec<DMatrix<C64>>) {
        let n = self.sites.len();
        let mut left = vec![DMatrix::from_element(1, 1, C64::new(1.0, 0.0))];
        for s in &self.sites {
            let next = Self::identity_step_left(left.last().unwrap(), s);
            left.push(next);
        }
        let mut right = vec![DMatrix::from_element(1, 1, C64::new(1.0, 0.0)); n + 1];
        for i in (0..n).rev() {
            right[i] = Self::identity_step_right(&right[i + 1], &self.sites[i]);
        }
        (left, right)
    }

    pub fn norm_sqr(&self) -> f64 {
        let (left, _) = self.environments();
        left.last().unwrap()[(0, 0)].re
    }

    /// `⟨O_j⟩` on spin `j` (1-based).
    pub fn expect1(&self, j: usize, op: &Mat2) -> C64 {
        let (left, right) = self.environments();
        let norm = left.last().unwrap()[(0, 0)].re;
        Self::close(&Self::op_step_left(&left[j - 1], &self.sites[j - 1], op), &right[j]) / norm
    }

    /// `⟨σ^α_j σ^β_k⟩` for spins `offset + 1 ..= offset + count`.
    pub fn pair_values(&self, offset: usize, count: usize, alpha: Pauli, beta: Pauli) -> Result<PairValues, OracleError> {
        self.pair_values_within(offset, count, 1, count, alpha, beta)
    }

    /// Like [`Mps::pair_values`] but only for window rows `j ≥ first_row`
    /// and `k - j ≤ max_sep`; other entries are NaN.
    pub fn pair_values_within(
        &self,
        offset: usize,
        count: usize,
        first_row: usize,
        max_sep: usize,
        alpha: Pauli,
        beta: Pauli,
    ) -> Result<PairValues, OracleError> {
        let (left, right) = self.environments();
        let norm = left.last().unwrap()[(0, 0)].re;
        let (ma, mb) = (alpha.matrix(), beta.matrix());
        let same = ma * mb;
        let rows: Vec<Result<Vec<f64>, OracleError>> = map_indices(count, |jj| {
            let mut row = vec![f64::NAN; count];
            if jj + 1 < first_row {
                return Ok(row);
            }
            let j = offset + jj + 1;
            let onsite = Self::close(&Self::op_step_left(&left[j - 1], &self.sites[j - 1], &same), &right[j]) / norm;
            row[jj] = check_real(onsite, alpha, beta, jj + 1, jj + 1)?;
            let last = count.min(jj + 1 + max_sep);
            let mut env = Self::op_step_left(&left[j - 1], &self.sites[j - 1], &ma);
            for kk in jj + 1..last {
                let k = offset + kk + 1;
                let site = &self.sites[k - 1];
                let z = Self::close(&Self::op_step_left(&env, site, &mb), &right[k]) / norm;
                row[kk] = check_real(z, alpha, beta, jj + 1, kk + 1)?;
                if kk + 1 < last {
                    env = Self::identity_step_left(&env, site);
                }
            }
            Ok(row)
        });
        let mut values = Vec::with_capacity(count * count);
        for row in rows {
            values.extend(row?);
        }
        Ok(PairValues { sites: count, values })
    }
}

/// Evolves the chain `left padding + window + right padding` by `t` layers.
pub fn tebd_evolve(spec: &OracleSpec, mps: &CellMps, config: &TebdConfig) -> Result<Mps, OracleError> {
    config.validate()?;
    let n = config.sites(spec.window_cells(), spec.t);
    let mut state = Mps::from_cells(mps, n / 2);
    for g in floquet_gates(spec.h, spec.t, n, spec.include_temporal_boundary) {
        state.apply_pair(g.site, &g.tag.matrix(), config)?;
    }
    Ok(state)
}

pub fn tebd_pair_values(
    spec: &OracleSpec,
    mps: &CellMps,
    config: &TebdConfig,
    alpha: Pauli,
    beta: Pauli,
) -> Result<PairValues, OracleError> {
    let state = tebd_evolve(spec, mps, config)?;
    state.pair_values(2 * config.left_padding_cells, spec.window.two_l, alpha, beta)
}

pub fn tebd_correlators(spec: &OracleSpec, mps: &CellMps, config: &TebdConfig) -> Result<CorrelatorTable, OracleError> {
    let state = tebd_evolve(spec, mps, config)?;
    let mut table = CorrelatorTable::default();
    for &(alpha, beta) in &spec.pairs {
        let max_sep = spec.window.distances().last().map_or(0, |r| r + 1);
        let pv =
            state.pair_values_within(2 * config.left_padding_cells, spec.window.two_l, spec.window.j_min, max_sep, alpha, beta)?;
        table.extend(smooth(alpha, beta, spec.t, &spec.window, &pv));
    }
    Ok(table)
}

// ---------------------------------------------------------------- errors

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorEntry {
    pub alpha: Pauli,
    pub beta: Pauli,
    pub r: usize,
    pub t: usize,
    pub binned: bool,
    pub c_expt: f64,
    pub c_theory: f64,
    pub stderr: f64,
    /// `None` when the experimental standard error is zero.
    pub epsilon: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ErrorTable {
    pub entries: Vec<ErrorEntry>,
    /// Experimental keys with no theory counterpart.
    pub unmatched: Vec<EntryKey>,
}

impl ErrorTable {
    /// Mean of the defined `ε`.
    pub fn mean(&self) -> Option<f64> {
        let eps: Vec<f64> = self.entries.iter().filter_map(|e| e.epsilon).collect();
        (!eps.is_empty()).then(|| eps.iter().sum::<f64>() / eps.len() as f64)
    }

    /// Entries whose `ε` could not be formed.
    pub fn undefined(&self) -> Vec<&ErrorEntry> {
        self.entries.iter().filter(|e| e.epsilon.is_none()).collect()
    }

    pub fn fraction_within(&self, bound: f64) -> f64 {
        let eps: Vec<f64> = self.entries.iter().filter_map(|e| e.epsilon).collect();
        eps.iter().filter(|&&e| e <= bound).count() as f64 / eps.len().max(1) as f64
    }

    /// Counts of `ε` in `[i·width, (i+1)·width)`; the last bin is open.
    pub fn histogram(&self, width: f64, bins: usize) -> Vec<usize> {
        let mut h = vec![0; bins];
        for e in self.entries.iter().filter_map(|e| e.epsilon) {
            h[((e / width) as usize).min(bins - 1)] += 1;
        }
        h
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), OracleError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["r", "t", "c_expt", "c_theory", "stderr", "epsilon"])?;
        for e in &self.entries {
            w.write_record([
                e.r.to_string(),
                e.t.to_string(),
                e.c_expt.to_string(),
                e.c_theory.to_string(),
                e.stderr.to_string(),
                e.epsilon.map_or_else(|| "nan".to_string(), |x| x.to_string()),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

impl fmt::Display for ErrorTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let defined = self.entries.len() - self.undefined().len();
        write!(f, "entries = {}\ndefined = {}\n", self.entries.len(), defined)?;
        match self.mean() {
            Some(m) => writeln!(f, "mean_epsilon = {m:.4}"),
            None => writeln!(f, "mean_epsilon = nan"),
        }
    }
}

/// `ε = |C_expt − C_theory| / ΔC` for every experimental entry that has a
/// theory counterpart.
pub fn normalized_errors(expt: &CorrelatorTable, theory: &CorrelatorTable) -> ErrorTable {
    let th: BTreeMap<EntryKey, f64> = theory.entries.iter().map(|e| (e.key(), e.value)).collect();
    let mut out = ErrorTable::default();
    for e in &expt.entries {
        let Some(&c_theory) = th.get(&e.key()) else {
            out.unmatched.push(e.key());
            continue;
        };
        let diff = (e.value - c_theory).abs();
        out.entries.push(ErrorEntry {
            alpha: e.alpha,
            beta: e.beta,
            r: e.r,
            t: e.t,
            binned: e.binned,
            c_expt: e.value,
            c_theory,
            stderr: e.stderr,
            epsilon: (e.stderr > 0.0).then(|| diff / e.stderr),
        });
    }
    out
}
