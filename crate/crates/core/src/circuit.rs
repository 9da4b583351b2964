//! Circuit intermediate representation.
//!
//! A [`Circuit`] is an ordered list of [`Instruction`]s over numbered qubit
//! *wires*. Wires are reused: a `Reset` retires the current occupant of a
//! wire (its [`QubitId::generation`] ends) and a later `Allocate` brings up
//! the next generation in `|0⟩`. A wire whose first instruction is not an
//! `Allocate` is live from circuit start.
//!
//! Two-qubit gates carry explicit 4×4 matrices; the first target is the more
//! significant tensor factor. A gate may optionally carry a
//! [`DualUnitaryTag`] describing its factorization, which rewrite passes use.
//!
//! Serialization is a line-oriented text format, documented in
//! `docs/circuit-format.md`.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::kernel;
use crate::linalg::{self, kron, unitarity_defect, Mat2, Mat4, ONE};

/// Max-norm tolerance for gate unitarity.
pub const UNITARY_TOL: f64 = 1e-12;

/// Default qubit cap for [`unitary_of`].
pub const UNITARY_QUBIT_CAP: usize = 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QubitId {
    pub index: usize,
    pub generation: u32,
}

impl QubitId {
    pub fn new(index: usize, generation: u32) -> Self {
        Self { index, generation }
    }
}

impl fmt::Display for QubitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "q{}.{}", self.index, self.generation)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Basis {
    Z,
    X,
}

/// What a classical bit records.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BitLabel {
    /// Readout of chain site `j` (1-based).
    Site(usize),
    /// Leakage herald.
    Herald,
    Scratch,
}

/// Factorization `(u[0]⊗u[1]) · V[J] · (v[0]⊗v[1])` of a dual-unitary gate,
/// with `V[J] = exp[-i(π/4 σˣσˣ + π/4 σʸσʸ + J σᶻσᶻ)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DualUnitaryTag {
    pub u: [Mat2; 2],
    pub v: [Mat2; 2],
    pub coupling: f64,
}

impl DualUnitaryTag {
    pub fn matrix(&self) -> Mat4 {
        kron(&self.u[0], &self.u[1]) * dual_unitary_core(self.coupling) * kron(&self.v[0], &self.v[1])
    }
}

/// `V[J] = exp[-i(π/4 σˣσˣ + π/4 σʸσʸ + J σᶻσᶻ)]`.
pub fn dual_unitary_core(coupling: f64) -> Mat4 {
    use crate::linalg::{pauli_pair_rotation, Pauli};
    use std::f64::consts::FRAC_PI_4;
    pauli_pair_rotation(Pauli::X, FRAC_PI_4)
        * pauli_pair_rotation(Pauli::Y, FRAC_PI_4)
        * pauli_pair_rotation(Pauli::Z, coupling)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Instruction {
    Gate1 { matrix: Mat2, target: QubitId },
    Gate2 { matrix: Mat4, targets: [QubitId; 2], tag: Option<DualUnitaryTag> },
    Measure { target: QubitId, bit: usize, basis: Basis },
    Reset { target: QubitId },
    Allocate { target: QubitId },
    ConditionalGate1 { matrix: Mat2, target: QubitId, bit: usize, value: bool },
}

impl Instruction {
    pub fn qubits(&self) -> Vec<QubitId> {
        match self {
            Instruction::Gate1 { target, .. }
            | Instruction::Measure { target, .. }
            | Instruction::Reset { target }
            | Instruction::Allocate { target }
            | Instruction::ConditionalGate1 { target, .. } => vec![*target],
            Instruction::Gate2 { targets, .. } => targets.to_vec(),
        }
    }

    pub fn is_unitary_op(&self) -> bool {
        matches!(self, Instruction::Gate1 { .. } | Instruction::Gate2 { .. })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Circuit {
    instructions: Vec<Instruction>,
    labels: Vec<BitLabel>,
    num_qubits: usize,
    global_phase: C64,
}

impl Default for Circuit {
    fn default() -> Self {
        Self { instructions: Vec::new(), labels: Vec::new(), num_qubits: 0, global_phase: ONE }
    }
}

impl Circuit {
    pub fn instructions(&self) -> &[Instruction] {
        &self.instructions
    }

    pub fn num_classical_bits(&self) -> usize {
        self.labels.len()
    }

    pub fn bit_labels(&self) -> &[BitLabel] {
        &self.labels
    }

    /// Number of distinct wires referenced (`1 + max wire index`).
    pub fn num_wires(&self) -> usize {
        self.num_qubits
    }

    pub fn global_phase(&self) -> C64 {
        self.global_phase
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    /// Maximum number of simultaneously live wires over all program points.
    pub fn max_live_qubits(&self) -> usize {
        let mut first_is_alloc: BTreeMap<usize, bool> = BTreeMap::new();
        for ins in &self.instructions {
            for q in ins.qubits() {
                first_is_alloc.entry(q.index).or_insert(matches!(ins, Instruction::Allocate { .. }));
            }
        }
        let mut live: BTreeMap<usize, bool> =
            first_is_alloc.iter().map(|(&w, &alloc)| (w, !alloc)).collect();
        let mut count = live.values().filter(|&&l| l).count();
        let mut best = count;
        for ins in &self.instructions {
            match ins {
                Instruction::Allocate { target } => {
                    let slot = live.entry(target.index).or_insert(false);
                    if !*slot {
                        *slot = true;
                        count += 1;
                    }
                }
                Instruction::Reset { target } => {
                    let slot = live.entry(target.index).or_insert(false);
                    if *slot {
                        *slot = false;
                        count -= 1;
                    }
                }
                _ => {}
            }
            best = best.max(count);
        }
        best
    }

    /// Bits labelled `Site(j)`, ordered by `j`.
    pub fn site_bits(&self) -> Vec<(usize, usize)> {
        let mut v: Vec<(usize, usize)> = self
            .labels
            .iter()
            .enumerate()
            .filter_map(|(b, l)| match l {
                BitLabel::Site(j) => Some((*j, b)),
                _ => None,
            })
            .collect();
        v.sort_unstable();
        v
    }

    pub fn herald_bit(&self) -> Option<usize> {
        self.labels.iter().position(|l| *l == BitLabel::Herald)
    }

    /// Returns the circuit with classical bits renumbered by `perm`
    /// (`new = perm[old]`).
    pub fn relabel_bits(&self, perm: &[usize]) -> Circuit {
        assert_eq!(perm.len(), self.labels.len());
        let mut labels = vec![BitLabel::Scratch; self.labels.len()];
        for (old, &new) in perm.iter().enumerate() {
            labels[new] = self.labels[old];
        }
        let instructions = self
            .instructions
            .iter()
            .map(|ins| match ins.clone() {
                Instruction::Measure { target, bit, basis } => Instruction::Measure { target, bit: perm[bit], basis },
                Instruction::ConditionalGate1 { matrix, target, bit, value } => {
                    Instruction::ConditionalGate1 { matrix, target, bit: perm[bit], value }
                }
                other => other,
            })
            .collect();
        Circuit { instructions, labels, num_qubits: self.num_qubits, global_phase: self.global_phase }
    }

    pub fn to_builder(&self) -> CircuitBuilder {
        let mut b = CircuitBuilder::new();
        b.labels = self.labels.clone();
        b.global_phase = Some(self.global_phase);
        for ins in &self.instructions {
            b.push_raw(ins.clone());
        }
        b
    }

    pub fn to_text(&self) -> String {
        serialize(self)
    }

    pub fn from_text(text: &str) -> Result<Circuit, ParseError> {
        parse(text)
    }
}

/// Incremental constructor. Tracks wire generations so callers address
/// wires by index only.
#[derive(Clone, Debug, Default)]
pub struct CircuitBuilder {
    instructions: Vec<Instruction>,
    labels: Vec<BitLabel>,
    generations: Vec<u32>,
    global_phase: Option<C64>,
}

impl CircuitBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn touch(&mut self, wire: usize) -> QubitId {
        if self.generations.len() <= wire {
            self.generations.resize(wire + 1, 0);
        }
        QubitId::new(wire, self.generations[wire])
    }

    fn push_raw(&mut self, ins: Instruction) {
        for q in ins.qubits() {
            self.touch(q.index);
        }
        if let Instruction::Reset { target } = &ins {
            self.generations[target.index] = target.generation + 1;
        }
        self.instructions.push(ins);
    }

    pub fn qubit(&mut self, wire: usize) -> QubitId {
        self.touch(wire)
    }

    pub fn add_bit(&mut self, label: BitLabel) -> usize {
        self.labels.push(label);
        self.labels.len() - 1
    }

    pub fn gate1(&mut self, matrix: Mat2, wire: usize) -> &mut Self {
        let target = self.touch(wire);
        self.instructions.push(Instruction::Gate1 { matrix, target });
        self
    }

    pub fn gate2(&mut self, matrix: Mat4, first: usize, second: usize) -> &mut Self {
        let targets = [self.touch(first), self.touch(second)];
        self.instructions.push(Instruction::Gate2 { matrix, targets, tag: None });
        self
    }

    pub fn gate2_tagged(&mut self, tag: DualUnitaryTag, first: usize, second: usize) -> &mut Self {
        let targets = [self.touch(first), self.touch(second)];
        self.instructions.push(Instruction::Gate2 { matrix: tag.matrix(), targets, tag: Some(tag) });
        self
    }

    /// Measures `wire` into a new classical bit with the given label.
    pub fn measure(&mut self, wire: usize, basis: Basis, label: BitLabel) -> usize {
        let bit = self.add_bit(label);
        self.measure_into(wire, basis, bit);
        bit
    }

    pub fn measure_into(&mut self, wire: usize, basis: Basis, bit: usize) -> &mut Self {
        let target = self.touch(wire);
        self.instructions.push(Instruction::Measure { target, bit, basis });
        self
    }

    pub fn reset(&mut self, wire: usize) -> &mut Self {
        let target = self.touch(wire);
        self.instructions.push(Instruction::Reset { target });
        self.generations[wire] += 1;
        self
    }

    pub fn allocate(&mut self, wire: usize) -> &mut Self {
        let target = self.touch(wire);
        self.instructions.push(Instruction::Allocate { target });
        self
    }

    pub fn conditional_gate1(&mut self, matrix: Mat2, wire: usize, bit: usize, value: bool) -> &mut Self {
        let target = self.touch(wire);
        self.instructions.push(Instruction::ConditionalGate1 { matrix, target, bit, value });
        self
    }

    pub fn multiply_phase(&mut self, phase: C64) -> &mut Self {
        self.global_phase = Some(self.global_phase.unwrap_or(ONE) * phase);
        self
    }

    /// Appends another circuit acting on the same wire numbering. Generations
    /// in `other` are reinterpreted relative to the current wire state.
    pub fn append(&mut self, other: &Circuit) -> &mut Self {
        let offset = self.labels.len();
        self.labels.extend_from_slice(&other.labels);
        for ins in &other.instructions {
            match ins {
                Instruction::Gate1 { matrix, target } => {
                    self.gate1(*matrix, target.index);
                }
                Instruction::Gate2 { matrix, targets, tag } => {
                    let t = [self.touch(targets[0].index), self.touch(targets[1].index)];
                    self.instructions.push(Instruction::Gate2 { matrix: *matrix, targets: t, tag: tag.clone() });
                }
                Instruction::Measure { target, bit, basis } => {
                    self.measure_into(target.index, *basis, bit + offset);
                }
                Instruction::Reset { target } => {
                    self.reset(target.index);
                }
                Instruction::Allocate { target } => {
                    self.allocate(target.index);
                }
                Instruction::ConditionalGate1 { matrix, target, bit, value } => {
                    self.conditional_gate1(*matrix, target.index, bit + offset, *value);
                }
            }
        }
        self.multiply_phase(other.global_phase);
        self
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    pub fn build(self) -> Circuit {
        let num_qubits = self
            .instructions
            .iter()
            .flat_map(|i| i.qubits())
            .map(|q| q.index + 1)
            .max()
            .unwrap_or(0)
            .max(self.generations.len());
        Circuit {
            instructions: self.instructions,
            labels: self.labels,
            num_qubits,
            global_phase: self.global_phase.unwrap_or(ONE),
        }
    }
}

// ---------------------------------------------------------------------------
// Validation

#[derive(Clone, Debug, PartialEq)]
pub enum ViolationKind {
    NonUnitary { defect: f64 },
    UseAfterReset { qubit: QubitId },
    StaleGeneration { qubit: QubitId, expected: u32 },
    DoubleAllocate { qubit: QubitId },
    UndeclaredBit { bit: usize },
    RepeatedTarget { qubit: QubitId },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub instruction: usize,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let i = self.instruction;
        match &self.kind {
            ViolationKind::NonUnitary { defect } => write!(f, "#{i}: non-unitary gate (defect {defect:.3e})"),
            ViolationKind::UseAfterReset { qubit } => write!(f, "#{i}: use of {qubit} after reset"),
            ViolationKind::StaleGeneration { qubit, expected } => {
                write!(f, "#{i}: {qubit} does not match live generation {expected}")
            }
            ViolationKind::DoubleAllocate { qubit } => write!(f, "#{i}: allocate of already-live {qubit}"),
            ViolationKind::UndeclaredBit { bit } => write!(f, "#{i}: undeclared classical bit c{bit}"),
            ViolationKind::RepeatedTarget { qubit } => write!(f, "#{i}: two-qubit gate targets {qubit} twice"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum WireStatus {
    Unused,
    Live(u32),
    Dead(u32),
}

/// Checks gate unitarity, wire lifetimes and classical-bit declarations.
pub fn validate(circuit: &Circuit) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut wires = vec![WireStatus::Unused; circuit.num_qubits];
    let mut push = |i: usize, kind| report.violations.push(Violation { instruction: i, kind });

    for (i, ins) in circuit.instructions.iter().enumerate() {
        match ins {
            Instruction::Gate1 { matrix, .. } | Instruction::ConditionalGate1 { matrix, .. } => {
                let d = unitarity_defect(matrix);
                if d > UNITARY_TOL {
                    push(i, ViolationKind::NonUnitary { defect: d });
                }
            }
            Instruction::Gate2 { matrix, targets, .. } => {
                let d = unitarity_defect(matrix);
                if d > UNITARY_TOL {
                    push(i, ViolationKind::NonUnitary { defect: d });
                }
                if targets[0].index == targets[1].index {
                    push(i, ViolationKind::RepeatedTarget { qubit: targets[0] });
                }
            }
            _ => {}
        }
        match ins {
            Instruction::Measure { bit, .. } | Instruction::ConditionalGate1 { bit, .. } => {
                if *bit >= circuit.labels.len() {
                    push(i, ViolationKind::UndeclaredBit { bit: *bit });
                }
            }
            _ => {}
        }
        for q in ins.qubits() {
            let st = &mut wires[q.index];
            match ins {
                Instruction::Allocate { .. } => match *st {
                    WireStatus::Unused | WireStatus::Dead(_) => {
                        let expected = match *st {
                            WireStatus::Dead(g) => g,
                            _ => 0,
                        };
                        if q.generation != expected {
                            push(i, ViolationKind::StaleGeneration { qubit: q, expected });
                        }
                        *st = WireStatus::Live(expected);
                    }
                    WireStatus::Live(_) => push(i, ViolationKind::DoubleAllocate { qubit: q }),
                },
                _ => {
                    if *st == WireStatus::Unused {
                        *st = WireStatus::Live(0);
                    }
                    match *st {
                        WireStatus::Live(g) => {
                            if q.generation != g {
                                push(i, ViolationKind::StaleGeneration { qubit: q, expected: g });
                            }
                            if matches!(ins, Instruction::Reset { .. }) {
                                *st = WireStatus::Dead(g + 1);
                            }
                        }
                        WireStatus::Dead(_) => push(i, ViolationKind::UseAfterReset { qubit: q }),
                        WireStatus::Unused => unreachable!(),
                    }
                }
            }
        }
    }
    report
}

#[derive(Debug, Error)]
pub enum CircuitError {
    #[error("malformed circuit:\n{0}")]
    Invalid(ValidationReport),
    #[error("unsupported instruction #{index} for unitary composition")]
    NonUnitaryInstruction { index: usize },
    #[error("{qubits} qubits exceed the cap of {cap}")]
    TooManyQubits { qubits: usize, cap: usize },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct ResourceReport {
    pub qubits: usize,
    pub single_qubit_gates: usize,
    pub two_qubit_gates: usize,
    pub measurements: usize,
    pub resets: usize,
}

impl fmt::Display for ResourceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "qubits = {}", self.qubits)?;
        writeln!(f, "single_qubit_gates = {}", self.single_qubit_gates)?;
        writeln!(f, "two_qubit_gates = {}", self.two_qubit_gates)?;
        writeln!(f, "measurements = {}", self.measurements)?;
        write!(f, "resets = {}", self.resets)
    }
}

pub fn count_resources(circuit: &Circuit) -> Result<ResourceReport, CircuitError> {
    let report = validate(circuit);
    if !report.is_ok() {
        return Err(CircuitError::Invalid(report));
    }
    let mut r = ResourceReport { qubits: circuit.max_live_qubits(), ..Default::default() };
    for ins in &circuit.instructions {
        match ins {
            Instruction::Gate1 { .. } | Instruction::ConditionalGate1 { .. } => r.single_qubit_gates += 1,
            Instruction::Gate2 { .. } => r.two_qubit_gates += 1,
            Instruction::Measure { .. } => r.measurements += 1,
            Instruction::Reset { .. } => r.resets += 1,
            Instruction::Allocate { .. } => {}
        }
    }
    Ok(r)
}

/// Composes a measurement-free circuit into its `2^n × 2^n` unitary over all
/// wires (wire 0 most significant), including the global phase.
pub fn unitary_of(circuit: &Circuit) -> Result<DMatrix<C64>, CircuitError> {
    unitary_of_capped(circuit, UNITARY_QUBIT_CAP)
}

pub fn unitary_of_capped(circuit: &Circuit, cap: usize) -> Result<DMatrix<C64>, CircuitError> {
    let n = circuit.num_qubits;
    if n > cap {
        return Err(CircuitError::TooManyQubits { qubits: n, cap });
    }
    let mut seen = vec![false; n];
    for (index, ins) in circuit.instructions.iter().enumerate() {
        match ins {
            Instruction::Allocate { target } if !seen[target.index] => {}
            Instruction::Gate1 { .. } | Instruction::Gate2 { .. } => {}
            _ => return Err(CircuitError::NonUnitaryInstruction { index }),
        }
        for q in ins.qubits() {
            seen[q.index] = true;
        }
    }
    let report = validate(circuit);
    if !report.is_ok() {
        return Err(CircuitError::Invalid(report));
    }
    let dim = 1usize << n;
    let mut u = DMatrix::<C64>::identity(dim, dim) * circuit.global_phase;
    for mut col in u.column_iter_mut() {
        let amps = col.as_mut_slice();
        for ins in &circuit.instructions {
            match ins {
                Instruction::Gate1 { matrix, target } => kernel::apply_1q(amps, n, target.index, matrix),
                Instruction::Gate2 { matrix, targets, .. } => {
                    kernel::apply_2q(amps, n, targets[0].index, targets[1].index, matrix)
                }
                _ => {}
            }
        }
    }
    Ok(u)
}

// ---------------------------------------------------------------------------
// Text format

const HEADER: &str = "holoquads-circuit 1";

fn fmt_c64(out: &mut String, z: C64) {
    let _ = write!(out, "{:.16e}{}{:.16e}i", z.re, if z.im.is_sign_negative() { "" } else { "+" }, z.im);
}

fn fmt_mat<const N: usize>(out: &mut String, entries: impl Iterator<Item = C64>) {
    let mut k = 0;
    for z in entries {
        out.push(' ');
        fmt_c64(out, z);
        k += 1;
    }
    debug_assert_eq!(k, N);
}

fn row_major2(m: &Mat2) -> impl Iterator<Item = C64> + '_ {
    (0..2).flat_map(move |i| (0..2).map(move |j| m[(i, j)]))
}

fn row_major4(m: &Mat4) -> impl Iterator<Item = C64> + '_ {
    (0..4).flat_map(move |i| (0..4).map(move |j| m[(i, j)]))
}

fn serialize(c: &Circuit) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{HEADER}");
    let _ = writeln!(s, "qubits {}", c.num_qubits);
    let _ = writeln!(s, "clbits {}", c.labels.len());
    for (b, l) in c.labels.iter().enumerate() {
        match l {
            BitLabel::Site(j) => {
                let _ = writeln!(s, "label c{b} site {j}");
            }
            BitLabel::Herald => {
                let _ = writeln!(s, "label c{b} herald");
            }
            BitLabel::Scratch => {
                let _ = writeln!(s, "label c{b} scratch");
            }
        }
    }
    s.push_str("phase ");
    fmt_c64(&mut s, c.global_phase);
    s.push('\n');
    for ins in &c.instructions {
        match ins {
            Instruction::Gate1 { matrix, target } => {
                let _ = write!(s, "gate1 {target}");
                fmt_mat::<4>(&mut s, row_major2(matrix));
            }
            Instruction::Gate2 { matrix, targets, tag } => {
                let _ = write!(s, "gate2 {} {}", targets[0], targets[1]);
                fmt_mat::<16>(&mut s, row_major4(matrix));
                if let Some(tag) = tag {
                    let _ = write!(s, " du {:.16e}", tag.coupling);
                    for m in tag.u.iter().chain(tag.v.iter()) {
                        fmt_mat::<4>(&mut s, row_major2(m));
                    }
                }
            }
            Instruction::Measure { target, bit, basis } => {
                let b = match basis {
                    Basis::Z => 'Z',
                    Basis::X => 'X',
                };
                let _ = write!(s, "measure {target} c{bit} {b}");
            }
            Instruction::Reset { target } => {
                let _ = write!(s, "reset {target}");
            }
            Instruction::Allocate { target } => {
                let _ = write!(s, "alloc {target}");
            }
            Instruction::ConditionalGate1 { matrix, target, bit, value } => {
                let _ = write!(s, "cgate1 {target} c{bit}={}", u8::from(*value));
                fmt_mat::<4>(&mut s, row_major2(matrix));
            }
        }
        s.push('\n');
    }
    s
}

#[derive(Debug, Error, PartialEq)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

fn perr(line: usize, message: impl Into<String>) -> ParseError {
    ParseError { line, message: message.into() }
}

fn parse_c64(tok: &str, line: usize) -> Result<C64, ParseError> {
    let body = tok.strip_suffix('i').ok_or_else(|| perr(line, format!("complex `{tok}` lacks trailing i")))?;
    // split at the sign that starts the imaginary part (not an exponent sign)
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'))
        .ok_or_else(|| perr(line, format!("complex `{tok}` has no imaginary part")))?;
    let re: f64 = body[..split].parse().map_err(|_| perr(line, format!("bad real part in `{tok}`")))?;
    let im: f64 = body[split..].parse().map_err(|_| perr(line, format!("bad imaginary part in `{tok}`")))?;
    Ok(C64::new(re, im))
}

fn parse_qubit(tok: &str, line: usize) -> Result<QubitId, ParseError> {
    let body = tok.strip_prefix('q').ok_or_else(|| perr(line, format!("expected qubit, got `{tok}`")))?;
    let (i, g) = body.split_once('.').ok_or_else(|| perr(line, format!("qubit `{tok}` lacks generation")))?;
    Ok(QubitId::new(
        i.parse().map_err(|_| perr(line, format!("bad qubit index in `{tok}`")))?,
        g.parse().map_err(|_| perr(line, format!("bad generation in `{tok}`")))?,
    ))
}

fn parse_bit(tok: &str, line: usize) -> Result<usize, ParseError> {
    tok.strip_prefix('c')
        .and_then(|b| b.parse().ok())
        .ok_or_else(|| perr(line, format!("expected classical bit, got `{tok}`")))
}

fn parse_entries<'a>(
    toks: &mut impl Iterator<Item = &'a str>,
    n: usize,
    line: usize,
) -> Result<Vec<C64>, ParseError> {
    (0..n)
        .map(|_| toks.next().ok_or_else(|| perr(line, "too few matrix entries")).and_then(|t| parse_c64(t, line)))
        .collect()
}

fn mat2(v: &[C64]) -> Mat2 {
    Mat2::from_row_slice(v)
}

fn mat4(v: &[C64]) -> Mat4 {
    Mat4::from_row_slice(v)
}

fn parse(text: &str) -> Result<Circuit, ParseError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    match lines.next() {
        Some((_, l)) if l == HEADER => {}
        Some((n, l)) => return Err(perr(n, format!("expected header `{HEADER}`, got `{l}`"))),
        None => return Err(perr(0, "empty input")),
    }
    let mut c = Circuit::default();
    let mut declared_qubits = None;
    for (n, l) in lines {
        let mut toks = l.split_whitespace();
        let head = toks.next().unwrap_or_default();
        let ins = match head {
            "qubits" => {
                declared_qubits = Some(toks.next().and_then(|t| t.parse().ok()).ok_or_else(|| perr(n, "bad qubit count"))?);
                None
            }
            "clbits" => {
                let k: usize = toks.next().and_then(|t| t.parse().ok()).ok_or_else(|| perr(n, "bad clbit count"))?;
                c.labels = vec![BitLabel::Scratch; k];
                None
            }
            "label" => {
                let b = parse_bit(toks.next().unwrap_or_default(), n)?;
                let lab = match toks.next() {
                    Some("site") => BitLabel::Site(
                        toks.next().and_then(|t| t.parse().ok()).ok_or_else(|| perr(n, "bad site index"))?,
                    ),
                    Some("herald") => BitLabel::Herald,
                    Some("scratch") => BitLabel::Scratch,
                    other => return Err(perr(n, format!("unknown label {other:?}"))),
                };
                *c.labels.get_mut(b).ok_or_else(|| perr(n, format!("label for undeclared bit c{b}")))? = lab;
                None
            }
            "phase" => {
                c.global_phase = parse_c64(toks.next().unwrap_or_default(), n)?;
                None
            }
            "gate1" => {
                let target = parse_qubit(toks.next().unwrap_or_default(), n)?;
                Some(Instruction::Gate1 { matrix: mat2(&parse_entries(&mut toks, 4, n)?), target })
            }
            "gate2" => {
                let a = parse_qubit(toks.next().unwrap_or_default(), n)?;
                let b = parse_qubit(toks.next().unwrap_or_default(), n)?;
                let matrix = mat4(&parse_entries(&mut toks, 16, n)?);
                let tag = match toks.next() {
                    None => None,
                    Some("du") => {
                        let coupling: f64 =
                            toks.next().and_then(|t| t.parse().ok()).ok_or_else(|| perr(n, "bad coupling"))?;
                        let f = parse_entries(&mut toks, 16, n)?;
                        Some(DualUnitaryTag {
                            u: [mat2(&f[0..4]), mat2(&f[4..8])],
                            v: [mat2(&f[8..12]), mat2(&f[12..16])],
                            coupling,
                        })
                    }
                    Some(other) => return Err(perr(n, format!("unexpected token `{other}`"))),
                };
                Some(Instruction::Gate2 { matrix, targets: [a, b], tag })
            }
            "measure" => {
                let target = parse_qubit(toks.next().unwrap_or_default(), n)?;
                let bit = parse_bit(toks.next().unwrap_or_default(), n)?;
                let basis = match toks.next() {
                    Some("Z") => Basis::Z,
                    Some("X") => Basis::X,
                    other => return Err(perr(n, format!("unknown basis {other:?}"))),
                };
                Some(Instruction::Measure { target, bit, basis })
            }
            "reset" => Some(Instruction::Reset { target: parse_qubit(toks.next().unwrap_or_default(), n)? }),
            "alloc" => Some(Instruction::Allocate { target: parse_qubit(toks.next().unwrap_or_default(), n)? }),
            "cgate1" => {
                let target = parse_qubit(toks.next().unwrap_or_default(), n)?;
                let cond = toks.next().unwrap_or_default();
                let (b, v) = cond.split_once('=').ok_or_else(|| perr(n, format!("bad condition `{cond}`")))?;
                let bit = parse_bit(b, n)?;
                let value = match v {
                    "0" => false,
                    "1" => true,
                    _ => return Err(perr(n, format!("bad condition value `{v}`"))),
                };
                Some(Instruction::ConditionalGate1 { matrix: mat2(&parse_entries(&mut toks, 4, n)?), target, bit, value })
            }
            other => return Err(perr(n, format!("unknown directive `{other}`"))),
        };
        if let Some(ins) = ins {
            if toks.next().is_some() {
                return Err(perr(n, "trailing tokens"));
            }
            for q in ins.qubits() {
                c.num_qubits = c.num_qubits.max(q.index + 1);
            }
            c.instructions.push(ins);
        }
    }
    if let Some(q) = declared_qubits {
        if q < c.num_qubits {
            return Err(perr(0, format!("declared {q} qubits but {} are referenced", c.num_qubits)));
        }
        c.num_qubits = q;
    }
    Ok(c)
}

/// Convenience: `linalg::kron` re-export for callers building tagged gates.
pub fn kron2(a: &Mat2, b: &Mat2) -> Mat4 {
    linalg::kron(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{cnot, hadamard, haar_unitary4, ms_gate, to_dmatrix2, to_dmatrix4, Pauli};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_circuit_validates() {
        assert!(validate(&Circuit::default()).is_ok());
    }

    #[test]
    fn non_unitary_gate_is_reported() {
        let mut b = CircuitBuilder::new();
        b.gate1(Mat2::new(ONE, C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(2.0, 0.0)), 0);
        let r = validate(&b.build());
        assert_eq!(r.violations.len(), 1);
        assert!(matches!(r.violations[0].kind, ViolationKind::NonUnitary { .. }));
    }

    #[test]
    fn use_after_reset_and_undeclared_bit() {
        let mut b = CircuitBuilder::new();
        b.gate1(hadamard(), 0).reset(0).gate1(hadamard(), 0);
        b.measure_into(1, Basis::Z, 3);
        let r = validate(&b.build());
        assert_eq!(r.violations.len(), 2);
        assert!(matches!(r.violations[0].kind, ViolationKind::UseAfterReset { .. }));
        assert!(matches!(r.violations[1].kind, ViolationKind::UndeclaredBit { bit: 3 }));
    }

    #[test]
    fn reset_then_allocate_increments_generation() {
        let mut b = CircuitBuilder::new();
        b.gate1(hadamard(), 0);
        let before = b.clone().build();
        b.reset(0).allocate(0).gate1(hadamard(), 0);
        let c = b.build();
        assert!(validate(&c).is_ok());
        assert_eq!(c.instructions()[..before.len()], before.instructions()[..]);
        match &c.instructions()[3] {
            Instruction::Gate1 { target, .. } => assert_eq!(target.generation, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn double_allocate_is_reported() {
        let mut b = CircuitBuilder::new();
        b.allocate(0).allocate(0);
        let r = validate(&b.build());
        assert!(matches!(r.violations[0].kind, ViolationKind::DoubleAllocate { .. }));
    }

    #[test]
    fn resources_of_single_gate2() {
        let mut b = CircuitBuilder::new();
        b.gate2(cnot(), 0, 1);
        let r = count_resources(&b.build()).unwrap();
        assert_eq!(r, ResourceReport { qubits: 2, two_qubit_gates: 1, ..Default::default() });
    }

    #[test]
    fn live_qubits_follow_reuse() {
        let mut b = CircuitBuilder::new();
        b.allocate(0).allocate(1).gate2(cnot(), 0, 1);
        b.measure(1, Basis::Z, BitLabel::Scratch);
        b.reset(1).allocate(1).gate2(cnot(), 0, 1);
        b.allocate(2);
        let c = b.build();
        assert_eq!(c.max_live_qubits(), 3);
        let r = count_resources(&c).unwrap();
        assert_eq!((r.measurements, r.resets, r.two_qubit_gates), (1, 1, 2));
    }

    #[test]
    fn unitary_of_hadamard() {
        let mut b = CircuitBuilder::new();
        b.gate1(hadamard(), 0);
        let u = unitary_of(&b.build()).unwrap();
        assert!(linalg::max_abs_diff(&u, &to_dmatrix2(&hadamard())) < 1e-15);
    }

    #[test]
    fn two_ms_gates_compose_to_zz() {
        let mut b = CircuitBuilder::new();
        b.gate2(ms_gate(), 0, 1).gate2(ms_gate(), 0, 1);
        let u = unitary_of(&b.build()).unwrap();
        let zz = to_dmatrix4(&kron(&Pauli::Z.matrix(), &Pauli::Z.matrix()));
        let (d, _) = linalg::diff_up_to_phase(&u, &zz);
        assert!(d < 1e-14);
    }

    #[test]
    fn unitary_of_rejects_measurement_and_size() {
        let mut b = CircuitBuilder::new();
        b.measure(0, Basis::Z, BitLabel::Scratch);
        assert!(matches!(unitary_of(&b.build()), Err(CircuitError::NonUnitaryInstruction { index: 0 })));
        let mut b = CircuitBuilder::new();
        b.gate1(hadamard(), 4);
        assert!(matches!(unitary_of_capped(&b.build(), 4), Err(CircuitError::TooManyQubits { .. })));
    }

    /// Oracle: embed each gate as an explicit Kronecker product with
    /// identities (wire-permuted via SWAP conjugation) and multiply.
    fn embed(n: usize, ins: &Instruction) -> DMatrix<C64> {
        let id2 = DMatrix::<C64>::identity(2, 2);
        match ins {
            Instruction::Gate1 { matrix, target } => (0..n).fold(DMatrix::identity(1, 1), |acc, w| {
                acc.kronecker(&if w == target.index { to_dmatrix2(matrix) } else { id2.clone() })
            }),
            Instruction::Gate2 { matrix, targets, .. } => {
                // brute force over basis states
                let dim = 1 << n;
                let (a, b) = (targets[0].index, targets[1].index);
                DMatrix::from_fn(dim, dim, |row, col| {
                    let bit = |x: usize, w: usize| (x >> (n - 1 - w)) & 1;
                    let others_equal = (0..n).filter(|&w| w != a && w != b).all(|w| bit(row, w) == bit(col, w));
                    if !others_equal {
                        return C64::new(0.0, 0.0);
                    }
                    matrix[(2 * bit(row, a) + bit(row, b), 2 * bit(col, a) + bit(col, b))]
                })
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn random_circuit_matches_matrix_product_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let mut b = CircuitBuilder::new();
            b.gate2(haar_unitary4(&mut rng), 2, 0)
                .gate1(linalg::haar_unitary2(&mut rng), 1)
                .gate2(haar_unitary4(&mut rng), 1, 2)
                .gate2(haar_unitary4(&mut rng), 0, 1);
            let c = b.build();
            let mut expected = DMatrix::<C64>::identity(8, 8);
            for ins in c.instructions() {
                expected = embed(3, ins) * expected;
            }
            let got = unitary_of(&c).unwrap();
            assert!(linalg::max_abs_diff(&got, &expected) < 1e-12);
            assert!(linalg::unitarity_defect(&got) < 1e-10);
        }
    }

    fn sample_circuit(seed: u64) -> Circuit {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = CircuitBuilder::new();
        b.allocate(0).gate1(hadamard(), 0).gate2(haar_unitary4(&mut rng), 0, 1);
        let m = b.measure(1, Basis::X, BitLabel::Site(3));
        b.conditional_gate1(Pauli::Z.matrix(), 0, m, false);
        b.reset(1).allocate(1);
        let tag = DualUnitaryTag {
            u: [linalg::haar_unitary2(&mut rng), linalg::haar_unitary2(&mut rng)],
            v: [linalg::haar_unitary2(&mut rng), linalg::haar_unitary2(&mut rng)],
            coupling: 0.3,
        };
        b.gate2_tagged(tag, 1, 0);
        b.measure(0, Basis::Z, BitLabel::Herald);
        b.multiply_phase(C64::from_polar(1.0, 0.7));
        b.build()
    }

    #[test]
    fn text_round_trip_is_exact() {
        let c = sample_circuit(5);
        let text = c.to_text();
        let back = Circuit::from_text(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = Circuit::from_text("holoquads-circuit 1\nqubits 1\nfrobnicate q0.0\n").unwrap_err();
        assert_eq!(err.line, 3);
    }

    proptest! {
        #[test]
        fn complex_text_round_trip(re in -1e3f64..1e3, im in -1e3f64..1e3) {
            let mut s = String::new();
            fmt_c64(&mut s, C64::new(re, im));
            prop_assert_eq!(parse_c64(&s, 0).unwrap(), C64::new(re, im));
        }

        #[test]
        fn resources_invariant_under_bit_relabeling(seed in 0u64..1000, rot in 0usize..3) {
            let c = sample_circuit(seed);
            let n = c.num_classical_bits();
            let perm: Vec<usize> = (0..n).map(|b| (b + rot) % n).collect();
            prop_assert_eq!(count_resources(&c).unwrap(), count_resources(&c.relabel_bits(&perm)).unwrap());
        }
    }
}
