//! Trajectory noise, the leakage-detection gadget and post-selection.
//!
//! Noise draws come from a generator separate from the measurement stream
//! (same seed, stream 1), so a run with all probabilities zero is
//! bit-identical to a noiseless run.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::circuit::{Basis, BitLabel, Circuit, Instruction, QubitId};
use crate::engine::{EngineError, ShotHooks, ShotRecord, ShotTrace, SimState};
use crate::linalg::{hadamard, identity2, ms_gate, Mat2, Pauli};

#[derive(Debug, Error, PartialEq)]
pub enum NoiseError {
    #[error("noise parameter {name} = {value} is outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("wire {0} is not live at the end of the circuit")]
    DeadTarget(usize),
    #[error("shot {0} has no herald bit")]
    MissingHerald(u64),
}

/// Per-event probabilities; all default to zero.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NoiseParams {
    pub p_depol_tq: f64,
    pub p_leak_tq: f64,
    pub p_leak_meas_crosstalk: f64,
    pub p_leak_reset_crosstalk: f64,
}

impl NoiseParams {
    pub fn validate(&self) -> Result<(), NoiseError> {
        for (name, value) in self.fields() {
            if !(0.0..=1.0).contains(&value) {
                return Err(NoiseError::OutOfRange { name, value });
            }
        }
        Ok(())
    }

    pub fn fields(&self) -> [(&'static str, f64); 4] {
        [
            ("p_depol_tq", self.p_depol_tq),
            ("p_leak_tq", self.p_leak_tq),
            ("p_leak_meas_crosstalk", self.p_leak_meas_crosstalk),
            ("p_leak_reset_crosstalk", self.p_leak_reset_crosstalk),
        ]
    }

    pub fn is_noiseless(&self) -> bool {
        self.fields().iter().all(|(_, v)| *v == 0.0)
    }
}

/// Noise parameters plus instruction ranges that run noise-free.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NoiseModel {
    pub params: NoiseParams,
    pub exempt: Vec<Range<usize>>,
}

impl NoiseModel {
    pub fn new(params: NoiseParams) -> Result<Self, NoiseError> {
        params.validate()?;
        Ok(Self { params, exempt: Vec::new() })
    }

    pub fn exempting(mut self, range: Range<usize>) -> Self {
        self.exempt.push(range);
        self
    }

    pub fn hooks(&self, seed: u64) -> NoiseHooks<'_> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        NoiseHooks { model: self, rng }
    }
}

pub struct NoiseHooks<'a> {
    model: &'a NoiseModel,
    rng: ChaCha8Rng,
}

const PAULIS: [Option<Pauli>; 4] = [None, Some(Pauli::X), Some(Pauli::Y), Some(Pauli::Z)];

fn pauli_or_identity(p: Option<Pauli>) -> Mat2 {
    p.map_or_else(identity2, Pauli::matrix)
}

impl NoiseHooks<'_> {
    fn coin(&mut self, p: f64) -> bool {
        p > 0.0 && self.rng.random::<f64>() < p
    }

    fn crosstalk(&mut self, target: QubitId, p: f64, state: &mut SimState) -> Result<(), EngineError> {
        if p == 0.0 {
            return Ok(());
        }
        for w in state.live_wires() {
            if w != target.index && !state.is_leaked(w) && self.coin(p) {
                state.leak(w, &mut self.rng)?;
            }
        }
        Ok(())
    }
}

impl ShotHooks for NoiseHooks<'_> {
    fn after(&mut self, index: usize, ins: &Instruction, state: &mut SimState) -> Result<(), EngineError> {
        if self.model.exempt.iter().any(|r| r.contains(&index)) {
            return Ok(());
        }
        let p = self.model.params;
        match ins {
            Instruction::Gate2 { targets, .. } => {
                if self.coin(p.p_depol_tq) {
                    let k = self.rng.random_range(1..16);
                    state.apply_gate1(targets[0], &pauli_or_identity(PAULIS[k / 4]))?;
                    state.apply_gate1(targets[1], &pauli_or_identity(PAULIS[k % 4]))?;
                }
                for q in targets {
                    if self.coin(p.p_leak_tq) {
                        state.leak(q.index, &mut self.rng)?;
                    }
                }
            }
            Instruction::Measure { target, .. } => self.crosstalk(*target, p.p_leak_meas_crosstalk, state)?,
            Instruction::Reset { target } => self.crosstalk(*target, p.p_leak_reset_crosstalk, state)?,
            _ => {}
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GadgetMode {
    /// Leaves σᶻ applied to an unleaked target.
    Destructive,
    /// Undoes the σᶻ with a classically conditioned gate.
    Qnd,
}

#[derive(Clone, Debug)]
pub struct Gadget {
    pub circuit: Circuit,
    pub target: usize,
    pub ancilla: usize,
    pub herald_bit: usize,
    pub mode: GadgetMode,
    /// Instruction indices occupied by the gadget.
    pub range: Range<usize>,
}

/// Wires live after the last instruction.
pub fn live_at_end(circuit: &Circuit) -> Vec<bool> {
    let mut live = vec![None; circuit.num_wires()];
    for ins in circuit.instructions() {
        for q in ins.qubits() {
            let slot = &mut live[q.index];
            match ins {
                Instruction::Allocate { .. } => *slot = Some(true),
                Instruction::Reset { .. } => *slot = Some(false),
                _ => {
                    slot.get_or_insert(true);
                }
            }
        }
    }
    live.into_iter().map(|s| s.unwrap_or(false)).collect()
}

/// Appends the leakage-detection gadget on `target`, reusing the lowest dead
/// wire as ancilla (or a new wire if none is dead).
pub fn leakage_gadget(circuit: &Circuit, target: usize, mode: GadgetMode) -> Result<Gadget, NoiseError> {
    let live = live_at_end(circuit);
    if !live.get(target).copied().unwrap_or(false) {
        return Err(NoiseError::DeadTarget(target));
    }
    let ancilla = (0..live.len()).find(|&w| !live[w] && w != target).unwrap_or(live.len());
    let mut b = circuit.to_builder();
    let start = b.len();
    b.allocate(ancilla);
    b.gate1(hadamard(), ancilla);
    b.gate2(ms_gate(), target, ancilla).gate2(ms_gate(), target, ancilla);
    b.gate1(hadamard(), ancilla);
    b.gate1(Pauli::X.matrix(), ancilla);
    let herald_bit = b.measure(ancilla, Basis::Z, BitLabel::Herald);
    if mode == GadgetMode::Qnd {
        b.conditional_gate1(Pauli::Z.matrix(), target, herald_bit, false);
    }
    let end = b.len();
    Ok(Gadget { circuit: b.build(), target, ancilla, herald_bit, mode, range: start..end })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HeraldResult {
    pub leaked: bool,
    pub ancilla_bit: u8,
    pub corrected: bool,
}

impl Gadget {
    pub fn result(&self, trace: &ShotTrace) -> HeraldResult {
        let bit = trace.bits[self.herald_bit];
        HeraldResult {
            leaked: trace.leaked.iter().any(|q| q.index == self.target),
            ancilla_bit: bit,
            corrected: self.mode == GadgetMode::Qnd && bit == 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HeraldStats {
    pub shots: usize,
    pub heralded: usize,
    pub discard_fraction: f64,
}

/// Keeps shots whose herald reads 0.
pub fn post_select(shots: &[ShotRecord]) -> Result<(Vec<ShotRecord>, HeraldStats), NoiseError> {
    let mut kept = Vec::with_capacity(shots.len());
    for s in shots {
        match s.herald {
            None => return Err(NoiseError::MissingHerald(s.index)),
            Some(0) => kept.push(s.clone()),
            Some(_) => {}
        }
    }
    let heralded = shots.len() - kept.len();
    let discard_fraction = if shots.is_empty() { 0.0 } else { heralded as f64 / shots.len() as f64 };
    Ok((kept, HeraldStats { shots: shots.len(), heralded, discard_fraction }))
}

/// Two-qubit gates touching `wire`, outside `exempt`.
pub fn gates_touching(circuit: &Circuit, wire: usize, exempt: &[Range<usize>]) -> usize {
    circuit
        .instructions()
        .iter()
        .enumerate()
        .filter(|(i, ins)| {
            !exempt.iter().any(|r| r.contains(i))
                && matches!(ins, Instruction::Gate2 { targets, .. } if targets.iter().any(|q| q.index == wire))
        })
        .count()
}
