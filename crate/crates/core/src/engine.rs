//! Dense statevector execution of [`Circuit`]s.
//!
//! The amplitude vector covers only the live, unleaked wires, so its length
//! is `2^live`. Reset traces a wire out of the register and Allocate appends
//! a fresh `|0⟩` slot. A leaked wire is absorbing and unentangled, so it is
//! dropped from the register too and only a flag is kept: gates touching it
//! act as the identity and measuring it returns the configured leaked-readout
//! bit.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::circuit::{BitLabel, Circuit, Instruction, QubitId};
use crate::kernel;
use crate::linalg::{hadamard, Mat2, Pauli};
use crate::Basis;

/// Name of the pseudorandom generator used for measurement sampling.
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha), seed_from_u64";

const NORM_TOL: f64 = 1e-10;
const BRANCH_EPS: f64 = 1e-15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("{qubit} is not live ({reason})")]
    Lifetime { qubit: QubitId, reason: &'static str },
    #[error("expectation value undefined on leaked {0}")]
    Leaked(QubitId),
    #[error("classical bit c{0} is not declared")]
    UndeclaredBit(usize),
    #[error("both measurement branches of {0} have vanishing probability")]
    ZeroNorm(QubitId),
    #[error("state norm drifted to {0}")]
    NormDrift(f64),
    #[error("instruction #{index}: {source}")]
    At { index: usize, source: Box<EngineError> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Wire {
    Dead { generation: u32 },
    Live { generation: u32 },
    Leaked { generation: u32 },
}

impl Wire {
    fn generation(self) -> u32 {
        match self {
            Wire::Dead { generation } | Wire::Live { generation } | Wire::Leaked { generation } => generation,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasurementOutcome {
    pub qubit: QubitId,
    pub basis: Basis,
    pub bit: u8,
    /// Born probability of `bit` just before the measurement.
    pub probability: f64,
}

#[derive(Clone, Copy, Debug)]
enum Choice {
    Sample,
    Forced(u8),
}

#[derive(Clone, Debug)]
pub struct SimState {
    amps: Vec<C64>,
    /// `slots[s]` is the wire held by register slot `s`.
    slots: Vec<usize>,
    wires: Vec<Wire>,
    bits: Vec<u8>,
    rng: ChaCha8Rng,
    leaked_readout: u8,
    peak_slots: usize,
}

impl SimState {
    /// State for `circuit`: wires whose first use is not `Allocate` start
    /// live in `|0⟩`, all others start dead.
    pub fn for_circuit(circuit: &Circuit, seed: u64) -> Self {
        let mut first_alloc: Vec<Option<bool>> = vec![None; circuit.num_wires()];
        for ins in circuit.instructions() {
            for q in ins.qubits() {
                first_alloc[q.index].get_or_insert(matches!(ins, Instruction::Allocate { .. }));
            }
        }
        let mut wires = Vec::with_capacity(first_alloc.len());
        let mut slots = Vec::new();
        for (w, a) in first_alloc.iter().enumerate() {
            if *a == Some(false) {
                wires.push(Wire::Live { generation: 0 });
                slots.push(w);
            } else {
                wires.push(Wire::Dead { generation: 0 });
            }
        }
        let mut amps = vec![C64::new(0.0, 0.0); 1 << slots.len()];
        amps[0] = C64::new(1.0, 0.0);
        let peak_slots = slots.len();
        Self {
            amps,
            slots,
            wires,
            bits: vec![0; circuit.num_classical_bits()],
            rng: ChaCha8Rng::seed_from_u64(seed),
            leaked_readout: 0,
            peak_slots,
        }
    }

    /// A register of `n` live wires in `|0…0⟩` with no classical bits.
    pub fn zeros(n: usize, seed: u64) -> Self {
        let mut amps = vec![C64::new(0.0, 0.0); 1 << n];
        amps[0] = C64::new(1.0, 0.0);
        Self {
            amps,
            slots: (0..n).collect(),
            wires: vec![Wire::Live { generation: 0 }; n],
            bits: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            leaked_readout: 0,
            peak_slots: n,
        }
    }

    /// Replaces the register amplitudes (wire order = slot order).
    pub fn set_amplitudes(&mut self, amps: Vec<C64>) {
        assert_eq!(amps.len(), 1 << self.slots.len());
        self.amps = amps;
    }

    pub fn set_leaked_readout(&mut self, bit: u8) {
        self.leaked_readout = bit & 1;
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    /// Wires in register order (slot 0 is the most significant bit).
    pub fn slot_wires(&self) -> &[usize] {
        &self.slots
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn peak_slots(&self) -> usize {
        self.peak_slots
    }

    pub fn norm_sqr(&self) -> f64 {
        kernel::norm_sqr(&self.amps)
    }

    pub fn is_leaked(&self, wire: usize) -> bool {
        matches!(self.wires.get(wire), Some(Wire::Leaked { .. }))
    }

    pub fn is_live(&self, wire: usize) -> bool {
        matches!(self.wires.get(wire), Some(Wire::Live { .. }) | Some(Wire::Leaked { .. }))
    }

    /// Live wires, including leaked ones.
    pub fn live_wires(&self) -> Vec<usize> {
        (0..self.wires.len()).filter(|&w| self.is_live(w)).collect()
    }

    pub fn leaked_wires(&self) -> Vec<QubitId> {
        self.wires
            .iter()
            .enumerate()
            .filter_map(|(w, s)| match s {
                Wire::Leaked { generation } => Some(QubitId::new(w, *generation)),
                _ => None,
            })
            .collect()
    }

    pub fn current_id(&self, wire: usize) -> QubitId {
        QubitId::new(wire, self.wires[wire].generation())
    }

    fn n(&self) -> usize {
        self.slots.len()
    }

    fn slot_of(&self, wire: usize) -> usize {
        self.slots.iter().position(|&w| w == wire).expect("live unleaked wire has a slot")
    }

    fn ensure_wire(&mut self, wire: usize) {
        if self.wires.len() <= wire {
            self.wires.resize(wire + 1, Wire::Dead { generation: 0 });
        }
    }

    /// Checks that `q` names the current live occupant of its wire; returns
    /// whether it is leaked.
    fn check_live(&mut self, q: QubitId) -> Result<bool, EngineError> {
        self.ensure_wire(q.index);
        let st = self.wires[q.index];
        if st.generation() != q.generation {
            return Err(EngineError::Lifetime { qubit: q, reason: "stale generation" });
        }
        match st {
            Wire::Dead { .. } => Err(EngineError::Lifetime { qubit: q, reason: "wire is reset or unallocated" }),
            Wire::Live { .. } => Ok(false),
            Wire::Leaked { .. } => Ok(true),
        }
    }

    pub fn apply_gate1(&mut self, q: QubitId, m: &Mat2) -> Result<(), EngineError> {
        if self.check_live(q)? {
            return Ok(());
        }
        let s = self.slot_of(q.index);
        let n = self.n();
        kernel::apply_1q(&mut self.amps, n, s, m);
        Ok(())
    }

    pub fn apply_gate2(&mut self, a: QubitId, b: QubitId, m: &crate::linalg::Mat4) -> Result<(), EngineError> {
        let la = self.check_live(a)?;
        let lb = self.check_live(b)?;
        if la || lb {
            return Ok(());
        }
        let (sa, sb) = (self.slot_of(a.index), self.slot_of(b.index));
        let n = self.n();
        kernel::apply_2q(&mut self.amps, n, sa, sb, m);
        Ok(())
    }

    fn choose(&mut self, q: QubitId, p0: f64, choice: Choice) -> Result<(u8, f64), EngineError> {
        let p1 = (1.0 - p0).max(0.0);
        let outcome = match choice {
            Choice::Forced(b) => b,
            Choice::Sample => {
                if p0 < BRANCH_EPS {
                    1
                } else if p1 < BRANCH_EPS {
                    0
                } else {
                    u8::from(self.rng.random::<f64>() >= p0)
                }
            }
        };
        let p = if outcome == 0 { p0 } else { p1 };
        if p < BRANCH_EPS && matches!(choice, Choice::Sample) {
            return Err(EngineError::ZeroNorm(q));
        }
        Ok((outcome, p))
    }

    fn measure_impl(&mut self, q: QubitId, basis: Basis, choice: Choice) -> Result<MeasurementOutcome, EngineError> {
        if self.check_live(q)? {
            let bit = self.leaked_readout;
            let probability = match choice {
                Choice::Forced(b) if b != bit => 0.0,
                _ => 1.0,
            };
            return Ok(MeasurementOutcome { qubit: q, basis, bit, probability });
        }
        let s = self.slot_of(q.index);
        let n = self.n();
        let h = hadamard();
        if basis == Basis::X {
            kernel::apply_1q(&mut self.amps, n, s, &h);
        }
        let p0 = kernel::prob_zero(&self.amps, n, s);
        let (bit, probability) = self.choose(q, p0, choice)?;
        if probability > 0.0 {
            kernel::project_keep(&mut self.amps, n, s, bit);
        }
        if basis == Basis::X {
            kernel::apply_1q(&mut self.amps, n, s, &h);
        }
        Ok(MeasurementOutcome { qubit: q, basis, bit, probability })
    }

    /// Born-rule measurement with the state's generator.
    pub fn measure(&mut self, q: QubitId, basis: Basis) -> Result<MeasurementOutcome, EngineError> {
        self.measure_impl(q, basis, Choice::Sample)
    }

    /// Projects onto `bit` without sampling; returns the branch probability.
    /// A zero-probability branch leaves the state unnormalized and must be
    /// discarded by the caller.
    pub fn measure_forced(&mut self, q: QubitId, basis: Basis, bit: u8) -> Result<f64, EngineError> {
        Ok(self.measure_impl(q, basis, Choice::Forced(bit))?.probability)
    }

    fn remove_slot(&mut self, q: QubitId, choice: Choice, rng: Option<&mut dyn rand::RngCore>) -> Result<f64, EngineError> {
        let s = self.slot_of(q.index);
        let n = self.n();
        let p0 = kernel::prob_zero(&self.amps, n, s);
        let (bit, p) = match (choice, rng) {
            (Choice::Sample, Some(r)) => {
                let bit = if p0 < BRANCH_EPS {
                    1
                } else if 1.0 - p0 < BRANCH_EPS {
                    0
                } else {
                    u8::from(r.random::<f64>() >= p0)
                };
                (bit, if bit == 0 { p0 } else { 1.0 - p0 })
            }
            _ => self.choose(q, p0, choice)?,
        };
        self.amps = if p > 0.0 {
            kernel::project_out(&self.amps, n, s, bit)
        } else {
            vec![C64::new(0.0, 0.0); 1 << (n - 1)]
        };
        self.slots.remove(s);
        Ok(p)
    }

    fn reset_impl(&mut self, q: QubitId, choice: Choice) -> Result<f64, EngineError> {
        let leaked = self.check_live(q)?;
        let p = if leaked { 1.0 } else { self.remove_slot(q, choice, None)? };
        self.wires[q.index] = Wire::Dead { generation: q.generation + 1 };
        Ok(p)
    }

    /// Traces the wire out (sampled Z projection) and retires its generation.
    pub fn reset(&mut self, q: QubitId) -> Result<(), EngineError> {
        self.reset_impl(q, Choice::Sample).map(|_| ())
    }

    pub fn reset_forced(&mut self, q: QubitId, bit: u8) -> Result<f64, EngineError> {
        self.reset_impl(q, Choice::Forced(bit))
    }

    pub fn allocate(&mut self, q: QubitId) -> Result<(), EngineError> {
        self.ensure_wire(q.index);
        match self.wires[q.index] {
            Wire::Dead { generation } if generation == q.generation => {}
            Wire::Dead { .. } => return Err(EngineError::Lifetime { qubit: q, reason: "stale generation" }),
            _ => return Err(EngineError::Lifetime { qubit: q, reason: "already live" }),
        }
        self.amps = kernel::push_zero(&self.amps);
        self.slots.push(q.index);
        self.wires[q.index] = Wire::Live { generation: q.generation };
        self.peak_slots = self.peak_slots.max(self.slots.len());
        Ok(())
    }

    /// Moves a live wire to the leaked level. Its qubit-subspace state is
    /// traced out by a Z projection drawn from `rng`. No-op if already leaked.
    pub fn leak(&mut self, wire: usize, rng: &mut dyn rand::RngCore) -> Result<(), EngineError> {
        let q = self.current_id(wire);
        if self.check_live(q)? {
            return Ok(());
        }
        self.remove_slot(q, Choice::Sample, Some(rng))?;
        self.wires[wire] = Wire::Leaked { generation: q.generation };
        Ok(())
    }

    /// `⟨ψ|P|ψ⟩` for a Pauli string over live, unleaked wires.
    pub fn expectation(&self, string: &BTreeMap<QubitId, Pauli>) -> Result<f64, EngineError> {
        let n = self.n();
        let mut phi = self.amps.clone();
        for (&q, &p) in string {
            let st = self.wires.get(q.index).copied().unwrap_or(Wire::Dead { generation: 0 });
            if st.generation() != q.generation {
                return Err(EngineError::Lifetime { qubit: q, reason: "stale generation" });
            }
            match st {
                Wire::Dead { .. } => return Err(EngineError::Lifetime { qubit: q, reason: "wire is reset or unallocated" }),
                Wire::Leaked { .. } => return Err(EngineError::Leaked(q)),
                Wire::Live { .. } => {}
            }
            kernel::apply_1q(&mut phi, n, self.slot_of(q.index), &p.matrix());
        }
        let v: C64 = self.amps.iter().zip(&phi).map(|(a, b)| a.conj() * b).sum();
        debug_assert!(v.im.abs() < 1e-10, "imaginary residue {}", v.im);
        Ok(v.re)
    }

    fn bit(&self, b: usize) -> Result<u8, EngineError> {
        self.bits.get(b).copied().ok_or(EngineError::UndeclaredBit(b))
    }

    fn set_bit(&mut self, b: usize, v: u8) -> Result<(), EngineError> {
        *self.bits.get_mut(b).ok_or(EngineError::UndeclaredBit(b))? = v;
        Ok(())
    }

    /// Executes one instruction with sampled randomness.
    pub fn apply(&mut self, ins: &Instruction) -> Result<Option<MeasurementOutcome>, EngineError> {
        match ins {
            Instruction::Gate1 { matrix, target } => self.apply_gate1(*target, matrix)?,
            Instruction::Gate2 { matrix, targets, .. } => self.apply_gate2(targets[0], targets[1], matrix)?,
            Instruction::Measure { target, bit, basis } => {
                self.bit(*bit)?;
                let o = self.measure(*target, *basis)?;
                self.set_bit(*bit, o.bit)?;
                return Ok(Some(o));
            }
            Instruction::Reset { target } => self.reset(*target)?,
            Instruction::Allocate { target } => self.allocate(*target)?,
            Instruction::ConditionalGate1 { matrix, target, bit, value } => {
                if self.bit(*bit)? == u8::from(*value) {
                    self.apply_gate1(*target, matrix)?;
                } else {
                    self.check_live(*target)?;
                }
            }
        }
        Ok(None)
    }

    fn check_norm(&self) -> Result<(), EngineError> {
        let nrm = self.norm_sqr();
        if (nrm - 1.0).abs() > NORM_TOL {
            return Err(EngineError::NormDrift(nrm));
        }
        Ok(())
    }
}

/// Per-shot callbacks invoked after each instruction executes.
pub trait ShotHooks {
    fn after(&mut self, index: usize, ins: &Instruction, state: &mut SimState) -> Result<(), EngineError>;
}

/// Hooks that do nothing.
pub struct NoHooks;

impl ShotHooks for NoHooks {
    fn after(&mut self, _: usize, _: &Instruction, _: &mut SimState) -> Result<(), EngineError> {
        Ok(())
    }
}

/// One trial's readout: the site bits ordered by site, the herald bit if the
/// circuit has one, and the seed that produced it.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ShotRecord {
    pub index: u64,
    pub herald: Option<u8>,
    pub sites: Vec<u8>,
    pub seed: u64,
}

impl fmt::Display for ShotRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let herald = match self.herald {
            Some(b) => char::from(b'0' + b),
            None => '-',
        };
        let bits: String = self.sites.iter().map(|&b| char::from(b'0' + b)).collect();
        write!(f, "{} {} {} {}", self.index, herald, if bits.is_empty() { "-" } else { &bits }, self.seed)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("malformed shot record `{0}`")]
pub struct ShotParseError(pub String);

impl FromStr for ShotRecord {
    type Err = ShotParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ShotParseError(s.to_string());
        let toks: Vec<&str> = s.split_whitespace().collect();
        if toks.len() != 4 {
            return Err(err());
        }
        let index = toks[0].parse().map_err(|_| err())?;
        let herald = match toks[1] {
            "-" => None,
            "0" => Some(0),
            "1" => Some(1),
            _ => return Err(err()),
        };
        let sites = if toks[2] == "-" {
            Vec::new()
        } else {
            toks[2]
                .bytes()
                .map(|c| match c {
                    b'0' => Ok(0),
                    b'1' => Ok(1),
                    _ => Err(err()),
                })
                .collect::<Result<_, _>>()?
        };
        let seed = toks[3].parse().map_err(|_| err())?;
        Ok(ShotRecord { index, herald, sites, seed })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShotTrace {
    pub record: ShotRecord,
    pub bits: Vec<u8>,
    pub outcomes: Vec<MeasurementOutcome>,
    pub leaked: Vec<QubitId>,
    pub peak_slots: usize,
}

pub fn run_shot(circuit: &Circuit, seed: u64) -> Result<ShotTrace, EngineError> {
    run_shot_with(circuit, seed, &mut NoHooks)
}

pub fn run_shot_with(circuit: &Circuit, seed: u64, hooks: &mut dyn ShotHooks) -> Result<ShotTrace, EngineError> {
    let mut state = SimState::for_circuit(circuit, seed);
    let mut outcomes = Vec::new();
    for (index, ins) in circuit.instructions().iter().enumerate() {
        let wrap = |e: EngineError| EngineError::At { index, source: Box::new(e) };
        if let Some(o) = state.apply(ins).map_err(wrap)? {
            outcomes.push(o);
        }
        hooks.after(index, ins, &mut state).map_err(wrap)?;
        state.check_norm().map_err(wrap)?;
    }
    let bits = state.bits.clone();
    Ok(ShotTrace {
        record: record_from_bits(circuit, &bits, 0, seed),
        bits,
        outcomes,
        leaked: state.leaked_wires(),
        peak_slots: state.peak_slots,
    })
}

pub fn record_from_bits(circuit: &Circuit, bits: &[u8], index: u64, seed: u64) -> ShotRecord {
    ShotRecord {
        index,
        herald: circuit.herald_bit().map(|b| bits[b]),
        sites: circuit.site_bits().iter().map(|&(_, b)| bits[b]).collect(),
        seed,
    }
}

/// Exact distribution over full classical-bit strings, by enumerating every
/// measurement and reset branch. Branches below `1e-15` are pruned.
pub fn exact_distribution(circuit: &Circuit) -> Result<BTreeMap<Vec<u8>, f64>, EngineError> {
    let mut out = BTreeMap::new();
    let state = SimState::for_circuit(circuit, 0);
    enumerate(circuit, 0, state, 1.0, &mut out)?;
    Ok(out)
}

fn enumerate(
    circuit: &Circuit,
    start: usize,
    mut state: SimState,
    weight: f64,
    out: &mut BTreeMap<Vec<u8>, f64>,
) -> Result<(), EngineError> {
    let ins = circuit.instructions();
    for index in start..ins.len() {
        let wrap = |e: EngineError| EngineError::At { index, source: Box::new(e) };
        match &ins[index] {
            Instruction::Measure { target, bit, basis } => {
                state.bit(*bit).map_err(wrap)?;
                for b in 0..2u8 {
                    let mut s = state.clone();
                    let p = s.measure_forced(*target, *basis, b).map_err(wrap)?;
                    if p * weight < BRANCH_EPS {
                        continue;
                    }
                    s.set_bit(*bit, b).map_err(wrap)?;
                    enumerate(circuit, index + 1, s, weight * p, out)?;
                }
                return Ok(());
            }
            Instruction::Reset { target } => {
                if state.is_leaked(target.index) {
                    state.reset_forced(*target, 0).map_err(wrap)?;
                    continue;
                }
                for b in 0..2u8 {
                    let mut s = state.clone();
                    let p = s.reset_forced(*target, b).map_err(wrap)?;
                    if p * weight < BRANCH_EPS {
                        continue;
                    }
                    enumerate(circuit, index + 1, s, weight * p, out)?;
                }
                return Ok(());
            }
            other => {
                state.apply(other).map_err(wrap)?;
            }
        }
    }
    *out.entry(state.bits).or_insert(0.0) += weight;
    Ok(())
}

/// Marginal of a full-bit distribution on the site-labelled bits, keyed by
/// site-ordered bit strings.
pub fn site_marginal(circuit: &Circuit, dist: &BTreeMap<Vec<u8>, f64>) -> BTreeMap<Vec<u8>, f64> {
    let sites = circuit.site_bits();
    let mut out = BTreeMap::new();
    for (bits, p) in dist {
        let key: Vec<u8> = sites.iter().map(|&(_, b)| bits[b]).collect();
        *out.entry(key).or_insert(0.0) += p;
    }
    out
}

/// Total-variation distance between two distributions.
pub fn total_variation(a: &BTreeMap<Vec<u8>, f64>, b: &BTreeMap<Vec<u8>, f64>) -> f64 {
    let mut keys: Vec<&Vec<u8>> = a.keys().chain(b.keys()).collect();
    keys.sort();
    keys.dedup();
    0.5 * keys
        .into_iter()
        .map(|k| (a.get(k).copied().unwrap_or(0.0) - b.get(k).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

/// Sites carry the label `Site(j)`; returns `j ↦ bit` for a trace.
pub fn site_bits_of(circuit: &Circuit, bits: &[u8]) -> BTreeMap<usize, u8> {
    circuit
        .bit_labels()
        .iter()
        .enumerate()
        .filter_map(|(b, l)| match l {
            BitLabel::Site(j) => Some((*j, bits[b])),
            _ => None,
        })
        .collect()
}
