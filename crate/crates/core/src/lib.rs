//! Holographic quantum dynamics simulation (holoQUADS) of the self-dual kicked
//! Ising chain.
//!
//! The crate is organized bottom-up:
//!
//! - [`circuit`]: a small circuit IR with mid-circuit measurement, reset,
//!   allocation/reuse of qubit wires, single-bit classical conditioning and an
//!   explicit global phase, plus a line-oriented text serialization.
//! - [`engine`]: a dense statevector simulator over the live qubit wires, with
//!   seeded Born-rule sampling, trajectory-style leakage bookkeeping, and exact
//!   branch enumeration for small circuits.
//! - [`sdki`]: the dual-unitary kicked-Ising gate, the brick-wall Floquet
//!   circuit, solvable MPS tensors and their qMPS unit-cell circuit.
//! - [`schedule`]: compilation of state preparation + time evolution + final
//!   readout into the sliced measure-and-reuse circuit, with causality checks.
//! - [`rewrite`]: SWAP factoring of dual-unitary gates and native (MS) gate
//!   counting.
//! - [`noise`]: depolarizing/leakage trajectory noise, the leakage-detection
//!   gadget, and post-selection.
//! - [`oracle`]: dense and MPS (TEBD) reference correlators.
//! - [`estimator`]: shot-based correlator estimates, standard errors, binning.
//! - [`sampling`]: seed derivation and (optionally parallel) shot loops.

pub mod circuit;
pub mod engine;
pub mod estimator;
pub mod kernel;
pub mod linalg;
pub mod noise;
pub mod oracle;
mod par;
pub mod rewrite;
pub mod sampling;
pub mod schedule;
pub mod sdki;

pub use num_complex::Complex64 as C64;

pub use circuit::{Basis, BitLabel, Circuit, CircuitBuilder, Instruction, QubitId};
pub use engine::{ShotRecord, ShotTrace, SimState};
pub use oracle::{AveragingWindow, CorrelatorTable};
pub use sdki::{SdkiParams, SolvableMps};
