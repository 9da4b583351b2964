//! Holographic slicing: qMPS preparation, brick-wall evolution and X-basis
//! readout compiled into one measure-and-reuse circuit.
//!
//! Slice `k` retires the unit cell `(2k-1, 2k)`. The scheduler computes the
//! backward causal cone of the two sites over the gate DAG, prepares every
//! cell the cone reaches that is not yet prepared, runs the cone's pending
//! gates in layer order, then measures and resets the two wires. Freed wires
//! are reused lowest index first. Wire 0 holds the bond qubit throughout.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::circuit::{Basis, BitLabel, Circuit, CircuitBuilder, QubitId};
use crate::sdki::{append_unit_cell, floquet_gates, padding_cells, FloquetGate, SdkiError, SdkiParams, SolvableMps};

/// A gate of the brick wall, identified by layer and left site.
pub type GateKey = (usize, usize);

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("{num_slices} slices cannot hold one light cone at t = {t} (need at least {need})")]
    TooFewSlices { num_slices: usize, t: usize, need: usize },
    #[error("window 2L = {two_l} does not equal 2 × {num_slices} slices")]
    WindowMismatch { two_l: usize, num_slices: usize },
    #[error(transparent)]
    Sdki(#[from] SdkiError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Slice {
    pub index: usize,
    /// Unit cells (1-based) prepared in this slice.
    pub prepared_cells: Vec<usize>,
    pub gates: Vec<GateKey>,
    pub measured_sites: [usize; 2],
    pub measured: [QubitId; 2],
    pub reset: [QubitId; 2],
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SliceSchedule {
    pub t: usize,
    /// Sites of the padded chain the schedule draws from.
    pub n_sites: usize,
    pub slices: Vec<Slice>,
    pub qubit_budget: usize,
    /// The gates the schedule must cover: every gate in the backward cone of
    /// some measured site.
    pub required_gates: Vec<GateKey>,
}

#[derive(Clone, Debug)]
pub struct Scheduled {
    pub circuit: Circuit,
    pub schedule: SliceSchedule,
    pub bond: QubitId,
}

pub fn qubit_budget(n_b: usize, t: usize) -> usize {
    n_b + 2 * t.div_ceil(2) + 2
}

/// Direct predecessors of each gate: the latest earlier gate on each of its
/// two sites.
fn predecessors(gates: &[GateKey]) -> BTreeMap<GateKey, Vec<GateKey>> {
    let mut last_on: BTreeMap<usize, GateKey> = BTreeMap::new();
    let mut sorted = gates.to_vec();
    sorted.sort_unstable();
    let mut out = BTreeMap::new();
    for g in sorted {
        let (_, a) = g;
        let preds: Vec<GateKey> = [a, a + 1].iter().filter_map(|s| last_on.get(s).copied()).collect();
        out.insert(g, preds);
        last_on.insert(a, g);
        last_on.insert(a + 1, g);
    }
    out
}

fn last_gate_on(gates: &[GateKey], site: usize) -> Option<GateKey> {
    gates.iter().filter(|(_, a)| *a == site || *a + 1 == site).max().copied()
}

/// Gates in the backward cone of the final value of `site`.
fn cone(preds: &BTreeMap<GateKey, Vec<GateKey>>, gates: &[GateKey], site: usize) -> BTreeSet<GateKey> {
    let mut out = BTreeSet::new();
    let mut stack: Vec<GateKey> = last_gate_on(gates, site).into_iter().collect();
    while let Some(g) = stack.pop() {
        if out.insert(g) {
            stack.extend(preds[&g].iter().copied());
        }
    }
    out
}

#[derive(Default)]
struct WirePool {
    free: BTreeSet<usize>,
    next: usize,
}

impl WirePool {
    fn take(&mut self) -> usize {
        if let Some(&w) = self.free.iter().next() {
            self.free.remove(&w);
            w
        } else {
            self.next += 1;
            self.next
        }
    }
}

pub fn schedule(
    params: &SdkiParams,
    mps: &SolvableMps,
    num_slices: usize,
    include_temporal_boundary: bool,
) -> Result<Scheduled, ScheduleError> {
    let t = params.t;
    let need = t.div_ceil(2) + 1;
    if num_slices < need {
        return Err(ScheduleError::TooFewSlices { num_slices, t, need });
    }
    if params.two_l != 2 * num_slices {
        return Err(ScheduleError::WindowMismatch { two_l: params.two_l, num_slices });
    }
    let w = mps.w4()?;
    let n_b = mps.n_b();
    let n_sites = 2 * (num_slices + padding_cells(t));
    let all: Vec<FloquetGate> = floquet_gates(params.h, t, n_sites, include_temporal_boundary);
    let keys: Vec<GateKey> = all.iter().map(|g| (g.layer, g.site)).collect();
    let tags: BTreeMap<GateKey, &FloquetGate> = keys.iter().copied().zip(all.iter()).collect();
    let preds = predecessors(&keys);

    let mut required = BTreeSet::new();
    for s in 1..=2 * num_slices {
        required.extend(cone(&preds, &keys, s));
    }

    let mut b = CircuitBuilder::new();
    let bond = b.qubit(0);
    let mut pool = WirePool { next: n_b - 1, ..Default::default() };
    let mut site_wire: BTreeMap<usize, usize> = BTreeMap::new();
    let mut prepared = 0usize;
    let mut done: BTreeSet<GateKey> = BTreeSet::new();
    let mut slices = Vec::with_capacity(num_slices);

    for k in 1..=num_slices {
        let sites = [2 * k - 1, 2 * k];
        let mut pending: BTreeSet<GateKey> = BTreeSet::new();
        for &s in &sites {
            pending.extend(cone(&preds, &keys, s).into_iter().filter(|g| !done.contains(g)));
        }
        let reach = pending.iter().map(|&(_, a)| a + 1).chain(sites).max().unwrap_or(0);
        let mut prepared_cells = Vec::new();
        while 2 * prepared < reach {
            prepared += 1;
            let (s1, s2) = (pool.take(), pool.take());
            b.allocate(s1).allocate(s2);
            append_unit_cell(&mut b, &w, 0, s1, s2);
            site_wire.insert(2 * prepared - 1, s1);
            site_wire.insert(2 * prepared, s2);
            prepared_cells.push(prepared);
        }
        for &g in &pending {
            let (_, a) = g;
            b.gate2_tagged(tags[&g].tag.clone(), site_wire[&a], site_wire[&(a + 1)]);
        }
        let wires = sites.map(|s| site_wire[&s]);
        let ids = wires.map(|wi| b.qubit(wi));
        for (&s, &wi) in sites.iter().zip(&wires) {
            b.measure(wi, Basis::X, BitLabel::Site(s));
        }
        for &wi in &wires {
            b.reset(wi);
            pool.free.insert(wi);
        }
        for s in sites {
            site_wire.remove(&s);
        }
        done.extend(pending.iter().copied());
        slices.push(Slice {
            index: k,
            prepared_cells,
            gates: pending.into_iter().collect(),
            measured_sites: sites,
            measured: ids,
            reset: ids,
        });
    }

    Ok(Scheduled {
        circuit: b.build(),
        schedule: SliceSchedule {
            t,
            n_sites,
            slices,
            qubit_budget: qubit_budget(n_b, t),
            required_gates: required.into_iter().collect(),
        },
        bond,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CausalityViolation {
    /// `gate` lies in the backward cone of `site`, measured in `slice`, but
    /// runs later or never.
    LateGate { slice: usize, site: usize, gate: GateKey },
    /// `gate` touches a cell not prepared by the end of its slice.
    Unprepared { slice: usize, gate: GateKey },
    /// `gate` is scheduled more than once.
    Duplicate { gate: GateKey },
}

/// Checks that every measured site's backward cone has run by its slice and
/// that gates only touch prepared cells.
pub fn verify_causality(s: &SliceSchedule) -> Vec<CausalityViolation> {
    let preds = predecessors(&s.required_gates);
    let mut when: BTreeMap<GateKey, usize> = BTreeMap::new();
    let mut out = Vec::new();
    for sl in &s.slices {
        for &g in &sl.gates {
            if when.insert(g, sl.index).is_some() {
                out.push(CausalityViolation::Duplicate { gate: g });
            }
        }
    }
    let mut prepared = 0;
    for sl in &s.slices {
        prepared = prepared.max(sl.prepared_cells.iter().copied().max().unwrap_or(0));
        for &g in &sl.gates {
            if g.1 + 1 > 2 * prepared {
                out.push(CausalityViolation::Unprepared { slice: sl.index, gate: g });
            }
        }
        for &site in &sl.measured_sites {
            for g in cone(&preds, &s.required_gates, site) {
                if when.get(&g).is_none_or(|&k| k > sl.index) {
                    out.push(CausalityViolation::LateGate { slice: sl.index, site, gate: g });
                }
            }
        }
    }
    out
}

impl fmt::Display for SliceSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "t = {}", self.t)?;
        writeln!(f, "chain_sites = {}", self.n_sites)?;
        writeln!(f, "qubit_budget = {}", self.qubit_budget)?;
        for sl in &self.slices {
            let cells: Vec<String> = sl.prepared_cells.iter().map(|c| c.to_string()).collect();
            let gates: Vec<String> = sl.gates.iter().map(|(l, a)| format!("L{l}:{a}-{}", a + 1)).collect();
            writeln!(
                f,
                "slice {}: prep [{}] gates [{}] measure s{}@{} s{}@{} reset {} {}",
                sl.index,
                cells.join(" "),
                gates.join(" "),
                sl.measured_sites[0],
                sl.measured[0],
                sl.measured_sites[1],
                sl.measured[1],
                sl.reset[0],
                sl.reset[1],
            )?;
        }
        Ok(())
    }
}
