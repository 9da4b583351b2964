//! Build → simulate → estimate → compare, shared by the binary and tests.

use std::ops::Range;

use holoquads::circuit::{count_resources, Circuit, ResourceReport};
use holoquads::engine::{EngineError, ShotRecord};
use holoquads::estimator::{bin_symmetry, estimate_correlators, EstimatorError, ShotMatrix};
use holoquads::linalg::Pauli;
use holoquads::noise::{leakage_gadget, post_select, GadgetMode, HeraldStats, NoiseModel};
use holoquads::oracle::{normalized_errors, tebd_correlators, CorrelatorTable, ErrorTable, OracleError, OracleSpec};
use holoquads::rewrite::{native_gate_count, swap_factor};
use holoquads::sampling::{derive_seed, run_shots, run_shots_with_workers, ShotError};
use holoquads::schedule::{schedule, verify_causality, SliceSchedule};
use holoquads::sdki::{flat_reference_circuit, SdkiParams, SolvableMps, FLAT_QUBIT_CAP};
use holoquads::C64;
use nalgebra::DMatrix;

use crate::config::RunConfig;
use crate::CliError;

/// Everything `build` produces for one depth.
#[derive(Clone, Debug)]
pub struct Built {
    pub t: usize,
    pub circuit: Circuit,
    pub schedule: SliceSchedule,
    /// Flat baseline, when it fits the dense engine.
    pub flat: Option<Circuit>,
    pub resources: ResourceReport,
    pub native: ResourceReport,
    /// Physical wire carrying the bond qubit at the end.
    pub bond_wire: usize,
    pub gadget: Option<Range<usize>>,
}

pub fn solvable_mps(cfg: &RunConfig) -> Result<SolvableMps, CliError> {
    let Some(path) = &cfg.mps.w_file else {
        return Ok(SolvableMps::from_kicks(cfg.mps.kicks.unwrap_or(holoquads::sdki::PAPER_KICKS)));
    };
    let path = cfg.base_dir.join(path);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::config(format!("mps.w_file {}: {e}", path.display())))?;
    let w = parse_matrix(&text).map_err(|m| CliError::config(format!("mps.w_file {}: {m}", path.display())))?;
    if w.nrows() != 2 * cfg.mps.chi {
        return Err(CliError::config(format!("mps.w_file: W is {}×{}, expected 2χ = {}", w.nrows(), w.ncols(), 2 * cfg.mps.chi)));
    }
    SolvableMps::from_unitary(w).map_err(|e| CliError::config(format!("mps.w_file: {e}")))
}

/// Square complex matrix, one row per line as `re im` pairs; `#` comments.
pub fn parse_matrix(text: &str) -> Result<DMatrix<C64>, String> {
    let mut rows: Vec<Vec<C64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let nums: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|_| format!("line {}: bad number `{s}`", i + 1)))
            .collect::<Result<_, _>>()?;
        if nums.len() % 2 != 0 {
            return Err(format!("line {}: odd number of reals", i + 1));
        }
        rows.push(nums.chunks(2).map(|p| C64::new(p[0], p[1])).collect());
    }
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err("matrix must be square".into());
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

pub fn build_depth(cfg: &RunConfig, mps: &SolvableMps, t: usize) -> Result<Built, CliError> {
    let params = SdkiParams::new(cfg.model.h, t, cfg.model.two_l).map_err(|e| CliError::config(e.to_string()))?;
    let sched = schedule(&params, mps, cfg.num_slices(), cfg.schedule.temporal_boundary)
        .map_err(|e| CliError::config(format!("schedule: {e}")))?;
    let violations = verify_causality(&sched.schedule);
    if !violations.is_empty() {
        return Err(CliError::internal(format!("t = {t}: schedule violates causality: {violations:?}")));
    }
    let mut circuit = sched.circuit;
    let mut bond_wire = sched.bond.index;
    if cfg.schedule.swap_factor {
        let (rw, report) = swap_factor(&circuit);
        bond_wire = report.permutation[bond_wire];
        circuit = rw;
    }
    let mut gadget = None;
    if cfg.noise.herald {
        let g = leakage_gadget(&circuit, bond_wire, GadgetMode::Destructive).map_err(|e| CliError::internal(e.to_string()))?;
        gadget = Some(g.range.clone());
        circuit = g.circuit;
    }
    let resources = count_resources(&circuit).map_err(|e| CliError::internal(e.to_string()))?;
    let native = native_gate_count(&circuit);
    let flat = flat_reference_circuit(cfg.model.h, t, mps, cfg.num_slices(), cfg.schedule.temporal_boundary).ok();
    debug_assert!(flat.as_ref().is_none_or(|f| f.num_wires() <= FLAT_QUBIT_CAP));
    Ok(Built { t, circuit, schedule: sched.schedule, flat, resources, native, bond_wire, gadget })
}

/// Noise model with the gadget exempt, or `None` when noiseless.
pub fn noise_model(cfg: &RunConfig, built: &Built) -> Result<Option<NoiseModel>, CliError> {
    let params = cfg.noise.params();
    if params.is_noiseless() {
        return Ok(None);
    }
    let mut model = NoiseModel::new(params).map_err(|e| CliError::config(e.to_string()))?;
    if let Some(r) = &built.gadget {
        model = model.exempting(r.clone());
    }
    Ok(Some(model))
}

/// Master seed of the shot stream for depth `t`.
pub fn depth_seed(master: u64, t: usize) -> u64 {
    derive_seed(master, (1u64 << 40) + t as u64)
}

fn engine_error(e: ShotError) -> CliError {
    let inner = match &e.source {
        EngineError::At { source, .. } => &**source,
        other => other,
    };
    let numeric = matches!(inner, EngineError::NormDrift(_) | EngineError::ZeroNorm(_));
    if numeric {
        CliError::numeric(e.to_string())
    } else {
        CliError::internal(e.to_string())
    }
}

pub fn simulate_depth(cfg: &RunConfig, built: &Built, workers: Option<usize>) -> Result<Vec<ShotRecord>, CliError> {
    let noise = noise_model(cfg, built)?;
    let seed = depth_seed(cfg.sampling.seed, built.t);
    let shots = cfg.sampling.shots;
    match workers {
        Some(w) => run_shots_with_workers(&built.circuit, seed, shots, noise.as_ref(), w),
        None => run_shots(&built.circuit, seed, shots, noise.as_ref()),
    }
    .map_err(engine_error)
}

/// Post-selects (when configured and heralded) and returns kept shots.
pub fn select(cfg: &RunConfig, shots: &[ShotRecord]) -> Result<(Vec<ShotRecord>, HeraldStats), CliError> {
    if cfg.noise.herald && cfg.noise.post_select {
        post_select(shots).map_err(|e| CliError::internal(e.to_string()))
    } else {
        Ok((shots.to_vec(), HeraldStats { shots: shots.len(), heralded: 0, discard_fraction: 0.0 }))
    }
}

fn estimator_error(e: EstimatorError) -> CliError {
    match e {
        EstimatorError::TooFewShots(_) => CliError::config(e.to_string()),
        _ => CliError::internal(e.to_string()),
    }
}

/// Unbinned and binned estimates for one depth from its kept shots.
pub fn estimate_depth(cfg: &RunConfig, t: usize, kept: &[ShotRecord], filtered: bool) -> Result<(CorrelatorTable, CorrelatorTable), CliError> {
    let m = ShotMatrix::from_records(kept, cfg.model.two_l, t, filtered).map_err(estimator_error)?;
    let est = estimate_correlators(&m, &cfg.window()).map_err(estimator_error)?;
    let binned = bin_symmetry(&est.table).map_err(estimator_error)?;
    Ok((est.table, binned))
}

pub fn oracle_error(e: OracleError) -> CliError {
    match e {
        OracleError::Precision { .. } | OracleError::Svd(_) | OracleError::ImaginaryResidue { .. } => CliError::numeric(e.to_string()),
        OracleError::Config(_) | OracleError::TooManyQubits { .. } => CliError::config(e.to_string()),
        _ => CliError::internal(e.to_string()),
    }
}

pub fn oracle_depth(cfg: &RunConfig, mps: &SolvableMps, t: usize) -> Result<(CorrelatorTable, CorrelatorTable), CliError> {
    let spec = OracleSpec {
        h: cfg.model.h,
        t,
        window: cfg.window(),
        pairs: vec![(Pauli::X, Pauli::X)],
        include_temporal_boundary: cfg.schedule.temporal_boundary,
    };
    let table = tebd_correlators(&spec, &mps.cell_mps(), &cfg.oracle.tebd()).map_err(oracle_error)?;
    let binned = bin_symmetry(&table).map_err(estimator_error)?;
    Ok((table, binned))
}

/// `ε` table; refuses tables whose depths or keys do not line up.
pub fn compare(expt: &CorrelatorTable, theory: &CorrelatorTable) -> Result<ErrorTable, CliError> {
    if expt.depths() != theory.depths() {
        return Err(CliError::config(format!(
            "depth mismatch: estimate has t = {:?}, oracle has t = {:?}",
            expt.depths(),
            theory.depths()
        )));
    }
    let errors = normalized_errors(expt, theory);
    if !errors.unmatched.is_empty() {
        let keys: Vec<String> = errors.unmatched.iter().map(|k| format!("(r = {}, t = {})", k.2, k.3)).collect();
        return Err(CliError::config(format!("estimate entries without oracle values: {}", keys.join(", "))));
    }
    Ok(errors)
}
