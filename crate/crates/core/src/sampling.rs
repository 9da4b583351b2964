//! Seeded shot loops. Shot `i` always runs with `derive_seed(master, i)`, so
//! results do not depend on how shots are spread over threads.

use thiserror::Error;

use crate::circuit::Circuit;
use crate::engine::{run_shot_with, EngineError, NoHooks, ShotRecord, ShotTrace};
use crate::noise::NoiseModel;
use crate::par::map_indices;

#[derive(Debug, Error)]
#[error("shot {index}: {source}")]
pub struct ShotError {
    pub index: u64,
    #[source]
    pub source: EngineError,
}

/// SplitMix64 output for stream position `index + 1` of `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs one indexed shot, with noise hooks when a model is given.
pub fn run_indexed(circuit: &Circuit, master: u64, index: u64, noise: Option<&NoiseModel>) -> Result<ShotTrace, ShotError> {
    let seed = derive_seed(master, index);
    let trace = match noise {
        Some(m) => run_shot_with(circuit, seed, &mut m.hooks(seed)),
        None => run_shot_with(circuit, seed, &mut NoHooks),
    };
    let mut trace = trace.map_err(|source| ShotError { index, source })?;
    trace.record.index = index;
    Ok(trace)
}

fn collect(results: Vec<Result<ShotRecord, ShotError>>) -> Result<Vec<ShotRecord>, ShotError> {
    results.into_iter().collect()
}

pub fn run_shots_sequential(
    circuit: &Circuit,
    master: u64,
    shots: u64,
    noise: Option<&NoiseModel>,
) -> Result<Vec<ShotRecord>, ShotError> {
    collect((0..shots).map(|i| run_indexed(circuit, master, i, noise).map(|t| t.record)).collect())
}

/// Shots spread over the global thread pool (sequential without the
/// `parallel` feature).
pub fn run_shots(circuit: &Circuit, master: u64, shots: u64, noise: Option<&NoiseModel>) -> Result<Vec<ShotRecord>, ShotError> {
    let n = usize::try_from(shots).expect("shot count fits in memory");
    collect(map_indices(n, |i| run_indexed(circuit, master, i as u64, noise).map(|t| t.record)))
}

/// [`run_shots`] on a dedicated pool of `workers` threads.
#[cfg(feature = "parallel")]
pub fn run_shots_with_workers(
    circuit: &Circuit,
    master: u64,
    shots: u64,
    noise: Option<&NoiseModel>,
    workers: usize,
) -> Result<Vec<ShotRecord>, ShotError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build().expect("thread pool");
    pool.install(|| run_shots(circuit, master, shots, noise))
}

#[cfg(not(feature = "parallel"))]
pub fn run_shots_with_workers(
    circuit: &Circuit,
    master: u64,
    shots: u64,
    noise: Option<&NoiseModel>,
    _workers: usize,
) -> Result<Vec<ShotRecord>, ShotError> {
    run_shots_sequential(circuit, master, shots, noise)
}
