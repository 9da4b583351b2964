//! Correlator estimates from X-basis shot records.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::engine::ShotRecord;
use crate::linalg::Pauli;
use crate::oracle::{AveragingWindow, CorrelatorEntry, CorrelatorTable};
use crate::par::map_indices;

#[derive(Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error("need at least 2 shots, got {0}")]
    TooFewShots(usize),
    #[error("shot {index} has {got} site bits, expected {expected}")]
    WrongWidth { index: u64, got: usize, expected: usize },
    #[error("table is already binned")]
    AlreadyBinned,
}

/// `N_s × 2L` outcomes in `{+1, -1}`; bit 0 reads `+1`.
#[derive(Clone, Debug, PartialEq)]
pub struct ShotMatrix {
    pub rows: usize,
    pub sites: usize,
    data: Vec<i8>,
    pub herald_filtered: bool,
    pub t: usize,
}

impl ShotMatrix {
    pub fn from_records(records: &[ShotRecord], sites: usize, t: usize, herald_filtered: bool) -> Result<Self, EstimatorError> {
        let mut data = Vec::with_capacity(records.len() * sites);
        for r in records {
            if r.sites.len() != sites {
                return Err(EstimatorError::WrongWidth { index: r.index, got: r.sites.len(), expected: sites });
            }
            data.extend(r.sites.iter().map(|&b| 1 - 2 * b as i8));
        }
        Ok(Self { rows: records.len(), sites, data, herald_filtered, t })
    }

    pub fn from_signs(rows: Vec<Vec<i8>>, t: usize) -> Self {
        let sites = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == sites && r.iter().all(|&x| x == 1 || x == -1)));
        Self { rows: rows.len(), sites, data: rows.concat(), herald_filtered: false, t }
    }

    /// Outcome of shot `n` on site `j` (1-based).
    pub fn get(&self, n: usize, j: usize) -> i8 {
        self.data[n * self.sites + j - 1]
    }

    fn row(&self, n: usize) -> &[i8] {
        &self.data[n * self.sites..(n + 1) * self.sites]
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Estimate {
    pub table: CorrelatorTable,
    /// Distances with no window terms, and why.
    pub omitted: Vec<(usize, String)>,
}

/// Sample mean and standard error (`N - 1` variance) of `xs`.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// `C^{xx}(r)` per distance: each shot contributes the window mean of
/// `x_j x_{j+r+δ}`; value and standard error are taken over shots.
pub fn estimate_correlators(shots: &ShotMatrix, window: &AveragingWindow) -> Result<Estimate, EstimatorError> {
    if shots.rows < 2 {
        return Err(EstimatorError::TooFewShots(shots.rows));
    }
    assert_eq!(window.two_l, shots.sites, "window and shot width differ");
    let distances = window.distances();
    let entries = map_indices(distances.len(), |i| {
        let r = distances[i];
        let terms = window.terms(r);
        let per_shot: Vec<f64> = (0..shots.rows)
            .map(|n| {
                let row = shots.row(n);
                let s: i64 = terms.iter().map(|&(j, k)| (row[j - 1] * row[k - 1]) as i64).sum();
                s as f64 / terms.len() as f64
            })
            .collect();
        let (value, stderr) = mean_and_stderr(&per_shot);
        CorrelatorEntry { alpha: Pauli::X, beta: Pauli::X, r, t: shots.t, value, stderr, n_terms: terms.len(), binned: false }
    });
    let omitted = (distances.len()..shots.sites).map(|r| (r, format!("no sites j ≥ {} in window for r = {r}", window.j_min))).collect();
    Ok(Estimate { table: CorrelatorTable { entries }, omitted })
}

/// Merges `r ∈ {2j, 2j+1}` for `j > 0` into one entry keyed by `r = 2j`:
/// mean of the members, standard errors added in quadrature and divided by
/// the member count. `r = 0, 1` pass through.
pub fn bin_symmetry(table: &CorrelatorTable) -> Result<CorrelatorTable, EstimatorError> {
    if table.entries.iter().any(|e| e.binned) {
        return Err(EstimatorError::AlreadyBinned);
    }
    let mut groups: BTreeMap<(usize, Pauli, Pauli, usize), Vec<&CorrelatorEntry>> = BTreeMap::new();
    let mut out = CorrelatorTable::default();
    for e in &table.entries {
        if e.r < 2 {
            out.entries.push(e.clone());
        } else {
            groups.entry((e.t, e.alpha, e.beta, e.r / 2)).or_default().push(e);
        }
    }
    for ((t, alpha, beta, j), members) in groups {
        let m = members.len() as f64;
        out.entries.push(CorrelatorEntry {
            alpha,
            beta,
            r: 2 * j,
            t,
            value: members.iter().map(|e| e.value).sum::<f64>() / m,
            stderr: members.iter().map(|e| e.stderr * e.stderr).sum::<f64>().sqrt() / m,
            n_terms: members.iter().map(|e| e.n_terms).sum(),
            binned: true,
        });
    }
    out.sort();
    Ok(out)
}
