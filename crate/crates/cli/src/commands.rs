//! Subcommands. Each writes into the output directory and returns a short
//! text summary for stdout.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use holoquads::engine::{ShotRecord, RNG_ALGORITHM};
use holoquads::oracle::{CorrelatorTable, ErrorTable};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::pipeline::{self, Built};
use crate::CliError;

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    /// Shot-level worker threads; `None` uses every core.
    pub workers: Option<usize>,
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = cfg.output.dir.clone();
    fs::create_dir_all(&dir).map_err(|e| CliError::config(format!("output dir {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::internal(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::internal(format!("{}: {e}", path.display())))
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn csv_bytes(rows: Vec<Vec<String>>) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    for r in rows {
        w.write_record(r).expect("writing to memory");
    }
    w.into_inner().expect("flush to memory")
}

fn table_bytes(t: &CorrelatorTable) -> Vec<u8> {
    let mut t = t.clone();
    t.sort();
    t.to_csv_string().into_bytes()
}

fn read_table(path: &Path) -> Result<CorrelatorTable, CliError> {
    let text = read(path)?;
    CorrelatorTable::read_csv(text.as_bytes()).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn build_all(cfg: &RunConfig) -> Result<Vec<Built>, CliError> {
    let mps = pipeline::solvable_mps(cfg)?;
    cfg.depths().into_iter().map(|t| pipeline::build_depth(cfg, &mps, t)).collect()
}

fn resources_csv(built: &[Built]) -> Vec<u8> {
    let mut rows = vec![[
        "t",
        "qubits",
        "single_qubit_gates",
        "two_qubit_gates",
        "measurements",
        "resets",
        "native_single_qubit_gates",
        "native_ms_gates",
    ]
    .map(String::from)
    .to_vec()];
    for b in built {
        let r = b.resources;
        rows.push(
            [b.t, r.qubits, r.single_qubit_gates, r.two_qubit_gates, r.measurements, r.resets, b.native.single_qubit_gates, b.native.two_qubit_gates]
                .map(|x| x.to_string())
                .to_vec(),
        );
    }
    csv_bytes(rows)
}

pub fn cmd_build(cfg: &RunConfig) -> Result<String, CliError> {
    let dir = out_dir(cfg)?;
    let built = build_all(cfg)?;
    let mut summary = String::new();
    for b in &built {
        write(&dir.join(format!("circuits/holo_t{}.txt", b.t)), b.circuit.to_text())?;
        if let Some(flat) = &b.flat {
            write(&dir.join(format!("circuits/flat_t{}.txt", b.t)), flat.to_text())?;
        }
        writeln!(
            summary,
            "t = {}: qubits = {}, two-qubit gates = {} (native MS = {}), measurements = {}",
            b.t, b.resources.qubits, b.resources.two_qubit_gates, b.native.two_qubit_gates, b.resources.measurements
        )
        .unwrap();
    }
    write(&dir.join("resources.csv"), resources_csv(&built))?;
    Ok(summary)
}

#[derive(Serialize)]
struct Manifest {
    tool: String,
    version: String,
    config_sha256: String,
    rng: String,
    seed_derivation: String,
    master_seed: u64,
    depth: Vec<DepthEntry>,
}

#[derive(Serialize)]
struct DepthEntry {
    t: usize,
    /// Hex string: derived seeds use all 64 bits, beyond TOML's integer range.
    seed: String,
    shots: u64,
    heralded: usize,
    discard_fraction: f64,
    shots_sha256: String,
}

fn shots_header(cfg: &RunConfig, t: usize) -> String {
    format!("# holoquads-shots t={t} config={}", cfg.sha256())
}

fn shots_text(cfg: &RunConfig, t: usize, shots: &[ShotRecord]) -> String {
    let mut s = shots_header(cfg, t);
    s.push('\n');
    for r in shots {
        writeln!(s, "{r}").unwrap();
    }
    s
}

fn read_shots(cfg: &RunConfig, path: &Path, t: usize) -> Result<Vec<ShotRecord>, CliError> {
    let text = read(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    let expected = shots_header(cfg, t);
    if header != expected {
        return Err(CliError::config(format!(
            "{} was produced by a different configuration:\n  found    {header}\n  expected {expected}",
            path.display()
        )));
    }
    lines
        .map(|l| l.parse::<ShotRecord>().map_err(|e| CliError::config(format!("{}: {e}", path.display()))))
        .collect()
}

pub fn cmd_simulate(cfg: &RunConfig, opts: RunOptions) -> Result<String, CliError> {
    let dir = out_dir(cfg)?;
    let built = build_all(cfg)?;
    let mut depth = Vec::new();
    let mut herald_rows = vec![["t", "shots", "heralded", "discard_fraction"].map(String::from).to_vec()];
    let mut summary = String::new();
    for b in &built {
        let shots = pipeline::simulate_depth(cfg, b, opts.workers)?;
        let text = shots_text(cfg, b.t, &shots);
        write(&dir.join(format!("shots_t{}.txt", b.t)), &text)?;
        let (_, stats) = pipeline::select(cfg, &shots)?;
        herald_rows.push(vec![b.t.to_string(), stats.shots.to_string(), stats.heralded.to_string(), stats.discard_fraction.to_string()]);
        writeln!(summary, "t = {}: {} shots, discard_fraction = {}", b.t, stats.shots, stats.discard_fraction).unwrap();
        depth.push(DepthEntry {
            t: b.t,
            seed: format!("{:#018x}", pipeline::depth_seed(cfg.sampling.seed, b.t)),
            shots: cfg.sampling.shots,
            heralded: stats.heralded,
            discard_fraction: stats.discard_fraction,
            shots_sha256: format!("{:x}", Sha256::digest(text.as_bytes())),
        });
    }
    write(&dir.join("herald.csv"), csv_bytes(herald_rows))?;
    write(&dir.join("config.toml"), cfg.canonical_text())?;
    let manifest = Manifest {
        tool: "holoquads".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: cfg.sha256(),
        rng: RNG_ALGORITHM.into(),
        seed_derivation: "depth seed = splitmix64(master, 2^40 + t); shot seed = splitmix64(depth seed, index)".into(),
        master_seed: cfg.sampling.seed,
        depth,
    };
    write(&dir.join("manifest.toml"), toml::to_string(&manifest).expect("manifest serializes"))?;
    Ok(summary)
}

pub fn cmd_oracle(cfg: &RunConfig) -> Result<String, CliError> {
    let dir = out_dir(cfg)?;
    let mps = pipeline::solvable_mps(cfg)?;
    let (mut all, mut all_binned) = (CorrelatorTable::default(), CorrelatorTable::default());
    for t in cfg.depths() {
        let (table, binned) = pipeline::oracle_depth(cfg, &mps, t)?;
        all.extend(table);
        all_binned.extend(binned);
    }
    write(&dir.join("oracle.csv"), table_bytes(&all))?;
    write(&dir.join("oracle_binned.csv"), table_bytes(&all_binned))?;
    Ok(format!("oracle: {} entries over t = {:?}\n", all.len(), cfg.depths()))
}

pub fn cmd_estimate(cfg: &RunConfig, opts: RunOptions) -> Result<String, CliError> {
    let dir = out_dir(cfg)?;
    if cfg.depths().iter().any(|t| !dir.join(format!("shots_t{t}.txt")).exists()) {
        cmd_simulate(cfg, opts)?;
    }
    let (mut all, mut all_binned) = (CorrelatorTable::default(), CorrelatorTable::default());
    let mut summary = String::new();
    for t in cfg.depths() {
        let shots = read_shots(cfg, &dir.join(format!("shots_t{t}.txt")), t)?;
        let (kept, stats) = pipeline::select(cfg, &shots)?;
        let (table, binned) = pipeline::estimate_depth(cfg, t, &kept, stats.heralded > 0 || cfg.noise.post_select)?;
        writeln!(summary, "t = {t}: {} kept shots, {} distances", kept.len(), table.len()).unwrap();
        all.extend(table);
        all_binned.extend(binned);
    }
    write(&dir.join("estimate.csv"), table_bytes(&all))?;
    write(&dir.join("estimate_binned.csv"), table_bytes(&all_binned))?;
    Ok(summary)
}

fn histogram_csv(errors: &ErrorTable) -> Vec<u8> {
    let (width, bins) = (0.5, 8);
    let counts = errors.histogram(width, bins);
    let mut rows = vec![["lo", "hi", "count"].map(String::from).to_vec()];
    for (i, c) in counts.iter().enumerate() {
        let hi = if i + 1 == bins { "inf".to_string() } else { ((i + 1) as f64 * width).to_string() };
        rows.push(vec![(i as f64 * width).to_string(), hi, c.to_string()]);
    }
    csv_bytes(rows)
}

/// Binned light-cone layout: theory mirrored to `r < 0`, experiment at
/// `r ≥ 0`.
fn heatmap_csv(expt: &CorrelatorTable, theory: &CorrelatorTable) -> Vec<u8> {
    let mut cells: Vec<(usize, i64, f64, &str)> = Vec::new();
    for e in &theory.entries {
        if e.r > 0 {
            cells.push((e.t, -(e.r as i64), e.value, "theory"));
        }
    }
    for e in &expt.entries {
        cells.push((e.t, e.r as i64, e.value, "experiment"));
    }
    cells.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    let mut rows = vec![["t", "r", "value", "source"].map(String::from).to_vec()];
    rows.extend(cells.into_iter().map(|(t, r, v, s)| vec![t.to_string(), r.to_string(), v.to_string(), s.to_string()]));
    csv_bytes(rows)
}

pub fn cmd_compare(cfg: &RunConfig, opts: RunOptions) -> Result<String, CliError> {
    let dir = out_dir(cfg)?;
    if !dir.join("estimate.csv").exists() {
        cmd_estimate(cfg, opts)?;
    }
    if !dir.join("oracle.csv").exists() {
        cmd_oracle(cfg)?;
    }
    let expt = read_table(&dir.join("estimate.csv"))?;
    let theory = read_table(&dir.join("oracle.csv"))?;
    let errors = pipeline::compare(&expt, &theory)?;
    let mut buf = Vec::new();
    errors.write_csv(&mut buf).map_err(pipeline::oracle_error)?;
    write(&dir.join("compare.csv"), buf)?;
    write(&dir.join("histogram.csv"), histogram_csv(&errors))?;
    let (eb, ob) = (dir.join("estimate_binned.csv"), dir.join("oracle_binned.csv"));
    if eb.exists() && ob.exists() {
        write(&dir.join("heatmap.csv"), heatmap_csv(&read_table(&eb)?, &read_table(&ob)?))?;
    }
    let summary = format!("{errors}fraction_within_3 = {:.4}\n", errors.fraction_within(3.0));
    write(&dir.join("summary.txt"), &summary)?;
    Ok(summary)
}

pub fn cmd_report(cfg: &RunConfig) -> Result<String, CliError> {
    let dir = out_dir(cfg)?;
    let built = build_all(cfg)?;
    let mut s = String::from("# resources\n");
    s.push_str(&String::from_utf8(resources_csv(&built)).expect("utf-8"));
    for (name, file) in [("herald statistics", "herald.csv"), ("comparison", "summary.txt")] {
        let path = dir.join(file);
        if path.exists() {
            writeln!(s, "# {name}").unwrap();
            s.push_str(&read(&path)?);
        }
    }
    write(&dir.join("report.txt"), &s)?;
    Ok(s)
}
