//! Run configuration: one TOML file, unknown keys rejected.

use std::path::{Path, PathBuf};

use holoquads::noise::NoiseParams;
use holoquads::oracle::{AveragingWindow, TebdConfig};
use holoquads::sdki::{PAPER_FIELD, PAPER_KICKS};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Depths {
    One(usize),
    Many(Vec<usize>),
}

impl Depths {
    pub fn values(&self) -> Vec<usize> {
        match self {
            Depths::One(t) => vec![*t],
            Depths::Many(ts) => ts.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub h: f64,
    /// One depth or a list of depths.
    pub t: Depths,
    #[serde(default = "default_two_l")]
    pub two_l: usize,
}

fn default_two_l() -> usize {
    32
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpsConfig {
    /// `(K_x, K_y, K_z)` of `W = exp[-i Σ K_α σ^α⊗σ^α]`.
    pub kicks: Option<[f64; 3]>,
    /// Text file with `W`, one row per line as `re im` pairs; relative to the
    /// config file.
    pub w_file: Option<PathBuf>,
    #[serde(default = "default_chi")]
    pub chi: usize,
}

fn default_chi() -> usize {
    2
}

impl Default for MpsConfig {
    fn default() -> Self {
        Self { kicks: None, w_file: None, chi: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    /// Defaults to `two_l / 2`.
    pub num_slices: Option<usize>,
    #[serde(default)]
    pub swap_factor: bool,
    #[serde(default = "yes")]
    pub temporal_boundary: bool,
}

fn yes() -> bool {
    true
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self { num_slices: None, swap_factor: false, temporal_boundary: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default)]
    pub p_depol_tq: f64,
    #[serde(default)]
    pub p_leak_tq: f64,
    #[serde(default)]
    pub p_leak_meas_crosstalk: f64,
    #[serde(default)]
    pub p_leak_reset_crosstalk: f64,
    /// Append the bond-qubit leakage gadget.
    #[serde(default = "yes")]
    pub herald: bool,
    /// Drop heralded shots before estimating.
    #[serde(default = "yes")]
    pub post_select: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            p_depol_tq: 0.0,
            p_leak_tq: 0.0,
            p_leak_meas_crosstalk: 0.0,
            p_leak_reset_crosstalk: 0.0,
            herald: true,
            post_select: true,
        }
    }
}

impl NoiseConfig {
    pub fn params(&self) -> NoiseParams {
        NoiseParams {
            p_depol_tq: self.p_depol_tq,
            p_leak_tq: self.p_leak_tq,
            p_leak_meas_crosstalk: self.p_leak_meas_crosstalk,
            p_leak_reset_crosstalk: self.p_leak_reset_crosstalk,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    #[serde(default = "default_shots")]
    pub shots: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_shots() -> u64 {
    1000
}

fn default_seed() -> u64 {
    20220401
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self { shots: default_shots(), seed: default_seed() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    #[serde(default = "default_max_bond")]
    pub max_bond: usize,
    #[serde(default = "default_cutoff")]
    pub svd_cutoff: f64,
    #[serde(default)]
    pub left_padding_cells: usize,
    pub right_padding_cells: Option<usize>,
    #[serde(default = "yes")]
    pub exact_mode: bool,
    /// First site of the averaging window.
    #[serde(default = "default_j_min")]
    pub j_min: usize,
}

fn default_max_bond() -> usize {
    TebdConfig::default().max_bond
}

fn default_cutoff() -> f64 {
    TebdConfig::default().svd_cutoff
}

fn default_j_min() -> usize {
    9
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            max_bond: default_max_bond(),
            svd_cutoff: default_cutoff(),
            left_padding_cells: 0,
            right_padding_cells: None,
            exact_mode: true,
            j_min: default_j_min(),
        }
    }
}

impl OracleConfig {
    pub fn tebd(&self) -> TebdConfig {
        TebdConfig {
            max_bond: self.max_bond,
            svd_cutoff: self.svd_cutoff,
            left_padding_cells: self.left_padding_cells,
            right_padding_cells: self.right_padding_cells,
            exact_mode: self.exact_mode,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_dir() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub mps: MpsConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    /// Where results go, not what they are: left out of the canonical form
    /// and hash so a run can be reproduced into another directory.
    #[serde(default, skip_serializing)]
    pub output: OutputConfig,
    /// Directory of the config file, for resolving relative paths.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    /// The experiment defaults for the given depths.
    pub fn paper(t: Depths) -> Self {
        Self {
            model: ModelConfig { h: PAPER_FIELD, t, two_l: 32 },
            mps: MpsConfig { kicks: Some(PAPER_KICKS), w_file: None, chi: 2 },
            schedule: ScheduleConfig { num_slices: Some(16), swap_factor: false, temporal_boundary: true },
            noise: NoiseConfig::default(),
            sampling: SamplingConfig::default(),
            oracle: OracleConfig::default(),
            output: OutputConfig::default(),
            base_dir: PathBuf::from("."),
        }
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::config(format!("config: {e}")))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    pub fn depths(&self) -> Vec<usize> {
        self.model.t.values()
    }

    pub fn num_slices(&self) -> usize {
        self.schedule.num_slices.unwrap_or(self.model.two_l / 2)
    }

    pub fn window(&self) -> AveragingWindow {
        AveragingWindow { two_l: self.model.two_l, j_min: self.oracle.j_min }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, msg: String| Err(CliError::config(format!("field `{field}`: {msg}")));
        if !self.model.h.is_finite() {
            return bad("model.h", "must be finite".into());
        }
        let ts = self.depths();
        if ts.is_empty() {
            return bad("model.t", "needs at least one depth".into());
        }
        let mut sorted = ts.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != ts.len() {
            return bad("model.t", "depths must be distinct".into());
        }
        if self.model.two_l < 2 || self.model.two_l % 2 != 0 {
            return bad("model.two_l", format!("{} is not a positive even number", self.model.two_l));
        }
        if 2 * self.num_slices() != self.model.two_l {
            return bad("schedule.num_slices", format!("2 × {} does not equal two_l = {}", self.num_slices(), self.model.two_l));
        }
        let max_t = *sorted.last().unwrap();
        if self.num_slices() < max_t.div_ceil(2) + 1 {
            return bad("model.t", format!("depth {max_t} needs at least {} slices", max_t.div_ceil(2) + 1));
        }
        if self.mps.kicks.is_some() && self.mps.w_file.is_some() {
            return bad("mps", "give either `kicks` or `w_file`, not both".into());
        }
        if !self.mps.chi.is_power_of_two() {
            return bad("mps.chi", format!("{} is not a power of two", self.mps.chi));
        }
        if self.mps.w_file.is_none() && self.mps.chi != 2 {
            return bad("mps.chi", "kick parameters define a χ = 2 tensor".into());
        }
        if let Err(e) = self.noise.params().validate() {
            return bad("noise", e.to_string());
        }
        if self.oracle.j_min == 0 {
            return bad("oracle.j_min", "sites start at 1".into());
        }
        if let Err(e) = self.oracle.tebd().validate() {
            return bad("oracle", e.to_string());
        }
        Ok(())
    }

    /// Canonical text of the effective config; hashed into manifests.
    pub fn canonical_text(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn sha256(&self) -> String {
        format!("{:x}", Sha256::digest(self.canonical_text().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = RunConfig::parse("[model]\nh = 0.2\nt = 6\n", Path::new(".")).unwrap();
        assert_eq!(cfg.depths(), vec![6]);
        assert_eq!(cfg.model.two_l, 32);
        assert_eq!(cfg.num_slices(), 16);
        assert_eq!(cfg.sampling.shots, 1000);
        assert!(cfg.schedule.temporal_boundary);
    }

    #[test]
    fn missing_h_names_the_field() {
        let err = RunConfig::parse("[model]\nt = 2\n", Path::new(".")).unwrap_err();
        assert_eq!(err.code, 2);
        assert!(err.message.contains("`h`"), "{}", err.message);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::parse("[model]\nh = 0.2\nt = 1\nfield = 3\n", Path::new(".")).unwrap_err();
        assert!(err.message.contains("field"), "{}", err.message);
        let err = RunConfig::parse("[model]\nh = 0.2\nt = 1\n[extra]\n", Path::new(".")).unwrap_err();
        assert!(err.message.contains("extra"), "{}", err.message);
    }

    #[test]
    fn canonical_text_round_trips() {
        let cfg = RunConfig::paper(Depths::Many((0..=6).collect()));
        let back = RunConfig::parse(&cfg.canonical_text(), Path::new(".")).unwrap();
        assert_eq!(back.canonical_text(), cfg.canonical_text());
        assert_eq!(back.sha256(), cfg.sha256());
    }

    #[test]
    fn slice_count_must_match_window() {
        let err = RunConfig::parse("[model]\nh = 0.2\nt = 1\n[schedule]\nnum_slices = 4\n", Path::new(".")).unwrap_err();
        assert!(err.message.contains("schedule.num_slices"));
    }
}
