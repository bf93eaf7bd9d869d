//! Declarative experiment configuration and artifact provenance.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Stages `run` executes, in order.
    #[serde(default)]
    pub stages: Vec<String>,
    /// Master seed; the `--seed` flag overrides it.
    #[serde(default)]
    pub seed: u64,
    pub mdp: Option<MdpSection>,
    pub data: Option<DataSection>,
    pub solver: Option<SolverSection>,
    pub ope: Option<OpeSection>,
    pub selection: Option<SelectionSection>,
    pub stats: Option<StatsSection>,
    pub verify: Option<VerifySection>,
    pub support: Option<SupportSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpSection {
    pub num_states: usize,
    pub num_actions: usize,
    pub discount: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub expert_steps: usize,
    pub explore_steps: usize,
    /// Episode horizon; omit for a single unbroken trajectory.
    pub horizon: Option<usize>,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_ope_fraction")]
    pub ope_fraction: f64,
}

fn default_train_fraction() -> f64 {
    0.6
}

fn default_ope_fraction() -> f64 {
    0.5
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub gamma: f64,
    pub ell: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpeSection {
    pub learning_rate: f64,
    #[serde(default = "default_true")]
    pub lr_decay: bool,
    pub target_update: f64,
    #[serde(default = "default_expert_fraction")]
    pub expert_data_fraction: f64,
    pub passes: usize,
    pub divergence_threshold: f64,
    pub discount: f64,
    /// Optional tuning grid over the learning rate; each entry becomes a
    /// candidate config sharing the other fields.
    #[serde(default)]
    pub learning_rate_grid: Vec<f64>,
}

fn default_true() -> bool {
    true
}

fn default_expert_fraction() -> f64 {
    0.5
}

impl OpeSection {
    pub fn base(&self) -> ilbrl_core::ope::OpeConfig {
        ilbrl_core::ope::OpeConfig {
            learning_rate: self.learning_rate,
            lr_decay: self.lr_decay,
            target_update: self.target_update,
            expert_data_fraction: self.expert_data_fraction,
            passes: self.passes,
            divergence_threshold: self.divergence_threshold,
            discount: self.discount,
        }
    }

    pub fn grid(&self) -> Vec<ilbrl_core::ope::OpeConfig> {
        if self.learning_rate_grid.is_empty() {
            vec![self.base()]
        } else {
            self.learning_rate_grid
                .iter()
                .map(|&lr| ilbrl_core::ope::OpeConfig {
                    learning_rate: lr,
                    ..self.base()
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionSection {
    pub eval_seeds: Vec<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsSection {
    #[serde(default = "default_n_boot")]
    pub n_boot: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub thresholds: Vec<f64>,
    /// Per-task score lists to aggregate; when omitted, `report` gathers
    /// scores from the pipeline's evaluation artifacts.
    #[serde(default)]
    pub scores: Vec<Vec<f64>>,
}

fn default_n_boot() -> usize {
    1000
}

fn default_level() -> f64 {
    0.95
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    pub bound: String,
    pub trials: usize,
    #[serde(default = "default_verify_states")]
    pub num_states: usize,
    #[serde(default = "default_verify_actions")]
    pub num_actions: usize,
    #[serde(default = "default_verify_gamma")]
    pub gamma: f64,
    #[serde(default = "default_verify_ell")]
    pub ell: usize,
    #[serde(default = "default_verify_m")]
    pub m: usize,
    #[serde(default = "default_verify_expert_count")]
    pub expert_count: usize,
    #[serde(default = "default_verify_nu")]
    pub nu: f64,
    #[serde(default = "default_verify_delta")]
    pub delta: f64,
}

fn default_verify_states() -> usize {
    4
}
fn default_verify_actions() -> usize {
    2
}
fn default_verify_gamma() -> f64 {
    0.8
}
fn default_verify_ell() -> usize {
    30
}
fn default_verify_m() -> usize {
    32
}
fn default_verify_expert_count() -> usize {
    1600
}
fn default_verify_nu() -> f64 {
    0.05
}
fn default_verify_delta() -> f64 {
    0.1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportSection {
    /// Feature dataset file to label with the soft support reward.
    pub features: String,
}

/// Provenance stamped into every artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

impl Provenance {
    pub fn new(config_bytes: &[u8], seed: u64) -> Self {
        let digest = Sha256::digest(config_bytes);
        let hash: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
        Self {
            config_hash: hash,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    /// Trailing comment line for line-oriented text artifacts.
    pub fn comment(&self) -> String {
        format!(
            "# provenance config={} seed={} version={}\n",
            self.config_hash, self.seed, self.version
        )
    }
}

pub fn load(path: &Path) -> Result<(Config, Vec<u8>), String> {
    let bytes = std::fs::read(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|e| format!("config {} is not UTF-8: {e}", path.display()))?;
    let cfg: Config =
        toml::from_str(text).map_err(|e| format!("invalid config {}: {e}", path.display()))?;
    Ok((cfg, bytes))
}
