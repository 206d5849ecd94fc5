//! Run configuration: JSON file plus flag overrides, materialized defaults,
//! and the config echo emitted next to every simulation artifact.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use eprsim_core::epr::{
    parse_angle, Chooser, DiscreteTableModel, DiscreteTableSpec, ResponseRule, SettingPolicy,
    SettingSet, SourceModel,
};

use crate::CliError;

/// On-disk configuration; every field is optional so flags can fill gaps.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub model: Option<String>,
    /// Path to a table-model JSON document (discrete_table only).
    pub model_file: Option<String>,
    /// Angles in plain or pi notation, e.g. "0", "pi/4" (angle models only).
    pub left_angles: Option<Vec<String>>,
    pub right_angles: Option<Vec<String>>,
    /// "uniform" or "fixed:<index>".
    pub left_policy: Option<String>,
    pub right_policy: Option<String>,
    /// Flip probabilities for the local response rules.
    pub left_flip_prob: Option<f64>,
    pub right_flip_prob: Option<f64>,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    pub lambda_bins: Option<usize>,
    pub min_bin_count: Option<u64>,
    pub out: Option<String>,
}

/// Fully materialized configuration: what actually ran. Serialized into the
/// echo document so a run can be replayed exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table_model: Option<DiscreteTableSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub left_angles: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub right_angles: Option<Vec<String>>,
    pub left_policy: String,
    pub right_policy: String,
    pub left_flip_prob: f64,
    pub right_flip_prob: f64,
    pub trials: u64,
    pub seed: u64,
    pub lambda_bins: usize,
    pub min_bin_count: u64,
    pub out: String,
}

pub const DEFAULT_LEFT_ANGLES: [&str; 2] = ["0", "pi/2"];
pub const DEFAULT_RIGHT_ANGLES: [&str; 2] = ["pi/4", "3pi/4"];
pub const DEFAULT_TRIALS: u64 = 100_000;
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_LAMBDA_BINS: usize = 64;
pub const DEFAULT_MIN_BIN_COUNT: u64 = 100;

impl RunConfig {
    /// Merge the config file (if any) with flag overrides and materialize
    /// every default. Unset required fields are config errors naming the
    /// field.
    pub fn materialize(file: RunConfigFile, overrides: RunConfigFile) -> Result<Self, CliError> {
        let pick = |a: Option<String>, b: Option<String>| b.or(a);
        let model = pick(file.model, overrides.model)
            .ok_or_else(|| CliError::Config("model: required".into()))?;
        if !matches!(
            model.as_str(),
            "quantum_singlet" | "local_deterministic" | "dependent_collectives" | "discrete_table"
        ) {
            return Err(CliError::Config(format!(
                "model: unknown model `{model}` (expected quantum_singlet, \
                 local_deterministic, dependent_collectives, or discrete_table)"
            )));
        }
        let model_file = pick(file.model_file, overrides.model_file);
        // discrete_table requires a table document; dependent_collectives
        // accepts one (falling back to the built-in fixture without it).
        let table_model = match (model.as_str(), &model_file) {
            ("discrete_table", None) => {
                return Err(CliError::Config(
                    "model_file: required for discrete_table".into(),
                ))
            }
            ("discrete_table" | "dependent_collectives", Some(path)) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Io(format!("reading model file {path}: {e}")))?;
                let spec: DiscreteTableSpec = serde_json::from_str(&text)
                    .map_err(|e| CliError::Config(format!("model_file: {e}")))?;
                Some(spec)
            }
            _ => None,
        };

        let uses_angles = matches!(model.as_str(), "quantum_singlet" | "local_deterministic");
        let (left_angles, right_angles) = if uses_angles {
            (
                Some(
                    overrides
                        .left_angles
                        .or(file.left_angles)
                        .unwrap_or_else(|| {
                            DEFAULT_LEFT_ANGLES.iter().map(|s| s.to_string()).collect()
                        }),
                ),
                Some(
                    overrides
                        .right_angles
                        .or(file.right_angles)
                        .unwrap_or_else(|| {
                            DEFAULT_RIGHT_ANGLES.iter().map(|s| s.to_string()).collect()
                        }),
                ),
            )
        } else {
            (None, None)
        };

        Ok(RunConfig {
            model,
            model_file,
            table_model,
            left_angles,
            right_angles,
            left_policy: pick(file.left_policy, overrides.left_policy)
                .unwrap_or_else(|| "uniform".into()),
            right_policy: pick(file.right_policy, overrides.right_policy)
                .unwrap_or_else(|| "uniform".into()),
            left_flip_prob: overrides
                .left_flip_prob
                .or(file.left_flip_prob)
                .unwrap_or(0.0),
            right_flip_prob: overrides
                .right_flip_prob
                .or(file.right_flip_prob)
                .unwrap_or(0.0),
            trials: overrides.trials.or(file.trials).unwrap_or(DEFAULT_TRIALS),
            seed: overrides.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            lambda_bins: overrides
                .lambda_bins
                .or(file.lambda_bins)
                .unwrap_or(DEFAULT_LAMBDA_BINS),
            min_bin_count: overrides
                .min_bin_count
                .or(file.min_bin_count)
                .unwrap_or(DEFAULT_MIN_BIN_COUNT),
            out: pick(file.out, overrides.out).unwrap_or_else(|| "run".into()),
        })
    }

    fn parse_policy(spec: &str, field: &str) -> Result<Chooser, CliError> {
        if spec == "uniform" {
            return Ok(Chooser::Uniform);
        }
        if let Some(idx) = spec.strip_prefix("fixed:") {
            let idx: u16 = idx
                .parse()
                .map_err(|_| CliError::Config(format!("{field}: bad fixed index `{idx}`")))?;
            return Ok(Chooser::Fixed(idx));
        }
        Err(CliError::Config(format!(
            "{field}: expected `uniform` or `fixed:<index>`, got `{spec}`"
        )))
    }

    fn parse_angles(raw: &[String], field: &str) -> Result<Vec<f64>, CliError> {
        if raw.is_empty() {
            return Err(CliError::Config(format!("{field}: at least one angle")));
        }
        raw.iter()
            .map(|s| parse_angle(s).map_err(|e| CliError::Config(format!("{field}: {e}"))))
            .collect()
    }

    /// Build the model and both setting policies.
    pub fn build(&self) -> Result<(SourceModel, SettingPolicy, SettingPolicy), CliError> {
        let model = match self.model.as_str() {
            "quantum_singlet" => SourceModel::QuantumSinglet,
            "local_deterministic" => SourceModel::LocalDeterministic {
                left: ResponseRule {
                    negate: false,
                    flip_prob: self.left_flip_prob,
                },
                right: ResponseRule {
                    negate: true,
                    flip_prob: self.right_flip_prob,
                },
            },
            "dependent_collectives" => match &self.table_model {
                None => SourceModel::dependent_collectives_fixture(),
                Some(spec) => {
                    let m = DiscreteTableModel::from_spec(spec.clone())
                        .map_err(|e| CliError::Config(format!("model_file: {e}")))?;
                    if !m.has_nonfactorizing_table() {
                        return Err(CliError::Config(
                            "model_file: a dependent_collectives model needs at least one \
                             (left, right, lambda) table that does not factorize"
                                .into(),
                        ));
                    }
                    SourceModel::DependentCollectives(m)
                }
            },
            "discrete_table" => {
                let spec = self
                    .table_model
                    .clone()
                    .ok_or_else(|| CliError::Config("model_file: required".into()))?;
                SourceModel::DiscreteTable(
                    DiscreteTableModel::from_spec(spec)
                        .map_err(|e| CliError::Config(format!("model_file: {e}")))?,
                )
            }
            other => return Err(CliError::Config(format!("model: unknown model `{other}`"))),
        };

        let (left_set, right_set) = match model.table_model() {
            Some(m) => (
                SettingSet::Labels(m.spec().left_settings.clone()),
                SettingSet::Labels(m.spec().right_settings.clone()),
            ),
            None => (
                SettingSet::Angles(Self::parse_angles(
                    self.left_angles.as_deref().unwrap_or(&[]),
                    "left_angles",
                )?),
                SettingSet::Angles(Self::parse_angles(
                    self.right_angles.as_deref().unwrap_or(&[]),
                    "right_angles",
                )?),
            ),
        };
        let left = SettingPolicy {
            set: left_set,
            chooser: Self::parse_policy(&self.left_policy, "left_policy")?,
        };
        let right = SettingPolicy {
            set: right_set,
            chooser: Self::parse_policy(&self.right_policy, "right_policy")?,
        };
        Ok((model, left, right))
    }

    pub fn log_path(&self) -> PathBuf {
        PathBuf::from(format!("{}.csv", self.out))
    }

    pub fn echo_path(&self) -> PathBuf {
        PathBuf::from(format!("{}.echo.json", self.out))
    }
}

/// The echo document: the materialized config, the tool version, and the
/// SHA-256 of the canonical config JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub tool_version: String,
    pub config: RunConfig,
    pub config_hash: String,
}

/// Lowercase hex of a byte string.
pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl ConfigEcho {
    pub fn new(config: RunConfig) -> Self {
        let canonical = serde_json::to_string(&config).expect("config serializes");
        let hash = hex(&Sha256::digest(canonical.as_bytes()));
        ConfigEcho {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            config_hash: hash,
        }
    }

    pub fn load(path: &Path) -> Option<ConfigEcho> {
        let text = fs::read_to_string(path).ok()?;
        serde_json::from_str(&text).ok()
    }
}
