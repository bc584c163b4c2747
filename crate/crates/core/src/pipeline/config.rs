use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::action::CoordSpace;
use crate::dedup::structural::StructuralParams;
use crate::dedup::visual::VisualParams;
use crate::env::GenerationSpec;
use crate::eval::ScoringConfig;
use crate::hashing::sha256_hex;
use crate::remote::EndpointConfig;
use crate::synth::TaskKind;

use super::PipelineError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Rule verifier and template annotator; no network.
    #[default]
    Offline,
    /// Model endpoints for verification and annotation.
    Remote,
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "offline" => Ok(Mode::Offline),
            "remote" => Ok(Mode::Remote),
            other => Err(format!("unknown mode {other:?} (expected offline or remote)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetConfig {
    pub n_workers: usize,
    pub budget_per_worker: usize,
    #[serde(default = "three")]
    pub priority_levels: u32,
}

fn three() -> u32 {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub kinds: Vec<TaskKind>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { kinds: TaskKind::ALL.to_vec() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MixConfig {
    pub ratio_dynamics: f64,
    pub ratio_general: f64,
    pub ratio_grounding: f64,
    /// Corpus size; unset means as large as the dynamics pool allows.
    pub total: Option<usize>,
}

impl Default for MixConfig {
    fn default() -> Self {
        Self {
            ratio_dynamics: 0.7,
            ratio_general: 0.2,
            ratio_grounding: 0.1,
            total: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSetConfig {
    /// Generalization items per app for each of the four (level, task) pairs.
    pub items_per_app: usize,
    /// Action-prediction records per app.
    pub actions_per_app: usize,
    pub coord_space: CoordSpace,
}

impl Default for EvalSetConfig {
    fn default() -> Self {
        Self {
            items_per_app: 20,
            actions_per_app: 100,
            coord_space: CoordSpace::Normalized1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RemoteConfig {
    pub verifier: EndpointConfig,
    pub annotator: EndpointConfig,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            verifier: EndpointConfig::with_prefix("GUIDYN_VERIFIER"),
            annotator: EndpointConfig::with_prefix("GUIDYN_ANNOTATOR"),
        }
    }
}

/// Everything a run depends on. `workers` and `out` do not affect outputs
/// and are left out of the snapshot stored in manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    #[serde(default)]
    pub mode: Mode,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_shard_size")]
    pub shard_size: usize,
    pub env: GenerationSpec,
    pub fleet: FleetConfig,
    #[serde(default)]
    pub structural: StructuralParams,
    #[serde(default)]
    pub visual: VisualParams,
    #[serde(default)]
    pub synth: SynthConfig,
    #[serde(default)]
    pub mix: MixConfig,
    #[serde(default)]
    pub eval_set: EvalSetConfig,
    #[serde(default)]
    pub scoring: ScoringConfig,
    #[serde(default)]
    pub remote: RemoteConfig,
}

fn default_out() -> PathBuf {
    PathBuf::from("runs/default")
}

fn default_shard_size() -> usize {
    1000
}

impl PipelineConfig {
    /// 3 apps, 50 workers × 400 steps.
    pub fn demo() -> Self {
        toml::from_str(DEMO_TOML).expect("bundled demo config parses")
    }

    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let cfg = |e: &dyn std::fmt::Display| PipelineError::Config(e.to_string());
        self.env.validate().map_err(|e| cfg(&e))?;
        self.structural.validate().map_err(|e| cfg(&e))?;
        self.visual.validate().map_err(|e| cfg(&e))?;
        if self.fleet.n_workers == 0 || self.fleet.budget_per_worker == 0 {
            return Err(PipelineError::Config("fleet needs at least one worker and step".into()));
        }
        if self.shard_size == 0 {
            return Err(PipelineError::Config("shard_size must be at least 1".into()));
        }
        if self.synth.kinds.is_empty() {
            return Err(PipelineError::Config("synth.kinds is empty".into()));
        }
        let r = [self.mix.ratio_dynamics, self.mix.ratio_general, self.mix.ratio_grounding];
        if r.iter().any(|x| *x < 0.0) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(PipelineError::Config(format!("mix ratios {r:?} must be non-negative and sum to 1")));
        }
        if !(self.scoring.radius_fraction > 0.0) {
            return Err(PipelineError::Config("scoring.radius_fraction must be positive".into()));
        }
        Ok(())
    }

    /// Config as stored in manifests.
    pub fn snapshot(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(m) = v.as_object_mut() {
            m.remove("workers");
            m.remove("out");
        }
        v
    }

    pub fn snapshot_sha256(&self) -> String {
        sha256_hex(self.snapshot().to_string().as_bytes())
    }
}

pub const DEMO_TOML: &str = include_str!("../../assets/demo.toml");
