//! TOML run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::eval::CostParams;
use crate::gateway::{NoiseProfile, Role, ScoutConfig};
use crate::inventory::DEFAULT_TAU_RECALL;
use crate::verifier::{IndicatorMode, RewardWeights};

pub const ENV_PREFIX: &str = "SCENEMINE";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_tau")]
    pub tau_recall: f64,
    #[serde(default)]
    pub weights: RewardWeights,
    #[serde(default)]
    pub indicator_mode: IndicatorMode,
    #[serde(default = "default_candidates")]
    pub n_candidates: usize,
    #[serde(default = "default_keyframes")]
    pub keyframes_per_scene: usize,
    #[serde(default)]
    pub selection: SelectionMode,
    #[serde(default = "default_trace_budget")]
    pub trace_budget: usize,
    /// Base seed for every synthetic backend.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub parallelism: Parallelism,
    /// Default noise for `mock://` scouts without their own profile.
    #[serde(default)]
    pub mock_noise: NoiseProfile,
    #[serde(default)]
    pub cost: CostParams,
    pub paths: Paths,
    pub scouts: Vec<ScoutEntry>,
    #[serde(default)]
    pub judge: JudgeSettings,
}

fn default_tau() -> f64 {
    DEFAULT_TAU_RECALL
}
fn default_candidates() -> usize {
    3
}
fn default_keyframes() -> usize {
    3
}
fn default_trace_budget() -> usize {
    crate::consensus::DEFAULT_TRACE_BUDGET
}

/// How the committed DNA is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// Deterministic vote plus judge samples, scored by the verifier.
    #[default]
    BestOfN,
    /// First scout's parsed DNA, unverified. Baseline for comparisons.
    FirstScout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Parallelism {
    /// Frames in flight at once.
    #[serde(default = "default_frames")]
    pub frames: usize,
}

fn default_frames() -> usize {
    4
}

impl Default for Parallelism {
    fn default() -> Self {
        Parallelism { frames: default_frames() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub manifest: PathBuf,
    pub detections: PathBuf,
    pub index: PathBuf,
    pub gold: PathBuf,
    /// Per-frame working state (traces, candidates, scores). Defaults next to the index.
    #[serde(default)]
    pub audit: Option<PathBuf>,
    /// Simulation truth; required only by `mock://` backends.
    #[serde(default)]
    pub truth: Option<PathBuf>,
    #[serde(default)]
    pub report_dir: Option<PathBuf>,
}

impl Paths {
    pub fn audit_path(&self) -> PathBuf {
        self.audit.clone().unwrap_or_else(|| sibling(&self.index, "audit.jsonl"))
    }

    pub fn report_path(&self) -> PathBuf {
        self.report_dir.clone().unwrap_or_else(|| sibling(&self.index, "report"))
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut self.manifest, &mut self.detections, &mut self.index, &mut self.gold] {
            fix(p);
        }
        for p in [&mut self.audit, &mut self.truth, &mut self.report_dir].into_iter().flatten() {
            fix(p);
        }
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "index".into());
    path.with_file_name(format!("{stem}.{suffix}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoutEntry {
    #[serde(flatten)]
    pub config: ScoutConfig,
    /// Overrides `mock_noise` for this scout.
    #[serde(default)]
    pub noise: Option<NoiseProfile>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeMode {
    #[default]
    Deterministic,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgeSettings {
    #[serde(default)]
    pub mode: JudgeMode,
    #[serde(default)]
    pub endpoint: Option<ScoutConfig>,
    /// Rate at which a `mock://` judge invents an unsupported object.
    #[serde(default)]
    pub invention_rate: f64,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Reads a config file, resolves relative paths against its directory,
    /// applies environment overrides and validates.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Io { path: path.display().to_string(), detail: e.to_string() })?;
        let mut config = Self::from_toml_str(&text)?;
        if let Some(dir) = path.parent() {
            config.paths.resolve(dir);
        }
        config.apply_env(|k| std::env::var(k).ok());
        config.validate()?;
        Ok(config)
    }

    /// `SCENEMINE_<NAME>_URL` and `SCENEMINE_<NAME>_API_KEY` per scout
    /// (name upper-cased, other characters to `_`), `SCENEMINE_JUDGE_URL` /
    /// `SCENEMINE_JUDGE_API_KEY` for the judge, `SCENEMINE_API_KEY` as a
    /// fallback key for everything.
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) {
        let shared_key = get(&format!("{ENV_PREFIX}_API_KEY"));
        let apply = |config: &mut ScoutConfig, name: &str| {
            if let Some(url) = get(&format!("{ENV_PREFIX}_{name}_URL")) {
                config.endpoint_url = url;
            }
            if let Some(key) = get(&format!("{ENV_PREFIX}_{name}_API_KEY")).or_else(|| shared_key.clone()) {
                config.api_key = Some(key);
            }
        };
        for scout in &mut self.scouts {
            let name = env_name(&scout.config.name);
            apply(&mut scout.config, &name);
        }
        if let Some(judge) = &mut self.judge.endpoint {
            apply(judge, "JUDGE");
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if !(0.0..1.0).contains(&self.tau_recall) {
            return bad(format!("tau_recall {} outside [0, 1)", self.tau_recall));
        }
        self.weights.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.n_candidates < 1 {
            return bad("n_candidates must be >= 1".into());
        }
        if self.keyframes_per_scene < 1 {
            return bad("keyframes_per_scene must be >= 1".into());
        }
        if self.parallelism.frames < 1 {
            return bad("parallelism.frames must be >= 1".into());
        }
        if self.scouts.is_empty() {
            return bad("at least one scout is required".into());
        }
        let mut names = std::collections::BTreeSet::new();
        for scout in &self.scouts {
            scout.config.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
            if !names.insert(scout.config.name.as_str()) {
                return bad(format!("scout name {:?} used twice", scout.config.name));
            }
            if scout.config.role != Role::Scout {
                return bad(format!("{}: role must be scout", scout.config.name));
            }
            scout.noise.unwrap_or(self.mock_noise).validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        if self.uses_truth() && self.paths.truth.is_none() {
            return bad("mock:// backends need paths.truth".into());
        }
        match (self.judge.mode, &self.judge.endpoint) {
            (JudgeMode::Llm, None) => bad("judge.mode = \"llm\" needs [judge.endpoint]".into()),
            (JudgeMode::Llm, Some(e)) => {
                e.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
                if !(0.0..=1.0).contains(&self.judge.invention_rate) {
                    return bad("judge.invention_rate must lie in [0, 1]".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Whether any scout runs in mock mode. The synthetic judge works off the
    /// deterministic vote and needs no truth.
    pub fn uses_truth(&self) -> bool {
        self.scouts.iter().any(|s| s.config.is_mock())
    }
}

fn env_name(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_uppercase() } else { '_' }).collect()
}
