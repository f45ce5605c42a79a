//! TOML run configuration with environment-variable interpolation.
//!
//! `${NAME}` inside any string value is replaced with the value of the
//! environment variable `NAME` before parsing. Secrets (API tokens) are
//! never placed in the config itself: remote backends name the variable
//! holding the token and read it at request time.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use escsim_core::backend::{ChatBackend, RemoteBackend, RemoteConfig, SamplingParams, ScriptedBackend};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub backends: BackendBindings,
    #[serde(default)]
    pub sampling: SamplingSection,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub train_reward: TrainRewardSection,
    #[serde(default)]
    pub grpo: GrpoSection,
    #[serde(default)]
    pub evaluate: EvaluateSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendBindings {
    pub system: Option<BackendSpec>,
    pub user: Option<BackendSpec>,
    pub critic: Option<BackendSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendSpec {
    /// Replies come from a JSON array of strings, consumed in order.
    Scripted { script: PathBuf },
    Remote(RemoteConfig),
}

impl BackendSpec {
    pub fn build(&self, config_dir: &Path) -> Result<Arc<dyn ChatBackend>> {
        match self {
            BackendSpec::Scripted { script } => {
                let path = if script.is_relative() {
                    config_dir.join(script)
                } else {
                    script.clone()
                };
                let text = fs::read_to_string(&path)
                    .with_context(|| format!("reading script {}", path.display()))?;
                let replies: Vec<String> = serde_json::from_str(&text)
                    .with_context(|| format!("{} must be a JSON array of strings", path.display()))?;
                Ok(Arc::new(ScriptedBackend::new(replies)))
            }
            BackendSpec::Remote(remote) => Ok(Arc::new(RemoteBackend::new(remote.clone()))),
        }
    }

    pub fn is_scripted(&self) -> bool {
        matches!(self, BackendSpec::Scripted { .. })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSection {
    pub temperature: f64,
    pub top_p: f64,
    pub top_k: u32,
    pub max_tokens: u32,
}

impl Default for SamplingSection {
    fn default() -> Self {
        let d = SamplingParams::default();
        SamplingSection {
            temperature: d.temperature,
            top_p: d.top_p,
            top_k: d.top_k,
            max_tokens: d.max_tokens,
        }
    }
}

impl SamplingSection {
    pub fn to_params(&self) -> SamplingParams {
        SamplingParams {
            temperature: self.temperature,
            top_p: self.top_p,
            top_k: self.top_k,
            max_tokens: self.max_tokens,
            ..SamplingParams::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    /// "esconv" or "extes".
    pub format: String,
    pub path: Option<PathBuf>,
    /// Split to draw from when the format supports splitting.
    pub split: String,
    pub split_seed: u64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            format: "esconv".into(),
            path: None,
            split: "train".into(),
            split_seed: 17,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    /// Candidates per context.
    pub m: usize,
    pub max_turns: usize,
    pub stop_threshold: f64,
    /// Cap on how many contexts to simulate (0 = all).
    pub max_contexts: usize,
    /// Context prefixes taken per source dialogue.
    pub per_dialogue: usize,
    pub critic_samples: usize,
    pub parallel: bool,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            m: 4,
            max_turns: 8,
            stop_threshold: 0.5,
            max_contexts: 0,
            per_dialogue: 1,
            critic_samples: 1,
            parallel: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRewardSection {
    /// Labeled pairs JSONL; when absent, pairs are derived from the
    /// simulated reward dataset in the run directory.
    pub pairs: Option<PathBuf>,
    pub learning_rate: f64,
    pub steps: usize,
    /// Weight on the format term when deriving labels.
    pub alpha: f64,
    /// Binarization threshold when deriving labels.
    pub delta: f64,
}

impl Default for TrainRewardSection {
    fn default() -> Self {
        TrainRewardSection {
            pairs: None,
            learning_rate: 0.5,
            steps: 500,
            alpha: 0.5,
            delta: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrpoSection {
    pub steps: usize,
    pub groups: usize,
    pub group_size: usize,
    pub learning_rate: f64,
    pub clip_epsilon: f64,
    pub kl_beta: f64,
    pub epochs: usize,
    /// Initial logit bias toward the tag tokens.
    pub tag_bias: f64,
    /// Initial logit bias toward the content tokens.
    pub content_bias: f64,
    pub parallel: bool,
}

impl Default for GrpoSection {
    fn default() -> Self {
        GrpoSection {
            steps: 200,
            groups: 8,
            group_size: 8,
            learning_rate: 0.3,
            clip_epsilon: 0.2,
            kl_beta: 0.04,
            epochs: 2,
            tag_bias: 2.5,
            content_bias: 1.5,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub episodes: usize,
    pub max_turns: usize,
    pub success_threshold: f64,
    pub critic_samples: usize,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        EvaluateSection {
            episodes: 0,
            max_turns: 8,
            success_threshold: 0.5,
            critic_samples: 10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub thresholds: Vec<f64>,
    /// "strict" (reward > threshold) or "lenient" (>=).
    pub mode: String,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            thresholds: vec![-0.5, -0.25, 0.0, 0.25, 0.5],
            mode: "strict".into(),
        }
    }
}

/// Replaces every `${NAME}` with the environment variable `NAME`; unset
/// variables are an error so misconfiguration fails before any work runs.
pub fn interpolate_env(text: &str) -> Result<String> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let tail = &rest[start + 2..];
        let Some(end) = tail.find('}') else {
            bail!("unterminated ${{...}} in config");
        };
        let name = &tail[..end];
        let value =
            std::env::var(name).with_context(|| format!("environment variable {name} is unset"))?;
        out.push_str(&value);
        rest = &tail[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let raw = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let interpolated = interpolate_env(&raw)?;
    let cfg: RunConfig = toml::from_str(&interpolated)
        .with_context(|| format!("parsing config {}", path.display()))?;
    Ok(cfg)
}
