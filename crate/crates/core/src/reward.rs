//! The composite reward: binary thinking-format reward, the
//! future-oriented scorer, and their weighted sum
//!
//!   R = R_fut + alpha * R_fmt
//!
//! The trainable scorer is a logistic model over deterministic text
//! features (hashed unigrams, log response length, tag-wellformedness),
//! trained with gradient descent on mean binary cross-entropy. It stands
//! behind the same interface a remote neural scorer would.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::backend::BackendError;
use crate::dialogue::ConversationContext;
use crate::tags::parse_tagged_output;

pub const HASH_BUCKETS: usize = 1 << 16;
/// hashed unigrams + log-length + tag bit + bias
pub const FEATURE_DIM: usize = HASH_BUCKETS + 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    /// Weight of the format reward relative to the future-oriented
    /// reward (which is fixed at 1).
    pub alpha: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights { alpha: 0.5 }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RewardError {
    #[error("degenerate labels: {positives} positive / {negatives} negative")]
    DegenerateLabels { positives: usize, negatives: usize },
    #[error("no training pairs")]
    EmptyTrainingSet,
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// 1 iff the raw output matches the strict tag grammar.
pub fn format_reward(raw_output: &str) -> f64 {
    if parse_tagged_output(raw_output).is_ok() {
        1.0
    } else {
        0.0
    }
}

/// 1 iff `r > delta`, strictly.
pub fn binarize_reward(r: f64, delta: f64) -> u8 {
    if r > delta {
        1
    } else {
        0
    }
}

/// R_fut + alpha * R_fmt.
pub fn combined_reward(fut: f64, fmt: f64, w: &RewardWeights) -> f64 {
    fut + w.alpha * fmt
}

// ---------------------------------------------------------------------------
// Input rendering and labeled pairs
// ---------------------------------------------------------------------------

/// Fills the reward-model prompt template with the conversation and the
/// response under evaluation.
pub fn render_scorer_input(template: &str, ctx: &ConversationContext, response: &str) -> String {
    template
        .replace("[conversation]", ctx.render_transcript().trim_end())
        .replace("[response]", response)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub input_text: String,
    pub label: u8,
}

// ---------------------------------------------------------------------------
// Feature extraction
// ---------------------------------------------------------------------------

fn fnv1a(token: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in token.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Sparse feature vector: (index, value) pairs with unique ascending
/// indices. Deterministic function of the text.
pub fn extract_features(text: &str) -> Vec<(usize, f64)> {
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for token in text
        .to_lowercase()
        .split(|c: char| !c.is_alphanumeric() && c != '<' && c != '>' && c != '/')
        .filter(|t| !t.is_empty())
    {
        *counts.entry((fnv1a(token) as usize) % HASH_BUCKETS).or_insert(0.0) += 1.0;
    }
    let mut features: Vec<(usize, f64)> = counts.into_iter().collect();
    features.push((HASH_BUCKETS, (1.0 + text.len() as f64).ln()));
    features.push((
        HASH_BUCKETS + 1,
        if parse_tagged_output(text).is_ok() { 1.0 } else { 0.0 },
    ));
    features
}

// ---------------------------------------------------------------------------
// Logistic model
// ---------------------------------------------------------------------------

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Single-logit logistic regression. Weights are stored sparsely; absent
/// indices are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: BTreeMap<usize, f64>,
    pub bias: f64,
    pub final_loss: f64,
}

impl LogisticModel {
    pub fn zeros() -> Self {
        LogisticModel {
            weights: BTreeMap::new(),
            bias: 0.0,
            final_loss: f64::NAN,
        }
    }

    pub fn logit(&self, features: &[(usize, f64)]) -> f64 {
        let mut z = self.bias;
        for (i, v) in features {
            if let Some(w) = self.weights.get(i) {
                z += w * v;
            }
        }
        z
    }

    pub fn prob(&self, features: &[(usize, f64)]) -> f64 {
        sigmoid(self.logit(features))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub steps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.5,
            steps: 500,
        }
    }
}

/// Mean binary cross-entropy of the model on `data` (pre-extracted
/// features with labels). Probabilities are clamped away from 0/1 so the
/// loss stays finite.
pub fn bce_loss(model: &LogisticModel, data: &[(Vec<(usize, f64)>, u8)]) -> f64 {
    let eps = 1e-12;
    let n = data.len() as f64;
    data.iter()
        .map(|(x, y)| {
            let p = model.prob(x).clamp(eps, 1.0 - eps);
            if *y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum::<f64>()
        / n
}

/// Gradient of the mean BCE with respect to (weights, bias):
/// dL/dw_j = (1/N) sum_i (p_i - y_i) x_ij.
pub fn bce_gradient(
    model: &LogisticModel,
    data: &[(Vec<(usize, f64)>, u8)],
) -> (BTreeMap<usize, f64>, f64) {
    let n = data.len() as f64;
    let mut grad_w: BTreeMap<usize, f64> = BTreeMap::new();
    let mut grad_b = 0.0;
    for (x, y) in data {
        let err = model.prob(x) - *y as f64;
        grad_b += err / n;
        for (i, v) in x {
            *grad_w.entry(*i).or_insert(0.0) += err * v / n;
        }
    }
    (grad_w, grad_b)
}

/// Trains the featurized scorer by full-batch gradient descent.
/// Deterministic given the pair order and config (weights start at zero).
pub fn train_scorer(pairs: &[LabeledPair], cfg: &TrainConfig) -> Result<Scorer, RewardError> {
    if pairs.is_empty() {
        return Err(RewardError::EmptyTrainingSet);
    }
    let positives = pairs.iter().filter(|p| p.label == 1).count();
    let negatives = pairs.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(RewardError::DegenerateLabels {
            positives,
            negatives,
        });
    }

    let data: Vec<(Vec<(usize, f64)>, u8)> = pairs
        .iter()
        .map(|p| (extract_features(&p.input_text), p.label))
        .collect();

    let mut model = LogisticModel::zeros();
    for _ in 0..cfg.steps {
        let (grad_w, grad_b) = bce_gradient(&model, &data);
        for (i, g) in grad_w {
            *model.weights.entry(i).or_insert(0.0) -= cfg.learning_rate * g;
        }
        model.bias -= cfg.learning_rate * grad_b;
    }
    model.final_loss = bce_loss(&model, &data);
    Ok(Scorer::Featurized(model))
}

// ---------------------------------------------------------------------------
// Scorer interface
// ---------------------------------------------------------------------------

/// HTTP scorer posting `{"input": text}` and reading `{"score": p}`.
pub struct RemoteScorer {
    pub endpoint: String,
    pub client: reqwest::blocking::Client,
}

impl RemoteScorer {
    pub fn new(endpoint: impl Into<String>) -> Self {
        RemoteScorer {
            endpoint: endpoint.into(),
            client: reqwest::blocking::Client::new(),
        }
    }

    fn score(&self, input: &str) -> Result<f64, BackendError> {
        let resp = self
            .client
            .post(&self.endpoint)
            .json(&serde_json::json!({ "input": input }))
            .send()
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(BackendError::Unavailable(format!("HTTP {}", resp.status())));
        }
        let value: serde_json::Value = resp
            .json()
            .map_err(|e| BackendError::Malformed(e.to_string()))?;
        value["score"]
            .as_f64()
            .filter(|s| (0.0..=1.0).contains(s))
            .ok_or_else(|| BackendError::Malformed("score missing or out of [0,1]".into()))
    }
}

/// The future-oriented reward model behind a uniform scoring interface.
pub enum Scorer {
    Featurized(LogisticModel),
    Remote(RemoteScorer),
    /// Table-driven scorer for tests and toy runs: exact response text
    /// lookup with a default for misses.
    Scripted {
        table: std::collections::HashMap<String, f64>,
        default: f64,
    },
    /// Arbitrary deterministic rule over the response text.
    Rule(Arc<dyn Fn(&str) -> f64 + Send + Sync>),
}

impl Scorer {
    /// Probability that the response resolves the user's problem, in
    /// [0, 1]. With `hard_label` the probability is binarized at 0.5.
    pub fn score_response(
        &self,
        template: &str,
        ctx: &ConversationContext,
        response_text: &str,
        hard_label: bool,
    ) -> Result<f64, RewardError> {
        let p = match self {
            Scorer::Featurized(model) => {
                let input = render_scorer_input(template, ctx, response_text);
                model.prob(&extract_features(&input))
            }
            Scorer::Remote(remote) => {
                let input = render_scorer_input(template, ctx, response_text);
                remote.score(&input)?
            }
            Scorer::Scripted { table, default } => {
                *table.get(response_text).unwrap_or(default)
            }
            Scorer::Rule(f) => f(response_text),
        };
        Ok(if hard_label {
            binarize_reward(p, 0.5) as f64
        } else {
            p
        })
    }
}

/// Scores a batch of (context, response) pairs with the featurized model.
/// Feature extraction dominates; this is the data-parallel hot loop the
/// bench suite compares.
pub fn score_batch(
    model: &LogisticModel,
    template: &str,
    items: &[(ConversationContext, String)],
    parallel: bool,
) -> Vec<f64> {
    crate::exec::map_items(items, parallel, |(ctx, response)| {
        let input = render_scorer_input(template, ctx, response);
        model.prob(&extract_features(&input))
    })
}
