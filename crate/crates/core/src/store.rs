//! Dataset ingestion (ESConv/ExTES) and JSONL persistence.
//!
//! All loaders are pure functions of the file bytes (plus the split seed
//! for ExTES). Every persisted row carries a `schema_version`; readers
//! reject versions they do not know.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dialogue::{ConversationContext, ScenarioDescription, Speaker, Utterance};
use crate::sim::RewardRecord;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("schema error at {location}: {message}")]
    Schema { location: String, message: String },
}

fn schema_err(location: impl Into<String>, message: impl ToString) -> StoreError {
    StoreError::Schema {
        location: location.into(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Dev,
    Test,
}

#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub name: SplitName,
    pub contexts: Vec<(ScenarioDescription, ConversationContext)>,
}

// ---------------------------------------------------------------------------
// ESConv
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
struct EsconvRecord {
    emotion_type: Option<String>,
    problem_type: Option<String>,
    situation: Option<String>,
    dialog: Vec<EsconvMessage>,
}

#[derive(Deserialize)]
struct EsconvMessage {
    speaker: String,
    content: String,
}

/// Merges consecutive same-speaker raw messages (the data contains them)
/// into alternating utterances, joined with newlines.
fn merge_turns(raw: &[(Speaker, String)]) -> Vec<Utterance> {
    let mut merged: Vec<(Speaker, String)> = Vec::new();
    for (speaker, text) in raw {
        match merged.last_mut() {
            Some((last, buf)) if last == speaker => {
                buf.push('\n');
                buf.push_str(text);
            }
            _ => merged.push((*speaker, text.clone())),
        }
    }
    merged
        .into_iter()
        .enumerate()
        .filter_map(|(i, (speaker, text))| Utterance::new(speaker, text, i).ok())
        .collect()
}

/// Loads the ESConv JSON file (an array of dialogues). Strategy
/// annotations are ignored; supporter maps to System and seeker to User.
pub fn load_esconv(path: &Path, name: SplitName) -> Result<DatasetSplit, StoreError> {
    let bytes = fs::read(path)?;
    let records: Vec<serde_json::Value> = serde_json::from_slice(&bytes)
        .map_err(|e| schema_err(path.display().to_string(), e))?;
    let mut contexts = Vec::with_capacity(records.len());
    for (i, value) in records.into_iter().enumerate() {
        let record: EsconvRecord = serde_json::from_value(value)
            .map_err(|e| schema_err(format!("record {i}"), e))?;
        let problem = record
            .problem_type
            .ok_or_else(|| schema_err(format!("record {i}"), "missing problem_type"))?;
        let situation = record
            .situation
            .ok_or_else(|| schema_err(format!("record {i}"), "missing situation"))?;
        let scenario = ScenarioDescription::new(record.emotion_type, problem, situation)
            .map_err(|e| schema_err(format!("record {i}"), e))?;
        let raw: Vec<(Speaker, String)> = record
            .dialog
            .iter()
            .map(|m| {
                let speaker = match m.speaker.as_str() {
                    "supporter" => Ok(Speaker::System),
                    "seeker" => Ok(Speaker::User),
                    other => Err(schema_err(format!("record {i}"), format!("speaker {other:?}"))),
                }?;
                Ok((speaker, m.content.trim().to_string()))
            })
            .collect::<Result<_, StoreError>>()?;
        let turns = merge_turns(&raw);
        let ctx = ConversationContext::with_turns(scenario.clone(), turns)
            .map_err(|e| schema_err(format!("record {i}"), e))?;
        contexts.push((scenario, ctx));
    }
    Ok(DatasetSplit { name, contexts })
}

// ---------------------------------------------------------------------------
// ExTES
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
struct ExtesRecord {
    scene: String,
    description: String,
    content: Vec<serde_json::Map<String, serde_json::Value>>,
}

/// Loads the ExTES JSON file and splits it deterministically. The dev and
/// test splits each take ceil(n/10) dialogues after a seeded shuffle; the
/// train split keeps the rest (11,177 dialogues -> 8,941/1,118/1,118).
/// ExTES carries no emotion type.
pub fn load_extes(path: &Path, split_seed: u64) -> Result<[DatasetSplit; 3], StoreError> {
    let bytes = fs::read(path)?;
    let records: Vec<serde_json::Value> = serde_json::from_slice(&bytes)
        .map_err(|e| schema_err(path.display().to_string(), e))?;
    let mut contexts = Vec::with_capacity(records.len());
    for (i, value) in records.into_iter().enumerate() {
        let record: ExtesRecord = serde_json::from_value(value)
            .map_err(|e| schema_err(format!("record {i}"), e))?;
        let scenario = ScenarioDescription::new(None, record.scene, record.description)
            .map_err(|e| schema_err(format!("record {i}"), e))?;
        let mut raw = Vec::new();
        for (j, msg) in record.content.iter().enumerate() {
            for (key, value) in msg {
                let speaker = match key.as_str() {
                    "AI" => Speaker::System,
                    "User" => Speaker::User,
                    other => {
                        return Err(schema_err(
                            format!("record {i} message {j}"),
                            format!("unknown role {other:?}"),
                        ))
                    }
                };
                let text = value.as_str().ok_or_else(|| {
                    schema_err(format!("record {i} message {j}"), "non-string content")
                })?;
                raw.push((speaker, text.trim().to_string()));
            }
        }
        let turns = merge_turns(&raw);
        let ctx = ConversationContext::with_turns(scenario.clone(), turns)
            .map_err(|e| schema_err(format!("record {i}"), e))?;
        contexts.push((scenario, ctx));
    }

    let mut order: Vec<usize> = (0..contexts.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed);
    order.shuffle(&mut rng);

    let n = contexts.len();
    let holdout = n.div_ceil(10);
    let mut splits: [Vec<(ScenarioDescription, ConversationContext)>; 3] =
        [Vec::new(), Vec::new(), Vec::new()];
    for (rank, idx) in order.into_iter().enumerate() {
        let bucket = if rank < holdout {
            2 // test
        } else if rank < 2 * holdout {
            1 // dev
        } else {
            0 // train
        };
        splits[bucket].push(contexts[idx].clone());
    }
    let [train, dev, test] = splits;
    Ok([
        DatasetSplit {
            name: SplitName::Train,
            contexts: train,
        },
        DatasetSplit {
            name: SplitName::Dev,
            contexts: dev,
        },
        DatasetSplit {
            name: SplitName::Test,
            contexts: test,
        },
    ])
}

/// Simulation contexts from a split: each dialogue contributes its prefix
/// ending at a user turn that follows at least one full exchange, taking
/// the last `per_dialogue` such boundaries (default 1: the final one).
pub fn extract_contexts(
    split: &DatasetSplit,
    per_dialogue: usize,
) -> Vec<(String, ConversationContext)> {
    let mut out = Vec::new();
    for (d, (scenario, ctx)) in split.contexts.iter().enumerate() {
        let turns = ctx.turns();
        let mut boundaries = Vec::new();
        for end in 2..=turns.len() {
            if turns[end - 1].speaker == Speaker::User {
                boundaries.push(end);
            }
        }
        let take = boundaries.len().saturating_sub(per_dialogue);
        for (b, end) in boundaries.into_iter().enumerate().skip(take) {
            let prefix =
                ConversationContext::with_turns(scenario.clone(), turns[..end].to_vec())
                    .expect("prefix of a valid context is valid");
            out.push((format!("d{d}b{b}"), prefix));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// JSONL persistence
// ---------------------------------------------------------------------------

/// One persisted reward-dataset row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrRow {
    pub schema_version: u32,
    pub context_id: String,
    pub scenario: ScenarioDescription,
    pub turns: Vec<Utterance>,
    pub candidate_think: String,
    pub candidate_response: String,
    pub terminal_reward: f64,
    pub turns_used: usize,
    pub future_reward: f64,
    pub seed: u64,
}

impl From<&RewardRecord> for DrRow {
    fn from(r: &RewardRecord) -> Self {
        DrRow {
            schema_version: SCHEMA_VERSION,
            context_id: r.context_id.clone(),
            scenario: r.context.scenario.clone(),
            turns: r.context.turns().to_vec(),
            candidate_think: r.candidate.think.clone(),
            candidate_response: r.candidate.response.clone(),
            terminal_reward: r.terminal_reward,
            turns_used: r.turns_used,
            future_reward: r.future_reward,
            seed: r.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPairRow {
    pub schema_version: u32,
    pub input_text: String,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub schema_version: u32,
    pub scenario: ScenarioDescription,
    pub success: bool,
    pub turns: usize,
    pub final_reward: f64,
    pub transcript: Vec<Utterance>,
}

fn check_version(value: &serde_json::Value, location: &str) -> Result<(), StoreError> {
    match value.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == SCHEMA_VERSION as u64 => Ok(()),
        Some(v) => Err(schema_err(location, format!("unknown schema_version {v}"))),
        None => Err(schema_err(location, "missing schema_version")),
    }
}

/// Writes one JSON object per line.
pub fn write_jsonl<T: Serialize>(records: &[T], path: &Path) -> Result<(), StoreError> {
    let mut file = std::io::BufWriter::new(fs::File::create(path)?);
    for record in records {
        serde_json::to_writer(&mut file, record)
            .map_err(|e| schema_err(path.display().to_string(), e))?;
        file.write_all(b"\n")?;
    }
    file.flush()?;
    Ok(())
}

/// Reads a JSONL file written by [`write_jsonl`], checking the schema
/// version of every line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let file = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let location = format!("{}:{}", path.display(), lineno + 1);
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| schema_err(&location, e))?;
        check_version(&value, &location)?;
        out.push(serde_json::from_value(value).map_err(|e| schema_err(&location, e))?);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

/// Provenance for a run directory: everything needed to reproduce or
/// audit the artifacts next to it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub backends: Vec<String>,
    pub prompt_hash: String,
    pub started_unix: u64,
    pub completed: bool,
}

impl RunManifest {
    pub fn new(
        command: &str,
        config: serde_json::Value,
        seed: u64,
        backends: Vec<String>,
        prompt_hash: String,
    ) -> Self {
        let started_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        RunManifest {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            config,
            seed,
            backends,
            prompt_hash,
            started_unix,
            completed: false,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| schema_err(path.display().to_string(), e))?;
        fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, StoreError> {
        let bytes = fs::read(path)?;
        serde_json::from_slice(&bytes).map_err(|e| schema_err(path.display().to_string(), e))
    }
}
