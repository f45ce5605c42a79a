//! The three simulation roles: the system agent (therapist), the user
//! simulator (patient), and the critic that judges whether the patient's
//! issue has been resolved.
//!
//! Each role is a prompt template bound to a [`ChatBackend`]. The default
//! templates ship as assets and can be overridden per run from a
//! directory of plain-text files with the same names.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::{BackendError, ChatBackend, ChatRequest, ChatRole, SamplingParams};
use crate::dialogue::{ConversationContext, ScenarioDescription, Speaker, Utterance};
use crate::tags::{parse_tagged_output, TaggedOutput};

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("no critic sample produced a parsable verdict")]
    NoParsableVerdicts,
    #[error("dialogue error: {0}")]
    Dialogue(#[from] crate::dialogue::DialogueError),
}

// ---------------------------------------------------------------------------
// Prompt templates
// ---------------------------------------------------------------------------

/// The full prompt-template set. Slots use bracket names:
/// `[emotion_type]`, `[problem_type]`, `[situation]`, `[conversation]`,
/// `[response]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub system_agent: String,
    pub user_sim_system: String,
    pub user_sim_user: String,
    pub critic_system: String,
    pub critic_user: String,
    pub reward_model: String,
}

impl Default for PromptSet {
    fn default() -> Self {
        PromptSet {
            system_agent: include_str!("../assets/system_agent.txt").trim_end().into(),
            user_sim_system: include_str!("../assets/user_simulator_system.txt")
                .trim_end()
                .into(),
            user_sim_user: include_str!("../assets/user_simulator_user.txt")
                .trim_end()
                .into(),
            critic_system: include_str!("../assets/critic_system.txt").trim_end().into(),
            critic_user: include_str!("../assets/critic_user.txt").trim_end().into(),
            reward_model: include_str!("../assets/reward_model.txt").trim_end().into(),
        }
    }
}

impl PromptSet {
    /// Loads overrides from a directory; files not present keep the
    /// built-in default. File names match the asset names.
    pub fn load_overrides(dir: &Path) -> std::io::Result<Self> {
        let mut set = PromptSet::default();
        for (name, slot) in [
            ("system_agent.txt", &mut set.system_agent),
            ("user_simulator_system.txt", &mut set.user_sim_system),
            ("user_simulator_user.txt", &mut set.user_sim_user),
            ("critic_system.txt", &mut set.critic_system),
            ("critic_user.txt", &mut set.critic_user),
            ("reward_model.txt", &mut set.reward_model),
        ] {
            let path = dir.join(name);
            if path.is_file() {
                *slot = std::fs::read_to_string(path)?.trim_end().to_string();
            }
        }
        Ok(set)
    }

    /// Content hash over all templates, recorded in run manifests.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for part in [
            &self.system_agent,
            &self.user_sim_system,
            &self.user_sim_user,
            &self.critic_system,
            &self.critic_user,
            &self.reward_model,
        ] {
            hasher.update(part.as_bytes());
            hasher.update([0u8]);
        }
        format!("{:x}", hasher.finalize())
    }
}

// ---------------------------------------------------------------------------
// Critic levels
// ---------------------------------------------------------------------------

/// The seven descriptive verdict levels, worst to best.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CriticLevel {
    SignificantlyWorse,
    ModeratelyWorse,
    SlightlyWorse,
    Same,
    SlightlyBetter,
    ModeratelyBetter,
    SignificantlyBetter,
}

impl CriticLevel {
    pub const ALL: [CriticLevel; 7] = [
        CriticLevel::SignificantlyWorse,
        CriticLevel::ModeratelyWorse,
        CriticLevel::SlightlyWorse,
        CriticLevel::Same,
        CriticLevel::SlightlyBetter,
        CriticLevel::ModeratelyBetter,
        CriticLevel::SignificantlyBetter,
    ];

    pub fn to_scalar(self) -> f64 {
        match self {
            CriticLevel::SignificantlyWorse => -1.0,
            CriticLevel::ModeratelyWorse => -0.5,
            CriticLevel::SlightlyWorse => -0.25,
            CriticLevel::Same => 0.0,
            CriticLevel::SlightlyBetter => 0.25,
            CriticLevel::ModeratelyBetter => 0.5,
            CriticLevel::SignificantlyBetter => 1.0,
        }
    }

    pub fn from_scalar(v: f64) -> Option<CriticLevel> {
        Self::ALL.iter().copied().find(|l| l.to_scalar() == v)
    }

    pub fn phrase(self) -> &'static str {
        match self {
            CriticLevel::SignificantlyWorse => "significantly worse",
            CriticLevel::ModeratelyWorse => "moderately worse",
            CriticLevel::SlightlyWorse => "slightly worse",
            CriticLevel::Same => "same",
            CriticLevel::SlightlyBetter => "slightly better",
            CriticLevel::ModeratelyBetter => "moderately better",
            CriticLevel::SignificantlyBetter => "significantly better",
        }
    }

    /// Matches a level phrase anywhere in the first line of `reply`,
    /// case-insensitively, after stripping punctuation. Two-word phrases
    /// are tried before the bare "same".
    pub fn parse(reply: &str) -> Option<CriticLevel> {
        let first_line = reply.lines().next().unwrap_or("");
        let normalized: String = first_line
            .to_lowercase()
            .chars()
            .map(|c| if c.is_alphanumeric() { c } else { ' ' })
            .collect();
        let normalized = normalized.split_whitespace().collect::<Vec<_>>().join(" ");
        for level in [
            CriticLevel::SignificantlyWorse,
            CriticLevel::ModeratelyWorse,
            CriticLevel::SlightlyWorse,
            CriticLevel::SignificantlyBetter,
            CriticLevel::ModeratelyBetter,
            CriticLevel::SlightlyBetter,
            CriticLevel::Same,
        ] {
            if normalized.contains(level.phrase()) {
                return Some(level);
            }
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticConfig {
    /// Number of verdict samples aggregated per judgment. Simulation uses
    /// 1; the evaluation protocol uses 10.
    pub sample_count: usize,
    pub sampling: SamplingParams,
}

impl CriticConfig {
    pub fn simulation() -> Self {
        CriticConfig {
            sample_count: 1,
            sampling: SamplingParams::default(),
        }
    }

    pub fn evaluation() -> Self {
        CriticConfig {
            sample_count: 10,
            sampling: SamplingParams::default(),
        }
    }
}

// ---------------------------------------------------------------------------
// Agents
// ---------------------------------------------------------------------------

fn fill(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in slots {
        out = out.replace(name, value);
    }
    out
}

/// The therapist role: renders the dialogue as a chat, asks the backend
/// for a tagged output, and parses it.
pub struct SystemAgent {
    pub backend: Arc<dyn ChatBackend>,
    pub prompts: PromptSet,
    /// Re-queries after a format failure this many times before falling
    /// back to the raw text.
    pub format_retries: usize,
}

impl SystemAgent {
    pub fn new(backend: Arc<dyn ChatBackend>, prompts: PromptSet) -> Self {
        SystemAgent {
            backend,
            prompts,
            format_retries: 1,
        }
    }

    fn request(&self, ctx: &ConversationContext, sampling: &SamplingParams) -> ChatRequest {
        let messages = ctx
            .render_history()
            .into_iter()
            .map(|(speaker, text)| match speaker {
                Speaker::System => (ChatRole::Assistant, text),
                Speaker::User => (ChatRole::User, text),
            })
            .collect();
        let mut req = ChatRequest::new(self.prompts.system_agent.clone(), messages);
        req.sampling = sampling.clone();
        req
    }

    /// One system turn. On repeated format failures the raw text is kept
    /// as the response with `format_ok = false`; a rollout never aborts on
    /// malformed output.
    pub fn system_respond(
        &self,
        ctx: &ConversationContext,
        sampling: &SamplingParams,
    ) -> Result<TaggedOutput, AgentError> {
        let req = self.request(ctx, sampling);
        let mut last_raw = String::new();
        for _ in 0..=self.format_retries {
            let texts = self.backend.chat_complete(&req)?;
            match parse_tagged_output(&texts[0]) {
                Ok(out) => return Ok(out),
                Err(err) => {
                    log::debug!("format failure, retrying: {err}");
                    last_raw = texts.into_iter().next().unwrap();
                }
            }
        }
        Ok(TaggedOutput::fallback(&last_raw))
    }

    /// Samples `m` candidate next-turn responses in one request. Each is
    /// parsed independently with raw-text fallback (no re-query).
    pub fn sample_responses(
        &self,
        ctx: &ConversationContext,
        sampling: &SamplingParams,
        m: usize,
    ) -> Result<Vec<TaggedOutput>, AgentError> {
        let mut req = self.request(ctx, sampling);
        req.n_samples = m;
        let texts = self.backend.chat_complete(&req)?;
        Ok(texts
            .iter()
            .map(|t| parse_tagged_output(t).unwrap_or_else(|_| TaggedOutput::fallback(t)))
            .collect())
    }
}

/// The patient role. The scenario's situation seeds its first (assistant)
/// message; when the dataset has no emotion type the emotion slot is
/// dropped from the instruction.
pub struct UserSimulator {
    pub backend: Arc<dyn ChatBackend>,
    pub prompts: PromptSet,
}

impl UserSimulator {
    pub fn new(backend: Arc<dyn ChatBackend>, prompts: PromptSet) -> Self {
        UserSimulator { backend, prompts }
    }

    fn instruction(&self, scenario: &ScenarioDescription) -> String {
        let template = match &scenario.emotion_type {
            Some(emotion) => fill(&self.prompts.user_sim_user, &[("[emotion_type]", emotion)]),
            None => self
                .prompts
                .user_sim_user
                .replace(" about [emotion_type]", ""),
        };
        fill(&template, &[("[problem_type]", &scenario.problem_type)])
    }

    pub fn user_reply(&self, ctx: &ConversationContext) -> Result<Utterance, AgentError> {
        let scenario = &ctx.scenario;
        let mut messages = vec![
            (ChatRole::User, self.instruction(scenario)),
            (ChatRole::Assistant, scenario.situation.clone()),
        ];
        // From the simulator's side the therapist speaks as "user" and the
        // patient's own turns are "assistant".
        for (speaker, text) in ctx.render_history() {
            match speaker {
                Speaker::System => messages.push((ChatRole::User, text)),
                Speaker::User => messages.push((ChatRole::Assistant, text)),
            }
        }
        let mut req = ChatRequest::new(self.prompts.user_sim_system.clone(), messages);
        req.sampling = SamplingParams::default();
        let texts = self.backend.chat_complete(&req)?;
        Ok(Utterance::new(
            Speaker::User,
            texts[0].trim(),
            ctx.turns().len(),
        )?)
    }
}

/// The judge role: samples `l` verdicts and averages their scalar values.
pub struct CriticAgent {
    pub backend: Arc<dyn ChatBackend>,
    pub prompts: PromptSet,
}

impl CriticAgent {
    pub fn new(backend: Arc<dyn ChatBackend>, prompts: PromptSet) -> Self {
        CriticAgent { backend, prompts }
    }

    fn request(&self, ctx: &ConversationContext, n: usize, sampling: &SamplingParams) -> ChatRequest {
        let scenario = &ctx.scenario;
        let emotion = scenario.emotion_type.as_deref().unwrap_or("None");
        let user_msg = fill(
            &self.prompts.critic_user,
            &[
                ("[emotion_type]", emotion),
                ("[problem_type]", scenario.problem_type.as_str()),
                ("[conversation]", ctx.render_transcript().as_str()),
            ],
        );
        let mut req = ChatRequest::new(
            self.prompts.critic_system.clone(),
            vec![(ChatRole::User, user_msg)],
        );
        req.sampling = sampling.clone();
        req.n_samples = n;
        req
    }

    /// Judges the conversation `cfg.sample_count` times and returns the
    /// arithmetic mean of the scalar-mapped verdicts plus the verdicts
    /// themselves. An unparsable reply is redrawn once, then dropped.
    pub fn critic_judge(
        &self,
        ctx: &ConversationContext,
        cfg: &CriticConfig,
    ) -> Result<(f64, Vec<CriticLevel>), AgentError> {
        let replies = self
            .backend
            .chat_complete(&self.request(ctx, cfg.sample_count, &cfg.sampling))?;
        let mut levels = Vec::with_capacity(replies.len());
        for reply in &replies {
            match CriticLevel::parse(reply) {
                Some(level) => levels.push(level),
                None => {
                    log::warn!("unparsable critic verdict: {reply:?}; redrawing once");
                    let redraw = self
                        .backend
                        .chat_complete(&self.request(ctx, 1, &cfg.sampling))?;
                    match CriticLevel::parse(&redraw[0]) {
                        Some(level) => levels.push(level),
                        None => log::warn!("redraw unparsable too, dropping sample"),
                    }
                }
            }
        }
        if levels.is_empty() {
            return Err(AgentError::NoParsableVerdicts);
        }
        let mean = levels.iter().map(|l| l.to_scalar()).sum::<f64>() / levels.len() as f64;
        Ok((mean, levels))
    }
}
