//! Conversation data model shared by the simulator, agents, and evaluator.
//!
//! Contexts are immutable values: extending a conversation clones the
//! context, so concurrent rollouts branching off the same base never
//! interfere.

use serde::{Deserialize, Serialize};

use crate::tags::TaggedOutput;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Speaker {
    System,
    User,
}

impl Speaker {
    pub fn other(self) -> Speaker {
        match self {
            Speaker::System => Speaker::User,
            Speaker::User => Speaker::System,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DialogueError {
    #[error("consecutive turns by the same speaker at turn {0}")]
    AlternationViolation(usize),
    #[error("empty {0}")]
    EmptyField(&'static str),
    #[error("turn_index {found} at position {position}, expected {expected}")]
    BadTurnIndex {
        position: usize,
        expected: usize,
        found: usize,
    },
}

/// Scenario metadata: the problem description that seeds a conversation.
/// `emotion_type` is optional; the ExTES dataset does not provide one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioDescription {
    pub emotion_type: Option<String>,
    pub problem_type: String,
    pub situation: String,
}

impl ScenarioDescription {
    pub fn new(
        emotion_type: Option<String>,
        problem_type: impl Into<String>,
        situation: impl Into<String>,
    ) -> Result<Self, DialogueError> {
        let problem_type = problem_type.into();
        let situation = situation.into();
        if problem_type.trim().is_empty() {
            return Err(DialogueError::EmptyField("problem_type"));
        }
        if situation.trim().is_empty() {
            return Err(DialogueError::EmptyField("situation"));
        }
        Ok(ScenarioDescription {
            emotion_type,
            problem_type,
            situation,
        })
    }
}

/// One conversation turn. System turns may carry the tagged output they
/// came from; only the response segment is ever rendered into prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: Speaker,
    pub text: String,
    pub turn_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tagged: Option<TaggedOutput>,
}

impl Utterance {
    pub fn new(
        speaker: Speaker,
        text: impl Into<String>,
        turn_index: usize,
    ) -> Result<Self, DialogueError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(DialogueError::EmptyField("utterance text"));
        }
        Ok(Utterance {
            speaker,
            text,
            turn_index,
            tagged: None,
        })
    }
}

/// An ordered, strictly alternating conversation plus its scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationContext {
    pub scenario: ScenarioDescription,
    turns: Vec<Utterance>,
}

impl ConversationContext {
    pub fn new(scenario: ScenarioDescription) -> Self {
        ConversationContext {
            scenario,
            turns: Vec::new(),
        }
    }

    /// Validates alternation and consecutive turn indices on a full turn
    /// list, e.g. when deserializing.
    pub fn with_turns(
        scenario: ScenarioDescription,
        turns: Vec<Utterance>,
    ) -> Result<Self, DialogueError> {
        for (i, turn) in turns.iter().enumerate() {
            if turn.turn_index != i {
                return Err(DialogueError::BadTurnIndex {
                    position: i,
                    expected: i,
                    found: turn.turn_index,
                });
            }
            if i > 0 && turns[i - 1].speaker == turn.speaker {
                return Err(DialogueError::AlternationViolation(i));
            }
        }
        Ok(ConversationContext { scenario, turns })
    }

    pub fn turns(&self) -> &[Utterance] {
        &self.turns
    }

    pub fn last_speaker(&self) -> Option<Speaker> {
        self.turns.last().map(|t| t.speaker)
    }

    /// Returns a new context with `u` appended; `self` is untouched.
    /// The utterance's `turn_index` is rewritten to the appended slot.
    pub fn append_turn(&self, mut u: Utterance) -> Result<Self, DialogueError> {
        if let Some(last) = self.turns.last() {
            if last.speaker == u.speaker {
                return Err(DialogueError::AlternationViolation(self.turns.len()));
            }
        }
        u.turn_index = self.turns.len();
        let mut next = self.clone();
        next.turns.push(u);
        Ok(next)
    }

    /// Appends a system turn built from a tagged output; the visible text
    /// is only the response segment.
    pub fn append_system(&self, out: &TaggedOutput) -> Result<Self, DialogueError> {
        let mut u = Utterance::new(Speaker::System, out.response.clone(), self.turns.len())?;
        u.tagged = Some(out.clone());
        self.append_turn(u)
    }

    /// Serializes the dialogue as ordered (speaker, text) pairs for prompt
    /// assembly. Scenario fields are not included; those enter through the
    /// role-specific prompt templates.
    pub fn render_history(&self) -> Vec<(Speaker, String)> {
        self.turns
            .iter()
            .map(|t| (t.speaker, t.text.clone()))
            .collect()
    }

    /// Plain-text transcript with Therapist:/Patient: prefixes, used in
    /// the critic and reward-model prompts.
    pub fn render_transcript(&self) -> String {
        let mut out = String::new();
        for t in &self.turns {
            let who = match t.speaker {
                Speaker::System => "Therapist",
                Speaker::User => "Patient",
            };
            out.push_str(who);
            out.push_str(": ");
            out.push_str(&t.text);
            out.push('\n');
        }
        out
    }
}

/// One simulated future: the base context, the candidate response that
/// seeded it, the generated continuation, and the per-step critic rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub base: ConversationContext,
    pub seed_response: TaggedOutput,
    pub continuation: Vec<Utterance>,
    /// (step k, critic reward at k); k starts at 1 and is strictly
    /// increasing.
    pub step_rewards: Vec<(usize, f64)>,
    pub terminal_reward: f64,
    pub turns_used: usize,
}

impl Trajectory {
    pub fn check_invariants(&self) -> Result<(), String> {
        if !self.continuation.is_empty() && self.turns_used < 2 {
            return Err(format!("turns_used {} < 2", self.turns_used));
        }
        for w in self.step_rewards.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err("step indices not strictly increasing".into());
            }
        }
        if let Some(&(last_k, last_r)) = self.step_rewards.last() {
            if self.turns_used != last_k + 1 {
                return Err(format!(
                    "turns_used {} != last step {} + 1",
                    self.turns_used, last_k
                ));
            }
            if last_r != self.terminal_reward {
                return Err("terminal reward mismatch".into());
            }
        }
        Ok(())
    }
}
