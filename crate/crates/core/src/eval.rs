//! Interactive evaluation protocol: episodes against the user simulator
//! with critic-aggregated success judgment, Success Rate / Average Turns,
//! threshold sweeps, and per-category breakdowns.
//!
//! An episode succeeds at the first turn whose aggregated critic reward
//! strictly exceeds the success threshold; otherwise it fails at the turn
//! cap T and contributes T to the Average Turns metric.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::agents::{AgentError, CriticAgent, CriticConfig, SystemAgent, UserSimulator};
use crate::backend::SamplingParams;
use crate::dialogue::{ConversationContext, ScenarioDescription, Speaker, Utterance};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no episode results")]
    EmptyResults,
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("dialogue error: {0}")]
    Dialogue(#[from] crate::dialogue::DialogueError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub scenario: ScenarioDescription,
    pub success: bool,
    pub turns: usize,
    pub final_reward: f64,
    pub transcript: ConversationContext,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Success rate in percent.
    pub success_rate: f64,
    pub average_turns: f64,
    pub n_episodes: usize,
    /// category -> (weighted SR in percent, episode count). Weighted SR
    /// is the category's SR scaled by its share of the episodes.
    pub per_category: BTreeMap<String, (f64, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    /// success iff reward > threshold
    Strict,
    /// success iff reward >= threshold
    Lenient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoryKey {
    EmotionType,
    ProblemType,
}

/// Runs one interactive episode. The patient's situation description
/// opens the dialogue; after every system/user exchange the critic
/// aggregates `critic_cfg.sample_count` verdicts.
#[allow(clippy::too_many_arguments)]
pub fn run_episode(
    system_agent: &SystemAgent,
    user_sim: &UserSimulator,
    critic: &CriticAgent,
    scenario: &ScenarioDescription,
    max_turns: usize,
    success_threshold: f64,
    critic_cfg: &CriticConfig,
    sampling: &SamplingParams,
) -> Result<EpisodeResult, EvalError> {
    let opening = Utterance::new(Speaker::User, scenario.situation.clone(), 0)?;
    let mut ctx = ConversationContext::new(scenario.clone()).append_turn(opening)?;

    let mut final_reward = f64::NEG_INFINITY;
    let mut success = false;
    let mut turns = max_turns;

    for turn in 1..=max_turns {
        let sys_out = system_agent.system_respond(&ctx, sampling)?;
        ctx = ctx.append_system(&sys_out)?;
        let user_turn = user_sim.user_reply(&ctx)?;
        ctx = ctx.append_turn(user_turn)?;

        let (reward, _) = critic.critic_judge(&ctx, critic_cfg)?;
        final_reward = reward;
        if reward > success_threshold {
            success = true;
            turns = turn;
            break;
        }
    }

    Ok(EpisodeResult {
        scenario: scenario.clone(),
        success,
        turns,
        final_reward,
        transcript: ctx,
    })
}

/// SR = 100 * successes / n; AT = mean turns with failures counted at the
/// cap (their `turns` field is already T).
pub fn compute_metrics(results: &[EpisodeResult], key: Option<CategoryKey>) -> Result<EvalReport, EvalError> {
    if results.is_empty() {
        return Err(EvalError::EmptyResults);
    }
    let n = results.len() as f64;
    let successes = results.iter().filter(|r| r.success).count() as f64;
    let average_turns = results.iter().map(|r| r.turns as f64).sum::<f64>() / n;
    let per_category = match key {
        Some(key) => category_breakdown(results, key),
        None => BTreeMap::new(),
    };
    Ok(EvalReport {
        success_rate: 100.0 * successes / n,
        average_turns,
        n_episodes: results.len(),
        per_category,
    })
}

/// Recomputes SR from stored final rewards at each threshold. SR is
/// non-increasing in the threshold under a fixed mode.
pub fn threshold_sweep(
    results: &[EpisodeResult],
    thresholds: &[f64],
    mode: ThresholdMode,
) -> Vec<(f64, f64)> {
    let n = results.len() as f64;
    thresholds
        .iter()
        .map(|&th| {
            let succ = results
                .iter()
                .filter(|r| match mode {
                    ThresholdMode::Strict => r.final_reward > th,
                    ThresholdMode::Lenient => r.final_reward >= th,
                })
                .count() as f64;
            (th, if n == 0.0 { 0.0 } else { 100.0 * succ / n })
        })
        .collect()
}

/// Per-category weighted success rates. Episodes whose scenario lacks the
/// requested key land in an "unlabeled" bucket.
pub fn category_breakdown(
    results: &[EpisodeResult],
    key: CategoryKey,
) -> BTreeMap<String, (f64, usize)> {
    let n = results.len() as f64;
    let mut buckets: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for r in results {
        let category = match key {
            CategoryKey::EmotionType => r
                .scenario
                .emotion_type
                .clone()
                .unwrap_or_else(|| "unlabeled".to_string()),
            CategoryKey::ProblemType => r.scenario.problem_type.clone(),
        };
        let entry = buckets.entry(category).or_insert((0, 0));
        entry.0 += r.success as usize;
        entry.1 += 1;
    }
    buckets
        .into_iter()
        .map(|(cat, (succ, count))| {
            let sr = 100.0 * succ as f64 / count as f64;
            let weighted = sr * count as f64 / n;
            (cat, (weighted, count))
        })
        .collect()
}

/// Plain-text table mirroring the SR/AT report layout.
pub fn render_report_table(name: &str, report: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("{:<24} {:>8} {:>8}\n", "Method", "SR (%)", "AT"));
    out.push_str(&format!(
        "{:<24} {:>8.1} {:>8.2}\n",
        name, report.success_rate, report.average_turns
    ));
    out.push_str(&format!("episodes: {}\n", report.n_episodes));
    out
}

/// CSV of the per-category breakdown: category,weighted_sr,count.
pub fn render_category_csv(report: &EvalReport) -> String {
    let mut out = String::from("category,weighted_sr,count\n");
    for (cat, (weighted, count)) in &report.per_category {
        out.push_str(&format!("{cat},{weighted:.4},{count}\n"));
    }
    out
}
