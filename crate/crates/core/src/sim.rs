//! Multi-agent dialogue simulation for future-oriented reward estimation.
//!
//! For each conversation context, `m` candidate system responses are
//! sampled. Each candidate is rolled forward: the user simulator replies,
//! then system and user alternate for up to `T` steps while the critic
//! scores the continuation after every exchange. The rollout stops when
//! the critic reward exceeds the stop threshold or the turn cap is hit,
//! and the candidate's future-oriented reward combines the terminal
//! critic reward with a turn-efficiency term:
//!
//!   r_future = (r_terminal + 1/turns_used) / 2

use serde::{Deserialize, Serialize};

use crate::agents::{AgentError, CriticAgent, CriticConfig, SystemAgent, UserSimulator};
use crate::backend::SamplingParams;
use crate::dialogue::{ConversationContext, Trajectory};
use crate::exec;
use crate::tags::TaggedOutput;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    /// Candidates sampled per context.
    pub m: usize,
    /// Maximum future exchanges per rollout.
    pub max_turns: usize,
    /// Rollout stops once the critic reward strictly exceeds this.
    pub stop_threshold: f64,
    pub sampling: SamplingParams,
    pub critic_cfg: CriticConfig,
    pub base_seed: u64,
    /// Run rollouts on the rayon pool. Keep false for queue-scripted
    /// backends, whose reply order is consumption order.
    pub parallel: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            m: 4,
            max_turns: 8,
            stop_threshold: 0.5,
            sampling: SamplingParams::default(),
            critic_cfg: CriticConfig::simulation(),
            base_seed: 0,
            parallel: false,
        }
    }
}

/// One row of the simulated reward dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub context_id: String,
    pub candidate_index: usize,
    pub seed: u64,
    pub context: ConversationContext,
    pub candidate: TaggedOutput,
    pub trajectory: Trajectory,
    pub terminal_reward: f64,
    pub turns_used: usize,
    pub future_reward: f64,
}

impl RewardRecord {
    /// Reward bounds implied by the turn cap: terminal in [-1, 1] and
    /// turns_used in [2, T+1].
    pub fn reward_bounds(max_turns: usize) -> (f64, f64) {
        let lo = (-1.0 + 1.0 / (max_turns as f64 + 1.0)) / 2.0;
        let hi = (1.0 + 0.5) / 2.0;
        (lo, hi)
    }
}

pub struct SimAgents {
    pub system: SystemAgent,
    pub user: UserSimulator,
    pub critic: CriticAgent,
}

#[derive(Debug, Clone, Serialize)]
pub struct RolloutLog {
    pub context_id: String,
    pub candidate_index: usize,
    pub ok: bool,
    pub turns_used: usize,
    pub future_reward: f64,
}

/// Samples `m` candidate next-turn responses for a context.
pub fn sample_candidates(
    agents: &SimAgents,
    ctx: &ConversationContext,
    cfg: &SimulationConfig,
) -> Result<Vec<TaggedOutput>, AgentError> {
    agents.system.sample_responses(ctx, &cfg.sampling, cfg.m)
}

/// Rolls one candidate forward. The candidate response is part of the
/// context for every later generation and critic call, so the resulting
/// reward actually depends on the response being scored.
pub fn rollout(
    agents: &SimAgents,
    ctx: &ConversationContext,
    candidate: &TaggedOutput,
    cfg: &SimulationConfig,
    seed: u64,
) -> Result<Trajectory, AgentError> {
    let mut sampling = cfg.sampling.clone();
    sampling.seed = Some(seed);

    let mut current = ctx.append_system(candidate)?;
    let mut continuation = Vec::new();

    let first_user = agents.user.user_reply(&current)?;
    current = current.append_turn(first_user.clone())?;
    continuation.push(first_user);

    let mut step_rewards = Vec::new();
    let mut terminal_reward = 0.0;
    let mut turns_used = 0;

    for k in 1..=cfg.max_turns {
        let sys_out = agents.system.system_respond(&current, &sampling)?;
        current = current.append_system(&sys_out)?;
        continuation.push(current.turns().last().unwrap().clone());

        let user_turn = agents.user.user_reply(&current)?;
        current = current.append_turn(user_turn.clone())?;
        continuation.push(user_turn);

        let (reward, _) = agents.critic.critic_judge(&current, &cfg.critic_cfg)?;
        step_rewards.push((k, reward));

        if reward > cfg.stop_threshold || k == cfg.max_turns {
            terminal_reward = reward;
            turns_used = k + 1;
            break;
        }
    }

    Ok(Trajectory {
        base: ctx.clone(),
        seed_response: candidate.clone(),
        continuation,
        step_rewards,
        terminal_reward,
        turns_used,
    })
}

/// The future-oriented reward: terminal critic reward blended with the
/// inverse of the number of turns the goal took.
pub fn future_reward(terminal_reward: f64, turns_used: usize) -> f64 {
    (terminal_reward + 1.0 / turns_used as f64) / 2.0
}

/// Builds the reward dataset over all contexts. Record order is fixed by
/// (context order, candidate index) regardless of execution order. Failed
/// rollouts are dropped and reported in the returned logs.
pub fn build_reward_dataset(
    agents: &SimAgents,
    contexts: &[(String, ConversationContext)],
    cfg: &SimulationConfig,
) -> Result<(Vec<RewardRecord>, Vec<RolloutLog>), AgentError> {
    // Candidate sampling stays sequential: it consumes the system
    // backend's sample stream in a defined order.
    let mut jobs = Vec::new();
    for (id, ctx) in contexts {
        let candidates = sample_candidates(agents, ctx, cfg)?;
        for (j, candidate) in candidates.into_iter().enumerate() {
            jobs.push((id.clone(), ctx, j, candidate));
        }
    }

    let results = exec::map_items(&jobs, cfg.parallel, |(id, ctx, j, candidate)| {
        let seed = cfg.base_seed + *j as u64;
        let outcome = rollout(agents, ctx, candidate, cfg, seed);
        (id.clone(), *j, seed, (*ctx).clone(), candidate.clone(), outcome)
    });

    let mut records = Vec::new();
    let mut logs = Vec::new();
    for (context_id, candidate_index, seed, context, candidate, outcome) in results {
        match outcome {
            Ok(trajectory) => {
                let fr = future_reward(trajectory.terminal_reward, trajectory.turns_used);
                logs.push(RolloutLog {
                    context_id: context_id.clone(),
                    candidate_index,
                    ok: true,
                    turns_used: trajectory.turns_used,
                    future_reward: fr,
                });
                records.push(RewardRecord {
                    context_id,
                    candidate_index,
                    seed,
                    context,
                    terminal_reward: trajectory.terminal_reward,
                    turns_used: trajectory.turns_used,
                    future_reward: fr,
                    candidate,
                    trajectory,
                });
            }
            Err(err) => {
                log::warn!("rollout {context_id}/{candidate_index} failed: {err}");
                logs.push(RolloutLog {
                    context_id,
                    candidate_index,
                    ok: false,
                    turns_used: 0,
                    future_reward: f64::NAN,
                });
            }
        }
    }
    Ok((records, logs))
}
