//! Acceptance suite: one test per shipping criterion, each ending with a
//! single PASS line (run with `--nocapture` to see them). Tolerances are
//! pinned as constants next to the checks they guard.

use std::sync::Arc;
use std::time::Instant;

use escsim_core::agents::{CriticAgent, CriticConfig, CriticLevel, PromptSet, SystemAgent, UserSimulator};
use escsim_core::backend::{SamplingParams, ScriptedBackend};
use escsim_core::dialogue::{ConversationContext, ScenarioDescription, Speaker, Utterance};
use escsim_core::eval::{
    compute_metrics, run_episode, threshold_sweep, CategoryKey, EpisodeResult, ThresholdMode,
};
use escsim_core::grpo::{
    group_advantages, grpo_step, objective_for_policy, objective_gradient, GroupSample,
    GrpoConfig, RewardParts, ToyPolicy,
};
use escsim_core::reward::{
    bce_gradient, bce_loss, binarize_reward, combined_reward, extract_features, format_reward,
    train_scorer, LabeledPair, LogisticModel, RewardWeights, Scorer, TrainConfig,
};
use escsim_core::sim::{build_reward_dataset, future_reward, rollout, SimAgents, SimulationConfig};
use escsim_core::tags::parse_tagged_output;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ADV_TOL: f64 = 1e-9;
const GRAD_REL_TOL: f64 = 1e-5;
const GRAD_FLOOR: f64 = 1e-4;
const FD_STEP: f64 = 1e-6;
const ORACLE_TOL: f64 = 1e-12;
const SCORER_LOSS_TARGET: f64 = 0.1;
const SCORER_MONOTONE_SLACK: f64 = 1e-3;
const ADHERENCE_START_MAX: f64 = 0.20;
const ADHERENCE_END_MIN: f64 = 0.90;
const FUTURE_GAIN_MIN: f64 = 0.3;
const PIPELINE_BUDGET_SECS: u64 = 300;

// ---------------------------------------------------------------------------
// helpers
// ---------------------------------------------------------------------------

fn tagged(n: usize) -> String {
    format!("<think>step {n}</think><response>reply {n}</response>")
}

fn scripted_agents(
    system: Vec<String>,
    user: Vec<String>,
    critic: Vec<String>,
) -> SimAgents {
    let prompts = PromptSet::default();
    SimAgents {
        system: SystemAgent::new(Arc::new(ScriptedBackend::new(system)), prompts.clone()),
        user: UserSimulator::new(Arc::new(ScriptedBackend::new(user)), prompts.clone()),
        critic: CriticAgent::new(Arc::new(ScriptedBackend::new(critic)), prompts),
    }
}

fn base_ctx() -> ConversationContext {
    let scenario =
        ScenarioDescription::new(Some("anxiety".into()), "job crisis", "I lost my job").unwrap();
    ConversationContext::new(scenario)
        .append_turn(Utterance::new(Speaker::User, "I lost my job.", 0).unwrap())
        .unwrap()
}

fn candidate() -> escsim_core::tags::TaggedOutput {
    parse_tagged_output(&tagged(0)).unwrap()
}

/// Independent grammar reference built on the regex crate.
fn reference_accepts(text: &str) -> bool {
    let shape =
        regex::Regex::new(r"(?s)^\s*<think>(.*)</think>\s*<response>(.*)</response>\s*$").unwrap();
    for tag in ["<think>", "</think>", "<response>", "</response>"] {
        if text.matches(tag).count() != 1 {
            return false;
        }
    }
    match shape.captures(text) {
        Some(caps) => !caps[2].trim().is_empty(),
        None => false,
    }
}

fn measured_adherence(policy: &ToyPolicy, rng: &mut ChaCha8Rng, n: usize) -> f64 {
    (0..n)
        .filter(|_| {
            let seq = policy.sample_one(rng);
            parse_tagged_output(&policy.render(&seq)).is_ok()
        })
        .count() as f64
        / n as f64
}

// ---------------------------------------------------------------------------
// 1. Group advantage normalization
// ---------------------------------------------------------------------------

#[test]
fn acceptance_1_advantage_normalization() {
    let adv = group_advantages(&[1.0, 0.0, 0.0, 1.0], 1e-8).unwrap();
    for (a, e) in adv.iter().zip([1.0, -1.0, -1.0, 1.0]) {
        assert!((a - e).abs() < ADV_TOL, "binary group oracle");
    }
    let adv = group_advantages(&[2.0, 4.0], 1e-8).unwrap();
    for (a, e) in adv.iter().zip([-1.0, 1.0]) {
        assert!((a - e).abs() < ADV_TOL, "pair oracle");
    }
    let adv = group_advantages(&[0.7; 6], 1e-8).unwrap();
    assert!(adv.iter().all(|a| *a == 0.0), "zero-variance group");

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10_000 {
        let g = rng.gen_range(2..12);
        let rewards: Vec<f64> = (0..g).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let adv = group_advantages(&rewards, 1e-8).unwrap();
        let mean = adv.iter().sum::<f64>() / g as f64;
        assert!(mean.abs() < ADV_TOL, "zero mean");
        let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / g as f64;
        let std = var.sqrt();
        assert!(std == 0.0 || (std - 1.0).abs() < ADV_TOL, "unit std, got {std}");
    }
    println!("ACCEPTANCE 1 PASS: group advantages standardized on oracles and 10k random groups");
}

// ---------------------------------------------------------------------------
// 2. Analytic objective gradient vs finite differences
// ---------------------------------------------------------------------------

fn random_policy(rng: &mut ChaCha8Rng, spread: f64) -> ToyPolicy {
    let mut p = ToyPolicy::uniform(ToyPolicy::format_vocab(), 6);
    for row in &mut p.logits {
        for l in row.iter_mut() {
            *l = rng.gen_range(-spread..spread);
        }
    }
    p
}

#[test]
fn acceptance_2_gradient_matches_finite_differences() {
    let cfg = GrpoConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(23);

    for trial in 0..10 {
        let old = random_policy(&mut rng, 0.8);
        let reference = random_policy(&mut rng, 0.8);
        let mut policy = old.clone();
        // Perturb so the importance ratios are away from 1.
        for row in &mut policy.logits {
            for l in row.iter_mut() {
                *l += rng.gen_range(-0.05..0.05);
            }
        }

        let mut groups = Vec::new();
        for _ in 0..3 {
            let outputs: Vec<Vec<usize>> = (0..cfg.group_size).map(|_| old.sample_one(&mut rng)).collect();
            let rewards: Vec<f64> = outputs.iter().map(|_| rng.gen_range(-1.0..1.5)).collect();
            groups.push(GroupSample {
                advantages: group_advantages(&rewards, cfg.std_floor).unwrap(),
                logp_old: outputs.iter().map(|o| old.token_logps(o)).collect(),
                logp_ref: outputs.iter().map(|o| reference.token_logps(o)).collect(),
                outputs,
            });
        }

        let (_, grad, _) = objective_gradient(&policy, &groups, &cfg).unwrap();
        for pos in 0..policy.horizon() {
            for v in 0..policy.vocab.len() {
                let mut plus = policy.clone();
                plus.logits[pos][v] += FD_STEP;
                let mut minus = policy.clone();
                minus.logits[pos][v] -= FD_STEP;
                let fd = (objective_for_policy(&plus, &groups, &cfg).unwrap()
                    - objective_for_policy(&minus, &groups, &cfg).unwrap())
                    / (2.0 * FD_STEP);
                let a = grad[pos][v];
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(GRAD_FLOOR);
                assert!(
                    rel < GRAD_REL_TOL,
                    "trial {trial} logits[{pos}][{v}]: analytic {a} vs fd {fd} (rel {rel})"
                );
            }
        }
    }
    println!("ACCEPTANCE 2 PASS: analytic gradient matches central differences at 10 random policies");
}

// ---------------------------------------------------------------------------
// 3. Rollout reward oracles and reproducibility
// ---------------------------------------------------------------------------

#[test]
fn acceptance_3_rollout_oracles_and_reproducibility() {
    // Critic 0.8 at the second exchange: terminal 0.8, turns_used 3,
    // future reward (0.8 + 1/3)/2.
    let critic: Vec<String> = ["Same"; 5]
        .iter()
        .map(|s| s.to_string())
        .chain(
            ["Significantly Better", "Significantly Better", "Significantly Better", "Significantly Better", "Same"]
                .iter()
                .map(|s| s.to_string()),
        )
        .collect();
    let agents = scripted_agents(
        vec![tagged(1), tagged(2)],
        vec!["u0".into(), "u1".into(), "u2".into()],
        critic,
    );
    let mut cfg = SimulationConfig::default();
    cfg.critic_cfg.sample_count = 5;
    let traj = rollout(&agents, &base_ctx(), &candidate(), &cfg, 1).unwrap();
    assert!((traj.terminal_reward - 0.8).abs() < ORACLE_TOL);
    assert_eq!(traj.turns_used, 3);
    let fr = future_reward(traj.terminal_reward, traj.turns_used);
    assert!((fr - (0.8 + 1.0 / 3.0) / 2.0).abs() < ORACLE_TOL);

    // Never crossing the threshold runs to the cap: terminal 0.0 at T=3,
    // turns_used 4, future reward (0 + 1/4)/2 = 0.125.
    let agents = scripted_agents(
        (1..=3).map(tagged).collect(),
        (0..4).map(|n| format!("u{n}")).collect(),
        vec!["Same".into(), "Same".into(), "Same".into()],
    );
    let mut cfg = SimulationConfig::default();
    cfg.max_turns = 3;
    let traj = rollout(&agents, &base_ctx(), &candidate(), &cfg, 1).unwrap();
    assert_eq!(traj.turns_used, 4);
    assert!((future_reward(traj.terminal_reward, traj.turns_used) - 0.125).abs() < ORACLE_TOL);

    // Immediate success: terminal 1.0 at the first exchange, future
    // reward (1 + 1/2)/2 = 0.75.
    let agents = scripted_agents(
        vec![tagged(1)],
        vec!["u0".into(), "u1".into()],
        vec!["Significantly Better".into()],
    );
    let cfg = SimulationConfig::default();
    let traj = rollout(&agents, &base_ctx(), &candidate(), &cfg, 1).unwrap();
    assert_eq!(traj.turns_used, 2);
    assert!((future_reward(traj.terminal_reward, traj.turns_used) - 0.75).abs() < ORACLE_TOL);

    // Identical scripted builds serialize identically.
    let build = || {
        let agents = scripted_agents(
            (0..8).map(tagged).collect(),
            (0..8).map(|n| format!("u{n}")).collect(),
            vec!["Significantly Better".into(), "Moderately Better".into(), "Significantly Better".into()],
        );
        let cfg = SimulationConfig { m: 2, max_turns: 2, base_seed: 5, ..SimulationConfig::default() };
        let (records, _) = build_reward_dataset(&agents, &[("c0".into(), base_ctx())], &cfg).unwrap();
        serde_json::to_string(&records).unwrap()
    };
    assert_eq!(build(), build(), "double run must be bit-identical");
    println!("ACCEPTANCE 3 PASS: rollout oracles hold and scripted builds are bit-reproducible");
}

// ---------------------------------------------------------------------------
// 4. Composite reward arithmetic and grammar agreement
// ---------------------------------------------------------------------------

#[test]
fn acceptance_4_composite_reward_and_grammar() {
    let w = RewardWeights::default();
    assert!((combined_reward(0.9, 1.0, &w) - 1.4).abs() < ORACLE_TOL);
    assert!((combined_reward(0.9, 0.0, &w) - 0.9).abs() < ORACLE_TOL);
    assert_eq!(binarize_reward(1.4, 0.5), 1);
    assert_eq!(binarize_reward(0.5, 0.5), 0, "threshold is strict");

    // 200 generated cases: templates, mutations, and junk, judged by the
    // format reward and by the independent checker.
    let mut cases = Vec::new();
    for i in 0..40 {
        cases.push(format!("<think>t {i}</think><response>r {i}</response>"));
        cases.push(format!("  <think>{i}</think>\n<response>ok {i}</response>\n"));
        cases.push(format!("<response>r {i}</response><think>t</think>"));
        cases.push(format!("<think>t</think>extra {i}<response>r</response>"));
        cases.push(format!("<think>t {i}</think><response>  </response>"));
    }
    assert_eq!(cases.len(), 200);
    let mut disagreements = 0;
    for case in &cases {
        let reward = format_reward(case);
        let expected = if reference_accepts(case) { 1.0 } else { 0.0 };
        if (reward - expected).abs() > ORACLE_TOL {
            disagreements += 1;
        }
    }
    assert_eq!(disagreements, 0);
    println!("ACCEPTANCE 4 PASS: reward arithmetic exact; 0/200 grammar disagreements");
}

// ---------------------------------------------------------------------------
// 5. Featurized scorer training
// ---------------------------------------------------------------------------

fn scorer_corpus() -> Vec<LabeledPair> {
    (0..60)
        .map(|i| LabeledPair {
            input_text: if i % 2 == 0 {
                format!("I hear how heavy this feels; you are not alone. case {i}")
            } else {
                format!("Whatever, just get over it already. case {i}")
            },
            label: (i % 2 == 0) as u8,
        })
        .collect()
}

#[test]
fn acceptance_5_scorer_trains_and_gradient_checks() {
    let pairs = scorer_corpus();
    let cfg = TrainConfig::default();
    assert!(cfg.steps <= 500);
    let Scorer::Featurized(model) = train_scorer(&pairs, &cfg).unwrap() else {
        unreachable!()
    };
    assert!(
        model.final_loss < SCORER_LOSS_TARGET,
        "loss {} after {} steps",
        model.final_loss,
        cfg.steps
    );

    // The full-batch descent trace must be monotone non-increasing.
    let data: Vec<(Vec<(usize, f64)>, u8)> = pairs
        .iter()
        .map(|p| (extract_features(&p.input_text), p.label))
        .collect();
    let mut m = LogisticModel::zeros();
    let mut prev = bce_loss(&m, &data);
    for _ in 0..cfg.steps {
        let (grad, bias_grad) = bce_gradient(&m, &data);
        for (i, g) in grad {
            *m.weights.entry(i).or_insert(0.0) -= cfg.learning_rate * g;
        }
        m.bias -= cfg.learning_rate * bias_grad;
        let loss = bce_loss(&m, &data);
        assert!(loss <= prev + SCORER_MONOTONE_SLACK, "loss rose {prev} -> {loss}");
        prev = loss;
    }

    // Loss gradient vs central differences on a handful of coordinates.
    let indices: Vec<usize> = m.weights.keys().copied().take(8).collect();
    let (grad, bias_grad) = bce_gradient(&m, &data);
    let grad_map: std::collections::BTreeMap<usize, f64> = grad.into_iter().collect();
    let check = |setter: &dyn Fn(&mut LogisticModel, f64), analytic: f64| {
        let mut plus = m.clone();
        setter(&mut plus, FD_STEP);
        let mut minus = m.clone();
        setter(&mut minus, -FD_STEP);
        let fd = (bce_loss(&plus, &data) - bce_loss(&minus, &data)) / (2.0 * FD_STEP);
        let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(GRAD_FLOOR);
        assert!(rel < GRAD_REL_TOL, "analytic {analytic} vs fd {fd}");
    };
    for i in indices {
        check(&|m, h| *m.weights.get_mut(&i).unwrap() += h, grad_map[&i]);
    }
    check(&|m, h| m.bias += h, bias_grad);
    println!(
        "ACCEPTANCE 5 PASS: scorer loss {:.4} < {SCORER_LOSS_TARGET} in {} steps, monotone descent, gradient verified",
        model.final_loss, cfg.steps
    );
}

// ---------------------------------------------------------------------------
// 6. Policy optimization improves format and future rewards
// ---------------------------------------------------------------------------

#[test]
fn acceptance_6_policy_learns_format_and_future_reward() {
    // Format learning: seeded start below 20% adherence, above 90% after
    // 200 steps.
    let mut policy = ToyPolicy::format_seeded(2.5, 1.5);
    let ref_policy = policy.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut eval_rng = ChaCha8Rng::seed_from_u64(7);
    let cfg = GrpoConfig {
        group_size: 8,
        learning_rate: 0.3,
        ..GrpoConfig::default()
    };
    let format_only = |text: &str| {
        let fmt = format_reward(text);
        RewardParts { total: fmt, format: fmt, future: 0.0 }
    };
    let initial = measured_adherence(&policy, &mut eval_rng, 2000);
    assert!(initial < ADHERENCE_START_MAX, "initial adherence {initial}");
    for _ in 0..200 {
        grpo_step(&mut policy, &ref_policy, 8, format_only, &cfg, &mut rng, false).unwrap();
    }
    let trained = measured_adherence(&policy, &mut eval_rng, 2000);
    assert!(trained > ADHERENCE_END_MIN, "final adherence {trained}");

    // Future-oriented preference: mean future reward rises by at least
    // FUTURE_GAIN_MIN over 300 steps under a scripted content scorer.
    let weights = RewardWeights::default();
    let scored = |text: &str| {
        let (fmt, fut) = match parse_tagged_output(text) {
            Ok(t) if t.response.contains("calm") => (1.0, 0.75),
            Ok(_) => (1.0, 0.25),
            Err(_) => (0.0, 0.0),
        };
        RewardParts { total: combined_reward(fut, fmt, &weights), format: fmt, future: fut }
    };
    let mut policy = ToyPolicy::format_seeded(2.5, 1.5);
    let ref_policy = policy.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut first = 0.0;
    let mut last = 0.0;
    for step in 0..300 {
        let stats =
            grpo_step(&mut policy, &ref_policy, 8, scored, &cfg, &mut rng, false).unwrap();
        if step == 0 {
            first = stats.mean_future_reward;
        }
        last = stats.mean_future_reward;
    }
    assert!(
        last - first >= FUTURE_GAIN_MIN,
        "future reward gain {first} -> {last}"
    );
    println!(
        "ACCEPTANCE 6 PASS: adherence {:.1}% -> {:.1}%; future reward {:.3} -> {:.3}",
        100.0 * initial,
        100.0 * trained,
        first,
        last
    );
}

// ---------------------------------------------------------------------------
// 7. Evaluation protocol
// ---------------------------------------------------------------------------

#[test]
fn acceptance_7_evaluation_protocol() {
    // Level scalars round-trip through parsing.
    for level in CriticLevel::ALL {
        assert_eq!(CriticLevel::parse(level.phrase()), Some(level));
        assert_eq!(CriticLevel::from_scalar(level.to_scalar()), Some(level));
    }

    // A constant critic at l=10 aggregates to exactly 1.0.
    let prompts = PromptSet::default();
    let critic = CriticAgent::new(
        Arc::new(ScriptedBackend::new(vec!["Significantly Better".to_string(); 10])),
        prompts.clone(),
    );
    let cfg = CriticConfig::evaluation();
    assert_eq!(cfg.sample_count, 10);
    let (reward, verdicts) = critic.critic_judge(&base_ctx(), &cfg).unwrap();
    assert_eq!(verdicts.len(), 10);
    assert!((reward - 1.0).abs() < ORACLE_TOL);

    // Two scripted episodes: success at the second exchange + failure at
    // the cap give SR 50% and AT (2 + 8)/2 = 5.0.
    let sampling = SamplingParams::default();
    let critic_cfg = CriticConfig { sample_count: 1, sampling: sampling.clone() };
    let scenario =
        ScenarioDescription::new(Some("sadness".into()), "breakup", "We broke up.").unwrap();

    let winning = scripted_agents(
        (0..2).map(tagged).collect(),
        (0..2).map(|n| format!("u{n}")).collect(),
        vec!["Same".into(), "Significantly Better".into()],
    );
    let success = run_episode(
        &winning.system, &winning.user, &winning.critic,
        &scenario, 8, 0.5, &critic_cfg, &sampling,
    )
    .unwrap();
    assert!(success.success);
    assert_eq!(success.turns, 2);

    let losing = scripted_agents(
        (0..8).map(tagged).collect(),
        (0..8).map(|n| format!("u{n}")).collect(),
        vec!["Same".to_string(); 8],
    );
    let failure = run_episode(
        &losing.system, &losing.user, &losing.critic,
        &scenario, 8, 0.5, &critic_cfg, &sampling,
    )
    .unwrap();
    assert!(!failure.success);
    assert_eq!(failure.turns, 8, "failures are counted at the cap");

    let results = vec![success, failure];
    let report = compute_metrics(&results, Some(CategoryKey::EmotionType)).unwrap();
    assert!((report.success_rate - 50.0).abs() < ORACLE_TOL);
    assert!((report.average_turns - 5.0).abs() < ORACLE_TOL);

    // Strict vs lenient disagree exactly at the threshold.
    let at_threshold = EpisodeResult { final_reward: 0.5, ..results[1].clone() };
    let strict = threshold_sweep(&[at_threshold.clone()], &[0.5], ThresholdMode::Strict);
    let lenient = threshold_sweep(&[at_threshold], &[0.5], ThresholdMode::Lenient);
    assert_eq!(strict[0].1, 0.0);
    assert_eq!(lenient[0].1, 100.0);

    // Sweep is monotone over a grid.
    let graded: Vec<EpisodeResult> = (0..10)
        .map(|i| EpisodeResult { final_reward: -1.0 + 0.2 * i as f64, ..results[0].clone() })
        .collect();
    let points = threshold_sweep(&graded, &[-1.0, -0.5, 0.0, 0.5, 1.0], ThresholdMode::Strict);
    for pair in points.windows(2) {
        assert!(pair[1].1 <= pair[0].1);
    }
    println!("ACCEPTANCE 7 PASS: SR/AT oracles, l=10 aggregation, level round-trip, sweep monotone");
}

// ---------------------------------------------------------------------------
// 8. Full offline pipeline under budget
// ---------------------------------------------------------------------------

#[test]
fn acceptance_8_offline_pipeline_under_budget() {
    let start = Instant::now();

    // Simulate a reward dataset over four contexts.
    let contexts: Vec<(String, ConversationContext)> = (0..4)
        .map(|i| (format!("c{i}"), base_ctx()))
        .collect();
    let agents = scripted_agents(
        (0..40).map(tagged).collect(),
        (0..40).map(|n| format!("patient turn {n}")).collect(),
        ["Significantly Better", "Same", "Moderately Better", "Significantly Better"]
            .iter()
            .map(|s| s.to_string())
            .cycle()
            .take(48)
            .collect(),
    );
    let cfg = SimulationConfig { m: 2, max_turns: 2, ..SimulationConfig::default() };
    let (records, logs) = build_reward_dataset(&agents, &contexts, &cfg).unwrap();
    assert_eq!(records.len() + logs.iter().filter(|l| !l.ok).count(), 8);

    // Label, train, and apply the scorer.
    let weights = RewardWeights::default();
    let prompts = PromptSet::default();
    let pairs: Vec<LabeledPair> = records
        .iter()
        .map(|r| LabeledPair {
            input_text: escsim_core::reward::render_scorer_input(
                &prompts.reward_model,
                &r.context,
                &r.candidate.response,
            ),
            label: binarize_reward(combined_reward(r.future_reward, 1.0, &weights), 0.5),
        })
        .collect();
    if pairs.iter().any(|p| p.label == 1) && pairs.iter().any(|p| p.label == 0) {
        let scorer = train_scorer(&pairs, &TrainConfig::default()).unwrap();
        let p = scorer
            .score_response(&prompts.reward_model, &records[0].context, "reply", false)
            .unwrap();
        assert!((0.0..=1.0).contains(&p));
    }

    // Short policy-optimization run.
    let mut policy = ToyPolicy::format_seeded(2.5, 1.5);
    let ref_policy = policy.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let grpo_cfg = GrpoConfig { group_size: 8, learning_rate: 0.3, ..GrpoConfig::default() };
    let fmt_reward = |text: &str| {
        let fmt = format_reward(text);
        RewardParts { total: fmt, format: fmt, future: 0.0 }
    };
    for _ in 0..20 {
        grpo_step(&mut policy, &ref_policy, 4, fmt_reward, &grpo_cfg, &mut rng, false).unwrap();
    }

    // Evaluate, report, sweep.
    let scenario =
        ScenarioDescription::new(Some("anxiety".into()), "job crisis", "I lost my job").unwrap();
    let eval_agents = scripted_agents(
        (0..4).map(tagged).collect(),
        (0..4).map(|n| format!("u{n}")).collect(),
        vec!["Significantly Better".into(); 4],
    );
    let sampling = SamplingParams::default();
    let critic_cfg = CriticConfig { sample_count: 1, sampling: sampling.clone() };
    let episode = run_episode(
        &eval_agents.system, &eval_agents.user, &eval_agents.critic,
        &scenario, 4, 0.5, &critic_cfg, &sampling,
    )
    .unwrap();
    let report = compute_metrics(&[episode.clone()], Some(CategoryKey::EmotionType)).unwrap();
    assert_eq!(report.n_episodes, 1);
    let sweep = threshold_sweep(&[episode], &[-0.5, 0.0, 0.5], ThresholdMode::Strict);
    assert_eq!(sweep.len(), 3);

    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs() < PIPELINE_BUDGET_SECS,
        "pipeline took {elapsed:?}"
    );
    println!(
        "ACCEPTANCE 8 PASS: offline pipeline completed in {:.2?} (< {PIPELINE_BUDGET_SECS}s)",
        elapsed
    );
}
