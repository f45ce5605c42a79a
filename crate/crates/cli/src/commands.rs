//! Subcommand implementations. Every command that produces artifacts
//! writes a manifest into the run directory first and marks it completed
//! on success; a completed run directory is only reused with `--force`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use escsim_core::agents::{CriticAgent, CriticConfig, PromptSet, SystemAgent, UserSimulator};
use escsim_core::dialogue::ConversationContext;
use escsim_core::eval::{
    category_breakdown, compute_metrics, run_episode, threshold_sweep, CategoryKey, EpisodeResult,
    ThresholdMode,
};
use escsim_core::grpo::{grpo_step, GrpoConfig, RewardParts, ToyPolicy};
use escsim_core::reward::{
    binarize_reward, combined_reward, format_reward, render_scorer_input, train_scorer,
    LabeledPair, RewardWeights, Scorer, TrainConfig,
};
use escsim_core::sim::{build_reward_dataset, SimAgents, SimulationConfig};
use escsim_core::store::{
    extract_contexts, load_esconv, load_extes, read_jsonl, write_jsonl, DatasetSplit, DrRow,
    EpisodeRow, LabeledPairRow, RunManifest, SplitName, StoreError, SCHEMA_VERSION,
};
use escsim_core::tags::parse_tagged_output;

use crate::config::{BackendSpec, RunConfig};

pub struct RunContext {
    pub config: RunConfig,
    pub config_dir: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub workers: Option<usize>,
    pub force: bool,
}

impl RunContext {
    /// Creates the run directory and writes the initial manifest. Refuses
    /// to touch a directory holding a completed run unless forced.
    pub fn begin(&self, command: &str, backends: Vec<String>) -> Result<RunManifest> {
        let manifest_path = self.out_dir.join("manifest.json");
        if manifest_path.exists() {
            let previous = RunManifest::load(&manifest_path)?;
            if previous.completed && !self.force {
                bail!(
                    "{} holds a completed `{}` run; pass --force to overwrite",
                    self.out_dir.display(),
                    previous.command
                );
            }
        }
        fs::create_dir_all(&self.out_dir)?;
        let config_json = serde_json::to_value(&self.config)?;
        let manifest = RunManifest::new(
            command,
            config_json,
            self.seed,
            backends,
            PromptSet::default().content_hash(),
        );
        manifest.save(&manifest_path)?;
        Ok(manifest)
    }

    pub fn finish(&self, mut manifest: RunManifest) -> Result<()> {
        manifest.completed = true;
        manifest.save(&self.out_dir.join("manifest.json"))?;
        Ok(())
    }

    fn backend(&self, spec: &Option<BackendSpec>, role: &str) -> Result<BackendSpec> {
        spec.clone()
            .with_context(|| format!("config is missing [backends.{role}]"))
    }

    fn agents(&self) -> Result<(SimAgents, Vec<String>, bool)> {
        let prompts = PromptSet::default();
        let specs = [
            self.backend(&self.config.backends.system, "system")?,
            self.backend(&self.config.backends.user, "user")?,
            self.backend(&self.config.backends.critic, "critic")?,
        ];
        let all_remote = specs.iter().all(|s| !s.is_scripted());
        let descriptions: Vec<String> = specs
            .iter()
            .map(|s| match s {
                BackendSpec::Scripted { script } => format!("scripted:{}", script.display()),
                BackendSpec::Remote(r) => format!("remote:{}:{}", r.base_url, r.model),
            })
            .collect();
        let [system, user, critic] = specs;
        let agents = SimAgents {
            system: SystemAgent::new(system.build(&self.config_dir)?, prompts.clone()),
            user: UserSimulator::new(user.build(&self.config_dir)?, prompts.clone()),
            critic: CriticAgent::new(critic.build(&self.config_dir)?, prompts),
        };
        Ok((agents, descriptions, all_remote))
    }

    fn load_split(&self) -> Result<DatasetSplit> {
        let section = &self.config.dataset;
        let path = section
            .path
            .clone()
            .context("config is missing dataset.path")?;
        let path = if path.is_relative() {
            self.config_dir.join(path)
        } else {
            path
        };
        match section.format.as_str() {
            "esconv" => Ok(load_esconv(&path, SplitName::Train)?),
            "extes" => {
                let [train, dev, test] = load_extes(&path, section.split_seed)?;
                match section.split.as_str() {
                    "train" => Ok(train),
                    "dev" => Ok(dev),
                    "test" => Ok(test),
                    other => bail!("unknown dataset.split {other:?}"),
                }
            }
            other => bail!("unknown dataset.format {other:?} (expected esconv or extes)"),
        }
    }
}

fn init_thread_pool(workers: Option<usize>) {
    #[cfg(feature = "parallel")]
    if let Some(n) = workers {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = workers;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

pub fn simulate(run: &RunContext) -> Result<()> {
    init_thread_pool(run.workers);
    let (agents, backends, all_remote) = run.agents()?;
    let manifest = run.begin("simulate", backends)?;

    let split = run.load_split()?;
    let section = &run.config.simulate;
    let mut contexts = extract_contexts(&split, section.per_dialogue);
    if section.max_contexts > 0 {
        contexts.truncate(section.max_contexts);
    }
    log::info!("simulating {} contexts", contexts.len());

    let cfg = SimulationConfig {
        m: section.m,
        max_turns: section.max_turns,
        stop_threshold: section.stop_threshold,
        sampling: run.config.sampling.to_params(),
        critic_cfg: CriticConfig {
            sample_count: section.critic_samples,
            sampling: run.config.sampling.to_params(),
        },
        base_seed: run.seed,
        // Rollout order must match script order for queue-scripted
        // backends, so parallel rollouts require remote backends.
        parallel: section.parallel && all_remote,
    };

    let (records, logs) = build_reward_dataset(&agents, &contexts, &cfg)?;
    let rows: Vec<DrRow> = records.iter().map(DrRow::from).collect();
    write_jsonl(&rows, &run.out_dir.join("reward_dataset.jsonl"))?;
    let failures = logs.iter().filter(|l| !l.ok).count();
    println!(
        "wrote {} reward records ({} rollouts, {} failed) to {}",
        rows.len(),
        logs.len(),
        failures,
        run.out_dir.join("reward_dataset.jsonl").display()
    );
    run.finish(manifest)
}

// ---------------------------------------------------------------------------
// train-reward
// ---------------------------------------------------------------------------

fn derive_pairs_from_rows(run: &RunContext, rows: &[DrRow]) -> Result<Vec<LabeledPair>> {
    let section = &run.config.train_reward;
    let prompts = PromptSet::default();
    let weights = RewardWeights { alpha: section.alpha };
    rows.iter()
        .map(|row| {
            let ctx = ConversationContext::with_turns(row.scenario.clone(), row.turns.clone())?;
            let raw = format!(
                "<think>{}</think><response>{}</response>",
                row.candidate_think, row.candidate_response
            );
            let fmt = format_reward(&raw);
            let r = combined_reward(row.future_reward, fmt, &weights);
            Ok(LabeledPair {
                input_text: render_scorer_input(
                    &prompts.reward_model,
                    &ctx,
                    &row.candidate_response,
                ),
                label: binarize_reward(r, section.delta),
            })
        })
        .collect()
}

pub fn train_reward(run: &RunContext) -> Result<()> {
    let manifest = run.begin("train-reward", vec![])?;
    let section = &run.config.train_reward;

    let pairs: Vec<LabeledPair> = if let Some(path) = &section.pairs {
        let path = if path.is_relative() {
            run.config_dir.join(path)
        } else {
            path.clone()
        };
        let rows: Vec<LabeledPairRow> = read_jsonl(&path)?;
        rows.into_iter()
            .map(|r| LabeledPair {
                input_text: r.input_text,
                label: r.label,
            })
            .collect()
    } else {
        let dataset_path = run.out_dir.join("reward_dataset.jsonl");
        let rows: Vec<DrRow> = read_jsonl(&dataset_path).with_context(|| {
            format!(
                "no train_reward.pairs configured and {} not found; run `simulate` first",
                dataset_path.display()
            )
        })?;
        derive_pairs_from_rows(run, &rows)?
    };

    let cfg = TrainConfig {
        learning_rate: section.learning_rate,
        steps: section.steps,
    };
    let scorer = train_scorer(&pairs, &cfg)?;
    let Scorer::Featurized(model) = &scorer else {
        unreachable!("train_scorer returns a featurized model");
    };
    let path = run.out_dir.join("scorer.json");
    fs::write(&path, serde_json::to_string(&model)?)?;
    println!(
        "trained on {} pairs, final loss {:.4}, model at {}",
        pairs.len(),
        model.final_loss,
        path.display()
    );
    run.finish(manifest)
}

// ---------------------------------------------------------------------------
// grpo-train
// ---------------------------------------------------------------------------

pub fn grpo_train(run: &RunContext) -> Result<()> {
    init_thread_pool(run.workers);
    let manifest = run.begin("grpo-train", vec![])?;
    let section = &run.config.grpo;

    let mut policy = ToyPolicy::format_seeded(section.tag_bias, section.content_bias);
    let ref_policy = policy.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
    let cfg = GrpoConfig {
        group_size: section.group_size,
        clip_epsilon: section.clip_epsilon,
        kl_beta: section.kl_beta,
        learning_rate: section.learning_rate,
        epochs: section.epochs,
        ..GrpoConfig::default()
    };
    let weights = RewardWeights::default();
    let reward = |text: &str| {
        let fmt = format_reward(text);
        // Content preference stands in for the future-oriented term: a
        // well-formed response mentioning "calm" scores highest.
        let fut = match parse_tagged_output(text) {
            Ok(t) if t.response.contains("calm") => 0.75,
            Ok(_) => 0.25,
            Err(_) => 0.0,
        };
        RewardParts {
            total: combined_reward(fut, fmt, &weights),
            format: fmt,
            future: fut,
        }
    };

    let adherence = |policy: &ToyPolicy, rng: &mut ChaCha8Rng| {
        let n = 2000;
        let ok = (0..n)
            .filter(|_| {
                let seq = policy.sample_one(rng);
                parse_tagged_output(&policy.render(&seq)).is_ok()
            })
            .count();
        ok as f64 / n as f64
    };
    let mut eval_rng = ChaCha8Rng::seed_from_u64(run.seed ^ 0x5eed);
    let initial = adherence(&policy, &mut eval_rng);

    let mut stats_rows = Vec::with_capacity(section.steps);
    #[cfg(not(feature = "parallel"))]
    let parallel = false;
    #[cfg(feature = "parallel")]
    let parallel = section.parallel;
    for step in 0..section.steps {
        let stats = grpo_step(
            &mut policy,
            &ref_policy,
            section.groups,
            reward,
            &cfg,
            &mut rng,
            parallel,
        )?;
        if step % 20 == 0 {
            log::info!(
                "step {step}: reward {:.3} kl {:.4}",
                stats.mean_reward,
                stats.mean_kl
            );
        }
        stats_rows.push(serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "step": step,
            "stats": stats,
        }));
    }
    write_jsonl(&stats_rows, &run.out_dir.join("grpo_stats.jsonl"))?;
    fs::write(
        run.out_dir.join("policy.json"),
        serde_json::to_string(&serde_json::json!({
            "vocab": policy.vocab,
            "logits": policy.logits,
        }))?,
    )?;

    let final_adherence = adherence(&policy, &mut eval_rng);
    println!(
        "format adherence {:.1}% -> {:.1}% over {} steps",
        100.0 * initial,
        100.0 * final_adherence,
        section.steps
    );
    run.finish(manifest)
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

pub fn evaluate(run: &RunContext) -> Result<()> {
    init_thread_pool(run.workers);
    let (agents, backends, _) = run.agents()?;
    let manifest = run.begin("evaluate", backends)?;
    let section = &run.config.evaluate;

    let split = run.load_split()?;
    let mut scenarios: Vec<_> = split.contexts.iter().map(|(s, _)| s.clone()).collect();
    if section.episodes > 0 {
        scenarios.truncate(section.episodes);
    }
    let critic_cfg = CriticConfig {
        sample_count: section.critic_samples,
        sampling: run.config.sampling.to_params(),
    };
    let sampling = run.config.sampling.to_params();

    let mut results = Vec::with_capacity(scenarios.len());
    for scenario in &scenarios {
        results.push(run_episode(
            &agents.system,
            &agents.user,
            &agents.critic,
            scenario,
            section.max_turns,
            section.success_threshold,
            &critic_cfg,
            &sampling,
        )?);
    }

    let rows: Vec<EpisodeRow> = results
        .iter()
        .map(|r| EpisodeRow {
            schema_version: SCHEMA_VERSION,
            scenario: r.scenario.clone(),
            success: r.success,
            turns: r.turns,
            final_reward: r.final_reward,
            transcript: r.transcript.turns().to_vec(),
        })
        .collect();
    write_jsonl(&rows, &run.out_dir.join("episodes.jsonl"))?;

    let report = compute_metrics(&results, Some(CategoryKey::EmotionType))?;
    let table = escsim_core::eval::render_report_table("this run", &report);
    fs::write(run.out_dir.join("report.txt"), &table)?;
    print!("{table}");
    run.finish(manifest)
}

fn load_episodes(path: &Path) -> Result<Vec<EpisodeResult>> {
    let rows: Vec<EpisodeRow> = read_jsonl(path)?;
    rows.into_iter()
        .map(|row| {
            let transcript =
                ConversationContext::with_turns(row.scenario.clone(), row.transcript)
                    .map_err(|e| StoreError::Schema {
                        location: path.display().to_string(),
                        message: e.to_string(),
                    })?;
            Ok(EpisodeResult {
                scenario: row.scenario,
                success: row.success,
                turns: row.turns,
                final_reward: row.final_reward,
                transcript,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// sweep / report
// ---------------------------------------------------------------------------

pub fn sweep(run: &RunContext, episodes: &Path) -> Result<()> {
    let results = load_episodes(episodes)?;
    let section = &run.config.sweep;
    let mode = match section.mode.as_str() {
        "strict" => ThresholdMode::Strict,
        "lenient" => ThresholdMode::Lenient,
        other => bail!("unknown sweep.mode {other:?} (expected strict or lenient)"),
    };
    let points = threshold_sweep(&results, &section.thresholds, mode);
    let mut csv = String::from("threshold,success_rate\n");
    for (th, sr) in &points {
        csv.push_str(&format!("{th},{sr:.4}\n"));
    }
    fs::create_dir_all(&run.out_dir)?;
    let path = run.out_dir.join("sweep.csv");
    fs::write(&path, &csv)?;
    print!("{csv}");
    println!("wrote {}", path.display());
    Ok(())
}

pub fn report(run: &RunContext, episodes: &Path, by: &str) -> Result<()> {
    let results = load_episodes(episodes)?;
    let key = match by {
        "emotion" => CategoryKey::EmotionType,
        "problem" => CategoryKey::ProblemType,
        other => bail!("unknown --by {other:?} (expected emotion or problem)"),
    };
    let metrics = compute_metrics(&results, Some(key))?;
    print!("{}", escsim_core::eval::render_report_table("this run", &metrics));
    let breakdown = category_breakdown(&results, key);
    println!("\ncategory breakdown (weighted SR, count):");
    for (cat, (weighted, count)) in &breakdown {
        println!("  {cat:<32} {weighted:>7.2} {count:>6}");
    }
    fs::create_dir_all(&run.out_dir)?;
    fs::write(
        run.out_dir.join("categories.csv"),
        escsim_core::eval::render_category_csv(&metrics),
    )?;
    Ok(())
}
