//! Compares the data-parallel execution path against the sequential
//! fallback on the batch-scoring hot loop.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use escsim_core::agents::PromptSet;
use escsim_core::dialogue::{ConversationContext, ScenarioDescription, Speaker, Utterance};
use escsim_core::reward::{train_scorer, LabeledPair, Scorer, TrainConfig};

fn training_set() -> Vec<LabeledPair> {
    (0..200)
        .map(|i| LabeledPair {
            input_text: if i % 2 == 0 {
                format!("I hear you, that sounds really hard. sample {i}")
            } else {
                format!("Whatever. sample {i}")
            },
            label: (i % 2 == 0) as u8,
        })
        .collect()
}

fn scoring_inputs(n: usize) -> Vec<(ConversationContext, String)> {
    let scenario =
        ScenarioDescription::new(Some("anxiety".into()), "job crisis", "I lost my job.").unwrap();
    (0..n)
        .map(|i| {
            let turns = vec![
                Utterance::new(Speaker::User, format!("I can't stop worrying, case {i}."), 0)
                    .unwrap(),
            ];
            let ctx = ConversationContext::with_turns(scenario.clone(), turns).unwrap();
            let response = format!(
                "It makes sense that you feel this way given what happened. Let's look at case {i} together."
            );
            (ctx, response)
        })
        .collect()
}

fn bench_score_batch(c: &mut Criterion) {
    let scorer = train_scorer(&training_set(), &TrainConfig::default()).unwrap();
    let model = match &scorer {
        Scorer::Featurized(m) => m.clone(),
        _ => unreachable!(),
    };

    let prompts = PromptSet::default();
    let template = prompts.reward_model.as_str();

    let mut group = c.benchmark_group("score_batch");
    for n in [256usize, 4096] {
        let inputs = scoring_inputs(n);
        group.bench_with_input(BenchmarkId::new("sequential", n), &inputs, |b, inputs| {
            b.iter(|| escsim_core::reward::score_batch(&model, template, inputs, false));
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("parallel", n), &inputs, |b, inputs| {
            b.iter(|| escsim_core::reward::score_batch(&model, template, inputs, true));
        });
    }
    group.finish();
}

criterion_group!(benches, bench_score_batch);
criterion_main!(benches);
