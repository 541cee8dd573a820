use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dclm_bench::synthetic;
use dclm_core::corpus::DEFAULT_MAX_TURN_LEN;
use dclm_core::models::{seeded_rng, DialogModel, LossScope, Mode, ModelConfig, ModelVariant};
use dclm_core::neural::{init_lstm, lstm_step, LstmState, ParameterSet, Tensor};
use dclm_core::ngram::{training_streams, KnModel, NgramConfig};
use dclm_core::train::batch_objective;

fn lstm(c: &mut Criterion) {
    let mut group = c.benchmark_group("lstm_step");
    for hidden in [32, 64, 128] {
        let mut rng = seeded_rng(1);
        let mut params = ParameterSet::new();
        init_lstm(&mut params, "lstm", hidden, hidden, &mut rng).unwrap();
        let input = Tensor::uniform(&[hidden], 1.0, &mut rng);
        let state = LstmState::zeros(hidden);
        group.bench_with_input(BenchmarkId::from_parameter(hidden), &hidden, |b, _| {
            b.iter(|| lstm_step(&state, &input, &params, "lstm").unwrap())
        });
    }
    group.finish();
}

fn score_window(c: &mut Criterion) {
    let f = synthetic(3, 48, 200);
    let windows = &f.windows[..16];
    let mut group = c.benchmark_group("score_16_windows");
    for variant in [ModelVariant::SingleTurn, ModelVariant::Idclm, ModelVariant::Esidclm] {
        let cfg = ModelConfig::with_dims(f.vocab.words.len(), f.vocab.da.len(), 64, 3);
        let model = DialogModel::new(variant, cfg, &mut seeded_rng(2)).unwrap();
        group.bench_function(variant.name(), |b| {
            b.iter(|| {
                windows
                    .iter()
                    .map(|w| model.window_loss(w).unwrap())
                    .sum::<f64>()
            })
        });
    }
    group.finish();
}

fn train_batch(c: &mut Criterion) {
    let f = synthetic(3, 48, 200);
    let batch: Vec<_> = f.windows.iter().take(16).collect();
    let seeds: Vec<u64> = (0..batch.len() as u64).collect();
    let mut cfg = ModelConfig::with_dims(f.vocab.words.len(), f.vocab.da.len(), 64, 3);
    cfg.keep_prob = 0.8;
    let model = DialogModel::new(ModelVariant::Esidclm, cfg, &mut seeded_rng(3)).unwrap();
    c.bench_function("esidclm_batch_objective_16", |b| {
        b.iter(|| {
            batch_objective(&model, &batch, &seeds, Mode::Train, LossScope::TargetTurn, 1).unwrap()
        })
    });
}

fn kneser_ney(c: &mut Criterion) {
    let f = synthetic(1, 400, 200);
    let streams = training_streams(&f.dialogs, &f.vocab, DEFAULT_MAX_TURN_LEN, false);
    c.bench_function("kn_train_5gram", |b| {
        b.iter(|| KnModel::train(&streams, f.vocab.words.len(), NgramConfig::default()).unwrap())
    });
    let model = KnModel::train(&streams, f.vocab.words.len(), NgramConfig::default()).unwrap();
    let windows = &f.windows[..200];
    c.bench_function("kn_perplexity_200_windows", |b| {
        b.iter(|| model.perplexity(windows).unwrap())
    });
}

criterion_group!(benches, lstm, score_window, train_batch, kneser_ney);
criterion_main!(benches);
