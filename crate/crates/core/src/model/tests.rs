use super::*;
use crate::data::{Cell, Dataset};
use alloc::vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_config(activation: Activation, gated: bool) -> ModelConfig {
    ModelConfig {
        model_dim: 8,
        num_layers: 2,
        num_heads: 2,
        ffn_dim: 12,
        dropout: 0.0,
        activation,
        gated_ffn: gated,
        class_count: 3,
        zero_init_head: false,
    }
}

fn mixed_data(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features = vec![
        FeatureSchema::numerical("a"),
        FeatureSchema::categorical("b", ["p", "q", "r"]),
        FeatureSchema::numerical("c"),
        FeatureSchema::numerical("d"),
    ];
    let mut cells = Vec::new();
    for _ in 0..n {
        for j in 0..4 {
            cells.push(if rng.random_bool(0.25) {
                Cell::Missing
            } else if j == 1 {
                Cell::Cat(rng.random_range(0..3))
            } else {
                Cell::Num(rng.random_range(-2.0..2.0))
            });
        }
    }
    let labels = (0..n).map(|_| rng.random_range(0..3)).collect();
    Dataset::new(
        features,
        FeatureSchema::target("y", ["0", "1", "2"]),
        4,
        cells,
        labels,
    )
    .unwrap()
}

fn registered(config: ModelConfig, data: &Dataset, seed: u64) -> ModelState {
    let mut state = ModelState::new(config, seed).unwrap();
    for f in data.features() {
        state.register_feature(f).unwrap();
    }
    state
}

fn eval_loss(state: &ModelState, data: &Dataset, rows: &[usize]) -> f64 {
    let batch = tokenize(&data.full_view(), state, rows, UnseenFeature::Error).unwrap();
    let labels: Vec<usize> = rows.iter().map(|&r| data.labels()[r]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    loss_and_grad(&batch, &labels, state, false, &mut rng)
        .unwrap()
        .0
}

#[test]
fn zero_head_gives_log_class_count() {
    let data = mixed_data(10, 1);
    let config = ModelConfig {
        zero_init_head: true,
        ..small_config(Activation::Relu, false)
    };
    let state = registered(config, &data, 3);
    let loss = eval_loss(&state, &data, &(0..10).collect::<Vec<_>>());
    assert!((loss - libm::log(3.0)).abs() < 1e-9);
}

#[test]
fn gradients_match_central_differences() {
    let data = mixed_data(6, 2);
    let rows: Vec<usize> = (0..6).collect();
    for (i, (act, gated)) in [
        (Activation::Gelu, false),
        (Activation::Gelu, true),
        (Activation::LeakyRelu, true),
    ]
    .into_iter()
    .enumerate()
    {
        let mut state = registered(small_config(act, gated), &data, 10 + i as u64);
        let batch = tokenize(&data.full_view(), &state, &rows, UnseenFeature::Error).unwrap();
        let labels: Vec<usize> = rows.iter().map(|&r| data.labels()[r]).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (_, grads) = loss_and_grad(&batch, &labels, &state, false, &mut rng).unwrap();
        let ids: Vec<ParamId> = state.params.ids().collect();
        let mut worst: f64 = 0.0;
        for id in ids {
            let analytic = grads.get(id).map(<[f64]>::to_vec);
            for e in 0..state.params.data(id).len() {
                let orig = state.params.data(id)[e];
                let h = 1e-5;
                state.params.data_mut(id)[e] = orig + h;
                let up = eval_loss(&state, &data, &rows);
                state.params.data_mut(id)[e] = orig - h;
                let down = eval_loss(&state, &data, &rows);
                state.params.data_mut(id)[e] = orig;
                let fd = (up - down) / (2.0 * h);
                let a = analytic.as_ref().map_or(0.0, |g| g[e]);
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
                worst = worst.max(rel);
                assert!(
                    rel < 1e-4,
                    "{} [{e}]: analytic {a}, numeric {fd}",
                    state.params.get(id).name
                );
            }
        }
        assert!(worst < 1e-4);
    }
}

#[test]
fn missing_content_never_reaches_logits() {
    let data = mixed_data(12, 4);
    let state = registered(small_config(Activation::Relu, true), &data, 5);
    let rows: Vec<usize> = (0..12).collect();
    let mut batch = tokenize(&data.full_view(), &state, &rows, UnseenFeature::Error).unwrap();
    assert!(batch.missing.iter().any(|&m| m));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let before = forward(&batch, &state, false, &mut rng).unwrap().logits;
    for t in 0..batch.missing.len() {
        if batch.missing[t] {
            for v in &mut batch.embeddings[t * 8..(t + 1) * 8] {
                *v = rng.random_range(-100.0..100.0);
            }
        }
    }
    let after = forward(&batch, &state, false, &mut rng).unwrap().logits;
    assert_eq!(before, after);
}

#[test]
fn all_missing_equals_cls_only() {
    let features = vec![FeatureSchema::numerical("a"), FeatureSchema::numerical("b")];
    let data = Dataset::new(
        features,
        FeatureSchema::target("y", ["0", "1"]),
        2,
        vec![Cell::Missing, Cell::Missing],
        vec![0],
    )
    .unwrap();
    let config = ModelConfig {
        class_count: 2,
        ..small_config(Activation::Gelu, false)
    };
    let state = registered(config, &data, 8);
    let batch = tokenize(&data.full_view(), &state, &[0], UnseenFeature::Error).unwrap();
    assert_eq!(batch.missing, vec![false, true, true]);
    let cls_only = TokenBatch {
        batch: 1,
        len: 1,
        model_dim: 8,
        embeddings: state.params.data(state.cls).to_vec(),
        missing: vec![false],
        sources: vec![TokenSource::Cls],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let full = forward(&batch, &state, false, &mut rng).unwrap().logits;
    let single = forward(&cls_only, &state, false, &mut rng).unwrap().logits;
    for (a, b) in full.iter().zip(&single) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn duplicated_batch_has_same_loss_and_gradients() {
    let data = mixed_data(5, 6);
    let state = registered(small_config(Activation::Relu, false), &data, 1);
    let once: Vec<usize> = (0..5).collect();
    let twice: Vec<usize> = (0..10).map(|i| i % 5).collect();
    let run = |rows: &[usize]| {
        let batch = tokenize(&data.full_view(), &state, rows, UnseenFeature::Error).unwrap();
        let labels: Vec<usize> = rows.iter().map(|&r| data.labels()[r]).collect();
        loss_and_grad(
            &batch,
            &labels,
            &state,
            false,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap()
    };
    let (l1, g1) = run(&once);
    let (l2, g2) = run(&twice);
    assert!((l1 - l2).abs() < 1e-12);
    for (id, a) in g1.iter() {
        let b = g2.get(id).unwrap();
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn eval_mode_is_deterministic_and_train_mode_drops() {
    let data = mixed_data(8, 7);
    let config = ModelConfig {
        dropout: 0.3,
        ..small_config(Activation::Relu, false)
    };
    let state = registered(config, &data, 2);
    let rows: Vec<usize> = (0..8).collect();
    let batch = tokenize(&data.full_view(), &state, &rows, UnseenFeature::Error).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let a = forward(&batch, &state, false, &mut rng).unwrap().logits;
    let b = forward(&batch, &state, false, &mut rng).unwrap().logits;
    assert_eq!(a, b);
    let c = forward(&batch, &state, true, &mut rng).unwrap().logits;
    assert_ne!(a, c);
}

#[test]
fn tokens_flag_missing_cells() {
    let data = mixed_data(20, 9);
    let state = registered(small_config(Activation::Relu, false), &data, 2);
    let rows: Vec<usize> = (0..20).collect();
    let batch = tokenize(&data.full_view(), &state, &rows, UnseenFeature::Error).unwrap();
    for (b, &r) in rows.iter().enumerate() {
        let m = batch.sample_missing(b);
        assert!(!m[0]);
        for j in 0..4 {
            assert_eq!(m[j + 1], data.cell(r, j).is_missing());
        }
    }
}

#[test]
fn registration_is_keyed_by_name() {
    let data = mixed_data(4, 3);
    let mut state = ModelState::new(small_config(Activation::Relu, false), 1).unwrap();
    let first = data.view(&[0, 1]).unwrap();
    let second = data.view(&[1, 2]).unwrap();
    for j in 0..2 {
        state.register_feature(first.feature(j)).unwrap();
    }
    let shared = state.feature_params("b").unwrap();
    let count = state.params.len();
    for j in 0..2 {
        state.register_feature(second.feature(j)).unwrap();
    }
    assert_eq!(state.feature_params("b").unwrap(), shared);
    assert_eq!(state.params.len(), count + 2);
    assert!(matches!(
        tokenize(&data.full_view(), &state, &[0], UnseenFeature::Error),
        Err(Error::UnregisteredFeature(name)) if name == "d"
    ));
    let batch = tokenize(
        &data.full_view(),
        &state,
        &[0],
        UnseenFeature::TreatAsMissing,
    )
    .unwrap();
    assert!(batch.missing[4]);
}

#[test]
fn categorical_table_grows() {
    let mut state = ModelState::new(small_config(Activation::Relu, false), 1).unwrap();
    state
        .register_feature(&FeatureSchema::categorical("b", ["p", "q"]))
        .unwrap();
    let [_, table] = state.feature_params("b").unwrap();
    let before = state.params.data(table).to_vec();
    state
        .register_feature(&FeatureSchema::categorical("b", ["p", "q", "r"]))
        .unwrap();
    assert_eq!(state.params.get(table).rows, 3);
    assert_eq!(&state.params.data(table)[..16], &before[..]);
    assert!(state
        .register_feature(&FeatureSchema::numerical("b"))
        .is_err());
}

#[test]
fn rejects_bad_configs() {
    let bad_heads = ModelConfig {
        num_heads: 3,
        ..small_config(Activation::Relu, false)
    };
    assert!(bad_heads.validate().is_err());
    let bad_dropout = ModelConfig {
        dropout: 1.0,
        ..small_config(Activation::Relu, false)
    };
    assert!(bad_dropout.validate().is_err());
    ModelConfig::large(2).validate().unwrap();
    ModelConfig::desk(2).validate().unwrap();
}
