use std::collections::BTreeSet;

use ifial_core::baselines::{fit_method, run_method, FittedMethod, KPolicy, Method};
use ifial_core::data::{Cell, Dataset, FeatureSchema};
use ifial_core::eval::{scenario_data, stratified_folds, training_rows, Scenario};
use ifial_core::model::ModelState;
use ifial_core::partition::{partition_count, partition_view, PartitionPlan};
use ifial_core::simulate::Mechanism;
use ifial_core::synthetic::two_gaussians;
use ifial_core::train::{
    mean_loss, predict, train_ifial, train_ifial_observed, validation_split, NoObserver,
    TrainConfig, TrainObserver,
};
use ifial_core::{compute_stats, ModelConfig};

fn tiny_model() -> ModelConfig {
    ModelConfig {
        model_dim: 16,
        num_layers: 2,
        num_heads: 2,
        ffn_dim: 32,
        dropout: 0.1,
        ..ModelConfig::desk(2)
    }
}

fn quick_train(seed: u64) -> TrainConfig {
    TrainConfig {
        max_epochs: 40,
        patience: 4,
        batch_size: 16,
        learning_rate: 3e-3,
        seed,
        ..TrainConfig::desk()
    }
}

fn missing_data(seed: u64) -> Dataset {
    let complete = two_gaussians(150, 6, 3, 2.0, seed).unwrap();
    scenario_data(
        &complete,
        Scenario::Injected {
            mechanism: Mechanism::Mcar,
            rate: 0.2,
        },
        seed,
    )
    .unwrap()
}

#[derive(Default)]
struct Recorder {
    windows: Vec<Vec<usize>>,
    tokenized: Vec<(usize, Vec<usize>, Vec<usize>)>,
    states: Vec<ModelState>,
}

impl TrainObserver for Recorder {
    fn session_start(&mut self, _window: usize, columns: &[usize]) {
        self.windows.push(columns.to_vec());
    }
    fn tokenized(&mut self, window: usize, rows: &[usize], columns: &[usize]) {
        self.tokenized
            .push((window, rows.to_vec(), columns.to_vec()));
    }
    fn session_end(&mut self, _window: usize, state: &ModelState) {
        self.states.push(state.clone());
    }
}

#[test]
fn sessions_follow_the_plan() {
    let data = missing_data(1);
    let rows: Vec<usize> = (0..120).collect();
    let stats = compute_stats(&data, &rows).unwrap();
    let plan = PartitionPlan::from_rates(&stats.missing_rates(), 3).unwrap();
    let mut rec = Recorder::default();
    let (_, logs) = train_ifial_observed(
        &data,
        &rows,
        &plan,
        &tiny_model(),
        &quick_train(2),
        &mut rec,
    )
    .unwrap();
    assert_eq!(logs.len(), partition_count(6, 3));
    assert_eq!(rec.windows, plan.windows);
    let allowed: BTreeSet<usize> = rows.iter().copied().collect();
    for (window, batch_rows, columns) in &rec.tokenized {
        assert_eq!(columns, &plan.windows[*window]);
        assert!(batch_rows.iter().all(|r| allowed.contains(r)));
    }
    for log in &logs {
        assert!(log.epochs_run <= 40);
        if log.early_stopped {
            assert_eq!(log.epochs_run, log.best_epoch + 4);
        }
    }
    assert!(logs.iter().any(|l| l.early_stopped));
}

#[test]
fn features_outside_the_window_are_untouched() {
    let data = missing_data(3);
    let rows: Vec<usize> = (0..150).collect();
    let stats = compute_stats(&data, &rows).unwrap();
    let plan = PartitionPlan::from_rates(&stats.missing_rates(), 2).unwrap();
    assert!(plan.count() >= 3);
    let mut rec = Recorder::default();
    train_ifial_observed(
        &data,
        &rows,
        &plan,
        &tiny_model(),
        &quick_train(4),
        &mut rec,
    )
    .unwrap();
    for i in 1..plan.count() {
        let (before, after) = (&rec.states[i - 1], &rec.states[i]);
        for f in &plan.windows[i - 1] {
            if plan.windows[i].contains(f) {
                continue;
            }
            let name = &data.feature(*f).name;
            for id in before.feature_params(name).unwrap() {
                assert_eq!(before.params.data(id), after.params.data(id), "{name}");
            }
        }
        // Shared features resolve to the same parameter storage.
        for f in plan.windows[i - 1]
            .iter()
            .filter(|f| plan.windows[i].contains(f))
        {
            let name = &data.feature(*f).name;
            assert_eq!(before.feature_params(name), after.feature_params(name));
        }
    }
}

#[test]
fn best_parameters_are_restored() {
    let data = missing_data(5);
    let rows: Vec<usize> = (0..150).collect();
    let tcfg = quick_train(6);
    let stats = compute_stats(&data, &rows).unwrap();
    let plan = PartitionPlan::from_rates(&stats.missing_rates(), 6).unwrap();
    let (state, logs) = train_ifial(&data, &rows, &plan, &tiny_model(), &tcfg).unwrap();
    let (_, val) = validation_split(&data, &rows, tcfg.val_fraction, tcfg.seed).unwrap();
    let view = partition_view(&data, &plan, 0).unwrap();
    assert_eq!(
        mean_loss(&view, &state, &val).unwrap(),
        logs[0].best_val_loss
    );
    assert!(logs[0].best_epoch < logs[0].epochs_run);
}

#[test]
fn identical_seeds_give_identical_models() {
    let data = missing_data(7);
    let rows: Vec<usize> = (0..100).collect();
    let run = || {
        fit_method(
            Method::Ifial { k: KPolicy::HalfD },
            &data,
            &rows,
            &tiny_model(),
            &quick_train(8),
            &mut NoObserver,
        )
        .unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn predictions_are_distributions() {
    let data = missing_data(9);
    let train: Vec<usize> = (0..120).collect();
    let test: Vec<usize> = (120..150).collect();
    let p = run_method(
        Method::AmFtt,
        &data,
        &train,
        &test,
        &tiny_model(),
        &quick_train(1),
    )
    .unwrap();
    assert_eq!(p.rows, 30);
    for i in 0..30 {
        let s: f64 = p.row(i).iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(p.row(i).iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
    assert!(run_method(
        Method::AmFtt,
        &data,
        &train,
        &[0, 130],
        &tiny_model(),
        &quick_train(1)
    )
    .is_err());
}

#[test]
fn method_equivalences() {
    let complete = two_gaussians(120, 5, 3, 2.0, 2).unwrap();
    let rows: Vec<usize> = (0..100).collect();
    let fit = |m: Method, data: &Dataset| -> FittedMethod {
        fit_method(
            m,
            data,
            &rows,
            &tiny_model(),
            &quick_train(3),
            &mut NoObserver,
        )
        .unwrap()
    };
    let am = fit(Method::AmFtt, &complete);
    let median = fit(Method::MedianFtt, &complete);
    assert_eq!(am.state, median.state);
    let test: Vec<usize> = (100..120).collect();
    assert_eq!(
        am.predict(&complete, &test).unwrap(),
        median.predict(&complete, &test).unwrap()
    );

    let data = missing_data(4);
    let am = fit(Method::AmFtt, &data);
    let full = fit(
        Method::Ifial {
            k: KPolicy::Explicit(6),
        },
        &data,
    );
    assert_eq!(am.state, full.state);
    assert_eq!(am.sessions.len(), 1);

    let half = fit(Method::Ifial { k: KPolicy::HalfD }, &data);
    assert_eq!(half.sessions.len(), partition_count(6, 3));
}

#[test]
fn median_baseline_sees_no_missing_cells() {
    let data = missing_data(6);
    let rows: Vec<usize> = (0..150).collect();
    let mut rec = Recorder::default();
    let fitted = fit_method(
        Method::MedianFtt,
        &data,
        &rows,
        &tiny_model(),
        &quick_train(2),
        &mut rec,
    )
    .unwrap();
    let prepared = fitted.preprocessing.apply(&data).unwrap();
    assert_eq!(prepared.total_missing(), 0);
    assert_eq!(fitted.plan.count(), 1);
}

#[test]
fn unseen_features_are_treated_as_missing() {
    let data = missing_data(8);
    let rows: Vec<usize> = (0..150).collect();
    let plan = PartitionPlan::from_rates(&[0.0; 6], 6).unwrap();
    let (state, _) = train_ifial(&data, &rows, &plan, &tiny_model(), &quick_train(1)).unwrap();
    // Same rows with an extra column the model never saw.
    let mut features = data.features().to_vec();
    features.push(FeatureSchema::numerical("extra"));
    let mut cells = Vec::new();
    for r in 0..data.n() {
        cells.extend_from_slice(data.row(r));
        cells.push(Cell::Num(r as f64));
    }
    let wider = Dataset::new(
        features,
        data.target().clone(),
        7,
        cells,
        data.labels().to_vec(),
    )
    .unwrap();
    let a = predict(&state, &data, &rows).unwrap();
    let b = predict(&state, &wider, &rows).unwrap();
    assert_eq!(a, b);
}

#[test]
fn folds_never_share_rows_with_training() {
    let data = missing_data(2);
    let folds = stratified_folds(data.labels(), 5, 3).unwrap();
    for f in 0..5 {
        let train: BTreeSet<usize> = training_rows(&folds, f).into_iter().collect();
        assert!(folds[f].iter().all(|r| !train.contains(r)));
        assert_eq!(train.len() + folds[f].len(), data.n());
    }
}
