//! Incremental training over partition windows and full-feature inference.
//!
//! One [`ModelState`] is trained session by session, one session per
//! window, in plan order. Feature tables are keyed by name, so features
//! shared by neighbouring windows carry their parameters forward. Each
//! session runs Adam with early stopping on a validation split that is
//! carved once from the training rows and reused by every session.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DatasetView};
use crate::model::{forward, loss_and_grad, tokenize, ModelConfig, ModelState, UnseenFeature};
use crate::optim::Adam;
use crate::partition::{partition_view, PartitionPlan};
use crate::{seed, Error, Result};

/// Rows per forward pass when scoring without gradients.
const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpochBudget {
    /// Every session may run `max_epochs`.
    FullBudget,
    /// Sessions share `max_epochs`: each gets `max(1, max_epochs / P)`.
    Divided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub val_fraction: f64,
    pub seed: u64,
    pub epochs_per_session: EpochBudget,
    /// Clear Adam moments at every session boundary.
    pub reset_optimizer: bool,
}

impl TrainConfig {
    pub fn large() -> Self {
        Self {
            learning_rate: 1e-5,
            weight_decay: 0.0,
            max_epochs: 300,
            batch_size: 128,
            patience: 50,
            val_fraction: 0.15,
            seed: 0,
            epochs_per_session: EpochBudget::FullBudget,
            reset_optimizer: true,
        }
    }

    pub fn desk() -> Self {
        Self {
            learning_rate: 1e-3,
            max_epochs: 100,
            batch_size: 32,
            patience: 15,
            ..Self::large()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(Error::Config("weight_decay must be non-negative".into()));
        }
        if self.max_epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "max_epochs and batch_size must be positive".into(),
            ));
        }
        if self.patience >= self.max_epochs {
            return Err(Error::Config(format!(
                "patience {} must be below max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 0.5) {
            return Err(Error::Config(format!(
                "val_fraction {} outside (0, 0.5)",
                self.val_fraction
            )));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub window: usize,
    pub features: Vec<String>,
    pub epochs_run: usize,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub early_stopped: bool,
    pub wall_time_secs: Option<f64>,
}

/// Hooks into the training loop. Every method has a no-op default.
pub trait TrainObserver {
    /// Seconds from an arbitrary origin, used for session wall time.
    fn now(&mut self) -> Option<f64> {
        None
    }
    fn session_start(&mut self, _window: usize, _columns: &[usize]) {}
    /// Called for every tokenized batch with its dataset rows and columns.
    fn tokenized(&mut self, _window: usize, _rows: &[usize], _columns: &[usize]) {}
    /// Called after the best parameters of the session are restored.
    fn session_end(&mut self, _window: usize, _state: &ModelState) {}
}

pub struct NoObserver;

impl TrainObserver for NoObserver {}

/// Splits `rows` into (train, validation), stratified by label. Falls back
/// to a plain random split when some class would get no validation row.
pub fn validation_split(
    data: &Dataset,
    rows: &[usize],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut rng = seed::rng(seed, seed::TAG_SPLIT);
    let labels = data.labels();
    let mut by_class: Vec<Vec<usize>> = alloc::vec![Vec::new(); data.class_count()];
    for &r in rows {
        if r >= data.n() {
            return Err(Error::RowOutOfRange {
                row: r,
                n: data.n(),
            });
        }
        by_class[labels[r]].push(r);
    }
    let take = |count: usize| libm::round(fraction * count as f64) as usize;
    let stratifiable = by_class
        .iter()
        .filter(|c| !c.is_empty())
        .all(|c| take(c.len()) >= 1 && take(c.len()) < c.len());
    let (mut train, mut val) = (Vec::new(), Vec::new());
    if stratifiable {
        for class in &mut by_class {
            class.shuffle(&mut rng);
            let v = take(class.len());
            val.extend_from_slice(&class[..v]);
            train.extend_from_slice(&class[v..]);
        }
    } else {
        log::warn!("a class is too small to stratify the validation split; splitting at random");
        let mut all = rows.to_vec();
        all.shuffle(&mut rng);
        let v = take(all.len()).max(1);
        if v >= all.len() {
            return Err(Error::Data(format!(
                "{} training rows cannot be split",
                all.len()
            )));
        }
        val.extend_from_slice(&all[..v]);
        train.extend_from_slice(&all[v..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

/// Trains one shared model over every window of `plan`, using only `rows`.
pub fn train_ifial(
    data: &Dataset,
    rows: &[usize],
    plan: &PartitionPlan,
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
) -> Result<(ModelState, Vec<SessionLog>)> {
    train_ifial_observed(data, rows, plan, mcfg, tcfg, &mut NoObserver)
}

pub fn train_ifial_observed(
    data: &Dataset,
    rows: &[usize],
    plan: &PartitionPlan,
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<(ModelState, Vec<SessionLog>)> {
    tcfg.validate()?;
    if mcfg.class_count != data.class_count() {
        return Err(Error::Config(format!(
            "model has {} classes, data has {}",
            mcfg.class_count,
            data.class_count()
        )));
    }
    let (train_rows, val_rows) = validation_split(data, rows, tcfg.val_fraction, tcfg.seed)?;
    let mut state = ModelState::new(mcfg.clone(), seed::derive(tcfg.seed, seed::TAG_INIT))?;
    let mut adam = Adam::new(tcfg.learning_rate, tcfg.weight_decay);
    let mut shuffle_rng = seed::rng(tcfg.seed, seed::TAG_SHUFFLE);
    let mut dropout_rng = seed::rng(tcfg.seed, seed::TAG_DROPOUT);
    let epochs = match tcfg.epochs_per_session {
        EpochBudget::FullBudget => tcfg.max_epochs,
        EpochBudget::Divided => (tcfg.max_epochs / plan.count()).max(1),
    };

    let mut logs = Vec::with_capacity(plan.count());
    for window in 0..plan.count() {
        let view = partition_view(data, plan, window)?;
        for j in 0..view.d() {
            state.register_feature(view.feature(j))?;
        }
        if tcfg.reset_optimizer {
            adam.reset();
        }
        observer.session_start(window, view.columns());
        let started = observer.now();

        let mut order = train_rows.clone();
        let mut best_loss = f64::INFINITY;
        let mut best_epoch = 0;
        let mut best_params = state.params.clone();
        let mut epochs_run = 0;
        let mut early_stopped = false;
        for epoch in 1..=epochs {
            order.shuffle(&mut shuffle_rng);
            for batch_rows in order.chunks(tcfg.batch_size) {
                observer.tokenized(window, batch_rows, view.columns());
                let batch = tokenize(&view, &state, batch_rows, UnseenFeature::Error)?;
                let labels: Vec<usize> = batch_rows.iter().map(|&r| data.labels()[r]).collect();
                let (_, grads) = loss_and_grad(&batch, &labels, &state, true, &mut dropout_rng)?;
                adam.step(&mut state.params, &grads);
            }
            if !state.params.all_finite() {
                return Err(Error::NonFinite(format!("parameters after epoch {epoch}")));
            }
            observer.tokenized(window, &val_rows, view.columns());
            let val_loss = mean_loss(&view, &state, &val_rows)?;
            epochs_run = epoch;
            if val_loss < best_loss {
                best_loss = val_loss;
                best_epoch = epoch;
                best_params.clone_from(&state.params);
            } else if epoch - best_epoch >= tcfg.patience {
                early_stopped = true;
                break;
            }
        }
        state.params = best_params;
        observer.session_end(window, &state);
        let wall_time_secs = match (started, observer.now()) {
            (Some(a), Some(b)) => Some(b - a),
            _ => None,
        };
        log::debug!(
            "window {window}: {epochs_run} epochs, best {best_epoch} (val loss {best_loss:.5})"
        );
        logs.push(SessionLog {
            window,
            features: (0..view.d())
                .map(|j| view.feature(j).name.clone())
                .collect(),
            epochs_run,
            best_epoch,
            best_val_loss: best_loss,
            early_stopped,
            wall_time_secs,
        });
    }
    Ok((state, logs))
}

/// Mean cross-entropy of `rows` without dropout.
pub fn mean_loss(view: &DatasetView<'_>, state: &ModelState, rows: &[usize]) -> Result<f64> {
    let c = state.config.class_count;
    let labels = view.labels();
    let mut total = 0.0;
    let mut rng = seed::rng(0, seed::TAG_DROPOUT);
    for chunk in rows.chunks(EVAL_CHUNK) {
        let batch = tokenize(view, state, chunk, UnseenFeature::Error)?;
        let probs = forward(&batch, state, false, &mut rng)?.probabilities(c);
        for (b, &r) in chunk.iter().enumerate() {
            total -= libm::log(probs[b * c + labels[r]].max(f64::MIN_POSITIVE));
        }
    }
    let loss = total / rows.len() as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite("validation loss".into()));
    }
    Ok(loss)
}

/// Row-major `rows x class_count` class probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probabilities {
    pub rows: usize,
    pub class_count: usize,
    pub values: Vec<f64>,
}

impl Probabilities {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.class_count..(i + 1) * self.class_count]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.values[i * self.class_count + c])
            .collect()
    }
}

/// Class probabilities for `rows` using every feature of `data`. Features
/// the model never trained on are fed as missing tokens.
pub fn predict(state: &ModelState, data: &Dataset, rows: &[usize]) -> Result<Probabilities> {
    for f in data.features() {
        if state.feature_id(&f.name).is_none() {
            log::warn!(
                "feature `{}` was not seen in training; treating it as missing",
                f.name
            );
        }
    }
    let view = data.full_view();
    let c = state.config.class_count;
    let mut values = Vec::with_capacity(rows.len() * c);
    let mut rng = seed::rng(0, seed::TAG_DROPOUT);
    for chunk in rows.chunks(EVAL_CHUNK) {
        let batch = tokenize(&view, state, chunk, UnseenFeature::TreatAsMissing)?;
        values.extend(forward(&batch, state, false, &mut rng)?.probabilities(c));
    }
    Ok(Probabilities {
        rows: rows.len(),
        class_count: c,
        values,
    })
}
