//! Executes an experiment grid: method x scenario x seed x fold.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use ifial_core::baselines::{fit_method, Method};
use ifial_core::data::Dataset;
use ifial_core::eval::{
    auc_multiclass, fold_seed, scenario_data, stratified_folds, training_rows, FoldResult, Scenario,
};
use ifial_core::model::ModelState;
use ifial_core::synthetic::two_gaussians;
use ifial_core::train::{NoObserver, SessionLog, TrainObserver};
use ifial_core::TrainConfig;

use crate::checkpoint::Checkpoint;
use crate::config::ExperimentConfig;
use crate::csv_io::load_csv;
use crate::error::{CliError, Result};
use crate::manifest::{sha256_file, sha256_hex, Manifest, MANIFEST_FILE};
use crate::results::{read_results, write_reports, write_results, RESULTS_FILE};

pub const DETERMINISTIC_ENV: &str = "IFIAL_DETERMINISTIC";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub jobs: usize,
    pub resume: bool,
    pub deterministic: bool,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

impl RunOptions {
    /// Reads `IFIAL_DETERMINISTIC`; when set to `1` the run uses one worker.
    pub fn from_env(mut self) -> Self {
        if std::env::var(DETERMINISTIC_ENV).is_ok_and(|v| v == "1") {
            self.deterministic = true;
        }
        if self.deterministic {
            self.jobs = 1;
        }
        self.jobs = self.jobs.max(1);
        self
    }
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    match (
        &cfg.dataset.synthetic,
        &cfg.dataset.path,
        &cfg.dataset.schema,
    ) {
        (Some(s), _, _) => Ok(two_gaussians(
            s.n,
            s.d,
            s.informative,
            s.separation,
            s.seed,
        )?),
        (None, Some(path), Some(schema)) => load_csv(path, schema),
        _ => Err(CliError::Config("dataset: no source".into())),
    }
}

#[derive(Debug, Clone, Copy)]
struct Task {
    method: Method,
    scenario: usize,
    seed: usize,
    fold: usize,
}

type Key = (String, String, u64, u64, usize);

fn key_of(r: &FoldResult) -> Key {
    (
        r.method.clone(),
        r.mechanism.clone(),
        r.rate.to_bits(),
        r.seed,
        r.fold,
    )
}

fn file_stem(r: &FoldResult) -> String {
    format!(
        "{}__{}__r{}__s{}__f{}",
        r.method, r.mechanism, r.rate, r.seed, r.fold
    )
}

struct Clock(Instant);

impl TrainObserver for Clock {
    fn now(&mut self) -> Option<f64> {
        Some(self.0.elapsed().as_secs_f64())
    }
}

#[derive(Debug)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub results: Vec<FoldResult>,
    pub executed: usize,
    pub skipped: usize,
}

pub fn run(cfg: &ExperimentConfig, config_bytes: &[u8], opts: &RunOptions) -> Result<RunSummary> {
    let opts = opts.clone().from_env();
    let out_dir = opts
        .output_dir
        .clone()
        .unwrap_or_else(|| cfg.output_dir.clone());
    let seeds: Vec<u64> = match opts.seed {
        Some(s) => vec![s],
        None => cfg.seeds.clone(),
    };
    let data = load_dataset(cfg)?;
    let methods = cfg.methods()?;
    let scenarios = cfg.scenarios();
    if data.total_missing() > 0 && scenarios.iter().any(|s| !matches!(s, Scenario::Natural)) {
        return Err(CliError::Data(
            "dataset already has missing cells; only the `natural` mechanism applies".into(),
        ));
    }
    let mcfg = cfg.model.resolve(data.class_count());
    let tcfg: TrainConfig = cfg.train.resolve();

    let results_path = out_dir.join(RESULTS_FILE);
    let mut done: BTreeMap<Key, FoldResult> = BTreeMap::new();
    if out_dir.join(MANIFEST_FILE).exists() || results_path.exists() {
        if !opts.resume {
            return Err(CliError::Config(format!(
                "{} already holds results; pass --resume to continue it",
                out_dir.display()
            )));
        }
        if results_path.exists() {
            for r in read_results(&results_path)? {
                done.insert(key_of(&r), r);
            }
        }
    }
    let ckpt_dir = out_dir.join("checkpoints");
    let session_dir = out_dir.join("sessions");
    for dir in [&out_dir, &ckpt_dir, &session_dir] {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }

    // Missingness is injected once per (scenario, seed), before folding.
    let mut prepared = Vec::with_capacity(scenarios.len() * seeds.len());
    for &scenario in &scenarios {
        for &seed in &seeds {
            let d = scenario_data(&data, scenario, seed)?;
            let folds = stratified_folds(d.labels(), cfg.folds, seed)?;
            prepared.push((d, folds));
        }
    }
    let mut tasks = Vec::new();
    for &method in &methods {
        for scenario in 0..scenarios.len() {
            for seed in 0..seeds.len() {
                for fold in 0..cfg.folds {
                    tasks.push(Task {
                        method,
                        scenario,
                        seed,
                        fold,
                    });
                }
            }
        }
    }
    let describe = |t: &Task| -> FoldResult {
        let sc = scenarios[t.scenario];
        let (d, _) = &prepared[t.scenario * seeds.len() + t.seed];
        FoldResult {
            dataset: cfg.dataset.id.clone(),
            method: t.method.label(),
            mechanism: sc.mechanism_label().to_string(),
            rate: sc.rate(d),
            fold: t.fold,
            seed: seeds[t.seed],
            auc: f64::NAN,
        }
    };
    let pending: Vec<usize> = (0..tasks.len())
        .filter(|&i| !done.contains_key(&key_of(&describe(&tasks[i]))))
        .collect();
    let skipped = tasks.len() - pending.len();
    if skipped > 0 {
        log::info!(
            "resuming: {skipped} of {} grid cells already done",
            tasks.len()
        );
    }

    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let error: Mutex<Option<CliError>> = Mutex::new(None);
    let finished: Mutex<Vec<FoldResult>> = Mutex::new(Vec::new());
    let append = Mutex::new(());
    let save_checkpoints = cfg.save_checkpoints;
    let start = Instant::now();

    let run_task = |t: &Task| -> Result<FoldResult> {
        let mut record = describe(t);
        let (d, folds) = &prepared[t.scenario * seeds.len() + t.seed];
        let test = &folds[t.fold];
        let train = training_rows(folds, t.fold);
        let tcfg = TrainConfig {
            seed: fold_seed(record.seed, t.fold),
            ..tcfg.clone()
        };
        let mut clock = Clock(start);
        let mut silent = NoObserver;
        let observer: &mut dyn TrainObserver = if opts.deterministic {
            &mut silent
        } else {
            &mut clock
        };
        let fitted = fit_method(t.method, d, &train, &mcfg, &tcfg, observer)?;
        let probs = fitted.predict(d, test)?;
        let labels: Vec<usize> = test.iter().map(|&r| d.labels()[r]).collect();
        record.auc = auc_multiclass(&probs, &labels)?;
        let stem = file_stem(&record);
        if save_checkpoints {
            Checkpoint::new(&fitted, &d.target().categories)
                .save(&ckpt_dir.join(format!("{stem}.json")))?;
        }
        write_sessions(&fitted.sessions, &session_dir.join(format!("{stem}.json")))?;
        let _guard = append.lock().unwrap();
        append_result(&results_path, &record)?;
        log::info!("{stem}: auc {:.4}", record.auc);
        Ok(record)
    };

    let worker = || {
        while !failed.load(Ordering::SeqCst) {
            let i = next.fetch_add(1, Ordering::SeqCst);
            let Some(&task) = pending.get(i).map(|&p| &tasks[p]) else {
                break;
            };
            match run_task(&task) {
                Ok(r) => finished.lock().unwrap().push(r),
                Err(e) => {
                    failed.store(true, Ordering::SeqCst);
                    error.lock().unwrap().get_or_insert(e);
                }
            }
        }
    };
    if opts.jobs == 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..opts.jobs {
                s.spawn(worker);
            }
        });
    }
    if let Some(e) = error.into_inner().unwrap() {
        return Err(e);
    }
    let executed = pending.len();
    for r in finished.into_inner().unwrap() {
        done.insert(key_of(&r), r);
    }

    // Grid order, independent of completion order.
    let results: Vec<FoldResult> = tasks
        .iter()
        .filter_map(|t| done.get(&key_of(&describe(t))).cloned())
        .collect();
    write_results(&results, &results_path)?;
    let reports = write_reports(&results, &out_dir)?;

    let mut files = BTreeMap::new();
    let mut cover = |path: &Path| -> Result<()> {
        let rel = path
            .strip_prefix(&out_dir)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/");
        files.insert(rel, sha256_file(path)?);
        Ok(())
    };
    cover(&results_path)?;
    for p in &reports {
        cover(p)?;
    }
    for dir in [&ckpt_dir, &session_dir] {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| CliError::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        entries.sort();
        for p in entries {
            cover(&p)?;
        }
    }
    Manifest {
        version: 1,
        config_sha256: sha256_hex(config_bytes),
        seeds,
        deterministic: opts.deterministic,
        files,
    }
    .save(&out_dir.join(MANIFEST_FILE))?;
    Ok(RunSummary {
        output_dir: out_dir,
        results,
        executed,
        skipped,
    })
}

fn append_result(path: &Path, record: &FoldResult) -> Result<()> {
    let exists = path.exists();
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| CliError::io(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(!exists)
        .from_writer(file);
    w.serialize(record)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_sessions(sessions: &[SessionLog], path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(sessions).expect("session log serializes");
    let mut f = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(text.as_bytes())
        .and_then(|_| f.write_all(b"\n"))
        .map_err(|e| CliError::io(path, e))
}

/// Trains one method on every row of the dataset as loaded.
pub fn train_all_rows(
    cfg: &ExperimentConfig,
    method: Method,
    seed: u64,
) -> Result<(ifial_core::baselines::FittedMethod, Dataset)> {
    let data = load_dataset(cfg)?;
    let mcfg = cfg.model.resolve(data.class_count());
    let tcfg = TrainConfig {
        seed,
        ..cfg.train.resolve()
    };
    let rows: Vec<usize> = (0..data.n()).collect();
    let mut clock = Clock(Instant::now());
    let fitted = fit_method(method, &data, &rows, &mcfg, &tcfg, &mut clock)?;
    Ok((fitted, data))
}

/// Parameter count of a trained state, for logging.
pub fn describe_state(state: &ModelState) -> String {
    format!(
        "{} features, {} parameters",
        state.features().len(),
        state.num_parameters()
    )
}
