//! Command-line interface.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ifial_core::baselines::Method;
use ifial_core::eval::{cost_curve, CostMode, CostModel};
use ifial_core::partition::half_d;
use ifial_core::simulate::{inject, Mechanism, MissingSpec};
use ifial_core::{compute_stats, PartitionPlan};

use crate::checkpoint::Checkpoint;
use crate::config::ExperimentConfig;
use crate::csv_io::{load_csv, write_csv_path, write_schema, SchemaFile};
use crate::error::{CliError, Result};
use crate::manifest::{Manifest, MANIFEST_FILE};
use crate::results::{read_results, write_cost_curve, write_reports};
use crate::runner::{self, RunOptions};

#[derive(Debug, Parser)]
#[command(
    name = "ifial",
    version,
    about = "Imputation-free tabular classification"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment grid from a JSON config.
    Run(RunArgs),
    /// Inject MCAR or MNAR missingness into a complete CSV.
    Simulate(SimulateArgs),
    /// Print the feature windows for a dataset as JSON.
    Partitions(PartitionArgs),
    /// Train one method on every row of the configured dataset.
    Train(TrainArgs),
    /// Score a CSV with a trained checkpoint.
    Predict(PredictArgs),
    /// Operation-count ratio of windowed to full-feature training.
    Cost(CostArgs),
    /// Rebuild rank, win and robustness reports from a results CSV.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Continue a partial run in an existing output directory.
    #[arg(long)]
    pub resume: bool,
    /// Run only this seed instead of the configured list.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MechanismArg {
    Mcar,
    Mnar,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long, value_enum)]
    pub mechanism: MechanismArg,
    #[arg(long)]
    pub rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the schema of the output (with full category lists).
    #[arg(long)]
    pub schema_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PartitionArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    /// Window size; half the feature count when omitted.
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    /// Session log path (JSON).
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Method label such as `ifial`, `ifial_k4`, `am_ftt`; defaults to the
    /// first configured method.
    #[arg(long)]
    pub method: Option<String>,
    /// Training seed; defaults to the first configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CostModeArg {
    ScoreOnly,
    AttentionOnly,
    Full,
}

#[derive(Debug, Args)]
pub struct CostArgs {
    #[arg(long)]
    pub d: usize,
    #[arg(long, default_value_t = 2)]
    pub kmin: usize,
    /// Defaults to `d`.
    #[arg(long)]
    pub kmax: Option<usize>,
    #[arg(long, value_enum, default_value_t = CostModeArg::Full)]
    pub mode: CostModeArg,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// `results.csv` written by `run`; its directory must hold the manifest.
    #[arg(long)]
    pub results: PathBuf,
    /// Report directory; defaults to the results directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Partitions(a) => cmd_partitions(a),
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Cost(a) => cmd_cost(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn read_config(path: &Path) -> Result<(ExperimentConfig, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok((ExperimentConfig::load(path)?, bytes))
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let (cfg, bytes) = read_config(&a.config)?;
    let opts = RunOptions {
        jobs: a.jobs,
        resume: a.resume,
        deterministic: false,
        seed: a.seed,
        output_dir: a.out,
    };
    let summary = runner::run(&cfg, &bytes, &opts)?;
    log::info!(
        "{} cells run, {} resumed; results in {}",
        summary.executed,
        summary.skipped,
        summary.output_dir.display()
    );
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let data = load_csv(&a.data, &a.schema)?;
    let mechanism = match a.mechanism {
        MechanismArg::Mcar => Mechanism::Mcar,
        MechanismArg::Mnar => Mechanism::Mnar,
    };
    let out = inject(&data, &MissingSpec::new(mechanism, a.rate, a.seed))?;
    write_csv_path(&out, &a.out)?;
    if let Some(p) = a.schema_out {
        write_schema(&SchemaFile::of(&out), &p)?;
    }
    Ok(())
}

fn cmd_partitions(a: PartitionArgs) -> Result<()> {
    let data = load_csv(&a.data, &a.schema)?;
    let rows: Vec<usize> = (0..data.n()).collect();
    let stats = compute_stats(&data, &rows)?;
    let k = a.k.unwrap_or_else(|| half_d(data.d()));
    let plan = PartitionPlan::from_rates(&stats.missing_rates(), k)?;
    let names: Vec<Vec<&str>> = plan
        .windows
        .iter()
        .map(|w| w.iter().map(|&j| data.feature(j).name.as_str()).collect())
        .collect();
    let value = serde_json::json!({
        "d": plan.d,
        "k": plan.k,
        "overlap": plan.overlap,
        "step": plan.step,
        "count": plan.count(),
        "sorted_features": plan.sorted_features.iter().map(|&j| &data.feature(j).name).collect::<Vec<_>>(),
        "sorted_rates": plan.sorted_rates,
        "windows": names,
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&value).expect("plan serializes")
    );
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let (cfg, _) = read_config(&a.config)?;
    let methods = cfg.methods()?;
    let method = match &a.method {
        Some(m) => m
            .parse::<Method>()
            .map_err(|_| CliError::Config(format!("--method: unknown method `{m}`")))?,
        None => methods[0],
    };
    let seed = a.seed.unwrap_or(cfg.seeds[0]);
    let (fitted, data) = runner::train_all_rows(&cfg, method, seed)?;
    Checkpoint::new(&fitted, &data.target().categories).save(&a.out)?;
    if let Some(p) = a.log {
        runner::write_sessions(&fitted.sessions, &p)?;
    }
    log::info!(
        "trained {}: {}",
        method,
        runner::describe_state(&fitted.state)
    );
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&a.model)?;
    let data = load_csv(&a.data, &a.schema)?;
    let rows: Vec<usize> = (0..data.n()).collect();
    let probs = ckpt.fitted.predict(&data, &rows)?;
    let names = ckpt.classes.iter().map(|c| format!("p_{c}"));
    let sink: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(std::fs::File::create(p).map_err(|e| CliError::io(p, e))?),
        None => Box::new(std::io::stdout().lock()),
    };
    let data_err = |e: csv::Error| CliError::Data(e.to_string());
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["row".to_string()];
    header.extend(names);
    w.write_record(&header).map_err(data_err)?;
    for (i, &r) in rows.iter().enumerate() {
        let mut rec = vec![r.to_string()];
        rec.extend(probs.row(i).iter().map(|p| p.to_string()));
        w.write_record(&rec).map_err(data_err)?;
    }
    w.flush().map_err(|e| CliError::Data(e.to_string()))
}

fn cmd_cost(a: CostArgs) -> Result<()> {
    let mode = match a.mode {
        CostModeArg::ScoreOnly => CostMode::ScoreOnly,
        CostModeArg::AttentionOnly => CostMode::AttentionOnly,
        CostModeArg::Full => CostMode::Full,
    };
    let points = cost_curve(a.d, a.kmin, a.kmax.unwrap_or(a.d), &CostModel::new(mode))?;
    match &a.out {
        Some(p) => write_cost_curve(&points, p),
        None => {
            let mut w = csv::Writer::from_writer(std::io::stdout().lock());
            for p in &points {
                w.serialize(p).map_err(|e| CliError::Data(e.to_string()))?;
            }
            w.flush().map_err(|e| CliError::Data(e.to_string()))
        }
    }
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let dir = a.results.parent().unwrap_or(Path::new(".")).to_path_buf();
    let dir = if dir.as_os_str().is_empty() {
        PathBuf::from(".")
    } else {
        dir
    };
    let manifest = Manifest::load(&dir.join(MANIFEST_FILE))?;
    let name = a
        .results
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| CliError::Config("--results: not a file path".into()))?;
    manifest.verify(&dir, name)?;
    let results = read_results(&a.results)?;
    let out = a.out.unwrap_or(dir);
    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    for p in write_reports(&results, &out)? {
        println!("{}", p.display());
    }
    Ok(())
}
