//! Command-line interface.
//!
//! Subcommands: `train`, `evaluate`, `suite`, `synthesize`, `sweep`,
//! `grad-check`. Exit codes: 0 success, 1 usage or config error,
//! 2 data or checkpoint error, 3 numeric failure. All outputs land
//! under the configured `out_dir`; setting the environment variable
//! named by [`OUT_ROOT_ENV`] reroots relative output directories.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use thiserror::Error;

use crate::config::{expand_grid, RunConfig, RunConfigError};
use crate::data::{self, DataError, Format, InteractionDataset, Split, SplitBoundaries, TrainingExample};
use crate::eval::{self, EvalError, ProtocolKind, ProtocolSpec, Side};
use crate::gradsuite;
use crate::metrics::{InstanceScores, MetricsError, MetricsReport};
use crate::model::checkpoint::{self, CheckpointError};
use crate::model::{Model, ModelError};
use crate::train::{TrainError, Trainer};

/// When set, relative `out_dir` values are joined under this root.
pub const OUT_ROOT_ENV: &str = "LSREC_OUT_ROOT";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{msg}")]
    Child { code: i32, msg: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Child { code, .. } => *code,
        }
    }
}

impl From<RunConfigError> for CliError {
    fn from(e: RunConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::NonFiniteScore(_) => CliError::Numeric(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Model(m) => m.into(),
            EvalError::Metrics(m) => m.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Model(m) => m.into(),
            TrainError::Eval(m) => m.into(),
            TrainError::Io(m) => m.into(),
            TrainError::Empty => CliError::Data(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "lsrec",
    version,
    about = "Sequential recommender that separates long- and short-term interests"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model, checkpointing the best validation epoch.
    Train(TrainArgs),
    /// Score a checkpoint on one split under an optional protocol.
    Evaluate(EvaluateArgs),
    /// Full evaluation battery into a directory of report cells.
    Suite(SuiteArgs),
    /// Generate a synthetic interaction corpus with driver labels.
    Synthesize(SynthesizeArgs),
    /// Expand a config grid and train every cell.
    Sweep(SweepArgs),
    /// Verify analytic gradients against central differences.
    GradCheck(GradCheckArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Config file of key=value lines; '#' starts a comment.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. --set lr=0.01. Repeatable; wins over the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (same as --set out_dir=...).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Continue from this checkpoint instead of a fresh initialization.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Checkpoint to score; defaults to <out_dir>/best.ckpt.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Split to score: train|val|test.
    #[arg(long)]
    split: Option<String>,
    /// History protocol: none|shuffle|truncate.
    #[arg(long)]
    protocol: Option<String>,
    /// Interest side: long|short|both.
    #[arg(long)]
    side: Option<String>,
    /// Force this fusion weight instead of the adaptive gate.
    #[arg(long)]
    fixed_alpha: Option<f64>,
    /// History length for the truncate protocol.
    #[arg(long)]
    truncate_k: Option<usize>,
    /// Seed for the shuffle protocol.
    #[arg(long)]
    protocol_seed: Option<u64>,
}

#[derive(Args)]
struct SuiteArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Checkpoint to analyze; defaults to <out_dir>/best.ckpt.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct SynthesizeArgs {
    #[command(flatten)]
    common: ConfigArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// Config file; values with '|' expand into a run grid.
    #[arg(long)]
    config: PathBuf,
    /// Extra overrides passed to every run.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct GradCheckArgs {
    /// Number of seeds to verify.
    #[arg(long, default_value_t = 10)]
    seeds: usize,
    /// First seed; the rest follow consecutively.
    #[arg(long, default_value_t = 0)]
    seed_base: u64,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    epsilon: f64,
    /// Maximum allowed relative error.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

/// Parse argv and run; returns the process exit code.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}

/// Testable entry point over explicit arguments.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<(), CliError> {
    match cmd {
        Cmd::Train(a) => cmd_train(a),
        Cmd::Evaluate(a) => cmd_evaluate(a),
        Cmd::Suite(a) => cmd_suite(a),
        Cmd::Synthesize(a) => cmd_synthesize(a),
        Cmd::Sweep(a) => cmd_sweep(a),
        Cmd::GradCheck(a) => cmd_grad_check(a),
    }
}

fn resolve_config(common: &ConfigArgs) -> Result<RunConfig, CliError> {
    let mut config = match &common.config {
        Some(p) => RunConfig::from_file(p).map_err(|e| match e {
            RunConfigError::Io(io) => {
                CliError::Usage(format!("config {}: {io}", p.display()))
            }
            other => other.into(),
        })?,
        None => RunConfig::default(),
    };
    config.apply_overrides(&common.set)?;
    if let Some(d) = &common.out_dir {
        config.out_dir = d.clone();
    }
    config.validate()?;
    Ok(config)
}

/// Final output directory: the configured one, rerooted under
/// [`OUT_ROOT_ENV`] when that is set and the path is relative.
pub fn resolve_out_dir(config: &RunConfig) -> PathBuf {
    match std::env::var_os(OUT_ROOT_ENV) {
        Some(root) if config.out_dir.is_relative() => PathBuf::from(root).join(&config.out_dir),
        _ => config.out_dir.clone(),
    }
}

fn boundaries(config: &RunConfig) -> SplitBoundaries {
    match (config.t_val, config.t_test) {
        (Some(t_val), Some(t_test)) => SplitBoundaries::Explicit { t_val, t_test },
        _ => SplitBoundaries::Quantiles {
            val: config.split_val,
            test: config.split_test,
        },
    }
}

fn load_corpus(config: &RunConfig) -> Result<InteractionDataset, CliError> {
    let path = config
        .data_path
        .as_ref()
        .ok_or_else(|| CliError::Usage("data_path is required for this command".to_string()))?;
    let records = data::load_interactions(path, Format::from_path(path), &config.behavior_filter)?;
    let records = if config.core_threshold > 1 {
        data::core_filter(records, config.core_threshold)
    } else {
        records
    };
    let drivers = match &config.drivers_path {
        Some(p) => data::load_drivers(p)?,
        None => Vec::new(),
    };
    Ok(data::build_dataset(&records, &drivers, &boundaries(config))?)
}

fn examples_for(
    config: &RunConfig,
    ds: &InteractionDataset,
    split: Split,
) -> Result<Vec<TrainingExample>, CliError> {
    let negatives = match split {
        Split::Train => config.train_negatives,
        _ => config.eval_negatives,
    };
    Ok(data::build_examples(
        ds,
        split,
        negatives,
        config.model.max_seq_len,
        config.seed,
    )?)
}

fn protocol_spec(config: &RunConfig) -> ProtocolSpec {
    match config.protocol {
        ProtocolKind::None => ProtocolSpec::none(),
        ProtocolKind::Shuffle => ProtocolSpec::shuffle(config.protocol_seed),
        ProtocolKind::Truncate => ProtocolSpec::truncate(config.truncate_k),
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn config_json(config: &RunConfig) -> serde_json::Value {
    serde_json::to_value(config.echo_map()).expect("string map serializes")
}

/// Open a log file: truncate with a header normally, append when
/// resuming into an existing log.
fn open_log(path: &Path, header: &str, append: bool) -> Result<BufWriter<fs::File>, CliError> {
    let existing = append && path.exists() && fs::metadata(path)?.len() > 0;
    let file = fs::OpenOptions::new()
        .create(true)
        .append(existing)
        .write(true)
        .truncate(!existing)
        .open(path)?;
    let mut w = BufWriter::new(file);
    if !existing {
        writeln!(w, "{header}")?;
    }
    Ok(w)
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let config = resolve_config(&args.common)?;
    let out = resolve_out_dir(&config);
    fs::create_dir_all(&out)?;
    let ds = load_corpus(&config)?;
    let train_ex = examples_for(&config, &ds, Split::Train)?;
    let val_ex = examples_for(&config, &ds, Split::Val)?;
    if config.epochs > 0 && val_ex.is_empty() {
        return Err(CliError::Data(
            "no validation examples; check split boundaries".to_string(),
        ));
    }
    fs::write(out.join("config.txt"), config.echo_text())?;

    let mut trainer = match &args.resume {
        Some(path) => {
            let loaded = checkpoint::load(path)?;
            checkpoint::expect_compatible(&loaded, &config.model, ds.n_users(), ds.n_items())?;
            if loaded.rng.seed != config.seed {
                return Err(CliError::Data(format!(
                    "checkpoint was trained with seed {}, config says {}",
                    loaded.rng.seed, config.seed
                )));
            }
            Trainer::resume(loaded, config.lr)
        }
        None => Trainer::new(
            &config.model,
            ds.n_users(),
            ds.n_items(),
            config.seed,
            config.lr,
        )?,
    };

    let resuming = args.resume.is_some();
    let mut steps_log = open_log(
        &out.join("steps.csv"),
        "epoch,step,examples,aligned,joint,rec,con",
        resuming,
    )?;
    let mut epochs_log = open_log(
        &out.join("epochs.csv"),
        "epoch,steps,seconds,val_auc,val_gauc,val_mrr,val_ndcg,best_gauc,bad_epochs,improved",
        resuming,
    )?;

    let mut stopped_early = false;
    while trainer.progress.epoch < config.epochs {
        let stats = trainer.run_epoch(&train_ex, config.batch_size, |r| {
            writeln!(
                steps_log,
                "{},{},{},{},{},{},{}",
                r.epoch, r.step, r.examples, r.aligned, r.joint, r.rec_mean, r.con_mean
            )?;
            Ok(())
        })?;
        let val = trainer.validate(&val_ex, config.ndcg_k)?;
        let improved = trainer.observe_metric(val.gauc);
        writeln!(
            epochs_log,
            "{},{},{},{},{},{},{},{},{},{}",
            stats.epoch,
            stats.steps,
            stats.seconds,
            val.auc,
            val.gauc,
            val.mrr,
            val.ndcg,
            trainer.progress.best_metric,
            trainer.progress.bad_epochs,
            improved
        )?;
        steps_log.flush()?;
        epochs_log.flush()?;
        if improved {
            save_trainer(&out.join("best.ckpt"), &trainer)?;
        }
        save_trainer(&out.join("last.ckpt"), &trainer)?;
        println!(
            "epoch {}: steps={} val_gauc={:.6}{}",
            stats.epoch,
            stats.steps,
            val.gauc,
            if improved { " (best)" } else { "" }
        );
        if trainer.should_stop(config.patience) {
            stopped_early = true;
            println!(
                "early stop: no improvement for {} epochs",
                trainer.progress.bad_epochs
            );
            break;
        }
    }
    steps_log.flush()?;
    epochs_log.flush()?;
    if !out.join("last.ckpt").exists() {
        save_trainer(&out.join("last.ckpt"), &trainer)?;
    }

    let best = trainer.progress.best_metric;
    write_json(
        &out.join("train_summary.json"),
        &json!({
            "config": config_json(&config),
            "epochs_run": trainer.progress.epoch,
            "steps": trainer.progress.step,
            "best_gauc": if best.is_finite() { Some(best) } else { None },
            "stopped_early": stopped_early,
        }),
    )?;
    println!(
        "done: {} epochs, {} steps, outputs in {}",
        trainer.progress.epoch,
        trainer.progress.step,
        out.display()
    );
    Ok(())
}

fn save_trainer(path: &Path, trainer: &Trainer) -> Result<(), CliError> {
    checkpoint::save(
        path,
        &trainer.model,
        &trainer.adam,
        &trainer.progress,
        &trainer.rng_cursor(),
    )?;
    Ok(())
}

fn load_model_for(
    config: &RunConfig,
    explicit: &Option<PathBuf>,
    out: &Path,
    ds: &InteractionDataset,
) -> Result<Model, CliError> {
    let path = match explicit {
        Some(p) => p.clone(),
        None => out.join("best.ckpt"),
    };
    let loaded = checkpoint::load(&path)
        .map_err(|e| CliError::Data(format!("checkpoint {}: {e}", path.display())))?;
    checkpoint::expect_compatible(&loaded, &config.model, ds.n_users(), ds.n_items())?;
    Ok(loaded.model)
}

fn fixed_alpha_report(
    model: &Model,
    examples: &[TrainingExample],
    alpha: f64,
    ndcg_k: usize,
) -> Result<MetricsReport, CliError> {
    let mut instances = Vec::with_capacity(examples.len());
    for e in examples {
        let scored = model.score_candidates(&e.view(), Some(alpha))?;
        instances.push(InstanceScores {
            user: e.user,
            scores: scored.scores,
            positive: 0,
        });
    }
    if instances.is_empty() {
        return Err(CliError::Data("no examples to evaluate".to_string()));
    }
    Ok(MetricsReport::from_instances(&instances, ndcg_k)?)
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let mut config = resolve_config(&args.common)?;
    // Flags go through the same typed parser as the file and win last.
    let flag_pairs: Vec<(&str, Option<String>)> = vec![
        ("eval_split", args.split.clone()),
        ("protocol", args.protocol.clone()),
        ("side", args.side.clone()),
        ("fixed_alpha", args.fixed_alpha.map(|v| v.to_string())),
        ("truncate_k", args.truncate_k.map(|v| v.to_string())),
        ("protocol_seed", args.protocol_seed.map(|v| v.to_string())),
    ];
    for (key, value) in flag_pairs {
        if let Some(v) = value {
            config.apply(key, &v)?;
        }
    }
    config.validate()?;

    let out = resolve_out_dir(&config);
    fs::create_dir_all(&out)?;
    let ds = load_corpus(&config)?;
    let model = load_model_for(&config, &args.checkpoint, &out, &ds)?;
    let examples = examples_for(&config, &ds, config.eval_split)?;
    if examples.is_empty() {
        return Err(CliError::Data(format!(
            "no {} examples; check split boundaries",
            config.eval_split.as_str()
        )));
    }
    let spec = protocol_spec(&config);
    let transformed: Vec<TrainingExample> = examples
        .iter()
        .map(|e| eval::apply_protocol(e, &spec))
        .collect();
    let report = match config.fixed_alpha {
        Some(alpha) => fixed_alpha_report(&model, &transformed, alpha, config.ndcg_k)?,
        None => eval::one_side_eval(&model, &transformed, config.side, config.ndcg_k)?,
    };

    let mut kv = String::new();
    let _ = writeln!(kv, "split={}", config.eval_split.as_str());
    let _ = writeln!(kv, "side={}", config.side.as_str());
    match config.fixed_alpha {
        Some(a) => {
            let _ = writeln!(kv, "fixed_alpha={a}");
        }
        None => {
            let _ = writeln!(kv, "fixed_alpha=adaptive");
        }
    }
    kv.push_str(&report.to_kv_text());
    kv.push('\n');
    kv.push_str("[config]\n");
    kv.push_str(&config.echo_text());
    fs::write(out.join("eval_report.txt"), &kv)?;
    write_json(
        &out.join("eval_report.json"),
        &json!({
            "config": config_json(&config),
            "split": config.eval_split.as_str(),
            "side": config.side.as_str(),
            "protocol": spec,
            "fixed_alpha": config.fixed_alpha,
            "report": report,
        }),
    )?;
    print!("{}", report.to_kv_text());
    println!("reports in {}", out.display());
    Ok(())
}

fn cmd_suite(args: SuiteArgs) -> Result<(), CliError> {
    let config = resolve_config(&args.common)?;
    let out = resolve_out_dir(&config);
    let suite_dir = out.join("suite");
    fs::create_dir_all(&suite_dir)?;
    let ds = load_corpus(&config)?;
    let model = load_model_for(&config, &args.checkpoint, &out, &ds)?;
    let examples = examples_for(&config, &ds, config.eval_split)?;
    if examples.is_empty() {
        return Err(CliError::Data(format!(
            "no {} examples; check split boundaries",
            config.eval_split.as_str()
        )));
    }
    let k = config.ndcg_k;
    let cfg_json = config_json(&config);
    let mut summary = String::new();
    let fmt_report = |r: &MetricsReport| {
        format!(
            "auc={:.6} gauc={:.6} mrr={:.6} ndcg@{}={:.6}",
            r.auc, r.gauc, r.mrr, r.ndcg_k, r.ndcg
        )
    };

    let sides = [Side::Long, Side::Short, Side::Both];
    let mut side_reports: BTreeMap<String, MetricsReport> = BTreeMap::new();
    for side in sides {
        let r = eval::one_side_eval(&model, &examples, side, k)?;
        let _ = writeln!(summary, "[sides] {} {}", side.as_str(), fmt_report(&r));
        side_reports.insert(side.as_str().to_string(), r);
    }
    write_json(
        &suite_dir.join("sides.json"),
        &json!({"config": cfg_json, "sides": side_reports}),
    )?;

    let shuffle_spec = ProtocolSpec::shuffle(config.protocol_seed);
    let mut shuffle_reports: BTreeMap<String, MetricsReport> = BTreeMap::new();
    for side in sides {
        let r = eval::evaluate(&model, &examples, side, &shuffle_spec, k)?;
        let drop = side_reports[side.as_str()].auc - r.auc;
        let _ = writeln!(
            summary,
            "[shuffle] {} {} auc_drop={:.6}",
            side.as_str(),
            fmt_report(&r),
            drop
        );
        shuffle_reports.insert(side.as_str().to_string(), r);
    }
    write_json(
        &suite_dir.join("shuffle.json"),
        &json!({"config": cfg_json, "protocol": shuffle_spec, "sides": shuffle_reports}),
    )?;

    let mut truncate_cells: BTreeMap<String, Vec<(usize, MetricsReport)>> = BTreeMap::new();
    for side in [Side::Long, Side::Both] {
        let curve = eval::truncate_curve(&model, &examples, &config.truncate_ks, side, k)?;
        for (len, r) in &curve {
            let _ = writeln!(
                summary,
                "[truncate] {} k={} {}",
                side.as_str(),
                len,
                fmt_report(r)
            );
        }
        truncate_cells.insert(side.as_str().to_string(), curve);
    }
    write_json(
        &suite_dir.join("truncate.json"),
        &json!({"config": cfg_json, "ks": config.truncate_ks, "curves": truncate_cells}),
    )?;

    let sweep = eval::fixed_alpha_sweep(&model, &examples, &config.sweep_alphas, k)?;
    for entry in &sweep {
        let label = entry
            .alpha
            .map(|a| a.to_string())
            .unwrap_or_else(|| "adaptive".to_string());
        let _ = writeln!(
            summary,
            "[alpha_sweep] alpha={} {}",
            label,
            fmt_report(&entry.report)
        );
    }
    write_json(
        &suite_dir.join("alpha_sweep.json"),
        &json!({"config": cfg_json, "entries": sweep}),
    )?;

    let stats = eval::alpha_stats(&model, &examples, &ds.behavior_tags)?;
    for (name, s) in &stats.by_driver_positive {
        let _ = writeln!(
            summary,
            "[alpha] driver={} mean={:.6} stddev={:.6} count={}",
            name, s.mean, s.stddev, s.count
        );
    }
    write_json(
        &suite_dir.join("alpha_stats.json"),
        &json!({"config": cfg_json, "stats": stats}),
    )?;

    let dis = eval::disentanglement_report(&model, &examples, &ds.behavior_tags, k)?;
    let _ = writeln!(
        summary,
        "[disentangle] cos_long_long={:.6} cos_long_short={:.6} cos_short_short={:.6} cos_short_long={:.6} proxy_examples={}",
        dis.cos_long_long, dis.cos_long_short, dis.cos_short_short, dis.cos_short_long, dis.proxy_examples
    );
    for (driver, r) in &dis.by_driver {
        let _ = writeln!(summary, "[by_driver] {} {}", driver, fmt_report(r));
    }
    write_json(
        &suite_dir.join("disentanglement.json"),
        &json!({"config": cfg_json, "report": dis}),
    )?;

    let mut table = summary.clone();
    table.push('\n');
    table.push_str("[config]\n");
    table.push_str(&config.echo_text());
    fs::write(suite_dir.join("summary.txt"), &table)?;
    print!("{summary}");
    println!("suite cells in {}", suite_dir.display());
    Ok(())
}

fn cmd_synthesize(args: SynthesizeArgs) -> Result<(), CliError> {
    let config = resolve_config(&args.common)?;
    let out = resolve_out_dir(&config);
    fs::create_dir_all(&out)?;
    let (records, labels) = data::synthesize(&config.gen, config.seed)?;
    data::write_interactions(&out.join("interactions.csv"), &records)?;
    data::write_drivers(&out.join("drivers.csv"), &labels)?;
    fs::write(out.join("config.txt"), config.echo_text())?;
    println!(
        "wrote {} interactions and {} driver labels for {} users in {}",
        records.len(),
        labels.len(),
        config.gen.n_users,
        out.display()
    );
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| CliError::Usage(format!("config {}: {e}", args.config.display())))?;
    let runs = expand_grid(&text)?;

    let mut base = RunConfig::default();
    for run in runs.first().iter() {
        for (key, value) in run.iter() {
            base.apply(key, value)?;
        }
    }
    base.apply_overrides(&args.set)?;
    let root = resolve_out_dir(&base);
    fs::create_dir_all(&root)?;

    let exe = std::env::current_exe()?;
    let mut rows = vec!["run,dir,exit_code,epochs_run,steps,best_gauc".to_string()];
    let mut first_failure: Option<i32> = None;
    for (i, run) in runs.iter().enumerate() {
        let dir = root.join(format!("run_{i:03}"));
        fs::create_dir_all(&dir)?;
        let mut cell = String::new();
        for (key, value) in run {
            let _ = writeln!(cell, "{key}={value}");
        }
        let _ = writeln!(cell, "out_dir={}", dir.display());
        let cell_path = dir.join("run_config.txt");
        fs::write(&cell_path, &cell)?;

        let mut child = std::process::Command::new(&exe);
        child.arg("train").arg("--config").arg(&cell_path);
        // out_dir is structural and swept keys belong to the grid, so
        // neither may be overridden from the forwarded sets
        for s in &args.set {
            let key = s.split_once('=').map(|(k, _)| k.trim()).unwrap_or("");
            if key == "out_dir" || run.contains_key(key) {
                continue;
            }
            child.arg("--set").arg(s);
        }
        let status = child.status()?;
        let code = status.code().unwrap_or(2);
        if code != 0 && first_failure.is_none() {
            first_failure = Some(code);
        }

        let summary_path = dir.join("train_summary.json");
        let (epochs_run, steps, best) = match fs::read_to_string(&summary_path) {
            Ok(s) => {
                let v: serde_json::Value = serde_json::from_str(&s)?;
                (
                    v["epochs_run"].as_u64().unwrap_or(0),
                    v["steps"].as_u64().unwrap_or(0),
                    v["best_gauc"].as_f64(),
                )
            }
            Err(_) => (0, 0, None),
        };
        let best_text = best.map(|b| format!("{b:.6}")).unwrap_or_default();
        rows.push(format!(
            "{i},{},{code},{epochs_run},{steps},{best_text}",
            dir.display()
        ));
        println!(
            "run {i}: exit={code} epochs={epochs_run} best_gauc={}",
            if best_text.is_empty() { "-" } else { &best_text }
        );
    }
    fs::write(root.join("sweep_summary.csv"), rows.join("\n") + "\n")?;
    println!("{} runs, summary in {}", runs.len(), root.display());
    match first_failure {
        None => Ok(()),
        Some(code) => Err(CliError::Child {
            code,
            msg: format!("at least one sweep run failed (first exit code {code})"),
        }),
    }
}

fn cmd_grad_check(args: GradCheckArgs) -> Result<(), CliError> {
    if args.seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".to_string()));
    }
    if !(args.epsilon > 0.0) || !(args.tolerance > 0.0) {
        return Err(CliError::Usage(
            "--epsilon and --tolerance must be positive".to_string(),
        ));
    }
    let seeds: Vec<u64> = (0..args.seeds as u64).map(|i| args.seed_base + i).collect();
    println!(
        "gradcheck: {} seeds, epsilon={:e}, tolerance={:e}",
        seeds.len(),
        args.epsilon,
        args.tolerance
    );
    let checks = gradsuite::run_full_suite(&seeds, args.epsilon, args.tolerance);
    let mut failed = Vec::new();
    for c in &checks {
        println!(
            "gradcheck {}: {} (checked {}, refined {}, worst rel err {:.3e})",
            c.name,
            if c.passed { "ok" } else { "FAIL" },
            c.checked,
            c.refined,
            c.worst_rel
        );
        if !c.passed {
            failed.push(c.name);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numeric(format!(
            "gradient checks failed: {}",
            failed.join(", ")
        )))
    }
}
