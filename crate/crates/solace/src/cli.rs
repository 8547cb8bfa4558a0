//! Command-line entry points.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use solace_core::activation::Squash;
use solace_core::classifier::{train_classifier, ClassifierConfig, EvalReport, TaskTag};
use solace_core::corpus::{CorpusFilter, DEFAULT_FILTER_THRESHOLD};
use solace_core::dialogue::export_conversations;
use solace_core::eval::{r_check, sentiment_trajectory, trajectory_csv, SentimentSample};
use solace_core::responder::{train_lm, train_seq2seq, Role, Seq2SeqConfig};
use solace_core::text::{CleanProfile, EmbeddingTable, TextPipeline, DEFAULT_VOCAB_CAP};
use solace_core::train::{EpochRecord, TrainHistory, TrainSchedule};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::files::{read_annotations, read_embeddings, read_labeled, read_pairs, ConvReader, ConvWriter};
use crate::models::{load_classifier, save_classifier, save_lm, save_seq2seq};
use crate::service::{build_service, ServiceError};
use crate::store::read_records;

#[derive(Parser, Debug)]
#[command(name = "solace", version, about = "Counseling chat engine: training, filtering, evaluation and serving")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a sentiment or relatedness classifier from a labeled TSV file.
    TrainClassifier(TrainClassifierArgs),
    /// Keep the conversations of a .conv corpus that a relatedness model flags.
    FilterCorpus(FilterArgs),
    /// Train a casual or counseling responder on .conv question/answer pairs.
    TrainSeq2seq(TrainSeq2SeqArgs),
    /// Train the reranking language model on the answers of a .conv corpus.
    TrainLm(TrainLmArgs),
    /// Precision, recall, F1 and accuracy of a classifier on a labeled file.
    EvalClassifier(EvalArgs),
    /// Share of replies annotated regular or qualified.
    Rcheck {
        #[arg(long)]
        annotations: PathBuf,
    },
    /// Windowed mean sentiment from the knowledge store, as CSV.
    Trajectory(TrajectoryArgs),
    /// Export the knowledge store as a .conv corpus.
    Export {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the HTTP chat service.
    Serve {
        #[arg(long, env = "SOLACE_CONFIG")]
        config: PathBuf,
        /// Overrides `listen` from the config.
        #[arg(long)]
        listen: Option<String>,
    },
    /// Chat in the terminal, one message per line.
    Chat {
        #[arg(long, env = "SOLACE_CONFIG")]
        config: PathBuf,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum Activation {
    Sigmoid,
    Tanh,
}

impl From<Activation> for Squash {
    fn from(a: Activation) -> Self {
        match a {
            Activation::Sigmoid => Squash::Sigmoid,
            Activation::Tanh => Squash::Tanh,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum Clean {
    Cjk,
    PassThrough,
}

impl From<Clean> for TextPipeline {
    fn from(c: Clean) -> Self {
        TextPipeline {
            profile: match c {
                Clean::Cjk => CleanProfile::Cjk,
                Clean::PassThrough => CleanProfile::PassThrough,
            },
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum Task {
    Sentiment,
    Relatedness,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum RoleArg {
    Casual,
    Counseling,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
pub enum Cohort {
    All,
    Bot,
    Session,
}

#[derive(Args, Debug, Clone)]
pub struct EmbeddingArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long, default_value_t = DEFAULT_VOCAB_CAP)]
    pub vocab_cap: usize,
}

impl EmbeddingArgs {
    fn load(&self) -> Result<Arc<EmbeddingTable>> {
        let t = read_embeddings(&self.embeddings, self.vocab_cap)?;
        tracing::info!(words = t.len(), dim = t.dim(), "loaded embeddings");
        Ok(Arc::new(t))
    }
}

#[derive(Args, Debug, Clone)]
pub struct ScheduleArgs {
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 3)]
    pub patience: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Activation::Sigmoid)]
    pub activation: Activation,
    #[arg(long, value_enum, default_value_t = Clean::Cjk)]
    pub clean: Clean,
    /// Fine-tune a copy of the embeddings instead of keeping them frozen.
    #[arg(long)]
    pub train_embeddings: bool,
    /// Also save the weights after every epoch into this directory.
    #[arg(long)]
    pub epoch_checkpoints: Option<PathBuf>,
}

impl ScheduleArgs {
    fn schedule(&self) -> TrainSchedule {
        TrainSchedule {
            initial_lr: self.lr,
            max_epochs: self.epochs,
            batch_size: self.batch_size,
            early_stop_patience: self.patience,
            rng_seed: self.seed,
            ..TrainSchedule::default()
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainClassifierArgs {
    #[arg(long, value_enum)]
    pub task: Task,
    #[arg(long)]
    pub train: PathBuf,
    /// Validation file; without it a seeded 10% holdout is used.
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[command(flatten)]
    pub embeddings: EmbeddingArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long, default_value_t = 32)]
    pub bilstm_units: usize,
    #[arg(long, default_value_t = 16)]
    pub lstm_units: usize,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
}

#[derive(Args, Debug)]
pub struct FilterArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub embeddings: EmbeddingArgs,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_FILTER_THRESHOLD)]
    pub threshold: f64,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct Seq2SeqArgs {
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    #[arg(long, default_value_t = 30)]
    pub max_tokens: usize,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
}

impl Seq2SeqArgs {
    fn config(&self) -> Seq2SeqConfig {
        Seq2SeqConfig {
            hidden: self.hidden,
            max_tokens: self.max_tokens,
            schedule: self.schedule.schedule(),
            squash: self.schedule.activation.into(),
            train_embeddings: self.schedule.train_embeddings,
            pipeline: self.schedule.clean.into(),
            ..Seq2SeqConfig::default()
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainSeq2SeqArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[command(flatten)]
    pub embeddings: EmbeddingArgs,
    #[arg(long, value_enum)]
    pub role: RoleArg,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: Seq2SeqArgs,
}

#[derive(Args, Debug)]
pub struct TrainLmArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub embeddings: EmbeddingArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: Seq2SeqArgs,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub embeddings: EmbeddingArgs,
    #[arg(long)]
    pub test: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrajectoryArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long, default_value_t = 2.0)]
    pub window_days: f64,
    #[arg(long, value_enum, default_value_t = Cohort::All)]
    pub cohort: Cohort,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn epoch_hook<M>(
    dir: Option<&Path>,
    save: impl Fn(&Path, &M) -> Result<()>,
) -> impl FnMut(&EpochRecord, &M) -> solace_core::Result<Option<String>> {
    let dir = dir.map(Path::to_path_buf);
    move |r, m| {
        tracing::info!(epoch = r.epoch, train_loss = r.train_loss, val_loss = ?r.val_loss, lr = r.lr, "epoch");
        let Some(dir) = &dir else { return Ok(None) };
        let path = dir.join(format!("epoch-{:03}.json", r.epoch));
        std::fs::create_dir_all(dir)
            .map_err(|e| solace_core::Error::Storage(e.to_string()))
            .and_then(|_| save(&path, m).map_err(|e| solace_core::Error::Storage(e.to_string())))?;
        Ok(Some(path.display().to_string()))
    }
}

fn history_json(h: &TrainHistory) -> serde_json::Value {
    json!({
        "best_epoch": h.best_epoch,
        "stopped_early": h.stopped_early,
        "epochs": h.epochs.iter().map(|e| json!({
            "epoch": e.epoch,
            "train_loss": e.train_loss,
            "val_loss": e.val_loss,
            "lr": e.lr,
            "checkpoint": e.checkpoint_path,
        })).collect::<Vec<_>>(),
    })
}

fn report_json(r: &EvalReport) -> serde_json::Value {
    json!({
        "tp": r.tp, "fp": r.fp, "fn": r.fn_, "tn": r.tn,
        "precision": r.precision, "recall": r.recall, "f1": r.f1, "accuracy": r.accuracy,
        "warnings": r.warnings,
    })
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json"));
}

fn train_classifier_cmd(a: &TrainClassifierArgs) -> Result<()> {
    let table = a.embeddings.load()?;
    let train = read_labeled(&a.train)?;
    let val = a.val.as_deref().map(read_labeled).transpose()?;
    let cfg = ClassifierConfig {
        bilstm_units: a.bilstm_units,
        lstm_units: a.lstm_units,
        task: match a.task {
            Task::Sentiment => TaskTag::Sentiment,
            Task::Relatedness => TaskTag::Relatedness,
        },
        decision_threshold: a.threshold,
        schedule: a.schedule.schedule(),
        squash: a.schedule.activation.into(),
        train_embeddings: a.schedule.train_embeddings,
        pipeline: a.schedule.clean.into(),
        ..ClassifierConfig::default()
    };
    let hook = epoch_hook(a.schedule.epoch_checkpoints.as_deref(), save_classifier);
    let trained = train_classifier(&train, val.as_deref(), &cfg, table, hook)?;
    save_classifier(&a.out, &trained.model)?;
    let mut out = json!({ "model": a.out, "pad_length": trained.model.pad_length, "history": history_json(&trained.history) });
    if let Some(v) = &val {
        out["validation"] = report_json(&trained.model.evaluate(v)?);
    }
    print_json(&out);
    Ok(())
}

/// Scores utterances on all cores, a block of conversations at a time, and
/// writes kept records in input order.
fn filter_corpus_cmd(a: &FilterArgs) -> Result<()> {
    let table = a.embeddings.load()?;
    let model = load_classifier(&a.model, table)?;
    if model.task != TaskTag::Relatedness {
        return Err(Error::Config(format!("{} is not a relatedness classifier", a.model.display())));
    }
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut filter = CorpusFilter::new(&model, a.threshold);
    let mut reader = ConvReader::open(&a.input)?;
    let mut writer = ConvWriter::create(&a.out)?;
    loop {
        let block: Vec<_> = reader.by_ref().take(threads * 64).collect::<Result<_>>()?;
        if block.is_empty() {
            break;
        }
        let chunk = block.len().div_ceil(threads);
        let scores: Vec<Vec<f64>> = std::thread::scope(|s| {
            let handles: Vec<_> = block
                .chunks(chunk)
                .map(|part| {
                    let model = &model;
                    s.spawn(move || {
                        part.iter()
                            .map(|c| c.utterances.iter().map(|u| solace_core::classifier::Scorer::score(model, u)).collect())
                            .collect::<Vec<Vec<f64>>>()
                    })
                })
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("scoring thread")).collect()
        });
        for (conv, s) in block.iter().zip(&scores) {
            if filter.accept_scored(s) {
                writer.write(conv)?;
            }
        }
    }
    writer.finish()?;
    for w in reader.warnings() {
        tracing::warn!("{w}");
    }
    let r = filter.into_report();
    let report = json!({
        "total_conversations": r.total_conversations,
        "retained": r.retained,
        "dropped": r.dropped,
        "threshold": r.threshold,
        "retained_fraction": r.retained_fraction(),
        "score_histogram": r.histogram,
    });
    match &a.report {
        Some(p) => std::fs::write(p, serde_json::to_string_pretty(&report).expect("json"))
            .map_err(|source| Error::Io { path: p.clone(), source })?,
        None => print_json(&report),
    }
    Ok(())
}

fn train_seq2seq_cmd(a: &TrainSeq2SeqArgs) -> Result<()> {
    let table = a.embeddings.load()?;
    let pairs = read_pairs(&a.pairs)?;
    let val = a.val.as_deref().map(read_pairs).transpose()?;
    let role = match a.role {
        RoleArg::Casual => Role::Casual,
        RoleArg::Counseling => Role::Counseling,
    };
    tracing::info!(pairs = pairs.len(), "training responder");
    let hook = epoch_hook(a.model.schedule.epoch_checkpoints.as_deref(), save_seq2seq);
    let trained = train_seq2seq(&pairs, val.as_deref(), &a.model.config(), role, table, hook)?;
    save_seq2seq(&a.out, &trained.model)?;
    print_json(&json!({ "model": a.out, "role": role.as_str(), "history": history_json(&trained.history) }));
    Ok(())
}

fn train_lm_cmd(a: &TrainLmArgs) -> Result<()> {
    let table = a.embeddings.load()?;
    let answers: Vec<String> = read_pairs(&a.corpus)?.into_iter().map(|(_, a)| a).collect();
    let hook = epoch_hook(a.model.schedule.epoch_checkpoints.as_deref(), save_lm);
    let trained = train_lm(&answers, &a.model.config(), table, hook)?;
    save_lm(&a.out, &trained.model)?;
    print_json(&json!({ "model": a.out, "history": history_json(&trained.history) }));
    Ok(())
}

fn eval_cmd(a: &EvalArgs) -> Result<()> {
    let model = load_classifier(&a.model, a.embeddings.load()?)?;
    let test = read_labeled(&a.test)?;
    print_json(&report_json(&model.evaluate(&test)?));
    Ok(())
}

fn rcheck_cmd(path: &Path) -> Result<()> {
    let r = r_check(&read_annotations(path)?)?;
    print_json(&json!({
        "n_unqualified": r.n_unqualified, "n_regular": r.n_regular, "n_qualified": r.n_qualified,
        "total": r.total,
        "frac_unqualified": r.frac_unqualified, "frac_regular": r.frac_regular, "frac_qualified": r.frac_qualified,
        "r_check": r.r_check,
    }));
    Ok(())
}

fn trajectory_cmd(a: &TrajectoryArgs) -> Result<()> {
    if a.window_days.is_nan() || a.window_days <= 0.0 {
        return Err(Error::Config("--window-days must be positive".into()));
    }
    let window = (a.window_days * 86_400.0).round() as u64;
    let samples: Vec<SentimentSample> = read_records(&a.store)?
        .into_iter()
        .map(|r| SentimentSample {
            cohort: match a.cohort {
                Cohort::All => "all".into(),
                Cohort::Bot => r.bot.as_str().into(),
                Cohort::Session => r.session_id,
            },
            timestamp: r.timestamp,
            score: r.sentiment_score,
        })
        .collect();
    let csv = trajectory_csv(&sentiment_trajectory(&samples, window.max(1))?);
    match &a.out {
        Some(p) => std::fs::write(p, csv).map_err(|source| Error::Io { path: p.clone(), source })?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn export_cmd(store: &Path, out: &Path) -> Result<()> {
    let records = read_records(store)?;
    let mut w = ConvWriter::create(out)?;
    let convs = export_conversations(&records);
    for c in &convs {
        w.write(c)?;
    }
    w.finish()?;
    tracing::info!(records = records.len(), conversations = convs.len(), "exported");
    Ok(())
}

fn serve_cmd(config: &Path, listen: Option<&str>) -> Result<()> {
    let cfg = Config::load(config)?;
    let svc = Arc::new(build_service(&cfg)?);
    let addr = listen.unwrap_or(&cfg.listen).to_string();
    let rt = tokio::runtime::Runtime::new().map_err(|source| Error::Io { path: config.to_path_buf(), source })?;
    rt.block_on(crate::server::serve(
        svc,
        &addr,
        |a| tracing::info!(address = %a, "listening"),
        async {
            let _ = tokio::signal::ctrl_c().await;
        },
    ))
    .map_err(|e| Error::Config(format!("cannot serve on {addr}: {e}")))
}

fn chat_cmd(config: &Path) -> Result<()> {
    let cfg = Config::load(config)?;
    let svc = build_service(&cfg)?;
    let id = svc.create_session();
    let stdin = std::io::stdin();
    let mut out = std::io::stdout();
    let _ = write!(out, "> ");
    let _ = out.flush();
    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        match svc.handle_message(Some(&id), &line) {
            Ok(r) => println!(
                "{}  [{} mental={:.2} sentiment={:.2}]",
                r.reply, r.bot_used, r.mental_score, r.sentiment_score
            ),
            Err(ServiceError::Internal { reply, message }) => {
                tracing::error!("{message}");
                println!("{reply}");
            }
            Err(e) => println!("({e})"),
        }
        let _ = write!(out, "> ");
        let _ = out.flush();
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::TrainClassifier(a) => train_classifier_cmd(a),
        Command::FilterCorpus(a) => filter_corpus_cmd(a),
        Command::TrainSeq2seq(a) => train_seq2seq_cmd(a),
        Command::TrainLm(a) => train_lm_cmd(a),
        Command::EvalClassifier(a) => eval_cmd(a),
        Command::Rcheck { annotations } => rcheck_cmd(annotations),
        Command::Trajectory(a) => trajectory_cmd(a),
        Command::Export { store, out } => export_cmd(store, out),
        Command::Serve { config, listen } => serve_cmd(config, listen.as_deref()),
        Command::Chat { config } => chat_cmd(config),
    }
}

pub fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
