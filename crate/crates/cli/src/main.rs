//! `rsvqa`: command-line pipeline for paraphrase-robust visual question
//! answering experiments.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error
//! (corpus, checkpoint, or report contents), 3 runtime or external failure
//! (I/O, translation service, non-finite training loss).

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rsvqa_core::augment::{augment_corpus, AugmentOptions, DedupPolicy};
use rsvqa_core::checkpoint::Checkpoint;
use rsvqa_core::corpus::{load_corpus, save_corpus, ImageStore, Pivot, Split};
use rsvqa_core::error::Error;
use rsvqa_core::eval::{evaluate_model, score, MetricsReport, QuestionFilter};
use rsvqa_core::synth::{generate, rule_paraphrase, SynthConfig};
use rsvqa_core::training::{train, TrainConfig, TrainMode};
use rsvqa_core::translate::{
    CachedTranslator, HttpTranslator, MockTranslator, TranslationCache, Translator,
};
use rsvqa_core::{report, Result};

#[derive(Parser)]
#[command(
    name = "rsvqa",
    version,
    about = "Back-translation augmentation, contrastive training, and robustness evaluation for visual question answering"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic shape corpus (images + questions).
    Synth(SynthArgs),
    /// Augment a corpus with back-translated paraphrases.
    Augment(AugmentArgs),
    /// Train a model on a corpus.
    Train(TrainArgs),
    /// Evaluate a checkpoint and write a metrics report.
    Evaluate(EvaluateArgs),
    /// Render metric reports into a table and bar charts.
    Report(ReportArgs),
    /// Checkpoint utilities.
    Checkpoint(CheckpointArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for corpus.json, corpus_paraphrased.json, images/.
    #[arg(long)]
    out: PathBuf,
    /// Number of images to generate.
    #[arg(long, default_value_t = 200)]
    images: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Square image side in pixels (multiple of 8).
    #[arg(long, default_value_t = 32)]
    size: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TranslatorKind {
    Mock,
    Http,
}

#[derive(Args)]
struct AugmentArgs {
    /// Input corpus JSON.
    #[arg(long)]
    input: PathBuf,
    /// Output corpus JSON; the drop report lands next to it.
    #[arg(long)]
    output: PathBuf,
    /// Comma-separated pivot languages, e.g. zh,de,fr.
    #[arg(long, default_value = "zh,de,fr")]
    pivots: String,
    #[arg(long, value_enum, default_value_t = TranslatorKind::Mock)]
    translator: TranslatorKind,
    /// Translation service base URL (http translator). The MT_ENDPOINT
    /// environment variable overrides this flag.
    #[arg(long)]
    endpoint: Option<String>,
    /// Bearer token forwarded to the translation service.
    #[arg(long)]
    token: Option<String>,
    /// Persistent translation cache file (JSON lines).
    #[arg(long)]
    cache: Option<PathBuf>,
    /// First id allocated to new paraphrases (default: max id + 1).
    #[arg(long)]
    id_base: Option<u64>,
    /// Concurrent translation requests.
    #[arg(long, default_value_t = 4)]
    concurrency: usize,
    /// HTTP timeout in seconds.
    #[arg(long, default_value_t = 10)]
    timeout: u64,
    /// Total HTTP attempts per request.
    #[arg(long, default_value_t = 3)]
    retries: u32,
    /// Keep paraphrases equal to their original.
    #[arg(long)]
    no_dedup_original: bool,
    /// Keep paraphrases equal to a sibling from another pivot.
    #[arg(long)]
    no_dedup_siblings: bool,
    /// Compare texts exactly instead of normalized.
    #[arg(long)]
    no_normalize: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// Corpus JSON to train on.
    #[arg(long)]
    data: PathBuf,
    /// key=value training config file.
    #[arg(long)]
    config: PathBuf,
    /// Override the config file's mode.
    #[arg(long)]
    mode: Option<String>,
    /// Checkpoint output path.
    #[arg(long)]
    out: PathBuf,
    /// History CSV path (default: <out stem>.history.csv).
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Split to evaluate: train, val, or test.
    #[arg(long, default_value = "test")]
    split: String,
    /// originals_only, paraphrases_only, or all.
    #[arg(long, default_value = "all")]
    filter: String,
    /// Setting label stored in the report.
    #[arg(long, default_value = "evaluation")]
    setting: String,
    /// Report JSON output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Metric report JSONs, one column each.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Markdown table output (stdout when omitted).
    #[arg(long)]
    out_md: Option<PathBuf>,
    /// CSV table output.
    #[arg(long)]
    out_csv: Option<PathBuf>,
    /// Directory for one accuracy bar chart PNG per setting.
    #[arg(long)]
    charts_dir: Option<PathBuf>,
}

#[derive(Args)]
struct CheckpointArgs {
    #[command(subcommand)]
    command: CheckpointCommand,
}

#[derive(Subcommand)]
enum CheckpointCommand {
    /// Print every parameter key with its shape.
    Inspect {
        #[arg(long)]
        file: PathBuf,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 1,
        Error::Parse { .. }
        | Error::Integrity(_)
        | Error::EmptySplit(_)
        | Error::Shape { .. }
        | Error::CheckpointMismatch(_)
        | Error::MissingLabel(_)
        | Error::Image { .. } => 2,
        Error::Io { .. } | Error::Translate(_) | Error::NonFiniteLoss { .. } => 3,
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version are successful outcomes.
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    let result = match cli.command {
        Command::Synth(args) => run_synth(args),
        Command::Augment(args) => run_augment(args),
        Command::Train(args) => run_train(args),
        Command::Evaluate(args) => run_evaluate(args),
        Command::Report(args) => run_report(args),
        Command::Checkpoint(args) => match args.command {
            CheckpointCommand::Inspect { file } => run_inspect(&file),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn run_synth(args: SynthArgs) -> Result<()> {
    let config = SynthConfig {
        n_images: args.images,
        image_size: args.size,
        seed: args.seed,
        ..SynthConfig::default()
    };
    let corpus = generate(&config, &args.out)?;
    save_corpus(&corpus, &args.out.join("corpus.json"))?;
    let paraphrased = rule_paraphrase(&corpus)?;
    save_corpus(&paraphrased, &args.out.join("corpus_paraphrased.json"))?;
    println!(
        "wrote {} images, {} original questions, {} with paraphrases",
        corpus.images.len(),
        corpus.questions.len(),
        paraphrased.questions.len()
    );
    Ok(())
}

fn parse_pivots(spec: &str) -> Result<Vec<Pivot>> {
    let mut pivots = Vec::new();
    for part in spec.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        pivots.push(Pivot::from_code(part)?);
    }
    if pivots.is_empty() {
        return Err(Error::Config(format!("no pivot languages in {spec:?}")));
    }
    Ok(pivots)
}

fn run_augment(args: AugmentArgs) -> Result<()> {
    let corpus = load_corpus(&args.input)?;
    let pivots = parse_pivots(&args.pivots)?;
    let id_base = args
        .id_base
        .unwrap_or_else(|| corpus.questions.iter().map(|q| q.id).max().unwrap_or(0) + 1);
    let options = AugmentOptions {
        pivots,
        policy: DedupPolicy {
            normalize: !args.no_normalize,
            drop_equal_to_original: !args.no_dedup_original,
            drop_equal_across_pivots: !args.no_dedup_siblings,
        },
        id_base,
        concurrency: args.concurrency.max(1),
    };

    let inner: Box<dyn Translator> = match args.translator {
        TranslatorKind::Mock => Box::new(MockTranslator::new()),
        TranslatorKind::Http => {
            let endpoint = std::env::var("MT_ENDPOINT")
                .ok()
                .or(args.endpoint)
                .ok_or_else(|| {
                    Error::Config("http translator needs --endpoint or MT_ENDPOINT".into())
                })?;
            Box::new(HttpTranslator::with_options(
                &endpoint,
                Duration::from_secs(args.timeout),
                args.retries.max(1),
                Duration::from_millis(50),
                args.token,
            )?)
        }
    };
    let translator: Box<dyn Translator> = match &args.cache {
        Some(path) => Box::new(CachedTranslator::new(TranslationCache::open(path)?, inner)),
        None => inner,
    };

    let (augmented, drops) = augment_corpus(&corpus, &translator, &options)?;
    save_corpus(&augmented, &args.output)?;
    let drops_path = args.output.with_extension("drops.json");
    let mut drops_json =
        serde_json::to_string_pretty(&drops).expect("drop report serialization cannot fail");
    drops_json.push('\n');
    std::fs::write(&drops_path, drops_json).map_err(|e| Error::io(&drops_path, e))?;
    println!(
        "augmented {} -> {} questions ({} dropped); drop report at {}",
        corpus.questions.len(),
        augmented.questions.len(),
        drops.iter().map(|d| d.dropped).sum::<usize>(),
        drops_path.display()
    );
    Ok(())
}

fn run_train(args: TrainArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| Error::io(&args.config, e))?;
    let mut config = TrainConfig::parse(&text)?;
    if let Some(mode) = &args.mode {
        config.mode = TrainMode::parse(mode)?;
    }
    let corpus = load_corpus(&args.data)?;
    let store = ImageStore::load_all(&corpus)?;
    let (checkpoint, history) = train(&corpus, &store, &config)?;
    checkpoint.save(&args.out)?;
    let history_path = args.history.clone().unwrap_or_else(|| {
        let stem = args
            .out
            .file_stem()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_else(|| "train".into());
        args.out.with_file_name(format!("{stem}.history.csv"))
    });
    std::fs::write(&history_path, history.to_csv()).map_err(|e| Error::io(&history_path, e))?;
    println!(
        "trained {} epochs (mode {}), best val OA {:.4} at epoch {}; checkpoint {}",
        history.epochs.len(),
        checkpoint.meta.mode,
        checkpoint.meta.val_oa,
        checkpoint.meta.best_epoch,
        args.out.display()
    );
    Ok(())
}

fn parse_split(s: &str) -> Result<Split> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        other => Err(Error::Config(format!(
            "unknown split {other:?} (expected train, val, or test)"
        ))),
    }
}

fn run_evaluate(args: EvaluateArgs) -> Result<()> {
    let checkpoint = Checkpoint::load(&args.checkpoint)?;
    let corpus = load_corpus(&args.data)?;
    let store = ImageStore::load_all(&corpus)?;
    let split = parse_split(&args.split)?;
    let filter = QuestionFilter::parse(&args.filter)?;
    let preds = evaluate_model(&checkpoint, &corpus, &store, split, filter)?;
    if preds.out_of_pool > 0 {
        log::warn!(
            "{} questions have gold answers outside the answer pool and count as wrong",
            preds.out_of_pool
        );
    }
    let metrics = score(&preds)?.with_setting(&args.setting);
    metrics.save(&args.out)?;
    println!(
        "{}: {} questions, AA {:.4}, OA {:.4} -> {}",
        args.setting,
        preds.predictions.len(),
        metrics.aa,
        metrics.oa,
        args.out.display()
    );
    Ok(())
}

fn chart_file_name(setting: &str) -> String {
    let sanitized: String = setting
        .replace("->", "_to_")
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
        .collect();
    format!("{sanitized}.png")
}

fn run_report(args: ReportArgs) -> Result<()> {
    let mut reports = Vec::with_capacity(args.inputs.len());
    for path in &args.inputs {
        reports.push(MetricsReport::load(path)?);
    }
    let markdown = report::render_markdown(&reports);
    match &args.out_md {
        Some(path) => std::fs::write(path, &markdown).map_err(|e| Error::io(path, e))?,
        None => print!("{markdown}"),
    }
    if let Some(path) = &args.out_csv {
        std::fs::write(path, report::render_csv(&reports)).map_err(|e| Error::io(path, e))?;
    }
    if let Some(dir) = &args.charts_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for r in &reports {
            report::save_chart(r, &dir.join(chart_file_name(&r.setting)))?;
        }
    }
    Ok(())
}

fn run_inspect(file: &Path) -> Result<()> {
    let checkpoint = Checkpoint::load(file)?;
    println!(
        "mode {} | seed {} | best epoch {} | val OA {:.4}",
        checkpoint.meta.mode,
        checkpoint.meta.seed,
        checkpoint.meta.best_epoch,
        checkpoint.meta.val_oa
    );
    println!(
        "text vocab {} tokens | answer pool {} answers",
        checkpoint.text_vocab.len(),
        checkpoint.answer_vocab.len()
    );
    let mut total = 0usize;
    for (name, shape) in checkpoint.inspect() {
        let count: usize = shape.iter().product();
        total += count;
        let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
        println!("{name}  [{}]  {count}", dims.join(", "));
    }
    println!("total parameters: {total}");
    Ok(())
}
