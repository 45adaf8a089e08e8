//! `argannot`: ingest, train, predict, evaluate, ensemble, correspond and
//! export color-coded HTML.
//!
//! Exit codes: 0 success, 1 data error, 2 usage error.

mod config;
mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use argannot_core::codecs::apply_predictions;
use argannot_core::document::{read_corpus, write_corpus};
use argannot_core::ensemble::{run_ensemble, votes_table};
use argannot_core::ingest::{corpus_stats, read_dir, Format, PersuadeOptions};
use argannot_core::render::{render_html, Palette};
use argannot_core::training::{log_to_jsonl, predict_all, split_dev};
use argannot_core::{
    collapse_to_words, encode_corpus, encode_document, evaluate, train_split, AnnotatedDocument,
    ComponentStrategy, CorrespondenceMatrix, Params, Rater, SchemeId, TagSet, Task, Unit, Vocab,
};
use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::manifest::ManifestBuilder;

/// A mistake in how the tool was invoked; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Bad input data found by the CLI itself; exits with status 1.
#[derive(Debug)]
pub struct DataError(pub String);

impl std::fmt::Display for DataError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for DataError {}

#[derive(Parser)]
#[command(name = "argannot", version, about = "Argument-annotation pipeline")]
struct Cli {
    /// Overrides the seed of the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read a brat, PERSUADE or HTML directory into a canonical corpus.
    Ingest(IngestArgs),
    /// Train one model for a task.
    Train(TrainArgs),
    /// Label a corpus with a trained model.
    Predict(PredictArgs),
    /// Score predictions against gold annotations.
    Evaluate(EvaluateArgs),
    /// Seed models, vote-resolved synthetic labels and a universal model.
    Ensemble(EnsembleArgs),
    /// Word-level cross table between two schemes.
    Correspond(CorrespondArgs),
    /// Color-coded standalone HTML per document.
    ExportHtml(ExportArgs),
    /// Print the default config for a task.
    Config {
        #[arg(long)]
        task: Task,
    },
    /// Write a synthetic cue-phrase ARROW corpus.
    Synth(SynthArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    format: Format,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// PERSUADE: reject rows whose offsets disagree with their word indices.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    task: Task,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dev corpus; split off the training corpus when absent.
    #[arg(long)]
    dev: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    task: Task,
    #[arg(long = "in")]
    input: PathBuf,
    /// Directory written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long, required_unless_present = "scheme")]
    task: Option<Task>,
    #[arg(long, conflicts_with = "task")]
    scheme: Option<SchemeId>,
    /// Predicted corpus.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EnsembleArgs {
    #[arg(long)]
    task: Task,
    /// Labeled corpus with prompt ids.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    unlabeled: PathBuf,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct CorrespondArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Row (human) scheme.
    #[arg(long)]
    scheme: SchemeId,
    /// Column (synthetic) scheme.
    #[arg(long)]
    against: SchemeId,
    #[arg(long)]
    rater: Option<Rater>,
    #[arg(long)]
    against_rater: Option<Rater>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    scheme: SchemeId,
    #[arg(long)]
    rater: Option<Rater>,
    /// Only this document.
    #[arg(long)]
    doc: Option<String>,
    /// `tag = color` lines overriding the built-in palette.
    #[arg(long)]
    palette: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 40)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    prompts: usize,
    /// Leave the essays without labels.
    #[arg(long)]
    unlabeled: bool,
    #[arg(long)]
    out: PathBuf,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<argannot_core::Error>() {
            return if e.is_data_error() { 1 } else { 2 };
        }
        if cause.is::<UsageError>() {
            return 2;
        }
        if cause.is::<DataError>() {
            return 1;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Train(a) => train(a, cli.seed),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Ensemble(a) => ensemble(a, cli.seed),
        Command::Correspond(a) => correspond(a),
        Command::ExportHtml(a) => export_html(a),
        Command::Config { task } => {
            print!("{}", RunConfig::default_for(task).to_text());
            Ok(())
        }
        Command::Synth(a) => synth(a, cli.seed.unwrap_or(0)),
    }
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn load_corpus(dir: &Path) -> Result<Vec<AnnotatedDocument>> {
    read_corpus(dir).with_context(|| format!("reading corpus {}", dir.display()))
}

fn ingest(a: IngestArgs) -> Result<()> {
    let got = read_dir(a.format, &a.input, PersuadeOptions { strict: a.strict })
        .with_context(|| format!("reading {}", a.input.display()))?;
    if !got.failures.is_empty() {
        let list: Vec<String> = got
            .failures
            .iter()
            .map(|(p, e)| format!("  {}: {e}", p.display()))
            .collect();
        return Err(DataError(format!(
            "{} file(s) failed to parse:\n{}",
            list.len(),
            list.join("\n")
        ))
        .into());
    }
    if got.docs.is_empty() {
        log::warn!("no documents found in {}", a.input.display());
        eprintln!("warning: no documents found in {}", a.input.display());
    }
    for row in &got.adjusted_rows {
        log::info!("row {row}: offsets adjusted to match word indices");
    }
    for id in &got.paragraph_fallbacks {
        log::warn!("{id}: no <p> markup, paragraphs taken from line breaks");
    }
    create_out(&a.out)?;
    write_corpus(&a.out, &got.docs)?;

    let mut report = corpus_stats(&got.docs)?.to_string();
    let mut names: Vec<&String> = got.splits.values().collect();
    names.sort();
    names.dedup();
    for name in names {
        report.push_str(&format!("\n[{name}]\n{}", corpus_stats(&got.split(name))?));
    }
    if !got.splits.is_empty() {
        let mut csv = String::from("doc_id,split\n");
        for (id, s) in &got.splits {
            csv.push_str(&format!("{id},{s}\n"));
        }
        write(&a.out.join("splits.csv"), csv)?;
    }
    write(&a.out.join("stats.txt"), &report)?;
    print!("{report}");
    ManifestBuilder::new("ingest")
        .input(&a.input)
        .write(&a.out)?;
    Ok(())
}

fn train(a: TrainArgs, seed: Option<u64>) -> Result<()> {
    let cfg = RunConfig::load(a.config.as_deref(), a.task, seed)?;
    let docs = load_corpus(&a.input)?;
    if docs.is_empty() {
        return Err(DataError(format!("{} holds no documents", a.input.display())).into());
    }
    let texts: Vec<&str> = docs.iter().map(|d| d.text.as_str()).collect();
    let vocab = Vocab::train(&texts, cfg.model.vocab_size)?;
    let strategy = ComponentStrategy::default();
    let data = encode_corpus(a.task, &docs, &vocab, strategy)?;
    let (tr, dev) = match &a.dev {
        Some(d) => (
            data,
            encode_corpus(a.task, &load_corpus(d)?, &vocab, strategy)?,
        ),
        None => split_dev(&data, cfg.train.dev_fraction, cfg.train.seed)?,
    };
    log::info!("{} training and {} dev examples", tr.len(), dev.len());
    let params = Params::init(&cfg.model, cfg.train.seed)?;
    let outcome = train_split(params, &tr, &dev, &a.task.tagset(), &cfg.train, |r| {
        log::info!(
            "epoch {} loss {:.4} dev macro-F1 {:.3} kappa-sum {:.3}",
            r.epoch,
            r.train_loss,
            r.dev_macro_f1,
            r.dev_kappa_sum
        );
    })?;
    create_out(&a.out)?;
    outcome.params.save(&a.out.join("checkpoint.bin"))?;
    vocab.save(&a.out.join("vocab.txt"))?;
    write(&a.out.join("log.jsonl"), log_to_jsonl(&outcome.log))?;
    write(&a.out.join("config.txt"), cfg.to_text())?;
    write(&a.out.join("task.txt"), format!("{}\n", a.task))?;
    let best = &outcome.log[outcome.best_epoch - 1];
    println!(
        "best epoch {} of {}: dev macro-F1 {:.3}, kappa-sum {:.3}",
        outcome.best_epoch,
        outcome.log.len(),
        best.dev_macro_f1,
        best.dev_kappa_sum
    );
    let mut m = ManifestBuilder::new("train")
        .config(a.config.as_deref())
        .input(&a.input)
        .seed(cfg.train.seed);
    if let Some(d) = &a.dev {
        m = m.input(d);
    }
    m.write(&a.out)?;
    Ok(())
}

/// Drop the annotations a task predicts so that the output carries only
/// the model's labels for it.
fn clear_for(task: Task, doc: &mut AnnotatedDocument) {
    let ts = task.tagset();
    match task {
        Task::ArrowSentence | Task::PersuadeWord => doc.spans.retain(|s| !ts.contains(&s.tag)),
        Task::AaeBio => {
            doc.spans.retain(|s| s.unit != Unit::Char);
            doc.relations.clear();
        }
        Task::AaeComponent | Task::AaeRelation | Task::AaeStance => {}
    }
}

fn predict(a: PredictArgs) -> Result<()> {
    let params = Params::load(&a.checkpoint.join("checkpoint.bin"))?;
    let vocab = Vocab::load(&a.checkpoint.join("vocab.txt"))?;
    if let Ok(trained) = fs::read_to_string(a.checkpoint.join("task.txt")) {
        if trained.trim() != a.task.as_str() {
            return Err(UsageError(format!(
                "checkpoint was trained for {}, not {}",
                trained.trim(),
                a.task
            ))
            .into());
        }
    }
    if params.config.num_labels != a.task.tagset().num_labels() {
        return Err(UsageError(format!(
            "checkpoint has {} labels, task {} needs {}",
            params.config.num_labels,
            a.task,
            a.task.tagset().num_labels()
        ))
        .into());
    }
    let mut docs = load_corpus(&a.input)?;
    for doc in &mut docs {
        let ex = encode_document(a.task, doc, &vocab, ComponentStrategy::default())?;
        let labels = predict_all(&params, &ex)?;
        clear_for(a.task, doc);
        apply_predictions(doc, a.task, &ex, &labels, Rater::Model(1))?;
    }
    create_out(&a.out)?;
    write_corpus(&a.out, &docs)?;
    println!("labeled {} documents for {}", docs.len(), a.task);
    ManifestBuilder::new("predict")
        .input(&a.input)
        .input(&a.checkpoint)
        .write(&a.out)?;
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let scheme = match (a.task, a.scheme) {
        (Some(t), _) => t.scheme(),
        (None, Some(s)) => s,
        (None, None) => return Err(UsageError("give --task or --scheme".into()).into()),
    };
    let pred = load_corpus(&a.input)?;
    let gold = load_corpus(&a.gold)?;
    let report = evaluate(&pred, &gold, &TagSet::builtin(scheme))?;
    let table = report.to_table();
    print!("{table}");
    if let Some(out) = &a.out {
        create_out(out)?;
        write(&out.join("report.txt"), &table)?;
        write(
            &out.join("report.json"),
            serde_json::to_string_pretty(&report)? + "\n",
        )?;
        ManifestBuilder::new("evaluate")
            .input(&a.input)
            .input(&a.gold)
            .write(out)?;
    }
    Ok(())
}

fn ensemble(a: EnsembleArgs, seed: Option<u64>) -> Result<()> {
    let cfg = RunConfig::load(a.config.as_deref(), a.task, seed)?;
    let labeled = load_corpus(&a.input)?;
    let unlabeled = load_corpus(&a.unlabeled)?;
    let texts: Vec<&str> = labeled
        .iter()
        .chain(&unlabeled)
        .map(|d| d.text.as_str())
        .collect();
    let vocab = Vocab::train(&texts, cfg.model.vocab_size)?;
    let outcome = run_ensemble(
        a.task, &labeled, &unlabeled, a.k, &vocab, &cfg.model, &cfg.train,
    )?;

    create_out(&a.out)?;
    write(&a.out.join("plan.tsv"), outcome.plan.to_table())?;
    for s in &outcome.seeds {
        let dir = a.out.join(format!("seed-{}", s.split.model));
        create_out(&dir)?;
        write(&dir.join("log.jsonl"), log_to_jsonl(&s.outcome.log))?;
        write(&dir.join("report.txt"), s.test_report.to_table())?;
        println!(
            "model {} (test {}): macro-F1 {:.3}, mean kappa {:.3}",
            s.split.model, s.split.test, s.test_report.macro_f1, s.test_report.mean_kappa
        );
    }
    write_corpus(&a.out.join("synthetic"), &outcome.synthetic)?;
    write(
        &a.out.join("votes.csv"),
        votes_table(&outcome.synthetic, a.task, a.k),
    )?;
    let uni = a.out.join("universal");
    create_out(&uni)?;
    outcome.universal.params.save(&uni.join("checkpoint.bin"))?;
    vocab.save(&uni.join("vocab.txt"))?;
    write(&uni.join("log.jsonl"), log_to_jsonl(&outcome.universal.log))?;
    write(&uni.join("task.txt"), format!("{}\n", a.task))?;
    write(&a.out.join("config.txt"), cfg.to_text())?;
    println!(
        "universal model: best epoch {} of {}",
        outcome.universal.best_epoch,
        outcome.universal.log.len()
    );
    ManifestBuilder::new("ensemble")
        .config(a.config.as_deref())
        .input(&a.input)
        .input(&a.unlabeled)
        .seed(cfg.train.seed)
        .write(&a.out)?;
    Ok(())
}

fn correspond(a: CorrespondArgs) -> Result<()> {
    let docs = load_corpus(&a.input)?;
    let rows = TagSet::builtin(a.scheme);
    let cols = TagSet::builtin(a.against);
    let m = argannot_core::correspondence::correspond_corpus(
        &docs,
        (&rows, a.rater),
        (&cols, a.against_rater),
    )?;
    let tsv = m.to_tsv();
    print!("{tsv}");
    if let Some(out) = &a.out {
        create_out(out)?;
        write(&out.join("correspondence.tsv"), &tsv)?;
        write(
            &out.join("counts.json"),
            serde_json::to_string(&counts_json(&m))? + "\n",
        )?;
        ManifestBuilder::new("correspond")
            .input(&a.input)
            .write(out)?;
    }
    Ok(())
}

fn counts_json(m: &CorrespondenceMatrix) -> serde_json::Value {
    serde_json::json!({
        "rows": m.rows.iter().map(|t| t.to_string()).collect::<Vec<_>>(),
        "cols": m.cols.iter().map(|t| t.to_string()).collect::<Vec<_>>(),
        "counts": m.counts,
        "total": m.total,
    })
}

fn export_html(a: ExportArgs) -> Result<()> {
    let docs = load_corpus(&a.input)?;
    let mut palette = Palette::builtin(a.scheme);
    if let Some(p) = &a.palette {
        let text = fs::read_to_string(p)
            .map_err(|e| UsageError(format!("cannot read palette {}: {e}", p.display())))?;
        palette = palette.merged(Palette::parse(&text)?);
    }
    let ts = TagSet::builtin(a.scheme);
    let selected: Vec<&AnnotatedDocument> = docs
        .iter()
        .filter(|d| a.doc.as_ref().is_none_or(|id| &d.doc_id == id))
        .collect();
    if let (Some(id), true) = (&a.doc, selected.is_empty()) {
        return Err(UsageError(format!("no document `{id}` in {}", a.input.display())).into());
    }
    create_out(&a.out)?;
    for d in &selected {
        let tags = collapse_to_words(d, &ts, a.rater);
        let r = render_html(d, &tags, &palette, &d.doc_id)?;
        for t in &r.unknown {
            eprintln!("warning: {}: tag `{t}` has no color", d.doc_id);
        }
        let name: String = d
            .doc_id
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                    c
                } else {
                    '_'
                }
            })
            .collect();
        write(&a.out.join(format!("{name}.html")), &r.html)?;
    }
    println!(
        "wrote {} HTML file(s) to {}",
        selected.len(),
        a.out.display()
    );
    let mut m = ManifestBuilder::new("export-html").input(&a.input);
    if let Some(p) = &a.palette {
        m = m.input(p);
    }
    m.write(&a.out)?;
    Ok(())
}

fn synth(a: SynthArgs, seed: u64) -> Result<()> {
    if a.prompts == 0 || a.n == 0 {
        return Err(UsageError("--n and --prompts must be positive".into()).into());
    }
    let rater = (!a.unlabeled).then_some(Rater::Human1);
    let docs = argannot_core::synth::arrow_essays(a.n, a.prompts, seed, rater);
    create_out(&a.out)?;
    write_corpus(&a.out, &docs)?;
    println!(
        "wrote {} synthetic essays to {}",
        docs.len(),
        a.out.display()
    );
    ManifestBuilder::new("synth").seed(seed).write(&a.out)?;
    Ok(())
}
