//! Command-line interface. [`run`] parses arguments, executes one command and
//! returns the process exit code: 0 on success, 1 when validation fails or a
//! command cannot complete, 2 on a usage error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::annotate::{self, NameTemplate};
use crate::chunking::{chunk_document, DocumentPieces};
use crate::cognn::{self, config_from_text, metrics_csv, sentences_from_docs, Architecture, CogNNConfig};
use crate::corpus::{read_corpus, read_corpus_raw, synth_generate, write_corpus, write_document, AnnotatedDocument, SynthParams};
use crate::error::{Error, Result};
use crate::eval::{cohen_kappa, name_prf, token_prf, PrfReport, TokenMode};
use crate::isbert::{evaluate_documents, train_isbert, EncoderKind, IsBertModel, IsConfig, Overlap, PreparedDocument};
use crate::labels::TokenLabel;
use crate::model::{prediction_records, suggestions, AnyModel};
use crate::params::parse_key_values;
use crate::service::{HttpServer, Service, CORPUS_ENV};
use crate::tokenizer::tokenize_document;

#[derive(Parser, Debug)]
#[command(name = "namerec", version, about = "Fine-grained person name recognition toolkit")]
pub struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train the co-guided (or single-network) BiLSTM-CRF tagger.
    TrainCognn(TrainCognnArgs),
    /// Train the overlapped chunk encoder on whole documents.
    TrainIsbert(TrainIsbertArgs),
    /// Label every document of a corpus with a trained model.
    Predict(PredictArgs),
    /// Score predicted annotations against gold annotations.
    Eval(EvalArgs),
    /// Write a seeded synthetic corpus.
    Synth(SynthArgs),
    /// Show how a document is cut into overlapped chunks.
    ChunkInspect(ChunkInspectArgs),
    /// Annotation workflow operations.
    #[command(subcommand)]
    Annotate(AnnotateCommand),
    /// Run the local annotation service.
    Serve(ServeArgs),
}

#[derive(Args, Debug)]
pub struct TrainCognnArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub dev: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = ArchArg::CoGuided)]
    pub architecture: ArchArg,
    /// `key = value` configuration file, applied before `--set`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set hidden=64`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Per-epoch metrics CSV.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum ArchArg {
    CoGuided,
    Single,
}

#[derive(Args, Debug)]
pub struct TrainIsbertArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub dev: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// `adaptive` or a fixed ratio in [0, 1).
    #[arg(long, default_value = "0.5")]
    pub overlap: Overlap,
    #[arg(long, default_value_t = 2)]
    pub hops: usize,
    #[arg(long, default_value_t = EncoderKind::Transformer)]
    pub encoder: EncoderKind,
    /// Content pieces per chunk.
    #[arg(long)]
    pub capacity: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Per-epoch log CSV.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, env = CORPUS_ENV)]
    pub corpus: PathBuf,
    /// Write a predicted corpus here; without it, suggestions are printed as JSON lines.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long, value_enum, default_value_t = Level::Token)]
    pub level: Level,
    /// Token level: require the fused class to match, not just name vs outside.
    #[arg(long)]
    pub fine: bool,
    /// Name level: require per-token forms to match as well as boundaries.
    #[arg(long)]
    pub strict: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum Level {
    Token,
    Name,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 20)]
    pub docs: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub min_tokens: Option<usize>,
    #[arg(long)]
    pub max_tokens: Option<usize>,
    /// Probability that a block is prose.
    #[arg(long)]
    pub richness: Option<f64>,
    /// Probability that a mention reuses a person already in the document.
    #[arg(long)]
    pub repetition: Option<f64>,
    #[arg(long)]
    pub citation_rate: Option<f64>,
}

#[derive(Args, Debug)]
pub struct ChunkInspectArgs {
    /// Plain text file to chunk.
    #[arg(long, conflicts_with_all = ["corpus", "doc"])]
    pub text: Option<PathBuf>,
    #[arg(long, env = CORPUS_ENV)]
    pub corpus: Option<PathBuf>,
    #[arg(long, requires = "corpus")]
    pub doc: Option<String>,
    #[arg(long, default_value_t = 64)]
    pub capacity: usize,
    #[arg(long, default_value = "0.5")]
    pub overlap: Overlap,
    /// Take the sub-token vocabulary from this chunk-encoder checkpoint
    /// instead of building one from the document.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum AnnotateCommand {
    /// Label every unannotated match of a name-form template.
    GroupLabel(GroupLabelArgs),
    /// Character offsets of a name in a document.
    Index(IndexArgs),
    /// Document text with annotated names replaced by ANNOTATED.
    Mask(DocArgs),
    /// Check positions and label completeness; exits 1 on any violation.
    Validate(ValidateArgs),
    /// List disagreements between two annotations of the same corpus.
    Compare(CompareArgs),
}

#[derive(Args, Debug)]
pub struct DocArgs {
    #[arg(long, env = CORPUS_ENV)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub doc: String,
}

#[derive(Args, Debug)]
pub struct GroupLabelArgs {
    #[command(flatten)]
    pub target: DocArgs,
    /// `X` full word, `X.` dotted initial, `x` bare initial, anything else literal.
    #[arg(long)]
    pub template: String,
    /// One fused label per template token, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub labels: Vec<String>,
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Args, Debug)]
pub struct IndexArgs {
    #[command(flatten)]
    pub target: DocArgs,
    #[arg(long)]
    pub name: String,
    #[arg(long)]
    pub ignore_case: bool,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    #[arg(long, env = CORPUS_ENV)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub doc: Option<String>,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[arg(long, env = CORPUS_ENV)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub workers: usize,
}

/// Failure of a command that ran: validation problems exit 1, unusable
/// inputs exit 2.
enum Failure {
    Validation(String),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io { .. } | Error::Config(_) | Error::Template(_) | Error::Policy(_) => Failure::Usage(e.to_string()),
            other => Failure::Validation(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Validation(e.to_string())
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Parse `args` (program name first) and run the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let rendered = e.render().to_string();
            let _ = if code == 0 { write!(out, "{rendered}") } else { write!(err, "{rendered}") };
            return code;
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(Failure::Validation(m)) => {
            let _ = writeln!(err, "error: {m}");
            1
        }
        Err(Failure::Usage(m)) => {
            let _ = writeln!(err, "error: {m}");
            2
        }
    }
}

fn execute(cli: Cli, out: &mut dyn Write) -> CmdResult {
    let seed = cli.seed;
    match cli.command {
        Command::TrainCognn(a) => train_cognn_cmd(a, seed, out),
        Command::TrainIsbert(a) => train_isbert_cmd(a, seed, out),
        Command::Predict(a) => predict_cmd(a, out),
        Command::Eval(a) => eval_cmd(a, out),
        Command::Synth(a) => synth_cmd(a, seed, out),
        Command::ChunkInspect(a) => chunk_inspect_cmd(a, out),
        Command::Annotate(c) => annotate_cmd(c, out),
        Command::Serve(a) => serve_cmd(a, out),
    }
}

fn overrides(items: &[String]) -> Result<BTreeMap<String, String>> {
    parse_key_values(&items.join("\n"))
}

fn write_metrics(path: &Option<PathBuf>, csv: String) -> Result<()> {
    match path {
        Some(p) => fs::write(p, csv).map_err(|e| Error::io(p, e)),
        None => Ok(()),
    }
}

fn train_cognn_cmd(a: TrainCognnArgs, seed: u64, out: &mut dyn Write) -> CmdResult {
    let mut config = match &a.config {
        Some(p) => config_from_text(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?,
        None => CogNNConfig::default(),
    };
    config.architecture = match a.architecture {
        ArchArg::CoGuided => Architecture::CoGuided,
        ArchArg::Single => Architecture::Single,
    };
    config.seed = seed;
    if let Some(e) = a.epochs {
        config.max_epochs = e;
    }
    config.apply(&overrides(&a.overrides)?)?;
    let train = sentences_from_docs(&read_corpus(&a.train)?)?;
    let dev = sentences_from_docs(&read_corpus(&a.dev)?)?;
    let outcome = cognn::train(&train, &dev, config)?;
    outcome.model.save(&a.out)?;
    write_metrics(&a.metrics, metrics_csv(&outcome.log))?;
    let dev_eval = cognn::evaluate(&outcome.model, &dev)?;
    writeln!(out, "best epoch {} of {}", outcome.best_epoch, outcome.log.len())?;
    writeln!(out, "dev token {}", dev_eval.token)?;
    writeln!(out, "dev name  {}", dev_eval.name)?;
    writeln!(out, "saved {}", a.out.display())?;
    Ok(())
}

fn train_isbert_cmd(a: TrainIsbertArgs, seed: u64, out: &mut dyn Write) -> CmdResult {
    let mut config = IsConfig {
        overlap: a.overlap,
        hops: a.hops,
        encoder: a.encoder,
        seed,
        ..IsConfig::default()
    };
    if let Some(c) = a.capacity {
        config.capacity = c;
    }
    if let Some(e) = a.epochs {
        config.max_epochs = e;
    }
    config.apply(&overrides(&a.overrides)?)?;
    config.validate()?;
    let train = read_corpus(&a.train)?;
    let dev = read_corpus(&a.dev)?;
    let outcome = train_isbert(&train, &dev, config)?;
    outcome.model.save(&a.out)?;
    let mut csv = String::from("epoch,loss,dev_token_f1,dev_name_f1\n");
    for e in &outcome.log {
        csv.push_str(&format!("{},{:.6},{:.6},{:.6}\n", e.epoch, e.loss, e.dev_token_f1, e.dev_name_f1));
    }
    write_metrics(&a.metrics, csv)?;
    let prepared = dev
        .iter()
        .map(|d| PreparedDocument::from_annotated(d, &outcome.model.vocab))
        .collect::<Result<Vec<_>>>()?;
    let eval = evaluate_documents(&outcome.model, &prepared)?;
    writeln!(out, "best epoch {} of {}", outcome.best_epoch, outcome.log.len())?;
    writeln!(out, "dev token {}", eval.token)?;
    writeln!(out, "dev name  {}", eval.name)?;
    writeln!(out, "saved {}", a.out.display())?;
    Ok(())
}

fn predict_cmd(a: PredictArgs, out: &mut dyn Write) -> CmdResult {
    let model = AnyModel::load(&a.model)?;
    let docs = read_corpus_raw(&a.corpus)?;
    let mut predicted = Vec::with_capacity(docs.len());
    for d in &docs {
        let found = suggestions(&d.text, &model.predict_document(&d.doc_id, &d.text)?);
        match &a.out {
            Some(_) => predicted.push(AnnotatedDocument {
                records: prediction_records(&found),
                ..d.clone()
            }),
            None => writeln!(
                out,
                "{}",
                serde_json::json!({ "id": d.doc_id, "suggestions": found })
            )?,
        }
    }
    if let Some(dir) = &a.out {
        write_corpus(&predicted, dir)?;
        writeln!(out, "wrote {} documents to {}", predicted.len(), dir.display())?;
    }
    Ok(())
}

/// Documents of two corpora paired by id; both sides must hold the same ids and texts.
fn paired(a: &Path, b: &Path) -> Result<Vec<(AnnotatedDocument, AnnotatedDocument)>> {
    let left = read_corpus(a)?;
    let mut right: BTreeMap<String, AnnotatedDocument> = read_corpus(b)?.into_iter().map(|d| (d.doc_id.clone(), d)).collect();
    if left.len() != right.len() {
        return Err(Error::LengthMismatch {
            what: "documents in the two corpora",
            left: left.len(),
            right: right.len(),
        });
    }
    left.into_iter()
        .map(|d| {
            let other = right
                .remove(&d.doc_id)
                .ok_or_else(|| Error::TextMismatch(format!("{} missing from {}", d.doc_id, b.display())))?;
            if other.text != d.text {
                return Err(Error::TextMismatch(d.doc_id.clone()));
            }
            Ok((d, other))
        })
        .collect()
}

fn eval_cmd(a: EvalArgs, out: &mut dyn Write) -> CmdResult {
    let mut report = PrfReport::default();
    for (pred, gold) in paired(&a.pred, &a.gold)? {
        let r = match a.level {
            Level::Token => {
                let mode = if a.fine { TokenMode::FineGrained } else { TokenMode::SpanOnly };
                token_prf(&pred.token_labels()?.1, &gold.token_labels()?.1, mode)?
            }
            Level::Name => name_prf(&pred.gold_spans()?, &gold.gold_spans()?, a.strict),
        };
        report = report.merge(&r);
    }
    writeln!(out, "level,{}", PrfReport::csv_header())?;
    let level = match a.level {
        Level::Token => "token",
        Level::Name => "name",
    };
    writeln!(out, "{level},{}", report.csv_row())?;
    Ok(())
}

fn synth_cmd(a: SynthArgs, seed: u64, out: &mut dyn Write) -> CmdResult {
    let d = SynthParams::default();
    let params = SynthParams {
        num_docs: a.docs,
        min_tokens: a.min_tokens.unwrap_or(d.min_tokens),
        max_tokens: a.max_tokens.unwrap_or(d.max_tokens),
        context_richness: a.richness.unwrap_or(d.context_richness),
        repetition_rate: a.repetition.unwrap_or(d.repetition_rate),
        citation_rate: a.citation_rate.unwrap_or(d.citation_rate),
        ..d
    };
    if params.min_tokens > params.max_tokens {
        return Err(Failure::Usage("--min-tokens exceeds --max-tokens".into()));
    }
    for (name, p) in [
        ("richness", params.context_richness),
        ("repetition", params.repetition_rate),
        ("citation-rate", params.citation_rate),
    ] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Failure::Usage(format!("--{name} must lie in [0, 1]")));
        }
    }
    let docs = synth_generate(seed, &params);
    write_corpus(&docs, &a.out)?;
    writeln!(out, "wrote {} documents to {}", docs.len(), a.out.display())?;
    Ok(())
}

fn chunk_inspect_cmd(a: ChunkInspectArgs, out: &mut dyn Write) -> CmdResult {
    let (doc_id, text) = match (&a.text, &a.corpus, &a.doc) {
        (Some(p), _, _) => (
            p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
            fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
        ),
        (None, Some(root), Some(id)) => {
            let d = crate::corpus::read_document_raw(&root.join(id))?;
            (d.doc_id, d.text)
        }
        _ => return Err(Failure::Usage("give --text FILE or --corpus DIR --doc ID".into())),
    };
    let config = IsConfig {
        overlap: a.overlap,
        capacity: a.capacity,
        ..IsConfig::default()
    };
    let vocab = match &a.model {
        Some(p) => IsBertModel::load(p)?.vocab,
        None => IsBertModel::build_vocab(&[AnnotatedDocument::new(doc_id.clone(), text.clone())], usize::MAX),
    };
    let pieces = DocumentPieces::from_tokenized(doc_id.clone(), &text, &tokenize_document(&text, &vocab));
    let chunked = chunk_document(&pieces, config.capacity, &config.policy())?;
    writeln!(
        out,
        "{doc_id}: {} pieces, {} sentences, capacity {}, overlap {} -> {} chunks",
        pieces.len(),
        pieces.sentence_ends.len(),
        chunked.capacity,
        chunked.effective_k,
        chunked.chunks.len()
    )?;
    for (i, c) in chunked.chunks.iter().enumerate() {
        writeln!(out, "{i:3} {c}")?;
    }
    Ok(())
}

fn annotate_cmd(c: AnnotateCommand, out: &mut dyn Write) -> CmdResult {
    let load = |t: &DocArgs| crate::corpus::read_document_raw(&t.corpus.join(&t.doc));
    match c {
        AnnotateCommand::GroupLabel(a) => {
            let doc = load(&a.target)?;
            let template: NameTemplate = a.template.parse()?;
            let labels: Vec<TokenLabel> = a.labels.iter().map(|l| l.trim().parse()).collect::<Result<_>>()?;
            let (updated, report) = annotate::group_label(&doc, &template, &labels)?;
            if !a.dry_run {
                write_document(&a.target.corpus, &updated)?;
            }
            writeln!(out, "{}", serde_json::to_string_pretty(&report).map_err(Error::from)?)?;
        }
        AnnotateCommand::Index(a) => {
            let doc = load(&a.target)?;
            let positions = annotate::index_positions(&doc.text, &a.name, a.ignore_case);
            writeln!(out, "{}", serde_json::to_string(&positions).map_err(Error::from)?)?;
        }
        AnnotateCommand::Mask(a) => {
            write!(out, "{}", annotate::mask(&load(&a)?)?)?;
        }
        AnnotateCommand::Validate(a) => {
            let docs = match &a.doc {
                Some(id) => vec![crate::corpus::read_document_raw(&a.corpus.join(id))?],
                None => read_corpus_raw(&a.corpus)?,
            };
            let mut count = 0;
            for d in &docs {
                for v in annotate::validate(d).violations {
                    writeln!(out, "{v}")?;
                    count += 1;
                }
            }
            if count > 0 {
                return Err(Failure::Validation(format!("{count} violations in {} documents", docs.len())));
            }
            writeln!(out, "{} documents valid", docs.len())?;
        }
        AnnotateCommand::Compare(a) => {
            let pairs = paired(&a.a, &a.b)?;
            let (mut la, mut lb) = (Vec::new(), Vec::new());
            let mut total = 0;
            for (x, y) in &pairs {
                for d in annotate::compare(x, y)? {
                    writeln!(out, "{}", serde_json::to_string(&d).map_err(Error::from)?)?;
                    total += 1;
                }
                let (p, q) = annotate::paired_token_labels(x, y)?;
                la.extend(p);
                lb.extend(q);
            }
            let kappa = cohen_kappa(&la, &lb).map_or_else(|_| "undefined".to_string(), |k| format!("{k:.4}"));
            writeln!(out, "{total} disagreements over {} documents, token kappa {kappa}", pairs.len())?;
        }
    }
    Ok(())
}

fn serve_cmd(a: ServeArgs, out: &mut dyn Write) -> CmdResult {
    let model = a.model.as_ref().map(AnyModel::load).transpose()?;
    let service = Arc::new(Service::open(&a.corpus, model)?);
    let server = HttpServer::bind(&format!("{}:{}", a.host, a.port))?;
    let addr = server.local_addr().map_or_else(|| format!("{}:{}", a.host, a.port), |s| s.to_string());
    writeln!(out, "serving {} documents on http://{addr}", service.document_ids().len())?;
    out.flush()?;
    server.run(service, a.workers);
    Ok(())
}
