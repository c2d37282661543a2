//! Command-line entry points for every pipeline stage.
//!
//! Exit status: 0 on success, 1 on usage or configuration errors, 2 when
//! the input data or an artifact is unusable.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use codesearch::bench::{load_ground_truth, run_benchmark, save_ground_truth, Cutoffs, GroundTruthQuery, SearchFn};
use codesearch::corpus::{load_collection, PythonLexer, SnippetCollection};
use codesearch::embed::{build_training_corpus, compute_idf_with, train_embeddings, EmbeddingTable, NgramConfig, TrainSpec};
use codesearch::encoders::{save_unif_params, train_unif, MarginSpec, NcsQueryEncoder, UnifCodeEncoder, UnifParams};
use codesearch::index::{build_index, EnsembleSpec, Half};
use codesearch::lexical::{Bm25Field, Bm25Params, Bm25Searcher};
use codesearch::miner::{
    build_ground_truth, group_duplicates, load_duplicate_edges, load_posts, mine_snippets, sample_training_pairs,
    BalancedValidator, IndentationValidator, MineConfig, OverlapFilter, SnippetValidator, TrainingPair,
};
use codesearch::pipeline::{bm25_search_fn, description_lines, multimodal_pairs, nbow_half, EnsembleModel};
use codesearch::tuner::{train_duplicate_head, TrainableNbow, TuneSpec};

use crate::config::Config;
use crate::http;
use crate::manifest::{manifest_path, save_idf, HalfSource, IndexManifest};
use crate::service::{SearchService, DEFAULT_K};

/// A problem with how the command was invoked rather than with its data.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

#[derive(Debug, Parser)]
#[command(name = "codesearch", version, about = "Annotated code search pipeline and search service")]
pub struct Cli {
    /// Random seed for every stochastic stage (config key `seed`, default 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Flat `key = value` file supplying defaults for options.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mine a snippet collection from a posts dump.
    Ingest(IngestArgs),
    /// Group duplicate posts into ground-truth queries and training pairs.
    MineDuplicates(MineDuplicatesArgs),
    /// Write an embedding training corpus, one tokenized line per sentence.
    BuildCorpus(BuildCorpusArgs),
    /// Train subword skip-gram embeddings on a tokenized corpus.
    TrainEmbeddings(TrainEmbeddingsArgs),
    /// Train the attention-weighted code encoder with a margin loss.
    TrainUnif(TrainUnifArgs),
    /// Fine-tune description embeddings on duplicate title pairs.
    Finetune(FinetuneArgs),
    /// Encode a snippet collection into an ensemble index.
    BuildIndex(BuildIndexArgs),
    /// Run one query against an index.
    Search(SearchArgs),
    /// Evaluate an index against ground-truth queries.
    Eval(EvalArgs),
    /// Serve the search API over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ValidatorKind {
    Balanced,
    Indentation,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub posts: PathBuf,
    /// Comma-separated tag whitelist.
    #[arg(long, value_delimiter = ',', required = true)]
    pub tags: Vec<String>,
    #[arg(long)]
    pub output: PathBuf,
    /// Post → snippet ids map; defaults to `<output>.sources.json`.
    #[arg(long)]
    pub sources: Option<PathBuf>,
    #[arg(long)]
    pub per_tag_cap: Option<usize>,
    #[arg(long)]
    pub per_post_cap: Option<usize>,
    #[arg(long, value_enum, default_value_t = ValidatorKind::Balanced)]
    pub validator: ValidatorKind,
}

#[derive(Debug, Args)]
pub struct MineDuplicatesArgs {
    #[arg(long)]
    pub posts: PathBuf,
    /// Tab-separated duplicate post id pairs.
    #[arg(long)]
    pub edges: PathBuf,
    #[arg(long)]
    pub collection: PathBuf,
    /// Map written by `ingest`; defaults to `<collection>.sources.json`.
    #[arg(long)]
    pub sources: Option<PathBuf>,
    #[arg(long)]
    pub queries_out: PathBuf,
    #[arg(long)]
    pub pairs_out: Option<PathBuf>,
    /// Drop queries whose relative word overlap with a relevant
    /// description exceeds this.
    #[arg(long)]
    pub max_overlap: Option<f64>,
    #[arg(long)]
    pub negatives: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CorpusMode {
    /// Lemmatized descriptions (plus extra titles).
    Descriptions,
    /// Description and code tokens of each pair.
    Multimodal,
}

#[derive(Debug, Args)]
pub struct BuildCorpusArgs {
    #[arg(long)]
    pub collection: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value_t = CorpusMode::Multimodal)]
    pub mode: CorpusMode,
    /// Disable the three-ordering context augmentation (multimodal mode).
    #[arg(long)]
    pub no_augment: bool,
    /// Posts dump whose titles are added in descriptions mode.
    #[arg(long)]
    pub titles: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    Default,
    Nbow,
    Ncs,
}

#[derive(Debug, Args)]
pub struct TrainEmbeddingsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value_t = Preset::Default)]
    pub preset: Preset,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub negatives: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub min_count: Option<usize>,
    /// Also compute code-token idf over this collection.
    #[arg(long, requires = "idf_out")]
    pub idf_collection: Option<PathBuf>,
    #[arg(long, requires = "idf_collection")]
    pub idf_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainUnifArgs {
    #[arg(long)]
    pub collection: PathBuf,
    /// Initial token embeddings.
    #[arg(long)]
    pub init: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Ground truth scored after each validation interval; the best
    /// checkpoint is kept.
    #[arg(long)]
    pub validation_queries: Option<PathBuf>,
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub negatives: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    /// Training pairs written by `mine-duplicates`.
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub init: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub head_out: PathBuf,
    /// Collection and ground truth used to select the best snapshot.
    #[arg(long, requires = "validation_queries")]
    pub validation_collection: Option<PathBuf>,
    #[arg(long, requires = "validation_collection")]
    pub validation_queries: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub eval_every: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BuildIndexArgs {
    #[arg(long)]
    pub collection: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Description half: nbow:<table>, ncs:<table>:<idf>, unif:<params>
    /// or external:<vectors>.
    #[arg(long)]
    pub desc: Option<HalfSource>,
    /// Code half, same forms as --desc.
    #[arg(long)]
    pub code: Option<HalfSource>,
    #[arg(long)]
    pub lambda_desc: Option<f64>,
    #[arg(long)]
    pub lambda_code: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub query: String,
    #[arg(long)]
    pub k: Option<usize>,
    /// Print the response as JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Bm25Baseline {
    Code,
    Description,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    /// Also evaluate BM25 baselines over the index's collection.
    #[arg(long, value_enum)]
    pub bm25: Vec<Bm25Baseline>,
    /// Name of the index's row in the report.
    #[arg(long, default_value = "index")]
    pub name: String,
    /// Also write one JSON record per model to this file.
    #[arg(long)]
    pub jsonl: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// host:port (config key `bind`, default 127.0.0.1:8080).
    #[arg(long)]
    pub bind: Option<SocketAddr>,
    /// Allowed CORS origin; repeatable. Any origin when absent.
    #[arg(long)]
    pub cors_origin: Vec<String>,
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit status. Command output goes to `out`.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                1
            } else {
                2
            }
        }
    }
}

struct RunContext {
    config: Config,
    seed: u64,
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let config = match &cli.config {
        Some(path) => Config::load(path).map_err(|e| usage(e.to_string()))?,
        None => Config::default(),
    };
    let seed = config.pick(cli.seed, "seed", 0).map_err(|e| usage(e.to_string()))?;
    let ctx = RunContext { config, seed };
    match cli.command {
        Command::Ingest(a) => ingest(&ctx, a, out),
        Command::MineDuplicates(a) => mine_duplicates(&ctx, a, out),
        Command::BuildCorpus(a) => build_corpus(a, out),
        Command::TrainEmbeddings(a) => train_embeddings_cmd(&ctx, a, out),
        Command::TrainUnif(a) => train_unif_cmd(&ctx, a, out),
        Command::Finetune(a) => finetune(&ctx, a, out),
        Command::BuildIndex(a) => build_index_cmd(&ctx, a, out),
        Command::Search(a) => search(&ctx, a, out),
        Command::Eval(a) => eval(a, out),
        Command::Serve(a) => serve(&ctx, a),
    }
}

impl RunContext {
    fn pick<T: std::str::FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T> {
        self.config.pick(flag, key, default).map_err(|e| usage(e.to_string()))
    }
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

fn write_json_lines<T: serde::Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_json_lines<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let mut items = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        items.push(serde_json::from_str(&line).with_context(|| format!("{} line {}", path.display(), i + 1))?);
    }
    Ok(items)
}

fn load_table(path: &Path) -> Result<EmbeddingTable> {
    EmbeddingTable::load_text(path, NgramConfig::default()).with_context(|| format!("loading {}", path.display()))
}

fn ingest(ctx: &RunContext, a: IngestArgs, out: &mut dyn Write) -> Result<()> {
    let posts = load_posts(&a.posts)?;
    let defaults = MineConfig::default();
    let validator: Arc<dyn SnippetValidator> = match a.validator {
        ValidatorKind::Balanced => Arc::new(BalancedValidator),
        ValidatorKind::Indentation => Arc::new(IndentationValidator),
    };
    let config = MineConfig {
        per_tag_cap: ctx.pick(a.per_tag_cap, "per_tag_cap", defaults.per_tag_cap)?,
        per_post_cap: ctx.pick(a.per_post_cap, "per_post_cap", defaults.per_post_cap)?,
        validator,
    };
    let tags: BTreeSet<String> = a.tags.into_iter().map(|t| t.trim().to_string()).filter(|t| !t.is_empty()).collect();
    if tags.is_empty() {
        return Err(usage("--tags needs at least one tag"));
    }
    let mined = mine_snippets(&posts, &tags, &config)?;
    mined.collection.save(&a.output)?;
    let sources = a.sources.unwrap_or_else(|| sidecar(&a.output, ".sources.json"));
    std::fs::write(&sources, serde_json::to_string_pretty(&mined.sources)?)
        .with_context(|| format!("writing {}", sources.display()))?;
    writeln!(
        out,
        "mined {} snippets from {} posts ({} duplicate snippets removed)",
        mined.collection.len(),
        posts.len(),
        mined.duplicates_removed
    )?;
    Ok(())
}

fn mine_duplicates(ctx: &RunContext, a: MineDuplicatesArgs, out: &mut dyn Write) -> Result<()> {
    let posts = load_posts(&a.posts)?;
    let edges = load_duplicate_edges(&a.edges)?;
    let collection = load_collection(&a.collection)?;
    let sources_path = a.sources.unwrap_or_else(|| sidecar(&a.collection, ".sources.json"));
    let text = std::fs::read_to_string(&sources_path).with_context(|| format!("reading {}", sources_path.display()))?;
    let sources: BTreeMap<String, Vec<String>> =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", sources_path.display()))?;
    let titles: HashMap<String, String> = posts.iter().map(|p| (p.id.clone(), p.title.clone())).collect();
    let groups = group_duplicates(&edges)?;
    let max_overlap = ctx.config.get::<f64>("max_overlap").map_err(|e| usage(e.to_string()))?;
    let filter = a.max_overlap.or(max_overlap).map(|max_relative| OverlapFilter { max_relative, config: Default::default() });
    let gt = build_ground_truth(&groups, &collection, &sources, &titles, filter.as_ref());
    save_ground_truth(&a.queries_out, &gt.queries)?;
    writeln!(
        out,
        "{} groups, {} queries ({} without snippets, {} without an unused title, {} filtered)",
        groups.len(),
        gt.queries.len(),
        gt.skipped_no_source,
        gt.skipped_no_query,
        gt.filtered
    )?;
    if let Some(path) = a.pairs_out {
        let negatives = ctx.pick(a.negatives, "negatives", TuneSpec::default().negatives_per_positive)?;
        let pairs = sample_training_pairs(&groups, &titles, negatives, ctx.seed)?;
        write_json_lines(&path, &pairs)?;
        writeln!(out, "{} training pairs", pairs.len())?;
    }
    Ok(())
}

fn build_corpus(a: BuildCorpusArgs, out: &mut dyn Write) -> Result<()> {
    let collection = load_collection(&a.collection)?;
    let lines = match a.mode {
        CorpusMode::Descriptions => {
            let mut texts: Vec<String> = collection.snippets().iter().map(|s| s.description.clone()).collect();
            if let Some(path) = &a.titles {
                texts.extend(load_posts(path)?.into_iter().map(|p| p.title));
            }
            description_lines(texts)
        }
        CorpusMode::Multimodal => {
            if a.titles.is_some() {
                return Err(usage("--titles only applies to --mode descriptions"));
            }
            let corpus = build_training_corpus(&multimodal_pairs(&collection, &PythonLexer), !a.no_augment);
            if corpus.skipped > 0 {
                log::warn!("skipped {} pairs with an empty side", corpus.skipped);
            }
            corpus.lines
        }
    };
    let mut w = BufWriter::new(File::create(&a.output).with_context(|| format!("creating {}", a.output.display()))?);
    for line in &lines {
        writeln!(w, "{}", line.join(" "))?;
    }
    w.flush()?;
    writeln!(out, "wrote {} lines to {}", lines.len(), a.output.display())?;
    Ok(())
}

fn read_corpus(path: &Path) -> Result<Vec<Vec<String>>> {
    let reader = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let mut lines = Vec::new();
    for line in reader.lines() {
        let tokens: Vec<String> = line?.split_whitespace().map(str::to_string).collect();
        if !tokens.is_empty() {
            lines.push(tokens);
        }
    }
    Ok(lines)
}

fn train_embeddings_cmd(ctx: &RunContext, a: TrainEmbeddingsArgs, out: &mut dyn Write) -> Result<()> {
    let base = match a.preset {
        Preset::Default => TrainSpec::default(),
        Preset::Nbow => TrainSpec::nbow(),
        Preset::Ncs => TrainSpec::ncs(),
    };
    let spec = TrainSpec {
        dim: ctx.pick(a.dim, "dim", base.dim)?,
        epochs: ctx.pick(a.epochs, "epochs", base.epochs)?,
        window: ctx.pick(a.window, "window", base.window)?,
        negatives: ctx.pick(a.negatives, "negatives", base.negatives)?,
        learning_rate: ctx.pick(a.learning_rate, "learning_rate", base.learning_rate)?,
        min_count: ctx.pick(a.min_count, "min_count", base.min_count)?,
        seed: ctx.seed,
        ngrams: base.ngrams,
    };
    let lines = read_corpus(&a.corpus)?;
    let table = train_embeddings(&lines, &spec)?;
    table.save_text(&a.output)?;
    writeln!(out, "trained {} token vectors of dim {} on {} lines", table.len(), table.dim(), lines.len())?;
    if let (Some(coll), Some(idf_out)) = (a.idf_collection, a.idf_out) {
        let idf = compute_idf_with(&load_collection(&coll)?, &PythonLexer)?;
        save_idf(&idf, &idf_out)?;
        writeln!(out, "idf over {} documents written to {}", idf.doc_count, idf_out.display())?;
    }
    Ok(())
}

/// MRR@10 of a code-only index encoded with `params`.
fn unif_validation_mrr(collection: &SnippetCollection, queries: &[GroundTruthQuery], params: &UnifParams) -> f64 {
    let half = Half::new(
        Arc::new(UnifCodeEncoder::new(Arc::new(params.clone()))),
        Arc::new(NcsQueryEncoder::new(Arc::new(params.table.clone()))),
    );
    let score = || -> Result<f64> {
        let model = EnsembleModel::build(collection, EnsembleSpec::code_only(half))?;
        let f = model.search_fn();
        let models: [(&str, &SearchFn<'_>); 1] = [("unif", f.as_ref())];
        Ok(run_benchmark(&models, queries, collection, &Cutoffs::default())?.reports[0].mrr)
    };
    score().unwrap_or_else(|e| {
        log::warn!("validation failed: {e:#}");
        0.0
    })
}

fn train_unif_cmd(ctx: &RunContext, a: TrainUnifArgs, out: &mut dyn Write) -> Result<()> {
    let collection = load_collection(&a.collection)?;
    let init = load_table(&a.init)?;
    let d = MarginSpec::default();
    let spec = MarginSpec {
        margin: ctx.pick(a.margin, "margin", d.margin)?,
        epochs: ctx.pick(a.epochs, "epochs", d.epochs)?,
        batch_size: ctx.pick(a.batch_size, "batch_size", d.batch_size)?,
        learning_rate: ctx.pick(a.learning_rate, "learning_rate", d.learning_rate)?,
        negatives_per_positive: ctx.pick(a.negatives, "negatives", d.negatives_per_positive)?,
        seed: ctx.seed,
        eval_every: ctx.pick(None, "eval_every", d.eval_every)?,
    };
    let queries = a.validation_queries.as_ref().map(load_ground_truth).transpose()?;
    let hook = |p: &UnifParams| unif_validation_mrr(&collection, queries.as_deref().unwrap_or_default(), p);
    let validation: Option<&codesearch::encoders::ValidationHook<'_>> = queries.as_ref().map(|_| &hook as _);
    let pairs = multimodal_pairs(&collection, &PythonLexer);
    let trained = train_unif(&pairs, &init, &spec, validation)?;
    save_unif_params(&a.output, &trained.params)?;
    if let Some(last) = trained.epoch_losses.last() {
        writeln!(out, "trained {} epochs, final mean loss {last:.6}", trained.epoch_losses.len())?;
    }
    if let Some((epoch, score)) = trained.best_validation() {
        writeln!(out, "best validation MRR {score:.4} after epoch {}", epoch + 1)?;
    }
    Ok(())
}

fn finetune(ctx: &RunContext, a: FinetuneArgs, out: &mut dyn Write) -> Result<()> {
    let pairs: Vec<TrainingPair> = read_json_lines(&a.pairs)?;
    let init = load_table(&a.init)?;
    let d = TuneSpec::default();
    let spec = TuneSpec {
        epochs: ctx.pick(a.epochs, "epochs", d.epochs)?,
        batch_size: ctx.pick(a.batch_size, "batch_size", d.batch_size)?,
        learning_rate: ctx.pick(a.learning_rate, "learning_rate", d.learning_rate)?,
        negatives_per_positive: d.negatives_per_positive,
        eval_every: ctx.pick(a.eval_every, "eval_every", d.eval_every)?,
        seed: ctx.seed,
    };
    let validation_data = match (&a.validation_collection, &a.validation_queries) {
        (Some(c), Some(q)) => Some((load_collection(c)?, load_ground_truth(q)?)),
        _ => None,
    };
    let hook = |m: &TrainableNbow, _: &codesearch::tuner::DupHead| -> f64 {
        let Some((collection, queries)) = &validation_data else { return 0.0 };
        let score = || -> Result<f64> {
            let model = EnsembleModel::build(collection, EnsembleSpec::description_only(nbow_half(Arc::new(m.to_table()))))?;
            let f = model.search_fn();
            let models: [(&str, &SearchFn<'_>); 1] = [("nbow", f.as_ref())];
            Ok(run_benchmark(&models, queries, collection, &Cutoffs::default())?.reports[0].mrr)
        };
        score().unwrap_or_else(|e| {
            log::warn!("validation failed: {e:#}");
            0.0
        })
    };
    let validation: Option<&codesearch::tuner::TuneValidation<'_, TrainableNbow>> =
        validation_data.as_ref().map(|_| &hook as _);
    let tuned = train_duplicate_head(TrainableNbow::new(init), &pairs, &spec, validation)?;
    tuned.model.to_table().save_text(&a.output)?;
    tuned.head.save(&a.head_out)?;
    writeln!(
        out,
        "loss {:.6} -> {:.6}; head w={:.4} b={:.4}; {} pairs skipped",
        tuned.initial_loss, tuned.final_loss, tuned.head.w, tuned.head.b, tuned.skipped_pairs
    )?;
    Ok(())
}

fn build_index_cmd(ctx: &RunContext, a: BuildIndexArgs, out: &mut dyn Write) -> Result<()> {
    if a.desc.is_none() && a.code.is_none() {
        return Err(usage("give --desc, --code or both"));
    }
    let lambda_desc = ctx.pick(a.lambda_desc, "lambda_desc", if a.desc.is_some() { 1.0 } else { 0.0 })?;
    let lambda_code = ctx.pick(a.lambda_code, "lambda_code", if a.code.is_some() { 1.0 } else { 0.0 })?;
    let mut manifest = IndexManifest { collection: a.collection, lambda_desc, lambda_code, desc: a.desc, code: a.code };
    manifest.absolutize()?;
    let collection = manifest.load_collection()?;
    let spec = manifest.load_spec()?;
    let report = build_index(&collection, &spec)?;
    report.index.save(&a.output)?;
    manifest.save(&manifest_path(&a.output))?;
    writeln!(
        out,
        "indexed {} snippets ({} excluded, {} zero description, {} zero code) into {}",
        report.index.len(),
        report.excluded.len(),
        report.zero_desc.len(),
        report.zero_code.len(),
        a.output.display()
    )?;
    Ok(())
}

fn search(ctx: &RunContext, a: SearchArgs, out: &mut dyn Write) -> Result<()> {
    let k = ctx.pick(a.k, "k", DEFAULT_K)?;
    let service = SearchService::open(&a.index)?;
    let response = service.search(&a.query, k).map_err(|e| {
        if e.is_client_error() {
            usage(e.to_string())
        } else {
            e.into()
        }
    })?;
    if a.json {
        writeln!(out, "{}", serde_json::to_string_pretty(&response)?)?;
    } else {
        write!(out, "{}", response.to_table())?;
    }
    Ok(())
}

fn eval(a: EvalArgs, out: &mut dyn Write) -> Result<()> {
    let service = SearchService::open(&a.index)?;
    let queries = load_ground_truth(&a.queries)?;
    let collection = service.collection();
    let mut searchers = Vec::new();
    for field in &a.bm25 {
        let (name, f) = match field {
            Bm25Baseline::Code => ("BM25_code", Bm25Field::Code),
            Bm25Baseline::Description => ("BM25_descr", Bm25Field::Description),
        };
        searchers.push((name, Bm25Searcher::build(collection, f, Bm25Params::default())?));
    }
    let mut fns: Vec<(&str, Box<SearchFn<'_>>)> = vec![(a.name.as_str(), service.model().search_fn())];
    fns.extend(searchers.iter().map(|(n, s)| (*n, bm25_search_fn(s))));
    let models: Vec<(&str, &SearchFn<'_>)> = fns.iter().map(|(n, f)| (*n, f.as_ref())).collect();
    let table = run_benchmark(&models, &queries, collection, &Cutoffs::default())?;
    write!(out, "{}", table.to_text())?;
    if let Some(path) = a.jsonl {
        std::fs::write(&path, table.to_jsonl()).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn serve(ctx: &RunContext, a: ServeArgs) -> Result<()> {
    let bind: SocketAddr = match a.bind {
        Some(b) => b,
        None => ctx.pick(None, "bind", "127.0.0.1:8080".parse().expect("valid default"))?,
    };
    let mut origins = a.cors_origin;
    if origins.is_empty() {
        if let Some(raw) = ctx.config.raw("cors_origin") {
            origins = raw.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
        }
    }
    let cors = http::cors_layer(&origins).map_err(usage)?;
    let service = Arc::new(SearchService::open(&a.index)?);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(http::serve(service, bind, cors)).with_context(|| format!("serving on {bind}"))
}
