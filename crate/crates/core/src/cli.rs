//! The `chainex` command line.
//!
//! ```text
//! chainex gen      --out corpus.jsonl [--preset hard] [--seed 7]
//! chainex oracle   --in corpus.jsonl --out oracle.jsonl [--criterion q-overlap]
//! chainex stats    --in oracle.jsonl
//! chainex train    --train a.jsonl --dev b.jsonl --out model.json [--task unordered]
//! chainex extract  --in b.jsonl --model model.json --out chains.jsonl
//! chainex eval     --in b.jsonl --pred chains.jsonl
//! ```
//!
//! `--config FILE` reads a JSON object whose keys are flag names of the
//! chosen subcommand (`max_len` or `max-len`); flags given on the command
//! line win over the file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{load_examples, read_jsonl, write_examples, write_jsonl, Example, OracleStatus};
use crate::error::{Error, Result};
use crate::graph::{build_graph, GraphDump};
use crate::entities::build_entity_index;
use crate::metrics::{aggregate, example_rows};
use crate::model::beam::{extract_chains, union_top_k, BeamConfig};
use crate::model::encoder::EncoderMode;
use crate::model::params::ModelParams;
use crate::model::scorer::{predict_candidate, score_candidates};
use crate::oracle::{derive_oracle, Criterion, OracleConfig};
use crate::syngen::{generate_corpus, GenConfig};
use crate::train::{
    train_answer_scorer, train_extractor, train_unordered, unordered_evidence, TrainConfig,
};

#[derive(Debug, Parser)]
#[command(name = "chainex", version, about = "Reasoning-chain extraction for multi-hop QA")]
#[command(args_override_self = true)]
struct Cli {
    /// Threads for per-example work (output order never changes).
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,

    /// JSON file of flag values for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus with planted chains.
    Gen(GenArgs),
    /// Annotate every example with its oracle chain.
    Oracle(OracleArgs),
    /// Statistics of the oracle chains of an annotated corpus.
    Stats(StatsArgs),
    /// Train the chain extractor, the unordered baseline or the answer scorer.
    Train(TrainArgs),
    /// Decode chains with a trained model.
    Extract(ExtractArgs),
    /// Score extracted evidence against a corpus.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    Default,
    Hard,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "default")]
    preset: Preset,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    num_examples: Option<usize>,
    #[arg(long)]
    num_paragraphs: Option<usize>,
    #[arg(long)]
    sentences_per_paragraph: Option<usize>,
    #[arg(long)]
    min_chain_len: Option<usize>,
    #[arg(long)]
    max_chain_len: Option<usize>,
    #[arg(long)]
    num_candidates: Option<usize>,
    #[arg(long)]
    entity_vocab: Option<usize>,
    #[arg(long)]
    filler_vocab: Option<usize>,
    #[arg(long)]
    distractor_entity_rate: Option<f64>,
    #[arg(long)]
    explicit_entities: bool,
}

#[derive(Debug, Args)]
struct OracleOpts {
    #[arg(long, value_enum, default_value = "shortest")]
    criterion: CriterionArg,
    #[arg(long, default_value_t = crate::graph::DEFAULT_MAX_CHAIN_LEN)]
    max_len: usize,
    #[arg(long, default_value_t = crate::entities::DEFAULT_COMMON_ENTITY_THRESHOLD)]
    threshold: usize,
}

impl OracleOpts {
    fn config(&self) -> Result<OracleConfig> {
        let c = OracleConfig {
            criterion: self.criterion.into(),
            max_len: self.max_len,
            threshold: self.threshold,
            ..OracleConfig::default()
        };
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CriterionArg {
    Shortest,
    QOverlap,
}

impl From<CriterionArg> for Criterion {
    fn from(c: CriterionArg) -> Self {
        match c {
            CriterionArg::Shortest => Criterion::Shortest,
            CriterionArg::QOverlap => Criterion::QOverlap,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Para,
    Sent,
}

impl From<ModeArg> for EncoderMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Para => EncoderMode::Para,
            ModeArg::Sent => EncoderMode::Sent,
        }
    }
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    oracle: OracleOpts,
    /// Also write each example's sentence graph as JSONL.
    #[arg(long)]
    graph_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Used for examples without precomputed oracle fields.
    #[command(flatten)]
    oracle: OracleOpts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Task {
    Chain,
    Unordered,
    Answer,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch JSONL log; stdout when omitted.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "chain")]
    task: Task,
    /// Trained extractor supplying evidence for `--task answer`.
    #[arg(long)]
    extractor: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "para")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "shortest")]
    criterion: CriterionArg,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    adam_eps: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    clip_norm: Option<f64>,
    #[arg(long)]
    beam: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    length_norm: bool,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    union_cap: Option<usize>,
}

impl TrainArgs {
    fn config(&self) -> Result<TrainConfig> {
        let d = TrainConfig::default();
        let c = TrainConfig {
            learning_rate: self.lr.unwrap_or(d.learning_rate),
            beta1: self.beta1.unwrap_or(d.beta1),
            beta2: self.beta2.unwrap_or(d.beta2),
            epsilon: self.adam_eps.unwrap_or(d.epsilon),
            epochs: self.epochs.unwrap_or(d.epochs),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            seed: self.seed.unwrap_or(d.seed),
            criterion: self.criterion.into(),
            mode: self.mode.into(),
            beam_size: self.beam.unwrap_or(d.beam_size),
            max_steps: self.max_steps.unwrap_or(d.max_steps),
            length_norm: self.length_norm,
            embed_dim: self.embed_dim.unwrap_or(d.embed_dim),
            hidden_dim: self.hidden_dim.unwrap_or(d.hidden_dim),
            clip_norm: self.clip_norm.unwrap_or(d.clip_norm),
            union_k: self.top_k.unwrap_or(d.union_k),
            union_cap: self.union_cap.unwrap_or(d.union_cap),
        };
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
struct ExtractArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// The model is an unordered baseline: the union holds its `--union-cap`
    /// most relevant sentences.
    #[arg(long)]
    unordered: bool,
    #[arg(long, value_enum, default_value = "para")]
    mode: ModeArg,
    #[arg(long, default_value_t = crate::model::beam::DEFAULT_BEAM_SIZE)]
    beam: usize,
    #[arg(long, default_value_t = crate::graph::DEFAULT_MAX_CHAIN_LEN)]
    max_steps: usize,
    #[arg(long)]
    length_norm: bool,
    /// Chains merged into the union.
    #[arg(long, default_value_t = crate::model::beam::DEFAULT_UNION_K)]
    top_k: usize,
    #[arg(long, default_value_t = crate::model::beam::DEFAULT_UNION_CAP)]
    union_cap: usize,
    /// Answer scorer; adds a `prediction` candidate index per example.
    #[arg(long)]
    scorer: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EvidenceArg {
    Union,
    Top1,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "union")]
    evidence: EvidenceArg,
    /// Also write one JSONL row per evaluated example.
    #[arg(long)]
    per_example: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainOut {
    pub sentences: Vec<usize>,
    pub score: f64,
}

/// One line of `extract` output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractRecord {
    pub id: String,
    pub chains: Vec<ChainOut>,
    pub union: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction: Option<usize>,
}

/// Splices `--config` values in right after the subcommand name so that
/// later command-line flags override them.
fn expand_config(argv: &[String]) -> Result<Vec<String>> {
    let mut config_path = None;
    for (i, a) in argv.iter().enumerate() {
        if a == "--config" {
            config_path = argv.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            config_path = Some(p.to_string());
        }
    }
    let Some(path) = config_path else {
        return Ok(argv.to_vec());
    };
    let text = fs::read_to_string(&path).map_err(|e| Error::Config(format!("{path}: {e}")))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{path}: {e}")))?;
    let object = value
        .as_object()
        .ok_or_else(|| Error::Config(format!("{path}: expected a JSON object")))?;

    let mut flags = Vec::new();
    for (key, v) in object {
        let flag = format!("--{}", key.replace('_', "-"));
        match v {
            serde_json::Value::Bool(true) => flags.push(flag),
            serde_json::Value::Bool(false) | serde_json::Value::Null => {}
            serde_json::Value::String(s) => flags.extend([flag, s.clone()]),
            serde_json::Value::Number(n) => flags.extend([flag, n.to_string()]),
            _ => return Err(Error::Config(format!("{path}: value of `{key}` must be a scalar"))),
        }
    }
    let names: Vec<String> = Cli::command().get_subcommands().map(|c| c.get_name().to_string()).collect();
    let at = argv
        .iter()
        .skip(1)
        .position(|a| names.contains(a))
        .map(|p| p + 2)
        .ok_or_else(|| Error::Config("--config needs a subcommand".into()))?;
    let mut out = argv[..at].to_vec();
    out.extend(flags);
    out.extend_from_slice(&argv[at..]);
    Ok(out)
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    if workers == 0 {
        return Err(Error::Config("--workers must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Applies `f` to every item on `workers` threads, keeping input order.
fn map_ordered<T, U, F>(workers: usize, items: &[T], f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> Result<U> + Sync + Send,
{
    if workers == 1 {
        return items.iter().map(f).collect();
    }
    pool(workers)?.install(|| items.par_iter().map(f).collect())
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!("input file not found: {}", path.display())))
    }
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn run_gen(args: GenArgs, workers: usize) -> Result<()> {
    let mut c = match args.preset {
        Preset::Default => GenConfig::default(),
        Preset::Hard => GenConfig::hard(),
    };
    macro_rules! set {
        ($($field:ident),*) => { $(if let Some(v) = args.$field { c.$field = v; })* };
    }
    set!(seed, num_examples, num_paragraphs, sentences_per_paragraph, min_chain_len, max_chain_len,
         num_candidates, entity_vocab, filler_vocab, distractor_entity_rate);
    c.explicit_entities |= args.explicit_entities;
    c.validate()?;
    let corpus = pool(workers)?.install(|| generate_corpus(&c))?;
    write_examples(&args.out, &corpus)
}

fn annotate(example: &Example, config: &OracleConfig) -> Example {
    let mut ex = example.clone();
    ex.oracle = Some(derive_oracle(example, config));
    ex
}

fn run_oracle(args: OracleArgs, workers: usize) -> Result<()> {
    let config = args.oracle.config()?;
    require_file(&args.input)?;
    let examples = load_examples(&args.input)?;
    let annotated = map_ordered(workers, &examples, |ex| Ok(annotate(ex, &config)))?;
    write_examples(&args.out, &annotated)?;
    if let Some(path) = &args.graph_out {
        #[derive(Serialize)]
        struct GraphLine {
            id: String,
            #[serde(flatten)]
            graph: GraphDump,
        }
        let lines = map_ordered(workers, &examples, |ex| {
            let graph = build_graph(ex, &build_entity_index(ex, config.threshold));
            Ok(GraphLine {
                id: ex.id.clone(),
                graph: graph.dump(),
            })
        })?;
        write_jsonl(path, &lines)?;
    }
    Ok(())
}

fn run_stats(args: StatsArgs, workers: usize) -> Result<()> {
    let config = args.oracle.config()?;
    require_file(&args.input)?;
    let examples = load_examples(&args.input)?;
    let evidence = map_ordered(workers, &examples, |ex| {
        let oracle = match &ex.oracle {
            Some(o) => o.clone(),
            None => derive_oracle(ex, &config),
        };
        Ok(match oracle.status {
            OracleStatus::Ok => oracle.chain,
            OracleStatus::Unreachable => None,
        })
    })?;
    let rows = example_rows(&examples, &evidence, None)?;
    write_json(args.out.as_deref(), &aggregate(&examples, &rows))
}

fn run_train(args: TrainArgs) -> Result<()> {
    let config = args.config()?;
    for p in [&args.train, &args.dev].into_iter().chain(args.extractor.as_ref()) {
        require_file(p)?;
    }
    if args.task == Task::Answer && args.extractor.is_none() {
        return Err(Error::Config("--task answer needs --extractor".into()));
    }
    let train = load_examples(&args.train)?;
    let dev = load_examples(&args.dev)?;
    let outcome = match args.task {
        Task::Chain => train_extractor(&config, &train, &dev)?,
        Task::Unordered => train_unordered(&config, &train, &dev)?,
        Task::Answer => {
            let extractor = ModelParams::load(args.extractor.as_ref().expect("checked"))?;
            train_answer_scorer(&config, &extractor, &train, &dev)?
        }
    };
    outcome.params.save(&args.out)?;
    match &args.log {
        Some(path) => write_jsonl(path, &outcome.log)?,
        None => {
            let mut out = std::io::stdout().lock();
            for line in &outcome.log {
                writeln!(out, "{}", serde_json::to_string(line)?).map_err(|e| Error::io("<stdout>", e))?;
            }
        }
    }
    if outcome.skipped > 0 {
        eprintln!("skipped {} training examples without a target", outcome.skipped);
    }
    Ok(())
}

fn run_extract(args: ExtractArgs, workers: usize) -> Result<()> {
    let beam = BeamConfig {
        beam_size: args.beam,
        max_steps: args.max_steps,
        length_norm: args.length_norm,
    };
    if beam.beam_size == 0 || beam.max_steps == 0 || args.top_k == 0 || args.union_cap == 0 {
        return Err(Error::Config("--beam, --max-steps, --top-k and --union-cap must be at least 1".into()));
    }
    for p in [&args.input, &args.model].into_iter().chain(args.scorer.as_ref()) {
        require_file(p)?;
    }
    let examples = load_examples(&args.input)?;
    let model = ModelParams::load(&args.model)?;
    let scorer = args.scorer.as_ref().map(ModelParams::load).transpose()?;
    let mode: EncoderMode = args.mode.into();

    let records = map_ordered(workers, &examples, |ex| {
        let (chains, union) = if args.unordered {
            let picked = unordered_evidence(&model, ex, mode, args.union_cap);
            let chain = ChainOut {
                sentences: picked.clone(),
                score: 0.0,
            };
            (vec![chain], picked)
        } else {
            let chains = extract_chains(&model, ex, mode, &beam)?;
            let union = union_top_k(&chains, args.top_k, args.union_cap);
            let chains = chains
                .into_iter()
                .map(|c| ChainOut {
                    score: c.score.unwrap_or(0.0),
                    sentences: c.sentences,
                })
                .collect();
            (chains, union)
        };
        let prediction = match &scorer {
            Some(s) if ex.candidates.is_some() => predict_candidate(&score_candidates(s, ex, &union)?),
            _ => None,
        };
        Ok(ExtractRecord {
            id: ex.id.clone(),
            chains,
            union,
            prediction,
        })
    })?;
    write_jsonl(&args.out, &records)
}

fn run_eval(args: EvalArgs, workers: usize) -> Result<()> {
    require_file(&args.input)?;
    require_file(&args.pred)?;
    let examples = load_examples(&args.input)?;
    let preds: Vec<ExtractRecord> = read_jsonl(&args.pred)?;
    if preds.len() != examples.len() {
        return Err(Error::Model(format!(
            "{} predictions for {} examples",
            preds.len(),
            examples.len()
        )));
    }
    if let Some((k, (p, e))) = preds.iter().zip(&examples).enumerate().find(|(_, (p, e))| p.id != e.id) {
        return Err(Error::Malformed {
            line: k + 1,
            message: format!("prediction id `{}` does not match example `{}`", p.id, e.id),
        });
    }
    let evidence = map_ordered(workers, &preds, |p| {
        Ok(Some(match args.evidence {
            EvidenceArg::Union => p.union.clone(),
            EvidenceArg::Top1 => p.chains.first().map(|c| c.sentences.clone()).unwrap_or_default(),
        }))
    })?;
    let predictions: Vec<Option<usize>> = preds.iter().map(|p| p.prediction).collect();
    let has_predictions = predictions.iter().any(Option::is_some);
    let rows = example_rows(&examples, &evidence, has_predictions.then_some(predictions.as_slice()))?;
    if let Some(path) = &args.per_example {
        write_jsonl(path, &rows)?;
    }
    write_json(args.out.as_deref(), &aggregate(&examples, &rows))
}

/// Runs the tool on `argv` (program name first) and returns the exit code:
/// 0 on success, 1 for usage errors, 2 for data errors.
pub fn dispatch(argv: &[String]) -> i32 {
    let argv = match expand_config(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("chainex: {e}");
            return 1;
        }
    };
    let matches = match Cli::command().try_get_matches_from(&argv) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return 1;
        }
    };
    let workers = cli.workers;
    let result = match cli.command {
        Command::Gen(a) => run_gen(a, workers),
        Command::Oracle(a) => run_oracle(a, workers),
        Command::Stats(a) => run_stats(a, workers),
        Command::Train(a) => run_train(a),
        Command::Extract(a) => run_extract(a, workers),
        Command::Eval(a) => run_eval(a, workers),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("chainex: {e}");
            if e.is_data_error() {
                2
            } else {
                1
            }
        }
    }
}
