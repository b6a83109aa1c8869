use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use embedlab::analogy::{parse_suite_with, AnalogyQuestion, ParseOptions};
use embedlab::analysis::{always_wrong, solved_errors, summarize_errors, topk_recovery, RecordSet};
use embedlab::corpus::{corpus_stats, TokenPattern};
use embedlab::sweep::{
    evaluate_and_save, figure_report, load_manifests, run_sweep, save_training_artifacts,
    RunManifest, RunStatus, SweepSpec,
};
use embedlab::trainer::SigmoidMode;
use embedlab::{
    train, EmbeddingSpace, Method, MethodConfig, ModelKind, TextCorpus, TokenizerConfig,
    TrainingConfig, Vocabulary,
};

#[derive(Parser)]
#[command(
    name = "embedlab",
    version,
    about = "Train word embeddings and evaluate them on analogies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Count sentences and tokens of a corpus
    Stats {
        corpus: PathBuf,
        #[command(flatten)]
        tokens: TokenArgs,
    },
    /// Count words and write the pruned vocabulary
    BuildVocab {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 5)]
        min_count: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        tokens: TokenArgs,
    },
    /// Train an SG or CBOW model and write vectors, vocabulary and log
    Train(TrainArgs),
    /// Print the nearest neighbors of a word
    Neighbors {
        #[arg(long)]
        vectors: PathBuf,
        #[arg(long)]
        word: String,
        #[arg(short, long, default_value_t = 10)]
        k: usize,
    },
    /// Answer an analogy suite and write reports and error records
    Eval(EvalArgs),
    /// Error analysis over evaluated run directories
    Analyze(AnalyzeArgs),
    /// Train and evaluate every configuration of a grid
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        /// Skip configurations that already finished
        #[arg(long)]
        resume: bool,
    },
    /// Tabulate accuracies by relation kind for every run of a sweep
    Report {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone, Copy)]
struct TokenArgs {
    /// Keep the original letter case
    #[arg(long)]
    keep_case: bool,
    /// Split on whitespace only instead of alphabetic runs
    #[arg(long)]
    whitespace_tokens: bool,
}

impl TokenArgs {
    fn config(self) -> TokenizerConfig {
        TokenizerConfig {
            lowercase: !self.keep_case,
            token_pattern: if self.whitespace_tokens {
                TokenPattern::Whitespace
            } else {
                TokenPattern::Alphabetic
            },
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value = "sg")]
    model: ModelKind,
    #[arg(long, default_value_t = 100)]
    dim: usize,
    #[arg(long, default_value_t = 5)]
    window: usize,
    #[arg(long, default_value_t = 5)]
    min_count: u64,
    #[arg(long, default_value_t = 5)]
    negatives: usize,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    /// Initial learning rate; 0.025 for SG and 0.05 for CBOW when omitted
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Frequent-word subsampling threshold, e.g. 1e-3
    #[arg(long)]
    subsample: Option<f64>,
    /// Use the exact logistic function instead of the lookup table
    #[arg(long)]
    exact_sigmoid: bool,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    tokens: TokenArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Cosadd,
    Cosmul,
    Both,
}

impl MethodArg {
    fn methods(self) -> Vec<Method> {
        match self {
            MethodArg::Cosadd => vec![Method::CosAdd],
            MethodArg::Cosmul => vec![Method::CosMul],
            MethodArg::Both => vec![Method::CosAdd, Method::CosMul],
        }
    }
}

#[derive(Args)]
struct EvalArgs {
    /// Text (`.txt`) or binary (`.vecbin`) vectors
    #[arg(long)]
    vectors: PathBuf,
    #[arg(long)]
    suite: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    method: MethodArg,
    #[arg(long, default_value_t = MethodConfig::DEFAULT_EPSILON)]
    epsilon: f64,
    /// Let the query words compete as answers
    #[arg(long)]
    keep_queries: bool,
    /// Reject categories whose relation kind is unknown
    #[arg(long)]
    strict: bool,
    /// Identifier stored in reports; taken from a run manifest next to the
    /// vectors, or the vectors file name
    #[arg(long)]
    config_id: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportKind {
    Errors,
    Solved,
    AlwaysWrong,
    Topk,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Evaluated run directories; `solved` takes a base and an improved one
    #[arg(long, num_args = 1.., required = true)]
    runs: Vec<PathBuf>,
    #[arg(long, value_enum)]
    report: ReportKind,
    #[arg(long, default_value = "cosadd")]
    method: Method,
    #[arg(short, long, default_value_t = 5)]
    k: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Stats { corpus, tokens } => {
            let stats = corpus_stats(&corpus, tokens.config())?;
            print!("{}", stats.to_tsv());
        }
        Command::BuildVocab {
            corpus,
            min_count,
            out,
            tokens,
        } => {
            let source = TextCorpus::new(&corpus, tokens.config());
            let vocab = Vocabulary::from_source(&source, min_count)?;
            vocab
                .save(&out)
                .with_context(|| format!("writing {}", out.display()))?;
            eprintln!("{} words, {} tokens", vocab.len(), vocab.total_tokens());
        }
        Command::Train(args) => run_train(args)?,
        Command::Neighbors { vectors, word, k } => {
            let space = EmbeddingSpace::<f32>::load(&vectors)?;
            for n in space.neighbors_of(&word, k)? {
                println!("{}\t{:.6}", n.word, n.score);
            }
        }
        Command::Eval(args) => run_eval(args)?,
        Command::Analyze(args) => run_analyze(args)?,
        Command::Sweep { spec, resume } => {
            let spec = SweepSpec::load(&spec)?;
            let manifests = run_sweep(&spec, resume)?;
            let failed: Vec<&RunManifest> = manifests
                .iter()
                .filter(|m| m.status == RunStatus::Failed)
                .collect();
            for m in &manifests {
                println!("{}\t{:?}\t{:.1}s", m.config_id, m.status, m.duration_secs);
            }
            for m in &failed {
                eprintln!(
                    "{}: {}",
                    m.config_id,
                    m.error.as_deref().unwrap_or("unknown error")
                );
            }
            if !failed.is_empty() {
                bail!(
                    "{} of {} configurations failed",
                    failed.len(),
                    manifests.len()
                );
            }
        }
        Command::Report { runs, out } => {
            let report = figure_report(&load_manifests(&runs)?)?;
            emit(&report.to_tsv(), out.as_deref())?;
        }
    }
    Ok(())
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => Ok(io::stdout().write_all(text.as_bytes())?),
    }
}

fn run_train(args: TrainArgs) -> Result<()> {
    let config = TrainingConfig {
        dim: args.dim,
        window: args.window,
        min_count: args.min_count,
        negatives: args.negatives,
        epochs: args.epochs,
        initial_lr: args.lr.unwrap_or(args.model.default_learning_rate()),
        seed: args.seed,
        workers: args.workers,
        subsample: args.subsample,
        sigmoid: if args.exact_sigmoid {
            SigmoidMode::Exact
        } else {
            SigmoidMode::Table
        },
        ..TrainingConfig::new(args.model)
    };
    let corpus = TextCorpus::new(&args.corpus, args.tokens.config());
    let model = train::<f32>(&corpus, &config)?;
    let space = EmbeddingSpace::from_model(&model);
    let mut manifest = RunManifest::new(config, args.out.clone());
    save_training_artifacts(&model, &space, &args.out, &mut manifest.artifacts)
        .with_context(|| format!("writing artifacts to {}", args.out.display()))?;
    manifest.status = RunStatus::Trained;
    manifest.duration_secs = model.log.epochs.iter().map(|e| e.seconds).sum();
    manifest.save()?;
    eprint!("{}", model.log.to_tsv());
    Ok(())
}

fn run_eval(args: EvalArgs) -> Result<()> {
    let space = EmbeddingSpace::<f32>::load(&args.vectors)
        .with_context(|| format!("loading {}", args.vectors.display()))?;
    let options = ParseOptions {
        strict: args.strict,
        ..ParseOptions::default()
    };
    let suite = parse_suite_with(&args.suite, options)?;
    let vectors_dir = args.vectors.parent().unwrap_or(Path::new("."));
    let mut manifest = RunManifest::load(vectors_dir).ok();
    let config_id = match (&args.config_id, &manifest) {
        (Some(id), _) => id.clone(),
        (None, Some(m)) => m.config_id.clone(),
        (None, None) => args.vectors.file_stem().map_or_else(
            || "vectors".to_owned(),
            |s| s.to_string_lossy().into_owned(),
        ),
    };
    fs::create_dir_all(&args.out)?;
    for method in args.method.methods() {
        let cfg = MethodConfig {
            epsilon: args.epsilon,
            exclude_queries: !args.keep_queries,
            ..MethodConfig::new(method)
        };
        let (report, paths) = evaluate_and_save(&space, &suite, &cfg, &config_id, &args.out)?;
        print!("# {method}\n{}", report.to_tsv());
        if let Some(m) = manifest.as_mut() {
            m.artifacts.reports.insert(method, paths);
        }
    }
    // evaluating in place completes the run recorded next to the vectors
    if let Some(mut m) = manifest {
        if same_dir(vectors_dir, &args.out) && m.status != RunStatus::Failed {
            m.status = RunStatus::Evaluated;
            m.save()?;
        }
    }
    Ok(())
}

fn same_dir(a: &Path, b: &Path) -> bool {
    match (fs::canonicalize(a), fs::canonicalize(b)) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

fn run_analyze(args: AnalyzeArgs) -> Result<()> {
    let sets = args
        .runs
        .iter()
        .map(|dir| {
            RecordSet::load(dir, args.method).with_context(|| format!("loading {}", dir.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = String::new();
    match args.report {
        ReportKind::Errors => {
            for s in &sets {
                if sets.len() > 1 {
                    let _ = writeln!(out, "## {}", s.config_id);
                }
                out.push_str(&summarize_errors(&s.errors).to_tsv());
            }
        }
        ReportKind::Solved => {
            let [base, improved] = sets.as_slice() else {
                bail!("solved needs exactly two runs: base and improved");
            };
            let questions: BTreeMap<usize, &AnalogyQuestion> = base
                .errors
                .iter()
                .map(|r| (r.index, &r.question))
                .chain(base.not_given.iter().map(|r| (r.index, &r.question)))
                .collect();
            let solved = solved_errors(base, improved)?;
            let _ = writeln!(
                out,
                "#solved\t{}\nindex\tcategory\ta\ta_star\tb\tb_star",
                solved.len()
            );
            for i in solved {
                let q = questions[&i];
                let _ = writeln!(
                    out,
                    "{i}\t{}\t{}\t{}\t{}\t{}",
                    q.category, q.a, q.a_star, q.b, q.b_star
                );
            }
        }
        ReportKind::AlwaysWrong => {
            let words = always_wrong(&sets)?;
            let _ = writeln!(out, "#always_wrong\t{}", words.len());
            for w in words {
                let _ = writeln!(out, "{w}");
            }
        }
        ReportKind::Topk => {
            out.push_str(
                "config_id\terrors\trecovered\tat_rank2\tfraction_in_topk\tfraction_at_rank2\n",
            );
            for s in &sets {
                let r = topk_recovery(&s.errors, args.k)?;
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{:.6}\t{}",
                    s.config_id,
                    r.errors,
                    r.recovered,
                    r.at_rank2,
                    r.fraction_in_topk,
                    r.fraction_at_rank2
                        .map_or_else(|| "NA".to_owned(), |f| format!("{f:.6}"))
                );
            }
        }
    }
    emit(&out, args.out.as_deref())
}
