//! Command-line entry point: vocabulary building, corpus sampling and
//! mixing, training with early stopping, task evaluation, baseline-
//! normalized comparison, and neighbor queries. Logs go to standard
//! error; machine-readable results go to standard output.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write as _};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use embedkit::corpus::{
    derive_seed, read_encoded_documents, sample_subset, shuffle_documents, Vocabulary,
};
use embedkit::eval::{
    build_pgr_report, eval_task, nearest_neighbors, random_embedding, EmbeddingTable, EvalOptions,
    TaskData,
};
use embedkit::trainer::{run_training, EarlyStop, EvalSpec, TrainConfig, TrainModel};
use embedkit::{Error, Result};

#[derive(Parser)]
#[command(
    name = "embedkit",
    version,
    about = "Train and evaluate word embeddings over a shared corpus pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Count words in a whitespace-tokenized corpus and write a ranked vocabulary.
    BuildVocab {
        /// Corpus file, one document per line.
        #[arg(long)]
        corpus: PathBuf,
        /// Keep at most this many distinct words.
        #[arg(long, default_value_t = 200_000)]
        cap: usize,
        /// Drop words seen fewer times than this.
        #[arg(long, default_value_t = 1)]
        min_count: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample documents from one or more corpora and mix them into one file.
    Sample {
        /// Input corpus; repeat to mix several. Each needs a matching --tokens.
        #[arg(long, required = true)]
        corpus: Vec<PathBuf>,
        /// Token target for the corresponding --corpus, in the same order.
        #[arg(long, required = true)]
        tokens: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model, writing per-iteration checkpoints and a run log.
    Train {
        /// skipgram | cbow | order | lbl | nnlm | cw | glove
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Output directory for checkpoints, run.log, and run.config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// key=value file supplying any of these flags; explicit flags win.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dim: Option<usize>,
        /// Context radius on each side of the target word.
        #[arg(long)]
        window: Option<usize>,
        /// Negative samples per prediction.
        #[arg(long)]
        negatives: Option<usize>,
        /// Frequent-word subsampling threshold t; 0 disables.
        #[arg(long)]
        subsample: Option<f64>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
        /// none | val-loss | task:NAME (NAME must appear in --eval).
        #[arg(long)]
        early_stop: Option<String>,
        /// Iterations without improvement before early stop.
        #[arg(long)]
        patience: Option<usize>,
        /// Hidden width for the window-scoring model (default: dim).
        #[arg(long)]
        cw_hidden: Option<usize>,
        /// Export only main vectors from the co-occurrence model
        /// instead of the main+context sum.
        #[arg(long)]
        glove_main_only: bool,
        /// TASK=DATA evaluated each iteration; avg takes TRAIN,TEST.
        /// Tasks: ws | tfl | sem | syn | avg.
        #[arg(long = "eval")]
        evals: Vec<String>,
        /// Rank word pairs by Spearman instead of Pearson in ws.
        #[arg(long)]
        spearman: bool,
        /// Let analogy answers include the three question words.
        #[arg(long)]
        include_question_words: bool,
    },
    /// Evaluate one embedding file on one task.
    Eval {
        #[arg(long)]
        embedding: PathBuf,
        /// ws | tfl | sem | syn | avg
        #[arg(long)]
        task: String,
        #[arg(long)]
        data: PathBuf,
        /// Labeled training texts; required by avg.
        #[arg(long)]
        train_data: Option<PathBuf>,
        #[arg(long)]
        spearman: bool,
        #[arg(long)]
        include_question_words: bool,
    },
    /// Compare embeddings across tasks as performance gain over a random baseline.
    Compare {
        /// TASK=DATA; repeatable. avg takes TRAIN,TEST.
        #[arg(long = "task", required = true)]
        tasks: Vec<String>,
        /// NAME=PATH; repeatable. The first embedding's vocabulary hosts
        /// the random baseline.
        #[arg(long = "embedding", required = true)]
        embeddings: Vec<String>,
        /// Dimension of the random baseline embedding.
        #[arg(long, default_value_t = 50)]
        random_dim: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        spearman: bool,
        #[arg(long)]
        include_question_words: bool,
    },
    /// Print the nearest neighbors of a word by cosine similarity.
    Neighbors {
        #[arg(long)]
        embedding: PathBuf,
        #[arg(long)]
        word: String,
        #[arg(long, default_value_t = 10)]
        k: usize,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::BuildVocab {
            corpus,
            cap,
            min_count,
            out,
        } => cmd_build_vocab(&corpus, cap, min_count, &out),
        Command::Sample {
            corpus,
            tokens,
            seed,
            out,
        } => cmd_sample(&corpus, &tokens, seed, &out),
        Command::Train { .. } => cmd_train(command),
        Command::Eval {
            embedding,
            task,
            data,
            train_data,
            spearman,
            include_question_words,
        } => {
            let opts = EvalOptions {
                spearman,
                include_question_words,
            };
            cmd_eval(&embedding, &task, &data, train_data.as_deref(), opts)
        }
        Command::Compare {
            tasks,
            embeddings,
            random_dim,
            seed,
            spearman,
            include_question_words,
        } => {
            let opts = EvalOptions {
                spearman,
                include_question_words,
            };
            cmd_compare(&tasks, &embeddings, random_dim, seed, opts)
        }
        Command::Neighbors { embedding, word, k } => cmd_neighbors(&embedding, &word, k),
    }
}

fn cmd_build_vocab(corpus: &Path, cap: usize, min_count: u64, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(corpus).map_err(|e| Error::io(corpus, e))?;
    let vocab = Vocabulary::build(text.split_whitespace(), cap, min_count)?;
    vocab.write_to(out)?;
    println!("{} {}", vocab.len(), vocab.total_tokens());
    Ok(())
}

fn cmd_sample(corpora: &[PathBuf], tokens: &[usize], seed: u64, out: &Path) -> Result<()> {
    if corpora.len() != tokens.len() {
        return Err(Error::usage(format!(
            "{} --corpus flags but {} --tokens; each corpus needs its own token target",
            corpora.len(),
            tokens.len()
        )));
    }
    let mut picked: Vec<String> = Vec::new();
    for (i, (path, &target)) in corpora.iter().zip(tokens).enumerate() {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let docs = BufReader::new(file)
            .lines()
            .collect::<std::io::Result<Vec<String>>>()
            .map_err(|e| Error::io(path, e))?;
        let chosen = sample_subset(
            &docs,
            |d| d.split_whitespace().count(),
            target,
            derive_seed(seed, &[1, i as u64]),
        )
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        let mut docs = docs;
        let mut keep = vec![false; docs.len()];
        for c in chosen {
            keep[c] = true;
        }
        let mut it = keep.iter();
        docs.retain(|_| *it.next().expect("one flag per document"));
        picked.append(&mut docs);
    }
    shuffle_documents(&mut picked, derive_seed(seed, &[2]));
    let n_tokens: usize = picked.iter().map(|d| d.split_whitespace().count()).sum();
    let mut w = BufWriter::new(File::create(out).map_err(|e| Error::io(out, e))?);
    for doc in &picked {
        writeln!(w, "{doc}").map_err(|e| Error::io(out, e))?;
    }
    w.flush().map_err(|e| Error::io(out, e))?;
    eprintln!(
        "[embedkit] sampled {} documents, {n_tokens} tokens",
        picked.len()
    );
    Ok(())
}

/// Config-file lookup; the last occurrence of a repeatable key wins for
/// scalar settings.
struct ConfigFile {
    pairs: Vec<(String, String)>,
}

const CONFIG_KEYS: &[&str] = &[
    "model",
    "corpus",
    "vocab",
    "out",
    "dim",
    "window",
    "negatives",
    "subsample",
    "lr",
    "iters",
    "seed",
    "threads",
    "early-stop",
    "patience",
    "cw-hidden",
    "glove-main-only",
    "eval",
];

impl ConfigFile {
    fn load(path: Option<&Path>) -> Result<ConfigFile> {
        let pairs = match path {
            Some(p) => embedkit::io::read_config(p)?,
            None => Vec::new(),
        };
        for (k, _) in &pairs {
            if !CONFIG_KEYS.contains(&k.as_str()) {
                return Err(Error::usage(format!("unknown config key {k:?}")));
            }
        }
        Ok(ConfigFile { pairs })
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.pairs
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    fn get_all(&self, key: &str) -> Vec<String> {
        self.pairs
            .iter()
            .filter(|(k, _)| k == key)
            .map(|(_, v)| v.clone())
            .collect()
    }
}

fn resolve<T: std::str::FromStr>(
    flag: Option<T>,
    config: &ConfigFile,
    key: &str,
    default: T,
) -> Result<T> {
    match flag {
        Some(v) => Ok(v),
        None => match config.get(key) {
            Some(s) => s
                .parse()
                .map_err(|_| Error::usage(format!("bad value {s:?} for config key {key}"))),
            None => Ok(default),
        },
    }
}

fn required_path(flag: Option<PathBuf>, config: &ConfigFile, key: &str) -> Result<PathBuf> {
    match flag {
        Some(p) => Ok(p),
        None => match config.get(key) {
            Some(s) => Ok(PathBuf::from(s)),
            None => Err(Error::usage(format!("missing --{key}"))),
        },
    }
}

/// Splits TASK=DATA, where avg's DATA is a TRAIN,TEST pair. Returns the
/// task name, the evaluation data path, and the avg training path.
fn parse_task_arg(arg: &str) -> Result<(String, PathBuf, Option<PathBuf>)> {
    let (name, data) = arg
        .split_once('=')
        .ok_or_else(|| Error::usage(format!("expected TASK=DATA, got {arg:?}")))?;
    if name == "avg" {
        let (train, test) = data.split_once(',').ok_or_else(|| {
            Error::usage(format!(
                "avg task takes TRAIN,TEST paths separated by a comma, got {data:?}"
            ))
        })?;
        Ok((name.to_string(), test.into(), Some(train.into())))
    } else {
        Ok((name.to_string(), data.into(), None))
    }
}

fn load_eval_specs(args: &[String]) -> Result<Vec<EvalSpec>> {
    args.iter()
        .map(|arg| {
            let (name, data, train) = parse_task_arg(arg)?;
            let data = TaskData::load(&name, &data, train.as_deref())?;
            Ok(EvalSpec { name, data })
        })
        .collect()
}

fn cmd_train(command: Command) -> Result<()> {
    let Command::Train {
        model,
        corpus,
        vocab,
        out,
        config,
        dim,
        window,
        negatives,
        subsample,
        lr,
        iters,
        seed,
        threads,
        early_stop,
        patience,
        cw_hidden,
        glove_main_only,
        evals,
        spearman,
        include_question_words,
    } = command
    else {
        unreachable!("dispatched from run");
    };
    let file = ConfigFile::load(config.as_deref())?;
    let model = match model.as_deref().or_else(|| file.get("model")) {
        Some(name) => TrainModel::parse(name)?,
        None => return Err(Error::usage("missing --model")),
    };
    let corpus = required_path(corpus, &file, "corpus")?;
    let vocab_path = required_path(vocab, &file, "vocab")?;
    let out = required_path(out, &file, "out")?;
    let early_stop = match early_stop.as_deref().or_else(|| file.get("early-stop")) {
        Some(s) => EarlyStop::parse(s)?,
        None => EarlyStop::None,
    };
    let cw_hidden = match (cw_hidden, file.get("cw-hidden")) {
        (Some(h), _) => Some(h),
        (None, Some(s)) => Some(s.parse().map_err(|_| {
            Error::usage(format!("bad value {s:?} for config key cw-hidden"))
        })?),
        (None, None) => None,
    };
    let glove_main_only = glove_main_only
        || match file.get("glove-main-only") {
            Some("true") => true,
            Some("false") | None => false,
            Some(other) => {
                return Err(Error::usage(format!(
                    "bad value {other:?} for config key glove-main-only; expected true or false"
                )))
            }
        };
    let eval_args = if evals.is_empty() {
        file.get_all("eval")
    } else {
        evals
    };

    let mut cfg = TrainConfig::new(model);
    cfg.dim = resolve(dim, &file, "dim", cfg.dim)?;
    cfg.radius = resolve(window, &file, "window", cfg.radius)?;
    cfg.negatives = resolve(negatives, &file, "negatives", cfg.negatives)?;
    cfg.subsample = resolve(subsample, &file, "subsample", cfg.subsample)?;
    cfg.lr = resolve(lr, &file, "lr", cfg.lr)?;
    cfg.iterations = resolve(iters, &file, "iters", cfg.iterations)?;
    cfg.seed = resolve(seed, &file, "seed", cfg.seed)?;
    cfg.workers = resolve(threads, &file, "threads", cfg.workers)?;
    cfg.patience = resolve(patience, &file, "patience", cfg.patience)?;
    cfg.early_stop = early_stop;
    cfg.cw_hidden = cw_hidden;
    cfg.glove_main_only = glove_main_only;
    if cfg.dim == 0 {
        return Err(Error::usage("dim must be at least 1"));
    }
    if cfg.radius == 0 {
        return Err(Error::usage("window must be at least 1"));
    }

    let vocab = Vocabulary::read_from(&vocab_path)?;
    let documents = read_encoded_documents(&corpus, &vocab)?;
    let specs = load_eval_specs(&eval_args)?;
    let opts = EvalOptions {
        spearman,
        include_question_words,
    };

    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let mut resolved: Vec<(String, String)> = vec![
        ("model".into(), model.name().into()),
        ("corpus".into(), corpus.display().to_string()),
        ("vocab".into(), vocab_path.display().to_string()),
        ("out".into(), out.display().to_string()),
        ("dim".into(), cfg.dim.to_string()),
        ("window".into(), cfg.radius.to_string()),
        ("negatives".into(), cfg.negatives.to_string()),
        ("subsample".into(), cfg.subsample.to_string()),
        ("lr".into(), cfg.lr.to_string()),
        ("iters".into(), cfg.iterations.to_string()),
        ("seed".into(), cfg.seed.to_string()),
        ("threads".into(), cfg.workers.to_string()),
        ("early-stop".into(), cfg.early_stop.to_string()),
        ("patience".into(), cfg.patience.to_string()),
    ];
    if let Some(h) = cfg.cw_hidden {
        resolved.push(("cw-hidden".into(), h.to_string()));
    }
    if cfg.model == TrainModel::Glove {
        resolved.push(("glove-main-only".into(), cfg.glove_main_only.to_string()));
    }
    for arg in &eval_args {
        resolved.push(("eval".into(), arg.clone()));
    }
    embedkit::io::write_config(out.join("run.config"), &resolved)?;

    let outcome = run_training(&cfg, &vocab, &documents, &specs, opts, &out)?;
    println!("selected {} {}", outcome.selected, outcome.checkpoint.display());
    Ok(())
}

fn cmd_eval(
    embedding: &Path,
    task: &str,
    data: &Path,
    train_data: Option<&Path>,
    opts: EvalOptions,
) -> Result<()> {
    let table = EmbeddingTable::read_from(embedding)?;
    let task_data = TaskData::load(task, data, train_data)?;
    let result = eval_task(&table, task, &task_data, opts)?;
    println!(
        "{} {} {} {}",
        result.task,
        result.formatted_value(),
        result.evaluated,
        result.skipped
    );
    Ok(())
}

fn cmd_compare(
    task_args: &[String],
    embedding_args: &[String],
    random_dim: usize,
    seed: u64,
    opts: EvalOptions,
) -> Result<()> {
    if random_dim == 0 {
        return Err(Error::usage("--random-dim must be at least 1"));
    }
    let mut tasks: Vec<(String, TaskData)> = Vec::new();
    for arg in task_args {
        let (name, data, train) = parse_task_arg(arg)?;
        let td = TaskData::load(&name, &data, train.as_deref())?;
        tasks.push((name, td));
    }
    let mut names: Vec<String> = Vec::new();
    let mut tables: Vec<EmbeddingTable> = Vec::new();
    for arg in embedding_args {
        let (name, path) = arg
            .split_once('=')
            .ok_or_else(|| Error::usage(format!("expected NAME=PATH, got {arg:?}")))?;
        names.push(name.to_string());
        tables.push(EmbeddingTable::read_from(Path::new(path))?);
    }

    // ws is a correlation in [-1, 1]; the other tasks are percentages.
    // Report it on the same 0-100 scale; the gain ratio is unaffected.
    let scale = |name: &str, v: f64| if name == "ws" { v * 100.0 } else { v };

    let baseline_table = random_embedding(tables[0].words().to_vec(), random_dim, seed);
    let mut baselines = Vec::with_capacity(tasks.len());
    for (name, data) in &tasks {
        let r = eval_task(&baseline_table, name, data, opts)?;
        baselines.push(scale(name, r.value));
    }
    let mut metrics: Vec<Vec<f64>> = Vec::with_capacity(tables.len());
    for table in &tables {
        let mut row = Vec::with_capacity(tasks.len());
        for (name, data) in &tasks {
            let r = eval_task(table, name, data, opts)?;
            row.push(scale(name, r.value));
        }
        metrics.push(row);
    }
    let task_names: Vec<String> = tasks.iter().map(|(n, _)| n.clone()).collect();
    let report = build_pgr_report(names, task_names, &metrics, &baselines)?;
    print!("{}", report.render());
    Ok(())
}

fn cmd_neighbors(embedding: &Path, word: &str, k: usize) -> Result<()> {
    let table = EmbeddingTable::read_from(embedding)?;
    let id = table
        .id(word)
        .ok_or_else(|| Error::data(format!("word {word:?} is not in the embedding")))?;
    let query = table.row(id).to_vec();
    let hits = nearest_neighbors(&table, &query, k, &[id])?;
    for (rank, (i, sim)) in hits.iter().enumerate() {
        println!("{} {} {sim:.4}", rank + 1, table.word(*i));
    }
    Ok(())
}
