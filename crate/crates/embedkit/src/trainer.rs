//! Multi-iteration training: 95/5 document split, per-iteration
//! checkpoints and task metrics, early stopping on validation loss or a
//! task peak, and the stopping-strategy comparison table.

use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{
    derive_seed, for_each_window, shuffle_documents, subsample_into, StreamKey, Vocabulary,
    VALIDATION_ROUND,
};
use crate::eval::{eval_task, EmbeddingTable, EvalOptions, TaskData, TaskResult};
use crate::glove::{epoch_order, CoocTable, GloveParams};
use crate::model::{
    draw_corrupt, init_model, train_cw_window, train_predict_window, ApplyCw, ApplyPredict,
    ModelKind, ModelParams, ModelSpec, Scratch, ValidationStream,
};
use crate::params::AdaGrad;
use crate::sampler::NegativeSampler;
use crate::{Error, Result};

const TAG_SPLIT: u64 = 1;
const TAG_INIT: u64 = 2;
const TAG_VAL: u64 = 3;
const TAG_SUBSAMPLE: u64 = 4;
const TAG_TRAIN: u64 = 5;
const TAG_CELL_ORDER: u64 = 6;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EarlyStop {
    None,
    ValLoss,
    Task(String),
}

impl EarlyStop {
    pub fn parse(s: &str) -> Result<EarlyStop> {
        match s {
            "none" => Ok(EarlyStop::None),
            "val-loss" => Ok(EarlyStop::ValLoss),
            other => match other.strip_prefix("task:") {
                Some(name) if !name.is_empty() => Ok(EarlyStop::Task(name.to_string())),
                _ => Err(Error::usage(format!(
                    "bad early-stop {other:?}; expected none, val-loss, or task:NAME"
                ))),
            },
        }
    }
}

impl std::fmt::Display for EarlyStop {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EarlyStop::None => f.write_str("none"),
            EarlyStop::ValLoss => f.write_str("val-loss"),
            EarlyStop::Task(name) => write!(f, "task:{name}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainModel {
    Neural(ModelKind),
    Glove,
}

impl TrainModel {
    pub fn parse(s: &str) -> Result<TrainModel> {
        if s == "glove" {
            Ok(TrainModel::Glove)
        } else {
            Ok(TrainModel::Neural(ModelKind::parse(s)?))
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TrainModel::Neural(k) => k.name(),
            TrainModel::Glove => "glove",
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub model: TrainModel,
    pub dim: usize,
    pub radius: usize,
    pub negatives: usize,
    pub subsample: f64,
    pub lr: f64,
    pub iterations: usize,
    pub seed: u64,
    pub workers: usize,
    pub early_stop: EarlyStop,
    pub patience: usize,
    pub cw_hidden: Option<usize>,
    pub glove_main_only: bool,
}

impl TrainConfig {
    pub fn new(model: TrainModel) -> TrainConfig {
        TrainConfig {
            model,
            dim: 50,
            radius: 5,
            negatives: 5,
            subsample: 1e-4,
            lr: 0.1,
            iterations: 5,
            seed: 1,
            workers: 1,
            early_stop: EarlyStop::None,
            patience: 2,
            cw_hidden: None,
            glove_main_only: false,
        }
    }
}

/// One training task dataset, named for the run log column.
pub struct EvalSpec {
    pub name: String,
    pub data: TaskData,
}

#[derive(Debug)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Mean validation loss for the neural models; mean per-cell training
    /// loss of the epoch for the co-occurrence model, which has no
    /// sampled validation objective.
    pub val_loss: f64,
    pub tasks: Vec<TaskResult>,
    pub checkpoint: PathBuf,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub records: Vec<IterationRecord>,
    /// 1-based iteration whose checkpoint was selected.
    pub selected: usize,
    pub checkpoint: PathBuf,
}

/// Document-level split: a seeded permutation cut at
/// round(fraction * n), clamped so both sides are non-empty.
pub fn split_train_validation(
    n_docs: usize,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if n_docs < 2 {
        return Err(Error::data(format!(
            "need at least 2 documents to split, found {n_docs}"
        )));
    }
    let mut order: Vec<usize> = (0..n_docs).collect();
    shuffle_documents(&mut order, seed);
    let n_train = ((n_docs as f64 * fraction).round() as usize).clamp(1, n_docs - 1);
    let val = order.split_off(n_train);
    Ok((order, val))
}

/// Where a monitored series stops under best-so-far patience, and which
/// index it selects. Indices are 0-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StopDecision {
    pub selected: usize,
    pub stopped_after: usize,
}

/// Walks the series keeping the strictly-best value; stops once `patience`
/// entries pass without improvement.
pub fn select_stop(series: &[f64], higher_better: bool, patience: usize) -> StopDecision {
    assert!(!series.is_empty());
    let mut best = 0usize;
    for i in 1..series.len() {
        let improved = if higher_better {
            series[i] > series[best]
        } else {
            series[i] < series[best]
        };
        if improved {
            best = i;
        } else if i - best >= patience {
            return StopDecision {
                selected: best,
                stopped_after: i,
            };
        }
    }
    StopDecision {
        selected: best,
        stopped_after: series.len() - 1,
    }
}

/// Win table: for each stopping signal, would stopping there have kept at
/// least 95% of each task's peak gain over the random baseline?
pub struct WinTable {
    pub signals: Vec<String>,
    pub tasks: Vec<String>,
    /// 0-based iteration each signal selects.
    pub selected: Vec<usize>,
    /// wins[signal][task]
    pub wins: Vec<Vec<bool>>,
}

/// `task_series` holds per-iteration metric values (higher better) per
/// task; `baselines` the random-embedding performance per task. The
/// candidate signals are the validation loss (when given, lower better)
/// and every task itself.
pub fn compare_stopping_strategies(
    val_loss: Option<&[f64]>,
    task_series: &[(String, Vec<f64>)],
    baselines: &[f64],
    patience: usize,
) -> WinTable {
    assert_eq!(task_series.len(), baselines.len());
    let mut signals: Vec<(String, StopDecision)> = Vec::new();
    if let Some(series) = val_loss {
        signals.push(("val-loss".to_string(), select_stop(series, false, patience)));
    }
    for (name, series) in task_series {
        signals.push((name.clone(), select_stop(series, true, patience)));
    }
    let peaks: Vec<f64> = task_series
        .iter()
        .map(|(_, s)| s.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let mut wins = Vec::with_capacity(signals.len());
    for (_, decision) in &signals {
        let mut row = Vec::with_capacity(task_series.len());
        for (t, (_, series)) in task_series.iter().enumerate() {
            let at = series[decision.selected.min(series.len() - 1)];
            // At-or-above-peak covers flat and below-baseline series where
            // the 95%-of-gain bound is above the peak itself.
            let bound = baselines[t] + 0.95 * (peaks[t] - baselines[t]);
            row.push(at >= bound || at >= peaks[t]);
        }
        wins.push(row);
    }
    WinTable {
        signals: signals.iter().map(|(n, _)| n.clone()).collect(),
        tasks: task_series.iter().map(|(n, _)| n.clone()).collect(),
        selected: signals.iter().map(|(_, d)| d.selected).collect(),
        wins,
    }
}

struct RunLog {
    out: BufWriter<File>,
    path: PathBuf,
}

impl RunLog {
    fn create(dir: &Path, evals: &[EvalSpec]) -> Result<RunLog> {
        let path = dir.join("run.log");
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut out = BufWriter::new(file);
        let mut header = String::from("iteration\tval_loss");
        for e in evals {
            header.push('\t');
            header.push_str(&e.name);
        }
        writeln!(out, "{header}").map_err(|e| Error::io(&path, e))?;
        Ok(RunLog { out, path })
    }

    fn record(&mut self, rec: &IterationRecord) -> Result<()> {
        let mut line = format!("{}\t{:.6}", rec.iteration, rec.val_loss);
        for t in &rec.tasks {
            line.push('\t');
            line.push_str(&t.formatted_value());
        }
        writeln!(self.out, "{line}").map_err(|e| Error::io(&self.path, e))?;
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Trains `config.iterations` passes (or fewer under early stopping) and
/// returns the per-iteration records plus the selected checkpoint.
/// Checkpoints land in `out_dir` as iter-N.emb, the log as run.log.
pub fn run_training(
    config: &TrainConfig,
    vocab: &Vocabulary,
    documents: &[Vec<u32>],
    evals: &[EvalSpec],
    opts: EvalOptions,
    out_dir: &Path,
) -> Result<TrainOutcome> {
    if let EarlyStop::Task(name) = &config.early_stop {
        if !evals.iter().any(|e| &e.name == name) {
            return Err(Error::usage(format!(
                "early-stop task {name:?} is not among the requested --eval tasks"
            )));
        }
    }
    if config.early_stop == EarlyStop::ValLoss && config.model == TrainModel::Glove {
        return Err(Error::usage(
            "the co-occurrence model has no validation loss; use early-stop none or task:NAME",
        ));
    }
    if config.iterations == 0 {
        return Err(Error::usage("iterations must be at least 1"));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let (train_idx, val_idx) =
        split_train_validation(documents.len(), 0.95, derive_seed(config.seed, &[TAG_SPLIT]))?;

    match config.model {
        TrainModel::Neural(kind) => run_neural(
            config, kind, vocab, documents, &train_idx, &val_idx, evals, opts, out_dir,
        ),
        TrainModel::Glove => run_glove(config, vocab, documents, &train_idx, evals, opts, out_dir),
    }
}

#[cfg(feature = "parallel")]
fn build_pool(workers: usize) -> Result<Option<rayon::ThreadPool>> {
    if workers <= 1 {
        return Ok(None);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map(Some)
        .map_err(|e| Error::data(format!("cannot start {workers} workers: {e}")))
}

#[allow(clippy::too_many_arguments)]
fn run_neural(
    config: &TrainConfig,
    kind: ModelKind,
    vocab: &Vocabulary,
    documents: &[Vec<u32>],
    train_idx: &[usize],
    val_idx: &[usize],
    evals: &[EvalSpec],
    opts: EvalOptions,
    out_dir: &Path,
) -> Result<TrainOutcome> {
    let mut spec = ModelSpec::new(kind, config.dim, config.radius);
    if let Some(h) = config.cw_hidden {
        spec.cw_hidden = h;
    }
    let params = init_model(spec, vocab.len(), derive_seed(config.seed, &[TAG_INIT]));
    let sampler = NegativeSampler::new(vocab.counts(), config.negatives);
    let opt = AdaGrad::with_lr(config.lr);
    let sub_seed = derive_seed(config.seed, &[TAG_SUBSAMPLE]);
    let val_stream = ValidationStream {
        seed: derive_seed(config.seed, &[TAG_VAL]),
    };
    #[cfg(feature = "parallel")]
    let pool = build_pool(config.workers)?;
    #[cfg(not(feature = "parallel"))]
    if config.workers > 1 {
        eprintln!(
            "[embedkit] built without the parallel feature; running {} workers sequentially",
            config.workers
        );
    }

    let mut log = RunLog::create(out_dir, evals)?;
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut best_it = 0usize;
    let mut best_value = f64::NAN;
    for it in 1..=config.iterations {
        let started = Instant::now();
        let key = StreamKey {
            seed: sub_seed,
            round: it as u64,
        };
        let chunks = chunk_indices(train_idx, config.workers);
        let run_chunk = |(c, chunk): (usize, &[usize])| -> (f64, u64) {
            neural_chunk(
                &params, opt, &sampler, vocab, documents, chunk, key,
                derive_seed(config.seed, &[TAG_TRAIN, it as u64, c as u64]),
                config,
            )
        };
        let (train_loss, train_n) = {
            #[cfg(feature = "parallel")]
            {
                match &pool {
                    Some(pool) => pool.install(|| {
                        use rayon::prelude::*;
                        chunks
                            .par_iter()
                            .enumerate()
                            .map(|(c, chunk)| run_chunk((c, *chunk)))
                            .reduce(|| (0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1))
                    }),
                    None => run_sequential(&chunks, run_chunk),
                }
            }
            #[cfg(not(feature = "parallel"))]
            run_sequential(&chunks, run_chunk)
        };
        let last_good = || match records.last() {
            Some(r) => r.checkpoint.display().to_string(),
            None => "none".to_string(),
        };
        if !train_loss.is_finite() || !params.is_finite() {
            return Err(Error::numeric(format!(
                "numerical divergence at iteration {it}; last good checkpoint: {}",
                last_good()
            )));
        }
        let val_loss = validation_loss(
            &params, &sampler, vocab, documents, val_idx, sub_seed, &val_stream, config,
        )?;
        if !val_loss.is_finite() {
            return Err(Error::numeric(format!(
                "numerical divergence in validation at iteration {it}; last good checkpoint: {}",
                last_good()
            )));
        }

        let data = params.input_vectors();
        let checkpoint = out_dir.join(format!("iter-{it}.emb"));
        crate::io::write_embedding(&checkpoint, vocab.words(), config.dim, &data)?;
        let table = EmbeddingTable::from_parts(vocab.words().to_vec(), config.dim, data)?;
        let tasks = evals
            .iter()
            .map(|e| eval_task(&table, &e.name, &e.data, opts))
            .collect::<Result<Vec<_>>>()?;
        let record = IterationRecord {
            iteration: it,
            val_loss,
            tasks,
            checkpoint,
        };
        log.record(&record)?;
        eprintln!(
            "[embedkit] {} iteration {it}: train loss {:.6} over {train_n} samples, val loss {:.6}, {:.1}s",
            kind.name(),
            train_loss / train_n.max(1) as f64,
            val_loss,
            started.elapsed().as_secs_f64()
        );
        records.push(record);

        if update_best(config, &records, &mut best_it, &mut best_value) {
            eprintln!("[embedkit] early stop after iteration {it}");
            break;
        }
    }
    finish(config, records, best_it)
}

fn run_sequential<'a>(
    chunks: &'a [&'a [usize]],
    run_chunk: impl Fn((usize, &'a [usize])) -> (f64, u64),
) -> (f64, u64) {
    let mut acc = (0.0, 0u64);
    for (c, chunk) in chunks.iter().enumerate() {
        let (l, n) = run_chunk((c, *chunk));
        acc.0 += l;
        acc.1 += n;
    }
    acc
}

fn chunk_indices(idx: &[usize], workers: usize) -> Vec<&[usize]> {
    let w = workers.max(1);
    let per = idx.len().div_ceil(w).max(1);
    idx.chunks(per).collect()
}

#[allow(clippy::too_many_arguments)]
fn neural_chunk(
    params: &ModelParams,
    opt: AdaGrad,
    sampler: &NegativeSampler,
    vocab: &Vocabulary,
    documents: &[Vec<u32>],
    chunk: &[usize],
    key: StreamKey,
    rng_seed: u64,
    config: &TrainConfig,
) -> (f64, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut scratch = Scratch::new();
    let mut buf = Vec::new();
    let mut loss = 0.0;
    let mut n = 0u64;
    match params {
        ModelParams::Predict(p) => {
            let mut sink = ApplyPredict { params: p, opt };
            for &di in chunk {
                subsample_into(&documents[di], di as u64, vocab, config.subsample, key, &mut buf);
                for_each_window(&buf, config.radius, |_, target, slots| {
                    let mut draw =
                        |t: u32, out: &mut Vec<u32>| sampler.fill_negatives(t, &mut rng, out);
                    let (l, c) =
                        train_predict_window(p, target, slots, &mut scratch, &mut draw, &mut sink);
                    loss += l;
                    n += c as u64;
                });
            }
        }
        ModelParams::Cw(p) => {
            let mut sink = ApplyCw { params: p, opt };
            for &di in chunk {
                subsample_into(&documents[di], di as u64, vocab, config.subsample, key, &mut buf);
                for_each_window(&buf, config.radius, |_, target, slots| {
                    let corrupt = draw_corrupt(p.vocab_size, target, &mut rng);
                    loss += train_cw_window(p, target, slots, corrupt, &mut scratch, &mut sink);
                    n += 1;
                });
            }
        }
    }
    (loss, n)
}

/// Mean per-sample loss on the validation documents. The subsample round
/// is pinned so the validation window set is identical across iterations,
/// and negatives are keyed by stream position so the value is independent
/// of evaluation order.
#[allow(clippy::too_many_arguments)]
fn validation_loss(
    params: &ModelParams,
    sampler: &NegativeSampler,
    vocab: &Vocabulary,
    documents: &[Vec<u32>],
    val_idx: &[usize],
    sub_seed: u64,
    stream: &ValidationStream,
    config: &TrainConfig,
) -> Result<f64> {
    let key = StreamKey {
        seed: sub_seed,
        round: VALIDATION_ROUND,
    };
    let mut scratch = Scratch::new();
    let mut buf = Vec::new();
    let mut loss = 0.0;
    let mut n = 0u64;
    for &di in val_idx {
        subsample_into(&documents[di], di as u64, vocab, config.subsample, key, &mut buf);
        match params {
            ModelParams::Predict(p) => {
                for_each_window(&buf, config.radius, |pos, target, slots| {
                    let (l, c) = stream.predict_window(
                        p, sampler, di as u64, pos as u64, target, slots, &mut scratch,
                    );
                    loss += l;
                    n += c as u64;
                });
            }
            ModelParams::Cw(p) => {
                for_each_window(&buf, config.radius, |pos, target, slots| {
                    let (l, c) =
                        stream.cw_window(p, di as u64, pos as u64, target, slots, &mut scratch);
                    loss += l;
                    n += c as u64;
                });
            }
        }
    }
    if n == 0 {
        return Err(Error::data("empty validation set"));
    }
    Ok(loss / n as f64)
}

/// Applies the early-stop rule after the latest record. Returns true when
/// training should stop now.
fn update_best(
    config: &TrainConfig,
    records: &[IterationRecord],
    best_it: &mut usize,
    best_value: &mut f64,
) -> bool {
    let rec = records.last().expect("called with at least one record");
    let (value, higher_better) = match &config.early_stop {
        EarlyStop::None => return false,
        EarlyStop::ValLoss => (rec.val_loss, false),
        EarlyStop::Task(name) => {
            let t = rec
                .tasks
                .iter()
                .find(|t| &t.task == name)
                .expect("early-stop task checked against evals");
            (t.value, true)
        }
    };
    let improved = *best_it == 0
        || (higher_better && value > *best_value)
        || (!higher_better && value < *best_value);
    if improved {
        *best_it = rec.iteration;
        *best_value = value;
    }
    rec.iteration > *best_it && rec.iteration - *best_it >= config.patience
}

fn finish(config: &TrainConfig, records: Vec<IterationRecord>, best_it: usize) -> Result<TrainOutcome> {
    let selected = match config.early_stop {
        EarlyStop::None => records.len(),
        _ => best_it,
    };
    let checkpoint = records[selected - 1].checkpoint.clone();
    Ok(TrainOutcome {
        records,
        selected,
        checkpoint,
    })
}

fn run_glove(
    config: &TrainConfig,
    vocab: &Vocabulary,
    documents: &[Vec<u32>],
    train_idx: &[usize],
    evals: &[EvalSpec],
    opts: EvalOptions,
    out_dir: &Path,
) -> Result<TrainOutcome> {
    #[cfg(feature = "parallel")]
    let pool = build_pool(config.workers)?;

    let started = Instant::now();
    let table = {
        #[cfg(feature = "parallel")]
        {
            match &pool {
                Some(pool) => pool.install(|| {
                    use rayon::prelude::*;
                    let per = train_idx.len().div_ceil(config.workers).max(1);
                    train_idx
                        .par_chunks(per)
                        .map(|chunk| {
                            let mut t = CoocTable::new(vocab.len());
                            for &di in chunk {
                                t.accumulate(&documents[di], config.radius);
                            }
                            t
                        })
                        .reduce(
                            || CoocTable::new(vocab.len()),
                            |mut a, b| {
                                a.merge(b);
                                a
                            },
                        )
                }),
                None => CoocTable::from_documents(
                    train_idx.iter().map(|&di| documents[di].as_slice()),
                    config.radius,
                    vocab.len(),
                ),
            }
        }
        #[cfg(not(feature = "parallel"))]
        CoocTable::from_documents(
            train_idx.iter().map(|&di| documents[di].as_slice()),
            config.radius,
            vocab.len(),
        )
    };
    if table.is_empty() {
        return Err(Error::data("no co-occurrences in the training split"));
    }
    let cells = table.cells_sorted();
    drop(table);
    eprintln!(
        "[embedkit] co-occurrence table: {} cells, {:.1}s",
        cells.len(),
        started.elapsed().as_secs_f64()
    );

    let params = GloveParams::init(vocab.len(), config.dim, derive_seed(config.seed, &[TAG_INIT]));
    let opt = AdaGrad::with_lr(config.lr);
    let order_seed = derive_seed(config.seed, &[TAG_CELL_ORDER]);
    let mut log = RunLog::create(out_dir, evals)?;
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut best_it = 0usize;
    let mut best_value = f64::NAN;
    for it in 1..=config.iterations {
        let started = Instant::now();
        let order = epoch_order(cells.len(), order_seed, it as u64);
        let epoch_loss = {
            #[cfg(feature = "parallel")]
            {
                match &pool {
                    Some(pool) => pool.install(|| {
                        crate::glove::train_epoch_parallel(
                            &params,
                            &cells,
                            &order,
                            opt,
                            config.workers,
                        )
                    })?,
                    None => crate::glove::train_epoch(&params, &cells, &order, opt)?,
                }
            }
            #[cfg(not(feature = "parallel"))]
            crate::glove::train_epoch(&params, &cells, &order, opt)?
        };
        if !params.is_finite() {
            let last = records
                .last()
                .map(|r| r.checkpoint.display().to_string())
                .unwrap_or_else(|| "none".to_string());
            return Err(Error::numeric(format!(
                "numerical divergence at iteration {it}; last good checkpoint: {last}"
            )));
        }
        let data = params.export(config.glove_main_only);
        let checkpoint = out_dir.join(format!("iter-{it}.emb"));
        crate::io::write_embedding(&checkpoint, vocab.words(), config.dim, &data)?;
        let table = EmbeddingTable::from_parts(vocab.words().to_vec(), config.dim, data)?;
        let tasks = evals
            .iter()
            .map(|e| eval_task(&table, &e.name, &e.data, opts))
            .collect::<Result<Vec<_>>>()?;
        let record = IterationRecord {
            iteration: it,
            val_loss: epoch_loss,
            tasks,
            checkpoint,
        };
        log.record(&record)?;
        eprintln!(
            "[embedkit] glove iteration {it}: epoch loss {epoch_loss:.6}, {:.1}s",
            started.elapsed().as_secs_f64()
        );
        records.push(record);
        if update_best(config, &records, &mut best_it, &mut best_value) {
            eprintln!("[embedkit] early stop after iteration {it}");
            break;
        }
    }
    finish(config, records, best_it)
}
