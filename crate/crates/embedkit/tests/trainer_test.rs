//! Training orchestration: splits, stopping rules, the win table, and the
//! end-to-end iteration loop with checkpoints and logs.

mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use embedkit::corpus::Vocabulary;
use embedkit::eval::{eval_task, EmbeddingTable, EvalOptions, TaskData, WsPair};
use embedkit::model::ModelKind;
use embedkit::trainer::{
    compare_stopping_strategies, run_training, select_stop, split_train_validation, EarlyStop,
    EvalSpec, StopDecision, TrainConfig, TrainModel,
};

// ---- split ----

#[test]
fn split_is_ninety_five_to_five() {
    let (train, val) = split_train_validation(100, 0.95, 3).expect("split");
    assert_eq!(train.len(), 95);
    assert_eq!(val.len(), 5);
    let mut all: Vec<usize> = train.iter().chain(&val).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..100).collect::<Vec<_>>(), "disjoint and exhaustive");
}

#[test]
fn split_is_deterministic_and_clamped() {
    assert_eq!(
        split_train_validation(100, 0.95, 3).expect("split"),
        split_train_validation(100, 0.95, 3).expect("split")
    );
    assert_ne!(
        split_train_validation(100, 0.95, 3).expect("split").0,
        split_train_validation(100, 0.95, 4).expect("split").0
    );
    // Both sides stay non-empty even when rounding would empty one.
    let (train, val) = split_train_validation(2, 0.99, 1).expect("split");
    assert_eq!((train.len(), val.len()), (1, 1));
    let (train, val) = split_train_validation(3, 0.01, 1).expect("split");
    assert_eq!((train.len(), val.len()), (1, 2));
    assert!(split_train_validation(1, 0.95, 1).is_err());
    assert!(split_train_validation(0, 0.95, 1).is_err());
}

// ---- stopping rule ----

#[test]
fn stop_rule_matches_the_pinned_examples() {
    // Higher-better series peaking at the third entry, patience 2: training
    // halts after the fifth entry and selects the third.
    let d = select_stop(&[1.0, 2.0, 3.0, 2.9, 2.8], true, 2);
    assert_eq!(d, StopDecision { selected: 2, stopped_after: 4 });
    // Lower-better validation loss bottoming at the second entry.
    let d = select_stop(&[4.0, 3.5, 3.6, 3.7], false, 2);
    assert_eq!(d, StopDecision { selected: 1, stopped_after: 3 });
}

#[test]
fn stop_rule_runs_out_the_series_without_a_trigger() {
    let d = select_stop(&[1.0, 2.0, 3.0, 4.0], true, 2);
    assert_eq!(d, StopDecision { selected: 3, stopped_after: 3 });
    let d = select_stop(&[1.0, 2.0, 3.0, 2.5], true, 2);
    assert_eq!(d, StopDecision { selected: 2, stopped_after: 3 });
    let d = select_stop(&[5.0], false, 2);
    assert_eq!(d, StopDecision { selected: 0, stopped_after: 0 });
}

#[test]
fn stop_rule_requires_strict_improvement() {
    // A plateau never counts as improvement, so patience drains on it.
    let d = select_stop(&[2.0, 2.0, 2.0, 2.0, 2.0], true, 2);
    assert_eq!(d, StopDecision { selected: 0, stopped_after: 2 });
    let d = select_stop(&[2.0, 2.0, 3.0], true, 5);
    assert_eq!(d.selected, 2);
}

// ---- win table ----

#[test]
fn a_task_always_wins_as_its_own_stopping_signal() {
    let series = vec![
        ("ws".to_string(), vec![0.1, 0.5, 0.4, 0.3]),
        ("tfl".to_string(), vec![30.0, 40.0, 55.0, 50.0]),
    ];
    let table = compare_stopping_strategies(None, &series, &[0.0, 25.0], 2);
    assert_eq!(table.signals, ["ws", "tfl"]);
    assert_eq!(table.tasks, ["ws", "tfl"]);
    // Diagonal: each signal stops at its own peak.
    assert!(table.wins[0][0]);
    assert!(table.wins[1][1]);
    assert_eq!(table.selected, vec![1, 2]);
}

#[test]
fn constant_series_make_every_signal_win() {
    let series = vec![
        ("flat".to_string(), vec![42.0, 42.0, 42.0, 42.0]),
        ("moving".to_string(), vec![10.0, 30.0, 20.0, 15.0]),
    ];
    let table = compare_stopping_strategies(Some(&[5.0, 4.0, 4.5, 5.0]), &series, &[25.0, 0.0], 2);
    assert_eq!(table.signals, ["val-loss", "flat", "moving"]);
    for row in &table.wins {
        assert!(row[0], "every signal reaches the flat series' peak");
    }
}

#[test]
fn win_table_matches_an_exhaustive_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    for _ in 0..40 {
        let iters = rng.gen_range(2..8);
        let n_tasks = rng.gen_range(1..4);
        let val: Vec<f64> = (0..iters).map(|_| rng.gen::<f64>() * 3.0).collect();
        let tasks: Vec<(String, Vec<f64>)> = (0..n_tasks)
            .map(|t| {
                let series = (0..iters).map(|_| rng.gen::<f64>() * 80.0).collect();
                (format!("t{t}"), series)
            })
            .collect();
        let baselines: Vec<f64> = (0..n_tasks).map(|_| rng.gen::<f64>() * 25.0).collect();
        let patience = rng.gen_range(1..3);
        let table = compare_stopping_strategies(Some(&val), &tasks, &baselines, patience);

        // Independent reimplementation by direct scan.
        let stop_of = |series: &[f64], higher: bool| -> usize {
            let cmp = |a: f64, b: f64| if higher { a > b } else { a < b };
            let mut best = 0usize;
            for i in 1..series.len() {
                if cmp(series[i], series[best]) {
                    best = i;
                } else if i - best >= patience {
                    break;
                }
            }
            best
        };
        let mut expected_selected = vec![stop_of(&val, false)];
        for (_, s) in &tasks {
            expected_selected.push(stop_of(s, true));
        }
        assert_eq!(table.selected, expected_selected);
        for (s, &sel) in expected_selected.iter().enumerate() {
            for (t, (_, series)) in tasks.iter().enumerate() {
                let peak = series.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let at = series[sel];
                let expect = at >= baselines[t] + 0.95 * (peak - baselines[t]) || at >= peak;
                assert_eq!(table.wins[s][t], expect, "signal {s} task {t}");
            }
        }
    }
}

// ---- training loop ----

fn tiny_vocab() -> Vocabulary {
    Vocabulary::from_ranked((0..10).map(|i| (format!("w{i}"), 200 - 15 * i as u64)))
}

fn tiny_docs(seed: u64) -> Vec<Vec<u32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..20)
        .map(|_| (0..30).map(|_| rng.gen_range(0..10u32)).collect())
        .collect()
}

fn ws_eval() -> EvalSpec {
    let pairs = vec![
        WsPair { w1: "w0".into(), w2: "w1".into(), score: 9.0 },
        WsPair { w1: "w2".into(), w2: "w3".into(), score: 7.0 },
        WsPair { w1: "w4".into(), w2: "w5".into(), score: 4.0 },
        WsPair { w1: "w6".into(), w2: "w7".into(), score: 2.0 },
    ];
    EvalSpec { name: "ws".into(), data: TaskData::Ws(pairs) }
}

fn base_config(model: TrainModel) -> TrainConfig {
    let mut config = TrainConfig::new(model);
    config.dim = 8;
    config.iterations = 3;
    config.subsample = 0.0;
    config.seed = 5;
    config
}

#[test]
fn training_without_early_stop_runs_every_iteration() {
    let dir = tempfile::tempdir().expect("tempdir");
    let out = dir.path().join("run");
    let vocab = tiny_vocab();
    let docs = tiny_docs(1);
    let config = base_config(TrainModel::Neural(ModelKind::Cbow));
    let outcome = run_training(&config, &vocab, &docs, &[ws_eval()], EvalOptions::default(), &out)
        .expect("train");
    assert_eq!(outcome.records.len(), 3);
    assert_eq!(outcome.selected, 3, "no criterion selects the last iteration");
    assert_eq!(outcome.checkpoint, outcome.records[2].checkpoint);
    for (i, rec) in outcome.records.iter().enumerate() {
        assert_eq!(rec.iteration, i + 1);
        assert!(rec.val_loss.is_finite());
        assert_eq!(rec.tasks.len(), 1);
        assert_eq!(rec.tasks[0].task, "ws");
        assert!(rec.checkpoint.exists(), "checkpoint {:?}", rec.checkpoint);
        assert_eq!(
            rec.checkpoint.file_name().and_then(|n| n.to_str()),
            Some(format!("iter-{}.emb", i + 1).as_str())
        );
    }
    let log = std::fs::read_to_string(out.join("run.log")).expect("log");
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], "iteration\tval_loss\tws");
    assert!(lines[1].starts_with("1\t"));
    let fields: Vec<&str> = lines[3].split('\t').collect();
    assert_eq!(fields.len(), 3);
    assert_eq!(fields[1], format!("{:.6}", outcome.records[2].val_loss));
}

#[test]
fn training_is_deterministic_across_runs() {
    let dir = tempfile::tempdir().expect("tempdir");
    let vocab = tiny_vocab();
    let docs = tiny_docs(2);
    let mut config = base_config(TrainModel::Neural(ModelKind::SkipGram));
    config.subsample = 1e-2;
    let run = |out: &std::path::Path| {
        run_training(&config, &vocab, &docs, &[ws_eval()], EvalOptions::default(), out)
            .expect("train")
    };
    let a = run(&dir.path().join("a"));
    let b = run(&dir.path().join("b"));
    assert_eq!(a.selected, b.selected);
    for (ra, rb) in a.records.iter().zip(&b.records) {
        assert_eq!(ra.val_loss.to_bits(), rb.val_loss.to_bits(), "bit-identical losses");
        assert_eq!(ra.tasks[0].value.to_bits(), rb.tasks[0].value.to_bits());
    }
    let bytes_a = std::fs::read(&a.checkpoint).expect("read");
    let bytes_b = std::fs::read(&b.checkpoint).expect("read");
    assert_eq!(bytes_a, bytes_b, "identical checkpoint files");
    assert_eq!(
        std::fs::read_to_string(dir.path().join("a/run.log")).expect("log"),
        std::fs::read_to_string(dir.path().join("b/run.log")).expect("log")
    );
}

#[test]
fn checkpoints_reload_to_the_recorded_metrics() {
    let dir = tempfile::tempdir().expect("tempdir");
    let vocab = tiny_vocab();
    let docs = tiny_docs(3);
    let config = base_config(TrainModel::Neural(ModelKind::Lbl));
    let spec = ws_eval();
    let outcome = run_training(&config, &vocab, &docs, &[spec], EvalOptions::default(), dir.path())
        .expect("train");
    for rec in &outcome.records {
        let table = EmbeddingTable::read_from(&rec.checkpoint).expect("reload");
        assert_eq!(table.len(), vocab.len());
        assert_eq!(table.dim(), 8);
        let again = eval_task(&table, "ws", &ws_eval().data, EvalOptions::default())
            .expect("re-evaluate");
        assert_eq!(
            again.value.to_bits(),
            rec.tasks[0].value.to_bits(),
            "iteration {}: reloaded metric must reproduce the record exactly",
            rec.iteration
        );
    }
}

#[test]
fn frozen_parameters_stop_early_under_val_loss() {
    // lr = 0 freezes the model, so the validation loss never improves and
    // patience drains right away: records end at 1 + patience.
    let dir = tempfile::tempdir().expect("tempdir");
    let vocab = tiny_vocab();
    let docs = tiny_docs(4);
    let mut config = base_config(TrainModel::Neural(ModelKind::Cbow));
    config.lr = 0.0;
    config.iterations = 10;
    config.early_stop = EarlyStop::ValLoss;
    config.patience = 2;
    let outcome = run_training(&config, &vocab, &docs, &[], EvalOptions::default(), dir.path())
        .expect("train");
    assert_eq!(outcome.records.len(), 3);
    assert_eq!(outcome.selected, 1);
    assert_eq!(outcome.checkpoint, outcome.records[0].checkpoint);
    let v1 = outcome.records[0].val_loss;
    assert!(outcome.records.iter().all(|r| r.val_loss == v1), "frozen model, frozen loss");
}

#[test]
fn task_stopping_follows_the_requested_metric() {
    let dir = tempfile::tempdir().expect("tempdir");
    let vocab = tiny_vocab();
    let docs = tiny_docs(5);
    let mut config = base_config(TrainModel::Neural(ModelKind::Cbow));
    config.lr = 0.0;
    config.iterations = 8;
    config.early_stop = EarlyStop::Task("ws".into());
    config.patience = 3;
    let outcome = run_training(&config, &vocab, &docs, &[ws_eval()], EvalOptions::default(), dir.path())
        .expect("train");
    assert_eq!(outcome.records.len(), 4, "constant metric drains patience 3");
    assert_eq!(outcome.selected, 1);
}

#[test]
fn best_iteration_is_selected_under_val_loss_stopping() {
    let dir = tempfile::tempdir().expect("tempdir");
    let vocab = tiny_vocab();
    let docs = tiny_docs(6);
    let mut config = base_config(TrainModel::Neural(ModelKind::Cbow));
    config.iterations = 4;
    config.early_stop = EarlyStop::ValLoss;
    config.patience = 10;
    let outcome = run_training(&config, &vocab, &docs, &[], EvalOptions::default(), dir.path())
        .expect("train");
    assert_eq!(outcome.records.len(), 4, "patience above the horizon never triggers");
    let best = outcome
        .records
        .iter()
        .min_by(|a, b| a.val_loss.partial_cmp(&b.val_loss).expect("finite"))
        .expect("records");
    assert_eq!(outcome.selected, best.iteration);
}

#[test]
fn evaluation_does_not_perturb_training() {
    // Without early stopping the evaluation bundle must not influence the
    // learned parameters: the training RNG streams are keyed apart from it.
    let dir = tempfile::tempdir().expect("tempdir");
    let vocab = tiny_vocab();
    let docs = tiny_docs(7);
    let config = base_config(TrainModel::Neural(ModelKind::Order));
    let with = run_training(&config, &vocab, &docs, &[ws_eval()], EvalOptions::default(), &dir.path().join("w"))
        .expect("train");
    let without = run_training(&config, &vocab, &docs, &[], EvalOptions::default(), &dir.path().join("wo"))
        .expect("train");
    assert_eq!(
        std::fs::read(&with.checkpoint).expect("read"),
        std::fs::read(&without.checkpoint).expect("read"),
        "same parameters with and without evaluation tasks"
    );
}

#[test]
fn glove_trains_with_epoch_loss_in_the_val_column() {
    let dir = tempfile::tempdir().expect("tempdir");
    let vocab = tiny_vocab();
    let docs = tiny_docs(8);
    let mut config = base_config(TrainModel::Glove);
    config.iterations = 4;
    let outcome = run_training(&config, &vocab, &docs, &[ws_eval()], EvalOptions::default(), dir.path())
        .expect("train");
    assert_eq!(outcome.records.len(), 4);
    assert!(outcome.records.iter().all(|r| r.val_loss.is_finite()));
    // The fit improves over epochs on this tiny corpus.
    assert!(
        outcome.records[3].val_loss < outcome.records[0].val_loss,
        "epoch loss {} -> {}",
        outcome.records[0].val_loss,
        outcome.records[3].val_loss
    );
    let table = EmbeddingTable::read_from(&outcome.checkpoint).expect("reload");
    assert_eq!(table.len(), vocab.len());
}

#[test]
fn glove_export_mode_changes_the_checkpoint() {
    let dir = tempfile::tempdir().expect("tempdir");
    let vocab = tiny_vocab();
    let docs = tiny_docs(9);
    let mut config = base_config(TrainModel::Glove);
    config.iterations = 1;
    let summed = run_training(&config, &vocab, &docs, &[], EvalOptions::default(), &dir.path().join("s"))
        .expect("train");
    config.glove_main_only = true;
    let main_only = run_training(&config, &vocab, &docs, &[], EvalOptions::default(), &dir.path().join("m"))
        .expect("train");
    assert_ne!(
        std::fs::read(&summed.checkpoint).expect("read"),
        std::fs::read(&main_only.checkpoint).expect("read")
    );
}

#[test]
fn usage_errors_are_rejected_before_training() {
    let dir = tempfile::tempdir().expect("tempdir");
    let vocab = tiny_vocab();
    let docs = tiny_docs(10);

    let mut config = base_config(TrainModel::Glove);
    config.early_stop = EarlyStop::ValLoss;
    let err = run_training(&config, &vocab, &docs, &[], EvalOptions::default(), dir.path())
        .expect_err("glove has no validation loss");
    assert_eq!(err.exit_code(), 1);
    assert!(err.to_string().contains("no validation loss"), "{err}");

    let mut config = base_config(TrainModel::Neural(ModelKind::Cbow));
    config.early_stop = EarlyStop::Task("tfl".into());
    let err = run_training(&config, &vocab, &docs, &[ws_eval()], EvalOptions::default(), dir.path())
        .expect_err("tfl is not among the evals");
    assert_eq!(err.exit_code(), 1);

    let mut config = base_config(TrainModel::Neural(ModelKind::Cbow));
    config.iterations = 0;
    assert!(run_training(&config, &vocab, &docs, &[], EvalOptions::default(), dir.path()).is_err());
}

#[test]
fn single_document_corpora_cannot_split() {
    let dir = tempfile::tempdir().expect("tempdir");
    let vocab = tiny_vocab();
    let docs = vec![vec![0u32, 1, 2, 3]];
    let config = base_config(TrainModel::Neural(ModelKind::Cbow));
    let err = run_training(&config, &vocab, &docs, &[], EvalOptions::default(), dir.path())
        .expect_err("one document cannot hold out validation data");
    assert_eq!(err.exit_code(), 2);
}

#[cfg(feature = "parallel")]
#[test]
fn multi_worker_training_completes_and_logs() {
    let dir = tempfile::tempdir().expect("tempdir");
    let vocab = tiny_vocab();
    let docs = tiny_docs(11);
    let mut config = base_config(TrainModel::Neural(ModelKind::Cbow));
    config.workers = 2;
    config.iterations = 2;
    let outcome = run_training(&config, &vocab, &docs, &[ws_eval()], EvalOptions::default(), dir.path())
        .expect("train");
    assert_eq!(outcome.records.len(), 2);
    assert!(outcome.records.iter().all(|r| r.val_loss.is_finite()));
}

// ---- parsing ----

#[test]
fn early_stop_names_round_trip() {
    assert_eq!(EarlyStop::parse("none").expect("parse"), EarlyStop::None);
    assert_eq!(EarlyStop::parse("val-loss").expect("parse"), EarlyStop::ValLoss);
    assert_eq!(
        EarlyStop::parse("task:ws").expect("parse"),
        EarlyStop::Task("ws".into())
    );
    for s in [EarlyStop::None, EarlyStop::ValLoss, EarlyStop::Task("avg".into())] {
        assert_eq!(EarlyStop::parse(&s.to_string()).expect("parse"), s);
    }
    assert!(EarlyStop::parse("task:").is_err());
    assert!(EarlyStop::parse("sometimes").is_err());
}

#[test]
fn model_names_cover_all_trainable_families() {
    for kind in ModelKind::ALL {
        let m = TrainModel::parse(kind.name()).expect("parse");
        assert_eq!(m, TrainModel::Neural(kind));
        assert_eq!(m.name(), kind.name());
    }
    assert_eq!(TrainModel::parse("glove").expect("parse"), TrainModel::Glove);
    assert!(TrainModel::parse("bert").is_err());
}

#[test]
fn config_defaults_match_the_controlled_setup() {
    let c = TrainConfig::new(TrainModel::Neural(ModelKind::Cbow));
    assert_eq!(c.dim, 50);
    assert_eq!(c.radius, 5);
    assert_eq!(c.negatives, 5);
    assert_eq!(c.subsample, 1e-4);
    assert_eq!(c.lr, 0.1);
    assert_eq!(c.iterations, 5);
    assert_eq!(c.seed, 1);
    assert_eq!(c.workers, 1);
    assert_eq!(c.early_stop, EarlyStop::None);
    assert_eq!(c.patience, 2);
    assert_eq!(c.cw_hidden, None);
    assert!(!c.glove_main_only);
}
