//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use embedkit::corpus::PAD;
use embedkit::model::{
    cw_grads_fixed, cw_loss_fixed, init_model, predict_grads_fixed, predict_loss_fixed,
    GradCollector, ModelKind, ModelParams, ModelSpec, Scratch,
};
use embedkit::params::ParamBlock;

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;
/// Relative error floor: below this magnitude, finite differences are
/// dominated by cancellation noise rather than the gradient itself.
pub const FD_DENOM_FLOOR: f64 = 1e-3;

pub fn rel_err(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(FD_DENOM_FLOOR)
}

/// Central finite difference of `loss` against `analytic` over every entry
/// of `block`. Returns the worst relative error. `block` is restored.
pub fn fd_block(block: &ParamBlock, analytic: &[f64], mut loss: impl FnMut() -> f64) -> f64 {
    assert_eq!(block.len(), analytic.len());
    let mut worst = 0.0f64;
    for (i, &grad) in analytic.iter().enumerate() {
        let x = block.w.get(i);
        block.w.set(i, x + FD_STEP);
        let lp = loss();
        block.w.set(i, x - FD_STEP);
        let lm = loss();
        block.w.set(i, x);
        let fd = (lp - lm) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(grad, fd));
    }
    worst
}

/// One random window: target plus 2w context slots, some of them PAD.
pub fn random_window(rng: &mut ChaCha8Rng, vocab: usize, radius: usize) -> (u32, Vec<u32>) {
    let target = rng.gen_range(0..vocab as u32);
    loop {
        let slots: Vec<u32> = (0..2 * radius)
            .map(|_| {
                if rng.gen_bool(0.2) {
                    PAD
                } else {
                    rng.gen_range(0..vocab as u32)
                }
            })
            .collect();
        if slots.iter().any(|&u| u != PAD) {
            return (target, slots);
        }
    }
}

pub fn random_negatives(rng: &mut ChaCha8Rng, vocab: usize, k: usize, target: u32) -> Vec<u32> {
    (0..k)
        .map(|_| loop {
            let c = rng.gen_range(0..vocab as u32);
            if c != target {
                break c;
            }
        })
        .collect()
}

/// Worst relative FD error across every parameter block of one predict
/// model instance on one window.
pub fn fd_check_predict(
    kind: ModelKind,
    vocab: usize,
    dim: usize,
    radius: usize,
    seed: u64,
) -> f64 {
    let spec = ModelSpec::new(kind, dim, radius);
    let ModelParams::Predict(p) = init_model(spec, vocab, seed) else {
        panic!("predict model expected");
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e3779b97f4a7c15);
    let (target, slots) = random_window(&mut rng, vocab, radius);
    let n_class = if kind == ModelKind::SkipGram {
        slots.iter().filter(|&&u| u != PAD).count()
    } else {
        1
    };
    let fixed: Vec<Vec<u32>> = (0..n_class)
        .map(|_| random_negatives(&mut rng, vocab, 5, target))
        .collect();
    // The zero-initialized output layer has zero gradients w.r.t. the
    // hidden blocks; nudge every block away from zero first.
    perturb_params(&p.input, &mut rng, 0.1);
    perturb_params(&p.output, &mut rng, 0.1);
    if let Some(h) = &p.hidden {
        perturb_params(h, &mut rng, 0.1);
    }
    if let Some(b) = &p.hidden_bias {
        perturb_params(b, &mut rng, 0.1);
    }

    let mut scratch = Scratch::new();
    let (loss0, col) = predict_grads_fixed(&p, target, &slots, &fixed, &mut scratch);
    assert!(loss0.is_finite() && loss0 > 0.0);
    let mut worst = fd_block(&p.input, &col.input, || {
        predict_loss_fixed(&p, target, &slots, &fixed, &mut Scratch::new())
    });
    worst = worst.max(fd_block(&p.output, &col.output, || {
        predict_loss_fixed(&p, target, &slots, &fixed, &mut Scratch::new())
    }));
    if let Some(h) = &p.hidden {
        worst = worst.max(fd_block(h, &col.hidden, || {
            predict_loss_fixed(&p, target, &slots, &fixed, &mut Scratch::new())
        }));
    }
    if let Some(b) = &p.hidden_bias {
        worst = worst.max(fd_block(b, &col.hidden_bias, || {
            predict_loss_fixed(&p, target, &slots, &fixed, &mut Scratch::new())
        }));
    }
    worst
}

/// Worst relative FD error for one window-scoring instance. Instances
/// whose hinge is inactive or near the kink are skipped (returns None):
/// the loss is not differentiable at the margin.
pub fn fd_check_cw(vocab: usize, dim: usize, radius: usize, seed: u64) -> Option<f64> {
    let spec = ModelSpec::new(ModelKind::Cw, dim, radius);
    let ModelParams::Cw(p) = init_model(spec, vocab, seed) else {
        panic!("window-scoring model expected");
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e3779b97f4a7c15);
    let (target, slots) = random_window(&mut rng, vocab, radius);
    let corrupt = loop {
        let c = rng.gen_range(0..vocab as u32);
        if c != target {
            break c;
        }
    };
    perturb_params(&p.input, &mut rng, 0.1);
    perturb_params(&p.first, &mut rng, 0.1);
    perturb_params(&p.first_bias, &mut rng, 0.1);
    perturb_params(&p.score_w, &mut rng, 0.5);
    perturb_params(&p.score_b, &mut rng, 0.5);

    let mut scratch = Scratch::new();
    let (loss0, col) = cw_grads_fixed(&p, target, &slots, corrupt, &mut scratch);
    if loss0 < 0.05 {
        return None;
    }
    let mut worst = fd_block(&p.input, &col.input, || {
        cw_loss_fixed(&p, target, &slots, corrupt, &mut Scratch::new())
    });
    worst = worst.max(fd_block(&p.first, &col.hidden, || {
        cw_loss_fixed(&p, target, &slots, corrupt, &mut Scratch::new())
    }));
    worst = worst.max(fd_block(&p.first_bias, &col.hidden_bias, || {
        cw_loss_fixed(&p, target, &slots, corrupt, &mut Scratch::new())
    }));
    worst = worst.max(fd_block(&p.score_w, &col.score_w, || {
        cw_loss_fixed(&p, target, &slots, corrupt, &mut Scratch::new())
    }));
    worst = worst.max(fd_block(&p.score_b, &[col.score_b], || {
        cw_loss_fixed(&p, target, &slots, corrupt, &mut Scratch::new())
    }));
    Some(worst)
}

/// Adds uniform noise in [-bound, bound] to every entry of a block.
pub fn perturb_params(block: &ParamBlock, rng: &mut ChaCha8Rng, bound: f64) {
    for i in 0..block.len() {
        block
            .w
            .set(i, block.w.get(i) + (rng.gen::<f64>() * 2.0 - 1.0) * bound);
    }
}

/// Builds predict-model parameters from plain vectors, for hand examples.
#[allow(clippy::too_many_arguments)]
pub fn predict_params_from(
    kind: ModelKind,
    vocab: usize,
    dim: usize,
    radius: usize,
    h_dim: usize,
    input: Vec<f64>,
    output: Vec<f64>,
    hidden: Option<Vec<f64>>,
    hidden_bias: Option<Vec<f64>>,
) -> embedkit::model::PredictParams {
    assert_eq!(input.len(), (vocab + 1) * dim);
    assert_eq!(output.len(), vocab * h_dim);
    embedkit::model::PredictParams {
        kind,
        vocab_size: vocab,
        dim,
        radius,
        h_dim,
        activation: embedkit::model::Activation::Tanh,
        input: ParamBlock::from_vec(input),
        output: ParamBlock::from_vec(output),
        hidden: hidden.map(ParamBlock::from_vec),
        hidden_bias: hidden_bias.map(ParamBlock::from_vec),
    }
}

pub fn collector_total_abs(col: &GradCollector) -> f64 {
    col.input.iter().map(|g| g.abs()).sum::<f64>()
        + col.output.iter().map(|g| g.abs()).sum::<f64>()
        + col.hidden.iter().map(|g| g.abs()).sum::<f64>()
        + col.hidden_bias.iter().map(|g| g.abs()).sum::<f64>()
        + col.score_w.iter().map(|g| g.abs()).sum::<f64>()
        + col.score_b.abs()
}
