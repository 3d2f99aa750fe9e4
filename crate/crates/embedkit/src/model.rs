//! The six neural models as one parameterized family: a context
//! representation, an energy or score against the target, and AdaGrad
//! updates driven by negative sampling or a hinge.
//!
//! Gradient math lives in exactly one place. Training, validation, and
//! gradient checking all walk the same code, differing only in the
//! `GradSink` they plug in: `ApplyPredict`/`ApplyCw` push AdaGrad updates,
//! `GradCollector` sums the analytic gradient, `NullSink` skips all
//! gradient work and leaves just the loss.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::PAD;
use crate::params::{AdaGrad, ParamBlock, ParamBuf};
use crate::sampler::NegativeSampler;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    SkipGram,
    Cbow,
    Order,
    Lbl,
    Nnlm,
    Cw,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::SkipGram,
        ModelKind::Cbow,
        ModelKind::Order,
        ModelKind::Lbl,
        ModelKind::Nnlm,
        ModelKind::Cw,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::SkipGram => "skipgram",
            ModelKind::Cbow => "cbow",
            ModelKind::Order => "order",
            ModelKind::Lbl => "lbl",
            ModelKind::Nnlm => "nnlm",
            ModelKind::Cw => "cw",
        }
    }

    pub fn parse(s: &str) -> Result<ModelKind> {
        match s {
            "skipgram" => Ok(ModelKind::SkipGram),
            "cbow" => Ok(ModelKind::Cbow),
            "order" => Ok(ModelKind::Order),
            "lbl" => Ok(ModelKind::Lbl),
            "nnlm" => Ok(ModelKind::Nnlm),
            "cw" => Ok(ModelKind::Cw),
            other => Err(Error::data(format!("unknown model kind {other:?}"))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Shape of one model instance. `cw_hidden` is used only by the C&W
/// scorer; it defaults to `dim`.
#[derive(Clone, Copy, Debug)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub dim: usize,
    pub radius: usize,
    pub cw_hidden: usize,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, dim: usize, radius: usize) -> ModelSpec {
        assert!(dim >= 1 && radius >= 1);
        ModelSpec {
            kind,
            dim,
            radius,
            cw_hidden: dim,
        }
    }

    /// Number of context slots in a window.
    pub fn ctx_slots(&self) -> usize {
        2 * self.radius
    }

    /// Width of the concatenated context.
    pub fn concat_width(&self) -> usize {
        self.ctx_slots() * self.dim
    }

    /// Width of the context representation, which the output embeddings
    /// must match.
    pub fn h_dim(&self) -> usize {
        match self.kind {
            ModelKind::SkipGram | ModelKind::Cbow | ModelKind::Lbl | ModelKind::Nnlm => self.dim,
            ModelKind::Order => self.concat_width(),
            ModelKind::Cw => self.cw_hidden,
        }
    }

    /// Width of the C&W scorer input: context plus the candidate word in
    /// the middle slot.
    pub fn cw_input_width(&self) -> usize {
        (self.ctx_slots() + 1) * self.dim
    }
}

/// Hidden activation. `Identity` exists so tests can reduce one model to
/// another; training always uses `Tanh`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Identity,
}

/// Parameters for the predict-style models (everything but C&W).
/// `input` has one extra row at index `vocab_size` for PAD.
pub struct PredictParams {
    pub kind: ModelKind,
    pub vocab_size: usize,
    pub dim: usize,
    pub radius: usize,
    pub h_dim: usize,
    pub activation: Activation,
    pub input: ParamBlock,
    pub output: ParamBlock,
    pub hidden: Option<ParamBlock>,
    pub hidden_bias: Option<ParamBlock>,
}

/// Parameters for the C&W scorer. `first` maps the (2w+1)-word
/// concatenation to the hidden layer; the score is a linear readout of
/// tanh of that layer.
pub struct CwParams {
    pub vocab_size: usize,
    pub dim: usize,
    pub radius: usize,
    pub h_dim: usize,
    pub input: ParamBlock,
    pub first: ParamBlock,
    pub first_bias: ParamBlock,
    pub score_w: ParamBlock,
    pub score_b: ParamBlock,
}

pub enum ModelParams {
    Predict(PredictParams),
    Cw(CwParams),
}

pub(crate) fn uniform_block(rng: &mut ChaCha8Rng, n: usize, bound: f64) -> ParamBlock {
    let v: Vec<f64> = (0..n).map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * bound).collect();
    ParamBlock::from_vec(v)
}

/// Allocates and initializes a model. Input embeddings (PAD row included)
/// start uniform in [-0.5/d, 0.5/d]. Output embeddings, biases, and the
/// score readout start at zero. Hidden layers start uniform in
/// [-0.5/h, 0.5/h] of their own output width: a zero hidden layer maps
/// every context to the zero vector and its gradient stays zero forever,
/// so those models would never leave the starting point.
pub fn init_model(spec: ModelSpec, vocab_size: usize, seed: u64) -> ModelParams {
    assert!(vocab_size >= 2, "need at least two words");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = spec.dim;
    let input = uniform_block(&mut rng, (vocab_size + 1) * d, 0.5 / d as f64);
    match spec.kind {
        ModelKind::Cw => {
            let h = spec.h_dim();
            let first = uniform_block(&mut rng, h * spec.cw_input_width(), 0.5 / h as f64);
            ModelParams::Cw(CwParams {
                vocab_size,
                dim: d,
                radius: spec.radius,
                h_dim: h,
                input,
                first,
                first_bias: ParamBlock::zeros(h),
                score_w: ParamBlock::zeros(h),
                score_b: ParamBlock::zeros(1),
            })
        }
        kind => {
            let h = spec.h_dim();
            let (hidden, hidden_bias) = match kind {
                ModelKind::Lbl => (
                    Some(uniform_block(&mut rng, h * spec.concat_width(), 0.5 / h as f64)),
                    None,
                ),
                ModelKind::Nnlm => (
                    Some(uniform_block(&mut rng, h * spec.concat_width(), 0.5 / h as f64)),
                    Some(ParamBlock::zeros(h)),
                ),
                _ => (None, None),
            };
            ModelParams::Predict(PredictParams {
                kind,
                vocab_size,
                dim: d,
                radius: spec.radius,
                h_dim: h,
                activation: Activation::Tanh,
                input,
                output: ParamBlock::zeros(vocab_size * h),
                hidden,
                hidden_bias,
            })
        }
    }
}

impl ModelParams {
    pub fn vocab_size(&self) -> usize {
        match self {
            ModelParams::Predict(p) => p.vocab_size,
            ModelParams::Cw(p) => p.vocab_size,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ModelParams::Predict(p) => p.dim,
            ModelParams::Cw(p) => p.dim,
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::Predict(p) => p.kind,
            ModelParams::Cw(_) => ModelKind::Cw,
        }
    }

    /// The trained word vectors: input embedding rows without the PAD row,
    /// flattened row-major.
    pub fn input_vectors(&self) -> Vec<f64> {
        let (buf, v, d) = match self {
            ModelParams::Predict(p) => (&p.input.w, p.vocab_size, p.dim),
            ModelParams::Cw(p) => (&p.input.w, p.vocab_size, p.dim),
        };
        let mut out = vec![0.0; v * d];
        buf.read_slice(0, &mut out);
        out
    }

    /// True when every parameter entry is finite.
    pub fn is_finite(&self) -> bool {
        let blocks: Vec<&ParamBlock> = match self {
            ModelParams::Predict(p) => {
                let mut b = vec![&p.input, &p.output];
                b.extend(p.hidden.as_ref());
                b.extend(p.hidden_bias.as_ref());
                b
            }
            ModelParams::Cw(p) => vec![&p.input, &p.first, &p.first_bias, &p.score_w, &p.score_b],
        };
        blocks
            .iter()
            .all(|b| b.w.iter().all(f64::is_finite) && b.g2.iter().all(f64::is_finite))
    }
}

/// Flat row index into the input block for a (possibly PAD) slot word.
#[inline]
pub fn input_row(vocab_size: usize, id: u32) -> usize {
    if id == PAD {
        vocab_size
    } else {
        id as usize
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// ln(1 + e^x) computed without overflow, so -ln sigmoid(s) = softplus(-s).
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Receiver for gradient contributions. Contributions are emitted in a
/// fixed order with everything that reads original parameter values
/// computed before the first emission that could overwrite them.
pub trait GradSink {
    const ACTIVE: bool;
    /// += coeff * h to output-embedding row `row`.
    fn output(&mut self, row: usize, coeff: f64, h: &[f64]);
    /// += coeff * g to input-embedding row `row` (g has full row width).
    fn input(&mut self, row: usize, coeff: f64, g: &[f64]);
    /// += coeff * x to row `row` of the hidden (or first-layer) matrix.
    fn hidden_row(&mut self, row: usize, coeff: f64, x: &[f64]);
    fn hidden_bias(&mut self, i: usize, g: f64);
    fn score_w(&mut self, i: usize, g: f64);
    fn score_b(&mut self, g: f64);
}

/// Applies each contribution as an immediate AdaGrad step on predict-model
/// parameters.
pub struct ApplyPredict<'a> {
    pub params: &'a PredictParams,
    pub opt: AdaGrad,
}

impl GradSink for ApplyPredict<'_> {
    const ACTIVE: bool = true;

    fn output(&mut self, row: usize, coeff: f64, h: &[f64]) {
        let base = row * h.len();
        for (i, &hi) in h.iter().enumerate() {
            self.params.output.apply(base + i, coeff * hi, self.opt);
        }
    }

    fn input(&mut self, row: usize, coeff: f64, g: &[f64]) {
        let base = row * g.len();
        for (i, &gi) in g.iter().enumerate() {
            self.params.input.apply(base + i, coeff * gi, self.opt);
        }
    }

    fn hidden_row(&mut self, row: usize, coeff: f64, x: &[f64]) {
        let hidden = self.params.hidden.as_ref().expect("model has no hidden layer");
        let base = row * x.len();
        for (i, &xi) in x.iter().enumerate() {
            hidden.apply(base + i, coeff * xi, self.opt);
        }
    }

    fn hidden_bias(&mut self, i: usize, g: f64) {
        self.params
            .hidden_bias
            .as_ref()
            .expect("model has no hidden bias")
            .apply(i, g, self.opt);
    }

    fn score_w(&mut self, _i: usize, _g: f64) {
        unreachable!("predict models have no score readout");
    }

    fn score_b(&mut self, _g: f64) {
        unreachable!("predict models have no score readout");
    }
}

/// Applies each contribution as an immediate AdaGrad step on C&W
/// parameters.
pub struct ApplyCw<'a> {
    pub params: &'a CwParams,
    pub opt: AdaGrad,
}

impl GradSink for ApplyCw<'_> {
    const ACTIVE: bool = true;

    fn output(&mut self, _row: usize, _coeff: f64, _h: &[f64]) {
        unreachable!("C&W has no output embeddings");
    }

    fn input(&mut self, row: usize, coeff: f64, g: &[f64]) {
        let base = row * g.len();
        for (i, &gi) in g.iter().enumerate() {
            self.params.input.apply(base + i, coeff * gi, self.opt);
        }
    }

    fn hidden_row(&mut self, row: usize, coeff: f64, x: &[f64]) {
        let base = row * x.len();
        for (i, &xi) in x.iter().enumerate() {
            self.params.first.apply(base + i, coeff * xi, self.opt);
        }
    }

    fn hidden_bias(&mut self, i: usize, g: f64) {
        self.params.first_bias.apply(i, g, self.opt);
    }

    fn score_w(&mut self, i: usize, g: f64) {
        self.params.score_w.apply(i, g, self.opt);
    }

    fn score_b(&mut self, g: f64) {
        self.params.score_b.apply(0, g, self.opt);
    }
}

/// Computes losses only; all gradient work is skipped.
pub struct NullSink;

impl GradSink for NullSink {
    const ACTIVE: bool = false;
    fn output(&mut self, _: usize, _: f64, _: &[f64]) {}
    fn input(&mut self, _: usize, _: f64, _: &[f64]) {}
    fn hidden_row(&mut self, _: usize, _: f64, _: &[f64]) {}
    fn hidden_bias(&mut self, _: usize, _: f64) {}
    fn score_w(&mut self, _: usize, _: f64) {}
    fn score_b(&mut self, _: f64) {}
}

/// Sums all contributions into dense gradient blocks: the exact analytic
/// gradient of the sample loss, for checking against finite differences.
pub struct GradCollector {
    pub input: Vec<f64>,
    pub output: Vec<f64>,
    pub hidden: Vec<f64>,
    pub hidden_bias: Vec<f64>,
    pub score_w: Vec<f64>,
    pub score_b: f64,
}

impl GradCollector {
    pub fn for_predict(p: &PredictParams) -> GradCollector {
        GradCollector {
            input: vec![0.0; p.input.len()],
            output: vec![0.0; p.output.len()],
            hidden: vec![0.0; p.hidden.as_ref().map_or(0, ParamBlock::len)],
            hidden_bias: vec![0.0; p.hidden_bias.as_ref().map_or(0, ParamBlock::len)],
            score_w: Vec::new(),
            score_b: 0.0,
        }
    }

    pub fn for_cw(p: &CwParams) -> GradCollector {
        GradCollector {
            input: vec![0.0; p.input.len()],
            output: Vec::new(),
            hidden: vec![0.0; p.first.len()],
            hidden_bias: vec![0.0; p.first_bias.len()],
            score_w: vec![0.0; p.score_w.len()],
            score_b: 0.0,
        }
    }
}

impl GradSink for GradCollector {
    const ACTIVE: bool = true;

    fn output(&mut self, row: usize, coeff: f64, h: &[f64]) {
        let base = row * h.len();
        for (i, &hi) in h.iter().enumerate() {
            self.output[base + i] += coeff * hi;
        }
    }

    fn input(&mut self, row: usize, coeff: f64, g: &[f64]) {
        let base = row * g.len();
        for (i, &gi) in g.iter().enumerate() {
            self.input[base + i] += coeff * gi;
        }
    }

    fn hidden_row(&mut self, row: usize, coeff: f64, x: &[f64]) {
        let base = row * x.len();
        for (i, &xi) in x.iter().enumerate() {
            self.hidden[base + i] += coeff * xi;
        }
    }

    fn hidden_bias(&mut self, i: usize, g: f64) {
        self.hidden_bias[i] += g;
    }

    fn score_w(&mut self, i: usize, g: f64) {
        self.score_w[i] += g;
    }

    fn score_b(&mut self, g: f64) {
        self.score_b += g;
    }
}

/// Per-worker reusable buffers. Everything is resized on use, so one
/// scratch serves any model shape.
#[derive(Default)]
pub struct Scratch {
    pub h: Vec<f64>,
    pub gh: Vec<f64>,
    pub x: Vec<f64>,
    pub x2: Vec<f64>,
    pub gx: Vec<f64>,
    pub gx2: Vec<f64>,
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
    pub gz1: Vec<f64>,
    pub gz2: Vec<f64>,
    pub row: Vec<f64>,
    pub rowg: Vec<f64>,
    pub negs: Vec<u32>,
}

impl Scratch {
    pub fn new() -> Scratch {
        Scratch::default()
    }
}

fn sized(v: &mut Vec<f64>, n: usize) -> &mut [f64] {
    v.clear();
    v.resize(n, 0.0);
    v.as_mut_slice()
}

#[inline]
fn dot_row(buf: &ParamBuf, base: usize, v: &[f64]) -> f64 {
    let mut s = 0.0;
    for (i, &vi) in v.iter().enumerate() {
        s += buf.get(base + i) * vi;
    }
    s
}

/// Energy of one candidate target word against a context representation.
pub fn predict_energy(p: &PredictParams, h: &[f64], word: u32) -> f64 {
    assert_eq!(h.len(), p.h_dim);
    dot_row(&p.output.w, word as usize * p.h_dim, h)
}

/// Context representation, materialized. Training uses the same internal
/// forward but into reusable buffers.
pub enum ContextRepr {
    /// One vector for the whole window (CBOW, ORDER, LBL, NNLM).
    Merged(Vec<f64>),
    /// One representation per non-PAD context word (Skip-gram).
    PerWord(Vec<(u32, Vec<f64>)>),
    /// No usable context (all-PAD under CBOW/Skip-gram).
    Skip,
}

pub fn represent_context(p: &PredictParams, slots: &[u32]) -> ContextRepr {
    assert_eq!(slots.len(), 2 * p.radius);
    match p.kind {
        ModelKind::SkipGram => {
            let mut reps = Vec::new();
            for &u in slots.iter().filter(|&&u| u != PAD) {
                let mut r = vec![0.0; p.dim];
                p.input.w.read_slice(input_row(p.vocab_size, u) * p.dim, &mut r);
                reps.push((u, r));
            }
            if reps.is_empty() {
                ContextRepr::Skip
            } else {
                ContextRepr::PerWord(reps)
            }
        }
        _ => {
            let mut scratch = Scratch::new();
            if merged_repr(p, slots, &mut scratch) {
                ContextRepr::Merged(scratch.h)
            } else {
                ContextRepr::Skip
            }
        }
    }
}

/// Fills scratch.h (and scratch.x for the concatenation models). Returns
/// false when the window carries no sample (all-PAD CBOW).
fn merged_repr(p: &PredictParams, slots: &[u32], scratch: &mut Scratch) -> bool {
    let d = p.dim;
    match p.kind {
        ModelKind::Cbow => {
            let h = sized(&mut scratch.h, d);
            let row = sized(&mut scratch.row, d);
            let mut m = 0usize;
            for &u in slots.iter().filter(|&&u| u != PAD) {
                p.input.w.read_slice(input_row(p.vocab_size, u) * d, row);
                for i in 0..d {
                    h[i] += row[i];
                }
                m += 1;
            }
            if m == 0 {
                return false;
            }
            let inv = 1.0 / m as f64;
            for v in h.iter_mut() {
                *v *= inv;
            }
            true
        }
        ModelKind::Order => {
            let h = sized(&mut scratch.h, slots.len() * d);
            for (j, &u) in slots.iter().enumerate() {
                p.input
                    .w
                    .read_slice(input_row(p.vocab_size, u) * d, &mut h[j * d..(j + 1) * d]);
            }
            true
        }
        ModelKind::Lbl | ModelKind::Nnlm => {
            let cw = slots.len() * d;
            let x = sized(&mut scratch.x, cw);
            for (j, &u) in slots.iter().enumerate() {
                p.input
                    .w
                    .read_slice(input_row(p.vocab_size, u) * d, &mut x[j * d..(j + 1) * d]);
            }
            let hidden = p.hidden.as_ref().expect("LBL/NNLM carry a hidden layer");
            let hd = hidden.len() / cw;
            let h = sized(&mut scratch.h, hd);
            for (r, hr) in h.iter_mut().enumerate() {
                *hr = dot_row(&hidden.w, r * cw, x);
            }
            if p.kind == ModelKind::Nnlm {
                if let Some(bias) = &p.hidden_bias {
                    for (r, hr) in h.iter_mut().enumerate() {
                        *hr += bias.w.get(r);
                    }
                }
                if p.activation == Activation::Tanh {
                    for hr in h.iter_mut() {
                        *hr = hr.tanh();
                    }
                }
            }
            true
        }
        ModelKind::SkipGram | ModelKind::Cw => unreachable!("not a merged representation"),
    }
}

/// One classification: the target against `negs`, sharing the context
/// representation `h`. Returns the loss
/// softplus(-s_target) + sum softplus(s_neg), fills `gh` with the loss
/// gradient in h, and emits output-row gradients.
fn classify<S: GradSink>(
    p: &PredictParams,
    h: &[f64],
    target: u32,
    negs: &[u32],
    gh: &mut [f64],
    row: &mut [f64],
    sink: &mut S,
) -> f64 {
    if S::ACTIVE {
        gh.fill(0.0);
    }
    let hd = p.h_dim;
    let mut loss = 0.0;
    for (j, &word) in std::iter::once(&target).chain(negs.iter()).enumerate() {
        let base = word as usize * hd;
        p.output.w.read_slice(base, row);
        let mut s = 0.0;
        for i in 0..hd {
            s += row[i] * h[i];
        }
        let delta = if j == 0 {
            loss += softplus(-s);
            sigmoid(s) - 1.0
        } else {
            loss += softplus(s);
            sigmoid(s)
        };
        if S::ACTIVE {
            for i in 0..hd {
                gh[i] += delta * row[i];
            }
            sink.output(word as usize, delta, h);
        }
    }
    loss
}

/// Trains the predict-style models on one window. Negatives for each
/// classification come from `draw`. Returns (summed loss, number of
/// classifications); (0, 0) means the window was skipped.
pub fn train_predict_window<S, F>(
    p: &PredictParams,
    target: u32,
    slots: &[u32],
    scratch: &mut Scratch,
    draw: &mut F,
    sink: &mut S,
) -> (f64, usize)
where
    S: GradSink,
    F: FnMut(u32, &mut Vec<u32>),
{
    let d = p.dim;
    if p.kind == ModelKind::SkipGram {
        let mut total = 0.0;
        let mut n = 0usize;
        for &u in slots.iter().filter(|&&u| u != PAD) {
            {
                let h = sized(&mut scratch.h, d);
                p.input.w.read_slice(input_row(p.vocab_size, u) * d, h);
            }
            draw(target, &mut scratch.negs);
            let gh = {
                scratch.gh.clear();
                scratch.gh.resize(p.h_dim, 0.0);
                &mut scratch.gh
            };
            let row = {
                scratch.row.clear();
                scratch.row.resize(p.h_dim, 0.0);
                &mut scratch.row
            };
            total += classify(p, &scratch.h, target, &scratch.negs, gh, row, sink);
            if S::ACTIVE {
                sink.input(input_row(p.vocab_size, u), 1.0, &scratch.gh);
            }
            n += 1;
        }
        return (total, n);
    }

    if !merged_repr(p, slots, scratch) {
        return (0.0, 0);
    }
    draw(target, &mut scratch.negs);
    scratch.gh.clear();
    scratch.gh.resize(p.h_dim, 0.0);
    scratch.rowg.clear();
    scratch.rowg.resize(p.h_dim, 0.0);
    let loss = {
        let (gh, row) = (&mut scratch.gh, &mut scratch.rowg);
        classify(p, &scratch.h, target, &scratch.negs, gh, row, sink)
    };
    if !S::ACTIVE {
        return (loss, 1);
    }

    match p.kind {
        ModelKind::Cbow => {
            let m = slots.iter().filter(|&&u| u != PAD).count();
            let coeff = 1.0 / m as f64;
            for &u in slots.iter().filter(|&&u| u != PAD) {
                sink.input(input_row(p.vocab_size, u), coeff, &scratch.gh);
            }
        }
        ModelKind::Order => {
            for (j, &u) in slots.iter().enumerate() {
                sink.input(input_row(p.vocab_size, u), 1.0, &scratch.gh[j * d..(j + 1) * d]);
            }
        }
        ModelKind::Lbl | ModelKind::Nnlm => {
            let cw = slots.len() * d;
            let hd = p.h_dim;
            let hidden = p.hidden.as_ref().expect("LBL/NNLM carry a hidden layer");
            // Gradient at the pre-activation layer.
            let ga: &[f64] = if p.kind == ModelKind::Nnlm && p.activation == Activation::Tanh {
                let ga = sized(&mut scratch.gz1, hd);
                for (r, g) in ga.iter_mut().enumerate() {
                    *g = scratch.gh[r] * (1.0 - scratch.h[r] * scratch.h[r]);
                }
                &scratch.gz1
            } else {
                &scratch.gh
            };
            // Backprop into the concatenation with the hidden matrix as it
            // was for the forward pass, before any update lands on it.
            let gx = sized(&mut scratch.gx, cw);
            for (r, &g) in ga.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let base = r * cw;
                for (c, gc) in gx.iter_mut().enumerate() {
                    *gc += hidden.w.get(base + c) * g;
                }
            }
            for (r, &g) in ga.iter().enumerate() {
                sink.hidden_row(r, g, &scratch.x);
            }
            if p.kind == ModelKind::Nnlm {
                for (r, &g) in ga.iter().enumerate() {
                    sink.hidden_bias(r, g);
                }
            }
            for (j, &u) in slots.iter().enumerate() {
                sink.input(input_row(p.vocab_size, u), 1.0, &scratch.gx[j * d..(j + 1) * d]);
            }
        }
        ModelKind::SkipGram | ModelKind::Cw => unreachable!(),
    }
    (loss, 1)
}

/// Forward pass of the C&W scorer with `middle` in the center slot.
/// Fills x with the concatenation and a with the hidden activations.
fn cw_forward(p: &CwParams, middle: u32, slots: &[u32], x: &mut [f64], a: &mut [f64]) -> f64 {
    let d = p.dim;
    let w = p.radius;
    debug_assert_eq!(slots.len(), 2 * w);
    for (j, &u) in slots[..w].iter().enumerate() {
        p.input.w.read_slice(input_row(p.vocab_size, u) * d, &mut x[j * d..(j + 1) * d]);
    }
    p.input
        .w
        .read_slice(input_row(p.vocab_size, middle) * d, &mut x[w * d..(w + 1) * d]);
    for (j, &u) in slots[w..].iter().enumerate() {
        let off = (w + 1 + j) * d;
        p.input.w.read_slice(input_row(p.vocab_size, u) * d, &mut x[off..off + d]);
    }
    let width = x.len();
    let mut score = p.score_b.w.get(0);
    for (r, ar) in a.iter_mut().enumerate() {
        let z = p.first_bias.w.get(r) + dot_row(&p.first.w, r * width, x);
        *ar = z.tanh();
        score += p.score_w.w.get(r) * *ar;
    }
    score
}

/// Score of a candidate word in its context.
pub fn cw_score(p: &CwParams, word: u32, slots: &[u32]) -> f64 {
    let mut x = vec![0.0; (2 * p.radius + 1) * p.dim];
    let mut a = vec![0.0; p.h_dim];
    cw_forward(p, word, slots, &mut x, &mut a)
}

/// Trains the C&W scorer on one window against a corruption word.
/// Loss is max(0, 1 - s(target) + s(corrupt)); nothing moves when the
/// margin is already met. Returns the loss.
pub fn train_cw_window<S: GradSink>(
    p: &CwParams,
    target: u32,
    slots: &[u32],
    corrupt: u32,
    scratch: &mut Scratch,
    sink: &mut S,
) -> f64 {
    let d = p.dim;
    let w = p.radius;
    let width = (2 * w + 1) * d;
    let hd = p.h_dim;
    let s1 = {
        let x = sized(&mut scratch.x, width);
        let a = sized(&mut scratch.a1, hd);
        cw_forward(p, target, slots, x, a)
    };
    let s2 = {
        let x = sized(&mut scratch.x2, width);
        let a = sized(&mut scratch.a2, hd);
        cw_forward(p, corrupt, slots, x, a)
    };
    let loss = 1.0 - s1 + s2;
    if loss <= 0.0 {
        return 0.0;
    }
    if !S::ACTIVE {
        return loss;
    }

    // Everything that reads original parameters happens before the first
    // emission: gz needs the readout, gx needs the first layer.
    let gz1 = sized(&mut scratch.gz1, hd);
    let gz2 = sized(&mut scratch.gz2, hd);
    for r in 0..hd {
        let v = p.score_w.w.get(r);
        gz1[r] = -v * (1.0 - scratch.a1[r] * scratch.a1[r]);
        gz2[r] = v * (1.0 - scratch.a2[r] * scratch.a2[r]);
    }
    let gx1 = sized(&mut scratch.gx, width);
    for (r, &g) in scratch.gz1.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let base = r * width;
        for (c, gc) in gx1.iter_mut().enumerate() {
            *gc += p.first.w.get(base + c) * g;
        }
    }
    let gx2 = sized(&mut scratch.gx2, width);
    for (r, &g) in scratch.gz2.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let base = r * width;
        for (c, gc) in gx2.iter_mut().enumerate() {
            *gc += p.first.w.get(base + c) * g;
        }
    }

    for r in 0..hd {
        sink.score_w(r, scratch.a2[r] - scratch.a1[r]);
    }
    // d loss / d score_bias: the bias enters both scores and cancels.
    sink.score_b(0.0);
    for r in 0..hd {
        sink.hidden_bias(r, scratch.gz1[r] + scratch.gz2[r]);
    }
    {
        let rowg = sized(&mut scratch.rowg, width);
        for r in 0..hd {
            let (g1, g2) = (scratch.gz1[r], scratch.gz2[r]);
            for (c, rg) in rowg.iter_mut().enumerate() {
                *rg = g1 * scratch.x[c] + g2 * scratch.x2[c];
            }
            sink.hidden_row(r, 1.0, rowg);
        }
    }
    // Context rows appear in both concatenations at the same offsets; the
    // middle slot differs between them.
    {
        let rowg = sized(&mut scratch.rowg, d);
        for (j, &u) in slots[..w].iter().enumerate() {
            let off = j * d;
            for (c, rg) in rowg.iter_mut().enumerate() {
                *rg = scratch.gx[off + c] + scratch.gx2[off + c];
            }
            sink.input(input_row(p.vocab_size, u), 1.0, rowg);
        }
        for (j, &u) in slots[w..].iter().enumerate() {
            let off = (w + 1 + j) * d;
            for (c, rg) in rowg.iter_mut().enumerate() {
                *rg = scratch.gx[off + c] + scratch.gx2[off + c];
            }
            sink.input(input_row(p.vocab_size, u), 1.0, rowg);
        }
    }
    let mid = w * d;
    sink.input(input_row(p.vocab_size, target), 1.0, &scratch.gx[mid..mid + d]);
    sink.input(input_row(p.vocab_size, corrupt), 1.0, &scratch.gx2[mid..mid + d]);
    loss
}

/// Uniform corruption word, redrawn until it differs from the target.
pub fn draw_corrupt(vocab_size: usize, target: u32, rng: &mut impl Rng) -> u32 {
    assert!(vocab_size >= 2);
    loop {
        let c = rng.gen_range(0..vocab_size as u32);
        if c != target {
            return c;
        }
    }
}

/// Loss of one predict-model window with pinned negatives, no updates.
/// `fixed[i]` serves the i-th classification of the window (Skip-gram has
/// one per non-PAD context word, the merged models exactly one).
pub fn predict_loss_fixed(
    p: &PredictParams,
    target: u32,
    slots: &[u32],
    fixed: &[Vec<u32>],
    scratch: &mut Scratch,
) -> f64 {
    let mut i = 0usize;
    let mut draw = |_t: u32, out: &mut Vec<u32>| {
        out.clear();
        out.extend_from_slice(&fixed[i]);
        i += 1;
    };
    train_predict_window(p, target, slots, scratch, &mut draw, &mut NullSink).0
}

/// Analytic gradient of `predict_loss_fixed` summed over every parameter.
pub fn predict_grads_fixed(
    p: &PredictParams,
    target: u32,
    slots: &[u32],
    fixed: &[Vec<u32>],
    scratch: &mut Scratch,
) -> (f64, GradCollector) {
    let mut col = GradCollector::for_predict(p);
    let mut i = 0usize;
    let mut draw = |_t: u32, out: &mut Vec<u32>| {
        out.clear();
        out.extend_from_slice(&fixed[i]);
        i += 1;
    };
    let (loss, _) = train_predict_window(p, target, slots, scratch, &mut draw, &mut col);
    (loss, col)
}

/// Loss of one C&W window with a pinned corruption, no updates.
pub fn cw_loss_fixed(
    p: &CwParams,
    target: u32,
    slots: &[u32],
    corrupt: u32,
    scratch: &mut Scratch,
) -> f64 {
    train_cw_window(p, target, slots, corrupt, scratch, &mut NullSink)
}

/// Analytic gradient of `cw_loss_fixed`.
pub fn cw_grads_fixed(
    p: &CwParams,
    target: u32,
    slots: &[u32],
    corrupt: u32,
    scratch: &mut Scratch,
) -> (f64, GradCollector) {
    let mut col = GradCollector::for_cw(p);
    let loss = train_cw_window(p, target, slots, corrupt, scratch, &mut col);
    (loss, col)
}

/// Mean per-sample loss over a fixed window set with no updates.
/// Negatives (or corruptions) come from a stream keyed by (seed, document,
/// position), so the value is independent of iteration order and worker
/// partitioning, and identical across epochs for identical parameters.
pub struct ValidationStream {
    pub seed: u64,
}

impl ValidationStream {
    fn rng(&self, doc: u64, pos: u64) -> ChaCha8Rng {
        let mut h = self.seed ^ 0x6a09e667f3bcc908;
        h = splitmix(h ^ doc.wrapping_mul(0x9e3779b97f4a7c15));
        h = splitmix(h ^ pos.wrapping_mul(0xa0761d6478bd642f));
        ChaCha8Rng::seed_from_u64(h)
    }

    /// Loss and classification count for one window of a predict model.
    #[allow(clippy::too_many_arguments)]
    pub fn predict_window(
        &self,
        p: &PredictParams,
        sampler: &NegativeSampler,
        doc: u64,
        pos: u64,
        target: u32,
        slots: &[u32],
        scratch: &mut Scratch,
    ) -> (f64, usize) {
        let mut rng = self.rng(doc, pos);
        let mut draw = |t: u32, out: &mut Vec<u32>| sampler.fill_negatives(t, &mut rng, out);
        train_predict_window(p, target, slots, scratch, &mut draw, &mut NullSink)
    }

    /// Loss for one window of the C&W scorer.
    pub fn cw_window(
        &self,
        p: &CwParams,
        doc: u64,
        pos: u64,
        target: u32,
        slots: &[u32],
        scratch: &mut Scratch,
    ) -> (f64, usize) {
        let mut rng = self.rng(doc, pos);
        let corrupt = draw_corrupt(p.vocab_size, target, &mut rng);
        (
            train_cw_window(p, target, slots, corrupt, scratch, &mut NullSink),
            1,
        )
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58476d1ce4e5b9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94d049bb133111eb);
    x ^= x >> 31;
    x
}
