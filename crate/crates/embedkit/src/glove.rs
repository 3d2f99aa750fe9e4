//! Count-based comparator: co-occurrence accumulation and weighted
//! least-squares fitting over the non-zero cells.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{for_each_window, PAD};
use crate::model::uniform_block;
use crate::params::{AdaGrad, ParamBlock};
use crate::{Error, Result};

pub const X_MAX: f64 = 100.0;
pub const WEIGHT_ALPHA: f64 = 0.75;

/// Sparse word-by-context counts. Keys pack (word, context) into one u64.
#[derive(Debug)]
pub struct CoocTable {
    vocab_size: usize,
    cells: HashMap<u64, f64>,
}

#[inline]
fn key(i: u32, j: u32) -> u64 {
    ((i as u64) << 32) | j as u64
}

impl CoocTable {
    pub fn new(vocab_size: usize) -> CoocTable {
        CoocTable {
            vocab_size,
            cells: HashMap::new(),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn get(&self, i: u32, j: u32) -> f64 {
        self.cells.get(&key(i, j)).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.cells.values().sum()
    }

    /// Adds 1 to X[target][context] for every non-PAD context slot of
    /// every window. No distance weighting.
    pub fn accumulate(&mut self, doc: &[u32], radius: usize) {
        for_each_window(doc, radius, |_, target, slots| {
            for &c in slots.iter().filter(|&&c| c != PAD) {
                *self.cells.entry(key(target, c)).or_insert(0.0) += 1.0;
            }
        });
    }

    /// Folds another partial table into this one.
    pub fn merge(&mut self, other: CoocTable) {
        for (k, v) in other.cells {
            *self.cells.entry(k).or_insert(0.0) += v;
        }
    }

    pub fn from_documents<'a, I>(docs: I, radius: usize, vocab_size: usize) -> CoocTable
    where
        I: IntoIterator<Item = &'a [u32]>,
    {
        let mut t = CoocTable::new(vocab_size);
        for d in docs {
            t.accumulate(d, radius);
        }
        t
    }

    /// All cells ordered by (word, context).
    pub fn cells_sorted(&self) -> Vec<(u32, u32, f64)> {
        let mut out: Vec<(u32, u32, f64)> = self
            .cells
            .iter()
            .map(|(&k, &v)| ((k >> 32) as u32, k as u32, v))
            .collect();
        out.sort_unstable_by_key(|a| (a.0, a.1));
        out
    }

    /// Writes "i j X_ij" lines sorted by (i, j).
    pub fn write_to(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        for (i, j, x) in self.cells_sorted() {
            writeln!(out, "{i} {j} {x}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_from(path: impl AsRef<Path>, vocab_size: usize) -> Result<CoocTable> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut t = CoocTable::new(vocab_size);
        for (ln, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.is_empty() {
                continue;
            }
            let bad = || Error::data(format!("{}:{}: expected \"i j count\"", path.display(), ln + 1));
            let mut it = line.split_whitespace();
            let i: u32 = it.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
            let j: u32 = it.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
            let x: f64 = it.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
            if (i as usize) >= vocab_size || (j as usize) >= vocab_size {
                return Err(bad());
            }
            if !x.is_finite() || x <= 0.0 {
                return Err(bad());
            }
            t.cells.insert(key(i, j), x);
        }
        Ok(t)
    }
}

/// Two embedding matrices plus per-word biases. The export convention is
/// the elementwise sum of both matrices.
pub struct GloveParams {
    pub vocab_size: usize,
    pub dim: usize,
    pub main: ParamBlock,
    pub context: ParamBlock,
    pub main_bias: ParamBlock,
    pub context_bias: ParamBlock,
}

impl GloveParams {
    /// Both matrices start uniform in [-0.5/d, 0.5/d]; biases at zero.
    /// A zero matrix would pin the other matrix's gradient at zero, so
    /// the vectors would never move.
    pub fn init(vocab_size: usize, dim: usize, seed: u64) -> GloveParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 0.5 / dim as f64;
        GloveParams {
            vocab_size,
            dim,
            main: uniform_block(&mut rng, vocab_size * dim, bound),
            context: uniform_block(&mut rng, vocab_size * dim, bound),
            main_bias: ParamBlock::zeros(vocab_size),
            context_bias: ParamBlock::zeros(vocab_size),
        }
    }

    pub fn is_finite(&self) -> bool {
        [&self.main, &self.context, &self.main_bias, &self.context_bias]
            .iter()
            .all(|b| b.w.iter().all(f64::is_finite) && b.g2.iter().all(f64::is_finite))
    }

    /// Exported vectors: main + context (or main alone), V x d row-major.
    pub fn export(&self, main_only: bool) -> Vec<f64> {
        let mut out = self.main.w.to_vec();
        if !main_only {
            for (i, o) in out.iter_mut().enumerate() {
                *o += self.context.w.get(i);
            }
        }
        out
    }
}

/// Clipped power weight f(x) = min(1, (x / x_max)^alpha).
pub fn weight(x: f64) -> f64 {
    if x < X_MAX {
        (x / X_MAX).powf(WEIGHT_ALPHA)
    } else {
        1.0
    }
}

/// Weighted squared error of one cell at the current parameters.
pub fn cell_loss(p: &GloveParams, i: u32, j: u32, x: f64) -> f64 {
    let d = p.dim;
    let (bi, bj) = (i as usize * d, j as usize * d);
    let mut dot = 0.0;
    for t in 0..d {
        dot += p.main.w.get(bi + t) * p.context.w.get(bj + t);
    }
    let diff = dot + p.main_bias.w.get(i as usize) + p.context_bias.w.get(j as usize) - x.ln();
    weight(x) * diff * diff
}

/// Analytic gradient of `cell_loss` in (main row i, context row j, both
/// biases), for checking against finite differences.
pub fn cell_gradients(p: &GloveParams, i: u32, j: u32, x: f64) -> (f64, Vec<f64>, Vec<f64>, f64, f64) {
    let d = p.dim;
    let (bi, bj) = (i as usize * d, j as usize * d);
    let mut m = vec![0.0; d];
    let mut c = vec![0.0; d];
    p.main.w.read_slice(bi, &mut m);
    p.context.w.read_slice(bj, &mut c);
    let dot: f64 = m.iter().zip(&c).map(|(a, b)| a * b).sum();
    let diff = dot + p.main_bias.w.get(i as usize) + p.context_bias.w.get(j as usize) - x.ln();
    let fw = weight(x);
    let g = 2.0 * fw * diff;
    let gm: Vec<f64> = c.iter().map(|&v| g * v).collect();
    let gc: Vec<f64> = m.iter().map(|&v| g * v).collect();
    (fw * diff * diff, gm, gc, g, g)
}

/// One AdaGrad update on one cell. Both rows are read in full before any
/// entry is written. Returns the cell's pre-update loss.
#[inline]
fn update_cell(p: &GloveParams, opt: AdaGrad, i: u32, j: u32, x: f64, m: &mut [f64], c: &mut [f64]) -> f64 {
    let d = p.dim;
    let (bi, bj) = (i as usize * d, j as usize * d);
    p.main.w.read_slice(bi, m);
    p.context.w.read_slice(bj, c);
    let mut dot = 0.0;
    for t in 0..d {
        dot += m[t] * c[t];
    }
    let ii = i as usize;
    let jj = j as usize;
    let diff = dot + p.main_bias.w.get(ii) + p.context_bias.w.get(jj) - x.ln();
    let fw = weight(x);
    let g = 2.0 * fw * diff;
    for t in 0..d {
        p.main.apply(bi + t, g * c[t], opt);
        p.context.apply(bj + t, g * m[t], opt);
    }
    p.main_bias.apply(ii, g, opt);
    p.context_bias.apply(jj, g, opt);
    fw * diff * diff
}

/// A deterministic permutation of cell indices for one epoch.
pub fn epoch_order(n: usize, seed: u64, epoch: u64) -> Vec<u32> {
    let mut order: Vec<u32> = (0..n as u32).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ epoch.wrapping_mul(0x9e3779b97f4a7c15));
    order.shuffle(&mut rng);
    order
}

/// One pass over every cell in the given order. Returns the mean
/// per-cell pre-update loss.
pub fn train_epoch(
    p: &GloveParams,
    cells: &[(u32, u32, f64)],
    order: &[u32],
    opt: AdaGrad,
) -> Result<f64> {
    if cells.is_empty() {
        return Err(Error::data("empty co-occurrence table"));
    }
    let mut m = vec![0.0; p.dim];
    let mut c = vec![0.0; p.dim];
    let mut loss = 0.0;
    for &idx in order {
        let (i, j, x) = cells[idx as usize];
        loss += update_cell(p, opt, i, j, x, &mut m, &mut c);
    }
    let mean = loss / cells.len() as f64;
    if !mean.is_finite() {
        return Err(Error::numeric("numerical divergence in co-occurrence fit"));
    }
    Ok(mean)
}

/// Same pass split into contiguous chunks of the shuffled order, one per
/// worker, with unsynchronized shared-parameter updates.
#[cfg(feature = "parallel")]
pub fn train_epoch_parallel(
    p: &GloveParams,
    cells: &[(u32, u32, f64)],
    order: &[u32],
    opt: AdaGrad,
    workers: usize,
) -> Result<f64> {
    use rayon::prelude::*;
    if cells.is_empty() {
        return Err(Error::data("empty co-occurrence table"));
    }
    let chunk = order.len().div_ceil(workers.max(1));
    let loss: f64 = order
        .par_chunks(chunk.max(1))
        .map(|part| {
            let mut m = vec![0.0; p.dim];
            let mut c = vec![0.0; p.dim];
            let mut acc = 0.0;
            for &idx in part {
                let (i, j, x) = cells[idx as usize];
                acc += update_cell(p, opt, i, j, x, &mut m, &mut c);
            }
            acc
        })
        .sum();
    let mean = loss / cells.len() as f64;
    if !mean.is_finite() {
        return Err(Error::numeric("numerical divergence in co-occurrence fit"));
    }
    Ok(mean)
}
