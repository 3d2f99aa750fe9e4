//! Shared parameter storage and the AdaGrad update rule.

use std::sync::atomic::{AtomicU64, Ordering};

/// Flat f64 vector stored as atomic bit patterns so that hogwild workers
/// can share one allocation without locks. Every load and store is a
/// single atomic operation, so individual scalars are never torn; the
/// read-modify-write in `add` races benignly by design (fast mode may
/// lose an occasional update, deterministic mode runs single-threaded).
pub struct ParamBuf {
    cells: Box<[AtomicU64]>,
}

impl ParamBuf {
    pub fn zeros(n: usize) -> Self {
        ParamBuf {
            cells: (0..n).map(|_| AtomicU64::new(0f64.to_bits())).collect(),
        }
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        ParamBuf {
            cells: values
                .into_iter()
                .map(|v| AtomicU64::new(v.to_bits()))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    #[inline(always)]
    pub fn get(&self, i: usize) -> f64 {
        f64::from_bits(self.cells[i].load(Ordering::Relaxed))
    }

    #[inline(always)]
    pub fn set(&self, i: usize, v: f64) {
        self.cells[i].store(v.to_bits(), Ordering::Relaxed);
    }

    #[inline(always)]
    pub fn add(&self, i: usize, dv: f64) {
        self.set(i, self.get(i) + dv);
    }

    pub fn to_vec(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.get(i)).collect()
    }

    /// Copies `out.len()` consecutive entries starting at `start`.
    #[inline]
    pub fn read_slice(&self, start: usize, out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.get(start + j);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }
}

/// AdaGrad settings: per entry, accum += g^2 then
/// param -= lr * g / (sqrt(accum) + eps).
#[derive(Clone, Copy, Debug)]
pub struct AdaGrad {
    pub lr: f64,
    pub eps: f64,
}

impl Default for AdaGrad {
    fn default() -> Self {
        AdaGrad { lr: 0.1, eps: 1e-8 }
    }
}

impl AdaGrad {
    pub fn with_lr(lr: f64) -> Self {
        AdaGrad { lr, ..Self::default() }
    }
}

/// One parameter vector paired with its squared-gradient accumulator.
pub struct ParamBlock {
    pub w: ParamBuf,
    pub g2: ParamBuf,
}

impl ParamBlock {
    pub fn zeros(n: usize) -> Self {
        ParamBlock {
            w: ParamBuf::zeros(n),
            g2: ParamBuf::zeros(n),
        }
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        let n = values.len();
        ParamBlock {
            w: ParamBuf::from_vec(values),
            g2: ParamBuf::zeros(n),
        }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    /// Applies one AdaGrad step for a single entry.
    #[inline(always)]
    pub fn apply(&self, i: usize, g: f64, opt: AdaGrad) {
        if g == 0.0 {
            return;
        }
        let a = self.g2.get(i) + g * g;
        self.g2.set(i, a);
        self.w.add(i, -opt.lr * g / (a.sqrt() + opt.eps));
    }
}
