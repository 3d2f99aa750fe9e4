//! Unigram^0.75 negative sampler shared by every predict-style model.

use rand::Rng;

/// Draws negative word ids with probability proportional to count^0.75.
/// Collisions with the positive target are redrawn, so a draw never
/// returns the excluded id (the sampler requires at least two words).
pub struct NegativeSampler {
    cumulative: Vec<f64>,
    total: f64,
    k: usize,
}

impl NegativeSampler {
    pub fn new(counts: &[u64], k: usize) -> NegativeSampler {
        assert!(!counts.is_empty(), "sampler needs a vocabulary");
        let mut cumulative = Vec::with_capacity(counts.len());
        let mut acc = 0.0;
        for &c in counts {
            acc += (c as f64).powf(0.75);
            cumulative.push(acc);
        }
        NegativeSampler {
            cumulative,
            total: acc,
            k,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn vocab_size(&self) -> usize {
        self.cumulative.len()
    }

    /// Smoothed sampling probability of one id.
    pub fn probability(&self, id: u32) -> f64 {
        let i = id as usize;
        let lo = if i == 0 { 0.0 } else { self.cumulative[i - 1] };
        (self.cumulative[i] - lo) / self.total
    }

    /// One draw from the smoothed unigram distribution.
    pub fn sample(&self, rng: &mut impl Rng) -> u32 {
        let x = rng.gen::<f64>() * self.total;
        self.cumulative.partition_point(|&c| c <= x) as u32
    }

    /// One draw, redrawn until it differs from `exclude`.
    pub fn sample_excluding(&self, exclude: u32, rng: &mut impl Rng) -> u32 {
        assert!(
            self.cumulative.len() > 1,
            "cannot exclude the only word in the vocabulary"
        );
        loop {
            let s = self.sample(rng);
            if s != exclude {
                return s;
            }
        }
    }

    /// Fills `out` with k negatives, each independently redrawn on
    /// collision with `target`.
    pub fn fill_negatives(&self, target: u32, rng: &mut impl Rng, out: &mut Vec<u32>) {
        out.clear();
        for _ in 0..self.k {
            out.push(self.sample_excluding(target, rng));
        }
    }
}
