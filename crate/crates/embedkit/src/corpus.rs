//! Corpus pipeline: vocabulary, encoding, document shuffling and sampling,
//! frequency subsampling, and the fixed windows every trainer consumes.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Sentinel for context slots that fall outside the document. Models that
/// use concatenated contexts map it to a dedicated trainable row.
pub const PAD: u32 = u32::MAX;

/// Word-to-id map with corpus frequencies. Ids are dense, ordered by
/// descending count with ties broken by first occurrence in the corpus.
#[derive(Debug)]
pub struct Vocabulary {
    words: Vec<String>,
    counts: Vec<u64>,
    total_tokens: u64,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Counts tokens and keeps the `cap` most frequent words with at least
    /// `min_count` occurrences.
    pub fn build<'a, I>(tokens: I, cap: usize, min_count: u64) -> Result<Vocabulary>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut counts: HashMap<&'a str, (u64, usize)> = HashMap::new();
        let mut arrival = 0usize;
        for tok in tokens {
            let e = counts.entry(tok).or_insert_with(|| {
                arrival += 1;
                (0, arrival)
            });
            e.0 += 1;
        }
        if counts.is_empty() {
            return Err(Error::data("empty corpus"));
        }
        let mut entries: Vec<(&str, u64, usize)> = counts
            .into_iter()
            .filter(|(_, (c, _))| *c >= min_count)
            .map(|(w, (c, first))| (w, c, first))
            .collect();
        if entries.is_empty() {
            return Err(Error::data(format!(
                "no word reaches min count {min_count}"
            )));
        }
        entries.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
        entries.truncate(cap);
        Ok(Self::from_ranked(
            entries.into_iter().map(|(w, c, _)| (w.to_string(), c)),
        ))
    }

    /// Builds from (word, count) pairs already in rank order.
    pub fn from_ranked(pairs: impl IntoIterator<Item = (String, u64)>) -> Vocabulary {
        let mut words = Vec::new();
        let mut counts = Vec::new();
        let mut index = HashMap::new();
        let mut total = 0u64;
        for (w, c) in pairs {
            index.insert(w.clone(), words.len() as u32);
            words.push(w);
            counts.push(c);
            total += c;
        }
        Vocabulary {
            words,
            counts,
            total_tokens: total,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: u32) -> &str {
        &self.words[id as usize]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn count(&self, id: u32) -> u64 {
        self.counts[id as usize]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    /// Relative corpus frequency of a word, counts over total kept tokens.
    pub fn rel_freq(&self, id: u32) -> f64 {
        self.counts[id as usize] as f64 / self.total_tokens as f64
    }

    /// Encodes whitespace-separated text, dropping out-of-vocabulary tokens.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        text.split_whitespace()
            .filter_map(|t| self.id(t))
            .collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Vec<&str> {
        ids.iter().map(|&i| self.word(i)).collect()
    }

    /// Writes "word count" lines in rank order.
    pub fn write_to(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        for (w, c) in self.words.iter().zip(&self.counts) {
            writeln!(out, "{w} {c}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_from(path: impl AsRef<Path>) -> Result<Vocabulary> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut pairs = Vec::new();
        let mut prev = u64::MAX;
        for (ln, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let word = it
                .next()
                .ok_or_else(|| Error::data(format!("{}:{}: missing word", path.display(), ln + 1)))?;
            let count: u64 = it
                .next()
                .and_then(|c| c.parse().ok())
                .ok_or_else(|| Error::data(format!("{}:{}: bad count", path.display(), ln + 1)))?;
            if count == 0 {
                return Err(Error::data(format!(
                    "{}:{}: zero count",
                    path.display(),
                    ln + 1
                )));
            }
            if count > prev {
                return Err(Error::data(format!(
                    "{}:{}: counts not descending",
                    path.display(),
                    ln + 1
                )));
            }
            prev = count;
            pairs.push((word.to_string(), count));
        }
        if pairs.is_empty() {
            return Err(Error::data(format!("{}: empty vocabulary", path.display())));
        }
        Ok(Vocabulary::from_ranked(pairs))
    }
}

/// Reads one document per line; returns token-encoded documents. Documents
/// that end up empty after vocabulary filtering are kept (they carry no
/// windows but preserve document indexing).
pub fn read_encoded_documents(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<Vec<Vec<u32>>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut docs = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        docs.push(vocab.encode(&line));
    }
    if docs.is_empty() {
        return Err(Error::data(format!("{}: empty corpus", path.display())));
    }
    Ok(docs)
}

/// In-place Fisher-Yates permutation, deterministic per seed.
/// Document-internal order is untouched because elements move whole.
pub fn shuffle_documents<T>(documents: &mut [T], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    documents.shuffle(&mut rng);
}

/// Uniform document-level sample: permutes indices with the seed and takes
/// the smallest prefix whose token count reaches `target_tokens`. With a
/// fixed seed, samples at increasing targets are nested.
pub fn sample_subset<T>(
    documents: &[T],
    token_len: impl Fn(&T) -> usize,
    target_tokens: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let total: usize = documents.iter().map(&token_len).sum();
    if target_tokens > total {
        return Err(Error::data(format!(
            "sample target {target_tokens} exceeds corpus size {total}"
        )));
    }
    let mut order: Vec<usize> = (0..documents.len()).collect();
    shuffle_documents(&mut order, seed);
    let mut picked = Vec::new();
    let mut tokens = 0usize;
    for idx in order {
        if tokens >= target_tokens {
            break;
        }
        tokens += token_len(&documents[idx]);
        picked.push(idx);
    }
    Ok(picked)
}

fn mix64(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58476d1ce4e5b9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94d049bb133111eb);
    x ^= x >> 31;
    x
}

/// Derives an independent stream seed from a base seed and role tags, so
/// the split, init, subsampling, and per-worker training streams never
/// collide.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut h = mix64(seed ^ 0x517cc1b727220a95);
    for &p in parts {
        h = mix64(h ^ p.wrapping_mul(0x9e3779b97f4a7c15));
    }
    h
}

/// Key for stream-position-addressed randomness. The keep decision for a
/// token depends only on (seed, round, document, position), never on how
/// the stream is partitioned across workers. Training passes use the
/// iteration number as `round`; validation uses a fixed round so its
/// window set is identical across iterations.
#[derive(Clone, Copy, Debug)]
pub struct StreamKey {
    pub seed: u64,
    pub round: u64,
}

/// Round value reserved for the validation stream.
pub const VALIDATION_ROUND: u64 = u64::MAX;

impl StreamKey {
    /// Uniform value in [0, 1) for one stream position.
    pub fn unit(&self, doc: u64, pos: u64) -> f64 {
        // Multiplication by an odd constant is a bijection on u64, so every
        // round (the validation round u64::MAX included) gets its own mask.
        let mut h = mix64(self.seed ^ 0x9e3779b97f4a7c15u64.wrapping_mul(self.round));
        h = mix64(h ^ doc.wrapping_mul(0xa0761d6478bd642f));
        h = mix64(h ^ pos);
        (h >> 11) as f64 * (1.0 / 9007199254740992.0)
    }
}

/// Keep probability for a word of relative frequency `f` under threshold
/// `t`: min(1, (sqrt(f/t) + 1) * t / f). A non-positive threshold disables
/// subsampling entirely.
pub fn keep_probability(f: f64, t: f64) -> f64 {
    if t <= 0.0 || f <= 0.0 || f <= t {
        return 1.0;
    }
    (((f / t).sqrt() + 1.0) * t / f).min(1.0)
}

/// Frequency-subsamples one document into `out`. Each occurrence is kept
/// independently with `keep_probability`, decided by the stream key.
pub fn subsample_into(
    doc: &[u32],
    doc_index: u64,
    vocab: &Vocabulary,
    t: f64,
    key: StreamKey,
    out: &mut Vec<u32>,
) {
    out.clear();
    for (pos, &w) in doc.iter().enumerate() {
        let p = keep_probability(vocab.rel_freq(w), t);
        if p >= 1.0 || key.unit(doc_index, pos as u64) < p {
            out.push(w);
        }
    }
}

/// Materializing convenience over `subsample_into`.
pub fn subsample(doc: &[u32], doc_index: u64, vocab: &Vocabulary, t: f64, key: StreamKey) -> Vec<u32> {
    let mut out = Vec::with_capacity(doc.len());
    subsample_into(doc, doc_index, vocab, t, key, &mut out);
    out
}

/// One training window: the center word plus its 2*radius context slots in
/// left-to-right order, PAD outside the document.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Window {
    pub target: u32,
    pub slots: Vec<u32>,
}

impl Window {
    pub fn context_len(&self) -> usize {
        self.slots.iter().filter(|&&s| s != PAD).count()
    }
}

/// Calls `f(position, target, slots)` once per token position. The slot
/// buffer is reused across calls. Windows never cross the document ends;
/// out-of-range slots hold PAD. The full fixed window is always emitted,
/// with no distance weighting and no stochastic shrinking.
pub fn for_each_window(doc: &[u32], radius: usize, mut f: impl FnMut(usize, u32, &[u32])) {
    let mut slots = vec![PAD; 2 * radius];
    for (pos, &target) in doc.iter().enumerate() {
        for off in 0..radius {
            let left = pos as isize - radius as isize + off as isize;
            slots[off] = if left >= 0 { doc[left as usize] } else { PAD };
            let right = pos + off + 1;
            slots[radius + off] = if right < doc.len() { doc[right] } else { PAD };
        }
        f(pos, target, &slots);
    }
}

/// Materialized window stream, mainly for tests and small corpora.
pub fn iter_windows(doc: &[u32], radius: usize) -> Vec<Window> {
    let mut out = Vec::with_capacity(doc.len());
    for_each_window(doc, radius, |_, target, slots| {
        out.push(Window {
            target,
            slots: slots.to_vec(),
        });
    });
    out
}
