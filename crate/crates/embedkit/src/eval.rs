//! Intrinsic evaluation: word similarity, synonym choice, analogies,
//! weighted-average text classification, nearest neighbors, random
//! baselines, and the performance-gain-ratio comparison.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::io::read_embedding;
use crate::{Error, Result};

/// A word-indexed V x d matrix. Entries are guaranteed finite; lookups
/// of unknown words return None so callers can count coverage honestly.
pub struct EmbeddingTable {
    words: Vec<String>,
    index: HashMap<String, usize>,
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingTable {
    pub fn from_parts(words: Vec<String>, dim: usize, data: Vec<f64>) -> Result<EmbeddingTable> {
        if dim == 0 {
            return Err(Error::data("zero dimensionality"));
        }
        if data.len() != words.len() * dim {
            return Err(Error::data(format!(
                "embedding shape mismatch: {} words, dim {dim}, {} values",
                words.len(),
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::data(format!("non-finite embedding entry {bad}")));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::data(format!("duplicate word {w:?} in embedding")));
            }
        }
        Ok(EmbeddingTable {
            words,
            index,
            dim,
            data,
        })
    }

    pub fn read_from(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
        let (words, dim, data) = read_embedding(path)?;
        EmbeddingTable::from_parts(words, dim, data)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, i: usize) -> &str {
        &self.words[i]
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.id(word).map(|i| self.row(i))
    }
}

/// Every entry i.i.d. uniform in [-1, 1], deterministic per seed.
pub fn random_embedding(words: Vec<String>, dim: usize, seed: u64) -> EmbeddingTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..words.len() * dim)
        .map(|_| rng.gen::<f64>() * 2.0 - 1.0)
        .collect();
    EmbeddingTable::from_parts(words, dim, data).expect("generated entries are finite")
}

pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    assert_eq!(u.len(), v.len());
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::numeric("undefined similarity for zero vector"));
    }
    Ok(dot / (nu.sqrt() * nv.sqrt()))
}

/// Top-k rows by cosine to the query, excluding the given ids. Ties break
/// toward the lower word id. Returns (id, similarity) pairs, descending.
pub fn nearest_neighbors(
    table: &EmbeddingTable,
    query: &[f64],
    k: usize,
    exclude: &[usize],
) -> Result<Vec<(usize, f64)>> {
    let mut sims = Vec::with_capacity(table.len());
    for i in 0..table.len() {
        if exclude.contains(&i) {
            continue;
        }
        sims.push((i, cosine(query, table.row(i))?));
    }
    sims.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite similarity").then(a.0.cmp(&b.0)));
    sims.truncate(k);
    Ok(sims)
}

/// One task's outcome. `evaluated + skipped` equals the dataset size;
/// `zero_texts` is the avg task's count of texts with no in-vocabulary
/// tokens (they are still evaluated, as zero vectors).
#[derive(Clone, Debug)]
pub struct TaskResult {
    pub task: String,
    pub value: f64,
    pub evaluated: usize,
    pub skipped: usize,
    pub zero_texts: usize,
}

impl TaskResult {
    /// The metric at its conventional precision: correlations to four
    /// places, percentages to two.
    pub fn formatted_value(&self) -> String {
        if self.task == "ws" {
            format!("{:.4}", self.value)
        } else {
            format!("{:.2}", self.value)
        }
    }
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return Err(Error::numeric("degenerate correlation: fewer than 2 points"));
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::numeric("degenerate correlation: zero variance"));
    }
    Ok(cov / (vx.sqrt() * vy.sqrt()))
}

/// Ranks with ties averaged, the usual midrank convention.
fn midranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).expect("finite values"));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &p in &idx[i..=j] {
            ranks[p] = mid;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    pearson(&midranks(xs), &midranks(ys))
}

#[derive(Clone, Debug)]
pub struct WsPair {
    pub w1: String,
    pub w2: String,
    pub score: f64,
}

pub fn parse_ws(path: impl AsRef<Path>) -> Result<Vec<WsPair>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let bad = |what: &str| {
            Error::data(format!("{}:{}: {what}", path.display(), ln + 1))
        };
        if fields.len() != 3 {
            return Err(bad("expected \"word1<TAB>word2<TAB>score\""));
        }
        let score: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| bad("bad score"))?;
        pairs.push(WsPair {
            w1: fields[0].to_string(),
            w2: fields[1].to_string(),
            score,
        });
    }
    Ok(pairs)
}

/// Pearson correlation (Spearman on request) between pair cosine and the
/// human score over in-vocabulary pairs.
pub fn eval_ws(table: &EmbeddingTable, pairs: &[WsPair], use_spearman: bool) -> Result<TaskResult> {
    let mut cos = Vec::new();
    let mut human = Vec::new();
    let mut skipped = 0usize;
    for p in pairs {
        match (table.get(&p.w1), table.get(&p.w2)) {
            (Some(u), Some(v)) => {
                cos.push(cosine(u, v)?);
                human.push(p.score);
            }
            _ => skipped += 1,
        }
    }
    let r = if use_spearman {
        spearman(&cos, &human)?
    } else {
        pearson(&cos, &human)?
    };
    Ok(TaskResult {
        task: "ws".into(),
        value: r,
        evaluated: cos.len(),
        skipped,
        zero_texts: 0,
    })
}

#[derive(Clone, Debug)]
pub struct TflQuestion {
    pub stem: String,
    pub choices: [String; 4],
    pub answer: usize,
}

pub fn parse_tfl(path: impl AsRef<Path>) -> Result<Vec<TflQuestion>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let bad = |what: &str| Error::data(format!("{}:{}: {what}", path.display(), ln + 1));
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 6 {
            return Err(bad("expected stem, 4 choices, answer index"));
        }
        let answer: usize = f[5].trim().parse().map_err(|_| bad("bad answer index"))?;
        if answer > 3 {
            return Err(bad("answer index out of range 0-3"));
        }
        out.push(TflQuestion {
            stem: f[0].to_string(),
            choices: [
                f[1].to_string(),
                f[2].to_string(),
                f[3].to_string(),
                f[4].to_string(),
            ],
            answer,
        });
    }
    Ok(out)
}

/// Picks the in-vocabulary choice closest to the stem by cosine. Questions
/// with an out-of-vocabulary stem, or with no in-vocabulary choice, are
/// skipped and counted.
pub fn eval_tfl(table: &EmbeddingTable, questions: &[TflQuestion]) -> Result<TaskResult> {
    let mut evaluated = 0usize;
    let mut skipped = 0usize;
    let mut correct = 0usize;
    for q in questions {
        let stem = match table.get(&q.stem) {
            Some(v) => v,
            None => {
                skipped += 1;
                continue;
            }
        };
        let mut best: Option<(usize, f64)> = None;
        for (i, choice) in q.choices.iter().enumerate() {
            if let Some(v) = table.get(choice) {
                let s = cosine(stem, v)?;
                if best.is_none_or(|(_, bs)| s > bs) {
                    best = Some((i, s));
                }
            }
        }
        match best {
            Some((picked, _)) => {
                evaluated += 1;
                if picked == q.answer {
                    correct += 1;
                }
            }
            None => skipped += 1,
        }
    }
    if evaluated == 0 {
        return Err(Error::data("no evaluable synonym questions"));
    }
    Ok(TaskResult {
        task: "tfl".into(),
        value: 100.0 * correct as f64 / evaluated as f64,
        evaluated,
        skipped,
        zero_texts: 0,
    })
}

#[derive(Clone, Debug)]
pub struct AnalogyQuestion {
    pub a: String,
    pub b: String,
    pub c: String,
    pub d: String,
    pub syntactic: bool,
}

/// Section headers ": name" switch categories; categories whose names
/// begin with "gram" are syntactic.
pub fn parse_analogy(path: impl AsRef<Path>) -> Result<Vec<AnalogyQuestion>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut syntactic: Option<bool> = None;
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix(':') {
            syntactic = Some(name.trim().starts_with("gram"));
            continue;
        }
        let bad = |what: &str| Error::data(format!("{}:{}: {what}", path.display(), ln + 1));
        let syn = syntactic.ok_or_else(|| bad("question before any \": category\" header"))?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 {
            return Err(bad("expected four words"));
        }
        out.push(AnalogyQuestion {
            a: f[0].to_string(),
            b: f[1].to_string(),
            c: f[2].to_string(),
            d: f[3].to_string(),
            syntactic: syn,
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default)]
pub struct GroupStats {
    pub correct: usize,
    pub evaluated: usize,
    pub skipped: usize,
}

impl GroupStats {
    pub fn accuracy(&self) -> Option<f64> {
        if self.evaluated == 0 {
            None
        } else {
            Some(100.0 * self.correct as f64 / self.evaluated as f64)
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct AnalogyOutcome {
    pub sem: GroupStats,
    pub syn: GroupStats,
}

impl AnalogyOutcome {
    pub fn all(&self) -> GroupStats {
        GroupStats {
            correct: self.sem.correct + self.syn.correct,
            evaluated: self.sem.evaluated + self.syn.evaluated,
            skipped: self.sem.skipped + self.syn.skipped,
        }
    }
}

/// Predicts the vocabulary word whose vector is closest by cosine to
/// v_b - v_a + v_c, excluding a, b, c themselves unless
/// `include_question_words`. A question counts only if all four words are
/// in vocabulary.
pub fn eval_analogy(
    table: &EmbeddingTable,
    questions: &[AnalogyQuestion],
    include_question_words: bool,
) -> Result<AnalogyOutcome> {
    let d = table.dim();
    // Normalized rows once; the per-question argmax is then a dot product.
    let mut normed = table.data.clone();
    for i in 0..table.len() {
        let row = &mut normed[i * d..(i + 1) * d];
        let n: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n == 0.0 {
            return Err(Error::numeric(format!(
                "undefined similarity for zero vector {:?}",
                table.word(i)
            )));
        }
        for v in row.iter_mut() {
            *v /= n;
        }
    }
    let mut outcome = AnalogyOutcome::default();
    let mut target = vec![0.0; d];
    for q in questions {
        let group = if q.syntactic {
            &mut outcome.syn
        } else {
            &mut outcome.sem
        };
        let ids = (
            table.id(&q.a),
            table.id(&q.b),
            table.id(&q.c),
            table.id(&q.d),
        );
        let (ia, ib, ic, id) = match ids {
            (Some(ia), Some(ib), Some(ic), Some(id)) => (ia, ib, ic, id),
            _ => {
                group.skipped += 1;
                continue;
            }
        };
        let (va, vb, vc) = (table.row(ia), table.row(ib), table.row(ic));
        for t in 0..d {
            target[t] = vb[t] - va[t] + vc[t];
        }
        if target.iter().all(|&v| v == 0.0) {
            return Err(Error::numeric("undefined similarity for zero analogy offset"));
        }
        let mut best: Option<(usize, f64)> = None;
        for i in 0..table.len() {
            if !include_question_words && (i == ia || i == ib || i == ic) {
                continue;
            }
            let row = &normed[i * d..(i + 1) * d];
            let mut s = 0.0;
            for t in 0..d {
                s += row[t] * target[t];
            }
            if best.is_none_or(|(_, bs)| s > bs) {
                best = Some((i, s));
            }
        }
        group.evaluated += 1;
        if best.map(|(i, _)| i) == Some(id) {
            group.correct += 1;
        }
    }
    Ok(outcome)
}

#[derive(Clone, Debug)]
pub struct LabeledText {
    pub label: String,
    pub tokens: Vec<String>,
}

pub fn parse_labeled(path: impl AsRef<Path>) -> Result<Vec<LabeledText>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (label, body) = line.split_once('\t').ok_or_else(|| {
            Error::data(format!(
                "{}:{}: expected \"label<TAB>text\"",
                path.display(),
                ln + 1
            ))
        })?;
        out.push(LabeledText {
            label: label.to_string(),
            tokens: body.split_whitespace().map(str::to_string).collect(),
        });
    }
    Ok(out)
}

/// Term-frequency-weighted mean of in-vocabulary token vectors: the sum
/// over token occurrences divided by the in-vocabulary occurrence count.
/// Returns false when nothing was in vocabulary (the vector stays zero).
fn tf_average(table: &EmbeddingTable, tokens: &[String], out: &mut [f64]) -> bool {
    out.fill(0.0);
    let mut n = 0usize;
    for t in tokens {
        if let Some(v) = table.get(t) {
            for (o, x) in out.iter_mut().zip(v) {
                *o += x;
            }
            n += 1;
        }
    }
    if n == 0 {
        return false;
    }
    let inv = 1.0 / n as f64;
    for o in out.iter_mut() {
        *o *= inv;
    }
    true
}

const AVG_L2: f64 = 1.0;
const AVG_MAX_ITERS: usize = 200;

/// Multinomial logistic regression on tf-averaged text vectors: L2 1.0
/// (intercept unregularized), full-batch gradient descent with Armijo
/// backtracking, at most 200 iterations, zero init. Deterministic.
pub fn eval_avg(
    table: &EmbeddingTable,
    train: &[LabeledText],
    test: &[LabeledText],
) -> Result<TaskResult> {
    let d = table.dim();
    let mut labels: Vec<&str> = train.iter().map(|t| t.label.as_str()).collect();
    labels.sort_unstable();
    labels.dedup();
    if labels.len() < 2 {
        return Err(Error::data("avg task needs at least 2 classes in training data"));
    }
    let class_of: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, &l)| (l, i)).collect();
    let n_class = labels.len();
    let feat = d + 1;

    let mut zero_texts = 0usize;
    let mut xs = vec![0.0; train.len() * feat];
    let mut ys = Vec::with_capacity(train.len());
    for (i, t) in train.iter().enumerate() {
        let row = &mut xs[i * feat..i * feat + d];
        if !tf_average(table, &t.tokens, row) {
            zero_texts += 1;
        }
        xs[i * feat + d] = 1.0;
        ys.push(class_of[t.label.as_str()]);
    }

    let n = train.len();
    let mut w = vec![0.0; n_class * feat];
    let mut grad = vec![0.0; n_class * feat];
    let mut probs = vec![0.0; n_class];
    let mut trial = vec![0.0; n_class * feat];

    // Mean negative log-likelihood plus (l2 / 2n) * ||W without intercept||^2.
    let objective = |w: &[f64], probs: &mut [f64]| -> f64 {
        let mut nll = 0.0;
        for i in 0..n {
            let x = &xs[i * feat..(i + 1) * feat];
            logits(w, x, feat, probs);
            let mx = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + probs.iter().map(|&l| (l - mx).exp()).sum::<f64>().ln();
            nll += lse - probs[ys[i]];
        }
        let mut reg = 0.0;
        for c in 0..n_class {
            for j in 0..d {
                reg += w[c * feat + j] * w[c * feat + j];
            }
        }
        nll / n as f64 + AVG_L2 * reg / (2.0 * n as f64)
    };

    let mut f = objective(&w, &mut probs);
    for _ in 0..AVG_MAX_ITERS {
        grad.fill(0.0);
        for i in 0..n {
            let x = &xs[i * feat..(i + 1) * feat];
            logits(&w, x, feat, &mut probs);
            softmax_in_place(&mut probs);
            for c in 0..n_class {
                let coeff = probs[c] - if ys[i] == c { 1.0 } else { 0.0 };
                if coeff == 0.0 {
                    continue;
                }
                for j in 0..feat {
                    grad[c * feat + j] += coeff * x[j];
                }
            }
        }
        let inv_n = 1.0 / n as f64;
        for c in 0..n_class {
            for j in 0..feat {
                grad[c * feat + j] *= inv_n;
                if j < d {
                    grad[c * feat + j] += AVG_L2 * w[c * feat + j] * inv_n;
                }
            }
        }
        let gsq: f64 = grad.iter().map(|g| g * g).sum();
        if gsq.sqrt() < 1e-8 {
            break;
        }
        let mut step = 1.0;
        let mut accepted = false;
        while step > 1e-12 {
            for (t, (wi, gi)) in trial.iter_mut().zip(w.iter().zip(&grad)) {
                *t = wi - step * gi;
            }
            let ft = objective(&trial, &mut probs);
            if ft <= f - 1e-4 * step * gsq {
                w.copy_from_slice(&trial);
                f = ft;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    let mut x = vec![0.0; feat];
    let mut correct = 0usize;
    for t in test {
        if !tf_average(table, &t.tokens, &mut x[..d]) {
            zero_texts += 1;
        }
        x[d] = 1.0;
        logits(&w, &x, feat, &mut probs);
        let mut best = 0usize;
        for c in 1..n_class {
            if probs[c] > probs[best] {
                best = c;
            }
        }
        if class_of.get(t.label.as_str()) == Some(&best) {
            correct += 1;
        }
    }
    if test.is_empty() {
        return Err(Error::data("avg task has no test texts"));
    }
    Ok(TaskResult {
        task: "avg".into(),
        value: 100.0 * correct as f64 / test.len() as f64,
        evaluated: test.len(),
        skipped: 0,
        zero_texts,
    })
}

#[inline]
fn logits(w: &[f64], x: &[f64], feat: usize, out: &mut [f64]) {
    for (c, o) in out.iter_mut().enumerate() {
        let row = &w[c * feat..(c + 1) * feat];
        let mut s = 0.0;
        for j in 0..feat {
            s += row[j] * x[j];
        }
        *o = s;
    }
}

fn softmax_in_place(v: &mut [f64]) {
    let mx = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - mx).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Performance gain over the random baseline, normalized by the best
/// embedding's gain, as a percentage. Negative means the embedding is
/// worse than random.
pub fn pgr(p_a: f64, p_b: f64, p_rand: f64) -> Result<f64> {
    if p_b == p_rand {
        return Err(Error::numeric("degenerate baseline: best equals random"));
    }
    Ok((p_a - p_rand) / (p_b - p_rand) * 100.0)
}

pub const PGR_WIN: f64 = 95.0;

#[derive(Clone, Copy, Debug)]
pub struct PgrCell {
    pub p_a: f64,
    pub value: f64,
    pub win: bool,
}

pub struct PgrReport {
    pub embeddings: Vec<String>,
    pub tasks: Vec<String>,
    pub p_rand: Vec<f64>,
    pub p_best: Vec<f64>,
    /// cells[embedding][task]
    pub cells: Vec<Vec<PgrCell>>,
}

/// `metrics[e][t]` is embedding e's raw performance on task t;
/// `baselines[t]` the random embedding's. Best per task is the max over
/// embeddings.
pub fn build_pgr_report(
    embeddings: Vec<String>,
    tasks: Vec<String>,
    metrics: &[Vec<f64>],
    baselines: &[f64],
) -> Result<PgrReport> {
    assert_eq!(metrics.len(), embeddings.len());
    assert_eq!(baselines.len(), tasks.len());
    let mut p_best = vec![f64::NEG_INFINITY; tasks.len()];
    for row in metrics {
        assert_eq!(row.len(), tasks.len());
        for (t, &v) in row.iter().enumerate() {
            p_best[t] = p_best[t].max(v);
        }
    }
    let mut cells = Vec::with_capacity(embeddings.len());
    for row in metrics {
        let mut line = Vec::with_capacity(tasks.len());
        for (t, &p_a) in row.iter().enumerate() {
            let value = pgr(p_a, p_best[t], baselines[t])?;
            line.push(PgrCell {
                p_a,
                value,
                win: value >= PGR_WIN,
            });
        }
        cells.push(line);
    }
    Ok(PgrReport {
        embeddings,
        tasks,
        p_rand: baselines.to_vec(),
        p_best,
        cells,
    })
}

impl PgrReport {
    /// Tab-separated matrix, one embedding per row, cells "PGR% (p_a)",
    /// with a final per-task win-count row.
    pub fn render(&self) -> String {
        let mut out = String::from("embedding");
        for t in &self.tasks {
            out.push('\t');
            out.push_str(t);
        }
        out.push('\n');
        for (e, name) in self.embeddings.iter().enumerate() {
            out.push_str(name);
            for cell in &self.cells[e] {
                out.push_str(&format!("\t{:.2} ({:.2})", cell.value, cell.p_a));
            }
            out.push('\n');
        }
        out.push_str("wins");
        for t in 0..self.tasks.len() {
            let n = self.cells.iter().filter(|row| row[t].win).count();
            out.push_str(&format!("\t{n}"));
        }
        out.push('\n');
        out
    }
}

/// Everything a task needs to run, parsed once.
#[derive(Debug)]
pub enum TaskData {
    Ws(Vec<WsPair>),
    Tfl(Vec<TflQuestion>),
    Analogy(Vec<AnalogyQuestion>),
    Avg {
        train: Vec<LabeledText>,
        test: Vec<LabeledText>,
    },
}

pub const TASK_NAMES: [&str; 5] = ["ws", "tfl", "sem", "syn", "avg"];

impl TaskData {
    /// Loads the dataset for a task name. `avg` needs the training file
    /// too; the others take a single path.
    pub fn load(name: &str, data: &Path, train_data: Option<&Path>) -> Result<TaskData> {
        match name {
            "ws" => Ok(TaskData::Ws(parse_ws(data)?)),
            "tfl" => Ok(TaskData::Tfl(parse_tfl(data)?)),
            "sem" | "syn" => Ok(TaskData::Analogy(parse_analogy(data)?)),
            "avg" => {
                let train = train_data.ok_or_else(|| {
                    Error::usage("avg task needs --train-data with labeled training texts")
                })?;
                Ok(TaskData::Avg {
                    train: parse_labeled(train)?,
                    test: parse_labeled(data)?,
                })
            }
            other => Err(Error::usage(format!(
                "unknown task {other:?}; expected one of {}",
                TASK_NAMES.join("|")
            ))),
        }
    }
}

/// Evaluation switches exposed as CLI flags.
#[derive(Clone, Copy, Debug, Default)]
pub struct EvalOptions {
    pub spearman: bool,
    pub include_question_words: bool,
}

/// Runs one named task against a table.
pub fn eval_task(
    table: &EmbeddingTable,
    name: &str,
    data: &TaskData,
    opts: EvalOptions,
) -> Result<TaskResult> {
    match (name, data) {
        ("ws", TaskData::Ws(pairs)) => eval_ws(table, pairs, opts.spearman),
        ("tfl", TaskData::Tfl(questions)) => eval_tfl(table, questions),
        ("sem", TaskData::Analogy(questions)) | ("syn", TaskData::Analogy(questions)) => {
            let outcome = eval_analogy(table, questions, opts.include_question_words)?;
            let group = if name == "syn" { outcome.syn } else { outcome.sem };
            let value = group.accuracy().ok_or_else(|| {
                Error::data(format!("no evaluable {name} analogy questions"))
            })?;
            Ok(TaskResult {
                task: name.into(),
                value,
                evaluated: group.evaluated,
                skipped: group.skipped,
                zero_texts: 0,
            })
        }
        ("avg", TaskData::Avg { train, test }) => eval_avg(table, train, test),
        _ => Err(Error::usage(format!("task {name:?} does not match its dataset"))),
    }
}
