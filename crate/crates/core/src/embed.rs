//! Subword skip-gram embeddings with negative sampling, the multimodal
//! training-corpus builder and IDF tables.
//!
//! Each word's input representation is the sum of its own vector and the
//! vectors of its hashed character n-grams (`<word>` with boundary markers,
//! FNV-1a 32-bit modulo the bucket count). Training follows the classic
//! skip-gram recipe: a dynamic window radius drawn per target, a noise
//! distribution proportional to `count^0.75` and a linearly decaying
//! learning rate.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CodeTokenizer, PythonLexer, SnippetCollection};
use crate::vector::{axpy, dot, sigmoid};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("no token reaches min_count {0}")]
    EmptyVocabulary(usize),
    #[error("invalid training spec: {0}")]
    InvalidSpec(&'static str),
    #[error("cannot compute idf over an empty collection")]
    EmptyCollection,
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Format { path: String, line: usize, message: String },
}

/// Character n-gram hashing parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NgramConfig {
    pub min_n: usize,
    pub max_n: usize,
    pub bucket_count: u32,
}

impl Default for NgramConfig {
    fn default() -> Self {
        Self { min_n: 3, max_n: 6, bucket_count: 2_000_000 }
    }
}

pub fn fnv1a32(bytes: &[u8]) -> u32 {
    let mut h: u32 = 0x811c_9dc5;
    for &b in bytes {
        h ^= u32::from(b);
        h = h.wrapping_mul(0x0100_0193);
    }
    h
}

impl NgramConfig {
    /// Bucket indices of every n-gram of `<token>`, in extraction order.
    pub fn buckets(&self, token: &str) -> Vec<u32> {
        if self.bucket_count == 0 || self.max_n == 0 {
            return Vec::new();
        }
        let chars: Vec<char> = std::iter::once('<').chain(token.chars()).chain(['>']).collect();
        let mut out = Vec::new();
        let mut buf = String::new();
        for start in 0..chars.len() {
            for n in self.min_n.max(1)..=self.max_n {
                if start + n > chars.len() {
                    break;
                }
                buf.clear();
                buf.extend(&chars[start..start + n]);
                out.push(fnv1a32(buf.as_bytes()) % self.bucket_count);
            }
        }
        out
    }
}

/// How a token was resolved by [`EmbeddingTable::lookup`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LookupKind {
    /// In-vocabulary token: its stored composed vector.
    Known,
    /// Out-of-vocabulary token built from known n-gram vectors.
    Subword,
    /// Nothing known about the token; the vector is zero.
    Unknown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lookup {
    pub vector: Vec<f64>,
    pub kind: LookupKind,
}

impl Lookup {
    pub fn is_oov(&self) -> bool {
        self.kind == LookupKind::Unknown
    }
}

/// Token vectors plus hashed n-gram vectors.
///
/// `composed[w] = token_vectors[w] + Σ bucket_vectors[g]` over the n-grams
/// `g` of `w` that have a stored bucket vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    ngrams: NgramConfig,
    words: Vec<String>,
    vocab: HashMap<String, usize>,
    token_vectors: Vec<f64>,
    composed: Vec<f64>,
    buckets: BTreeMap<u32, Vec<f64>>,
}

impl EmbeddingTable {
    /// Builds a table from composed word vectors and bucket vectors; token
    /// vectors are recovered by subtracting the n-gram contributions.
    pub fn from_composed(
        dim: usize,
        ngrams: NgramConfig,
        words: Vec<(String, Vec<f64>)>,
        buckets: BTreeMap<u32, Vec<f64>>,
    ) -> Self {
        let mut table = Self {
            dim,
            ngrams,
            words: Vec::with_capacity(words.len()),
            vocab: HashMap::with_capacity(words.len()),
            token_vectors: Vec::with_capacity(words.len() * dim),
            composed: Vec::with_capacity(words.len() * dim),
            buckets,
        };
        for (word, vector) in words {
            assert_eq!(vector.len(), dim, "vector for {word:?} has wrong dimension");
            table.push_word(word, vector);
        }
        table
    }

    fn push_word(&mut self, word: String, composed: Vec<f64>) {
        let mut token = composed.clone();
        let sub = self.subword_sum(&word);
        axpy(-1.0, &sub, &mut token);
        self.vocab.insert(word.clone(), self.words.len());
        self.words.push(word);
        self.token_vectors.extend_from_slice(&token);
        self.composed.extend_from_slice(&composed);
    }

    fn subword_sum(&self, token: &str) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for b in self.ngrams.buckets(token) {
            if let Some(v) = self.buckets.get(&b) {
                axpy(1.0, v, &mut out);
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ngram_config(&self) -> NgramConfig {
        self.ngrams
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn contains(&self, token: &str) -> bool {
        self.vocab.contains_key(token)
    }

    pub fn bucket_vectors(&self) -> &BTreeMap<u32, Vec<f64>> {
        &self.buckets
    }

    pub fn token_vector(&self, token: &str) -> Option<&[f64]> {
        let i = *self.vocab.get(token)?;
        Some(&self.token_vectors[i * self.dim..(i + 1) * self.dim])
    }

    pub fn composed_vector(&self, token: &str) -> Option<&[f64]> {
        let i = *self.vocab.get(token)?;
        Some(&self.composed[i * self.dim..(i + 1) * self.dim])
    }

    /// Adds `scale * lookup(token)` into `out` and reports how the token
    /// was resolved.
    pub fn add_lookup(&self, token: &str, scale: f64, out: &mut [f64]) -> LookupKind {
        if let Some(v) = self.composed_vector(token) {
            axpy(scale, v, out);
            return LookupKind::Known;
        }
        let mut found = false;
        for b in self.ngrams.buckets(token) {
            if let Some(v) = self.buckets.get(&b) {
                axpy(scale, v, out);
                found = true;
            }
        }
        if found {
            LookupKind::Subword
        } else {
            LookupKind::Unknown
        }
    }

    pub fn lookup(&self, token: &str) -> Lookup {
        let mut vector = vec![0.0; self.dim];
        let kind = self.add_lookup(token, 1.0, &mut vector);
        Lookup { vector, kind }
    }

    /// Returns a copy in which each listed token resolves exactly to the
    /// given vector. Tokens missing from the vocabulary are appended.
    pub fn with_overrides<'a>(
        &self,
        overrides: impl IntoIterator<Item = (&'a str, &'a [f64])>,
    ) -> Self {
        let mut table = self.clone();
        for (token, vector) in overrides {
            assert_eq!(vector.len(), self.dim);
            match table.vocab.get(token) {
                Some(&i) => {
                    let sub = table.subword_sum(token);
                    let range = i * table.dim..(i + 1) * table.dim;
                    table.composed[range.clone()].copy_from_slice(vector);
                    for (k, t) in table.token_vectors[range].iter_mut().enumerate() {
                        *t = vector[k] - sub[k];
                    }
                }
                None => table.push_word(token.to_string(), vector.to_vec()),
            }
        }
        table
    }

    /// Writes the word vectors to `path` and the bucket vectors to the
    /// sidecar returned by [`bucket_sidecar`].
    pub fn save_text(&self, path: impl AsRef<Path>) -> Result<(), EmbedError> {
        let path = path.as_ref();
        write_rows(path, self.dim, self.word_rows(), self.words.len())?;
        self.save_buckets(path)
    }

    /// Composed word vectors in vocabulary order.
    pub(crate) fn word_rows(&self) -> impl Iterator<Item = (String, &[f64])> {
        self.words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), &self.composed[i * self.dim..(i + 1) * self.dim]))
    }

    /// Writes the bucket vectors to the sidecar of `path`.
    pub(crate) fn save_buckets(&self, path: &Path) -> Result<(), EmbedError> {
        write_rows(
            &bucket_sidecar(path),
            self.dim,
            self.buckets.iter().map(|(b, v)| (b.to_string(), v.as_slice())),
            self.buckets.len(),
        )
    }

    /// Reads a table written by [`save_text`](Self::save_text). A missing
    /// sidecar means no bucket vectors.
    pub fn load_text(path: impl AsRef<Path>, ngrams: NgramConfig) -> Result<Self, EmbedError> {
        let path = path.as_ref();
        let (dim, rows) = read_token_rows(path)?;
        let buckets = load_buckets(path, dim)?;
        Ok(Self::from_composed(dim, ngrams, rows, buckets))
    }
}

/// Reads the bucket sidecar of `path`; a missing sidecar is empty.
pub(crate) fn load_buckets(path: &Path, dim: usize) -> Result<BTreeMap<u32, Vec<f64>>, EmbedError> {
    let sidecar = bucket_sidecar(path);
    let mut buckets = BTreeMap::new();
    if !sidecar.exists() {
        return Ok(buckets);
    }
    let (bdim, brows) = read_token_rows(&sidecar)?;
    if bdim != dim && !brows.is_empty() {
        return Err(EmbedError::Format {
            path: sidecar.display().to_string(),
            line: 1,
            message: format!("bucket dim {bdim} differs from word dim {dim}"),
        });
    }
    for (i, (key, v)) in brows.into_iter().enumerate() {
        let b: u32 = key.parse().map_err(|_| EmbedError::Format {
            path: sidecar.display().to_string(),
            line: i + 2,
            message: format!("bad bucket index {key:?}"),
        })?;
        buckets.insert(b, v);
    }
    Ok(buckets)
}

/// Path of the bucket-vector sidecar for an embedding file.
pub fn bucket_sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".buckets");
    PathBuf::from(s)
}

pub(crate) fn write_rows<'a>(
    path: &Path,
    dim: usize,
    rows: impl Iterator<Item = (String, &'a [f64])>,
    count: usize,
) -> Result<(), EmbedError> {
    let io_err = |source| EmbedError::Io { path: path.display().to_string(), source };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    write_section(&mut w, dim, rows, count).map_err(io_err)?;
    w.flush().map_err(io_err)
}

/// Writes one `<count> <dim>` header followed by its rows.
pub(crate) fn write_section<'a>(
    w: &mut impl Write,
    dim: usize,
    rows: impl Iterator<Item = (String, &'a [f64])>,
    count: usize,
) -> std::io::Result<()> {
    writeln!(w, "{count} {dim}")?;
    for (key, v) in rows {
        write!(w, "{key}")?;
        for x in v {
            write!(w, " {x}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// One header-plus-rows block of the embedding text format.
pub(crate) struct Section {
    pub dim: usize,
    pub rows: Vec<(String, Vec<f64>)>,
    /// Line number of the section header.
    pub line: usize,
}

/// Reads consecutive `<count> <dim>` sections until end of file. In each
/// row the key is everything before the last `dim` fields, so it may
/// contain spaces.
pub(crate) fn read_sections(path: &Path) -> Result<Vec<Section>, EmbedError> {
    let p = path.display().to_string();
    let io_err = |source| EmbedError::Io { path: p.clone(), source };
    let fmt_err = |line: usize, message: String| EmbedError::Format { path: p.clone(), line, message };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut sections = Vec::new();
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    loop {
        let (header_line, header) = loop {
            match lines.next() {
                None => return Ok(sections),
                Some((n, l)) => {
                    let l = l.map_err(io_err)?;
                    if !l.trim().is_empty() {
                        break (n, l);
                    }
                }
            }
        };
        let mut parts = header.split_whitespace();
        let (count, dim) = match (parts.next(), parts.next(), parts.next()) {
            (Some(c), Some(d), None) => match (c.parse::<usize>(), d.parse::<usize>()) {
                (Ok(c), Ok(d)) => (c, d),
                _ => return Err(fmt_err(header_line, format!("bad header {header:?}"))),
            },
            _ => return Err(fmt_err(header_line, format!("bad header {header:?}"))),
        };
        let mut rows = Vec::with_capacity(count);
        while rows.len() < count {
            let Some((lineno, line)) = lines.next() else {
                return Err(fmt_err(
                    header_line,
                    format!("header announces {count} rows, found {}", rows.len()),
                ));
            };
            let line = line.map_err(io_err)?;
            let fields: Vec<&str> = line.split(' ').collect();
            if fields.len() < dim + 1 {
                return Err(fmt_err(
                    lineno,
                    format!("expected {dim} values, found {}", fields.len().saturating_sub(1)),
                ));
            }
            let split = fields.len() - dim;
            let key = fields[..split].join(" ");
            if key.is_empty() {
                return Err(fmt_err(lineno, "empty key".into()));
            }
            let values = fields[split..]
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| fmt_err(lineno, format!("expected {dim} numeric values")))?;
            rows.push((key, values));
        }
        sections.push(Section { dim, rows, line: header_line });
    }
}

/// Reads a file holding exactly one section of single-token keys.
fn read_token_rows(path: &Path) -> Result<(usize, Vec<(String, Vec<f64>)>), EmbedError> {
    let fmt_err = |line: usize, message: String| EmbedError::Format {
        path: path.display().to_string(),
        line,
        message,
    };
    let mut sections = read_sections(path)?;
    if sections.len() != 1 {
        return Err(fmt_err(1, format!("expected one section, found {}", sections.len())));
    }
    let section = sections.pop().expect("one section");
    for (i, (key, _)) in section.rows.iter().enumerate() {
        // Tokens never contain spaces, so a space means the row had more
        // values than the header's dimension.
        if key.contains(' ') {
            return Err(fmt_err(section.line + i + 1, format!("row has more than {} values", section.dim)));
        }
    }
    Ok((section.dim, section.rows))
}

/// Skip-gram training parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub dim: usize,
    pub epochs: usize,
    /// Maximum context offset; the effective radius is drawn from
    /// `1..=window` for every target.
    pub window: usize,
    pub negatives: usize,
    pub learning_rate: f64,
    pub min_count: usize,
    pub seed: u64,
    pub ngrams: NgramConfig,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            dim: 100,
            epochs: 5,
            window: 5,
            negatives: 5,
            learning_rate: 0.05,
            min_count: 5,
            seed: 0,
            ngrams: NgramConfig::default(),
        }
    }
}

impl TrainSpec {
    /// Description/query word embeddings: defaults with 300 epochs.
    pub fn nbow() -> Self {
        Self { epochs: 300, ..Self::default() }
    }

    /// Multimodal description+code embeddings.
    pub fn ncs() -> Self {
        Self { epochs: 30, window: 20, min_count: 1, ..Self::default() }
    }

    fn validate(&self) -> Result<(), EmbedError> {
        if self.dim == 0 {
            return Err(EmbedError::InvalidSpec("dim must be positive"));
        }
        if self.epochs == 0 {
            return Err(EmbedError::InvalidSpec("epochs must be positive"));
        }
        if self.window == 0 {
            return Err(EmbedError::InvalidSpec("window must be at least 1"));
        }
        if self.min_count == 0 {
            return Err(EmbedError::InvalidSpec("min_count must be positive"));
        }
        if self.learning_rate.is_nan() || self.learning_rate < 0.0 {
            return Err(EmbedError::InvalidSpec("learning_rate must be non-negative"));
        }
        if self.ngrams.min_n > self.ngrams.max_n {
            return Err(EmbedError::InvalidSpec("ngram min_n exceeds max_n"));
        }
        Ok(())
    }
}

struct NoiseTable {
    cumulative: Vec<f64>,
}

impl NoiseTable {
    fn new(counts: &[usize]) -> Self {
        let mut acc = 0.0;
        let cumulative = counts
            .iter()
            .map(|&c| {
                acc += (c as f64).powf(0.75);
                acc
            })
            .collect();
        Self { cumulative }
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        let total = *self.cumulative.last().expect("non-empty vocabulary");
        let x = rng.gen::<f64>() * total;
        self.cumulative.partition_point(|&c| c <= x).min(self.cumulative.len() - 1)
    }
}

/// Trains subword skip-gram embeddings. Single-threaded and deterministic
/// for a given corpus and spec.
pub fn train_embeddings(corpus: &[Vec<String>], spec: &TrainSpec) -> Result<EmbeddingTable, EmbedError> {
    spec.validate()?;
    if corpus.iter().all(|l| l.is_empty()) {
        return Err(EmbedError::EmptyCorpus);
    }
    let dim = spec.dim;

    let mut counts: HashMap<&str, usize> = HashMap::new();
    for token in corpus.iter().flatten() {
        *counts.entry(token.as_str()).or_default() += 1;
    }
    let mut vocab: Vec<(&str, usize)> =
        counts.into_iter().filter(|&(_, c)| c >= spec.min_count).collect();
    if vocab.is_empty() {
        return Err(EmbedError::EmptyVocabulary(spec.min_count));
    }
    vocab.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let index: HashMap<&str, usize> = vocab.iter().enumerate().map(|(i, (w, _))| (*w, i)).collect();
    let nwords = vocab.len();

    // Input rows: one per word, then one per n-gram bucket in use.
    let word_buckets: Vec<Vec<u32>> = vocab.iter().map(|(w, _)| spec.ngrams.buckets(w)).collect();
    let used: BTreeSet<u32> = word_buckets.iter().flatten().copied().collect();
    let bucket_row: HashMap<u32, usize> =
        used.iter().enumerate().map(|(i, &b)| (b, nwords + i)).collect();
    let input_rows: Vec<Vec<usize>> = word_buckets
        .iter()
        .enumerate()
        .map(|(w, bs)| std::iter::once(w).chain(bs.iter().map(|b| bucket_row[b])).collect())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let nrows = nwords + used.len();
    let bound = 1.0 / dim as f64;
    let mut input: Vec<f64> = (0..nrows * dim).map(|_| rng.gen_range(-bound..bound)).collect();
    let mut output = vec![0.0; nwords * dim];
    let noise = NoiseTable::new(&vocab.iter().map(|(_, c)| *c).collect::<Vec<_>>());

    let lines: Vec<Vec<usize>> = corpus
        .iter()
        .map(|l| l.iter().filter_map(|t| index.get(t.as_str()).copied()).collect())
        .collect();
    let tokens_per_epoch: usize = lines.iter().map(Vec::len).sum();
    let total = (tokens_per_epoch * spec.epochs).max(1) as f64;
    let mut processed = 0usize;

    let mut hidden = vec![0.0; dim];
    let mut grad = vec![0.0; dim];
    let mut step = vec![0.0; dim];
    for _ in 0..spec.epochs {
        for line in &lines {
            for (pos, &center) in line.iter().enumerate() {
                let lr = spec.learning_rate * (1.0 - processed as f64 / total);
                processed += 1;
                let radius = rng.gen_range(1..=spec.window);
                let rows = &input_rows[center];
                hidden.iter_mut().for_each(|h| *h = 0.0);
                for &r in rows {
                    axpy(1.0, &input[r * dim..(r + 1) * dim], &mut hidden);
                }
                grad.iter_mut().for_each(|g| *g = 0.0);
                let lo = pos.saturating_sub(radius);
                let hi = (pos + radius).min(line.len() - 1);
                for ctx in lo..=hi {
                    if ctx == pos {
                        continue;
                    }
                    // Gradient for this (center, context) pair; applied to
                    // the running hidden vector so later pairs see it.
                    step.iter_mut().for_each(|g| *g = 0.0);
                    let target = line[ctx];
                    binary_update(&hidden, &mut output, target, 1.0, lr, &mut step, dim);
                    for _ in 0..spec.negatives {
                        let neg = noise.sample(&mut rng);
                        if neg == target {
                            continue;
                        }
                        binary_update(&hidden, &mut output, neg, 0.0, lr, &mut step, dim);
                    }
                    axpy(1.0, &step, &mut hidden);
                    axpy(1.0, &step, &mut grad);
                }
                // Spread the accumulated change of the summed input over its
                // components so the composed vector moves by exactly `grad`.
                let share = 1.0 / rows.len() as f64;
                for &r in rows {
                    axpy(share, &grad, &mut input[r * dim..(r + 1) * dim]);
                }
            }
        }
    }

    let buckets: BTreeMap<u32, Vec<f64>> = used
        .iter()
        .map(|b| {
            let r = bucket_row[b];
            (*b, input[r * dim..(r + 1) * dim].to_vec())
        })
        .collect();
    let mut table = EmbeddingTable {
        dim,
        ngrams: spec.ngrams,
        words: vocab.iter().map(|(w, _)| w.to_string()).collect(),
        vocab: vocab.iter().enumerate().map(|(i, (w, _))| (w.to_string(), i)).collect(),
        token_vectors: input[..nwords * dim].to_vec(),
        composed: vec![0.0; nwords * dim],
        buckets,
    };
    for w in 0..nwords {
        let mut v = vec![0.0; dim];
        for &r in &input_rows[w] {
            axpy(1.0, &input[r * dim..(r + 1) * dim], &mut v);
        }
        table.composed[w * dim..(w + 1) * dim].copy_from_slice(&v);
    }
    Ok(table)
}

fn binary_update(
    hidden: &[f64],
    output: &mut [f64],
    target: usize,
    label: f64,
    lr: f64,
    grad: &mut [f64],
    dim: usize,
) {
    let out = &mut output[target * dim..(target + 1) * dim];
    let score = sigmoid(dot(hidden, out));
    let alpha = lr * (label - score);
    axpy(alpha, out, grad);
    axpy(alpha, hidden, out);
}

/// Token lines for multimodal embedding training.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TrainingCorpus {
    pub lines: Vec<Vec<String>>,
    /// Pairs dropped because description or code was empty.
    pub skipped: usize,
}

/// Builds skip-gram training lines from (description, code) token pairs.
/// Without augmentation each pair yields `description ++ code`; with
/// augmentation it additionally yields the description inserted in the
/// middle of the code and appended after it.
pub fn build_training_corpus(pairs: &[(Vec<String>, Vec<String>)], augment: bool) -> TrainingCorpus {
    let mut out = TrainingCorpus::default();
    for (desc, code) in pairs {
        if desc.is_empty() || code.is_empty() {
            out.skipped += 1;
            continue;
        }
        out.lines.push(desc.iter().chain(code).cloned().collect());
        if augment {
            let mid = code.len() / 2;
            out.lines.push(code[..mid].iter().chain(desc).chain(&code[mid..]).cloned().collect());
            out.lines.push(code.iter().chain(desc).cloned().collect());
        }
    }
    out
}

/// Smoothed inverse document frequency over snippet code tokens:
/// `idf(t) = ln((N + 1) / (df(t) + 1)) + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdfTable {
    pub doc_count: usize,
    pub df: HashMap<String, usize>,
}

impl IdfTable {
    pub fn from_documents<'a, I, D>(docs: I) -> Self
    where
        I: IntoIterator<Item = D>,
        D: IntoIterator<Item = &'a str>,
    {
        let mut df: HashMap<String, usize> = HashMap::new();
        let mut doc_count = 0;
        for doc in docs {
            doc_count += 1;
            let unique: BTreeSet<&str> = doc.into_iter().collect();
            for t in unique {
                *df.entry(t.to_string()).or_default() += 1;
            }
        }
        Self { doc_count, df }
    }

    pub fn idf(&self, token: &str) -> f64 {
        let df = self.df.get(token).copied().unwrap_or(0);
        ((self.doc_count as f64 + 1.0) / (df as f64 + 1.0)).ln() + 1.0
    }
}

pub fn compute_idf(collection: &SnippetCollection) -> Result<IdfTable, EmbedError> {
    compute_idf_with(collection, &PythonLexer)
}

pub fn compute_idf_with(
    collection: &SnippetCollection,
    tokenizer: &dyn CodeTokenizer,
) -> Result<IdfTable, EmbedError> {
    if collection.is_empty() {
        return Err(EmbedError::EmptyCollection);
    }
    let docs: Vec<Vec<String>> =
        collection.snippets().iter().map(|s| tokenizer.tokenize(&s.code).tokens()).collect();
    Ok(IdfTable::from_documents(docs.iter().map(|d| d.iter().map(String::as_str))))
}
