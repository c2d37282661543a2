//! Attention-weighted code embeddings trained with a cosine margin loss.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EncodeError;
use crate::embed::{load_buckets, read_sections, write_section, EmbedError, EmbeddingTable, NgramConfig};
use crate::optim::LazyAdam;
use crate::vector::{axpy, cosine, cosine_backward, dot};

const ATTENTION_KEY: &str = "<attention>";

/// Token table and attention vector of the attention-weighted encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct UnifParams {
    pub table: EmbeddingTable,
    pub attention: Vec<f64>,
}

impl UnifParams {
    pub fn new(table: EmbeddingTable, attention: Vec<f64>) -> Self {
        assert_eq!(table.dim(), attention.len(), "attention length must equal table dim");
        Self { table, attention }
    }

    pub fn dim(&self) -> usize {
        self.attention.len()
    }
}

/// Softmax over `logits` with max subtraction.
pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Attention weights of each code token.
pub fn attention_weights<S: AsRef<str>>(tokens: &[S], params: &UnifParams) -> Result<Vec<f64>, EncodeError> {
    if tokens.is_empty() {
        return Err(EncodeError::EmptyInput);
    }
    let logits: Vec<f64> = tokens
        .iter()
        .map(|t| dot(&params.table.lookup(t.as_ref()).vector, &params.attention))
        .collect();
    Ok(softmax(&logits))
}

/// `Σ w_i e(c_i)` with `w = softmax(e(c_i) · a)`.
pub fn encode_unif_code<S: AsRef<str>>(tokens: &[S], params: &UnifParams) -> Result<Vec<f64>, EncodeError> {
    if tokens.is_empty() {
        return Err(EncodeError::EmptyInput);
    }
    let vectors: Vec<Vec<f64>> = tokens.iter().map(|t| params.table.lookup(t.as_ref()).vector).collect();
    let logits: Vec<f64> = vectors.iter().map(|v| dot(v, &params.attention)).collect();
    let mut out = vec![0.0; params.dim()];
    for (w, v) in softmax(&logits).into_iter().zip(&vectors) {
        axpy(w, v, &mut out);
    }
    Ok(out)
}

/// Margin-loss training parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginSpec {
    pub margin: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// In-batch negatives drawn for every positive pair.
    pub negatives_per_positive: usize,
    pub seed: u64,
    /// Run the validation hook every this many epochs.
    pub eval_every: usize,
}

impl Default for MarginSpec {
    fn default() -> Self {
        Self {
            margin: 0.1,
            epochs: 20,
            batch_size: 32,
            learning_rate: 1e-4,
            negatives_per_positive: 1,
            seed: 0,
            eval_every: 1,
        }
    }
}

impl MarginSpec {
    fn validate(&self) -> Result<(), EncodeError> {
        if !(self.margin > 0.0) {
            return Err(EncodeError::InvalidSpec("margin must be positive"));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.eval_every == 0 {
            return Err(EncodeError::InvalidSpec("epochs, batch_size and eval_every must be positive"));
        }
        if self.negatives_per_positive == 0 {
            return Err(EncodeError::InvalidSpec("negatives_per_positive must be positive"));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(EncodeError::InvalidSpec("learning_rate must be non-negative"));
        }
        Ok(())
    }
}

/// Scores candidate parameters on held-out data (higher is better).
pub type ValidationHook<'a> = dyn Fn(&UnifParams) -> f64 + 'a;

#[derive(Debug, Clone)]
pub struct UnifTraining {
    pub params: UnifParams,
    /// Mean hinge loss over the triplets of each epoch.
    pub epoch_losses: Vec<f64>,
    /// `(epoch, score)` for every validation run.
    pub validation: Vec<(usize, f64)>,
}

impl UnifTraining {
    pub fn best_validation(&self) -> Option<(usize, f64)> {
        self.validation.iter().copied().fold(None, |best, (e, s)| match best {
            Some((_, b)) if b >= s => best,
            _ => Some((e, s)),
        })
    }
}

/// Dense trainable copy of the rows used by the training pairs.
struct Model {
    dim: usize,
    rows: Vec<f64>,
    attention: Vec<f64>,
}

impl Model {
    fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    fn describe(&self, ids: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &i in ids {
            axpy(1.0, self.row(i), &mut out);
        }
        out
    }

    /// Code vector and attention weights.
    fn code(&self, ids: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let logits: Vec<f64> = ids.iter().map(|&i| dot(self.row(i), &self.attention)).collect();
        let weights = softmax(&logits);
        let mut out = vec![0.0; self.dim];
        for (&w, &i) in weights.iter().zip(ids) {
            axpy(w, self.row(i), &mut out);
        }
        (out, weights)
    }
}

#[derive(Default)]
struct Grads {
    rows: BTreeMap<usize, Vec<f64>>,
    attention: Vec<f64>,
}

impl Grads {
    fn new(dim: usize) -> Self {
        Self { rows: BTreeMap::new(), attention: vec![0.0; dim] }
    }

    fn row(&mut self, i: usize, dim: usize) -> &mut Vec<f64> {
        self.rows.entry(i).or_insert_with(|| vec![0.0; dim])
    }

    fn code_backward(&mut self, model: &Model, ids: &[usize], weights: &[f64], code: &[f64], upstream: &[f64]) {
        let dim = model.dim;
        let g_code = dot(upstream, code);
        for (&i, &w) in ids.iter().zip(weights) {
            let row = model.row(i);
            let d_logit = w * (dot(upstream, row) - g_code);
            axpy(d_logit, row, &mut self.attention);
            let g = self.row(i, dim);
            axpy(w, upstream, g);
            axpy(d_logit, &model.attention, g);
        }
    }
}

/// A pair in model-row indices.
struct IndexedPair {
    desc: Vec<usize>,
    code: Vec<usize>,
}

/// Mean hinge loss over `triplets` of `(positive pair, negative pair)`;
/// accumulates gradients when `grads` is given. Triplets whose
/// description or code vector is zero contribute nothing.
fn batch_loss(
    model: &Model,
    pairs: &[IndexedPair],
    triplets: &[(usize, usize)],
    margin: f64,
    mut grads: Option<&mut Grads>,
) -> f64 {
    if triplets.is_empty() {
        return 0.0;
    }
    let scale = 1.0 / triplets.len() as f64;
    let dim = model.dim;
    let mut total = 0.0;
    for &(p, n) in triplets {
        let d = model.describe(&pairs[p].desc);
        let (cp, wp) = model.code(&pairs[p].code);
        let (cn, wn) = model.code(&pairs[n].code);
        if [&d, &cp, &cn].iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return f64::NAN;
        }
        let (Some(pos), Some(neg)) = (cosine(&d, &cp), cosine(&d, &cn)) else { continue };
        let loss = margin - pos + neg;
        if loss <= 0.0 {
            continue;
        }
        total += loss;
        if let Some(g) = grads.as_deref_mut() {
            let mut gd = vec![0.0; dim];
            let mut gp = vec![0.0; dim];
            let mut gn = vec![0.0; dim];
            cosine_backward(&d, &cp, -scale, &mut gd, &mut gp);
            cosine_backward(&d, &cn, scale, &mut gd, &mut gn);
            for &i in &pairs[p].desc {
                axpy(1.0, &gd, g.row(i, dim));
            }
            g.code_backward(model, &pairs[p].code, &wp, &cp, &gp);
            g.code_backward(model, &pairs[n].code, &wn, &cn, &gn);
        }
    }
    total * scale
}

/// Maps pair tokens to dense row ids in first-seen order. Pairs with an
/// empty side map to `None`.
fn intern_pairs(pairs: &[(Vec<String>, Vec<String>)]) -> (Vec<&str>, Vec<Option<IndexedPair>>) {
    let mut tokens: Vec<&str> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut indexed = Vec::with_capacity(pairs.len());
    for (desc, code) in pairs {
        if desc.is_empty() || code.is_empty() {
            indexed.push(None);
            continue;
        }
        let mut map = Vec::new();
        for t in desc.iter().chain(code) {
            let next = tokens.len();
            let id = *index.entry(t.as_str()).or_insert(next);
            if id == next {
                tokens.push(t.as_str());
            }
            map.push(id);
        }
        let code_ids = map.split_off(desc.len());
        indexed.push(Some(IndexedPair { desc: map, code: code_ids }));
    }
    (tokens, indexed)
}

/// Margin loss of a fixed set of triplets and its exact gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginObjective {
    pub loss: f64,
    /// Gradient per token row, for tokens that received one.
    pub token_grads: BTreeMap<String, Vec<f64>>,
    pub attention_grad: Vec<f64>,
}

/// Evaluates the mean hinge loss over `triplets` of (positive pair index,
/// negative pair index) into `pairs`, using each token's composed vector
/// from `params.table` as its row. Every pair must have non-empty sides.
pub fn margin_objective(
    params: &UnifParams,
    pairs: &[(Vec<String>, Vec<String>)],
    triplets: &[(usize, usize)],
    margin: f64,
) -> Result<MarginObjective, EncodeError> {
    let (tokens, interned) = intern_pairs(pairs);
    let indexed: Vec<IndexedPair> =
        interned.into_iter().collect::<Option<_>>().ok_or(EncodeError::EmptyInput)?;
    if triplets.iter().any(|&(p, n)| p >= indexed.len() || n >= indexed.len()) {
        return Err(EncodeError::InvalidSpec("triplet index out of range"));
    }
    let dim = params.dim();
    let mut rows = Vec::with_capacity(tokens.len() * dim);
    for t in &tokens {
        rows.extend(params.table.lookup(t).vector);
    }
    let model = Model { dim, rows, attention: params.attention.clone() };
    let mut grads = Grads::new(dim);
    let loss = batch_loss(&model, &indexed, triplets, margin, Some(&mut grads));
    let token_grads = grads.rows.into_iter().map(|(i, g)| (tokens[i].to_string(), g)).collect();
    Ok(MarginObjective { loss, token_grads, attention_grad: grads.attention })
}

/// Trains the token table and attention vector. Description vectors are
/// sums over the same trainable table. With a validation hook the
/// best-scoring checkpoint is returned, otherwise the final one.
///
/// Pairs with an empty description or empty code are ignored.
pub fn train_unif(
    pairs: &[(Vec<String>, Vec<String>)],
    init: &EmbeddingTable,
    spec: &MarginSpec,
    validation: Option<&ValidationHook<'_>>,
) -> Result<UnifTraining, EncodeError> {
    spec.validate()?;
    let (tokens, interned) = intern_pairs(pairs);
    let indexed: Vec<IndexedPair> = interned.into_iter().flatten().collect();
    if indexed.is_empty() {
        return Err(EncodeError::NoPairs);
    }

    let dim = init.dim();
    let mut initial = Vec::with_capacity(tokens.len() * dim);
    for t in &tokens {
        initial.extend(init.lookup(t).vector);
    }
    let mut model = Model { dim, rows: initial.clone(), attention: vec![0.0; dim] };
    let mut row_adam = LazyAdam::new(spec.learning_rate, tokens.len() * dim, dim);
    let mut attention_adam = LazyAdam::new(spec.learning_rate, dim, dim);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let snapshot = |model: &Model| -> UnifParams {
        let changed: Vec<(&str, &[f64])> = tokens
            .iter()
            .enumerate()
            .filter(|(i, _)| model.row(*i) != &initial[i * dim..(i + 1) * dim])
            .map(|(i, t)| (*t, model.row(i)))
            .collect();
        UnifParams { table: init.with_overrides(changed), attention: model.attention.clone() }
    };

    let mut order: Vec<usize> = (0..indexed.len()).collect();
    let mut epoch_losses = Vec::with_capacity(spec.epochs);
    let mut validation_scores = Vec::new();
    let mut best: Option<(f64, UnifParams)> = None;
    for epoch in 0..spec.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for (b, batch) in order.chunks(spec.batch_size).enumerate() {
            let triplets = sample_triplets(batch, spec.negatives_per_positive, &mut rng);
            if triplets.is_empty() {
                continue;
            }
            let mut grads = Grads::new(dim);
            let loss = batch_loss(&model, &indexed, &triplets, spec.margin, Some(&mut grads));
            if !loss.is_finite() {
                return Err(EncodeError::NonFiniteLoss { loss, epoch, batch: b });
            }
            row_adam.begin_step();
            for (&i, g) in &grads.rows {
                row_adam.update(&mut model.rows, i, g);
            }
            attention_adam.begin_step();
            attention_adam.update(&mut model.attention, 0, &grads.attention);
            epoch_loss += loss;
            batches += 1;
        }
        let mean = if batches > 0 { epoch_loss / batches as f64 } else { 0.0 };
        log::debug!("unif epoch {epoch}: mean loss {mean:.6}");
        epoch_losses.push(mean);
        if let Some(hook) = validation {
            if (epoch + 1) % spec.eval_every == 0 || epoch + 1 == spec.epochs {
                let params = snapshot(&model);
                let score = hook(&params);
                log::info!("unif epoch {epoch}: validation {score:.4}");
                validation_scores.push((epoch, score));
                if best.as_ref().is_none_or(|(b, _)| score > *b) {
                    best = Some((score, params));
                }
            }
        }
    }
    let params = match best {
        Some((_, p)) => p,
        None => snapshot(&model),
    };
    Ok(UnifTraining { params, epoch_losses, validation: validation_scores })
}

/// Pairs each batch member with `k` other members drawn without
/// replacement.
fn sample_triplets(batch: &[usize], k: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    if batch.len() < 2 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(batch.len() * k);
    for (pos, &p) in batch.iter().enumerate() {
        let others: Vec<usize> = batch.iter().enumerate().filter(|&(o, _)| o != pos).map(|(_, &n)| n).collect();
        for &n in others.choose_multiple(rng, k.min(others.len())) {
            out.push((p, n));
        }
    }
    out
}

/// Writes the table section, then a one-row section keyed `<attention>`.
/// Bucket vectors go to the table's sidecar.
pub fn save_unif_params(path: impl AsRef<Path>, params: &UnifParams) -> Result<(), EncodeError> {
    let path = path.as_ref();
    let io_err = |source| EmbedError::Io { path: path.display().to_string(), source };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    let t = &params.table;
    write_section(&mut w, t.dim(), t.word_rows(), t.len()).map_err(io_err)?;
    write_section(
        &mut w,
        params.dim(),
        std::iter::once((ATTENTION_KEY.to_string(), params.attention.as_slice())),
        1,
    )
    .map_err(io_err)?;
    w.flush().map_err(io_err)?;
    t.save_buckets(path)?;
    Ok(())
}

pub fn load_unif_params(path: impl AsRef<Path>, ngrams: NgramConfig) -> Result<UnifParams, EncodeError> {
    let path = path.as_ref();
    let fmt_err = |line: usize, message: String| EmbedError::Format {
        path: path.display().to_string(),
        line,
        message,
    };
    let sections = read_sections(path)?;
    let [table, attention] = <[_; 2]>::try_from(sections)
        .map_err(|s| fmt_err(1, format!("expected table and attention sections, found {}", s.len())))?;
    if attention.dim != table.dim || attention.rows.len() != 1 || attention.rows[0].0 != ATTENTION_KEY {
        return Err(fmt_err(attention.line, format!("expected one {ATTENTION_KEY} row of dim {}", table.dim)).into());
    }
    if let Some(i) = table.rows.iter().position(|(k, _)| k.contains(' ')) {
        return Err(fmt_err(table.line + i + 1, format!("row has more than {} values", table.dim)).into());
    }
    let buckets = load_buckets(path, table.dim)?;
    let dim = table.dim;
    let emb = EmbeddingTable::from_composed(dim, ngrams, table.rows, buckets);
    let attention = attention.rows.into_iter().next().expect("one row").1;
    Ok(UnifParams::new(emb, attention))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap as Map;

    fn table(rows: &[(&str, Vec<f64>)]) -> EmbeddingTable {
        EmbeddingTable::from_composed(
            rows[0].1.len(),
            NgramConfig { min_n: 3, max_n: 6, bucket_count: 0 },
            rows.iter().map(|(w, v)| (w.to_string(), v.clone())).collect(),
            Map::new(),
        )
    }

    fn params(rows: &[(&str, Vec<f64>)], attention: Vec<f64>) -> UnifParams {
        UnifParams::new(table(rows), attention)
    }

    #[test]
    fn single_token_gets_full_weight() {
        let p = params(&[("x", vec![1.0, 2.0])], vec![0.3, -0.7]);
        assert_eq!(attention_weights(&["x"], &p).unwrap(), vec![1.0]);
        assert_eq!(encode_unif_code(&["x"], &p).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn equal_logits_give_uniform_weights() {
        let p = params(&[("x", vec![1.0, 0.0]), ("y", vec![0.0, 1.0]), ("z", vec![1.0, 1.0])], vec![0.0, 0.0]);
        let w = attention_weights(&["x", "y", "z"], &p).unwrap();
        for x in w {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_arithmetic() {
        // Logits (ln 2, 0) via attention (1) on one-dimensional vectors.
        let p = params(&[("x", vec![2f64.ln()]), ("y", vec![0.0])], vec![1.0]);
        let w = attention_weights(&["x", "y"], &p).unwrap();
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((w[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_is_shift_invariant_and_stable() {
        let w = softmax(&[1000.0, 1000.0 + 2f64.ln()]);
        assert!((w[1] - 2.0 / 3.0).abs() < 1e-12);
        // Shifting by a power of two keeps every logit difference exact.
        assert_eq!(softmax(&[0.5, -1.5, 2.0]), softmax(&[16.5, 14.5, 18.0]));
    }

    #[test]
    fn empty_code_is_an_error() {
        let p = params(&[("x", vec![1.0])], vec![1.0]);
        assert!(matches!(encode_unif_code::<&str>(&[], &p), Err(EncodeError::EmptyInput)));
    }

    fn toy_model() -> (Model, Vec<IndexedPair>) {
        // Five tokens in three dimensions.
        let rows = vec![
            0.3, -0.2, 0.5, //
            -0.4, 0.8, 0.1, //
            0.7, 0.2, -0.3, //
            0.1, -0.6, 0.4, //
            -0.5, 0.3, 0.9,
        ];
        let model = Model { dim: 3, rows, attention: vec![0.2, -0.4, 0.6] };
        let pairs = vec![
            IndexedPair { desc: vec![0, 1], code: vec![2, 3, 2] },
            IndexedPair { desc: vec![4], code: vec![0, 3] },
            IndexedPair { desc: vec![1, 3], code: vec![4, 2, 1] },
        ];
        (model, pairs)
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let (mut model, pairs) = toy_model();
        let triplets = [(0, 1), (1, 2), (2, 0), (0, 2)];
        let margin = 1.5; // large enough that every triplet is active
        let mut grads = Grads::new(3);
        batch_loss(&model, &pairs, &triplets, margin, Some(&mut grads));
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-8);
        for k in 0..model.rows.len() {
            let orig = model.rows[k];
            model.rows[k] = orig + h;
            let up = batch_loss(&model, &pairs, &triplets, margin, None);
            model.rows[k] = orig - h;
            let down = batch_loss(&model, &pairs, &triplets, margin, None);
            model.rows[k] = orig;
            let fd = (up - down) / (2.0 * h);
            let analytic = grads.rows.get(&(k / 3)).map_or(0.0, |g| g[k % 3]);
            worst = worst.max(rel(fd, analytic));
        }
        for k in 0..3 {
            let orig = model.attention[k];
            model.attention[k] = orig + h;
            let up = batch_loss(&model, &pairs, &triplets, margin, None);
            model.attention[k] = orig - h;
            let down = batch_loss(&model, &pairs, &triplets, margin, None);
            model.attention[k] = orig;
            let fd = (up - down) / (2.0 * h);
            worst = worst.max(rel(fd, grads.attention[k]));
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn satisfied_margin_gives_zero_loss_and_gradient() {
        let model = Model {
            dim: 2,
            rows: vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.1],
            attention: vec![0.0, 0.0],
        };
        let pairs = vec![
            IndexedPair { desc: vec![0], code: vec![2] },
            IndexedPair { desc: vec![1], code: vec![1] },
        ];
        let mut grads = Grads::new(2);
        let loss = batch_loss(&model, &pairs, &[(0, 1)], 0.1, Some(&mut grads));
        assert_eq!(loss, 0.0);
        assert!(grads.rows.is_empty());
        assert!(grads.attention.iter().all(|&g| g == 0.0));
    }

    fn toy_pairs() -> Vec<(Vec<String>, Vec<String>)> {
        let s = |x: &str| x.split_whitespace().map(String::from).collect::<Vec<_>>();
        vec![
            (s("plot histogram"), s("plt hist data")),
            (s("sort list"), s("sorted items key")),
            (s("read file"), s("open path read")),
            (s("join strings"), s("sep join parts")),
        ]
    }

    fn toy_init() -> EmbeddingTable {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let words = [
            "plot", "histogram", "plt", "hist", "data", "sort", "list", "sorted", "items", "key", "read", "file",
            "open", "path", "join", "strings", "sep", "parts",
        ];
        table(&words.iter().map(|w| (*w, (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect())).collect::<Vec<_>>())
    }

    #[test]
    fn zero_learning_rate_returns_init() {
        let init = toy_init();
        let spec = MarginSpec { learning_rate: 0.0, epochs: 3, batch_size: 2, ..MarginSpec::default() };
        let out = train_unif(&toy_pairs(), &init, &spec, None).unwrap();
        assert_eq!(out.params.table, init);
        assert_eq!(out.params.attention, vec![0.0; 8]);
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let init = toy_init();
        let spec = MarginSpec { learning_rate: 0.05, epochs: 30, batch_size: 4, margin: 0.5, negatives_per_positive: 3, ..MarginSpec::default() };
        let a = train_unif(&toy_pairs(), &init, &spec, None).unwrap();
        let b = train_unif(&toy_pairs(), &init, &spec, None).unwrap();
        assert_eq!(a.params, b.params);
        assert!(a.epoch_losses.last().unwrap() < a.epoch_losses.first().unwrap());
    }

    #[test]
    fn validation_hook_keeps_best_checkpoint() {
        let init = toy_init();
        let spec = MarginSpec { learning_rate: 0.05, epochs: 10, batch_size: 4, ..MarginSpec::default() };
        // Score that peaks mid-training: negative distance of the attention
        // norm from a target value.
        let hook = |p: &UnifParams| -(crate::vector::norm(&p.attention) - 0.1).abs();
        let out = train_unif(&toy_pairs(), &init, &spec, Some(&hook)).unwrap();
        assert_eq!(out.validation.len(), 10);
        let (_, best) = out.best_validation().unwrap();
        assert_eq!(hook(&out.params), best);
    }

    #[test]
    fn invalid_inputs() {
        let init = toy_init();
        let bad = MarginSpec { margin: 0.0, ..MarginSpec::default() };
        assert!(matches!(train_unif(&toy_pairs(), &init, &bad, None), Err(EncodeError::InvalidSpec(_))));
        assert!(matches!(train_unif(&[], &init, &MarginSpec::default(), None), Err(EncodeError::NoPairs)));
    }

    #[test]
    fn non_finite_loss_aborts() {
        let mut init = toy_init();
        let nan = vec![f64::NAN; 8];
        init = init.with_overrides([("plt", nan.as_slice())]);
        let spec = MarginSpec { batch_size: 4, ..MarginSpec::default() };
        assert!(matches!(train_unif(&toy_pairs(), &init, &spec, None), Err(EncodeError::NonFiniteLoss { .. })));
    }

    #[test]
    fn params_round_trip() {
        let p = UnifParams::new(toy_init(), (0..8).map(|i| i as f64 * 0.25 - 1.0).collect());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("unif.vec");
        save_unif_params(&path, &p).unwrap();
        let back = load_unif_params(&path, p.table.ngram_config()).unwrap();
        assert_eq!(back, p);
    }

    proptest::proptest! {
        #[test]
        fn attention_weights_form_a_distribution(
            logits in proptest::collection::vec(-15.0f64..15.0, 1..20),
            shift in -500.0f64..500.0,
        ) {
            let w = softmax(&logits);
            let total: f64 = w.iter().sum();
            proptest::prop_assert!((total - 1.0).abs() < 1e-9);
            proptest::prop_assert!(w.iter().all(|&x| x > 0.0 && x <= 1.0));
            if logits.len() > 1 {
                proptest::prop_assert!(w.iter().all(|&x| x < 1.0));
            }
            let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
            for (a, b) in w.iter().zip(softmax(&shifted)) {
                proptest::prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
