//! Duplicate-title fine-tuning: a ReLU-clipped cosine fed to a logistic
//! head, trained with binary cross-entropy through the encoder.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{tokenize_natural, NlTokenConfig};
use crate::embed::EmbeddingTable;
use crate::encoders::{EncodeError, ExternalEncoder};
use crate::miner::{PairLabel, TrainingPair};
use crate::optim::LazyAdam;
use crate::vector::{axpy, cosine, cosine_backward, is_zero, sigmoid};

#[derive(Debug, Error)]
pub enum TuneError {
    #[error("cosine is undefined for a zero vector")]
    ZeroVector,
    #[error("training pairs must contain both positive and negative labels")]
    MissingLabel,
    #[error("invalid tuning spec: {0}")]
    InvalidSpec(&'static str),
    #[error("non-finite loss {loss} after {examples} examples")]
    NonFiniteLoss { loss: f64, examples: usize },
    #[error("malformed head file {path}: {message}")]
    BadHead { path: String, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Encode(#[from] EncodeError),
}

/// Logistic head over the clipped cosine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DupHead {
    pub w: f64,
    pub b: f64,
}

impl Default for DupHead {
    fn default() -> Self {
        Self { w: 15.0, b: -5.0 }
    }
}

impl DupHead {
    pub fn probability_from_cosine(&self, cos: f64) -> f64 {
        sigmoid(cos.max(0.0) * self.w + self.b)
    }

    /// Writes `w b` on one line.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TuneError> {
        let path = path.as_ref();
        fs::write(path, format!("{} {}\n", self.w, self.b))
            .map_err(|source| TuneError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TuneError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|source| TuneError::Io { path: path.display().to_string(), source })?;
        let bad = |message: String| TuneError::BadHead { path: path.display().to_string(), message };
        let fields: Vec<&str> = text.split_whitespace().collect();
        let [w, b] = fields[..] else {
            return Err(bad(format!("expected two numbers, found {}", fields.len())));
        };
        let parse = |s: &str| s.parse::<f64>().ok().filter(|v| v.is_finite());
        match (parse(w), parse(b)) {
            (Some(w), Some(b)) => Ok(Self { w, b }),
            _ => Err(bad(format!("non-numeric or non-finite values {w:?} {b:?}"))),
        }
    }
}

/// `σ(max(0, cos(v1, v2)) · w + b)`.
pub fn duplicate_probability(v1: &[f64], v2: &[f64], head: &DupHead) -> Result<f64, TuneError> {
    let cos = cosine(v1, v2).ok_or(TuneError::ZeroVector)?;
    Ok(head.probability_from_cosine(cos))
}

/// Binary cross-entropy of logit `z` against `label` (0 or 1), computed
/// as `softplus(z) - label * z`.
fn bce_from_logit(z: f64, label: f64) -> f64 {
    let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
    softplus - label * z
}

/// Gradients w.r.t. parameter blocks of width `block_width`, keyed by
/// block index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BlockGrads {
    pub blocks: BTreeMap<usize, Vec<f64>>,
}

impl BlockGrads {
    pub fn block(&mut self, i: usize, width: usize) -> &mut Vec<f64> {
        self.blocks.entry(i).or_insert_with(|| vec![0.0; width])
    }
}

/// An encoder whose parameters can be fine-tuned by backpropagation.
/// Parameters live in one flat vector divided into blocks of
/// `block_width()` values.
pub trait Trainable: Clone {
    /// Preprocessed form of one input text.
    type Input;

    fn dim(&self) -> usize;
    fn block_width(&self) -> usize;
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    fn prepare(&mut self, text: &str) -> Result<Self::Input, TuneError>;
    fn forward(&self, input: &Self::Input) -> Vec<f64>;
    /// Adds the parameter gradient of `upstream · forward(input)`.
    fn backward(&self, input: &Self::Input, upstream: &[f64], grads: &mut BlockGrads);
}

/// Sum-of-embeddings encoder with trainable word vectors. Rows are
/// created for every token seen by [`Trainable::prepare`], initialized
/// from the base table's lookup.
#[derive(Debug, Clone)]
pub struct TrainableNbow {
    base: EmbeddingTable,
    config: NlTokenConfig,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    initial: Vec<f64>,
    rows: Vec<f64>,
}

impl TrainableNbow {
    pub fn new(base: EmbeddingTable) -> Self {
        Self::with_config(base, NlTokenConfig::default())
    }

    pub fn with_config(base: EmbeddingTable, config: NlTokenConfig) -> Self {
        Self { base, config, tokens: Vec::new(), index: HashMap::new(), initial: Vec::new(), rows: Vec::new() }
    }

    pub fn encode(&self, text: &str) -> Vec<f64> {
        let dim = self.base.dim();
        let mut out = vec![0.0; dim];
        for t in tokenize_natural(text, &self.config) {
            match self.index.get(&t) {
                Some(&i) => axpy(1.0, &self.rows[i * dim..(i + 1) * dim], &mut out),
                None => {
                    self.base.add_lookup(&t, 1.0, &mut out);
                }
            }
        }
        out
    }

    /// The base table with every changed row written back exactly.
    pub fn to_table(&self) -> EmbeddingTable {
        let dim = self.base.dim();
        let changed: Vec<(&str, &[f64])> = self
            .tokens
            .iter()
            .enumerate()
            .filter(|(i, _)| self.rows[i * dim..(i + 1) * dim] != self.initial[i * dim..(i + 1) * dim])
            .map(|(i, t)| (t.as_str(), &self.rows[i * dim..(i + 1) * dim]))
            .collect();
        self.base.with_overrides(changed)
    }
}

impl Trainable for TrainableNbow {
    type Input = Vec<usize>;

    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn block_width(&self) -> usize {
        self.base.dim()
    }

    fn params(&self) -> &[f64] {
        &self.rows
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.rows
    }

    fn prepare(&mut self, text: &str) -> Result<Vec<usize>, TuneError> {
        let tokens = tokenize_natural(text, &self.config);
        Ok(tokens
            .into_iter()
            .map(|t| {
                if let Some(&i) = self.index.get(&t) {
                    return i;
                }
                let v = self.base.lookup(&t).vector;
                self.initial.extend_from_slice(&v);
                self.rows.extend_from_slice(&v);
                self.index.insert(t.clone(), self.tokens.len());
                self.tokens.push(t);
                self.tokens.len() - 1
            })
            .collect())
    }

    fn forward(&self, input: &Vec<usize>) -> Vec<f64> {
        let dim = self.dim();
        let mut out = vec![0.0; dim];
        for &i in input {
            axpy(1.0, &self.rows[i * dim..(i + 1) * dim], &mut out);
        }
        out
    }

    fn backward(&self, input: &Vec<usize>, upstream: &[f64], grads: &mut BlockGrads) {
        let dim = self.dim();
        for &i in input {
            axpy(1.0, upstream, grads.block(i, dim));
        }
    }
}

/// Frozen external sentence vectors followed by a trainable square linear
/// map, initialized to the identity.
#[derive(Debug, Clone)]
pub struct ProjectedExternal {
    base: ExternalEncoder,
    /// Row-major `dim × dim`.
    matrix: Vec<f64>,
}

impl ProjectedExternal {
    pub fn new(base: ExternalEncoder) -> Self {
        use crate::encoders::Encoder;
        let dim = base.dim();
        let mut matrix = vec![0.0; dim * dim];
        for i in 0..dim {
            matrix[i * dim + i] = 1.0;
        }
        Self { base, matrix }
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let dim = x.len();
        (0..dim).map(|i| crate::vector::dot(&self.matrix[i * dim..(i + 1) * dim], x)).collect()
    }

    pub fn encode(&self, text: &str) -> Result<Vec<f64>, TuneError> {
        let x = self.base.get(text).ok_or_else(|| EncodeError::MissingKey(text.to_string()))?;
        Ok(self.project(x))
    }
}

impl Trainable for ProjectedExternal {
    type Input = Vec<f64>;

    fn dim(&self) -> usize {
        use crate::encoders::Encoder;
        self.base.dim()
    }

    fn block_width(&self) -> usize {
        self.dim()
    }

    fn params(&self) -> &[f64] {
        &self.matrix
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.matrix
    }

    fn prepare(&mut self, text: &str) -> Result<Vec<f64>, TuneError> {
        Ok(self.base.get(text).ok_or_else(|| EncodeError::MissingKey(text.to_string()))?.to_vec())
    }

    fn forward(&self, input: &Vec<f64>) -> Vec<f64> {
        self.project(input)
    }

    fn backward(&self, input: &Vec<f64>, upstream: &[f64], grads: &mut BlockGrads) {
        let dim = self.dim();
        for (i, &u) in upstream.iter().enumerate() {
            if u != 0.0 {
                axpy(u, input, grads.block(i, dim));
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneSpec {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Negatives sampled per positive when building the training pairs.
    pub negatives_per_positive: usize,
    /// Training examples between validation runs.
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for TuneSpec {
    fn default() -> Self {
        Self {
            epochs: 15,
            batch_size: 512,
            learning_rate: 1e-4,
            negatives_per_positive: 5,
            eval_every: 51_200,
            seed: 0,
        }
    }
}

impl TuneSpec {
    fn validate(&self) -> Result<(), TuneError> {
        if self.epochs == 0 || self.batch_size == 0 || self.eval_every == 0 {
            return Err(TuneError::InvalidSpec("epochs, batch_size and eval_every must be positive"));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(TuneError::InvalidSpec("learning_rate must be non-negative"));
        }
        Ok(())
    }
}

pub type TuneValidation<'a, T> = dyn Fn(&T, &DupHead) -> f64 + 'a;

#[derive(Debug, Clone)]
pub struct TunedModel<T> {
    pub model: T,
    pub head: DupHead,
    /// Mean BCE over the usable pairs before any update.
    pub initial_loss: f64,
    /// Mean BCE of the returned model and head.
    pub final_loss: f64,
    /// `(examples seen, score)` for every validation run.
    pub validation: Vec<(usize, f64)>,
    /// Pairs dropped because one side encoded to a zero vector.
    pub skipped_pairs: usize,
}

struct Example<I> {
    a: I,
    b: I,
    label: f64,
}

/// Loss of one example plus, optionally, its gradients scaled by `scale`.
fn example_loss<T: Trainable>(
    model: &T,
    head: &DupHead,
    ex: &Example<T::Input>,
    grad: Option<(&mut BlockGrads, &mut [f64; 2], f64)>,
) -> Option<f64> {
    let va = model.forward(&ex.a);
    let vb = model.forward(&ex.b);
    let cos = cosine(&va, &vb)?;
    let sim = cos.max(0.0);
    let z = sim * head.w + head.b;
    let loss = bce_from_logit(z, ex.label);
    if let Some((grads, head_grad, scale)) = grad {
        let dz = (sigmoid(z) - ex.label) * scale;
        head_grad[0] += dz * sim;
        head_grad[1] += dz;
        // Subgradient of the clip is zero at and below zero.
        if cos > 0.0 {
            let dim = va.len();
            let mut ga = vec![0.0; dim];
            let mut gb = vec![0.0; dim];
            cosine_backward(&va, &vb, dz * head.w, &mut ga, &mut gb);
            model.backward(&ex.a, &ga, grads);
            model.backward(&ex.b, &gb, grads);
        }
    }
    Some(loss)
}

fn mean_loss<T: Trainable>(model: &T, head: &DupHead, examples: &[Example<T::Input>]) -> f64 {
    let total: f64 = examples.iter().filter_map(|e| example_loss(model, head, e, None)).sum();
    total / examples.len().max(1) as f64
}

/// Mean duplicate loss over labelled text pairs and its exact gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct DuplicateObjective {
    pub loss: f64,
    pub grads: BlockGrads,
    /// Gradient with respect to the head's `w` and `b`.
    pub head_grad: [f64; 2],
}

/// Evaluates the objective at the current parameters over
/// `(text_a, text_b, is_duplicate)` triples. Pairs with a zero encoding
/// contribute zero loss but still count towards the mean.
pub fn duplicate_objective<T: Trainable>(
    model: &mut T,
    head: &DupHead,
    pairs: &[(&str, &str, bool)],
) -> Result<DuplicateObjective, TuneError> {
    let mut examples = Vec::with_capacity(pairs.len());
    for &(a, b, dup) in pairs {
        let a = model.prepare(a)?;
        let b = model.prepare(b)?;
        examples.push(Example { a, b, label: if dup { 1.0 } else { 0.0 } });
    }
    let scale = 1.0 / examples.len().max(1) as f64;
    let mut grads = BlockGrads::default();
    let mut head_grad = [0.0; 2];
    let mut loss = 0.0;
    for ex in &examples {
        loss += example_loss(model, head, ex, Some((&mut grads, &mut head_grad, scale))).unwrap_or(0.0) * scale;
    }
    Ok(DuplicateObjective { loss, grads, head_grad })
}

/// Fine-tunes `model` and a fresh head on labelled title pairs with Adam.
/// With a validation hook, scores are taken every `eval_every` examples
/// and after the last epoch, and the best snapshot is returned.
pub fn train_duplicate_head<T: Trainable>(
    mut model: T,
    pairs: &[TrainingPair],
    spec: &TuneSpec,
    validation: Option<&TuneValidation<'_, T>>,
) -> Result<TunedModel<T>, TuneError> {
    spec.validate()?;
    let has = |l: PairLabel| pairs.iter().any(|p| p.label == l);
    if !has(PairLabel::Positive) || !has(PairLabel::Negative) {
        return Err(TuneError::MissingLabel);
    }
    let mut examples = Vec::with_capacity(pairs.len());
    let mut skipped_pairs = 0;
    for p in pairs {
        let a = model.prepare(&p.text_a)?;
        let b = model.prepare(&p.text_b)?;
        if is_zero(&model.forward(&a)) || is_zero(&model.forward(&b)) {
            skipped_pairs += 1;
            continue;
        }
        let label = if p.label == PairLabel::Positive { 1.0 } else { 0.0 };
        examples.push(Example { a, b, label });
    }
    if skipped_pairs > 0 {
        log::warn!("skipped {skipped_pairs} pairs with an empty encoding");
    }

    let mut head = DupHead::default();
    let initial_loss = mean_loss(&model, &head, &examples);
    let width = model.block_width();
    let mut adam = LazyAdam::new(spec.learning_rate, model.params().len(), width);
    let mut head_adam = LazyAdam::new(spec.learning_rate, 2, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut seen = 0usize;
    let mut next_eval = spec.eval_every;
    let mut scores = Vec::new();
    let mut best: Option<(f64, T, DupHead)> = None;
    let mut evaluate = |model: &T, head: &DupHead, seen: usize, scores: &mut Vec<(usize, f64)>| {
        if let Some(hook) = validation {
            let score = hook(model, head);
            log::info!("duplicate tuning after {seen} examples: validation {score:.4}");
            scores.push((seen, score));
            if best.as_ref().is_none_or(|(b, _, _)| score > *b) {
                best = Some((score, model.clone(), *head));
            }
        }
    };

    for _ in 0..spec.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(spec.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            let mut grads = BlockGrads::default();
            let mut head_grad = [0.0; 2];
            let mut loss = 0.0;
            for &i in batch {
                let l = example_loss(&model, &head, &examples[i], Some((&mut grads, &mut head_grad, scale)));
                loss += l.unwrap_or(0.0) * scale;
            }
            seen += batch.len();
            if !loss.is_finite() {
                return Err(TuneError::NonFiniteLoss { loss, examples: seen });
            }
            adam.begin_step();
            for (&blk, g) in &grads.blocks {
                adam.update(model.params_mut(), blk, g);
            }
            head_adam.begin_step();
            let mut hp = [head.w, head.b];
            head_adam.update(&mut hp, 0, &head_grad);
            head = DupHead { w: hp[0], b: hp[1] };
            while seen >= next_eval {
                evaluate(&model, &head, seen, &mut scores);
                next_eval += spec.eval_every;
            }
        }
    }
    if scores.last().is_none_or(|&(s, _)| s != seen) {
        evaluate(&model, &head, seen, &mut scores);
    }
    drop(evaluate);
    if let Some((_, m, h)) = best {
        model = m;
        head = h;
    }
    let final_loss = mean_loss(&model, &head, &examples);
    Ok(TunedModel { model, head, initial_loss, final_loss, validation: scores, skipped_pairs })
}
