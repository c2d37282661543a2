//! Text and code encoders projecting queries and snippets into a shared
//! vector space.

mod unif;

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::corpus::{tokenize_natural, CodeTokenizer, NlTokenConfig, PythonLexer};
use crate::embed::{read_sections, EmbedError, EmbeddingTable, IdfTable};

pub use unif::{
    attention_weights, encode_unif_code, load_unif_params, margin_objective, save_unif_params, train_unif, MarginObjective, MarginSpec,
    UnifParams, UnifTraining, ValidationHook,
};

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("cannot encode an empty token list")]
    EmptyInput,
    #[error("no stored embedding for {0:?}")]
    MissingKey(String),
    #[error("training pairs are empty")]
    NoPairs,
    #[error("invalid margin spec: {0}")]
    InvalidSpec(&'static str),
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { loss: f64, epoch: usize, batch: usize },
    #[error("embedding file: {0}")]
    Embed(#[from] EmbedError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EncoderKind {
    Nbow,
    NcsQuery,
    NcsCode,
    UnifCode,
    External,
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Nbow => "nbow",
            Self::NcsQuery => "ncs_query",
            Self::NcsCode => "ncs_code",
            Self::UnifCode => "unif_code",
            Self::External => "external",
        })
    }
}

/// Encoder output. `empty` is set when the input produced no tokens; the
/// vector is then zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoding {
    pub vector: Vec<f64>,
    pub empty: bool,
}

pub trait Encoder: Send + Sync {
    fn dim(&self) -> usize;
    fn kind(&self) -> EncoderKind;
    fn encode(&self, text: &str) -> Result<Encoding, EncodeError>;
}

/// Sum of the lookups of `tokens`.
pub fn encode_nbow<S: AsRef<str>>(tokens: &[S], table: &EmbeddingTable) -> Encoding {
    let mut vector = vec![0.0; table.dim()];
    for t in tokens {
        table.add_lookup(t.as_ref(), 1.0, &mut vector);
    }
    Encoding { vector, empty: tokens.is_empty() }
}

/// Query side of NCS: a plain sum over the multimodal table.
pub fn encode_ncs_query<S: AsRef<str>>(tokens: &[S], table: &EmbeddingTable) -> Encoding {
    encode_nbow(tokens, table)
}

/// Code side of NCS: IDF-weighted sum, one term per token occurrence.
pub fn encode_ncs_code<S: AsRef<str>>(tokens: &[S], table: &EmbeddingTable, idf: &IdfTable) -> Encoding {
    encode_weighted(tokens, table, |t| idf.idf(t))
}

/// Sum of `weight(t) * lookup(t)` over token occurrences.
pub fn encode_weighted<S: AsRef<str>>(
    tokens: &[S],
    table: &EmbeddingTable,
    weight: impl Fn(&str) -> f64,
) -> Encoding {
    let mut vector = vec![0.0; table.dim()];
    for t in tokens {
        let t = t.as_ref();
        table.add_lookup(t, weight(t), &mut vector);
    }
    Encoding { vector, empty: tokens.is_empty() }
}

/// Descriptions and queries over the description embeddings, with
/// lemmatized preprocessing.
#[derive(Clone)]
pub struct NbowEncoder {
    table: Arc<EmbeddingTable>,
    config: NlTokenConfig,
}

impl NbowEncoder {
    pub fn new(table: Arc<EmbeddingTable>) -> Self {
        Self { table, config: NlTokenConfig::default() }
    }

    pub fn with_config(table: Arc<EmbeddingTable>, config: NlTokenConfig) -> Self {
        Self { table, config }
    }
}

impl Encoder for NbowEncoder {
    fn dim(&self) -> usize {
        self.table.dim()
    }

    fn kind(&self) -> EncoderKind {
        EncoderKind::Nbow
    }

    fn encode(&self, text: &str) -> Result<Encoding, EncodeError> {
        Ok(encode_nbow(&tokenize_natural(text, &self.config), &self.table))
    }
}

/// Queries over a query/code table: stopwords removed, no lemmatization.
/// Also serves as the query side of UNIF.
#[derive(Clone)]
pub struct NcsQueryEncoder {
    table: Arc<EmbeddingTable>,
    config: NlTokenConfig,
}

impl NcsQueryEncoder {
    pub fn new(table: Arc<EmbeddingTable>) -> Self {
        Self { table, config: NlTokenConfig::without_lemmas() }
    }
}

impl Encoder for NcsQueryEncoder {
    fn dim(&self) -> usize {
        self.table.dim()
    }

    fn kind(&self) -> EncoderKind {
        EncoderKind::NcsQuery
    }

    fn encode(&self, text: &str) -> Result<Encoding, EncodeError> {
        Ok(encode_ncs_query(&tokenize_natural(text, &self.config), &self.table))
    }
}

#[derive(Clone)]
pub struct NcsCodeEncoder {
    table: Arc<EmbeddingTable>,
    idf: Arc<IdfTable>,
    tokenizer: Arc<dyn CodeTokenizer>,
}

impl NcsCodeEncoder {
    pub fn new(table: Arc<EmbeddingTable>, idf: Arc<IdfTable>) -> Self {
        Self { table, idf, tokenizer: Arc::new(PythonLexer) }
    }

    pub fn with_tokenizer(mut self, tokenizer: Arc<dyn CodeTokenizer>) -> Self {
        self.tokenizer = tokenizer;
        self
    }
}

impl Encoder for NcsCodeEncoder {
    fn dim(&self) -> usize {
        self.table.dim()
    }

    fn kind(&self) -> EncoderKind {
        EncoderKind::NcsCode
    }

    fn encode(&self, text: &str) -> Result<Encoding, EncodeError> {
        let tokens = self.tokenizer.tokenize(text).tokens();
        Ok(encode_ncs_code(&tokens, &self.table, &self.idf))
    }
}

/// Attention-weighted code encoder. Code without tokens encodes to an
/// empty-flagged zero vector instead of an error.
#[derive(Clone)]
pub struct UnifCodeEncoder {
    params: Arc<UnifParams>,
    tokenizer: Arc<dyn CodeTokenizer>,
}

impl UnifCodeEncoder {
    pub fn new(params: Arc<UnifParams>) -> Self {
        Self { params, tokenizer: Arc::new(PythonLexer) }
    }

    pub fn with_tokenizer(mut self, tokenizer: Arc<dyn CodeTokenizer>) -> Self {
        self.tokenizer = tokenizer;
        self
    }
}

impl Encoder for UnifCodeEncoder {
    fn dim(&self) -> usize {
        self.params.dim()
    }

    fn kind(&self) -> EncoderKind {
        EncoderKind::UnifCode
    }

    fn encode(&self, text: &str) -> Result<Encoding, EncodeError> {
        let tokens = self.tokenizer.tokenize(text).tokens();
        match encode_unif_code(&tokens, &self.params) {
            Ok(vector) => Ok(Encoding { vector, empty: false }),
            Err(EncodeError::EmptyInput) => Ok(Encoding { vector: vec![0.0; self.dim()], empty: true }),
            Err(e) => Err(e),
        }
    }
}

/// Vectors computed elsewhere, keyed by the exact input string.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalEncoder {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl ExternalEncoder {
    pub fn new(dim: usize, vectors: HashMap<String, Vec<f64>>) -> Self {
        assert!(vectors.values().all(|v| v.len() == dim), "vector dimension mismatch");
        Self { dim, vectors }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, text: &str) -> Option<&[f64]> {
        self.vectors.get(text).map(Vec::as_slice)
    }
}

/// Loads externally computed sentence embeddings from the embedding text
/// format. Keys are the exact input strings and may contain spaces.
pub fn import_external_embeddings(path: impl AsRef<Path>) -> Result<ExternalEncoder, EncodeError> {
    let path = path.as_ref();
    let sections = read_sections(path)?;
    let [section] = <[_; 1]>::try_from(sections).map_err(|s| EmbedError::Format {
        path: path.display().to_string(),
        line: 1,
        message: format!("expected one section, found {}", s.len()),
    })?;
    let mut vectors = HashMap::with_capacity(section.rows.len());
    for (i, (key, v)) in section.rows.into_iter().enumerate() {
        if vectors.insert(key.clone(), v).is_some() {
            return Err(EmbedError::Format {
                path: path.display().to_string(),
                line: section.line + i + 1,
                message: format!("duplicate key {key:?}"),
            }
            .into());
        }
    }
    Ok(ExternalEncoder { dim: section.dim, vectors })
}

impl Encoder for ExternalEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn kind(&self) -> EncoderKind {
        EncoderKind::External
    }

    fn encode(&self, text: &str) -> Result<Encoding, EncodeError> {
        match self.vectors.get(text) {
            Some(v) => Ok(Encoding { vector: v.clone(), empty: false }),
            None => Err(EncodeError::MissingKey(text.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::NgramConfig;
    use std::collections::BTreeMap;

    fn no_ngrams() -> NgramConfig {
        NgramConfig { min_n: 3, max_n: 6, bucket_count: 0 }
    }

    pub(crate) fn toy_table(rows: &[(&str, &[f64])]) -> EmbeddingTable {
        let dim = rows[0].1.len();
        EmbeddingTable::from_composed(
            dim,
            no_ngrams(),
            rows.iter().map(|(w, v)| (w.to_string(), v.to_vec())).collect(),
            BTreeMap::new(),
        )
    }

    #[test]
    fn nbow_hand_arithmetic() {
        let t = toy_table(&[("a", &[1.0, 0.0]), ("b", &[0.0, 2.0])]);
        assert_eq!(encode_nbow(&["a", "b", "b"], &t).vector, vec![1.0, 4.0]);
        assert_eq!(encode_nbow(&["b", "a", "b"], &t).vector, vec![1.0, 4.0]);
        assert_eq!(encode_nbow(&["a"], &t).vector, t.lookup("a").vector);
        let e = encode_nbow::<&str>(&[], &t);
        assert!(e.empty);
        assert_eq!(e.vector, vec![0.0, 0.0]);
    }

    #[test]
    fn ncs_query_hand_arithmetic() {
        let t = toy_table(&[("x", &[2.0, 0.0]), ("y", &[0.0, 1.0])]);
        assert_eq!(encode_ncs_query(&["x", "y"], &t).vector, vec![2.0, 1.0]);
        assert_eq!(encode_ncs_query(&["y"], &t).vector, vec![0.0, 1.0]);
        assert!(encode_ncs_query::<&str>(&[], &t).empty);
    }

    #[test]
    fn ncs_code_idf_weighting() {
        let t = toy_table(&[("t", &[1.0, 1.0])]);
        assert_eq!(encode_weighted(&["t"], &t, |_| 2.0).vector, vec![2.0, 2.0]);
        let docs: Vec<Vec<&str>> = vec![vec!["u"], vec!["u"], vec!["u"]];
        let idf = IdfTable::from_documents(docs.iter().map(|d| d.iter().copied()));
        let w = idf.idf("t");
        let single = encode_ncs_code(&["t"], &t, &idf).vector;
        assert_eq!(single, vec![w, w]);
        let double = encode_ncs_code(&["t", "t"], &t, &idf).vector;
        assert_eq!(double, vec![2.0 * w, 2.0 * w]);
        assert!(encode_ncs_code::<&str>(&[], &t, &idf).empty);
    }

    #[test]
    fn text_encoders_tokenize() {
        let t = Arc::new(toy_table(&[("plot", &[1.0, 0.0]), ("plotting", &[0.0, 1.0]), ("histogram", &[0.0, 3.0])]));
        let nbow = NbowEncoder::new(t.clone());
        // Lemmatized: "plotting" becomes "plot".
        assert_eq!(nbow.encode("Plotting the histogram").unwrap().vector, vec![1.0, 3.0]);
        let ncs = NcsQueryEncoder::new(t.clone());
        assert_eq!(ncs.encode("Plotting the histogram").unwrap().vector, vec![0.0, 4.0]);
        assert!(ncs.encode("the of a").unwrap().empty);
        assert_eq!(nbow.kind(), EncoderKind::Nbow);
        assert_eq!(ncs.dim(), 2);
    }

    #[test]
    fn code_encoder_uses_lexer_tokens() {
        let t = Arc::new(toy_table(&[("plt", &[1.0, 0.0]), ("hist", &[0.0, 1.0])]));
        let idf = Arc::new(IdfTable { doc_count: 0, df: HashMap::new() });
        let enc = NcsCodeEncoder::new(t, idf);
        assert_eq!(enc.encode("plt.hist(x)").unwrap().vector, vec![1.0, 1.0]);
        assert!(enc.encode("'just a string'").unwrap().empty);
    }

    #[test]
    fn external_embeddings() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ext.vec");
        std::fs::write(&path, "2 3\nhow to plot 1 2 3\nsort a list by 2 values 0.5 0 -1\n").unwrap();
        let enc = import_external_embeddings(&path).unwrap();
        assert_eq!(enc.dim(), 3);
        assert_eq!(enc.encode("how to plot").unwrap().vector, vec![1.0, 2.0, 3.0]);
        assert_eq!(enc.encode("sort a list by 2 values").unwrap().vector, vec![0.5, 0.0, -1.0]);
        match enc.encode("unknown") {
            Err(EncodeError::MissingKey(k)) => assert_eq!(k, "unknown"),
            other => panic!("unexpected {other:?}"),
        }
        std::fs::write(&path, "2 3\na 1 2 3\nb 1 2\n").unwrap();
        assert!(matches!(import_external_embeddings(&path), Err(EncodeError::Embed(EmbedError::Format { line: 3, .. }))));
    }
}
