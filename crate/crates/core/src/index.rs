//! Ensemble snippet index: per-snippet concatenations of λ-scaled unit
//! description and code vectors, searched by exact cosine kNN.
//!
//! With unit query halves `q_d`, `q_c` and snippet rows
//! `[λ1·d/|d|, λ2·c/|c|]`, the dot product is `λ1·cos(d, q_d) + λ2·cos(c, q_c)`,
//! so a single cosine search ranks by the weighted sum of per-model
//! cosines.

use std::cmp::Ordering;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::corpus::SnippetCollection;
use crate::encoders::{EncodeError, Encoder};
use crate::vector::{dot, norm, normalized};

const MAGIC: &[u8; 4] = b"ACSI";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("invalid ensemble spec: {0}")]
    InvalidSpec(String),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("every snippet encoded to a zero vector")]
    EmptyIndex,
    #[error("encoding snippet {id:?}: {source}")]
    EncodeSnippet {
        id: String,
        #[source]
        source: EncodeError,
    },
    #[error("encoding query: {0}")]
    EncodeQuery(#[source] EncodeError),
    #[error("query has {got} dims on the {half} half, index expects {want}")]
    QueryDim { half: &'static str, got: usize, want: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: not a valid index file: {message}")]
    Format { path: String, message: String },
}

/// One side of the ensemble: how snippets and queries are encoded.
#[derive(Clone)]
pub struct Half {
    /// Encodes the snippet field (description or code).
    pub snippet: Arc<dyn Encoder>,
    /// Encodes the query into the same space.
    pub query: Arc<dyn Encoder>,
}

impl Half {
    pub fn new(snippet: Arc<dyn Encoder>, query: Arc<dyn Encoder>) -> Self {
        Self { snippet, query }
    }

    /// A half where snippets and queries share one encoder.
    pub fn shared(encoder: Arc<dyn Encoder>) -> Self {
        Self { snippet: encoder.clone(), query: encoder }
    }
}

/// Weights and encoders of the two halves. A missing half has zero width.
#[derive(Clone)]
pub struct EnsembleSpec {
    pub lambda_desc: f64,
    pub lambda_code: f64,
    pub desc: Option<Half>,
    pub code: Option<Half>,
}

impl EnsembleSpec {
    pub fn description_only(half: Half) -> Self {
        Self { lambda_desc: 1.0, lambda_code: 0.0, desc: Some(half), code: None }
    }

    pub fn code_only(half: Half) -> Self {
        Self { lambda_desc: 0.0, lambda_code: 1.0, desc: None, code: Some(half) }
    }

    pub fn dims(&self) -> (usize, usize) {
        (
            self.desc.as_ref().map_or(0, |h| h.snippet.dim()),
            self.code.as_ref().map_or(0, |h| h.snippet.dim()),
        )
    }

    fn validate(&self) -> Result<(), IndexError> {
        let bad = |m: &str| Err(IndexError::InvalidSpec(m.to_string()));
        if !(self.lambda_desc >= 0.0 && self.lambda_code >= 0.0) || !self.lambda_desc.is_finite() || !self.lambda_code.is_finite() {
            return bad("lambdas must be finite and non-negative");
        }
        if self.lambda_desc == 0.0 && self.lambda_code == 0.0 {
            return bad("lambdas must not both be zero");
        }
        if self.lambda_desc > 0.0 && self.desc.is_none() {
            return bad("lambda_desc > 0 needs a description encoder");
        }
        if self.lambda_code > 0.0 && self.code.is_none() {
            return bad("lambda_code > 0 needs a code encoder");
        }
        for (name, half) in [("description", &self.desc), ("code", &self.code)] {
            if let Some(h) = half {
                if h.snippet.dim() != h.query.dim() {
                    return Err(IndexError::InvalidSpec(format!(
                        "{name} half: snippet encoder dim {} differs from query encoder dim {}",
                        h.snippet.dim(),
                        h.query.dim()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Immutable matrix of ensemble vectors, one row per indexed snippet.
#[derive(Debug, Clone, PartialEq)]
pub struct SnippetIndex {
    ids: Vec<String>,
    desc_dim: usize,
    code_dim: usize,
    lambda_desc: f64,
    lambda_code: f64,
    vectors: Vec<f64>,
    norms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchHit {
    pub id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub hits: Vec<SearchHit>,
    /// Both query halves encoded to zero; `hits` is empty.
    pub empty_query: bool,
}

/// Result of building an index, with the snippets that lost a half or
/// were dropped entirely.
#[derive(Debug, Clone)]
pub struct BuildReport {
    pub index: SnippetIndex,
    /// Snippets whose every half encoded to zero; not indexed.
    pub excluded: Vec<String>,
    pub zero_desc: Vec<String>,
    pub zero_code: Vec<String>,
}

fn encode_half(half: Option<&Half>, text: &str, query: bool) -> Result<Option<Vec<f64>>, EncodeError> {
    let Some(h) = half else { return Ok(None) };
    let enc = if query { &h.query } else { &h.snippet };
    Ok(Some(enc.encode(text)?.vector))
}

pub fn build_index(collection: &SnippetCollection, spec: &EnsembleSpec) -> Result<BuildReport, IndexError> {
    spec.validate()?;
    let (desc_dim, code_dim) = spec.dims();
    let width = desc_dim + code_dim;
    let mut ids = Vec::with_capacity(collection.len());
    let mut vectors = Vec::with_capacity(collection.len() * width);
    let mut norms = Vec::with_capacity(collection.len());
    let mut report = (Vec::new(), Vec::new(), Vec::new());
    for s in collection.snippets() {
        let wrap = |source| IndexError::EncodeSnippet { id: s.id.clone(), source };
        let d = encode_half(spec.desc.as_ref(), &s.description, false).map_err(wrap)?;
        let c = encode_half(spec.code.as_ref(), &s.code, false).map_err(wrap)?;
        let mut row = Vec::with_capacity(width);
        for (v, lambda, dim, zeros) in [
            (d, spec.lambda_desc, desc_dim, &mut report.1),
            (c, spec.lambda_code, code_dim, &mut report.2),
        ] {
            match v.as_deref().and_then(normalized) {
                Some(u) => row.extend(u.into_iter().map(|x| lambda * x)),
                None => {
                    if v.is_some() {
                        zeros.push(s.id.clone());
                    }
                    row.extend(std::iter::repeat_n(0.0, dim));
                }
            }
        }
        let n = norm(&row);
        if n == 0.0 {
            report.0.push(s.id.clone());
            continue;
        }
        ids.push(s.id.clone());
        vectors.extend(row);
        norms.push(n);
    }
    if ids.is_empty() {
        return Err(IndexError::EmptyIndex);
    }
    if !report.0.is_empty() {
        log::warn!("{} snippets encoded to zero vectors and were not indexed", report.0.len());
    }
    let index = SnippetIndex {
        ids,
        desc_dim,
        code_dim,
        lambda_desc: spec.lambda_desc,
        lambda_code: spec.lambda_code,
        vectors,
        norms,
    };
    Ok(BuildReport { index, excluded: report.0, zero_desc: report.1, zero_code: report.2 })
}

fn rank_order(a: &(usize, f64), b: &(usize, f64), ids: &[String]) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| ids[a.0].cmp(&ids[b.0]))
}

impl SnippetIndex {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.desc_dim, self.code_dim)
    }

    pub fn lambdas(&self) -> (f64, f64) {
        (self.lambda_desc, self.lambda_code)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.desc_dim + self.code_dim;
        &self.vectors[i * w..(i + 1) * w]
    }

    /// Encodes `query` with the spec's query encoders and searches.
    pub fn search(&self, spec: &EnsembleSpec, query: &str, k: usize) -> Result<SearchOutcome, IndexError> {
        let d = encode_half(spec.desc.as_ref(), query, true).map_err(IndexError::EncodeQuery)?;
        let c = encode_half(spec.code.as_ref(), query, true).map_err(IndexError::EncodeQuery)?;
        self.search_vectors(d.as_deref(), c.as_deref(), k)
    }

    /// Searches with raw query halves; each is normalized to unit length
    /// and a missing or zero half contributes nothing.
    pub fn search_vectors(
        &self,
        desc: Option<&[f64]>,
        code: Option<&[f64]>,
        k: usize,
    ) -> Result<SearchOutcome, IndexError> {
        if k == 0 {
            return Err(IndexError::ZeroK);
        }
        let mut q = Vec::with_capacity(self.desc_dim + self.code_dim);
        for (half, v, dim) in [("description", desc, self.desc_dim), ("code", code, self.code_dim)] {
            if let Some(v) = v {
                if v.len() != dim {
                    return Err(IndexError::QueryDim { half, got: v.len(), want: dim });
                }
            }
            match v.and_then(normalized) {
                Some(u) => q.extend(u),
                None => q.extend(std::iter::repeat_n(0.0, dim)),
            }
        }
        let qn = norm(&q);
        if qn == 0.0 {
            return Ok(SearchOutcome { hits: Vec::new(), empty_query: true });
        }
        let mut scored: Vec<(usize, f64)> =
            (0..self.len()).map(|i| (i, dot(self.row(i), &q) / (self.norms[i] * qn))).collect();
        let k = k.min(scored.len());
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, |a, b| rank_order(a, b, &self.ids));
            scored.truncate(k);
        }
        scored.sort_by(|a, b| rank_order(a, b, &self.ids));
        let hits = scored.into_iter().map(|(i, score)| SearchHit { id: self.ids[i].clone(), score }).collect();
        Ok(SearchOutcome { hits, empty_query: false })
    }

    /// Writes the binary container: magic, version, dims, lambdas, row
    /// count, f32 matrix and length-prefixed UTF-8 ids, little-endian.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IndexError> {
        let path = path.as_ref();
        let io_err = |source| IndexError::Io { path: path.display().to_string(), source };
        let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
        self.write_to(&mut w).map_err(io_err)?;
        w.flush().map_err(io_err)
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.desc_dim as u32).to_le_bytes())?;
        w.write_all(&(self.code_dim as u32).to_le_bytes())?;
        w.write_all(&self.lambda_desc.to_le_bytes())?;
        w.write_all(&self.lambda_code.to_le_bytes())?;
        w.write_all(&(self.ids.len() as u64).to_le_bytes())?;
        for &x in &self.vectors {
            w.write_all(&(x as f32).to_le_bytes())?;
        }
        for id in &self.ids {
            w.write_all(&(id.len() as u32).to_le_bytes())?;
            w.write_all(id.as_bytes())?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IndexError> {
        let path = path.as_ref();
        let p = path.display().to_string();
        let file = File::open(path).map_err(|source| IndexError::Io { path: p.clone(), source })?;
        Self::read_from(&mut BufReader::new(file)).map_err(|e| match e.kind() {
            std::io::ErrorKind::InvalidData | std::io::ErrorKind::UnexpectedEof => {
                IndexError::Format { path: p.clone(), message: e.to_string() }
            }
            _ => IndexError::Io { path: p.clone(), source: e },
        })
    }

    pub fn read_from(r: &mut impl Read) -> std::io::Result<Self> {
        use std::io::{Error, ErrorKind};
        let invalid = |m: String| Error::new(ErrorKind::InvalidData, m);
        fn take<const N: usize>(r: &mut impl Read) -> std::io::Result<[u8; N]> {
            let mut buf = [0u8; N];
            r.read_exact(&mut buf)?;
            Ok(buf)
        }
        if &take::<4>(r)? != MAGIC {
            return Err(invalid("bad magic bytes".into()));
        }
        let version = u16::from_le_bytes(take(r)?);
        if version != FORMAT_VERSION {
            return Err(invalid(format!("unsupported format version {version}")));
        }
        let desc_dim = u32::from_le_bytes(take(r)?) as usize;
        let code_dim = u32::from_le_bytes(take(r)?) as usize;
        let lambda_desc = f64::from_le_bytes(take(r)?);
        let lambda_code = f64::from_le_bytes(take(r)?);
        let rows = usize::try_from(u64::from_le_bytes(take(r)?)).map_err(|_| invalid("row count overflows".into()))?;
        let width = desc_dim + code_dim;
        let cells = rows.checked_mul(width).ok_or_else(|| invalid("matrix size overflows".into()))?;
        let mut vectors = Vec::with_capacity(cells.min(1 << 24));
        for _ in 0..cells {
            vectors.push(f64::from(f32::from_le_bytes(take(r)?)));
        }
        let mut ids = Vec::with_capacity(rows.min(1 << 20));
        for _ in 0..rows {
            let len = u32::from_le_bytes(take(r)?) as usize;
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf)?;
            ids.push(String::from_utf8(buf).map_err(|_| invalid("id is not UTF-8".into()))?);
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(invalid("trailing bytes after id table".into()));
        }
        let norms: Vec<f64> = vectors.chunks(width.max(1)).map(norm).collect();
        if width == 0 || norms.iter().any(|&n| n == 0.0 || !n.is_finite()) {
            return Err(invalid("index holds an empty or non-finite row".into()));
        }
        Ok(Self { ids, desc_dim, code_dim, lambda_desc, lambda_code, vectors, norms })
    }
}
