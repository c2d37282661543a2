//! Okapi BM25 over code tokens or description tokens.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{stem, tokenize_natural, CodeTokenizer, NlTokenConfig, PythonLexer, SnippetCollection};

#[derive(Debug, Error, PartialEq)]
pub enum LexicalError {
    #[error("cannot index an empty document list")]
    NoDocuments,
    #[error("every document is empty")]
    AllEmpty,
    #[error("invalid bm25 parameters: {0}")]
    InvalidParams(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
    /// Idf values below `epsilon * mean positive idf` are raised to it.
    pub epsilon: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.5, b: 0.75, epsilon: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bm25Index {
    params: Bm25Params,
    /// token → (document index, term frequency), sorted by document.
    postings: HashMap<String, Vec<(u32, u32)>>,
    idf: HashMap<String, f64>,
    doc_lengths: Vec<u32>,
    avg_len: f64,
}

pub fn build_bm25_index<D, S>(docs: &[D], params: Bm25Params) -> Result<Bm25Index, LexicalError>
where
    D: AsRef<[S]>,
    S: AsRef<str>,
{
    if docs.is_empty() {
        return Err(LexicalError::NoDocuments);
    }
    if !(params.k1 >= 0.0) || !(0.0..=1.0).contains(&params.b) || !(params.epsilon >= 0.0) {
        return Err(LexicalError::InvalidParams("need k1 >= 0, 0 <= b <= 1, epsilon >= 0"));
    }
    let mut postings: HashMap<String, Vec<(u32, u32)>> = HashMap::new();
    let mut doc_lengths = Vec::with_capacity(docs.len());
    for (i, doc) in docs.iter().enumerate() {
        let doc = doc.as_ref();
        doc_lengths.push(doc.len() as u32);
        let mut tf: HashMap<&str, u32> = HashMap::new();
        for t in doc {
            *tf.entry(t.as_ref()).or_default() += 1;
        }
        for (t, f) in tf {
            postings.entry(t.to_string()).or_default().push((i as u32, f));
        }
    }
    let total: u64 = doc_lengths.iter().map(|&l| u64::from(l)).sum();
    if total == 0 {
        return Err(LexicalError::AllEmpty);
    }
    let n = docs.len() as f64;
    let mut idf: HashMap<String, f64> = postings
        .iter()
        .map(|(t, p)| {
            let df = p.len() as f64;
            (t.clone(), ((n - df + 0.5) / (df + 0.5) + 1.0).ln())
        })
        .collect();
    // Summed in sorted order so the floor does not depend on hash order.
    let mut positive: Vec<f64> = idf.values().copied().filter(|&v| v > 0.0).collect();
    positive.sort_by(f64::total_cmp);
    if !positive.is_empty() {
        let floor = params.epsilon * positive.iter().sum::<f64>() / positive.len() as f64;
        for v in idf.values_mut() {
            if *v < floor {
                *v = floor;
            }
        }
    }
    Ok(Bm25Index { params, postings, idf, doc_lengths, avg_len: total as f64 / n })
}

impl Bm25Index {
    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn len(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_lengths.is_empty()
    }

    pub fn avg_len(&self) -> f64 {
        self.avg_len
    }

    /// Floored idf of an indexed token; unindexed tokens have none.
    pub fn idf(&self, token: &str) -> Option<f64> {
        self.idf.get(token).copied()
    }

    /// One score per document. Repeated query tokens count repeatedly.
    pub fn scores<S: AsRef<str>>(&self, query: &[S]) -> Vec<f64> {
        let mut scores = vec![0.0; self.len()];
        let Bm25Params { k1, b, .. } = self.params;
        for t in query {
            let t = t.as_ref();
            let (Some(postings), Some(&idf)) = (self.postings.get(t), self.idf.get(t)) else { continue };
            for &(d, tf) in postings {
                let tf = f64::from(tf);
                let len = f64::from(self.doc_lengths[d as usize]);
                scores[d as usize] += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len / self.avg_len));
            }
        }
        scores
    }

    /// Documents with a positive score, by score descending then index
    /// ascending, truncated to `k`.
    pub fn rank<S: AsRef<str>>(&self, query: &[S], k: usize) -> Vec<(usize, f64)> {
        let mut hits: Vec<(usize, f64)> =
            self.scores(query).into_iter().enumerate().filter(|&(_, s)| s > 0.0).collect();
        hits.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        hits.truncate(k);
        hits
    }
}

/// Which side of the snippets a BM25 searcher indexes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bm25Field {
    Code,
    Description,
}

/// Lemmatized code tokens.
pub fn bm25_code_tokens(code: &str, tokenizer: &dyn CodeTokenizer) -> Vec<String> {
    tokenizer.tokenize(code).tokens().iter().map(|t| stem::lemma(t)).collect()
}

/// A BM25 index over one field of a snippet collection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bm25Searcher {
    pub field: Bm25Field,
    ids: Vec<String>,
    index: Bm25Index,
}

impl Bm25Searcher {
    pub fn build(collection: &SnippetCollection, field: Bm25Field, params: Bm25Params) -> Result<Self, LexicalError> {
        let config = NlTokenConfig::default();
        let docs: Vec<Vec<String>> = collection
            .snippets()
            .iter()
            .map(|s| match field {
                Bm25Field::Code => bm25_code_tokens(&s.code, &PythonLexer),
                Bm25Field::Description => tokenize_natural(&s.description, &config),
            })
            .collect();
        let index = build_bm25_index(&docs, params)?;
        Ok(Self { field, ids: collection.snippets().iter().map(|s| s.id.clone()).collect(), index })
    }

    pub fn index(&self) -> &Bm25Index {
        &self.index
    }

    /// Top-`k` snippet ids and scores. Queries are tokenized with
    /// lemmatization on both fields.
    pub fn search(&self, query: &str, k: usize) -> Vec<(String, f64)> {
        let tokens = tokenize_natural(query, &NlTokenConfig::default());
        self.index.rank(&tokens, k).into_iter().map(|(d, s)| (self.ids[d].clone(), s)).collect()
    }
}
