//! End-to-end model assembly over a snippet collection: training the
//! description and multimodal embeddings, building encoders and search
//! functions for the benchmark runner.

use std::sync::Arc;

use thiserror::Error;

use crate::bench::{BoxError, SearchFn};
use crate::corpus::{tokenize_natural, CodeTokenizer, NlTokenConfig, PythonLexer, SnippetCollection};
use crate::embed::{build_training_corpus, compute_idf_with, train_embeddings, EmbedError, EmbeddingTable, IdfTable, TrainSpec};
use crate::encoders::{NbowEncoder, NcsCodeEncoder, NcsQueryEncoder};
use crate::index::{build_index, EnsembleSpec, Half, IndexError, SnippetIndex};
use crate::lexical::Bm25Searcher;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

/// Lemmatized description token lines for description embeddings.
pub fn description_lines(texts: impl IntoIterator<Item = impl AsRef<str>>) -> Vec<Vec<String>> {
    let config = NlTokenConfig::default();
    texts
        .into_iter()
        .map(|t| tokenize_natural(t.as_ref(), &config))
        .filter(|l| !l.is_empty())
        .collect()
}

/// Trains description embeddings on the collection's descriptions plus
/// any extra titles.
pub fn train_nbow<S: AsRef<str>>(
    collection: &SnippetCollection,
    extra_titles: &[S],
    spec: &TrainSpec,
) -> Result<EmbeddingTable, EmbedError> {
    let texts = collection
        .snippets()
        .iter()
        .map(|s| s.description.as_str())
        .chain(extra_titles.iter().map(AsRef::as_ref));
    train_embeddings(&description_lines(texts), spec)
}

/// (description tokens, code tokens) per snippet. Descriptions use the
/// query-side preprocessing of the multimodal model: stopwords removed,
/// no lemmatization.
pub fn multimodal_pairs(
    collection: &SnippetCollection,
    tokenizer: &dyn CodeTokenizer,
) -> Vec<(Vec<String>, Vec<String>)> {
    let config = NlTokenConfig::without_lemmas();
    collection
        .snippets()
        .iter()
        .map(|s| (tokenize_natural(&s.description, &config), tokenizer.tokenize(&s.code).tokens()))
        .collect()
}

/// Trains multimodal embeddings on the collection's own pairs and
/// computes code-token idf.
pub fn train_ncs(
    collection: &SnippetCollection,
    spec: &TrainSpec,
    augment: bool,
) -> Result<(EmbeddingTable, IdfTable), EmbedError> {
    let pairs = multimodal_pairs(collection, &PythonLexer);
    let corpus = build_training_corpus(&pairs, augment);
    if corpus.skipped > 0 {
        log::info!("skipped {} pairs with empty description or code tokens", corpus.skipped);
    }
    let table = train_embeddings(&corpus.lines, spec)?;
    let idf = compute_idf_with(collection, &PythonLexer)?;
    Ok((table, idf))
}

pub fn nbow_half(table: Arc<EmbeddingTable>) -> Half {
    Half::shared(Arc::new(NbowEncoder::new(table)))
}

pub fn ncs_half(table: Arc<EmbeddingTable>, idf: Arc<IdfTable>) -> Half {
    Half::new(Arc::new(NcsCodeEncoder::new(table.clone(), idf)), Arc::new(NcsQueryEncoder::new(table)))
}

/// An index plus the spec whose query encoders it is searched with.
#[derive(Clone)]
pub struct EnsembleModel {
    pub spec: EnsembleSpec,
    pub index: SnippetIndex,
}

impl EnsembleModel {
    pub fn build(collection: &SnippetCollection, spec: EnsembleSpec) -> Result<Self, IndexError> {
        let report = build_index(collection, &spec)?;
        Ok(Self { spec, index: report.index })
    }

    pub fn search_ids(&self, query: &str, k: usize) -> Result<Vec<String>, BoxError> {
        Ok(self.index.search(&self.spec, query, k)?.hits.into_iter().map(|h| h.id).collect())
    }

    pub fn search_fn(&self) -> Box<SearchFn<'_>> {
        Box::new(move |q, k| self.search_ids(q, k))
    }
}

pub fn bm25_search_fn(searcher: &Bm25Searcher) -> Box<SearchFn<'_>> {
    Box::new(move |q, k| Ok(searcher.search(q, k).into_iter().map(|(id, _)| id).collect()))
}
