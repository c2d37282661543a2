//! Query execution over a loaded index. The CLI `search` command and the
//! HTTP endpoint both go through [`SearchService::search`].

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use codesearch::corpus::SnippetCollection;
use codesearch::index::{EnsembleSpec, IndexError, SnippetIndex};
use codesearch::pipeline::EnsembleModel;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::{manifest_path, IndexManifest, ManifestError};

pub const DEFAULT_K: usize = 10;
pub const MAX_K: usize = 100;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("k must be between 1 and {MAX_K}, got {0}")]
    BadK(usize),
    #[error("search failed: {0}")]
    Search(#[source] IndexError),
    #[error("index result {0:?} is not in the snippet collection")]
    UnknownId(String),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("loading index: {0}")]
    Index(#[source] IndexError),
}

impl ServiceError {
    /// Errors caused by the request rather than the service.
    pub fn is_client_error(&self) -> bool {
        matches!(self, Self::EmptyQuery | Self::BadK(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub rank: usize,
    pub id: String,
    pub description: String,
    pub code: String,
    pub url: Option<String>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub query: String,
    pub results: Vec<SearchResult>,
}

impl SearchResponse {
    /// Plain-text table: rank, score, id and description.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:>4}  {:>8}  {:<12}  description", "rank", "score", "id");
        for r in &self.results {
            let _ = writeln!(out, "{:>4}  {:>8.4}  {:<12}  {}", r.rank, r.score, r.id, r.description);
        }
        if self.results.is_empty() {
            let _ = writeln!(out, "(no results)");
        }
        out
    }
}

/// An immutable index, its query encoders and the snippets it points to.
pub struct SearchService {
    collection: SnippetCollection,
    model: EnsembleModel,
    positions: HashMap<String, usize>,
}

impl SearchService {
    pub fn new(collection: SnippetCollection, spec: EnsembleSpec, index: SnippetIndex) -> Result<Self, ServiceError> {
        let positions: HashMap<String, usize> =
            collection.snippets().iter().enumerate().map(|(i, s)| (s.id.clone(), i)).collect();
        if let Some(id) = index.ids().iter().find(|id| !positions.contains_key(id.as_str())) {
            return Err(ServiceError::UnknownId(id.clone()));
        }
        Ok(Self { collection, model: EnsembleModel { spec, index }, positions })
    }

    /// Loads an index file together with its manifest.
    pub fn open(index_path: &Path) -> Result<Self, ServiceError> {
        let manifest = IndexManifest::load(&manifest_path(index_path))?;
        let index = SnippetIndex::load(index_path).map_err(ServiceError::Index)?;
        Self::new(manifest.load_collection()?, manifest.load_spec()?, index)
    }

    pub fn collection(&self) -> &SnippetCollection {
        &self.collection
    }

    pub fn model(&self) -> &EnsembleModel {
        &self.model
    }

    pub fn search(&self, query: &str, k: usize) -> Result<SearchResponse, ServiceError> {
        if query.trim().is_empty() {
            return Err(ServiceError::EmptyQuery);
        }
        if k == 0 || k > MAX_K {
            return Err(ServiceError::BadK(k));
        }
        let outcome = self.model.index.search(&self.model.spec, query, k).map_err(ServiceError::Search)?;
        let results = outcome
            .hits
            .into_iter()
            .enumerate()
            .map(|(i, hit)| {
                let s = &self.collection.snippets()[self.positions[&hit.id]];
                SearchResult {
                    rank: i + 1,
                    id: hit.id,
                    description: s.description.clone(),
                    code: s.code.clone(),
                    url: s.url.clone(),
                    score: hit.score,
                }
            })
            .collect();
        Ok(SearchResponse { query: query.to_string(), results })
    }
}
