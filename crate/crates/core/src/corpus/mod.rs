//! Annotated snippets and the text/code preprocessing shared by every model.

mod lexer;
pub mod stem;

use std::collections::{BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lexer::{split_identifier, tokenize_code, CodeTokenizer, CodeTokens, PythonLexer};

const STOPWORDS: &str = include_str!("../../data/stopwords.txt");

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: invalid snippet {id:?}: {reason}")]
    Invalid { line: usize, id: String, reason: &'static str },
    #[error("duplicate snippet id {0:?}")]
    DuplicateId(String),
}

/// One (description, code) pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedSnippet {
    pub id: String,
    pub description: String,
    pub code: String,
    #[serde(default)]
    pub url: Option<String>,
    #[serde(default)]
    pub tags: Vec<String>,
}

impl AnnotatedSnippet {
    fn check(&self) -> Result<(), &'static str> {
        if self.description.trim().is_empty() {
            return Err("empty description");
        }
        if self.code.is_empty() {
            return Err("empty code");
        }
        Ok(())
    }
}

/// An ordered collection of snippets with unique ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SnippetCollection {
    pub name: String,
    snippets: Vec<AnnotatedSnippet>,
}

impl SnippetCollection {
    /// Builds a collection, rejecting duplicate ids and invalid snippets.
    pub fn new(
        name: impl Into<String>,
        snippets: Vec<AnnotatedSnippet>,
    ) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for (i, s) in snippets.iter().enumerate() {
            s.check().map_err(|reason| CorpusError::Invalid {
                line: i + 1,
                id: s.id.clone(),
                reason,
            })?;
            if !seen.insert(s.id.as_str()) {
                return Err(CorpusError::DuplicateId(s.id.clone()));
            }
        }
        Ok(Self { name: name.into(), snippets })
    }

    pub fn snippets(&self) -> &[AnnotatedSnippet] {
        &self.snippets
    }

    pub fn len(&self) -> usize {
        self.snippets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snippets.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&AnnotatedSnippet> {
        self.snippets.iter().find(|s| s.id == id)
    }

    pub fn ids(&self) -> HashSet<&str> {
        self.snippets.iter().map(|s| s.id.as_str()).collect()
    }

    pub fn into_snippets(self) -> Vec<AnnotatedSnippet> {
        self.snippets
    }

    /// Writes the collection in the one-record-per-line format.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let path = path.as_ref();
        let io_err = |source| CorpusError::Io { path: path.display().to_string(), source };
        let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
        for s in &self.snippets {
            let line = serde_json::to_string(s).expect("snippet serializes");
            writeln!(w, "{line}").map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }
}

/// Reads a snippet file: one JSON object per line.
pub fn load_collection(path: impl AsRef<Path>) -> Result<SnippetCollection, CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io { path: path.display().to_string(), source };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut snippets = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let snippet: AnnotatedSnippet = serde_json::from_str(&line)
            .map_err(|e| CorpusError::Malformed { line: i + 1, message: e.to_string() })?;
        snippet.check().map_err(|reason| CorpusError::Invalid {
            line: i + 1,
            id: snippet.id.clone(),
            reason,
        })?;
        if !seen.insert(snippet.id.clone()) {
            return Err(CorpusError::DuplicateId(snippet.id));
        }
        snippets.push(snippet);
    }
    if snippets.is_empty() {
        log::warn!("snippet file {} is empty", path.display());
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(SnippetCollection { name, snippets })
}

/// The bundled English stopword list.
pub fn default_stopwords() -> Arc<BTreeSet<String>> {
    static WORDS: OnceLock<Arc<BTreeSet<String>>> = OnceLock::new();
    WORDS
        .get_or_init(|| {
            Arc::new(
                STOPWORDS
                    .lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .map(String::from)
                    .collect(),
            )
        })
        .clone()
}

/// Natural-language preprocessing options.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NlTokenConfig {
    pub lowercase: bool,
    pub lemmatize: bool,
    pub stopwords: Arc<BTreeSet<String>>,
}

impl Default for NlTokenConfig {
    fn default() -> Self {
        Self { lowercase: true, lemmatize: true, stopwords: default_stopwords() }
    }
}

impl NlTokenConfig {
    /// Tokenize and drop stopwords, without lemmatization.
    pub fn without_lemmas() -> Self {
        Self { lemmatize: false, ..Self::default() }
    }

    fn is_stopword(&self, token: &str) -> bool {
        if self.lowercase {
            self.stopwords.contains(token)
        } else {
            self.stopwords.contains(&token.to_lowercase())
        }
    }
}

/// Splits on non-alphanumeric characters, lowercases, drops stopwords and
/// replaces each token by its stem. Duplicates are kept.
pub fn tokenize_natural(text: &str, config: &NlTokenConfig) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .filter_map(|t| {
            let t = if config.lowercase { t.to_lowercase() } else { t.to_string() };
            if config.is_stopword(&t) {
                return None;
            }
            if !config.lemmatize {
                return Some(t);
            }
            let l = stem::lemma(&t);
            (!config.is_stopword(&l)).then_some(l)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OverlapStats {
    /// Number of unique words shared by query and description.
    pub absolute: usize,
    /// `absolute / query_unique`.
    pub relative: f64,
    pub query_unique: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Overlap {
    Defined(OverlapStats),
    /// The query has no tokens left after preprocessing.
    EmptyQuery,
}

impl Overlap {
    pub fn stats(self) -> Option<OverlapStats> {
        match self {
            Overlap::Defined(s) => Some(s),
            Overlap::EmptyQuery => None,
        }
    }
}

/// Word overlap between a query and a description, normalized by the
/// number of unique query words.
pub fn word_overlap(query: &str, description: &str, config: &NlTokenConfig) -> Overlap {
    let q: HashSet<String> = tokenize_natural(query, config).into_iter().collect();
    if q.is_empty() {
        return Overlap::EmptyQuery;
    }
    let d: HashSet<String> = tokenize_natural(description, config).into_iter().collect();
    let absolute = q.intersection(&d).count();
    Overlap::Defined(OverlapStats {
        absolute,
        relative: absolute as f64 / q.len() as f64,
        query_unique: q.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn record(id: &str) -> String {
        serde_json::json!({
            "id": id, "description": "Plot a histogram", "code": "plt.hist(x)\nplt.show()",
            "url": null, "tags": ["matplotlib"]
        })
        .to_string()
    }

    #[test]
    fn loads_three_lines_in_order() {
        let f = write_tmp(&format!("{}\n{}\n{}\n", record("a"), record("b"), record("c")));
        let c = load_collection(f.path()).unwrap();
        let ids: Vec<_> = c.snippets().iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(c.snippets()[0].code, "plt.hist(x)\nplt.show()");
    }

    #[test]
    fn duplicate_id_is_rejected() {
        let f = write_tmp(&format!("{}\n{}\n", record("a1"), record("a1")));
        match load_collection(f.path()) {
            Err(CorpusError::DuplicateId(id)) => assert_eq!(id, "a1"),
            other => panic!("expected duplicate id error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_line_names_line_number() {
        let f = write_tmp(&format!("{}\n{{not json\n", record("a")));
        match load_collection(f.path()) {
            Err(CorpusError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected malformed error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_gives_empty_collection() {
        let f = write_tmp("");
        assert!(load_collection(f.path()).unwrap().is_empty());
    }

    #[test]
    fn blank_description_is_invalid() {
        let line = serde_json::json!({"id": "x", "description": "  ", "code": "a", "url": null, "tags": []});
        let f = write_tmp(&format!("{line}\n"));
        assert!(matches!(load_collection(f.path()), Err(CorpusError::Invalid { line: 1, .. })));
    }

    #[test]
    fn save_then_load_preserves_collection() {
        let f = write_tmp(&format!("{}\n{}\n", record("a"), record("b")));
        let c = load_collection(f.path()).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        c.save(out.path()).unwrap();
        assert_eq!(load_collection(out.path()).unwrap().snippets(), c.snippets());
    }

    #[test]
    fn natural_tokenization_examples() {
        let cfg = NlTokenConfig::default();
        assert_eq!(tokenize_natural("How to plot a histogram?", &cfg), ["plot", "histogram"]);
        assert!(tokenize_natural("", &cfg).is_empty());
        assert_eq!(tokenize_natural("Plotting plots", &cfg), ["plot", "plot"]);
    }

    #[test]
    fn without_lemmas_keeps_surface_forms() {
        let cfg = NlTokenConfig::without_lemmas();
        assert_eq!(tokenize_natural("Plotting the plots", &cfg), ["plotting", "plots"]);
    }

    #[test]
    fn overlap_examples() {
        let cfg = NlTokenConfig::default();
        let o = word_overlap("check if tf uses gpu", "tell if tensorflow is using gpu", &cfg)
            .stats()
            .unwrap();
        assert_eq!(o.absolute, 2);
        assert_eq!(o.query_unique, 4);
        assert_eq!(o.relative, 0.5);

        let same = word_overlap("plot histogram", "plot histogram", &cfg).stats().unwrap();
        assert_eq!(same.relative, 1.0);

        let disjoint = word_overlap("sort list", "open file", &cfg).stats().unwrap();
        assert_eq!(disjoint.absolute, 0);
        assert_eq!(disjoint.relative, 0.0);
    }

    #[test]
    fn stopword_only_query_is_empty() {
        let cfg = NlTokenConfig::default();
        assert_eq!(word_overlap("how to do it", "anything", &cfg), Overlap::EmptyQuery);
    }

    proptest! {
        #[test]
        fn tokenize_natural_idempotent(text in "[a-zA-Z ,.?'-]{0,60}") {
            let cfg = NlTokenConfig::default();
            let once = tokenize_natural(&text, &cfg);
            let twice = tokenize_natural(&once.join(" "), &cfg);
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn overlap_intersection_symmetric(q in "[a-z ]{0,40}", d in "[a-z ]{0,40}") {
            let cfg = NlTokenConfig::default();
            if let (Some(a), Some(b)) = (word_overlap(&q, &d, &cfg).stats(), word_overlap(&d, &q, &cfg).stats()) {
                prop_assert_eq!(a.absolute, b.absolute);
                prop_assert!((0.0..=1.0).contains(&a.relative));
                prop_assert!((0.0..=1.0).contains(&b.relative));
            }
        }
    }
}
