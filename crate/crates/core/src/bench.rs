//! Retrieval evaluation: reciprocal rank with a cutoff, recall@k, word
//! overlap histograms and benchmark tables.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{word_overlap, NlTokenConfig, Overlap, SnippetCollection};

pub type BoxError = Box<dyn std::error::Error + Send + Sync>;

/// A ranking function: query text and requested depth to ranked snippet ids.
pub type SearchFn<'a> = dyn Fn(&str, usize) -> Result<Vec<String>, BoxError> + Sync + 'a;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("relevant id set is empty")]
    EmptyRelevant,
    #[error("cutoff must be at least 1")]
    ZeroCutoff,
    #[error("no queries to evaluate")]
    NoQueries,
    #[error("no models to benchmark")]
    NoModels,
    #[error("query {query:?} references unknown snippet id {id:?}")]
    UnknownId { query: String, id: String },
    #[error("search failed for query {query:?}: {source}")]
    Search {
        query: String,
        #[source]
        source: BoxError,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed ground truth record: {message}")]
    Malformed { line: usize, message: String },
}

/// A query with the ids of its matching snippets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthQuery {
    pub query: String,
    pub relevant_ids: Vec<String>,
}

pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<Vec<GroundTruthQuery>, BenchError> {
    let path = path.as_ref();
    let io_err = |source| BenchError::Io { path: path.display().to_string(), source };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let q: GroundTruthQuery = serde_json::from_str(&line)
            .map_err(|e| BenchError::Malformed { line: i + 1, message: e.to_string() })?;
        if q.relevant_ids.is_empty() {
            return Err(BenchError::Malformed { line: i + 1, message: "no relevant ids".into() });
        }
        out.push(q);
    }
    Ok(out)
}

pub fn save_ground_truth(
    path: impl AsRef<Path>,
    queries: &[GroundTruthQuery],
) -> Result<(), BenchError> {
    let path = path.as_ref();
    let io_err = |source| BenchError::Io { path: path.display().to_string(), source };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    for q in queries {
        writeln!(w, "{}", serde_json::to_string(q).expect("query serializes")).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// 1-based position of the first relevant id within the first `cutoff`
/// results.
pub fn first_relevant_rank<S: AsRef<str>>(
    ranking: &[S],
    relevant: &HashSet<&str>,
    cutoff: usize,
) -> Option<usize> {
    ranking
        .iter()
        .take(cutoff)
        .position(|id| relevant.contains(id.as_ref()))
        .map(|p| p + 1)
}

pub fn reciprocal_rank<S: AsRef<str>>(
    ranking: &[S],
    relevant: &HashSet<&str>,
    cutoff: usize,
) -> Result<f64, BenchError> {
    if relevant.is_empty() {
        return Err(BenchError::EmptyRelevant);
    }
    if cutoff == 0 {
        return Err(BenchError::ZeroCutoff);
    }
    Ok(first_relevant_rank(ranking, relevant, cutoff).map_or(0.0, |r| 1.0 / r as f64))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cutoffs {
    pub mrr: usize,
    pub recall_ks: Vec<usize>,
}

impl Default for Cutoffs {
    fn default() -> Self {
        Self { mrr: 10, recall_ks: vec![3, 10] }
    }
}

impl Cutoffs {
    fn depth(&self) -> usize {
        self.recall_ks.iter().copied().chain([self.mrr]).max().unwrap_or(self.mrr)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryOutcome {
    pub query: String,
    /// First relevant rank within the evaluated depth.
    pub first_relevant: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub model: String,
    pub collection: String,
    pub mrr: f64,
    pub recall_at: BTreeMap<usize, f64>,
    pub per_query: Vec<QueryOutcome>,
}

impl EvalReport {
    pub fn n_queries(&self) -> usize {
        self.per_query.len()
    }

    pub fn recall(&self, k: usize) -> Option<f64> {
        self.recall_at.get(&k).copied()
    }
}

/// Evaluates a ranking function against ground-truth queries.
pub fn evaluate(
    model: &str,
    search: &SearchFn<'_>,
    queries: &[GroundTruthQuery],
    collection: &SnippetCollection,
    cutoffs: &Cutoffs,
) -> Result<EvalReport, BenchError> {
    if queries.is_empty() {
        return Err(BenchError::NoQueries);
    }
    if cutoffs.mrr == 0 || cutoffs.recall_ks.contains(&0) {
        return Err(BenchError::ZeroCutoff);
    }
    let ids = collection.ids();
    for q in queries {
        if q.relevant_ids.is_empty() {
            return Err(BenchError::EmptyRelevant);
        }
        if let Some(id) = q.relevant_ids.iter().find(|id| !ids.contains(id.as_str())) {
            return Err(BenchError::UnknownId { query: q.query.clone(), id: id.clone() });
        }
    }
    let depth = cutoffs.depth();
    let ranks: Vec<Option<usize>> = queries
        .par_iter()
        .map(|q| {
            let ranking = search(&q.query, depth)
                .map_err(|source| BenchError::Search { query: q.query.clone(), source })?;
            let relevant: HashSet<&str> = q.relevant_ids.iter().map(String::as_str).collect();
            Ok(first_relevant_rank(&ranking, &relevant, depth))
        })
        .collect::<Result<_, BenchError>>()?;

    let n = queries.len() as f64;
    let mrr = ranks
        .iter()
        .map(|r| match r {
            Some(r) if *r <= cutoffs.mrr => 1.0 / *r as f64,
            _ => 0.0,
        })
        .sum::<f64>()
        / n;
    let recall_at = cutoffs
        .recall_ks
        .iter()
        .map(|&k| (k, ranks.iter().filter(|r| r.is_some_and(|r| r <= k)).count() as f64 / n))
        .collect();
    let per_query = queries
        .iter()
        .zip(&ranks)
        .map(|(q, r)| QueryOutcome { query: q.query.clone(), first_relevant: *r })
        .collect();
    Ok(EvalReport {
        model: model.to_string(),
        collection: collection.name.clone(),
        mrr,
        recall_at,
        per_query,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapHistogram {
    /// Ten equal-width bins over [0, 1]; the last bin includes 1.0.
    pub bins: [usize; 10],
    pub mean: Option<f64>,
    pub pairs: usize,
    /// Pairs whose query had no tokens after preprocessing.
    pub empty_queries: usize,
}

/// Relative word overlap between every query and the descriptions of its
/// matching snippets, binned into tenths.
pub fn overlap_histogram(
    queries: &[GroundTruthQuery],
    collection: &SnippetCollection,
    config: &NlTokenConfig,
) -> OverlapHistogram {
    let mut bins = [0usize; 10];
    let mut sum = 0.0;
    let mut pairs = 0;
    let mut empty_queries = 0;
    for q in queries {
        for id in &q.relevant_ids {
            let Some(snippet) = collection.get(id) else { continue };
            match word_overlap(&q.query, &snippet.description, config) {
                Overlap::Defined(s) => {
                    // Integer arithmetic keeps bin edges exact.
                    let bin = (10 * s.absolute / s.query_unique).min(9);
                    bins[bin] += 1;
                    sum += s.relative;
                    pairs += 1;
                }
                Overlap::EmptyQuery => empty_queries += 1,
            }
        }
    }
    let mean = (pairs > 0).then(|| sum / pairs as f64);
    OverlapHistogram { bins, mean, pairs, empty_queries }
}

/// Evaluation results for several models over one collection.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkTable {
    pub reports: Vec<EvalReport>,
}

#[derive(Serialize)]
struct MachineRow<'a> {
    model: &'a str,
    collection: &'a str,
    mrr: f64,
    r3: Option<f64>,
    r10: Option<f64>,
    n_queries: usize,
}

impl BenchmarkTable {
    /// Percentages with one decimal.
    pub fn to_text(&self) -> String {
        let width = self.reports.iter().map(|r| r.model.len()).max().unwrap_or(5).max(5);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>6}  {:>6}  {:>6}  {:>9}", "model", "MRR", "r@3", "r@10", "#queries");
        let pct = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{:.1}", 100.0 * v));
        for r in &self.reports {
            let _ = writeln!(
                out,
                "{:<width$}  {:>6}  {:>6}  {:>6}  {:>9}",
                r.model,
                pct(Some(r.mrr)),
                pct(r.recall(3)),
                pct(r.recall(10)),
                r.n_queries()
            );
        }
        out
    }

    /// One JSON record per model per line, full precision.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.reports {
            let row = MachineRow {
                model: &r.model,
                collection: &r.collection,
                mrr: r.mrr,
                r3: r.recall(3),
                r10: r.recall(10),
                n_queries: r.n_queries(),
            };
            out.push_str(&serde_json::to_string(&row).expect("row serializes"));
            out.push('\n');
        }
        out
    }
}

/// Evaluates each named model in order.
pub fn run_benchmark(
    models: &[(&str, &SearchFn<'_>)],
    queries: &[GroundTruthQuery],
    collection: &SnippetCollection,
    cutoffs: &Cutoffs,
) -> Result<BenchmarkTable, BenchError> {
    if models.is_empty() {
        return Err(BenchError::NoModels);
    }
    let reports = models
        .iter()
        .map(|(name, search)| evaluate(name, *search, queries, collection, cutoffs))
        .collect::<Result<_, _>>()?;
    Ok(BenchmarkTable { reports })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::AnnotatedSnippet;
    use proptest::prelude::*;

    fn set<'a>(ids: &[&'a str]) -> HashSet<&'a str> {
        ids.iter().copied().collect()
    }

    fn collection(n: usize) -> SnippetCollection {
        let snippets = (0..n)
            .map(|i| AnnotatedSnippet {
                id: format!("s{i}"),
                description: format!("describe item {i}"),
                code: format!("f{i}()"),
                url: None,
                tags: vec![],
            })
            .collect();
        SnippetCollection::new("toy", snippets).unwrap()
    }

    #[test]
    fn reciprocal_rank_examples() {
        let ranking: Vec<String> = (0..20).map(|i| format!("s{i}")).collect();
        assert_eq!(reciprocal_rank(&ranking, &set(&["s0"]), 10).unwrap(), 1.0);
        assert_eq!(reciprocal_rank(&ranking, &set(&["s2", "s7"]), 10).unwrap(), 1.0 / 3.0);
        assert_eq!(reciprocal_rank(&ranking, &set(&["s10"]), 10).unwrap(), 0.0);
        assert!(matches!(reciprocal_rank(&ranking, &set(&[]), 10), Err(BenchError::EmptyRelevant)));
        assert!(matches!(reciprocal_rank(&ranking, &set(&["s1"]), 0), Err(BenchError::ZeroCutoff)));
    }

    /// Queries whose first relevant hit sits at the given rank (None: absent).
    fn planted(ranks: &[Option<usize>]) -> (Vec<GroundTruthQuery>, SnippetCollection) {
        let coll = collection(30);
        let queries = ranks
            .iter()
            .enumerate()
            .map(|(i, r)| GroundTruthQuery {
                query: format!("q{i}:{}", r.map_or(0, |r| r)),
                relevant_ids: vec![format!("s{}", r.map_or(29, |r| r - 1))],
            })
            .collect();
        (queries, coll)
    }

    fn identity_search(_q: &str, _depth: usize) -> Result<Vec<String>, BoxError> {
        Ok((0..20).map(|i| format!("s{i}")).collect())
    }

    #[test]
    fn hand_built_metrics() {
        let (queries, coll) = planted(&[Some(1), Some(2), Some(4), Some(11), None]);
        let report = evaluate("m", &identity_search, &queries, &coll, &Cutoffs::default()).unwrap();
        assert_eq!(report.mrr, 0.35);
        assert_eq!(report.recall(3), Some(0.4));
        assert_eq!(report.recall(10), Some(0.6));
        let firsts: Vec<_> = report.per_query.iter().map(|q| q.first_relevant).collect();
        assert_eq!(firsts, vec![Some(1), Some(2), Some(4), None, None]);
    }

    #[test]
    fn perfect_retrieval() {
        let (queries, coll) = planted(&[Some(1), Some(1), Some(1)]);
        let r = evaluate("m", &identity_search, &queries, &coll, &Cutoffs::default()).unwrap();
        assert_eq!((r.mrr, r.recall(3), r.recall(10)), (1.0, Some(1.0), Some(1.0)));
    }

    #[test]
    fn evaluation_errors() {
        let coll = collection(3);
        assert!(matches!(
            evaluate("m", &identity_search, &[], &coll, &Cutoffs::default()),
            Err(BenchError::NoQueries)
        ));
        let q = [GroundTruthQuery { query: "x".into(), relevant_ids: vec!["nope".into()] }];
        match evaluate("m", &identity_search, &q, &coll, &Cutoffs::default()) {
            Err(BenchError::UnknownId { query, id }) => assert_eq!((query.as_str(), id.as_str()), ("x", "nope")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn histogram_binning() {
        let coll = SnippetCollection::new(
            "c",
            vec![AnnotatedSnippet {
                id: "a".into(),
                description: "plot histogram".into(),
                code: "plt.hist(x)".into(),
                url: None,
                tags: vec![],
            }],
        )
        .unwrap();
        let half = [GroundTruthQuery { query: "plot bars".into(), relevant_ids: vec!["a".into()] }];
        let h = overlap_histogram(&half, &coll, &NlTokenConfig::default());
        assert_eq!(h.bins[5], 1);
        assert_eq!(h.bins.iter().sum::<usize>(), 1);
        assert_eq!(h.mean, Some(0.5));

        let same = [
            GroundTruthQuery { query: "plot histogram".into(), relevant_ids: vec!["a".into()] },
            GroundTruthQuery { query: "Plotting histograms".into(), relevant_ids: vec!["a".into()] },
            GroundTruthQuery { query: "how to".into(), relevant_ids: vec!["a".into()] },
        ];
        let h = overlap_histogram(&same, &coll, &NlTokenConfig::default());
        assert_eq!(h.bins[9], 2);
        assert_eq!(h.mean, Some(1.0));
        assert_eq!(h.empty_queries, 1);
    }

    #[test]
    fn benchmark_table_formats() {
        let (queries, coll) = planted(&[Some(1), Some(2), Some(4)]);
        let reversed = |_q: &str, _d: usize| -> Result<Vec<String>, BoxError> {
            Ok((0..20).rev().map(|i| format!("s{i}")).collect())
        };
        let models: [(&str, &SearchFn); 2] = [("identity", &identity_search), ("reversed", &reversed)];
        let table = run_benchmark(&models, &queries, &coll, &Cutoffs::default()).unwrap();
        assert_eq!(table.reports.len(), 2);
        let text = table.to_text();
        // (1 + 1/2 + 1/4) / 3 = 0.58333…
        assert!(text.contains("identity    58.3    66.7   100.0          3"), "{text}");
        let jsonl = table.to_jsonl();
        let first: serde_json::Value = serde_json::from_str(jsonl.lines().next().unwrap()).unwrap();
        assert_eq!(first["mrr"].as_f64().unwrap(), 1.75 / 3.0);
        assert_eq!(first["n_queries"], 3);
        let again = run_benchmark(&models, &queries, &coll, &Cutoffs::default()).unwrap();
        assert_eq!(again.to_jsonl(), jsonl);
        assert_eq!(again.to_text(), text);
        assert!(matches!(run_benchmark(&[], &queries, &coll, &Cutoffs::default()), Err(BenchError::NoModels)));
    }

    /// Direct restatement of the metric definitions.
    fn oracle(rankings: &[Vec<String>], relevant: &[Vec<String>]) -> (f64, f64, f64) {
        let n = rankings.len() as f64;
        let (mut rr, mut r3, mut r10) = (0.0, 0.0, 0.0);
        for (ranking, rel) in rankings.iter().zip(relevant) {
            for (i, id) in ranking.iter().enumerate() {
                if rel.contains(id) {
                    if i < 10 {
                        rr += 1.0 / (i + 1) as f64;
                        r10 += 1.0;
                    }
                    if i < 3 {
                        r3 += 1.0;
                    }
                    break;
                }
            }
        }
        (rr / n, r3 / n, r10 / n)
    }

    proptest! {
        #[test]
        fn matches_oracle(
            cases in prop::collection::vec(
                (Just((0..50).collect::<Vec<usize>>()).prop_shuffle(),
                 prop::collection::btree_set(0usize..50, 1..4)),
                1..20)
        ) {
            let coll = collection(50);
            let rankings: Vec<Vec<String>> = cases.iter().map(|(r, _)| r.iter().map(|i| format!("s{i}")).collect()).collect();
            let relevant: Vec<Vec<String>> = cases.iter().map(|(_, rel)| rel.iter().map(|i| format!("s{i}")).collect()).collect();
            let queries: Vec<GroundTruthQuery> = relevant.iter().enumerate()
                .map(|(i, rel)| GroundTruthQuery { query: format!("{i}"), relevant_ids: rel.clone() })
                .collect();
            let search = |q: &str, _d: usize| -> Result<Vec<String>, BoxError> {
                Ok(rankings[q.parse::<usize>().unwrap()].clone())
            };
            let report = evaluate("m", &search, &queries, &coll, &Cutoffs::default()).unwrap();
            let (mrr, r3, r10) = oracle(&rankings, &relevant);
            prop_assert_eq!(report.mrr, mrr);
            prop_assert_eq!(report.recall(3), Some(r3));
            prop_assert_eq!(report.recall(10), Some(r10));
            prop_assert!(r3 <= r10 && mrr <= r10);
        }
    }
}
