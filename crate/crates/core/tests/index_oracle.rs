//! The ensemble index against brute-force weighted cosine scoring.

use std::collections::HashMap;
use std::sync::Arc;

use codesearch::corpus::{AnnotatedSnippet, SnippetCollection};
use codesearch::encoders::ExternalEncoder;
use codesearch::index::{build_index, EnsembleSpec, Half};
use codesearch::vector::cosine;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Fixture {
    collection: SnippetCollection,
    desc: HashMap<String, Vec<f64>>,
    code: HashMap<String, Vec<f64>>,
    queries: Vec<String>,
}

fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn fixture(seed: u64, snippets: usize, queries: usize, desc_dim: usize, code_dim: usize) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut desc = HashMap::new();
    let mut code = HashMap::new();
    let mut items = Vec::new();
    for i in 0..snippets {
        let (d, c) = (format!("d{i}"), format!("c{i}"));
        desc.insert(d.clone(), gaussian_vec(&mut rng, desc_dim));
        code.insert(c.clone(), gaussian_vec(&mut rng, code_dim));
        items.push(AnnotatedSnippet { id: format!("s{i:04}"), description: d, code: c, url: None, tags: vec![] });
    }
    let queries: Vec<String> = (0..queries).map(|j| format!("q{j}")).collect();
    for q in &queries {
        desc.insert(q.clone(), gaussian_vec(&mut rng, desc_dim));
        code.insert(q.clone(), gaussian_vec(&mut rng, code_dim));
    }
    Fixture { collection: SnippetCollection::new("random", items).unwrap(), desc, code, queries }
}

fn spec(f: &Fixture, l1: f64, l2: f64, desc_dim: usize, code_dim: usize) -> EnsembleSpec {
    EnsembleSpec {
        lambda_desc: l1,
        lambda_code: l2,
        desc: Some(Half::shared(Arc::new(ExternalEncoder::new(desc_dim, f.desc.clone())))),
        code: Some(Half::shared(Arc::new(ExternalEncoder::new(code_dim, f.code.clone())))),
    }
}

/// Weighted cosine sums, sorted by score descending then id ascending.
fn oracle(f: &Fixture, q: &str, l1: f64, l2: f64) -> Vec<(String, f64)> {
    let mut scored: Vec<(String, f64)> = f
        .collection
        .snippets()
        .iter()
        .map(|s| {
            let cd = cosine(&f.desc[&s.description], &f.desc[q]).unwrap();
            let cc = cosine(&f.code[&s.code], &f.code[q]).unwrap();
            (s.id.clone(), l1 * cd + l2 * cc)
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored
}

#[test]
fn ranking_matches_weighted_cosine_sum() {
    for (seed, (l1, l2)) in [(1u64, (1.0, 0.5)), (2, (1.0, 1.0)), (3, (0.3, 2.0))] {
        let f = fixture(seed, 100, 20, 6, 4);
        let spec = spec(&f, l1, l2, 6, 4);
        let index = build_index(&f.collection, &spec).unwrap().index;
        let scale = (2.0 * (l1 * l1 + l2 * l2)).sqrt();
        for q in &f.queries {
            let hits = index.search(&spec, q, 100).unwrap().hits;
            let want = oracle(&f, q, l1, l2);
            let got_ids: Vec<&str> = hits.iter().map(|h| h.id.as_str()).collect();
            let want_ids: Vec<&str> = want.iter().map(|w| w.0.as_str()).collect();
            assert_eq!(got_ids, want_ids);
            for (h, w) in hits.iter().zip(&want) {
                assert!((h.score * scale - w.1).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn zero_code_weight_matches_description_only_ranking() {
    let f = fixture(9, 60, 10, 5, 5);
    let ens = spec(&f, 1.0, 0.0, 5, 5);
    let ens_index = build_index(&f.collection, &ens).unwrap().index;
    let desc_only = EnsembleSpec::description_only(Half::shared(Arc::new(ExternalEncoder::new(5, f.desc.clone()))));
    let d_index = build_index(&f.collection, &desc_only).unwrap().index;
    for q in &f.queries {
        let a: Vec<String> = ens_index.search(&ens, q, 60).unwrap().hits.into_iter().map(|h| h.id).collect();
        let b: Vec<String> = d_index.search(&desc_only, q, 60).unwrap().hits.into_iter().map(|h| h.id).collect();
        assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn top_k_equals_full_sort(seed in 0u64..1000, n in 1usize..1000, k in 1usize..40, l2 in 0.0f64..2.0) {
        let f = fixture(seed, n, 1, 3, 3);
        let spec = spec(&f, 1.0, l2, 3, 3);
        let index = build_index(&f.collection, &spec).unwrap().index;
        let before = index.clone();
        let q = &f.queries[0];
        let top: Vec<String> = index.search(&spec, q, k).unwrap().hits.into_iter().map(|h| h.id).collect();
        let full: Vec<String> = index.search(&spec, q, n).unwrap().hits.into_iter().map(|h| h.id).collect();
        prop_assert_eq!(top.len(), k.min(n));
        prop_assert_eq!(&top[..], &full[..top.len()]);
        let want: Vec<String> = oracle(&f, q, 1.0, l2).into_iter().map(|w| w.0).collect();
        prop_assert_eq!(full, want);
        prop_assert_eq!(index, before);
    }
}
