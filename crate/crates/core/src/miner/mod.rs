//! Mining Q&A post dumps into snippet collections, duplicate-based ground
//! truth and title-pair training data.

mod validate;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::GroundTruthQuery;
use crate::corpus::{word_overlap, AnnotatedSnippet, NlTokenConfig, SnippetCollection};

pub use validate::{validate_snippet, BalancedValidator, IndentationValidator, SnippetValidator};

const REWRITE_RULES: &str = include_str!("../../data/rewrite_rules.txt");

#[derive(Debug, Error)]
pub enum MinerError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate post id {0:?}")]
    DuplicatePost(String),
    #[error("tag whitelist is empty")]
    EmptyWhitelist,
    #[error("per-post snippet cap must be at least 1")]
    InvalidPostCap,
    #[error("post {0:?} is marked as a duplicate of itself")]
    SelfEdge(String),
    #[error("negative pairs need at least two duplicate groups with titles, found {0}")]
    NotEnoughGroups(usize),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub score: i64,
    pub code_blocks: Vec<String>,
}

/// A question post with its answers' code blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawPost {
    pub id: String,
    pub title: String,
    pub score: i64,
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default)]
    pub answers: Vec<Answer>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DuplicateEdge {
    pub src: String,
    pub dst: String,
}

/// A connected component of the duplicate graph, members in ascending id
/// order (see [`cmp_post_ids`]).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuplicateGroup {
    pub members: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairLabel {
    Positive,
    Negative,
}

/// A title pair for duplicate detection. `groups` records the indices of
/// the duplicate groups the two titles were drawn from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub text_a: String,
    pub text_b: String,
    pub label: PairLabel,
    pub groups: (usize, usize),
}

/// Orders post ids numerically when both are integers, otherwise
/// lexicographically; integer ids sort before non-integer ones.
pub fn cmp_post_ids(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> MinerError + '_ {
    move |source| MinerError::Io { path: path.display().to_string(), source }
}

/// Reads a posts dump, one JSON object per line.
pub fn load_posts(path: impl AsRef<Path>) -> Result<Vec<RawPost>, MinerError> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut posts = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let post: RawPost = serde_json::from_str(&line)
            .map_err(|e| MinerError::Malformed { line: i + 1, message: e.to_string() })?;
        if !seen.insert(post.id.clone()) {
            return Err(MinerError::DuplicatePost(post.id));
        }
        posts.push(post);
    }
    Ok(posts)
}

/// Reads duplicate edges: two tab-separated post ids per line.
pub fn load_duplicate_edges(path: impl AsRef<Path>) -> Result<Vec<DuplicateEdge>, MinerError> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut edges = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split('\t').map(str::trim);
        match (cols.next(), cols.next(), cols.next()) {
            (Some(src), Some(dst), None) if !src.is_empty() && !dst.is_empty() => {
                edges.push(DuplicateEdge { src: src.to_string(), dst: dst.to_string() })
            }
            _ => {
                return Err(MinerError::Malformed {
                    line: i + 1,
                    message: "expected two tab-separated post ids".into(),
                })
            }
        }
    }
    Ok(edges)
}

fn prompt_len(line: &str) -> Option<usize> {
    for p in [">>>", "..."] {
        if let Some(rest) = line.strip_prefix(p) {
            if rest.is_empty() {
                return Some(p.len());
            }
            if rest.starts_with(' ') {
                return Some(p.len() + 1);
            }
        }
    }
    // IPython: "In [12]: "
    let rest = line.strip_prefix("In [")?;
    let digits = rest.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 {
        return None;
    }
    let after = rest[digits..].strip_prefix("]:")?;
    let consumed = 4 + digits + 2;
    if after.is_empty() {
        Some(consumed)
    } else if after.starts_with(' ') {
        Some(consumed + 1)
    } else {
        None
    }
}

/// Removes leading interactive-interpreter prompts (`>>> `, `... `,
/// `In [n]: `) from every line. Lines that held only a prompt are dropped.
pub fn strip_prompts(code: &str) -> String {
    let mut out = Vec::new();
    for line in code.split('\n') {
        let mut rest = line;
        let mut stripped = false;
        while let Some(n) = prompt_len(rest) {
            rest = &rest[n..];
            stripped = true;
        }
        if stripped && rest.trim().is_empty() {
            continue;
        }
        out.push(rest);
    }
    out.join("\n")
}

fn rewrite_prefixes() -> &'static [String] {
    static RULES: OnceLock<Vec<String>> = OnceLock::new();
    RULES.get_or_init(|| {
        REWRITE_RULES
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect()
    })
}

fn strip_prefix_ci<'a>(text: &'a str, prefix: &str) -> Option<&'a str> {
    let head = text.get(..prefix.len())?;
    if !head.eq_ignore_ascii_case(prefix) {
        return None;
    }
    let rest = &text[prefix.len()..];
    rest.starts_with(char::is_whitespace).then(|| rest.trim_start())
}

/// Rewrites a question title into a description: removes the first
/// matching question prefix, a trailing `?`, and capitalizes. Titles that
/// match no prefix rule are returned unchanged.
pub fn rewrite_question(title: &str) -> String {
    let trimmed = title.trim();
    let Some(rest) = rewrite_prefixes().iter().find_map(|p| strip_prefix_ci(trimmed, p)) else {
        return title.to_string();
    };
    let rest = rest.trim_end();
    let rest = rest.strip_suffix('?').unwrap_or(rest).trim_end();
    let mut chars = rest.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Options for [`mine_snippets`].
#[derive(Clone)]
pub struct MineConfig {
    pub per_tag_cap: usize,
    pub per_post_cap: usize,
    pub validator: Arc<dyn SnippetValidator>,
}

impl Default for MineConfig {
    fn default() -> Self {
        Self { per_tag_cap: 250, per_post_cap: 2, validator: Arc::new(BalancedValidator) }
    }
}

impl std::fmt::Debug for MineConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MineConfig")
            .field("per_tag_cap", &self.per_tag_cap)
            .field("per_post_cap", &self.per_post_cap)
            .field("validator", &self.validator.name())
            .finish()
    }
}

/// Result of mining: the collection plus which post each snippet came from.
#[derive(Debug, Clone)]
pub struct MinedSnippets {
    pub collection: SnippetCollection,
    /// Post id → ids of the snippets it contributed, in collection order.
    pub sources: BTreeMap<String, Vec<String>>,
    pub duplicates_removed: usize,
}

/// Mines snippets tag by tag (whitelist order), posts by decreasing score,
/// answers by decreasing score. Each answer's prompt-stripped, valid code
/// blocks are concatenated into one snippet.
pub fn mine_snippets(
    posts: &[RawPost],
    tag_whitelist: &BTreeSet<String>,
    config: &MineConfig,
) -> Result<MinedSnippets, MinerError> {
    if tag_whitelist.is_empty() {
        return Err(MinerError::EmptyWhitelist);
    }
    if config.per_post_cap == 0 {
        return Err(MinerError::InvalidPostCap);
    }
    let mut mined: Vec<(String, AnnotatedSnippet)> = Vec::new();
    for tag in tag_whitelist {
        let mut tagged: Vec<&RawPost> = posts.iter().filter(|p| p.tags.contains(tag)).collect();
        // Stable: equal scores keep dump order.
        tagged.sort_by(|a, b| b.score.cmp(&a.score));
        let mut taken_for_tag = 0;
        'posts: for post in tagged {
            let description = rewrite_question(&post.title);
            if description.trim().is_empty() {
                continue;
            }
            let mut order: Vec<usize> = (0..post.answers.len()).collect();
            order.sort_by(|&a, &b| post.answers[b].score.cmp(&post.answers[a].score));
            let mut taken_for_post = 0;
            for idx in order {
                if taken_for_post == config.per_post_cap {
                    break;
                }
                if taken_for_tag == config.per_tag_cap {
                    break 'posts;
                }
                let blocks: Vec<String> = post.answers[idx]
                    .code_blocks
                    .iter()
                    .map(|b| strip_prompts(b))
                    .filter(|b| validate_snippet(b, config.validator.as_ref()))
                    .collect();
                if blocks.is_empty() {
                    continue;
                }
                let snippet = AnnotatedSnippet {
                    id: format!("{}-{}", post.id, idx),
                    description: description.clone(),
                    code: blocks.join("\n"),
                    url: None,
                    tags: post.tags.clone(),
                };
                mined.push((post.id.clone(), snippet));
                taken_for_post += 1;
                taken_for_tag += 1;
            }
            if taken_for_tag == config.per_tag_cap {
                break;
            }
        }
    }

    let before = mined.len();
    let mut seen_code = HashSet::new();
    mined.retain(|(_, s)| seen_code.insert(s.code.clone()));
    let duplicates_removed = before - mined.len();

    let mut sources: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (post, s) in &mined {
        sources.entry(post.clone()).or_default().push(s.id.clone());
    }
    let name = tag_whitelist.iter().cloned().collect::<Vec<_>>().join("+");
    let collection = SnippetCollection::new(name, mined.into_iter().map(|(_, s)| s).collect())?;
    Ok(MinedSnippets { collection, sources, duplicates_removed })
}

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), rank: vec![0; n] }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            Ordering::Less => self.parent[ra] = rb,
            Ordering::Greater => self.parent[rb] = ra,
            Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Transitively groups duplicate relations into connected components.
/// Groups are ordered by their smallest member.
pub fn group_duplicates(edges: &[DuplicateEdge]) -> Result<Vec<DuplicateGroup>, MinerError> {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut names: Vec<&str> = Vec::new();
    for e in edges {
        if e.src == e.dst {
            return Err(MinerError::SelfEdge(e.src.clone()));
        }
        for id in [e.src.as_str(), e.dst.as_str()] {
            if !index.contains_key(id) {
                index.insert(id, names.len());
                names.push(id);
            }
        }
    }
    let mut dsu = DisjointSet::new(names.len());
    for e in edges {
        dsu.union(index[e.src.as_str()], index[e.dst.as_str()]);
    }
    let mut components: HashMap<usize, Vec<String>> = HashMap::new();
    for (i, name) in names.iter().enumerate() {
        components.entry(dsu.find(i)).or_default().push(name.to_string());
    }
    let mut groups: Vec<DuplicateGroup> = components
        .into_values()
        .map(|mut members| {
            members.sort_by(|a, b| cmp_post_ids(a, b));
            DuplicateGroup { members }
        })
        .collect();
    groups.sort_by(|a, b| cmp_post_ids(&a.members[0], &b.members[0]));
    Ok(groups)
}

/// Optional filter dropping queries that overlap too much with a matching
/// snippet's description.
#[derive(Debug, Clone)]
pub struct OverlapFilter {
    /// Queries with relative overlap strictly above this are dropped.
    pub max_relative: f64,
    pub config: NlTokenConfig,
}

#[derive(Debug, Clone, Default)]
pub struct GroundTruthBuild {
    pub queries: Vec<GroundTruthQuery>,
    /// Groups without a post that contributed snippets.
    pub skipped_no_source: usize,
    /// Groups without an unused post that has a title.
    pub skipped_no_query: usize,
    /// Queries removed by the overlap filter.
    pub filtered: usize,
}

/// Builds ground-truth queries from duplicate groups: the title of the
/// group's lowest-id unused post becomes the query, and every snippet
/// contributed by the group's other posts is relevant.
pub fn build_ground_truth(
    groups: &[DuplicateGroup],
    collection: &SnippetCollection,
    sources: &BTreeMap<String, Vec<String>>,
    titles: &HashMap<String, String>,
    filter: Option<&OverlapFilter>,
) -> GroundTruthBuild {
    let ids = collection.ids();
    let mut out = GroundTruthBuild::default();
    for group in groups {
        let mut relevant: Vec<String> = Vec::new();
        let mut unused: Vec<&String> = Vec::new();
        for member in &group.members {
            let contributed: Vec<&String> = sources
                .get(member)
                .map(|v| v.iter().filter(|id| ids.contains(id.as_str())).collect())
                .unwrap_or_default();
            if contributed.is_empty() {
                unused.push(member);
            } else {
                relevant.extend(contributed.into_iter().cloned());
            }
        }
        if relevant.is_empty() {
            out.skipped_no_source += 1;
            continue;
        }
        // Members are already in ascending id order.
        let Some(query) = unused
            .iter()
            .find_map(|m| titles.get(m.as_str()).filter(|t| !t.trim().is_empty()))
        else {
            out.skipped_no_query += 1;
            continue;
        };
        if let Some(f) = filter {
            let too_close = relevant.iter().any(|id| {
                let d = &collection.get(id).expect("relevant id in collection").description;
                word_overlap(query, d, &f.config)
                    .stats()
                    .is_some_and(|s| s.relative > f.max_relative)
            });
            if too_close {
                out.filtered += 1;
                continue;
            }
        }
        out.queries.push(GroundTruthQuery { query: query.clone(), relevant_ids: relevant });
    }
    out
}

/// Samples one positive title pair per duplicate group and
/// `negatives_per_positive` cross-group negatives for each positive.
/// Deterministic for a given seed.
pub fn sample_training_pairs(
    groups: &[DuplicateGroup],
    titles: &HashMap<String, String>,
    negatives_per_positive: usize,
    seed: u64,
) -> Result<Vec<TrainingPair>, MinerError> {
    let titled: Vec<(usize, Vec<&String>)> = groups
        .iter()
        .enumerate()
        .map(|(g, group)| {
            (g, group.members.iter().filter_map(|m| titles.get(m)).collect::<Vec<_>>())
        })
        .filter(|(_, t)| !t.is_empty())
        .collect();
    if negatives_per_positive > 0 && titled.len() < 2 {
        return Err(MinerError::NotEnoughGroups(titled.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::new();
    for (g, members) in &titled {
        let n = members.len();
        if n < 2 {
            continue;
        }
        let i = rng.gen_range(0..n);
        let mut j = rng.gen_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let (a, b) = (i.min(j), i.max(j));
        pairs.push(TrainingPair {
            text_a: members[a].clone(),
            text_b: members[b].clone(),
            label: PairLabel::Positive,
            groups: (*g, *g),
        });
        for _ in 0..negatives_per_positive {
            let x = rng.gen_range(0..titled.len());
            let mut y = rng.gen_range(0..titled.len() - 1);
            if y >= x {
                y += 1;
            }
            let (gx, tx) = &titled[x];
            let (gy, ty) = &titled[y];
            debug_assert_ne!(gx, gy);
            pairs.push(TrainingPair {
                text_a: tx[rng.gen_range(0..tx.len())].clone(),
                text_b: ty[rng.gen_range(0..ty.len())].clone(),
                label: PairLabel::Negative,
                groups: (*gx, *gy),
            });
        }
    }
    Ok(pairs)
}
