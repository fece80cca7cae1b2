//! The IR environment: corpus ingestion, BM25 lexical search, an optional
//! dense-retriever HTTP endpoint, reciprocal-rank-fusion merging and the
//! fixed top-k retrieval contract.
//!
//! The index is built once and immutable afterwards, so it can be shared
//! freely across concurrent readers. Retrieval is deterministic: repeated
//! identical queries against an unchanged corpus return identical results,
//! and ties are always broken by ascending document id.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{Document, RetrievalFailure, Retriever};
use crate::text::tokenize;

/// Errors from index construction and retrieval.
#[derive(Debug, Error)]
pub enum EnvError {
    #[error("duplicate document id {0:?} in corpus")]
    DuplicateDocId(String),

    #[error("document {0:?} has empty text")]
    EmptyDocument(String),

    #[error("invalid top_k {0}; must be at least 1")]
    InvalidTopK(usize),

    #[error("corpus read failed: {0}")]
    Io(#[from] std::io::Error),

    #[error("corpus line {line}: {source}")]
    Malformed {
        line: usize,
        source: serde_json::Error,
    },

    #[error("index serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),

    #[error("dense endpoint failed: {0}")]
    DenseEndpoint(String),
}

/// A corpus entry prior to indexing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusDocument {
    pub doc_id: String,
    pub title: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IndexedDoc {
    doc_id: String,
    title: String,
    text: String,
    length: u64,
}

/// Inverted index with BM25 statistics over lowercased alphanumeric tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexicalIndex {
    /// term -> postings as (internal doc index, term frequency), sorted by
    /// doc index. BTreeMap keeps the persisted form canonical.
    postings: BTreeMap<String, Vec<(u32, u32)>>,
    docs: Vec<IndexedDoc>,
    by_id: BTreeMap<String, u32>,
    total_tokens: u64,
}

impl LexicalIndex {
    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        if self.docs.is_empty() {
            0.0
        } else {
            self.total_tokens as f64 / self.docs.len() as f64
        }
    }

    pub fn doc_length(&self, doc_id: &str) -> Option<u64> {
        self.by_id.get(doc_id).map(|&i| self.docs[i as usize].length)
    }

    /// Resolves a doc id to its stored title and text.
    pub fn lookup(&self, doc_id: &str) -> Option<(&str, &str)> {
        self.by_id
            .get(doc_id)
            .map(|&i| {
                let d = &self.docs[i as usize];
                (d.title.as_str(), d.text.as_str())
            })
    }

    /// Persists the index as JSON under `path`.
    pub fn save(&self, path: &Path) -> Result<(), EnvError> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    /// Loads an index persisted by [`LexicalIndex::save`].
    pub fn load(path: &Path) -> Result<Self, EnvError> {
        let file = std::fs::File::open(path)?;
        let index = serde_json::from_reader(std::io::BufReader::new(file))?;
        Ok(index)
    }
}

/// One ranked retrieval result list: unique doc ids, scores non-increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub entries: Vec<RankedEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub doc_id: String,
    pub score: f64,
}

impl RankedList {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }
}

/// How to proceed when the dense endpoint fails mid-episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenseFailurePolicy {
    /// Log and fall back to the lexical-only ranking.
    DegradeToLexical,
    /// Surface the failure to the episode.
    FailEpisode,
}

/// Environment configuration. Defaults: 32 documents per query, RRF constant
/// 60, BM25 k1 = 1.2 and b = 0.75, and a 4x fusion candidate pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub top_k: usize,
    pub rrf_k: f64,
    pub bm25_k1: f64,
    pub bm25_b: f64,
    /// Each retriever contributes its top `fusion_pool_multiplier * top_k`
    /// entries to the fusion pool before truncation.
    pub fusion_pool_multiplier: usize,
    pub dense_failure_policy: DenseFailurePolicy,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            top_k: 32,
            rrf_k: 60.0,
            bm25_k1: 1.2,
            bm25_b: 0.75,
            fusion_pool_multiplier: 4,
            dense_failure_policy: DenseFailurePolicy::DegradeToLexical,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        if self.top_k < 1 {
            return Err(EnvError::InvalidTopK(self.top_k));
        }
        if !(self.rrf_k > 0.0) {
            return Err(EnvError::DenseEndpoint(format!(
                "rrf_k must be positive, got {}",
                self.rrf_k
            )));
        }
        Ok(())
    }
}

/// A semantic retriever resolved outside the lexical index.
pub trait DenseRetriever: Send + Sync {
    fn search(&self, query: &str, top_k: usize) -> Result<RankedList, EnvError>;
}

/// Dense retriever over the HTTP wire contract:
/// request `{query, top_k}`, response `{entries: [{doc_id, score}]}`.
pub struct HttpDenseRetriever {
    url: String,
    client: reqwest::blocking::Client,
}

impl HttpDenseRetriever {
    pub fn new(url: &str) -> Result<Self, EnvError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(30))
            .build()
            .map_err(|e| EnvError::DenseEndpoint(format!("client build failed: {e}")))?;
        Ok(HttpDenseRetriever {
            url: url.to_string(),
            client,
        })
    }
}

impl DenseRetriever for HttpDenseRetriever {
    fn search(&self, query: &str, top_k: usize) -> Result<RankedList, EnvError> {
        #[derive(Serialize)]
        struct Request<'a> {
            query: &'a str,
            top_k: usize,
        }
        let response = self
            .client
            .post(&self.url)
            .json(&Request { query, top_k })
            .send()
            .map_err(|e| EnvError::DenseEndpoint(e.to_string()))?;
        if !response.status().is_success() {
            return Err(EnvError::DenseEndpoint(format!(
                "status {}",
                response.status()
            )));
        }
        let list: RankedList = response
            .json()
            .map_err(|e| EnvError::DenseEndpoint(format!("malformed response: {e}")))?;
        Ok(list)
    }
}

/// The retrieval environment: a built lexical index, optional dense
/// retriever, and the fixed retrieval configuration.
pub struct Environment {
    index: LexicalIndex,
    config: EnvConfig,
    dense: Option<Box<dyn DenseRetriever>>,
}

/// Builds a lexical index from a corpus document stream.
///
/// Fails on duplicate doc ids and on documents with empty text. An empty
/// stream yields an empty index whose searches return empty lists.
pub fn ingest_corpus<I>(source: I) -> Result<LexicalIndex, EnvError>
where
    I: IntoIterator<Item = CorpusDocument>,
{
    let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
    let mut docs: Vec<IndexedDoc> = Vec::new();
    let mut by_id: BTreeMap<String, u32> = BTreeMap::new();
    let mut total_tokens: u64 = 0;

    for doc in source {
        if doc.text.trim().is_empty() {
            return Err(EnvError::EmptyDocument(doc.doc_id));
        }
        if by_id.contains_key(&doc.doc_id) {
            return Err(EnvError::DuplicateDocId(doc.doc_id));
        }
        let doc_index = docs.len() as u32;
        let tokens = tokenize(&format!("{} {}", doc.title, doc.text));
        let mut counts: BTreeMap<String, u32> = BTreeMap::new();
        for t in tokens.iter() {
            *counts.entry(t.clone()).or_insert(0) += 1;
        }
        for (term, tf) in counts {
            postings.entry(term).or_default().push((doc_index, tf));
        }
        total_tokens += tokens.len() as u64;
        by_id.insert(doc.doc_id.clone(), doc_index);
        docs.push(IndexedDoc {
            doc_id: doc.doc_id,
            title: doc.title,
            text: doc.text,
            length: tokens.len() as u64,
        });
    }
    Ok(LexicalIndex {
        postings,
        docs,
        by_id,
        total_tokens,
    })
}

/// Reads a JSONL corpus of `{doc_id, title, text}` records.
pub fn read_corpus_jsonl(path: &Path) -> Result<Vec<CorpusDocument>, EnvError> {
    let file = std::fs::File::open(path)?;
    let mut docs = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc = serde_json::from_str(&line)
            .map_err(|source| EnvError::Malformed { line: i + 1, source })?;
        docs.push(doc);
    }
    Ok(docs)
}

/// BM25 search over the index.
///
/// Scores use the configured `k1`/`b` with the log-(1+odds) IDF variant.
/// The result order is deterministic: score descending, then doc id
/// ascending.
pub fn bm25_search(
    index: &LexicalIndex,
    query: &str,
    top_k: usize,
    k1: f64,
    b: f64,
) -> Result<RankedList, EnvError> {
    if top_k < 1 {
        return Err(EnvError::InvalidTopK(top_k));
    }
    let query_tokens = tokenize(query);
    if query_tokens.is_empty() || index.docs.is_empty() {
        return Ok(RankedList { entries: Vec::new() });
    }
    let n = index.docs.len() as f64;
    let avgdl = index.avg_doc_length();
    let mut scores: Vec<f64> = vec![0.0; index.docs.len()];
    let mut touched: Vec<bool> = vec![false; index.docs.len()];

    for token in &query_tokens {
        let Some(postings) = index.postings.get(token) else {
            continue;
        };
        let df = postings.len() as f64;
        let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
        for &(doc_index, tf) in postings {
            let dl = index.docs[doc_index as usize].length as f64;
            let tf = f64::from(tf);
            let tf_norm = (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * dl / avgdl));
            scores[doc_index as usize] += idf * tf_norm;
            touched[doc_index as usize] = true;
        }
    }

    let mut entries: Vec<RankedEntry> = scores
        .iter()
        .enumerate()
        .filter(|&(i, _)| touched[i])
        .map(|(i, &score)| RankedEntry {
            doc_id: index.docs[i].doc_id.clone(),
            score,
        })
        .collect();
    sort_ranked(&mut entries);
    entries.truncate(top_k);
    Ok(RankedList { entries })
}

/// Reciprocal rank fusion of ranked lists.
///
/// Each document's fused score is the sum over lists containing it of
/// `1 / (rrf_k + rank)` with ranks starting at 1; ties break by ascending
/// doc id; the fused list is truncated to `top_k`.
pub fn rrf_fuse(lists: &[RankedList], rrf_k: f64, top_k: usize) -> RankedList {
    let mut fused: BTreeMap<&str, f64> = BTreeMap::new();
    for list in lists {
        for (rank0, entry) in list.entries.iter().enumerate() {
            let contribution = 1.0 / (rrf_k + (rank0 + 1) as f64);
            *fused.entry(entry.doc_id.as_str()).or_insert(0.0) += contribution;
        }
    }
    let mut entries: Vec<RankedEntry> = fused
        .into_iter()
        .map(|(doc_id, score)| RankedEntry {
            doc_id: doc_id.to_string(),
            score,
        })
        .collect();
    sort_ranked(&mut entries);
    entries.truncate(top_k);
    RankedList { entries }
}

fn sort_ranked(entries: &mut [RankedEntry]) {
    entries.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.doc_id.cmp(&b.doc_id))
    });
}

impl Environment {
    pub fn new(
        index: LexicalIndex,
        config: EnvConfig,
        dense: Option<Box<dyn DenseRetriever>>,
    ) -> Result<Self, EnvError> {
        config.validate()?;
        Ok(Environment {
            index,
            config,
            dense,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn index(&self) -> &LexicalIndex {
        &self.index
    }

    /// Retrieves the fixed top-k documents for a query.
    ///
    /// With a dense retriever configured, the lexical and dense lists are
    /// merged with reciprocal rank fusion over each retriever's top
    /// `fusion_pool_multiplier * top_k` candidates; otherwise the lexical
    /// ranking is used directly.
    pub fn retrieve(&self, query: &str) -> Result<Vec<Document>, EnvError> {
        let cfg = &self.config;
        let pool = cfg.top_k * cfg.fusion_pool_multiplier.max(1);
        let lexical = bm25_search(&self.index, query, pool, cfg.bm25_k1, cfg.bm25_b)?;
        let ranked = match &self.dense {
            None => {
                let mut l = lexical;
                l.entries.truncate(cfg.top_k);
                l
            }
            Some(dense) => match dense.search(query, pool) {
                Ok(mut dense_list) => {
                    // Fusion is over corpus documents; unknown ids cannot be
                    // resolved to text and are dropped from the dense list.
                    dense_list
                        .entries
                        .retain(|e| self.index.lookup(&e.doc_id).is_some());
                    rrf_fuse(&[lexical, dense_list], cfg.rrf_k, cfg.top_k)
                }
                Err(e) => match cfg.dense_failure_policy {
                    DenseFailurePolicy::DegradeToLexical => {
                        log::warn!("dense retrieval degraded to lexical for {query:?}: {e}");
                        let mut l = lexical;
                        l.entries.truncate(cfg.top_k);
                        l
                    }
                    DenseFailurePolicy::FailEpisode => return Err(e),
                },
            },
        };
        Ok(ranked
            .entries
            .into_iter()
            .map(|entry| {
                let (title, text) = self
                    .index
                    .lookup(&entry.doc_id)
                    .expect("ranked doc ids come from the index");
                Document {
                    doc_id: entry.doc_id,
                    title: title.to_string(),
                    text: text.to_string(),
                    score: entry.score,
                }
            })
            .collect())
    }
}

impl Retriever for Environment {
    fn retrieve(&self, query: &str) -> Result<Vec<Document>, RetrievalFailure> {
        Environment::retrieve(self, query).map_err(|e| RetrievalFailure {
            query: query.to_string(),
            reason: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn corpus3() -> Vec<CorpusDocument> {
        vec![
            CorpusDocument {
                doc_id: "A".into(),
                title: "".into(),
                text: "alpha beta".into(),
            },
            CorpusDocument {
                doc_id: "B".into(),
                title: "".into(),
                text: "gamma".into(),
            },
            CorpusDocument {
                doc_id: "C".into(),
                title: "".into(),
                text: "alpha".into(),
            },
        ]
    }

    #[test]
    fn ingest_counts_documents() {
        let index = ingest_corpus(corpus3()).unwrap();
        assert_eq!(index.doc_count(), 3);
        assert!((index.avg_doc_length() - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn ingest_rejects_duplicate_ids() {
        let mut docs = corpus3();
        docs.push(CorpusDocument {
            doc_id: "A".into(),
            title: "".into(),
            text: "again".into(),
        });
        match ingest_corpus(docs) {
            Err(EnvError::DuplicateDocId(id)) => assert_eq!(id, "A"),
            other => panic!("expected duplicate-id error, got {other:?}"),
        }
    }

    #[test]
    fn empty_corpus_searches_return_empty() {
        let index = ingest_corpus(Vec::new()).unwrap();
        assert_eq!(index.doc_count(), 0);
        let list = bm25_search(&index, "anything", 10, 1.2, 0.75).unwrap();
        assert!(list.is_empty());
    }

    #[test]
    fn bm25_worked_example() {
        // Hand evaluation with k1 = 1.2, b = 0.75 on the 3-document corpus:
        // idf(alpha) = ln(1.6), idf(beta) = ln(8/3), avgdl = 4/3.
        // A: both terms, dl = 2 -> tf_norm = 2.2 / 2.65 each.
        // C: alpha only, dl = 1 -> tf_norm = 2.2 / 1.975.
        let index = ingest_corpus(corpus3()).unwrap();
        let list = bm25_search(&index, "alpha beta", 10, 1.2, 0.75).unwrap();
        assert_eq!(list.entries[0].doc_id, "A");
        let expected_a = (1.6f64.ln() + (8.0f64 / 3.0).ln()) * (2.2 / 2.65);
        let expected_c = 1.6f64.ln() * (2.2 / 1.975);
        assert!((list.entries[0].score - expected_a).abs() < 1e-12);
        assert_eq!(list.entries[1].doc_id, "C");
        assert!((list.entries[1].score - expected_c).abs() < 1e-12);
        assert_eq!(list.len(), 2);
    }

    #[test]
    fn bm25_unknown_terms_return_empty() {
        let index = ingest_corpus(corpus3()).unwrap();
        let list = bm25_search(&index, "zeta eta", 10, 1.2, 0.75).unwrap();
        assert!(list.is_empty());
    }

    #[test]
    fn bm25_scores_non_increasing() {
        let index = ingest_corpus(corpus3()).unwrap();
        let list = bm25_search(&index, "alpha beta gamma", 10, 1.2, 0.75).unwrap();
        for pair in list.entries.windows(2) {
            assert!(pair[0].score >= pair[1].score);
        }
    }

    fn list_of(ids: &[&str]) -> RankedList {
        RankedList {
            entries: ids
                .iter()
                .enumerate()
                .map(|(i, id)| RankedEntry {
                    doc_id: (*id).into(),
                    score: 100.0 - i as f64,
                })
                .collect(),
        }
    }

    #[test]
    fn rrf_worked_values() {
        let fused = rrf_fuse(&[list_of(&["x", "y"]), list_of(&["x", "z"])], 60.0, 10);
        let x = fused.entries.iter().find(|e| e.doc_id == "x").unwrap();
        assert!((x.score - 2.0 / 61.0).abs() < 1e-12);
        let z = fused.entries.iter().find(|e| e.doc_id == "z").unwrap();
        assert!((z.score - 1.0 / 62.0).abs() < 1e-12);
    }

    #[test]
    fn rrf_single_list_preserves_order() {
        let input = list_of(&["p", "q", "r"]);
        let fused = rrf_fuse(std::slice::from_ref(&input), 60.0, 10);
        let order: Vec<&str> = fused.entries.iter().map(|e| e.doc_id.as_str()).collect();
        assert_eq!(order, vec!["p", "q", "r"]);
    }

    fn env_from(docs: Vec<CorpusDocument>, top_k: usize) -> Environment {
        let index = ingest_corpus(docs).unwrap();
        Environment::new(
            index,
            EnvConfig {
                top_k,
                ..EnvConfig::default()
            },
            None,
        )
        .unwrap()
    }

    #[test]
    fn retrieve_is_bounded_by_availability() {
        let env = env_from(corpus3(), 32);
        let docs = env.retrieve("alpha beta gamma").unwrap();
        assert!(docs.len() <= 3);
    }

    #[test]
    fn retrieve_is_deterministic() {
        let env = env_from(corpus3(), 32);
        let a: Vec<String> = env
            .retrieve("alpha")
            .unwrap()
            .into_iter()
            .map(|d| d.doc_id)
            .collect();
        let b: Vec<String> = env
            .retrieve("alpha")
            .unwrap()
            .into_iter()
            .map(|d| d.doc_id)
            .collect();
        assert_eq!(a, b);
    }

    struct FailingDense;
    impl DenseRetriever for FailingDense {
        fn search(&self, _query: &str, _top_k: usize) -> Result<RankedList, EnvError> {
            Err(EnvError::DenseEndpoint("unreachable".into()))
        }
    }

    #[test]
    fn dense_failure_degrades_to_lexical_by_default() {
        let index = ingest_corpus(corpus3()).unwrap();
        let env =
            Environment::new(index, EnvConfig::default(), Some(Box::new(FailingDense))).unwrap();
        let docs = env.retrieve("alpha").unwrap();
        assert!(!docs.is_empty());
    }

    #[test]
    fn dense_failure_can_fail_the_episode() {
        let index = ingest_corpus(corpus3()).unwrap();
        let env = Environment::new(
            index,
            EnvConfig {
                dense_failure_policy: DenseFailurePolicy::FailEpisode,
                ..EnvConfig::default()
            },
            Some(Box::new(FailingDense)),
        )
        .unwrap();
        assert!(env.retrieve("alpha").is_err());
    }

    struct FixedDense(RankedList);
    impl DenseRetriever for FixedDense {
        fn search(&self, _query: &str, _top_k: usize) -> Result<RankedList, EnvError> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn hybrid_retrieval_matches_brute_force_rrf() {
        let index = ingest_corpus(corpus3()).unwrap();
        let cfg = EnvConfig::default();
        let lexical = bm25_search(&index, "alpha beta", cfg.top_k * 4, 1.2, 0.75).unwrap();
        let dense = list_of(&["C", "B"]);
        let expected = rrf_fuse(&[lexical, dense.clone()], cfg.rrf_k, cfg.top_k);
        let env = Environment::new(index, cfg, Some(Box::new(FixedDense(dense)))).unwrap();
        let got: Vec<String> = env
            .retrieve("alpha beta")
            .unwrap()
            .into_iter()
            .map(|d| d.doc_id)
            .collect();
        let want: Vec<String> = expected.entries.into_iter().map(|e| e.doc_id).collect();
        assert_eq!(got, want);
    }

    proptest! {
        #[test]
        fn ingestion_order_does_not_change_results(seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            let mut docs = corpus3();
            docs.push(CorpusDocument { doc_id: "D".into(), title: "t".into(), text: "alpha alpha beta delta".into() });
            let mut shuffled = docs.clone();
            let mut rng = crate::seed::rng_for(seed, "shuffle");
            shuffled.shuffle(&mut rng);
            let a = ingest_corpus(docs).unwrap();
            let b = ingest_corpus(shuffled).unwrap();
            let qa = bm25_search(&a, "alpha beta", 10, 1.2, 0.75).unwrap();
            let qb = bm25_search(&b, "alpha beta", 10, 1.2, 0.75).unwrap();
            let ids_a: Vec<&str> = qa.entries.iter().map(|e| e.doc_id.as_str()).collect();
            let ids_b: Vec<&str> = qb.entries.iter().map(|e| e.doc_id.as_str()).collect();
            prop_assert_eq!(ids_a, ids_b);
            for (x, y) in qa.entries.iter().zip(qb.entries.iter()) {
                prop_assert!((x.score - y.score).abs() < 1e-12);
            }
        }

        #[test]
        fn rrf_is_scale_invariant(factor in 0.001f64..1000.0) {
            let base = vec![list_of(&["a", "b", "c"]), list_of(&["c", "a"])];
            let scaled: Vec<RankedList> = base
                .iter()
                .map(|l| RankedList {
                    entries: l
                        .entries
                        .iter()
                        .map(|e| RankedEntry { doc_id: e.doc_id.clone(), score: e.score * factor })
                        .collect(),
                })
                .collect();
            let fused_base = rrf_fuse(&base, 60.0, 10);
            let fused_scaled = rrf_fuse(&scaled, 60.0, 10);
            prop_assert_eq!(fused_base, fused_scaled);
        }

        #[test]
        fn retrieve_never_exceeds_top_k_or_duplicates(top_k in 1usize..6) {
            let env = env_from(corpus3(), top_k);
            let docs = env.retrieve("alpha beta gamma").unwrap();
            prop_assert!(docs.len() <= top_k);
            let mut ids: Vec<&str> = docs.iter().map(|d| d.doc_id.as_str()).collect();
            ids.sort_unstable();
            let before = ids.len();
            ids.dedup();
            prop_assert_eq!(before, ids.len());
        }
    }
}
