//! Synthetic data generators shared by the benchmarks.

use rand::Rng;

use raggym_core::critic::{PreferenceTuple, TupleSource};
use raggym_core::mdp::{initial_state, Action, Question, TaskKind};
use raggym_core::retrieval::CorpusDocument;
use raggym_core::seed::rng_for;

const WORDS: &[&str] = &[
    "retrieval", "ranking", "query", "document", "corpus", "fusion", "lexical", "semantic",
    "answer", "question", "history", "summary", "search", "hop", "evidence", "claim", "reward",
    "critic", "action", "state", "agent", "episode", "index", "token", "score",
];

fn sentence(rng: &mut impl Rng, len: usize) -> String {
    (0..len)
        .map(|_| WORDS[rng.random_range(0..WORDS.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

/// A synthetic corpus of `n` documents with 30–80 word bodies.
pub fn synthetic_corpus(n: usize, seed: u64) -> Vec<CorpusDocument> {
    let mut rng = rng_for(seed, "bench-corpus");
    (0..n)
        .map(|i| {
            let len = rng.random_range(30..80);
            CorpusDocument {
                doc_id: format!("doc{i}"),
                title: sentence(&mut rng, 3),
                text: sentence(&mut rng, len),
            }
        })
        .collect()
}

/// Synthetic queries drawn from the corpus vocabulary.
pub fn synthetic_queries(n: usize, seed: u64) -> Vec<String> {
    let mut rng = rng_for(seed, "bench-queries");
    (0..n)
        .map(|_| {
            let len = rng.random_range(2..6);
            sentence(&mut rng, len)
        })
        .collect()
}

/// A separable preference dataset for trainer benchmarks.
pub fn synthetic_tuples(n: usize, seed: u64) -> Vec<PreferenceTuple> {
    let mut rng = rng_for(seed, "bench-tuples");
    (0..n)
        .map(|i| {
            let context = sentence(&mut rng, 12);
            PreferenceTuple {
                state: initial_state(&Question {
                    id: format!("b{i}"),
                    text: format!("{context}?"),
                    task_kind: TaskKind::OpenQa,
                    choices: Vec::new(),
                    gold: None,
                })
                .expect("bench question is valid"),
                preferred: Action::Search(format!("focused {}", sentence(&mut rng, 4))),
                rejected: Action::Search(format!("rambling {}", sentence(&mut rng, 4))),
                source: TupleSource::LlmAnnotation,
            }
        })
        .collect()
}
