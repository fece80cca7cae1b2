//! Wire-contract tests for the three HTTP interfaces (dense retrieval,
//! chat completion, critic scoring) against minimal loopback servers.

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener};
use std::sync::mpsc;
use std::thread::JoinHandle;

use raggym_core::critic::{ActionScorer, EndpointCritic, FeatureExtractor, FeatureScheme};
use raggym_core::gateway::{
    ChatBackend, ChatRequest, GatewayError, GenerationConfig, HttpChatBackend, RetryConfig,
    RoleKind,
};
use raggym_core::mdp::{initial_state, Action, Question, TaskKind};
use raggym_core::retrieval::{DenseRetriever, HttpDenseRetriever};

/// Serves one HTTP response per entry of `responses` on a fresh loopback
/// port, sending each received request body through the channel.
fn serve(responses: Vec<(u16, String)>) -> (SocketAddr, mpsc::Receiver<String>, JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind loopback");
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = mpsc::channel();
    let handle = std::thread::spawn(move || {
        for (status, body) in responses {
            let (mut stream, _) = listener.accept().expect("accept");
            let mut buf = Vec::new();
            let mut chunk = [0u8; 4096];
            let request = loop {
                let n = stream.read(&mut chunk).expect("read");
                buf.extend_from_slice(&chunk[..n]);
                let text = String::from_utf8_lossy(&buf).to_string();
                if let Some(header_end) = text.find("\r\n\r\n") {
                    let content_length = text
                        .lines()
                        .find_map(|l| l.to_lowercase().strip_prefix("content-length:").map(str::trim).map(String::from))
                        .and_then(|v| v.parse::<usize>().ok())
                        .unwrap_or(0);
                    if buf.len() >= header_end + 4 + content_length {
                        break text[header_end + 4..].to_string();
                    }
                }
                if n == 0 {
                    break text;
                }
            };
            tx.send(request).ok();
            let reason = if status == 200 { "OK" } else { "Error" };
            let response = format!(
                "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(response.as_bytes()).expect("write");
        }
    });
    (addr, rx, handle)
}

fn question() -> Question {
    Question {
        id: "w".into(),
        text: "wire question?".into(),
        task_kind: TaskKind::OpenQa,
        choices: Vec::new(),
        gold: None,
    }
}

#[test]
fn dense_endpoint_round_trip() {
    let body = r#"{"entries":[{"doc_id":"d1","score":0.9},{"doc_id":"d2","score":0.4}]}"#;
    let (addr, rx, handle) = serve(vec![(200, body.to_string())]);
    let retriever = HttpDenseRetriever::new(&format!("http://{addr}/search")).unwrap();
    let list = retriever.search("dense query", 8).unwrap();
    assert_eq!(list.entries.len(), 2);
    assert_eq!(list.entries[0].doc_id, "d1");
    assert_eq!(list.entries[0].score, 0.9);
    // Request carries {query, top_k}.
    let request: serde_json::Value = serde_json::from_str(&rx.recv().unwrap()).unwrap();
    assert_eq!(request["query"], "dense query");
    assert_eq!(request["top_k"], 8);
    handle.join().unwrap();
}

#[test]
fn chat_backend_parses_openai_completions_and_sends_messages() {
    let body = r#"{"choices":[{"message":{"content":"first"}},{"message":{"content":"second"}}]}"#;
    let (addr, rx, handle) = serve(vec![(200, body.to_string())]);
    let backend = HttpChatBackend::new(
        &format!("http://{addr}/v1/chat/completions"),
        "demo-model",
        RetryConfig {
            max_retries: 0,
            base_delay_ms: 1,
            max_delay_ms: 1,
        },
        2,
    )
    .unwrap();
    let request = ChatRequest {
        system: "sys".into(),
        user: "hello".into(),
        generation: GenerationConfig::sampled(2, 1.0, 64, 5),
    };
    let completions = backend.complete(RoleKind::Actor, &request).unwrap();
    assert_eq!(completions, vec!["first", "second"]);

    let sent: serde_json::Value = serde_json::from_str(&rx.recv().unwrap()).unwrap();
    assert_eq!(sent["model"], "demo-model");
    assert_eq!(sent["n"], 2);
    assert_eq!(sent["messages"][0]["role"], "system");
    assert_eq!(sent["messages"][1]["content"], "hello");
    assert_eq!(sent["seed"], 5);
    handle.join().unwrap();
}

#[test]
fn chat_backend_retries_on_server_errors() {
    let ok = r#"{"choices":[{"message":{"content":"recovered"}}]}"#;
    let (addr, _rx, handle) = serve(vec![
        (500, r#"{"error":"overloaded"}"#.to_string()),
        (200, ok.to_string()),
    ]);
    let backend = HttpChatBackend::new(
        &format!("http://{addr}/v1/chat/completions"),
        "demo",
        RetryConfig {
            max_retries: 2,
            base_delay_ms: 1,
            max_delay_ms: 2,
        },
        1,
    )
    .unwrap();
    let request = ChatRequest {
        system: String::new(),
        user: "retry me".into(),
        generation: GenerationConfig::greedy(32),
    };
    let completions = backend.complete(RoleKind::Actor, &request).unwrap();
    assert_eq!(completions, vec!["recovered"]);
    handle.join().unwrap();
}

#[test]
fn chat_backend_exhausts_retries_without_partial_results() {
    let (addr, _rx, handle) = serve(vec![
        (500, "{}".to_string()),
        (500, "{}".to_string()),
        (500, "{}".to_string()),
    ]);
    let backend = HttpChatBackend::new(
        &format!("http://{addr}/v1/chat/completions"),
        "demo",
        RetryConfig {
            max_retries: 2,
            base_delay_ms: 1,
            max_delay_ms: 2,
        },
        1,
    )
    .unwrap();
    let request = ChatRequest {
        system: String::new(),
        user: "doomed".into(),
        generation: GenerationConfig::greedy(32),
    };
    match backend.complete(RoleKind::Actor, &request) {
        Err(GatewayError::Exhausted { digest, .. }) => assert!(!digest.is_empty()),
        other => panic!("expected exhausted-retries error, got {other:?}"),
    }
    handle.join().unwrap();
}

#[test]
fn critic_endpoint_round_trip() {
    let (addr, rx, handle) = serve(vec![(200, r#"{"score":1.25}"#.to_string())]);
    let critic = EndpointCritic::new(&format!("http://{addr}/score")).unwrap();
    let state = initial_state(&question()).unwrap();
    let score = critic
        .score(&state, &Action::Search("next hop".into()))
        .unwrap();
    assert_eq!(score, 1.25);
    let sent: serde_json::Value = serde_json::from_str(&rx.recv().unwrap()).unwrap();
    assert!(sent["state_text"].as_str().unwrap().contains("wire question?"));
    assert_eq!(sent["action_text"], "search: next hop");
    handle.join().unwrap();
}

#[test]
fn critic_endpoint_failure_is_a_scoring_error() {
    let (addr, _rx, handle) = serve(vec![(503, "{}".to_string())]);
    let critic = EndpointCritic::new(&format!("http://{addr}/score")).unwrap();
    let state = initial_state(&question()).unwrap();
    assert!(critic.score(&state, &Action::Answer("x".into())).is_err());
    handle.join().unwrap();
}

#[test]
fn embedding_endpoint_features_respect_the_dimension() {
    let embedding: Vec<f64> = (0..8).map(|i| i as f64 * 0.5).collect();
    let body = serde_json::json!({ "embedding": embedding }).to_string();
    let (addr, _rx, handle) = serve(vec![(200, body)]);
    let extractor = FeatureExtractor {
        scheme: FeatureScheme::EndpointEmbedding {
            url: format!("http://{addr}/embed"),
        },
        dimension: 8,
    };
    let state = initial_state(&question()).unwrap();
    let features = extractor.extract(&state, &Action::Answer("x".into())).unwrap();
    // Zero entries are dropped from the sparse form.
    assert_eq!(features.entries.len(), 7);
    assert_eq!(features.entries[0], (1, 0.5));
    handle.join().unwrap();

    let (addr, _rx, handle) = serve(vec![(200, r#"{"embedding":[1.0,2.0]}"#.to_string())]);
    let extractor = FeatureExtractor {
        scheme: FeatureScheme::EndpointEmbedding {
            url: format!("http://{addr}/embed"),
        },
        dimension: 8,
    };
    assert!(extractor.extract(&state, &Action::Answer("x".into())).is_err());
    handle.join().unwrap();
}
