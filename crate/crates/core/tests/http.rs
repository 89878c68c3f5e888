use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use rag_repair::repair::{HttpLlmClient, HttpLlmConfig, LlmClient, LlmError};
use rag_repair::retrieval::{Embedder, HttpEmbedder, RetrievalError};
use serde_json::Value;

struct Captured {
    headers: Vec<String>,
    body: Value,
}

/// Serves one request with a canned status and body, returning what it saw.
fn serve_once(status: &'static str, body: &'static str) -> (String, JoinHandle<Captured>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let handle = thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut headers = Vec::new();
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let line = line.trim_end().to_string();
            if line.is_empty() {
                break;
            }
            headers.push(line);
        }
        let length = headers
            .iter()
            .find_map(|h| h.to_ascii_lowercase().strip_prefix("content-length:").map(|v| v.trim().parse::<usize>().unwrap()))
            .unwrap_or(0);
        let mut raw = vec![0; length];
        reader.read_exact(&mut raw).unwrap();
        let mut stream = stream;
        write!(
            stream,
            "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
            body.len()
        )
        .unwrap();
        Captured {
            headers,
            body: serde_json::from_slice(&raw).unwrap(),
        }
    });
    (url, handle)
}

fn dead_url() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    format!("http://{}/v1", listener.local_addr().unwrap())
}

fn llm_config(url: String, api_key: Option<String>) -> HttpLlmConfig {
    HttpLlmConfig {
        url,
        model: "test-model".into(),
        api_key,
        temperature: 0.0,
        max_tokens: 64,
        timeout: Duration::from_secs(5),
    }
}

#[test]
fn llm_request_shape_and_reply() {
    let (url, server) = serve_once("200 OK", r#"{"text":"Command: kubectl get pods"}"#);
    let client = HttpLlmClient::new(llm_config(url, Some("sekret".into()))).unwrap();
    assert_eq!(client.model_id(), "test-model");
    assert_eq!(client.generate("fix it").unwrap(), "Command: kubectl get pods");
    let seen = server.join().unwrap();
    assert_eq!(seen.body["model"], "test-model");
    assert_eq!(seen.body["prompt"], "fix it");
    assert_eq!(seen.body["max_tokens"], 64);
    assert_eq!(seen.body["temperature"], 0.0);
    assert!(seen.headers.iter().any(|h| h.eq_ignore_ascii_case("authorization: Bearer sekret")));
}

#[test]
fn llm_blank_reply_is_empty() {
    let (url, server) = serve_once("200 OK", r#"{"text":"  \n"}"#);
    let client = HttpLlmClient::new(llm_config(url, None)).unwrap();
    assert_eq!(client.generate("p"), Err(LlmError::Empty));
    let seen = server.join().unwrap();
    assert!(!seen.headers.iter().any(|h| h.to_ascii_lowercase().starts_with("authorization")));
}

#[test]
fn llm_server_error_is_request_failure() {
    let (url, server) = serve_once("500 Internal Server Error", "{}");
    let client = HttpLlmClient::new(llm_config(url, None)).unwrap();
    assert!(matches!(client.generate("p"), Err(LlmError::Request(_))));
    server.join().unwrap();
}

#[test]
fn llm_unreachable() {
    let client = HttpLlmClient::new(llm_config(dead_url(), None)).unwrap();
    assert!(matches!(client.generate("p"), Err(LlmError::Unavailable(_))));
}

#[test]
fn embedder_batch_round_trip() {
    let (url, server) = serve_once("200 OK", r#"{"vectors":[[1.0,0.0,0.5],[0.0,2.0,0.0]]}"#);
    let embedder = HttpEmbedder::new(url, Some("k".into()), 3, Duration::from_secs(5)).unwrap();
    let out = embedder.embed_batch(&["a", "b"]).unwrap();
    assert_eq!(out[0].values(), &[1.0, 0.0, 0.5]);
    assert_eq!(out[1].values(), &[0.0, 2.0, 0.0]);
    let seen = server.join().unwrap();
    assert_eq!(seen.body["texts"], serde_json::json!(["a", "b"]));
    assert!(seen.headers.iter().any(|h| h.eq_ignore_ascii_case("authorization: Bearer k")));
}

#[test]
fn embedder_rejects_wrong_dims_and_counts() {
    let (url, server) = serve_once("200 OK", r#"{"vectors":[[1.0,2.0]]}"#);
    let embedder = HttpEmbedder::new(url, None, 3, Duration::from_secs(5)).unwrap();
    assert!(matches!(embedder.embed("a"), Err(RetrievalError::Dimension { .. })));
    server.join().unwrap();

    let (url, server) = serve_once("200 OK", r#"{"vectors":[]}"#);
    let embedder = HttpEmbedder::new(url, None, 3, Duration::from_secs(5)).unwrap();
    assert!(matches!(embedder.embed_batch(&["a"]), Err(RetrievalError::Embed(_))));
    server.join().unwrap();
}

#[test]
fn embedder_unreachable() {
    let embedder = HttpEmbedder::new(dead_url(), None, 3, Duration::from_secs(5)).unwrap();
    assert!(matches!(embedder.embed("a"), Err(RetrievalError::Unavailable(_))));
}
