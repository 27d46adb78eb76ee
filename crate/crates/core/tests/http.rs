//! HTTP backends against an in-process fake server that answers with the
//! mock backends.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde_json::{json, Value};
use storyweave::backends::http::wire::*;
use storyweave::backends::http::{http_backends, HttpConfig, ModelServerClient};
use storyweave::backends::mock::mock_backends;
use storyweave::backends::{BackendError, Backends, GenParams, RetryPolicy};
use storyweave::config::Config;
use storyweave::orchestrator::Mode;

struct Request {
    method: String,
    path: String,
    headers: Vec<(String, String)>,
    body: Value,
}

impl Request {
    fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

type Handler = dyn Fn(&Request) -> (u16, String) + Send + Sync;

struct FakeServer {
    url: String,
    hits: Arc<AtomicUsize>,
    seen: Arc<Mutex<Vec<(String, Value)>>>,
}

fn read_request(stream: &mut TcpStream) -> Option<Request> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    let mut parts = line.split_whitespace();
    let method = parts.next()?.to_string();
    let path = parts.next()?.to_string();
    let mut headers = Vec::new();
    loop {
        let mut h = String::new();
        reader.read_line(&mut h).ok()?;
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            headers.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    let len: usize = headers
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
        .and_then(|(_, v)| v.parse().ok())
        .unwrap_or(0);
    let mut body = vec![0; len];
    reader.read_exact(&mut body).ok()?;
    Some(Request {
        method,
        path,
        headers,
        body: serde_json::from_slice(&body).unwrap_or(Value::Null),
    })
}

fn serve(handler: Arc<Handler>) -> FakeServer {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let seen = Arc::new(Mutex::new(Vec::new()));
    let (h2, s2) = (hits.clone(), seen.clone());
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let (handler, hits, seen) = (handler.clone(), h2.clone(), s2.clone());
            std::thread::spawn(move || {
                let Some(req) = read_request(&mut stream) else { return };
                hits.fetch_add(1, Ordering::SeqCst);
                seen.lock().unwrap().push((req.path.clone(), req.body.clone()));
                let (status, body) = handler(&req);
                let _ = write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
            });
        }
    });
    FakeServer { url, hits, seen }
}

fn from<T: serde::de::DeserializeOwned>(v: &Value) -> T {
    serde_json::from_value(v.clone()).expect("request matches wire schema")
}

/// Answers every endpoint from the mock backends.
fn mock_handler(seed: u64) -> Arc<Handler> {
    let m = mock_backends(seed);
    Arc::new(move |req: &Request| {
        let ok = |v: Value| (200, v.to_string());
        if req.method == "GET" && req.path == "/healthz" {
            return ok(json!({"status": "ok"}));
        }
        match req.path.as_str() {
            "/v1/completions" => {
                let r: CompletionRequest = from(&req.body);
                let mut p = GenParams::new(r.max_tokens, r.temperature, r.n);
                p.stop_sequences = r.stop;
                let texts = match &r.suffix {
                    Some(s) => vec![m.lm.insert(&r.prompt, s, &p).unwrap()],
                    None => m.lm.complete(&r.prompt, &p).unwrap(),
                };
                let choices: Vec<Value> = texts
                    .into_iter()
                    .enumerate()
                    .rev()
                    .map(|(index, text)| json!({"text": text, "index": index}))
                    .collect();
                ok(json!({ "choices": choices }))
            }
            "/v1/edits" => {
                let r: EditRequest = from(&req.body);
                ok(json!({"choices": [{"text": m.lm.edit(&r.input, &r.instruction).unwrap(), "index": 0}]}))
            }
            "/score/coherence" => {
                let r: CoherenceRequest = from(&req.body);
                ok(json!({"probability": m.scorer.coherence(&r.prefix, &r.continuation).unwrap()}))
            }
            "/score/relevance" => {
                let r: RelevanceRequest = from(&req.body);
                ok(json!({"probability": m.scorer.relevance(&r.summary, &r.passage).unwrap()}))
            }
            "/entail" => {
                let r: EntailRequest = from(&req.body);
                let v = m.nli.entail(&r.premise, &r.hypothesis).unwrap();
                ok(json!({"entailment": v.p_entail, "neutral": v.p_neutral, "contradiction": v.p_contradict}))
            }
            "/embed" => {
                let r: EmbedRequest = from(&req.body);
                ok(json!({"embeddings": m.embedder.embed(&r.texts).unwrap()}))
            }
            "/qa" => {
                let r: QaRequest = from(&req.body);
                let a = m.qa.answer(&r.question, &r.context).unwrap();
                ok(json!({"answer": a.answer, "confidence": a.confidence}))
            }
            "/ner" => {
                let r: NerRequest = from(&req.body);
                let e: Vec<Value> = m
                    .ner
                    .detect_entities(&r.text)
                    .unwrap()
                    .into_iter()
                    .map(|e| json!({"text": e.surface, "is_person": e.is_person}))
                    .collect();
                ok(json!({ "entities": e }))
            }
            _ => (404, "{}".into()),
        }
    })
}

fn config_for(url: &str) -> HttpConfig {
    HttpConfig {
        completion_url: url.into(),
        model_server_url: url.into(),
        timeout_secs: 10,
        api_key_env: "STORYWEAVE_TEST_UNSET_KEY".into(),
        ..HttpConfig::default()
    }
}

fn remote(server: &FakeServer, retry: RetryPolicy) -> Backends {
    http_backends(&config_for(&server.url), retry).unwrap()
}

#[test]
fn every_endpoint_matches_the_mock() {
    let server = serve(mock_handler(3));
    let r = remote(&server, RetryPolicy::none());
    let m = mock_backends(3);
    let premise = "Beth Christensen is Julie Christensen's mother.";
    let hyp = "Beth Christensen is Julie Christensen's friend.";
    assert_eq!(r.entail(premise, hyp).unwrap(), m.entail(premise, hyp).unwrap());
    let texts = vec!["a red barn".to_string(), "the sea at night".to_string()];
    assert_eq!(r.embed(&texts).unwrap(), m.embed(&texts).unwrap());
    assert_eq!(r.coherence("a b", "b c").unwrap(), m.coherence("a b", "b c").unwrap());
    assert_eq!(r.relevance("a b", "b c").unwrap(), m.relevance("a b", "b c").unwrap());
    let q = "What is Beth Christensen's hair color?";
    let ctx = "Beth Christensen has red hair.";
    assert_eq!(r.answer(q, ctx).unwrap(), m.answer(q, ctx).unwrap());
    let t = "Beth Christensen walked with Julie to Boston.";
    assert_eq!(r.detect_entities(t).unwrap(), m.detect_entities(t).unwrap());
    let p = GenParams::new(40, 0.8, 3);
    // Choices arrive in reverse order and are put back by index.
    assert_eq!(
        r.complete("Once upon a time", &p).unwrap(),
        m.complete("Once upon a time", &p).unwrap()
    );
    assert_eq!(
        r.insert("The storm passed.", "The End.", &p).unwrap(),
        m.insert("The storm passed.", "The End.", &p).unwrap()
    );
    assert_eq!(
        r.edit(t, "Edit so that: x").unwrap(),
        m.edit(t, "Edit so that: x").unwrap()
    );
    assert!(ModelServerClient::new(&config_for(&server.url))
        .unwrap()
        .healthy()
        .unwrap());
}

#[test]
fn request_bodies_follow_the_schema() {
    let server = serve(mock_handler(0));
    let r = remote(&server, RetryPolicy::none());
    r.complete("Hello there", &GenParams::new(5, 0.5, 2).with_stop("\n"))
        .unwrap();
    r.insert("Hello there", "The End.", &GenParams::new(5, 0.5, 4)).unwrap();
    let seen = server.seen.lock().unwrap().clone();
    let (path, body) = &seen[0];
    assert_eq!(path, "/v1/completions");
    assert_eq!(body["model"], "davinci");
    assert_eq!(body["n"], 2);
    assert_eq!(body["stop"], json!(["\n"]));
    assert!(body.get("suffix").is_none());
    let (_, body) = &seen[1];
    assert_eq!(body["suffix"], "The End.");
    assert_eq!(body["n"], 1);
}

#[test]
fn rolling_run_over_http_equals_mock_run() {
    let server = serve(mock_handler(0));
    let mut c = Config::default();
    c.run.mode = Mode::Rolling;
    c.run.rolling_total = 600;
    let make = |b: Backends| {
        storyweave::orchestrator::Runner::new(c.clone(), b, c.templates().unwrap(), c.example_bank().unwrap())
            .run(&storyweave::model::Premise::new("A keeper hears a bell under the sea.").unwrap())
    };
    let over_http = make(remote(&server, RetryPolicy::none()));
    let local = make(mock_backends(0));
    assert_eq!(over_http.status, local.status);
    assert_eq!(over_http.final_text, local.final_text);
    assert_eq!(over_http.passages, local.passages);
}

fn flaky(failures: usize, status: u16) -> Arc<Handler> {
    let inner = mock_handler(0);
    let count = AtomicUsize::new(0);
    Arc::new(move |req: &Request| {
        if count.fetch_add(1, Ordering::SeqCst) < failures {
            (status, r#"{"error": "busy"}"#.into())
        } else {
            inner(req)
        }
    })
}

fn fast_retry(n: u32) -> RetryPolicy {
    RetryPolicy {
        max_retries: n,
        initial_backoff_ms: 1,
    }
}

#[test]
fn transient_errors_are_retried() {
    let server = serve(flaky(2, 503));
    let r = remote(&server, fast_retry(3));
    assert!(r.entail("A.", "B.").is_ok());
    assert_eq!(server.hits.load(Ordering::SeqCst), 3);
}

#[test]
fn rate_limits_are_retried() {
    let server = serve(flaky(1, 429));
    let r = remote(&server, fast_retry(1));
    assert!(r.coherence("a", "b").is_ok());
    assert_eq!(server.hits.load(Ordering::SeqCst), 2);
}

#[test]
fn retries_give_up() {
    let server = serve(flaky(10, 500));
    let r = remote(&server, fast_retry(2));
    assert!(matches!(r.entail("A.", "B."), Err(BackendError::Transport(_))));
    assert_eq!(server.hits.load(Ordering::SeqCst), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let server = serve(flaky(10, 400));
    let r = remote(&server, fast_retry(3));
    assert!(matches!(r.entail("A.", "B."), Err(BackendError::Protocol(_))));
    assert_eq!(server.hits.load(Ordering::SeqCst), 1);
}

#[test]
fn malformed_responses_are_protocol_errors() {
    let server = serve(Arc::new(|req: &Request| match req.path.as_str() {
        "/entail" => (
            200,
            r#"{"entailment": 0.9, "neutral": 0.9, "contradiction": 0.9}"#.into(),
        ),
        "/embed" => (200, r#"{"embeddings": [[1.0, 0.0], [1.0]]}"#.into()),
        "/qa" => (200, r#"{"answer": "x", "confidence": 1.5}"#.into()),
        "/score/coherence" => (200, r#"{"probability": "high"}"#.into()),
        _ => (200, r#"{"choices": []}"#.into()),
    }));
    let r = remote(&server, RetryPolicy::none());
    assert!(matches!(r.entail("A.", "B."), Err(BackendError::Protocol(_))));
    assert!(matches!(
        r.embed(&["a".into(), "b".into()]),
        Err(BackendError::Protocol(_))
    ));
    assert!(matches!(r.answer("Q?", "C."), Err(BackendError::Protocol(_))));
    assert!(matches!(r.coherence("a", "b"), Err(BackendError::Protocol(_))));
    assert!(matches!(
        r.complete("a", &GenParams::new(5, 0.5, 2)),
        Err(BackendError::Protocol(_))
    ));
    assert!(matches!(r.edit("a", "b"), Err(BackendError::Protocol(_))));
}

#[test]
fn echoed_suffix_is_stripped() {
    let server = serve(Arc::new(|_: &Request| {
        (
            200,
            r#"{"choices": [{"text": " and then it ended. The End.", "index": 0}]}"#.into(),
        )
    }));
    let r = remote(&server, RetryPolicy::none());
    let out = r.insert("It rained.", "The End.", &GenParams::new(10, 0.5, 1)).unwrap();
    assert_eq!(out, " and then it ended. ");
}

#[test]
fn bearer_token_is_sent() {
    let auth = Arc::new(Mutex::new(None::<String>));
    let a2 = auth.clone();
    let server = serve(Arc::new(move |req: &Request| {
        *a2.lock().unwrap() = req.header("authorization").map(str::to_string);
        (200, r#"{"probability": 0.5}"#.into())
    }));
    let var = "STORYWEAVE_HTTP_TEST_TOKEN";
    std::env::set_var(var, "sekrit");
    let cfg = HttpConfig {
        api_key_env: var.into(),
        ..config_for(&server.url)
    };
    let r = http_backends(&cfg, RetryPolicy::none()).unwrap();
    r.coherence("a", "b").unwrap();
    assert_eq!(auth.lock().unwrap().as_deref(), Some("Bearer sekrit"));
}

#[test]
fn unreachable_server_is_a_transport_error() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    let r = http_backends(&config_for(&url), RetryPolicy::none()).unwrap();
    assert!(matches!(r.entail("A.", "B."), Err(BackendError::Transport(_))));
}
