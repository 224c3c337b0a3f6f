use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use ctm_core::llm::{LanguageModel, LlmError, Prompt};
use ctm_gateway::{ChatRequest, Gateway, GatewayConfig, MockScript, SendError, Transport};

fn prompt(user: &str) -> Prompt {
    Prompt {
        system: "You are a judge.".into(),
        user: user.into(),
    }
}

fn fast_config() -> GatewayConfig {
    GatewayConfig {
        backoff_base: Duration::from_millis(1),
        ..GatewayConfig::live("http://unused")
    }
}

/// Replies from a queue of outcomes, then echoes the user message.
#[derive(Clone, Default)]
struct Fake {
    calls: Arc<AtomicUsize>,
    script: Arc<Mutex<Vec<Result<String, SendError>>>>,
    in_flight: Arc<AtomicUsize>,
    peak: Arc<AtomicUsize>,
    hold: Duration,
}

impl Transport for Fake {
    fn send(&self, req: &ChatRequest) -> Result<String, SendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        std::thread::sleep(self.hold);
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        let mut s = self.script.lock().unwrap();
        if s.is_empty() {
            Ok(format!("re: {}", req.messages[1].content))
        } else {
            s.remove(0)
        }
    }
}

#[test]
fn second_identical_call_is_served_from_cache() {
    let fake = Fake::default();
    let gw = Gateway::with_transport(fast_config(), Box::new(fake.clone())).unwrap();
    let a = gw.complete(&prompt("x")).unwrap();
    let b = gw.complete(&prompt("x")).unwrap();
    assert_eq!(a, b);
    assert_eq!(fake.calls.load(Ordering::SeqCst), 1);
    assert_eq!((gw.requests(), gw.cache_hits()), (1, 1));
    gw.complete(&prompt("y")).unwrap();
    assert_eq!(gw.requests(), 2);
}

#[test]
fn disk_cache_carries_over_between_runs() {
    let dir = tempfile::tempdir().unwrap();
    let config = GatewayConfig {
        cache_dir: Some(dir.path().to_path_buf()),
        ..fast_config()
    };
    let first = Fake::default();
    let gw = Gateway::with_transport(config.clone(), Box::new(first.clone())).unwrap();
    let reply = gw.complete(&prompt("x")).unwrap();

    let second = Fake::default();
    let gw = Gateway::with_transport(config, Box::new(second.clone())).unwrap();
    assert_eq!(gw.complete(&prompt("x")).unwrap(), reply);
    assert_eq!(second.calls.load(Ordering::SeqCst), 0);
}

#[test]
fn four_failures_with_three_retries_exhausts_after_four_attempts() {
    let fake = Fake::default();
    *fake.script.lock().unwrap() = (0..4).map(|_| Err(SendError::Transient("HTTP 503".into()))).collect();
    let gw = Gateway::with_transport(fast_config(), Box::new(fake.clone())).unwrap();
    match gw.complete(&prompt("x")) {
        Err(LlmError::Exhausted { attempts, last }) => {
            assert_eq!(attempts, 4);
            assert!(last.contains("503"));
        }
        other => panic!("expected exhaustion, got {other:?}"),
    }
    assert_eq!(fake.calls.load(Ordering::SeqCst), 4);
}

#[test]
fn transient_failure_then_success_is_cached() {
    let fake = Fake::default();
    *fake.script.lock().unwrap() = vec![Err(SendError::Transient("timeout".into())), Ok("ok".into())];
    let gw = Gateway::with_transport(fast_config(), Box::new(fake.clone())).unwrap();
    assert_eq!(gw.complete(&prompt("x")).unwrap(), "ok");
    assert_eq!(gw.complete(&prompt("x")).unwrap(), "ok");
    assert_eq!(fake.calls.load(Ordering::SeqCst), 2);
}

#[test]
fn rejected_and_malformed_replies_are_not_retried() {
    let fake = Fake::default();
    *fake.script.lock().unwrap() = vec![Err(SendError::Fatal("HTTP 401".into()))];
    let gw = Gateway::with_transport(fast_config(), Box::new(fake.clone())).unwrap();
    assert!(matches!(gw.complete(&prompt("x")), Err(LlmError::Rejected(_))));
    *fake.script.lock().unwrap() = vec![Err(SendError::Malformed("no choices".into()))];
    assert!(matches!(gw.complete(&prompt("y")), Err(LlmError::Malformed(_))));
    assert_eq!(fake.calls.load(Ordering::SeqCst), 2);
}

#[test]
fn in_flight_requests_never_exceed_the_bound() {
    let fake = Fake {
        hold: Duration::from_millis(15),
        ..Default::default()
    };
    let config = GatewayConfig {
        max_concurrent: 3,
        ..fast_config()
    };
    let gw = Arc::new(Gateway::with_transport(config, Box::new(fake.clone())).unwrap());
    let handles: Vec<_> = (0..16)
        .map(|i| {
            let gw = gw.clone();
            std::thread::spawn(move || gw.complete(&prompt(&format!("p{i}"))).unwrap())
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    assert_eq!(fake.calls.load(Ordering::SeqCst), 16);
    let peak = fake.peak.load(Ordering::SeqCst);
    assert!((1..=3).contains(&peak), "peak in-flight {peak}");
}

#[test]
fn mock_mode_from_script_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mock.toml");
    std::fs::write(&path, "[[rule]]\npattern = \".\"\nreply = \"fixed\"\n").unwrap();
    let gw = Gateway::new(GatewayConfig::mock(&path)).unwrap();
    assert_eq!(gw.complete(&prompt("anything")).unwrap(), "fixed");
    assert_eq!(gw.requests(), 0);
    assert!(Gateway::new(GatewayConfig::mock(dir.path().join("missing.toml"))).is_err());
    let script = MockScript::parse("").unwrap();
    assert!(matches!(Gateway::mock(script).complete(&prompt("x")), Err(LlmError::NoMockMatch(_))));
}

/// Serves `responses` in order over plain HTTP and records each raw request.
fn serve(responses: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let handle = std::thread::spawn(move || {
        let mut seen = Vec::new();
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut head = String::new();
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                head.push_str(&line);
                if line == "\r\n" {
                    break;
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            seen.push(head + &String::from_utf8(buf).unwrap());
            let mut stream = reader.into_inner();
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
        seen
    });
    (url, handle)
}

#[test]
fn http_round_trip_with_bearer_token_and_retry() {
    let ok = r#"{"choices":[{"message":{"role":"assistant","content":"Matched findings: 1"}}]}"#;
    let (url, server) = serve(vec![(503, "busy".into()), (200, ok.into())]);
    let config = GatewayConfig {
        api_key: Some("sk-test".into()),
        model_name: "judge-model".into(),
        backoff_base: Duration::from_millis(1),
        ..GatewayConfig::live(url)
    };
    let gw = Gateway::new(config).unwrap();
    assert_eq!(gw.complete(&prompt("score")).unwrap(), "Matched findings: 1");
    let seen = server.join().unwrap();
    assert_eq!(seen.len(), 2);
    let req = &seen[1];
    assert!(req.starts_with("POST /v1/chat/completions"));
    assert!(req.to_ascii_lowercase().contains("authorization: bearer sk-test"));
    let body: serde_json::Value = serde_json::from_str(&req[req.find("\r\n\r\n").unwrap() + 4..]).unwrap();
    assert_eq!(body["model"], "judge-model");
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["messages"][0]["role"], "system");
    assert_eq!(body["messages"][1]["content"], "score");
}

#[test]
fn http_client_error_is_rejected_without_retry() {
    let (url, server) = serve(vec![(401, r#"{"error":"bad key"}"#.into())]);
    let gw = Gateway::new(GatewayConfig::live(url)).unwrap();
    assert!(matches!(gw.complete(&prompt("x")), Err(LlmError::Rejected(m)) if m.contains("401")));
    assert_eq!(server.join().unwrap().len(), 1);
}
