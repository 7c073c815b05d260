//! The OpenAI-compatible adapter against a local stand-in endpoint.

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use coordkit_core::gateway::{Provider, ProviderCall, ProviderError, Stage};
use coordkit_server::config::RemoteConfig;
use coordkit_server::provider::RemoteProvider;
use serde_json::{json, Value};
use std::sync::{Arc, Mutex};
use std::time::Duration;

#[derive(Default)]
struct Seen {
    bodies: Vec<Value>,
    auth: Vec<Option<String>>,
}

async fn completions(
    State(seen): State<Arc<Mutex<Seen>>>,
    headers: HeaderMap,
    Json(body): Json<Value>,
) -> (StatusCode, Json<Value>) {
    let prompt = body["messages"][0]["content"]
        .as_str()
        .unwrap_or("")
        .to_string();
    {
        let mut s = seen.lock().unwrap();
        s.auth.push(
            headers
                .get("authorization")
                .map(|v| v.to_str().unwrap().to_string()),
        );
        s.bodies.push(body);
    }
    match prompt.as_str() {
        "fail" => (
            StatusCode::INTERNAL_SERVER_ERROR,
            Json(json!({ "error": "overloaded" })),
        ),
        "empty" => (StatusCode::OK, Json(json!({ "choices": [] }))),
        "slow" => {
            tokio::time::sleep(Duration::from_secs(3)).await;
            (StatusCode::OK, Json(json!({})))
        }
        _ => (
            StatusCode::OK,
            Json(
                json!({ "choices": [{ "message": { "role": "assistant", "content": format!("echo: {prompt}") } }] }),
            ),
        ),
    }
}

fn stub() -> (String, Arc<Mutex<Seen>>) {
    let seen = Arc::new(Mutex::new(Seen::default()));
    let app = Router::new()
        .route("/v1/chat/completions", post(completions))
        .with_state(seen.clone());
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    let addr = rx.recv().unwrap();
    (format!("http://{addr}/v1"), seen)
}

fn call(prompt: &str, timeout: Duration) -> ProviderCall {
    ProviderCall {
        stage: Stage::ActionExecution,
        prompt: prompt.to_string(),
        temperature: 0.2,
        seed: Some(5),
        timeout,
    }
}

#[test]
fn talks_chat_completions() {
    let (base, seen) = stub();
    let provider = RemoteProvider::new(RemoteConfig {
        base_url: base,
        api_key: Some("sk-test".into()),
        model: "m-1".into(),
        ..RemoteConfig::default()
    });
    let out = provider
        .complete(&call("hello", Duration::from_secs(5)))
        .unwrap();
    assert_eq!(out, "echo: hello");
    let s = seen.lock().unwrap();
    assert_eq!(s.bodies[0]["model"], "m-1");
    assert_eq!(s.bodies[0]["seed"], 5);
    assert_eq!(s.auth[0].as_deref(), Some("Bearer sk-test"));
}

#[test]
fn maps_failures() {
    let (base, _) = stub();
    let provider = RemoteProvider::new(RemoteConfig {
        base_url: base,
        ..RemoteConfig::default()
    });
    let e = provider
        .complete(&call("fail", Duration::from_secs(5)))
        .unwrap_err();
    assert!(
        matches!(&e, ProviderError::Failed(m) if m.contains("500")),
        "{e}"
    );
    let e = provider
        .complete(&call("empty", Duration::from_secs(5)))
        .unwrap_err();
    assert!(matches!(e, ProviderError::Failed(_)));
    let e = provider
        .complete(&call("slow", Duration::from_millis(200)))
        .unwrap_err();
    assert!(matches!(e, ProviderError::Timeout(_)), "{e}");

    let down = RemoteProvider::new(RemoteConfig {
        base_url: "http://127.0.0.1:9".into(),
        ..RemoteConfig::default()
    });
    let e = down
        .complete(&call("hi", Duration::from_secs(2)))
        .unwrap_err();
    assert!(matches!(e, ProviderError::Unavailable(_)), "{e}");
}
