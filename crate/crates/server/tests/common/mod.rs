#![allow(dead_code)]

use coordkit_server::config::Config;
use coordkit_server::http::{router, AppState};
use coordkit_server::provider::build_gateway;
use coordkit_server::service::Service;
use serde_json::{json, Value};
use std::path::Path;
use std::time::Duration;

pub struct Server {
    pub base: String,
    pub client: reqwest::Client,
    pub dir: tempfile::TempDir,
}

pub async fn start() -> Server {
    start_with(None).await
}

pub async fn start_with(fixtures: Option<&Path>) -> Server {
    let dir = tempfile::tempdir().unwrap();
    let config = Config {
        data_dir: dir.path().to_path_buf(),
        fixtures: fixtures.map(Path::to_path_buf),
        seed: Some(7),
        ..Config::default()
    };
    let (gateway, provider) = build_gateway(&config).unwrap();
    let service =
        Service::new(gateway, provider, config.seed).with_backoff(Duration::from_millis(1));
    let app = router(AppState::new(service, dir.path()));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    Server {
        base: format!("http://{addr}/api/v1"),
        client: reqwest::Client::new(),
        dir,
    }
}

impl Server {
    pub fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    pub async fn send(
        &self,
        method: reqwest::Method,
        path: &str,
        body: Option<Value>,
    ) -> (u16, Value) {
        let mut req = self.client.request(method, self.url(path));
        if let Some(b) = body {
            req = req.json(&b);
        }
        let resp = req.send().await.unwrap();
        let status = resp.status().as_u16();
        let text = resp.text().await.unwrap();
        (
            status,
            serde_json::from_str(&text).unwrap_or(Value::String(text)),
        )
    }

    pub async fn get(&self, path: &str) -> (u16, Value) {
        self.send(reqwest::Method::GET, path, None).await
    }

    pub async fn post(&self, path: &str, body: Value) -> (u16, Value) {
        self.send(reqwest::Method::POST, path, Some(body)).await
    }

    /// Polls a job until it settles and returns its final view.
    pub async fn wait_job(&self, job: &Value) -> Value {
        let id = job["id"].as_str().expect("job id");
        for _ in 0..2000 {
            let (status, view) = self.get(&format!("/jobs/{id}")).await;
            assert_eq!(status, 200, "{view}");
            if view["state"] != "running" {
                return view;
            }
            tokio::time::sleep(Duration::from_millis(5)).await;
        }
        panic!("job {id} never finished");
    }

    /// Starts a job with `POST path` and waits for its result.
    pub async fn job(&self, path: &str, body: Value) -> Value {
        let (status, job) = self.post(path, body).await;
        assert_eq!(status, 202, "{path}: {job}");
        let done = self.wait_job(&job).await;
        assert_eq!(done["state"], "succeeded", "{path}: {done}");
        done["result"].clone()
    }

    /// A project with the novel board and a generated strategy.
    pub async fn novel_project(&self) -> String {
        let (status, created) = self
            .post(
                "/projects",
                json!({ "name": "Novel", "goal": coordkit_core::fixtures::NOVEL_GOAL }),
            )
            .await;
        assert_eq!(status, 201, "{created}");
        let pid = created["id"].as_str().unwrap().to_string();
        let board = std::fs::read_to_string(coordkit_core::fixtures::novel_board_file()).unwrap();
        let resp = self
            .client
            .put(self.url(&format!("/projects/{pid}/board")))
            .body(board)
            .send()
            .await
            .unwrap();
        assert_eq!(resp.status().as_u16(), 200);
        self.job(&format!("/projects/{pid}/generate"), json!({}))
            .await;
        pid
    }

    /// Starts a run and returns (run id, raw SSE text of the whole stream).
    pub async fn run_and_stream(&self, pid: &str) -> (String, String) {
        let (status, started) = self.post(&format!("/projects/{pid}/runs"), json!({})).await;
        assert_eq!(status, 202, "{started}");
        let run_id = started["runId"].as_str().unwrap().to_string();
        let text = self
            .client
            .get(self.url(&format!("/runs/{run_id}/events")))
            .send()
            .await
            .unwrap()
            .text()
            .await
            .unwrap();
        (run_id, text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SseEvent {
    pub id: Option<String>,
    pub event: Option<String>,
    pub data: String,
}

/// Minimal `text/event-stream` parser: blank-line separated frames,
/// comments ignored, multi-line data joined with `\n`.
pub fn parse_sse(text: &str) -> Vec<SseEvent> {
    let mut out = Vec::new();
    let mut cur = SseEvent {
        id: None,
        event: None,
        data: String::new(),
    };
    let mut has_data = false;
    for line in text.lines() {
        if line.is_empty() {
            if has_data {
                out.push(cur.clone());
            }
            cur = SseEvent {
                id: None,
                event: None,
                data: String::new(),
            };
            has_data = false;
            continue;
        }
        if line.starts_with(':') {
            continue;
        }
        let (field, value) = line.split_once(':').unwrap_or((line, ""));
        let value = value.strip_prefix(' ').unwrap_or(value);
        match field {
            "id" => cur.id = Some(value.to_string()),
            "event" => cur.event = Some(value.to_string()),
            "data" => {
                if has_data {
                    cur.data.push('\n');
                }
                cur.data.push_str(value);
                has_data = true;
            }
            _ => {}
        }
    }
    if has_data {
        out.push(cur);
    }
    out
}

/// Sequence numbers of a run stream; panics on a frame without a numeric id.
pub fn seqs(events: &[SseEvent]) -> Vec<u64> {
    events
        .iter()
        .map(|e| {
            e.id.as_deref()
                .expect("event id")
                .parse()
                .expect("numeric id")
        })
        .collect()
}
