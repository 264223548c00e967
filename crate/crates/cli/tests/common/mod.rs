//! Shared test helpers: paths into the shipped data and a scripted chat
//! endpoint served over real HTTP.

#![allow(dead_code)]

use std::path::PathBuf;
use std::process::{Command, Output};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

pub const BANANA_QUESTION: &str = "How to place the banana on the left of the plate?";

pub fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

pub fn banana_scene() -> PathBuf {
    data("scenes/simple_01_banana_left_of_plate.json")
}

pub fn banana_fixture() -> PathBuf {
    data("fixtures/simple_01_banana_left_of_plate.jsonl")
}

/// The shipped banana fixture's responses, in order.
pub fn banana_responses() -> Vec<String> {
    std::fs::read_to_string(banana_fixture())
        .unwrap()
        .lines()
        .map(|l| {
            serde_json::from_str::<serde_json::Value>(l).unwrap()["response"]
                .as_str()
                .unwrap()
                .to_string()
        })
        .collect()
}

/// `tamp` with a clean `TAMP_*` environment.
pub fn tamp() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_tamp"));
    for (key, _) in std::env::vars() {
        if key.starts_with("TAMP_") {
            cmd.env_remove(key);
        }
    }
    cmd
}

pub fn text(out: &Output) -> (String, String) {
    (
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

/// An OpenAI-style chat endpoint that answers with `responses` in order and
/// records every request body.
pub struct StubEndpoint {
    pub url: String,
    pub requests: Arc<Mutex<Vec<serde_json::Value>>>,
    server: Arc<tiny_http::Server>,
    handle: Option<JoinHandle<()>>,
}

impl StubEndpoint {
    pub fn start(responses: Vec<String>) -> Self {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").unwrap());
        let url = format!("http://{}/v1", server.server_addr().to_ip().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let (srv, log) = (server.clone(), requests.clone());
        let handle = std::thread::spawn(move || {
            let mut next = responses.into_iter();
            for mut request in srv.incoming_requests() {
                let mut body = String::new();
                request.as_reader().read_to_string(&mut body).unwrap();
                log.lock()
                    .unwrap()
                    .push(serde_json::from_str(&body).unwrap_or_default());
                let reply = match next.next() {
                    Some(content) => serde_json::json!({
                        "choices": [{"message": {"role": "assistant", "content": content}, "finish_reason": "stop"}],
                        "usage": {"prompt_tokens": 10, "completion_tokens": 5},
                    }),
                    None => serde_json::json!({"choices": []}),
                };
                let header = tiny_http::Header::from_bytes("Content-Type", "application/json").unwrap();
                let _ = request.respond(tiny_http::Response::from_string(reply.to_string()).with_header(header));
            }
        });
        Self {
            url,
            requests,
            server,
            handle: Some(handle),
        }
    }
}

impl Drop for StubEndpoint {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}
