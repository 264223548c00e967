mod common;

use std::fs;

use common::*;

#[test]
fn captured_run_replays_byte_identically() {
    let stub = StubEndpoint::start(banana_responses());
    let live = tempfile::tempdir().unwrap();
    let out = tamp()
        .arg("run")
        .arg(BANANA_QUESTION)
        .arg("--scene")
        .arg(banana_scene())
        .args([
            "--backend",
            "capture",
            "--endpoint",
            &stub.url,
            "--model",
            "stub-model",
            "--out",
        ])
        .arg(live.path())
        .env("TAMP_API_KEY", "secret")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", text(&out).1);
    let fixture = live.path().join("fixture.jsonl");
    assert_eq!(fs::read_to_string(&fixture).unwrap().lines().count(), 4);

    let requests = stub.requests.lock().unwrap().clone();
    assert_eq!(requests.len(), 4);
    for body in &requests {
        assert_eq!(body["model"], "stub-model");
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["stop"][0], "\nObservation:");
    }
    // The API key never lands in the saved configuration.
    assert!(!fs::read_to_string(live.path().join("run_config.toml"))
        .unwrap()
        .contains("secret"));
    drop(stub);

    let replayed = tempfile::tempdir().unwrap();
    let out = tamp()
        .arg("run")
        .arg(BANANA_QUESTION)
        .arg("--scene")
        .arg(banana_scene())
        .arg("--fixture")
        .arg(&fixture)
        .arg("--out")
        .arg(replayed.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", text(&out).1);
    for name in ["transcript.txt", "steps.jsonl", "final_scene.json", "final_scene.svg"] {
        assert_eq!(
            fs::read(live.path().join(name)).unwrap(),
            fs::read(replayed.path().join(name)).unwrap(),
            "{name} differs"
        );
    }
}

#[test]
fn unreachable_endpoint_fails_the_episode() {
    let dir = tempfile::tempdir().unwrap();
    let out = tamp()
        .arg("run")
        .arg(BANANA_QUESTION)
        .arg("--scene")
        .arg(banana_scene())
        .args(["--backend", "http", "--endpoint", "http://127.0.0.1:9", "--model", "m"])
        .args(["--retries", "0", "--timeout", "2", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "{}", text(&out).1);
    let log = fs::read_to_string(dir.path().join("metadata.json")).unwrap();
    assert!(log.contains("\"Failure\""), "{log}");
}
