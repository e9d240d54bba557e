mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use finagent_core::agent::{
    decision_response, run_episode, AgentConfig, RunContext, CANNED_HLR, CANNED_LATEST_MI,
    CANNED_LLR, CANNED_PAST_MI, MARKER_DECISION, MARKER_HIGH_LEVEL_REFLECTION,
    MARKER_LOW_LEVEL_REFLECTION, MARKER_PAST_MARKET_INTELLIGENCE,
};
use finagent_core::data::Action;
use finagent_core::hashing::canonical_json;
use finagent_core::llm::{
    Backend, ChatRequest, LlmError, Provenance, RemoteBackend, RemoteConfig, ReplayBackend,
    ReplayCache, ReplayMode, ScriptedBackend, Transport, TransportError,
};
use finagent_core::prompt::{Message, Role, TemplateLibrary};
use serde_json::{json, Value};

/// Answers chat-completion bodies like a well-behaved model and counts calls.
#[derive(Clone, Default)]
struct FakeServer {
    calls: Arc<AtomicUsize>,
}

fn all_text(v: &Value, out: &mut String) {
    match v {
        Value::String(s) => out.push_str(s),
        Value::Array(a) => a.iter().for_each(|x| all_text(x, out)),
        Value::Object(m) => m.values().for_each(|x| all_text(x, out)),
        _ => {}
    }
}

impl Transport for FakeServer {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &Value,
    ) -> Result<Value, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        assert!(url.ends_with("/chat/completions"));
        assert_eq!(bearer, Some("test-key"));
        let mut text = String::new();
        all_text(&body["messages"], &mut text);
        let reply = if text.contains(MARKER_DECISION) {
            decision_response(Action::Buy)
        } else if text.contains(MARKER_HIGH_LEVEL_REFLECTION) {
            CANNED_HLR.into()
        } else if text.contains(MARKER_LOW_LEVEL_REFLECTION) {
            CANNED_LLR.into()
        } else if text.contains(MARKER_PAST_MARKET_INTELLIGENCE) {
            CANNED_PAST_MI.into()
        } else {
            CANNED_LATEST_MI.into()
        };
        Ok(json!({
            "choices": [{"message": {"role": "assistant", "content": reply}}],
            "usage": {"prompt_tokens": text.len() / 4, "completion_tokens": 20}
        }))
    }
}

fn remote(server: &FakeServer) -> RemoteBackend {
    RemoteBackend::new(
        Box::new(server.clone()),
        RemoteConfig {
            base_url: "http://fake.invalid/v1".into(),
            api_key: Some("test-key".into()),
            max_retries: 0,
            backoff: Duration::from_millis(1),
            requests_per_minute: 60_000.0,
        },
    )
}

fn ctx<'a>(
    dir: &std::path::Path,
    lib: &'a TemplateLibrary,
    backend: &'a dyn Backend,
) -> RunContext<'a> {
    RunContext {
        dir: dir.to_path_buf(),
        library: lib,
        backend,
        backend_mode: "remote".into(),
        command: vec!["test".into()],
        resume: false,
    }
}

#[test]
fn cache_key_ignores_map_order() {
    let req = ChatRequest::new(vec![Message::text(Role::User, "hello")]);
    let v = req.content_value().unwrap();
    let Value::Object(map) = &v else { panic!() };
    let reversed: serde_json::Map<String, Value> = map
        .iter()
        .rev()
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    assert_eq!(canonical_json(&v), canonical_json(&Value::Object(reversed)));
    assert_eq!(
        req.request_key().unwrap(),
        req.clone().request_key().unwrap()
    );
    let other = ChatRequest::new(vec![Message::text(Role::User, "hello!")]);
    assert_ne!(req.request_key().unwrap(), other.request_key().unwrap());
}

#[test]
fn episode_runs_through_the_remote_backend_and_replays_offline() {
    let ds = common::dataset(40);
    let r = common::range(&ds, 20, 22);
    let lib = TemplateLibrary::builtin();
    let server = FakeServer::default();
    let root = tempfile::tempdir().unwrap();
    let cache_dir = root.path().join("cache");

    let recorder = ReplayBackend::new(
        ReplayCache::open(&cache_dir).unwrap(),
        ReplayMode::Record(Box::new(remote(&server))),
    );
    let live = run_episode(
        &ds,
        r,
        &AgentConfig::default(),
        &mut common::memory(),
        &ctx(&root.path().join("live"), &lib, &recorder),
    )
    .unwrap();
    assert_eq!(server.calls.load(Ordering::SeqCst), 10);
    assert!(live
        .traces
        .iter()
        .all(|t| t.calls.iter().all(|c| c.provenance == [Provenance::Remote])));

    // A second recording run is served from the cache without touching the server.
    let again = ReplayBackend::new(
        ReplayCache::open(&cache_dir).unwrap(),
        ReplayMode::Record(Box::new(remote(&server))),
    );
    run_episode(
        &ds,
        r,
        &AgentConfig::default(),
        &mut common::memory(),
        &ctx(&root.path().join("again"), &lib, &again),
    )
    .unwrap();
    assert_eq!(server.calls.load(Ordering::SeqCst), 10);

    let strict = ReplayBackend::new(ReplayCache::open(&cache_dir).unwrap(), ReplayMode::Strict);
    let replayed = run_episode(
        &ds,
        r,
        &AgentConfig::default(),
        &mut common::memory(),
        &ctx(&root.path().join("replay"), &lib, &strict),
    )
    .unwrap();
    let strip = |traces: &[finagent_core::agent::StepTrace]| {
        let mut t = traces.to_vec();
        t.iter_mut()
            .flat_map(|s| s.calls.iter_mut())
            .for_each(|c| c.provenance.clear());
        t
    };
    assert!(replayed
        .traces
        .iter()
        .all(|t| t.calls.iter().all(|c| c.provenance == [Provenance::Replay])));
    assert_eq!(strip(&replayed.traces), strip(&live.traces));
    assert_eq!(
        std::fs::read(root.path().join("live/trades.log")).unwrap(),
        std::fs::read(root.path().join("replay/trades.log")).unwrap()
    );
    let calls_log = std::fs::read_to_string(root.path().join("replay/calls.log")).unwrap();
    assert!(calls_log.lines().all(|l| l.contains("\"replay\"")));
}

#[test]
fn strict_replay_miss_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let strict = ReplayBackend::new(ReplayCache::open(dir.path()).unwrap(), ReplayMode::Strict);
    let req = ChatRequest::new(vec![Message::text(Role::User, "unseen")]);
    match strict.complete(&req) {
        Err(LlmError::ReplayMiss { key }) => assert_eq!(key, req.request_key().unwrap()),
        other => panic!("{other:?}"),
    }
}

#[test]
fn scripted_backend_ignores_the_network() {
    let server = FakeServer::default();
    let scripted = ScriptedBackend::from_queue(["<output><string name=\"a\">x</string></output>"]);
    scripted
        .complete(&ChatRequest::new(vec![Message::text(Role::User, "q")]))
        .unwrap();
    assert_eq!(server.calls.load(Ordering::SeqCst), 0);
    assert!(matches!(
        scripted.complete(&ChatRequest::new(vec![Message::text(Role::User, "q")])),
        Err(LlmError::QueueExhausted)
    ));
}
