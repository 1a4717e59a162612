//! End-to-end checks of the HTTP API against the published schemas, using an
//! injected synthetic case as the oracle.

use std::collections::{BTreeMap, BTreeSet};

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use serde_json::Value;
use tower::ServiceExt;

use atd_core::layering::SignalKind;
use atd_core::store::load_case;
use atd_core::synth::{generate, InjectionSpec, SynthConfig, Synthesized};
use atd_core::trace::Payload;
use atd_service::{default_case_id, router, schemas, ServiceConfig};

struct Api {
    app: Router,
    root: tempfile::TempDir,
}

impl Api {
    fn new() -> Self {
        Self::with(|_| {})
    }

    fn with(tweak: impl FnOnce(&mut ServiceConfig)) -> Self {
        let root = tempfile::tempdir().unwrap();
        let mut config = ServiceConfig::new(root.path());
        tweak(&mut config);
        Self {
            app: router(config),
            root,
        }
    }

    async fn send(&self, method: &str, uri: &str, body: impl Into<Body>) -> (StatusCode, Value) {
        let req = Request::builder()
            .method(method)
            .uri(uri)
            .body(body.into())
            .unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
        let value = serde_json::from_slice(&bytes)
            .unwrap_or_else(|e| panic!("{method} {uri}: non-JSON body ({e}): {bytes:?}"));
        (status, value)
    }

    async fn get(&self, uri: &str) -> (StatusCode, Value) {
        self.send("GET", uri, Body::empty()).await
    }

    async fn post(&self, uri: &str, body: impl Into<Body>) -> (StatusCode, Value) {
        self.send("POST", uri, body).await
    }
}

fn check(schema: &str, value: &Value) {
    let schema: Value = serde_json::from_str(schema).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator
        .iter_errors(value)
        .map(|e| e.to_string())
        .collect();
    assert!(
        errors.is_empty(),
        "{} rejected body: {errors:?}\n{value:#}",
        schema["title"]
    );
}

fn check_error(status: StatusCode, body: &Value, want_status: StatusCode, want_code: &str) {
    assert_eq!(status, want_status, "{body}");
    check(schemas::ERROR, body);
    assert_eq!(body["code"], want_code, "{body}");
}

fn injected() -> Synthesized {
    generate(&SynthConfig {
        seed: 42,
        n_plans: 3,
        injections: SignalKind::ALL
            .into_iter()
            .map(|kind| InjectionSpec { kind, count: 1 })
            .collect(),
        ..Default::default()
    })
    .unwrap()
}

fn clean() -> Synthesized {
    generate(&SynthConfig {
        seed: 42,
        n_plans: 3,
        ..Default::default()
    })
    .unwrap()
}

#[tokio::test]
async fn contract_on_injected_case() {
    let api = Api::new();
    let synth = injected();
    let (st, rec) = api
        .post("/api/v1/cases?case_id=s42", synth.trace.to_ctef())
        .await;
    assert_eq!(st, StatusCode::CREATED, "{rec}");
    check(schemas::CASE_RECORD, &rec);
    assert_eq!(rec["status"], "analyzed");

    let (st, list) = api.get("/api/v1/cases").await;
    assert_eq!(st, StatusCode::OK);
    check(schemas::CASE_LIST, &list);
    assert_eq!(list.as_array().unwrap().len(), 1);

    let (st, one) = api.get("/api/v1/cases/s42").await;
    assert_eq!(st, StatusCode::OK);
    check(schemas::CASE_RECORD, &one);
    assert_eq!(one, rec);

    let (st, activity) = api.get("/api/v1/cases/s42/activity").await;
    assert_eq!(st, StatusCode::OK);
    check(schemas::ACTIVITY, &activity);
    let plans = activity["plans"].as_array().unwrap();
    assert_eq!(plans.len(), synth.truth.action_statuses.len());
    for (plan, truth) in plans.iter().zip(&synth.truth.action_statuses) {
        let got: Vec<&str> = plan["actions"]
            .as_array()
            .unwrap()
            .iter()
            .map(|a| a["status"].as_str().unwrap())
            .collect();
        let want: Vec<&str> = truth.iter().map(|s| s.as_str()).collect();
        assert_eq!(got, want);
    }
    // Each plan but the last carries the revision that ended it.
    for (i, plan) in plans.iter().enumerate() {
        assert_eq!(plan["transition"].is_null(), i + 1 == plans.len());
        if let Some(reason) = plan["transition"]["failure_reason"].as_str() {
            assert_eq!(reason, synth.truth.failure_reasons[i]);
        }
    }

    // Navigation closure: every op listed anywhere resolves, and detail spans
    // agree with the persisted trace.
    let trace = load_case(api.root.path(), "s42").unwrap().1.trace;
    let mut seen_ops = BTreeSet::new();
    for plan in plans {
        let p = plan["index"].as_u64().unwrap();
        for action in plan["actions"].as_array().unwrap() {
            let a = action["index"].as_u64().unwrap();
            let (st, ops) = api
                .get(&format!(
                    "/api/v1/cases/s42/plans/{p}/actions/{a}/operations"
                ))
                .await;
            assert_eq!(st, StatusCode::OK);
            check(schemas::OPERATIONS, &ops);
            assert_eq!(ops["total"], action["operation_count"]);
            let listed: Vec<&str> = ops["items"]
                .as_array()
                .unwrap()
                .iter()
                .map(|o| o["op_id"].as_str().unwrap())
                .collect();
            let segmented: Vec<&str> = action["segments"]
                .as_array()
                .unwrap()
                .iter()
                .flat_map(|s| s["op_ids"].as_array().unwrap())
                .map(|o| o.as_str().unwrap())
                .collect();
            assert_eq!(listed, segmented);
            for link in ["update_link", "carried_to"] {
                if let Some(to) = action[link].as_object() {
                    let (st, _) = api
                        .get(&format!(
                            "/api/v1/cases/s42/plans/{}/actions/{}/operations",
                            to["to_plan"], to["to_action"]
                        ))
                        .await;
                    assert_eq!(st, StatusCode::OK);
                }
            }
            for op_id in listed {
                seen_ops.insert(op_id.to_string());
                let (st, detail) = api
                    .get(&format!("/api/v1/cases/s42/operations/{op_id}"))
                    .await;
                assert_eq!(st, StatusCode::OK);
                check(schemas::OPERATION_DETAIL, &detail);
                assert_eq!(
                    (
                        detail["plan_index"].as_u64(),
                        detail["action_index"].as_u64()
                    ),
                    (Some(p), Some(a))
                );
                let first = detail["event_span"]["first_seq"].as_u64().unwrap();
                let last = detail["event_span"]["last_seq"].as_u64().unwrap();
                let assigned = trace
                    .events
                    .iter()
                    .find(|e| matches!(&e.payload, Payload::OperationAssigned { op_id: id, .. } if id == op_id))
                    .unwrap();
                assert_eq!(first, assigned.seq);
                let owned_max = trace
                    .events
                    .iter()
                    .filter(|e| e.op_id() == Some(op_id))
                    .map(|e| e.seq)
                    .max()
                    .unwrap();
                assert_eq!(last, owned_max);
                let events = detail["events"].as_array().unwrap();
                assert_eq!(events.first().unwrap()["seq"], first);
                assert_eq!(events.last().unwrap()["seq"], last);
                for e in events {
                    let seq = e["seq"].as_u64().unwrap();
                    assert_eq!(*e, trace.event_by_seq(seq).unwrap().to_value());
                }
            }
        }
    }
    let all_ops: BTreeSet<String> = trace
        .events
        .iter()
        .filter_map(|e| match &e.payload {
            Payload::OperationAssigned { op_id, .. } => Some(op_id.clone()),
            _ => None,
        })
        .collect();
    assert_eq!(seen_ops, all_ops);

    let (st, signals) = api.get("/api/v1/cases/s42/signals").await;
    assert_eq!(st, StatusCode::OK);
    check(schemas::SIGNALS, &signals);
    let got: BTreeSet<(String, u64, Option<u64>, Option<String>)> = signals
        .as_array()
        .unwrap()
        .iter()
        .map(|s| {
            let l = &s["location"];
            (
                s["kind"].as_str().unwrap().to_string(),
                l["plan_index"].as_u64().unwrap(),
                l["action_index"].as_u64(),
                l["op_id"].as_str().map(str::to_string),
            )
        })
        .collect();
    let want: BTreeSet<_> = synth
        .manifest
        .entries
        .iter()
        .map(|m| {
            (
                m.kind.as_str().to_string(),
                m.plan_index as u64,
                m.action_index.map(|a| a as u64),
                m.op_id.clone(),
            )
        })
        .collect();
    assert_eq!(signals.as_array().unwrap().len(), 4);
    assert_eq!(got, want);
    let firsts: Vec<u64> = signals
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["evidence"][0].as_u64().unwrap())
        .collect();
    assert!(firsts.windows(2).all(|w| w[0] <= w[1]));
}

#[tokio::test]
async fn reads_are_repeatable() {
    let api = Api::new();
    api.post("/api/v1/cases?case_id=r", injected().trace.to_ctef())
        .await;
    for uri in [
        "/api/v1/cases",
        "/api/v1/cases/r",
        "/api/v1/cases/r/activity",
        "/api/v1/cases/r/signals",
        "/api/v1/cases/r/plans/0/actions/0/operations",
        "/api/v1/cases/r/operations/op-1",
    ] {
        let first = api.get(uri).await;
        assert_eq!(first.0, StatusCode::OK, "{uri}");
        assert_eq!(api.get(uri).await, first, "{uri}");
    }
}

/// Brute-force view of one action's operations, built from the stored trace
/// and analysis rather than the API.
struct Op {
    id: String,
    agent: String,
    success: bool,
    progress: bool,
    text: String,
}

fn predicate(
    op: &Op,
    agent: Option<&str>,
    status: Option<&str>,
    progress: Option<bool>,
    q: Option<&str>,
) -> bool {
    if agent.is_some_and(|a| a != op.agent) {
        return false;
    }
    match status {
        Some("completed") if !op.success => return false,
        Some("failed") if op.success => return false,
        Some("not_started") => return false,
        _ => {}
    }
    if progress.is_some_and(|p| p != op.progress) {
        return false;
    }
    q.is_none_or(|q| op.text.to_lowercase().contains(&q.to_lowercase()))
}

fn encode(s: &str) -> String {
    s.replace('%', "%25")
        .replace(' ', "%20")
        .replace('&', "%26")
        .replace('=', "%3D")
}

#[tokio::test]
async fn filters_are_sound_and_complete() {
    let api = Api::new();
    api.post("/api/v1/cases?case_id=f", injected().trace.to_ctef())
        .await;
    let (_, docs) = load_case(api.root.path(), "f").unwrap();
    let analysis = docs.analysis.unwrap();
    let results: BTreeMap<&str, &str> = docs
        .trace
        .events
        .iter()
        .filter_map(|e| match &e.payload {
            Payload::OperationResult { op_id, content, .. } => {
                Some((op_id.as_str(), content.as_str()))
            }
            _ => None,
        })
        .collect();

    let mut checked = 0usize;
    for plan in &analysis.plans {
        for action in &plan.actions {
            let ops: Vec<Op> = action
                .operations
                .iter()
                .map(|o| Op {
                    id: o.op_id.clone(),
                    agent: o.agent.name.clone(),
                    success: o.success,
                    progress: o.progress,
                    text: format!(
                        "{}\n{}",
                        o.instruction,
                        results.get(o.op_id.as_str()).unwrap_or(&"")
                    ),
                })
                .collect();
            let mut agents: Vec<Option<String>> = vec![None, Some("Nobody".into())];
            agents.extend(
                ops.iter()
                    .map(|o| Some(o.agent.clone()))
                    .collect::<BTreeSet<_>>(),
            );
            let mut words: Vec<Option<String>> = vec![None, Some("zzz-absent".into())];
            for o in ops.iter().take(2) {
                let w: Vec<&str> = o.text.split_whitespace().collect();
                words.push(w.first().map(|s| s.to_uppercase()));
                words.push(w.get(w.len() / 2).map(|s| s.to_lowercase()));
            }
            for agent in &agents {
                for status in [None, Some("completed"), Some("failed"), Some("not_started")] {
                    for progress in [None, Some(true), Some(false)] {
                        for q in &words {
                            let mut params = Vec::new();
                            if let Some(a) = agent {
                                params.push(format!("agent={}", encode(a)));
                            }
                            if let Some(s) = status {
                                params.push(format!("status={s}"));
                            }
                            if let Some(p) = progress {
                                params.push(format!("progress={p}"));
                            }
                            if let Some(q) = q {
                                params.push(format!("q={}", encode(q)));
                            }
                            let uri = format!(
                                "/api/v1/cases/f/plans/{}/actions/{}/operations?{}",
                                plan.index,
                                action.index,
                                params.join("&")
                            );
                            let (st, body) = api.get(&uri).await;
                            assert_eq!(st, StatusCode::OK, "{uri}: {body}");
                            let got: Vec<&str> = body["items"]
                                .as_array()
                                .unwrap()
                                .iter()
                                .map(|i| i["op_id"].as_str().unwrap())
                                .collect();
                            let want: Vec<&str> = ops
                                .iter()
                                .filter(|o| {
                                    predicate(o, agent.as_deref(), status, progress, q.as_deref())
                                })
                                .map(|o| o.id.as_str())
                                .collect();
                            assert_eq!(got, want, "{uri}");
                            assert_eq!(body["total"], want.len(), "{uri}");
                            assert_eq!(body["filters"]["agent"], serde_json::json!(agent), "{uri}");
                            checked += 1;
                        }
                    }
                }
            }
        }
    }
    assert!(checked > 1000, "only {checked} predicates");
}

#[tokio::test]
async fn pagination_partitions_results() {
    let api = Api::new();
    let synth = generate(&SynthConfig {
        seed: 7,
        ops_per_action: 7..=7,
        ..Default::default()
    })
    .unwrap();
    api.post("/api/v1/cases?case_id=p", synth.trace.to_ctef())
        .await;
    let base = "/api/v1/cases/p/plans/0/actions/0/operations";
    let (_, all) = api.get(base).await;
    assert_eq!(all["total"], 7);
    assert_eq!(all["page_size"], 100);
    let positions: Vec<u64> = all["items"]
        .as_array()
        .unwrap()
        .iter()
        .map(|i| i["position"].as_u64().unwrap())
        .collect();
    assert_eq!(positions, (0..7).collect::<Vec<_>>());
    let mut paged = Vec::new();
    for page in 1..=4 {
        let (st, body) = api.get(&format!("{base}?page={page}&page_size=2")).await;
        assert_eq!(st, StatusCode::OK);
        check(schemas::OPERATIONS, &body);
        assert_eq!(body["total"], 7);
        paged.extend(body["items"].as_array().unwrap().iter().cloned());
    }
    assert_eq!(paged, *all["items"].as_array().unwrap());
    let (_, past) = api.get(&format!("{base}?page=9")).await;
    assert_eq!(past["items"], serde_json::json!([]));
}

#[tokio::test]
async fn error_responses() {
    let api = Api::new();
    let (st, body) = api.get("/api/v1/cases").await;
    assert_eq!((st, body), (StatusCode::OK, serde_json::json!([])));

    for uri in [
        "/api/v1/cases/nope",
        "/api/v1/cases/nope/activity",
        "/api/v1/cases/nope/signals",
        "/api/v1/cases/nope/operations/op-0",
        "/api/v1/cases/nope/plans/0/actions/0/operations",
        "/api/v1/cases/Bad..Id/activity",
    ] {
        let (st, body) = api.get(uri).await;
        check_error(st, &body, StatusCode::NOT_FOUND, "case_not_found");
    }

    let trace = injected().trace.to_ctef();
    api.post("/api/v1/cases?case_id=e", trace.clone()).await;
    let (st, body) = api.post("/api/v1/cases?case_id=e", trace.clone()).await;
    check_error(st, &body, StatusCode::CONFLICT, "duplicate_case");

    for uri in [
        "/api/v1/cases/e/plans/99/actions/0/operations",
        "/api/v1/cases/e/plans/0/actions/99/operations",
        "/api/v1/cases/e/plans/x/actions/0/operations",
        "/api/v1/cases/e/plans/-1/actions/0/operations",
    ] {
        let (st, body) = api.get(uri).await;
        check_error(st, &body, StatusCode::NOT_FOUND, "action_not_found");
    }
    let (st, body) = api.get("/api/v1/cases/e/operations/op-99999").await;
    check_error(st, &body, StatusCode::NOT_FOUND, "operation_not_found");

    for q in [
        "colour=red",
        "agent=a&agent=b",
        "status=done",
        "page=0",
        "page_size=501",
        "progress=1",
    ] {
        let (st, body) = api
            .get(&format!("/api/v1/cases/e/plans/0/actions/0/operations?{q}"))
            .await;
        check_error(st, &body, StatusCode::BAD_REQUEST, "bad_filter");
    }

    let (st, body) = api
        .post("/api/v1/cases?case_id=x&colour=red", trace.clone())
        .await;
    check_error(st, &body, StatusCode::BAD_REQUEST, "bad_request");
    let (st, body) = api.post("/api/v1/cases?format=xml", trace.clone()).await;
    check_error(st, &body, StatusCode::BAD_REQUEST, "bad_request");
    let (st, body) = api
        .post("/api/v1/cases?case_id=Not%20Valid", trace.clone())
        .await;
    check_error(st, &body, StatusCode::BAD_REQUEST, "invalid_case_id");

    let (st, body) = api.get("/api/v1/nowhere").await;
    check_error(st, &body, StatusCode::NOT_FOUND, "not_found");
    let (st, body) = api.get("/elsewhere").await;
    check_error(st, &body, StatusCode::NOT_FOUND, "not_found");
    let (st, body) = api.send("DELETE", "/api/v1/cases/e", Body::empty()).await;
    check_error(
        st,
        &body,
        StatusCode::METHOD_NOT_ALLOWED,
        "method_not_allowed",
    );
}

#[tokio::test]
async fn malformed_upload_names_the_line() {
    let api = Api::new();
    let mut lines: Vec<String> = clean()
        .trace
        .to_ctef()
        .lines()
        .map(str::to_string)
        .collect();
    lines[16] = "{not json".into();
    let (st, body) = api.post("/api/v1/cases?case_id=m", lines.join("\n")).await;
    check_error(st, &body, StatusCode::BAD_REQUEST, "malformed_record");
    assert_eq!(body["line"], 17);
    assert!(body["message"].as_str().unwrap().contains("line 17"));
    // A failed upload leaves nothing behind.
    assert_eq!(api.get("/api/v1/cases").await.1, serde_json::json!([]));
}

#[tokio::test]
async fn dangling_reference_lists_violations() {
    let api = Api::new();
    let body = concat!(
        r#"{"seq":0,"ts":"2024-01-01T00:00:00Z","type":"task_received","agent":{"name":"Orchestrator","role":"orchestrator"},"payload":{"query":"q"}}"#,
        "\n",
        r#"{"seq":1,"ts":"2024-01-01T00:00:01Z","type":"plan_created","agent":{"name":"Orchestrator","role":"orchestrator"},"payload":{"actions":[{"index":0,"description":"a"}]}}"#,
        "\n",
        r#"{"seq":2,"ts":"2024-01-01T00:00:02Z","type":"action_started","agent":{"name":"Orchestrator","role":"orchestrator"},"payload":{"plan_index":0,"action_index":5}}"#,
        "\n"
    );
    let (st, body) = api.post("/api/v1/cases?case_id=d", body).await;
    check_error(
        st,
        &body,
        StatusCode::UNPROCESSABLE_ENTITY,
        "validation_failed",
    );
    let v = body["violations"].as_array().unwrap();
    assert!(!v.is_empty());
    assert_eq!(v[0]["seq"], 2);
    assert_eq!(v[0]["line"], 3);
}

#[tokio::test]
async fn oversized_upload_rejected() {
    let api = Api::with(|c| c.max_body_bytes = 64);
    let (st, body) = api.post("/api/v1/cases", clean().trace.to_ctef()).await;
    check_error(
        st,
        &body,
        StatusCode::PAYLOAD_TOO_LARGE,
        "payload_too_large",
    );
}

#[tokio::test]
async fn clean_case_has_no_signals_and_default_id() {
    let api = Api::new();
    let trace = clean().trace.to_ctef();
    let (st, rec) = api.post("/api/v1/cases", trace.clone()).await;
    assert_eq!(st, StatusCode::CREATED);
    let id = default_case_id(trace.as_bytes());
    assert_eq!(rec["case_id"], id.as_str());
    let (st, signals) = api.get(&format!("/api/v1/cases/{id}/signals")).await;
    assert_eq!((st, signals), (StatusCode::OK, serde_json::json!([])));
}

#[tokio::test]
async fn magentic_upload() {
    let api = Api::new();
    let fixture = include_str!("../../core/fixtures/magentic_case1.jsonl");
    let (st, rec) = api
        .post("/api/v1/cases?format=magentic&case_id=m1", fixture)
        .await;
    assert_eq!(st, StatusCode::CREATED, "{rec}");
    assert_eq!(rec["source_format"], "magentic");
    let (_, activity) = api.get("/api/v1/cases/m1/activity").await;
    check(schemas::ACTIVITY, &activity);
    assert_eq!(activity["plans"].as_array().unwrap().len(), 2);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_uploads_of_one_id() {
    let api = Api::new();
    let trace = injected().trace.to_ctef();
    let mut set = tokio::task::JoinSet::new();
    for _ in 0..6 {
        let app = api.app.clone();
        let body = trace.clone();
        set.spawn(async move {
            let req = Request::builder()
                .method("POST")
                .uri("/api/v1/cases?case_id=c")
                .body(Body::from(body))
                .unwrap();
            app.oneshot(req).await.unwrap().status()
        });
    }
    let statuses = set.join_all().await;
    let created = statuses
        .iter()
        .filter(|s| **s == StatusCode::CREATED)
        .count();
    let dup = statuses
        .iter()
        .filter(|s| **s == StatusCode::CONFLICT)
        .count();
    assert_eq!((created, dup), (1, 5), "{statuses:?}");
    let (_, docs) = load_case(api.root.path(), "c").unwrap();
    assert_eq!(docs.trace, injected().trace);
}

#[tokio::test]
async fn static_dir_and_cors() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<!doctype html>").unwrap();
    let d = dir.path().to_path_buf();
    let api = Api::with(|c| {
        c.static_dir = Some(d);
        c.cors_origin = Some("http://localhost:5173".into());
    });
    let req = Request::builder()
        .uri("/index.html")
        .body(Body::empty())
        .unwrap();
    let resp = api.app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let req = Request::builder()
        .uri("/api/v1/cases")
        .header("origin", "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let resp = api.app.clone().oneshot(req).await.unwrap();
    assert_eq!(
        resp.headers()["access-control-allow-origin"],
        "http://localhost:5173"
    );
}
