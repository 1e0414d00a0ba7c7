use std::collections::BTreeMap;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use dataprio_core::fixture::{
    demo_judgments, demo_model, swing_example_judgments, DEMO_MODEL_JSON, SWING_EXAMPLE_MODEL_JSON,
};
use dataprio_core::{
    consensus_snapshot, Assessor, PriorityReport, ScenarioJudgments, SupportJudgment, SupportLabel,
    SupportPolicy, SwingJudgment,
};
use dataprio_service::{router, AppState, REVISION_HEADER};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

struct Reply {
    status: StatusCode,
    revision: Option<u64>,
    bytes: Vec<u8>,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_slice(&self.bytes).unwrap()
    }
}

async fn send(app: &Router, method: Method, uri: &str, body: impl Into<Body>) -> Reply {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.into())
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let revision = resp
        .headers()
        .get(REVISION_HEADER)
        .map(|v| v.to_str().unwrap().parse().unwrap());
    let bytes = resp
        .into_body()
        .collect()
        .await
        .unwrap()
        .to_bytes()
        .to_vec();
    Reply {
        status,
        revision,
        bytes,
    }
}

async fn get(app: &Router, uri: &str) -> Reply {
    send(app, Method::GET, uri, Body::empty()).await
}

async fn put(app: &Router, uri: &str, body: Value) -> Reply {
    send(app, Method::PUT, uri, body.to_string()).await
}

async fn new_scenario(app: &Router, model_json: &str) -> String {
    let m = send(app, Method::POST, "/api/models", model_json.to_string()).await;
    assert_eq!(m.status, StatusCode::CREATED);
    let mid = m.json()["id"].as_str().unwrap().to_string();
    let s = send(
        app,
        Method::POST,
        &format!("/api/models/{mid}/scenarios"),
        json!({"scenario": "workshop"}).to_string(),
    )
    .await;
    assert_eq!(s.status, StatusCode::CREATED);
    s.json()["id"].as_str().unwrap().to_string()
}

async fn upload_judgments(app: &Router, sid: &str, j: &ScenarioJudgments) {
    for s in &j.swing_judgments {
        let r = put(
            app,
            &format!(
                "/api/scenarios/{sid}/assessors/{}/swings/{}",
                s.assessor_id, s.group_id
            ),
            json!(s.entries),
        )
        .await;
        assert_eq!(
            r.status,
            StatusCode::OK,
            "{}",
            String::from_utf8_lossy(&r.bytes)
        );
    }
    let mut by_assessor: BTreeMap<&str, BTreeMap<&str, &str>> = BTreeMap::new();
    for s in &j.support_judgments {
        by_assessor
            .entry(&s.assessor_id)
            .or_default()
            .insert(&s.decision_id, s.label.as_str());
    }
    for (aid, labels) in by_assessor {
        let r = put(
            app,
            &format!("/api/scenarios/{sid}/assessors/{aid}/support"),
            json!(labels),
        )
        .await;
        assert_eq!(r.status, StatusCode::OK);
    }
}

#[tokio::test]
async fn model_upload_status_codes() {
    let app = router(AppState::new());
    let r = send(&app, Method::POST, "/api/models", "{not json").await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);

    let mut bad: Value = serde_json::from_str(DEMO_MODEL_JSON).unwrap();
    bad["analyses"][0]["decisionId"] = json!("nope");
    let r = send(&app, Method::POST, "/api/models", bad.to_string()).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(r.json()["violations"].as_array().unwrap().len() == 1);

    let r = send(&app, Method::POST, "/api/models", DEMO_MODEL_JSON).await;
    assert_eq!(r.status, StatusCode::CREATED);
    assert_eq!(r.revision, Some(0));

    let r = send(&app, Method::POST, "/api/models/zzz/scenarios", "").await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn ranking_matches_the_library() {
    let app = router(AppState::new());
    let sid = new_scenario(&app, DEMO_MODEL_JSON).await;
    let j = demo_judgments();
    upload_judgments(&app, &sid, &j).await;

    let r = get(&app, &format!("/api/scenarios/{sid}/ranking")).await;
    assert_eq!(r.status, StatusCode::OK);
    let body = r.json();
    assert_eq!(body["revision"].as_u64(), r.revision);

    let params = dataprio_core::build_consensus(&demo_model(), &j, SupportPolicy::Strict).unwrap();
    let expected = PriorityReport::build("workshop", &demo_model(), &params, None).unwrap();
    assert_eq!(body["report"], serde_json::to_value(&expected).unwrap());
    let top = &body["report"]["ranking"][0];
    assert_eq!(top["itemId"], "A");
    assert!((top["score"].as_f64().unwrap() - 0.285).abs() < 1e-12);

    let r = get(&app, &format!("/api/scenarios/{sid}/ranking?top=1")).await;
    assert_eq!(r.json()["report"]["ranking"].as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn incomplete_scenarios_are_flagged() {
    let app = router(AppState::new());
    let sid = new_scenario(&app, DEMO_MODEL_JSON).await;
    let r = put(
        &app,
        &format!("/api/scenarios/{sid}/assessors/p1/swings/proc:p1"),
        json!({"j1": 100, "j2": 50}),
    )
    .await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.revision, Some(1));
    let n = &r.json()["normalized"];
    assert!((n["j1"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);

    let w = get(&app, &format!("/api/scenarios/{sid}/weights"))
        .await
        .json();
    assert_eq!(w["complete"], false);
    assert_eq!(w["missingGroups"], json!(["vs", "vs:v1", "proc:p2"]));
    assert_eq!(w["missingSupports"], json!(["j1", "j2", "j3"]));

    let r = get(&app, &format!("/api/scenarios/{sid}/ranking")).await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    assert_eq!(r.revision, Some(1));
    assert_eq!(r.json()["missingGroups"].as_array().unwrap().len(), 3);
}

#[tokio::test]
async fn invalid_writes_are_rejected_without_a_new_revision() {
    let app = router(AppState::new());
    let sid = new_scenario(&app, DEMO_MODEL_JSON).await;
    let base = format!("/api/scenarios/{sid}/assessors/p1");

    let r = put(
        &app,
        &format!("{base}/swings/proc:p1"),
        json!({"j1": 90, "j2": 50}),
    )
    .await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(r.revision, Some(0));
    let r = put(&app, &format!("{base}/swings/proc:p1"), json!({"j1": 100})).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    let r = put(
        &app,
        &format!("{base}/swings/proc:p1"),
        json!({"j1": 100, "j2": -1}),
    )
    .await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    let r = put(&app, &format!("{base}/swings/proc:p1"), json!([1, 2])).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    let r = put(
        &app,
        &format!("{base}/swings/proc:nope"),
        json!({"j1": 100}),
    )
    .await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    let r = put(&app, &format!("{base}/support"), json!({"j1": "plenty"})).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    let r = put(&app, &format!("{base}/support"), json!({"j9": "high"})).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    let r = get(&app, "/api/scenarios/nope/weights").await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);

    let r = get(&app, &format!("/api/scenarios/{sid}/judgments")).await;
    assert_eq!(r.revision, Some(0));
    let j: ScenarioJudgments = serde_json::from_slice(&r.bytes).unwrap();
    assert!(j.assessors.is_empty() && j.swing_judgments.is_empty());
}

#[tokio::test]
async fn last_writer_wins() {
    let app = router(AppState::new());
    let sid = new_scenario(&app, DEMO_MODEL_JSON).await;
    let uri = format!("/api/scenarios/{sid}/assessors/p1/swings/proc:p1?role=Head%20of%20HR");
    put(&app, &uri, json!({"j1": 100, "j2": 20})).await;
    let r = put(&app, &uri, json!({"j1": 40, "j2": 100})).await;
    assert_eq!(r.revision, Some(2));

    let r = get(&app, &format!("/api/scenarios/{sid}/judgments")).await;
    let j: ScenarioJudgments = serde_json::from_slice(&r.bytes).unwrap();
    assert_eq!(j.swing_judgments.len(), 1);
    assert_eq!(j.swing_judgments[0].entries["j1"], 40.0);
    assert_eq!(
        j.assessors,
        vec![Assessor {
            id: "p1".into(),
            role: "Head of HR".into()
        }]
    );
    assert!(dataprio_core::io::parse_judgments(std::str::from_utf8(&r.bytes).unwrap()).is_ok());
}

#[tokio::test]
async fn consistency_probe_endpoint() {
    let app = router(AppState::new());
    let sid = new_scenario(&app, SWING_EXAMPLE_MODEL_JSON).await;
    upload_judgments(&app, &sid, &swing_example_judgments()).await;
    let base = format!("/api/scenarios/{sid}/consistency");

    let r = get(
        &app,
        &format!("{base}?assessor=p1&group=proc:perf&subset=j1,j2&target=j0"),
    )
    .await;
    assert_eq!(r.status, StatusCode::OK);
    let body = r.json();
    assert!((body["ratio"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(body["revision"].as_u64(), r.revision);

    let r = get(
        &app,
        &format!("{base}?assessor=p9&group=proc:perf&subset=j1&target=j0"),
    )
    .await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    let r = get(
        &app,
        &format!("{base}?assessor=p1&group=proc:perf&subset=jx&target=j0"),
    )
    .await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    let r = get(
        &app,
        &format!("{base}?assessor=p1&group=proc:perf&subset=j0&target=j0"),
    )
    .await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    let r = get(&app, &format!("{base}?assessor=p1&group=proc:perf")).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn repeated_reads_are_byte_identical() {
    let app = router(AppState::new());
    let sid = new_scenario(&app, DEMO_MODEL_JSON).await;
    upload_judgments(&app, &sid, &demo_judgments()).await;
    for path in [
        "weights",
        "ranking",
        "judgments",
        "sensitivity?epsilon=0.2&trials=50&seed=9&topK=2",
    ] {
        let uri = format!("/api/scenarios/{sid}/{path}");
        let a = get(&app, &uri).await;
        let b = get(&app, &uri).await;
        assert_eq!(a.status, StatusCode::OK, "{path}");
        assert_eq!(a.bytes, b.bytes, "{path}");
    }
    let r = get(
        &app,
        &format!("/api/scenarios/{sid}/sensitivity?epsilon=1.5"),
    )
    .await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    let r = get(&app, &format!("/api/scenarios/{sid}/sensitivity?trials=x")).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
}

enum Write {
    Swing(SwingJudgment),
    Support(String, BTreeMap<String, SupportLabel>),
}

/// Sequential application of accepted writes, in revision order.
fn replay(writes: &[(u64, &Write)]) -> BTreeMap<u64, ScenarioJudgments> {
    let mut j = ScenarioJudgments {
        scenario_id: "workshop".into(),
        anchor_description: "average to top 10%".into(),
        ..Default::default()
    };
    let mut states = BTreeMap::new();
    states.insert(0, j.clone());
    for (rev, w) in writes {
        let aid = match w {
            Write::Swing(s) => &s.assessor_id,
            Write::Support(a, _) => a,
        };
        if !j.assessors.iter().any(|a| &a.id == aid) {
            j.assessors.push(Assessor {
                id: aid.clone(),
                role: String::new(),
            });
        }
        match w {
            Write::Swing(s) => {
                j.swing_judgments
                    .retain(|x| !(x.assessor_id == s.assessor_id && x.group_id == s.group_id));
                j.swing_judgments.push(s.clone());
            }
            Write::Support(aid, labels) => {
                for (d, l) in labels {
                    j.support_judgments
                        .retain(|x| !(&x.assessor_id == aid && &x.decision_id == d));
                    j.support_judgments.push(SupportJudgment {
                        assessor_id: aid.clone(),
                        decision_id: d.clone(),
                        label: *l,
                    });
                }
            }
        }
        states.insert(*rev, j.clone());
    }
    states
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_sessions_are_linearizable() {
    let app = router(AppState::new());
    let sid = new_scenario(&app, DEMO_MODEL_JSON).await;
    let model = demo_model();

    let mut writes = Vec::new();
    for a in 0..6 {
        let aid = format!("a{a}");
        for (group, members) in [
            ("vs", vec!["v1"]),
            ("vs:v1", vec!["p1", "p2"]),
            ("proc:p1", vec!["j1", "j2"]),
            ("proc:p2", vec!["j3"]),
        ] {
            let entries = members
                .iter()
                .enumerate()
                .map(|(k, m)| {
                    (
                        m.to_string(),
                        if k == 0 {
                            100.0
                        } else {
                            10.0 + 13.0 * a as f64
                        },
                    )
                })
                .collect();
            writes.push(Write::Swing(SwingJudgment {
                assessor_id: aid.clone(),
                group_id: group.into(),
                entries,
            }));
        }
        let labels = ["j1", "j2", "j3"]
            .iter()
            .enumerate()
            .map(|(k, d)| (d.to_string(), SupportLabel::ALL[1 + (a + k) % 5]))
            .collect();
        writes.push(Write::Support(aid, labels));
    }
    let writes = std::sync::Arc::new(writes);

    let mut handles = Vec::new();
    for i in 0..writes.len() {
        let (app, sid, writes) = (app.clone(), sid.clone(), writes.clone());
        handles.push(tokio::spawn(async move {
            let r = match &writes[i] {
                Write::Swing(s) => {
                    put(
                        &app,
                        &format!(
                            "/api/scenarios/{sid}/assessors/{}/swings/{}",
                            s.assessor_id, s.group_id
                        ),
                        json!(s.entries),
                    )
                    .await
                }
                Write::Support(aid, labels) => {
                    put(
                        &app,
                        &format!("/api/scenarios/{sid}/assessors/{aid}/support"),
                        json!(labels),
                    )
                    .await
                }
            };
            assert_eq!(r.status, StatusCode::OK);
            (i, r.revision.unwrap())
        }));
    }
    let mut readers = Vec::new();
    for _ in 0..24 {
        let (app, sid) = (app.clone(), sid.clone());
        readers.push(tokio::spawn(async move {
            let w = get(&app, &format!("/api/scenarios/{sid}/weights")).await;
            let r = get(&app, &format!("/api/scenarios/{sid}/ranking")).await;
            (w, r)
        }));
    }

    let mut applied = Vec::new();
    for h in handles {
        applied.push(h.await.unwrap());
    }
    applied.sort_by_key(|(_, rev)| *rev);
    let revisions: Vec<u64> = applied.iter().map(|(_, r)| *r).collect();
    assert_eq!(revisions, (1..=writes.len() as u64).collect::<Vec<_>>());

    let ordered: Vec<(u64, &Write)> = applied.iter().map(|(i, r)| (*r, &writes[*i])).collect();
    let states = replay(&ordered);

    let mut observed = Vec::new();
    for h in readers {
        observed.push(h.await.unwrap());
    }
    let final_rev = writes.len() as u64;
    let (w, r) = (
        get(&app, &format!("/api/scenarios/{sid}/weights")).await,
        get(&app, &format!("/api/scenarios/{sid}/ranking")).await,
    );
    observed.push((w, r));

    for (w, r) in observed {
        let rev = w.revision.unwrap();
        let snap = consensus_snapshot(&model, &states[&rev], SupportPolicy::Strict).unwrap();
        let body = w.json();
        assert_eq!(
            body["decisionWeights"],
            serde_json::to_value(&snap.decision_weights).unwrap()
        );
        assert_eq!(
            body["supports"],
            serde_json::to_value(&snap.supports).unwrap()
        );
        assert_eq!(body["missingGroups"], json!(snap.missing_groups));

        let rev = r.revision.unwrap();
        let snap = consensus_snapshot(&model, &states[&rev], SupportPolicy::Strict).unwrap();
        if snap.is_complete() {
            assert_eq!(r.status, StatusCode::OK);
            let params = snap.into_parameters().unwrap();
            let expected = PriorityReport::build("workshop", &model, &params, None).unwrap();
            assert_eq!(r.json()["report"], serde_json::to_value(&expected).unwrap());
        } else {
            assert_eq!(r.status, StatusCode::CONFLICT);
        }
    }
    assert_eq!(states[&final_rev].swing_judgments.len(), 24);
}

#[tokio::test]
async fn weights_show_the_normalised_group() {
    let app = router(AppState::new());
    let sid = new_scenario(&app, SWING_EXAMPLE_MODEL_JSON).await;
    let r = put(
        &app,
        &format!("/api/scenarios/{sid}/assessors/p1/swings/proc:perf"),
        json!({"j0": 100, "j1": 33, "j2": 67}),
    )
    .await;
    assert_eq!(r.status, StatusCode::OK);
    let w = get(&app, &format!("/api/scenarios/{sid}/weights"))
        .await
        .json();
    let group = w["groups"]
        .as_array()
        .unwrap()
        .iter()
        .find(|g| g["groupId"] == "proc:perf")
        .unwrap();
    for (k, v) in [("j0", 0.5), ("j1", 0.165), ("j2", 0.335)] {
        assert!(
            (group["weights"][k].as_f64().unwrap() - v).abs() < 1e-12,
            "{k}"
        );
    }
    assert_eq!(w["missingGroups"], json!(["vs", "vs:journey"]));

    let r = put(
        &app,
        &format!("/api/scenarios/{sid}/assessors/p1/swings/proc:perf"),
        json!({"j0": 50, "j1": 40, "j2": 30}),
    )
    .await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(String::from_utf8_lossy(&r.bytes).contains("no reference swing"));
}

#[tokio::test]
async fn snapshots_write_the_judgments_file() {
    let dir = std::env::temp_dir().join(format!("dataprio-snap-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let app = router(AppState::with_snapshot_dir(&dir));
    let sid = new_scenario(&app, DEMO_MODEL_JSON).await;
    upload_judgments(&app, &sid, &demo_judgments()).await;
    let r = send(
        &app,
        Method::POST,
        &format!("/api/scenarios/{sid}/snapshot"),
        "",
    )
    .await;
    assert_eq!(r.status, StatusCode::OK);
    let path = r.json()["path"].as_str().unwrap().to_string();
    let text = std::fs::read_to_string(&path).unwrap();
    let j = dataprio_core::io::parse_judgments(&text).unwrap();
    assert_eq!(
        j.swing_judgments.len(),
        demo_judgments().swing_judgments.len()
    );
    std::fs::remove_dir_all(&dir).unwrap();

    let plain = router(AppState::new());
    let sid = new_scenario(&plain, DEMO_MODEL_JSON).await;
    let r = send(
        &plain,
        Method::POST,
        &format!("/api/scenarios/{sid}/snapshot"),
        "",
    )
    .await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
}
