use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use ctm_core::analysis::DisagreementCase;
use ctm_core::metrics::MetricId;
use ctm_core::outputs::{write_jsonl, SelectionRecord};
use ctm_core::provenance::Provenance;
use ctm_core::ratings::{parse_ratings, ExpertExport};
use ctm_rating::{app, model_alias, start, CaseItem, Progress, ServiceConfig, ServiceError, Store};
use tower::ServiceExt;

fn selection(n: usize) -> Vec<SelectionRecord> {
    (0..n)
        .map(|i| SelectionRecord {
            case: DisagreementCase {
                case_id: format!("case_{:04}", i / 2),
                model_id: format!("model_{}", i % 2),
                metrics: vec![MetricId::Bleu, MetricId::EntityF1],
                normalized_scores: vec![0.123457, 0.876543],
                dispersion: 0.376543,
                rank_within_model: i / 2 + 1,
            },
            scores: vec![Some(0.111119), Some(0.999991)],
            reference: format!("Reference {i}."),
            candidate: format!("Candidate {i}."),
        })
        .collect()
}

fn store(dir: &Path, n: usize) -> Arc<Store> {
    Arc::new(Store::open(selection(n), &dir.join("ratings.jsonl")).unwrap())
}

async fn call(store: &Arc<Store>, method: &str, uri: &str, body: Option<serde_json::Value>) -> (StatusCode, String) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(|b| Body::from(b.to_string())).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = app(store.clone(), None).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

fn rating(case: &CaseItem, rater: &str, value: i64) -> serde_json::Value {
    serde_json::json!({
        "case_id": case.case_id,
        "model_id": case.model_id,
        "rater_id": rater,
        "rating": value,
    })
}

fn lines(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count()
}

#[tokio::test]
async fn case_list_passes_every_selected_case_through() {
    let dir = tempfile::tempdir().unwrap();
    let s = store(dir.path(), 175);
    let (status, body) = call(&s, "GET", "/api/cases?rater=r1", None).await;
    assert_eq!(status, StatusCode::OK);
    let items: Vec<CaseItem> = serde_json::from_str(&body).unwrap();
    assert_eq!(items.len(), 175);
    assert!(items.iter().all(|c| !c.rated));
    assert_eq!(items[1].model_id, model_alias("model_1"));
    let (_, body) = call(&s, "GET", "/api/progress?rater=r1", None).await;
    assert_eq!(serde_json::from_str::<Progress>(&body).unwrap(), Progress { rated: 0, total: 175 });
}

#[tokio::test]
async fn valid_rating_is_appended_and_counted() {
    let dir = tempfile::tempdir().unwrap();
    let s = store(dir.path(), 4);
    let items: Vec<CaseItem> = serde_json::from_str(&call(&s, "GET", "/api/cases", None).await.1).unwrap();
    let (status, _) = call(&s, "POST", "/api/ratings", Some(rating(&items[0], "r1", 4))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(lines(s.path()), 1);
    let (_, body) = call(&s, "GET", "/api/progress?rater=r1", None).await;
    assert_eq!(serde_json::from_str::<Progress>(&body).unwrap(), Progress { rated: 1, total: 4 });
    let items: Vec<CaseItem> = serde_json::from_str(&call(&s, "GET", "/api/cases?rater=r1", None).await.1).unwrap();
    assert!(items[0].rated && !items[1].rated);
    let (_, body) = call(&s, "GET", "/api/progress?rater=r2", None).await;
    assert_eq!(serde_json::from_str::<Progress>(&body).unwrap().rated, 0);

    let stored = parse_ratings(std::fs::File::open(s.path()).unwrap()).unwrap();
    assert_eq!((stored[0].model_id.as_str(), stored[0].rating), ("model_0", 4));
}

#[tokio::test]
async fn invalid_submissions_get_422_and_leave_the_file_alone() {
    let dir = tempfile::tempdir().unwrap();
    let s = store(dir.path(), 2);
    let items: Vec<CaseItem> = serde_json::from_str(&call(&s, "GET", "/api/cases", None).await.1).unwrap();
    let mut unknown = rating(&items[0], "r1", 3);
    unknown["model_id"] = "model_0".into();
    for body in [
        rating(&items[0], "r1", 7),
        rating(&items[0], "r1", 0),
        rating(&items[0], "", 3),
        unknown,
        serde_json::json!({"case_id": items[0].case_id, "model_id": items[0].model_id, "rater_id": "r1", "rating": 2.5}),
        serde_json::json!({"nonsense": true}),
    ] {
        let (status, msg) = call(&s, "POST", "/api/ratings", Some(body)).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{msg}");
        assert!(msg.contains("error"));
    }
    assert_eq!(lines(s.path()), 0);
}

#[tokio::test]
async fn export_aggregates_latest_rating_per_rater() {
    let dir = tempfile::tempdir().unwrap();
    let s = store(dir.path(), 6);
    let items: Vec<CaseItem> = serde_json::from_str(&call(&s, "GET", "/api/cases", None).await.1).unwrap();
    for (i, r, v) in [(0, "r1", 2), (0, "r1", 4), (0, "r2", 5), (1, "r1", 3)] {
        assert_eq!(call(&s, "POST", "/api/ratings", Some(rating(&items[i], r, v))).await.0, StatusCode::CREATED);
    }
    let (_, body) = call(&s, "GET", "/api/export", None).await;
    let export: ExpertExport = serde_json::from_str(&body).unwrap();
    assert_eq!(export.values.len(), 2);
    let v0 = export.values.iter().find(|v| v.case_id == "case_0000" && v.model_id == "model_0").unwrap();
    assert_eq!((v0.value, v0.raters), (4.5, 2));
    assert_eq!(export.series().values.len(), 2);
    assert_eq!(lines(s.path()), 4);
}

#[tokio::test]
async fn no_response_carries_scores_or_model_identity() {
    let dir = tempfile::tempdir().unwrap();
    let s = store(dir.path(), 6);
    let items: Vec<CaseItem> = serde_json::from_str(&call(&s, "GET", "/api/cases", None).await.1).unwrap();
    let mut bodies = vec![
        call(&s, "POST", "/api/ratings", Some(rating(&items[0], "r1", 5))).await.1,
        call(&s, "POST", "/api/ratings", Some(rating(&items[0], "r1", 9))).await.1,
        call(&s, "GET", "/api/cases?rater=r1", None).await.1,
        call(&s, "GET", "/api/progress?rater=r1", None).await.1,
    ];
    let export = call(&s, "GET", "/api/export", None).await.1;
    for needle in ["0.123457", "0.876543", "0.376543", "0.111119", "0.999991", "dispersion", "scores", "bleu"] {
        for b in bodies.iter().chain([&export]) {
            assert!(!b.contains(needle), "{needle} leaked in {b}");
        }
    }
    bodies.pop();
    for b in &bodies {
        assert!(!b.contains("model_0") && !b.contains("model_1"), "model id leaked in {b}");
    }
}

#[tokio::test]
async fn concurrent_raters_leave_whole_lines() {
    let dir = tempfile::tempdir().unwrap();
    let s = store(dir.path(), 20);
    let items: Vec<CaseItem> = serde_json::from_str(&call(&s, "GET", "/api/cases", None).await.1).unwrap();
    let mut tasks = Vec::new();
    for rater in 0..8 {
        for item in items.clone() {
            let s = s.clone();
            tasks.push(tokio::spawn(async move {
                let body = rating(&item, &format!("rater_{rater}"), 1 + (rater % 5) as i64);
                call(&s, "POST", "/api/ratings", Some(body)).await.0
            }));
        }
    }
    for t in tasks {
        assert_eq!(t.await.unwrap(), StatusCode::CREATED);
    }
    let stored = parse_ratings(std::fs::File::open(s.path()).unwrap()).unwrap();
    assert_eq!(stored.len(), 160);
}

#[tokio::test]
async fn restart_resumes_from_the_ratings_file() {
    let dir = tempfile::tempdir().unwrap();
    let s = store(dir.path(), 4);
    let items: Vec<CaseItem> = serde_json::from_str(&call(&s, "GET", "/api/cases", None).await.1).unwrap();
    call(&s, "POST", "/api/ratings", Some(rating(&items[2], "r1", 3))).await;
    drop(s);
    let s = store(dir.path(), 4);
    let (_, body) = call(&s, "GET", "/api/progress?rater=r1", None).await;
    assert_eq!(serde_json::from_str::<Progress>(&body).unwrap().rated, 1);
}

#[tokio::test]
async fn start_serves_over_tcp_and_reports_busy_ports() {
    let dir = tempfile::tempdir().unwrap();
    let cases = dir.path().join("selection.jsonl");
    write_jsonl(&selection(3), std::fs::File::create(&cases).unwrap(), &Provenance::new(1, "x")).unwrap();
    let config = ServiceConfig {
        cases: cases.clone(),
        ratings: dir.path().join("ratings.jsonl"),
        port: 0,
        static_dir: None,
    };
    let running = start(&config).await.unwrap();
    assert_eq!(running.store.cases().len(), 3);
    let busy = ServiceConfig {
        port: running.addr.port(),
        ..config.clone()
    };
    assert!(matches!(start(&busy).await, Err(ServiceError::Bind { .. })));
    let missing = ServiceConfig {
        cases: dir.path().join("none.jsonl"),
        ..config
    };
    assert!(matches!(start(&missing).await, Err(ServiceError::SelectionFile { .. })));
    running.task.abort();
}

#[tokio::test]
async fn static_assets_are_served_next_to_the_api() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<html>rate</html>").unwrap();
    let s = store(dir.path(), 1);
    let req = Request::builder().uri("/index.html").body(Body::empty()).unwrap();
    let resp = app(s, Some(dir.path())).oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
}
