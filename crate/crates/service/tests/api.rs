mod common;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use common::*;
use plugwatt_core::io::{load_dataset, save_dataset, Manifest};
use plugwatt_core::scoring::{compute_baselines, leaderboard, ScoringConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

#[tokio::test]
async fn health_and_status() {
    let a = app();
    assert_eq!(a.get("/v1/health").await, (StatusCode::OK, json!({"status": "ok"})));
    let (code, s) = a.get("/v1/status").await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(s["date"], "2016-09-21");
    assert_eq!(s["phase"]["label"], "P2C");
    assert_eq!(s["participants"], 5);
}

fn batch(start: &str, n: usize) -> Value {
    let t0 = utc(start).timestamp();
    let items: Vec<Value> = (0..n)
        .map(|i| {
            let t = chrono::DateTime::from_timestamp(t0 + 60 * i as i64, 0).unwrap();
            json!({"timestamp": t, "participant_id": "p01", "socket_id": "monitor", "watts": 20.0 + i as f64})
        })
        .collect();
    Value::Array(items)
}

#[tokio::test]
async fn readings_batch_is_idempotent() {
    let a = app();
    let body = batch("2016-09-26T13:00:00Z", 10);
    let (code, out) = a.post("/v1/readings", body.clone()).await;
    assert_eq!(code, StatusCode::ACCEPTED);
    assert_eq!(out["accepted"], 10);
    let version = a.state.read(|s| s.version());
    let before = a.state.read(|s| s.dataset().clone());
    let (code, out) = a.post("/v1/readings", body).await;
    assert_eq!(code, StatusCode::ACCEPTED);
    assert_eq!((out["accepted"].as_u64(), out["duplicates"].as_u64()), (Some(0), Some(10)));
    assert_eq!(a.state.read(|s| s.version()), version);
    assert_eq!(a.state.read(|s| s.dataset().clone()), before);
}

#[tokio::test]
async fn wrapped_batch_and_rejections() {
    let a = app();
    let (code, out) = a
        .post(
            "/v1/readings",
            json!({"readings": [
                {"timestamp": "2016-09-26T13:00:00Z", "participant_id": "p02", "socket_id": "monitor", "watts": 5.0},
                {"timestamp": "2016-09-26T13:01:00Z", "participant_id": "p02", "socket_id": "monitor", "watts": -1.0},
                {"timestamp": "2016-09-26T12:00:00Z", "participant_id": "p02", "socket_id": "monitor", "watts": 1.0},
            ]}),
        )
        .await;
    assert_eq!(code, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(out["accepted"], 1);
    assert_eq!(out["rejected"], 2);
    let idx: Vec<_> = out["rejections"].as_array().unwrap().iter().map(|r| r["index"].clone()).collect();
    assert_eq!(idx, vec![json!(1), json!(2)]);
}

#[tokio::test]
async fn malformed_json_is_400() {
    let a = app();
    let (code, v) = a.post_raw("/v1/readings", "{not json".into(), None).await;
    assert_eq!(code, StatusCode::BAD_REQUEST);
    assert!(v["error"].as_str().unwrap().contains("malformed"));
    let (code, _) = a.post_raw("/v1/comfort", "[]".into(), None).await;
    assert_eq!(code, StatusCode::BAD_REQUEST);
}

fn core_board(ds: &plugwatt_core::Dataset, date: chrono::NaiveDate, as_of: i64) -> Value {
    let cfg = ScoringConfig::default();
    let b = compute_baselines(ds, &cfg).unwrap();
    serde_json::to_value(leaderboard(ds, &b, date, as_of, &cfg)).unwrap()
}

#[tokio::test]
async fn leaderboard_matches_scoring_for_random_snapshots() {
    let a = app();
    let ds = dataset();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let date = d(9, rng.gen_range(19..=25));
        let start = ds.clock.day_start(date);
        let as_of = start + rng.gen_range(0..86_400);
        let at = chrono::DateTime::from_timestamp(as_of, 0).unwrap().format("%Y-%m-%dT%H:%M:%SZ");
        let (code, body) = a.get(&format!("/v1/leaderboard?date={date}&as_of={at}")).await;
        assert_eq!(code, StatusCode::OK);
        assert_eq!(body["entries"], core_board(&ds, date, as_of - as_of.rem_euclid(60)), "{date} {at}");
    }
}

#[tokio::test]
async fn leaderboard_defaults_to_now_and_supports_etags() {
    let a = app_with(live_dataset(), Some(TOKEN), None);
    let resp = a.send(Request::get("/v1/leaderboard").body(Body::empty()).unwrap()).await;
    assert_eq!(resp.status(), StatusCode::OK);
    let etag = resp.headers()["etag"].clone();
    let (_, body) = json_of(resp).await;
    assert_eq!(body["date"], "2016-09-21");
    assert_eq!(body["as_of"], "2016-09-21T19:00:00Z");
    assert_eq!(body["entries"].as_array().unwrap().len(), 5);

    let cond = |tag| Request::get("/v1/leaderboard").header("if-none-match", tag).body(Body::empty()).unwrap();
    let resp = a.send(cond(etag.clone())).await;
    assert_eq!(resp.status(), StatusCode::NOT_MODIFIED);

    // seconds within the same minute share a snapshot
    a.clock.advance(30);
    assert_eq!(a.send(cond(etag.clone())).await.status(), StatusCode::NOT_MODIFIED);

    // new data changes the body
    a.post("/v1/readings", json!([{"timestamp": "2016-09-21T18:58:00Z", "participant_id": "p03",
        "socket_id": "monitor", "watts": 500.0}])).await;
    let resp = a.send(cond(etag)).await;
    assert_eq!(resp.status(), StatusCode::OK);
}

#[tokio::test]
async fn leaderboard_without_baselines_is_409() {
    let mut ds = dataset();
    ds.readings = Default::default();
    let a = app_with(ds, None, None);
    let (code, _) = a.get("/v1/leaderboard").await;
    assert_eq!(code, StatusCode::CONFLICT);
}

#[tokio::test]
async fn incentive_posting_rules() {
    let a = app();
    let weekend = json!({"date": "2016-09-24", "amount_usd": 25});
    let (code, _) = a.post("/v1/incentives", weekend.clone()).await;
    assert_eq!(code, StatusCode::UNAUTHORIZED);
    let (code, _) = a.post_raw("/v1/incentives", weekend.to_string(), Some("wrong")).await;
    assert_eq!(code, StatusCode::UNAUTHORIZED);
    assert_eq!(a.post_op("/v1/incentives", weekend.clone()).await.0, StatusCode::CREATED);
    assert_eq!(a.post_op("/v1/incentives", weekend).await.0, StatusCode::CONFLICT);
    let (code, _) = a.post_op("/v1/incentives", json!({"date": "2016-09-25", "amount_usd": 12})).await;
    assert_eq!(code, StatusCode::UNPROCESSABLE_ENTITY);
    let (code, _) = a.post_op("/v1/incentives", json!({"date": "2016-09-14", "amount_usd": 10})).await;
    assert_eq!(code, StatusCode::UNPROCESSABLE_ENTITY);
    let (_, s) = a.get("/v1/leaderboard?date=2016-09-24").await;
    assert_eq!(s["incentive_usd"], 25);

    let closed = app_with(dataset(), None, None);
    let (code, _) = closed.post_op("/v1/incentives", json!({"date": "2016-09-24", "amount_usd": 25})).await;
    assert_eq!(code, StatusCode::FORBIDDEN);
}

#[tokio::test]
async fn comfort_reports() {
    let a = app();
    let (code, v) = a.post("/v1/comfort", json!({"participant_id": "p01", "level": -2})).await;
    assert_eq!(code, StatusCode::CREATED);
    assert_eq!(v["timestamp"], "2016-09-21T19:00:00Z");
    assert_eq!(a.post("/v1/comfort", json!({"participant_id": "p01", "level": 4})).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(a.post("/v1/comfort", json!({"participant_id": "zz", "level": 0})).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn series_and_sockets() {
    let a = app();
    let (code, v) = a
        .get("/v1/series?participant=p01&from=2016-09-21T12:00:00Z&to=2016-09-21T13:00:00Z&resolution=600")
        .await;
    assert_eq!(code, StatusCode::OK);
    let pts = v["points"].as_array().unwrap();
    assert_eq!(pts.len(), 6);
    assert_eq!(pts[0]["start"], "2016-09-21T12:00:00Z");
    assert!(pts.iter().all(|p| p["individual_watts"].as_f64().unwrap() >= 0.0 && p["pool_watts"].is_number()));
    // default range: local midnight (07:00Z in September) to now
    let (_, v) = a.get("/v1/series?participant=p01").await;
    assert_eq!(v["points"].as_array().unwrap().len(), 12 * 12);
    assert_eq!(a.get("/v1/series?participant=p01&resolution=1&from=2016-09-01T00:00:00Z").await.0, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(a.get("/v1/series?participant=nobody").await.0, StatusCode::NOT_FOUND);

    let (code, v) = a.get("/v1/sockets?participant=p02").await;
    assert_eq!(code, StatusCode::OK);
    let socks = v["sockets"].as_array().unwrap();
    assert_eq!(socks.len(), 4);
    let sum: f64 = socks.iter().map(|s| s["watts"].as_f64().unwrap()).sum();
    assert!((v["total_watts"].as_f64().unwrap() - sum).abs() < 1e-9);
    assert!(socks.iter().all(|s| s["timestamp"].as_str().unwrap() <= "2016-09-21T19:00:00Z"));
}

#[tokio::test]
async fn baseline_endpoint() {
    let a = app();
    let (code, v) = a.get("/v1/baseline?participant=p04").await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(v["participant_id"], "p04");
    assert_eq!(a.get("/v1/baseline?participant=p09").await.0, StatusCode::NOT_FOUND);
    assert_eq!(a.get("/v1/baseline").await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn heartbeats_form_sessions() {
    let a = app();
    let base = utc("2016-09-14T05:00:00Z");
    for off in [0, 20, 45, 200] {
        a.clock.set(base + chrono::Duration::seconds(off));
        let (code, _) = a.post("/v1/screentime-heartbeat", json!({"participant_id": "p02"})).await;
        assert_eq!(code, StatusCode::NO_CONTENT);
    }
    let (_, v) = a.get("/v1/screentime?participant=p02&from=2016-09-14T04:00:00Z&to=2016-09-14T06:00:00Z").await;
    assert_eq!(v["seconds"], 75 + 30);
    assert_eq!(
        v["sessions"],
        json!([
            {"start": "2016-09-14T05:00:00Z", "end": "2016-09-14T05:01:15Z"},
            {"start": "2016-09-14T05:03:20Z", "end": "2016-09-14T05:03:50Z"},
        ])
    );
    assert_eq!(a.post("/v1/screentime-heartbeat", json!({"participant_id": "x"})).await.0, StatusCode::NOT_FOUND);
}

/// Seconds covered by any `[t, t + 30)` heartbeat span, as maximal runs.
fn bitmap_runs(origin: i64, beats: &[i64], len: usize) -> Vec<(i64, i64)> {
    let mut on = vec![false; len];
    for &b in beats {
        for s in &mut on[b as usize..(b as usize + 30).min(len)] {
            *s = true;
        }
    }
    let mut runs = Vec::new();
    let mut i = 0;
    while i < len {
        if on[i] {
            let j = (i..len).find(|&j| !on[j]).unwrap_or(len);
            runs.push((origin + i as i64, origin + j as i64));
            i = j;
        } else {
            i += 1;
        }
    }
    runs
}

#[tokio::test]
async fn random_heartbeat_patterns_match_interval_union() {
    let a = app();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for i in 0..100 {
        let p = format!("p0{}", i % 5 + 1);
        let day = d(9, 12 + (i / 5 % 7) as u32);
        let origin = utc(&format!("{day}T05:00:00Z")).timestamp() + 3600 * (i / 35) as i64;
        let fmt = |t: i64| chrono::DateTime::from_timestamp(t, 0).unwrap().format("%Y-%m-%dT%H:%M:%SZ").to_string();
        let q = format!("/v1/screentime?participant={p}&from={}&to={}", fmt(origin), fmt(origin + 3000));
        assert_eq!(a.get(&q).await.1["seconds"], 0, "slot {i} not empty");

        let n = rng.gen_range(1..40);
        let mut beats: Vec<i64> = (0..n).map(|_| rng.gen_range(100..2500)).collect();
        if rng.gen_bool(0.5) {
            beats.sort_unstable();
        }
        for &b in &beats {
            a.clock.set(chrono::DateTime::from_timestamp(origin + b, 0).unwrap());
            a.post("/v1/screentime-heartbeat", json!({"participant_id": p})).await;
        }
        let runs: Vec<_> = bitmap_runs(origin, &beats, 3000);
        let expect: Vec<Value> = runs.iter().map(|&(s, e)| json!({"start": fmt(s), "end": fmt(e)})).collect();
        let (_, v) = a.get(&q).await;
        assert_eq!(v["sessions"], Value::Array(expect), "pattern {i}: {beats:?}");
        let total: i64 = runs.iter().map(|(s, e)| e - s).sum();
        assert_eq!(v["seconds"], total);
    }
}

#[tokio::test]
async fn winners_notifications_and_ack() {
    let a = app();
    let (code, _) = a.post_op("/v1/winners/declare", json!({"date": "2016-09-21"})).await;
    assert_eq!(code, StatusCode::CONFLICT, "day not over");
    assert_eq!(a.post("/v1/winners/declare", json!({"date": "2016-09-20"})).await.0, StatusCode::UNAUTHORIZED);

    let (code, v) = a.post_op("/v1/winners/declare", json!({"date": "2016-09-20"})).await;
    assert_eq!(code, StatusCode::CREATED);
    let winner = v["winner"]["participant_id"].as_str().unwrap().to_owned();
    let (code, again) = a.post_op("/v1/winners/declare", json!({"date": "2016-09-20"})).await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(again, v);
    let (_, w) = a.get("/v1/winners").await;
    assert_eq!(w.as_array().unwrap().len(), 1);

    let (_, n) = a.get(&format!("/v1/notifications?participant={winner}")).await;
    assert_eq!(n["notification"]["date"], "2016-09-20");
    let loser = if winner == "p01" { "p02" } else { "p01" };
    assert_eq!(a.get(&format!("/v1/notifications?participant={loser}")).await.1["notification"], Value::Null);
    let (code, _) = a.post("/v1/notifications/ack", json!({"participant_id": loser, "date": "2016-09-20"})).await;
    assert_eq!(code, StatusCode::NOT_FOUND);
    let (code, _) = a.post("/v1/notifications/ack", json!({"participant_id": winner, "date": "2016-09-20"})).await;
    assert_eq!(code, StatusCode::NO_CONTENT);
    assert_eq!(a.get(&format!("/v1/notifications?participant={winner}")).await.1["notification"], Value::Null);

    // a weekend without a posted incentive has no winner
    let (code, v) = a.post_op("/v1/winners/declare", json!({"date": "2016-09-18"})).await;
    assert_eq!((code, &v["winner"]), (StatusCode::OK, &Value::Null));
}

#[tokio::test]
async fn writes_persist_and_reload() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dataset();
    save_dataset(&ds, &Manifest::new(ds.site, ds.clock.tz, None, "test"), dir.path()).unwrap();
    let a = app_with(load_dataset(dir.path()).unwrap().dataset, Some(TOKEN), Some(dir.path()));
    a.post("/v1/readings", batch("2016-09-26T13:00:00Z", 5)).await;
    a.post_op("/v1/incentives", json!({"date": "2016-09-24", "amount_usd": 5})).await;
    a.post("/v1/comfort", json!({"participant_id": "p03", "level": 1})).await;
    a.clock.set(utc("2016-09-14T05:00:00Z"));
    a.post("/v1/screentime-heartbeat", json!({"participant_id": "p03"})).await;
    a.clock.set(utc("2016-09-14T05:00:10Z"));
    a.post("/v1/screentime-heartbeat", json!({"participant_id": "p03"})).await;
    a.clock.set(utc("2016-09-23T12:00:00Z"));
    let (code, _) = a.post_op("/v1/winners/declare", json!({"date": "2016-09-21"})).await;
    assert_eq!(code, StatusCode::CREATED);

    let reloaded = load_dataset(dir.path()).unwrap().dataset;
    assert_eq!(reloaded, a.state.read(|s| s.dataset().clone()));
    let b = app_with(reloaded, Some(TOKEN), Some(dir.path()));
    b.clock.set(utc("2016-09-23T12:00:00Z"));
    assert_eq!(b.get("/v1/winners").await, a.get("/v1/winners").await);
    let (code, _) = b.post_op("/v1/winners/declare", json!({"date": "2016-09-21"})).await;
    assert_eq!(code, StatusCode::OK);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn readers_never_see_half_a_batch() {
    let a = app_with(live_dataset(), None, None);
    let uri = "/v1/sockets?participant=p01";
    let before = a.get(uri).await.1;
    let items: Vec<Value> = ["phone", "monitor", "desktop", "laptop"]
        .iter()
        .map(|s| json!({"timestamp": "2016-09-21T18:59:00Z", "participant_id": "p01", "socket_id": s, "watts": 1000.0}))
        .collect();
    let readers: Vec<_> = (0..32)
        .map(|_| {
            let r = a.router.clone();
            tokio::spawn(async move {
                let resp = tower::ServiceExt::oneshot(r, Request::get(uri).body(Body::empty()).unwrap()).await.unwrap();
                json_of(resp).await.1
            })
        })
        .collect();
    a.post("/v1/readings", Value::Array(items)).await;
    let after = a.get(uri).await.1;
    assert_ne!(before, after);
    for r in readers {
        let v = r.await.unwrap();
        assert!(v == before || v == after, "{v}");
    }
}
