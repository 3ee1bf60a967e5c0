#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, Response, StatusCode};
use axum::Router;
use chrono::{DateTime, NaiveDate, Utc};
use http_body_util::BodyExt;
use plugwatt_core::synth::{generate_synthetic, SynthConfig};
use plugwatt_core::{Dataset, Phase, PhaseKind, Site};
use plugwatt_service::{router, AppState, ManualClock, ServiceConfig, Store};
use tower::ServiceExt;

pub const TOKEN: &str = "s3cret";

pub fn d(m: u32, day: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(2016, m, day).unwrap()
}

/// One baseline week then one incentive week, five participants at 5-minute cadence.
pub fn dataset() -> Dataset {
    let phase = |kind, label: &str, s, e| Phase {
        site: Site::Cmu,
        kind,
        label: label.into(),
        start_date: s,
        end_date: e,
    };
    let cfg = SynthConfig {
        n_participants: 5,
        sample_period_s: 300,
        phases: vec![
            phase(PhaseKind::Baseline, "P1C", d(9, 12), d(9, 18)),
            phase(PhaseKind::Incentive, "P2C", d(9, 19), d(9, 25)),
        ],
        seed: 11,
        ..SynthConfig::default()
    };
    generate_synthetic(&cfg).unwrap().dataset
}

pub struct App {
    pub router: Router,
    pub state: AppState,
    pub clock: Arc<ManualClock>,
}

pub fn app_with(ds: Dataset, token: Option<&str>, dir: Option<&std::path::Path>) -> App {
    let config = ServiceConfig {
        operator_token: token.map(str::to_owned),
        ..ServiceConfig::default()
    };
    let mut store = Store::new(ds, config.scoring);
    if let Some(dir) = dir {
        store = store.with_persistence(dir).unwrap();
    }
    let clock = Arc::new(ManualClock::new(utc("2016-09-21T19:00:00Z")));
    let state = AppState::new(store, clock.clone(), &config);
    App {
        router: router(state.clone()),
        state,
        clock,
    }
}

pub fn app() -> App {
    app_with(dataset(), Some(TOKEN), None)
}

pub fn utc(s: &str) -> DateTime<Utc> {
    s.parse().unwrap()
}

impl App {
    pub async fn send(&self, req: Request<Body>) -> Response<Body> {
        self.router.clone().oneshot(req).await.unwrap()
    }

    pub async fn get(&self, uri: &str) -> (StatusCode, serde_json::Value) {
        json_of(self.send(Request::get(uri).body(Body::empty()).unwrap()).await).await
    }

    pub async fn post(&self, uri: &str, body: serde_json::Value) -> (StatusCode, serde_json::Value) {
        self.post_raw(uri, body.to_string(), None).await
    }

    pub async fn post_op(&self, uri: &str, body: serde_json::Value) -> (StatusCode, serde_json::Value) {
        self.post_raw(uri, body.to_string(), Some(TOKEN)).await
    }

    pub async fn post_raw(&self, uri: &str, body: String, token: Option<&str>) -> (StatusCode, serde_json::Value) {
        let mut req = Request::post(uri).header("content-type", "application/json");
        if let Some(t) = token {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        json_of(self.send(req.body(Body::from(body)).unwrap()).await).await
    }
}

pub async fn json_of(resp: Response<Body>) -> (StatusCode, serde_json::Value) {
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    // extractor rejections come back as plain text
    let v = serde_json::from_slice(&bytes)
        .unwrap_or_else(|_| serde_json::Value::String(String::from_utf8_lossy(&bytes).into_owned()));
    (status, v)
}

/// The test dataset as a live deployment would hold it five minutes before the default "now".
pub fn live_dataset() -> Dataset {
    let mut ds = dataset();
    let now = utc("2016-09-21T19:00:00Z").timestamp();
    let keys: Vec<_> = ds
        .readings
        .participants()
        .flat_map(|p| ds.readings.sockets(p).unwrap().keys().map(move |s| (p.clone(), s.clone())))
        .collect();
    for (p, s) in keys {
        ds.readings.stream_mut(&p, &s).retain(|x| x.t < now - 300);
    }
    ds
}
