//! HTTP API over a live plugload dataset.
//!
//! All bodies are JSON. Reads take a shared lock on one consistent snapshot;
//! writes (a whole reading batch, one incentive, ...) take the exclusive lock,
//! so no reader sees a partially applied batch.

mod clock;
mod store;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, NaiveDate, Utc};
use plugwatt_core::{Dataset, ParticipantId};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

pub use clock::{Clock, ManualClock, SystemClock};
pub use plugwatt_core::scoring::ScoringConfig;
pub use store::{
    IngestOutcome, LeaderboardBody, ReadingIn, Rejection, SeriesPoint, SocketReading, Status, Store, StoreError,
    HEARTBEAT_GAP_S, WINNERS_CSV,
};

pub const ENV_DATA_DIR: &str = "PLUGWATT_DATA_DIR";
pub const ENV_BIND_ADDR: &str = "PLUGWATT_BIND_ADDR";
pub const ENV_SITE_TZ: &str = "PLUGWATT_SITE_TZ";
pub const ENV_OPERATOR_TOKEN: &str = "PLUGWATT_OPERATOR_TOKEN";
pub const DEFAULT_BIND_ADDR: &str = "127.0.0.1:8080";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: Option<PathBuf>,
    pub bind_addr: SocketAddr,
    /// Overrides the dataset's timezone when set.
    pub site_tz: Option<String>,
    pub operator_token: Option<String>,
    pub scoring: ScoringConfig,
    pub cache_ttl_s: i64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            data_dir: None,
            bind_addr: DEFAULT_BIND_ADDR.parse().expect("valid address"),
            site_tz: None,
            operator_token: None,
            scoring: ScoringConfig::default(),
            cache_ttl_s: 60,
        }
    }
}

impl ServiceConfig {
    /// Reads the `PLUGWATT_*` environment variables over the defaults.
    pub fn from_env() -> Result<Self, String> {
        let mut c = Self::default();
        if let Ok(d) = std::env::var(ENV_DATA_DIR) {
            c.data_dir = Some(d.into());
        }
        if let Ok(a) = std::env::var(ENV_BIND_ADDR) {
            c.bind_addr = a.parse().map_err(|e| format!("{ENV_BIND_ADDR}: {e}"))?;
        }
        c.site_tz = std::env::var(ENV_SITE_TZ).ok();
        c.operator_token = std::env::var(ENV_OPERATOR_TOKEN).ok().filter(|t| !t.is_empty());
        Ok(c)
    }
}

struct Cached {
    body: Bytes,
    etag: String,
    created: i64,
}

type CacheKey = (u64, NaiveDate, i64);

struct Inner {
    store: RwLock<Store>,
    clock: Arc<dyn Clock>,
    operator_token: Option<String>,
    cache_ttl_s: i64,
    cache: Mutex<HashMap<CacheKey, Cached>>,
}

/// Shared handle to the service state.
#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(store: Store, clock: Arc<dyn Clock>, config: &ServiceConfig) -> Self {
        Self(Arc::new(Inner {
            store: RwLock::new(store),
            clock,
            operator_token: config.operator_token.clone(),
            cache_ttl_s: config.cache_ttl_s,
            cache: Mutex::new(HashMap::new()),
        }))
    }

    /// Runs `f` on a consistent snapshot of the store.
    pub fn read<T>(&self, f: impl FnOnce(&Store) -> T) -> T {
        f(&self.0.store.read().expect("store lock"))
    }

    fn write<T>(&self, f: impl FnOnce(&mut Store) -> T) -> T {
        f(&mut self.0.store.write().expect("store lock"))
    }

    fn now(&self) -> DateTime<Utc> {
        self.0.clock.now()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/health", get(|| async { Json(json!({"status": "ok"})) }))
        .route("/v1/status", get(status))
        .route("/v1/readings", post(post_readings))
        .route("/v1/leaderboard", get(get_leaderboard))
        .route("/v1/incentives", post(post_incentive))
        .route("/v1/comfort", post(post_comfort))
        .route("/v1/series", get(get_series))
        .route("/v1/sockets", get(get_sockets))
        .route("/v1/baseline", get(get_baseline))
        .route("/v1/screentime-heartbeat", post(post_heartbeat))
        .route("/v1/screentime", get(get_screentime))
        .route("/v1/winners", get(get_winners))
        .route("/v1/winners/declare", post(post_declare))
        .route("/v1/notifications", get(get_notifications))
        .route("/v1/notifications/ack", post(post_ack))
        .with_state(state)
}

/// Builds the app from a loaded dataset, persisting writes to `config.data_dir`.
pub fn build(dataset: Dataset, clock: Arc<dyn Clock>, config: &ServiceConfig) -> Result<Router, String> {
    let mut ds = dataset;
    if let Some(tz) = &config.site_tz {
        ds.clock = plugwatt_core::SiteClock::new(tz.parse().map_err(|_| format!("unknown timezone `{tz}`"))?);
    }
    let mut store = Store::new(ds, config.scoring);
    if let Some(dir) = &config.data_dir {
        store = store.with_persistence(dir).map_err(|e| format!("{e:?}"))?;
    }
    Ok(router(AppState::new(store, clock, config)))
}

/// Serves until ctrl-c.
pub async fn serve(app: Router, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

pub struct ApiError(StatusCode, String);

impl ApiError {
    fn bad_request(msg: impl Into<String>) -> Self {
        Self(StatusCode::BAD_REQUEST, msg.into())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(m) => Self(StatusCode::NOT_FOUND, m),
            StoreError::Conflict(m) => Self(StatusCode::CONFLICT, m),
            StoreError::Unprocessable(m) => Self(StatusCode::UNPROCESSABLE_ENTITY, m),
            StoreError::NoBaselines => Self(StatusCode::CONFLICT, "baselines have not been computed".into()),
            StoreError::Io(m) => {
                tracing::error!("persistence failure: {m}");
                Self(StatusCode::INTERNAL_SERVER_ERROR, "persistence failure".into())
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_json<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed JSON: {e}")))
}

fn check_operator(state: &AppState, headers: &HeaderMap) -> ApiResult<()> {
    let Some(expected) = &state.0.operator_token else {
        return Err(ApiError(StatusCode::FORBIDDEN, "operator token not configured".into()));
    };
    let given = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    if given == Some(expected.as_str()) {
        Ok(())
    } else {
        Err(ApiError(StatusCode::UNAUTHORIZED, "operator token required".into()))
    }
}

fn parse_instant(s: &str) -> ApiResult<DateTime<Utc>> {
    plugwatt_core::io::parse_utc(s).ok_or_else(|| ApiError::bad_request(format!("invalid instant `{s}`")))
}

async fn status(State(s): State<AppState>) -> Json<Status> {
    let now = s.now().timestamp();
    Json(s.read(|st| st.status(now)))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ReadingBatch {
    List(Vec<ReadingIn>),
    Wrapped { readings: Vec<ReadingIn> },
}

async fn post_readings(State(s): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let items = match parse_json::<ReadingBatch>(&body)? {
        ReadingBatch::List(v) | ReadingBatch::Wrapped { readings: v } => v,
    };
    let outcome = s.write(|st| st.ingest(&items))?;
    let code = if outcome.rejected > 0 {
        StatusCode::UNPROCESSABLE_ENTITY
    } else {
        StatusCode::ACCEPTED
    };
    Ok((code, Json(outcome)).into_response())
}

#[derive(Deserialize)]
struct LeaderboardQuery {
    date: Option<NaiveDate>,
    as_of: Option<String>,
}

/// Minute-floored evaluation instant and the local date it defaults to.
fn leaderboard_instant(s: &AppState, q: &LeaderboardQuery) -> ApiResult<(NaiveDate, i64)> {
    let as_of = match &q.as_of {
        Some(t) => parse_instant(t)?,
        None => s.now(),
    }
    .timestamp();
    let as_of = as_of - as_of.rem_euclid(60);
    let date = match q.date {
        Some(d) => d,
        None => s.read(|st| st.dataset().clock.local_date(as_of)),
    };
    Ok((date, as_of))
}

async fn get_leaderboard(
    State(s): State<AppState>,
    Query(q): Query<LeaderboardQuery>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    let (date, as_of) = leaderboard_instant(&s, &q)?;
    let now = s.now().timestamp();
    let (body, etag) = {
        let st = s.0.store.read().expect("store lock");
        let key = (st.version(), date, as_of);
        let mut cache = s.0.cache.lock().expect("cache lock");
        cache.retain(|k, v| k.0 == key.0 && now - v.created < s.0.cache_ttl_s);
        if let Some(c) = cache.get(&key) {
            (c.body.clone(), c.etag.clone())
        } else {
            let lb = st.leaderboard(date, as_of)?;
            let body = Bytes::from(serde_json::to_vec(&lb).expect("serializable"));
            let etag = format!("\"{}\"", hex::encode(Sha256::digest(&body)));
            cache.insert(
                key,
                Cached {
                    body: body.clone(),
                    etag: etag.clone(),
                    created: now,
                },
            );
            (body, etag)
        }
    };
    let etag_value = HeaderValue::from_str(&etag).expect("hex etag");
    let cache_control = HeaderValue::from_static("max-age=60");
    if headers.get(header::IF_NONE_MATCH) == Some(&etag_value) {
        return Ok((StatusCode::NOT_MODIFIED, [(header::ETAG, etag_value), (header::CACHE_CONTROL, cache_control)])
            .into_response());
    }
    Ok((
        StatusCode::OK,
        [
            (header::CONTENT_TYPE, HeaderValue::from_static("application/json")),
            (header::ETAG, etag_value),
            (header::CACHE_CONTROL, cache_control),
        ],
        body,
    )
        .into_response())
}

#[derive(Deserialize)]
struct IncentiveIn {
    date: NaiveDate,
    amount_usd: u32,
}

async fn post_incentive(State(s): State<AppState>, headers: HeaderMap, body: Bytes) -> ApiResult<Response> {
    check_operator(&s, &headers)?;
    let inc: IncentiveIn = parse_json(&body)?;
    s.write(|st| st.post_incentive(inc.date, inc.amount_usd))?;
    Ok((
        StatusCode::CREATED,
        Json(json!({"date": inc.date, "amount_usd": inc.amount_usd})),
    )
        .into_response())
}

#[derive(Deserialize)]
struct ComfortIn {
    participant_id: ParticipantId,
    level: i64,
    timestamp: Option<DateTime<Utc>>,
}

async fn post_comfort(State(s): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let c: ComfortIn = parse_json(&body)?;
    let t = c.timestamp.unwrap_or_else(|| s.now());
    let report = s.write(|st| st.post_comfort(&c.participant_id, c.level, t))?;
    Ok((StatusCode::CREATED, Json(report)).into_response())
}

#[derive(Deserialize)]
struct ParticipantQuery {
    participant: ParticipantId,
}

#[derive(Deserialize)]
struct SeriesQuery {
    participant: ParticipantId,
    from: Option<String>,
    to: Option<String>,
    /// Seconds per point (default 300).
    resolution: Option<i64>,
}

/// `[from, to)` defaulting to local midnight today until now.
fn range(s: &AppState, from: &Option<String>, to: &Option<String>) -> ApiResult<(i64, i64)> {
    let now = s.now().timestamp();
    let to = match to {
        Some(t) => parse_instant(t)?.timestamp(),
        None => now,
    };
    let from = match from {
        Some(f) => parse_instant(f)?.timestamp(),
        None => s.read(|st| {
            let c = &st.dataset().clock;
            c.day_start(c.local_date(to))
        }),
    };
    Ok((from, to))
}

#[derive(Serialize)]
struct SeriesBody {
    participant_id: ParticipantId,
    resolution_s: i64,
    points: Vec<SeriesPoint>,
}

async fn get_series(State(s): State<AppState>, Query(q): Query<SeriesQuery>) -> ApiResult<Json<SeriesBody>> {
    let (from, to) = range(&s, &q.from, &q.to)?;
    let resolution_s = q.resolution.unwrap_or(300);
    let points = s.read(|st| st.series(&q.participant, from, to, resolution_s))?;
    Ok(Json(SeriesBody {
        participant_id: q.participant,
        resolution_s,
        points,
    }))
}

#[derive(Serialize)]
struct SocketsBody {
    participant_id: ParticipantId,
    total_watts: f64,
    sockets: Vec<SocketReading>,
}

async fn get_sockets(State(s): State<AppState>, Query(q): Query<ParticipantQuery>) -> ApiResult<Json<SocketsBody>> {
    let now = s.now().timestamp();
    let sockets = s.read(|st| st.sockets(&q.participant, now))?;
    Ok(Json(SocketsBody {
        participant_id: q.participant,
        total_watts: sockets.iter().map(|x| x.watts).sum(),
        sockets,
    }))
}

async fn get_baseline(State(s): State<AppState>, Query(q): Query<ParticipantQuery>) -> ApiResult<Response> {
    let b = s.read(|st| st.baseline_of(&q.participant))?;
    Ok(Json(b).into_response())
}

#[derive(Deserialize)]
struct HeartbeatIn {
    participant_id: ParticipantId,
}

async fn post_heartbeat(State(s): State<AppState>, body: Bytes) -> ApiResult<StatusCode> {
    let h: HeartbeatIn = parse_json(&body)?;
    let now = s.now();
    s.write(|st| st.heartbeat(&h.participant_id, now))?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Deserialize)]
struct ScreentimeQuery {
    participant: ParticipantId,
    from: Option<String>,
    to: Option<String>,
}

async fn get_screentime(State(s): State<AppState>, Query(q): Query<ScreentimeQuery>) -> ApiResult<Response> {
    let (from, to) = range(&s, &q.from, &q.to)?;
    let (secs, sessions) = s.read(|st| {
        Ok::<_, StoreError>((st.screentime_seconds(&q.participant, from, to)?, st.sessions(&q.participant)?))
    })?;
    let at = |t: i64| DateTime::from_timestamp(t, 0).expect("valid instant");
    let sessions: Vec<_> = sessions
        .into_iter()
        .filter(|(a, b)| *b > from && *a < to)
        .map(|(a, b)| json!({"start": at(a), "end": at(b)}))
        .collect();
    Ok(Json(json!({
        "participant_id": q.participant,
        "from": at(from),
        "to": at(to),
        "seconds": secs,
        "sessions": sessions,
    }))
    .into_response())
}

async fn get_winners(State(s): State<AppState>) -> Response {
    Json(s.read(|st| st.winners().cloned().collect::<Vec<_>>())).into_response()
}

#[derive(Deserialize)]
struct DeclareIn {
    date: NaiveDate,
}

async fn post_declare(State(s): State<AppState>, headers: HeaderMap, body: Bytes) -> ApiResult<Response> {
    check_operator(&s, &headers)?;
    let d: DeclareIn = parse_json(&body)?;
    let now = s.now().timestamp();
    let (winner, created) = s.write(|st| st.declare(d.date, now))?;
    let code = if created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((code, Json(json!({ "date": d.date, "winner": winner }))).into_response())
}

async fn get_notifications(State(s): State<AppState>, Query(q): Query<ParticipantQuery>) -> ApiResult<Response> {
    let n = s.read(|st| st.notification(&q.participant))?;
    Ok(Json(json!({ "participant_id": q.participant, "notification": n })).into_response())
}

#[derive(Deserialize)]
struct AckIn {
    participant_id: ParticipantId,
    date: NaiveDate,
}

async fn post_ack(State(s): State<AppState>, body: Bytes) -> ApiResult<StatusCode> {
    let a: AckIn = parse_json(&body)?;
    s.write(|st| st.acknowledge(&a.participant_id, a.date))?;
    Ok(StatusCode::NO_CONTENT)
}
