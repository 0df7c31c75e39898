use std::hash::{DefaultHasher, Hash, Hasher};

use aesthevo::apm::Tally;
use aesthevo::pollhub::{PollView, Side, Stats};
use aesthevo::MapSubmission;
use axum::body::Bytes;
use axum::extract::{Extension, Path, Query, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use axum_extra::extract::cookie::{Cookie, SameSite};
use axum_extra::extract::CookieJar;
use rand::Rng;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use crate::{ApiError, AppState, ADMIN_HEADER, SESSION_COOKIE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TilesetEntry {
    pub id: String,
    pub name: String,
    pub tile_count: usize,
    pub tile_px: usize,
    pub empty_index: u8,
    pub sprites_url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TilesetList {
    pub tilesets: Vec<TilesetEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteRequest {
    pub choice: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteResponse {
    pub poll_id: String,
    pub your_vote: Side,
    pub tallies: Tally,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub id: String,
    pub tileset: String,
    pub size: usize,
}

#[derive(Debug, Deserialize)]
struct StatsQuery {
    tileset: Option<String>,
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/api/tilesets", get(tilesets))
        .route("/api/tilesets/{id}/sprites.png", get(sprites))
        .route("/api/polls/current", get(current_poll))
        .route("/api/polls/{id}/vote", post(vote))
        .route("/api/polls/{id}/result", get(result))
        .route("/api/maps", post(submit_map))
        .route("/api/maps/{id}", delete(delete_map))
        .route("/api/stats", get(stats))
        .route("/api/pairings/{id}/image.png", get(pairing_image));
    let api = match &state.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(|| async { ApiError::not_found("no such route") }),
    };
    api.layer(middleware::from_fn(session_layer)).with_state(state)
}

fn valid_token(t: &str) -> bool {
    t.len() == 32 && t.bytes().all(|b| b.is_ascii_hexdigit())
}

/// Session token of the caller, attached by the session layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session(pub String);

/// Reads the session cookie, issuing a fresh token when it is absent or
/// malformed, and exposes it to handlers as a [`Session`] extension.
async fn session_layer(jar: CookieJar, mut req: Request, next: Next) -> Response {
    let existing = jar
        .get(SESSION_COOKIE)
        .map(|c| c.value().to_string())
        .filter(|t| valid_token(t));
    let (token, fresh) = match existing {
        Some(t) => (t, false),
        None => (format!("{:032x}", rand::rng().random::<u128>()), true),
    };
    req.extensions_mut().insert(Session(token.clone()));
    let resp = next.run(req).await;
    if !fresh {
        return resp;
    }
    let cookie = Cookie::build((SESSION_COOKIE, token))
        .path("/")
        .http_only(true)
        .same_site(SameSite::Lax)
        .build();
    (jar.add(cookie), resp).into_response()
}

fn etag_of(bytes: &[u8]) -> String {
    let mut h = DefaultHasher::new();
    bytes.hash(&mut h);
    format!("\"{:016x}\"", h.finish())
}

/// Body with an ETag, or 304 when the client already has it.
fn cached(headers: &HeaderMap, content_type: &'static str, body: Vec<u8>) -> Response {
    let tag = etag_of(&body);
    let fresh = headers
        .get(header::IF_NONE_MATCH)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.split(',').any(|t| t.trim() == tag));
    let tag = HeaderValue::from_str(&tag).expect("hex etag");
    if fresh {
        return (StatusCode::NOT_MODIFIED, [(header::ETAG, tag)]).into_response();
    }
    (
        [(header::CONTENT_TYPE, HeaderValue::from_static(content_type)), (header::ETAG, tag)],
        body,
    )
        .into_response()
}

fn parse_json<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request("BadRequest", format!("invalid JSON body: {e}")))
}

async fn tilesets(State(s): State<AppState>, headers: HeaderMap) -> Response {
    let list = {
        let hub = s.lock();
        TilesetList {
            tilesets: hub
                .registry()
                .iter()
                .map(|t| TilesetEntry {
                    id: t.id.clone(),
                    name: t.name.clone(),
                    tile_count: t.tile_count(),
                    tile_px: t.tile_px(),
                    empty_index: t.empty_index,
                    sprites_url: format!("/api/tilesets/{}/sprites.png", t.id),
                })
                .collect(),
        }
    };
    let body = serde_json::to_vec(&list).expect("serializable");
    cached(&headers, "application/json", body)
}

async fn sprites(State(s): State<AppState>, Path(id): Path<String>, headers: HeaderMap) -> Result<Response, ApiError> {
    let png = {
        let hub = s.lock();
        let tileset = hub
            .registry()
            .get(&id)
            .map_err(|_| ApiError::not_found(format!("unknown tileset '{id}'")))?;
        tileset
            .sheet_png()
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "RenderError", e.to_string()))?
    };
    Ok(cached(&headers, "image/png", png))
}

async fn current_poll(State(s): State<AppState>, Extension(Session(token)): Extension<Session>) -> Result<Json<PollView>, ApiError> {
    let hub = s.lock();
    let id = hub.current_poll()?.id.clone();
    Ok(Json(hub.poll_view(&id, Some(&token))?))
}

async fn vote(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Extension(Session(token)): Extension<Session>,
    body: Bytes,
) -> Result<Json<VoteResponse>, ApiError> {
    let req: VoteRequest = parse_json(&body)?;
    let choice: Side = req.choice.parse().map_err(|e: String| ApiError::bad_request("BadChoice", e))?;
    let now = s.now();
    let tallies = s.lock().cast_vote(&id, &token, choice, now)?;
    Ok(Json(VoteResponse {
        poll_id: id,
        your_vote: choice,
        tallies,
    }))
}

async fn result(State(s): State<AppState>, Path(id): Path<String>) -> Result<Json<PollView>, ApiError> {
    Ok(Json(s.lock().poll_result(&id)?))
}

async fn submit_map(
    State(s): State<AppState>,
    Extension(Session(token)): Extension<Session>,
    body: Bytes,
) -> Result<(StatusCode, Json<SubmitResponse>), ApiError> {
    let now = s.now();
    if !s.limiter.lock().unwrap_or_else(|p| p.into_inner()).allows(&token, now) {
        return Err(ApiError::rate_limited());
    }
    let submission: MapSubmission = parse_json(&body)?;
    let map = s.lock().submit_map(&submission, now)?;
    s.limiter.lock().unwrap_or_else(|p| p.into_inner()).record(&token, now);
    Ok((
        StatusCode::CREATED,
        Json(SubmitResponse {
            id: map.id.clone(),
            tileset: map.tileset_id.clone(),
            size: map.size(),
        }),
    ))
}

async fn delete_map(State(s): State<AppState>, Path(id): Path<String>, headers: HeaderMap) -> Result<StatusCode, ApiError> {
    let token = headers.get(ADMIN_HEADER).and_then(|v| v.to_str().ok()).unwrap_or("");
    let now = s.now();
    s.lock().moderate_delete(&id, token, now)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn stats(State(s): State<AppState>, Query(q): Query<StatsQuery>) -> Json<Stats> {
    Json(s.lock().stats(q.tileset.as_deref()))
}

async fn pairing_image(State(s): State<AppState>, Path(id): Path<String>, headers: HeaderMap) -> Result<Response, ApiError> {
    let path = {
        let hub = s.lock();
        hub.poll(&id)?;
        hub.image_path(&id)
    };
    let png = tokio::fs::read(&path)
        .await
        .map_err(|_| ApiError::not_found(format!("no image for pairing '{id}'")))?;
    Ok(cached(&headers, "image/png", png))
}
