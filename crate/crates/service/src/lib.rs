//! Read-only HTTP API over a prebuilt [`ModelStore`].
//!
//! Routes:
//! - `POST /predict`: a [`PredictRequest`] body, answered with the same JSON
//!   document `fip predict` prints for identical inputs.
//! - `GET /customers`: customer ids in canonical order.
//! - `GET /customers/{id}/items`: the customer's known items with base
//!   frequencies.
//!
//! Errors are JSON objects with an `error` message: 400 for malformed bodies,
//! an empty basket or `k = 0`; 404 for an unknown customer; 422 for unknown
//! item tokens, which are also listed under `unknown_items`.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use fip_core::engine::{render_prediction, EngineError, ModelStore, PredictRequest};
use serde::Serialize;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

/// Profiles are immutable after startup, so handlers share them without locks.
pub type SharedStore = Arc<ModelStore<f64>>;

#[derive(Serialize)]
struct ErrorBody {
    error: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    unknown_items: Vec<String>,
}

fn json_response(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn error_response(status: StatusCode, error: String, unknown_items: Vec<String>) -> Response {
    let body = serde_json::to_string(&ErrorBody {
        error,
        unknown_items,
    })
    .unwrap_or_else(|_| r#"{"error":"unserialisable error"}"#.to_string());
    json_response(status, body)
}

fn engine_error(e: EngineError) -> Response {
    let status = match &e {
        EngineError::UnknownCustomer(_) => StatusCode::NOT_FOUND,
        EngineError::UnknownItems(_) => StatusCode::UNPROCESSABLE_ENTITY,
        EngineError::EmptyBasket | EngineError::ZeroK | EngineError::BadToken(_) => {
            StatusCode::BAD_REQUEST
        }
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    };
    let message = e.to_string();
    let unknown = match e {
        EngineError::UnknownItems(tokens) => tokens,
        _ => Vec::new(),
    };
    error_response(status, message, unknown)
}

fn to_json<T: Serialize>(value: &T) -> Response {
    match serde_json::to_string(value) {
        Ok(body) => json_response(StatusCode::OK, body),
        Err(e) => error_response(StatusCode::INTERNAL_SERVER_ERROR, e.to_string(), Vec::new()),
    }
}

// The body is parsed by hand so every malformed request maps to 400 with a
// JSON message, whatever its content type.
async fn predict(State(store): State<SharedStore>, body: Bytes) -> Response {
    let request: PredictRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => {
            return error_response(
                StatusCode::BAD_REQUEST,
                format!("malformed request: {e}"),
                Vec::new(),
            )
        }
    };
    match store.predict(&request).and_then(|p| render_prediction(&p)) {
        Ok(body) => json_response(StatusCode::OK, body),
        Err(e) => engine_error(e),
    }
}

async fn customers(State(store): State<SharedStore>) -> Response {
    let ids: Vec<&str> = store.customer_ids().map(|c| c.as_str()).collect();
    to_json(&ids)
}

async fn customer_items(State(store): State<SharedStore>, Path(id): Path<String>) -> Response {
    match store.items(&id) {
        Ok(items) => to_json(&items),
        Err(e) => engine_error(e),
    }
}

/// CORS policy: any origin when `origin` is `None`.
pub fn cors(origin: Option<HeaderValue>) -> CorsLayer {
    let allow = match origin {
        Some(o) => AllowOrigin::exact(o),
        None => AllowOrigin::from(Any),
    };
    CorsLayer::new()
        .allow_origin(allow)
        .allow_methods(Any)
        .allow_headers(Any)
}

pub fn router(store: SharedStore, origin: Option<HeaderValue>) -> Router {
    Router::new()
        .route("/predict", post(predict))
        .route("/customers", get(customers))
        .route("/customers/{id}/items", get(customer_items))
        .layer(cors(origin))
        .with_state(store)
}

/// Serve until ctrl-c.
pub async fn serve(
    store: SharedStore,
    addr: SocketAddr,
    origin: Option<HeaderValue>,
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!(
        "listening on {} with {} customers",
        listener.local_addr()?,
        store.len()
    );
    axum::serve(listener, router(store, origin))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
