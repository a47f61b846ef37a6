//! Transport-free HTTP facade. A server adapter turns wire requests into
//! [`ApiRequest`]s and writes back [`ApiResponse`]s.

mod routes;

use std::collections::BTreeMap;

use parking_lot::{Mutex, RwLock};
use serde::Serialize;
use serde_json::json;

use crate::analytics::AnalyticsError;
use crate::dataset::City;
use crate::scene::SceneError;
use crate::sdm::{EventRecord, EventSink, SdmError};
use crate::traffic::{CongestionSample, TrafficError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiRequest {
    pub method: String,
    /// Percent-decoded path segments.
    pub segments: Vec<String>,
    pub query: BTreeMap<String, String>,
    pub body: String,
}

impl ApiRequest {
    /// Splits a request target such as `/tiles/3/1/2?at=5`.
    pub fn new(method: &str, target: &str, body: impl Into<String>) -> Self {
        let (path, query) = target.split_once('?').unwrap_or((target, ""));
        let segments = path
            .split('/')
            .filter(|s| !s.is_empty())
            .map(|s| percent_encoding::percent_decode_str(s).decode_utf8_lossy().into_owned())
            .collect();
        let query = form_urlencoded::parse(query.as_bytes()).into_owned().collect();
        ApiRequest { method: method.to_ascii_uppercase(), segments, query, body: body.into() }
    }

    pub fn get(target: &str) -> Self {
        Self::new("GET", target, "")
    }

    pub fn post(target: &str, body: impl Into<String>) -> Self {
        Self::new("POST", target, body)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiResponse {
    pub status: u16,
    /// UTF-8 JSON.
    pub body: String,
}

impl ApiResponse {
    pub fn json<T: Serialize>(status: u16, value: &T) -> Self {
        match serde_json::to_string(value) {
            Ok(body) => ApiResponse { status, body },
            Err(e) => ApiError::internal(e.to_string()).into(),
        }
    }

    pub fn ok<T: Serialize>(value: &T) -> Self {
        Self::json(200, value)
    }

    pub fn value(&self) -> serde_json::Value {
        serde_json::from_str(&self.body).unwrap_or(serde_json::Value::Null)
    }
}

/// An error response: status code, stable machine code, human message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: u16,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError { status: 400, code: "bad_request", message: message.into() }
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        ApiError { status: 404, code: "not_found", message: message.into() }
    }

    pub fn unprocessable(message: impl Into<String>) -> Self {
        ApiError { status: 422, code: "unprocessable", message: message.into() }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ApiError { status: 500, code: "internal", message: message.into() }
    }
}

impl From<ApiError> for ApiResponse {
    fn from(e: ApiError) -> Self {
        ApiResponse::json(e.status, &json!({"error": e.code, "message": e.message}))
    }
}

impl From<SdmError> for ApiError {
    fn from(e: SdmError) -> Self {
        let message = e.to_string();
        let (status, code) = match e {
            SdmError::OutOfOrderEvent { .. } => (409, "out_of_order"),
            SdmError::TimeRegression { .. } => (409, "time_regression"),
            SdmError::DuplicateCreate(_) | SdmError::DuplicateRelation | SdmError::DeletedEntity(_) => (409, "conflict"),
            SdmError::UnknownEntity(_) | SdmError::RelationNotFound => (404, "not_found"),
            SdmError::Storage(_) => (500, "storage_failure"),
            SdmError::SelfRelation(_)
            | SdmError::WrongKind { .. }
            | SdmError::InvalidRange { .. }
            | SdmError::InvalidId(_)
            | SdmError::InvalidPayload(_) => (400, "bad_request"),
        };
        ApiError { status, code, message }
    }
}

impl From<AnalyticsError> for ApiError {
    fn from(e: AnalyticsError) -> Self {
        ApiError::unprocessable(e.to_string())
    }
}

impl From<TrafficError> for ApiError {
    fn from(e: TrafficError) -> Self {
        match e {
            TrafficError::UnknownSegment(_) => ApiError::not_found(e.to_string()),
            TrafficError::InvalidGrid(_) => ApiError::unprocessable(e.to_string()),
            _ => ApiError::bad_request(e.to_string()),
        }
    }
}

impl From<SceneError> for ApiError {
    fn from(e: SceneError) -> Self {
        match e {
            SceneError::UnknownLayer(_) | SceneError::UnknownEntity(_) | SceneError::InvalidTile { .. } => {
                ApiError::not_found(e.to_string())
            }
            _ => ApiError::bad_request(e.to_string()),
        }
    }
}

type Sink = Box<dyn EventSink + Send>;

/// Shared server state. Reads take a shared lock for the whole request, so
/// each sees one consistent snapshot; writes go through one exclusive lock.
pub struct Service {
    city: RwLock<City>,
    sink: Mutex<Option<Sink>>,
}

impl Service {
    /// A service whose events live only in memory.
    pub fn new(city: City) -> Self {
        Service { city: RwLock::new(city), sink: Mutex::new(None) }
    }

    /// A service that appends each event to `sink` before acknowledging it.
    pub fn with_sink(city: City, sink: Sink) -> Self {
        Service { city: RwLock::new(city), sink: Mutex::new(Some(sink)) }
    }

    /// Runs `f` against the current state.
    pub fn read<R>(&self, f: impl FnOnce(&City) -> R) -> R {
        f(&self.city.read())
    }

    /// Gives the sink a chance to sync batched writes.
    pub fn flush(&self) -> Result<(), String> {
        self.sink.lock().as_mut().map_or(Ok(()), |s| s.flush())
    }

    pub fn route_request(&self, req: &ApiRequest) -> ApiResponse {
        let result = match req.method.as_str() {
            "GET" => routes::get(&self.city.read(), req),
            "POST" => self.post(req),
            _ => Err(ApiError { status: 405, code: "method_not_allowed", message: req.method.clone() }),
        };
        result.unwrap_or_else(ApiResponse::from)
    }

    fn post(&self, req: &ApiRequest) -> Result<ApiResponse, ApiError> {
        let segs: Vec<&str> = req.segments.iter().map(String::as_str).collect();
        match segs.as_slice() {
            ["events"] => {
                let event: EventRecord =
                    serde_json::from_str(&req.body).map_err(|e| ApiError::bad_request(format!("event body: {e}")))?;
                let mut city = self.city.write();
                let mut sink = self.sink.lock();
                let state = match sink.as_mut() {
                    Some(s) => city.store.apply_event_with(event, s.as_mut())?,
                    None => city.store.apply_event(event)?,
                };
                Ok(ApiResponse::json(201, &json!({"event_id": city.store.last_event_id(), "state": state})))
            }
            ["traffic", "samples"] => {
                #[derive(serde::Deserialize)]
                #[serde(untagged)]
                enum Batch {
                    Bare(Vec<CongestionSample>),
                    Wrapped { samples: Vec<CongestionSample> },
                }
                let batch: Batch =
                    serde_json::from_str(&req.body).map_err(|e| ApiError::bad_request(format!("sample batch: {e}")))?;
                let samples = match batch {
                    Batch::Bare(s) | Batch::Wrapped { samples: s } => s,
                };
                let accepted = self.city.write().traffic.ingest_batch(&samples)?;
                Ok(ApiResponse::ok(&json!({"accepted": accepted})))
            }
            _ if routes::is_get_route(&segs) => Err(ApiError { status: 405, code: "method_not_allowed", message: "use GET".into() }),
            _ => Err(ApiError::not_found(format!("no route for /{}", req.segments.join("/")))),
        }
    }
}
