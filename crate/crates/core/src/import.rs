//! External FeatureCollection ingestion.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::features::{CityFeature, FeatureCollection};
use crate::sdm::{EventRecord, EventSink, Millis, Store};

#[derive(Debug, Error)]
pub enum ImportError {
    #[error("malformed document: {0}")]
    Parse(serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rejection {
    /// Zero-based position in the `features` array.
    pub feature: usize,
    pub id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ImportReport {
    pub accepted: usize,
    pub rejected: Vec<Rejection>,
}

#[derive(Debug, Default)]
pub struct ImportOutcome {
    pub report: ImportReport,
    /// Accepted features, in document order.
    pub features: Vec<CityFeature>,
}

/// Turns each valid feature into a `Create` event at time `t` (or the
/// store's latest time, if later) and applies it through `sink`. Invalid
/// features are reported and skipped; they never affect the others.
pub fn import_collection(
    text: &str,
    store: &mut Store,
    sink: &mut dyn EventSink,
    t: Millis,
    source: &str,
) -> Result<ImportOutcome, ImportError> {
    let fc: FeatureCollection = serde_json::from_str(text).map_err(ImportError::Parse)?;
    let ts = store.last_timestamp().map_or(t, |last| last.max(t));
    let mut out = ImportOutcome::default();
    let mut seen = BTreeSet::new();
    for (i, f) in fc.features.iter().enumerate() {
        let raw_id = f.properties.get("id").and_then(|v| v.as_str()).map(str::to_string);
        let reject = |reason: String| Rejection { feature: i, id: raw_id.clone(), reason };
        let cf = match f.to_city_feature() {
            Ok(cf) => cf,
            Err(reason) => {
                out.report.rejected.push(reject(reason));
                continue;
            }
        };
        if !seen.insert(cf.id.clone()) {
            out.report.rejected.push(reject(format!("duplicate id {}", cf.id)));
            continue;
        }
        let event = EventRecord::create(store.last_event_id() + 1, ts, cf.id.clone(), cf.attrs.clone(), source);
        match store.apply_event_with(event, sink) {
            Ok(_) => {
                out.report.accepted += 1;
                out.features.push(cf);
            }
            Err(e) => out.report.rejected.push(reject(e.to_string())),
        }
    }
    Ok(out)
}
