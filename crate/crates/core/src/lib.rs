//! City-scale spatiotemporal data platform.
//!
//! [`sdm`] holds the event-sourced entity store, [`index`] the spatial index,
//! [`scene`] the layer tree and tile catalog, [`analytics`] region statistics,
//! [`traffic`] road conditions and subway tracking, and [`api`] the request
//! router with its append-only persistence.

pub mod analytics;
pub mod api;
pub mod dataset;
pub mod features;
pub mod gen;
pub mod geo;
pub mod import;
pub mod index;
pub mod persist;
pub mod scene;
pub mod sdm;
pub mod traffic;

pub use geo::{AltitudeBand, BBox, Footprint, GeoPoint, Geometry};
pub use sdm::{EntityId, EntityKind, EventRecord, Millis, Store};
