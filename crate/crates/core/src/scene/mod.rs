//! Server side of the city scene: the layer tree, slippy-tile addressing,
//! level-of-detail tile manifests, object picking and power-grid tracing.

mod catalog;
mod layers;
mod tiles;

pub use catalog::{layer_counts, lod_min_zoom, trace_connected, SceneCatalog, SceneObject, TileManifest};
pub use layers::{LayerNode, LayerTree, LayerView, ROOT_LAYER};
pub use tiles::{tile_key_for, TileKey, MAX_MERCATOR_LAT, MAX_ZOOM};

use thiserror::Error;

use crate::index::IndexError;
use crate::sdm::EntityKind;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SceneError {
    #[error("object {object} references missing or non-leaf layer '{layer}'")]
    OrphanLayer { layer: String, object: String },
    #[error("unknown layer '{0}'")]
    UnknownLayer(String),
    #[error("latitude {0} outside the Mercator range")]
    LatitudeOutOfRange(f64),
    #[error("invalid tile {z}/{x}/{y}")]
    InvalidTile { z: u8, x: u32, y: u32 },
    #[error("invalid scene object {id}: {reason}")]
    InvalidObject { id: String, reason: String },
    #[error("unknown entity {0}")]
    UnknownEntity(String),
    #[error("{id} is not a {expected}")]
    WrongKind { id: String, expected: EntityKind },
    #[error(transparent)]
    Index(#[from] IndexError),
}
