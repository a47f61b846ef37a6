//! A loaded city: event store plus the geometry-derived views over it.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::features::{CityFeature, FeatureCollection};
use crate::geo::{Footprint, Geometry};
use crate::index::{AdminRegionSpec, IndexEntry, IndexError};
use crate::scene::{SceneCatalog, SceneError, SceneObject};
use crate::sdm::{EntityId, EntityKind, Scalar, Store};
use crate::traffic::{RouteSchedule, TrafficError, TrafficStore};

/// Layer for admin boundaries; hidden until a client turns it on.
pub const ADMIN_LAYER: &str = "admin";
/// Cruise speed for subway lines without one of their own.
pub const DEFAULT_SUBWAY_KMH: f64 = 35.0;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("reading {path}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing {path}")]
    Parse { path: String, source: serde_json::Error },
    #[error("feature {index}: {reason}")]
    Feature { index: usize, reason: String },
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Traffic(#[from] TrafficError),
}

/// Leaf layer an entity kind is drawn on, if any.
pub fn default_layer(kind: EntityKind) -> Option<&'static str> {
    use EntityKind::*;
    match kind {
        Building | House | Room | UrbanComponent => Some("above-ground/buildings"),
        RoadSegment => Some("above-ground/roads"),
        PipelineSegment => Some("underground/pipelines"),
        SubwayLine => Some("underground/subway"),
        PowerNode | PowerEdge => Some("networks/power"),
        AdminRegion => Some(ADMIN_LAYER),
        UrbanEvent => Some("overlays/heatmap"),
        Person | Company => None,
    }
}

#[derive(Debug, Clone, Default)]
pub struct City {
    pub store: Store,
    pub catalog: SceneCatalog,
    pub traffic: TrafficStore,
    pub schedules: BTreeMap<EntityId, RouteSchedule>,
}

pub fn read_features(path: &Path) -> Result<Vec<CityFeature>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io { path: path.display().to_string(), source })?;
    let fc: FeatureCollection =
        serde_json::from_str(&text).map_err(|source| DatasetError::Parse { path: path.display().to_string(), source })?;
    fc.features
        .iter()
        .enumerate()
        .map(|(index, f)| f.to_city_feature().map_err(|reason| DatasetError::Feature { index, reason }))
        .collect()
}

fn num_attr(store: &Store, f: &CityFeature, key: &str) -> Option<f64> {
    store
        .current(&f.id)
        .and_then(|s| s.attr(key))
        .or_else(|| f.attrs.get(key))
        .and_then(Scalar::as_f64)
}

fn schedule_for(store: &Store, f: &CityFeature) -> Result<RouteSchedule, TrafficError> {
    let departure = num_attr(store, f, "departure_ms").unwrap_or(0.0) as i64;
    let speed = num_attr(store, f, "speed_kmh").unwrap_or(DEFAULT_SUBWAY_KMH);
    RouteSchedule::uniform(f.id.clone(), f.geometry.vertices().to_vec(), departure, speed)
}

impl City {
    /// Builds the scene, index, admin network, road registry and subway
    /// schedules from geometry features over an already-replayed store.
    pub fn assemble(store: Store, features: Vec<CityFeature>) -> Result<City, DatasetError> {
        let mut objects = Vec::new();
        let mut bare = Vec::new();
        let mut admin = Vec::new();
        let mut traffic = TrafficStore::new();
        let mut schedules = BTreeMap::new();
        for (index, f) in features.into_iter().enumerate() {
            let kind = f.id.kind();
            match (kind, &f.geometry) {
                (EntityKind::AdminRegion, Geometry::Polygon(fp)) => admin.push(AdminRegionSpec {
                    id: f.id.clone(),
                    level: f.admin_level.ok_or_else(|| DatasetError::Feature { index, reason: "admin region without level".into() })?,
                    parent: f.parent.clone(),
                    footprint: Footprint::clone(fp),
                }),
                (EntityKind::RoadSegment, Geometry::Polyline(pts)) => traffic.register_segment(f.id.clone(), pts.clone())?,
                (EntityKind::SubwayLine, Geometry::Polyline(_)) => {
                    schedules.insert(f.id.clone(), schedule_for(&store, &f)?);
                }
                _ => {}
            }
            match f.layer.as_deref().or(default_layer(kind)) {
                Some(layer) => {
                    let mut obj = SceneObject::new(f.id, layer, f.geometry, f.base_alt, f.height_m);
                    if let Some(z) = f.lod_min_zoom {
                        obj.lod_min_zoom = z;
                    }
                    objects.push(obj);
                }
                None => bare.push(IndexEntry::new(f.id, f.geometry)?),
            }
        }
        let mut catalog = SceneCatalog::bulk_load(objects)?;
        for entry in bare {
            catalog.index_mut().insert(entry)?;
        }
        catalog.index_mut().load_admin(admin)?;
        catalog.tree_mut().set_visible(ADMIN_LAYER, false)?;
        Ok(City { store, catalog, traffic, schedules })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Feature;
    use serde_json::json;

    fn feats(v: serde_json::Value) -> Vec<CityFeature> {
        let fc: FeatureCollection = serde_json::from_value(v).unwrap();
        fc.features.iter().map(Feature::to_city_feature).collect::<Result<_, _>>().unwrap()
    }

    #[test]
    fn assembles_each_view() {
        let f = feats(json!({"type": "FeatureCollection", "features": [
            {"type": "Feature", "geometry": {"type": "Polygon", "coordinates": [[[0,0],[0.001,0],[0.001,0.001],[0,0.001]]]},
             "properties": {"kind": "Building", "id": "b1", "height_m": 20}},
            {"type": "Feature", "geometry": {"type": "LineString", "coordinates": [[0,0],[0.01,0]]},
             "properties": {"kind": "RoadSegment", "id": "r1"}},
            {"type": "Feature", "geometry": {"type": "LineString", "coordinates": [[0,0,-20],[0,0.1,-20]]},
             "properties": {"kind": "SubwayLine", "id": "l1", "attrs.speed_kmh": 60, "attrs.departure_ms": 1000}},
            {"type": "Feature", "geometry": {"type": "Point", "coordinates": [0.0005, 0.0005]},
             "properties": {"kind": "Person", "id": "p1"}}
        ]}));
        let city = City::assemble(Store::new(), f).unwrap();
        assert_eq!(city.catalog.len(), 3);
        assert_eq!(city.catalog.index().len(), 4);
        assert_eq!(city.traffic.segment_ids().count(), 1);
        let l1 = EntityId::new(EntityKind::SubwayLine, "l1").unwrap();
        assert_eq!(city.schedules[&l1].departure(), 1000);
        assert_eq!(city.catalog.get(&l1).unwrap().layer_id, "underground/subway");
    }

    #[test]
    fn admin_needs_level() {
        let f = feats(json!({"type": "FeatureCollection", "features": [
            {"type": "Feature", "geometry": {"type": "Polygon", "coordinates": [[[0,0],[1,0],[1,1],[0,1]]]},
             "properties": {"kind": "AdminRegion", "id": "d1"}}
        ]}));
        assert!(matches!(City::assemble(Store::new(), f), Err(DatasetError::Feature { index: 0, .. })));
    }
}
