use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use super::layers::LayerTree;
use super::tiles::{TileKey, MAX_ZOOM};
use super::SceneError;
use crate::features::GeometryJson;
use crate::geo::{AltitudeBand, GeoPoint, Geometry};
use crate::index::{GeoIndex, IndexEntry};
use crate::sdm::{Direction, EntityId, EntityKind, Millis, Predicate, Store};

/// Geometry plus layer and level-of-detail metadata. Polygons are extruded
/// from `base_alt` by `height_m` on the client.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub entity_id: EntityId,
    pub layer_id: String,
    pub geometry: Geometry,
    pub base_alt: f64,
    pub height_m: f64,
    pub lod_min_zoom: u8,
}

impl SceneObject {
    /// Builds an object with the default level of detail for its kind and size.
    pub fn new(entity_id: EntityId, layer_id: impl Into<String>, geometry: Geometry, base_alt: f64, height_m: f64) -> Self {
        let lod = lod_min_zoom(geometry.area_m2(), entity_id.kind());
        SceneObject { entity_id, layer_id: layer_id.into(), geometry, base_alt, height_m, lod_min_zoom: lod }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |reason: &str| SceneError::InvalidObject { id: self.entity_id.to_string(), reason: reason.into() };
        if !(self.height_m >= 0.0 && self.height_m.is_finite()) {
            return Err(bad("height_m must be non-negative"));
        }
        if self.lod_min_zoom > MAX_ZOOM {
            return Err(bad("lod_min_zoom out of range"));
        }
        if self.entity_id.kind() == EntityKind::PipelineSegment && self.geometry.vertices().iter().any(|p| p.alt >= 0.0) {
            return Err(bad("pipelines must lie underground"));
        }
        Ok(())
    }

    pub fn area_m2(&self) -> f64 {
        self.geometry.area_m2()
    }
}

impl Serialize for SceneObject {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("SceneObject", 7)?;
        st.serialize_field("entity_id", &self.entity_id)?;
        st.serialize_field("kind", &self.entity_id.kind())?;
        st.serialize_field("layer_id", &self.layer_id)?;
        st.serialize_field("geometry", &GeometryJson::encode(&self.geometry))?;
        st.serialize_field("base_alt", &self.base_alt)?;
        st.serialize_field("height_m", &self.height_m)?;
        st.serialize_field("lod_min_zoom", &self.lod_min_zoom)?;
        st.end()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TileManifest {
    pub key: TileKey,
    pub generated_at: Millis,
    /// Sorted by entity id.
    pub objects: Vec<SceneObject>,
}

impl TileManifest {
    pub fn ids(&self) -> BTreeSet<EntityId> {
        self.objects.iter().map(|o| o.entity_id.clone()).collect()
    }
}

/// Minimum zoom at which an object enters tile manifests.
pub fn lod_min_zoom(footprint_area_m2: f64, kind: EntityKind) -> u8 {
    match kind {
        EntityKind::Building => match footprint_area_m2 {
            a if a >= 1e5 => 11,
            a if a >= 1e4 => 13,
            a if a >= 1e3 => 15,
            _ => 16,
        },
        EntityKind::Room | EntityKind::House => 18,
        EntityKind::PipelineSegment => 15,
        EntityKind::RoadSegment | EntityKind::SubwayLine => 12,
        EntityKind::PowerNode | EntityKind::PowerEdge => 14,
        EntityKind::AdminRegion => 0,
        _ => 16,
    }
}

/// Scene objects, their layer tree and the spatial index over them.
#[derive(Debug, Clone, Default)]
pub struct SceneCatalog {
    tree: LayerTree,
    objects: HashMap<EntityId, SceneObject>,
    index: GeoIndex,
}

impl SceneCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn get(&self, id: &EntityId) -> Option<&SceneObject> {
        self.objects.get(id)
    }

    pub fn objects(&self) -> impl Iterator<Item = &SceneObject> {
        self.objects.values()
    }

    pub fn tree(&self) -> &LayerTree {
        &self.tree
    }

    pub fn tree_mut(&mut self) -> &mut LayerTree {
        &mut self.tree
    }

    pub fn index(&self) -> &GeoIndex {
        &self.index
    }

    pub fn index_mut(&mut self) -> &mut GeoIndex {
        &mut self.index
    }

    /// Inserts or replaces an object.
    pub fn insert(&mut self, obj: SceneObject) -> Result<(), SceneError> {
        obj.validate()?;
        if !self.tree.is_leaf(&obj.layer_id) {
            return Err(SceneError::OrphanLayer { layer: obj.layer_id.clone(), object: obj.entity_id.to_string() });
        }
        let entry = IndexEntry::new(obj.entity_id.clone(), obj.geometry.clone())?;
        self.index.insert(entry)?;
        if let Some(old) = self.objects.remove(&obj.entity_id) {
            self.tree.detach(&old.layer_id, &old.entity_id);
        }
        self.tree.attach(&obj.layer_id, obj.entity_id.clone())?;
        self.objects.insert(obj.entity_id.clone(), obj);
        Ok(())
    }

    /// Bulk startup path: one index build for all objects.
    pub fn bulk_load(objects: Vec<SceneObject>) -> Result<Self, SceneError> {
        let mut entries = Vec::with_capacity(objects.len());
        let mut tree = LayerTree::skeleton();
        let mut map = HashMap::with_capacity(objects.len());
        for obj in objects {
            obj.validate()?;
            tree.attach(&obj.layer_id, obj.entity_id.clone())?;
            entries.push(IndexEntry::new(obj.entity_id.clone(), obj.geometry.clone())?);
            map.insert(obj.entity_id.clone(), obj);
        }
        Ok(SceneCatalog { tree, objects: map, index: GeoIndex::bulk_load(entries) })
    }

    /// Objects intersecting the tile, detailed enough for its zoom and on a
    /// visible layer in `tree`.
    pub fn objects_for_tile(&self, key: TileKey, tree: &LayerTree, generated_at: Millis) -> TileManifest {
        let b = key.bbox();
        let mut objects: Vec<SceneObject> = self
            .index
            .query_bbox(&b, None)
            .into_iter()
            .filter_map(|id| self.objects.get(&id))
            .filter(|o| o.lod_min_zoom <= key.z && tree.effective_visibility(&o.layer_id).unwrap_or(false))
            .cloned()
            .collect();
        objects.sort_by(|a, b| a.entity_id.cmp(&b.entity_id));
        TileManifest { key, generated_at, objects }
    }

    /// Among visible objects in the altitude band that contain `p`, the one
    /// with the smallest footprint; ties go to the smaller id.
    pub fn pick_object(&self, p: &GeoPoint, z: u8, mode: AltitudeBand, tree: &LayerTree) -> Option<&SceneObject> {
        self.index
            .query_point(p, Some(mode))
            .into_iter()
            .filter_map(|id| self.objects.get(&id))
            .filter(|o| o.lod_min_zoom <= z && tree.effective_visibility(&o.layer_id).unwrap_or(false))
            .min_by(|a, b| a.area_m2().total_cmp(&b.area_m2()).then_with(|| a.entity_id.cmp(&b.entity_id)))
    }
}

/// Power nodes reachable from `node` over `ConnectedTo` edges in either
/// direction at time `t`, including `node`.
pub fn trace_connected(store: &Store, node: &EntityId, t: Millis) -> Result<BTreeSet<EntityId>, SceneError> {
    if node.kind() != EntityKind::PowerNode {
        return Err(SceneError::WrongKind { id: node.to_string(), expected: EntityKind::PowerNode });
    }
    if !store.is_live_at(node, t) {
        return Err(SceneError::UnknownEntity(node.to_string()));
    }
    let mut seen = BTreeSet::from([node.clone()]);
    let mut queue = VecDeque::from([node.clone()]);
    while let Some(cur) = queue.pop_front() {
        for dir in [Direction::Out, Direction::In] {
            for next in store.neighbors(&cur, Predicate::ConnectedTo, t, dir) {
                if next.kind() == EntityKind::PowerNode && seen.insert(next.clone()) {
                    queue.push_back(next);
                }
            }
        }
    }
    Ok(seen)
}

/// Per-layer object counts, for diagnostics.
pub fn layer_counts(catalog: &SceneCatalog) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for o in catalog.objects() {
        *counts.entry(o.layer_id.clone()).or_insert(0) += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::Footprint;
    use crate::sdm::{Attributes, EventRecord, SemanticRelation};
    use crate::scene::tile_key_for;

    fn id(s: &str) -> EntityId {
        s.parse().unwrap()
    }

    fn rect(min_lon: f64, min_lat: f64, max_lon: f64, max_lat: f64) -> Geometry {
        Geometry::Polygon(Footprint::rect(min_lon, min_lat, max_lon, max_lat, 0.0).unwrap())
    }

    #[test]
    fn lod_table() {
        assert_eq!(lod_min_zoom(50_000.0, EntityKind::Building), 13);
        assert_eq!(lod_min_zoom(1e5, EntityKind::Building), 11);
        assert_eq!(lod_min_zoom(999.0, EntityKind::Building), 16);
        assert_eq!(lod_min_zoom(5e6, EntityKind::Room), 18);
        assert_eq!(lod_min_zoom(0.0, EntityKind::PipelineSegment), 15);
        assert_eq!(lod_min_zoom(0.0, EntityKind::RoadSegment), 12);
        assert_eq!(lod_min_zoom(0.0, EntityKind::SubwayLine), 12);
        assert_eq!(lod_min_zoom(0.0, EntityKind::PowerEdge), 14);
        let areas = [0.0, 500.0, 1e3, 5e3, 1e4, 5e4, 1e5, 1e7];
        for w in areas.windows(2) {
            assert!(lod_min_zoom(w[0], EntityKind::Building) >= lod_min_zoom(w[1], EntityKind::Building));
        }
    }

    #[test]
    fn orphan_layer() {
        let mut c = SceneCatalog::new();
        let obj = SceneObject::new(id("building:b1"), "rooftops", rect(0.0, 0.0, 0.001, 0.001), 0.0, 10.0);
        assert!(matches!(c.insert(obj), Err(SceneError::OrphanLayer { .. })));
        let ok = SceneObject::new(id("building:b1"), "above-ground/buildings", rect(0.0, 0.0, 0.001, 0.001), 0.0, 10.0);
        c.insert(ok).unwrap();
        assert_eq!(c.tree().get("above-ground/buildings").unwrap().objects, vec![id("building:b1")]);
    }

    #[test]
    fn object_validation() {
        let mut c = SceneCatalog::new();
        let mut neg = SceneObject::new(id("building:b1"), "above-ground/buildings", rect(0.0, 0.0, 0.001, 0.001), 0.0, 1.0);
        neg.height_m = -1.0;
        assert!(matches!(c.insert(neg), Err(SceneError::InvalidObject { .. })));
        let surface_pipe = Geometry::polyline(vec![GeoPoint::surface(0.0, 0.0).unwrap(), GeoPoint::surface(1.0, 0.0).unwrap()])
            .unwrap();
        let pipe = SceneObject::new(id("pipeline_segment:p"), "underground/pipelines", surface_pipe, 0.0, 0.0);
        assert!(matches!(c.insert(pipe), Err(SceneError::InvalidObject { .. })));
    }

    fn building_over(key: TileKey, lod: u8) -> SceneObject {
        let b = key.bbox();
        let (cx, cy) = ((b.min_lon + b.max_lon) / 2.0, (b.min_lat + b.max_lat) / 2.0);
        let mut o = SceneObject::new(id("building:b1"), "above-ground/buildings", rect(cx, cy, cx + 1e-5, cy + 1e-5), 0.0, 30.0);
        o.lod_min_zoom = lod;
        o
    }

    #[test]
    fn lod_filter_on_manifest() {
        let p = GeoPoint::surface(114.06, 22.54).unwrap();
        let k15 = tile_key_for(&p, 15).unwrap();
        let mut c = SceneCatalog::new();
        c.insert(building_over(k15, 13)).unwrap();
        let tree = c.tree().clone();
        assert_eq!(c.objects_for_tile(k15, &tree, 0).objects.len(), 1);
        let k11 = tile_key_for(&p, 11).unwrap();
        assert!(c.objects_for_tile(k11, &tree, 0).objects.is_empty());
        let mut hidden = tree.clone();
        hidden.set_visible("above-ground/buildings", false).unwrap();
        assert!(c.objects_for_tile(k15, &hidden, 0).objects.is_empty());
    }

    fn picking_scene() -> SceneCatalog {
        let mut c = SceneCatalog::new();
        c.insert(SceneObject::new(id("building:b"), "above-ground/buildings", rect(0.0, 0.0, 0.001, 0.001), 0.0, 40.0))
            .unwrap();
        c.insert(SceneObject::new(id("room:r"), "above-ground/buildings", rect(0.0002, 0.0002, 0.0004, 0.0004), 3.0, 3.0))
            .unwrap();
        let pipe = Geometry::polyline(vec![GeoPoint::new(0.0, 0.0003, -6.0).unwrap(), GeoPoint::new(0.001, 0.0003, -6.0).unwrap()])
            .unwrap();
        c.insert(SceneObject::new(id("pipeline_segment:x"), "underground/pipelines", pipe, -6.0, 0.0)).unwrap();
        c
    }

    #[test]
    fn pick_prefers_room_then_band() {
        let c = picking_scene();
        let tree = c.tree().clone();
        let p = GeoPoint::surface(0.0003, 0.0003).unwrap();
        assert_eq!(c.pick_object(&p, 19, AltitudeBand::Above, &tree).unwrap().entity_id, id("room:r"));
        assert_eq!(c.pick_object(&p, 19, AltitudeBand::Below, &tree).unwrap().entity_id, id("pipeline_segment:x"));
        // room not yet detailed at zoom 16
        assert_eq!(c.pick_object(&p, 16, AltitudeBand::Above, &tree).unwrap().entity_id, id("building:b"));
        let empty = GeoPoint::surface(0.5, 0.5).unwrap();
        assert!(c.pick_object(&empty, 19, AltitudeBand::Above, &tree).is_none());
    }

    fn grid_store(edges: &[(&str, &str)], nodes: &[&str]) -> Store {
        let mut s = Store::new();
        let mut n = 1;
        for node in nodes {
            s.apply_event(EventRecord::create(n, 10, id(node), Attributes::new(), "t")).unwrap();
            n += 1;
        }
        for (a, b) in edges {
            let rel = SemanticRelation::new(id(a), Predicate::ConnectedTo, id(b), 10);
            s.apply_event(EventRecord::relate(n, 10, rel, "t")).unwrap();
            n += 1;
        }
        s
    }

    #[test]
    fn trace_examples() {
        let s = grid_store(
            &[("power_node:a", "power_node:b"), ("power_node:c", "power_node:b")],
            &["power_node:a", "power_node:b", "power_node:c", "power_node:z", "house:h"],
        );
        assert_eq!(trace_connected(&s, &id("power_node:z"), 20).unwrap().len(), 1);
        let all = trace_connected(&s, &id("power_node:a"), 20).unwrap();
        assert_eq!(all.into_iter().map(|i| i.to_string()).collect::<Vec<_>>(), ["power_node:a", "power_node:b", "power_node:c"]);
        assert!(matches!(trace_connected(&s, &id("house:h"), 20), Err(SceneError::WrongKind { .. })));
        assert!(matches!(trace_connected(&s, &id("power_node:q"), 20), Err(SceneError::UnknownEntity(_))));
    }
}
