//! Spatial index over city geometry.
//!
//! An R-tree over entry bounding boxes is the prefilter; every candidate is
//! then tested exactly against its geometry. Administrative regions are
//! kept apart as a four-level nested partition.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};

use rstar::primitives::{GeomWithData, Rectangle};
use rstar::{RTree, AABB};
use thiserror::Error;

use crate::geo::{haversine_m, AltitudeBand, BBox, Footprint, GeoError, GeoPoint, Geometry};
use crate::sdm::{AdminPath, EntityId, EntityKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IndexError {
    #[error("invalid geometry for {id}: {reason}")]
    InvalidGeometry { id: String, reason: String },
    #[error("point ({lon}, {lat}) is outside administrative coverage")]
    Unassigned { lon: f64, lat: f64 },
    #[error("invalid admin region {id}: {reason}")]
    InvalidRegion { id: String, reason: String },
}

fn invalid(id: &EntityId, e: GeoError) -> IndexError {
    IndexError::InvalidGeometry { id: id.to_string(), reason: e.to_string() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub id: EntityId,
    pub bbox: BBox,
    pub geometry: Geometry,
    pub band: AltitudeBand,
}

impl IndexEntry {
    pub fn new(id: EntityId, geometry: Geometry) -> Result<Self, IndexError> {
        let geometry = match geometry {
            Geometry::Polygon(f) => Geometry::Polygon(Footprint::new(f.ring().to_vec()).map_err(|e| invalid(&id, e))?),
            Geometry::Polyline(pts) => Geometry::polyline(pts).map_err(|e| invalid(&id, e))?,
            Geometry::Point(p) => Geometry::point(p).map_err(|e| invalid(&id, e))?,
        };
        Ok(IndexEntry { bbox: geometry.bbox(), band: geometry.band(), id, geometry })
    }

    pub fn polygon(id: EntityId, ring: Vec<GeoPoint>) -> Result<Self, IndexError> {
        let f = Footprint::new(ring).map_err(|e| invalid(&id, e))?;
        Self::new(id, Geometry::Polygon(f))
    }

    pub fn point(id: EntityId, p: GeoPoint) -> Result<Self, IndexError> {
        Self::new(id, Geometry::Point(p))
    }
}

type Slot = GeomWithData<Rectangle<[f64; 2]>, EntityId>;

fn slot(e: &IndexEntry) -> Slot {
    let b = e.bbox;
    GeomWithData::new(Rectangle::from_corners([b.min_lon, b.min_lat], [b.max_lon, b.max_lat]), e.id.clone())
}

fn envelope(b: &BBox) -> AABB<[f64; 2]> {
    AABB::from_corners([b.min_lon, b.min_lat], [b.max_lon, b.max_lat])
}

#[derive(Debug, Clone)]
struct AdminRegion {
    level: usize,
    footprint: Footprint,
    children: Vec<EntityId>,
}

#[derive(Debug, Clone, Default)]
pub struct GeoIndex {
    entries: HashMap<EntityId, IndexEntry>,
    tree: RTree<Slot>,
    regions: BTreeMap<EntityId, AdminRegion>,
    districts: Vec<EntityId>,
}

/// Level of an administrative region, outermost first.
pub const ADMIN_LEVELS: [&str; 4] = ["district", "street", "community", "grid"];

/// Input for [`GeoIndex::load_admin`].
#[derive(Debug, Clone)]
pub struct AdminRegionSpec {
    pub id: EntityId,
    /// 0 = district .. 3 = grid cell.
    pub level: usize,
    pub parent: Option<EntityId>,
    pub footprint: Footprint,
}

impl GeoIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds the tree in one pass. Later duplicates of an id win.
    pub fn bulk_load(entries: Vec<IndexEntry>) -> Self {
        let mut map = HashMap::with_capacity(entries.len());
        for e in entries {
            map.insert(e.id.clone(), e);
        }
        let tree = RTree::bulk_load(map.values().map(slot).collect());
        GeoIndex { entries: map, tree, ..Default::default() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &EntityId) -> Option<&IndexEntry> {
        self.entries.get(id)
    }

    pub fn entries(&self) -> impl Iterator<Item = &IndexEntry> {
        self.entries.values()
    }

    /// Inserts or replaces the entry for `entry.id`.
    pub fn insert(&mut self, entry: IndexEntry) -> Result<(), IndexError> {
        let entry = IndexEntry::new(entry.id, entry.geometry)?;
        if let Some(old) = self.entries.remove(&entry.id) {
            self.tree.remove(&slot(&old));
        }
        self.tree.insert(slot(&entry));
        self.entries.insert(entry.id.clone(), entry);
        Ok(())
    }

    pub fn remove(&mut self, id: &EntityId) -> Option<IndexEntry> {
        let old = self.entries.remove(id)?;
        self.tree.remove(&slot(&old));
        Some(old)
    }

    fn candidates<'a>(&'a self, b: &BBox) -> impl Iterator<Item = &'a IndexEntry> + 'a {
        self.tree
            .locate_in_envelope_intersecting(&envelope(b))
            .filter_map(|s| self.entries.get(&s.data))
    }

    /// Entries whose geometry intersects `b`.
    pub fn query_bbox(&self, b: &BBox, band: Option<AltitudeBand>) -> BTreeSet<EntityId> {
        self.candidates(b)
            .filter(|e| band.is_none_or(|want| e.band == want))
            .filter(|e| e.geometry.intersects_box(b))
            .map(|e| e.id.clone())
            .collect()
    }

    /// Entries containing `p`; polygon boundaries count as inside.
    pub fn query_point(&self, p: &GeoPoint, band: Option<AltitudeBand>) -> BTreeSet<EntityId> {
        let pb = BBox { min_lon: p.lon, min_lat: p.lat, max_lon: p.lon, max_lat: p.lat };
        self.candidates(&pb)
            .filter(|e| band.is_none_or(|want| e.band == want))
            .filter(|e| e.geometry.contains_point(p.lon, p.lat))
            .map(|e| e.id.clone())
            .collect()
    }

    /// The `k` entries with the closest centroids by great-circle distance,
    /// ascending, ties broken by id.
    pub fn nearest_k(&self, p: &GeoPoint, k: usize) -> Vec<(EntityId, f64)> {
        if k == 0 {
            return Vec::new();
        }
        // max-heap of the best k seen so far
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        for e in self.entries.values() {
            let c = Candidate { dist: haversine_m(p, &e.geometry.centroid()), id: &e.id };
            if heap.len() < k {
                heap.push(c);
            } else if c < *heap.peek().expect("heap holds k items") {
                heap.pop();
                heap.push(c);
            }
        }
        heap.into_sorted_vec().into_iter().map(|c| (c.id.clone(), c.dist)).collect()
    }

    /// Loads administrative regions; replaces any previously loaded set.
    pub fn load_admin(&mut self, specs: Vec<AdminRegionSpec>) -> Result<(), IndexError> {
        let mut regions: BTreeMap<EntityId, AdminRegion> = BTreeMap::new();
        let mut parents = Vec::new();
        for s in specs {
            let bad = |reason: &str| IndexError::InvalidRegion { id: s.id.to_string(), reason: reason.into() };
            if s.id.kind() != EntityKind::AdminRegion {
                return Err(bad("not an admin_region entity"));
            }
            if s.level > 3 {
                return Err(bad("level must be 0..=3"));
            }
            if (s.level == 0) != s.parent.is_none() {
                return Err(bad("only districts lack a parent"));
            }
            parents.push((s.id.clone(), s.parent.clone()));
            regions.insert(
                s.id.clone(),
                AdminRegion { level: s.level, footprint: s.footprint, children: Vec::new() },
            );
        }
        let mut districts = Vec::new();
        for (id, parent) in parents {
            let Some(pid) = parent else {
                districts.push(id);
                continue;
            };
            let bad = |reason: String| IndexError::InvalidRegion { id: id.to_string(), reason };
            let parent = regions.get(&pid).ok_or_else(|| bad(format!("missing parent {pid}")))?;
            let child = &regions[&id];
            if parent.level + 1 != child.level {
                return Err(bad(format!("parent {pid} is not one level up")));
            }
            if !child.footprint.ring().iter().all(|v| parent.footprint.contains(v.lon, v.lat)) {
                return Err(bad(format!("not contained in parent {pid}")));
            }
            regions.get_mut(&pid).expect("checked").children.push(id);
        }
        for r in regions.values_mut() {
            r.children.sort();
        }
        districts.sort();
        self.regions = regions;
        self.districts = districts;
        Ok(())
    }

    pub fn has_admin_region(&self, id: &EntityId) -> bool {
        self.regions.contains_key(id)
    }

    /// Level of a loaded admin region (0 = district).
    pub fn admin_level(&self, id: &EntityId) -> Option<usize> {
        self.regions.get(id).map(|r| r.level)
    }

    pub fn admin_children(&self, id: &EntityId) -> &[EntityId] {
        self.regions.get(id).map_or(&[], |r| &r.children)
    }

    pub fn admin_footprint(&self, id: &EntityId) -> Option<&Footprint> {
        self.regions.get(id).map(|r| &r.footprint)
    }

    pub fn admin_region_ids(&self) -> impl Iterator<Item = &EntityId> {
        self.regions.keys()
    }

    /// Descends district → grid cell, taking the lexically smallest
    /// containing region at each level.
    pub fn assign_admin_path(&self, p: &GeoPoint) -> Result<AdminPath, IndexError> {
        let unassigned = || IndexError::Unassigned { lon: p.lon, lat: p.lat };
        let mut level: &[EntityId] = &self.districts;
        let mut path = Vec::with_capacity(4);
        for _ in 0..4 {
            // candidate lists are sorted, so the first hit is the smallest id
            let hit = level
                .iter()
                .find(|id| self.regions[*id].footprint.contains(p.lon, p.lat))
                .ok_or_else(unassigned)?;
            path.push(hit.clone());
            level = &self.regions[hit].children;
        }
        let [district, street, community, grid_cell] = <[EntityId; 4]>::try_from(path).map_err(|_| unassigned())?;
        Ok(AdminPath { district, street, community, grid_cell })
    }
}

struct Candidate<'a> {
    dist: f64,
    id: &'a EntityId,
}

impl Ord for Candidate<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist.total_cmp(&other.dist).then_with(|| self.id.cmp(other.id))
    }
}

impl PartialOrd for Candidate<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Candidate<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate<'_> {}
