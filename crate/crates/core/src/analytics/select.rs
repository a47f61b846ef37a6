use std::collections::BTreeSet;

use super::AnalyticsError;
use crate::geo::{BBox, GeoPoint};
use crate::index::GeoIndex;
use crate::sdm::{Direction, EntityId, EntityKind, Millis, Predicate, Store};

/// A jurisdictional or geometric region.
#[derive(Debug, Clone, PartialEq)]
pub enum RegionSelector {
    /// Leading levels of an admin path, outermost first.
    AdminPrefix(Vec<EntityId>),
    Community(EntityId),
    GridRange(Vec<EntityId>),
    Box(BBox),
}

fn admin_id(s: &str) -> Result<EntityId, AnalyticsError> {
    let parsed = if s.contains(':') {
        s.parse::<EntityId>().ok().filter(|id| id.kind() == EntityKind::AdminRegion)
    } else {
        EntityId::new(EntityKind::AdminRegion, s).ok()
    };
    parsed.ok_or_else(|| AnalyticsError::InvalidRegion(format!("bad region id '{s}'")))
}

impl RegionSelector {
    /// Parses `admin:d1/s1`, `community:c1`, `grid:g1,g2` or
    /// `bbox:minlon,minlat,maxlon,maxlat`. Bare ids name admin regions.
    pub fn parse(s: &str) -> Result<Self, AnalyticsError> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| AnalyticsError::InvalidRegion(format!("missing selector type in '{s}'")))?;
        match kind {
            "admin" => {
                let ids = rest.split('/').map(admin_id).collect::<Result<Vec<_>, _>>()?;
                if ids.is_empty() || ids.len() > 4 {
                    return Err(AnalyticsError::InvalidRegion("admin prefix needs 1 to 4 levels".into()));
                }
                Ok(RegionSelector::AdminPrefix(ids))
            }
            "community" => Ok(RegionSelector::Community(admin_id(rest)?)),
            "grid" if rest.is_empty() => Ok(RegionSelector::GridRange(Vec::new())),
            "grid" => Ok(RegionSelector::GridRange(rest.split(',').map(admin_id).collect::<Result<_, _>>()?)),
            "bbox" => BBox::parse(rest)
                .map(RegionSelector::Box)
                .map_err(|e| AnalyticsError::InvalidRegion(e.to_string())),
            other => Err(AnalyticsError::InvalidRegion(format!("unknown selector type '{other}'"))),
        }
    }

    /// Checks every referenced region exists at the right level.
    pub fn validate(&self, index: &GeoIndex) -> Result<(), AnalyticsError> {
        let at_level = |id: &EntityId, level: usize| {
            if index.admin_level(id) == Some(level) {
                Ok(())
            } else {
                Err(AnalyticsError::UnknownRegion(id.to_string()))
            }
        };
        match self {
            RegionSelector::AdminPrefix(ids) => {
                if ids.is_empty() {
                    return Err(AnalyticsError::InvalidRegion("empty admin prefix".into()));
                }
                for (level, id) in ids.iter().enumerate() {
                    at_level(id, level)?;
                    if level > 0 && !index.admin_children(&ids[level - 1]).contains(id) {
                        return Err(AnalyticsError::UnknownRegion(format!("{id} is not inside {}", ids[level - 1])));
                    }
                }
                Ok(())
            }
            RegionSelector::Community(id) => at_level(id, 2),
            RegionSelector::GridRange(ids) => ids.iter().try_for_each(|id| at_level(id, 3)),
            RegionSelector::Box(_) => Ok(()),
        }
    }

    /// Whether a located point falls in the region.
    pub fn contains(&self, index: &GeoIndex, p: &GeoPoint) -> bool {
        match self {
            RegionSelector::Box(b) => b.contains(p),
            RegionSelector::GridRange(ids) if ids.is_empty() => false,
            _ => match index.assign_admin_path(p) {
                Err(_) => false,
                Ok(path) => match self {
                    RegionSelector::AdminPrefix(ids) => path.starts_with(ids),
                    RegionSelector::Community(c) => &path.community == c,
                    RegionSelector::GridRange(ids) => ids.contains(&path.grid_cell),
                    RegionSelector::Box(_) => unreachable!(),
                },
            },
        }
    }
}

const LOCATION_HOPS: usize = 4;

/// Where an entity is at `t`: its own `lon`/`lat` attributes, else its
/// indexed geometry centroid, else the location of what it lives in, is
/// part of, or is located in.
pub fn locate(store: &Store, index: &GeoIndex, id: &EntityId, t: Millis) -> Option<GeoPoint> {
    locate_hops(store, index, id, t, LOCATION_HOPS)
}

fn locate_hops(store: &Store, index: &GeoIndex, id: &EntityId, t: Millis, hops: usize) -> Option<GeoPoint> {
    let state = store.state_at(id, t)?;
    let num = |k: &str| state.attr(k).and_then(|v| v.as_f64());
    if let (Some(lon), Some(lat)) = (num("lon"), num("lat")) {
        if let Ok(p) = GeoPoint::new(lon, lat, num("alt").unwrap_or(0.0)) {
            return Some(p);
        }
    }
    if let Some(e) = index.get(id) {
        return Some(e.geometry.centroid());
    }
    if hops == 0 {
        return None;
    }
    [Predicate::LivesIn, Predicate::PartOf, Predicate::LocatedIn]
        .into_iter()
        .flat_map(|p| store.neighbors(id, p, t, Direction::Out))
        .filter(|target| target.kind() != EntityKind::AdminRegion)
        .find_map(|target| locate_hops(store, index, &target, t, hops - 1))
}

/// Entities of `kind`, live at `t`, located inside the region.
pub fn select_entities(
    store: &Store,
    index: &GeoIndex,
    sel: &RegionSelector,
    kind: EntityKind,
    t: Millis,
) -> Result<BTreeSet<EntityId>, AnalyticsError> {
    sel.validate(index)?;
    if matches!(sel, RegionSelector::GridRange(ids) if ids.is_empty()) {
        return Ok(BTreeSet::new());
    }
    Ok(store
        .ids_of_kind(kind)
        .into_iter()
        .filter(|id| store.is_live_at(id, t))
        .filter(|id| locate(store, index, id, t).is_some_and(|p| sel.contains(index, &p)))
        .collect())
}
