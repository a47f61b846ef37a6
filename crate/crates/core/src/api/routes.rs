use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use serde_json::json;

use super::{ApiError, ApiRequest, ApiResponse};
use crate::analytics::{
    composition, dotted_map, fit_normal, heat_grid, histogram, locate, select_entities, AnalyticsError, CategoryMap,
    HistogramSpec, RegionSelector,
};
use crate::dataset::City;
use crate::features::GeometryJson;
use crate::geo::{AltitudeBand, BBox, GeoPoint};
use crate::scene::{trace_connected, TileKey, MAX_ZOOM};
use crate::sdm::{household_record, Direction, EntityId, EntityKind, Millis};
use crate::traffic::route_position;

type Query = BTreeMap<String, String>;

fn param<T: FromStr>(q: &Query, name: &str) -> Result<Option<T>, ApiError> {
    q.get(name)
        .map(|v| v.parse::<T>().map_err(|_| ApiError::bad_request(format!("bad value for {name}: '{v}'"))))
        .transpose()
}

fn required<T: FromStr>(q: &Query, name: &str) -> Result<T, ApiError> {
    param(q, name)?.ok_or_else(|| ApiError::bad_request(format!("missing parameter {name}")))
}

/// `at`, defaulting to the latest event time.
fn at(city: &City, q: &Query) -> Result<Millis, ApiError> {
    Ok(param(q, "at")?.unwrap_or_else(|| city.store.last_timestamp().unwrap_or(0)))
}

/// `at` for traffic reads, defaulting to the latest event or sample time.
fn traffic_at(city: &City, q: &Query) -> Result<Millis, ApiError> {
    let latest = city.store.last_timestamp().max(city.traffic.latest_sample_time()).unwrap_or(0);
    Ok(param(q, "at")?.unwrap_or(latest))
}

fn entity_id(s: &str) -> Result<EntityId, ApiError> {
    s.parse().map_err(|e: crate::sdm::SdmError| ApiError::bad_request(e.to_string()))
}

/// A full id or a bare local id of `kind`.
fn id_of_kind(s: &str, kind: EntityKind) -> Result<EntityId, ApiError> {
    if s.contains(':') {
        entity_id(s)
    } else {
        EntityId::new(kind, s).map_err(|e| ApiError::bad_request(e.to_string()))
    }
}

fn kind(q: &Query) -> Result<EntityKind, ApiError> {
    match q.get("kind") {
        None => Ok(EntityKind::Person),
        Some(k) => EntityKind::parse(k).ok_or_else(|| ApiError::bad_request(format!("unknown kind '{k}'"))),
    }
}

fn bbox(q: &Query) -> Result<BBox, ApiError> {
    let raw = q.get("bbox").ok_or_else(|| ApiError::bad_request("missing parameter bbox"))?;
    BBox::parse(raw).map_err(|e| ApiError::unprocessable(e.to_string()))
}

/// `bins=0:child,18:adult` overrides the attribute's default category map.
fn category_map(q: &Query, attr: &str) -> Result<CategoryMap, ApiError> {
    let Some(raw) = q.get("bins") else {
        return Ok(CategoryMap::default_for(attr));
    };
    let mut bins = Vec::new();
    for part in raw.split(',') {
        let (min, label) = part.split_once(':').ok_or_else(|| ApiError::unprocessable(format!("bad bin '{part}'")))?;
        let min: f64 = min.parse().map_err(|_| ApiError::unprocessable(format!("bad bin '{part}'")))?;
        if bins.last().is_some_and(|(prev, _)| *prev >= min) {
            return Err(ApiError::unprocessable("bins must ascend"));
        }
        bins.push((min, label));
    }
    Ok(CategoryMap::bins(&bins))
}

/// Entities of the requested kind live at `t`, narrowed to `region` if given.
fn selection(city: &City, q: &Query, t: Millis) -> Result<BTreeSet<EntityId>, ApiError> {
    let kind = kind(q)?;
    match q.get("region") {
        Some(r) => {
            let sel = RegionSelector::parse(r)?;
            Ok(select_entities(&city.store, city.catalog.index(), &sel, kind, t)?)
        }
        None => Ok(city.store.ids_of_kind(kind).into_iter().filter(|id| city.store.is_live_at(id, t)).collect()),
    }
}

const GET_ROUTES: &[&[&str]] = &[
    &["healthz"],
    &["layers"],
    &["tiles", "*", "*", "*"],
    &["entities", "*"],
    &["entities", "*", "holographic"],
    &["stats", "composition"],
    &["stats", "histogram"],
    &["heatmap"],
    &["dots"],
    &["traffic", "current"],
    &["traffic", "areal"],
    &["traffic", "history"],
    &["subway", "*", "position"],
    &["power", "*", "connected"],
    &["pick"],
];

pub(super) fn is_get_route(segs: &[&str]) -> bool {
    GET_ROUTES
        .iter()
        .any(|r| r.len() == segs.len() && r.iter().zip(segs).all(|(p, s)| *p == "*" || p == s))
}

pub(super) fn get(city: &City, req: &ApiRequest) -> Result<ApiResponse, ApiError> {
    let q = &req.query;
    let segs: Vec<&str> = req.segments.iter().map(String::as_str).collect();
    match segs.as_slice() {
        ["healthz"] => Ok(ApiResponse::ok(&json!({
            "status": "ok",
            "last_event_id": city.store.last_event_id(),
            "entities": city.store.entity_count(),
            "scene_objects": city.catalog.len(),
        }))),
        ["layers"] => Ok(ApiResponse::ok(&city.catalog.tree().view())),
        ["tiles", z, x, y] => tile(city, q, z, x, y),
        ["entities", id] => entity(city, q, id),
        ["entities", id, "holographic"] => {
            let id = entity_id(id)?;
            let t = at(city, q)?;
            Ok(ApiResponse::ok(&household_record(&city.store, &id, t)?))
        }
        ["stats", "composition"] => {
            let t = at(city, q)?;
            let attr: String = required(q, "attr")?;
            let ids = selection(city, q, t)?;
            let map = category_map(q, &attr)?;
            Ok(ApiResponse::ok(&composition(&city.store, &ids, &attr, &map, t)))
        }
        ["stats", "histogram"] => stats_histogram(city, q),
        ["heatmap"] => {
            let t = at(city, q)?;
            let b = bbox(q)?;
            let cell: f64 = required(q, "cell")?;
            let sigma: f64 = param(q, "sigma")?.unwrap_or(0.0);
            let points: Vec<GeoPoint> = selection(city, q, t)?
                .iter()
                .filter_map(|id| locate(&city.store, city.catalog.index(), id, t))
                .filter(|p| b.contains(p))
                .collect();
            Ok(ApiResponse::ok(&heat_grid(&points, &b, cell, sigma)?))
        }
        ["dots"] => {
            let t = at(city, q)?;
            let attr: String = required(q, "attr")?;
            let ids = selection(city, q, t)?;
            let map = category_map(q, &attr)?;
            Ok(ApiResponse::ok(&dotted_map(&city.store, city.catalog.index(), &ids, &attr, &map, t)))
        }
        ["traffic", "current"] => Ok(ApiResponse::ok(&city.traffic.conditions_at(traffic_at(city, q)?))),
        ["traffic", "areal"] => {
            let t = traffic_at(city, q)?;
            let grid = city.traffic.areal_conditions(t, &bbox(q)?, required(q, "cell")?)?;
            Ok(ApiResponse::ok(&grid))
        }
        ["traffic", "history"] => {
            let frames = city.traffic.replay_frames(required(q, "from")?, required(q, "to")?, required(q, "step")?)?;
            Ok(ApiResponse::ok(&json!({"frames": frames})))
        }
        ["subway", line, "position"] => {
            let line = id_of_kind(line, EntityKind::SubwayLine)?;
            let sched = city.schedules.get(&line).ok_or_else(|| ApiError::not_found(format!("no schedule for {line}")))?;
            Ok(ApiResponse::ok(&route_position(sched, at(city, q)?)))
        }
        ["power", node, "connected"] => {
            let node = id_of_kind(node, EntityKind::PowerNode)?;
            let t = at(city, q)?;
            let connected = trace_connected(&city.store, &node, t)?;
            Ok(ApiResponse::ok(&json!({"node": node, "as_of": t, "connected": connected})))
        }
        ["pick"] => {
            let p = GeoPoint::surface(required(q, "lon")?, required(q, "lat")?)
                .map_err(|e| ApiError::bad_request(e.to_string()))?;
            let z: u8 = param(q, "z")?.unwrap_or(MAX_ZOOM);
            let mode = match q.get("mode") {
                None => AltitudeBand::Above,
                Some(m) => AltitudeBand::parse(m).ok_or_else(|| ApiError::bad_request(format!("bad mode '{m}'")))?,
            };
            let hit = city.catalog.pick_object(&p, z, mode, city.catalog.tree());
            Ok(ApiResponse::ok(&json!({"hit": hit})))
        }
        ["events"] | ["traffic", "samples"] => {
            Err(ApiError { status: 405, code: "method_not_allowed", message: "use POST".into() })
        }
        _ => Err(ApiError::not_found(format!("no route for /{}", segs.join("/")))),
    }
}

fn tile(city: &City, q: &Query, z: &str, x: &str, y: &str) -> Result<ApiResponse, ApiError> {
    let num = |s: &str| s.parse::<u32>().map_err(|_| ApiError::bad_request(format!("bad tile coordinate '{s}'")));
    let z = u8::try_from(num(z)?).map_err(|_| ApiError::not_found("zoom out of range"))?;
    let key = TileKey::new(z, num(x)?, num(y)?)?;
    let t = at(city, q)?;
    let mut tree = city.catalog.tree().clone();
    if let Some(hidden) = q.get("hidden") {
        for layer in hidden.split(',').filter(|l| !l.is_empty()) {
            tree.set_visible(layer, false)?;
        }
    }
    let mut manifest = city.catalog.objects_for_tile(key, &tree, t);
    manifest
        .objects
        .retain(|o| !city.store.contains(&o.entity_id) || city.store.is_live_at(&o.entity_id, t));
    Ok(ApiResponse::ok(&manifest))
}

fn entity(city: &City, q: &Query, id: &str) -> Result<ApiResponse, ApiError> {
    let id = entity_id(id)?;
    let t = at(city, q)?;
    let state = city
        .store
        .state_at(&id, t)
        .ok_or_else(|| ApiError::not_found(format!("{id} does not exist at {t}")))?
        .as_known_at(t);
    let rels = |dir| {
        let mut v = city.store.relations_of(&id, None, t, dir);
        for r in &mut v {
            if r.valid_to.is_some_and(|to| to > t) {
                r.valid_to = None;
            }
        }
        v
    };
    let obj = city.catalog.get(&id);
    let geometry = obj
        .map(|o| &o.geometry)
        .or_else(|| city.catalog.index().get(&id).map(|e| &e.geometry))
        .map(GeometryJson::encode);
    Ok(ApiResponse::ok(&json!({
        "entity_id": id,
        "as_of": t,
        "state": state,
        "relations": {"out": rels(Direction::Out), "in": rels(Direction::In)},
        "layer_id": obj.map(|o| o.layer_id.as_str()),
        "geometry": geometry,
    })))
}

fn stats_histogram(city: &City, q: &Query) -> Result<ApiResponse, ApiError> {
    let t = at(city, q)?;
    let attr: String = required(q, "attr")?;
    let spec = HistogramSpec::new(required(q, "min")?, required(q, "max")?, required(q, "bins")?)?;
    let ids = selection(city, q, t)?;
    let mut values = Vec::with_capacity(ids.len());
    let mut skipped = 0usize;
    for id in &ids {
        match city.store.state_at(id, t).and_then(|s| s.attr(&attr)).and_then(|v| v.as_f64()) {
            Some(v) => values.push(v),
            None => skipped += 1,
        }
    }
    let counts = histogram(&values, &spec)?;
    let fit = match fit_normal(&values) {
        Ok(f) => Some(f),
        Err(AnalyticsError::TooFewValues(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let edges: Vec<f64> = (0..=spec.bin_count).map(|i| spec.edge(i)).collect();
    Ok(ApiResponse::ok(&json!({
        "attribute": attr,
        "n": values.len(),
        "skipped": skipped,
        "edges": edges,
        "counts": counts,
        "fit": fit,
    })))
}
