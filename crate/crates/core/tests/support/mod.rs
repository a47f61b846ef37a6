//! Random inputs and brute-force oracles shared by the integration and
//! acceptance suites. Nothing here calls the geometry or replay code under
//! test.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::rngs::StdRng;
use rand::Rng;
use urbis_core::geo::{BBox, Footprint, GeoPoint, Geometry};
use urbis_core::sdm::{Attributes, EntityId, EntityKind, EventRecord, EventType, Payload, Predicate, Scalar, SemanticRelation};
use urbis_core::Millis;

// ---- geometry ----

pub fn pt(lon: f64, lat: f64) -> GeoPoint {
    GeoPoint { lon, lat, alt: 0.0 }
}

/// Star-shaped around its centre, so the ring never self-intersects.
pub fn random_polygon(rng: &mut StdRng, area: &BBox, max_r: f64) -> Footprint {
    let (cx, cy) = random_xy(rng, area);
    // gaps between consecutive angles stay below pi
    let k = rng.gen_range(4..9);
    let base = rng.gen_range(0.0..std::f64::consts::TAU);
    let step = std::f64::consts::TAU / k as f64;
    let angles: Vec<f64> = (0..k).map(|i| base + (i as f64 + rng.gen_range(0.0..0.9)) * step).collect();
    let ring = angles
        .iter()
        .map(|a| {
            let r = max_r * rng.gen_range(0.3..1.0);
            pt(cx + r * a.cos(), cy + r * a.sin())
        })
        .collect();
    Footprint::new(ring).expect("star-shaped ring is simple")
}

pub fn random_xy(rng: &mut StdRng, area: &BBox) -> (f64, f64) {
    (rng.gen_range(area.min_lon..area.max_lon), rng.gen_range(area.min_lat..area.max_lat))
}

/// Polygons, polylines and points of extent up to about `size` inside `area`.
pub fn random_geometry(rng: &mut StdRng, area: &BBox, size: f64) -> Geometry {
    match rng.gen_range(0..10) {
        0..=5 => Geometry::Polygon(random_polygon(rng, area, size)),
        6..=7 => {
            let (x, y) = random_xy(rng, area);
            let mut p = pt(x, y);
            let pts = (0..rng.gen_range(2..6))
                .map(|_| {
                    p = pt(p.lon + rng.gen_range(-size..size), p.lat + rng.gen_range(-size..size));
                    p
                })
                .collect();
            Geometry::polyline(pts).expect("random walk has distinct vertices")
        }
        _ => {
            let (x, y) = random_xy(rng, area);
            Geometry::Point(pt(x, y))
        }
    }
}

/// A box with its corner anywhere in `area` and sides up to `max_side`.
pub fn random_box(rng: &mut StdRng, area: &BBox, max_side: f64) -> BBox {
    let (x, y) = random_xy(rng, area);
    let (w, h) = (rng.gen_range(0.0..max_side), rng.gen_range(0.0..max_side));
    BBox { min_lon: x, min_lat: y, max_lon: x + w, max_lat: y + h }
}

fn coords(g: &Geometry) -> Vec<(f64, f64)> {
    g.vertices().iter().map(|p| (p.lon, p.lat)).collect()
}

/// Even-odd ray casting towards +x.
pub fn ray_cast(ring: &[(f64, f64)], x: f64, y: f64) -> bool {
    let mut inside = false;
    let mut j = ring.len() - 1;
    for i in 0..ring.len() {
        let ((xi, yi), (xj, yj)) = (ring[i], ring[j]);
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Liang-Barsky: does the closed segment a-b meet the closed box?
pub fn liang_barsky(a: (f64, f64), b: (f64, f64), bx: &BBox) -> bool {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for (p, q) in [
        (-dx, a.0 - bx.min_lon),
        (dx, bx.max_lon - a.0),
        (-dy, a.1 - bx.min_lat),
        (dy, bx.max_lat - a.1),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return false;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
            if t0 > t1 {
                return false;
            }
        }
    }
    true
}

pub fn oracle_intersects(g: &Geometry, b: &BBox) -> bool {
    let c = coords(g);
    match g {
        Geometry::Point(_) => liang_barsky(c[0], c[0], b),
        Geometry::Polyline(_) => c.windows(2).any(|w| liang_barsky(w[0], w[1], b)),
        Geometry::Polygon(_) => {
            let n = c.len();
            (0..n).any(|i| liang_barsky(c[i], c[(i + 1) % n], b))
                || ray_cast(&c, b.min_lon, b.min_lat)
        }
    }
}

/// Containment with boundary counted inside. Exact boundary hits other than
/// vertices are measure-zero for random inputs, so only vertices are checked.
pub fn oracle_contains(g: &Geometry, x: f64, y: f64) -> bool {
    let c = coords(g);
    if c.contains(&(x, y)) {
        return true;
    }
    matches!(g, Geometry::Polygon(_)) && ray_cast(&c, x, y)
}

pub fn dist_to_polyline_deg(p: (f64, f64), line: &[(f64, f64)]) -> f64 {
    line.windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let (vx, vy) = (b.0 - a.0, b.1 - a.1);
            let t = (((p.0 - a.0) * vx + (p.1 - a.1) * vy) / (vx * vx + vy * vy)).clamp(0.0, 1.0);
            ((a.0 + t * vx - p.0).powi(2) + (a.1 + t * vy - p.1).powi(2)).sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

pub fn cases(n: u32) -> proptest::test_runner::Config {
    proptest::test_runner::Config { cases: n, failure_persistence: None, ..Default::default() }
}

// ---- statistics ----

pub fn two_pass(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

// ---- event streams ----

pub fn person(i: usize) -> EntityId {
    EntityId::new(EntityKind::Person, format!("p{i}")).unwrap()
}

fn random_attrs(rng: &mut StdRng) -> Attributes {
    let keys = ["age", "education", "employment", "score"];
    (0..rng.gen_range(1..3))
        .map(|_| {
            let k = keys[rng.gen_range(0..keys.len())];
            let v = match rng.gen_range(0..3) {
                0 => Scalar::Num(rng.gen_range(0..100) as f64),
                1 => Scalar::Str(format!("v{}", rng.gen_range(0..5))),
                _ => Scalar::Bool(rng.gen()),
            };
            (k.to_string(), v)
        })
        .collect()
}

/// A valid random stream over `entities` ids. Timestamps repeat now and
/// then, and every event type appears.
pub fn random_events(rng: &mut StdRng, n: usize, entities: usize) -> Vec<EventRecord> {
    let mut out = Vec::with_capacity(n);
    // id -> valid_from of current state; absent = never created
    let mut live: BTreeMap<usize, Millis> = BTreeMap::new();
    let mut dead: BTreeSet<usize> = BTreeSet::new();
    let mut edges: BTreeSet<(usize, Predicate, usize)> = BTreeSet::new();
    let preds = [Predicate::LivesIn, Predicate::Owns, Predicate::ConnectedTo];
    let mut t: Millis = 1_000;
    while out.len() < n {
        if rng.gen_bool(0.7) {
            t += rng.gen_range(1..50);
        }
        let eid = out.len() as u64 + 1;
        let e = rng.gen_range(0..entities);
        let roll = rng.gen_range(0..100);
        let ev = if !live.contains_key(&e) && !dead.contains(&e) {
            live.insert(e, t);
            EventRecord::create(eid, t, person(e), random_attrs(rng), "rand")
        } else if dead.contains(&e) {
            continue;
        } else if roll < 45 {
            if live[&e] >= t {
                continue;
            }
            live.insert(e, t);
            EventRecord::update(eid, t, person(e), random_attrs(rng), "rand")
        } else if roll < 75 {
            let o = rng.gen_range(0..entities);
            let p = preds[rng.gen_range(0..preds.len())];
            if o == e || !live.contains_key(&o) || edges.contains(&(e, p, o)) {
                continue;
            }
            edges.insert((e, p, o));
            EventRecord::relate(eid, t, SemanticRelation::new(person(e), p, person(o), t), "rand")
        } else if roll < 93 {
            let Some(&(s, p, o)) = edges.iter().find(|(s, _, _)| *s == e) else { continue };
            edges.remove(&(s, p, o));
            EventRecord::unrelate(eid, t, SemanticRelation::new(person(s), p, person(o), t), "rand")
        } else {
            // keep one entity alive so the stream can always grow
            if live[&e] >= t || (live.len() == 1 && live.len() + dead.len() == entities) {
                continue;
            }
            live.remove(&e);
            dead.insert(e);
            edges.retain(|&(s, _, o)| s != e && o != e);
            EventRecord::delete(eid, t, person(e), "rand")
        };
        out.push(ev);
    }
    out
}

/// State of the world at `t` by folding raw events: attributes per live
/// entity and the set of live edges.
pub struct Folded {
    pub attrs: BTreeMap<EntityId, Attributes>,
    pub edges: BTreeSet<(EntityId, Predicate, EntityId)>,
}

pub fn fold_until(events: &[EventRecord], t: Millis) -> Folded {
    let mut attrs: BTreeMap<EntityId, Attributes> = BTreeMap::new();
    let mut edges = BTreeSet::new();
    for e in events.iter().take_while(|e| e.timestamp <= t) {
        match (&e.event_type, &e.payload) {
            (EventType::Create, Payload::Attributes(a)) => {
                attrs.insert(e.entity_id.clone(), a.clone());
            }
            (EventType::Update, Payload::Attributes(a)) => {
                let cur = attrs.get_mut(&e.entity_id).expect("update of live entity");
                for (k, v) in a {
                    cur.insert(k.clone(), v.clone());
                }
            }
            (EventType::Delete, _) => {
                attrs.remove(&e.entity_id);
                edges.retain(|(s, _, o): &(EntityId, Predicate, EntityId)| *s != e.entity_id && *o != e.entity_id);
            }
            (EventType::Relate, Payload::Relation(r)) => {
                edges.insert((r.subject.clone(), r.predicate, r.object.clone()));
            }
            (EventType::Unrelate, Payload::Relation(r)) => {
                edges.remove(&(r.subject.clone(), r.predicate, r.object.clone()));
            }
            _ => panic!("unexpected event shape"),
        }
    }
    Folded { attrs, edges }
}
