//! Road conditions (line and plane forms) and schedule-driven subway tracking.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{cell_count, cell_index};
use crate::geo::{haversine_m, BBox, GeoPoint, Geometry};
use crate::sdm::{EntityId, EntityKind, Millis};

/// At or above this speed a segment is smooth.
pub const SMOOTH_KMH: f64 = 40.0;
/// At or above this speed (and below smooth) a segment is slow.
pub const SLOW_KMH: f64 = 20.0;
/// Samples older than this no longer describe the road.
pub const STALE_AFTER_MS: Millis = 10 * 60 * 1000;

const MAX_FRAMES: i64 = 100_000;
const MAX_CELLS: usize = 1_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum TrafficError {
    #[error("unknown road segment {0}")]
    UnknownSegment(EntityId),
    #[error("speed must be finite and non-negative, got {0}")]
    NegativeSpeed(f64),
    #[error("{id} is not a {expected}")]
    WrongKind { id: EntityId, expected: EntityKind },
    #[error("invalid geometry for {id}: {reason}")]
    InvalidGeometry { id: EntityId, reason: String },
    #[error("invalid range: from {from} to {to} step {step}")]
    InvalidRange { from: Millis, to: Millis, step: Millis },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid schedule for {id}: {reason}")]
    InvalidSchedule { id: EntityId, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CongestionSample {
    pub segment_id: EntityId,
    pub t: Millis,
    pub speed_kmh: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CongestionLevel {
    Smooth,
    Slow,
    Congested,
    Unknown,
}

pub fn level_of(speed_kmh: f64) -> CongestionLevel {
    if speed_kmh.is_nan() || speed_kmh < 0.0 {
        CongestionLevel::Unknown
    } else if speed_kmh >= SMOOTH_KMH {
        CongestionLevel::Smooth
    } else if speed_kmh >= SLOW_KMH {
        CongestionLevel::Slow
    } else {
        CongestionLevel::Congested
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Frame {
    pub t: Millis,
    pub levels: BTreeMap<EntityId, CongestionLevel>,
}

#[derive(Debug, Clone)]
struct Segment {
    geometry: Geometry,
    samples: BTreeMap<Millis, f64>,
}

/// Registered road segments and their speed samples.
#[derive(Debug, Clone, Default)]
pub struct TrafficStore {
    segments: BTreeMap<EntityId, Segment>,
}

impl TrafficStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_segment(&mut self, id: EntityId, polyline: Vec<GeoPoint>) -> Result<(), TrafficError> {
        if id.kind() != EntityKind::RoadSegment {
            return Err(TrafficError::WrongKind { id, expected: EntityKind::RoadSegment });
        }
        let geometry = Geometry::polyline(polyline)
            .map_err(|e| TrafficError::InvalidGeometry { id: id.clone(), reason: e.to_string() })?;
        let samples = self.segments.remove(&id).map(|s| s.samples).unwrap_or_default();
        self.segments.insert(id, Segment { geometry, samples });
        Ok(())
    }

    pub fn segment_ids(&self) -> impl Iterator<Item = &EntityId> {
        self.segments.keys()
    }

    pub fn segment_geometry(&self, id: &EntityId) -> Option<&Geometry> {
        self.segments.get(id).map(|s| &s.geometry)
    }

    pub fn sample_count(&self) -> usize {
        self.segments.values().map(|s| s.samples.len()).sum()
    }

    /// Stores a sample; a second sample for the same `(segment, t)` replaces
    /// the first.
    pub fn ingest_sample(&mut self, s: &CongestionSample) -> Result<(), TrafficError> {
        Self::check_speed(s.speed_kmh)?;
        let seg = self
            .segments
            .get_mut(&s.segment_id)
            .ok_or_else(|| TrafficError::UnknownSegment(s.segment_id.clone()))?;
        seg.samples.insert(s.t, s.speed_kmh);
        Ok(())
    }

    /// Ingests all samples or none.
    pub fn ingest_batch(&mut self, batch: &[CongestionSample]) -> Result<usize, TrafficError> {
        for s in batch {
            Self::check_speed(s.speed_kmh)?;
            if !self.segments.contains_key(&s.segment_id) {
                return Err(TrafficError::UnknownSegment(s.segment_id.clone()));
            }
        }
        for s in batch {
            self.ingest_sample(s)?;
        }
        Ok(batch.len())
    }

    fn check_speed(v: f64) -> Result<(), TrafficError> {
        if v.is_finite() && v >= 0.0 {
            Ok(())
        } else {
            Err(TrafficError::NegativeSpeed(v))
        }
    }

    pub fn latest_sample_time(&self) -> Option<Millis> {
        self.segments.values().filter_map(|s| s.samples.keys().next_back()).max().copied()
    }

    pub fn sample(&self, id: &EntityId, t: Millis) -> Option<f64> {
        self.segments.get(id)?.samples.get(&t).copied()
    }

    /// Latest speed sampled at or before `t`, if no older than the staleness window.
    pub fn fresh_speed(&self, id: &EntityId, t: Millis) -> Option<f64> {
        let (&st, &v) = self.segments.get(id)?.samples.range(..=t).next_back()?;
        (t - st <= STALE_AFTER_MS).then_some(v)
    }

    /// Line form: one level per registered segment.
    pub fn conditions_at(&self, t: Millis) -> Frame {
        let levels = self
            .segments
            .keys()
            .map(|id| (id.clone(), self.fresh_speed(id, t).map_or(CongestionLevel::Unknown, level_of)))
            .collect();
        Frame { t, levels }
    }

    /// Frames at `t0, t0 + step, ...` up to and including `t1`.
    pub fn replay_frames(&self, t0: Millis, t1: Millis, step: Millis) -> Result<Vec<Frame>, TrafficError> {
        if t0 > t1 || step <= 0 {
            return Err(TrafficError::InvalidRange { from: t0, to: t1, step });
        }
        let count = (t1 - t0) / step + 1;
        if count > MAX_FRAMES {
            return Err(TrafficError::InvalidRange { from: t0, to: t1, step });
        }
        Ok((0..count).map(|i| self.conditions_at(t0 + i * step)).collect())
    }

    /// Plane form: per cell, the level of the mean fresh speed over the
    /// segments crossing it.
    pub fn areal_conditions(&self, t: Millis, bbox: &BBox, cell_size: f64) -> Result<ArealGrid, TrafficError> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(TrafficError::InvalidGrid(format!("cell size {cell_size}")));
        }
        let cols = cell_count(bbox.width(), cell_size);
        let rows = cell_count(bbox.height(), cell_size);
        if rows.saturating_mul(cols) > MAX_CELLS {
            return Err(TrafficError::InvalidGrid(format!("{rows}x{cols} cells is too many")));
        }
        let mut sum = vec![0.0; rows * cols];
        let mut n = vec![0u32; rows * cols];
        for (id, seg) in &self.segments {
            let Some(v) = self.fresh_speed(id, t) else { continue };
            let sb = seg.geometry.bbox();
            if !sb.intersects(bbox) {
                continue;
            }
            let c_range = |lo: f64, hi: f64, origin: f64, count: usize| {
                let a = (((lo - origin) / cell_size).floor().max(0.0) as usize).min(count - 1);
                let b = (((hi - origin) / cell_size).floor().max(0.0) as usize).min(count - 1);
                a..=b
            };
            for r in c_range(sb.min_lat, sb.max_lat, bbox.min_lat, rows) {
                for c in c_range(sb.min_lon, sb.max_lon, bbox.min_lon, cols) {
                    let cell = BBox {
                        min_lon: bbox.min_lon + c as f64 * cell_size,
                        min_lat: bbox.min_lat + r as f64 * cell_size,
                        max_lon: bbox.min_lon + (c + 1) as f64 * cell_size,
                        max_lat: bbox.min_lat + (r + 1) as f64 * cell_size,
                    };
                    if seg.geometry.intersects_box(&cell) {
                        sum[r * cols + c] += v;
                        n[r * cols + c] += 1;
                    }
                }
            }
        }
        let mean_speed: Vec<Option<f64>> = sum.iter().zip(&n).map(|(s, &k)| (k > 0).then(|| s / k as f64)).collect();
        let levels = mean_speed.iter().map(|m| m.map_or(CongestionLevel::Unknown, level_of)).collect();
        Ok(ArealGrid {
            t,
            origin: GeoPoint { lon: bbox.min_lon, lat: bbox.min_lat, alt: 0.0 },
            cell_size,
            rows,
            cols,
            mean_speed,
            levels,
        })
    }
}

/// Row-major per-cell congestion. Row 0 is the southern edge.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArealGrid {
    pub t: Millis,
    pub origin: GeoPoint,
    pub cell_size: f64,
    pub rows: usize,
    pub cols: usize,
    pub mean_speed: Vec<Option<f64>>,
    pub levels: Vec<CongestionLevel>,
}

impl ArealGrid {
    pub fn level(&self, row: usize, col: usize) -> CongestionLevel {
        self.levels[row * self.cols + col]
    }

    /// The cell a point falls in, using the heat-grid edge convention.
    pub fn cell_of(&self, p: &GeoPoint) -> (usize, usize) {
        (
            cell_index(p.lat - self.origin.lat, self.cell_size, self.rows),
            cell_index(p.lon - self.origin.lon, self.cell_size, self.cols),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RouteStatus {
    NotDeparted,
    EnRoute,
    Arrived,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoutePosition {
    pub line_id: EntityId,
    pub t: Millis,
    pub point: GeoPoint,
    pub arc_m: f64,
    pub status: RouteStatus,
}

/// A line's path with a constant speed on each leg between vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteSchedule {
    line_id: EntityId,
    points: Vec<GeoPoint>,
    cum_m: Vec<f64>,
    t0: Millis,
    speeds_kmh: Vec<f64>,
    /// Departure-relative time at which each vertex is reached.
    cum_ms: Vec<f64>,
}

impl RouteSchedule {
    pub fn new(line_id: EntityId, points: Vec<GeoPoint>, t0: Millis, speeds_kmh: Vec<f64>) -> Result<Self, TrafficError> {
        let bad = |reason: String| TrafficError::InvalidSchedule { id: line_id.clone(), reason };
        if line_id.kind() != EntityKind::SubwayLine {
            return Err(TrafficError::WrongKind { id: line_id, expected: EntityKind::SubwayLine });
        }
        if points.len() < 2 {
            return Err(bad("need at least 2 vertices".into()));
        }
        if speeds_kmh.len() != points.len() - 1 {
            return Err(bad(format!("{} legs but {} speeds", points.len() - 1, speeds_kmh.len())));
        }
        if let Some(v) = speeds_kmh.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(bad(format!("speed {v} must be positive")));
        }
        let mut cum_m = vec![0.0];
        let mut cum_ms = vec![0.0];
        for (i, w) in points.windows(2).enumerate() {
            let len = haversine_m(&w[0], &w[1]);
            if len.is_nan() || len <= 0.0 {
                return Err(bad(format!("leg {i} has zero length")));
            }
            cum_m.push(cum_m[i] + len);
            cum_ms.push(cum_ms[i] + len / kmh_to_m_per_ms(speeds_kmh[i]));
        }
        Ok(RouteSchedule { line_id, points, cum_m, t0, speeds_kmh, cum_ms })
    }

    /// Same line with a uniform speed.
    pub fn uniform(line_id: EntityId, points: Vec<GeoPoint>, t0: Millis, speed_kmh: f64) -> Result<Self, TrafficError> {
        let legs = points.len().saturating_sub(1);
        Self::new(line_id, points, t0, vec![speed_kmh; legs])
    }

    /// The same route run backwards from the same departure time.
    pub fn reversed(&self) -> Self {
        let mut points = self.points.clone();
        points.reverse();
        let mut speeds = self.speeds_kmh.clone();
        speeds.reverse();
        Self::new(self.line_id.clone(), points, self.t0, speeds).expect("reversal keeps a valid schedule")
    }

    pub fn line_id(&self) -> &EntityId {
        &self.line_id
    }

    pub fn points(&self) -> &[GeoPoint] {
        &self.points
    }

    pub fn cumulative_m(&self) -> &[f64] {
        &self.cum_m
    }

    pub fn departure(&self) -> Millis {
        self.t0
    }

    pub fn length_m(&self) -> f64 {
        *self.cum_m.last().unwrap()
    }

    /// Trip duration in milliseconds.
    pub fn duration_ms(&self) -> f64 {
        *self.cum_ms.last().unwrap()
    }

    /// Distance travelled `elapsed_ms` after departure.
    pub fn arc_at(&self, elapsed_ms: f64) -> f64 {
        if elapsed_ms <= 0.0 {
            return 0.0;
        }
        if elapsed_ms >= self.duration_ms() {
            return self.length_m();
        }
        let leg = self.cum_ms.partition_point(|&c| c <= elapsed_ms) - 1;
        let arc = self.cum_m[leg] + (elapsed_ms - self.cum_ms[leg]) * kmh_to_m_per_ms(self.speeds_kmh[leg]);
        arc.min(self.cum_m[leg + 1])
    }

    /// Vertex-interpolated point at arc length `arc_m`.
    pub fn point_at(&self, arc_m: f64) -> GeoPoint {
        if arc_m <= 0.0 {
            return self.points[0];
        }
        if arc_m >= self.length_m() {
            return *self.points.last().unwrap();
        }
        let leg = self.cum_m.partition_point(|&c| c <= arc_m) - 1;
        let f = (arc_m - self.cum_m[leg]) / (self.cum_m[leg + 1] - self.cum_m[leg]);
        let (a, b) = (self.points[leg], self.points[leg + 1]);
        GeoPoint {
            lon: a.lon + f * (b.lon - a.lon),
            lat: a.lat + f * (b.lat - a.lat),
            alt: a.alt + f * (b.alt - a.alt),
        }
    }
}

fn kmh_to_m_per_ms(v: f64) -> f64 {
    v / 3600.0
}

pub fn route_position(sched: &RouteSchedule, t: Millis) -> RoutePosition {
    let elapsed = (t - sched.t0) as f64;
    let status = if t < sched.t0 {
        RouteStatus::NotDeparted
    } else if elapsed >= sched.duration_ms() {
        RouteStatus::Arrived
    } else {
        RouteStatus::EnRoute
    };
    let arc_m = sched.arc_at(elapsed);
    RoutePosition { line_id: sched.line_id.clone(), t, point: sched.point_at(arc_m), arc_m, status }
}
