//! Planar and spherical geometry on lon/lat degrees.
//!
//! All containment and intersection tests are planar in degree space and
//! treat boundaries as inside. Distances use a spherical earth.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean earth radius used for every distance in the crate.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Meters per degree of arc on the sphere.
pub const METERS_PER_DEGREE: f64 = 2.0 * std::f64::consts::PI * EARTH_RADIUS_M / 360.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeoError {
    #[error("coordinate out of range: lon {lon}, lat {lat}")]
    InvalidCoordinate { lon: f64, lat: f64 },
    #[error("invalid bounding box: {0}")]
    InvalidBBox(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
    /// Meters; negative values are underground.
    #[serde(default)]
    pub alt: f64,
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64, alt: f64) -> Result<Self, GeoError> {
        if !(-180.0..=180.0).contains(&lon) || !(-90.0..=90.0).contains(&lat) || !alt.is_finite() {
            return Err(GeoError::InvalidCoordinate { lon, lat });
        }
        Ok(GeoPoint { lon, lat, alt })
    }

    /// Ground-level point.
    pub fn surface(lon: f64, lat: f64) -> Result<Self, GeoError> {
        Self::new(lon, lat, 0.0)
    }

    pub fn band(&self) -> AltitudeBand {
        AltitudeBand::of_alt(self.alt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AltitudeBand {
    Above,
    Below,
}

impl AltitudeBand {
    pub fn of_alt(alt: f64) -> Self {
        if alt < 0.0 {
            AltitudeBand::Below
        } else {
            AltitudeBand::Above
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "above" => Some(AltitudeBand::Above),
            "below" => Some(AltitudeBand::Below),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
}

impl BBox {
    /// Rejects inverted boxes; a box with `min_lon > max_lon` would be an
    /// antimeridian wrap, which is not supported.
    pub fn new(min_lon: f64, min_lat: f64, max_lon: f64, max_lat: f64) -> Result<Self, GeoError> {
        let vals = [min_lon, min_lat, max_lon, max_lat];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(GeoError::InvalidBBox("non-finite bound".into()));
        }
        if min_lon > max_lon || min_lat > max_lat {
            return Err(GeoError::InvalidBBox(format!(
                "min exceeds max in {min_lon},{min_lat},{max_lon},{max_lat}"
            )));
        }
        if min_lon < -180.0 || max_lon > 180.0 || min_lat < -90.0 || max_lat > 90.0 {
            return Err(GeoError::InvalidBBox("bounds outside lon/lat range".into()));
        }
        Ok(BBox { min_lon, min_lat, max_lon, max_lat })
    }

    /// Parses `minlon,minlat,maxlon,maxlat`.
    pub fn parse(s: &str) -> Result<Self, GeoError> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| GeoError::InvalidBBox(format!("cannot parse '{s}'")))?;
        match parts.as_slice() {
            [a, b, c, d] => BBox::new(*a, *b, *c, *d),
            _ => Err(GeoError::InvalidBBox(format!("expected 4 numbers in '{s}'"))),
        }
    }

    pub(crate) fn of_points<'a>(pts: impl IntoIterator<Item = &'a GeoPoint>) -> Option<Self> {
        let mut it = pts.into_iter();
        let first = it.next()?;
        let mut b = BBox {
            min_lon: first.lon,
            min_lat: first.lat,
            max_lon: first.lon,
            max_lat: first.lat,
        };
        for p in it {
            b.min_lon = b.min_lon.min(p.lon);
            b.min_lat = b.min_lat.min(p.lat);
            b.max_lon = b.max_lon.max(p.lon);
            b.max_lat = b.max_lat.max(p.lat);
        }
        Some(b)
    }

    pub fn contains_lonlat(&self, lon: f64, lat: f64) -> bool {
        lon >= self.min_lon && lon <= self.max_lon && lat >= self.min_lat && lat <= self.max_lat
    }

    pub fn contains(&self, p: &GeoPoint) -> bool {
        self.contains_lonlat(p.lon, p.lat)
    }

    pub fn intersects(&self, other: &BBox) -> bool {
        self.min_lon <= other.max_lon
            && other.min_lon <= self.max_lon
            && self.min_lat <= other.max_lat
            && other.min_lat <= self.max_lat
    }

    pub fn contains_box(&self, other: &BBox) -> bool {
        other.min_lon >= self.min_lon
            && other.max_lon <= self.max_lon
            && other.min_lat >= self.min_lat
            && other.max_lat <= self.max_lat
    }

    pub fn width(&self) -> f64 {
        self.max_lon - self.min_lon
    }

    pub fn height(&self) -> f64 {
        self.max_lat - self.min_lat
    }

    fn corners(&self) -> [(f64, f64); 4] {
        [
            (self.min_lon, self.min_lat),
            (self.max_lon, self.min_lat),
            (self.max_lon, self.max_lat),
            (self.min_lon, self.max_lat),
        ]
    }
}

/// A simple polygon ring, implicitly closed.
#[derive(Debug, Clone, PartialEq)]
pub struct Footprint {
    ring: Vec<GeoPoint>,
}

impl Footprint {
    /// Validates the ring. A repeated closing vertex is accepted and dropped.
    pub fn new(mut ring: Vec<GeoPoint>) -> Result<Self, GeoError> {
        if ring.len() >= 2 {
            let (a, b) = (ring[0], ring[ring.len() - 1]);
            if a.lon == b.lon && a.lat == b.lat {
                ring.pop();
            }
        }
        if ring.len() < 3 {
            return Err(GeoError::InvalidGeometry("ring needs at least 3 vertices".into()));
        }
        for p in &ring {
            GeoPoint::new(p.lon, p.lat, p.alt)?;
        }
        let n = ring.len();
        for i in 0..n {
            let (a, b) = (ring[i], ring[(i + 1) % n]);
            if a.lon == b.lon && a.lat == b.lat {
                return Err(GeoError::InvalidGeometry(format!("repeated vertex at {i}")));
            }
        }
        if signed_area_deg2(&ring) == 0.0 {
            return Err(GeoError::InvalidGeometry("zero-area ring".into()));
        }
        if ring_self_intersects(&ring) {
            return Err(GeoError::InvalidGeometry("self-intersecting ring".into()));
        }
        Ok(Footprint { ring })
    }

    /// Axis-aligned rectangle footprint at a uniform altitude.
    pub fn rect(min_lon: f64, min_lat: f64, max_lon: f64, max_lat: f64, alt: f64) -> Result<Self, GeoError> {
        Footprint::new(vec![
            GeoPoint::new(min_lon, min_lat, alt)?,
            GeoPoint::new(max_lon, min_lat, alt)?,
            GeoPoint::new(max_lon, max_lat, alt)?,
            GeoPoint::new(min_lon, max_lat, alt)?,
        ])
    }

    pub fn ring(&self) -> &[GeoPoint] {
        &self.ring
    }

    pub fn bbox(&self) -> BBox {
        BBox::of_points(&self.ring).expect("ring is non-empty")
    }

    /// Boundary counts as inside.
    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        ring_contains(&self.ring, lon, lat)
    }

    pub fn area_deg2(&self) -> f64 {
        signed_area_deg2(&self.ring).abs()
    }

    /// Approximate ground area, scaling degree area by the local meridian
    /// convergence at the centroid latitude.
    pub fn area_m2(&self) -> f64 {
        let c = self.centroid();
        self.area_deg2() * METERS_PER_DEGREE * METERS_PER_DEGREE * c.lat.to_radians().cos()
    }

    /// Area-weighted centroid.
    pub fn centroid(&self) -> GeoPoint {
        let n = self.ring.len();
        // shift to the first vertex to keep the cross products well conditioned
        let (ox, oy) = (self.ring[0].lon, self.ring[0].lat);
        let (mut a2, mut cx, mut cy) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let p = self.ring[i];
            let q = self.ring[(i + 1) % n];
            let (x0, y0, x1, y1) = (p.lon - ox, p.lat - oy, q.lon - ox, q.lat - oy);
            let cross = x0 * y1 - x1 * y0;
            a2 += cross;
            cx += (x0 + x1) * cross;
            cy += (y0 + y1) * cross;
        }
        GeoPoint {
            lon: ox + cx / (3.0 * a2),
            lat: oy + cy / (3.0 * a2),
            alt: self.ring[0].alt,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Polygon(Footprint),
    Polyline(Vec<GeoPoint>),
    Point(GeoPoint),
}

impl Geometry {
    pub fn polyline(points: Vec<GeoPoint>) -> Result<Self, GeoError> {
        if points.len() < 2 {
            return Err(GeoError::InvalidGeometry("polyline needs at least 2 vertices".into()));
        }
        for p in &points {
            GeoPoint::new(p.lon, p.lat, p.alt)?;
        }
        Ok(Geometry::Polyline(points))
    }

    pub fn point(p: GeoPoint) -> Result<Self, GeoError> {
        GeoPoint::new(p.lon, p.lat, p.alt).map(Geometry::Point)
    }

    pub fn bbox(&self) -> BBox {
        match self {
            Geometry::Polygon(f) => f.bbox(),
            Geometry::Polyline(pts) => BBox::of_points(pts).expect("validated non-empty"),
            Geometry::Point(p) => BBox::of_points([p]).expect("single point"),
        }
    }

    pub fn vertices(&self) -> &[GeoPoint] {
        match self {
            Geometry::Polygon(f) => f.ring(),
            Geometry::Polyline(pts) => pts,
            Geometry::Point(p) => std::slice::from_ref(p),
        }
    }

    /// Below ground when any vertex is underground.
    pub fn band(&self) -> AltitudeBand {
        if self.vertices().iter().any(|p| p.alt < 0.0) {
            AltitudeBand::Below
        } else {
            AltitudeBand::Above
        }
    }

    pub fn centroid(&self) -> GeoPoint {
        match self {
            Geometry::Polygon(f) => f.centroid(),
            Geometry::Point(p) => *p,
            Geometry::Polyline(pts) => {
                let (mut total, mut cx, mut cy) = (0.0, 0.0, 0.0);
                for w in pts.windows(2) {
                    let len = (w[1].lon - w[0].lon).hypot(w[1].lat - w[0].lat);
                    total += len;
                    cx += len * (w[0].lon + w[1].lon) / 2.0;
                    cy += len * (w[0].lat + w[1].lat) / 2.0;
                }
                if total == 0.0 {
                    pts[0]
                } else {
                    GeoPoint { lon: cx / total, lat: cy / total, alt: pts[0].alt }
                }
            }
        }
    }

    /// Footprint area in square meters; zero for lines and points.
    pub fn area_m2(&self) -> f64 {
        match self {
            Geometry::Polygon(f) => f.area_m2(),
            _ => 0.0,
        }
    }

    /// Closed-set intersection with a box.
    pub fn intersects_box(&self, b: &BBox) -> bool {
        match self {
            Geometry::Point(p) => b.contains(p),
            Geometry::Polyline(pts) => pts.windows(2).any(|w| segment_intersects_box(&w[0], &w[1], b)),
            Geometry::Polygon(f) => {
                let ring = f.ring();
                if ring.iter().any(|p| b.contains(p)) {
                    return true;
                }
                if b.corners().iter().any(|&(x, y)| ring_contains(ring, x, y)) {
                    return true;
                }
                let n = ring.len();
                (0..n).any(|i| segment_intersects_box(&ring[i], &ring[(i + 1) % n], b))
            }
        }
    }

    /// Point containment: inside-or-on for polygons, exact incidence for
    /// lines and points.
    pub fn contains_point(&self, lon: f64, lat: f64) -> bool {
        match self {
            Geometry::Polygon(f) => f.contains(lon, lat),
            Geometry::Polyline(pts) => pts
                .windows(2)
                .any(|w| on_segment((w[0].lon, w[0].lat), (w[1].lon, w[1].lat), (lon, lat))),
            Geometry::Point(p) => p.lon == lon && p.lat == lat,
        }
    }
}

/// Great-circle distance in meters.
pub fn haversine_m(a: &GeoPoint, b: &GeoPoint) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Planar distance in degrees from `p` to the segment `a`-`b`.
pub fn point_segment_distance_deg(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
    (p.0 - qx).hypot(p.1 - qy)
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

fn on_segment(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> bool {
    cross(a, b, p) == 0.0
        && p.0 >= a.0.min(b.0)
        && p.0 <= a.0.max(b.0)
        && p.1 >= a.1.min(b.1)
        && p.1 <= a.1.max(b.1)
}

/// Closed segment intersection, including touching and collinear overlap.
pub(crate) fn segments_intersect(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

fn segment_intersects_box(p: &GeoPoint, q: &GeoPoint, b: &BBox) -> bool {
    if b.contains(p) || b.contains(q) {
        return true;
    }
    let c = b.corners();
    let (a0, a1) = ((p.lon, p.lat), (q.lon, q.lat));
    (0..4).any(|i| segments_intersect(a0, a1, c[i], c[(i + 1) % 4]))
}

fn signed_area_deg2(ring: &[GeoPoint]) -> f64 {
    let n = ring.len();
    let (ox, oy) = (ring[0].lon, ring[0].lat);
    let mut s = 0.0;
    for i in 0..n {
        let (p, q) = (ring[i], ring[(i + 1) % n]);
        s += (p.lon - ox) * (q.lat - oy) - (q.lon - ox) * (p.lat - oy);
    }
    s / 2.0
}

fn ring_self_intersects(ring: &[GeoPoint]) -> bool {
    let n = ring.len();
    let seg = |i: usize| ((ring[i].lon, ring[i].lat), (ring[(i + 1) % n].lon, ring[(i + 1) % n].lat));
    for i in 0..n {
        let (a, b) = seg(i);
        for j in (i + 1)..n {
            let (c, d) = seg(j);
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                // neighbours share one vertex; they must not fold back onto each other
                let (shared, other_i, other_j) = if j == i + 1 { (b, a, d) } else { (a, b, c) };
                if cross(shared, other_i, other_j) == 0.0
                    && (on_segment(shared, other_i, other_j) || on_segment(shared, other_j, other_i))
                {
                    return true;
                }
            } else if segments_intersect(a, b, c, d) {
                return true;
            }
        }
    }
    false
}

/// Winding-number containment with an explicit boundary pass.
fn ring_contains(ring: &[GeoPoint], x: f64, y: f64) -> bool {
    let n = ring.len();
    let mut winding = 0i32;
    for i in 0..n {
        let a = (ring[i].lon, ring[i].lat);
        let b = (ring[(i + 1) % n].lon, ring[(i + 1) % n].lat);
        if on_segment(a, b, (x, y)) {
            return true;
        }
        if a.1 <= y {
            if b.1 > y && cross(a, b, (x, y)) > 0.0 {
                winding += 1;
            }
        } else if b.1 <= y && cross(a, b, (x, y)) < 0.0 {
            winding -= 1;
        }
    }
    winding != 0
}
