//! Web-Mercator slippy tile addressing.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::SceneError;
use crate::geo::{BBox, GeoPoint};

pub const MAX_ZOOM: u8 = 22;

/// Latitude limit accepted for tile lookup.
pub const MAX_MERCATOR_LAT: f64 = 85.0511;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TileKey {
    pub z: u8,
    pub x: u32,
    pub y: u32,
}

fn tile_lat(y: u32, n: f64) -> f64 {
    (PI * (1.0 - 2.0 * y as f64 / n)).sinh().atan().to_degrees()
}

impl TileKey {
    pub fn new(z: u8, x: u32, y: u32) -> Result<Self, SceneError> {
        if z > MAX_ZOOM {
            return Err(SceneError::InvalidTile { z, x, y });
        }
        let n = 1u32 << z;
        if x >= n || y >= n {
            return Err(SceneError::InvalidTile { z, x, y });
        }
        Ok(TileKey { z, x, y })
    }

    fn n(&self) -> f64 {
        (1u32 << self.z) as f64
    }

    /// Lon/lat bounds; row 0 is the northernmost.
    pub fn bbox(&self) -> BBox {
        let n = self.n();
        BBox {
            min_lon: self.x as f64 / n * 360.0 - 180.0,
            max_lon: (self.x + 1) as f64 / n * 360.0 - 180.0,
            max_lat: tile_lat(self.y, n),
            min_lat: tile_lat(self.y + 1, n),
        }
    }

    pub fn children(&self) -> Option<[TileKey; 4]> {
        if self.z >= MAX_ZOOM {
            return None;
        }
        let (z, x, y) = (self.z + 1, self.x * 2, self.y * 2);
        Some([
            TileKey { z, x, y },
            TileKey { z, x: x + 1, y },
            TileKey { z, x, y: y + 1 },
            TileKey { z, x: x + 1, y: y + 1 },
        ])
    }

    pub fn parent(&self) -> Option<TileKey> {
        (self.z > 0).then(|| TileKey { z: self.z - 1, x: self.x / 2, y: self.y / 2 })
    }
}

/// The tile at zoom `z` containing `p`. Indices are floored and clamped to
/// the last row/column, so a point on a shared edge lands in the tile to its
/// east/south.
pub fn tile_key_for(p: &GeoPoint, z: u8) -> Result<TileKey, SceneError> {
    if z > MAX_ZOOM {
        return Err(SceneError::InvalidTile { z, x: 0, y: 0 });
    }
    if p.lat.is_nan() || p.lat.abs() > MAX_MERCATOR_LAT || !(-180.0..=180.0).contains(&p.lon) {
        return Err(SceneError::LatitudeOutOfRange(p.lat));
    }
    let max = (1u32 << z) - 1;
    let n = (1u32 << z) as f64;
    let lat = p.lat.to_radians();
    let fx = ((p.lon + 180.0) / 360.0 * n).floor();
    let fy = ((1.0 - (lat.tan() + 1.0 / lat.cos()).ln() / PI) / 2.0 * n).floor();
    let mut key = TileKey {
        z,
        x: (fx.max(0.0) as u32).min(max),
        y: (fy.max(0.0) as u32).min(max),
    };
    // the forward formula and the edge formula can disagree in the last ulp
    let b = key.bbox();
    if p.lat > b.max_lat && key.y > 0 {
        key.y -= 1;
    } else if p.lat < b.min_lat && key.y < max {
        key.y += 1;
    }
    if p.lon < b.min_lon && key.x > 0 {
        key.x -= 1;
    } else if p.lon > b.max_lon && key.x < max {
        key.x += 1;
    }
    Ok(key)
}
