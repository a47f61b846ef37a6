use serde::Serialize;

use super::select::locate;
use super::stats::CategoryMap;
use super::AnalyticsError;
use crate::geo::{BBox, GeoPoint};
use crate::index::GeoIndex;
use crate::sdm::{EntityId, Millis, Store};

/// Row-major count grid. Row 0 is the southern edge of the box.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeatGrid {
    pub origin: GeoPoint,
    pub cell_size: f64,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub mass: f64,
}

impl HeatGrid {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }
}

/// Number of cells of `size` needed to cover `span`.
pub(crate) fn cell_count(span: f64, size: f64) -> usize {
    ((span / size) - 1e-9).ceil().max(1.0) as usize
}

/// Cell holding offset `off` from the grid origin. A point on a shared edge
/// goes to the lower-indexed cell.
pub(crate) fn cell_index(off: f64, size: f64, count: usize) -> usize {
    let f = off / size;
    let i = if f > 0.0 && f.fract() == 0.0 { f - 1.0 } else { f.floor() };
    (i.max(0.0) as usize).min(count - 1)
}

/// Discrete Gaussian weights for offsets `-r..=r`, `r = floor(3σ)`.
fn kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).floor() as i64;
    (-r..=r).map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp()).collect()
}

/// Spreads each source cell over its in-grid neighbours along one axis,
/// renormalizing the truncated kernel so each cell's mass is kept.
fn blur_axis(values: &[f64], rows: usize, cols: usize, k: &[f64], along_cols: bool) -> Vec<f64> {
    let r = (k.len() / 2) as i64;
    let mut out = vec![0.0; values.len()];
    let (lines, len) = if along_cols { (rows, cols) } else { (cols, rows) };
    let at = |line: usize, pos: usize| if along_cols { line * cols + pos } else { pos * cols + line };
    for line in 0..lines {
        for src in 0..len {
            let v = values[at(line, src)];
            if v == 0.0 {
                continue;
            }
            let lo = (src as i64 - r).max(0);
            let hi = (src as i64 + r).min(len as i64 - 1);
            let norm: f64 = (lo..=hi).map(|p| k[(p - src as i64 + r) as usize]).sum();
            for p in lo..=hi {
                out[at(line, p as usize)] += v * k[(p - src as i64 + r) as usize] / norm;
            }
        }
    }
    out
}

pub fn heat_grid(points: &[GeoPoint], bbox: &BBox, cell_size: f64, sigma_cells: f64) -> Result<HeatGrid, AnalyticsError> {
    if !(cell_size > 0.0 && cell_size.is_finite()) {
        return Err(AnalyticsError::InvalidGrid(format!("cell size {cell_size}")));
    }
    if !(sigma_cells >= 0.0 && sigma_cells.is_finite()) {
        return Err(AnalyticsError::InvalidGrid(format!("sigma {sigma_cells}")));
    }
    let cols = cell_count(bbox.width(), cell_size);
    let rows = cell_count(bbox.height(), cell_size);
    if rows.saturating_mul(cols) > 4_000_000 {
        return Err(AnalyticsError::InvalidGrid(format!("{rows}x{cols} cells is too many")));
    }
    let mut values = vec![0.0; rows * cols];
    for p in points {
        if !bbox.contains(p) {
            return Err(AnalyticsError::PointOutsideBox { lon: p.lon, lat: p.lat });
        }
        let c = cell_index(p.lon - bbox.min_lon, cell_size, cols);
        let r = cell_index(p.lat - bbox.min_lat, cell_size, rows);
        values[r * cols + c] += 1.0;
    }
    if sigma_cells > 0.0 {
        let k = kernel(sigma_cells);
        values = blur_axis(&values, rows, cols, &k, true);
        values = blur_axis(&values, rows, cols, &k, false);
    }
    let mass = values.iter().sum();
    Ok(HeatGrid {
        origin: GeoPoint { lon: bbox.min_lon, lat: bbox.min_lat, alt: 0.0 },
        cell_size,
        rows,
        cols,
        values,
        mass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dot {
    pub id: EntityId,
    pub point: GeoPoint,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DottedMap {
    pub dots: Vec<Dot>,
    pub skipped: usize,
}

/// One dot per located entity at its exact location, labeled with the
/// same category map a composition would use.
pub fn dotted_map<'a>(
    store: &Store,
    index: &GeoIndex,
    entities: impl IntoIterator<Item = &'a EntityId>,
    attribute: &str,
    map: &CategoryMap,
    t: Millis,
) -> DottedMap {
    let mut dots = Vec::new();
    let mut skipped = 0;
    for id in entities {
        match locate(store, index, id, t) {
            Some(point) => {
                let value = store.state_at(id, t).and_then(|s| s.attr(attribute));
                dots.push(Dot { id: id.clone(), point, label: map.label(value) });
            }
            None => skipped += 1,
        }
    }
    DottedMap { dots, skipped }
}
