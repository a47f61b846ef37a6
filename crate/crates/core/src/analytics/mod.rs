//! Region selection and demographic statistics.

mod heat;
mod select;
mod stats;

use thiserror::Error;

pub use heat::{dotted_map, heat_grid, Dot, DottedMap, HeatGrid};
pub(crate) use heat::{cell_count, cell_index};
pub use select::{locate, select_entities, RegionSelector};
pub use stats::{
    composition, fit_normal, histogram, Bin, Category, CategoryMap, CompositionBreakdown, HistogramSpec, NormalFit,
    UNKNOWN_LABEL,
};

#[derive(Debug, Error, PartialEq)]
pub enum AnalyticsError {
    #[error("invalid region selector: {0}")]
    InvalidRegion(String),
    #[error("unknown region {0}")]
    UnknownRegion(String),
    #[error("value {0} is outside the histogram range")]
    OutOfRange(f64),
    #[error("invalid histogram: {0}")]
    InvalidHistogram(String),
    #[error("need at least 2 values, got {0}")]
    TooFewValues(usize),
    #[error("point ({lon}, {lat}) is outside the grid box")]
    PointOutsideBox { lon: f64, lat: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}
