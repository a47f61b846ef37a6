use std::collections::BTreeMap;

use serde::Serialize;

use super::AnalyticsError;
use crate::sdm::{EntityId, Millis, Scalar, Store};

pub const UNKNOWN_LABEL: &str = "unknown";

/// Half-open numeric bin starting at `min`; the last bin is unbounded above.
#[derive(Debug, Clone, PartialEq)]
pub struct Bin {
    pub min: f64,
    pub label: String,
}

/// How attribute values map onto chart categories.
#[derive(Debug, Clone, PartialEq)]
pub enum CategoryMap {
    /// The value's own text is the label.
    Identity,
    /// Ascending bins; values below the first bin are unknown.
    Bins(Vec<Bin>),
    /// Exact-text lookup with a catch-all label.
    Lookup { map: BTreeMap<String, String>, default: String },
}

impl CategoryMap {
    pub fn bins(spec: &[(f64, &str)]) -> Self {
        CategoryMap::Bins(spec.iter().map(|(min, l)| Bin { min: *min, label: l.to_string() }).collect())
    }

    /// Child / adult / senior age bands.
    pub fn age_bands() -> Self {
        Self::bins(&[(0.0, "child"), (18.0, "adult"), (60.0, "senior")])
    }

    /// The map used for an attribute when the caller gives none.
    pub fn default_for(attribute: &str) -> Self {
        match attribute {
            "age" => Self::age_bands(),
            _ => CategoryMap::Identity,
        }
    }

    pub fn label(&self, value: Option<&Scalar>) -> String {
        let Some(v) = value else {
            return UNKNOWN_LABEL.to_string();
        };
        match self {
            CategoryMap::Identity => v.to_string(),
            CategoryMap::Bins(bins) => v
                .as_f64()
                .and_then(|x| bins.iter().rev().find(|b| x >= b.min))
                .map_or_else(|| UNKNOWN_LABEL.to_string(), |b| b.label.clone()),
            CategoryMap::Lookup { map, default } => map.get(&v.to_string()).unwrap_or(default).clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Category {
    pub label: String,
    pub count: u64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompositionBreakdown {
    pub attribute: String,
    pub total: u64,
    pub categories: Vec<Category>,
}

/// Counts entity attribute values per label. Missing attributes and
/// entities not live at `t` count as unknown.
pub fn composition<'a>(
    store: &Store,
    entities: impl IntoIterator<Item = &'a EntityId>,
    attribute: &str,
    map: &CategoryMap,
    t: Millis,
) -> CompositionBreakdown {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut total = 0u64;
    for id in entities {
        let value = store.state_at(id, t).and_then(|s| s.attr(attribute));
        *counts.entry(map.label(value)).or_insert(0) += 1;
        total += 1;
    }
    if total == 0 {
        return CompositionBreakdown { attribute: attribute.to_string(), total: 0, categories: Vec::new() };
    }
    let mut order: Vec<String> = match map {
        CategoryMap::Bins(bins) => bins.iter().map(|b| b.label.clone()).collect(),
        _ => Vec::new(),
    };
    for label in counts.keys() {
        if label != UNKNOWN_LABEL && !order.contains(label) {
            order.push(label.clone());
        }
    }
    if counts.contains_key(UNKNOWN_LABEL) {
        order.push(UNKNOWN_LABEL.to_string());
    }
    let categories = order
        .into_iter()
        .map(|label| {
            let count = counts.get(&label).copied().unwrap_or(0);
            Category { fraction: count as f64 / total as f64, label, count }
        })
        .collect();
    CompositionBreakdown { attribute: attribute.to_string(), total, categories }
}

/// Uniform bins over `[min, max]`; the last bin is closed on the right.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistogramSpec {
    pub min: f64,
    pub max: f64,
    pub bin_count: usize,
}

impl HistogramSpec {
    pub fn new(min: f64, max: f64, bin_count: usize) -> Result<Self, AnalyticsError> {
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(AnalyticsError::InvalidHistogram(format!("need finite min < max, got [{min}, {max}]")));
        }
        if bin_count == 0 {
            return Err(AnalyticsError::InvalidHistogram("bin_count must be at least 1".into()));
        }
        Ok(HistogramSpec { min, max, bin_count })
    }

    pub fn width(&self) -> f64 {
        (self.max - self.min) / self.bin_count as f64
    }

    pub fn edge(&self, i: usize) -> f64 {
        if i == self.bin_count {
            self.max
        } else {
            self.min + i as f64 * self.width()
        }
    }

    /// Bin of `v`, consistent with [`HistogramSpec::edge`].
    pub fn bin_of(&self, v: f64) -> Result<usize, AnalyticsError> {
        if !(v >= self.min && v <= self.max) {
            return Err(AnalyticsError::OutOfRange(v));
        }
        let last = self.bin_count - 1;
        let mut i = (((v - self.min) / (self.max - self.min)) * self.bin_count as f64).floor() as usize;
        i = i.min(last);
        while i > 0 && v < self.edge(i) {
            i -= 1;
        }
        while i < last && v >= self.edge(i + 1) {
            i += 1;
        }
        Ok(i)
    }
}

pub fn histogram(values: &[f64], spec: &HistogramSpec) -> Result<Vec<u64>, AnalyticsError> {
    let mut counts = vec![0u64; spec.bin_count];
    for &v in values {
        counts[spec.bin_of(v)?] += 1;
    }
    Ok(counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalFit {
    pub n: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub stddev: f64,
    pub degenerate: bool,
}

/// One-pass (Welford) mean and population standard deviation.
pub fn fit_normal(values: &[f64]) -> Result<NormalFit, AnalyticsError> {
    if values.len() < 2 {
        return Err(AnalyticsError::TooFewValues(values.len()));
    }
    let (mut mean, mut m2) = (0.0f64, 0.0f64);
    for (i, &x) in values.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    let stddev = (m2.max(0.0) / values.len() as f64).sqrt();
    Ok(NormalFit { n: values.len(), mean, stddev, degenerate: stddev == 0.0 })
}
