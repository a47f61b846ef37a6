//! FeatureCollection documents: the import format, the geometry sidecar
//! written next to a generated event log, and the geometry encoding used in
//! API responses.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::geo::{Footprint, GeoError, GeoPoint, Geometry};
use crate::sdm::{Attributes, EntityId, EntityKind, Scalar};

/// Decimal places kept for lon/lat on output.
pub const COORD_DECIMALS: i32 = 7;

pub fn round_coord(v: f64) -> f64 {
    let scale = 10f64.powi(COORD_DECIMALS);
    (v * scale).round() / scale
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryJson {
    #[serde(rename = "type")]
    pub kind: String,
    pub coordinates: Value,
}

fn pair(p: &GeoPoint) -> Value {
    Value::from(vec![round_coord(p.lon), round_coord(p.lat)])
}

impl GeometryJson {
    /// Encodes with lon/lat pairs rounded to seven decimals. Altitude is
    /// carried separately as `base_alt`.
    pub fn encode(g: &Geometry) -> Self {
        match g {
            Geometry::Point(p) => GeometryJson { kind: "Point".into(), coordinates: pair(p) },
            Geometry::Polyline(pts) => GeometryJson {
                kind: "LineString".into(),
                coordinates: Value::Array(pts.iter().map(pair).collect()),
            },
            Geometry::Polygon(f) => {
                let mut ring: Vec<Value> = f.ring().iter().map(pair).collect();
                ring.push(pair(&f.ring()[0]));
                GeometryJson { kind: "Polygon".into(), coordinates: Value::Array(vec![Value::Array(ring)]) }
            }
        }
    }

    /// Decodes, using a third coordinate as altitude when present and
    /// `default_alt` otherwise.
    pub fn decode(&self, default_alt: f64) -> Result<Geometry, GeoError> {
        let bad = |msg: &str| GeoError::InvalidGeometry(format!("{} {}", self.kind, msg));
        let point = |v: &Value| -> Result<GeoPoint, GeoError> {
            let arr = v.as_array().ok_or_else(|| bad("coordinate is not an array"))?;
            let num = |i: usize| arr.get(i).and_then(Value::as_f64);
            match (num(0), num(1), arr.len()) {
                (Some(lon), Some(lat), 2) => GeoPoint::new(lon, lat, default_alt),
                (Some(lon), Some(lat), 3) => GeoPoint::new(lon, lat, num(2).ok_or_else(|| bad("bad altitude"))?),
                _ => Err(bad("coordinate must be [lon, lat] or [lon, lat, alt]")),
            }
        };
        let points = |v: &Value| -> Result<Vec<GeoPoint>, GeoError> {
            v.as_array().ok_or_else(|| bad("expected a coordinate list"))?.iter().map(point).collect()
        };
        match self.kind.as_str() {
            "Point" => Geometry::point(point(&self.coordinates)?),
            "LineString" => Geometry::polyline(points(&self.coordinates)?),
            "Polygon" => {
                let rings = self.coordinates.as_array().ok_or_else(|| bad("expected ring list"))?;
                match rings.as_slice() {
                    [outer] => Ok(Geometry::Polygon(Footprint::new(points(outer)?)?)),
                    [] => Err(bad("has no rings")),
                    _ => Err(bad("holes are not supported")),
                }
            }
            other => Err(GeoError::InvalidGeometry(format!("unsupported geometry type {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    #[serde(rename = "type")]
    pub kind: String,
    pub geometry: Option<GeometryJson>,
    #[serde(default)]
    pub properties: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCollection {
    #[serde(rename = "type")]
    pub kind: String,
    pub features: Vec<Feature>,
}

impl Default for FeatureCollection {
    fn default() -> Self {
        FeatureCollection { kind: "FeatureCollection".into(), features: Vec::new() }
    }
}

/// A feature after property validation.
#[derive(Debug, Clone, PartialEq)]
pub struct CityFeature {
    pub id: EntityId,
    pub geometry: Geometry,
    pub layer: Option<String>,
    pub height_m: f64,
    pub base_alt: f64,
    pub lod_min_zoom: Option<u8>,
    /// Admin level (0 = district) and parent, for admin regions.
    pub admin_level: Option<usize>,
    pub parent: Option<EntityId>,
    pub attrs: Attributes,
}

fn scalar(v: &Value) -> Option<Scalar> {
    match v {
        Value::Bool(b) => Some(Scalar::Bool(*b)),
        Value::Number(n) => n.as_f64().map(Scalar::Num),
        Value::String(s) => Some(Scalar::Str(s.clone())),
        _ => None,
    }
}

impl Feature {
    /// Validates properties and geometry. Errors are human-readable
    /// diagnostics for the import report.
    pub fn to_city_feature(&self) -> Result<CityFeature, String> {
        if self.kind != "Feature" {
            return Err(format!("expected type Feature, got {}", self.kind));
        }
        let props = &self.properties;
        let text = |k: &str| props.get(k).and_then(Value::as_str);
        let number = |k: &str| -> Result<Option<f64>, String> {
            match props.get(k) {
                None | Some(Value::Null) => Ok(None),
                Some(v) => v.as_f64().map(Some).ok_or_else(|| format!("property {k} must be a number")),
            }
        };

        let kind_str = text("kind").ok_or("missing property kind")?;
        let kind = EntityKind::parse(kind_str).ok_or_else(|| format!("unknown kind '{kind_str}'"))?;
        let raw_id = text("id").ok_or("missing property id")?;
        let local = match raw_id.split_once(':') {
            Some((k, rest)) if EntityKind::parse(k) == Some(kind) => rest,
            _ => raw_id,
        };
        let id = EntityId::new(kind, local).map_err(|e| e.to_string())?;

        let base_alt = number("base_alt")?.unwrap_or(0.0);
        let height_m = number("height_m")?.unwrap_or(0.0);
        if !(height_m >= 0.0 && height_m.is_finite()) {
            return Err("height_m must be a non-negative number".into());
        }
        let lod_min_zoom = match number("lod_min_zoom")? {
            None => None,
            Some(z) if (0.0..=22.0).contains(&z) && z.fract() == 0.0 => Some(z as u8),
            Some(z) => return Err(format!("lod_min_zoom {z} outside 0..=22")),
        };
        let admin_level = match number("level")? {
            None => None,
            Some(l) if (0.0..=3.0).contains(&l) && l.fract() == 0.0 => Some(l as usize),
            Some(l) => return Err(format!("level {l} outside 0..=3")),
        };
        let parent = match text("parent") {
            None => None,
            Some(p) => Some(match p.parse::<EntityId>() {
                Ok(id) => id,
                Err(_) => EntityId::new(EntityKind::AdminRegion, p).map_err(|e| e.to_string())?,
            }),
        };

        let mut attrs = Attributes::new();
        for (k, v) in props {
            if let Some(name) = k.strip_prefix("attrs.") {
                attrs.insert(name.to_string(), scalar(v).ok_or_else(|| format!("attribute {k} is not a scalar"))?);
            }
        }
        if let Some(obj) = props.get("attrs").and_then(Value::as_object) {
            for (k, v) in obj {
                attrs.insert(k.clone(), scalar(v).ok_or_else(|| format!("attribute attrs.{k} is not a scalar"))?);
            }
        }

        let geometry = self
            .geometry
            .as_ref()
            .ok_or("missing geometry")?
            .decode(base_alt)
            .map_err(|e| e.to_string())?;

        Ok(CityFeature {
            id,
            geometry,
            layer: text("layer").map(str::to_string),
            height_m,
            base_alt,
            lod_min_zoom,
            admin_level,
            parent,
            attrs,
        })
    }
}

impl CityFeature {
    pub fn to_feature(&self) -> Feature {
        let mut props = Map::new();
        props.insert("kind".into(), Value::from(self.id.kind().type_name()));
        props.insert("id".into(), Value::from(self.id.local_id()));
        if let Some(layer) = &self.layer {
            props.insert("layer".into(), Value::from(layer.as_str()));
        }
        props.insert("height_m".into(), Value::from(self.height_m));
        props.insert("base_alt".into(), Value::from(self.base_alt));
        if let Some(z) = self.lod_min_zoom {
            props.insert("lod_min_zoom".into(), Value::from(z));
        }
        if let Some(l) = self.admin_level {
            props.insert("level".into(), Value::from(l));
        }
        if let Some(p) = &self.parent {
            props.insert("parent".into(), Value::from(p.to_string()));
        }
        for (k, v) in &self.attrs {
            props.insert(format!("attrs.{k}"), serde_json::to_value(v).expect("scalars serialize"));
        }
        Feature { kind: "Feature".into(), geometry: Some(GeometryJson::encode(&self.geometry)), properties: props }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn feature(v: Value) -> Feature {
        serde_json::from_value(v).unwrap()
    }

    #[test]
    fn building_feature_parses() {
        let f = feature(json!({
            "type": "Feature",
            "geometry": {"type": "Polygon", "coordinates": [[[0,0],[1,0],[1,1],[0,1],[0,0]]]},
            "properties": {"kind": "Building", "id": "b1", "layer": "above-ground/buildings",
                           "height_m": 30, "attrs.name": "Tower", "attrs": {"floors": 10}}
        }));
        let c = f.to_city_feature().unwrap();
        assert_eq!(c.id.to_string(), "building:b1");
        assert_eq!(c.height_m, 30.0);
        assert_eq!(c.attrs["name"], Scalar::from("Tower"));
        assert_eq!(c.attrs["floors"], Scalar::Num(10.0));
        assert!(matches!(c.geometry, Geometry::Polygon(_)));
    }

    #[test]
    fn unknown_kind_is_diagnosed() {
        let f = feature(json!({
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [0,0]},
            "properties": {"kind": "Dragon", "id": "d1"}
        }));
        assert!(f.to_city_feature().unwrap_err().contains("Dragon"));
    }

    #[test]
    fn third_coordinate_is_altitude() {
        let g = GeometryJson { kind: "LineString".into(), coordinates: json!([[0, 0, -5], [1, 1, -5]]) };
        let geo = g.decode(0.0).unwrap();
        assert!(geo.vertices().iter().all(|p| p.alt == -5.0));
        let g = GeometryJson { kind: "LineString".into(), coordinates: json!([[0, 0], [1, 1]]) };
        assert!(g.decode(-3.0).unwrap().vertices().iter().all(|p| p.alt == -3.0));
    }

    #[test]
    fn polygon_with_hole_rejected() {
        let g = GeometryJson {
            kind: "Polygon".into(),
            coordinates: json!([[[0,0],[4,0],[4,4],[0,4]], [[1,1],[2,1],[2,2]]]),
        };
        assert!(g.decode(0.0).is_err());
    }

    #[test]
    fn encode_rounds_to_seven_decimals() {
        let g = Geometry::point(GeoPoint::surface(114.123456789, 22.5).unwrap()).unwrap();
        let j = serde_json::to_string(&GeometryJson::encode(&g)).unwrap();
        assert_eq!(j, r#"{"type":"Point","coordinates":[114.1234568,22.5]}"#);
    }

    #[test]
    fn city_feature_round_trip() {
        let f = feature(json!({
            "type": "Feature",
            "geometry": {"type": "Polygon", "coordinates": [[[0.5,0.5],[1,0.5],[1,1],[0.5,0.5]]]},
            "properties": {"kind": "AdminRegion", "id": "g1", "level": 3, "parent": "c1", "height_m": 0, "base_alt": 0}
        }));
        let c = f.to_city_feature().unwrap();
        assert_eq!(c.parent.as_ref().unwrap().to_string(), "admin_region:c1");
        assert_eq!(c.to_feature().to_city_feature().unwrap(), c);
    }
}
