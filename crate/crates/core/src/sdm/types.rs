use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::SdmError;

/// Milliseconds since the Unix epoch, UTC.
pub type Millis = i64;

macro_rules! entity_kinds {
    ($($variant:ident => $token:literal),* $(,)?) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
        pub enum EntityKind {
            $($variant),*
        }

        impl EntityKind {
            pub const ALL: &'static [EntityKind] = &[$(EntityKind::$variant),*];

            /// Token used in the canonical id form, e.g. `house` in `house:h1`.
            pub fn as_str(&self) -> &'static str {
                match self {
                    $(EntityKind::$variant => $token),*
                }
            }

            /// Type name as written in import documents, e.g. `Building`.
            pub fn type_name(&self) -> &'static str {
                match self {
                    $(EntityKind::$variant => stringify!($variant)),*
                }
            }

            /// Accepts the canonical token or the type name.
            pub fn parse(s: &str) -> Option<EntityKind> {
                match s {
                    $($token | stringify!($variant) => Some(EntityKind::$variant),)*
                    _ => None,
                }
            }
        }
    };
}

entity_kinds! {
    Person => "person",
    Company => "company",
    House => "house",
    Building => "building",
    Room => "room",
    UrbanComponent => "urban_component",
    UrbanEvent => "urban_event",
    RoadSegment => "road_segment",
    PipelineSegment => "pipeline_segment",
    SubwayLine => "subway_line",
    PowerNode => "power_node",
    PowerEdge => "power_edge",
    AdminRegion => "admin_region",
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for EntityKind {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for EntityKind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        EntityKind::parse(&s).ok_or_else(|| serde::de::Error::custom(format!("unknown entity kind '{s}'")))
    }
}

/// `<kind>:<local_id>`. Ordering is the lexical order of the canonical form.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EntityId {
    kind: EntityKind,
    local_id: String,
}

impl EntityId {
    pub fn new(kind: EntityKind, local_id: impl Into<String>) -> Result<Self, SdmError> {
        let local_id = local_id.into();
        if local_id.is_empty() || local_id.chars().any(|c| c.is_whitespace() || c == '/' || c == ',') {
            return Err(SdmError::InvalidId(format!("{kind}:{local_id}")));
        }
        Ok(EntityId { kind, local_id })
    }

    pub fn kind(&self) -> EntityKind {
        self.kind
    }

    pub fn local_id(&self) -> &str {
        &self.local_id
    }
}

impl Ord for EntityId {
    fn cmp(&self, other: &Self) -> Ordering {
        // no kind token is a prefix of another, so comparing the parts
        // matches comparing the joined strings
        self.kind
            .as_str()
            .cmp(other.kind.as_str())
            .then_with(|| self.local_id.cmp(&other.local_id))
    }
}

impl PartialOrd for EntityId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.as_str(), self.local_id)
    }
}

impl FromStr for EntityId {
    type Err = SdmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, local) = s.split_once(':').ok_or_else(|| SdmError::InvalidId(s.to_string()))?;
        let kind = EntityKind::parse(kind)
            .filter(|k| k.as_str() == kind)
            .ok_or_else(|| SdmError::InvalidId(s.to_string()))?;
        EntityId::new(kind, local)
    }
}

impl Serialize for EntityId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EntityId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Attribute value. Nested data is flattened into dotted keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Bool(bool),
    Num(f64),
    Str(String),
}

impl Scalar {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Scalar::Num(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Scalar::Str(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Bool(b) => write!(f, "{b}"),
            Scalar::Num(v) => write!(f, "{v}"),
            Scalar::Str(s) => f.write_str(s),
        }
    }
}

impl From<&str> for Scalar {
    fn from(s: &str) -> Self {
        Scalar::Str(s.to_string())
    }
}

impl From<String> for Scalar {
    fn from(s: String) -> Self {
        Scalar::Str(s)
    }
}

impl From<f64> for Scalar {
    fn from(v: f64) -> Self {
        Scalar::Num(v)
    }
}

impl From<bool> for Scalar {
    fn from(v: bool) -> Self {
        Scalar::Bool(v)
    }
}

pub type Attributes = BTreeMap<String, Scalar>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventType {
    Create,
    Update,
    Delete,
    Relate,
    Unrelate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Predicate {
    LivesIn,
    Owns,
    PartOf,
    LocatedIn,
    Operates,
    ConnectedTo,
}

impl Predicate {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "LivesIn" => Predicate::LivesIn,
            "Owns" => Predicate::Owns,
            "PartOf" => Predicate::PartOf,
            "LocatedIn" => Predicate::LocatedIn,
            "Operates" => Predicate::Operates,
            "ConnectedTo" => Predicate::ConnectedTo,
            _ => return None,
        })
    }
}

/// A typed edge valid over `[valid_from, valid_to)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SemanticRelation {
    pub subject: EntityId,
    pub predicate: Predicate,
    pub object: EntityId,
    /// Filled with the event timestamp when omitted on the wire.
    #[serde(default)]
    pub valid_from: Option<Millis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid_to: Option<Millis>,
}

impl SemanticRelation {
    pub fn new(subject: EntityId, predicate: Predicate, object: EntityId, valid_from: Millis) -> Self {
        SemanticRelation { subject, predicate, object, valid_from: Some(valid_from), valid_to: None }
    }

    pub fn from(&self) -> Millis {
        self.valid_from.unwrap_or(Millis::MIN)
    }

    pub fn valid_at(&self, t: Millis) -> bool {
        self.from() <= t && self.valid_to.is_none_or(|to| t < to)
    }

    pub fn same_edge(&self, other: &SemanticRelation) -> bool {
        self.subject == other.subject && self.predicate == other.predicate && self.object == other.object
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Attributes(Attributes),
    Relation(SemanticRelation),
}

/// One line of the event log. Serialized keys follow field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EventWire")]
pub struct EventRecord {
    pub event_id: u64,
    pub timestamp: Millis,
    pub entity_id: EntityId,
    pub event_type: EventType,
    #[serde(serialize_with = "serialize_payload")]
    pub payload: Payload,
    pub source: String,
}

impl EventRecord {
    pub fn create(event_id: u64, timestamp: Millis, entity_id: EntityId, attrs: Attributes, source: &str) -> Self {
        EventRecord {
            event_id,
            timestamp,
            entity_id,
            event_type: EventType::Create,
            payload: Payload::Attributes(attrs),
            source: source.to_string(),
        }
    }

    pub fn update(event_id: u64, timestamp: Millis, entity_id: EntityId, attrs: Attributes, source: &str) -> Self {
        EventRecord { event_type: EventType::Update, ..Self::create(event_id, timestamp, entity_id, attrs, source) }
    }

    pub fn delete(event_id: u64, timestamp: Millis, entity_id: EntityId, source: &str) -> Self {
        EventRecord {
            event_type: EventType::Delete,
            ..Self::create(event_id, timestamp, entity_id, Attributes::new(), source)
        }
    }

    pub fn relate(event_id: u64, timestamp: Millis, rel: SemanticRelation, source: &str) -> Self {
        EventRecord {
            event_id,
            timestamp,
            entity_id: rel.subject.clone(),
            event_type: EventType::Relate,
            payload: Payload::Relation(rel),
            source: source.to_string(),
        }
    }

    pub fn unrelate(event_id: u64, timestamp: Millis, rel: SemanticRelation, source: &str) -> Self {
        EventRecord { event_type: EventType::Unrelate, ..Self::relate(event_id, timestamp, rel, source) }
    }

    /// One log line, without the trailing newline.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("event records always serialize")
    }

    pub fn from_line(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line)
    }
}

fn serialize_payload<S: Serializer>(p: &Payload, s: S) -> Result<S::Ok, S::Error> {
    match p {
        Payload::Attributes(a) => a.serialize(s),
        Payload::Relation(r) => r.serialize(s),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EventWire {
    event_id: u64,
    timestamp: Millis,
    entity_id: EntityId,
    event_type: EventType,
    #[serde(default)]
    payload: serde_json::Value,
    #[serde(default)]
    source: String,
}

impl TryFrom<EventWire> for EventRecord {
    type Error = String;

    fn try_from(w: EventWire) -> Result<Self, Self::Error> {
        let payload = match w.event_type {
            EventType::Relate | EventType::Unrelate => {
                let mut rel: SemanticRelation = serde_json::from_value(w.payload).map_err(|e| e.to_string())?;
                if rel.valid_from.is_none() {
                    rel.valid_from = Some(w.timestamp);
                }
                Payload::Relation(rel)
            }
            _ => {
                let attrs: Attributes = match w.payload {
                    serde_json::Value::Null => Attributes::new(),
                    v => serde_json::from_value(v).map_err(|e| e.to_string())?,
                };
                Payload::Attributes(attrs)
            }
        };
        Ok(EventRecord {
            event_id: w.event_id,
            timestamp: w.timestamp,
            entity_id: w.entity_id,
            event_type: w.event_type,
            payload,
            source: w.source,
        })
    }
}

/// Attribute state of one entity over `[valid_from, valid_to)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub entity_id: EntityId,
    pub version: u64,
    pub valid_from: Millis,
    pub valid_to: Option<Millis>,
    pub attributes: Attributes,
}

impl StateRecord {
    pub fn contains(&self, t: Millis) -> bool {
        self.valid_from <= t && self.valid_to.is_none_or(|to| t < to)
    }

    /// The record as an observer at `t` would see it: an end time after `t`
    /// is not yet known.
    pub fn as_known_at(&self, t: Millis) -> StateRecord {
        let mut s = self.clone();
        if s.valid_to.is_some_and(|to| to > t) {
            s.valid_to = None;
        }
        s
    }

    pub fn attr(&self, key: &str) -> Option<&Scalar> {
        self.attributes.get(key)
    }
}
