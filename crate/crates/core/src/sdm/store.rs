use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use super::types::*;
use super::SdmError;

/// Durable destination for accepted events. `append` runs after validation
/// and before the store mutates; a failure leaves the store untouched.
pub trait EventSink {
    fn append(&mut self, event: &EventRecord) -> Result<(), String>;

    /// Called periodically so batched writes reach stable storage.
    fn flush(&mut self) -> Result<(), String> {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Out,
    In,
}

impl Direction {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "out" => Some(Direction::Out),
            "in" => Some(Direction::In),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct History {
    states: Vec<StateRecord>,
    deleted: bool,
}

impl History {
    fn current(&self) -> Option<&StateRecord> {
        if self.deleted {
            None
        } else {
            self.states.last()
        }
    }

    fn at(&self, t: Millis) -> Option<&StateRecord> {
        let idx = self.states.partition_point(|s| s.valid_from <= t);
        let s = self.states.get(idx.checked_sub(1)?)?;
        s.contains(t).then_some(s)
    }
}

/// All entity states and live relations at one instant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub as_of: Millis,
    pub states: BTreeMap<EntityId, StateRecord>,
    pub relations: Vec<SemanticRelation>,
    /// Entities touched by an event with timestamp in the replayed range.
    pub changed: BTreeSet<EntityId>,
}

/// Event-sourced entity store. Every mutation goes through [`Store::apply_event`].
#[derive(Debug, Clone, Default)]
pub struct Store {
    log: Vec<EventRecord>,
    entities: HashMap<EntityId, History>,
    relations: Vec<SemanticRelation>,
    rel_out: HashMap<EntityId, Vec<usize>>,
    rel_in: HashMap<EntityId, Vec<usize>>,
}

enum Effect {
    Create(StateRecord),
    Update(StateRecord),
    Delete,
    Relate(SemanticRelation),
    Unrelate(usize),
}

impl Store {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn last_event_id(&self) -> u64 {
        self.log.last().map_or(0, |e| e.event_id)
    }

    pub fn last_timestamp(&self) -> Option<Millis> {
        self.log.last().map(|e| e.timestamp)
    }

    pub fn events(&self) -> &[EventRecord] {
        &self.log
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    /// Every id ever created, in canonical order.
    pub fn entity_ids(&self) -> Vec<EntityId> {
        let mut ids: Vec<EntityId> = self.entities.keys().cloned().collect();
        ids.sort();
        ids
    }

    pub fn ids_of_kind(&self, kind: EntityKind) -> Vec<EntityId> {
        let mut ids: Vec<EntityId> = self.entities.keys().filter(|id| id.kind() == kind).cloned().collect();
        ids.sort();
        ids
    }

    pub fn contains(&self, id: &EntityId) -> bool {
        self.entities.contains_key(id)
    }

    /// Full version history of an entity, oldest first.
    pub fn history(&self, id: &EntityId) -> &[StateRecord] {
        self.entities.get(id).map_or(&[], |h| &h.states)
    }

    pub fn is_deleted(&self, id: &EntityId) -> bool {
        self.entities.get(id).is_some_and(|h| h.deleted)
    }

    pub fn current(&self, id: &EntityId) -> Option<&StateRecord> {
        self.entities.get(id)?.current()
    }

    pub fn apply_event(&mut self, event: EventRecord) -> Result<StateRecord, SdmError> {
        let effect = self.validate(&event)?;
        Ok(self.commit(event, effect))
    }

    /// Validates, hands the event to `sink`, then commits.
    pub fn apply_event_with(&mut self, event: EventRecord, sink: &mut dyn EventSink) -> Result<StateRecord, SdmError> {
        let effect = self.validate(&event)?;
        sink.append(&event).map_err(SdmError::Storage)?;
        Ok(self.commit(event, effect))
    }

    /// Checks an event against the current store without applying it.
    pub fn check(&self, event: &EventRecord) -> Result<(), SdmError> {
        self.validate(event).map(|_| ())
    }

    fn live(&self, id: &EntityId) -> Result<&History, SdmError> {
        let h = self.entities.get(id).ok_or_else(|| SdmError::UnknownEntity(id.clone()))?;
        if h.deleted {
            return Err(SdmError::DeletedEntity(id.clone()));
        }
        Ok(h)
    }

    fn validate(&self, e: &EventRecord) -> Result<Effect, SdmError> {
        let expected = self.last_event_id() + 1;
        if e.event_id != expected {
            return Err(SdmError::OutOfOrderEvent { expected, got: e.event_id });
        }
        if let Some(last) = self.last_timestamp() {
            if e.timestamp < last {
                return Err(SdmError::TimeRegression { last, got: e.timestamp });
            }
        }
        let id = &e.entity_id;
        match (&e.event_type, &e.payload) {
            (EventType::Create, Payload::Attributes(attrs)) => {
                if self.entities.contains_key(id) {
                    return Err(SdmError::DuplicateCreate(id.clone()));
                }
                Ok(Effect::Create(StateRecord {
                    entity_id: id.clone(),
                    version: 1,
                    valid_from: e.timestamp,
                    valid_to: None,
                    attributes: attrs.clone(),
                }))
            }
            (EventType::Update, Payload::Attributes(delta)) => {
                let cur = self.live(id)?.current().expect("live entity has a state");
                if e.timestamp <= cur.valid_from {
                    return Err(SdmError::TimeRegression { last: cur.valid_from, got: e.timestamp });
                }
                let mut attributes = cur.attributes.clone();
                attributes.extend(delta.iter().map(|(k, v)| (k.clone(), v.clone())));
                Ok(Effect::Update(StateRecord {
                    entity_id: id.clone(),
                    version: cur.version + 1,
                    valid_from: e.timestamp,
                    valid_to: None,
                    attributes,
                }))
            }
            (EventType::Delete, Payload::Attributes(_)) => {
                let cur = self.live(id)?.current().expect("live entity has a state");
                if e.timestamp <= cur.valid_from {
                    return Err(SdmError::TimeRegression { last: cur.valid_from, got: e.timestamp });
                }
                Ok(Effect::Delete)
            }
            (EventType::Relate, Payload::Relation(rel)) => {
                self.check_relation_shape(e, rel)?;
                if rel.from() != e.timestamp {
                    return Err(SdmError::InvalidPayload("relation must start at the event timestamp".into()));
                }
                if rel.valid_to.is_some_and(|to| to <= rel.from()) {
                    return Err(SdmError::InvalidPayload("relation interval is empty".into()));
                }
                self.live(&rel.subject)?;
                self.live(&rel.object)?;
                let dup = self.edges(&rel.subject, Direction::Out).any(|r| r.same_edge(rel) && r.valid_at(e.timestamp));
                if dup {
                    return Err(SdmError::DuplicateRelation);
                }
                Ok(Effect::Relate(rel.clone()))
            }
            (EventType::Unrelate, Payload::Relation(rel)) => {
                self.check_relation_shape(e, rel)?;
                if !self.entities.contains_key(&rel.subject) {
                    return Err(SdmError::UnknownEntity(rel.subject.clone()));
                }
                let idx = self
                    .rel_out
                    .get(&rel.subject)
                    .into_iter()
                    .flatten()
                    .copied()
                    .find(|&i| self.relations[i].same_edge(rel) && self.relations[i].valid_at(e.timestamp))
                    .ok_or(SdmError::RelationNotFound)?;
                Ok(Effect::Unrelate(idx))
            }
            _ => Err(SdmError::InvalidPayload(format!("payload does not match {:?}", e.event_type))),
        }
    }

    fn check_relation_shape(&self, e: &EventRecord, rel: &SemanticRelation) -> Result<(), SdmError> {
        if rel.subject != e.entity_id {
            return Err(SdmError::InvalidPayload("relation subject must be the event entity".into()));
        }
        if rel.subject == rel.object {
            return Err(SdmError::SelfRelation(rel.subject.clone()));
        }
        Ok(())
    }

    fn commit(&mut self, event: EventRecord, effect: Effect) -> StateRecord {
        let t = event.timestamp;
        let id = event.entity_id.clone();
        let result = match effect {
            Effect::Create(state) => {
                self.entities.insert(id.clone(), History { states: vec![state.clone()], deleted: false });
                state
            }
            Effect::Update(state) => {
                let h = self.entities.get_mut(&id).expect("validated");
                if let Some(prev) = h.states.last_mut() {
                    prev.valid_to = Some(t);
                }
                h.states.push(state.clone());
                state
            }
            Effect::Delete => {
                let h = self.entities.get_mut(&id).expect("validated");
                h.deleted = true;
                let last = h.states.last_mut().expect("created entity has a state");
                last.valid_to = Some(t);
                let closed = last.clone();
                self.close_relations_of(&id, t);
                closed
            }
            Effect::Relate(rel) => {
                let idx = self.relations.len();
                self.rel_out.entry(rel.subject.clone()).or_default().push(idx);
                self.rel_in.entry(rel.object.clone()).or_default().push(idx);
                self.relations.push(rel);
                self.current(&id).cloned().expect("validated live subject")
            }
            Effect::Unrelate(idx) => {
                self.relations[idx].valid_to = Some(t);
                self.current(&id).cloned().expect("unrelate of a live subject")
            }
        };
        self.log.push(event);
        result
    }

    fn close_relations_of(&mut self, id: &EntityId, t: Millis) {
        let touching: Vec<usize> = self
            .rel_out
            .get(id)
            .into_iter()
            .flatten()
            .chain(self.rel_in.get(id).into_iter().flatten())
            .copied()
            .collect();
        for i in touching {
            let r = &mut self.relations[i];
            if r.valid_to.is_none_or(|to| to > t) {
                r.valid_to = Some(t);
            }
        }
    }

    /// The unique state whose interval contains `t`.
    pub fn state_at(&self, id: &EntityId, t: Millis) -> Option<&StateRecord> {
        self.entities.get(id)?.at(t)
    }

    pub fn is_live_at(&self, id: &EntityId, t: Millis) -> bool {
        self.state_at(id, t).is_some()
    }

    fn edges<'a>(&'a self, id: &EntityId, dir: Direction) -> impl Iterator<Item = &'a SemanticRelation> + 'a {
        let map = match dir {
            Direction::Out => &self.rel_out,
            Direction::In => &self.rel_in,
        };
        map.get(id).into_iter().flatten().map(move |&i| &self.relations[i])
    }

    /// Relations touching `id` that hold at `t`, sorted.
    pub fn relations_of(
        &self,
        id: &EntityId,
        predicate: Option<Predicate>,
        t: Millis,
        dir: Direction,
    ) -> Vec<SemanticRelation> {
        let mut out: Vec<SemanticRelation> = self
            .edges(id, dir)
            .filter(|r| predicate.is_none_or(|p| r.predicate == p) && r.valid_at(t))
            .cloned()
            .collect();
        out.sort();
        out
    }

    /// Entities on the other end of `id`'s relations, sorted and deduplicated.
    pub fn neighbors(&self, id: &EntityId, predicate: Predicate, t: Millis, dir: Direction) -> Vec<EntityId> {
        let mut ids: Vec<EntityId> = self
            .relations_of(id, Some(predicate), t, dir)
            .into_iter()
            .map(|r| match dir {
                Direction::Out => r.object,
                Direction::In => r.subject,
            })
            .collect();
        ids.dedup();
        ids
    }

    /// Incremental as-of view built from the per-entity histories.
    pub fn snapshot_at(&self, t: Millis) -> Snapshot {
        let states = self
            .entities
            .iter()
            .filter_map(|(id, h)| h.at(t).map(|s| (id.clone(), s.as_known_at(t))))
            .collect();
        let mut relations: Vec<SemanticRelation> = self
            .relations
            .iter()
            .filter(|r| r.valid_at(t))
            .map(|r| {
                let mut r = r.clone();
                if r.valid_to.is_some_and(|to| to > t) {
                    r.valid_to = None;
                }
                r
            })
            .collect();
        relations.sort();
        Snapshot { as_of: t, states, relations, changed: BTreeSet::new() }
    }

    /// Folds every logged event with timestamp `<= t1` into a fresh store
    /// and reads its state at `t1`.
    pub fn replay_range(&self, t0: Millis, t1: Millis) -> Result<Snapshot, SdmError> {
        if t0 > t1 {
            return Err(SdmError::InvalidRange { from: t0, to: t1 });
        }
        let mut fresh = Store::new();
        let mut changed = BTreeSet::new();
        for e in self.log.iter().filter(|e| e.timestamp <= t1) {
            if e.timestamp >= t0 {
                changed.insert(e.entity_id.clone());
            }
            fresh.apply_event(e.clone())?;
        }
        let mut snap = fresh.snapshot_at(t1);
        snap.changed = changed;
        Ok(snap)
    }

    /// Rebuilds a store from an event sequence.
    pub fn from_events(events: impl IntoIterator<Item = EventRecord>) -> Result<Self, SdmError> {
        let mut s = Store::new();
        for e in events {
            s.apply_event(e)?;
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(s: &str) -> EntityId {
        s.parse().unwrap()
    }

    fn attrs(kv: &[(&str, &str)]) -> Attributes {
        kv.iter().map(|(k, v)| (k.to_string(), Scalar::from(*v))).collect()
    }

    fn h1_store() -> Store {
        let mut s = Store::new();
        s.apply_event(EventRecord::create(1, 100, id("house:h1"), attrs(&[("addr", "A-101"), ("owner", "p1")]), "t"))
            .unwrap();
        s.apply_event(EventRecord::update(2, 200, id("house:h1"), attrs(&[("owner", "p2")]), "t")).unwrap();
        s
    }

    #[test]
    fn create_then_update() {
        let mut s = Store::new();
        let v1 = s
            .apply_event(EventRecord::create(1, 100, id("house:h1"), attrs(&[("addr", "A-101"), ("owner", "p1")]), "t"))
            .unwrap();
        assert_eq!(v1.version, 1);
        assert_eq!((v1.valid_from, v1.valid_to), (100, None));
        assert_eq!(v1.attributes.len(), 2);
        let v2 = s.apply_event(EventRecord::update(2, 200, id("house:h1"), attrs(&[("owner", "p2")]), "t")).unwrap();
        assert_eq!(v2.version, 2);
        assert_eq!(v2.attr("owner"), Some(&Scalar::from("p2")));
        assert_eq!(v2.attr("addr"), Some(&Scalar::from("A-101")));
        assert_eq!(s.history(&id("house:h1"))[0].valid_to, Some(200));
        assert_eq!(s.events().len(), 2);
    }

    #[test]
    fn update_of_unknown_entity() {
        let mut s = h1_store();
        let err = s.apply_event(EventRecord::update(3, 300, id("house:h9"), attrs(&[]), "t")).unwrap_err();
        assert!(matches!(err, SdmError::UnknownEntity(_)));
        assert_eq!(s.last_event_id(), 2);
    }

    #[test]
    fn event_id_gaps_and_regressions() {
        let mut s = h1_store();
        let gap = s.apply_event(EventRecord::update(4, 300, id("house:h1"), attrs(&[]), "t"));
        assert!(matches!(gap, Err(SdmError::OutOfOrderEvent { expected: 3, got: 4 })));
        let stale = s.apply_event(EventRecord::update(2, 300, id("house:h1"), attrs(&[]), "t"));
        assert!(matches!(stale, Err(SdmError::OutOfOrderEvent { .. })));
        let back = s.apply_event(EventRecord::update(3, 150, id("house:h1"), attrs(&[]), "t"));
        assert!(matches!(back, Err(SdmError::TimeRegression { .. })));
        let same = s.apply_event(EventRecord::update(3, 200, id("house:h1"), attrs(&[]), "t"));
        assert!(matches!(same, Err(SdmError::TimeRegression { .. })));
    }

    #[test]
    fn duplicate_create_and_deleted_entity() {
        let mut s = h1_store();
        let dup = s.apply_event(EventRecord::create(3, 300, id("house:h1"), attrs(&[]), "t"));
        assert!(matches!(dup, Err(SdmError::DuplicateCreate(_))));
        s.apply_event(EventRecord::delete(3, 300, id("house:h1"), "t")).unwrap();
        let upd = s.apply_event(EventRecord::update(4, 400, id("house:h1"), attrs(&[]), "t"));
        assert!(matches!(upd, Err(SdmError::DeletedEntity(_))));
        let recreate = s.apply_event(EventRecord::create(4, 400, id("house:h1"), attrs(&[]), "t"));
        assert!(matches!(recreate, Err(SdmError::DuplicateCreate(_))));
    }

    #[test]
    fn as_of_queries() {
        let mut s = h1_store();
        let h1 = id("house:h1");
        assert_eq!(s.state_at(&h1, 150).unwrap().version, 1);
        assert_eq!(s.state_at(&h1, 150).unwrap().attr("owner"), Some(&Scalar::from("p1")));
        assert_eq!(s.state_at(&h1, 200).unwrap().version, 2);
        assert!(s.state_at(&h1, 50).is_none());
        s.apply_event(EventRecord::delete(3, 300, h1.clone(), "t")).unwrap();
        assert!(s.state_at(&h1, 300).is_none());
        assert!(s.state_at(&h1, 1_000).is_none());
        assert_eq!(s.state_at(&h1, 299).unwrap().version, 2);
    }

    #[test]
    fn replay_examples() {
        let s = h1_store();
        let snap = s.replay_range(0, 200).unwrap();
        assert_eq!(snap.states.len(), 1);
        assert_eq!(snap.states[&id("house:h1")].version, 2);
        assert!(s.replay_range(0, 99).unwrap().states.is_empty());
        assert!(matches!(s.replay_range(10, 5), Err(SdmError::InvalidRange { .. })));
        assert_eq!(s.replay_range(150, 250).unwrap().changed.len(), 1);
        assert!(s.replay_range(300, 400).unwrap().changed.is_empty());
    }

    fn family() -> Store {
        let mut s = Store::new();
        s.apply_event(EventRecord::create(1, 100, id("house:h1"), attrs(&[]), "t")).unwrap();
        s.apply_event(EventRecord::create(2, 100, id("person:p1"), attrs(&[]), "t")).unwrap();
        s.apply_event(EventRecord::relate(
            3,
            100,
            SemanticRelation::new(id("person:p1"), Predicate::LivesIn, id("house:h1"), 100),
            "t",
        ))
        .unwrap();
        s
    }

    #[test]
    fn relate_and_query_both_directions() {
        let s = family();
        let rel = SemanticRelation::new(id("person:p1"), Predicate::LivesIn, id("house:h1"), 100);
        assert_eq!(s.relations_of(&id("person:p1"), Some(Predicate::LivesIn), 150, Direction::Out), vec![rel.clone()]);
        assert_eq!(s.relations_of(&id("house:h1"), Some(Predicate::LivesIn), 150, Direction::In), vec![rel]);
        assert!(s.relations_of(&id("person:p1"), Some(Predicate::LivesIn), 50, Direction::Out).is_empty());
        assert!(s.relations_of(&id("person:p1"), Some(Predicate::Owns), 150, Direction::Out).is_empty());
    }

    #[test]
    fn self_relation_rejected() {
        let mut s = family();
        let r = SemanticRelation::new(id("person:p1"), Predicate::LivesIn, id("person:p1"), 200);
        assert!(matches!(s.apply_event(EventRecord::relate(4, 200, r, "t")), Err(SdmError::SelfRelation(_))));
    }

    #[test]
    fn relate_requires_live_endpoints() {
        let mut s = family();
        let r = SemanticRelation::new(id("person:p1"), Predicate::Owns, id("house:h7"), 200);
        assert!(matches!(s.apply_event(EventRecord::relate(4, 200, r, "t")), Err(SdmError::UnknownEntity(_))));
        let dup = SemanticRelation::new(id("person:p1"), Predicate::LivesIn, id("house:h1"), 200);
        assert!(matches!(s.apply_event(EventRecord::relate(4, 200, dup, "t")), Err(SdmError::DuplicateRelation)));
    }

    #[test]
    fn unrelate_closes_interval() {
        let mut s = family();
        let r = SemanticRelation::new(id("person:p1"), Predicate::LivesIn, id("house:h1"), 300);
        s.apply_event(EventRecord::unrelate(4, 300, r.clone(), "t")).unwrap();
        assert!(s.relations_of(&id("person:p1"), Some(Predicate::LivesIn), 350, Direction::Out).is_empty());
        assert_eq!(s.relations_of(&id("person:p1"), Some(Predicate::LivesIn), 299, Direction::Out).len(), 1);
        let again = s.apply_event(EventRecord::unrelate(5, 400, r, "t"));
        assert!(matches!(again, Err(SdmError::RelationNotFound)));
    }

    #[test]
    fn delete_closes_relations() {
        let mut s = family();
        s.apply_event(EventRecord::delete(4, 500, id("house:h1"), "t")).unwrap();
        assert!(s.relations_of(&id("person:p1"), None, 600, Direction::Out).is_empty());
        assert_eq!(s.relations_of(&id("person:p1"), None, 499, Direction::Out).len(), 1);
    }

    #[test]
    fn relation_events_do_not_bump_versions() {
        let s = family();
        assert_eq!(s.history(&id("person:p1")).len(), 1);
    }

    struct FailingSink;
    impl EventSink for FailingSink {
        fn append(&mut self, _: &EventRecord) -> Result<(), String> {
            Err("disk full".into())
        }
    }

    #[test]
    fn storage_failure_leaves_state_untouched() {
        let mut s = h1_store();
        let err = s
            .apply_event_with(EventRecord::update(3, 300, id("house:h1"), attrs(&[("owner", "p3")]), "t"), &mut FailingSink)
            .unwrap_err();
        assert!(matches!(err, SdmError::Storage(_)));
        assert_eq!(s.last_event_id(), 2);
        assert_eq!(s.state_at(&id("house:h1"), 400).unwrap().version, 2);
    }
}
