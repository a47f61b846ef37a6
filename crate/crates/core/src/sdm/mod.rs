//! Event-sourced spatiotemporal store.
//!
//! Events mutate attribute state, relations carry the semantics between
//! entities, and every state is scoped to a half-open validity interval.
//! Relations travel on the same log as attribute events.

mod household;
mod store;
mod types;

pub use household::{admin_chain, admin_path_of, household_record, AdminPath, HolographicRecord};
pub use store::{Direction, EventSink, Snapshot, Store};
pub use types::*;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SdmError {
    #[error("out-of-order event: expected id {expected}, got {got}")]
    OutOfOrderEvent { expected: u64, got: u64 },
    #[error("timestamp {got} precedes {last}")]
    TimeRegression { last: Millis, got: Millis },
    #[error("unknown entity {0}")]
    UnknownEntity(EntityId),
    #[error("entity {0} already created")]
    DuplicateCreate(EntityId),
    #[error("entity {0} is deleted")]
    DeletedEntity(EntityId),
    #[error("entity {0} cannot relate to itself")]
    SelfRelation(EntityId),
    #[error("relation already holds")]
    DuplicateRelation,
    #[error("no open relation to close")]
    RelationNotFound,
    #[error("{id} is not a {expected}")]
    WrongKind { id: EntityId, expected: EntityKind },
    #[error("invalid range [{from}, {to}]")]
    InvalidRange { from: Millis, to: Millis },
    #[error("invalid entity id '{0}'")]
    InvalidId(String),
    #[error("invalid payload: {0}")]
    InvalidPayload(String),
    #[error("storage failure: {0}")]
    Storage(String),
}
