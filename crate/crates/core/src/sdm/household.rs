//! The joined per-household view: house, building, owner, residents,
//! administrative path and open urban events in the same grid cell.

use serde::{Deserialize, Serialize};

use super::store::{Direction, Store};
use super::types::*;
use super::SdmError;

/// District, street, community and grid cell, outermost first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AdminPath {
    pub district: EntityId,
    pub street: EntityId,
    pub community: EntityId,
    pub grid_cell: EntityId,
}

impl AdminPath {
    pub fn levels(&self) -> [&EntityId; 4] {
        [&self.district, &self.street, &self.community, &self.grid_cell]
    }

    /// True when `prefix` (outermost first) matches the leading levels.
    pub fn starts_with(&self, prefix: &[EntityId]) -> bool {
        prefix.len() <= 4 && prefix.iter().zip(self.levels()).all(|(a, b)| a == b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolographicRecord {
    pub as_of: Millis,
    pub house: StateRecord,
    pub building: Option<StateRecord>,
    pub owner: Option<StateRecord>,
    pub residents: Vec<StateRecord>,
    pub admin_path: Option<AdminPath>,
    pub open_events: Vec<StateRecord>,
}

/// Follows `LocatedIn` edges upward from `start` through admin regions.
pub fn admin_chain(store: &Store, start: &EntityId, t: Millis) -> Vec<EntityId> {
    let mut chain = Vec::new();
    let mut cur = start.clone();
    while chain.len() < 8 {
        let next = store
            .neighbors(&cur, Predicate::LocatedIn, t, Direction::Out)
            .into_iter()
            .find(|id| id.kind() == EntityKind::AdminRegion);
        match next {
            Some(n) => {
                chain.push(n.clone());
                cur = n;
            }
            None => break,
        }
    }
    chain
}

/// Admin path of an entity located (directly or through its building) in a grid cell.
pub fn admin_path_of(store: &Store, id: &EntityId, t: Millis) -> Option<AdminPath> {
    let mut chain = admin_chain(store, id, t);
    if chain.is_empty() {
        for parent in store.neighbors(id, Predicate::PartOf, t, Direction::Out) {
            chain = admin_chain(store, &parent, t);
            if !chain.is_empty() {
                break;
            }
        }
    }
    match <[EntityId; 4]>::try_from(chain) {
        Ok([grid_cell, community, street, district]) => Some(AdminPath { district, street, community, grid_cell }),
        Err(_) => None,
    }
}

pub fn household_record(store: &Store, house: &EntityId, t: Millis) -> Result<HolographicRecord, SdmError> {
    if house.kind() != EntityKind::House {
        return Err(SdmError::WrongKind { id: house.clone(), expected: EntityKind::House });
    }
    let house_state = store.state_at(house, t).ok_or_else(|| SdmError::UnknownEntity(house.clone()))?;
    let state = |id: &EntityId| store.state_at(id, t).cloned();

    let building = store
        .neighbors(house, Predicate::PartOf, t, Direction::Out)
        .iter()
        .find(|id| id.kind() == EntityKind::Building)
        .and_then(state);
    let owner = store.neighbors(house, Predicate::Owns, t, Direction::In).first().and_then(state);
    let residents = store
        .neighbors(house, Predicate::LivesIn, t, Direction::In)
        .iter()
        .filter_map(state)
        .collect();
    let admin_path = admin_path_of(store, house, t);
    let open_events = admin_path
        .as_ref()
        .map(|p| {
            store
                .neighbors(&p.grid_cell, Predicate::LocatedIn, t, Direction::In)
                .iter()
                .filter(|id| id.kind() == EntityKind::UrbanEvent)
                .filter_map(state)
                .collect()
        })
        .unwrap_or_default();

    Ok(HolographicRecord { as_of: t, house: house_state.clone(), building, owner, residents, admin_path, open_events })
}
