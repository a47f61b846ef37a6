//! Fixtures shared by the benchmarks.

use urbis_core::dataset::City;
use urbis_core::gen::{generate_city, GenSpec};
use urbis_core::{EventRecord, Store};

/// A generated city with `buildings` buildings and two households each.
pub fn city(buildings: u32) -> (Vec<EventRecord>, City) {
    let mut spec = GenSpec::default();
    spec.counts.buildings = buildings;
    let g = generate_city(&spec).expect("default spec is valid");
    let store = Store::from_events(g.events.iter().cloned()).expect("generated log replays");
    let mut city = City::assemble(store, g.features).expect("generated geometry is valid");
    city.traffic.ingest_batch(&g.samples).expect("generated samples match roads");
    (g.events, city)
}
