//! Every route returns exactly what the library computes directly.

use serde_json::{json, Value};
use urbis_core::analytics::{composition, heat_grid, locate, CategoryMap};
use urbis_core::api::{ApiRequest, Service};
use urbis_core::dataset::City;
use urbis_core::gen::{generate_city, GenSpec};
use urbis_core::sdm::household_record;
use urbis_core::{EntityKind, Store};

fn city() -> City {
    let mut spec = GenSpec::default();
    spec.counts.apply("buildings=40,persons=150").unwrap();
    let g = generate_city(&spec).unwrap();
    let store = Store::from_events(g.events).unwrap();
    let mut city = City::assemble(store, g.features).unwrap();
    city.traffic.ingest_batch(&g.samples).unwrap();
    city
}

fn get(svc: &Service, target: &str) -> Value {
    let r = svc.route_request(&ApiRequest::get(target));
    assert_eq!(r.status, 200, "{target}: {}", r.body);
    r.value()
}

#[test]
fn routes_agree_with_library_calls() {
    let city = city();
    let reference = city.clone();
    let svc = Service::new(city);
    let store = &reference.store;
    let t = store.last_timestamp().unwrap();

    for house in store.ids_of_kind(EntityKind::House).iter().take(10) {
        let via_api = get(&svc, &format!("/entities/{house}/holographic"));
        assert_eq!(via_api, serde_json::to_value(household_record(store, house, t).unwrap()).unwrap());
    }

    let persons: Vec<_> = store.ids_of_kind(EntityKind::Person).into_iter().filter(|p| store.is_live_at(p, t)).collect();
    for attr in ["age", "education", "nationality", "marriage", "employment"] {
        let direct = composition(store, &persons, attr, &CategoryMap::default_for(attr), t);
        assert_eq!(get(&svc, &format!("/stats/composition?attr={attr}")), serde_json::to_value(direct).unwrap());
    }

    let b = reference.catalog.index().admin_footprint(&"admin_region:d1".parse().unwrap()).unwrap().bbox();
    let pts: Vec<_> = persons
        .iter()
        .filter_map(|p| locate(store, reference.catalog.index(), p, t))
        .filter(|p| b.contains(p))
        .collect();
    assert!(!pts.is_empty());
    let grid = heat_grid(&pts, &b, 0.01, 1.0).unwrap();
    let target = format!("/heatmap?bbox={},{},{},{}&cell=0.01&sigma=1", b.min_lon, b.min_lat, b.max_lon, b.max_lat);
    assert_eq!(get(&svc, &target), serde_json::to_value(grid).unwrap());

    let t0 = reference.traffic.latest_sample_time().unwrap() - 9 * 60_000;
    let frames = reference.traffic.replay_frames(t0, t0 + 9 * 60_000, 60_000).unwrap();
    assert_eq!(frames.len(), 10);
    let via_api = get(&svc, &format!("/traffic/history?from={t0}&to={}&step=60000", t0 + 9 * 60_000));
    assert_eq!(via_api, json!({ "frames": frames }));
}

#[test]
fn posted_events_are_visible_to_reads() {
    let svc = Service::new(city());
    let (id, ts) = svc.read(|c| (c.store.last_event_id(), c.store.last_timestamp().unwrap()));
    let body = json!({
        "event_id": id + 1, "timestamp": ts + 1, "entity_id": "person:p00001",
        "event_type": "Update", "payload": {"age": 99}, "source": "test"
    });
    let r = svc.route_request(&ApiRequest::post("/events", body.to_string()));
    assert_eq!(r.status, 201, "{}", r.body);
    let e = get(&svc, "/entities/person:p00001");
    assert_eq!(e["state"]["attributes"]["age"], json!(99.0));
    // replays are rejected without side effects
    let again = svc.route_request(&ApiRequest::post("/events", body.to_string()));
    assert_eq!(again.status, 409);
    assert_eq!(svc.read(|c| c.store.last_event_id()), id + 1);
}
