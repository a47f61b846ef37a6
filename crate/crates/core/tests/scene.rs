mod support;

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use support::*;
use urbis_core::geo::BBox;
use urbis_core::scene::{tile_key_for, LayerTree, SceneCatalog, SceneObject, TileKey, MAX_MERCATOR_LAT};
use urbis_core::{EntityId, EntityKind};

fn tile_contains(k: &TileKey, lon: f64, lat: f64) -> bool {
    let b = k.bbox();
    b.min_lon <= lon && lon <= b.max_lon && b.min_lat <= lat && lat <= b.max_lat
}

proptest! {
    #![proptest_config(cases(2000))]

    #[test]
    fn containing_tile_round_trip(lon in -180.0f64..=180.0, lat in -MAX_MERCATOR_LAT..=MAX_MERCATOR_LAT, z in 0u8..=22) {
        let k = tile_key_for(&pt(lon, lat), z).unwrap();
        prop_assert!(tile_contains(&k, lon, lat), "{k:?} misses ({lon}, {lat})");
        prop_assert_eq!(TileKey::new(k.z, k.x, k.y).unwrap(), k);
        if let Some(parent) = k.parent() {
            prop_assert!(tile_contains(&parent, lon, lat));
        }
    }

    #[test]
    fn children_cover_parent(z in 0u8..22, fx in 0.0f64..1.0, fy in 0.0f64..1.0) {
        let n = 1u32 << z;
        let k = TileKey::new(z, ((fx * n as f64) as u32).min(n - 1), ((fy * n as f64) as u32).min(n - 1)).unwrap();
        let b = k.bbox();
        let kids = k.children().unwrap();
        for c in &kids {
            prop_assert_eq!(c.parent(), Some(k));
        }
        let [nw, ne, sw, se] = kids.map(|c| c.bbox());
        // outer edges coincide with the parent, inner edges are shared
        prop_assert_eq!((nw.min_lon, nw.max_lat, se.max_lon, se.min_lat), (b.min_lon, b.max_lat, b.max_lon, b.min_lat));
        prop_assert_eq!((sw.min_lon, ne.max_lat, ne.max_lon, sw.min_lat), (b.min_lon, b.max_lat, b.max_lon, b.min_lat));
        prop_assert_eq!(nw.max_lon, ne.min_lon);
        prop_assert_eq!(sw.max_lon, se.min_lon);
        prop_assert_eq!(nw.min_lat, sw.max_lat);
        prop_assert_eq!(ne.min_lat, se.max_lat);
        prop_assert_eq!(nw.max_lon, sw.max_lon);
        prop_assert_eq!(nw.min_lat, ne.min_lat);
    }
}

#[test]
fn round_trip_on_every_zoom() {
    let mut rng = StdRng::seed_from_u64(11);
    for _ in 0..10_000 {
        let (lon, lat) = (rng.gen_range(-180.0..=180.0), rng.gen_range(-MAX_MERCATOR_LAT..=MAX_MERCATOR_LAT));
        for z in 0..=18 {
            let k = tile_key_for(&pt(lon, lat), z).unwrap();
            assert!(tile_contains(&k, lon, lat), "z{z} ({lon}, {lat})");
        }
    }
}

// ---- manifests ----

const CITY: BBox = BBox { min_lon: 113.90, min_lat: 22.50, max_lon: 114.00, max_lat: 22.60 };

fn leaf_layers(tree: &LayerTree) -> Vec<String> {
    tree.layer_ids().filter(|l| tree.is_leaf(l)).map(str::to_string).collect()
}

fn catalog(rng: &mut StdRng, n: usize) -> SceneCatalog {
    let layers = leaf_layers(&LayerTree::skeleton());
    let kinds = [EntityKind::Building, EntityKind::House, EntityKind::RoadSegment, EntityKind::PowerNode, EntityKind::UrbanComponent];
    let objects = (0..n)
        .map(|i| {
            let kind = kinds[rng.gen_range(0..kinds.len())];
            let g = random_geometry(rng, &CITY, 0.002);
            let id = EntityId::new(kind, format!("o{i}")).unwrap();
            SceneObject::new(id, layers[rng.gen_range(0..layers.len())].clone(), g, 0.0, rng.gen_range(0.0..100.0))
        })
        .collect();
    SceneCatalog::bulk_load(objects).unwrap()
}

/// Visibility by walking the parent chain by hand.
fn visible(tree: &LayerTree, layer: &str) -> bool {
    let mut cur = tree.get(layer);
    while let Some(node) = cur {
        if !node.visible {
            return false;
        }
        cur = node.parent.as_deref().and_then(|p| tree.get(p));
    }
    true
}

fn random_tile(rng: &mut StdRng) -> TileKey {
    let z = rng.gen_range(10..=19);
    let (lon, lat) = random_xy(rng, &CITY);
    tile_key_for(&pt(lon, lat), z).unwrap()
}

fn expected(cat: &SceneCatalog, tree: &LayerTree, k: TileKey) -> Vec<EntityId> {
    let b = k.bbox();
    let mut ids: Vec<EntityId> = cat
        .objects()
        .filter(|o| o.lod_min_zoom <= k.z && visible(tree, &o.layer_id) && oracle_intersects(&o.geometry, &b))
        .map(|o| o.entity_id.clone())
        .collect();
    ids.sort();
    ids
}

#[test]
fn toggles_never_enlarge_manifests() {
    let mut rng = StdRng::seed_from_u64(5);
    let cat = catalog(&mut rng, 600);
    let tiles: Vec<TileKey> = (0..30).map(|_| random_tile(&mut rng)).collect();
    let all_layers: Vec<String> = cat.tree().layer_ids().map(str::to_string).collect();
    let mut tree = cat.tree().clone();
    let mut before: BTreeMap<TileKey, Vec<EntityId>> =
        tiles.iter().map(|&k| (k, cat.objects_for_tile(k, &tree, 0).ids().into_iter().collect())).collect();
    let mut nonempty = 0;
    for step in 0..100 {
        let layer = &all_layers[rng.gen_range(0..all_layers.len())];
        let on = rng.gen_bool(0.4);
        tree.set_visible(layer, on).unwrap();
        for &k in &tiles {
            let now: Vec<EntityId> = cat.objects_for_tile(k, &tree, step).ids().into_iter().collect();
            assert_eq!(now, expected(&cat, &tree, k), "tile {k:?} after step {step}");
            if !on {
                assert!(now.iter().all(|id| before[&k].binary_search(id).is_ok()), "turning {layer} off grew {k:?}");
            }
            nonempty += usize::from(!now.is_empty());
            before.insert(k, now);
        }
    }
    assert!(nonempty > 100, "manifests were almost always empty");
}

#[test]
fn hidden_layer_objects_never_appear() {
    let mut rng = StdRng::seed_from_u64(8);
    let cat = catalog(&mut rng, 300);
    for layer in leaf_layers(cat.tree()) {
        let mut tree = cat.tree().clone();
        tree.set_visible(&layer, false).unwrap();
        for _ in 0..20 {
            let k = random_tile(&mut rng);
            let m = cat.objects_for_tile(k, &tree, 0);
            assert!(m.objects.iter().all(|o| o.layer_id != layer));
            let full = cat.objects_for_tile(k, cat.tree(), 0);
            let removed = full.objects.iter().filter(|o| o.layer_id == layer).count();
            assert_eq!(full.objects.len() - m.objects.len(), removed);
        }
    }
}
