mod support;

use std::fs::OpenOptions;
use std::io::Write;

use rand::rngs::StdRng;
use rand::SeedableRng;
use support::*;
use urbis_core::persist::{recover, FlushPolicy, PersistError};
use urbis_core::Store;

#[test]
fn ten_thousand_appends_survive_a_reopen() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.jsonl");
    let events = random_events(&mut StdRng::seed_from_u64(2), 10_000, 200);
    {
        let mut rec = recover(&path, FlushPolicy::default()).unwrap();
        for e in &events {
            rec.store.apply_event_with(e.clone(), &mut rec.log).unwrap();
        }
        assert_eq!(rec.log.appended(), 10_000);
        // dropped without an explicit sync
    }
    let again = recover(&path, FlushPolicy::default()).unwrap();
    assert!(!again.torn_tail);
    let direct = Store::from_events(events.iter().cloned()).unwrap();
    let t = direct.last_timestamp().unwrap();
    assert_eq!(again.store.events(), direct.events());
    assert_eq!(again.store.snapshot_at(t), direct.snapshot_at(t));
}

#[test]
fn torn_tail_is_cut_and_appends_resume() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.jsonl");
    let events = random_events(&mut StdRng::seed_from_u64(3), 300, 20);
    {
        let mut rec = recover(&path, FlushPolicy::default()).unwrap();
        for e in &events[..200] {
            rec.store.apply_event_with(e.clone(), &mut rec.log).unwrap();
        }
        rec.log.sync().unwrap();
    }
    let good_len = std::fs::metadata(&path).unwrap().len();
    let half = events[200].to_line();
    OpenOptions::new().append(true).open(&path).unwrap().write_all(&half.as_bytes()[..half.len() / 2]).unwrap();

    let mut rec = recover(&path, FlushPolicy::default()).unwrap();
    assert!(rec.torn_tail);
    assert_eq!(rec.store.last_event_id(), 200);
    assert_eq!(std::fs::metadata(&path).unwrap().len(), good_len);
    for e in &events[200..] {
        rec.store.apply_event_with(e.clone(), &mut rec.log).unwrap();
    }
    drop(rec);
    let last = recover(&path, FlushPolicy::default()).unwrap();
    assert!(!last.torn_tail);
    assert_eq!(last.store.events(), &events[..]);
}

#[test]
fn damaged_middle_line_is_reported_with_its_number() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.jsonl");
    let events = random_events(&mut StdRng::seed_from_u64(4), 10, 3);
    let mut text: Vec<String> = events.iter().map(|e| e.to_line()).collect();
    text[6] = "{\"event_id\": oops}".into();
    std::fs::write(&path, text.join("\n") + "\n").unwrap();
    match recover(&path, FlushPolicy::default()) {
        Err(PersistError::CorruptLog { line, .. }) => assert_eq!(line, 7),
        other => panic!("expected a corrupt-log error, got {:?}", other.map(|r| r.torn_tail)),
    }
}
