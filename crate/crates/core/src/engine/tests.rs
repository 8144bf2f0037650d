use super::*;
use crate::storage::OpenOptions;

fn p(s: &str) -> FolderPath {
    FolderPath::parse(s).unwrap()
}

fn iv(a: u64, b: u64) -> ValidityInterval {
    ValidityInterval::new(a, b).unwrap()
}

fn f(x: f64) -> PayloadValue {
    PayloadValue(vec![Value::Float64(x)])
}

fn gain() -> PayloadSchema {
    PayloadSchema::parse("gain:float64").unwrap()
}

fn with_folder(strategy: StoreStrategy) -> (Store, FolderPath) {
    let store = Store::memory();
    let mut s = store.begin_update().unwrap();
    s.create_folderset(&p("/calib"), "calibration").unwrap();
    s.create_folder(&p("/calib/ecal"), &gain(), PartitionPolicy::NONE, strategy, "").unwrap();
    s.commit().unwrap();
    (store, p("/calib/ecal"))
}

fn gain_of(v: &Visible) -> f64 {
    match v.object.payload.values()[0] {
        Value::Float64(x) => x,
        ref other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn latest_wins_with_effective_intervals() {
    let (store, ecal) = with_folder(StoreStrategy::Layered);
    let mut s = store.begin_update().unwrap();
    assert_eq!(s.store_object(&ecal, iv(0, 10), f(1.0)).unwrap(), 1);
    assert_eq!(s.store_object(&ecal, iv(5, 15), f(2.0)).unwrap(), 2);
    s.commit().unwrap();

    let r = store.begin_read();
    let at7 = r.find_object(&ecal, TimePoint(7), &Selector::Head).unwrap();
    assert_eq!((gain_of(&at7), at7.effective), (2.0, iv(5, 15)));
    let at3 = r.find_object(&ecal, TimePoint(3), &Selector::Head).unwrap();
    assert_eq!((gain_of(&at3), at3.effective), (1.0, iv(0, 5)));
    assert_eq!(r.find_object(&ecal, TimePoint(20), &Selector::Head).unwrap_err().name(), "NoValidObject");
    assert_eq!(r.find_object(&ecal, TimePoint::PLUS_INF, &Selector::Head).unwrap_err().name(), "InvalidTime");

    let all = r.browse_objects(&ecal, iv(0, 20), &Selector::Head).unwrap();
    let shape: Vec<_> = all.iter().map(|v| (v.effective, v.object.seq)).collect();
    assert_eq!(shape, vec![(iv(0, 5), 1), (iv(5, 15), 2)]);
    assert!(r.browse_objects(&ecal, iv(100, 200), &Selector::Head).unwrap().is_empty());

    let old = r.find_object(&ecal, TimePoint(7), &Selector::AtSequence(1)).unwrap();
    assert_eq!((old.object.seq, old.effective), (1, iv(0, 10)));
    assert_eq!(r.find_object(&ecal, TimePoint(7), &Selector::AtSequence(3)).unwrap_err().name(), "SequenceInFuture");
}

#[test]
fn legacy_truncates_and_refuses_time_travel() {
    let (store, ecal) = with_folder(StoreStrategy::LegacyTruncate);
    let mut s = store.begin_update().unwrap();
    s.store_object(&ecal, iv(0, 10), f(1.0)).unwrap();
    s.store_object(&ecal, iv(5, 15), f(2.0)).unwrap();
    s.commit().unwrap();
    let r = store.begin_read();
    let shape: Vec<_> = r
        .browse_objects(&ecal, ValidityInterval::all(), &Selector::Head)
        .unwrap()
        .iter()
        .map(|v| (v.effective, v.object.seq))
        .collect();
    assert_eq!(shape, vec![(iv(0, 5), 1), (iv(5, 15), 2)]);
    let err = r.find_object(&ecal, TimePoint(3), &Selector::AtSequence(1)).unwrap_err();
    assert_eq!(err.name(), "UnsupportedByStrategy");
    let mut s = store.begin_update().unwrap();
    assert_eq!(s.tag_head(std::slice::from_ref(&ecal), "v1").unwrap_err().name(), "UnsupportedByStrategy");
}

#[test]
fn catalog_errors() {
    let (store, _) = with_folder(StoreStrategy::Layered);
    let mut s = store.begin_update().unwrap();
    assert_eq!(s.create_folderset(&p("/calib"), "").unwrap_err().name(), "AlreadyExists");
    assert_eq!(s.create_folderset(&p("/calib/ecal/x"), "").unwrap_err().name(), "ParentNotFolderset");
    assert_eq!(s.create_folderset(&p("/nope/x"), "").unwrap_err().name(), "NoSuchParent");
    assert_eq!(s.describe_folder(&p("/calib")).unwrap_err().name(), "NoSuchFolder");
    let legacy_part = s.create_folder(&p("/calib/x"), &gain(), PartitionPolicy::time(10).unwrap(), StoreStrategy::LegacyTruncate, "");
    assert_eq!(legacy_part.unwrap_err().name(), "UnsupportedByStrategy");
    let d = s.describe_folder(&p("/calib/ecal")).unwrap();
    assert_eq!(d.schema, gain());
    assert_eq!((d.count, d.max_seq), (0, 0));
    let listing: Vec<String> = s.list(&FolderPath::root(), true).unwrap().iter().map(|n| n.path.to_string()).collect();
    assert_eq!(listing, vec!["/calib", "/calib/ecal"]);
    assert_eq!(s.list(&FolderPath::root(), false).unwrap().len(), 1);
}

#[test]
fn describe_counts_after_stores() {
    let (store, ecal) = with_folder(StoreStrategy::Layered);
    let mut s = store.begin_update().unwrap();
    for i in 0..3 {
        s.store_object(&ecal, iv(i, i + 1), f(0.0)).unwrap();
    }
    s.commit().unwrap();
    let d = store.begin_read().describe_folder(&ecal).unwrap();
    assert_eq!((d.count, d.max_seq), (3, 3));
}

#[test]
fn tags_pin_sequences() {
    let (store, ecal) = with_folder(StoreStrategy::Layered);
    let mut s = store.begin_update().unwrap();
    s.store_object(&ecal, iv(0, 10), f(1.0)).unwrap();
    s.tag_head(std::slice::from_ref(&ecal), "v1").unwrap();
    s.store_object(&ecal, iv(0, 10), f(2.0)).unwrap();
    assert_eq!(s.tag_head(std::slice::from_ref(&ecal), "v1").unwrap_err().name(), "TagExists");
    s.tag_at_sequence(&ecal, 0, "empty").unwrap();
    assert_eq!(s.tag_at_sequence(&ecal, 9, "future").unwrap_err().name(), "SequenceInFuture");
    s.commit().unwrap();

    let r = store.begin_read();
    let hit = r.find_object(&ecal, TimePoint(5), &Selector::Tag("v1".into())).unwrap();
    assert_eq!(gain_of(&hit), 1.0);
    assert!(r.browse_objects(&ecal, ValidityInterval::all(), &Selector::Tag("empty".into())).unwrap().is_empty());
    assert_eq!(r.find_object(&ecal, TimePoint(5), &Selector::Tag("nope".into())).unwrap_err().name(), "NoSuchTag");
    let names: Vec<_> = r.list_tags().unwrap().into_iter().map(|t| t.name).collect();
    assert_eq!(names, vec!["empty", "v1"]);
    assert_eq!(r.resolve_tag("v1").unwrap().entries[&ecal], 1);
    assert_eq!(r.resolve_tag("nope").unwrap_err().name(), "NoSuchTag");
}

#[test]
fn sessions_isolate_and_abort_burns_sequences() {
    let (store, ecal) = with_folder(StoreStrategy::Layered);
    let reader = store.begin_read();
    let mut w = store.begin_update().unwrap();
    assert_eq!(store.begin_update().unwrap_err().name(), "UpdateSessionBusy");
    assert_eq!(w.store_object(&ecal, iv(0, 10), f(1.0)).unwrap(), 1);
    // the writer sees its own object, nobody else does
    assert!(w.find_object(&ecal, TimePoint(1), &Selector::Head).is_ok());
    assert!(store.begin_read().find_object(&ecal, TimePoint(1), &Selector::Head).is_err());
    w.abort().unwrap();
    assert_eq!(w.store_object(&ecal, iv(0, 1), f(0.0)).unwrap_err().name(), "SessionClosed");

    let mut w = store.begin_update().unwrap();
    assert!(w.find_object(&ecal, TimePoint(1), &Selector::Head).is_err());
    assert_eq!(w.store_object(&ecal, iv(0, 10), f(2.0)).unwrap(), 2);
    w.commit().unwrap();
    assert!(reader.find_object(&ecal, TimePoint(1), &Selector::Head).is_err());
    assert_eq!(store.begin_read().find_object(&ecal, TimePoint(1), &Selector::Head).unwrap().object.seq, 2);

    let mut w = store.begin_update().unwrap();
    w.store_object(&ecal, iv(0, 10), f(3.0)).unwrap();
    drop(w);
    let mut w = store.begin_update().unwrap();
    assert_eq!(w.store_object(&ecal, iv(0, 10), f(4.0)).unwrap(), 4);
    assert_eq!(store.begin_read().describe_folder(&ecal).unwrap().count, 1);
}

#[test]
fn read_sessions_cannot_write() {
    let (store, ecal) = with_folder(StoreStrategy::Layered);
    let mut r = store.begin_read();
    assert_eq!(r.store_object(&ecal, iv(0, 1), f(0.0)).unwrap_err().name(), "NoUpdateSession");
    assert_eq!(r.create_folderset(&p("/x"), "").unwrap_err().name(), "NoUpdateSession");
    r.commit().unwrap();
    assert_eq!(r.list_tags().unwrap_err().name(), "SessionClosed");
}

#[test]
fn schema_is_enforced() {
    let (store, ecal) = with_folder(StoreStrategy::Layered);
    let mut s = store.begin_update().unwrap();
    let bad = PayloadValue(vec![Value::String("a".into())]);
    assert!(matches!(s.store_object(&ecal, iv(0, 1), bad), Err(Error::SchemaMismatch { position: 0, .. })));
}

#[test]
fn tiny_step_semantics() {
    let store = Store::memory();
    let hv = p("/hv");
    let mut s = store.begin_update().unwrap();
    s.create_tiny_folder(&hv, &PayloadSchema::parse("v:float64").unwrap(), PartitionPolicy::NONE, "").unwrap();
    s.tiny_append(&hv, TimePoint(100), &Value::Float64(3.5)).unwrap();
    s.tiny_append(&hv, TimePoint(200), &Value::Float64(2.5)).unwrap();
    assert_eq!(s.tiny_append(&hv, TimePoint(150), &Value::Float64(1.0)).unwrap_err().name(), "OutOfOrder");
    assert_eq!(s.tiny_append(&hv, TimePoint(300), &Value::Int64(1)).unwrap_err().name(), "SchemaMismatch");
    s.commit().unwrap();
    let r = store.begin_read();
    let a = r.tiny_read(&hv, TimePoint(150)).unwrap();
    assert_eq!((a.value, a.effective), (Value::Float64(3.5), iv(100, 200)));
    let b = r.tiny_read(&hv, TimePoint(200)).unwrap();
    assert_eq!((b.value, b.effective), (Value::Float64(2.5), iv(200, u64::MAX)));
    assert_eq!(r.tiny_read(&hv, TimePoint(50)).unwrap_err().name(), "NoValidObject");
    let scan: Vec<u64> = r.tiny_scan(&hv, iv(150, 250)).unwrap().iter().map(|s| s.0 .0).collect();
    assert_eq!(scan, vec![100, 200]);
    assert!(r.tiny_scan(&hv, iv(1, 50)).unwrap().is_empty());
    let bad = store.begin_update().unwrap().create_tiny_folder(&p("/x"), &gain(), PartitionPolicy::version(3).unwrap(), "");
    assert_eq!(bad.unwrap_err().name(), "InvalidArgument");
}

#[test]
fn partitions_route_and_go_offline() {
    let store = Store::memory();
    let part = p("/part");
    let mut s = store.begin_update().unwrap();
    s.create_folder(&part, &gain(), PartitionPolicy::time(1000).unwrap(), StoreStrategy::Layered, "").unwrap();
    s.store_object(&part, iv(900, 1100), f(1.0)).unwrap();
    s.store_object(&part, iv(2500, 2600), f(2.0)).unwrap();
    s.commit().unwrap();
    let r = store.begin_read();
    assert_eq!(gain_of(&r.find_object(&part, TimePoint(1050), &Selector::Head).unwrap()), 1.0);
    let before = store.stats().partition_probes;
    assert_eq!(r.find_object(&part, TimePoint(500), &Selector::Head).unwrap_err().name(), "NoValidObject");
    assert_eq!(store.stats().partition_probes, before);

    let chunk = store.export_partition(&part, 0).unwrap();
    store.evict_partition(&part, 0).unwrap();
    assert_eq!(r.find_object(&part, TimePoint(1050), &Selector::Head).unwrap_err().name(), "PartitionOffline");
    assert_eq!(gain_of(&r.find_object(&part, TimePoint(2550), &Selector::Head).unwrap()), 2.0);
    assert_eq!(store.evict_partition(&part, 0).unwrap_err().name(), "PartitionOffline");
    assert_eq!(store.evict_partition(&part, 7).unwrap_err().name(), "NoSuchPartition");
    let mut w = store.begin_update().unwrap();
    assert_eq!(w.store_object(&part, iv(10, 20), f(0.0)).unwrap_err().name(), "PartitionOffline");
    w.abort().unwrap();

    let mut other = chunk.clone();
    other.policy = PartitionPolicy::time(500).unwrap();
    assert_eq!(store.import_partition(&part, &other).unwrap_err().name(), "ChunkMismatch");
    store.import_partition(&part, &chunk).unwrap();
    assert_eq!(store.import_partition(&part, &chunk).unwrap_err().name(), "ChunkMismatch");
    assert_eq!(gain_of(&store.begin_read().find_object(&part, TimePoint(1050), &Selector::Head).unwrap()), 1.0);
    assert_eq!(store.begin_read().describe_folder(&part).unwrap().count, 2);
}

#[test]
fn checkpoint_needs_writer_role() {
    let (store, _) = with_folder(StoreStrategy::Layered);
    store.checkpoint().unwrap();
    let s = store.begin_update().unwrap();
    assert_eq!(store.checkpoint().unwrap_err().name(), "UpdateSessionBusy");
    drop(s);
    store.checkpoint().unwrap();
}

#[test]
fn file_store_survives_reopen_and_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let ecal = p("/ecal");
    {
        let store = Store::open(dir.path(), OpenOptions::default()).unwrap();
        let mut s = store.begin_update().unwrap();
        s.create_folder(&ecal, &gain(), PartitionPolicy::NONE, StoreStrategy::Layered, "").unwrap();
        for i in 0..40 {
            s.store_object(&ecal, iv(i, i + 5), f(i as f64)).unwrap();
        }
        s.commit().unwrap();
        let mut s = store.begin_update().unwrap();
        s.store_object(&ecal, iv(0, 1), f(0.0)).unwrap();
        s.abort().unwrap();
    }
    let probe = |store: &Store| {
        let r = store.begin_read();
        (0..50).map(|t| r.find_object(&ecal, TimePoint(t), &Selector::Head).ok()).collect::<Vec<_>>()
    };
    let store = Store::open(dir.path(), OpenOptions::default()).unwrap();
    assert_eq!(store.stats().replayed_records, 40);
    let expected = probe(&store);
    {
        let mut s = store.begin_update().unwrap();
        assert_eq!(s.store_object(&ecal, iv(100, 101), f(0.0)).unwrap(), 42);
        s.abort().unwrap();
    }
    store.checkpoint().unwrap();
    drop(store);
    let store = Store::open(dir.path(), OpenOptions::default()).unwrap();
    assert_eq!(store.stats().replayed_records, 0);
    assert_eq!(store.stats().images_loaded, 1);
    assert_eq!(probe(&store), expected);
    let mut s = store.begin_update().unwrap();
    assert_eq!(s.store_object(&ecal, iv(100, 101), f(0.0)).unwrap(), 43);
}

#[test]
fn store_is_shareable() {
    fn assert_send_sync<T: Send + Sync>() {}
    fn assert_send<T: Send>() {}
    assert_send_sync::<Store>();
    assert_send::<Session>();
    assert_send_sync::<CondObject>();
}
