mod common;

use common::*;
use conddb::{
    interval_overlaps, Error, FolderPath, PartitionPolicy, Selector, Store, StoreStrategy, TimePoint, ValidityInterval,
};
use proptest::prelude::*;

const TOP: u64 = 300;

/// Intervals over `[0, TOP)`, with the occasional open end.
fn log_strategy(max: usize) -> impl Strategy<Value = Vec<(u64, u64)>> {
    prop::collection::vec(
        (0..TOP, 1..120u64, prop::bool::weighted(0.05)).prop_map(|(a, len, open)| (a, if open { u64::MAX } else { a + len })),
        1..max,
    )
}

fn grid() -> Vec<u64> {
    (1..TOP + 130).step_by(3).chain([u64::MAX - 1]).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn path_round_trip(segs in prop::collection::vec("[A-Za-z0-9_-]{1,12}", 0..5)) {
        let text = format!("/{}", segs.join("/"));
        let path = FolderPath::parse(&text).unwrap();
        prop_assert_eq!(path.to_string(), text.clone());
        prop_assert_eq!(FolderPath::parse(&path.to_string()).unwrap(), path);
    }

    #[test]
    fn overlap_is_symmetric_and_reflexive(a in 0..100u64, la in 1..50u64, b in 0..100u64, lb in 1..50u64) {
        let (x, y) = (iv(a, a + la), iv(b, b + lb));
        prop_assert_eq!(interval_overlaps(&x, &y), interval_overlaps(&y, &x));
        prop_assert!(interval_overlaps(&x, &x));
        prop_assert!(!interval_overlaps(&iv(a, a + la), &iv(a + la, a + la + lb)));
        prop_assert!(!x.contains(TimePoint::PLUS_INF));
    }

    #[test]
    fn find_matches_oracle_at_every_ceiling(log in log_strategy(120)) {
        let store = Store::memory();
        let dir = folder(&store, "x", StoreStrategy::Layered, PartitionPolicy::NONE);
        load(&store, &dir, &log);
        let oracle = Oracle::new(&log);
        for c in 0..=oracle.head() {
            for t in grid() {
                prop_assert_eq!(engine_find(&store, &dir, t, &Selector::AtSequence(c)), oracle.find(t, c), "t={} c={}", t, c);
            }
        }
    }

    #[test]
    fn legacy_head_equals_layered_head(log in log_strategy(120)) {
        let store = Store::memory();
        let layered = folder(&store, "layered", StoreStrategy::Layered, PartitionPolicy::NONE);
        let legacy = folder(&store, "legacy", StoreStrategy::LegacyTruncate, PartitionPolicy::NONE);
        load(&store, &layered, &log);
        load(&store, &legacy, &log);
        let s = store.begin_read();
        for t in grid() {
            let a = s.find_object(&layered, TimePoint(t), &Selector::Head).map(|v| (v.object.seq, v.effective));
            let b = s.find_object(&legacy, TimePoint(t), &Selector::Head).map(|v| (v.object.seq, v.effective));
            prop_assert_eq!(a.map_err(|e| e.name()), b.map_err(|e| e.name()));
        }
        let window = iv(40, 200);
        let shape = |f: &FolderPath| {
            s.browse_objects(f, window, &Selector::Head).unwrap().iter().map(|v| (v.effective, v.object.seq)).collect::<Vec<_>>()
        };
        prop_assert_eq!(shape(&layered), shape(&legacy));
    }

    #[test]
    fn browse_tiles_and_pieces_are_maximal(log in log_strategy(80), lo in 0..TOP, len in 1..400u64) {
        let store = Store::memory();
        let dirs = [
            folder(&store, "layered", StoreStrategy::Layered, PartitionPolicy::NONE),
            folder(&store, "legacy", StoreStrategy::LegacyTruncate, PartitionPolicy::NONE),
        ];
        let window = iv(lo, lo + len);
        for dir in &dirs {
            load(&store, dir, &log);
            let s = store.begin_read();
            let pieces = s.browse_objects(dir, window, &Selector::Head).unwrap();
            for pair in pieces.windows(2) {
                prop_assert!(pair[0].effective.till() <= pair[1].effective.since());
                if pair[0].effective.till() == pair[1].effective.since() {
                    prop_assert_ne!(pair[0].object.seq, pair[1].object.seq);
                }
            }
            for v in &pieces {
                prop_assert!(v.effective.since() >= window.since() && v.effective.till() <= window.till());
                let (a, b) = (v.effective.since().0, v.effective.till().0);
                for t in [a, (a + b) / 2, b - 1] {
                    if t == 0 || t == u64::MAX {
                        continue;
                    }
                    let found = s.find_object(dir, TimePoint(t), &Selector::Head).unwrap();
                    prop_assert_eq!(found.object.seq, v.object.seq);
                    // find reports the unclipped piece, a superset of the browse piece
                    prop_assert!(found.effective.since() <= v.effective.since());
                    prop_assert!(found.effective.till() >= v.effective.till());
                    // maximality: one tick past either end resolves elsewhere
                    let e = found.effective;
                    for probe in [e.since().0.checked_sub(1), Some(e.till().0)].into_iter().flatten() {
                        if probe == 0 || probe == u64::MAX {
                            continue;
                        }
                        let other = engine_find(&store, dir, probe, &Selector::Head);
                        prop_assert_ne!(other, Some(found.object.seq), "{} extends to {}", e, probe);
                    }
                }
            }
        }
    }

    #[test]
    fn tag_reads_survive_later_stores(log in log_strategy(60), later in log_strategy(60), at_seq in any::<prop::sample::Index>()) {
        let store = Store::memory();
        let dir = folder(&store, "x", StoreStrategy::Layered, PartitionPolicy::NONE);
        load(&store, &dir, &log);
        let pinned = at_seq.index(log.len()) as u64 + 1;
        let mut s = store.begin_update().unwrap();
        s.tag_head(std::slice::from_ref(&dir), "head").unwrap();
        s.tag_at_sequence(&dir, pinned, "pinned").unwrap();
        s.commit().unwrap();
        let reads = |store: &Store| {
            let s = store.begin_read();
            let mut out = Vec::new();
            for tag in ["head", "pinned"] {
                let sel = Selector::Tag(tag.into());
                for t in grid() {
                    out.push(format!("{:?}", s.find_object(&dir, TimePoint(t), &sel).map(|v| (v.object.seq, v.effective, v.object.payload.to_csv())).map_err(|e| e.name())));
                }
                out.push(format!("{:?}", s.browse_objects(&dir, ValidityInterval::all(), &sel).unwrap().iter().map(|v| (v.object.seq, v.effective)).collect::<Vec<_>>()));
            }
            out
        };
        let before = reads(&store);
        load(&store, &dir, &later);
        prop_assert_eq!(reads(&store), before);
    }

    #[test]
    fn sequences_increase_across_aborts(sessions in prop::collection::vec((1..5usize, any::<bool>()), 1..12)) {
        let store = Store::memory();
        let dir = folder(&store, "x", StoreStrategy::Layered, PartitionPolicy::NONE);
        let mut last = 0;
        let mut committed = 0;
        for (n, commit) in sessions {
            let mut s = store.begin_update().unwrap();
            for _ in 0..n {
                let seq = s.store_object(&dir, iv(1, 2), f(0.0)).unwrap();
                prop_assert!(seq > last);
                last = seq;
            }
            if commit {
                s.commit().unwrap();
                committed += n as u64;
            } else {
                s.abort().unwrap();
            }
        }
        let d = store.begin_read().describe_folder(&dir).unwrap();
        prop_assert_eq!(d.count, committed);
    }
}

#[test]
fn future_ceiling_is_an_error() {
    let store = Store::memory();
    let dir = folder(&store, "x", StoreStrategy::Layered, PartitionPolicy::NONE);
    load(&store, &dir, &[(1, 5)]);
    let err = store.begin_read().find_object(&dir, TimePoint(2), &Selector::AtSequence(2)).unwrap_err();
    assert!(matches!(err, Error::SequenceInFuture { requested: 2, head: 1, .. }), "{err}");
}
