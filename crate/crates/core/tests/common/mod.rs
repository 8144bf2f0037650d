#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use conddb::conformance::dump;
use conddb::{
    FolderPath, Kind, OpenOptions, PartitionPolicy, PayloadSchema, PayloadValue, Selector, Store, StoreStrategy,
    TimePoint, ValidityInterval, Value,
};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn p(s: &str) -> FolderPath {
    FolderPath::parse(s).unwrap()
}

pub fn iv(a: u64, b: u64) -> ValidityInterval {
    ValidityInterval::new(a, b).unwrap()
}

pub fn f(x: f64) -> PayloadValue {
    PayloadValue(vec![Value::Float64(x)])
}

pub fn gain() -> PayloadSchema {
    PayloadSchema::single("gain", Kind::Float64).unwrap()
}

/// Creates `/t/<name>` (and `/t` if needed) and returns its path.
pub fn folder(store: &Store, name: &str, strategy: StoreStrategy, policy: PartitionPolicy) -> FolderPath {
    let mut s = store.begin_update().unwrap();
    if s.list(&p("/t"), false).is_err() {
        s.create_folderset(&p("/t"), "").unwrap();
    }
    let path = p(&format!("/t/{name}"));
    s.create_folder(&path, &gain(), policy, strategy, "").unwrap();
    s.commit().unwrap();
    path
}

/// Stores every interval of `log` in one session; object `i` carries
/// payload `i` and gets sequence `i + 1` in a fresh folder.
pub fn load(store: &Store, folder: &FolderPath, log: &[(u64, u64)]) -> Vec<u64> {
    let mut s = store.begin_update().unwrap();
    let seqs = log.iter().enumerate().map(|(i, &(a, b))| s.store_object(folder, iv(a, b), f(i as f64)).unwrap()).collect();
    s.commit().unwrap();
    seqs
}

/// Brute-force latest-wins resolution over an append log.
pub struct Oracle {
    /// `(since, till, seq)` in store order.
    pub objects: Vec<(u64, u64, u64)>,
}

impl Oracle {
    pub fn new(log: &[(u64, u64)]) -> Self {
        Oracle { objects: log.iter().enumerate().map(|(i, &(a, b))| (a, b, i as u64 + 1)).collect() }
    }

    /// Highest sequence at or below `ceiling` whose interval contains `t`.
    pub fn find(&self, t: u64, ceiling: u64) -> Option<u64> {
        self.objects.iter().rev().filter(|o| o.2 <= ceiling).find(|o| o.0 <= t && t < o.1).map(|o| o.2)
    }

    pub fn head(&self) -> u64 {
        self.objects.len() as u64
    }
}

/// Sequence answered by the engine, `None` on `NoValidObject`.
pub fn engine_find(store: &Store, folder: &FolderPath, t: u64, sel: &Selector) -> Option<u64> {
    match store.begin_read().find_object(folder, TimePoint(t), sel) {
        Ok(v) => Some(v.object.seq),
        Err(conddb::Error::NoValidObject { .. }) => None,
        Err(e) => panic!("find {folder} at {t}: {e}"),
    }
}

/// Every find and browse answer on a grid of times and ceilings.
pub fn answers(store: &Store, folder: &FolderPath, times: &[u64], ceilings: &[u64]) -> Vec<String> {
    let s = store.begin_read();
    let mut out = Vec::new();
    for &c in ceilings {
        let sel = Selector::AtSequence(c);
        for &t in times {
            out.push(match s.find_object(folder, TimePoint(t), &sel) {
                Ok(v) => format!("{t}@{c}: {} {}", v.object.seq, v.effective),
                Err(e) => format!("{t}@{c}: {}", e.name()),
            });
        }
        let b = s.browse_objects(folder, ValidityInterval::all(), &sel).unwrap();
        out.push(format!("browse@{c}: {:?}", b.iter().map(|v| (v.effective, v.object.seq)).collect::<Vec<_>>()));
    }
    out
}

pub fn log_sizes(dir: &Path) -> BTreeMap<String, u64> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_name().to_string_lossy().ends_with(".log"))
        .map(|e| (e.file_name().to_string_lossy().into_owned(), e.metadata().unwrap().len()))
        .collect()
}

pub fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for e in fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        if e.file_name() != "LOCK" {
            fs::copy(e.path(), to.join(e.file_name())).unwrap();
        }
    }
}

pub struct History {
    /// State after each commit; entry 0 is the state before the first.
    pub dumps: Vec<String>,
    /// Log file sizes after each commit.
    pub sizes: Vec<BTreeMap<String, u64>>,
    /// Commit index the checkpoint covers.
    pub checkpoint: usize,
}

/// Commits `sessions` random sessions over three folder kinds, with a
/// checkpoint after the third.
pub fn build(dir: &Path, seed: u64, sessions: usize) -> History {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let store = Store::open(dir, OpenOptions::default()).unwrap();
    let mut h = History { dumps: vec![dump(&store).unwrap()], sizes: vec![log_sizes(dir)], checkpoint: 0 };
    let layered = folder(&store, "layered", StoreStrategy::Layered, PartitionPolicy::time(50).unwrap());
    h.dumps.push(dump(&store).unwrap());
    h.sizes.push(log_sizes(dir));
    let legacy = folder(&store, "legacy", StoreStrategy::LegacyTruncate, PartitionPolicy::NONE);
    h.dumps.push(dump(&store).unwrap());
    h.sizes.push(log_sizes(dir));
    let tiny = p("/t/tiny");
    let mut s = store.begin_update().unwrap();
    s.create_tiny_folder(&tiny, &gain(), PartitionPolicy::NONE, "").unwrap();
    s.commit().unwrap();
    h.dumps.push(dump(&store).unwrap());
    h.sizes.push(log_sizes(dir));

    let mut at = 0;
    for i in 0..sessions {
        if i == 3 {
            store.checkpoint().unwrap();
            h.checkpoint = h.dumps.len() - 1;
            // the checkpoint rewrites nothing in the logs
            *h.sizes.last_mut().unwrap() = log_sizes(dir);
        }
        let mut s = store.begin_update().unwrap();
        for _ in 0..rng.random_range(1..30) {
            let a = rng.random_range(0..200);
            let b = a + rng.random_range(1..80);
            let target = if rng.random_bool(0.5) { &layered } else { &legacy };
            s.store_object(target, iv(a, b), f(rng.random_range(0..100) as f64)).unwrap();
            at += rng.random_range(1..5);
            s.tiny_append(&tiny, TimePoint(at), &Value::Float64(at as f64)).unwrap();
        }
        if rng.random_bool(0.8) {
            s.commit().unwrap();
            h.dumps.push(dump(&store).unwrap());
            h.sizes.push(log_sizes(dir));
        } else {
            s.abort().unwrap();
            // abort records still grow the catalog but change no state
            h.dumps.push(dump(&store).unwrap());
            h.sizes.push(log_sizes(dir));
        }
    }
    h
}

