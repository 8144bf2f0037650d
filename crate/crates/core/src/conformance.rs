//! Differential testing of backends.
//!
//! A script of engine operations is run against two stores; every result is
//! rendered to text and the two transcripts are compared line by line,
//! followed by a dump of the final state.

use std::fmt::Write as _;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{Selector, Session, Store, StoreStrategy, Visible};
use crate::error::Result;
use crate::model::{FolderPath, Kind, NodeKind, PayloadSchema, PayloadValue, TimePoint, ValidityInterval, Value};
use crate::partition::PartitionPolicy;

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Begin,
    Commit,
    Abort,
    CreateFolderset(FolderPath),
    CreateFolder { path: FolderPath, strategy: StoreStrategy, policy: PartitionPolicy },
    CreateTiny { path: FolderPath, policy: PartitionPolicy },
    Store { folder: FolderPath, since: u64, till: u64, value: f64 },
    TinyAppend { folder: FolderPath, at: u64, value: f64 },
    Find { folder: FolderPath, at: u64, sel: Selector },
    Browse { folder: FolderPath, since: u64, till: u64, sel: Selector },
    TagHead { folders: Vec<FolderPath>, name: String },
    TagAt { folder: FolderPath, seq: u64, name: String },
    TinyRead { folder: FolderPath, at: u64 },
    TinyScan { folder: FolderPath, since: u64, till: u64 },
    Describe(FolderPath),
    ListTags,
    /// Export, evict and re-import one partition.
    Cycle { folder: FolderPath, index: u64 },
    Evict { folder: FolderPath, index: u64 },
    Checkpoint,
    /// Aborts any open session, then closes and reopens durable stores.
    Reopen,
}

/// Opens the store under test, and reopens it after a [`Op::Reopen`].
pub trait StoreFactory {
    fn open(&mut self) -> Result<Store>;
}

impl<F: FnMut() -> Result<Store>> StoreFactory for F {
    fn open(&mut self) -> Result<Store> {
        self()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diff {
    /// Index into the script, or `None` for the final state dump.
    pub step: Option<usize>,
    pub op: String,
    pub left: String,
    pub right: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConformanceReport {
    pub diffs: Vec<Diff>,
}

impl ConformanceReport {
    pub fn is_empty(&self) -> bool {
        self.diffs.is_empty()
    }
}

fn err(e: crate::Error) -> String {
    format!("error {}: {e}", e.name())
}

fn show<T>(r: Result<T>, f: impl FnOnce(T) -> String) -> String {
    r.map_or_else(err, f)
}

fn visible(v: &Visible) -> String {
    format!("{} seq={} stored={} payload={}", v.effective, v.object.seq, v.object.interval, v.object.payload.to_csv())
}

fn f64_value(v: f64) -> PayloadValue {
    PayloadValue(vec![Value::Float64(v)])
}

fn schema() -> PayloadSchema {
    PayloadSchema::single("value", Kind::Float64).expect("static schema")
}

struct Runner<F> {
    factory: F,
    store: Store,
    session: Option<Session>,
}

impl<F: StoreFactory> Runner<F> {
    fn reader(&self) -> Session {
        self.store.begin_read()
    }

    /// Runs `f` in the open update session, or in a fresh read session.
    fn read<T>(&self, f: impl FnOnce(&Session) -> Result<T>) -> Result<T> {
        match &self.session {
            Some(s) => f(s),
            None => f(&self.reader()),
        }
    }

    fn write<T>(&mut self, f: impl FnOnce(&mut Session) -> Result<T>) -> Result<T> {
        match &mut self.session {
            Some(s) => f(s),
            None => Err(crate::Error::NoUpdateSession),
        }
    }

    fn step(&mut self, op: &Op) -> String {
        match op {
            Op::Begin => match self.store.begin_update() {
                Ok(s) => {
                    self.session = Some(s);
                    "ok".into()
                }
                Err(e) => err(e),
            },
            Op::Commit | Op::Abort => match self.session.take() {
                Some(mut s) => show(if *op == Op::Commit { s.commit() } else { s.abort() }, |_| "ok".into()),
                None => err(crate::Error::NoUpdateSession),
            },
            Op::CreateFolderset(path) => show(self.write(|s| s.create_folderset(path, "")), |_| "ok".into()),
            Op::CreateFolder { path, strategy, policy } => {
                show(self.write(|s| s.create_folder(path, &schema(), *policy, *strategy, "")), |_| "ok".into())
            }
            Op::CreateTiny { path, policy } => {
                show(self.write(|s| s.create_tiny_folder(path, &schema(), *policy, "")), |_| "ok".into())
            }
            Op::Store { folder, since, till, value } => {
                let r = ValidityInterval::new(*since, *till)
                    .and_then(|iv| self.write(|s| s.store_object(folder, iv, f64_value(*value))));
                show(r, |seq| format!("seq {seq}"))
            }
            Op::TinyAppend { folder, at, value } => {
                show(self.write(|s| s.tiny_append(folder, TimePoint(*at), &Value::Float64(*value))), |_| "ok".into())
            }
            Op::Find { folder, at, sel } => {
                show(self.read(|s| s.find_object(folder, TimePoint(*at), sel)), |v| visible(&v))
            }
            Op::Browse { folder, since, till, sel } => {
                let r = ValidityInterval::new(*since, *till).and_then(|w| self.read(|s| s.browse_objects(folder, w, sel)));
                show(r, |vs| vs.iter().map(visible).collect::<Vec<_>>().join("; "))
            }
            Op::TagHead { folders, name } => show(self.write(|s| s.tag_head(folders, name)), |t| format!("{:?}", t.entries)),
            Op::TagAt { folder, seq, name } => {
                show(self.write(|s| s.tag_at_sequence(folder, *seq, name)), |t| format!("{:?}", t.entries))
            }
            Op::TinyRead { folder, at } => show(self.read(|s| s.tiny_read(folder, TimePoint(*at))), |t| {
                format!("{} {} {}", t.at, t.value.render(), t.effective)
            }),
            Op::TinyScan { folder, since, till } => {
                let r = ValidityInterval::new(*since, *till).and_then(|w| self.read(|s| s.tiny_scan(folder, w)));
                show(r, |v| v.iter().map(|(at, x)| format!("{at}={}", x.render())).collect::<Vec<_>>().join(" "))
            }
            Op::Describe(path) => show(self.read(|s| s.describe_folder(path)), |d| format!("{d:?}")),
            Op::ListTags => show(self.read(|s| s.list_tags()), |tags| {
                tags.iter().map(|t| format!("{}:{:?}", t.name, t.entries)).collect::<Vec<_>>().join(" ")
            }),
            Op::Cycle { folder, index } => {
                let r = self.store.export_partition(folder, *index).and_then(|chunk| {
                    self.store.evict_partition(folder, *index)?;
                    self.store.import_partition(folder, &chunk)
                });
                show(r, |_| "ok".into())
            }
            Op::Evict { folder, index } => show(self.store.evict_partition(folder, *index), |_| "ok".into()),
            Op::Checkpoint => show(self.store.checkpoint(), |_| "ok".into()),
            Op::Reopen => {
                if let Some(mut s) = self.session.take() {
                    let _ = s.abort();
                }
                if !self.store.is_durable() {
                    return "ok".into();
                }
                // The old handle must be gone before the lock can be retaken.
                let placeholder = Store::memory();
                drop(std::mem::replace(&mut self.store, placeholder));
                match self.factory.open() {
                    Ok(s) => {
                        self.store = s;
                        "ok".into()
                    }
                    Err(e) => err(e),
                }
            }
        }
    }
}

/// Text rendering of everything a reader can observe.
pub fn dump(store: &Store) -> Result<String> {
    let r = store.begin_read();
    let mut out = String::new();
    let tags = r.list_tags()?;
    for t in &tags {
        writeln!(out, "tag {} {:?}", t.name, t.entries).unwrap();
    }
    for node in r.list(&FolderPath::root(), true)? {
        writeln!(out, "node {} {}", node.path, node.kind).unwrap();
        let path = &node.path;
        match node.kind {
            NodeKind::Folderset => {}
            NodeKind::Folder => {
                let d = r.describe_folder(path)?;
                writeln!(out, "  {d:?}").unwrap();
                let mut sels = vec![Selector::Head];
                if d.strategy == StoreStrategy::Layered {
                    sels.extend((0..=d.max_seq).step_by(((d.max_seq / 8) as usize).max(1)).map(Selector::AtSequence));
                    sels.extend(tags.iter().filter(|t| t.entries.contains_key(path)).map(|t| Selector::Tag(t.name.clone())));
                }
                for sel in sels {
                    let line = show(r.browse_objects(path, ValidityInterval::all(), &sel), |vs| {
                        vs.iter().map(visible).collect::<Vec<_>>().join("; ")
                    });
                    writeln!(out, "  {sel:?}: {line}").unwrap();
                }
            }
            NodeKind::TinyFolder => {
                writeln!(out, "  {:?}", r.describe_folder(path)?).unwrap();
                let line = show(r.tiny_scan(path, ValidityInterval::all()), |v| {
                    v.iter().map(|(at, x)| format!("{at}={}", x.render())).collect::<Vec<_>>().join(" ")
                });
                writeln!(out, "  samples: {line}").unwrap();
            }
        }
    }
    Ok(out)
}

/// Runs `script` against one store and returns one line per step followed
/// by the final state dump.
pub fn transcript(mut factory: impl StoreFactory, script: &[Op]) -> Result<(Vec<String>, String)> {
    let store = factory.open()?;
    let mut runner = Runner { factory, store, session: None };
    let lines = script.iter().map(|op| runner.step(op)).collect();
    if let Some(mut s) = runner.session.take() {
        s.commit()?;
    }
    Ok((lines, dump(&runner.store)?))
}

/// Runs `script` against both stores and reports where they disagree.
pub fn backend_conformance(left: impl StoreFactory, right: impl StoreFactory, script: &[Op]) -> Result<ConformanceReport> {
    let (l_lines, l_dump) = transcript(left, script)?;
    let (r_lines, r_dump) = transcript(right, script)?;
    let mut diffs = Vec::new();
    for (i, (l, r)) in l_lines.iter().zip(&r_lines).enumerate() {
        if l != r {
            diffs.push(Diff { step: Some(i), op: format!("{:?}", script[i]), left: l.clone(), right: r.clone() });
        }
    }
    if l_dump != r_dump {
        diffs.push(Diff { step: None, op: "final state".into(), left: l_dump, right: r_dump });
    }
    Ok(ConformanceReport { diffs })
}

/// A reproducible script of `len` operations over a handful of folders of
/// every kind.
pub fn random_script(seed: u64, len: usize) -> Vec<Op> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = |s: &str| FolderPath::parse(s).expect("static path");
    let objects = [p("/a/layered"), p("/a/legacy"), p("/a/by-time"), p("/a/by-version")];
    let tiny = p("/a/tiny");
    let mut script = vec![
        Op::Begin,
        Op::CreateFolderset(p("/a")),
        Op::CreateFolder { path: objects[0].clone(), strategy: StoreStrategy::Layered, policy: PartitionPolicy::NONE },
        Op::CreateFolder {
            path: objects[1].clone(),
            strategy: StoreStrategy::LegacyTruncate,
            policy: PartitionPolicy::NONE,
        },
        Op::CreateFolder {
            path: objects[2].clone(),
            strategy: StoreStrategy::Layered,
            policy: PartitionPolicy { axis: crate::partition::Axis::Time, chunk: 100 },
        },
        Op::CreateFolder {
            path: objects[3].clone(),
            strategy: StoreStrategy::Layered,
            policy: PartitionPolicy { axis: crate::partition::Axis::Version, chunk: 8 },
        },
        Op::CreateTiny { path: tiny.clone(), policy: PartitionPolicy { axis: crate::partition::Axis::Time, chunk: 100 } },
        Op::Commit,
    ];
    let mut tiny_at = 0u64;
    let mut tag = 0;
    while script.len() < len {
        let folder = objects[rng.random_range(0..objects.len())].clone();
        let t = rng.random_range(0..400u64);
        let sel = match rng.random_range(0..4) {
            0 => Selector::AtSequence(rng.random_range(0..40)),
            1 if tag > 0 => Selector::Tag(format!("t{}", rng.random_range(0..tag))),
            _ => Selector::Head,
        };
        let op = match rng.random_range(0..100) {
            0..=7 => Op::Begin,
            8..=10 => Op::Commit,
            11 => Op::Abort,
            12 => Op::Reopen,
            13..=39 => Op::Store { folder, since: t, till: t + rng.random_range(1..120), value: rng.random_range(0..1000) as f64 / 8.0 },
            40..=49 => {
                tiny_at += rng.random_range(0..30);
                Op::TinyAppend { folder: tiny.clone(), at: tiny_at, value: rng.random_range(-50..50) as f64 }
            }
            50..=64 => Op::Find { folder, at: t.max(1), sel },
            65..=70 => Op::Browse { folder, since: t, till: t + rng.random_range(1..200), sel },
            71..=73 => {
                tag += 1;
                Op::TagHead { folders: vec![objects[0].clone(), objects[2].clone()], name: format!("t{}", tag - 1) }
            }
            74..=75 => {
                tag += 1;
                Op::TagAt { folder, seq: rng.random_range(0..20), name: format!("t{}", tag - 1) }
            }
            76..=80 => Op::TinyRead { folder: tiny.clone(), at: rng.random_range(1..tiny_at.max(1) + 50) },
            81..=83 => Op::TinyScan { folder: tiny.clone(), since: t, till: t + rng.random_range(1..100) },
            84..=86 => Op::Describe(folder),
            87 => Op::ListTags,
            88..=89 => {
                let (folder, index) = match rng.random_bool(0.5) {
                    true => (objects[2].clone(), rng.random_range(0..4)),
                    false => (objects[3].clone(), rng.random_range(0..3)),
                };
                Op::Cycle { folder, index }
            }
            90 => Op::Evict { folder: tiny.clone(), index: rng.random_range(0..3) },
            91..=92 => Op::Checkpoint,
            _ => Op::Find { folder, at: t.max(1), sel: Selector::Head },
        };
        script.push(op);
    }
    script
}
