//! Backend abstraction.
//!
//! The engine keeps its working state in memory and hands every mutation to
//! a [`Backend`] as it happens: folder records while an update session runs,
//! catalog events plus a commit mark when it commits. A backend that can
//! survive a restart gives the same stream back from [`Backend::recover`].

pub mod codec;
pub mod file;
mod lock;

use std::collections::{BTreeMap, HashMap};

use crate::engine::{StoreStrategy, TagSnapshot};
use crate::error::{Error, Result};
use crate::model::{FolderPath, NodeKind, PayloadSchema, PayloadValue, ValidityInterval};
use crate::partition::PartitionPolicy;
use codec::{frame_into, frame_with, Dec, Enc};

pub use file::{FileBackend, OpenOptions};

pub type FolderId = u64;

pub(crate) const REC_OBJECT: u8 = 0x01;
pub(crate) const REC_TINY: u8 = 0x02;
pub(crate) const EV_NODE: u8 = 0x10;
pub(crate) const EV_TAG: u8 = 0x11;
pub(crate) const EV_EVICT: u8 = 0x12;
pub(crate) const EV_IMPORT: u8 = 0x13;
pub(crate) const EV_COMMIT: u8 = 0x1E;
pub(crate) const EV_ABORT: u8 = 0x1F;

pub(crate) fn node_kind_code(k: NodeKind) -> u8 {
    match k {
        NodeKind::Folderset => 0,
        NodeKind::Folder => 1,
        NodeKind::TinyFolder => 2,
    }
}

pub(crate) fn node_kind_from_code(c: u8) -> Result<NodeKind> {
    match c {
        0 => Ok(NodeKind::Folderset),
        1 => Ok(NodeKind::Folder),
        2 => Ok(NodeKind::TinyFolder),
        _ => Err(Error::corrupt(format!("unknown node kind {c}"))),
    }
}

/// One unit of folder data as written to a folder log.
#[derive(Debug, Clone, PartialEq)]
pub enum FolderRecord {
    Object { seq: u64, interval: ValidityInterval, payload: PayloadValue },
    /// `bits` is the raw 8-byte value; its type comes from the folder schema.
    Tiny { at: u64, bits: u64 },
}

/// Borrowed form of [`FolderRecord`] used on the write path.
#[derive(Debug, Clone, Copy)]
pub enum RecordRef<'a> {
    Object { seq: u64, interval: ValidityInterval, payload: &'a PayloadValue },
    Tiny { at: u64, bits: u64 },
}

impl RecordRef<'_> {
    pub fn frame_into(&self, folder: FolderId, out: &mut Vec<u8>) {
        match *self {
            RecordRef::Object { seq, interval, payload } => frame_with(out, REC_OBJECT, |e| {
                e.u64(folder).u64(seq).u64(interval.since().0).u64(interval.till().0).payload(payload);
            }),
            RecordRef::Tiny { at, bits } => frame_with(out, REC_TINY, |e| {
                e.u64(at).u64(bits);
            }),
        }
    }
}

impl FolderRecord {
    pub fn as_ref(&self) -> RecordRef<'_> {
        match self {
            FolderRecord::Object { seq, interval, payload } => {
                RecordRef::Object { seq: *seq, interval: *interval, payload }
            }
            FolderRecord::Tiny { at, bits } => RecordRef::Tiny { at: *at, bits: *bits },
        }
    }

    pub fn frame_into(&self, folder: FolderId, out: &mut Vec<u8>) {
        self.as_ref().frame_into(folder, out)
    }

    /// Returns the folder id carried by object records (tiny records carry none).
    pub fn decode(kind: u8, body: &[u8]) -> Result<(Option<FolderId>, FolderRecord)> {
        let mut d = Dec::new(body);
        let out = match kind {
            REC_OBJECT => {
                let folder = d.u64()?;
                let seq = d.u64()?;
                let (since, till) = (d.u64()?, d.u64()?);
                let interval = ValidityInterval::new(since, till).map_err(|e| Error::corrupt(e.to_string()))?;
                let payload = d.payload()?;
                (Some(folder), FolderRecord::Object { seq, interval, payload })
            }
            REC_TINY => (None, FolderRecord::Tiny { at: d.u64()?, bits: d.u64()? }),
            k => return Err(Error::corrupt(format!("unknown record kind {k:#x}"))),
        };
        if !d.is_empty() {
            return Err(Error::corrupt("trailing bytes in record"));
        }
        Ok(out)
    }
}

/// What the catalog knows about a node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeRecord {
    pub id: FolderId,
    pub path: FolderPath,
    pub kind: NodeKind,
    pub description: String,
    pub schema: Option<PayloadSchema>,
    pub policy: PartitionPolicy,
    pub strategy: StoreStrategy,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CatalogEvent {
    CreateNode(NodeRecord),
    CreateTag(TagSnapshot),
    Evicted { folder: FolderId, index: u64 },
    Imported { folder: FolderId, index: u64 },
}

impl CatalogEvent {
    pub fn frame_into(&self, out: &mut Vec<u8>) {
        let mut e = Enc::new();
        let kind = match self {
            CatalogEvent::CreateNode(n) => {
                e.u64(n.id).str(&n.path.to_string()).u8(node_kind_code(n.kind)).str(&n.description);
                match &n.schema {
                    Some(s) => {
                        e.u8(1).schema(s);
                    }
                    None => {
                        e.u8(0);
                    }
                }
                e.policy(&n.policy).u8(n.strategy.code());
                EV_NODE
            }
            CatalogEvent::CreateTag(t) => {
                e.str(&t.name).u64(t.created_at).u32(t.entries.len() as u32);
                for (path, seq) in &t.entries {
                    e.str(&path.to_string()).u64(*seq);
                }
                EV_TAG
            }
            CatalogEvent::Evicted { folder, index } => {
                e.u64(*folder).u64(*index);
                EV_EVICT
            }
            CatalogEvent::Imported { folder, index } => {
                e.u64(*folder).u64(*index);
                EV_IMPORT
            }
        };
        frame_into(out, kind, &e.buf);
    }

    pub fn decode(kind: u8, body: &[u8]) -> Result<CatalogEvent> {
        let mut d = Dec::new(body);
        let path = |s: String| FolderPath::parse(&s).map_err(|e| Error::corrupt(e.to_string()));
        let ev = match kind {
            EV_NODE => {
                let id = d.u64()?;
                let p = path(d.str()?)?;
                let kind = node_kind_from_code(d.u8()?)?;
                let description = d.str()?;
                let schema = if d.u8()? == 1 { Some(d.schema()?) } else { None };
                let policy = d.policy()?;
                let strategy = StoreStrategy::from_code(d.u8()?)?;
                CatalogEvent::CreateNode(NodeRecord { id, path: p, kind, description, schema, policy, strategy })
            }
            EV_TAG => {
                let name = d.str()?;
                let created_at = d.u64()?;
                let n = d.u32()?;
                let mut entries = BTreeMap::new();
                for _ in 0..n {
                    let p = path(d.str()?)?;
                    entries.insert(p, d.u64()?);
                }
                CatalogEvent::CreateTag(TagSnapshot { name, entries, created_at })
            }
            EV_EVICT => CatalogEvent::Evicted { folder: d.u64()?, index: d.u64()? },
            EV_IMPORT => CatalogEvent::Imported { folder: d.u64()?, index: d.u64()? },
            k => return Err(Error::corrupt(format!("unknown catalog event {k:#x}"))),
        };
        if !d.is_empty() {
            return Err(Error::corrupt("trailing bytes in catalog event"));
        }
        Ok(ev)
    }
}

/// Per-folder sequence high-water mark recorded with a commit or abort, so
/// burned sequence numbers stay burned across restarts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FolderMark {
    pub folder: FolderId,
    pub next_seq: u64,
}

#[derive(Debug, Clone, Default)]
pub struct RecoveredCommit {
    /// Catalog offset just past this commit's mark.
    pub position: u64,
    pub aborted: bool,
    pub events: Vec<CatalogEvent>,
    /// Folder records written by the session, in write order. Omitted for
    /// folders whose image already covers this commit.
    pub records: Vec<(FolderId, Vec<FolderRecord>)>,
    pub marks: Vec<FolderMark>,
}

#[derive(Debug, Clone)]
pub struct RecoveredImage {
    /// Catalog offset the image is current at.
    pub covered: u64,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Default)]
pub struct Recovery {
    pub commits: Vec<RecoveredCommit>,
    pub images: HashMap<FolderId, RecoveredImage>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BackendStats {
    /// Folder records decoded from logs during the last recovery.
    pub replayed_records: u64,
    /// Folder images loaded during the last recovery.
    pub images_loaded: u64,
}

pub trait Backend: Send {
    /// Whether data survives closing the store.
    fn durable(&self) -> bool;

    fn recover(&mut self) -> Result<Recovery>;

    /// Announces a node created in the current session.
    fn register(&mut self, _folder: FolderId, _kind: NodeKind) {}

    fn append(&mut self, folder: FolderId, rec: RecordRef<'_>) -> Result<()>;

    fn commit(&mut self, events: &[CatalogEvent], marks: &[FolderMark]) -> Result<()>;

    fn abort(&mut self, marks: &[FolderMark]) -> Result<()>;

    fn checkpoint(&mut self, images: &[(FolderId, Vec<u8>)]) -> Result<()>;

    fn stats(&self) -> BackendStats {
        BackendStats::default()
    }
}

/// Volatile backend: nothing is kept, nothing is recovered.
#[derive(Debug, Default)]
pub struct MemoryBackend;

impl Backend for MemoryBackend {
    fn durable(&self) -> bool {
        false
    }

    fn recover(&mut self) -> Result<Recovery> {
        Ok(Recovery::default())
    }

    fn append(&mut self, _folder: FolderId, _rec: RecordRef<'_>) -> Result<()> {
        Ok(())
    }

    fn commit(&mut self, _events: &[CatalogEvent], _marks: &[FolderMark]) -> Result<()> {
        Ok(())
    }

    fn abort(&mut self, _marks: &[FolderMark]) -> Result<()> {
        Ok(())
    }

    fn checkpoint(&mut self, _images: &[(FolderId, Vec<u8>)]) -> Result<()> {
        Ok(())
    }
}

pub(crate) fn encode_marks(e: &mut Enc, marks: &[FolderMark]) {
    e.u32(marks.len() as u32);
    for m in marks {
        e.u64(m.folder).u64(m.next_seq);
    }
}
