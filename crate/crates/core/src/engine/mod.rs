//! Folders, sessions and latest-wins resolution.
//!
//! All folder contents live in memory; a [`Backend`] journals every change
//! and gives it back on open. Each data folder sits behind its own lock and
//! holds everything written so far, including the open update session's
//! uncommitted objects. Readers never see those because every read is
//! bounded by a sequence ceiling taken from a published [`View`].

mod image;
mod layered;
mod legacy;
mod session;
mod tiny;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::error::{Error, Result};
use crate::model::{FolderPath, Kind, NodeKind, PayloadSchema, PayloadValue, TimePoint, ValidityInterval, Value};
use crate::partition::{PartitionChunk, PartitionPolicy, PartitionSummary};
use crate::storage::{
    Backend, CatalogEvent, FileBackend, FolderId, FolderMark, FolderRecord, MemoryBackend, NodeRecord, OpenOptions,
};

pub(crate) use layered::Layered;
pub(crate) use legacy::Legacy;
pub use session::{Session, SessionMode};
pub(crate) use tiny::Tiny;

/// How a folder turns stores into answers. Fixed when the folder is created.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum StoreStrategy {
    /// Append-only; overlaps are resolved when reading.
    #[default]
    Layered,
    /// Every store rewrites the intervals it eclipses. HEAD reads only.
    LegacyTruncate,
}

impl StoreStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            StoreStrategy::Layered => "layered",
            StoreStrategy::LegacyTruncate => "legacy",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            StoreStrategy::Layered => 0,
            StoreStrategy::LegacyTruncate => 1,
        }
    }

    pub(crate) fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(StoreStrategy::Layered),
            1 => Ok(StoreStrategy::LegacyTruncate),
            _ => Err(Error::corrupt(format!("unknown store strategy {c}"))),
        }
    }
}

impl fmt::Display for StoreStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StoreStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "layered" => Ok(StoreStrategy::Layered),
            "legacy" | "legacy-truncate" => Ok(StoreStrategy::LegacyTruncate),
            _ => Err(Error::InvalidArgument(format!("unknown strategy {s:?} (layered|legacy)"))),
        }
    }
}

/// One stored payload. Immutable once committed.
#[derive(Debug, Clone, PartialEq)]
pub struct CondObject {
    pub folder: Arc<FolderPath>,
    pub interval: ValidityInterval,
    pub seq: u64,
    pub payload: PayloadValue,
}

/// Which version layer a read resolves against.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Selector {
    #[default]
    Head,
    Tag(String),
    AtSequence(u64),
}

/// Named, immutable per-folder sequence ceilings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagSnapshot {
    pub name: String,
    pub entries: BTreeMap<FolderPath, u64>,
    /// Unix milliseconds.
    pub created_at: u64,
}

/// A resolved object and the stretch of time over which it stays the answer.
#[derive(Debug, Clone, PartialEq)]
pub struct Visible {
    pub effective: ValidityInterval,
    pub object: Arc<CondObject>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TinySample {
    pub at: TimePoint,
    pub value: Value,
    pub effective: ValidityInterval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartitionInfo {
    pub index: u64,
    pub resident: bool,
    pub summary: PartitionSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FolderDescription {
    pub path: FolderPath,
    pub kind: NodeKind,
    pub description: String,
    pub schema: PayloadSchema,
    pub strategy: StoreStrategy,
    pub policy: PartitionPolicy,
    /// Objects (or samples) visible to the session, evicted ones included.
    pub count: u64,
    /// Highest visible sequence; 0 for an empty or tiny folder.
    pub max_seq: u64,
    pub partitions: Vec<PartitionInfo>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeInfo {
    pub path: FolderPath,
    pub kind: NodeKind,
    pub description: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StoreStats {
    /// Folder records replayed from logs when the store was opened.
    pub replayed_records: u64,
    /// Folder images loaded when the store was opened.
    pub images_loaded: u64,
    /// Partitions whose contents a read had to search.
    pub partition_probes: u64,
}

pub(crate) struct Node {
    pub id: FolderId,
    pub path: Arc<FolderPath>,
    pub kind: NodeKind,
    pub description: String,
    pub schema: Option<PayloadSchema>,
    pub policy: PartitionPolicy,
    pub strategy: StoreStrategy,
    pub data: Option<Arc<RwLock<FolderData>>>,
}

impl Node {
    fn from_record(r: NodeRecord) -> Arc<Node> {
        let data = match r.kind {
            NodeKind::Folderset => None,
            _ => Some(Arc::new(RwLock::new(FolderData::new(&r)))),
        };
        Arc::new(Node {
            id: r.id,
            path: Arc::new(r.path),
            kind: r.kind,
            description: r.description,
            schema: r.schema,
            policy: r.policy,
            strategy: r.strategy,
            data,
        })
    }

    pub(crate) fn data(&self) -> &Arc<RwLock<FolderData>> {
        self.data.as_ref().expect("data folder")
    }
}

/// Committed state of one data folder as of a view.
#[derive(Debug, Clone, Default)]
pub(crate) struct Head {
    pub ceiling: u64,
    pub count: u64,
    pub tiny_last: Option<u64>,
    pub rows: Option<Arc<Vec<legacy::Row>>>,
}

#[derive(Clone, Default)]
pub(crate) struct View {
    pub nodes: Arc<BTreeMap<FolderPath, Arc<Node>>>,
    pub tags: Arc<BTreeMap<String, TagSnapshot>>,
    pub heads: Arc<HashMap<FolderId, Head>>,
}

pub(crate) enum Body {
    Layered(Layered),
    Legacy(Legacy),
    Tiny(Tiny),
}

pub(crate) struct FolderData {
    /// Next sequence to hand out; burned numbers are never reissued.
    pub next_seq: u64,
    /// Highest sequence stored, uncommitted ones included.
    pub max_seq: u64,
    pub count: u64,
    pub body: Body,
}

impl FolderData {
    fn new(r: &NodeRecord) -> Self {
        let body = match (r.kind, r.strategy) {
            (NodeKind::TinyFolder, _) => {
                let kind = r.schema.as_ref().map_or(Kind::Float64, |s| s.attributes()[0].kind);
                Body::Tiny(Tiny::new(kind, r.policy))
            }
            (_, StoreStrategy::Layered) => Body::Layered(Layered::new(r.policy)),
            (_, StoreStrategy::LegacyTruncate) => Body::Legacy(Legacy::default()),
        };
        Self { next_seq: 1, max_seq: 0, count: 0, body }
    }

    pub(crate) fn head(&self) -> Head {
        Head {
            ceiling: self.max_seq,
            count: self.count,
            tiny_last: match &self.body {
                Body::Tiny(t) => t.last,
                _ => None,
            },
            rows: match &self.body {
                Body::Legacy(l) => Some(l.rows.clone()),
                _ => None,
            },
        }
    }

    /// Fails if an object with this interval and the next sequence could
    /// not be stored.
    pub(crate) fn check_store(&self, folder: &FolderPath, interval: &ValidityInterval) -> Result<()> {
        match &self.body {
            Body::Layered(l) => l.check_route(folder, interval, self.next_seq),
            _ => Ok(()),
        }
    }

    pub(crate) fn apply_store(
        &mut self,
        folder: &Arc<FolderPath>,
        seq: u64,
        interval: ValidityInterval,
        payload: PayloadValue,
    ) -> Result<Arc<CondObject>> {
        let obj = Arc::new(CondObject { folder: folder.clone(), interval, seq, payload });
        match &mut self.body {
            Body::Layered(l) => l.push(folder, obj.clone())?,
            Body::Legacy(l) => l.store(obj.clone()),
            Body::Tiny(_) => return Err(Error::NoSuchFolder(folder.to_string())),
        }
        self.next_seq = self.next_seq.max(seq + 1);
        self.max_seq = self.max_seq.max(seq);
        self.count += 1;
        Ok(obj)
    }

    pub(crate) fn apply_tiny(&mut self, folder: &FolderPath, at: u64, bits: u64) -> Result<()> {
        match &mut self.body {
            Body::Tiny(t) => t.append(folder, at, bits)?,
            _ => return Err(Error::NoSuchFolder(folder.to_string())),
        }
        self.count += 1;
        Ok(())
    }

    /// Drops everything written after `head` was taken.
    pub(crate) fn rollback(&mut self, head: &Head) {
        match &mut self.body {
            Body::Layered(l) => l.truncate_above(head.ceiling),
            Body::Legacy(l) => l.rows = head.rows.clone().unwrap_or_default(),
            Body::Tiny(t) => t.truncate_after(head.tiny_last),
        }
        self.max_seq = head.ceiling;
        self.count = head.count;
    }

    pub(crate) fn partitions(&self) -> Vec<PartitionInfo> {
        match &self.body {
            Body::Layered(l) => l.partitions(),
            Body::Legacy(_) => Vec::new(),
            Body::Tiny(t) => t.partitions(),
        }
    }

    pub(crate) fn evict(&mut self, folder: &FolderPath, index: u64) -> Result<()> {
        match &mut self.body {
            Body::Layered(l) => l.evict(folder, index),
            Body::Tiny(t) => t.evict(folder, index),
            Body::Legacy(_) => Err(Error::NoSuchPartition { folder: folder.to_string(), index }),
        }
    }

    pub(crate) fn import(&mut self, folder: &Arc<FolderPath>, index: u64, records: &[FolderRecord]) -> Result<()> {
        // an evicted partition is still counted
        let counted = self.partitions().iter().any(|p| p.index == index);
        let count = if counted { 0 } else { records.len() as u64 };
        match &mut self.body {
            Body::Layered(l) => {
                let added = l.import(folder, index, records)?;
                if let Some(max) = added.iter().map(|o| o.seq).max() {
                    self.max_seq = self.max_seq.max(max);
                    self.next_seq = self.next_seq.max(max + 1);
                }
            }
            Body::Tiny(t) => t.import(folder, index, records)?,
            Body::Legacy(_) => return Err(Error::ChunkMismatch("legacy folders are not partitioned".into())),
        }
        self.count += count;
        Ok(())
    }
}

pub(crate) fn now_millis() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

pub(crate) fn is_valid_name(name: &str) -> bool {
    (1..=64).contains(&name.len()) && name.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

pub(crate) struct Writer {
    pub backend: Box<dyn Backend>,
    pub next_id: FolderId,
}

pub(crate) struct Shared {
    pub view: RwLock<Arc<View>>,
    pub writer: Mutex<Writer>,
    /// Set while an update session (or a store-level write) holds the
    /// writer role.
    pub busy: AtomicBool,
    pub read_only: bool,
    pub durable: bool,
    pub probes: AtomicU64,
    pub opened: (u64, u64),
}

/// Handle to an open store. Cheap to clone; all clones share state.
#[derive(Clone)]
pub struct Store {
    pub(crate) shared: Arc<Shared>,
}

impl fmt::Debug for Store {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Store").field("durable", &self.shared.durable).finish_non_exhaustive()
    }
}

/// Releases the writer role on drop.
pub(crate) struct WriterRole<'a>(&'a AtomicBool);

impl Drop for WriterRole<'_> {
    fn drop(&mut self) {
        self.0.store(false, Ordering::Release);
    }
}

impl Store {
    /// Volatile store.
    pub fn memory() -> Store {
        Self::with_backend(Box::new(MemoryBackend)).expect("memory backend cannot fail to open")
    }

    /// Opens (or creates) a file-backed store in `dir`.
    pub fn open(dir: impl AsRef<Path>, opts: OpenOptions) -> Result<Store> {
        let read_only = opts.read_only;
        let backend = FileBackend::open(dir, opts)?;
        Self::open_backend(Box::new(backend), read_only)
    }

    pub fn with_backend(backend: Box<dyn Backend>) -> Result<Store> {
        Self::open_backend(backend, false)
    }

    fn open_backend(mut backend: Box<dyn Backend>, read_only: bool) -> Result<Store> {
        let recovery = backend.recover()?;
        let (view, next_id) = session::replay(recovery)?;
        let stats = backend.stats();
        let durable = backend.durable();
        Ok(Store {
            shared: Arc::new(Shared {
                view: RwLock::new(Arc::new(view)),
                writer: Mutex::new(Writer { backend, next_id }),
                busy: AtomicBool::new(false),
                read_only,
                durable,
                probes: AtomicU64::new(0),
                opened: (stats.replayed_records, stats.images_loaded),
            }),
        })
    }

    pub fn is_durable(&self) -> bool {
        self.shared.durable
    }

    pub fn is_read_only(&self) -> bool {
        self.shared.read_only
    }

    pub fn stats(&self) -> StoreStats {
        StoreStats {
            replayed_records: self.shared.opened.0,
            images_loaded: self.shared.opened.1,
            partition_probes: self.shared.probes.load(Ordering::Relaxed),
        }
    }

    pub(crate) fn view(&self) -> Arc<View> {
        self.shared.view.read().unwrap().clone()
    }

    pub(crate) fn claim_writer(&self) -> Result<WriterRole<'_>> {
        if self.shared.read_only {
            return Err(Error::ReadOnlyStore);
        }
        self.shared
            .busy
            .compare_exchange(false, true, Ordering::Acquire, Ordering::Relaxed)
            .map_err(|_| Error::UpdateSessionBusy)?;
        Ok(WriterRole(&self.shared.busy))
    }

    pub fn begin_read(&self) -> Session {
        Session::new_read(self.clone())
    }

    pub fn begin_update(&self) -> Result<Session> {
        Session::new_update(self.clone())
    }

    pub fn begin(&self, mode: SessionMode) -> Result<Session> {
        match mode {
            SessionMode::Read => Ok(self.begin_read()),
            SessionMode::Update => self.begin_update(),
        }
    }

    /// Writes a folder image for every data folder so that the next open
    /// replays nothing.
    pub fn checkpoint(&self) -> Result<()> {
        let _role = self.claim_writer()?;
        let view = self.view();
        let mut images = Vec::new();
        for node in view.nodes.values() {
            if let Some(data) = &node.data {
                images.push((node.id, image::encode(&data.read().unwrap())));
            }
        }
        self.shared.writer.lock().unwrap().backend.checkpoint(&images)
    }

    fn data_node(view: &View, folder: &FolderPath) -> Result<Arc<Node>> {
        match view.nodes.get(folder) {
            Some(n) if n.data.is_some() => Ok(n.clone()),
            _ => Err(Error::NoSuchFolder(folder.to_string())),
        }
    }

    /// Serialises one committed partition.
    pub fn export_partition(&self, folder: &FolderPath, index: u64) -> Result<PartitionChunk> {
        let view = self.view();
        let node = Self::data_node(&view, folder)?;
        let head = view.heads.get(&node.id).cloned().unwrap_or_default();
        let data = node.data().read().unwrap();
        let (summary, records) = match &data.body {
            Body::Layered(l) => l.export(folder, index, head.ceiling)?,
            Body::Tiny(t) => t.export(folder, index, head.tiny_last)?,
            Body::Legacy(_) => return Err(Error::NoSuchPartition { folder: folder.to_string(), index }),
        };
        Ok(PartitionChunk {
            folder_id: node.id,
            kind: node.kind,
            strategy: node.strategy,
            schema: node.schema.clone().expect("data folder has a schema"),
            policy: node.policy,
            index,
            summary,
            records,
        })
    }

    pub fn export_partition_to(&self, folder: &FolderPath, index: u64, file: impl AsRef<Path>) -> Result<()> {
        let bytes = self.export_partition(folder, index)?.encode();
        std::fs::write(file, bytes)?;
        Ok(())
    }

    /// Drops a partition's contents, keeping its summary. Commits by itself.
    pub fn evict_partition(&self, folder: &FolderPath, index: u64) -> Result<()> {
        let _role = self.claim_writer()?;
        let view = self.view();
        let node = Self::data_node(&view, folder)?;
        let mut data = node.data().write().unwrap();
        let info = data.partitions().into_iter().find(|p| p.index == index);
        match info {
            None => return Err(Error::NoSuchPartition { folder: folder.to_string(), index }),
            Some(p) if !p.resident => return Err(Error::PartitionOffline { folder: folder.to_string(), index }),
            Some(_) => {}
        }
        let mut w = self.shared.writer.lock().unwrap();
        w.backend.commit(&[CatalogEvent::Evicted { folder: node.id, index }], &[])?;
        data.evict(folder, index)
    }

    /// Restores a partition from a chunk. Commits by itself.
    pub fn import_partition(&self, folder: &FolderPath, chunk: &PartitionChunk) -> Result<()> {
        let _role = self.claim_writer()?;
        let view = self.view();
        let node = Self::data_node(&view, folder)?;
        let schema = node.schema.as_ref().expect("data folder has a schema");
        if chunk.kind != node.kind || chunk.strategy != node.strategy {
            return Err(Error::ChunkMismatch(format!("chunk holds {} data, folder is {}", chunk.kind, node.kind)));
        }
        if &chunk.schema != schema {
            return Err(Error::ChunkMismatch(format!("chunk schema {} differs from {}", chunk.schema, schema)));
        }
        if chunk.policy != node.policy {
            return Err(Error::ChunkMismatch(format!("chunk policy {} differs from {}", chunk.policy, node.policy)));
        }
        if chunk.records.len() as u64 != chunk.summary.count {
            return Err(Error::ChunkMismatch("record count differs from summary".into()));
        }
        for r in &chunk.records {
            if let FolderRecord::Object { payload, .. } = r {
                crate::model::validate_payload(schema, payload).map_err(|e| Error::ChunkMismatch(e.to_string()))?;
            }
        }
        let mut data = node.data().write().unwrap();
        if let Some(p) = data.partitions().into_iter().find(|p| p.index == chunk.index) {
            if p.resident {
                return Err(Error::ChunkMismatch(format!("partition {} of {folder} is resident", chunk.index)));
            }
            if p.summary != chunk.summary {
                return Err(Error::ChunkMismatch("chunk summary differs from the evicted partition".into()));
            }
        }
        let before = data.head();
        data.import(&node.path, chunk.index, &chunk.records)?;
        let mut w = self.shared.writer.lock().unwrap();
        let written = (|| {
            for r in &chunk.records {
                w.backend.append(node.id, r.as_ref())?;
            }
            let marks = [FolderMark { folder: node.id, next_seq: data.next_seq }];
            w.backend.commit(&[CatalogEvent::Imported { folder: node.id, index: chunk.index }], &marks)
        })();
        if let Err(e) = written {
            // Undo in memory; the backend drops the uncommitted log tail.
            let _ = w.backend.abort(&[]);
            data.evict(folder, chunk.index).ok();
            data.max_seq = before.ceiling;
            data.count = before.count;
            if let Body::Tiny(t) = &mut data.body {
                t.last = before.tiny_last;
            }
            return Err(e);
        }
        let mut heads = (*view.heads).clone();
        heads.insert(node.id, data.head());
        drop(data);
        let next = View { nodes: view.nodes.clone(), tags: view.tags.clone(), heads: Arc::new(heads) };
        *self.shared.view.write().unwrap() = Arc::new(next);
        Ok(())
    }

    pub fn import_partition_from(&self, folder: &FolderPath, file: impl AsRef<Path>) -> Result<()> {
        let bytes = std::fs::read(file)?;
        self.import_partition(folder, &PartitionChunk::decode(&bytes)?)
    }
}

#[cfg(test)]
mod tests;
