use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::Ordering;
use std::sync::Arc;

use super::{
    image, is_valid_name, legacy, now_millis, Body, FolderData, FolderDescription, Head, Node, NodeInfo, Selector,
    Store, StoreStrategy, TagSnapshot, TinySample, View, Visible,
};
use crate::error::{Error, Result};
use crate::model::{
    validate_payload, FolderPath, Kind, NodeKind, PayloadSchema, PayloadValue, TimePoint, ValidityInterval, Value,
};
use crate::partition::{Axis, PartitionPolicy};
use crate::storage::{CatalogEvent, FolderId, FolderMark, FolderRecord, NodeRecord, RecordRef, Recovery};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionMode {
    Read,
    Update,
}

/// Uncommitted state of an update session.
struct Txn {
    nodes: Arc<BTreeMap<FolderPath, Arc<Node>>>,
    tags: Arc<BTreeMap<String, TagSnapshot>>,
    events: Vec<CatalogEvent>,
    /// Data folders written to or created by the session.
    touched: BTreeMap<FolderId, Arc<Node>>,
    created: BTreeSet<FolderId>,
}

/// A unit of work against a [`Store`].
///
/// Read sessions see the store as it was when they began. An update
/// session additionally sees its own writes; they become visible to others
/// at [`Session::commit`]. Dropping an open update session aborts it.
pub struct Session {
    store: Store,
    mode: SessionMode,
    /// Snapshot for read sessions; the state the update began from otherwise.
    view: Arc<View>,
    txn: Option<Txn>,
    closed: bool,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session").field("mode", &self.mode).field("closed", &self.closed).finish()
    }
}

fn bits_of(kind: Kind, value: &Value) -> Option<u64> {
    match (kind, value) {
        (Kind::Float64, Value::Float64(f)) => Some(f.to_bits()),
        (Kind::Int64, Value::Int64(i)) => Some(*i as u64),
        _ => None,
    }
}

fn value_of(kind: Kind, bits: u64) -> Value {
    match kind {
        Kind::Int64 => Value::Int64(bits as i64),
        _ => Value::Float64(f64::from_bits(bits)),
    }
}

fn interval(since: u64, till: u64) -> ValidityInterval {
    ValidityInterval::new(since, till).expect("resolved segments are non-empty")
}

impl Session {
    pub(crate) fn new_read(store: Store) -> Session {
        let view = store.view();
        Session { store, mode: SessionMode::Read, view, txn: None, closed: false }
    }

    pub(crate) fn new_update(store: Store) -> Result<Session> {
        // The role is handed back in `finish`.
        std::mem::forget(store.claim_writer()?);
        let view = store.view();
        let txn = Txn {
            nodes: view.nodes.clone(),
            tags: view.tags.clone(),
            events: Vec::new(),
            touched: BTreeMap::new(),
            created: BTreeSet::new(),
        };
        Ok(Session { store, mode: SessionMode::Update, view, txn: Some(txn), closed: false })
    }

    pub fn mode(&self) -> SessionMode {
        self.mode
    }

    pub fn is_open(&self) -> bool {
        !self.closed
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    fn check_open(&self) -> Result<()> {
        if self.closed {
            Err(Error::SessionClosed)
        } else {
            Ok(())
        }
    }

    fn txn(&mut self) -> Result<&mut Txn> {
        self.check_open()?;
        self.txn.as_mut().ok_or(Error::NoUpdateSession)
    }

    fn nodes(&self) -> &BTreeMap<FolderPath, Arc<Node>> {
        match &self.txn {
            Some(t) => &t.nodes,
            None => &self.view.nodes,
        }
    }

    fn tags(&self) -> &BTreeMap<String, TagSnapshot> {
        match &self.txn {
            Some(t) => &t.tags,
            None => &self.view.tags,
        }
    }

    fn node_of(&self, path: &FolderPath, kind: NodeKind) -> Result<Arc<Node>> {
        self.check_open()?;
        match self.nodes().get(path) {
            Some(n) if n.kind == kind => Ok(n.clone()),
            _ => Err(Error::NoSuchFolder(path.to_string())),
        }
    }

    fn data_node(&self, path: &FolderPath) -> Result<Arc<Node>> {
        self.check_open()?;
        match self.nodes().get(path) {
            Some(n) if n.data.is_some() => Ok(n.clone()),
            _ => Err(Error::NoSuchFolder(path.to_string())),
        }
    }

    /// What this session may see of a folder.
    fn head(&self, node: &Node, data: &FolderData) -> Head {
        match self.txn {
            Some(_) => data.head(),
            None => self.view.heads.get(&node.id).cloned().unwrap_or_default(),
        }
    }

    fn ceiling(&self, node: &Node, head: &Head, sel: &Selector) -> Result<u64> {
        match sel {
            Selector::Head => Ok(head.ceiling),
            Selector::AtSequence(s) if *s > head.ceiling => Err(Error::SequenceInFuture {
                folder: node.path.to_string(),
                requested: *s,
                head: head.ceiling,
            }),
            Selector::AtSequence(s) => Ok(*s),
            Selector::Tag(name) => {
                let tag = self.tags().get(name).ok_or_else(|| Error::NoSuchTag(name.clone()))?;
                tag.entries.get(&node.path).copied().ok_or_else(|| Error::FolderNotInTag {
                    tag: name.clone(),
                    folder: node.path.to_string(),
                })
            }
        }
    }

    fn unsupported(node: &Node) -> Error {
        Error::UnsupportedByStrategy { folder: node.path.to_string(), strategy: node.strategy.as_str() }
    }

    // ---- catalog -------------------------------------------------------

    fn check_new_path(&self, path: &FolderPath) -> Result<()> {
        let nodes = self.nodes();
        if path.is_root() || nodes.contains_key(path) {
            return Err(Error::AlreadyExists(path.to_string()));
        }
        let parent = path.parent().expect("non-root path has a parent");
        if !parent.is_root() {
            match nodes.get(&parent) {
                None => return Err(Error::NoSuchParent(path.to_string())),
                Some(n) if n.kind != NodeKind::Folderset => return Err(Error::ParentNotFolderset(path.to_string())),
                Some(_) => {}
            }
        }
        Ok(())
    }

    fn create(&mut self, mut record: NodeRecord) -> Result<()> {
        self.txn()?;
        self.check_new_path(&record.path)?;
        let mut w = self.store.shared.writer.lock().unwrap();
        record.id = w.next_id;
        w.next_id += 1;
        w.backend.register(record.id, record.kind);
        drop(w);
        let node = Node::from_record(record.clone());
        let txn = self.txn.as_mut().unwrap();
        if node.data.is_some() {
            txn.touched.insert(node.id, node.clone());
            txn.created.insert(node.id);
        }
        Arc::make_mut(&mut txn.nodes).insert(record.path.clone(), node);
        txn.events.push(CatalogEvent::CreateNode(record));
        Ok(())
    }

    pub fn create_folderset(&mut self, path: &FolderPath, description: &str) -> Result<()> {
        self.create(NodeRecord {
            id: 0,
            path: path.clone(),
            kind: NodeKind::Folderset,
            description: description.to_owned(),
            schema: None,
            policy: PartitionPolicy::NONE,
            strategy: StoreStrategy::Layered,
        })
    }

    pub fn create_folder(
        &mut self,
        path: &FolderPath,
        schema: &PayloadSchema,
        policy: PartitionPolicy,
        strategy: StoreStrategy,
        description: &str,
    ) -> Result<()> {
        policy.validate()?;
        if strategy == StoreStrategy::LegacyTruncate && policy.is_partitioned() {
            return Err(Error::UnsupportedByStrategy { folder: path.to_string(), strategy: strategy.as_str() });
        }
        self.create(NodeRecord {
            id: 0,
            path: path.clone(),
            kind: NodeKind::Folder,
            description: description.to_owned(),
            schema: Some(schema.clone()),
            policy,
            strategy,
        })
    }

    /// `schema` must be a single `float64` or `int64` attribute; `policy`
    /// may only split on time.
    pub fn create_tiny_folder(
        &mut self,
        path: &FolderPath,
        schema: &PayloadSchema,
        policy: PartitionPolicy,
        description: &str,
    ) -> Result<()> {
        match schema.attributes() {
            [a] if matches!(a.kind, Kind::Float64 | Kind::Int64) => {}
            _ => return Err(Error::InvalidSchema("tiny folders hold one float64 or int64 attribute".into())),
        }
        policy.validate()?;
        if policy.axis == Axis::Version {
            return Err(Error::InvalidArgument("tiny folders can only be partitioned by time".into()));
        }
        self.create(NodeRecord {
            id: 0,
            path: path.clone(),
            kind: NodeKind::TinyFolder,
            description: description.to_owned(),
            schema: Some(schema.clone()),
            policy,
            strategy: StoreStrategy::Layered,
        })
    }

    /// Children of a folderset (all descendants with `recursive`), or the
    /// folder itself.
    pub fn list(&self, path: &FolderPath, recursive: bool) -> Result<Vec<NodeInfo>> {
        self.check_open()?;
        let info = |n: &Node| NodeInfo { path: (*n.path).clone(), kind: n.kind, description: n.description.clone() };
        let nodes = self.nodes();
        if !path.is_root() {
            match nodes.get(path) {
                None => return Err(Error::NoSuchFolder(path.to_string())),
                Some(n) if n.kind != NodeKind::Folderset => return Ok(vec![info(n)]),
                Some(_) => {}
            }
        }
        Ok(nodes
            .range(path.clone()..)
            .skip_while(|(p, _)| *p == path)
            .take_while(|(p, _)| path.is_ancestor_of(p))
            .filter(|(p, _)| recursive || p.depth() == path.depth() + 1)
            .map(|(_, n)| info(n))
            .collect())
    }

    pub fn describe_folder(&self, path: &FolderPath) -> Result<FolderDescription> {
        let node = self.data_node(path)?;
        let data = node.data().read().unwrap();
        let head = self.head(&node, &data);
        let partitions = data
            .partitions()
            .into_iter()
            .filter(|p| match node.kind {
                NodeKind::TinyFolder => head.tiny_last.is_some_and(|l| p.summary.min_since <= l),
                _ => p.summary.min_seq <= head.ceiling,
            })
            .collect();
        Ok(FolderDescription {
            path: path.clone(),
            kind: node.kind,
            description: node.description.clone(),
            schema: node.schema.clone().expect("data folder has a schema"),
            strategy: node.strategy,
            policy: node.policy,
            count: head.count,
            max_seq: head.ceiling,
            partitions,
        })
    }

    // ---- objects -------------------------------------------------------

    /// Stores one object and returns its sequence number.
    pub fn store_object(&mut self, folder: &FolderPath, interval: ValidityInterval, payload: PayloadValue) -> Result<u64> {
        self.txn()?;
        let node = self.node_of(folder, NodeKind::Folder)?;
        validate_payload(node.schema.as_ref().expect("folder has a schema"), &payload)?;
        let mut data = node.data().write().unwrap();
        let seq = data.next_seq;
        data.check_store(folder, &interval)?;
        self.store.shared.writer.lock().unwrap().backend.append(
            node.id,
            RecordRef::Object { seq, interval, payload: &payload },
        )?;
        data.apply_store(&node.path, seq, interval, payload)?;
        drop(data);
        self.txn.as_mut().unwrap().touched.insert(node.id, node);
        Ok(seq)
    }

    pub fn find_object(&self, folder: &FolderPath, at: TimePoint, sel: &Selector) -> Result<Visible> {
        let t = at.queryable()?.0;
        let node = self.node_of(folder, NodeKind::Folder)?;
        let data = node.data().read().unwrap();
        let head = self.head(&node, &data);
        let found = match &data.body {
            Body::Layered(l) => {
                let ceiling = self.ceiling(&node, &head, sel)?;
                l.find(folder, t, ceiling, &self.store.shared.probes)?
                    .map(|(lo, hi, object)| Visible { effective: interval(lo, hi), object })
            }
            Body::Legacy(_) => {
                if *sel != Selector::Head {
                    return Err(Self::unsupported(&node));
                }
                let rows = head.rows.unwrap_or_default();
                legacy::find(&rows, t).map(|r| Visible { effective: interval(r.since, r.till), object: r.obj.clone() })
            }
            Body::Tiny(_) => unreachable!("node_of checked the kind"),
        };
        found.ok_or_else(|| Error::NoValidObject { folder: folder.to_string(), at: t })
    }

    /// The resolved view of `window`, ascending; effective intervals are
    /// clipped to the window and tile the covered part of it.
    pub fn browse_objects(&self, folder: &FolderPath, window: ValidityInterval, sel: &Selector) -> Result<Vec<Visible>> {
        let node = self.node_of(folder, NodeKind::Folder)?;
        let data = node.data().read().unwrap();
        let head = self.head(&node, &data);
        let (lo, hi) = (window.since().0, window.till().0);
        match &data.body {
            Body::Layered(l) => {
                let ceiling = self.ceiling(&node, &head, sel)?;
                Ok(l.browse(folder, lo, hi, ceiling, &self.store.shared.probes)?
                    .into_iter()
                    .map(|(s, object)| Visible { effective: interval(s.since, s.till), object })
                    .collect())
            }
            Body::Legacy(_) => {
                if *sel != Selector::Head {
                    return Err(Self::unsupported(&node));
                }
                let rows = head.rows.unwrap_or_default();
                Ok(legacy::browse(&rows, lo, hi)
                    .into_iter()
                    .map(|r| Visible { effective: interval(r.since, r.till), object: r.obj })
                    .collect())
            }
            Body::Tiny(_) => unreachable!("node_of checked the kind"),
        }
    }

    // ---- tags ----------------------------------------------------------

    fn check_tag_name(&self, name: &str) -> Result<()> {
        if !is_valid_name(name) {
            return Err(Error::InvalidArgument(format!("bad tag name {name:?}")));
        }
        if self.tags().contains_key(name) {
            return Err(Error::TagExists(name.to_owned()));
        }
        Ok(())
    }

    fn tag_target(&self, path: &FolderPath) -> Result<(Arc<Node>, u64)> {
        let node = self.data_node(path)?;
        if node.kind != NodeKind::Folder {
            return Err(Error::UnsupportedByStrategy { folder: path.to_string(), strategy: "tiny" });
        }
        if node.strategy != StoreStrategy::Layered {
            return Err(Self::unsupported(&node));
        }
        let head = node.data().read().unwrap().max_seq;
        Ok((node, head))
    }

    fn add_tag(&mut self, tag: TagSnapshot) -> Result<TagSnapshot> {
        let txn = self.txn()?;
        Arc::make_mut(&mut txn.tags).insert(tag.name.clone(), tag.clone());
        txn.events.push(CatalogEvent::CreateTag(tag.clone()));
        Ok(tag)
    }

    /// Tags the newest sequence of each folder as this session sees it.
    pub fn tag_head(&mut self, folders: &[FolderPath], name: &str) -> Result<TagSnapshot> {
        self.txn()?;
        self.check_tag_name(name)?;
        if folders.is_empty() {
            return Err(Error::InvalidArgument("a tag needs at least one folder".into()));
        }
        let mut entries = BTreeMap::new();
        for f in folders {
            let (_, head) = self.tag_target(f)?;
            entries.insert(f.clone(), head);
        }
        self.add_tag(TagSnapshot { name: name.to_owned(), entries, created_at: now_millis() })
    }

    /// Tags an explicit sequence, typically one returned by `store_object`.
    pub fn tag_at_sequence(&mut self, folder: &FolderPath, seq: u64, name: &str) -> Result<TagSnapshot> {
        self.txn()?;
        self.check_tag_name(name)?;
        let (_, head) = self.tag_target(folder)?;
        if seq > head {
            return Err(Error::SequenceInFuture { folder: folder.to_string(), requested: seq, head });
        }
        let entries = BTreeMap::from([(folder.clone(), seq)]);
        self.add_tag(TagSnapshot { name: name.to_owned(), entries, created_at: now_millis() })
    }

    pub fn list_tags(&self) -> Result<Vec<TagSnapshot>> {
        self.check_open()?;
        Ok(self.tags().values().cloned().collect())
    }

    pub fn resolve_tag(&self, name: &str) -> Result<TagSnapshot> {
        self.check_open()?;
        self.tags().get(name).cloned().ok_or_else(|| Error::NoSuchTag(name.to_owned()))
    }

    // ---- tiny folders --------------------------------------------------

    pub fn tiny_append(&mut self, folder: &FolderPath, at: TimePoint, value: &Value) -> Result<()> {
        self.txn()?;
        let node = self.node_of(folder, NodeKind::TinyFolder)?;
        if at == TimePoint::PLUS_INF {
            return Err(Error::InvalidTime(at.0));
        }
        let mut data = node.data().write().unwrap();
        let Body::Tiny(t) = &data.body else { unreachable!("node_of checked the kind") };
        let bits = bits_of(t.kind, value).ok_or_else(|| Error::SchemaMismatch {
            position: 0,
            reason: format!("expected {}, got {}", t.kind, value.kind()),
        })?;
        t.check_append(folder, at.0)?;
        self.store.shared.writer.lock().unwrap().backend.append(node.id, RecordRef::Tiny { at: at.0, bits })?;
        data.apply_tiny(folder, at.0, bits)?;
        drop(data);
        self.txn.as_mut().unwrap().touched.insert(node.id, node);
        Ok(())
    }

    pub fn tiny_read(&self, folder: &FolderPath, at: TimePoint) -> Result<TinySample> {
        let t = at.queryable()?.0;
        let node = self.node_of(folder, NodeKind::TinyFolder)?;
        let data = node.data().read().unwrap();
        let head = self.head(&node, &data);
        let Body::Tiny(tiny) = &data.body else { unreachable!("node_of checked the kind") };
        let step = tiny
            .read(folder, t, head.tiny_last, &self.store.shared.probes)?
            .ok_or_else(|| Error::NoValidObject { folder: folder.to_string(), at: t })?;
        Ok(TinySample {
            at: TimePoint(step.at),
            value: value_of(tiny.kind, step.bits),
            effective: interval(step.at, step.next),
        })
    }

    /// Samples in force anywhere in `window`, ascending.
    pub fn tiny_scan(&self, folder: &FolderPath, window: ValidityInterval) -> Result<Vec<(TimePoint, Value)>> {
        let node = self.node_of(folder, NodeKind::TinyFolder)?;
        let data = node.data().read().unwrap();
        let head = self.head(&node, &data);
        let Body::Tiny(tiny) = &data.body else { unreachable!("node_of checked the kind") };
        let samples =
            tiny.scan(folder, window.since().0, window.till().0, head.tiny_last, &self.store.shared.probes)?;
        Ok(samples.into_iter().map(|(at, bits)| (TimePoint(at), value_of(tiny.kind, bits))).collect())
    }

    // ---- completion ----------------------------------------------------

    fn finish(&mut self) {
        self.closed = true;
        if self.txn.take().is_some() {
            self.store.shared.busy.store(false, Ordering::Release);
        }
    }

    /// Publishes the session's writes. Closes the session either way.
    pub fn commit(&mut self) -> Result<()> {
        self.check_open()?;
        let Some(txn) = self.txn.as_ref() else {
            self.finish();
            return Ok(());
        };
        let marks: Vec<FolderMark> = txn
            .touched
            .values()
            .map(|n| FolderMark { folder: n.id, next_seq: n.data().read().unwrap().next_seq })
            .collect();
        let result = self.store.shared.writer.lock().unwrap().backend.commit(&txn.events, &marks);
        if let Err(e) = result {
            let _ = self.rollback();
            return Err(e);
        }
        let txn = self.txn.as_ref().unwrap();
        let mut heads = (*self.view.heads).clone();
        for n in txn.touched.values() {
            heads.insert(n.id, n.data().read().unwrap().head());
        }
        let view = View { nodes: txn.nodes.clone(), tags: txn.tags.clone(), heads: Arc::new(heads) };
        *self.store.shared.view.write().unwrap() = Arc::new(view);
        self.finish();
        Ok(())
    }

    fn rollback(&mut self) -> Result<()> {
        let txn = self.txn.as_ref().expect("update session");
        let mut marks = Vec::new();
        for (id, n) in &txn.touched {
            if txn.created.contains(id) {
                continue;
            }
            let mut data = n.data().write().unwrap();
            data.rollback(self.view.heads.get(id).unwrap_or(&Head::default()));
            marks.push(FolderMark { folder: *id, next_seq: data.next_seq });
        }
        let result = self.store.shared.writer.lock().unwrap().backend.abort(&marks);
        self.finish();
        result
    }

    /// Discards the session's writes. Sequence numbers it used stay burned.
    pub fn abort(&mut self) -> Result<()> {
        self.check_open()?;
        if self.txn.is_none() {
            self.finish();
            return Ok(());
        }
        self.rollback()
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        if self.txn.is_some() {
            let _ = self.rollback();
        }
    }
}

/// Rebuilds the committed state from a backend's recovery stream.
pub(crate) fn replay(recovery: Recovery) -> Result<(View, FolderId)> {
    let Recovery { commits, images } = recovery;
    let mut nodes: BTreeMap<FolderPath, Arc<Node>> = BTreeMap::new();
    let mut by_id: HashMap<FolderId, Arc<Node>> = HashMap::new();
    let mut tags = BTreeMap::new();
    let mut next_id = 1;
    let corrupt = |what: &str, id: FolderId| Error::corrupt(format!("{what} for unknown folder {id}"));
    for c in commits {
        let covered = |id: FolderId| images.get(&id).is_some_and(|im| im.covered >= c.position);
        if !c.aborted {
            let mut imported = HashMap::new();
            for ev in c.events {
                match ev {
                    CatalogEvent::CreateNode(r) => {
                        let id = r.id;
                        next_id = next_id.max(id + 1);
                        let node = Node::from_record(r);
                        if let (Some(data), Some(im)) = (&node.data, images.get(&id)) {
                            image::decode_into(&mut data.write().unwrap(), &node.path, &im.bytes)?;
                        }
                        nodes.insert((*node.path).clone(), node.clone());
                        by_id.insert(id, node);
                    }
                    CatalogEvent::CreateTag(t) => {
                        tags.insert(t.name.clone(), t);
                    }
                    CatalogEvent::Evicted { folder, index } if !covered(folder) => {
                        let node = by_id.get(&folder).ok_or_else(|| corrupt("eviction", folder))?;
                        node.data().write().unwrap().evict(&node.path, index)?;
                    }
                    CatalogEvent::Imported { folder, index } => {
                        imported.insert(folder, index);
                    }
                    CatalogEvent::Evicted { .. } => {}
                }
            }
            for (id, records) in c.records {
                let node = by_id.get(&id).ok_or_else(|| corrupt("records", id))?;
                let mut data = node.data.as_ref().ok_or_else(|| corrupt("records", id))?.write().unwrap();
                if let Some(&index) = imported.get(&id) {
                    data.import(&node.path, index, &records)?;
                    continue;
                }
                for r in records {
                    match r {
                        FolderRecord::Object { seq, interval, payload } => {
                            data.apply_store(&node.path, seq, interval, payload)?;
                        }
                        FolderRecord::Tiny { at, bits } => data.apply_tiny(&node.path, at, bits)?,
                    }
                }
            }
        }
        for m in c.marks {
            if let Some(node) = by_id.get(&m.folder) {
                if let Some(data) = &node.data {
                    let mut data = data.write().unwrap();
                    data.next_seq = data.next_seq.max(m.next_seq);
                }
            }
        }
    }
    let heads = by_id
        .values()
        .filter_map(|n| n.data.as_ref().map(|d| (n.id, d.read().unwrap().head())))
        .collect();
    Ok((View { nodes: Arc::new(nodes), tags: Arc::new(tags), heads: Arc::new(heads) }, next_id))
}
