//! Durable backend: one directory per store.
//!
//! ```text
//! MANIFEST      "CDBS" | u16 format version | u64 creation time (unix ms)
//! catalog.log   framed catalog events; each session ends in a commit mark
//! f<id>.log     framed object records, or a packed tiny column
//! f<id>.idx     optional checkpoint image of the folder
//! LOCK          pid of the writing process
//! ```
//!
//! A commit mark lists, per folder, the byte range the session appended to
//! that folder's log and a CRC32 over it. Recovery accepts the longest
//! prefix of commits whose ranges are intact and cuts everything after it.
//!
//! Tiny columns hold 16 bytes per sample (`u64` timestamp, 8 value bytes)
//! and a `u32` CRC32 after every 4096 samples.

use std::collections::{HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufWriter, ErrorKind, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rustc_hash::FxHashMap;

use super::codec::{crc, read_frame, Dec, Enc, Frame};
use super::lock::{acquire, LockGuard};
use super::{
    encode_marks, Backend, BackendStats, CatalogEvent, FolderId, FolderMark, FolderRecord, RecordRef,
    RecoveredCommit, RecoveredImage, Recovery, EV_ABORT, EV_COMMIT,
};
use crate::error::{Error, Result};
use crate::model::NodeKind;

pub const MANIFEST_MAGIC: &[u8; 4] = b"CDBS";
pub const FORMAT_VERSION: u16 = 1;
pub const INDEX_MAGIC: &[u8; 4] = b"CDBI";

pub const TINY_BLOCK_SAMPLES: u64 = 4096;
pub const TINY_SAMPLE_BYTES: u64 = 16;
const TINY_BLOCK_DATA: u64 = TINY_BLOCK_SAMPLES * TINY_SAMPLE_BYTES;
const TINY_BLOCK_BYTES: u64 = TINY_BLOCK_DATA + 4;

const MANIFEST: &str = "MANIFEST";
const CATALOG: &str = "catalog.log";

#[derive(Debug, Clone, Copy)]
pub struct OpenOptions {
    /// Initialise the directory if it holds no store yet.
    pub create: bool,
    /// Skip the writer lock; every mutation fails with `ReadOnlyStore`.
    pub read_only: bool,
    /// `fsync` logs at every commit.
    pub sync: bool,
}

impl Default for OpenOptions {
    fn default() -> Self {
        Self { create: true, read_only: false, sync: true }
    }
}

fn log_name(id: FolderId) -> String {
    format!("f{id}.log")
}

fn idx_name(id: FolderId) -> String {
    format!("f{id}.idx")
}

/// Number of samples held by a tiny column of `len` bytes.
pub fn tiny_samples_in(len: u64) -> u64 {
    (len / TINY_BLOCK_BYTES) * TINY_BLOCK_SAMPLES + (len % TINY_BLOCK_BYTES) / TINY_SAMPLE_BYTES
}

struct FolderLog {
    file: Option<BufWriter<File>>,
    tiny: bool,
    committed_len: u64,
    len: u64,
    session: crc32fast::Hasher,
    samples: u64,
    committed_samples: u64,
    block: crc32fast::Hasher,
    committed_block: crc32fast::Hasher,
}

impl FolderLog {
    fn new(tiny: bool, len: u64, partial_block: &[u8]) -> Self {
        let mut block = crc32fast::Hasher::new();
        block.update(partial_block);
        let samples = if tiny { tiny_samples_in(len) } else { 0 };
        Self {
            file: None,
            tiny,
            committed_len: len,
            len,
            session: crc32fast::Hasher::new(),
            samples,
            committed_samples: samples,
            committed_block: block.clone(),
            block,
        }
    }

    fn dirty(&self) -> bool {
        self.len != self.committed_len
    }
}

struct RawCommit {
    position: u64,
    aborted: bool,
    events: Vec<CatalogEvent>,
    entries: Vec<CommitEntry>,
    marks: Vec<FolderMark>,
}

#[derive(Debug, Clone, Copy)]
struct CommitEntry {
    folder: FolderId,
    start: u64,
    end: u64,
    crc: u32,
}

struct Image {
    covered: u64,
    folder_len: u64,
    bytes: Vec<u8>,
}

pub struct FileBackend {
    dir: PathBuf,
    opts: OpenOptions,
    _lock: Option<LockGuard>,
    catalog: Option<File>,
    catalog_len: u64,
    logs: FxHashMap<FolderId, FolderLog>,
    kinds: FxHashMap<FolderId, NodeKind>,
    stats: BackendStats,
    scratch: Vec<u8>,
}

impl std::fmt::Debug for FileBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FileBackend").field("dir", &self.dir).field("catalog_len", &self.catalog_len).finish()
    }
}

impl FileBackend {
    pub fn open(dir: impl AsRef<Path>, opts: OpenOptions) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        if dir.exists() && !dir.is_dir() {
            return Err(Error::corrupt(format!("{} is not a directory", dir.display())));
        }
        let manifest = dir.join(MANIFEST);
        if !manifest.exists() {
            if !opts.create || opts.read_only {
                return Err(Error::StoreNotFound(dir.display().to_string()));
            }
            fs::create_dir_all(&dir)?;
            let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0);
            let mut e = Enc::new();
            e.raw(MANIFEST_MAGIC).u16(FORMAT_VERSION).u64(created);
            let tmp = dir.join("MANIFEST.tmp");
            fs::write(&tmp, &e.buf)?;
            File::open(&tmp)?.sync_all()?;
            fs::rename(&tmp, &manifest)?;
        }
        let bytes = fs::read(&manifest)?;
        if bytes.len() != 14 || &bytes[..4] != MANIFEST_MAGIC {
            return Err(Error::corrupt("bad MANIFEST magic"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FORMAT_VERSION {
            return Err(Error::corrupt(format!("unsupported format version {version}")));
        }
        let lock = if opts.read_only { None } else { Some(acquire(&dir)?) };
        Ok(Self {
            dir,
            opts,
            _lock: lock,
            catalog: None,
            catalog_len: 0,
            logs: FxHashMap::default(),
            kinds: FxHashMap::default(),
            stats: BackendStats::default(),
            scratch: Vec::with_capacity(256),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn writable(&self) -> Result<()> {
        if self.opts.read_only {
            Err(Error::ReadOnlyStore)
        } else {
            Ok(())
        }
    }

    fn read_catalog(&self, bytes: &[u8]) -> Result<(Vec<RawCommit>, u64)> {
        let mut commits = Vec::new();
        let mut events = Vec::new();
        let mut pos = 0usize;
        let mut valid = 0u64;
        while let Frame::Record { kind, body, next } = read_frame(bytes, pos) {
            pos = next;
            match kind {
                EV_COMMIT | EV_ABORT => {
                    let mut d = Dec::new(body);
                    let n = d.u32()?;
                    let mut entries = Vec::new();
                    let mut marks = Vec::new();
                    for _ in 0..n {
                        let folder = d.u64()?;
                        if kind == EV_COMMIT {
                            let (start, end, crc) = (d.u64()?, d.u64()?, d.u32()?);
                            entries.push(CommitEntry { folder, start, end, crc });
                        }
                        marks.push(FolderMark { folder, next_seq: d.u64()? });
                    }
                    valid = pos as u64;
                    commits.push(RawCommit {
                        position: valid,
                        aborted: kind == EV_ABORT,
                        events: std::mem::take(&mut events),
                        entries,
                        marks,
                    });
                }
                _ => events.push(CatalogEvent::decode(kind, body)?),
            }
        }
        Ok((commits, valid))
    }

    fn read_image(&self, id: FolderId) -> Option<Image> {
        let bytes = fs::read(self.dir.join(idx_name(id))).ok()?;
        if bytes.len() < 4 + 2 + 8 * 3 + 4 + 4 || &bytes[..4] != INDEX_MAGIC {
            return None;
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 4);
        if crc(body) != u32::from_le_bytes(trailer.try_into().ok()?) {
            return None;
        }
        let mut d = Dec::new(&body[4..]);
        if d.u16().ok()? != FORMAT_VERSION || d.u64().ok()? != id {
            return None;
        }
        let covered = d.u64().ok()?;
        let folder_len = d.u64().ok()?;
        let image = d.bytes().ok()?.to_vec();
        d.is_empty().then_some(Image { covered, folder_len, bytes: image })
    }

    /// Decodes `bytes[start..end]` of a folder log.
    fn parse_range(tiny: bool, bytes: &[u8], start: u64, end: u64) -> Option<Vec<FolderRecord>> {
        let mut out = Vec::new();
        if tiny {
            let mut pos = start - start % TINY_BLOCK_BYTES;
            while pos < end {
                let data_end = pos + TINY_BLOCK_DATA;
                let stop = if data_end + 4 <= end {
                    let stored = u32::from_le_bytes(bytes[data_end as usize..data_end as usize + 4].try_into().unwrap());
                    if crc(&bytes[pos as usize..data_end as usize]) != stored {
                        return None;
                    }
                    data_end
                } else {
                    end
                };
                let from = pos.max(start);
                if !(stop - from).is_multiple_of(TINY_SAMPLE_BYTES) || !(from - pos).is_multiple_of(TINY_SAMPLE_BYTES) {
                    return None;
                }
                for chunk in bytes[from as usize..stop as usize].chunks_exact(16) {
                    out.push(FolderRecord::Tiny {
                        at: u64::from_le_bytes(chunk[..8].try_into().unwrap()),
                        bits: u64::from_le_bytes(chunk[8..].try_into().unwrap()),
                    });
                }
                pos = if stop == data_end { data_end + 4 } else { end };
            }
        } else {
            let slice = &bytes[..end as usize];
            let mut pos = start as usize;
            while pos < end as usize {
                match read_frame(slice, pos) {
                    Frame::Record { kind, body, next } => {
                        out.push(FolderRecord::decode(kind, body).ok()?.1);
                        pos = next;
                    }
                    _ => return None,
                }
            }
        }
        Some(out)
    }

    fn open_log(&mut self, id: FolderId) -> Result<&mut FolderLog> {
        if self.logs.get(&id).is_some_and(|l| l.file.is_some()) {
            return Ok(self.logs.get_mut(&id).unwrap());
        }
        let tiny = self.kinds.get(&id) == Some(&NodeKind::TinyFolder);
        let fresh = !self.logs.contains_key(&id);
        let log = self.logs.entry(id).or_insert_with(|| FolderLog::new(tiny, 0, &[]));
        if log.file.is_none() {
            let mut f = fs::OpenOptions::new().create(true).truncate(false).read(true).write(true).open(self.dir.join(log_name(id)))?;
            // ids of folders lost in recovery get reused; drop their leftovers
            if fresh {
                f.set_len(0)?;
                let _ = fs::remove_file(self.dir.join(idx_name(id)));
            }
            f.seek(SeekFrom::Start(log.len))?;
            log.file = Some(BufWriter::with_capacity(64 * 1024, f));
        }
        Ok(log)
    }
}

impl Backend for FileBackend {
    fn durable(&self) -> bool {
        true
    }

    fn recover(&mut self) -> Result<Recovery> {
        let catalog_path = self.dir.join(CATALOG);
        let catalog_bytes = match fs::read(&catalog_path) {
            Ok(b) => b,
            Err(e) if e.kind() == ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let (raw, _) = self.read_catalog(&catalog_bytes)?;

        let mut kinds = HashMap::new();
        for c in raw.iter().filter(|c| !c.aborted) {
            for ev in &c.events {
                if let CatalogEvent::CreateNode(n) = ev {
                    kinds.insert(n.id, n.kind);
                }
            }
        }
        let mut folder_bytes: HashMap<FolderId, Vec<u8>> = HashMap::new();
        for &id in kinds.keys() {
            match fs::read(self.dir.join(log_name(id))) {
                Ok(b) => {
                    folder_bytes.insert(id, b);
                }
                Err(e) if e.kind() == ErrorKind::NotFound => {}
                Err(e) => return Err(e.into()),
            }
        }
        let mut images: HashMap<FolderId, Image> = HashMap::new();
        for &id in kinds.keys() {
            if let Some(img) = self.read_image(id) {
                let have = folder_bytes.get(&id).map_or(0, |b| b.len() as u64);
                if img.folder_len <= have {
                    images.insert(id, img);
                }
            }
        }

        // Longest intact prefix of commits; images that claim to cover more
        // than that prefix are dropped and the walk repeated.
        let (valid, walked, ends) = loop {
            let mut ends: HashMap<FolderId, u64> = images.iter().map(|(id, im)| (*id, im.folder_len)).collect();
            let mut walked = Vec::new();
            let mut valid = 0usize;
            'commits: for c in &raw {
                let mut records = Vec::new();
                let mut next_ends = Vec::new();
                if !c.aborted {
                    for e in &c.entries {
                        let covered = images.get(&e.folder).is_some_and(|im| im.covered >= c.position);
                        if covered {
                            continue;
                        }
                        let expect = ends.get(&e.folder).copied().unwrap_or(0);
                        let bytes = folder_bytes.get(&e.folder).map(Vec::as_slice).unwrap_or(&[]);
                        if e.start != expect || e.end < e.start || e.end > bytes.len() as u64 {
                            break 'commits;
                        }
                        if crc(&bytes[e.start as usize..e.end as usize]) != e.crc {
                            break 'commits;
                        }
                        let tiny = kinds.get(&e.folder) == Some(&NodeKind::TinyFolder);
                        let Some(recs) = Self::parse_range(tiny, bytes, e.start, e.end) else {
                            break 'commits;
                        };
                        next_ends.push((e.folder, e.end));
                        if !recs.is_empty() {
                            records.push((e.folder, recs));
                        }
                    }
                }
                for (f, end) in next_ends {
                    ends.insert(f, end);
                }
                walked.push(records);
                valid += 1;
            }
            let valid_pos = valid.checked_sub(1).map_or(0, |i| raw[i].position);
            let stale: Vec<FolderId> = images.iter().filter(|(_, im)| im.covered > valid_pos).map(|(id, _)| *id).collect();
            if stale.is_empty() {
                break (valid, walked, ends);
            }
            for id in stale {
                images.remove(&id);
                if !self.opts.read_only {
                    let _ = fs::remove_file(self.dir.join(idx_name(id)));
                }
            }
        };

        let valid_pos = valid.checked_sub(1).map_or(0, |i| raw[i].position);
        let mut replayed = 0u64;
        let mut commits = Vec::with_capacity(valid);
        let mut live_kinds = FxHashMap::default();
        for (c, records) in raw.into_iter().take(valid).zip(walked) {
            replayed += records.iter().map(|(_, r)| r.len() as u64).sum::<u64>();
            if !c.aborted {
                for ev in &c.events {
                    if let CatalogEvent::CreateNode(n) = ev {
                        live_kinds.insert(n.id, n.kind);
                    }
                }
            }
            commits.push(RecoveredCommit {
                position: c.position,
                aborted: c.aborted,
                events: c.events,
                records,
                marks: c.marks,
            });
        }

        if !self.opts.read_only {
            let f = fs::OpenOptions::new().create(true).truncate(false).read(true).write(true).open(&catalog_path)?;
            f.set_len(valid_pos)?;
            self.catalog = Some(f);
        }
        self.catalog_len = valid_pos;
        for (&id, &kind) in &live_kinds {
            let len = ends.get(&id).copied().unwrap_or(0);
            let tiny = kind == NodeKind::TinyFolder;
            let bytes = folder_bytes.get(&id).map(Vec::as_slice).unwrap_or(&[]);
            if !self.opts.read_only && (bytes.len() as u64) != len {
                let f = fs::OpenOptions::new().create(true).truncate(false).write(true).open(self.dir.join(log_name(id)))?;
                f.set_len(len)?;
            }
            let partial = if tiny { &bytes[(len - len % TINY_BLOCK_BYTES) as usize..len as usize] } else { &[][..] };
            self.logs.insert(id, FolderLog::new(tiny, len, partial));
        }
        self.kinds = live_kinds;
        self.stats = BackendStats { replayed_records: replayed, images_loaded: images.len() as u64 };
        Ok(Recovery {
            commits,
            images: images.into_iter().map(|(id, im)| (id, RecoveredImage { covered: im.covered, bytes: im.bytes })).collect(),
        })
    }

    fn register(&mut self, folder: FolderId, kind: NodeKind) {
        self.kinds.insert(folder, kind);
    }

    fn append(&mut self, folder: FolderId, rec: RecordRef<'_>) -> Result<()> {
        self.writable()?;
        let mut buf = std::mem::take(&mut self.scratch);
        let log = self.open_log(folder)?;
        let file = log.file.as_mut().unwrap();
        match rec {
            RecordRef::Tiny { at, bits } if log.tiny => {
                let mut buf = [0u8; 16];
                buf[..8].copy_from_slice(&at.to_le_bytes());
                buf[8..].copy_from_slice(&bits.to_le_bytes());
                file.write_all(&buf)?;
                log.session.update(&buf);
                log.block.update(&buf);
                log.len += 16;
                log.samples += 1;
                if log.samples % TINY_BLOCK_SAMPLES == 0 {
                    let sum = std::mem::take(&mut log.block).finalize().to_le_bytes();
                    file.write_all(&sum)?;
                    log.session.update(&sum);
                    log.len += 4;
                }
            }
            RecordRef::Tiny { .. } => return Err(Error::corrupt("tiny sample written to an object log")),
            rec => {
                if log.tiny {
                    return Err(Error::corrupt("object record written to a tiny column"));
                }
                buf.clear();
                rec.frame_into(folder, &mut buf);
                file.write_all(&buf)?;
                log.session.update(&buf);
                log.len += buf.len() as u64;
            }
        }
        self.scratch = buf;
        Ok(())
    }

    fn commit(&mut self, events: &[CatalogEvent], marks: &[FolderMark]) -> Result<()> {
        self.writable()?;
        let mut e = Enc::new();
        e.u32(marks.len() as u32);
        let touched: HashSet<FolderId> = marks.iter().map(|m| m.folder).collect();
        let sync = self.opts.sync;
        for m in marks {
            let log = self.open_log(m.folder)?;
            let dirty = log.dirty();
            let file = log.file.as_mut().unwrap();
            file.flush()?;
            if sync && dirty {
                file.get_ref().sync_data()?;
            }
            let log = self.logs.get(&m.folder).unwrap();
            e.u64(m.folder).u64(log.committed_len).u64(log.len).u32(log.session.clone().finalize()).u64(m.next_seq);
        }
        debug_assert!(self.logs.iter().all(|(id, l)| !l.dirty() || touched.contains(id)));
        let mut buf = Vec::new();
        for ev in events {
            ev.frame_into(&mut buf);
        }
        super::codec::frame_into(&mut buf, EV_COMMIT, &e.buf);
        let catalog = self.catalog.as_mut().ok_or(Error::ReadOnlyStore)?;
        catalog.seek(SeekFrom::Start(self.catalog_len))?;
        catalog.write_all(&buf)?;
        if self.opts.sync {
            catalog.sync_data()?;
        }
        self.catalog_len += buf.len() as u64;
        for m in marks {
            let log = self.logs.get_mut(&m.folder).unwrap();
            log.committed_len = log.len;
            log.committed_samples = log.samples;
            log.committed_block = log.block.clone();
            log.session = crc32fast::Hasher::new();
        }
        Ok(())
    }

    fn abort(&mut self, marks: &[FolderMark]) -> Result<()> {
        self.writable()?;
        for log in self.logs.values_mut().filter(|l| l.dirty()) {
            if let Some(mut file) = log.file.take() {
                file.flush()?;
                let f = file.into_inner().map_err(|e| e.into_error())?;
                f.set_len(log.committed_len)?;
            }
            log.len = log.committed_len;
            log.samples = log.committed_samples;
            log.block = log.committed_block.clone();
            log.session = crc32fast::Hasher::new();
        }
        if marks.is_empty() {
            return Ok(());
        }
        let mut e = Enc::new();
        encode_marks(&mut e, marks);
        let mut buf = Vec::new();
        super::codec::frame_into(&mut buf, EV_ABORT, &e.buf);
        let catalog = self.catalog.as_mut().ok_or(Error::ReadOnlyStore)?;
        catalog.seek(SeekFrom::Start(self.catalog_len))?;
        catalog.write_all(&buf)?;
        self.catalog_len += buf.len() as u64;
        Ok(())
    }

    fn checkpoint(&mut self, images: &[(FolderId, Vec<u8>)]) -> Result<()> {
        self.writable()?;
        for (id, image) in images {
            let folder_len = self.logs.get(id).map_or(0, |l| l.committed_len);
            let mut e = Enc::new();
            e.raw(INDEX_MAGIC).u16(FORMAT_VERSION).u64(*id).u64(self.catalog_len).u64(folder_len).bytes(image);
            let sum = crc(&e.buf);
            e.u32(sum);
            let tmp = self.dir.join(format!("{}.tmp", idx_name(*id)));
            let mut f = File::create(&tmp)?;
            f.write_all(&e.buf)?;
            f.sync_all()?;
            fs::rename(&tmp, self.dir.join(idx_name(*id)))?;
        }
        Ok(())
    }

    fn stats(&self) -> BackendStats {
        self.stats
    }
}
