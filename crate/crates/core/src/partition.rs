//! Intra-folder partitioning along the time or version axis, and the
//! portable chunk file used to move a partition in and out of a store.

use std::fmt;
use std::str::FromStr;

use crate::engine::StoreStrategy;
use crate::error::{Error, Result};
use crate::model::{NodeKind, PayloadSchema, ValidityInterval};
use crate::storage::codec::{crc, read_frame, Dec, Enc, Frame};
use crate::storage::{FolderId, FolderRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    None,
    Time,
    Version,
}

impl Axis {
    pub(crate) fn code(self) -> u8 {
        match self {
            Axis::None => 0,
            Axis::Time => 1,
            Axis::Version => 2,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Axis> {
        match c {
            0 => Some(Axis::None),
            1 => Some(Axis::Time),
            2 => Some(Axis::Version),
            _ => None,
        }
    }
}

/// How a folder's objects are split into chunks. Frozen at folder creation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PartitionPolicy {
    pub axis: Axis,
    /// Ticks per partition on the time axis, sequences per partition on the
    /// version axis. Zero for [`Axis::None`].
    pub chunk: u64,
}

impl PartitionPolicy {
    pub const NONE: PartitionPolicy = PartitionPolicy { axis: Axis::None, chunk: 0 };

    pub fn time(chunk: u64) -> Result<Self> {
        Self::checked(Axis::Time, chunk)
    }

    pub fn version(chunk: u64) -> Result<Self> {
        Self::checked(Axis::Version, chunk)
    }

    fn checked(axis: Axis, chunk: u64) -> Result<Self> {
        if chunk == 0 {
            return Err(Error::InvalidSchema("partition chunk must be positive".into()));
        }
        Ok(Self { axis, chunk })
    }

    pub(crate) fn validate(&self) -> Result<()> {
        match self.axis {
            Axis::None if self.chunk != 0 => Err(Error::InvalidSchema("unpartitioned policy with a chunk size".into())),
            Axis::None => Ok(()),
            _ => Self::checked(self.axis, self.chunk).map(|_| ()),
        }
    }

    pub fn is_partitioned(&self) -> bool {
        self.axis != Axis::None
    }
}

impl Default for PartitionPolicy {
    fn default() -> Self {
        Self::NONE
    }
}

impl fmt::Display for PartitionPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.axis {
            Axis::None => f.write_str("none"),
            Axis::Time => write!(f, "time:{}", self.chunk),
            Axis::Version => write!(f, "version:{}", self.chunk),
        }
    }
}

impl FromStr for PartitionPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "none" {
            return Ok(Self::NONE);
        }
        let (axis, chunk) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidArgument(format!("expected time:CHUNK or version:CHUNK, got {s:?}")))?;
        let chunk = chunk
            .parse::<u64>()
            .map_err(|_| Error::InvalidArgument(format!("bad chunk size {chunk:?}")))?;
        match axis {
            "time" => Self::time(chunk),
            "version" => Self::version(chunk),
            _ => Err(Error::InvalidArgument(format!("unknown partition axis {axis:?}"))),
        }
    }
}

/// Partition an object belongs to: by `since` on the time axis, by
/// sequence on the version axis. Always 0 for unpartitioned folders.
pub fn partition_of(policy: &PartitionPolicy, interval: &ValidityInterval, seq: u64) -> u64 {
    match policy.axis {
        Axis::None => 0,
        Axis::Time => interval.since().0 / policy.chunk,
        Axis::Version => seq.saturating_sub(1) / policy.chunk,
    }
}

/// Bounds of a partition's contents; kept while the partition is evicted so
/// that reads can be routed (and refused) without its records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartitionSummary {
    pub min_since: u64,
    pub max_till: u64,
    pub min_seq: u64,
    pub max_seq: u64,
    pub count: u64,
}

impl PartitionSummary {
    pub(crate) fn of(since: u64, till: u64, seq: u64) -> Self {
        Self { min_since: since, max_till: till, min_seq: seq, max_seq: seq, count: 1 }
    }

    pub(crate) fn add(&mut self, since: u64, till: u64, seq: u64) {
        self.min_since = self.min_since.min(since);
        self.max_till = self.max_till.max(till);
        self.min_seq = self.min_seq.min(seq);
        self.max_seq = self.max_seq.max(seq);
        self.count += 1;
    }

    /// Whether any content may be valid somewhere in `[lo, hi)`.
    pub fn overlaps(&self, lo: u64, hi: u64) -> bool {
        self.min_since < hi && lo < self.max_till
    }

    pub(crate) fn encode(&self, e: &mut Enc) {
        e.u64(self.min_since).u64(self.max_till).u64(self.min_seq).u64(self.max_seq).u64(self.count);
    }

    pub(crate) fn decode(d: &mut Dec<'_>) -> Result<Self> {
        Ok(Self { min_since: d.u64()?, max_till: d.u64()?, min_seq: d.u64()?, max_seq: d.u64()?, count: d.u64()? })
    }
}

pub const CHUNK_MAGIC: &[u8; 4] = b"CDBC";
pub const CHUNK_VERSION: u16 = 1;

/// Self-contained export of one partition.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionChunk {
    pub folder_id: FolderId,
    pub kind: NodeKind,
    pub strategy: StoreStrategy,
    pub schema: PayloadSchema,
    pub policy: PartitionPolicy,
    pub index: u64,
    pub summary: PartitionSummary,
    pub records: Vec<FolderRecord>,
}

impl PartitionChunk {
    pub fn encode(&self) -> Vec<u8> {
        let mut e = Enc::new();
        e.raw(CHUNK_MAGIC).u16(CHUNK_VERSION).u64(self.folder_id);
        e.u8(crate::storage::node_kind_code(self.kind)).u8(self.strategy.code());
        e.schema(&self.schema).policy(&self.policy).u64(self.index);
        self.summary.encode(&mut e);
        e.u64(self.records.len() as u64);
        for r in &self.records {
            r.frame_into(self.folder_id, &mut e.buf);
        }
        let sum = crc(&e.buf);
        e.u32(sum);
        e.into_inner()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 + 2 + 4 || &bytes[..4] != CHUNK_MAGIC {
            return Err(Error::ChunkMismatch("not a partition chunk file".into()));
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 4);
        if crc(body) != u32::from_le_bytes(trailer.try_into().unwrap()) {
            return Err(Error::ChecksumFailure("partition chunk".into()));
        }
        let mut d = Dec::new(&body[4..]);
        let version = d.u16()?;
        if version != CHUNK_VERSION {
            return Err(Error::ChunkMismatch(format!("unsupported chunk version {version}")));
        }
        let folder_id = d.u64()?;
        let kind = crate::storage::node_kind_from_code(d.u8()?)?;
        let strategy = StoreStrategy::from_code(d.u8()?)?;
        let schema = d.schema()?;
        let policy = d.policy()?;
        let index = d.u64()?;
        let summary = PartitionSummary::decode(&mut d)?;
        let count = d.u64()?;
        let mut pos = 4 + d.pos();
        let mut records = Vec::new();
        for _ in 0..count {
            match read_frame(body, pos) {
                Frame::Record { kind, body: rec, next } => {
                    records.push(FolderRecord::decode(kind, rec)?.1);
                    pos = next;
                }
                Frame::Bad => return Err(Error::ChecksumFailure("chunk record".into())),
                Frame::Torn | Frame::End => return Err(Error::ChunkMismatch("truncated record stream".into())),
            }
        }
        if pos != body.len() {
            return Err(Error::ChunkMismatch("trailing bytes after records".into()));
        }
        Ok(Self { folder_id, kind, strategy, schema, policy, index, summary, records })
    }
}
