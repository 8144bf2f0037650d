use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the store can report. [`Error::name`] gives the stable
/// identifier printed by the CLI and matched by scripts.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid path {0:?}: {1}")]
    InvalidPath(String, &'static str),
    #[error("invalid interval [{since}, {till})")]
    InvalidInterval { since: u64, till: u64 },
    #[error("invalid time point {0}: sentinels cannot be queried")]
    InvalidTime(u64),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("payload does not match schema at position {position}: {reason}")]
    SchemaMismatch { position: usize, reason: String },
    #[error("parent of {0} does not exist")]
    NoSuchParent(String),
    #[error("{0} already exists")]
    AlreadyExists(String),
    #[error("parent of {0} is not a folderset")]
    ParentNotFolderset(String),
    #[error("no such folder {0}")]
    NoSuchFolder(String),
    #[error("no object valid at {at} in {folder}")]
    NoValidObject { folder: String, at: u64 },
    #[error("operation not supported by the {strategy} strategy of {folder}")]
    UnsupportedByStrategy { folder: String, strategy: &'static str },
    #[error("tag {0} already exists")]
    TagExists(String),
    #[error("no such tag {0}")]
    NoSuchTag(String),
    #[error("tag {tag} does not cover folder {folder}")]
    FolderNotInTag { tag: String, folder: String },
    #[error("sequence {requested} is beyond head {head} of {folder}")]
    SequenceInFuture { folder: String, requested: u64, head: u64 },
    #[error("an update session is already open")]
    UpdateSessionBusy,
    #[error("session is closed")]
    SessionClosed,
    #[error("operation requires an update session")]
    NoUpdateSession,
    #[error("store was opened read-only")]
    ReadOnlyStore,
    #[error("no store at {0}")]
    StoreNotFound(String),
    #[error("corrupt store: {0}")]
    CorruptStore(String),
    #[error("store is locked by process {0}")]
    LockHeld(u32),
    #[error("no partition {index} in {folder}")]
    NoSuchPartition { folder: String, index: u64 },
    #[error("partition {index} of {folder} is offline")]
    PartitionOffline { folder: String, index: u64 },
    #[error("chunk does not match folder: {0}")]
    ChunkMismatch(String),
    #[error("checksum failure in {0}")]
    ChecksumFailure(String),
    #[error("timestamp {at} is not after last sample {last} in {folder}")]
    OutOfOrder { folder: String, at: u64, last: u64 },
    #[error("benchmark answer differs from oracle: {0}")]
    OracleMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    pub fn name(&self) -> &'static str {
        match self {
            Error::InvalidPath(..) => "InvalidPath",
            Error::InvalidInterval { .. } => "InvalidInterval",
            Error::InvalidTime(_) => "InvalidTime",
            Error::InvalidSchema(_) => "InvalidSchema",
            Error::SchemaMismatch { .. } => "SchemaMismatch",
            Error::NoSuchParent(_) => "NoSuchParent",
            Error::AlreadyExists(_) => "AlreadyExists",
            Error::ParentNotFolderset(_) => "ParentNotFolderset",
            Error::NoSuchFolder(_) => "NoSuchFolder",
            Error::NoValidObject { .. } => "NoValidObject",
            Error::UnsupportedByStrategy { .. } => "UnsupportedByStrategy",
            Error::TagExists(_) => "TagExists",
            Error::NoSuchTag(_) => "NoSuchTag",
            Error::FolderNotInTag { .. } => "FolderNotInTag",
            Error::SequenceInFuture { .. } => "SequenceInFuture",
            Error::UpdateSessionBusy => "UpdateSessionBusy",
            Error::SessionClosed => "SessionClosed",
            Error::NoUpdateSession => "NoUpdateSession",
            Error::ReadOnlyStore => "ReadOnlyStore",
            Error::StoreNotFound(_) => "StoreNotFound",
            Error::CorruptStore(_) => "CorruptStore",
            Error::LockHeld(_) => "LockHeld",
            Error::NoSuchPartition { .. } => "NoSuchPartition",
            Error::PartitionOffline { .. } => "PartitionOffline",
            Error::ChunkMismatch(_) => "ChunkMismatch",
            Error::ChecksumFailure(_) => "ChecksumFailure",
            Error::OutOfOrder { .. } => "OutOfOrder",
            Error::OracleMismatch(_) => "OracleMismatch",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::Io(_) => "Io",
        }
    }

    pub(crate) fn corrupt(msg: impl Into<String>) -> Self {
        Error::CorruptStore(msg.into())
    }
}
