//! Embeddable store for conditions data: payloads that are valid over an
//! interval of time and versioned by insertion order.
//!
//! ```
//! use conddb::{FolderPath, PayloadSchema, PayloadValue, PartitionPolicy, Selector, Store, StoreStrategy,
//!     TimePoint, ValidityInterval, Value};
//!
//! let store = Store::memory();
//! let ecal = FolderPath::parse("/calib/ecal").unwrap();
//! let mut s = store.begin_update().unwrap();
//! s.create_folderset(&FolderPath::parse("/calib").unwrap(), "").unwrap();
//! s.create_folder(&ecal, &PayloadSchema::parse("gain:float64").unwrap(), PartitionPolicy::NONE,
//!     StoreStrategy::Layered, "").unwrap();
//! s.store_object(&ecal, ValidityInterval::new(0, 10).unwrap(), PayloadValue(vec![Value::Float64(1.5)])).unwrap();
//! s.store_object(&ecal, ValidityInterval::new(5, 15).unwrap(), PayloadValue(vec![Value::Float64(2.5)])).unwrap();
//! s.commit().unwrap();
//!
//! let r = store.begin_read();
//! let hit = r.find_object(&ecal, TimePoint(3), &Selector::Head).unwrap();
//! assert_eq!(hit.object.seq, 1);
//! assert_eq!(hit.effective, ValidityInterval::new(0, 5).unwrap());
//! ```

pub mod bench;
pub mod conformance;
pub mod engine;
pub mod error;
pub mod layers;
pub mod model;
pub mod partition;
pub mod storage;

pub use engine::{
    CondObject, FolderDescription, NodeInfo, PartitionInfo, Selector, Session, SessionMode, Store, StoreStats,
    StoreStrategy, TagSnapshot, TinySample, Visible,
};
pub use error::{Error, Result};
pub use model::{
    interval_overlaps, parse_path, validate_payload, Attribute, FolderPath, Kind, NodeKind, PayloadSchema,
    PayloadValue, TimePoint, ValidityInterval, Value,
};
pub use partition::{partition_of, Axis, PartitionChunk, PartitionPolicy, PartitionSummary};
pub use storage::{Backend, FileBackend, MemoryBackend, OpenOptions};
