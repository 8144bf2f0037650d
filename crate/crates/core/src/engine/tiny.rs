use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use super::PartitionInfo;
use crate::error::{Error, Result};
use crate::model::{FolderPath, Kind};
use crate::partition::{Axis, PartitionPolicy, PartitionSummary};
use crate::storage::FolderRecord;

#[derive(Debug, Clone)]
pub(crate) struct TinyPart {
    /// `min_since` is the first timestamp, `max_till` one past the last.
    pub summary: PartitionSummary,
    /// `(at, value bits)`, ascending; `None` once evicted.
    pub samples: Option<Vec<(u64, u64)>>,
}

/// A step-function stream: each sample holds until the next one.
#[derive(Debug, Clone)]
pub(crate) struct Tiny {
    pub kind: Kind,
    pub policy: PartitionPolicy,
    pub parts: BTreeMap<u64, TinyPart>,
    /// Latest timestamp appended, uncommitted ones included.
    pub last: Option<u64>,
}

/// A sample found by [`Tiny::read`] and the timestamp of its successor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Step {
    pub at: u64,
    pub bits: u64,
    pub next: u64,
}

fn offline(folder: &FolderPath, index: u64) -> Error {
    Error::PartitionOffline { folder: folder.to_string(), index }
}

fn summary_of(samples: &[(u64, u64)]) -> Option<PartitionSummary> {
    let (first, last) = (samples.first()?, samples.last()?);
    Some(PartitionSummary { min_since: first.0, max_till: last.0 + 1, min_seq: 0, max_seq: 0, count: samples.len() as u64 })
}

impl Tiny {
    pub(crate) fn new(kind: Kind, policy: PartitionPolicy) -> Self {
        Self { kind, policy, parts: BTreeMap::new(), last: None }
    }

    fn index(&self, at: u64) -> u64 {
        match self.policy.axis {
            Axis::Time => at / self.policy.chunk,
            _ => 0,
        }
    }

    pub(crate) fn check_append(&self, folder: &FolderPath, at: u64) -> Result<()> {
        if let Some(last) = self.last {
            if at <= last {
                return Err(Error::OutOfOrder { folder: folder.to_string(), at, last });
            }
        }
        let index = self.index(at);
        match self.parts.get(&index) {
            Some(p) if p.samples.is_none() => Err(offline(folder, index)),
            _ => Ok(()),
        }
    }

    pub(crate) fn append(&mut self, folder: &FolderPath, at: u64, bits: u64) -> Result<()> {
        self.check_append(folder, at)?;
        let index = self.index(at);
        let part = self.parts.entry(index).or_insert_with(|| TinyPart {
            summary: PartitionSummary { min_since: at, max_till: at + 1, min_seq: 0, max_seq: 0, count: 0 },
            samples: Some(Vec::new()),
        });
        let samples = part.samples.as_mut().ok_or_else(|| offline(folder, index))?;
        samples.push((at, bits));
        part.summary.max_till = at + 1;
        part.summary.count += 1;
        self.last = Some(at);
        Ok(())
    }

    /// Removes samples newer than `keep`.
    pub(crate) fn truncate_after(&mut self, keep: Option<u64>) {
        let bound = keep.map_or(0, |k| k + 1);
        self.parts.retain(|_, p| {
            let Some(samples) = p.samples.as_mut() else { return true };
            samples.truncate(samples.partition_point(|s| s.0 < bound));
            match summary_of(samples) {
                Some(s) => {
                    p.summary = s;
                    true
                }
                None => false,
            }
        });
        self.last = keep;
    }

    pub(crate) fn partitions(&self) -> Vec<PartitionInfo> {
        self.parts
            .iter()
            .map(|(&index, p)| PartitionInfo { index, resident: p.samples.is_some(), summary: p.summary })
            .collect()
    }

    /// Sample in force at `t` when only samples at or before `ceiling` are
    /// visible.
    pub(crate) fn read(&self, folder: &FolderPath, t: u64, ceiling: Option<u64>, probes: &AtomicU64) -> Result<Option<Step>> {
        let Some(ceiling) = ceiling else { return Ok(None) };
        let limit = t.min(ceiling);
        for (&index, p) in self.parts.range(..=self.index(limit)).rev() {
            if p.summary.min_since > limit {
                continue;
            }
            let samples = p.samples.as_ref().ok_or_else(|| offline(folder, index))?;
            probes.fetch_add(1, Ordering::Relaxed);
            let i = samples.partition_point(|s| s.0 <= limit);
            let (at, bits) = samples[i - 1];
            let next = match samples.get(i) {
                Some(s) => Some(s.0),
                None => self.parts.range(index + 1..).next().map(|(_, p)| p.summary.min_since),
            };
            let next = next.filter(|&n| n <= ceiling).unwrap_or(u64::MAX);
            return Ok(Some(Step { at, bits, next }));
        }
        Ok(None)
    }

    /// Samples whose step overlaps `[lo, hi)`, ascending.
    pub(crate) fn scan(
        &self,
        folder: &FolderPath,
        lo: u64,
        hi: u64,
        ceiling: Option<u64>,
        probes: &AtomicU64,
    ) -> Result<Vec<(u64, u64)>> {
        let mut out = Vec::new();
        let Some(c) = ceiling else { return Ok(out) };
        if let Some(first) = self.read(folder, lo, ceiling, probes)? {
            if first.at < lo {
                out.push((first.at, first.bits));
            }
        }
        let top = (hi - 1).min(c);
        if lo > top {
            return Ok(out);
        }
        for (&index, p) in self.parts.range(self.index(lo)..=self.index(top)) {
            if !p.summary.overlaps(lo, top + 1) {
                continue;
            }
            let samples = p.samples.as_ref().ok_or_else(|| offline(folder, index))?;
            probes.fetch_add(1, Ordering::Relaxed);
            let a = samples.partition_point(|s| s.0 < lo);
            let b = samples.partition_point(|s| s.0 <= top);
            out.extend_from_slice(&samples[a..b]);
        }
        Ok(out)
    }

    pub(crate) fn evict(&mut self, folder: &FolderPath, index: u64) -> Result<()> {
        let p = self.parts.get_mut(&index).ok_or_else(|| Error::NoSuchPartition { folder: folder.to_string(), index })?;
        if p.samples.take().is_none() {
            return Err(offline(folder, index));
        }
        Ok(())
    }

    pub(crate) fn export(
        &self,
        folder: &FolderPath,
        index: u64,
        ceiling: Option<u64>,
    ) -> Result<(PartitionSummary, Vec<FolderRecord>)> {
        let missing = || Error::NoSuchPartition { folder: folder.to_string(), index };
        let p = self.parts.get(&index).ok_or_else(missing)?;
        let samples = p.samples.as_ref().ok_or_else(|| offline(folder, index))?;
        let bound = ceiling.map_or(0, |c| c + 1);
        let visible = &samples[..samples.partition_point(|s| s.0 < bound)];
        let summary = summary_of(visible).ok_or_else(missing)?;
        Ok((summary, visible.iter().map(|&(at, bits)| FolderRecord::Tiny { at, bits }).collect()))
    }

    pub(crate) fn import(&mut self, folder: &FolderPath, index: u64, records: &[FolderRecord]) -> Result<()> {
        if self.parts.get(&index).is_some_and(|p| p.samples.is_some()) {
            return Err(Error::ChunkMismatch(format!("partition {index} of {folder} is resident")));
        }
        let mut samples = Vec::with_capacity(records.len());
        for r in records {
            let FolderRecord::Tiny { at, bits } = *r else {
                return Err(Error::ChunkMismatch("object record in a tiny chunk".into()));
            };
            if samples.last().is_some_and(|&(prev, _)| at <= prev) {
                return Err(Error::ChunkMismatch("samples out of order".into()));
            }
            if self.index(at) != index {
                return Err(Error::ChunkMismatch(format!("sample at {at} does not belong to partition {index}")));
            }
            samples.push((at, bits));
        }
        let Some(summary) = summary_of(&samples) else {
            self.parts.remove(&index);
            return Ok(());
        };
        let lo_bound = self.parts.range(..index).next_back().map(|(_, p)| p.summary.max_till).unwrap_or(0);
        let hi_bound = self.parts.range(index + 1..).next().map(|(_, p)| p.summary.min_since).unwrap_or(u64::MAX);
        if summary.min_since < lo_bound || summary.max_till > hi_bound {
            return Err(Error::ChunkMismatch("samples overlap neighbouring partitions".into()));
        }
        self.last = self.last.max(Some(summary.max_till - 1));
        self.parts.insert(index, TinyPart { summary, samples: Some(samples) });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path() -> FolderPath {
        FolderPath::parse("/dcs/t").unwrap()
    }

    #[test]
    fn step_reads_and_next_sample() {
        let probes = AtomicU64::new(0);
        let mut t = Tiny::new(Kind::Int64, PartitionPolicy::time(100).unwrap());
        for at in [50, 120, 130, 310] {
            t.append(&path(), at, at * 2).unwrap();
        }
        let c = t.last;
        assert_eq!(t.read(&path(), 49, c, &probes).unwrap(), None);
        assert_eq!(t.read(&path(), 60, c, &probes).unwrap(), Some(Step { at: 50, bits: 100, next: 120 }));
        assert_eq!(t.read(&path(), 200, c, &probes).unwrap(), Some(Step { at: 130, bits: 260, next: 310 }));
        assert_eq!(t.read(&path(), 999, c, &probes).unwrap().unwrap().next, u64::MAX);
        // a ceiling hides later samples, including the successor
        assert_eq!(t.read(&path(), 200, Some(130), &probes).unwrap().unwrap().next, u64::MAX);
        assert_eq!(t.scan(&path(), 125, 311, c, &probes).unwrap(), vec![(120, 240), (130, 260), (310, 620)]);
    }

    #[test]
    fn evicted_partition_blocks_only_reads_it_owns() {
        let probes = AtomicU64::new(0);
        let mut t = Tiny::new(Kind::Int64, PartitionPolicy::time(100).unwrap());
        for at in [50, 150, 250] {
            t.append(&path(), at, 0).unwrap();
        }
        t.evict(&path(), 1).unwrap();
        let c = t.last;
        // successor of 50 comes from the evicted partition's summary
        assert_eq!(t.read(&path(), 60, c, &probes).unwrap().unwrap().next, 150);
        assert_eq!(t.read(&path(), 160, c, &probes).unwrap_err().name(), "PartitionOffline");
        assert_eq!(t.read(&path(), 260, c, &probes).unwrap().unwrap().at, 250);
        assert_eq!(t.append(&path(), 199, 0).unwrap_err().name(), "OutOfOrder");
    }

    #[test]
    fn truncate_restores_committed_prefix() {
        let mut t = Tiny::new(Kind::Float64, PartitionPolicy::NONE);
        t.append(&path(), 1, 0).unwrap();
        t.append(&path(), 2, 0).unwrap();
        t.truncate_after(Some(1));
        assert_eq!(t.last, Some(1));
        assert_eq!(t.parts[&0].summary.count, 1);
        t.truncate_after(None);
        assert!(t.parts.is_empty());
        t.append(&path(), 1, 0).unwrap();
    }
}
