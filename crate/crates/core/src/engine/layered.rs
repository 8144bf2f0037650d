use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use super::{CondObject, PartitionInfo};
use crate::error::{Error, Result};
use crate::layers::{overlay_all, Layer, LayerTree, Seg};
use crate::model::{FolderPath, ValidityInterval};
use crate::partition::{partition_of, PartitionPolicy, PartitionSummary};
use crate::storage::FolderRecord;

/// Objects of one partition in sequence order, with their layer index.
#[derive(Debug, Clone, Default)]
pub(crate) struct ObjLog {
    pub objects: Vec<Arc<CondObject>>,
    pub leaves: Vec<Seg>,
    pub tree: LayerTree,
}

impl ObjLog {
    pub(crate) fn push(&mut self, obj: Arc<CondObject>) {
        debug_assert!(self.leaves.last().is_none_or(|l| l.seq < obj.seq));
        self.leaves.push(Seg { since: obj.interval.since().0, till: obj.interval.till().0, seq: obj.seq });
        self.tree.on_append(&self.leaves);
        self.objects.push(obj);
    }

    fn visible_len(&self, ceiling: u64) -> usize {
        self.leaves.partition_point(|s| s.seq <= ceiling)
    }

    pub(crate) fn layers(&self, ceiling: u64) -> Vec<Layer<'_>> {
        self.tree.prefix_layers(&self.leaves, self.visible_len(ceiling))
    }

    pub(crate) fn object(&self, seq: u64) -> Option<&Arc<CondObject>> {
        self.leaves.binary_search_by_key(&seq, |s| s.seq).ok().map(|i| &self.objects[i])
    }

    fn truncate_above(&mut self, ceiling: u64) {
        let len = self.visible_len(ceiling);
        self.objects.truncate(len);
        self.leaves.truncate(len);
        self.tree.truncate(len);
    }

    fn summary(&self) -> Option<PartitionSummary> {
        summary_of(&self.leaves)
    }
}

fn summary_of(leaves: &[Seg]) -> Option<PartitionSummary> {
    let (first, rest) = leaves.split_first()?;
    let mut s = PartitionSummary::of(first.since, first.till, first.seq);
    for l in rest {
        s.add(l.since, l.till, l.seq);
    }
    Some(s)
}

#[derive(Debug, Clone)]
pub(crate) struct Part {
    pub summary: PartitionSummary,
    /// `None` once evicted.
    pub log: Option<ObjLog>,
}

/// Object folder resolved at read time. Unpartitioned folders use a single
/// partition 0.
#[derive(Debug, Clone)]
pub(crate) struct Layered {
    pub policy: PartitionPolicy,
    pub parts: BTreeMap<u64, Part>,
}

fn offline(folder: &FolderPath, index: u64) -> Error {
    Error::PartitionOffline { folder: folder.to_string(), index }
}

impl Layered {
    pub(crate) fn new(policy: PartitionPolicy) -> Self {
        Self { policy, parts: BTreeMap::new() }
    }

    pub(crate) fn check_route(&self, folder: &FolderPath, interval: &ValidityInterval, seq: u64) -> Result<()> {
        let index = partition_of(&self.policy, interval, seq);
        match self.parts.get(&index) {
            Some(p) if p.log.is_none() => Err(offline(folder, index)),
            _ => Ok(()),
        }
    }

    pub(crate) fn push(&mut self, folder: &FolderPath, obj: Arc<CondObject>) -> Result<()> {
        let index = partition_of(&self.policy, &obj.interval, obj.seq);
        let (since, till) = (obj.interval.since().0, obj.interval.till().0);
        match self.parts.get_mut(&index) {
            Some(p) => {
                let log = p.log.as_mut().ok_or_else(|| offline(folder, index))?;
                p.summary.add(since, till, obj.seq);
                log.push(obj);
            }
            None => {
                let mut log = ObjLog::default();
                let summary = PartitionSummary::of(since, till, obj.seq);
                log.push(obj);
                self.parts.insert(index, Part { summary, log: Some(log) });
            }
        }
        Ok(())
    }

    pub(crate) fn truncate_above(&mut self, ceiling: u64) {
        self.parts.retain(|_, p| {
            let Some(log) = p.log.as_mut() else { return true };
            if p.summary.max_seq <= ceiling {
                return true;
            }
            log.truncate_above(ceiling);
            match log.summary() {
                Some(s) => {
                    p.summary = s;
                    true
                }
                None => false,
            }
        });
    }

    pub(crate) fn partitions(&self) -> Vec<PartitionInfo> {
        self.parts
            .iter()
            .map(|(&index, p)| PartitionInfo { index, resident: p.log.is_some(), summary: p.summary })
            .collect()
    }

    fn live(p: &Part, ceiling: u64) -> bool {
        p.summary.min_seq <= ceiling
    }

    /// Object at `t` under `ceiling` and the bounds of its effective interval.
    pub(crate) fn find(
        &self,
        folder: &FolderPath,
        t: u64,
        ceiling: u64,
        probes: &AtomicU64,
    ) -> Result<Option<(u64, u64, Arc<CondObject>)>> {
        let mut best: Option<(Seg, u64)> = None;
        let mut evicted = Vec::new();
        for (&index, p) in &self.parts {
            if !Self::live(p, ceiling) || !(p.summary.min_since <= t && t < p.summary.max_till) {
                continue;
            }
            let Some(log) = p.log.as_ref() else {
                evicted.push((index, p.summary.max_seq));
                continue;
            };
            probes.fetch_add(1, Ordering::Relaxed);
            for layer in log.layers(ceiling) {
                if let Some(s) = layer.stab(t) {
                    if best.is_none_or(|(b, _)| s.seq > b.seq) {
                        best = Some((s, index));
                    }
                }
            }
        }
        // An evicted candidate only matters if it could hold a newer object.
        let floor = best.map_or(0, |(b, _)| b.seq);
        if let Some(&(index, _)) = evicted.iter().find(|(_, max_seq)| *max_seq > floor) {
            return Err(offline(folder, index));
        }
        let Some((win, index)) = best else { return Ok(None) };
        let (mut lo, mut hi) = (win.since, win.till);
        for p in self.parts.values() {
            if !Self::live(p, ceiling) || p.summary.max_seq <= win.seq || !p.summary.overlaps(lo, hi) {
                continue;
            }
            match &p.log {
                Some(log) => {
                    for layer in log.layers(ceiling) {
                        layer.clip(t, win.seq, &mut lo, &mut hi);
                    }
                }
                // Cannot see inside; assume the worst over its whole span.
                None if p.summary.max_till <= t => lo = lo.max(p.summary.max_till),
                None => hi = hi.min(p.summary.min_since),
            }
        }
        let obj = self.parts[&index].log.as_ref().and_then(|l| l.object(win.seq)).expect("winner is resident");
        Ok(Some((lo, hi, obj.clone())))
    }

    /// Visible map restricted to `[lo, hi)`, ascending.
    pub(crate) fn browse(
        &self,
        folder: &FolderPath,
        lo: u64,
        hi: u64,
        ceiling: u64,
        probes: &AtomicU64,
    ) -> Result<Vec<(Seg, Arc<CondObject>)>> {
        let mut maps = Vec::new();
        let mut logs = Vec::new();
        for (&index, p) in &self.parts {
            if !Self::live(p, ceiling) || !p.summary.overlaps(lo, hi) {
                continue;
            }
            let log = p.log.as_ref().ok_or_else(|| offline(folder, index))?;
            probes.fetch_add(1, Ordering::Relaxed);
            logs.push(log);
            for layer in log.layers(ceiling) {
                let w = layer.window(lo, hi);
                if !w.is_empty() {
                    maps.push(w);
                }
            }
        }
        let segs = overlay_all(maps);
        let mut out = Vec::with_capacity(segs.len());
        for s in segs {
            let obj = match logs.as_slice() {
                [only] => only.object(s.seq),
                many => many.iter().find_map(|l| l.object(s.seq)),
            };
            out.push((s, obj.expect("segment refers to a stored object").clone()));
        }
        Ok(out)
    }

    pub(crate) fn evict(&mut self, folder: &FolderPath, index: u64) -> Result<()> {
        let p = self.parts.get_mut(&index).ok_or_else(|| Error::NoSuchPartition { folder: folder.to_string(), index })?;
        if p.log.take().is_none() {
            return Err(offline(folder, index));
        }
        Ok(())
    }

    pub(crate) fn export(
        &self,
        folder: &FolderPath,
        index: u64,
        ceiling: u64,
    ) -> Result<(PartitionSummary, Vec<FolderRecord>)> {
        let missing = || Error::NoSuchPartition { folder: folder.to_string(), index };
        let p = self.parts.get(&index).filter(|p| Self::live(p, ceiling)).ok_or_else(missing)?;
        let log = p.log.as_ref().ok_or_else(|| offline(folder, index))?;
        let len = log.visible_len(ceiling);
        let summary = summary_of(&log.leaves[..len]).ok_or_else(missing)?;
        let records = log.objects[..len]
            .iter()
            .map(|o| FolderRecord::Object { seq: o.seq, interval: o.interval, payload: o.payload.clone() })
            .collect();
        Ok((summary, records))
    }

    /// Loads a partition's objects. The partition must be absent or evicted.
    pub(crate) fn import(
        &mut self,
        folder: &Arc<FolderPath>,
        index: u64,
        records: &[FolderRecord],
    ) -> Result<Vec<Arc<CondObject>>> {
        if self.parts.get(&index).is_some_and(|p| p.log.is_some()) {
            return Err(Error::ChunkMismatch(format!("partition {index} of {folder} is resident")));
        }
        let mut objs = Vec::with_capacity(records.len());
        let mut last = 0;
        for r in records {
            let FolderRecord::Object { seq, interval, payload } = r else {
                return Err(Error::ChunkMismatch("tiny sample in an object chunk".into()));
            };
            if *seq <= last {
                return Err(Error::ChunkMismatch("records out of sequence order".into()));
            }
            last = *seq;
            if partition_of(&self.policy, interval, *seq) != index {
                return Err(Error::ChunkMismatch(format!("object {seq} does not belong to partition {index}")));
            }
            if self.parts.values().any(|p| p.log.as_ref().is_some_and(|l| l.object(*seq).is_some())) {
                return Err(Error::ChunkMismatch(format!("sequence {seq} already present in {folder}")));
            }
            objs.push(Arc::new(CondObject {
                folder: folder.clone(),
                interval: *interval,
                seq: *seq,
                payload: payload.clone(),
            }));
        }
        let mut log = ObjLog::default();
        for o in &objs {
            log.push(o.clone());
        }
        match log.summary() {
            Some(summary) => {
                self.parts.insert(index, Part { summary, log: Some(log) });
            }
            None => {
                self.parts.remove(&index);
            }
        }
        Ok(objs)
    }
}
