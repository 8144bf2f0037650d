//! Checkpoint image of one folder's in-memory state, layer index included,
//! so that opening a checkpointed store replays nothing.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use super::layered::{ObjLog, Part};
use super::legacy::Row;
use super::tiny::TinyPart;
use super::{Body, CondObject, FolderData};
use crate::error::{Error, Result};
use crate::layers::{LayerTree, Seg};
use crate::model::{FolderPath, ValidityInterval};
use crate::partition::PartitionSummary;
use crate::storage::codec::{Dec, Enc};

const LAYERED: u8 = 0;
const LEGACY: u8 = 1;
const TINY: u8 = 2;

fn segs(e: &mut Enc, segs: &[Seg]) {
    e.u32(segs.len() as u32);
    for s in segs {
        e.u64(s.since).u64(s.till).u64(s.seq);
    }
}

fn read_segs(d: &mut Dec<'_>) -> Result<Vec<Seg>> {
    let n = d.u32()? as usize;
    if n.saturating_mul(24) > d.remaining() {
        return Err(Error::corrupt("segment count exceeds image"));
    }
    (0..n).map(|_| Ok(Seg { since: d.u64()?, till: d.u64()?, seq: d.u64()? })).collect()
}

fn object(e: &mut Enc, o: &CondObject) {
    e.u64(o.seq).u64(o.interval.since().0).u64(o.interval.till().0).payload(&o.payload);
}

fn read_object(d: &mut Dec<'_>, folder: &Arc<FolderPath>) -> Result<CondObject> {
    let seq = d.u64()?;
    let (since, till) = (d.u64()?, d.u64()?);
    let interval = ValidityInterval::new(since, till).map_err(|e| Error::corrupt(e.to_string()))?;
    Ok(CondObject { folder: folder.clone(), interval, seq, payload: d.payload()? })
}

pub(crate) fn encode(data: &FolderData) -> Vec<u8> {
    let mut e = Enc::new();
    e.u64(data.next_seq).u64(data.max_seq).u64(data.count);
    match &data.body {
        Body::Layered(l) => {
            e.u8(LAYERED).u32(l.parts.len() as u32);
            for (index, p) in &l.parts {
                e.u64(*index);
                p.summary.encode(&mut e);
                let Some(log) = &p.log else {
                    e.u8(0);
                    continue;
                };
                e.u8(1).u32(log.objects.len() as u32);
                for o in &log.objects {
                    object(&mut e, o);
                }
                let levels = log.tree.levels();
                e.u32(levels.len() as u32);
                for blocks in levels {
                    e.u32(blocks.len() as u32);
                    for b in blocks {
                        segs(&mut e, b);
                    }
                }
            }
        }
        Body::Legacy(l) => {
            e.u8(LEGACY);
            let mut objs: BTreeMap<u64, &CondObject> = BTreeMap::new();
            for r in l.rows.iter() {
                objs.insert(r.obj.seq, &r.obj);
            }
            e.u32(objs.len() as u32);
            for o in objs.values() {
                object(&mut e, o);
            }
            e.u32(l.rows.len() as u32);
            for r in l.rows.iter() {
                e.u64(r.since).u64(r.till).u64(r.obj.seq);
            }
        }
        Body::Tiny(t) => {
            e.u8(TINY);
            match t.last {
                Some(last) => e.u8(1).u64(last),
                None => e.u8(0),
            };
            e.u32(t.parts.len() as u32);
            for (index, p) in &t.parts {
                e.u64(*index);
                p.summary.encode(&mut e);
                let Some(samples) = &p.samples else {
                    e.u8(0);
                    continue;
                };
                e.u8(1).u32(samples.len() as u32);
                for &(at, bits) in samples {
                    e.u64(at).u64(bits);
                }
            }
        }
    }
    e.into_inner()
}

/// Loads `bytes` into a freshly created `data` of the matching kind.
pub(crate) fn decode_into(data: &mut FolderData, folder: &Arc<FolderPath>, bytes: &[u8]) -> Result<()> {
    let mut d = Dec::new(bytes);
    data.next_seq = d.u64()?;
    data.max_seq = d.u64()?;
    data.count = d.u64()?;
    let tag = d.u8()?;
    match (&mut data.body, tag) {
        (Body::Layered(l), LAYERED) => {
            let n = d.u32()?;
            for _ in 0..n {
                let index = d.u64()?;
                let summary = PartitionSummary::decode(&mut d)?;
                let log = match d.u8()? {
                    0 => None,
                    _ => {
                        let mut log = ObjLog::default();
                        let count = d.u32()?;
                        for _ in 0..count {
                            let o = read_object(&mut d, folder)?;
                            log.leaves.push(Seg { since: o.interval.since().0, till: o.interval.till().0, seq: o.seq });
                            log.objects.push(Arc::new(o));
                        }
                        let nlevels = d.u32()?;
                        let mut levels = Vec::new();
                        for _ in 0..nlevels {
                            let nblocks = d.u32()?;
                            levels.push((0..nblocks).map(|_| read_segs(&mut d)).collect::<Result<Vec<_>>>()?);
                        }
                        log.tree = LayerTree::from_levels(levels);
                        Some(log)
                    }
                };
                l.parts.insert(index, Part { summary, log });
            }
        }
        (Body::Legacy(l), LEGACY) => {
            let n = d.u32()?;
            let mut objs = HashMap::new();
            for _ in 0..n {
                let o = read_object(&mut d, folder)?;
                objs.insert(o.seq, Arc::new(o));
            }
            let rows = d.u32()?;
            let mut table = Vec::new();
            for _ in 0..rows {
                let (since, till, seq) = (d.u64()?, d.u64()?, d.u64()?);
                let obj = objs.get(&seq).ok_or_else(|| Error::corrupt("legacy row without object"))?.clone();
                table.push(Row { since, till, obj });
            }
            l.rows = Arc::new(table);
        }
        (Body::Tiny(t), TINY) => {
            t.last = match d.u8()? {
                0 => None,
                _ => Some(d.u64()?),
            };
            let n = d.u32()?;
            for _ in 0..n {
                let index = d.u64()?;
                let summary = PartitionSummary::decode(&mut d)?;
                let samples = match d.u8()? {
                    0 => None,
                    _ => {
                        let count = d.u32()? as usize;
                        if count.saturating_mul(16) > d.remaining() {
                            return Err(Error::corrupt("sample count exceeds image"));
                        }
                        Some((0..count).map(|_| Ok((d.u64()?, d.u64()?))).collect::<Result<Vec<_>>>()?)
                    }
                };
                t.parts.insert(index, TinyPart { summary, samples });
            }
        }
        _ => return Err(Error::corrupt("folder image kind does not match folder")),
    }
    if !d.is_empty() {
        return Err(Error::corrupt("trailing bytes in folder image"));
    }
    Ok(())
}
