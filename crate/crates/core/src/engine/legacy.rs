use std::sync::Arc;

use super::CondObject;

/// A row of the truncate-on-write table: `[since, till)` currently answered
/// by `obj`. Rows are pairwise disjoint and kept in no particular order.
#[derive(Debug, Clone)]
pub(crate) struct Row {
    pub since: u64,
    pub till: u64,
    pub obj: Arc<CondObject>,
}

/// Truncate-on-write storage. Every store scans the whole table and cuts
/// the rows it overlaps, so a store costs time linear in the table size.
///
/// The table is copy-on-write: committed views hold the previous `Arc`.
#[derive(Debug, Clone, Default)]
pub(crate) struct Legacy {
    pub rows: Arc<Vec<Row>>,
}

impl Legacy {
    pub(crate) fn store(&mut self, obj: Arc<CondObject>) {
        let rows = Arc::make_mut(&mut self.rows);
        let (s, e) = (obj.interval.since().0, obj.interval.till().0);
        let mut tails = Vec::new();
        rows.retain_mut(|r| {
            if r.till <= s || e <= r.since {
                return true;
            }
            if r.since < s {
                if r.till > e {
                    tails.push(Row { since: e, till: r.till, obj: r.obj.clone() });
                }
                r.till = s;
                true
            } else if r.till > e {
                r.since = e;
                true
            } else {
                false
            }
        });
        rows.extend(tails);
        rows.push(Row { since: s, till: e, obj });
    }
}

pub(crate) fn find(rows: &[Row], t: u64) -> Option<&Row> {
    rows.iter().find(|r| r.since <= t && t < r.till)
}

/// Rows overlapping `[lo, hi)`, clipped and sorted.
pub(crate) fn browse(rows: &[Row], lo: u64, hi: u64) -> Vec<Row> {
    let mut out: Vec<Row> = rows
        .iter()
        .filter(|r| r.since < hi && lo < r.till)
        .map(|r| Row { since: r.since.max(lo), till: r.till.min(hi), obj: r.obj.clone() })
        .collect();
    out.sort_unstable_by_key(|r| r.since);
    out
}
