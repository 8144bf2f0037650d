//! Latest-wins resolution over append-only object logs.
//!
//! Objects are kept in insertion (sequence) order. Every aligned block of
//! `LEAF << level` objects carries its *visible map*: the sorted, disjoint
//! segments that remain when newer objects in the block are laid over older
//! ones. Blocks are built once, when they fill, by overlaying their two
//! halves, so appends never touch existing objects and cost amortized
//! `O(log n)` segment copies.
//!
//! A query with a sequence ceiling decomposes the prefix of objects at or
//! below the ceiling into at most one block per level plus fewer than
//! `LEAF` loose objects. Each of those *layers* is searched independently;
//! the answer at a point is the highest sequence any layer reports there.

use std::borrow::Cow;

/// One piece of a visible map: `[since, till)` is answered by `seq`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seg {
    pub since: u64,
    pub till: u64,
    pub seq: u64,
}

pub(crate) const LEAF: usize = 16;

/// Pointwise max-sequence overlay of two visible maps. Sequence ranges of
/// the inputs may interleave.
///
/// Both inputs must be sorted and disjoint; so is the output, and adjacent
/// output pieces never share a sequence.
pub fn overlay(a: &[Seg], b: &[Seg]) -> Vec<Seg> {
    let mut out: Vec<Seg> = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    let mut x = 0u64;
    loop {
        while i < a.len() && a[i].till <= x {
            i += 1;
        }
        while j < b.len() && b[j].till <= x {
            j += 1;
        }
        let sa = a.get(i).map(|s| s.since.max(x));
        let sb = b.get(j).map(|s| s.since.max(x));
        let piece = match (sa, sb) {
            (None, None) => break,
            (Some(sa), None) => Seg { since: sa, ..a[i] },
            (None, Some(sb)) => Seg { since: sb, ..b[j] },
            (Some(sa), Some(sb)) => {
                let start = sa.min(sb);
                let (win, rest) = match (sa == start, sb == start) {
                    (true, true) if a[i].seq >= b[j].seq => (a[i], &b[j..]),
                    (true, true) => (b[j], &a[i..]),
                    (true, false) => (a[i], &b[j..]),
                    (false, _) => (b[j], &a[i..]),
                };
                // the piece ends where the other map first shows a newer
                // sequence; with interleaved sequence ranges that need not
                // be its current segment
                let mut till = win.till;
                for o in rest {
                    if o.since >= till {
                        break;
                    }
                    if o.seq > win.seq {
                        till = o.since.max(x);
                        break;
                    }
                }
                Seg { since: start, till, seq: win.seq }
            }
        };
        push_merged(&mut out, piece);
        x = piece.till;
    }
    out
}

pub(crate) fn push_merged(out: &mut Vec<Seg>, s: Seg) {
    if let Some(last) = out.last_mut() {
        if last.till == s.since && last.seq == s.seq {
            last.till = s.till;
            return;
        }
    }
    out.push(s);
}

/// Balanced pairwise reduction of many maps.
pub fn overlay_all(mut maps: Vec<Cow<'_, [Seg]>>) -> Vec<Seg> {
    if maps.is_empty() {
        return Vec::new();
    }
    while maps.len() > 1 {
        let mut next = Vec::with_capacity(maps.len().div_ceil(2));
        let mut it = maps.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(Cow::Owned(overlay(&a, &b))),
                None => next.push(a),
            }
        }
        maps = next;
    }
    maps.pop().unwrap().into_owned()
}

/// A searchable slice of one visible map plus the sequence range it spans.
#[derive(Debug, Clone, Copy)]
pub struct Layer<'a> {
    pub segs: &'a [Seg],
    pub min_seq: u64,
    pub max_seq: u64,
}

impl<'a> Layer<'a> {
    /// Segment containing `t`, if any.
    pub fn stab(&self, t: u64) -> Option<Seg> {
        let idx = self.segs.partition_point(|s| s.since <= t);
        if idx == 0 {
            return None;
        }
        let s = self.segs[idx - 1];
        (t < s.till).then_some(s)
    }

    /// Narrows `[lo, hi)` around `t` to exclude every segment newer than
    /// `seq`. No segment of the layer newer than `seq` may contain `t`.
    pub fn clip(&self, t: u64, seq: u64, lo: &mut u64, hi: &mut u64) {
        if self.max_seq <= seq {
            return;
        }
        let idx = self.segs.partition_point(|s| s.since <= t);
        for s in &self.segs[idx..] {
            if s.since >= *hi {
                break;
            }
            if s.seq > seq {
                *hi = s.since;
                break;
            }
        }
        for s in self.segs[..idx].iter().rev() {
            if s.till <= *lo {
                break;
            }
            if s.seq > seq {
                debug_assert!(s.till <= t);
                *lo = s.till;
                break;
            }
        }
    }

    /// The pieces overlapping `[lo, hi)`, clipped to it.
    pub fn window(&self, lo: u64, hi: u64) -> Cow<'a, [Seg]> {
        let start = self.segs.partition_point(|s| s.till <= lo);
        let end = self.segs.partition_point(|s| s.since < hi);
        if start >= end {
            return Cow::Borrowed(&[]);
        }
        let inner = &self.segs[start..end];
        if inner[0].since >= lo && inner[inner.len() - 1].till <= hi {
            return Cow::Borrowed(inner);
        }
        let mut owned = inner.to_vec();
        owned[0].since = owned[0].since.max(lo);
        let last = owned.len() - 1;
        owned[last].till = owned[last].till.min(hi);
        Cow::Owned(owned)
    }
}

/// Visible maps of all complete aligned blocks of one object log.
#[derive(Debug, Clone, Default)]
pub struct LayerTree {
    /// `blocks[level][k]` covers objects `[k * size, (k + 1) * size)` with
    /// `size = LEAF << level`.
    blocks: Vec<Vec<Vec<Seg>>>,
}

impl LayerTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn build(leaves: &[Seg]) -> Self {
        let mut tree = Self::new();
        for n in 1..=leaves.len() {
            tree.on_append(&leaves[..n]);
        }
        tree
    }

    /// Call after each push onto `leaves`.
    pub fn on_append(&mut self, leaves: &[Seg]) {
        let n = leaves.len();
        if n == 0 || !n.is_multiple_of(LEAF) {
            return;
        }
        let block = overlay_all(leaves[n - LEAF..].iter().map(|l| Cow::Borrowed(std::slice::from_ref(l))).collect());
        if self.blocks.is_empty() {
            self.blocks.push(Vec::new());
        }
        self.blocks[0].push(block);
        let mut level = 0;
        while self.blocks[level].len().is_multiple_of(2) {
            let k = self.blocks[level].len();
            let merged = overlay(&self.blocks[level][k - 1], &self.blocks[level][k - 2]);
            if self.blocks.len() == level + 1 {
                self.blocks.push(Vec::new());
            }
            self.blocks[level + 1].push(merged);
            level += 1;
        }
    }

    /// Drops every block that reaches past the first `len` objects.
    pub fn truncate(&mut self, len: usize) {
        for (level, blocks) in self.blocks.iter_mut().enumerate() {
            blocks.truncate(len / (LEAF << level));
        }
        while self.blocks.last().is_some_and(Vec::is_empty) {
            self.blocks.pop();
        }
    }

    pub fn levels(&self) -> &[Vec<Vec<Seg>>] {
        &self.blocks
    }

    pub fn from_levels(blocks: Vec<Vec<Vec<Seg>>>) -> Self {
        Self { blocks }
    }

    /// Layers covering `leaves[..len]`, oldest first.
    pub fn prefix_layers<'a>(&'a self, leaves: &'a [Seg], len: usize) -> Vec<Layer<'a>> {
        let mut out = Vec::new();
        let mut pos = 0usize;
        for level in (0..self.blocks.len()).rev() {
            let size = LEAF << level;
            while pos + size <= len {
                match self.blocks[level].get(pos / size) {
                    Some(segs) => {
                        out.push(Layer { segs, min_seq: leaves[pos].seq, max_seq: leaves[pos + size - 1].seq });
                        pos += size;
                    }
                    None => break,
                }
            }
        }
        for leaf in &leaves[pos..len] {
            out.push(Layer { segs: std::slice::from_ref(leaf), min_seq: leaf.seq, max_seq: leaf.seq });
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seg(since: u64, till: u64, seq: u64) -> Seg {
        Seg { since, till, seq }
    }

    /// Max sequence covering `t` by direct scan.
    fn brute(leaves: &[Seg], t: u64) -> Option<u64> {
        leaves.iter().filter(|s| s.since <= t && t < s.till).map(|s| s.seq).max()
    }

    #[test]
    fn overlay_newer_splits_older() {
        let out = overlay(&[seg(3, 5, 2)], &[seg(0, 10, 1)]);
        assert_eq!(out, vec![seg(0, 3, 1), seg(3, 5, 2), seg(5, 10, 1)]);
        let out = overlay(&[seg(0, 10, 1)], &[seg(3, 5, 2)]);
        assert_eq!(out, vec![seg(0, 3, 1), seg(3, 5, 2), seg(5, 10, 1)]);
    }

    #[test]
    fn overlay_merges_and_gaps() {
        let out = overlay(&[seg(0, 5, 1), seg(7, 9, 3)], &[seg(5, 7, 1)]);
        assert_eq!(out, vec![seg(0, 7, 1), seg(7, 9, 3)]);
        let out = overlay(&[seg(0, 2, 1)], &[seg(4, 6, 2)]);
        assert_eq!(out, vec![seg(0, 2, 1), seg(4, 6, 2)]);
        assert!(overlay(&[], &[]).is_empty());
    }

    #[test]
    fn overlay_interleaved_sequences() {
        let a = [seg(154, 223, 3)];
        let b = [seg(210, 211, 1), seg(211, 212, 4), seg(212, 213, 5)];
        let want = vec![seg(154, 211, 3), seg(211, 212, 4), seg(212, 213, 5), seg(213, 223, 3)];
        assert_eq!(overlay(&a, &b), want);
        assert_eq!(overlay(&b, &a), want);
    }

    fn disjoint_map() -> impl Strategy<Value = Vec<Seg>> {
        prop::collection::vec((0..6u64, 1..6u64, 1..40u64), 0..12).prop_map(|parts| {
            let mut x = 0;
            parts
                .into_iter()
                .map(|(gap, len, seq)| {
                    x += gap;
                    let s = seg(x, x + len, seq);
                    x += len;
                    s
                })
                .collect()
        })
    }

    fn at(map: &[Seg], t: u64) -> Option<u64> {
        map.iter().find(|s| s.since <= t && t < s.till).map(|s| s.seq)
    }

    proptest! {
        #[test]
        fn overlay_is_pointwise_max(a in disjoint_map(), b in disjoint_map()) {
            let out = overlay(&a, &b);
            for t in 0..120 {
                prop_assert_eq!(at(&out, t), at(&a, t).max(at(&b, t)), "t={}", t);
            }
            for w in out.windows(2) {
                prop_assert!(w[0].till <= w[1].since);
                prop_assert!(w[0].till < w[1].since || w[0].seq != w[1].seq);
            }
        }
    }

    #[test]
    fn overlay_lower_seq_behind() {
        let out = overlay(&[seg(0, 10, 5)], &[seg(2, 4, 1), seg(8, 12, 2)]);
        assert_eq!(out, vec![seg(0, 10, 5), seg(10, 12, 2)]);
    }

    #[test]
    fn tree_blocks_match_brute_force() {
        let mut leaves = Vec::new();
        let mut tree = LayerTree::new();
        let mut state = 12345u64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for seq in 1..=300u64 {
            let since = next() % 500;
            let len = 1 + next() % 60;
            leaves.push(seg(since, since + len, seq));
            tree.on_append(&leaves);
            let ceiling = (next() % seq) as usize + 1;
            let layers = tree.prefix_layers(&leaves, ceiling);
            for t in (0..600).step_by(7) {
                let got = layers.iter().filter_map(|l| l.stab(t)).map(|s| s.seq).max();
                assert_eq!(got, brute(&leaves[..ceiling], t), "t={t} ceiling={ceiling}");
            }
        }
        tree.truncate(100);
        let again = LayerTree::build(&leaves[..100]);
        assert_eq!(tree.levels(), again.levels());
    }

    #[test]
    fn window_clips_edges() {
        let segs = [seg(0, 10, 1), seg(10, 20, 2), seg(25, 30, 3)];
        let layer = Layer { segs: &segs, min_seq: 1, max_seq: 3 };
        assert_eq!(&*layer.window(5, 26), &[seg(5, 10, 1), seg(10, 20, 2), seg(25, 26, 3)]);
        assert_eq!(&*layer.window(10, 20), &[seg(10, 20, 2)]);
        assert!(layer.window(20, 25).is_empty());
    }
}
