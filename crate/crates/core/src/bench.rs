//! Store and read workloads with timing.
//!
//! StoreA stores `n` objects over one identical interval; StoreB stores
//! object `i` over `[i*delta, i*delta + width)` so that every object
//! overlaps all earlier ones. ReadA and ReadB browse what the matching store
//! workload left behind; their per-op time is the browse time divided by
//! the number of intervals it returns. Every run checks its answers against a brute-force
//! oracle before any timing is reported.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{Selector, Session, Store, StoreStrategy};
use crate::error::{Error, Result};
use crate::model::{FolderPath, Kind, PayloadSchema, PayloadValue, TimePoint, ValidityInterval, Value};
use crate::partition::PartitionPolicy;

/// Probe points checked against the oracle per run.
const PROBES: usize = 64;
/// Timed repetitions of a browse in the read workloads.
const READ_REPEATS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WorkloadKind {
    StoreA,
    StoreB,
    ReadA,
    ReadB,
    TinyAppend,
    TinyRead,
}

impl WorkloadKind {
    pub const ALL: [WorkloadKind; 6] = [
        WorkloadKind::StoreA,
        WorkloadKind::StoreB,
        WorkloadKind::ReadA,
        WorkloadKind::ReadB,
        WorkloadKind::TinyAppend,
        WorkloadKind::TinyRead,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            WorkloadKind::StoreA => "StoreA",
            WorkloadKind::StoreB => "StoreB",
            WorkloadKind::ReadA => "ReadA",
            WorkloadKind::ReadB => "ReadB",
            WorkloadKind::TinyAppend => "TinyAppend",
            WorkloadKind::TinyRead => "TinyRead",
        }
    }

    pub fn is_tiny(self) -> bool {
        matches!(self, WorkloadKind::TinyAppend | WorkloadKind::TinyRead)
    }

    /// Geometry A (identical intervals) or B (staggered, all overlapping).
    fn staggered(self) -> bool {
        matches!(self, WorkloadKind::StoreB | WorkloadKind::ReadB)
    }
}

impl fmt::Display for WorkloadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WorkloadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        WorkloadKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown workload {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workload {
    pub kind: WorkloadKind,
    pub n: u64,
    pub seed: u64,
    pub strategy: StoreStrategy,
    /// Distance between consecutive start times.
    pub delta: u64,
    /// Interval width; `None` means `10 * n`.
    pub width: Option<u64>,
    /// Concurrent browsing threads for the read workloads.
    pub readers: usize,
}

impl Workload {
    pub fn new(kind: WorkloadKind, n: u64, strategy: StoreStrategy) -> Self {
        Workload { kind, n, seed: 0, strategy, delta: 1, width: None, readers: 1 }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn width(&self) -> u64 {
        self.width.unwrap_or(10 * self.n).max(1)
    }

    /// Interval of object `i` (0-based).
    pub fn interval(&self, i: u64) -> (u64, u64) {
        let since = if self.kind.staggered() { i * self.delta } else { 0 };
        (since, since + self.width())
    }

    fn strategy_label(&self) -> &'static str {
        if self.kind.is_tiny() {
            "tiny"
        } else {
            self.strategy.as_str()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchRow {
    pub kind: WorkloadKind,
    pub strategy: &'static str,
    pub n: u64,
    /// Operations that went into the per-op statistics.
    pub ops: u64,
    pub total: Duration,
    pub mean_ns: u64,
    pub p95_ns: u64,
    pub seed: u64,
}

impl BenchRow {
    /// `kind,strategy,n,total_ns,mean_ns,p95_ns,seed`
    pub fn record(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.kind,
            self.strategy,
            self.n,
            self.total.as_nanos(),
            self.mean_ns,
            self.p95_ns,
            self.seed
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub environment: String,
}

/// Minutes and seconds, the way `time(1)` prints them: `10m7.253s`.
pub fn format_duration(d: Duration) -> String {
    let secs = d.as_secs_f64();
    let m = (secs / 60.0).floor();
    format!("{}m{:.3}s", m as u64, secs - m * 60.0)
}

impl BenchReport {
    pub fn records(&self) -> String {
        let mut out = format!("# {}\n", self.environment);
        for r in &self.rows {
            out.push_str(&r.record());
            out.push('\n');
        }
        out
    }

    /// One row per `n`, one column of total times per workload and strategy.
    pub fn table(&self) -> String {
        let mut cols: Vec<(WorkloadKind, &str)> = Vec::new();
        let mut sizes: Vec<u64> = Vec::new();
        for r in &self.rows {
            if !cols.contains(&(r.kind, r.strategy)) {
                cols.push((r.kind, r.strategy));
            }
            if !sizes.contains(&r.n) {
                sizes.push(r.n);
            }
        }
        sizes.sort_unstable();
        let mut grid = vec![std::iter::once("n".to_string())
            .chain(cols.iter().map(|(k, s)| format!("{k} ({s})")))
            .collect::<Vec<_>>()];
        for n in &sizes {
            let mut line = vec![n.to_string()];
            for (k, s) in &cols {
                let cell = self.rows.iter().find(|r| r.n == *n && r.kind == *k && r.strategy == *s);
                line.push(cell.map_or_else(|| "-".into(), |r| format_duration(r.total)));
            }
            grid.push(line);
        }
        let widths: Vec<usize> = (0..=cols.len()).map(|c| grid.iter().map(|l| l[c].len()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for line in grid {
            let cells: Vec<String> = line.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

fn mismatch(what: impl Into<String>) -> Error {
    Error::OracleMismatch(what.into())
}

/// Mean and 95th percentile of per-op samples after dropping the warm-up.
fn stats(samples: &mut Vec<u64>) -> (u64, u64, u64) {
    let warm = (samples.len() / 10).min(100);
    samples.drain(..warm);
    if samples.is_empty() {
        return (0, 0, 0);
    }
    let mean = samples.iter().sum::<u64>() / samples.len() as u64;
    samples.sort_unstable();
    let p95 = samples[(samples.len() * 95).div_ceil(100) - 1];
    (samples.len() as u64, mean, p95)
}

fn elapsed_ns(start: Instant) -> u64 {
    start.elapsed().as_nanos() as u64
}

static RUNS: AtomicU64 = AtomicU64::new(0);

/// Creates a fresh folder under `/bench` for one run.
fn fresh_folder(store: &Store, w: &Workload) -> Result<FolderPath> {
    let root = FolderPath::parse("/bench")?;
    let mut s = store.begin_update()?;
    if s.list(&root, false).is_err() {
        s.create_folderset(&root, "benchmark runs")?;
    }
    let taken = s.list(&root, false)?.len();
    let run = RUNS.fetch_add(1, Ordering::Relaxed);
    let path = root.child(&format!("{}-{}-{}-{}-{}", w.kind, w.strategy_label(), w.n, taken, run))?;
    let schema = PayloadSchema::single("value", Kind::Float64)?;
    if w.kind.is_tiny() {
        s.create_tiny_folder(&path, &schema, PartitionPolicy::NONE, "")?;
    } else {
        s.create_folder(&path, &schema, PartitionPolicy::NONE, w.strategy, "")?;
    }
    s.commit()?;
    Ok(path)
}

/// Brute-force latest-wins answer: the highest sequence at or below
/// `ceiling` whose interval contains `t`. Object `i` has sequence `i + 1`.
fn oracle_find(w: &Workload, t: u64, ceiling: u64) -> Option<u64> {
    (0..w.n.min(ceiling)).rev().find(|&i| {
        let (since, till) = w.interval(i);
        since <= t && t < till
    })
}

fn check_objects(s: &Session, folder: &FolderPath, w: &Workload, rng: &mut ChaCha8Rng) -> Result<()> {
    let span = w.interval(w.n.saturating_sub(1)).1 + 2;
    let layered = w.strategy == StoreStrategy::Layered;
    for _ in 0..PROBES {
        let t = rng.random_range(1..span);
        let (sel, ceiling) = match layered && rng.random_bool(0.5) {
            true => {
                let c = rng.random_range(0..=w.n);
                (Selector::AtSequence(c), c)
            }
            false => (Selector::Head, w.n),
        };
        let got = match s.find_object(folder, TimePoint(t), &sel) {
            Ok(v) => Some(v.object.seq),
            Err(Error::NoValidObject { .. }) => None,
            Err(e) => return Err(e),
        };
        let want = oracle_find(w, t, ceiling).map(|i| i + 1);
        if got != want {
            return Err(mismatch(format!("{folder} at {t} ceiling {ceiling}: got {got:?}, want {want:?}")));
        }
    }
    Ok(())
}

/// Checks a full-range browse against the closed form of each geometry.
fn check_browse(w: &Workload, visible: &[crate::engine::Visible]) -> Result<()> {
    let want = match (w.n, w.kind.staggered()) {
        (0, _) => 0,
        (_, false) => 1,
        (_, true) if w.delta == 0 => 1,
        // each object keeps at least [i*delta, i*delta + 1)
        (n, true) => n,
    };
    if visible.len() as u64 != want {
        return Err(mismatch(format!("browse returned {} intervals, want {want}", visible.len())));
    }
    for v in visible {
        let t = v.effective.since().0;
        let expect = oracle_find(w, t.max(1), w.n).map(|i| i + 1);
        if t > 0 && Some(v.object.seq) != expect {
            return Err(mismatch(format!("browse piece at {t} has seq {}, want {expect:?}", v.object.seq)));
        }
    }
    Ok(())
}

fn payload(rng: &mut ChaCha8Rng) -> PayloadValue {
    PayloadValue(vec![Value::Float64(rng.random::<f64>())])
}

fn run_objects(store: &Store, w: &Workload) -> Result<(Vec<u64>, Duration)> {
    let folder = fresh_folder(store, w)?;
    let mut rng = ChaCha8Rng::seed_from_u64(w.seed);
    let mut samples = Vec::with_capacity(w.n as usize);
    let timed_store = matches!(w.kind, WorkloadKind::StoreA | WorkloadKind::StoreB);
    let start = Instant::now();
    let mut s = store.begin_update()?;
    for i in 0..w.n {
        let (since, till) = w.interval(i);
        let interval = ValidityInterval::new(since, till)?;
        let p = payload(&mut rng);
        let t0 = Instant::now();
        s.store_object(&folder, interval, p)?;
        samples.push(elapsed_ns(t0));
    }
    s.commit()?;
    let store_total = start.elapsed();

    let reader = store.begin_read();
    check_objects(&reader, &folder, w, &mut rng)?;
    if timed_store {
        return Ok((samples, store_total));
    }

    let browse = |s: &Session| s.browse_objects(&folder, ValidityInterval::all(), &Selector::Head);
    check_browse(w, &browse(&reader)?)?;
    if w.n == 0 {
        return Ok((Vec::new(), Duration::ZERO));
    }
    let start = Instant::now();
    let samples = if w.readers <= 1 {
        let mut out = Vec::with_capacity(READ_REPEATS);
        for _ in 0..READ_REPEATS {
            let t0 = Instant::now();
            let got = browse(&reader)?.len() as u64;
            out.push(elapsed_ns(t0) / got.max(1));
        }
        out
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..w.readers)
                .map(|_| {
                    scope.spawn(|| -> Result<Vec<u64>> {
                        let r = store.begin_read();
                        let mut out = Vec::with_capacity(READ_REPEATS);
                        for _ in 0..READ_REPEATS {
                            let t0 = Instant::now();
                            let got = browse(&r)?.len() as u64;
                            out.push(elapsed_ns(t0) / got.max(1));
                        }
                        Ok(out)
                    })
                })
                .collect();
            let mut all = Vec::new();
            for h in handles {
                all.extend(h.join().expect("reader thread panicked")?);
            }
            Ok::<_, Error>(all)
        })?
    };
    Ok((samples, start.elapsed()))
}

fn tiny_at(w: &Workload, i: u64) -> u64 {
    1 + i * w.delta.max(1)
}

fn run_tiny(store: &Store, w: &Workload) -> Result<(Vec<u64>, Duration)> {
    let folder = fresh_folder(store, w)?;
    let mut rng = ChaCha8Rng::seed_from_u64(w.seed);
    let values: Vec<f64> = (0..w.n).map(|_| rng.random()).collect();
    let mut samples = Vec::with_capacity(w.n as usize);
    let start = Instant::now();
    let mut s = store.begin_update()?;
    for (i, v) in values.iter().enumerate() {
        let at = TimePoint(tiny_at(w, i as u64));
        let value = Value::Float64(*v);
        let t0 = Instant::now();
        s.tiny_append(&folder, at, &value)?;
        samples.push(elapsed_ns(t0));
    }
    s.commit()?;
    let append_total = start.elapsed();

    let reader = store.begin_read();
    let span = tiny_at(w, w.n) + w.delta;
    let oracle = |t: u64| (0..w.n).rev().find(|&i| tiny_at(w, i) <= t);
    let probe = |t: u64| -> Result<()> {
        let got = match reader.tiny_read(&folder, TimePoint(t)) {
            Ok(x) => Some((x.at.0, x.value)),
            Err(Error::NoValidObject { .. }) => None,
            Err(e) => return Err(e),
        };
        let want = oracle(t).map(|i| (tiny_at(w, i), Value::Float64(values[i as usize])));
        if got != want {
            return Err(mismatch(format!("{folder} sample at {t}: got {got:?}, want {want:?}")));
        }
        Ok(())
    };
    for _ in 0..PROBES {
        probe(rng.random_range(1..span))?;
    }
    if w.kind == WorkloadKind::TinyAppend {
        return Ok((samples, append_total));
    }

    let start = Instant::now();
    let mut samples = Vec::with_capacity(w.n as usize);
    for _ in 0..w.n {
        let t = TimePoint(rng.random_range(1..span));
        let t0 = Instant::now();
        std::hint::black_box(reader.tiny_read(&folder, t)?);
        samples.push(elapsed_ns(t0));
    }
    Ok((samples, start.elapsed()))
}

/// Runs one workload in a fresh folder of `store`.
pub fn run_workload(store: &Store, w: &Workload) -> Result<BenchRow> {
    if w.kind.is_tiny() && w.delta == 0 {
        return Err(Error::InvalidArgument("tiny workloads need delta > 0".into()));
    }
    let (mut samples, total) = match w.kind.is_tiny() {
        true => run_tiny(store, w)?,
        false => run_objects(store, w)?,
    };
    let (ops, mean_ns, p95_ns) = stats(&mut samples);
    Ok(BenchRow { kind: w.kind, strategy: w.strategy_label(), n: w.n, ops, total, mean_ns, p95_ns, seed: w.seed })
}

/// Every combination of `kinds`, `sizes` and `strategies`, tiny workloads
/// once per size.
pub fn run_matrix(
    store: &Store,
    kinds: &[WorkloadKind],
    sizes: &[u64],
    strategies: &[StoreStrategy],
    seed: u64,
) -> Result<BenchReport> {
    let mut rows = Vec::new();
    for &kind in kinds {
        let strategies = if kind.is_tiny() { &[StoreStrategy::Layered][..] } else { strategies };
        for &strategy in strategies {
            for &n in sizes {
                rows.push(run_workload(store, &Workload::new(kind, n, strategy).seed(seed))?);
            }
        }
    }
    Ok(BenchReport { rows, environment: environment(store) })
}

/// The `# ...` header line of a report: where the numbers came from.
pub fn environment(store: &Store) -> String {
    let backend = if store.is_durable() { "file" } else { "memory" };
    format!(
        "os={} arch={} cpus={} backend={backend}",
        std::env::consts::OS,
        std::env::consts::ARCH,
        std::thread::available_parallelism().map_or(1, |n| n.get())
    )
}
