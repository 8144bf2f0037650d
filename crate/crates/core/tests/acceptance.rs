//! Acceptance run: one PASS or FAIL line per criterion, non-zero exit if
//! any criterion fails.

mod common;

use std::fs;
use std::process::ExitCode;
use std::sync::mpsc;
use std::time::Instant;

use common::*;
use conddb::bench::{run_workload, Workload, WorkloadKind};
use conddb::conformance::{backend_conformance, dump, random_script};
use conddb::{
    Error, FolderPath, Kind, OpenOptions, PartitionChunk, PartitionPolicy, PayloadSchema, Selector, Store,
    StoreStrategy, TimePoint, Value,
};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn file_store() -> (tempfile::TempDir, Store) {
    let dir = tempfile::TempDir::new().unwrap();
    let store = Store::open(dir.path(), OpenOptions::default()).unwrap();
    (dir, store)
}

/// Per-op means at a small and a large size: the fastest of seven samples
/// each, each run in a fresh folder. A small-size sample averages several
/// back-to-back runs so it spans a similar stretch of wall time as a large
/// one; otherwise a millisecond-long run that happens to dodge machine noise
/// would set the minimum. Samples alternate between sizes so a slow spell
/// lands on both sides of the ratio.
fn best_pair(store: &Store, kind: WorkloadKind, small: u64, large: u64, strategy: StoreStrategy) -> Result<(u64, u64), String> {
    let reps = (large / small).clamp(1, 10);
    let mut best = (u64::MAX, u64::MAX);
    for round in 0..7 {
        let run = |n, seed| run_workload(store, &Workload::new(kind, n, strategy).seed(seed)).map(|r| r.mean_ns).map_err(|e| e.to_string());
        let mut sum = 0;
        for rep in 0..reps {
            sum += run(small, round * reps + rep)?;
        }
        best.0 = best.0.min(sum / reps);
        best.1 = best.1.min(run(large, round)?);
    }
    Ok(best)
}

fn random_log(rng: &mut ChaCha8Rng, n: usize) -> Vec<(u64, u64)> {
    (0..n)
        .map(|_| {
            let a = rng.random_range(0..10_000);
            match rng.random_range(0..50) {
                0 => (a, u64::MAX),
                1 => (0, rng.random_range(1..10_000)),
                _ => (a, a + rng.random_range(1..2_000)),
            }
        })
        .collect()
}

fn oracle_equivalence() -> Outcome {
    let mut probes = 0u64;
    let mut mismatches = Vec::new();
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=10_000);
        let log = random_log(&mut rng, n);
        let store = Store::memory();
        let dir = folder(&store, "x", StoreStrategy::Layered, PartitionPolicy::NONE);
        load(&store, &dir, &log);
        let oracle = Oracle::new(&log);
        let s = store.begin_read();
        let mut ceilings: Vec<u64> = (0..20).map(|_| rng.random_range(0..=n as u64)).collect();
        ceilings.extend([0, 1, n as u64]);
        for &c in &ceilings {
            let sel = Selector::AtSequence(c);
            for t in (1..12_500).step_by(37).chain([u64::MAX - 1]) {
                probes += 1;
                let got = match s.find_object(&dir, TimePoint(t), &sel) {
                    Ok(v) => Some(v.object.seq),
                    Err(Error::NoValidObject { .. }) => None,
                    Err(e) => return Err(format!("seed {seed}: {e}")),
                };
                if got != oracle.find(t, c) {
                    mismatches.push(format!("seed {seed} t={t} c={c}: got {got:?}, want {:?}", oracle.find(t, c)));
                }
            }
        }
    }
    check(mismatches.is_empty(), format!("{probes} probes over 100 logs, {} mismatches {}", mismatches.len(), mismatches.first().map_or("", |m| m.as_str())))
}

fn schema_redesign_contrast() -> Outcome {
    let (_dir, store) = file_store();
    let (legacy_1k, legacy_10k) = best_pair(&store, WorkloadKind::StoreB, 1_000, 10_000, StoreStrategy::LegacyTruncate)?;
    let (layered_1k, layered_50k) = best_pair(&store, WorkloadKind::StoreB, 1_000, 50_000, StoreStrategy::Layered)?;
    let legacy = legacy_10k as f64 / legacy_1k as f64;
    let layered = layered_50k as f64 / layered_1k as f64;
    check(
        legacy >= 5.0 && layered <= 2.0,
        format!(
            "legacy StoreB {legacy_1k}ns -> {legacy_10k}ns per op (x{legacy:.2}, need >= 5); \
             layered StoreB {layered_1k}ns -> {layered_50k}ns (x{layered:.2}, need <= 2)"
        ),
    )
}

fn read_a_sanity() -> Outcome {
    let (_dir, store) = file_store();
    let (small, large) = best_pair(&store, WorkloadKind::ReadA, 1_000, 50_000, StoreStrategy::Layered)?;
    let ratio = large as f64 / small.max(1) as f64;
    check(ratio <= 3.0, format!("layered ReadA {small}ns -> {large}ns per op (x{ratio:.2}, need <= 3)"))
}

/// Writer 1 stores and commits, writer 2 stores and commits, then writer 1
/// tags. Returns the sequence each writer stored and what the tag resolves.
fn interleaving(store: &Store, folder: &FolderPath, trial: u64, use_head: bool) -> (u64, u64, u64) {
    let (to_w2, w2_rx) = mpsc::channel::<()>();
    let (to_w1, w1_rx) = mpsc::channel::<u64>();
    let tag = format!("{}-{trial}", if use_head { "head" } else { "seq" });
    let tag_name = tag.as_str();
    std::thread::scope(|scope| {
        let w1 = scope.spawn(move || {
            let mut s = store.begin_update().unwrap();
            let mine = s.store_object(folder, iv(100, 200), f(1.0)).unwrap();
            s.commit().unwrap();
            drop(s);
            to_w2.send(()).unwrap();
            let theirs = w1_rx.recv().unwrap();
            let mut s = store.begin_update().unwrap();
            if use_head {
                s.tag_head(std::slice::from_ref(folder), tag_name).unwrap();
            } else {
                s.tag_at_sequence(folder, mine, tag_name).unwrap();
            }
            s.commit().unwrap();
            (mine, theirs)
        });
        scope.spawn(move || {
            w2_rx.recv().unwrap();
            let mut s = store.begin_update().unwrap();
            let seq = s.store_object(folder, iv(50, 250), f(2.0)).unwrap();
            s.commit().unwrap();
            drop(s);
            to_w1.send(seq).unwrap();
        });
        let (mine, theirs) = w1.join().unwrap();
        let got = store.begin_read().find_object(folder, TimePoint(150), &Selector::Tag(tag.clone())).unwrap();
        (mine, theirs, got.object.seq)
    })
}

fn tag_reliability() -> Outcome {
    let store = Store::memory();
    let dir = folder(&store, "tagged", StoreStrategy::Layered, PartitionPolicy::NONE);
    let mut by_seq = 0;
    let mut by_head_wrong = 0;
    for trial in 0..100 {
        let (mine, _, got) = interleaving(&store, &dir, trial, false);
        by_seq += u32::from(got == mine);
        let (mine, theirs, got) = interleaving(&store, &dir, trial, true);
        by_head_wrong += u32::from(got == theirs && got != mine);
    }
    check(
        by_seq == 100 && by_head_wrong > 0,
        format!("tag_at_sequence kept writer 1's object in {by_seq}/100; tag_head captured writer 2's in {by_head_wrong}/100"),
    )
}

fn backend_independence() -> Outcome {
    let mut diffs = 0;
    let mut first = None;
    for seed in 0..50 {
        let dir = tempfile::TempDir::new().unwrap();
        let script = random_script(seed, 1000);
        let report = backend_conformance(|| Ok(Store::memory()), || Store::open(dir.path(), OpenOptions::default()), &script)
            .map_err(|e| e.to_string())?;
        diffs += report.diffs.len();
        if first.is_none() {
            first = report.diffs.into_iter().next().map(|d| format!("seed {seed}: {d:?}"));
        }
    }
    check(diffs == 0, format!("50 scripts of 1000 ops, {diffs} diffs {}", first.unwrap_or_default()))
}

fn partition_transparency() -> Outcome {
    let times: Vec<u64> = (1..12_500).step_by(97).collect();
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let n = rng.random_range(1..2_000);
        let log = random_log(&mut rng, n);
        let n = n as u64;
        let ceilings = [n / 4, n / 2, n];
        let store = Store::memory();
        let plain = folder(&store, "plain", StoreStrategy::Layered, PartitionPolicy::NONE);
        load(&store, &plain, &log);
        let want = answers(&store, &plain, &times, &ceilings);
        let policies = [
            PartitionPolicy::time(rng.random_range(50..3_000)).unwrap(),
            PartitionPolicy::version(rng.random_range(10..500)).unwrap(),
        ];
        for (i, policy) in policies.into_iter().enumerate() {
            let dir = folder(&store, &format!("split{i}"), StoreStrategy::Layered, policy);
            load(&store, &dir, &log);
            if answers(&store, &dir, &times, &ceilings) != want {
                return Err(format!("seed {seed}: {policy} folder differs from its twin"));
            }
            let before = store.begin_read().describe_folder(&dir).unwrap();
            for part in &before.partitions {
                let chunk = store.export_partition(&dir, part.index).map_err(|e| e.to_string())?;
                let chunk = PartitionChunk::decode(&chunk.encode()).map_err(|e| e.to_string())?;
                store.evict_partition(&dir, part.index).map_err(|e| e.to_string())?;
                store.import_partition(&dir, &chunk).map_err(|e| e.to_string())?;
            }
            if answers(&store, &dir, &times, &ceilings) != want || store.begin_read().describe_folder(&dir).unwrap() != before {
                return Err(format!("seed {seed}: export/evict/import changed {policy} folder"));
            }
        }
    }
    Ok("50 seeds, time and version partitioning, answers equal to unpartitioned twins before and after export/evict/import".into())
}

fn dir_size(dir: &std::path::Path) -> u64 {
    fs::read_dir(dir).unwrap().map(|e| e.unwrap().metadata().unwrap().len()).sum()
}

fn tiny_efficiency() -> Outcome {
    let (dir, store) = file_store();
    let path = FolderPath::parse("/dcs").unwrap();
    let mut s = store.begin_update().unwrap();
    s.create_tiny_folder(&path, &PayloadSchema::single("temp", Kind::Float64).unwrap(), PartitionPolicy::NONE, "").unwrap();
    s.commit().unwrap();
    drop(s);
    let before = dir_size(dir.path());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut samples = Vec::with_capacity(100_000);
    let mut at = 0;
    let mut s = store.begin_update().unwrap();
    for _ in 0..100_000 {
        at += rng.random_range(1..20);
        let v: f64 = rng.random();
        s.tiny_append(&path, TimePoint(at), &Value::Float64(v)).unwrap();
        samples.push((at, v));
    }
    s.commit().unwrap();
    drop(s);
    let per_sample = (dir_size(dir.path()) - before) as f64 / 100_000.0;

    let r = store.begin_read();
    let mut wrong = 0;
    for _ in 0..10_000 {
        let t = rng.random_range(1..at + 100);
        let want = samples.iter().rposition(|s| s.0 <= t).map(|i| (samples[i].0, Value::Float64(samples[i].1)));
        let got = match r.tiny_read(&path, TimePoint(t)) {
            Ok(x) => Some((x.at.0, x.value)),
            Err(_) => None,
        };
        wrong += u32::from(got != want);
    }

    let (small, large) = best_pair(&store, WorkloadKind::TinyAppend, 1_000, 1_000_000, StoreStrategy::Layered)?;
    let ratio = large as f64 / small as f64;
    check(
        per_sample <= 24.0 && ratio <= 2.0 && wrong == 0,
        format!(
            "{per_sample:.2} bytes/sample on disk (need <= 24); append {small}ns -> {large}ns from 1e3 to 1e6 \
             (x{ratio:.2}, need <= 2); {wrong}/10000 step reads differ from oracle"
        ),
    )
}

fn crash_safety() -> Outcome {
    let tmp = tempfile::TempDir::new().unwrap();
    let pristine = tmp.path().join("pristine");
    let h = build(&pristine, 2024, 14);
    let last = h.sizes.last().unwrap().clone();
    let names: Vec<&String> = last.keys().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for trial in 0..20 {
        let name = names[rng.random_range(0..names.len())];
        let floor = h.sizes[h.checkpoint].get(name).copied().unwrap_or(0);
        let cut = rng.random_range(floor..=last[name]);
        let dir = tmp.path().join(format!("trial{trial}"));
        copy_dir(&pristine, &dir);
        fs::OpenOptions::new().write(true).open(dir.join(name)).unwrap().set_len(cut).unwrap();
        let store = Store::open(&dir, OpenOptions::default()).map_err(|e| format!("trial {trial}: {e}"))?;
        let k = (0..h.sizes.len()).rev().find(|&i| h.sizes[i].get(name).copied().unwrap_or(0) <= cut).unwrap();
        if dump(&store).map_err(|e| e.to_string())? != h.dumps[k] {
            return Err(format!("trial {trial}: {name} cut at {cut} did not reopen to committed state {k}"));
        }
    }
    Ok(format!("20 truncations after a checkpoint at commit {} reopened to the committed prefix", h.checkpoint))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("latest-wins oracle equivalence", oracle_equivalence),
        ("store-path scaling contrast", schema_redesign_contrast),
        ("ReadA scaling", read_a_sanity),
        ("tag reliability", tag_reliability),
        ("backend independence", backend_independence),
        ("partition transparency", partition_transparency),
        ("tiny-object efficiency", tiny_efficiency),
        ("crash safety", crash_safety),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1}s): {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
