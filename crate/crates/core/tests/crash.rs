mod common;

use std::fs;

use common::*;
use conddb::conformance::dump;
use conddb::{OpenOptions, Store};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn truncated_logs_reopen_to_a_committed_prefix() {
    let tmp = tempfile::TempDir::new().unwrap();
    let pristine = tmp.path().join("pristine");
    let h = build(&pristine, 11, 12);
    let last = h.sizes.last().unwrap().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for trial in 0..20 {
        let names: Vec<&String> = last.keys().collect();
        let name = names[rng.random_range(0..names.len())];
        let floor = h.sizes[h.checkpoint].get(name).copied().unwrap_or(0);
        let cut = rng.random_range(floor..=last[name]);
        let dir = tmp.path().join(format!("trial{trial}"));
        copy_dir(&pristine, &dir);
        fs::OpenOptions::new().write(true).open(dir.join(name)).unwrap().set_len(cut).unwrap();

        let store = Store::open(&dir, OpenOptions::default()).unwrap();
        let k = (0..h.sizes.len()).rev().find(|&i| h.sizes[i].get(name).copied().unwrap_or(0) <= cut).unwrap();
        assert!(k >= h.checkpoint);
        assert_eq!(dump(&store).unwrap(), h.dumps[k], "trial {trial}: {name} cut at {cut}, expected state {k}");

        // the repaired store keeps working and keeps its answers
        drop(store);
        let store = Store::open(&dir, OpenOptions::default()).unwrap();
        assert_eq!(dump(&store).unwrap(), h.dumps[k]);
        let mut s = store.begin_update().unwrap();
        s.store_object(&p("/t/layered"), iv(1, 2), f(1.0)).unwrap();
        s.commit().unwrap();
    }
}

#[test]
fn torn_tail_bytes_are_ignored() {
    let tmp = tempfile::TempDir::new().unwrap();
    let h = build(tmp.path(), 3, 6);
    let mut catalog = fs::OpenOptions::new().append(true).open(tmp.path().join("catalog.log")).unwrap();
    std::io::Write::write_all(&mut catalog, &[0x1E, 0xFF, 0x00, 0x13]).unwrap();
    drop(catalog);
    let store = Store::open(tmp.path(), OpenOptions::default()).unwrap();
    assert_eq!(&dump(&store).unwrap(), h.dumps.last().unwrap());
}

#[test]
fn reopening_changes_no_answer() {
    let tmp = tempfile::TempDir::new().unwrap();
    let h = build(tmp.path(), 5, 8);
    for checkpoint in [false, true, false] {
        let store = Store::open(tmp.path(), OpenOptions::default()).unwrap();
        assert_eq!(&dump(&store).unwrap(), h.dumps.last().unwrap());
        if checkpoint {
            store.checkpoint().unwrap();
        }
    }
    let ro = Store::open(tmp.path(), OpenOptions { read_only: true, ..OpenOptions::default() }).unwrap();
    assert_eq!(&dump(&ro).unwrap(), h.dumps.last().unwrap());
    assert_eq!(ro.begin_update().unwrap_err().name(), "ReadOnlyStore");
}
