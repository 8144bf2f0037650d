use std::collections::HashSet;
use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, OnceLock};

use crate::error::{Error, Result};

pub(crate) const LOCK_FILE: &str = "LOCK";

/// Store directories locked by this process.
fn held() -> &'static Mutex<HashSet<PathBuf>> {
    static HELD: OnceLock<Mutex<HashSet<PathBuf>>> = OnceLock::new();
    HELD.get_or_init(Default::default)
}

fn alive(pid: u32) -> bool {
    if cfg!(target_os = "linux") {
        Path::new("/proc").join(pid.to_string()).exists()
    } else {
        true
    }
}

/// Single-writer lock: a `LOCK` file holding the owner's pid. A lock whose
/// owner is gone (or is this process without a live handle) is stale and
/// taken over.
#[derive(Debug)]
pub(crate) struct LockGuard {
    dir: PathBuf,
    file: PathBuf,
}

pub(crate) fn acquire(dir: &Path) -> Result<LockGuard> {
    let dir = dir.canonicalize()?;
    let me = std::process::id();
    let mut registry = held().lock().unwrap();
    if registry.contains(&dir) {
        return Err(Error::LockHeld(me));
    }
    let file = dir.join(LOCK_FILE);
    for _ in 0..3 {
        match fs::OpenOptions::new().write(true).create_new(true).open(&file) {
            Ok(mut f) => {
                write!(f, "{me}")?;
                f.sync_all()?;
                registry.insert(dir.clone());
                return Ok(LockGuard { dir, file });
            }
            Err(e) if e.kind() == ErrorKind::AlreadyExists => {
                let owner = fs::read_to_string(&file).ok().and_then(|s| s.trim().parse::<u32>().ok());
                match owner {
                    Some(pid) if pid != me && alive(pid) => return Err(Error::LockHeld(pid)),
                    _ => match fs::remove_file(&file) {
                        Ok(()) => {}
                        Err(e) if e.kind() == ErrorKind::NotFound => {}
                        Err(e) => return Err(e.into()),
                    },
                }
            }
            Err(e) => return Err(e.into()),
        }
    }
    Err(Error::LockHeld(0))
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.file);
        held().lock().unwrap().remove(&self.dir);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_acquire_in_process_fails_until_drop() {
        let dir = tempfile::tempdir().unwrap();
        let g = acquire(dir.path()).unwrap();
        assert_eq!(acquire(dir.path()).unwrap_err().name(), "LockHeld");
        drop(g);
        assert!(!dir.path().join(LOCK_FILE).exists());
        acquire(dir.path()).unwrap();
    }

    #[test]
    fn stale_lock_is_taken_over() {
        let dir = tempfile::tempdir().unwrap();
        // pid numbers this large are never handed out on Linux
        fs::write(dir.path().join(LOCK_FILE), "4294967").unwrap();
        acquire(dir.path()).unwrap();
        fs::write(dir.path().join("x"), "").unwrap();
    }

    #[test]
    fn live_foreign_owner_blocks() {
        if !cfg!(target_os = "linux") {
            return;
        }
        let dir = tempfile::tempdir().unwrap();
        // pid 1 is always alive
        fs::write(dir.path().join(LOCK_FILE), "1").unwrap();
        assert!(matches!(acquire(dir.path()), Err(Error::LockHeld(1))));
    }
}
