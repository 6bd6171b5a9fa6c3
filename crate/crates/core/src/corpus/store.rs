//! On-disk corpus store.
//!
//! Layout: `codes/<code_id>.hex` holds each distinct code once, and
//! `index.jsonl` lists every deployment in records-file format with
//! `code_ref` pointing into `codes/`. The index is therefore itself a valid
//! records file. One writer at a time holds `LOCK`; readers take no lock and
//! only ever see a fully renamed index.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{ingest, Corpus, DeploymentRecord, IngestOptions};
use crate::error::CorpusError;

const INDEX: &str = "index.jsonl";
const CODES: &str = "codes";
const LOCK: &str = "LOCK";

#[derive(Debug, Clone)]
pub struct CorpusStore {
    root: PathBuf,
}

struct WriteLock(PathBuf);

impl Drop for WriteLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

impl CorpusStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        CorpusStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn index_path(&self) -> PathBuf {
        self.root.join(INDEX)
    }

    fn lock(&self) -> Result<WriteLock, CorpusError> {
        let path = self.root.join(LOCK);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(WriteLock(path)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CorpusError::Locked(self.root.clone())),
            Err(e) => Err(CorpusError::io(format!("cannot create {}", path.display()), e)),
        }
    }

    /// Writes `corpus`, replacing any previous index. Code files already
    /// present are content-addressed and left untouched.
    pub fn save(&self, corpus: &Corpus) -> Result<(), CorpusError> {
        let codes_dir = self.root.join(CODES);
        fs::create_dir_all(&codes_dir)
            .map_err(|e| CorpusError::io(format!("cannot create {}", codes_dir.display()), e))?;
        let _lock = self.lock()?;

        for (id, entry) in corpus.codes() {
            let path = codes_dir.join(format!("{id}.hex"));
            if !path.exists() {
                let tmp = codes_dir.join(format!("{id}.hex.tmp"));
                fs::write(&tmp, format!("0x{}\n", hex::encode(&entry.code)))
                    .and_then(|()| fs::rename(&tmp, &path))
                    .map_err(|e| CorpusError::io(format!("cannot write {}", path.display()), e))?;
            }
        }

        let tmp = self.root.join(format!("{INDEX}.tmp"));
        let write_index = || -> std::io::Result<()> {
            let mut out = BufWriter::new(File::create(&tmp)?);
            for (id, entry) in corpus.codes() {
                for d in &entry.deployments {
                    let record = DeploymentRecord {
                        code_id: id.clone(),
                        block: d.block,
                        address: d.address.clone(),
                        has_source: d.has_source,
                        code_ref: format!("{CODES}/{id}.hex"),
                        compiler_version: d.compiler_version.map(|v| v.to_string()),
                    };
                    serde_json::to_writer(&mut out, &record)?;
                    out.write_all(b"\n")?;
                }
            }
            out.into_inner()?.sync_all()?;
            fs::rename(&tmp, self.index_path())
        };
        write_index().map_err(|e| CorpusError::io(format!("cannot write {}", self.index_path().display()), e))
    }

    /// Loads the corpus. The store is trusted, so any bad line is an error.
    pub fn load(&self) -> Result<Corpus, CorpusError> {
        let options = IngestOptions {
            horizon_block: u64::MAX,
            strict: true,
        };
        Ok(ingest(&self.index_path(), options)?.corpus)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_and_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut corpus = Corpus::new();
        corpus.insert_code(vec![0x60, 0x01, 0x00], 3, true);
        corpus.insert_code(vec![0x60, 0x01, 0x00], 1, false);
        corpus.insert_code(vec![0x5b], 2, false);
        let store = CorpusStore::new(dir.path());
        store.save(&corpus).unwrap();
        assert_eq!(store.load().unwrap(), corpus);
        // Saving twice is fine; the lock is released after each write.
        store.save(&corpus).unwrap();
        assert!(!dir.path().join(LOCK).exists());
    }

    #[test]
    fn second_writer_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let store = CorpusStore::new(dir.path());
        let _held = store.lock().unwrap();
        assert!(matches!(store.save(&Corpus::new()), Err(CorpusError::Locked(_))));
    }
}
