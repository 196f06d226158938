//! On-disk encrypted store: `index.bin` plus one ciphertext per document
//! under `docs/`, each named by its plaintext filename.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sseleak_core::{CiphertextDocument, CorpusError, EncryptedIndex, StoreScope};

use crate::error::{LabError, Result};

pub const INDEX_FILE: &str = "index.bin";
pub const DOCS_DIR: &str = "docs";

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    /// Writes a fresh store at `root`, replacing a previous store there.
    pub fn create(root: &Path, index: &EncryptedIndex, docs: &[CiphertextDocument]) -> Result<Self> {
        if root.exists() {
            let is_store = root.join(INDEX_FILE).is_file();
            let empty = fs::read_dir(root).map_err(LabError::io(root))?.next().is_none();
            if !is_store && !empty {
                return Err(LabError::Config(format!(
                    "{} exists and is not a store; refusing to overwrite",
                    root.display()
                )));
            }
            let docs_dir = root.join(DOCS_DIR);
            if docs_dir.exists() {
                fs::remove_dir_all(&docs_dir).map_err(LabError::io(&docs_dir))?;
            }
        }
        let docs_dir = root.join(DOCS_DIR);
        fs::create_dir_all(&docs_dir).map_err(LabError::io(&docs_dir))?;
        let root = root.canonicalize().map_err(LabError::io(root))?;
        let store = Self { root };
        for c in docs {
            store.write_doc(c)?;
        }
        store.write_index(index)?;
        Ok(store)
    }

    pub fn open(root: &Path) -> Result<Self> {
        if !root.join(INDEX_FILE).is_file() || !root.join(DOCS_DIR).is_dir() {
            return Err(LabError::NotAStore(root.to_owned()));
        }
        let root = root.canonicalize().map_err(LabError::io(root))?;
        Ok(Self { root })
    }

    /// Canonical absolute path of the store.
    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn index_path(&self) -> PathBuf {
        self.root.join(INDEX_FILE)
    }

    pub fn docs_dir(&self) -> PathBuf {
        self.root.join(DOCS_DIR)
    }

    pub fn doc_path(&self, filename: &str) -> Result<PathBuf> {
        sseleak_core::corpus::validate_filename(filename)?;
        Ok(self.docs_dir().join(filename))
    }

    pub fn read_index(&self) -> Result<EncryptedIndex> {
        let path = self.index_path();
        let bytes = fs::read(&path).map_err(LabError::io(&path))?;
        Ok(EncryptedIndex::from_bytes(&bytes)?)
    }

    /// Atomically replaces `index.bin`.
    pub fn write_index(&self, index: &EncryptedIndex) -> Result<()> {
        let path = self.index_path();
        let tmp = self.root.join(".index.bin.tmp");
        let mut f = fs::File::create(&tmp).map_err(LabError::io(&tmp))?;
        f.write_all(&index.to_bytes()).map_err(LabError::io(&tmp))?;
        f.sync_all().map_err(LabError::io(&tmp))?;
        fs::rename(&tmp, &path).map_err(LabError::io(&path))
    }

    pub fn write_doc(&self, c: &CiphertextDocument) -> Result<()> {
        let path = self.doc_path(c.filename())?;
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(LabError::io(parent))?;
        }
        fs::write(&path, c.blob()).map_err(LabError::io(&path))
    }

    pub fn remove_doc(&self, filename: &str) -> Result<()> {
        let path = self.doc_path(filename)?;
        fs::remove_file(&path).map_err(LabError::io(&path))
    }

    /// Store-relative names of all ciphertexts, sorted.
    pub fn doc_names(&self) -> Result<Vec<String>> {
        let docs = self.docs_dir();
        let mut out = Vec::new();
        for entry in walkdir::WalkDir::new(&docs).sort_by_file_name() {
            let entry = entry.map_err(|e| LabError::io(&docs)(e.into()))?;
            if entry.file_type().is_file() {
                let rel = entry.path().strip_prefix(&docs).expect("under docs dir");
                let name = rel.to_str().ok_or_else(|| CorpusError::InvalidFilename(rel.display().to_string()))?;
                out.push(name.replace(std::path::MAIN_SEPARATOR, "/"));
            }
        }
        out.sort();
        Ok(out)
    }

    /// Trace filter for accesses under this store's `docs/`.
    pub fn scope(&self) -> StoreScope {
        StoreScope::new(&self.docs_dir().to_string_lossy())
    }
}
