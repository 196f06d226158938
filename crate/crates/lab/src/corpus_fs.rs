//! Loading a plaintext corpus from a directory tree.

use std::path::{Path, PathBuf};

use log::warn;
use sseleak_core::Document;
use walkdir::WalkDir;

use crate::error::{LabError, Result};

/// A file that could not be ingested.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skipped {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct LoadedCorpus {
    /// Sorted by filename.
    pub documents: Vec<Document>,
    pub skipped: Vec<Skipped>,
}

/// One document per regular file under `dir`, named by its `/`-separated
/// path relative to `dir`. Symlinks are followed. Unreadable files are
/// skipped with a warning.
pub fn load_corpus(dir: &Path) -> Result<LoadedCorpus> {
    let meta = std::fs::metadata(dir).map_err(LabError::io(dir))?;
    if !meta.is_dir() {
        return Err(LabError::Io {
            path: dir.to_owned(),
            source: std::io::Error::new(std::io::ErrorKind::NotADirectory, "not a directory"),
        });
    }
    std::fs::read_dir(dir).map_err(LabError::io(dir))?;

    let mut out = LoadedCorpus::default();
    let mut skip = |path: PathBuf, reason: String| {
        warn!("skipping {}: {}", path.display(), reason);
        out.skipped.push(Skipped { path, reason });
    };
    let mut docs = Vec::new();
    for entry in WalkDir::new(dir).follow_links(true).sort_by_file_name() {
        let entry = match entry {
            Ok(e) => e,
            Err(e) => {
                if e.depth() == 0 {
                    return Err(LabError::io(dir)(e.into()));
                }
                let path = e.path().map(Path::to_owned).unwrap_or_else(|| dir.to_owned());
                skip(path, e.to_string());
                continue;
            }
        };
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(dir).expect("walkdir yields paths under its root");
        let Some(name) =
            rel.components().map(|c| c.as_os_str().to_str()).collect::<Option<Vec<_>>>().map(|parts| parts.join("/"))
        else {
            skip(entry.path().to_owned(), "filename is not valid UTF-8".into());
            continue;
        };
        let body = match std::fs::read(entry.path()) {
            Ok(b) => b,
            Err(e) => {
                skip(entry.path().to_owned(), e.to_string());
                continue;
            }
        };
        match Document::new(name, body) {
            Ok(d) => docs.push(d),
            Err(e) => skip(entry.path().to_owned(), e.to_string()),
        }
    }
    docs.sort_by(|a, b| a.filename().cmp(b.filename()));
    out.documents = docs;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_files() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("doc2"), "b").unwrap();
        std::fs::write(dir.path().join("doc1"), "a").unwrap();
        let c = load_corpus(dir.path()).unwrap();
        let names: Vec<_> = c.documents.iter().map(Document::filename).collect();
        assert_eq!(names, ["doc1", "doc2"]);
        assert!(c.skipped.is_empty());
    }

    #[test]
    fn nested_paths_are_relative() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("allen-p/inbox")).unwrap();
        std::fs::write(dir.path().join("allen-p/inbox/1."), "x").unwrap();
        let c = load_corpus(dir.path()).unwrap();
        assert_eq!(c.documents[0].filename(), "allen-p/inbox/1.");
    }

    #[test]
    fn empty_directory() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_corpus(dir.path()).unwrap().documents.is_empty());
    }

    #[test]
    fn missing_directory_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_corpus(&dir.path().join("nope")).is_err());
    }

    #[cfg(unix)]
    #[test]
    fn unreadable_file_is_skipped() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("doc1"), "a").unwrap();
        std::fs::write(dir.path().join("doc3"), "c").unwrap();
        // dangling symlink: a directory entry whose content cannot be read
        std::os::unix::fs::symlink(dir.path().join("gone"), dir.path().join("doc2")).unwrap();
        let c = load_corpus(dir.path()).unwrap();
        assert_eq!(c.documents.len(), 2);
        assert_eq!(c.skipped.len(), 1);
        assert!(c.skipped[0].path.ends_with("doc2"));
    }

    #[cfg(unix)]
    #[test]
    fn permission_denied_file_is_skipped() {
        use std::os::unix::fs::PermissionsExt;
        if unsafe { libc::geteuid() } == 0 {
            return; // root reads through mode 000
        }
        let dir = tempfile::tempdir().unwrap();
        for n in ["doc1", "doc2", "doc3"] {
            std::fs::write(dir.path().join(n), n).unwrap();
        }
        std::fs::set_permissions(dir.path().join("doc2"), std::fs::Permissions::from_mode(0o000)).unwrap();
        let c = load_corpus(dir.path()).unwrap();
        assert_eq!(c.documents.len(), 2);
        assert_eq!(c.skipped.len(), 1);
    }
}
