//! Append-only JSONL journal of backend responses with an in-memory index.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::KnowledgeError;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CacheKey {
    pub profile: String,
    pub doc: String,
    pub source_index: usize,
    pub relation: String,
}

impl std::fmt::Display for CacheKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}/{}/{}/{}",
            self.profile, self.doc, self.source_index, self.relation
        )
    }
}

#[derive(Serialize, Deserialize)]
struct Record {
    #[serde(flatten)]
    key: CacheKey,
    texts: Vec<String>,
}

#[derive(Debug)]
pub struct InferenceCache {
    path: PathBuf,
    index: BTreeMap<CacheKey, Vec<String>>,
    journal: File,
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> KnowledgeError + '_ {
    move |source| KnowledgeError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl InferenceCache {
    /// Open (or create) a journal. A trailing partial record is reported as
    /// [`KnowledgeError::CacheCorrupt`]; see [`InferenceCache::open_recovering`].
    pub fn open(path: &Path) -> Result<Self, KnowledgeError> {
        let bytes = if path.exists() {
            fs::read(path).map_err(io(path))?
        } else {
            Vec::new()
        };
        let index = parse_journal(&bytes)?;
        let journal = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io(path))?;
        Ok(InferenceCache {
            path: path.to_path_buf(),
            index,
            journal,
        })
    }

    /// Open a journal, first dropping a trailing partial record if present.
    /// Returns the cache and the number of bytes discarded.
    pub fn open_recovering(path: &Path) -> Result<(Self, usize), KnowledgeError> {
        let mut dropped = 0;
        if path.exists() {
            let bytes = fs::read(path).map_err(io(path))?;
            let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
            if keep < bytes.len() {
                dropped = bytes.len() - keep;
                let f = OpenOptions::new().write(true).open(path).map_err(io(path))?;
                f.set_len(keep as u64).map_err(io(path))?;
            }
        }
        Ok((Self::open(path)?, dropped))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn get(&self, key: &CacheKey) -> Option<&[String]> {
        self.index.get(key).map(Vec::as_slice)
    }

    /// Append a full beam list. Keys already present are left untouched.
    pub fn insert(&mut self, key: CacheKey, texts: Vec<String>) -> Result<(), KnowledgeError> {
        if self.index.contains_key(&key) {
            return Ok(());
        }
        let record = Record { key, texts };
        let mut line = serde_json::to_vec(&record).expect("cache record serializes");
        line.push(b'\n');
        self.journal.write_all(&line).map_err(io(&self.path))?;
        self.journal.flush().map_err(io(&self.path))?;
        self.index.insert(record.key, record.texts);
        Ok(())
    }
}

fn parse_journal(bytes: &[u8]) -> Result<BTreeMap<CacheKey, Vec<String>>, KnowledgeError> {
    let mut index = BTreeMap::new();
    if bytes.is_empty() {
        return Ok(index);
    }
    let complete = bytes.last() == Some(&b'\n');
    let lines: Vec<&[u8]> = bytes.split(|&b| b == b'\n').collect();
    let last = lines.len() - 1;
    for (i, line) in lines.iter().enumerate() {
        if i == last {
            if !complete {
                return Err(KnowledgeError::CacheCorrupt(format!(
                    "partial trailing record at line {}",
                    i + 1
                )));
            }
            break;
        }
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let record: Record = serde_json::from_slice(line).map_err(|e| {
            KnowledgeError::CacheCorrupt(format!("line {}: {e}", i + 1))
        })?;
        index.entry(record.key).or_insert(record.texts);
    }
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(i: usize) -> CacheKey {
        CacheKey {
            profile: "mock".into(),
            doc: "d1".into(),
            source_index: i,
            relation: "xIntent".into(),
        }
    }

    #[test]
    fn persists_across_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        {
            let mut c = InferenceCache::open(&path).unwrap();
            c.insert(key(0), vec!["a".into(), "b".into()]).unwrap();
            c.insert(key(0), vec!["ignored".into()]).unwrap();
            c.insert(key(1), vec!["c".into()]).unwrap();
        }
        let c = InferenceCache::open(&path).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.get(&key(0)).unwrap(), &["a".to_string(), "b".to_string()]);
        assert_eq!(fs::read_to_string(&path).unwrap().lines().count(), 2);
    }

    #[test]
    fn truncated_journal_is_corrupt_then_recoverable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        {
            let mut c = InferenceCache::open(&path).unwrap();
            c.insert(key(0), vec!["a".into()]).unwrap();
            c.insert(key(1), vec!["b".into()]).unwrap();
        }
        let full = fs::read(&path).unwrap();
        let cut = full.len() - 7;
        fs::write(&path, &full[..cut]).unwrap();
        assert!(matches!(
            InferenceCache::open(&path),
            Err(KnowledgeError::CacheCorrupt(_))
        ));
        let (c, dropped) = InferenceCache::open_recovering(&path).unwrap();
        assert!(dropped > 0);
        assert_eq!(c.len(), 1);
        assert!(c.get(&key(1)).is_none());
        let reopened = InferenceCache::open(&path).unwrap();
        assert_eq!(reopened.len(), 1);
    }
}
