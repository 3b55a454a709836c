use std::path::{Path, PathBuf};

use super::Generation;
use crate::storage::{read_optional, write_atomic, StoreError};

const INDEX: &str = "generations.json";

/// Directory of `gen-<number>.sql` files plus a `generations.json` index.
///
/// Every generation is retained; dumps double as the master's backups.
#[derive(Debug, Clone)]
pub struct DumpStore {
    dir: PathBuf,
}

impl DumpStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| StoreError::io(&dir, e))?;
        Ok(DumpStore { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn dump_path(&self, number: u64) -> PathBuf {
        self.dir.join(format!("gen-{number}.sql"))
    }

    /// The index, oldest first. A store that was never written is empty.
    pub fn generations(&self) -> Result<Vec<Generation>, StoreError> {
        let path = self.dir.join(INDEX);
        match read_optional(&path)? {
            None => Ok(Vec::new()),
            Some(bytes) => serde_json::from_slice(&bytes).map_err(|source| StoreError::Json { path, source }),
        }
    }

    /// Persists one generation: the dump file first, then the index entry.
    pub fn write(&self, generation: &Generation, text: &str) -> Result<(), StoreError> {
        let path = self.dump_path(generation.number);
        if path.exists() {
            return Err(StoreError::AlreadyExists(path));
        }
        let mut index = self.generations()?;
        if let Some(last) = index.last() {
            if generation.number != last.number + 1 {
                return Err(StoreError::Corrupt(format!(
                    "generation {} does not follow {}",
                    generation.number, last.number
                )));
            }
        }
        write_atomic(&path, text.as_bytes())?;
        index.push(generation.clone());
        let json = serde_json::to_vec_pretty(&index).expect("generations serialize");
        write_atomic(&self.dir.join(INDEX), &json)
    }

    pub fn read(&self, number: u64) -> Result<String, StoreError> {
        let path = self.dump_path(number);
        let bytes = std::fs::read(&path).map_err(|e| StoreError::io(&path, e))?;
        String::from_utf8(bytes).map_err(|_| StoreError::Corrupt(format!("{} is not UTF-8", path.display())))
    }

    pub fn latest(&self) -> Result<Option<(Generation, String)>, StoreError> {
        match self.generations()?.pop() {
            None => Ok(None),
            Some(g) => {
                let text = self.read(g.number)?;
                Ok(Some((g, text)))
            }
        }
    }
}
