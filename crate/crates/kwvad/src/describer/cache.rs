use std::io::Write;
use std::path::{Path, PathBuf};

use super::{DescribeError, DescriptionRecord};

/// Content-addressed directory of description records, one JSON file per
/// key. Writes go to a temporary file first and are renamed into place, so
/// concurrent writers and interrupted runs never leave a torn entry.
#[derive(Clone, Debug)]
pub struct DescriptionCache {
    dir: PathBuf,
}

impl DescriptionCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, DescribeError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| DescribeError::Cache {
            path: dir.clone(),
            reason: e.to_string(),
        })?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn entry(&self, key: u64) -> PathBuf {
        self.dir.join(format!("{key:016x}.json"))
    }

    /// Unreadable or corrupt entries count as misses.
    pub fn get(&self, key: u64) -> Option<DescriptionRecord> {
        let path = self.entry(key);
        let bytes = std::fs::read(&path).ok()?;
        match serde_json::from_slice(&bytes) {
            Ok(r) => Some(r),
            Err(e) => {
                log::warn!("ignoring corrupt cache entry {}: {e}", path.display());
                None
            }
        }
    }

    pub fn put(&self, key: u64, record: &DescriptionRecord) -> Result<(), DescribeError> {
        let path = self.entry(key);
        let fail = |e: &dyn std::fmt::Display| DescribeError::Cache {
            path: path.clone(),
            reason: e.to_string(),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(|e| fail(&e))?;
        serde_json::to_writer(&mut tmp, record).map_err(|e| fail(&e))?;
        tmp.write_all(b"\n").map_err(|e| fail(&e))?;
        tmp.persist(&path).map_err(|e| fail(&e.error))?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        std::fs::read_dir(&self.dir)
            .map(|it| {
                it.filter_map(Result::ok)
                    .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
                    .count()
            })
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn record() -> DescriptionRecord {
        DescriptionRecord {
            frame_id: "f1".into(),
            text: "a man rides a bicycle".into(),
            model_id: "m".into(),
            prompt_hash: 0xdead_beef,
            created_at: chrono::Utc.with_ymd_and_hms(2024, 1, 2, 3, 4, 5).unwrap(),
            metadata: [("finish_reason".to_string(), "stop".to_string())].into(),
        }
    }

    #[test]
    fn roundtrip_and_miss() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DescriptionCache::open(dir.path().join("c")).unwrap();
        assert!(cache.get(7).is_none());
        assert!(cache.is_empty());
        cache.put(7, &record()).unwrap();
        assert_eq!(cache.get(7).unwrap(), record());
        assert_eq!(cache.len(), 1);
        cache.put(7, &record()).unwrap();
        assert_eq!(cache.len(), 1, "no stray temp files");
    }

    #[test]
    fn corrupt_entry_is_a_miss() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DescriptionCache::open(dir.path()).unwrap();
        std::fs::write(cache.dir().join(format!("{:016x}.json", 9u64)), "{trunc").unwrap();
        assert!(cache.get(9).is_none());
    }
}
