//! Content-addressed stage directories: `<cache_root>/<stage>-<hash>/` with a
//! `manifest.toml` describing what produced the files inside.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

const MANIFEST: &str = "manifest.toml";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    stage: String,
    key: String,
    files: Vec<String>,
    config: toml::Value,
}

#[derive(Debug, Clone)]
pub struct StageCache {
    pub stage: &'static str,
    pub key: String,
    pub dir: PathBuf,
    source: toml::Value,
}

impl StageCache {
    /// `source` is the config subsection the stage output depends on.
    pub fn new<S: Serialize>(root: &Path, stage: &'static str, source: &S) -> Result<Self> {
        let source = toml::Value::try_from(source).context("cache key does not serialize")?;
        let text = toml::to_string(&source).context("cache key does not serialize")?;
        let digest = Sha256::digest(format!("{stage}\n{text}").as_bytes());
        let key: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
        Ok(Self {
            stage,
            dir: root.join(format!("{stage}-{key}")),
            key,
            source,
        })
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    /// True when the manifest matches this key and lists exactly the
    /// expected files, all of which exist.
    pub fn is_complete(&self, files: &[&str]) -> bool {
        let Ok(text) = std::fs::read_to_string(self.dir.join(MANIFEST)) else {
            return false;
        };
        let Ok(m) = toml::from_str::<Manifest>(&text) else {
            return false;
        };
        m.key == self.key
            && m.stage == self.stage
            && m.files == files
            && files.iter().all(|f| self.dir.join(f).is_file())
    }

    pub fn prepare(&self) -> Result<()> {
        // a stale manifest must not survive a partial rewrite
        let _ = std::fs::remove_file(self.dir.join(MANIFEST));
        std::fs::create_dir_all(&self.dir)
            .with_context(|| format!("cannot create {}", self.dir.display()))
    }

    pub fn commit(&self, files: &[&str]) -> Result<()> {
        let m = Manifest {
            stage: self.stage.to_string(),
            key: self.key.clone(),
            files: files.iter().map(|s| s.to_string()).collect(),
            config: self.source.clone(),
        };
        let path = self.dir.join(MANIFEST);
        std::fs::write(&path, toml::to_string(&m)?)
            .with_context(|| format!("cannot write {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Key {
        a: f64,
    }

    #[test]
    fn keys_follow_content() {
        let root = Path::new("/tmp");
        let k1 = StageCache::new(root, "fom", &Key { a: 1.0 }).unwrap();
        let k2 = StageCache::new(root, "fom", &Key { a: 1.0 }).unwrap();
        let k3 = StageCache::new(root, "fom", &Key { a: 2.0 }).unwrap();
        let k4 = StageCache::new(root, "pod", &Key { a: 1.0 }).unwrap();
        assert_eq!(k1.key, k2.key);
        assert_ne!(k1.key, k3.key);
        assert_ne!(k1.key, k4.key);
    }

    #[test]
    fn manifest_gates_reuse() {
        let dir = tempfile::tempdir().unwrap();
        let c = StageCache::new(dir.path(), "fom", &Key { a: 1.0 }).unwrap();
        assert!(!c.is_complete(&["x.bin"]));
        c.prepare().unwrap();
        std::fs::write(c.path("x.bin"), b"1").unwrap();
        assert!(!c.is_complete(&["x.bin"]));
        c.commit(&["x.bin"]).unwrap();
        assert!(c.is_complete(&["x.bin"]));
        assert!(!c.is_complete(&["x.bin", "y.bin"]));
        std::fs::remove_file(c.path("x.bin")).unwrap();
        assert!(!c.is_complete(&["x.bin"]));
    }
}
