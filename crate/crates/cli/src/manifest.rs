//! Run manifests and atomic file output.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use hikm_core::dataset::sha256_hex;
use serde::{Deserialize, Serialize};

use crate::Failure;

/// Everything needed to replay a command: its argv, resolved parameters and
/// the checksums of what it read and wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name, exactly as given.
    pub args: Vec<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    /// path -> sha256
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub wall_time_secs: f64,
    pub version: String,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Failure::arg(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), Failure> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }
}

/// Where the manifest of a run writing `out` goes: `<out>.manifest.json`, or
/// `manifest.json` inside `out` when it is a directory.
pub fn manifest_path(out: &Path, out_is_dir: bool) -> PathBuf {
    if out_is_dir {
        return out.join("manifest.json");
    }
    let mut name = out.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Failure::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Failure::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Failure::io(path, e))?;
    tmp.persist(path).map_err(|e| Failure::io(path, e.error))?;
    Ok(())
}

pub fn file_sha256(path: &Path) -> Result<String, Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Checksums of the given files, keyed by display path.
pub fn checksums<P: AsRef<Path>>(paths: &[P]) -> Result<BTreeMap<String, String>, Failure> {
    paths
        .iter()
        .map(|p| Ok((p.as_ref().display().to_string(), file_sha256(p.as_ref())?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_names() {
        assert_eq!(
            manifest_path(Path::new("out/t.toml"), false),
            PathBuf::from("out/t.toml.manifest.json")
        );
        assert_eq!(
            manifest_path(Path::new("runs"), true),
            PathBuf::from("runs/manifest.json")
        );
    }

    #[test]
    fn atomic_write_replaces_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        write_atomic(&p, b"first version").unwrap();
        write_atomic(&p, b"v2").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"v2");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        let m = RunManifest {
            command: "sample".into(),
            args: vec!["sample".into(), "--target".into(), "10".into()],
            config: serde_json::json!({"target": 10}),
            seed: Some(3),
            threads: None,
            inputs: BTreeMap::from([("d.hkm".to_string(), "ab".to_string())]),
            outputs: BTreeMap::new(),
            wall_time_secs: 0.5,
            version: "0.1.0".into(),
        };
        m.save(&p).unwrap();
        assert_eq!(RunManifest::load(&p).unwrap(), m);
    }
}
