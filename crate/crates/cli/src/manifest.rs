//! Run manifests: config, tool versions, and SHA-256 of every input read
//! and every product written.

use std::collections::BTreeSet;
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = std::fs::File::open(path).with_context(|| format!("hashing {}", path.display()))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// Files touched by a command.
#[derive(Debug, Default)]
pub struct Tracker {
    pub inputs: BTreeSet<PathBuf>,
    pub outputs: BTreeSet<PathBuf>,
}

impl Tracker {
    pub fn input(&mut self, p: impl Into<PathBuf>) {
        self.inputs.insert(p.into());
    }

    pub fn output(&mut self, p: impl Into<PathBuf>) {
        self.outputs.insert(p.into());
    }

    /// Write `<out>/<command>.manifest.json`. Output paths are stored
    /// relative to `out`.
    pub fn write(&self, out: &Path, command: &str, config: &[(&str, String)]) -> Result<PathBuf> {
        let mut cfg = Map::new();
        for (k, v) in config {
            cfg.insert((*k).to_string(), Value::String(v.clone()));
        }
        let entries = |set: &BTreeSet<PathBuf>, rel: bool| -> Result<Vec<Value>> {
            set.iter()
                .map(|p| {
                    let shown = if rel { p.strip_prefix(out).unwrap_or(p) } else { p };
                    Ok(json!({ "path": shown.display().to_string(), "sha256": sha256_file(p)? }))
                })
                .collect()
        };
        // Intermediate products read back by later stages are outputs only.
        let inputs: BTreeSet<PathBuf> =
            self.inputs.iter().filter(|p| !self.outputs.contains(*p) && !p.starts_with(out)).cloned().collect();
        let doc = json!({
            "command": command,
            "versions": { "opd-cli": env!("CARGO_PKG_VERSION"), "opd-core": opd_core::VERSION },
            "config": cfg,
            "inputs": entries(&inputs, false)?,
            "outputs": entries(&self.outputs, true)?,
        });
        let path = out.join(format!("{command}.manifest.json"));
        std::fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n")?;
        log::info!("wrote {} ({} inputs, {} outputs)", path.display(), self.inputs.len(), self.outputs.len());
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("abc.txt");
        std::fs::write(&p, "abc").unwrap();
        assert_eq!(sha256_file(&p).unwrap(), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
