//! Run-directory plumbing: every invocation gets its own directory named by
//! timestamp and seed, holding all artifacts, a human-readable run log, and
//! a manifest with the post-defaults config and content digests of every
//! file read or written.

use std::collections::BTreeMap;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::config::{CliError, CliResult, RunConfig};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

pub struct RunContext {
    pub command: &'static str,
    pub dir: PathBuf,
    pub seed: u64,
    created_utc: String,
    log: String,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

impl RunContext {
    /// Claims a fresh directory `<output dir>/<timestamp>-<command>-seed<seed>`
    /// (suffixing a counter on collision, so same-second runs never clash).
    pub fn create(command: &'static str, output_dir: &Path, seed: u64) -> CliResult<Self> {
        std::fs::create_dir_all(output_dir).map_err(|e| {
            CliError::Runtime(anyhow::anyhow!(
                "cannot create output directory {}: {e}",
                output_dir.display()
            ))
        })?;
        let now = chrono::Utc::now();
        let stamp = now.format("%Y%m%dT%H%M%S%.3fZ").to_string();
        let base = format!("{stamp}-{command}-seed{seed}");
        let mut candidate = output_dir.join(&base);
        let mut counter = 1;
        loop {
            match std::fs::create_dir(&candidate) {
                Ok(()) => break,
                Err(e) if e.kind() == ErrorKind::AlreadyExists => {
                    counter += 1;
                    candidate = output_dir.join(format!("{base}-{counter}"));
                }
                Err(e) => {
                    return Err(CliError::Runtime(anyhow::anyhow!(
                        "cannot create run directory {}: {e}",
                        candidate.display()
                    )))
                }
            }
        }
        Ok(RunContext {
            command,
            dir: candidate,
            seed,
            created_utc: now.to_rfc3339(),
            log: String::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        })
    }

    pub fn log(&mut self, line: impl AsRef<str>) {
        self.log.push_str(line.as_ref());
        self.log.push('\n');
    }

    /// Reads an input file as text, recording its digest in the manifest.
    /// A file that does not exist is a configuration error (exit 2).
    pub fn read_input(&mut self, path: &Path) -> CliResult<String> {
        match std::fs::read_to_string(path) {
            Ok(text) => {
                self.inputs
                    .insert(path.display().to_string(), sha256_hex(text.as_bytes()));
                Ok(text)
            }
            Err(e) if e.kind() == ErrorKind::NotFound => Err(CliError::Config(format!(
                "missing file: {}",
                path.display()
            ))),
            Err(e) => Err(CliError::Runtime(anyhow::anyhow!(
                "cannot read {}: {e}",
                path.display()
            ))),
        }
    }

    /// Writes an artifact under the run directory, recording its digest.
    pub fn write_output(&mut self, rel: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| {
                CliError::Runtime(anyhow::anyhow!(
                    "cannot create {}: {e}",
                    parent.display()
                ))
            })?;
        }
        std::fs::write(&path, bytes).map_err(|e| {
            CliError::Runtime(anyhow::anyhow!("cannot write {}: {e}", path.display()))
        })?;
        self.outputs.insert(rel.to_string(), sha256_hex(bytes));
        Ok(())
    }

    /// Writes the manifest and the run log. Call once, last.
    pub fn finish(
        mut self,
        config: &RunConfig,
        overrides: &[String],
        status: Result<(), &CliError>,
    ) -> CliResult<PathBuf> {
        let (status_str, error) = match status {
            Ok(()) => ("ok", None),
            Err(e) => ("failed", Some(format!("{e}"))),
        };
        if let Some(msg) = &error {
            self.log.push_str(&format!("error: {msg}\n"));
        }
        let log_digest = sha256_hex(self.log.as_bytes());
        self.outputs.insert("run.log".into(), log_digest);
        let manifest = serde_json::json!({
            "command": self.command,
            "created_utc": self.created_utc,
            "run_dir": self.dir.display().to_string(),
            "seed": self.seed,
            "status": status_str,
            "error": error,
            "overrides": overrides,
            "config": config,
            "inputs": self.inputs,
            "outputs": self.outputs,
        });
        let manifest_text =
            serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        std::fs::write(self.dir.join("run.log"), self.log.as_bytes()).map_err(|e| {
            CliError::Runtime(anyhow::anyhow!("cannot write run.log: {e}"))
        })?;
        std::fs::write(self.dir.join("manifest.json"), manifest_text.as_bytes()).map_err(
            |e| CliError::Runtime(anyhow::anyhow!("cannot write manifest.json: {e}")),
        )?;
        Ok(self.dir)
    }
}

/// Newest run directory under `base` containing `marker` (relative path),
/// by lexicographic name — timestamps sort chronologically.
pub fn newest_run_with(base: &Path, marker: &str) -> Option<PathBuf> {
    let entries = std::fs::read_dir(base).ok()?;
    let mut candidates: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir() && p.join(marker).is_file())
        .collect();
    candidates.sort();
    candidates.pop()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_matches_known_vector() {
        // SHA-256 of the empty string and of "abc" are fixed constants.
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn run_dirs_never_collide() {
        let tmp = tempfile::tempdir().unwrap();
        let a = RunContext::create("train", tmp.path(), 7).unwrap();
        let b = RunContext::create("train", tmp.path(), 7).unwrap();
        assert_ne!(a.dir, b.dir);
        assert!(a.dir.is_dir() && b.dir.is_dir());
    }

    #[test]
    fn finish_writes_log_and_manifest_with_digests() {
        let tmp = tempfile::tempdir().unwrap();
        let mut ctx = RunContext::create("generate", tmp.path(), 3).unwrap();
        ctx.log("hello");
        ctx.write_output("data/x.csv", b"a,b\n1,2\n").unwrap();
        let config = RunConfig::default();
        let dir = ctx
            .finish(&config, &["train.seed=3".into()], Ok(()))
            .unwrap();
        let log = std::fs::read_to_string(dir.join("run.log")).unwrap();
        assert!(log.contains("hello"));
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap())
                .unwrap();
        assert_eq!(manifest["status"], "ok");
        assert_eq!(manifest["seed"], 3);
        assert_eq!(manifest["overrides"][0], "train.seed=3");
        assert_eq!(
            manifest["outputs"]["data/x.csv"],
            serde_json::Value::String(sha256_hex(b"a,b\n1,2\n"))
        );
        assert!(manifest["config"]["model"]["embed_dim"].is_number());
    }

    #[test]
    fn newest_run_picks_the_lexicographically_last() {
        let tmp = tempfile::tempdir().unwrap();
        for name in ["20240101T000000.000Z-generate-seed7", "20250101T000000.000Z-generate-seed7"] {
            let d = tmp.path().join(name).join("data");
            std::fs::create_dir_all(&d).unwrap();
            std::fs::write(d.join("panel.csv"), b"x").unwrap();
        }
        let newest = newest_run_with(tmp.path(), "data/panel.csv").unwrap();
        assert!(newest.to_string_lossy().contains("2025"));
        assert!(newest_run_with(tmp.path(), "checkpoint.json").is_none());
    }
}
