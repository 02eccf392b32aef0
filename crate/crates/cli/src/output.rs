//! Output directory handling: a lock against concurrent writers, staged
//! artifacts that only appear once a command succeeds, a `.failed` marker
//! otherwise, and a reproducibility record beside the artifacts.

use std::fs::{self, OpenOptions};
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use urglm_core::config::PipelineConfig;
use urglm_core::kv::KvFile;

pub const LOCK_FILE: &str = ".urglm.lock";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Holds the lock until dropped.
pub struct OutDir {
    dir: PathBuf,
    command: String,
    staged: Vec<(String, Vec<u8>)>,
    inputs: Vec<(PathBuf, String)>,
}

impl OutDir {
    /// Creates `dir` if needed and takes its lock. Fails when another run
    /// holds it.
    pub fn open(dir: &Path, command: &str) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        let lock = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => writeln!(f, "{}", std::process::id())?,
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                return Err(io::Error::new(
                    e.kind(),
                    format!(
                        "output directory {} is locked by another run ({})",
                        dir.display(),
                        lock.display()
                    ),
                ))
            }
            Err(e) => return Err(e),
        }
        Ok(OutDir {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            staged: Vec::new(),
            inputs: Vec::new(),
        })
    }

    /// Reads an input file and remembers its checksum for the record.
    pub fn read_input(&mut self, path: &Path) -> io::Result<Vec<u8>> {
        let bytes = fs::read(path).map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
        self.inputs.push((path.to_path_buf(), sha256_hex(&bytes)));
        Ok(bytes)
    }

    pub fn read_input_text(&mut self, path: &Path) -> io::Result<String> {
        let bytes = self.read_input(path)?;
        String::from_utf8(bytes)
            .map_err(|_| io::Error::new(io::ErrorKind::InvalidData, format!("{} is not UTF-8", path.display())))
    }

    pub fn stage(&mut self, name: &str, bytes: impl Into<Vec<u8>>) {
        self.staged.push((name.to_string(), bytes.into()));
    }

    fn marker(&self) -> PathBuf {
        self.dir.join(format!("{}.failed", self.command))
    }

    /// Writes every staged artifact (via a temporary name and a rename) and
    /// the record `<command>.record`.
    pub fn commit(mut self, cfg: &PipelineConfig, args: &[String]) -> io::Result<()> {
        let mut record = KvFile::default();
        record.set("command", self.command.clone());
        record.set("args", args.join(" "));
        record.set("seed", cfg.seed.to_string());
        for (path, sum) in &self.inputs {
            record.set(&format!("input.{}", path.display()), sum.clone());
        }
        for (name, bytes) in &self.staged {
            record.set(&format!("output.{name}"), sha256_hex(bytes));
        }
        let snapshot = cfg.to_kv();
        for key in snapshot.keys() {
            record.set(
                &format!("config.{key}"),
                snapshot.get(key).unwrap_or_default().to_string(),
            );
        }
        let name = format!("{}.record", self.command);
        self.staged.push((name, record.render().into_bytes()));

        let result = self.write_all();
        match &result {
            Ok(()) => {
                let _ = fs::remove_file(self.marker());
            }
            Err(e) => self.fail(&e.to_string()),
        }
        result
    }

    fn write_all(&self) -> io::Result<()> {
        for (name, bytes) in &self.staged {
            let tmp = self.dir.join(format!(".{name}.tmp"));
            fs::write(&tmp, bytes)?;
            fs::rename(&tmp, self.dir.join(name))?;
        }
        Ok(())
    }

    /// Leaves `<command>.failed` holding the diagnostic.
    pub fn fail(&self, diagnostic: &str) {
        let _ = fs::write(self.marker(), format!("{diagnostic}\n"));
    }
}

impl Drop for OutDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(self.dir.join(LOCK_FILE));
    }
}
