//! Per-invocation bookkeeping: input digests, written files, manifest.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Instant;

use patmine_core::corpus::{read_corpus, Corpus};
use patmine_core::util::round_sig;
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::args::Common;

/// `<command>.manifest.json`, so stages sharing a directory keep their own.
pub fn manifest_name(command: &str) -> String {
    format!("{command}.manifest.json")
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Internal(_) => 4,
        }
    }
}

impl From<patmine_core::Error> for CliError {
    fn from(e: patmine_core::Error) -> Self {
        use patmine_core::Error as E;
        match e {
            E::NoConvergence { .. } | E::NonFinite { .. } | E::Dimension { .. } => {
                CliError::Internal(e.to_string())
            }
            other => CliError::Data(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Rounds every float in a JSON tree to 12 significant digits.
pub fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64() {
                if let Some(r) = serde_json::Number::from_f64(round_sig(x)) {
                    *n = r;
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

#[derive(Serialize)]
struct InputRecord {
    flag: String,
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct OutputRecord {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Timing {
    stage: String,
    seconds: f64,
}

#[derive(Serialize)]
struct DigestBasis<'a> {
    tool: &'a str,
    version: &'a str,
    command: &'a str,
    seed: u64,
    config: &'a Value,
    inputs: Vec<(&'a str, &'a str)>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'a str,
    version: &'a str,
    command: &'a str,
    seed: u64,
    config: &'a Value,
    inputs: &'a [InputRecord],
    digest: &'a str,
    outputs: &'a [OutputRecord],
    timings: &'a [Timing],
}

pub struct Run {
    command: &'static str,
    seed: u64,
    config: Value,
    out: PathBuf,
    inputs: Vec<InputRecord>,
    outputs: Vec<OutputRecord>,
    written: Vec<PathBuf>,
    created_dirs: Vec<PathBuf>,
    timings: Vec<Timing>,
    digest: Option<String>,
}

pub fn require<'a, T>(value: &'a Option<T>, flag: &str) -> CliResult<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| CliError::Usage(format!("missing required flag --{flag}")))
}

impl Run {
    pub fn new(
        command: &'static str,
        out: &Option<PathBuf>,
        seed: u64,
        config: impl Serialize,
    ) -> CliResult<Run> {
        let out = require(out, "out")?.clone();
        let config = serde_json::to_value(config).map_err(|e| CliError::Internal(e.to_string()))?;
        Ok(Run {
            command,
            seed,
            config,
            out,
            inputs: Vec::new(),
            outputs: Vec::new(),
            written: Vec::new(),
            created_dirs: Vec::new(),
            timings: Vec::new(),
            digest: None,
        })
    }

    /// Reads a required input; a missing file is reported against its flag.
    pub fn input(&mut self, flag: &str, path: &Path) -> CliResult<Vec<u8>> {
        if !path.exists() {
            return Err(CliError::Usage(format!(
                "missing input for --{flag}: {} does not exist",
                path.display()
            )));
        }
        let bytes = fs::read(path)
            .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
        self.record_input(flag, &path.display().to_string(), &bytes);
        Ok(bytes)
    }

    pub fn input_text(&mut self, flag: &str, path: &Path) -> CliResult<String> {
        String::from_utf8(self.input(flag, path)?)
            .map_err(|_| CliError::Data(format!("{} is not valid UTF-8", path.display())))
    }

    /// `--flag` if given, else `OUT/default_name`.
    pub fn input_path(&self, given: &Option<PathBuf>, default_name: &str) -> PathBuf {
        given.clone().unwrap_or_else(|| self.out.join(default_name))
    }

    fn record_input(&mut self, flag: &str, path: &str, bytes: &[u8]) {
        debug_assert!(
            self.digest.is_none(),
            "inputs must be read before outputs are written"
        );
        self.inputs.push(InputRecord {
            flag: flag.to_string(),
            path: path.to_string(),
            sha256: sha256_hex(bytes),
        });
    }

    /// Loads `--corpus` (or stdin for `-`) and applies the onset window.
    pub fn corpus(&mut self, common: &Common) -> CliResult<Corpus> {
        let path = require(&common.corpus, "corpus")?.clone();
        let bytes = if path == "-" {
            let mut buf = Vec::new();
            std::io::stdin()
                .read_to_end(&mut buf)
                .map_err(|e| CliError::Data(format!("cannot read stdin: {e}")))?;
            self.record_input("corpus", "-", &buf);
            buf
        } else {
            self.input("corpus", Path::new(&path))?
        };
        let corpus = read_corpus(&bytes[..], common.window_days)?;
        Ok(self.time("window", || corpus.apply_window(common.seed))?)
    }

    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let value = f();
        self.timings.push(Timing {
            stage: stage.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        value
    }

    /// Digest of tool, version, command, seed, config and input digests.
    pub fn digest(&mut self) -> String {
        if let Some(d) = &self.digest {
            return d.clone();
        }
        let basis = DigestBasis {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            seed: self.seed,
            config: &self.config,
            inputs: self
                .inputs
                .iter()
                .map(|i| (i.flag.as_str(), i.sha256.as_str()))
                .collect(),
        };
        let d = sha256_hex(&serde_json::to_vec(&basis).expect("digest basis serializes"));
        self.digest = Some(d.clone());
        d
    }

    fn ensure_dir(&mut self, dir: &Path) -> CliResult<()> {
        let mut missing = Vec::new();
        let mut cur = Some(dir);
        while let Some(d) = cur {
            if d.as_os_str().is_empty() || d.exists() {
                break;
            }
            missing.push(d.to_path_buf());
            cur = d.parent();
        }
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Internal(format!("cannot create {}: {e}", dir.display())))?;
        missing.reverse();
        self.created_dirs.extend(missing);
        Ok(())
    }

    fn rel(&self, path: &Path) -> String {
        path.strip_prefix(&self.out)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/")
    }

    /// Registers a file already written under the output directory.
    pub fn adopt(&mut self, path: &Path) -> CliResult<()> {
        self.digest();
        let bytes = fs::read(path)
            .map_err(|e| CliError::Internal(format!("cannot read {}: {e}", path.display())))?;
        self.written.push(path.to_path_buf());
        self.outputs.push(OutputRecord {
            path: self.rel(path),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    /// Creates `OUT/rel` as a directory and returns its path.
    pub fn subdir(&mut self, rel: &str) -> CliResult<PathBuf> {
        let dir = self.out.join(rel);
        self.ensure_dir(&dir)?;
        Ok(dir)
    }

    pub fn write_text(&mut self, rel: &str, text: &str) -> CliResult<()> {
        self.digest();
        let path = self.out.join(rel);
        if let Some(parent) = path.parent() {
            self.ensure_dir(parent)?;
        }
        // track before writing so a failed write is still cleaned up
        self.written.push(path.clone());
        fs::write(&path, text)
            .map_err(|e| CliError::Internal(format!("cannot write {}: {e}", path.display())))?;
        self.outputs.push(OutputRecord {
            path: self.rel(&path),
            sha256: sha256_hex(text.as_bytes()),
        });
        Ok(())
    }

    /// Pretty JSON with floats at 12 significant digits; objects carry `run_id`.
    pub fn write_json(&mut self, rel: &str, value: &impl Serialize) -> CliResult<()> {
        let mut v = serde_json::to_value(value).map_err(|e| CliError::Internal(e.to_string()))?;
        round_floats(&mut v);
        if let Value::Object(map) = &mut v {
            let mut with_id = Map::new();
            with_id.insert("run_id".into(), Value::String(self.digest()));
            with_id.extend(std::mem::take(map));
            *map = with_id;
        }
        let text =
            serde_json::to_string_pretty(&v).map_err(|e| CliError::Internal(e.to_string()))? + "\n";
        self.write_text(rel, &text)
    }

    /// Writes the manifest; the run is complete afterwards.
    pub fn finish(mut self) -> CliResult<()> {
        let digest = self.digest();
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            seed: self.seed,
            config: &self.config,
            inputs: &self.inputs,
            digest: &digest,
            outputs: &self.outputs,
            timings: &self.timings,
        };
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::Internal(e.to_string()))?
            + "\n";
        let path = self.out.join(manifest_name(self.command));
        self.ensure_dir(&self.out.clone())?;
        if let Err(e) = fs::write(&path, text) {
            self.written.push(path.clone());
            self.abort();
            return Err(CliError::Internal(format!(
                "cannot write {}: {e}",
                path.display()
            )));
        }
        Ok(())
    }

    /// Removes every file and directory this run created.
    pub fn abort(&mut self) {
        for path in self.written.drain(..).rev() {
            let _ = fs::remove_file(path);
        }
        for dir in self.created_dirs.drain(..).rev() {
            let _ = fs::remove_dir(dir);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_rounded_integers_untouched() {
        let mut v = serde_json::json!({"a": 0.1 + 0.2, "b": [1, 2.0000000000001], "c": "x"});
        round_floats(&mut v);
        assert_eq!(v, serde_json::json!({"a": 0.3, "b": [1, 2.0], "c": "x"}));
    }

    #[test]
    fn abort_removes_outputs_and_new_dirs() {
        let tmp = tempfile::tempdir().unwrap();
        let out = tmp.path().join("a/b");
        let mut run = Run::new("test", &Some(out.clone()), 0, ()).unwrap();
        run.write_text("x/y.txt", "hi").unwrap();
        run.write_json("z.json", &serde_json::json!({"k": 1}))
            .unwrap();
        assert!(out.join("x/y.txt").exists());
        run.abort();
        assert!(!tmp.path().join("a").exists());
    }

    #[test]
    fn digest_ignores_output_location() {
        let mk = |dir: &str| {
            let mut r = Run::new(
                "c",
                &Some(PathBuf::from(dir)),
                3,
                serde_json::json!({"q": 1}),
            )
            .unwrap();
            r.record_input("corpus", "c.jsonl", b"abc");
            r.digest()
        };
        assert_eq!(mk("one"), mk("two"));
    }

    #[test]
    fn missing_input_names_flag() {
        let mut run = Run::new("test", &Some(PathBuf::from("unused")), 0, ()).unwrap();
        let err = run
            .input("patterns", Path::new("/nonexistent/patterns.jsonl"))
            .unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("--patterns"));
    }
}
