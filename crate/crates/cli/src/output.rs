use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;

/// Output directory guard: nothing is written over an existing file unless
/// `overwrite` is set.
#[derive(Debug, Clone)]
pub struct Outputs {
    root: PathBuf,
    overwrite: bool,
}

impl Outputs {
    pub fn new(root: impl Into<PathBuf>, overwrite: bool) -> Self {
        Self { root: root.into(), overwrite }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.root.join(rel)
    }

    /// Fails on the first target that already exists.
    pub fn claim<I, P>(&self, targets: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = P>,
        P: AsRef<Path>,
    {
        if self.overwrite {
            return Ok(());
        }
        for t in targets {
            let p = self.path(t);
            if p.exists() {
                return Err(CliError::Exists(p));
            }
        }
        Ok(())
    }

    pub fn write_bytes(&self, rel: impl AsRef<Path>, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let p = self.path(rel);
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        fs::write(&p, bytes).map_err(|e| CliError::io(&p, e))?;
        Ok(p)
    }

    pub fn write_json<T: Serialize>(&self, rel: impl AsRef<Path>, value: &T) -> Result<PathBuf, CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).expect("report serializes");
        bytes.push(b'\n');
        self.write_bytes(rel, &bytes)
    }

    pub fn write_csv<T: Serialize>(&self, rel: impl AsRef<Path>, rows: &[T]) -> Result<PathBuf, CliError> {
        self.write_bytes(rel, &csv_bytes(rows))
    }
}

pub fn csv_bytes<T: Serialize>(rows: &[T]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("row serializes");
    }
    w.into_inner().expect("in-memory writer")
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path, hint: &str) -> Result<T, CliError> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::Missing { path: path.to_path_buf(), hint: hint.into() },
        _ => CliError::io(path, e),
    })?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Columns and keys holding wall-clock measurements.
pub fn is_wall_time_field(name: &str) -> bool {
    name.starts_with("t_") || name == "speedup"
}

/// Contents of an output file with wall-clock fields removed, for comparing
/// runs. `None` for files that hold nothing but wall times.
pub fn strip_wall_times(path: &Path, bytes: &[u8]) -> Option<Vec<u8>> {
    if path.file_name().is_some_and(|n| n == "timings.json") {
        return None;
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => {
            let Ok(mut v) = serde_json::from_slice::<serde_json::Value>(bytes) else {
                return Some(bytes.to_vec());
            };
            strip_value(&mut v);
            Some(serde_json::to_vec(&v).expect("value serializes"))
        }
        Some("csv") => {
            let mut r = csv::Reader::from_reader(bytes);
            let Ok(headers) = r.headers().cloned() else {
                return Some(bytes.to_vec());
            };
            let keep: Vec<usize> = (0..headers.len()).filter(|&i| !is_wall_time_field(&headers[i])).collect();
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(keep.iter().map(|&i| &headers[i])).expect("in-memory writer");
            for rec in r.records() {
                let Ok(rec) = rec else {
                    return Some(bytes.to_vec());
                };
                w.write_record(keep.iter().map(|&i| &rec[i])).expect("in-memory writer");
            }
            Some(w.into_inner().expect("in-memory writer"))
        }
        _ => Some(bytes.to_vec()),
    }
}

fn strip_value(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Object(m) => {
            m.retain(|k, _| !is_wall_time_field(k));
            m.values_mut().for_each(strip_value);
        }
        serde_json::Value::Array(a) => a.iter_mut().for_each(strip_value),
        _ => {}
    }
}
