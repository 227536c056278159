//! JSON-lines helpers shared by every interchange file.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Json {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

pub fn read_from<T: DeserializeOwned, R: BufRead>(reader: R, label: &str) -> Result<Vec<T>, JsonlError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| JsonlError::Io {
            path: label.to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| JsonlError::Json {
            path: label.to_string(),
            line: i + 1,
            source,
        })?);
    }
    Ok(out)
}

pub fn read<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>, JsonlError> {
    let path = path.as_ref();
    let label = path.display().to_string();
    let file = File::open(path).map_err(|source| JsonlError::Io {
        path: label.clone(),
        source,
    })?;
    read_from(BufReader::new(file), &label)
}

pub fn write_to<T: Serialize, W: Write>(items: &[T], mut out: W) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn write<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<(), JsonlError> {
    let path = path.as_ref();
    let wrap = |source| JsonlError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::create(path).map_err(wrap)?;
    write_to(items, BufWriter::new(file)).map_err(wrap)
}

pub fn to_string<T: Serialize>(items: &[T]) -> String {
    let mut buf = Vec::new();
    write_to(items, &mut buf).expect("in-memory write");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}
