//! JSONL shard reading and writing.
//!
//! A shard is a newline-delimited file of serialized [`Document`]s. Readers
//! report per-record errors with 1-based line numbers so a single bad line
//! does not poison a multi-gigabyte shard.

use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::corpus::Document;

#[derive(Debug, Error)]
pub enum ShardError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Record {
        path: String,
        line: usize,
        message: String,
    },
}

impl ShardError {
    fn record(path: &str, line: usize, message: impl Into<String>) -> Self {
        ShardError::Record {
            path: path.to_string(),
            line,
            message: message.into(),
        }
    }
}

/// Streaming reader over one shard. Yields documents in file order; malformed
/// lines, empty ids, and duplicate ids come back as `Err` items with their
/// line number.
pub struct ShardReader<R: Read> {
    path: String,
    lines: io::Lines<BufReader<R>>,
    line_no: usize,
    seen_ids: HashSet<String>,
}

impl ShardReader<File> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, ShardError> {
        let path_str = path.as_ref().display().to_string();
        let file = File::open(&path).map_err(|source| ShardError::Io {
            path: path_str.clone(),
            source,
        })?;
        Ok(ShardReader::new(path_str, file))
    }
}

impl<R: Read> ShardReader<R> {
    pub fn new(path: impl Into<String>, reader: R) -> Self {
        ShardReader {
            path: path.into(),
            lines: BufReader::new(reader).lines(),
            line_no: 0,
            seen_ids: HashSet::new(),
        }
    }
}

impl<R: Read> Iterator for ShardReader<R> {
    type Item = Result<Document, ShardError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(source) => {
                    return Some(Err(ShardError::Io {
                        path: self.path.clone(),
                        source,
                    }))
                }
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            let doc: Document = match serde_json::from_str(&line) {
                Ok(doc) => doc,
                Err(e) => return Some(Err(ShardError::record(&self.path, self.line_no, e.to_string()))),
            };
            if doc.id.is_empty() {
                return Some(Err(ShardError::record(&self.path, self.line_no, "empty id")));
            }
            if !self.seen_ids.insert(doc.id.clone()) {
                return Some(Err(ShardError::record(
                    &self.path,
                    self.line_no,
                    format!("duplicate id `{}`", doc.id),
                )));
            }
            return Some(Ok(doc));
        }
    }
}

/// Read a whole shard, splitting good records from bad ones.
pub fn read_shard_collect(path: impl AsRef<Path>) -> Result<(Vec<Document>, Vec<ShardError>), ShardError> {
    let reader = ShardReader::open(path)?;
    let mut docs = Vec::new();
    let mut errors = Vec::new();
    for item in reader {
        match item {
            Ok(doc) => docs.push(doc),
            Err(e) => errors.push(e),
        }
    }
    Ok((docs, errors))
}

/// Read a whole shard, stopping at the first bad record.
pub fn read_shard_strict(path: impl AsRef<Path>) -> Result<Vec<Document>, ShardError> {
    ShardReader::open(path)?.collect()
}

/// Write documents as one JSON object per line. Output is byte-reproducible
/// for equal inputs.
pub fn write_shard<'a, I>(path: impl AsRef<Path>, docs: I) -> Result<(), ShardError>
where
    I: IntoIterator<Item = &'a Document>,
{
    let path_str = path.as_ref().display().to_string();
    let io_err = |source| ShardError::Io {
        path: path_str.clone(),
        source,
    };
    let file = File::create(&path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    for doc in docs {
        let line = serde_json::to_string(doc).expect("document serializes");
        out.write_all(line.as_bytes()).map_err(io_err)?;
        out.write_all(b"\n").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}
