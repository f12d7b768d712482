//! Typed JSONL I/O with collect-and-report error handling.
//!
//! Malformed lines go to stderr and are counted; the caller turns a nonzero
//! count into a nonzero exit at the end of the run. `fail_fast` makes the
//! first bad line fatal instead.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use corpusmix_core::shard;
use corpusmix_core::Document;
use serde::de::DeserializeOwned;
use serde::Serialize;

pub fn read_records<T: DeserializeOwned>(path: &Path, fail_fast: bool) -> Result<(Vec<T>, usize)> {
    let file = File::open(path).with_context(|| format!("open {}", path.display()))?;
    let mut records = Vec::new();
    let mut bad_lines = 0;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("read {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(record) => records.push(record),
            Err(e) => {
                if fail_fast {
                    bail!("{}: line {}: {e}", path.display(), i + 1);
                }
                eprintln!("{}: line {}: {e}", path.display(), i + 1);
                bad_lines += 1;
            }
        }
    }
    Ok((records, bad_lines))
}

pub fn write_records<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("create {}", path.display()))?;
    let mut out = BufWriter::new(file);
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Document shards go through the core reader, which also rejects duplicate
/// ids within a shard.
pub fn read_documents(path: &Path, fail_fast: bool) -> Result<(Vec<Document>, usize)> {
    if fail_fast {
        return Ok((shard::read_shard_strict(path)?, 0));
    }
    let (docs, errors) = shard::read_shard_collect(path)?;
    for e in &errors {
        eprintln!("{e}");
    }
    Ok((docs, errors.len()))
}

/// Concatenation of several shards, in argument order.
pub fn read_document_shards(paths: &[impl AsRef<Path>], fail_fast: bool) -> Result<(Vec<Document>, usize)> {
    let mut docs = Vec::new();
    let mut bad_lines = 0;
    for path in paths {
        let (mut part, bad) = read_documents(path.as_ref(), fail_fast)?;
        docs.append(&mut part);
        bad_lines += bad;
    }
    Ok((docs, bad_lines))
}
