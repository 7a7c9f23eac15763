//! Canonical sequence files: one JSON document per line, each
//! `{fps, meta, frames: [[[x, y, c] × 25] × T]}`.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::SkeletonSequence;
use crate::error::{Error, Result};

pub fn write_sequences_to_string(seqs: &[SkeletonSequence]) -> Result<String> {
    let mut out = String::new();
    for s in seqs {
        out.push_str(&serde_json::to_string(s)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_sequences(path: &Path, seqs: &[SkeletonSequence]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for s in seqs {
        serde_json::to_writer(&mut f, s)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_sequences_from_str(text: &str) -> Result<Vec<SkeletonSequence>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Data(format!("sequence on line {}: {e}", i + 1)))
        })
        .collect()
}

pub fn read_sequences(path: &Path) -> Result<Vec<SkeletonSequence>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| {
            Error::Data(format!("{}: sequence on line {}: {e}", path.display(), i + 1))
        })?);
    }
    Ok(out)
}
