//! Corpus ingestion: newline-delimited UTF-8 text to a sorted, unique
//! string list ready for tree building.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line} is not valid UTF-8")]
    InvalidUtf8 { line: usize },
}

/// Parses newline-delimited strings: Windows line endings are tolerated,
/// empty lines are dropped, duplicates collapse to one occurrence, and
/// the survivors come back in dictionary order.
pub fn parse_corpus(bytes: &[u8]) -> Result<Vec<String>, IngestError> {
    let mut seen = std::collections::HashSet::new();
    let mut corpus = Vec::new();
    for (i, mut line) in bytes.split(|&b| b == b'\n').enumerate() {
        if let Some(stripped) = line.strip_suffix(b"\r") {
            line = stripped;
        }
        if line.is_empty() {
            continue;
        }
        let s = std::str::from_utf8(line)
            .map_err(|_| IngestError::InvalidUtf8 { line: i + 1 })?;
        if seen.insert(s) {
            corpus.push(s.to_string());
        }
    }
    corpus.sort_unstable();
    Ok(corpus)
}

/// Reads and parses a corpus file.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<String>, IngestError> {
    parse_corpus(&fs::read(path)?)
}
