//! Contractive embedding of strings into d-dimensional Euclidean space.
//!
//! Each coordinate of a string's image is its minimum edit distance to a
//! small reference set sampled from the corpus. With the scaled Euclidean
//! distance below, the embedded distance never exceeds the edit distance
//! of the underlying strings, so a lower bound in the embedded space is a
//! lower bound on edit distance. That is the only property downstream
//! code relies on; embedding quality affects performance, not
//! correctness.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng as _;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::metrics::edit_distance;
use crate::wire::{self, WireError};

/// Magic bytes opening an embedding file.
pub const EMBEDDING_MAGIC: [u8; 4] = *b"EMB1";

/// Upper bound on the dimension accepted from a file.
pub const MAX_DIM: u32 = 4096;

/// Reference sets stop growing at this size; larger sets would slow every
/// embed call for marginal distortion gains.
const SET_SIZE_CAP: usize = 16;

/// A point in the embedded space.
pub type EmbeddedPoint = Vec<f64>;

/// Anything that can map strings to points of a fixed dimension.
///
/// The production implementation is [`EmbeddingFunction`]; tests substitute
/// table-backed doubles to pin exact geometric scenarios.
pub trait Embedder {
    fn dim(&self) -> usize;
    fn embed(&self, s: &str) -> EmbeddedPoint;
}

/// Errors from building an embedding function.
#[derive(Debug, Error)]
pub enum BuildError {
    #[error("embedding dimension must be at least 1")]
    ZeroDim,
    #[error("cannot build an embedding over an empty corpus")]
    EmptyCorpus,
}

/// Errors from reading an embedding file.
#[derive(Debug, Error)]
pub enum LoadError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not an embedding file (bad magic)")]
    BadMagic,
    #[error("file truncated while reading {0}")]
    Truncated(&'static str),
    #[error("{0} is not valid UTF-8")]
    InvalidUtf8(&'static str),
    #[error("embedding dimension in file is 0")]
    ZeroDim,
    #[error("embedding dimension {0} exceeds the maximum of {MAX_DIM}")]
    DimTooLarge(u32),
    #[error("reference set {0} is empty")]
    EmptySet(usize),
    #[error("trailing bytes after the reference sets")]
    TrailingBytes,
}

impl From<WireError> for LoadError {
    fn from(e: WireError) -> Self {
        match e {
            WireError::Io(e) => LoadError::Io(e),
            WireError::Truncated(what) => LoadError::Truncated(what),
            WireError::InvalidUtf8(what) => LoadError::InvalidUtf8(what),
        }
    }
}

/// A deterministic string-to-point map: one reference set per dimension,
/// sampled from the owner corpus with a seeded generator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmbeddingFunction {
    dim: usize,
    seed: u64,
    reference_sets: Vec<Vec<String>>,
}

impl EmbeddingFunction {
    /// Samples reference sets from the corpus. Set `i` (1-based) holds
    /// `min(2^i, 16, n)` distinct corpus strings, drawn uniformly without
    /// replacement; the draw is fully determined by `seed`.
    pub fn build(corpus: &[String], dim: usize, seed: u64) -> Result<Self, BuildError> {
        if dim == 0 {
            return Err(BuildError::ZeroDim);
        }
        if corpus.is_empty() {
            return Err(BuildError::EmptyCorpus);
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut reference_sets = Vec::with_capacity(dim);
        for i in 1..=dim {
            let unbounded = if i >= 4 { SET_SIZE_CAP } else { 1usize << i };
            let size = unbounded.min(SET_SIZE_CAP).min(corpus.len());
            let mut picks = rand::seq::index::sample(&mut rng, corpus.len(), size).into_vec();
            picks.sort_unstable();
            reference_sets.push(picks.into_iter().map(|k| corpus[k].clone()).collect());
        }
        Ok(EmbeddingFunction {
            dim,
            seed,
            reference_sets,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn reference_sets(&self) -> &[Vec<String>] {
        &self.reference_sets
    }

    /// Writes the embedding file: magic, dimension, seed, then each
    /// reference set as a count followed by length-prefixed strings.
    pub fn save(&self, mut w: impl Write) -> io::Result<()> {
        w.write_all(&EMBEDDING_MAGIC)?;
        wire::write_u32(&mut w, self.dim as u32)?;
        wire::write_u64(&mut w, self.seed)?;
        for set in &self.reference_sets {
            wire::write_u32(&mut w, set.len() as u32)?;
            for s in set {
                wire::write_string(&mut w, s)?;
            }
        }
        w.flush()
    }

    pub fn save_to_path(&self, path: impl AsRef<Path>) -> io::Result<()> {
        self.save(BufWriter::new(File::create(path)?))
    }

    /// Reads and validates an embedding file. Every declared length is
    /// bounded by the actual bytes available, the dimension must be in
    /// range, no reference set may be empty, and nothing may follow the
    /// last set.
    pub fn load(mut r: impl Read) -> Result<Self, LoadError> {
        let mut magic = [0u8; 4];
        wire::read_exact(&mut r, &mut magic, "magic")?;
        if magic != EMBEDDING_MAGIC {
            return Err(LoadError::BadMagic);
        }
        let dim = wire::read_u32(&mut r, "dimension")?;
        if dim == 0 {
            return Err(LoadError::ZeroDim);
        }
        if dim > MAX_DIM {
            return Err(LoadError::DimTooLarge(dim));
        }
        let seed = wire::read_u64(&mut r, "seed")?;
        let mut reference_sets = Vec::new();
        for i in 0..dim {
            let count = wire::read_u32(&mut r, "reference set size")?;
            if count == 0 {
                return Err(LoadError::EmptySet(i as usize));
            }
            let mut set = Vec::new();
            for _ in 0..count {
                set.push(wire::read_string(&mut r, "reference string")?);
            }
            reference_sets.push(set);
        }
        if !wire::at_eof(&mut r)? {
            return Err(LoadError::TrailingBytes);
        }
        Ok(EmbeddingFunction {
            dim: dim as usize,
            seed,
            reference_sets,
        })
    }

    pub fn load_from_path(path: impl AsRef<Path>) -> Result<Self, LoadError> {
        EmbeddingFunction::load(BufReader::new(File::open(path)?))
    }
}

impl Embedder for EmbeddingFunction {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, s: &str) -> EmbeddedPoint {
        self.reference_sets
            .iter()
            .map(|set| {
                set.iter()
                    .map(|r| edit_distance(s, r))
                    .min()
                    .expect("reference sets are never empty")
                    as f64
            })
            .collect()
    }
}

/// Scaled Euclidean distance: sqrt(Σ (a_i − b_i)² / d).
///
/// The 1/√d scaling makes the distance contractive: each coordinate
/// difference is at most the edit distance of the underlying strings (a
/// min over a common reference set moves by at most the distance between
/// the two strings), so the scaled L2 norm cannot exceed it either.
/// Dividing *inside* the square root keeps integer-valued inputs exact in
/// IEEE arithmetic, which is why the contractive comparison needs no
/// tolerance.
pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "points must have equal dimension");
    assert!(!a.is_empty(), "points must have at least one coordinate");
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let diff = x - y;
            diff * diff
        })
        .sum();
    (sum / a.len() as f64).sqrt()
}
