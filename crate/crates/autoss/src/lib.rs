//! Authenticated outsourced string similarity search.
//!
//! A data owner builds a signed Merkle B^ed-tree and a contractive string
//! embedding over a corpus of strings, then hands both to an untrusted
//! server. The server answers edit-distance similarity queries and attaches
//! a verification object (VO) to every result set. A client holding only
//! the owner's public key and the embedding can check that the results are
//! sound (every returned string is a real corpus member within the distance
//! threshold) and complete (no qualifying string was withheld).
//!
//! The crate is organized bottom-up:
//!
//! - [`metrics`]: edit distance, dictionary order, and the range lower
//!   bound that lets whole subtrees be ruled out.
//! - [`hashing`] and [`sign`]: digest framing and root signatures.
//! - [`mbtree`]: the signed search tree and its on-disk format.
//! - [`vs2`]: similarity search with string-level verification objects.
//! - [`embedding`] and [`dbh`]: the contractive embedding and distant
//!   bounding hyper-rectangles that compress dissimilarity proofs.
//! - [`evs2`]: the embedding-assisted verification object.
//! - [`multi`] and [`topk`]: multi-query bundles and ranked queries.
//! - [`attack`], [`bench`], [`ingest`], [`cli`]: the adversarial harness,
//!   measurement tooling, corpus loading, and the command-line front end.

pub mod attack;
pub mod bench;
pub mod client;
pub mod dbh;
pub mod embedding;
pub mod evs2;
pub mod hashing;
pub mod ingest;
pub mod mbtree;
pub mod metrics;
pub mod multi;
pub mod report;
pub mod sign;
#[cfg(test)]
pub(crate) mod testfix;
pub mod topk;
pub mod vo;
pub mod vs2;
pub(crate) mod wire;
pub(crate) mod workload;
