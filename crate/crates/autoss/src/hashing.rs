//! Digest framing shared by the tree builder and the client-side verifier.
//!
//! Every hash input is domain-tagged and strings are length-framed, so a
//! leaf string can never collide with a concatenation of child digests or
//! with a node triple. Owner, server, and client all apply exactly this
//! framing; a single byte of disagreement anywhere surfaces as a root
//! signature mismatch.

use sha2::{Digest as _, Sha256};

/// 32-byte SHA-256 output.
pub type Digest32 = [u8; 32];

/// Domain tag for hashing one corpus string.
pub const TAG_STRING: u8 = 0x00;
/// Domain tag for hashing the concatenated child digests of a node.
pub const TAG_CHILDREN: u8 = 0x01;
/// Domain tag for hashing a node triple (lo, hi, children digest).
pub const TAG_NODE: u8 = 0x02;

/// Hash of one string: `H(TAG_STRING ‖ byte-length as u32 BE ‖ UTF-8 bytes)`.
pub fn string_hash(s: &str) -> Digest32 {
    let mut h = Sha256::new();
    h.update([TAG_STRING]);
    h.update((s.len() as u32).to_be_bytes());
    h.update(s.as_bytes());
    h.finalize().into()
}

/// Hash of a node's ordered child digests:
/// `H(TAG_CHILDREN ‖ d_1 ‖ … ‖ d_f)`. For leaves the child digests are
/// string hashes; for internal nodes they are child node digests.
pub fn children_digest(children: &[Digest32]) -> Digest32 {
    let mut h = Sha256::new();
    h.update([TAG_CHILDREN]);
    for c in children {
        h.update(c);
    }
    h.finalize().into()
}

/// Hash of a node triple:
/// `H(TAG_NODE ‖ string_hash(lo) ‖ string_hash(hi) ‖ children_digest)`.
pub fn node_digest(lo: &str, hi: &str, children: &Digest32) -> Digest32 {
    let mut h = Sha256::new();
    h.update([TAG_NODE]);
    h.update(string_hash(lo));
    h.update(string_hash(hi));
    h.update(children);
    h.finalize().into()
}
