//! The signed Merkle B^ed-tree: a bulk-loaded, balanced search tree over a
//! dictionary-ordered corpus whose every node carries a range `[lo, hi]`
//! and a digest over its children. The owner signs the root digest once;
//! any party can then recompute digests bottom-up from disclosed content
//! and check them against the signature.
//!
//! Trees are immutable after construction. The on-disk format is fully
//! re-validated on load: structure, ordering, coverage, ranges, and every
//! node digest.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::hashing::{children_digest, node_digest, string_hash, Digest32};
use crate::metrics::{compare, StringRange};
use crate::sign::SignatureProvider;
use crate::wire::{self, WireError};

/// Magic bytes opening an index file.
pub const INDEX_MAGIC: [u8; 4] = *b"MBT1";

/// Cap on the signature frame accepted at load time.
const MAX_SIGNATURE_LEN: usize = 4096;

/// Entries of one node: either corpus string ids (leaf) or child node ids
/// (internal). Ids are ascending and cover a contiguous span.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeEntries {
    Leaf(Vec<u32>),
    Internal(Vec<u32>),
}

/// One tree node. `span` is the inclusive range of corpus ids it covers;
/// the node's range strings are the corpus strings at the span ends.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MbNode {
    pub(crate) entries: NodeEntries,
    pub(crate) span: (u32, u32),
    pub(crate) digest: Digest32,
}

impl MbNode {
    pub fn is_leaf(&self) -> bool {
        matches!(self.entries, NodeEntries::Leaf(_))
    }

    pub fn digest(&self) -> &Digest32 {
        &self.digest
    }

    pub fn entries(&self) -> &NodeEntries {
        &self.entries
    }
}

/// How strings pack into leaves and nodes pack into levels. The default
/// comes from [`TreeLayout::packed`]; tests can pin other shapes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeLayout {
    /// Strings per leaf, left to right.
    pub leaf_sizes: Vec<usize>,
    /// For each internal level bottom-up, children per node, left to right.
    pub internal_arities: Vec<Vec<usize>>,
}

impl TreeLayout {
    /// Left-to-right packing: `fanout` entries per node, last node of each
    /// level possibly smaller, repeated until a single root remains.
    pub fn packed(n: usize, fanout: u32) -> TreeLayout {
        let f = fanout as usize;
        let chunk = |count: usize| -> Vec<usize> {
            let mut sizes = vec![f; count / f];
            if count % f != 0 {
                sizes.push(count % f);
            }
            sizes
        };
        let leaf_sizes = chunk(n);
        let mut internal_arities = Vec::new();
        let mut level = leaf_sizes.len();
        while level > 1 {
            let row = chunk(level);
            level = row.len();
            internal_arities.push(row);
        }
        TreeLayout { leaf_sizes, internal_arities }
    }

    fn validate(&self, n: usize, fanout: u32) -> Result<(), BuildError> {
        let f = fanout as usize;
        let level_ok = |sizes: &[usize], total: usize| {
            !sizes.is_empty()
                && sizes.iter().all(|&s| (1..=f).contains(&s))
                && sizes.iter().sum::<usize>() == total
        };
        if !level_ok(&self.leaf_sizes, n) {
            return Err(BuildError::BadLayout("leaf sizes do not pack the corpus"));
        }
        let mut count = self.leaf_sizes.len();
        for row in &self.internal_arities {
            if !level_ok(row, count) {
                return Err(BuildError::BadLayout("internal level does not pack the level below"));
            }
            count = row.len();
        }
        if count != 1 {
            return Err(BuildError::BadLayout("layout does not converge to a single root"));
        }
        Ok(())
    }
}

/// Errors from constructing a tree.
#[derive(Debug, Error)]
pub enum BuildError {
    #[error("empty dataset")]
    EmptyCorpus,
    #[error("fanout must be at least 2, got {0}")]
    FanoutTooSmall(u32),
    #[error("corpus is not strictly sorted in dictionary order at index {0}")]
    NotSorted(usize),
    #[error("invalid tree layout: {0}")]
    BadLayout(&'static str),
}

/// Errors from reading an index file. Node-level problems name the
/// offending node by its position in the file.
#[derive(Debug, Error)]
pub enum LoadError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not an index file (bad magic)")]
    BadMagic,
    #[error("file truncated while reading {0}")]
    Truncated(&'static str),
    #[error("{0} is not valid UTF-8")]
    InvalidUtf8(&'static str),
    #[error("fanout in file is {0}, below the minimum of 2")]
    FanoutTooSmall(u32),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("corpus is not strictly sorted in dictionary order at string {0}")]
    CorpusOrder(usize),
    #[error("file declares no nodes")]
    NoNodes,
    #[error("node {node}: invalid kind byte {value:#04x}")]
    KindByte { node: usize, value: u8 },
    #[error("node {node}: entry count {count} outside 1..={fanout}")]
    EntryCount { node: usize, count: usize, fanout: u32 },
    #[error("node {node}: entry id {offset} out of bounds")]
    BadChildOffset { node: usize, offset: u32 },
    #[error("node {node}: entries are not ascending and contiguous")]
    ChildOrder { node: usize },
    #[error("node {node}: stored range strings do not match covered span")]
    RangeMismatch { node: usize },
    #[error("node {node}: recomputed digest differs from stored digest")]
    DigestMismatch { node: usize },
    #[error("leaves do not cover the corpus exactly once")]
    Coverage,
    #[error("signature frame exceeds {MAX_SIGNATURE_LEN} bytes")]
    OversizedSignature,
    #[error("trailing bytes after the signature")]
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

/// The signed tree, its corpus, and its nodes in post-order (root last).
#[derive(Debug, Clone)]
pub struct MbTree {
    corpus: Vec<String>,
    nodes: Vec<MbNode>,
    fanout: u32,
    root_signature: Vec<u8>,
}

impl MbTree {
    /// Bulk-loads and signs a tree with default left-to-right packing.
    ///
    /// The corpus must already be strictly sorted in dictionary order and
    /// deduplicated (see `ingest`).
    pub fn build(
        corpus: Vec<String>,
        fanout: u32,
        signer: &dyn SignatureProvider,
    ) -> Result<MbTree, BuildError> {
        if fanout < 2 {
            return Err(BuildError::FanoutTooSmall(fanout));
        }
        if corpus.is_empty() {
            return Err(BuildError::EmptyCorpus);
        }
        let layout = TreeLayout::packed(corpus.len(), fanout);
        MbTree::build_with_layout(corpus, fanout, &layout, signer)
    }

    /// Bulk-loads and signs a tree with an explicit node layout.
    pub fn build_with_layout(
        corpus: Vec<String>,
        fanout: u32,
        layout: &TreeLayout,
        signer: &dyn SignatureProvider,
    ) -> Result<MbTree, BuildError> {
        if fanout < 2 {
            return Err(BuildError::FanoutTooSmall(fanout));
        }
        if corpus.is_empty() {
            return Err(BuildError::EmptyCorpus);
        }
        for i in 1..corpus.len() {
            if compare(&corpus[i - 1], &corpus[i]) != std::cmp::Ordering::Less {
                return Err(BuildError::NotSorted(i));
            }
        }
        layout.validate(corpus.len(), fanout)?;

        let mut nodes: Vec<MbNode> = Vec::new();
        // Build the leaf level.
        let mut level: Vec<usize> = Vec::new();
        let mut next_string = 0u32;
        for &size in &layout.leaf_sizes {
            let ids: Vec<u32> = (next_string..next_string + size as u32).collect();
            next_string += size as u32;
            let span = (ids[0], *ids.last().expect("size >= 1"));
            let kid_hashes: Vec<Digest32> =
                ids.iter().map(|&id| string_hash(&corpus[id as usize])).collect();
            let digest = node_digest(
                &corpus[span.0 as usize],
                &corpus[span.1 as usize],
                &children_digest(&kid_hashes),
            );
            level.push(nodes.len());
            nodes.push(MbNode { entries: NodeEntries::Leaf(ids), span, digest });
        }
        // Build internal levels bottom-up.
        for arities in &layout.internal_arities {
            let mut parents: Vec<usize> = Vec::new();
            let mut next_child = 0usize;
            for &arity in arities {
                let kids: Vec<u32> =
                    level[next_child..next_child + arity].iter().map(|&i| i as u32).collect();
                next_child += arity;
                let span = (
                    nodes[kids[0] as usize].span.0,
                    nodes[*kids.last().expect("arity >= 1") as usize].span.1,
                );
                let kid_hashes: Vec<Digest32> =
                    kids.iter().map(|&id| nodes[id as usize].digest).collect();
                let digest = node_digest(
                    &corpus[span.0 as usize],
                    &corpus[span.1 as usize],
                    &children_digest(&kid_hashes),
                );
                parents.push(nodes.len());
                nodes.push(MbNode { entries: NodeEntries::Internal(kids), span, digest });
            }
            level = parents;
        }

        let mut tree = MbTree { corpus, nodes, fanout, root_signature: Vec::new() };
        sign_root(&mut tree, signer);
        Ok(tree)
    }

    pub fn corpus(&self) -> &[String] {
        &self.corpus
    }

    pub fn fanout(&self) -> u32 {
        self.fanout
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Nodes are stored in post-order; the root is the last node.
    pub fn root_id(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn node(&self, id: usize) -> &MbNode {
        &self.nodes[id]
    }

    pub fn string(&self, id: u32) -> &str {
        &self.corpus[id as usize]
    }

    pub fn node_lo(&self, id: usize) -> &str {
        &self.corpus[self.nodes[id].span.0 as usize]
    }

    pub fn node_hi(&self, id: usize) -> &str {
        &self.corpus[self.nodes[id].span.1 as usize]
    }

    /// The node's `[lo, hi]` range as an owned range value.
    pub fn node_range(&self, id: usize) -> StringRange {
        StringRange::new(self.node_lo(id), self.node_hi(id))
            .expect("node spans are ordered by construction")
    }

    /// Digest of the children of `id`, i.e. the hash the node commits to
    /// before its own range strings are mixed in.
    pub fn node_children_digest(&self, id: usize) -> Digest32 {
        match &self.nodes[id].entries {
            NodeEntries::Leaf(ids) => {
                let hashes: Vec<Digest32> =
                    ids.iter().map(|&s| string_hash(&self.corpus[s as usize])).collect();
                children_digest(&hashes)
            }
            NodeEntries::Internal(kids) => {
                let hashes: Vec<Digest32> =
                    kids.iter().map(|&k| self.nodes[k as usize].digest).collect();
                children_digest(&hashes)
            }
        }
    }

    pub fn root_digest(&self) -> Digest32 {
        self.nodes[self.root_id()].digest
    }

    pub fn root_signature(&self) -> &[u8] {
        &self.root_signature
    }

    /// Writes the tree in the `MBT1` format.
    pub fn save(&self, mut w: impl Write) -> io::Result<()> {
        w.write_all(&INDEX_MAGIC)?;
        w.write_all(&self.fanout.to_be_bytes())?;
        w.write_all(&(self.corpus.len() as u32).to_be_bytes())?;
        for s in &self.corpus {
            write_string(&mut w, s)?;
        }
        w.write_all(&(self.nodes.len() as u32).to_be_bytes())?;
        for (id, node) in self.nodes.iter().enumerate() {
            write_string(&mut w, self.node_lo(id))?;
            write_string(&mut w, self.node_hi(id))?;
            w.write_all(&node.digest)?;
            let (kind, entries) = match &node.entries {
                NodeEntries::Leaf(ids) => (0u8, ids),
                NodeEntries::Internal(ids) => (1u8, ids),
            };
            w.write_all(&[kind])?;
            w.write_all(&(entries.len() as u32).to_be_bytes())?;
            for &e in entries {
                w.write_all(&e.to_be_bytes())?;
            }
        }
        w.write_all(&(self.root_signature.len() as u32).to_be_bytes())?;
        w.write_all(&self.root_signature)?;
        Ok(())
    }

    pub fn save_to_path(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.save(&mut w)?;
        w.flush()
    }

    /// Reads and fully re-validates a tree: structure, ordering, coverage,
    /// range strings, and every node digest. The root signature itself is
    /// checked later, whenever a verifier holds the public key.
    pub fn load(mut r: impl Read) -> Result<MbTree, LoadError> {
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic, "magic")?;
        if magic != INDEX_MAGIC {
            return Err(LoadError::BadMagic);
        }
        let fanout = read_u32(&mut r, "fanout")?;
        if fanout < 2 {
            return Err(LoadError::FanoutTooSmall(fanout));
        }
        let n = read_u32(&mut r, "corpus count")? as usize;
        if n == 0 {
            return Err(LoadError::EmptyCorpus);
        }
        let mut corpus: Vec<String> = Vec::with_capacity(n.min(1 << 20));
        for i in 0..n {
            let s = read_string(&mut r, "corpus string")?;
            if i > 0 && compare(&corpus[i - 1], &s) != std::cmp::Ordering::Less {
                return Err(LoadError::CorpusOrder(i));
            }
            corpus.push(s);
        }
        let node_count = read_u32(&mut r, "node count")? as usize;
        if node_count == 0 {
            return Err(LoadError::NoNodes);
        }
        let mut nodes: Vec<MbNode> = Vec::with_capacity(node_count.min(1 << 20));
        let mut string_used = vec![false; n];
        let mut node_used = vec![false; node_count];
        for node in 0..node_count {
            let lo = read_string(&mut r, "node range")?;
            let hi = read_string(&mut r, "node range")?;
            let mut digest = [0u8; 32];
            read_exact(&mut r, &mut digest, "node digest")?;
            let mut kind = [0u8; 1];
            read_exact(&mut r, &mut kind, "node kind")?;
            let count = read_u32(&mut r, "entry count")? as usize;
            if count == 0 || count > fanout as usize {
                return Err(LoadError::EntryCount { node, count, fanout });
            }
            let mut entries = Vec::with_capacity(count);
            for _ in 0..count {
                entries.push(read_u32(&mut r, "entry id")?);
            }
            let (node_value, recomputed) = match kind[0] {
                0 => {
                    for &id in &entries {
                        if id as usize >= n {
                            return Err(LoadError::BadChildOffset { node, offset: id });
                        }
                    }
                    if !ascending_contiguous(&entries) {
                        return Err(LoadError::ChildOrder { node });
                    }
                    for &id in &entries {
                        if std::mem::replace(&mut string_used[id as usize], true) {
                            return Err(LoadError::Coverage);
                        }
                    }
                    let span = (entries[0], *entries.last().expect("count >= 1"));
                    let hashes: Vec<Digest32> =
                        entries.iter().map(|&s| string_hash(&corpus[s as usize])).collect();
                    let kids = children_digest(&hashes);
                    let recomputed =
                        node_digest(&corpus[span.0 as usize], &corpus[span.1 as usize], &kids);
                    (MbNode { entries: NodeEntries::Leaf(entries), span, digest }, recomputed)
                }
                1 => {
                    for &id in &entries {
                        if id as usize >= node {
                            return Err(LoadError::BadChildOffset { node, offset: id });
                        }
                    }
                    // Children must sit side by side: ascending node ids
                    // whose spans chain without gap or overlap.
                    for w in entries.windows(2) {
                        let prev = &nodes[w[0] as usize];
                        let next = &nodes[w[1] as usize];
                        if w[0] >= w[1] || next.span.0 != prev.span.1 + 1 {
                            return Err(LoadError::ChildOrder { node });
                        }
                    }
                    for &id in &entries {
                        if std::mem::replace(&mut node_used[id as usize], true) {
                            return Err(LoadError::Coverage);
                        }
                    }
                    let span = (
                        nodes[entries[0] as usize].span.0,
                        nodes[*entries.last().expect("count >= 1") as usize].span.1,
                    );
                    let hashes: Vec<Digest32> =
                        entries.iter().map(|&k| nodes[k as usize].digest).collect();
                    let kids = children_digest(&hashes);
                    let recomputed =
                        node_digest(&corpus[span.0 as usize], &corpus[span.1 as usize], &kids);
                    (MbNode { entries: NodeEntries::Internal(entries), span, digest }, recomputed)
                }
                value => return Err(LoadError::KindByte { node, value }),
            };
            if corpus[node_value.span.0 as usize] != lo || corpus[node_value.span.1 as usize] != hi
            {
                return Err(LoadError::RangeMismatch { node });
            }
            if recomputed != digest {
                return Err(LoadError::DigestMismatch { node });
            }
            nodes.push(node_value);
        }
        // Exactly the root is unreferenced, and it must cover everything.
        if node_used[..node_count - 1].iter().any(|&used| !used) || node_used[node_count - 1] {
            return Err(LoadError::Coverage);
        }
        if string_used.iter().any(|&used| !used) {
            return Err(LoadError::Coverage);
        }
        let root = &nodes[node_count - 1];
        if root.span != (0, n as u32 - 1) {
            return Err(LoadError::Coverage);
        }
        let sig_len = read_u32(&mut r, "signature length")? as usize;
        if sig_len > MAX_SIGNATURE_LEN {
            return Err(LoadError::OversizedSignature);
        }
        let mut root_signature = vec![0u8; sig_len];
        read_exact(&mut r, &mut root_signature, "signature")?;
        let mut probe = [0u8; 1];
        if r.read(&mut probe)? != 0 {
            return Err(LoadError::TrailingBytes);
        }
        Ok(MbTree { corpus, nodes, fanout, root_signature })
    }

    pub fn load_from_path(path: impl AsRef<Path>) -> Result<MbTree, LoadError> {
        MbTree::load(BufReader::new(File::open(path)?))
    }
}

/// Signs the root digest and stores the signature in the tree.
pub fn sign_root(tree: &mut MbTree, signer: &dyn SignatureProvider) {
    tree.root_signature = signer.sign(&tree.root_digest());
}

fn ascending_contiguous(ids: &[u32]) -> bool {
    ids.windows(2).all(|w| w[1] == w[0] + 1)
}

fn write_string(w: &mut impl Write, s: &str) -> io::Result<()> {
    wire::write_string(w, s)
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &'static str) -> Result<(), LoadError> {
    Ok(wire::read_exact(r, buf, what)?)
}

fn read_u32(r: &mut impl Read, what: &'static str) -> Result<u32, LoadError> {
    Ok(wire::read_u32(r, what)?)
}

fn read_string(r: &mut impl Read, what: &'static str) -> Result<String, LoadError> {
    Ok(wire::read_string(r, what)?)
}
