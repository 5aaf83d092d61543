//! Verification objects: the proof trees servers attach to query results,
//! their canonical wire format, and the signed-result file envelope.
//!
//! A proof mirrors the search tree's bracket structure. Disclosed strings
//! appear verbatim; pruned subtrees appear as a range plus the digest of
//! their children; on the embedding-assisted path a string may instead
//! reference a dissimilarity box from a trailing box table. The encoding
//! is bit-exact and fully validated on decode: unknown tags, bad nesting,
//! inverted ranges, malformed boxes, truncation, and trailing bytes are
//! all structured errors, never panics.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::dbh::{DbhError, Hyperrect};
use crate::hashing::Digest32;
use crate::metrics::StringRange;
use crate::wire::{self, WireError};

pub const TAG_GROUP_BEGIN: u8 = 0x10;
pub const TAG_GROUP_END: u8 = 0x11;
pub const TAG_STR: u8 = 0x12;
pub const TAG_MF: u8 = 0x13;
pub const TAG_DBH_SET: u8 = 0x14;
pub const TAG_DBH_REF: u8 = 0x15;

/// Magic bytes opening a result/proof file.
pub const VO_FILE_MAGIC: [u8; 4] = *b"AVO1";

/// Maximum group nesting accepted by the decoder.
pub const MAX_DEPTH: usize = 64;

/// One node of a proof tree.
#[derive(Debug, Clone, PartialEq)]
pub enum VoEntry {
    /// A disclosed corpus string (similar string or false hit).
    Str(String),
    /// A pruned subtree: its covered range and its children digest.
    Mf {
        range: StringRange,
        kids_digest: Digest32,
    },
    /// A disclosed string certified dissimilar by the box at `rect` in
    /// the proof's box table.
    DbhRef { s: String, rect: u32 },
    /// Sibling bracket mirroring one tree node.
    Group(Vec<VoEntry>),
}

/// A complete proof: the entry tree plus the (possibly empty) table of
/// dissimilarity boxes referenced by [`VoEntry::DbhRef`].
#[derive(Debug, Clone, PartialEq)]
pub struct Vo {
    pub root: VoEntry,
    pub rects: Vec<Hyperrect>,
}

/// Errors from decoding a proof.
#[derive(Debug, Error)]
pub enum VoDecodeError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("proof truncated while reading {0}")]
    Truncated(&'static str),
    #[error("{0} is not valid UTF-8")]
    InvalidUtf8(&'static str),
    #[error("unknown entry tag {0:#04x}")]
    UnknownTag(u8),
    #[error("group end without a matching group begin")]
    StrayGroupEnd,
    #[error("empty group")]
    EmptyGroup,
    #[error("group nesting exceeds {MAX_DEPTH}")]
    DepthExceeded,
    #[error("pruned-subtree range has lo > hi")]
    InvertedRange,
    #[error("malformed dissimilarity box: {0}")]
    BadRect(#[from] DbhError),
    #[error("trailing bytes after the proof")]
    TrailingBytes,
}

impl From<WireError> for VoDecodeError {
    fn from(e: WireError) -> Self {
        match e {
            WireError::Io(e) => VoDecodeError::Io(e),
            WireError::Truncated(what) => VoDecodeError::Truncated(what),
            WireError::InvalidUtf8(what) => VoDecodeError::InvalidUtf8(what),
        }
    }
}

pub(crate) fn encode_entry(w: &mut impl Write, entry: &VoEntry) -> io::Result<()> {
    match entry {
        VoEntry::Str(s) => {
            w.write_all(&[TAG_STR])?;
            wire::write_string(w, s)
        }
        VoEntry::Mf { range, kids_digest } => {
            w.write_all(&[TAG_MF])?;
            wire::write_string(w, range.lo())?;
            wire::write_string(w, range.hi())?;
            w.write_all(kids_digest)
        }
        VoEntry::DbhRef { s, rect } => {
            w.write_all(&[TAG_DBH_REF])?;
            wire::write_string(w, s)?;
            wire::write_u32(w, *rect)
        }
        VoEntry::Group(entries) => {
            w.write_all(&[TAG_GROUP_BEGIN])?;
            for e in entries {
                encode_entry(w, e)?;
            }
            w.write_all(&[TAG_GROUP_END])
        }
    }
}

fn decode_entry(r: &mut impl Read, tag: u8, depth: usize) -> Result<VoEntry, VoDecodeError> {
    match tag {
        TAG_STR => Ok(VoEntry::Str(wire::read_string(r, "string entry")?)),
        TAG_MF => {
            let lo = wire::read_string(r, "range lo")?;
            let hi = wire::read_string(r, "range hi")?;
            let mut kids_digest = [0u8; 32];
            wire::read_exact(r, &mut kids_digest, "children digest")?;
            let range = StringRange::new(lo, hi).map_err(|_| VoDecodeError::InvertedRange)?;
            Ok(VoEntry::Mf { range, kids_digest })
        }
        TAG_DBH_REF => {
            let s = wire::read_string(r, "box-certified string")?;
            let rect = wire::read_u32(r, "box index")?;
            Ok(VoEntry::DbhRef { s, rect })
        }
        TAG_GROUP_BEGIN => {
            if depth >= MAX_DEPTH {
                return Err(VoDecodeError::DepthExceeded);
            }
            let mut entries = Vec::new();
            loop {
                let t = wire::read_u8(r, "entry tag")?;
                if t == TAG_GROUP_END {
                    break;
                }
                entries.push(decode_entry(r, t, depth + 1)?);
            }
            if entries.is_empty() {
                return Err(VoDecodeError::EmptyGroup);
            }
            Ok(VoEntry::Group(entries))
        }
        TAG_GROUP_END => Err(VoDecodeError::StrayGroupEnd),
        other => Err(VoDecodeError::UnknownTag(other)),
    }
}

pub(crate) fn encode_rect_table(w: &mut impl Write, rects: &[Hyperrect]) -> io::Result<()> {
    if rects.is_empty() {
        return Ok(());
    }
    w.write_all(&[TAG_DBH_SET])?;
    wire::write_u32(w, rects.len() as u32)?;
    for rect in rects {
        wire::write_u32(w, rect.dim() as u32)?;
        for &c in rect.lo() {
            wire::write_f64(w, c)?;
        }
        for &c in rect.hi() {
            wire::write_f64(w, c)?;
        }
    }
    Ok(())
}

impl Vo {
    pub fn encode(&self, mut w: impl Write) -> io::Result<()> {
        encode_entry(&mut w, &self.root)?;
        encode_rect_table(&mut w, &self.rects)
    }

    pub fn encode_to_vec(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.encode(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn decode(mut r: impl Read) -> Result<Self, VoDecodeError> {
        let tag = wire::read_u8(&mut r, "entry tag")?;
        let root = decode_entry(&mut r, tag, 0)?;
        let mut rects = Vec::new();
        let mut probe = [0u8; 1];
        match r.read(&mut probe)? {
            0 => {}
            _ if probe[0] == TAG_DBH_SET => {
                let count = wire::read_u32(&mut r, "box count")?;
                for _ in 0..count {
                    let dim = wire::read_u32(&mut r, "box dimension")? as usize;
                    let mut lo = Vec::new();
                    for _ in 0..dim {
                        lo.push(wire::read_f64(&mut r, "box lower bound")?);
                    }
                    let mut hi = Vec::new();
                    for _ in 0..dim {
                        hi.push(wire::read_f64(&mut r, "box upper bound")?);
                    }
                    rects.push(Hyperrect::new(lo, hi)?);
                }
                if !wire::at_eof(&mut r)? {
                    return Err(VoDecodeError::TrailingBytes);
                }
            }
            _ => return Err(VoDecodeError::TrailingBytes),
        }
        Ok(Vo { root, rects })
    }

    pub fn decode_from_slice(bytes: &[u8]) -> Result<Self, VoDecodeError> {
        Vo::decode(bytes)
    }
}

/// A proof entry in document order, borrowed from the tree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlatEntry<'a> {
    Str(&'a str),
    Mf(&'a StringRange, &'a Digest32),
    DbhRef(&'a str, u32),
}

/// Flattens a proof tree into its leaf entries in document order.
pub fn flatten(root: &VoEntry) -> Vec<FlatEntry<'_>> {
    fn walk<'a>(entry: &'a VoEntry, out: &mut Vec<FlatEntry<'a>>) {
        match entry {
            VoEntry::Str(s) => out.push(FlatEntry::Str(s)),
            VoEntry::Mf { range, kids_digest } => out.push(FlatEntry::Mf(range, kids_digest)),
            VoEntry::DbhRef { s, rect } => out.push(FlatEntry::DbhRef(s, *rect)),
            VoEntry::Group(entries) => {
                for e in entries {
                    walk(e, out);
                }
            }
        }
    }
    let mut out = Vec::new();
    walk(root, &mut out);
    out
}

/// Which verification path a proof was built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoMode {
    Vs2,
    Evs2,
}

impl VoMode {
    fn to_byte(self) -> u8 {
        match self {
            VoMode::Vs2 => 0,
            VoMode::Evs2 => 1,
        }
    }
}

/// Errors from decoding a result/proof file.
#[derive(Debug, Error)]
pub enum VoFileError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("file truncated while reading {0}")]
    Truncated(&'static str),
    #[error("{0} is not valid UTF-8")]
    InvalidUtf8(&'static str),
    #[error("not a result file (bad magic)")]
    BadMagic,
    #[error("unknown mode byte {0:#04x}")]
    BadMode(u8),
    #[error("unknown ranked-query flag {0:#04x}")]
    BadTopkFlag(u8),
    #[error("ranked-query k must be positive when the flag is set, zero otherwise")]
    BadK,
    #[error("proof block: {0}")]
    Vo(#[from] VoDecodeError),
    #[error("signature length {0} exceeds the {MAX_SIGNATURE_LEN}-byte cap")]
    SignatureTooLong(u32),
    #[error("trailing bytes after the proof block")]
    TrailingBytes,
}

impl From<WireError> for VoFileError {
    fn from(e: WireError) -> Self {
        match e {
            WireError::Io(e) => VoFileError::Io(e),
            WireError::Truncated(what) => VoFileError::Truncated(what),
            WireError::InvalidUtf8(what) => VoFileError::InvalidUtf8(what),
        }
    }
}

/// Longest root signature accepted when loading a result file.
pub const MAX_SIGNATURE_LEN: u32 = 4096;

/// The complete server response as stored on disk: mode, optional ranked
/// query parameter, the claimed results, the proof, and the owner's root
/// signature relayed by the server.
#[derive(Debug, Clone, PartialEq)]
pub struct VoFile {
    pub mode: VoMode,
    /// `Some(k)` when the results answer a ranked (top-k) query.
    pub topk: Option<u32>,
    /// Claimed result strings, in server-chosen order.
    pub results: Vec<String>,
    pub vo: Vo,
    /// Signature over the root digest, produced by the data owner.
    pub signature: Vec<u8>,
}

impl VoFile {
    pub fn encode(&self, mut w: impl Write) -> io::Result<()> {
        w.write_all(&VO_FILE_MAGIC)?;
        w.write_all(&[self.mode.to_byte()])?;
        match self.topk {
            Some(k) => {
                w.write_all(&[1])?;
                wire::write_u32(&mut w, k)?;
            }
            None => {
                w.write_all(&[0])?;
                wire::write_u32(&mut w, 0)?;
            }
        }
        wire::write_u32(&mut w, self.results.len() as u32)?;
        for s in &self.results {
            wire::write_string(&mut w, s)?;
        }
        let vo_bytes = self.vo.encode_to_vec();
        wire::write_u32(&mut w, vo_bytes.len() as u32)?;
        w.write_all(&vo_bytes)?;
        wire::write_u32(&mut w, self.signature.len() as u32)?;
        w.write_all(&self.signature)?;
        w.flush()
    }

    pub fn encode_to_vec(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.encode(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn decode(mut r: impl Read) -> Result<Self, VoFileError> {
        let mut magic = [0u8; 4];
        wire::read_exact(&mut r, &mut magic, "magic")?;
        if magic != VO_FILE_MAGIC {
            return Err(VoFileError::BadMagic);
        }
        let mode = match wire::read_u8(&mut r, "mode")? {
            0 => VoMode::Vs2,
            1 => VoMode::Evs2,
            other => return Err(VoFileError::BadMode(other)),
        };
        let flag = wire::read_u8(&mut r, "ranked-query flag")?;
        let k = wire::read_u32(&mut r, "ranked-query k")?;
        let topk = match (flag, k) {
            (0, 0) => None,
            (0, _) | (1, 0) => return Err(VoFileError::BadK),
            (1, k) => Some(k),
            (other, _) => return Err(VoFileError::BadTopkFlag(other)),
        };
        let n = wire::read_u32(&mut r, "result count")?;
        let mut results = Vec::new();
        for _ in 0..n {
            results.push(wire::read_string(&mut r, "result string")?);
        }
        let vo_block = wire::read_block(&mut r, "proof block")?;
        let vo = Vo::decode(vo_block.as_slice())?;
        let sig_len = wire::read_u32(&mut r, "signature length")?;
        if sig_len > MAX_SIGNATURE_LEN {
            return Err(VoFileError::SignatureTooLong(sig_len));
        }
        let mut signature = vec![0u8; sig_len as usize];
        wire::read_exact(&mut r, &mut signature, "signature")?;
        if !wire::at_eof(&mut r)? {
            return Err(VoFileError::TrailingBytes);
        }
        Ok(VoFile {
            mode,
            topk,
            results,
            vo,
            signature,
        })
    }

    pub fn decode_from_slice(bytes: &[u8]) -> Result<Self, VoFileError> {
        VoFile::decode(bytes)
    }

    pub fn save_to_path(&self, path: impl AsRef<Path>) -> io::Result<()> {
        self.encode(BufWriter::new(File::create(path)?))
    }

    pub fn load_from_path(path: impl AsRef<Path>) -> Result<Self, VoFileError> {
        VoFile::decode(BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    use rand::{Rng as _, SeedableRng as _};
    use rand_chacha::ChaCha20Rng;

    fn sample_vo() -> Vo {
        Vo {
            root: VoEntry::Group(vec![
                VoEntry::Str("ab".into()),
                VoEntry::Mf {
                    range: StringRange::new("ca", "cz").unwrap(),
                    kids_digest: [0xAB; 32],
                },
                VoEntry::DbhRef {
                    s: "da".into(),
                    rect: 1,
                },
            ]),
            rects: vec![
                Hyperrect::new(vec![0.0], vec![0.5]).unwrap(),
                Hyperrect::new(vec![1.5], vec![2.5]).unwrap(),
            ],
        }
    }

    #[test]
    fn golden_encoding() {
        let vo = sample_vo();
        let mut expected = Vec::new();
        expected.push(0x10);
        expected.push(0x12);
        expected.extend_from_slice(&2u32.to_be_bytes());
        expected.extend_from_slice(b"ab");
        expected.push(0x13);
        expected.extend_from_slice(&2u32.to_be_bytes());
        expected.extend_from_slice(b"ca");
        expected.extend_from_slice(&2u32.to_be_bytes());
        expected.extend_from_slice(b"cz");
        expected.extend_from_slice(&[0xAB; 32]);
        expected.push(0x15);
        expected.extend_from_slice(&2u32.to_be_bytes());
        expected.extend_from_slice(b"da");
        expected.extend_from_slice(&1u32.to_be_bytes());
        expected.push(0x11);
        expected.push(0x14);
        expected.extend_from_slice(&2u32.to_be_bytes());
        expected.extend_from_slice(&1u32.to_be_bytes());
        expected.extend_from_slice(&0.0f64.to_be_bytes());
        expected.extend_from_slice(&0.5f64.to_be_bytes());
        expected.extend_from_slice(&1u32.to_be_bytes());
        expected.extend_from_slice(&1.5f64.to_be_bytes());
        expected.extend_from_slice(&2.5f64.to_be_bytes());

        assert_eq!(vo.encode_to_vec(), expected);
        let decoded = Vo::decode_from_slice(&expected).unwrap();
        assert_eq!(decoded, vo);
    }

    fn random_entry(rng: &mut ChaCha20Rng, depth: usize) -> VoEntry {
        let strings = ["", "a", "ab", "ba", "zz", "héllo", "中中", "x y"];
        match if depth == 0 { rng.gen_range(0..3) } else { rng.gen_range(0..4) } {
            0 => VoEntry::Str(strings[rng.gen_range(0..strings.len())].to_string()),
            1 => {
                let mut pair = [
                    strings[rng.gen_range(0..strings.len())],
                    strings[rng.gen_range(0..strings.len())],
                ];
                pair.sort();
                VoEntry::Mf {
                    range: StringRange::new(pair[0], pair[1]).unwrap(),
                    kids_digest: rng.gen::<[u8; 32]>(),
                }
            }
            2 => VoEntry::DbhRef {
                s: strings[rng.gen_range(0..strings.len())].to_string(),
                rect: rng.gen_range(0..4),
            },
            _ => {
                let n = rng.gen_range(1..=4);
                VoEntry::Group((0..n).map(|_| random_entry(rng, depth - 1)).collect())
            }
        }
    }

    fn random_vo(rng: &mut ChaCha20Rng) -> Vo {
        let root = VoEntry::Group(
            (0..rng.gen_range(1..=4))
                .map(|_| random_entry(rng, 3))
                .collect(),
        );
        let rects = (0..rng.gen_range(0..4))
            .map(|_| {
                let d = rng.gen_range(1..=4);
                let lo: Vec<f64> = (0..d).map(|_| rng.gen_range(-10.0..10.0)).collect();
                let hi: Vec<f64> = lo.iter().map(|&l| l + rng.gen_range(0.0..5.0)).collect();
                Hyperrect::new(lo, hi).unwrap()
            })
            .collect();
        Vo { root, rects }
    }

    #[test]
    fn random_trees_round_trip_byte_identically() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..300 {
            let vo = random_vo(&mut rng);
            let bytes = vo.encode_to_vec();
            let decoded = Vo::decode_from_slice(&bytes).unwrap();
            assert_eq!(decoded, vo);
            assert_eq!(decoded.encode_to_vec(), bytes);
        }
    }

    #[test]
    fn decode_rejects_malformed_structure() {
        assert!(matches!(
            Vo::decode_from_slice(&[0x7F]),
            Err(VoDecodeError::UnknownTag(0x7F))
        ));
        assert!(matches!(
            Vo::decode_from_slice(&[0x11]),
            Err(VoDecodeError::StrayGroupEnd)
        ));
        assert!(matches!(
            Vo::decode_from_slice(&[0x10, 0x11]),
            Err(VoDecodeError::EmptyGroup)
        ));
        // 65 nested groups exceed the cap.
        let mut deep = vec![TAG_GROUP_BEGIN; MAX_DEPTH + 1];
        deep.push(TAG_STR);
        assert!(matches!(
            Vo::decode_from_slice(&deep),
            Err(VoDecodeError::DepthExceeded)
        ));
        assert!(matches!(
            Vo::decode_from_slice(&[]),
            Err(VoDecodeError::Truncated(_))
        ));
    }

    #[test]
    fn decode_rejects_inverted_range() {
        let mut bytes = Vec::new();
        bytes.push(TAG_MF);
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(b"cz");
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(b"ca");
        bytes.extend_from_slice(&[0u8; 32]);
        assert!(matches!(
            Vo::decode_from_slice(&bytes),
            Err(VoDecodeError::InvertedRange)
        ));
    }

    #[test]
    fn decode_rejects_bad_boxes() {
        // lo > hi
        let mut bytes = vec![TAG_STR];
        bytes.extend_from_slice(&1u32.to_be_bytes());
        bytes.push(b'a');
        bytes.push(TAG_DBH_SET);
        bytes.extend_from_slice(&1u32.to_be_bytes());
        bytes.extend_from_slice(&1u32.to_be_bytes());
        bytes.extend_from_slice(&2.0f64.to_be_bytes());
        bytes.extend_from_slice(&1.0f64.to_be_bytes());
        assert!(matches!(
            Vo::decode_from_slice(&bytes),
            Err(VoDecodeError::BadRect(DbhError::InvertedBounds { .. }))
        ));

        // NaN bound
        let mut bytes = vec![TAG_STR];
        bytes.extend_from_slice(&1u32.to_be_bytes());
        bytes.push(b'a');
        bytes.push(TAG_DBH_SET);
        bytes.extend_from_slice(&1u32.to_be_bytes());
        bytes.extend_from_slice(&1u32.to_be_bytes());
        bytes.extend_from_slice(&f64::NAN.to_be_bytes());
        bytes.extend_from_slice(&1.0f64.to_be_bytes());
        assert!(matches!(
            Vo::decode_from_slice(&bytes),
            Err(VoDecodeError::BadRect(DbhError::NonFinite { .. }))
        ));

        // zero-dimension box
        let mut bytes = vec![TAG_STR];
        bytes.extend_from_slice(&1u32.to_be_bytes());
        bytes.push(b'a');
        bytes.push(TAG_DBH_SET);
        bytes.extend_from_slice(&1u32.to_be_bytes());
        bytes.extend_from_slice(&0u32.to_be_bytes());
        assert!(matches!(
            Vo::decode_from_slice(&bytes),
            Err(VoDecodeError::BadRect(DbhError::ZeroDim))
        ));
    }

    #[test]
    fn truncations_and_trailing_bytes_rejected() {
        let vo = sample_vo();
        let bytes = vo.encode_to_vec();
        // The box table is an optional trailing section, so the one prefix
        // ending exactly before it parses — as a different value. Every
        // other strict prefix must fail outright.
        for len in 0..bytes.len() {
            match Vo::decode_from_slice(&bytes[..len]) {
                Err(_) => {}
                Ok(decoded) => {
                    assert_ne!(decoded, vo, "prefix of length {len} decoded as the original");
                    assert!(decoded.rects.is_empty());
                }
            }
        }
        let mut trailing = bytes.clone();
        trailing.push(0x00);
        assert!(matches!(
            Vo::decode_from_slice(&trailing),
            Err(VoDecodeError::TrailingBytes)
        ));
    }

    #[test]
    fn flatten_preserves_document_order() {
        let vo = sample_vo();
        let flat = flatten(&vo.root);
        assert_eq!(flat.len(), 3);
        assert!(matches!(flat[0], FlatEntry::Str("ab")));
        assert!(matches!(flat[1], FlatEntry::Mf(r, _) if r.lo() == "ca" && r.hi() == "cz"));
        assert!(matches!(flat[2], FlatEntry::DbhRef("da", 1)));
    }

    fn sample_file(topk: Option<u32>) -> VoFile {
        VoFile {
            mode: VoMode::Evs2,
            topk,
            results: vec!["ab".into(), "ba".into()],
            vo: sample_vo(),
            signature: vec![0xD5; 33],
        }
    }

    #[test]
    fn file_round_trips() {
        for topk in [None, Some(3)] {
            let file = sample_file(topk);
            let bytes = file.encode_to_vec();
            let decoded = VoFile::decode_from_slice(&bytes).unwrap();
            assert_eq!(decoded, file);
            assert_eq!(decoded.encode_to_vec(), bytes);
        }
    }

    #[test]
    fn file_rejects_corruption() {
        let bytes = sample_file(Some(2)).encode_to_vec();
        for len in 0..bytes.len() {
            assert!(
                VoFile::decode_from_slice(&bytes[..len]).is_err(),
                "prefix of length {len} unexpectedly parsed"
            );
        }

        let mut bad_magic = bytes.clone();
        bad_magic[0] ^= 1;
        assert!(matches!(
            VoFile::decode_from_slice(&bad_magic),
            Err(VoFileError::BadMagic)
        ));

        let mut bad_mode = bytes.clone();
        bad_mode[4] = 2;
        assert!(matches!(
            VoFile::decode_from_slice(&bad_mode),
            Err(VoFileError::BadMode(2))
        ));

        let mut bad_flag = bytes.clone();
        bad_flag[5] = 9;
        assert!(matches!(
            VoFile::decode_from_slice(&bad_flag),
            Err(VoFileError::BadTopkFlag(9))
        ));

        // k = 0 with the flag set.
        let mut zero_k = bytes.clone();
        zero_k[6..10].copy_from_slice(&0u32.to_be_bytes());
        assert!(matches!(
            VoFile::decode_from_slice(&zero_k),
            Err(VoFileError::BadK)
        ));

        // Flag clear but k nonzero.
        let mut stray_k = bytes.clone();
        stray_k[5] = 0;
        assert!(matches!(
            VoFile::decode_from_slice(&stray_k),
            Err(VoFileError::BadK)
        ));

        // Oversized signature length claim (field sits before the 33 sig bytes).
        let mut huge_sig = bytes.clone();
        let off = bytes.len() - 4 - 33;
        huge_sig[off..off + 4].copy_from_slice(&(MAX_SIGNATURE_LEN + 1).to_be_bytes());
        assert!(matches!(
            VoFile::decode_from_slice(&huge_sig),
            Err(VoFileError::SignatureTooLong(_))
        ));

        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(matches!(
            VoFile::decode_from_slice(&trailing),
            Err(VoFileError::TrailingBytes)
        ));
    }

    #[test]
    fn byte_flips_never_panic() {
        let bytes = sample_file(None).encode_to_vec();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for _ in 0..2000 {
            let mut mutated = bytes.clone();
            let i = rng.gen_range(0..mutated.len());
            mutated[i] ^= 1 << rng.gen_range(0..8);
            let _ = VoFile::decode_from_slice(&mutated);
        }
    }
}
