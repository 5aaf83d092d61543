//! Batched queries sharing one proof bundle.
//!
//! When several queries run against the same tree, their proofs overlap:
//! distant subtrees prune identically, similar queries disclose the same
//! strings, and dissimilarity boxes can serve more than one query. The
//! bundle stores each shared component once and lets per-query sections
//! reference it by index. On top of that, the triangle inequality lets a
//! later query *exempt* a string whose edit distance the client already
//! computed for an earlier query: if `DST(s, q_j) - DST(q_i, q_j) > θ`
//! the string is provably dissimilar to `q_i` (and provably similar when
//! `DST(s, q_j) + DST(q_i, q_j) ≤ θ`), so the client can skip the edit
//! distance entirely. Exempt strings still appear in the proof structure
//! and its digests; only the distance scan skips them.
//!
//! The client trusts nothing: query-to-query distances are recomputed
//! locally, and an exemption may only cite a pivot distance the client
//! itself established while verifying the earlier query. The encoder
//! interns a string or pruned-range entry into the shared tables only
//! when that is strictly smaller than writing it inline, which keeps the
//! bundle no larger than the sum of independent proofs.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::dbh::{self, DbhError, Hyperrect};
use crate::embedding::{Embedder, EmbeddedPoint};
use crate::hashing::Digest32;
use crate::mbtree::MbTree;
use crate::metrics::{self, StringRange};
use crate::report::{Counters, Diagnosis, FailedStep, VerificationReport};
use crate::sign::PublicKey;
use crate::vo::{flatten, FlatEntry, Vo, VoEntry, VoMode, MAX_DEPTH, MAX_SIGNATURE_LEN};
use crate::vs2::{self, Query};
use crate::wire::{self, WireError};

/// Magic bytes opening a bundle file.
pub const BUNDLE_MAGIC: [u8; 4] = *b"MQB1";

const TAG_GROUP_BEGIN: u8 = 0x20;
const TAG_GROUP_END: u8 = 0x21;
const TAG_STR: u8 = 0x22;
const TAG_STR_REF: u8 = 0x23;
const TAG_MF: u8 = 0x24;
const TAG_MF_REF: u8 = 0x25;
const TAG_DBH: u8 = 0x26;
const TAG_DBH_REF: u8 = 0x27;
// Exempt string entries carry one extra info byte: bit 0 is the claimed
// side, bits 1..7 the pivot query index. Riding on the entry keeps an
// exemption to one or two wire bytes, which is what lets the bundle stay
// under the sum of independent proofs even when exemptions are plentiful.
const TAG_STR_EXEMPT: u8 = 0x28;
const TAG_STR_REF_EXEMPT: u8 = 0x29;

/// Largest pivot index the packed info byte can carry.
const MAX_PIVOT: u32 = 127;

/// A batch of distinct query strings sharing one threshold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiQuery {
    strings: Vec<String>,
    theta: u32,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MultiQueryError {
    #[error("a batch needs at least one query string")]
    Empty,
    #[error("duplicate query string {0:?}")]
    Duplicate(String),
}

impl MultiQuery {
    pub fn new(strings: Vec<String>, theta: u32) -> Result<Self, MultiQueryError> {
        if strings.is_empty() {
            return Err(MultiQueryError::Empty);
        }
        let mut seen = HashSet::new();
        for s in &strings {
            if !seen.insert(s.as_str()) {
                return Err(MultiQueryError::Duplicate(s.clone()));
            }
        }
        Ok(MultiQuery { strings, theta })
    }

    pub fn strings(&self) -> &[String] {
        &self.strings
    }

    pub fn theta(&self) -> u32 {
        self.theta
    }
}

/// Why one query's section may skip a string's edit distance: the pivot
/// query's recorded distance proves the claimed side of the threshold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exemption {
    pub s: String,
    /// Index of the earlier query whose recorded distance is cited.
    pub pivot: u32,
    /// Claimed side: provably similar (must be returned) or provably
    /// dissimilar (must not be).
    pub similar: bool,
}

/// One query's slice of the bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct QuerySection {
    pub results: Vec<String>,
    pub exemptions: Vec<Exemption>,
    pub vo: Vo,
}

/// The whole batched response: context, per-query sections, and the
/// owner's root signature (one tree, one signature).
#[derive(Debug, Clone, PartialEq)]
pub struct SharedVoBundle {
    pub mode: VoMode,
    pub theta: u32,
    pub queries: Vec<String>,
    pub sections: Vec<QuerySection>,
    pub signature: Vec<u8>,
}

/// Splits the strings of a recorded distance map by what the triangle
/// inequality proves about their distance to a second query at distance
/// `d12` from the recorded one.
pub fn triangle_prune(
    dists_q1: &HashMap<String, u32>,
    d12: u32,
    theta: u32,
) -> (HashSet<String>, HashSet<String>) {
    let mut skip_dissimilar = HashSet::new();
    let mut skip_similar = HashSet::new();
    for (s, &d) in dists_q1 {
        if u64::from(d) > u64::from(d12) + u64::from(theta) {
            skip_dissimilar.insert(s.clone());
        } else if u64::from(d) + u64::from(d12) <= u64::from(theta) {
            skip_similar.insert(s.clone());
        }
    }
    (skip_dissimilar, skip_similar)
}

/// Picks the first earlier query whose recorded distance settles `s` for
/// the current query, mirroring exactly what the client will accept.
fn find_exemption(
    s: &str,
    qi: &str,
    queries: &[String],
    recorded: &[HashMap<String, u32>],
    theta: u32,
) -> Option<Exemption> {
    // Pivots beyond the packed-byte range are simply not used; the
    // exemption is an optimization, never a requirement.
    for (j, rec) in recorded.iter().enumerate().take(MAX_PIVOT as usize + 1) {
        let Some(&d_sj) = rec.get(s) else { continue };
        let d_ij = metrics::edit_distance(qi, &queries[j]);
        if u64::from(d_sj) > u64::from(d_ij) + u64::from(theta) {
            return Some(Exemption {
                s: s.to_string(),
                pivot: j as u32,
                similar: false,
            });
        }
        if u64::from(d_sj) + u64::from(d_ij) <= u64::from(theta) {
            return Some(Exemption {
                s: s.to_string(),
                pivot: j as u32,
                similar: true,
            });
        }
    }
    None
}

/// Derives one query's exemptions and the distance map the client will
/// record for it (every disclosed string scanned, minus the exempt ones).
fn exemptions_for_section(
    vo: &Vo,
    qi: &str,
    queries: &[String],
    recorded: &[HashMap<String, u32>],
    theta: u32,
) -> (Vec<Exemption>, HashMap<String, u32>) {
    let mut exemptions = Vec::new();
    let mut rec = HashMap::new();
    for entry in flatten(&vo.root) {
        if let FlatEntry::Str(s) = entry {
            match find_exemption(s, qi, queries, recorded, theta) {
                Some(e) => exemptions.push(e),
                None => {
                    rec.insert(s.to_string(), metrics::edit_distance(qi, s));
                }
            }
        }
    }
    (exemptions, rec)
}

/// Builds a plain-mode bundle: per query, the ordinary proof plus
/// triangle exemptions against all earlier queries.
pub fn build_multi_vo(tree: &MbTree, mq: &MultiQuery) -> SharedVoBundle {
    let mut recorded: Vec<HashMap<String, u32>> = Vec::new();
    let mut sections = Vec::new();
    for q in &mq.strings {
        let (results, vo) = vs2::build_vo(tree, &Query::new(q.clone(), mq.theta));
        let (exemptions, rec) =
            exemptions_for_section(&vo, q, &mq.strings, &recorded, mq.theta);
        recorded.push(rec);
        sections.push(QuerySection {
            results,
            exemptions,
            vo,
        });
    }
    SharedVoBundle {
        mode: VoMode::Vs2,
        theta: mq.theta,
        queries: mq.strings.clone(),
        sections,
        signature: tree.root_signature().to_vec(),
    }
}

/// Builds an embedding-assisted bundle. Dissimilarity boxes accumulate
/// across queries: a far point reuses an earlier box when that box
/// already contains it and is provably distant for the *current* query;
/// only the leftovers get a fresh partition.
pub fn build_multi_vo_e<F: Embedder + ?Sized>(
    tree: &MbTree,
    f: &F,
    mq: &MultiQuery,
) -> SharedVoBundle {
    let mut shared_rects: Vec<Hyperrect> = Vec::new();
    let mut recorded: Vec<HashMap<String, u32>> = Vec::new();
    let mut sections = Vec::new();
    let theta = mq.theta as f64;

    for q in &mq.strings {
        let query = Query::new(q.clone(), mq.theta);
        let (results, base) = vs2::build_vo(tree, &query);
        let result_set: HashSet<&str> = results.iter().map(String::as_str).collect();
        let c_strings: Vec<String> = flatten(&base.root)
            .iter()
            .filter_map(|e| match e {
                FlatEntry::Str(s) if !result_set.contains(s) => Some(s.to_string()),
                _ => None,
            })
            .collect();
        let (_fp, ds) = crate::evs2::classify_cstrings(f, &query, &c_strings);

        let pq = f.embed(q);
        let mut assign: HashMap<String, usize> = HashMap::new(); // string -> shared index
        let mut leftover: Vec<(String, EmbeddedPoint)> = Vec::new();
        for s in ds {
            let p = f.embed(&s);
            let reusable = shared_rects
                .iter()
                .position(|r| r.contains(&p) && dbh::dst_min_rect(&pq, r) > theta);
            match reusable {
                Some(idx) => {
                    assign.insert(s, idx);
                }
                None => leftover.push((s, p)),
            }
        }
        if !leftover.is_empty() {
            let points: Vec<EmbeddedPoint> =
                leftover.iter().map(|(_, p)| p.clone()).collect();
            let fresh = crate::evs2::partition_far_points(&pq, &points, theta);
            let base_idx = shared_rects.len();
            for (s, p) in &leftover {
                let local = fresh
                    .iter()
                    .position(|r| r.contains(p))
                    .expect("partition covers every far point");
                assign.insert(s.clone(), base_idx + local);
            }
            shared_rects.extend(fresh);
        }

        // Per-section box list: referenced shared boxes in first-use
        // order, with entry indices remapped accordingly.
        let mut local_of: HashMap<usize, u32> = HashMap::new();
        let mut rects: Vec<Hyperrect> = Vec::new();
        let mut local_assign: HashMap<String, u32> = HashMap::new();
        for entry in flatten(&base.root) {
            if let FlatEntry::Str(s) = entry {
                if let Some(&shared_idx) = assign.get(s) {
                    let local = *local_of.entry(shared_idx).or_insert_with(|| {
                        rects.push(shared_rects[shared_idx].clone());
                        (rects.len() - 1) as u32
                    });
                    local_assign.insert(s.to_string(), local);
                }
            }
        }
        let root = crate::evs2::relabel(base.root, &local_assign);
        let vo = Vo { root, rects };

        let (exemptions, rec) =
            exemptions_for_section(&vo, q, &mq.strings, &recorded, mq.theta);
        recorded.push(rec);
        sections.push(QuerySection {
            results,
            exemptions,
            vo,
        });
    }
    SharedVoBundle {
        mode: VoMode::Evs2,
        theta: mq.theta,
        queries: mq.strings.clone(),
        sections,
        signature: tree.root_signature().to_vec(),
    }
}

// ---------------------------------------------------------------------
// Wire format
// ---------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum BundleDecodeError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("bundle truncated while reading {0}")]
    Truncated(&'static str),
    #[error("{0} is not valid UTF-8")]
    InvalidUtf8(&'static str),
    #[error("not a bundle file (bad magic)")]
    BadMagic,
    #[error("unknown mode byte {0:#04x}")]
    BadMode(u8),
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
    #[error("shared string index {0} out of range")]
    StringRefOutOfRange(u32),
    #[error("shared pruned-range index {0} out of range")]
    MfRefOutOfRange(u32),
    #[error("shared box index {0} out of range")]
    RectRefOutOfRange(u32),
    #[error("signature length {0} exceeds the {MAX_SIGNATURE_LEN}-byte cap")]
    SignatureTooLong(u32),
    #[error("trailing bytes after the bundle")]
    TrailingBytes,
}

impl From<WireError> for BundleDecodeError {
    fn from(e: WireError) -> Self {
        match e {
            WireError::Io(e) => BundleDecodeError::Io(e),
            WireError::Truncated(what) => BundleDecodeError::Truncated(what),
            WireError::InvalidUtf8(what) => BundleDecodeError::InvalidUtf8(what),
        }
    }
}

type MfKey = (String, String, Digest32);

/// Shared-table contents plus per-component interning decisions, fixed
/// before encoding so references are only used where they save bytes.
struct InternPlan {
    strings: Vec<String>,
    string_idx: HashMap<String, u32>,
    mfs: Vec<MfKey>,
    mf_idx: HashMap<MfKey, u32>,
    rects: Vec<Hyperrect>,
    /// Per section, local box index -> shared table index.
    rect_maps: Vec<Vec<u32>>,
}

fn count_string_use(counts: &mut HashMap<String, (usize, usize)>, s: &str) {
    let e = counts.entry(s.to_string()).or_insert((0, s.len()));
    e.0 += 1;
}

fn plan_interning(bundle: &SharedVoBundle) -> InternPlan {
    // Count every place a string or pruned-range entry occurs.
    let mut string_counts: HashMap<String, (usize, usize)> = HashMap::new();
    let mut mf_counts: HashMap<MfKey, usize> = HashMap::new();
    fn walk_counts(
        entry: &VoEntry,
        strings: &mut HashMap<String, (usize, usize)>,
        mfs: &mut HashMap<MfKey, usize>,
    ) {
        match entry {
            VoEntry::Str(s) => count_string_use(strings, s),
            VoEntry::DbhRef { s, .. } => count_string_use(strings, s),
            VoEntry::Mf { range, kids_digest } => {
                let key = (range.lo().to_string(), range.hi().to_string(), *kids_digest);
                *mfs.entry(key).or_insert(0) += 1;
            }
            VoEntry::Group(entries) => {
                for e in entries {
                    walk_counts(e, strings, mfs);
                }
            }
        }
    }
    for section in &bundle.sections {
        for s in &section.results {
            count_string_use(&mut string_counts, s);
        }
        walk_counts(&section.vo.root, &mut string_counts, &mut mf_counts);
    }

    // A reference costs 4 bytes plus the one-time table row (4 + len);
    // inline costs len extra per use. Intern only when that nets out.
    let should_intern =
        |uses: usize, len: usize| uses >= 2 && (uses - 1).saturating_mul(len) >= 5;

    let mut strings = Vec::new();
    let mut string_idx = HashMap::new();
    let mut mfs = Vec::new();
    let mut mf_idx = HashMap::new();
    let mut rects = Vec::new();
    let mut rect_global: HashMap<Vec<u8>, u32> = HashMap::new();
    let mut rect_maps = Vec::new();

    // Assign table slots in first-use order so encoding is canonical.
    fn walk_assign(
        entry: &VoEntry,
        string_counts: &HashMap<String, (usize, usize)>,
        should_intern: &dyn Fn(usize, usize) -> bool,
        mf_counts: &HashMap<MfKey, usize>,
        strings: &mut Vec<String>,
        string_idx: &mut HashMap<String, u32>,
        mfs: &mut Vec<MfKey>,
        mf_idx: &mut HashMap<MfKey, u32>,
    ) {
        let mut intern_string = |s: &str| {
            let (uses, len) = string_counts[s];
            if should_intern(uses, len) && !string_idx.contains_key(s) {
                string_idx.insert(s.to_string(), strings.len() as u32);
                strings.push(s.to_string());
            }
        };
        match entry {
            VoEntry::Str(s) => intern_string(s),
            VoEntry::DbhRef { s, .. } => intern_string(s),
            VoEntry::Mf { range, kids_digest } => {
                let key = (range.lo().to_string(), range.hi().to_string(), *kids_digest);
                if mf_counts[&key] >= 2 && !mf_idx.contains_key(&key) {
                    mf_idx.insert(key.clone(), mfs.len() as u32);
                    mfs.push(key);
                }
            }
            VoEntry::Group(entries) => {
                for e in entries {
                    walk_assign(
                        e,
                        string_counts,
                        should_intern,
                        mf_counts,
                        strings,
                        string_idx,
                        mfs,
                        mf_idx,
                    );
                }
            }
        }
    }

    for section in &bundle.sections {
        for s in &section.results {
            let (uses, len) = string_counts[s.as_str()];
            if should_intern(uses, len) && !string_idx.contains_key(s.as_str()) {
                string_idx.insert(s.clone(), strings.len() as u32);
                strings.push(s.clone());
            }
        }
        walk_assign(
            &section.vo.root,
            &string_counts,
            &should_intern,
            &mf_counts,
            &mut strings,
            &mut string_idx,
            &mut mfs,
            &mut mf_idx,
        );
        let map: Vec<u32> = section
            .vo
            .rects
            .iter()
            .map(|r| {
                let key = rect_key(r);
                *rect_global.entry(key).or_insert_with(|| {
                    rects.push(r.clone());
                    (rects.len() - 1) as u32
                })
            })
            .collect();
        rect_maps.push(map);
    }

    InternPlan {
        strings,
        string_idx,
        mfs,
        mf_idx,
        rects,
        rect_maps,
    }
}

fn rect_key(r: &Hyperrect) -> Vec<u8> {
    let mut key = Vec::with_capacity(16 * r.dim());
    for &c in r.lo().iter().chain(r.hi()) {
        key.extend_from_slice(&c.to_be_bytes());
    }
    key
}

fn write_maybe_ref(
    w: &mut impl Write,
    s: &str,
    plan: &InternPlan,
) -> io::Result<()> {
    match plan.string_idx.get(s) {
        Some(&idx) => {
            w.write_all(&[1])?;
            wire::write_u32(w, idx)
        }
        None => {
            w.write_all(&[0])?;
            wire::write_string(w, s)
        }
    }
}

fn encode_entry(
    w: &mut impl Write,
    entry: &VoEntry,
    plan: &InternPlan,
    rect_map: &[u32],
    exempt: &HashMap<&str, (u32, bool)>,
) -> io::Result<()> {
    match entry {
        VoEntry::Str(s) => {
            let packed = exempt
                .get(s.as_str())
                .filter(|(pivot, _)| *pivot <= MAX_PIVOT)
                .map(|&(pivot, similar)| (pivot as u8) << 1 | u8::from(similar));
            match (plan.string_idx.get(s.as_str()), packed) {
                (Some(&idx), None) => {
                    w.write_all(&[TAG_STR_REF])?;
                    wire::write_u32(w, idx)
                }
                (None, None) => {
                    w.write_all(&[TAG_STR])?;
                    wire::write_string(w, s)
                }
                (Some(&idx), Some(info)) => {
                    w.write_all(&[TAG_STR_REF_EXEMPT])?;
                    wire::write_u32(w, idx)?;
                    w.write_all(&[info])
                }
                (None, Some(info)) => {
                    w.write_all(&[TAG_STR_EXEMPT])?;
                    wire::write_string(w, s)?;
                    w.write_all(&[info])
                }
            }
        }
        VoEntry::Mf { range, kids_digest } => {
            let key = (range.lo().to_string(), range.hi().to_string(), *kids_digest);
            match plan.mf_idx.get(&key) {
                Some(&idx) => {
                    w.write_all(&[TAG_MF_REF])?;
                    wire::write_u32(w, idx)
                }
                None => {
                    w.write_all(&[TAG_MF])?;
                    wire::write_string(w, range.lo())?;
                    wire::write_string(w, range.hi())?;
                    w.write_all(kids_digest)
                }
            }
        }
        VoEntry::DbhRef { s, rect } => {
            let global = rect_map[*rect as usize];
            match plan.string_idx.get(s.as_str()) {
                Some(&idx) => {
                    w.write_all(&[TAG_DBH_REF])?;
                    wire::write_u32(w, idx)?;
                    wire::write_u32(w, global)
                }
                None => {
                    w.write_all(&[TAG_DBH])?;
                    wire::write_string(w, s)?;
                    wire::write_u32(w, global)
                }
            }
        }
        VoEntry::Group(entries) => {
            w.write_all(&[TAG_GROUP_BEGIN])?;
            for e in entries {
                encode_entry(w, e, plan, rect_map, exempt)?;
            }
            w.write_all(&[TAG_GROUP_END])
        }
    }
}

impl SharedVoBundle {
    pub fn encode(&self, mut w: impl Write) -> io::Result<()> {
        let plan = plan_interning(self);
        w.write_all(&BUNDLE_MAGIC)?;
        w.write_all(&[match self.mode {
            VoMode::Vs2 => 0,
            VoMode::Evs2 => 1,
        }])?;
        wire::write_u32(&mut w, self.theta)?;
        wire::write_u32(&mut w, self.queries.len() as u32)?;
        for q in &self.queries {
            wire::write_string(&mut w, q)?;
        }
        wire::write_u32(&mut w, plan.strings.len() as u32)?;
        for s in &plan.strings {
            wire::write_string(&mut w, s)?;
        }
        wire::write_u32(&mut w, plan.mfs.len() as u32)?;
        for (lo, hi, digest) in &plan.mfs {
            wire::write_string(&mut w, lo)?;
            wire::write_string(&mut w, hi)?;
            w.write_all(digest)?;
        }
        wire::write_u32(&mut w, plan.rects.len() as u32)?;
        for rect in &plan.rects {
            wire::write_u32(&mut w, rect.dim() as u32)?;
            for &c in rect.lo() {
                wire::write_f64(&mut w, c)?;
            }
            for &c in rect.hi() {
                wire::write_f64(&mut w, c)?;
            }
        }
        for (section, rect_map) in self.sections.iter().zip(&plan.rect_maps) {
            wire::write_u32(&mut w, section.results.len() as u32)?;
            for s in &section.results {
                write_maybe_ref(&mut w, s, &plan)?;
            }
            let exempt: HashMap<&str, (u32, bool)> = section
                .exemptions
                .iter()
                .map(|e| (e.s.as_str(), (e.pivot, e.similar)))
                .collect();
            encode_entry(&mut w, &section.vo.root, &plan, rect_map, &exempt)?;
        }
        wire::write_u32(&mut w, self.signature.len() as u32)?;
        w.write_all(&self.signature)?;
        w.flush()
    }

    pub fn encode_to_vec(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.encode(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn decode(mut r: impl Read) -> Result<Self, BundleDecodeError> {
        let mut magic = [0u8; 4];
        wire::read_exact(&mut r, &mut magic, "magic")?;
        if magic != BUNDLE_MAGIC {
            return Err(BundleDecodeError::BadMagic);
        }
        let mode = match wire::read_u8(&mut r, "mode")? {
            0 => VoMode::Vs2,
            1 => VoMode::Evs2,
            other => return Err(BundleDecodeError::BadMode(other)),
        };
        let theta = wire::read_u32(&mut r, "theta")?;
        let n_queries = wire::read_u32(&mut r, "query count")?;
        let mut queries = Vec::new();
        for _ in 0..n_queries {
            queries.push(wire::read_string(&mut r, "query string")?);
        }
        let n_strings = wire::read_u32(&mut r, "shared string count")?;
        let mut strings = Vec::new();
        for _ in 0..n_strings {
            strings.push(wire::read_string(&mut r, "shared string")?);
        }
        let n_mfs = wire::read_u32(&mut r, "shared pruned-range count")?;
        let mut mfs: Vec<(StringRange, Digest32)> = Vec::new();
        for _ in 0..n_mfs {
            let lo = wire::read_string(&mut r, "shared range lo")?;
            let hi = wire::read_string(&mut r, "shared range hi")?;
            let mut digest = [0u8; 32];
            wire::read_exact(&mut r, &mut digest, "shared range digest")?;
            let range =
                StringRange::new(lo, hi).map_err(|_| BundleDecodeError::InvertedRange)?;
            mfs.push((range, digest));
        }
        let n_rects = wire::read_u32(&mut r, "shared box count")?;
        let mut rects = Vec::new();
        for _ in 0..n_rects {
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

        let mut sections = Vec::new();
        for _ in 0..n_queries {
            let n_results = wire::read_u32(&mut r, "result count")?;
            let mut results = Vec::new();
            for _ in 0..n_results {
                results.push(read_string_or_ref(&mut r, &strings)?);
            }
            let n_exempt = wire::read_u32(&mut r, "exemption count")?;
            let mut exemptions = Vec::new();
            for _ in 0..n_exempt {
                let s = read_string_or_ref(&mut r, &strings)?;
                let pivot = wire::read_u32(&mut r, "exemption pivot")?;
                let similar = match wire::read_u8(&mut r, "exemption side")? {
                    0 => false,
                    1 => true,
                    other => return Err(BundleDecodeError::BadSide(other)),
                };
                exemptions.push(Exemption { s, pivot, similar });
            }
            // Entry tree, remapping shared box indices to a per-section
            // first-use list.
            let mut local_rects: Vec<Hyperrect> = Vec::new();
            let mut local_of: HashMap<u32, u32> = HashMap::new();
            let tag = wire::read_u8(&mut r, "entry tag")?;
            let root = decode_entry(
                &mut r,
                tag,
                0,
                &strings,
                &mfs,
                &rects,
                &mut local_rects,
                &mut local_of,
            )?;
            sections.push(QuerySection {
                results,
                exemptions,
                vo: Vo {
                    root,
                    rects: local_rects,
                },
            });
        }
        let sig_len = wire::read_u32(&mut r, "signature length")?;
        if sig_len > MAX_SIGNATURE_LEN {
            return Err(BundleDecodeError::SignatureTooLong(sig_len));
        }
        let mut signature = vec![0u8; sig_len as usize];
        wire::read_exact(&mut r, &mut signature, "signature")?;
        if !wire::at_eof(&mut r)? {
            return Err(BundleDecodeError::TrailingBytes);
        }
        Ok(SharedVoBundle {
            mode,
            theta,
            queries,
            sections,
            signature,
        })
    }

    pub fn decode_from_slice(bytes: &[u8]) -> Result<Self, BundleDecodeError> {
        SharedVoBundle::decode(bytes)
    }

    pub fn save_to_path(&self, path: impl AsRef<Path>) -> io::Result<()> {
        self.encode(BufWriter::new(File::create(path)?))
    }

    pub fn load_from_path(path: impl AsRef<Path>) -> Result<Self, BundleDecodeError> {
        SharedVoBundle::decode(BufReader::new(File::open(path)?))
    }
}

fn lookup_string(strings: &[String], idx: u32) -> Result<String, BundleDecodeError> {
    strings
        .get(idx as usize)
        .cloned()
        .ok_or(BundleDecodeError::StringRefOutOfRange(idx))
}

fn read_string_or_ref(
    r: &mut impl Read,
    strings: &[String],
) -> Result<String, BundleDecodeError> {
    match wire::read_u8(r, "string kind")? {
        0 => Ok(wire::read_string(r, "inline string")?),
        1 => lookup_string(strings, wire::read_u32(r, "string reference")?),
        other => Err(BundleDecodeError::UnknownTag(other)),
    }
}

#[allow(clippy::too_many_arguments)]
fn decode_entry(
    r: &mut impl Read,
    tag: u8,
    depth: usize,
    strings: &[String],
    mfs: &[(StringRange, Digest32)],
    rects: &[Hyperrect],
    local_rects: &mut Vec<Hyperrect>,
    local_of: &mut HashMap<u32, u32>,
) -> Result<VoEntry, BundleDecodeError> {
    let mut localize = |global: u32| -> Result<u32, BundleDecodeError> {
        let rect = rects
            .get(global as usize)
            .ok_or(BundleDecodeError::RectRefOutOfRange(global))?;
        Ok(*local_of.entry(global).or_insert_with(|| {
            local_rects.push(rect.clone());
            (local_rects.len() - 1) as u32
        }))
    };
    match tag {
        TAG_STR => Ok(VoEntry::Str(wire::read_string(r, "string entry")?)),
        TAG_STR_REF => {
            let idx = wire::read_u32(r, "string reference")?;
            Ok(VoEntry::Str(lookup_string(strings, idx)?))
        }
        TAG_MF => {
            let lo = wire::read_string(r, "range lo")?;
            let hi = wire::read_string(r, "range hi")?;
            let mut kids_digest = [0u8; 32];
            wire::read_exact(r, &mut kids_digest, "children digest")?;
            let range =
                StringRange::new(lo, hi).map_err(|_| BundleDecodeError::InvertedRange)?;
            Ok(VoEntry::Mf { range, kids_digest })
        }
        TAG_MF_REF => {
            let idx = wire::read_u32(r, "pruned-range reference")?;
            let (range, digest) = mfs
                .get(idx as usize)
                .cloned()
                .ok_or(BundleDecodeError::MfRefOutOfRange(idx))?;
            Ok(VoEntry::Mf {
                range,
                kids_digest: digest,
            })
        }
        TAG_DBH => {
            let s = wire::read_string(r, "box-certified string")?;
            let rect = localize(wire::read_u32(r, "box index")?)?;
            Ok(VoEntry::DbhRef { s, rect })
        }
        TAG_DBH_REF => {
            let s = lookup_string(strings, wire::read_u32(r, "string reference")?)?;
            let rect = localize(wire::read_u32(r, "box index")?)?;
            Ok(VoEntry::DbhRef { s, rect })
        }
        TAG_GROUP_BEGIN => {
            if depth >= MAX_DEPTH {
                return Err(BundleDecodeError::DepthExceeded);
            }
            let mut entries = Vec::new();
            loop {
                let t = wire::read_u8(r, "entry tag")?;
                if t == TAG_GROUP_END {
                    break;
                }
                entries.push(decode_entry(
                    r,
                    t,
                    depth + 1,
                    strings,
                    mfs,
                    rects,
                    local_rects,
                    local_of,
                )?);
            }
            if entries.is_empty() {
                return Err(BundleDecodeError::EmptyGroup);
            }
            Ok(VoEntry::Group(entries))
        }
        TAG_GROUP_END => Err(BundleDecodeError::StrayGroupEnd),
        other => Err(BundleDecodeError::UnknownTag(other)),
    }
}

// ---------------------------------------------------------------------
// Verification
// ---------------------------------------------------------------------

struct NoEmbedder;

impl Embedder for NoEmbedder {
    fn dim(&self) -> usize {
        unreachable!("plain-mode sections never embed")
    }

    fn embed(&self, _: &str) -> EmbeddedPoint {
        unreachable!("plain-mode sections never embed")
    }
}

/// Verifies every section of a plain-mode bundle. Returns one report per
/// query, in order; a failed section never contributes pivot distances
/// to later ones.
pub fn verify_multi(
    mq: &MultiQuery,
    bundle: &SharedVoBundle,
    public_key: &PublicKey,
) -> Vec<VerificationReport> {
    verify_multi_impl(mq, bundle, None::<&NoEmbedder>, VoMode::Vs2, public_key)
}

/// Verifies every section of an embedding-assisted bundle.
pub fn verify_multi_e<F: Embedder + ?Sized>(
    mq: &MultiQuery,
    bundle: &SharedVoBundle,
    f: &F,
    public_key: &PublicKey,
) -> Vec<VerificationReport> {
    verify_multi_impl(mq, bundle, Some(f), VoMode::Evs2, public_key)
}

fn verify_multi_impl<F: Embedder + ?Sized>(
    mq: &MultiQuery,
    bundle: &SharedVoBundle,
    f: Option<&F>,
    expected_mode: VoMode,
    public_key: &PublicKey,
) -> Vec<VerificationReport> {
    let context_ok = bundle.mode == expected_mode
        && bundle.theta == mq.theta
        && bundle.queries == mq.strings
        && bundle.sections.len() == mq.strings.len();
    if !context_ok {
        return mq
            .strings
            .iter()
            .map(|_| {
                VerificationReport::fail(
                    FailedStep::Step1,
                    Diagnosis::Tampered,
                    Counters::default(),
                )
            })
            .collect();
    }

    let mut reports = Vec::new();
    // Distance maps the client established per query. An edit distance
    // the client computed itself is a fact about two strings in hand, so
    // it stays citable even when the section that prompted it later
    // failed; only distances never computed are off limits.
    let mut recorded: Vec<HashMap<String, u32>> = Vec::new();
    for (i, section) in bundle.sections.iter().enumerate() {
        let (report, rec) = verify_section(mq, bundle, i, section, f, &recorded, public_key);
        recorded.push(rec);
        reports.push(report);
    }
    reports
}

#[allow(clippy::too_many_arguments)]
fn verify_section<F: Embedder + ?Sized>(
    mq: &MultiQuery,
    bundle: &SharedVoBundle,
    index: usize,
    section: &QuerySection,
    f: Option<&F>,
    recorded: &[HashMap<String, u32>],
    public_key: &PublicKey,
) -> (VerificationReport, HashMap<String, u32>) {
    let mut counters = Counters::default();
    let mut rec = HashMap::new();
    let outcome = verify_section_inner(
        mq,
        bundle,
        index,
        section,
        f,
        recorded,
        public_key,
        &mut counters,
        &mut rec,
    );
    let report = match outcome {
        Ok(()) => VerificationReport::pass(counters),
        Err((step, diagnosis)) => VerificationReport::fail(step, diagnosis, counters),
    };
    (report, rec)
}

#[allow(clippy::too_many_arguments)]
fn verify_section_inner<F: Embedder + ?Sized>(
    mq: &MultiQuery,
    bundle: &SharedVoBundle,
    index: usize,
    section: &QuerySection,
    f: Option<&F>,
    recorded: &[HashMap<String, u32>],
    public_key: &PublicKey,
    counters: &mut Counters,
    rec: &mut HashMap<String, u32>,
) -> Result<(), (FailedStep, Diagnosis)> {
    let qi = &mq.strings[index];
    let theta = mq.theta;

    let flat = vs2::verify_steps_1_2(
        &section.results,
        &section.vo,
        public_key,
        &bundle.signature,
        f.is_some(),
        counters,
    )?;

    // Exemptions must reference strings actually disclosed here, at most
    // once each.
    let disclosed: HashSet<&str> = flat
        .iter()
        .filter_map(|e| match e {
            FlatEntry::Str(s) => Some(*s),
            _ => None,
        })
        .collect();
    let mut exempt: HashMap<&str, &Exemption> = HashMap::new();
    for e in &section.exemptions {
        if !disclosed.contains(e.s.as_str()) || exempt.insert(e.s.as_str(), e).is_some() {
            return Err((FailedStep::Step1, Diagnosis::Tampered));
        }
    }

    // An exemption's pivot distance must be one this client computed
    // while verifying an earlier query; the query-to-query distance is
    // always recomputed locally.
    let check_exemption = |e: &Exemption, counters: &mut Counters| -> Result<(), Diagnosis> {
        let Some(prior) = recorded.get(e.pivot as usize) else {
            return Err(Diagnosis::Tampered);
        };
        let Some(&d_sj) = prior.get(&e.s) else {
            return Err(Diagnosis::Tampered);
        };
        counters.edit_strings += 1;
        let d_ij = metrics::edit_distance(qi, &mq.strings[e.pivot as usize]);
        let proves = if e.similar {
            u64::from(d_sj) + u64::from(d_ij) <= u64::from(theta)
        } else {
            u64::from(d_sj) > u64::from(d_ij) + u64::from(theta)
        };
        if proves {
            Ok(())
        } else {
            Err(Diagnosis::Tampered)
        }
    };

    // Step 3a: returned strings — exempt ones must carry a valid
    // "provably similar" exemption, the rest get the edit distance.
    for s in &section.results {
        match exempt.get(s.as_str()) {
            Some(e) if e.similar => {
                check_exemption(e, counters).map_err(|d| (FailedStep::Step3, d))?;
            }
            Some(_) => {
                // The server's own exemption proves this result is
                // dissimilar.
                return Err((FailedStep::Step3, Diagnosis::DissimilarReturned));
            }
            None => {
                counters.edit_strings += 1;
                let d = metrics::edit_distance(qi, s);
                if d > theta {
                    return Err((FailedStep::Step3, Diagnosis::DissimilarReturned));
                }
                rec.insert(s.clone(), d);
            }
        }
    }

    // Step 3b: disclosed non-results — a "provably similar" exemption
    // here means a similar string was withheld.
    let result_set: HashSet<&str> = section.results.iter().map(String::as_str).collect();
    for entry in &flat {
        if let FlatEntry::Str(s) = entry {
            if result_set.contains(s) {
                continue;
            }
            match exempt.get(s) {
                Some(e) if !e.similar => {
                    check_exemption(e, counters).map_err(|d| (FailedStep::Step3, d))?;
                }
                Some(e) => {
                    // A valid "provably similar" exemption on a string
                    // that was not returned means a similar string was
                    // withheld; an invalid one is just a bad proof.
                    let diagnosis = match check_exemption(e, counters) {
                        Ok(()) => Diagnosis::SimilarMissing,
                        Err(d) => d,
                    };
                    return Err((FailedStep::Step3, diagnosis));
                }
                None => {
                    counters.edit_strings += 1;
                    let d = metrics::edit_distance(qi, s);
                    if d <= theta {
                        return Err((FailedStep::Step3, Diagnosis::SimilarMissing));
                    }
                    rec.insert(s.to_string(), d);
                }
            }
        }
    }

    // Step 3c: every pruned range really prunes.
    for entry in &flat {
        if let FlatEntry::Mf(range, _) = entry {
            counters.mf_bounds += 1;
            if metrics::dst_min(qi, range) <= theta {
                return Err((FailedStep::Step3, Diagnosis::CandidateClaimedNc));
            }
        }
    }

    // Step 4 for embedding-assisted sections.
    if let Some(f) = f {
        crate::evs2::verify_step4(
            qi,
            theta,
            &section.results,
            &flat,
            &section.vo.rects,
            f,
            counters,
        )?;
    }

    Ok(())
}
