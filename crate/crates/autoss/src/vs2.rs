//! Single-query similarity search over a signed tree, proof construction
//! on the server, and three-step client verification.
//!
//! The server answers `(q, θ)` by descending only into *candidate* nodes —
//! those whose range lower bound does not rule out a match — and returns
//! the similar strings together with a proof that mirrors the traversal:
//! disclosed strings for every visited leaf entry and a range/digest pair
//! for every maximal pruned subtree. The client replays the pruning
//! arithmetic on the proof alone and checks it against the owner's root
//! signature, so a lying server is caught without access to the corpus.

use std::collections::HashSet;

use crate::hashing::{self, Digest32};
use crate::mbtree::{MbTree, NodeEntries};
use crate::metrics;
use crate::report::{Counters, Diagnosis, FailedStep, VerificationReport};
use crate::sign::PublicKey;
use crate::vo::{flatten, FlatEntry, Vo, VoEntry};

/// A similarity query: find every corpus string within edit distance
/// `theta` of `q`. The tie `DST = theta` counts as similar.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub q: String,
    pub theta: u32,
}

impl Query {
    pub fn new(q: impl Into<String>, theta: u32) -> Self {
        Query {
            q: q.into(),
            theta,
        }
    }
}

fn is_candidate(tree: &MbTree, id: usize, query: &Query) -> bool {
    metrics::dst_min(&query.q, &tree.node_range(id)) <= query.theta
}

/// Answers the query by pruned traversal: subtrees whose range lower
/// bound exceeds `theta` are skipped outright, candidate leaves are
/// scanned exactly. Results come back in dictionary order.
pub fn search(tree: &MbTree, query: &Query) -> Vec<String> {
    fn collect(tree: &MbTree, id: usize, query: &Query, out: &mut Vec<String>) {
        if !is_candidate(tree, id, query) {
            return;
        }
        match tree.node(id).entries() {
            NodeEntries::Leaf(ids) => {
                for &sid in ids {
                    let s = tree.string(sid);
                    if metrics::edit_distance(&query.q, s) <= query.theta {
                        out.push(s.to_string());
                    }
                }
            }
            NodeEntries::Internal(kids) => {
                for &kid in kids {
                    collect(tree, kid as usize, query, out);
                }
            }
        }
    }
    let mut out = Vec::new();
    collect(tree, tree.root_id(), query, &mut out);
    out
}

fn mf_entry(tree: &MbTree, id: usize) -> VoEntry {
    VoEntry::Mf {
        range: tree.node_range(id),
        kids_digest: tree.node_children_digest(id),
    }
}

fn candidate_entry(tree: &MbTree, id: usize, query: &Query) -> VoEntry {
    match tree.node(id).entries() {
        NodeEntries::Leaf(ids) => VoEntry::Group(
            ids.iter()
                .map(|&sid| VoEntry::Str(tree.string(sid).to_string()))
                .collect(),
        ),
        NodeEntries::Internal(kids) => VoEntry::Group(
            kids.iter()
                .map(|&kid| {
                    let kid = kid as usize;
                    if is_candidate(tree, kid, query) {
                        candidate_entry(tree, kid, query)
                    } else {
                        mf_entry(tree, kid)
                    }
                })
                .collect(),
        ),
    }
}

/// Runs the search and builds the matching proof: per node, a pruned
/// subtree becomes one range/digest entry (maximal: its parent is a
/// candidate), a candidate internal node becomes the bracket of its
/// children's entries, and a candidate leaf discloses its strings.
pub fn build_vo(tree: &MbTree, query: &Query) -> (Vec<String>, Vo) {
    let results = search(tree, query);
    let root_id = tree.root_id();
    let root = if is_candidate(tree, root_id, query) {
        candidate_entry(tree, root_id, query)
    } else {
        mf_entry(tree, root_id)
    };
    (
        results,
        Vo {
            root,
            rects: Vec::new(),
        },
    )
}

fn contains_empty_group(entry: &VoEntry) -> bool {
    match entry {
        VoEntry::Group(entries) => {
            entries.is_empty() || entries.iter().any(contains_empty_group)
        }
        _ => false,
    }
}

/// Inclusive dictionary-order bounds of one flattened proof entry.
fn entry_bounds<'a>(entry: &FlatEntry<'a>) -> (&'a str, &'a str) {
    match entry {
        FlatEntry::Str(s) => (s, s),
        FlatEntry::Mf(range, _) => (range.lo(), range.hi()),
        FlatEntry::DbhRef(s, _) => (s, s),
    }
}

fn intervals_intersect(a: (&str, &str), b: (&str, &str)) -> bool {
    metrics::compare(a.0, b.1).is_le() && metrics::compare(b.0, a.1).is_le()
}

/// Steps 1 and 2, shared by every verification flavor.
///
/// Step 1 flattens the proof and checks structural soundness: strict
/// global dictionary order, no overlap between pruned ranges and anything
/// else, and every claimed result disclosed somewhere outside the pruned
/// ranges. Step 2 recomputes the root digest bottom-up and checks the
/// owner's signature. On success the flattened entries are returned for
/// the caller's distance scans; structural counts are recorded either way.
pub(crate) fn verify_steps_1_2<'a>(
    results: &[String],
    vo: &'a Vo,
    public_key: &PublicKey,
    root_signature: &[u8],
    allow_dbh: bool,
    counters: &mut Counters,
) -> Result<Vec<FlatEntry<'a>>, (FailedStep, Diagnosis)> {
    counters.vo_bytes = vo.encode_to_vec().len() as u64;
    counters.n_r = results.len() as u64;
    counters.n_dbh = vo.rects.len() as u64;

    if contains_empty_group(&vo.root) {
        return Err((FailedStep::Step1, Diagnosis::Tampered));
    }
    let flat = flatten(&vo.root);

    let mut disclosed: HashSet<&str> = HashSet::new();
    for entry in &flat {
        match entry {
            FlatEntry::Str(s) => {
                disclosed.insert(s);
            }
            FlatEntry::DbhRef(s, _) => {
                if !allow_dbh {
                    return Err((FailedStep::Step1, Diagnosis::Tampered));
                }
                disclosed.insert(s);
                counters.n_ds += 1;
            }
            FlatEntry::Mf(..) => counters.n_mf += 1,
        }
    }
    if !allow_dbh && !vo.rects.is_empty() {
        return Err((FailedStep::Step1, Diagnosis::Tampered));
    }

    let result_set: HashSet<&str> = results.iter().map(String::as_str).collect();
    let str_not_in_r = flat
        .iter()
        .filter(|e| matches!(e, FlatEntry::Str(s) if !result_set.contains(s)))
        .count() as u64;
    if allow_dbh {
        counters.n_f = str_not_in_r;
    } else {
        counters.n_c = str_not_in_r;
    }

    // Strict global order. Because entries are intervals on a line, a
    // strictly increasing adjacent sequence is globally disjoint, so any
    // violation shows up at some adjacent pair: an actual intersection
    // involving a pruned range is an overlap, anything else is tampering.
    for pair in flat.windows(2) {
        let a = entry_bounds(&pair[0]);
        let b = entry_bounds(&pair[1]);
        if metrics::compare(a.1, b.0).is_lt() {
            continue;
        }
        let range_involved =
            matches!(pair[0], FlatEntry::Mf(..)) || matches!(pair[1], FlatEntry::Mf(..));
        if range_involved && intervals_intersect(a, b) {
            return Err((FailedStep::Step1, Diagnosis::OverlapRange));
        }
        return Err((FailedStep::Step1, Diagnosis::Tampered));
    }

    // Every claimed result must be disclosed. A result swallowed by a
    // pruned range is the characteristic soundness lie; anything else
    // missing is generic tampering (e.g. a fabricated string).
    let mut seen: HashSet<&str> = HashSet::new();
    for s in results {
        if !seen.insert(s) {
            return Err((FailedStep::Step1, Diagnosis::Tampered));
        }
        if disclosed.contains(s.as_str()) {
            continue;
        }
        let in_pruned_range = flat
            .iter()
            .any(|e| matches!(e, FlatEntry::Mf(range, _) if range.contains(s)));
        let diagnosis = if in_pruned_range {
            Diagnosis::StringInNcRange
        } else {
            Diagnosis::Tampered
        };
        return Err((FailedStep::Step1, diagnosis));
    }

    // Step 2: recompute the root digest from the proof alone.
    let digest = entry_digest(&vo.root).0;
    if !public_key.verify(&digest, root_signature) {
        return Err((FailedStep::Step2, Diagnosis::SignatureMismatch));
    }

    Ok(flat)
}

/// Recomputes an entry's digest plus the range bounds it spans, exactly
/// mirroring the owner's tree hashing: strings hash as themselves, pruned
/// entries as a node over their claimed range and children digest, and
/// brackets as a node over their children.
pub(crate) fn entry_digest(entry: &VoEntry) -> (Digest32, &str, &str) {
    match entry {
        VoEntry::Str(s) => (hashing::string_hash(s), s, s),
        VoEntry::DbhRef { s, .. } => (hashing::string_hash(s), s, s),
        VoEntry::Mf { range, kids_digest } => (
            hashing::node_digest(range.lo(), range.hi(), kids_digest),
            range.lo(),
            range.hi(),
        ),
        VoEntry::Group(entries) => {
            let parts: Vec<(Digest32, &str, &str)> =
                entries.iter().map(entry_digest).collect();
            let digests: Vec<Digest32> = parts.iter().map(|(d, _, _)| *d).collect();
            let kids = hashing::children_digest(&digests);
            let lo = parts.first().expect("groups are non-empty").1;
            let hi = parts.last().expect("groups are non-empty").2;
            (hashing::node_digest(lo, hi, &kids), lo, hi)
        }
    }
}

/// Three-step client verification of `(results, vo)` against the owner's
/// signature. The client needs only the query, the public key, and the
/// shared hashing/ordering/bound conventions — never the corpus.
pub fn verify(
    query: &Query,
    results: &[String],
    vo: &Vo,
    public_key: &PublicKey,
    root_signature: &[u8],
) -> VerificationReport {
    let mut counters = Counters::default();
    let flat = match verify_steps_1_2(
        results,
        vo,
        public_key,
        root_signature,
        false,
        &mut counters,
    ) {
        Ok(flat) => flat,
        Err((step, diagnosis)) => return VerificationReport::fail(step, diagnosis, counters),
    };

    // Step 3a: soundness — every returned string really is similar.
    for s in results {
        counters.edit_strings += 1;
        if metrics::edit_distance(&query.q, s) > query.theta {
            return VerificationReport::fail(
                FailedStep::Step3,
                Diagnosis::DissimilarReturned,
                counters,
            );
        }
    }

    // Step 3b: completeness — every disclosed non-result is dissimilar.
    let result_set: HashSet<&str> = results.iter().map(String::as_str).collect();
    for entry in &flat {
        if let FlatEntry::Str(s) = entry {
            if result_set.contains(s) {
                continue;
            }
            counters.edit_strings += 1;
            if metrics::edit_distance(&query.q, s) <= query.theta {
                return VerificationReport::fail(
                    FailedStep::Step3,
                    Diagnosis::SimilarMissing,
                    counters,
                );
            }
        }
    }

    // Step 3c: completeness — every pruned range really prunes.
    for entry in &flat {
        if let FlatEntry::Mf(range, _) = entry {
            counters.mf_bounds += 1;
            if metrics::dst_min(&query.q, range) <= query.theta {
                return VerificationReport::fail(
                    FailedStep::Step3,
                    Diagnosis::CandidateClaimedNc,
                    counters,
                );
            }
        }
    }

    VerificationReport::pass(counters)
}
