//! Embedding-assisted search proofs: same results as the plain protocol,
//! cheaper verification.
//!
//! The expensive part of verifying a plain proof is the edit distance to
//! every disclosed false hit. Here the server first maps strings into a
//! contractive Euclidean space; false hits whose embedded point is
//! provably far from the query's point are certified by membership in a
//! *dissimilarity box* — an axis-aligned region the client can check with
//! one coordinate comparison per axis — instead of an edit-distance
//! computation. Because the embedding is contractive, a far point implies
//! a far string, so soundness is preserved; the client recomputes every
//! embedded point itself and never trusts server-supplied coordinates.

use std::collections::{HashMap, HashSet};

use crate::dbh::{self, Hyperrect};
use crate::embedding::{euclid, Embedder, EmbeddedPoint};
use crate::mbtree::MbTree;
use crate::metrics;
use crate::report::{Counters, Diagnosis, FailedStep, VerificationReport};
use crate::sign::PublicKey;
use crate::vo::{flatten, FlatEntry, Vo, VoEntry};
use crate::vs2::{self, Query};

/// Splits the false hits of a plain traversal by their embedded
/// distance: within `theta` of the query's point (`FP`, still needs an
/// edit distance at verification) or beyond it (`DS`, certifiable by a
/// dissimilarity box).
pub fn classify_cstrings<F: Embedder + ?Sized>(
    f: &F,
    query: &Query,
    c_strings: &[String],
) -> (Vec<String>, Vec<String>) {
    let pq = f.embed(&query.q);
    let theta = query.theta as f64;
    let mut fp = Vec::new();
    let mut ds = Vec::new();
    for s in c_strings {
        if euclid(&pq, &f.embed(s)) <= theta {
            fp.push(s.clone());
        } else {
            ds.push(s.clone());
        }
    }
    (fp, ds)
}

/// Number of axes along which the points actually differ.
fn varying_axes(points: &[EmbeddedPoint]) -> usize {
    let dim = points.first().map_or(0, Vec::len);
    (0..dim)
        .filter(|&axis| {
            let first = points[0][axis];
            points.iter().any(|p| p[axis] != first)
        })
        .count()
}

/// Rewrites the strings named in `assign` into box references, leaving
/// everything else (including the bracket structure) untouched.
pub(crate) fn relabel(entry: VoEntry, assign: &HashMap<String, u32>) -> VoEntry {
    match entry {
        VoEntry::Str(s) => match assign.get(&s) {
            Some(&rect) => VoEntry::DbhRef { s, rect },
            None => VoEntry::Str(s),
        },
        VoEntry::Group(entries) => {
            VoEntry::Group(entries.into_iter().map(|e| relabel(e, assign)).collect())
        }
        other => other,
    }
}

/// Partitions far points into dissimilarity boxes. The straight-line
/// splitter is only sound when the line is axis aligned (a box around a
/// slanted faraway line can still reach the query's point), so it handles
/// exactly the degenerate-spread cases and the general greedy partitioner
/// takes everything else.
pub(crate) fn partition_far_points(
    pq: &EmbeddedPoint,
    points: &[EmbeddedPoint],
    theta: f64,
) -> Vec<Hyperrect> {
    if varying_axes(points) <= 1 {
        dbh::collinear_partition(pq, points, theta)
    } else {
        dbh::partition(pq, points, theta)
    }
    .expect("far points are valid partition input")
}

/// Runs the plain traversal, classifies its false hits, partitions the
/// far ones' points into dissimilarity boxes, and rewrites each far
/// string's entry into a box reference — preserving the bracket
/// structure, so digests and ordering are unchanged.
pub fn build_vo_e<F: Embedder + ?Sized>(
    tree: &MbTree,
    f: &F,
    query: &Query,
) -> (Vec<String>, Vo) {
    let (results, base) = vs2::build_vo(tree, query);
    let result_set: HashSet<&str> = results.iter().map(String::as_str).collect();
    let c_strings: Vec<String> = flatten(&base.root)
        .iter()
        .filter_map(|e| match e {
            FlatEntry::Str(s) if !result_set.contains(s) => Some(s.to_string()),
            _ => None,
        })
        .collect();
    let (_fp, ds) = classify_cstrings(f, query, &c_strings);
    if ds.is_empty() {
        return (results, base);
    }

    let pq = f.embed(&query.q);
    let theta = query.theta as f64;
    let points: Vec<EmbeddedPoint> = ds.iter().map(|s| f.embed(s)).collect();
    let rects = partition_far_points(&pq, &points, theta);

    let assign: HashMap<String, u32> = ds
        .into_iter()
        .zip(&points)
        .map(|(s, p)| {
            let idx = rects
                .iter()
                .position(|r| r.contains(p))
                .expect("partition covers every far point");
            (s, idx as u32)
        })
        .collect();
    let root = relabel(base.root, &assign);
    (results, Vo { root, rects })
}

/// Four-step client verification of an embedding-assisted proof. Steps
/// 1–3 mirror the plain protocol (box-referenced strings participate in
/// ordering and digests exactly like disclosed strings, and are skipped
/// by the edit-distance scans). Step 4 re-derives every referenced point
/// with the client's own embedder and checks (a) each referenced string's
/// point lies in its claimed box, (b) every box keeps scaled distance
/// greater than `theta` from the query's point, and (c) no returned
/// string's point falls inside any box — (c) can only fire when the
/// server's boxes and the client's embedder disagree about the space,
/// which is exactly the mismatch it exists to expose.
pub fn verify_e<F: Embedder + ?Sized>(
    query: &Query,
    results: &[String],
    vo: &Vo,
    f: &F,
    public_key: &PublicKey,
    root_signature: &[u8],
) -> VerificationReport {
    let mut counters = Counters::default();
    let flat = match vs2::verify_steps_1_2(
        results,
        vo,
        public_key,
        root_signature,
        true,
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

    // Step 3b: completeness — every near false hit is dissimilar.
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

    if let Err((step, diagnosis)) = verify_step4(
        &query.q,
        query.theta,
        results,
        &flat,
        &vo.rects,
        f,
        &mut counters,
    ) {
        return VerificationReport::fail(step, diagnosis, counters);
    }

    VerificationReport::pass(counters)
}

/// The embedding-space checks shared by every verifier that accepts box
/// references. Boxes must first live in the client's space at all; then
/// (a) each referenced string's recomputed point must sit in the box it
/// claims, (b) every box must be provably far from the query's point, and
/// (c) no returned string's point may hide inside a box.
pub(crate) fn verify_step4<F: Embedder + ?Sized>(
    q: &str,
    theta: u32,
    results: &[String],
    flat: &[FlatEntry<'_>],
    rects: &[Hyperrect],
    f: &F,
    counters: &mut Counters,
) -> Result<(), (FailedStep, Diagnosis)> {
    for rect in rects {
        if rect.dim() != f.dim() {
            return Err((FailedStep::Step4, Diagnosis::Tampered));
        }
    }

    for entry in flat {
        if let FlatEntry::DbhRef(s, idx) = entry {
            counters.embed_calls += 1;
            let p = f.embed(s);
            let inside = rects
                .get(*idx as usize)
                .is_some_and(|rect| rect.contains(&p));
            if !inside {
                return Err((FailedStep::Step4, Diagnosis::PointNotInClaimedDbh));
            }
        }
    }

    if !rects.is_empty() {
        counters.embed_calls += 1;
        let pq = f.embed(q);
        let theta = theta as f64;

        for rect in rects {
            counters.euclid_rects += 1;
            if dbh::dst_min_rect(&pq, rect) <= theta {
                return Err((FailedStep::Step4, Diagnosis::DbhNotDistant));
            }
        }

        for s in results {
            counters.embed_calls += 1;
            let ps = f.embed(s);
            if rects.iter().any(|rect| rect.contains(&ps)) {
                return Err((FailedStep::Step4, Diagnosis::SimilarInsideDbh));
            }
        }
    }

    Ok(())
}
