//! Ranked ("top-k") similarity queries with verifiable results.
//!
//! The server returns the k closest strings within `theta`, ranked by
//! edit distance with dictionary-order tie-breaks. When fewer than k
//! strings qualify, the response is an ordinary threshold proof and the
//! client checks it as such, plus the ranking. When more qualify, the
//! server proves the stronger claim at the *effective threshold* — the
//! distance of the k-th result: every non-returned string must then
//! prove a distance at least that large. Strings tied with the k-th
//! result are legal non-returns, so the tightened scans use strict
//! comparisons against the recomputed k-th distance.
//!
//! The client never trusts a mode flag: a response with exactly k
//! results is held to the effective-threshold rules, a shorter one to
//! the plain-threshold rules, and anything longer is rejected. An honest
//! plain-threshold response that happens to contain exactly k results
//! also satisfies the effective-threshold rules, so the inference never
//! misjudges an honest server.

use std::collections::HashSet;

use crate::dbh;
use crate::embedding::Embedder;
use crate::mbtree::MbTree;
use crate::metrics;
use crate::report::{Counters, Diagnosis, FailedStep, VerificationReport};
use crate::sign::PublicKey;
use crate::vo::{FlatEntry, Vo};
use crate::vs2::{self, Query};

use thiserror::Error;

/// A ranked query: the `k` closest strings within `theta` of `q`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopKQuery {
    pub q: String,
    pub k: u32,
    pub theta: u32,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TopKError {
    #[error("k must be at least 1")]
    ZeroK,
}

impl TopKQuery {
    pub fn new(q: impl Into<String>, k: u32, theta: u32) -> Result<Self, TopKError> {
        if k == 0 {
            return Err(TopKError::ZeroK);
        }
        Ok(TopKQuery {
            q: q.into(),
            k,
            theta,
        })
    }

    fn threshold_query(&self, theta: u32) -> Query {
        Query::new(self.q.clone(), theta)
    }
}

/// Answers the ranked query. Returns the results sorted by edit distance
/// (ascending, ties in dictionary order) truncated to k, plus the total
/// number of strings within `theta`.
pub fn topk_search(tree: &MbTree, tq: &TopKQuery) -> (Vec<String>, usize) {
    let similar = vs2::search(tree, &tq.threshold_query(tq.theta));
    let c = similar.len();
    let mut ranked: Vec<(u32, String)> = similar
        .into_iter()
        .map(|s| (metrics::edit_distance(&tq.q, &s), s))
        .collect();
    ranked.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| metrics::compare(&a.1, &b.1)));
    ranked.truncate(tq.k as usize);
    (ranked.into_iter().map(|(_, s)| s).collect(), c)
}

/// Effective threshold for the proof: the query threshold when every
/// similar string is returned, otherwise the k-th result's distance.
fn effective_theta(tq: &TopKQuery, ranked: &[String], c: usize) -> u32 {
    if c > tq.k as usize {
        metrics::edit_distance(&tq.q, ranked.last().expect("k >= 1 and c > k"))
    } else {
        tq.theta
    }
}

/// Ranked results plus a plain proof at the effective threshold.
pub fn topk_build_vo(tree: &MbTree, tq: &TopKQuery) -> (Vec<String>, Vo) {
    let (ranked, c) = topk_search(tree, tq);
    let theta = effective_theta(tq, &ranked, c);
    let (_, vo) = vs2::build_vo(tree, &tq.threshold_query(theta));
    (ranked, vo)
}

/// Ranked results plus an embedding-assisted proof at the effective
/// threshold.
pub fn topk_build_vo_e<F: Embedder + ?Sized>(
    tree: &MbTree,
    f: &F,
    tq: &TopKQuery,
) -> (Vec<String>, Vo) {
    let (ranked, c) = topk_search(tree, tq);
    let theta = effective_theta(tq, &ranked, c);
    let (_, vo) = crate::evs2::build_vo_e(tree, f, &tq.threshold_query(theta));
    (ranked, vo)
}

/// Distance scans shared by both ranked verifiers: soundness and ranking
/// of the returned strings, then the completeness bound the non-returned
/// side must clear. Returns the bound and whether it is strict.
fn ranked_result_scans(
    tq: &TopKQuery,
    results: &[String],
    counters: &mut Counters,
) -> Result<(bool, u32), (FailedStep, Diagnosis)> {
    if results.len() > tq.k as usize {
        return Err((FailedStep::Step3, Diagnosis::Tampered));
    }

    let mut dists = Vec::with_capacity(results.len());
    for s in results {
        counters.edit_strings += 1;
        let d = metrics::edit_distance(&tq.q, s);
        if d > tq.theta {
            return Err((FailedStep::Step3, Diagnosis::DissimilarReturned));
        }
        dists.push(d);
    }

    for i in 1..results.len() {
        let by_distance = dists[i - 1].cmp(&dists[i]);
        let in_rank_order = by_distance
            .then_with(|| metrics::compare(&results[i - 1], &results[i]))
            .is_lt();
        if !in_rank_order {
            return Err((FailedStep::Step3, Diagnosis::RankOrderViolation));
        }
    }

    // Exactly k results claim "these are the k closest": everything else
    // must prove a distance of at least the k-th (strict scan, ties are
    // legal non-returns). Fewer than k claim "these are all": ordinary
    // threshold completeness (non-strict scan at theta).
    Ok(if results.len() == tq.k as usize {
        (true, *dists.last().expect("k >= 1"))
    } else {
        (false, tq.theta)
    })
}

fn completeness_violated(strict: bool, bound: u32, d: u32) -> bool {
    if strict {
        d < bound
    } else {
        d <= bound
    }
}

/// Verifies a plain ranked response.
pub fn topk_verify(
    tq: &TopKQuery,
    results: &[String],
    vo: &Vo,
    public_key: &PublicKey,
    root_signature: &[u8],
) -> VerificationReport {
    let mut counters = Counters::default();
    let flat = match vs2::verify_steps_1_2(
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

    let (strict, bound) = match ranked_result_scans(tq, results, &mut counters) {
        Ok(mode) => mode,
        Err((step, diagnosis)) => return VerificationReport::fail(step, diagnosis, counters),
    };

    let result_set: HashSet<&str> = results.iter().map(String::as_str).collect();
    for entry in &flat {
        if let FlatEntry::Str(s) = entry {
            if result_set.contains(s) {
                continue;
            }
            counters.edit_strings += 1;
            if completeness_violated(strict, bound, metrics::edit_distance(&tq.q, s)) {
                return VerificationReport::fail(
                    FailedStep::Step3,
                    Diagnosis::SimilarMissing,
                    counters,
                );
            }
        }
    }

    for entry in &flat {
        if let FlatEntry::Mf(range, _) = entry {
            counters.mf_bounds += 1;
            if completeness_violated(strict, bound, metrics::dst_min(&tq.q, range)) {
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

/// Verifies an embedding-assisted ranked response.
pub fn topk_verify_e<F: Embedder + ?Sized>(
    tq: &TopKQuery,
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

    let (strict, bound) = match ranked_result_scans(tq, results, &mut counters) {
        Ok(mode) => mode,
        Err((step, diagnosis)) => return VerificationReport::fail(step, diagnosis, counters),
    };

    let result_set: HashSet<&str> = results.iter().map(String::as_str).collect();
    for entry in &flat {
        if let FlatEntry::Str(s) = entry {
            if result_set.contains(s) {
                continue;
            }
            counters.edit_strings += 1;
            if completeness_violated(strict, bound, metrics::edit_distance(&tq.q, s)) {
                return VerificationReport::fail(
                    FailedStep::Step3,
                    Diagnosis::SimilarMissing,
                    counters,
                );
            }
        }
    }

    for entry in &flat {
        if let FlatEntry::Mf(range, _) = entry {
            counters.mf_bounds += 1;
            if completeness_violated(strict, bound, metrics::dst_min(&tq.q, range)) {
                return VerificationReport::fail(
                    FailedStep::Step3,
                    Diagnosis::CandidateClaimedNc,
                    counters,
                );
            }
        }
    }

    // Step 4, as in single-query embedded verification, with the box
    // distance bound tightened the same way as the other completeness
    // scans.
    for rect in &vo.rects {
        if rect.dim() != f.dim() {
            return VerificationReport::fail(FailedStep::Step4, Diagnosis::Tampered, counters);
        }
    }

    for entry in &flat {
        if let FlatEntry::DbhRef(s, idx) = entry {
            counters.embed_calls += 1;
            let p = f.embed(s);
            let inside = vo
                .rects
                .get(*idx as usize)
                .is_some_and(|rect| rect.contains(&p));
            if !inside {
                return VerificationReport::fail(
                    FailedStep::Step4,
                    Diagnosis::PointNotInClaimedDbh,
                    counters,
                );
            }
        }
    }

    if !vo.rects.is_empty() {
        counters.embed_calls += 1;
        let pq = f.embed(&tq.q);

        for rect in &vo.rects {
            counters.euclid_rects += 1;
            let dm = dbh::dst_min_rect(&pq, rect);
            let violated = if strict {
                dm < bound as f64
            } else {
                dm <= bound as f64
            };
            if violated {
                return VerificationReport::fail(
                    FailedStep::Step4,
                    Diagnosis::DbhNotDistant,
                    counters,
                );
            }
        }

        for s in results {
            counters.embed_calls += 1;
            let ps = f.embed(s);
            if vo.rects.iter().any(|rect| rect.contains(&ps)) {
                return VerificationReport::fail(
                    FailedStep::Step4,
                    Diagnosis::SimilarInsideDbh,
                    counters,
                );
            }
        }
    }

    VerificationReport::pass(counters)
}

#[cfg(test)]
mod tests {
    use super::*;

    use rand::{Rng as _, SeedableRng as _};
    use rand_chacha::ChaCha20Rng;

    use crate::embedding::EmbeddingFunction;
    use crate::sign::{DebugSigner, SignatureProvider as _};
    use crate::testfix::{example_query, example_tree, random_corpus, random_word};

    #[test]
    fn zero_k_is_rejected() {
        assert_eq!(TopKQuery::new("q", 0, 1), Err(TopKError::ZeroK));
    }

    #[test]
    fn k_beyond_count_returns_all_ranked() {
        let tree = example_tree();
        let tq = TopKQuery::new("mmmm", 5, 2).unwrap();
        let (ranked, c) = topk_search(&tree, &tq);
        assert_eq!(c, 3);
        // Distance 0 first, then the two distance-2 ties in dictionary
        // order.
        assert_eq!(ranked, vec!["mmmm", "mmn", "mmnn"]);
    }

    #[test]
    fn k_one_with_exact_match_returns_it() {
        let tree = example_tree();
        let tq = TopKQuery::new("nzzzb", 1, 2).unwrap();
        let (ranked, _) = topk_search(&tree, &tq);
        assert_eq!(ranked, vec!["nzzzb"]);
    }

    #[test]
    fn ranking_matches_brute_force_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(30);
        let signer = DebugSigner;
        for _ in 0..4 {
            let corpus = random_corpus(&mut rng, 200, 4, 6);
            let tree = MbTree::build(corpus.clone(), rng.gen_range(2..=6), &signer).unwrap();
            for _ in 0..10 {
                let q = random_word(&mut rng, 4, 6);
                let theta = rng.gen_range(0..=3);
                let k = rng.gen_range(1..=6);
                let tq = TopKQuery::new(q.clone(), k, theta).unwrap();
                let (ranked, c) = topk_search(&tree, &tq);

                let mut want: Vec<(u32, String)> = corpus
                    .iter()
                    .map(|s| (metrics::edit_distance(&q, s), s.clone()))
                    .filter(|(d, _)| *d <= theta)
                    .collect();
                want.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| metrics::compare(&a.1, &b.1)));
                assert_eq!(c, want.len());
                want.truncate(k as usize);
                let want: Vec<String> = want.into_iter().map(|(_, s)| s).collect();
                assert_eq!(ranked, want, "q={q:?} theta={theta} k={k}");
            }
        }
    }

    #[test]
    fn huge_k_proof_is_the_plain_threshold_proof() {
        let tree = example_tree();
        let tq = TopKQuery::new("mmmm", 100, 2).unwrap();
        let (_, vo) = topk_build_vo(&tree, &tq);
        let (_, plain) = vs2::build_vo(&tree, &example_query());
        assert_eq!(vo, plain);
    }

    #[test]
    fn honest_runs_verify_in_both_regimes() {
        let mut rng = ChaCha20Rng::seed_from_u64(31);
        let signer = DebugSigner;
        for _ in 0..3 {
            let corpus = random_corpus(&mut rng, 200, 4, 6);
            let tree = MbTree::build(corpus.clone(), rng.gen_range(2..=6), &signer).unwrap();
            let f = EmbeddingFunction::build(&corpus, 3, 5).unwrap();
            for _ in 0..8 {
                let q = random_word(&mut rng, 4, 6);
                let tq = TopKQuery::new(q, rng.gen_range(1..=5), rng.gen_range(1..=3)).unwrap();

                let (ranked, vo) = topk_build_vo(&tree, &tq);
                let report =
                    topk_verify(&tq, &ranked, &vo, &signer.public_key(), tree.root_signature());
                assert!(report.passed(), "plain: {report}");

                let (ranked_e, vo_e) = topk_build_vo_e(&tree, &f, &tq);
                assert_eq!(ranked_e, ranked);
                let report_e = topk_verify_e(
                    &tq,
                    &ranked_e,
                    &vo_e,
                    &f,
                    &signer.public_key(),
                    tree.root_signature(),
                );
                assert!(report_e.passed(), "embedded: {report_e}");
            }
        }
    }

    #[test]
    fn exact_k_plain_threshold_response_still_verifies() {
        // c == k: the server ships the plain-threshold proof with exactly
        // k results and the client's tightened rules still accept it.
        let tree = example_tree();
        let tq = TopKQuery::new("mmmm", 3, 2).unwrap();
        let (ranked, vo) = topk_build_vo(&tree, &tq);
        assert_eq!(ranked.len(), 3);
        let (_, plain) = vs2::build_vo(&tree, &example_query());
        assert_eq!(vo, plain, "c == k builds the plain-threshold proof");
        let report = topk_verify(
            &tq,
            &ranked,
            &vo,
            &DebugSigner.public_key(),
            tree.root_signature(),
        );
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn tightened_proof_discloses_less() {
        // theta = 4 admits eight strings; k = 3 tightens the proof to the
        // k-th distance.
        let tree = example_tree();
        let tq = TopKQuery::new("mmmm", 3, 4).unwrap();
        let (ranked, vo) = topk_build_vo(&tree, &tq);
        assert_eq!(ranked, vec!["mmmm", "mmn", "mmnn"]);

        // At theta = 4 every leaf is a candidate and all twelve strings
        // are disclosed; the effective threshold (the k-th distance, 2)
        // prunes a leaf, so the client has fewer edit distances to check.
        let disclosed = |vo: &Vo| {
            crate::vo::flatten(&vo.root)
                .iter()
                .filter(|e| matches!(e, FlatEntry::Str(_)))
                .count()
        };
        let (_, wide) = vs2::build_vo(&tree, &Query::new("mmmm", 4));
        assert_eq!(disclosed(&wide), 12);
        assert_eq!(disclosed(&vo), 9);

        let report = topk_verify(
            &tq,
            &ranked,
            &vo,
            &DebugSigner.public_key(),
            tree.root_signature(),
        );
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn swapped_ranks_are_caught() {
        let tree = example_tree();
        let tq = TopKQuery::new("mmmm", 3, 4).unwrap();
        let (mut ranked, vo) = topk_build_vo(&tree, &tq);
        // "mmmm" (distance 0) and "mmn" (distance 2) swap places.
        ranked.swap(0, 1);
        let report = topk_verify(
            &tq,
            &ranked,
            &vo,
            &DebugSigner.public_key(),
            tree.root_signature(),
        );
        assert!(!report.passed());
        assert_eq!(report.failed_step(), Some(FailedStep::Step3));
        assert_eq!(report.diagnosis(), Diagnosis::RankOrderViolation);
    }

    #[test]
    fn truncated_result_list_is_caught() {
        let tree = example_tree();
        let tq = TopKQuery::new("mmmm", 3, 4).unwrap();
        let (mut ranked, vo) = topk_build_vo(&tree, &tq);
        ranked.pop();
        let report = topk_verify(
            &tq,
            &ranked,
            &vo,
            &DebugSigner.public_key(),
            tree.root_signature(),
        );
        assert!(!report.passed());
        assert_eq!(report.failed_step(), Some(FailedStep::Step3));
        assert_eq!(report.diagnosis(), Diagnosis::SimilarMissing);
    }

    #[test]
    fn replacing_a_winner_with_a_farther_string_is_caught() {
        // True top-3 at theta=4 is [mmmm(0), mmn(2), mmnn(2)]; a cheating
        // server swaps in "mmmmzzzz" (distance 4) and proves the wider
        // effective threshold instead. The displaced winner shows up as a
        // disclosed string strictly closer than the claimed k-th distance.
        let tree = example_tree();
        let tq = TopKQuery::new("mmmm", 3, 4).unwrap();
        let lied = vec!["mmmm".to_string(), "mmn".to_string(), "mmmmzzzz".to_string()];
        let (_, vo) = vs2::build_vo(&tree, &Query::new("mmmm", 4));
        let report = topk_verify(
            &tq,
            &lied,
            &vo,
            &DebugSigner.public_key(),
            tree.root_signature(),
        );
        assert!(!report.passed());
        assert_eq!(report.failed_step(), Some(FailedStep::Step3));
        assert_eq!(report.diagnosis(), Diagnosis::SimilarMissing);
    }

    #[test]
    fn oversized_result_list_is_caught() {
        let tree = example_tree();
        let (ranked, vo) = topk_build_vo(&tree, &TopKQuery::new("mmmm", 3, 2).unwrap());
        assert_eq!(ranked.len(), 3);
        let small = TopKQuery::new("mmmm", 2, 2).unwrap();
        let report = topk_verify(
            &small,
            &ranked,
            &vo,
            &DebugSigner.public_key(),
            tree.root_signature(),
        );
        assert!(!report.passed());
        assert_eq!(report.failed_step(), Some(FailedStep::Step3));
        assert_eq!(report.diagnosis(), Diagnosis::Tampered);
    }

    #[test]
    fn ties_at_the_boundary_are_legal_non_returns() {
        // Both "mmn" and "mmnn" sit at distance 2; k = 2 keeps only one.
        // The omitted tie is disclosed in the proof yet verification
        // accepts, because a tie cannot be distinguished from the winner
        // by distance alone.
        let tree = example_tree();
        let tq = TopKQuery::new("mmmm", 2, 2).unwrap();
        let (ranked, vo) = topk_build_vo(&tree, &tq);
        assert_eq!(ranked, vec!["mmmm", "mmn"]);
        let report = topk_verify(
            &tq,
            &ranked,
            &vo,
            &DebugSigner.public_key(),
            tree.root_signature(),
        );
        assert!(report.passed(), "{report}");
    }
}
