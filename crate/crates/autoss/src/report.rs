//! Verification outcomes and cost accounting.
//!
//! Every verification returns a [`VerificationReport`]: pass/fail, the
//! first step that failed, a diagnosis naming what the failure implies,
//! and counters for the work performed. The counters also feed the
//! benchmark harness, which cross-checks them against the closed-form
//! cost laws.

use std::fmt;

/// The verification step at which a check first failed.
///
/// Steps 1–3 apply to every verification; step 4 exists only on the
/// embedding-assisted path (box containment and distance checks).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailedStep {
    Step1,
    Step2,
    Step3,
    Step4,
}

impl fmt::Display for FailedStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FailedStep::Step1 => "step1",
            FailedStep::Step2 => "step2",
            FailedStep::Step3 => "step3",
            FailedStep::Step4 => "step4",
        };
        f.write_str(s)
    }
}

/// What a verification failure means.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Diagnosis {
    /// Verification passed.
    Ok,
    /// The proof is structurally inconsistent (undecodable, misordered,
    /// or missing content) with no more specific explanation.
    Tampered,
    /// Pruned-subtree ranges overlap each other or disclosed strings.
    OverlapRange,
    /// A returned string falls inside a range the proof claims holds no
    /// similar strings.
    StringInNcRange,
    /// The recomputed root digest does not match the owner's signature.
    SignatureMismatch,
    /// A string provably within the threshold is missing from the results.
    SimilarMissing,
    /// A returned string is provably beyond the threshold.
    DissimilarReturned,
    /// A subtree claimed non-candidate fails the lower-bound test.
    CandidateClaimedNc,
    /// A dissimilarity box is too close to the query point.
    DbhNotDistant,
    /// A point is not inside the box claimed to cover it.
    PointNotInClaimedDbh,
    /// A returned (similar) string's point lies inside a dissimilarity
    /// box.
    SimilarInsideDbh,
    /// Ranked results are not sorted by distance (ties by dictionary
    /// order).
    RankOrderViolation,
}

impl fmt::Display for Diagnosis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Diagnosis::Ok => "ok",
            Diagnosis::Tampered => "tampered",
            Diagnosis::OverlapRange => "overlap_range",
            Diagnosis::StringInNcRange => "string_in_nc_range",
            Diagnosis::SignatureMismatch => "signature_mismatch",
            Diagnosis::SimilarMissing => "similar_missing",
            Diagnosis::DissimilarReturned => "dissimilar_returned",
            Diagnosis::CandidateClaimedNc => "candidate_claimed_nc",
            Diagnosis::DbhNotDistant => "dbh_not_distant",
            Diagnosis::PointNotInClaimedDbh => "point_not_in_claimed_dbh",
            Diagnosis::SimilarInsideDbh => "similar_inside_dbh",
            Diagnosis::RankOrderViolation => "rank_order_violation",
        };
        f.write_str(s)
    }
}

/// Work and size accounting for one query/verification.
///
/// `edit_strings` counts whole-string edit-distance computations;
/// `mf_bounds` counts range lower-bound evaluations, each of which costs
/// two endpoint table computations — hence [`Counters::edit_ops`].
/// Embedding evaluations are tracked separately in `embed_calls`: their
/// internal edit distances are against fixed reference strings and are
/// not part of the query-distance cost law.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Counters {
    /// Whole-string edit-distance computations against the query.
    pub edit_strings: u64,
    /// Range lower-bound computations (one per pruned subtree).
    pub mf_bounds: u64,
    /// Point-to-box minimum-distance computations.
    pub euclid_rects: u64,
    /// String embeddings computed.
    pub embed_calls: u64,
    /// Encoded proof size in bytes.
    pub vo_bytes: u64,
    /// Returned (similar) strings.
    pub n_r: u64,
    /// Disclosed false hits under candidate leaves.
    pub n_c: u64,
    /// False hits whose embedded point is within the threshold.
    pub n_f: u64,
    /// Pruned maximal false-hit subtrees.
    pub n_mf: u64,
    /// Dissimilarity boxes shipped.
    pub n_dbh: u64,
    /// Strings certified via a dissimilarity box.
    pub n_ds: u64,
}

impl Counters {
    /// Edit-distance cost in endpoint-table units: each range bound costs
    /// two endpoint computations.
    pub fn edit_ops(&self) -> u64 {
        self.edit_strings + 2 * self.mf_bounds
    }
}

/// Outcome of one verification.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    passed: bool,
    failed_step: Option<FailedStep>,
    diagnosis: Diagnosis,
    pub counters: Counters,
}

impl VerificationReport {
    pub fn pass(counters: Counters) -> Self {
        VerificationReport {
            passed: true,
            failed_step: None,
            diagnosis: Diagnosis::Ok,
            counters,
        }
    }

    pub fn fail(step: FailedStep, diagnosis: Diagnosis, counters: Counters) -> Self {
        debug_assert!(diagnosis != Diagnosis::Ok, "failures need a diagnosis");
        VerificationReport {
            passed: false,
            failed_step: Some(step),
            diagnosis,
            counters,
        }
    }

    pub fn passed(&self) -> bool {
        self.passed
    }

    pub fn failed_step(&self) -> Option<FailedStep> {
        self.failed_step
    }

    pub fn diagnosis(&self) -> Diagnosis {
        self.diagnosis
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.failed_step {
            None => write!(f, "passed"),
            Some(step) => write!(f, "failed at {step}: {}", self.diagnosis),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_and_fail_keep_the_invariant() {
        let ok = VerificationReport::pass(Counters::default());
        assert!(ok.passed());
        assert_eq!(ok.failed_step(), None);
        assert_eq!(ok.diagnosis(), Diagnosis::Ok);

        let bad = VerificationReport::fail(
            FailedStep::Step3,
            Diagnosis::SimilarMissing,
            Counters::default(),
        );
        assert!(!bad.passed());
        assert_eq!(bad.failed_step(), Some(FailedStep::Step3));
        assert_eq!(bad.diagnosis(), Diagnosis::SimilarMissing);
        assert_eq!(bad.to_string(), "failed at step3: similar_missing");
    }

    #[test]
    fn edit_ops_law() {
        let c = Counters {
            edit_strings: 9,
            mf_bounds: 1,
            ..Counters::default()
        };
        assert_eq!(c.edit_ops(), 11);
    }

    #[test]
    fn diagnosis_names_are_stable() {
        // These strings reach the CLI and CSV output; pin them.
        let all = [
            (Diagnosis::Ok, "ok"),
            (Diagnosis::Tampered, "tampered"),
            (Diagnosis::OverlapRange, "overlap_range"),
            (Diagnosis::StringInNcRange, "string_in_nc_range"),
            (Diagnosis::SignatureMismatch, "signature_mismatch"),
            (Diagnosis::SimilarMissing, "similar_missing"),
            (Diagnosis::DissimilarReturned, "dissimilar_returned"),
            (Diagnosis::CandidateClaimedNc, "candidate_claimed_nc"),
            (Diagnosis::DbhNotDistant, "dbh_not_distant"),
            (Diagnosis::PointNotInClaimedDbh, "point_not_in_claimed_dbh"),
            (Diagnosis::SimilarInsideDbh, "similar_inside_dbh"),
            (Diagnosis::RankOrderViolation, "rank_order_violation"),
        ];
        for (d, s) in all {
            assert_eq!(d.to_string(), s);
        }
    }
}
