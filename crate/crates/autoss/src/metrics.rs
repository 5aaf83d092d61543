//! Edit distance, dictionary order, and the range lower bound used to
//! rule out whole key ranges during index traversal.
//!
//! All distances are unit-cost Levenshtein distances counted over Unicode
//! scalar values, and all ordering is plain dictionary order (lexicographic
//! by scalar value, a proper prefix sorting before its extensions). The
//! range bound [`dst_min`] is what makes authenticated pruning possible:
//! it depends only on the two endpoint strings of a range, yet it bounds
//! the distance of every string inside the range from below.

use std::cmp::Ordering;

use thiserror::Error;

/// Errors from constructing invalid string ranges.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum RangeError {
    #[error("range lower bound {lo:?} sorts after upper bound {hi:?}")]
    Inverted { lo: String, hi: String },
}

/// Unit-cost edit distance (insertions, deletions, substitutions) between
/// two strings, counted over Unicode scalar values.
pub fn edit_distance(a: &str, b: &str) -> u32 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    *final_dp_row(&a, &b).last().expect("row has |b|+1 entries")
}

/// Dictionary order on strings: lexicographic by Unicode scalar value,
/// with a proper prefix sorting before its extensions.
///
/// Byte order of UTF-8 coincides with scalar-value order, so the standard
/// byte-wise comparison implements exactly this order.
pub fn compare(a: &str, b: &str) -> Ordering {
    a.cmp(b)
}

/// An inclusive string range `[lo, hi]` under dictionary order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StringRange {
    lo: String,
    hi: String,
}

impl StringRange {
    /// Builds a range, rejecting endpoints that are out of order.
    pub fn new(lo: impl Into<String>, hi: impl Into<String>) -> Result<Self, RangeError> {
        let (lo, hi) = (lo.into(), hi.into());
        if compare(&lo, &hi) == Ordering::Greater {
            return Err(RangeError::Inverted { lo, hi });
        }
        Ok(StringRange { lo, hi })
    }

    pub fn lo(&self) -> &str {
        &self.lo
    }

    pub fn hi(&self) -> &str {
        &self.hi
    }

    /// Whether `s` falls inside the range (endpoints included).
    pub fn contains(&self, s: &str) -> bool {
        compare(&self.lo, s) != Ordering::Greater && compare(s, &self.hi) != Ordering::Greater
    }
}

/// Longest common prefix of the range endpoints.
///
/// Every string inside the range starts with this prefix: an in-between
/// string must agree with both endpoints on every position where they
/// still agree with each other, otherwise it would sort outside them.
pub fn range_lcp(r: &StringRange) -> &str {
    let mut end = 0;
    let mut his = r.hi.chars();
    for (i, c) in r.lo.char_indices() {
        if his.next() != Some(c) {
            break;
        }
        end = i + c.len_utf8();
    }
    &r.lo[..end]
}

/// Lower bound on the edit distance from `q` to any string inside `r`.
///
/// With `p` the common prefix of the range, every member of the range is
/// `p` followed by some suffix. Any alignment of `q` onto such a string
/// splits `q` at some position `j`: the part `q[..j]` is aligned against
/// `p` and costs at least `DST(p, q[..j])`. Taking the minimum of the
/// final DP row over all splits therefore bounds every member's distance
/// from below. The bound is monotone: shrinking the range can only extend
/// the prefix, which never lowers the row minimum.
pub fn dst_min(q: &str, r: &StringRange) -> u32 {
    let p: Vec<char> = range_lcp(r).chars().collect();
    let q: Vec<char> = q.chars().collect();
    final_dp_row(&p, &q)
        .into_iter()
        .min()
        .expect("row has |q|+1 entries")
}

/// Final row of the edit-distance table between `p` and `q`: entry `j`
/// holds `DST(p, q[..j])`.
fn final_dp_row(p: &[char], q: &[char]) -> Vec<u32> {
    let mut row: Vec<u32> = (0..=q.len() as u32).collect();
    let mut next = vec![0u32; q.len() + 1];
    for (i, pc) in p.iter().enumerate() {
        next[0] = i as u32 + 1;
        for (j, qc) in q.iter().enumerate() {
            let sub = row[j] + u32::from(pc != qc);
            next[j + 1] = sub.min(row[j + 1] + 1).min(next[j] + 1);
        }
        std::mem::swap(&mut row, &mut next);
    }
    row
}

#[cfg(test)]
mod tests {
    use super::*;

    use proptest::prelude::*;
    use rand::{Rng as _, SeedableRng as _};
    use rand_chacha::ChaCha20Rng;

    /// Independent quadratic oracle: the full DP table, written before the
    /// rolling-row implementation and kept as the reference.
    fn oracle_edit_distance(a: &str, b: &str) -> u32 {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        let mut table = vec![vec![0u32; b.len() + 1]; a.len() + 1];
        for (i, row) in table.iter_mut().enumerate() {
            row[0] = i as u32;
        }
        for j in 0..=b.len() {
            table[0][j] = j as u32;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let sub = table[i - 1][j - 1] + u32::from(a[i - 1] != b[j - 1]);
                table[i][j] = sub.min(table[i - 1][j] + 1).min(table[i][j - 1] + 1);
            }
        }
        table[a.len()][b.len()]
    }

    /// Mixed-width alphabet so scalar-value counting is exercised.
    const ALPHABET: &[char] = &['a', 'b', 'c', 'x', 'y', 'z', 'é', 'ß', 'Δ', '💾'];

    fn random_string(rng: &mut ChaCha20Rng, max_len: usize) -> String {
        let len = rng.gen_range(0..=max_len);
        (0..len).map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())]).collect()
    }

    #[test]
    fn matches_known_values() {
        assert_eq!(edit_distance("kitten", "sitting"), 3);
        assert_eq!(oracle_edit_distance("kitten", "sitting"), 3);
        assert_eq!(edit_distance("", "abc"), 3);
        assert_eq!(edit_distance("abc", ""), 3);
        assert_eq!(edit_distance("", ""), 0);
    }

    #[test]
    fn agrees_with_oracle_on_10k_random_pairs() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let a = random_string(&mut rng, 20);
            let b = random_string(&mut rng, 20);
            assert_eq!(
                edit_distance(&a, &b),
                oracle_edit_distance(&a, &b),
                "disagreement on {a:?} vs {b:?}"
            );
        }
    }

    #[test]
    fn counts_scalar_values_not_bytes() {
        // One scalar substituted, regardless of UTF-8 width.
        assert_eq!(edit_distance("a💾c", "abc"), 1);
        assert_eq!(edit_distance("é", "e"), 1);
    }

    #[test]
    fn compare_is_dictionary_order() {
        assert_eq!(compare("abc", "abd"), Ordering::Less);
        assert_eq!(compare("ab", "abc"), Ordering::Less);
        assert_eq!(compare("x", "x"), Ordering::Equal);
        // Scalar-value order, not locale order: 'Z' (0x5A) < 'a' (0x61).
        assert_eq!(compare("Z", "a"), Ordering::Less);
    }

    #[test]
    fn range_lcp_examples() {
        let r = StringRange::new("abc", "abd").unwrap();
        assert_eq!(range_lcp(&r), "ab");
        let r = StringRange::new("s", "s").unwrap();
        assert_eq!(range_lcp(&r), "s");
        let r = StringRange::new("aa", "b").unwrap();
        assert_eq!(range_lcp(&r), "");
    }

    #[test]
    fn range_rejects_inverted_endpoints() {
        assert_eq!(
            StringRange::new("b", "a"),
            Err(RangeError::Inverted { lo: "b".into(), hi: "a".into() })
        );
    }

    #[test]
    fn dst_min_examples() {
        let r = StringRange::new("abc", "abz").unwrap();
        assert_eq!(dst_min("abc", &r), 0);
        let r = StringRange::new("same", "same").unwrap();
        assert_eq!(dst_min("same", &r), 0);
        let r = StringRange::new("aa", "ab").unwrap();
        assert_eq!(dst_min("zzz", &r), 1);
    }

    /// `dst_min` never exceeds the distance to any member of the range.
    #[test]
    fn dst_min_is_a_sound_lower_bound() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for _ in 0..2_000 {
            let mut corpus: Vec<String> = (0..40).map(|_| random_string(&mut rng, 10)).collect();
            corpus.sort();
            corpus.dedup();
            let i = rng.gen_range(0..corpus.len());
            let j = rng.gen_range(i..corpus.len());
            let r = StringRange::new(corpus[i].clone(), corpus[j].clone()).unwrap();
            let q = random_string(&mut rng, 10);
            let bound = dst_min(&q, &r);
            for s in &corpus[i..=j] {
                assert!(
                    bound <= edit_distance(&q, s),
                    "bound {bound} exceeds distance to {s:?} in [{:?},{:?}] for q={q:?}",
                    r.lo(),
                    r.hi()
                );
            }
        }
    }

    /// Shrinking a range never lowers the bound.
    #[test]
    fn dst_min_is_monotone_under_nesting() {
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        for _ in 0..2_000 {
            let mut corpus: Vec<String> = (0..40).map(|_| random_string(&mut rng, 10)).collect();
            corpus.sort();
            corpus.dedup();
            let i = rng.gen_range(0..corpus.len());
            let j = rng.gen_range(i..corpus.len());
            let ii = rng.gen_range(i..=j);
            let jj = rng.gen_range(ii..=j);
            let outer = StringRange::new(corpus[i].clone(), corpus[j].clone()).unwrap();
            let inner = StringRange::new(corpus[ii].clone(), corpus[jj].clone()).unwrap();
            let q = random_string(&mut rng, 10);
            assert!(dst_min(&q, &inner) >= dst_min(&q, &outer));
        }
    }

    proptest! {
        #[test]
        fn identity_iff_equal(a in ".{0,12}", b in ".{0,12}") {
            let d = edit_distance(&a, &b);
            prop_assert_eq!(d == 0, a == b);
        }

        #[test]
        fn symmetric(a in ".{0,12}", b in ".{0,12}") {
            prop_assert_eq!(edit_distance(&a, &b), edit_distance(&b, &a));
        }

        #[test]
        fn triangle_inequality(a in ".{0,8}", b in ".{0,8}", c in ".{0,8}") {
            prop_assert!(edit_distance(&a, &c) <= edit_distance(&a, &b) + edit_distance(&b, &c));
        }

        #[test]
        fn members_start_with_range_lcp(
            mut v in proptest::collection::vec("[a-d]{0,6}", 3..20)
        ) {
            v.sort();
            v.dedup();
            let r = StringRange::new(v[0].clone(), v[v.len() - 1].clone()).unwrap();
            let p = range_lcp(&r).to_owned();
            for s in &v {
                prop_assert!(s.starts_with(&p), "{s:?} lacks prefix {p:?}");
            }
        }
    }
}
