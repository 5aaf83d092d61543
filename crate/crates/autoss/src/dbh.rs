//! Distant bounding hyper-rectangles (DBHs).
//!
//! After a similarity query, the server must justify every dissimilar
//! candidate string. Instead of shipping each one for an edit-distance
//! recomputation, it groups their embedded points into axis-aligned boxes
//! that provably stay farther than the threshold from the query point: if
//! the minimum distance from the query point to a box exceeds θ, every
//! point inside the box — and by contractiveness every string behind those
//! points — is dissimilar.
//!
//! Finding the minimum number of such boxes is a clique-partition problem
//! (NP-complete), so `partition` uses a deterministic greedy heuristic
//! over the pairwise "still distant when boxed together" graph, with a
//! geometric re-check for dimensions above two where pairwise edges no
//! longer imply a distant clique box.

use thiserror::Error;

use crate::embedding::{euclid, EmbeddedPoint};

/// Errors from the geometry and partition operations.
#[derive(Debug, Error)]
pub enum DbhError {
    #[error("point set is empty")]
    EmptyPointSet,
    #[error("dimension mismatch: expected {expected}, point {index} has {found}")]
    DimMismatch {
        expected: usize,
        index: usize,
        found: usize,
    },
    #[error("FP-string passed to DBH builder: point {index} is within the threshold")]
    FpPoint { index: usize },
    #[error("points are not collinear: point {index} is {residual} off the line")]
    NotCollinear { index: usize, residual: f64 },
    #[error("hyper-rectangle must have at least one dimension")]
    ZeroDim,
    #[error("hyper-rectangle lo has {lo} dimensions but hi has {hi}")]
    BoundsDimMismatch { lo: usize, hi: usize },
    #[error("hyper-rectangle bound at axis {axis} is not finite")]
    NonFinite { axis: usize },
    #[error("hyper-rectangle bounds inverted at axis {axis}")]
    InvertedBounds { axis: usize },
}

/// An axis-aligned box: `lo[i] ≤ hi[i]` on every axis. Degenerate (point)
/// boxes are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperrect {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Hyperrect {
    /// Validates bounds: equal dimensions, at least one axis, finite
    /// values, and `lo ≤ hi` componentwise. Decoders call this on
    /// untrusted input.
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, DbhError> {
        if lo.len() != hi.len() {
            return Err(DbhError::BoundsDimMismatch {
                lo: lo.len(),
                hi: hi.len(),
            });
        }
        if lo.is_empty() {
            return Err(DbhError::ZeroDim);
        }
        for (axis, (&l, &h)) in lo.iter().zip(&hi).enumerate() {
            if !l.is_finite() || !h.is_finite() {
                return Err(DbhError::NonFinite { axis });
            }
            if l > h {
                return Err(DbhError::InvertedBounds { axis });
            }
        }
        Ok(Hyperrect { lo, hi })
    }

    fn point(p: &[f64]) -> Self {
        Hyperrect {
            lo: p.to_vec(),
            hi: p.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    /// True when `p` lies inside the closed box.
    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && self
                .lo
                .iter()
                .zip(&self.hi)
                .zip(p)
                .all(|((&l, &h), &x)| l <= x && x <= h)
    }

    /// Smallest box containing both boxes.
    pub fn envelope(&self, other: &Hyperrect) -> Hyperrect {
        assert_eq!(self.dim(), other.dim(), "boxes must have equal dimension");
        Hyperrect {
            lo: self
                .lo
                .iter()
                .zip(&other.lo)
                .map(|(&a, &b)| a.min(b))
                .collect(),
            hi: self
                .hi
                .iter()
                .zip(&other.hi)
                .map(|(&a, &b)| a.max(b))
                .collect(),
        }
    }

    /// True when the closed boxes share at least one point.
    pub fn overlaps(&self, other: &Hyperrect) -> bool {
        self.dim() == other.dim()
            && self
                .lo
                .iter()
                .zip(&self.hi)
                .zip(other.lo.iter().zip(&other.hi))
                .all(|((&l1, &h1), (&l2, &h2))| l1 <= h2 && l2 <= h1)
    }
}

/// Minimum bounding hyper-rectangle: the componentwise min/max envelope of
/// a non-empty point set.
pub fn mbh(points: &[EmbeddedPoint]) -> Result<Hyperrect, DbhError> {
    let first = points.first().ok_or(DbhError::EmptyPointSet)?;
    let dim = first.len();
    if dim == 0 {
        return Err(DbhError::ZeroDim);
    }
    let mut lo = first.clone();
    let mut hi = first.clone();
    for (index, p) in points.iter().enumerate().skip(1) {
        if p.len() != dim {
            return Err(DbhError::DimMismatch {
                expected: dim,
                index,
                found: p.len(),
            });
        }
        for i in 0..dim {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    Ok(Hyperrect { lo, hi })
}

fn mbh_ids(pts: &[EmbeddedPoint], ids: &[usize]) -> Hyperrect {
    let mut rect = Hyperrect::point(&pts[ids[0]]);
    for &id in &ids[1..] {
        rect = rect.envelope(&Hyperrect::point(&pts[id]));
    }
    rect
}

/// Minimum scaled distance from a point to a box:
/// sqrt(Σ m[i]² / d) with m[i] = max{lo[i] − p[i], 0, p[i] − hi[i]}.
///
/// Uses the same 1/√d scaling as [`euclid`], so any point inside the box
/// is at least this far from `p` under the embedded metric.
pub fn dst_min_rect(p: &[f64], r: &Hyperrect) -> f64 {
    assert_eq!(p.len(), r.dim(), "point and box must have equal dimension");
    let sum: f64 = r
        .lo
        .iter()
        .zip(&r.hi)
        .zip(p)
        .map(|((&l, &h), &x)| {
            let m = (l - x).max(0.0).max(x - h);
            m * m
        })
        .sum();
    (sum / p.len() as f64).sqrt()
}

/// Pairwise dissimilarity-preservation graph over embedded points: an edge
/// joins two points exactly when their joint bounding box stays farther
/// than θ from the query point.
#[derive(Debug, Clone)]
pub struct DbhGraph {
    adj: Vec<Vec<bool>>,
}

impl DbhGraph {
    pub fn vertex_count(&self) -> usize {
        self.adj.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i != j && self.adj[i][j]
    }
}

fn validate_ds_points(q: &[f64], pts: &[EmbeddedPoint], theta: f64) -> Result<(), DbhError> {
    for (index, p) in pts.iter().enumerate() {
        if p.len() != q.len() {
            return Err(DbhError::DimMismatch {
                expected: q.len(),
                index,
                found: p.len(),
            });
        }
        if euclid(q, p) <= theta {
            return Err(DbhError::FpPoint { index });
        }
    }
    Ok(())
}

/// [`dst_min_rect`] against the box of just two points, without building
/// the box. This sits on the hot diagonal of [`build_graph`].
fn dst_min_pair_box(q: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let sum: f64 = q
        .iter()
        .zip(a)
        .zip(b)
        .map(|((&x, &ai), &bi)| {
            let m = (ai.min(bi) - x).max(0.0).max(x - ai.max(bi));
            m * m
        })
        .sum();
    (sum / q.len() as f64).sqrt()
}

/// Builds the graph for `pts` against query point `q`. Every point must
/// already be farther than θ from `q` (callers classify those apart
/// beforehand); a closer point is rejected.
pub fn build_graph(q: &[f64], pts: &[EmbeddedPoint], theta: f64) -> Result<DbhGraph, DbhError> {
    validate_ds_points(q, pts, theta)?;
    let n = pts.len();
    let mut adj = vec![vec![false; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if dst_min_pair_box(q, &pts[i], &pts[j]) > theta {
                adj[i][j] = true;
                adj[j][i] = true;
            }
        }
    }
    Ok(DbhGraph { adj })
}

/// Greedy clique cover. Returns the vertex sets of the cliques in the
/// order they were closed.
///
/// Seeds each clique with the uncovered vertex of minimum degree (degree
/// counted among uncovered vertices; ties break to the lowest id), then
/// repeatedly grows it by the candidate adjacent to every current member
/// that has the fewest edges toward the uncovered non-candidates. At
/// dimensions above two, a pairwise-distant clique may still have a
/// too-close joint box, so each growth step re-checks the box and on
/// failure deletes the offending edges and skips the candidate.
fn greedy_cliques(
    q: &[f64],
    pts: &[EmbeddedPoint],
    theta: f64,
    graph: &DbhGraph,
) -> Vec<Vec<usize>> {
    let n = pts.len();
    let dim = q.len();
    let mut adj = graph.adj.clone();
    let mut covered = vec![false; n];
    let mut cliques = Vec::new();

    let uncovered_degree = |adj: &Vec<Vec<bool>>, covered: &Vec<bool>, v: usize| {
        (0..n)
            .filter(|&w| w != v && !covered[w] && adj[v][w])
            .count()
    };

    let mut in_clique = vec![false; n];
    let mut is_candidate = vec![false; n];
    while let Some(seed) = (0..n)
        .filter(|&v| !covered[v])
        .min_by_key(|&v| (uncovered_degree(&adj, &covered, v), v))
    {
        let mut clique = vec![seed];
        in_clique.fill(false);
        in_clique[seed] = true;
        loop {
            // Candidates: uncovered vertices adjacent to every member.
            let candidates: Vec<usize> = (0..n)
                .filter(|&v| {
                    !covered[v] && !in_clique[v] && clique.iter().all(|&c| adj[v][c])
                })
                .collect();
            if candidates.is_empty() {
                break;
            }
            is_candidate.fill(false);
            for &v in &candidates {
                is_candidate[v] = true;
            }
            // Prefer the candidate with the fewest edges toward uncovered
            // vertices that are not candidates themselves.
            let pick = *candidates
                .iter()
                .min_by_key(|&&v| {
                    let outside = (0..n)
                        .filter(|&w| {
                            w != v
                                && !covered[w]
                                && !in_clique[w]
                                && !is_candidate[w]
                                && adj[v][w]
                        })
                        .count();
                    (outside, v)
                })
                .expect("candidates is non-empty");
            if dim > 2 {
                let mut trial = clique.clone();
                trial.push(pick);
                if dst_min_rect(q, &mbh_ids(pts, &trial)) <= theta {
                    // The joint box got too close: forget these edges and
                    // try the next candidate.
                    for &c in &clique {
                        adj[pick][c] = false;
                        adj[c][pick] = false;
                    }
                    continue;
                }
            }
            clique.push(pick);
            in_clique[pick] = true;
        }
        for &v in &clique {
            covered[v] = true;
        }
        cliques.push(clique);
    }
    cliques
}

/// Repairs geometric overlaps between clique boxes. Boxes from disjoint
/// cliques can still intersect; verification requires disjoint boxes.
/// Overlapping pairs are merged when the merged box is still distant;
/// otherwise the block with fewer points is dissolved into per-point
/// boxes, which are then re-absorbed wherever they fit.
fn resolve_overlaps(
    q: &[f64],
    pts: &[EmbeddedPoint],
    theta: f64,
    mut blocks: Vec<(Vec<usize>, Hyperrect)>,
) -> Vec<(Vec<usize>, Hyperrect)> {
    'scan: loop {
        for i in 0..blocks.len() {
            for j in (i + 1)..blocks.len() {
                if !blocks[i].1.overlaps(&blocks[j].1) {
                    continue;
                }
                let merged = blocks[i].1.envelope(&blocks[j].1);
                if dst_min_rect(q, &merged) > theta {
                    let (mut members, _) = blocks.remove(j);
                    blocks[i].0.append(&mut members);
                    blocks[i].1 = merged;
                } else {
                    let victim = if blocks[i].0.len() < blocks[j].0.len() {
                        i
                    } else {
                        j
                    };
                    let (members, _) = blocks.remove(victim);
                    for m in members {
                        blocks.push((vec![m], Hyperrect::point(&pts[m])));
                    }
                }
                continue 'scan;
            }
        }
        return blocks;
    }
}

/// Partitions dissimilar points into distant bounding boxes.
///
/// Output guarantees: the boxes are pairwise non-overlapping, jointly
/// contain every input point, and each keeps a minimum distance greater
/// than θ from the query point.
pub fn partition(
    q: &[f64],
    pts: &[EmbeddedPoint],
    theta: f64,
) -> Result<Vec<Hyperrect>, DbhError> {
    let graph = build_graph(q, pts, theta)?;
    let cliques = greedy_cliques(q, pts, theta, &graph);
    let blocks: Vec<(Vec<usize>, Hyperrect)> = cliques
        .into_iter()
        .map(|c| {
            let rect = mbh_ids(pts, &c);
            (c, rect)
        })
        .collect();
    let blocks = resolve_overlaps(q, pts, theta, blocks);
    let rects: Vec<Hyperrect> = blocks.into_iter().map(|(_, r)| r).collect();
    debug_assert!(partition_is_valid(q, pts, theta, &rects));
    Ok(rects)
}

#[allow(dead_code)]
fn partition_is_valid(q: &[f64], pts: &[EmbeddedPoint], theta: f64, rects: &[Hyperrect]) -> bool {
    let covered_once = pts
        .iter()
        .all(|p| rects.iter().filter(|r| r.contains(p)).count() == 1);
    let disjoint = (0..rects.len())
        .all(|i| ((i + 1)..rects.len()).all(|j| !rects[i].overlaps(&rects[j])));
    let distant = rects.iter().all(|r| dst_min_rect(q, r) > theta);
    covered_once && disjoint && distant
}

/// Special-case partition for points on one line.
///
/// When the whole line keeps a distance greater than θ from the query
/// point, a single box suffices; otherwise the points are split at the
/// foot of the perpendicular from the query point onto the line, one box
/// per non-empty side. Linear time, and optimal for points on a line.
///
/// Callers must ensure the box of a line segment is a faithful stand-in
/// for the segment — true for single-dimension spaces and axis-parallel
/// lines, where the box degenerates to the segment itself.
pub fn collinear_partition(
    q: &[f64],
    pts: &[EmbeddedPoint],
    theta: f64,
) -> Result<Vec<Hyperrect>, DbhError> {
    if pts.is_empty() {
        return Err(DbhError::EmptyPointSet);
    }
    validate_ds_points(q, pts, theta)?;
    let dim = q.len();
    let base = &pts[0];

    // Direction: from the base point toward the farthest point. If all
    // points coincide the "line" is a single location and one degenerate
    // box covers everything (it is distant because every point is).
    let raw_dist2 = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    };
    let far = (0..pts.len())
        .max_by(|&a, &b| {
            raw_dist2(&pts[a], base)
                .partial_cmp(&raw_dist2(&pts[b], base))
                .expect("finite distances")
        })
        .expect("non-empty");
    let spread = raw_dist2(&pts[far], base).sqrt();
    if spread == 0.0 {
        return Ok(vec![mbh(pts)?]);
    }
    let dir: Vec<f64> = pts[far]
        .iter()
        .zip(base)
        .map(|(a, b)| (a - b) / spread)
        .collect();

    // Residual of each point from the line through `base` along `dir`.
    const TOLERANCE: f64 = 1e-9;
    let project = |p: &[f64]| -> (f64, f64) {
        let along: f64 = p.iter().zip(base).zip(&dir).map(|((a, b), d)| (a - b) * d).sum();
        let residual2: f64 = p
            .iter()
            .zip(base)
            .zip(&dir)
            .map(|((a, b), d)| {
                let perp = (a - b) - along * d;
                perp * perp
            })
            .sum();
        (along, residual2.sqrt())
    };
    for (index, p) in pts.iter().enumerate() {
        let (_, residual) = project(p);
        if residual > TOLERANCE {
            return Err(DbhError::NotCollinear { index, residual });
        }
    }

    // Distance from the query point to the line, in the scaled metric.
    let (foot, line_residual) = project(q);
    let line_distance = line_residual / (dim as f64).sqrt();
    if line_distance > theta {
        return Ok(vec![mbh(pts)?]);
    }

    // Split at the foot of the perpendicular.
    let (left, right): (Vec<&EmbeddedPoint>, Vec<&EmbeddedPoint>) =
        pts.iter().partition(|p| project(p).0 <= foot);
    let mut rects = Vec::new();
    for side in [left, right] {
        if !side.is_empty() {
            let owned: Vec<EmbeddedPoint> = side.into_iter().cloned().collect();
            rects.push(mbh(&owned)?);
        }
    }
    Ok(rects)
}

#[cfg(test)]
mod tests {
    use super::*;

    use rand::{Rng as _, SeedableRng as _};
    use rand_chacha::ChaCha20Rng;

    fn pt(coords: &[f64]) -> EmbeddedPoint {
        coords.to_vec()
    }

    /// Rejection-samples a point farther than theta from q.
    fn random_far_point(
        rng: &mut ChaCha20Rng,
        q: &[f64],
        theta: f64,
        radius: f64,
    ) -> EmbeddedPoint {
        loop {
            let p: EmbeddedPoint = q
                .iter()
                .map(|&c| c + rng.gen_range(-radius..=radius))
                .collect();
            if euclid(q, &p) > theta {
                return p;
            }
        }
    }

    #[test]
    fn mbh_examples() {
        let single = mbh(&[pt(&[3.0, -1.0])]).unwrap();
        assert_eq!(single.lo(), &[3.0, -1.0]);
        assert_eq!(single.hi(), &[3.0, -1.0]);

        let pair = mbh(&[pt(&[0.0, 0.0]), pt(&[2.0, 1.0])]).unwrap();
        assert_eq!(pair.lo(), &[0.0, 0.0]);
        assert_eq!(pair.hi(), &[2.0, 1.0]);
    }

    #[test]
    fn mbh_is_associative_under_union() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..200 {
            let d = rng.gen_range(1..=4);
            let a: Vec<EmbeddedPoint> = (0..rng.gen_range(1..=5))
                .map(|_| (0..d).map(|_| rng.gen_range(-10.0..10.0)).collect())
                .collect();
            let b: Vec<EmbeddedPoint> = (0..rng.gen_range(1..=5))
                .map(|_| (0..d).map(|_| rng.gen_range(-10.0..10.0)).collect())
                .collect();
            let mut union = a.clone();
            union.extend(b.iter().cloned());
            let direct = mbh(&union).unwrap();
            let enveloped = mbh(&a).unwrap().envelope(&mbh(&b).unwrap());
            assert_eq!(direct, enveloped);
        }
    }

    #[test]
    fn mbh_rejects_bad_input() {
        assert!(matches!(mbh(&[]), Err(DbhError::EmptyPointSet)));
        assert!(matches!(
            mbh(&[pt(&[1.0]), pt(&[1.0, 2.0])]),
            Err(DbhError::DimMismatch { index: 1, .. })
        ));
    }

    #[test]
    fn hyperrect_validation() {
        assert!(Hyperrect::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_ok());
        assert!(matches!(
            Hyperrect::new(vec![], vec![]),
            Err(DbhError::ZeroDim)
        ));
        assert!(matches!(
            Hyperrect::new(vec![0.0], vec![1.0, 2.0]),
            Err(DbhError::BoundsDimMismatch { .. })
        ));
        assert!(matches!(
            Hyperrect::new(vec![2.0], vec![1.0]),
            Err(DbhError::InvertedBounds { axis: 0 })
        ));
        assert!(matches!(
            Hyperrect::new(vec![f64::NAN], vec![1.0]),
            Err(DbhError::NonFinite { axis: 0 })
        ));
        assert!(matches!(
            Hyperrect::new(vec![0.0], vec![f64::INFINITY]),
            Err(DbhError::NonFinite { axis: 0 })
        ));
    }

    #[test]
    fn dst_min_rect_examples() {
        let r = Hyperrect::new(vec![1.0, 1.0], vec![2.0, 2.0]).unwrap();
        // Inside (and on the boundary) the distance is zero.
        assert_eq!(dst_min_rect(&[1.5, 1.7], &r), 0.0);
        assert_eq!(dst_min_rect(&[1.0, 2.0], &r), 0.0);
        // Analytic: m = (1,1), sqrt(2/2) = 1.
        assert_eq!(dst_min_rect(&[0.0, 0.0], &r), 1.0);
    }

    #[test]
    fn rect_distance_lower_bounds_interior_points() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for trial in 0..10_000 {
            let d = [1, 2, 3, 7][trial % 4];
            let lo: Vec<f64> = (0..d).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let hi: Vec<f64> = lo.iter().map(|&l| l + rng.gen_range(0.0..4.0)).collect();
            let r = Hyperrect::new(lo.clone(), hi.clone()).unwrap();
            let p: Vec<f64> = (0..d).map(|_| rng.gen_range(-8.0..8.0)).collect();
            let x: Vec<f64> = lo
                .iter()
                .zip(&hi)
                .map(|(&l, &h)| l + (h - l) * rng.gen_range(0.0..=1.0))
                .collect();
            assert!(r.contains(&x));
            assert!(
                dst_min_rect(&p, &r) <= euclid(&p, &x),
                "box bound exceeded an interior distance"
            );
        }
    }

    #[test]
    fn nested_rect_distances_are_monotone() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for trial in 0..2_000 {
            let d = [1, 2, 4][trial % 3];
            let lo2: Vec<f64> = (0..d).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let hi2: Vec<f64> = lo2.iter().map(|&l| l + rng.gen_range(0.0..4.0)).collect();
            let lo1: Vec<f64> = lo2
                .iter()
                .zip(&hi2)
                .map(|(&l, &h)| l + (h - l) * rng.gen_range(0.0..=0.5))
                .collect();
            let hi1: Vec<f64> = lo1
                .iter()
                .zip(&hi2)
                .map(|(&l, &h)| l + (h - l).max(0.0) * rng.gen_range(0.0..=1.0))
                .collect();
            let outer = Hyperrect::new(lo2, hi2).unwrap();
            let inner = Hyperrect::new(lo1, hi1).unwrap();
            let p: Vec<f64> = (0..d).map(|_| rng.gen_range(-8.0..8.0)).collect();
            assert!(dst_min_rect(&p, &inner) >= dst_min_rect(&p, &outer));
        }
    }

    #[test]
    fn graph_rejects_near_points() {
        let q = pt(&[0.0, 0.0]);
        let err = build_graph(&q, &[pt(&[0.5, 0.5])], 1.0).unwrap_err();
        assert!(matches!(err, DbhError::FpPoint { index: 0 }));
    }

    #[test]
    fn graph_examples() {
        let q = pt(&[0.0, 0.0]);
        // Far cluster in one orthant: complete graph.
        let cluster = vec![pt(&[10.0, 10.0]), pt(&[11.0, 10.5]), pt(&[10.5, 11.0])];
        let g = build_graph(&q, &cluster, 1.0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(g.has_edge(i, j), i != j);
            }
        }
        // Straddling pair: the joint box contains the query point.
        let straddle = vec![pt(&[-5.0, -5.0]), pt(&[5.0, 5.0])];
        let g = build_graph(&q, &straddle, 1.0).unwrap();
        assert!(!g.has_edge(0, 1));
    }

    #[test]
    fn graph_matches_bruteforce_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        for round in 0..100 {
            let d = [1, 2, 3, 5][round % 4];
            let theta = 1.0;
            let q: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let pts: Vec<EmbeddedPoint> = (0..8)
                .map(|_| random_far_point(&mut rng, &q, theta, 4.0))
                .collect();
            let g = build_graph(&q, &pts, theta).unwrap();
            for i in 0..8 {
                for j in 0..8 {
                    if i == j {
                        continue;
                    }
                    // Straight-line recomputation of the pair box distance.
                    let mut sum = 0.0;
                    for k in 0..d {
                        let lo = pts[i][k].min(pts[j][k]);
                        let hi = pts[i][k].max(pts[j][k]);
                        let m = (lo - q[k]).max(0.0).max(q[k] - hi);
                        sum += m * m;
                    }
                    let expected = (sum / d as f64).sqrt() > theta;
                    assert_eq!(g.has_edge(i, j), expected);
                }
            }
        }
    }

    #[test]
    fn partition_complete_graph_yields_one_box() {
        let q = pt(&[0.0, 0.0]);
        let pts = vec![
            pt(&[10.0, 10.0]),
            pt(&[11.0, 10.5]),
            pt(&[10.5, 11.0]),
            pt(&[12.0, 12.0]),
            pt(&[10.2, 11.8]),
        ];
        let rects = partition(&q, &pts, 1.0).unwrap();
        assert_eq!(rects.len(), 1);
        assert!(pts.iter().all(|p| rects[0].contains(p)));
    }

    #[test]
    fn partition_edgeless_graph_yields_singletons() {
        // Four points on the semi-axes: every pair box touches the query
        // point, so the graph has no edges at all.
        let q = pt(&[0.0, 0.0]);
        let pts = vec![
            pt(&[5.0, 0.0]),
            pt(&[0.0, 5.0]),
            pt(&[-5.0, 0.0]),
            pt(&[0.0, -5.0]),
        ];
        let g = build_graph(&q, &pts, 1.0).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!(!g.has_edge(i, j));
            }
        }
        let rects = partition(&q, &pts, 1.0).unwrap();
        assert_eq!(rects.len(), 4);
        for (p, r) in pts.iter().zip(&rects) {
            assert_eq!(r.lo(), p.as_slice());
            assert_eq!(r.hi(), p.as_slice());
        }
    }

    #[test]
    fn partition_postconditions_hold_on_random_inputs() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for round in 0..150 {
            let d = [2, 3, 5][round % 3];
            let theta = 1.0;
            let q: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let n = rng.gen_range(1..=40);
            let pts: Vec<EmbeddedPoint> = (0..n)
                .map(|_| random_far_point(&mut rng, &q, theta, 3.0))
                .collect();
            let rects = partition(&q, &pts, theta).unwrap();
            assert!(
                partition_is_valid(&q, &pts, theta, &rects),
                "postcondition failed at round {round}"
            );
        }
    }

    /// Exhaustive minimum block count over all set partitions whose blocks
    /// all have distant boxes. Feasible for small inputs only.
    fn optimal_block_count(q: &[f64], pts: &[EmbeddedPoint], theta: f64) -> usize {
        fn recurse(
            q: &[f64],
            pts: &[EmbeddedPoint],
            theta: f64,
            next: usize,
            blocks: &mut Vec<Vec<usize>>,
            best: &mut usize,
        ) {
            if blocks.len() >= *best {
                return; // cannot improve
            }
            if next == pts.len() {
                *best = blocks.len();
                return;
            }
            for b in 0..blocks.len() {
                blocks[b].push(next);
                if dst_min_rect(q, &mbh_ids(pts, &blocks[b])) > theta {
                    recurse(q, pts, theta, next + 1, blocks, best);
                }
                blocks[b].pop();
            }
            blocks.push(vec![next]);
            recurse(q, pts, theta, next + 1, blocks, best);
            blocks.pop();
        }
        let mut best = pts.len(); // singletons always work for distant points
        let mut blocks = Vec::new();
        recurse(q, pts, theta, 0, &mut blocks, &mut best);
        best
    }

    #[test]
    fn partition_never_beats_exhaustive_optimum() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let theta = 1.0;
        for round in 0..60 {
            let q = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let n = rng.gen_range(2..=8);
            let pts: Vec<EmbeddedPoint> = (0..n)
                .map(|_| random_far_point(&mut rng, &q, theta, 3.0))
                .collect();
            let rects = partition(&q, &pts, theta).unwrap();
            assert!(partition_is_valid(&q, &pts, theta, &rects));
            let optimal = optimal_block_count(&q, &pts, theta);
            assert!(
                rects.len() >= optimal,
                "heuristic returned {} boxes, below the provable optimum {} (round {round})",
                rects.len(),
                optimal
            );
        }
    }

    #[test]
    fn partition_matches_optimum_on_extreme_graphs() {
        let q = pt(&[0.0, 0.0]);
        let theta = 1.0;
        // Complete graph: optimum is one block.
        let cluster = vec![pt(&[10.0, 10.0]), pt(&[10.5, 10.2]), pt(&[11.0, 10.8])];
        assert_eq!(optimal_block_count(&q, &cluster, theta), 1);
        assert_eq!(partition(&q, &cluster, theta).unwrap().len(), 1);
        // Edgeless graph: optimum is one block per point.
        let axes = vec![
            pt(&[5.0, 0.0]),
            pt(&[0.0, 5.0]),
            pt(&[-5.0, 0.0]),
            pt(&[0.0, -5.0]),
        ];
        assert_eq!(optimal_block_count(&q, &axes, theta), 4);
        assert_eq!(partition(&q, &axes, theta).unwrap().len(), 4);
    }

    #[test]
    fn cliques_at_dimension_two_always_box_distantly() {
        // Pairwise edges at d=2 guarantee the whole clique box is distant;
        // verify over random triangles from real graphs.
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let theta = 1.0;
        let mut checked = 0;
        'outer: for _ in 0..40 {
            let q = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let pts: Vec<EmbeddedPoint> = (0..12)
                .map(|_| random_far_point(&mut rng, &q, theta, 3.0))
                .collect();
            let g = build_graph(&q, &pts, theta).unwrap();
            for i in 0..pts.len() {
                for j in (i + 1)..pts.len() {
                    for k in (j + 1)..pts.len() {
                        if g.has_edge(i, j) && g.has_edge(j, k) && g.has_edge(i, k) {
                            let rect = mbh_ids(&pts, &[i, j, k]);
                            assert!(
                                dst_min_rect(&q, &rect) > theta,
                                "triangle box not distant at d=2"
                            );
                            checked += 1;
                            if checked >= 500 {
                                break 'outer;
                            }
                        }
                    }
                }
            }
        }
        assert!(checked > 0, "no triangles sampled");
    }

    #[test]
    fn high_dimension_growth_deletes_bad_edges() {
        // Three points, pairwise distant boxes, but the joint box of all
        // three brackets the query point on every axis. The growth step
        // must detect this and leave one point out.
        let q = pt(&[0.0, 0.0, 0.0]);
        let pts = vec![
            pt(&[10.0, 10.0, -10.0]),
            pt(&[10.0, -10.0, 10.0]),
            pt(&[-10.0, 10.0, 10.0]),
        ];
        let theta = 1.0;
        let g = build_graph(&q, &pts, theta).unwrap();
        assert!(g.has_edge(0, 1) && g.has_edge(0, 2) && g.has_edge(1, 2));
        let rects = partition(&q, &pts, theta).unwrap();
        assert_eq!(rects.len(), 2, "joint box is not distant, a split is forced");
        assert!(partition_is_valid(&q, &pts, theta, &rects));
        // The pair clique keeps the first two points; the third is alone.
        assert!(rects[0].contains(&pts[0]) && rects[0].contains(&pts[1]));
        assert!(rects[1].contains(&pts[2]));
    }

    #[test]
    fn overlap_resolution_merges_when_still_distant() {
        let q = pt(&[0.0, 0.0]);
        let theta = 1.0;
        let pts = vec![
            pt(&[10.0, 0.0]),
            pt(&[12.0, 2.0]),
            pt(&[11.0, 1.0]),
            pt(&[13.0, 3.0]),
        ];
        let blocks = vec![
            (vec![0, 1], mbh_ids(&pts, &[0, 1])),
            (vec![2, 3], mbh_ids(&pts, &[2, 3])),
        ];
        assert!(blocks[0].1.overlaps(&blocks[1].1));
        let resolved = resolve_overlaps(&q, &pts, theta, blocks);
        assert_eq!(resolved.len(), 1);
        assert_eq!(resolved[0].0, vec![0, 1, 2, 3]);
        assert!(pts.iter().all(|p| resolved[0].1.contains(p)));
    }

    #[test]
    fn overlap_resolution_dissolves_when_merge_too_close() {
        let q = pt(&[0.0, 0.0]);
        let theta = 1.0;
        // Big block far to the right; a thin block reaching toward the
        // query point. Merging them would bring the box within theta, so
        // the smaller block dissolves; its far point is re-absorbed into
        // the big box, its near point stays alone.
        let pts = vec![
            pt(&[10.0, 0.0]),
            pt(&[12.0, 2.0]),
            pt(&[0.2, 1.5]),
            pt(&[11.0, 1.5]),
        ];
        let big = (vec![0, 1], mbh_ids(&pts, &[0, 1]));
        let thin = (vec![2, 3], mbh_ids(&pts, &[2, 3]));
        assert!(big.1.overlaps(&thin.1));
        assert!(dst_min_rect(&q, &thin.1) > theta, "thin block alone is distant");
        assert!(dst_min_rect(&q, &big.1.envelope(&thin.1)) <= theta);
        let resolved = resolve_overlaps(&q, &pts, theta, vec![big, thin]);
        assert_eq!(resolved.len(), 2);
        let near = resolved
            .iter()
            .find(|(m, _)| m.contains(&2))
            .expect("near point present");
        assert_eq!(near.0, vec![2], "near point ends up alone");
        let far = resolved
            .iter()
            .find(|(m, _)| m.contains(&3))
            .expect("absorbed point present");
        assert!(far.0.contains(&0) && far.0.contains(&1), "point 3 re-absorbed");
    }

    #[test]
    fn collinear_far_line_single_box() {
        let q = pt(&[0.0, 0.0]);
        let pts = vec![pt(&[-3.0, 5.0]), pt(&[2.0, 5.0]), pt(&[7.0, 5.0])];
        let rects = collinear_partition(&q, &pts, 1.0).unwrap();
        assert_eq!(rects.len(), 1);
        assert_eq!(rects[0].lo(), &[-3.0, 5.0]);
        assert_eq!(rects[0].hi(), &[7.0, 5.0]);
    }

    #[test]
    fn collinear_near_line_splits_at_foot() {
        let q = pt(&[0.0, 0.0]);
        let pts = vec![pt(&[-5.0, 0.0]), pt(&[-3.0, 0.0]), pt(&[4.0, 0.0])];
        let rects = collinear_partition(&q, &pts, 1.0).unwrap();
        assert_eq!(rects.len(), 2);
        assert_eq!(rects[0].lo(), &[-5.0, 0.0]);
        assert_eq!(rects[0].hi(), &[-3.0, 0.0]);
        assert_eq!(rects[1].lo(), &[4.0, 0.0]);
        assert_eq!(rects[1].hi(), &[4.0, 0.0]);
        for r in &rects {
            assert!(dst_min_rect(&q, r) > 1.0);
        }
    }

    #[test]
    fn collinear_one_side_single_box() {
        let q = pt(&[0.0, 0.0]);
        let pts = vec![pt(&[3.0, 0.0]), pt(&[5.0, 0.0]), pt(&[9.0, 0.0])];
        let rects = collinear_partition(&q, &pts, 1.0).unwrap();
        assert_eq!(rects.len(), 1);
        assert_eq!(rects[0].lo(), &[3.0, 0.0]);
        assert_eq!(rects[0].hi(), &[9.0, 0.0]);
    }

    #[test]
    fn collinear_identical_points_single_box() {
        let q = pt(&[0.0, 0.0]);
        let pts = vec![pt(&[4.0, 4.0]), pt(&[4.0, 4.0])];
        let rects = collinear_partition(&q, &pts, 1.0).unwrap();
        assert_eq!(rects.len(), 1);
        assert_eq!(rects[0].lo(), &[4.0, 4.0]);
    }

    #[test]
    fn collinear_single_dimension_splits_around_query() {
        let q = pt(&[0.0]);
        let pts = vec![pt(&[-3.0]), pt(&[2.0]), pt(&[5.0])];
        let rects = collinear_partition(&q, &pts, 1.0).unwrap();
        assert_eq!(rects.len(), 2);
        assert_eq!(rects[0].lo(), &[-3.0]);
        assert_eq!(rects[0].hi(), &[-3.0]);
        assert_eq!(rects[1].lo(), &[2.0]);
        assert_eq!(rects[1].hi(), &[5.0]);
    }

    #[test]
    fn collinear_slanted_line_splits_disjointly() {
        let q = pt(&[0.0, 0.0]);
        let pts = vec![pt(&[3.0, 3.0]), pt(&[5.0, 5.0]), pt(&[-4.0, -4.0])];
        let rects = collinear_partition(&q, &pts, 1.0).unwrap();
        assert_eq!(rects.len(), 2);
        assert!(!rects[0].overlaps(&rects[1]));
        for r in &rects {
            assert!(dst_min_rect(&q, r) > 1.0);
        }
    }

    #[test]
    fn collinear_rejects_off_line_points() {
        let q = pt(&[0.0, 0.0]);
        let pts = vec![pt(&[0.0, 5.0]), pt(&[5.0, 5.0]), pt(&[5.0, 9.0])];
        let err = collinear_partition(&q, &pts, 1.0).unwrap_err();
        assert!(matches!(err, DbhError::NotCollinear { .. }));
    }

    #[test]
    fn collinear_tolerates_tiny_jitter() {
        let q = pt(&[0.0, 0.0]);
        let pts = vec![
            pt(&[-3.0, 5.0]),
            pt(&[2.0, 5.0 + 1e-12]),
            pt(&[7.0, 5.0 - 1e-12]),
        ];
        let rects = collinear_partition(&q, &pts, 1.0).unwrap();
        assert_eq!(rects.len(), 1);
    }

    #[test]
    fn partition_accepts_empty_point_set() {
        let q = pt(&[0.0, 0.0]);
        let rects = partition(&q, &[], 1.0).unwrap();
        assert!(rects.is_empty());
    }
}
