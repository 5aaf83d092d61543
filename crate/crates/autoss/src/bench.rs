//! Cost-accounting sweeps: answer and verify every query under every
//! parameter combination and emit one record per run.
//!
//! Each record breaks the proof's wire size into its three priced
//! components (disclosed strings, pruned-subtree stubs, dissimilarity
//! boxes) plus bracket framing, and carries the verifier's operation
//! counters. The component byte counts are measured by running the same
//! encoders that produce the file, so they partition the proof size
//! exactly; the per-component averages are the σ weights of the size law
//! `(n_R + n_C)·σ_S + n_MF·σ_M` (plain) and
//! `(n_R + n_F)·σ_S + n_MF·σ_M + n_DBH·σ_D` (embedding-assisted).

use std::fmt::Write as _;
use std::time::Instant;

use thiserror::Error;

use crate::client::{self, RequestError};
use crate::embedding::{self, EmbeddingFunction};
use crate::mbtree::{self, MbTree};
use crate::sign::{Ed25519Signer, SignatureProvider as _};
use crate::vo::{self, Vo, VoEntry, VoMode};

/// Errors from a benchmark sweep.
#[derive(Debug, Error)]
pub enum BenchError {
    #[error("index construction failed: {0}")]
    Tree(#[from] mbtree::BuildError),
    #[error("embedding construction failed: {0}")]
    Embedding(#[from] embedding::BuildError),
    #[error("query failed: {0}")]
    Query(#[from] RequestError),
    #[error("honest proof for query {query:?} failed verification: {report}")]
    HonestProofRejected { query: String, report: String },
}

/// One query under one parameter combination: proof size split into its
/// priced components, verifier operation counts, and wall-clock times.
#[derive(Debug, Clone)]
pub struct BenchRecord {
    /// Index of the query within the sweep's query list.
    pub query_id: u32,
    pub mode: VoMode,
    pub fanout: u32,
    /// Embedding dimension; 0 on the plain path.
    pub dim: u32,
    pub theta: u32,
    /// Whole encoded proof block.
    pub vo_bytes: u64,
    /// Bytes of disclosed-string entries (results plus candidate or
    /// false-positive strings).
    pub str_bytes: u64,
    /// Bytes of pruned-subtree entries (range plus children digest).
    pub mf_bytes: u64,
    /// Bytes of the box table plus the box-certified string entries that
    /// reference it.
    pub dbh_bytes: u64,
    /// Bytes of group brackets around sibling runs.
    pub frame_bytes: u64,
    /// Returned (similar) strings.
    pub n_r: u64,
    /// Disclosed candidate strings beyond the threshold (plain path).
    pub n_c: u64,
    /// Disclosed false positives beyond the threshold (embedded path).
    pub n_f: u64,
    /// Pruned subtrees.
    pub n_mf: u64,
    /// Dissimilarity boxes shipped.
    pub n_dbh: u64,
    /// Strings certified dissimilar by a box.
    pub n_ds: u64,
    /// Measured average bytes per disclosed string.
    pub sigma_s: f64,
    /// Measured average bytes per pruned-subtree entry.
    pub sigma_m: f64,
    /// Measured average bytes per box (table slot plus member strings).
    pub sigma_d: f64,
    /// Edit-distance work in endpoint-table units.
    pub edit_ops: u64,
    /// Point-to-box minimum-distance computations.
    pub euclid_ops: u64,
    /// Wall-clock proof construction time.
    pub build_micros: u64,
    /// Wall-clock verification time.
    pub verify_micros: u64,
}

/// Proof size split by component, measured with the canonical encoders.
#[derive(Debug, Default, Clone, Copy)]
struct ComponentBytes {
    str_bytes: u64,
    mf_bytes: u64,
    dbhref_bytes: u64,
    rect_bytes: u64,
    frame_bytes: u64,
}

fn encoded_entry_len(entry: &VoEntry) -> u64 {
    let mut buf = Vec::new();
    vo::encode_entry(&mut buf, entry).expect("writing to a Vec cannot fail");
    buf.len() as u64
}

fn measure_components(proof: &Vo) -> ComponentBytes {
    fn walk(entry: &VoEntry, out: &mut ComponentBytes) {
        match entry {
            VoEntry::Str(_) => out.str_bytes += encoded_entry_len(entry),
            VoEntry::Mf { .. } => out.mf_bytes += encoded_entry_len(entry),
            VoEntry::DbhRef { .. } => out.dbhref_bytes += encoded_entry_len(entry),
            VoEntry::Group(entries) => {
                out.frame_bytes += 2;
                for e in entries {
                    walk(e, out);
                }
            }
        }
    }
    let mut out = ComponentBytes::default();
    walk(&proof.root, &mut out);
    let mut buf = Vec::new();
    vo::encode_rect_table(&mut buf, &proof.rects).expect("writing to a Vec cannot fail");
    out.rect_bytes = buf.len() as u64;
    out
}

fn ratio(bytes: u64, count: u64) -> f64 {
    if count == 0 {
        0.0
    } else {
        bytes as f64 / count as f64
    }
}

/// Runs every query against every (fanout, dimension, θ) combination in
/// one mode and returns one record per run.
///
/// The corpus must be sorted and deduplicated. On the plain path the
/// dimension list is ignored and records carry `dim = 0`. `seed` fixes
/// the signing key and the embedding's reference strings, so a sweep is
/// reproducible end to end. Every proof is verified before it is
/// recorded; an honest proof failing verification aborts the sweep.
pub fn bench(
    corpus: &[String],
    queries: &[String],
    thetas: &[u32],
    dims: &[usize],
    fanouts: &[u32],
    mode: VoMode,
    seed: u64,
) -> Result<Vec<BenchRecord>, BenchError> {
    let signer = Ed25519Signer::generate(seed);
    let public_key = signer.public_key();
    let mut out = Vec::new();
    for &fanout in fanouts {
        let tree = MbTree::build(corpus.to_vec(), fanout, &signer)?;
        match mode {
            VoMode::Vs2 => {
                run_grid(&tree, &public_key, None, fanout, 0, queries, thetas, &mut out)?;
            }
            VoMode::Evs2 => {
                for &dim in dims {
                    let f = EmbeddingFunction::build(corpus, dim, seed)?;
                    let d = dim as u32;
                    run_grid(&tree, &public_key, Some(&f), fanout, d, queries, thetas, &mut out)?;
                }
            }
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn run_grid(
    tree: &MbTree,
    public_key: &crate::sign::PublicKey,
    f: Option<&EmbeddingFunction>,
    fanout: u32,
    dim: u32,
    queries: &[String],
    thetas: &[u32],
    out: &mut Vec<BenchRecord>,
) -> Result<(), BenchError> {
    let mode = match f {
        None => VoMode::Vs2,
        Some(_) => VoMode::Evs2,
    };
    for &theta in thetas {
        for (query_id, q) in queries.iter().enumerate() {
            let embedder = f.map(|f| f as &dyn crate::embedding::Embedder);

            let built_at = Instant::now();
            let file = client::build_vo_file(tree, embedder, mode, None, q, theta)?;
            let build_micros = built_at.elapsed().as_micros() as u64;

            let verified_at = Instant::now();
            let report = client::verify_vo_file(&file, q, theta, embedder, public_key)?;
            let verify_micros = verified_at.elapsed().as_micros() as u64;

            if !report.passed() {
                return Err(BenchError::HonestProofRejected {
                    query: q.clone(),
                    report: report.to_string(),
                });
            }

            let c = &report.counters;
            let parts = measure_components(&file.vo);
            let dbh_bytes = parts.dbhref_bytes + parts.rect_bytes;
            out.push(BenchRecord {
                query_id: query_id as u32,
                mode,
                fanout,
                dim,
                theta,
                vo_bytes: c.vo_bytes,
                str_bytes: parts.str_bytes,
                mf_bytes: parts.mf_bytes,
                dbh_bytes,
                frame_bytes: parts.frame_bytes,
                n_r: c.n_r,
                n_c: c.n_c,
                n_f: c.n_f,
                n_mf: c.n_mf,
                n_dbh: c.n_dbh,
                n_ds: c.n_ds,
                sigma_s: ratio(parts.str_bytes, c.n_r + c.n_c + c.n_f),
                sigma_m: ratio(parts.mf_bytes, c.n_mf),
                sigma_d: ratio(dbh_bytes, c.n_dbh),
                edit_ops: c.edit_ops(),
                euclid_ops: c.euclid_rects,
                build_micros,
                verify_micros,
            });
        }
    }
    Ok(())
}

fn mode_name(mode: VoMode) -> &'static str {
    match mode {
        VoMode::Vs2 => "vs2",
        VoMode::Evs2 => "evs2",
    }
}

/// Renders records as CSV with a header row.
pub fn bench_to_csv(records: &[BenchRecord]) -> String {
    let mut out = String::from(
        "query_id,mode,fanout,dim,theta,vo_bytes,str_bytes,mf_bytes,dbh_bytes,frame_bytes,\
         n_r,n_c,n_f,n_mf,n_dbh,n_ds,sigma_s,sigma_m,sigma_d,edit_ops,euclid_ops,\
         build_micros,verify_micros\n",
    );
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{:.2},{:.2},{:.2},{},{},{},{}",
            r.query_id,
            mode_name(r.mode),
            r.fanout,
            r.dim,
            r.theta,
            r.vo_bytes,
            r.str_bytes,
            r.mf_bytes,
            r.dbh_bytes,
            r.frame_bytes,
            r.n_r,
            r.n_c,
            r.n_f,
            r.n_mf,
            r.n_dbh,
            r.n_ds,
            r.sigma_s,
            r.sigma_m,
            r.sigma_d,
            r.edit_ops,
            r.euclid_ops,
            r.build_micros,
            r.verify_micros
        );
    }
    out
}
