//! One-call entry points over the result-file envelope: build a response
//! for any protocol/mode combination, and verify one against the right
//! checker based on what the envelope says it is.

use thiserror::Error;

use crate::embedding::Embedder;
use crate::mbtree::MbTree;
use crate::report::VerificationReport;
use crate::sign::PublicKey;
use crate::topk::{self, TopKError, TopKQuery};
use crate::vo::{VoFile, VoMode};
use crate::vs2::{self, Query};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RequestError {
    #[error("embedding-assisted requests need an embedding function")]
    MissingEmbedding,
    #[error(transparent)]
    TopK(#[from] TopKError),
}

/// Runs a query in the requested mode and wraps the answer, proof, and
/// root signature into a result file.
pub fn build_vo_file(
    tree: &MbTree,
    f: Option<&dyn Embedder>,
    mode: VoMode,
    k: Option<u32>,
    q: &str,
    theta: u32,
) -> Result<VoFile, RequestError> {
    if mode == VoMode::Evs2 && f.is_none() {
        return Err(RequestError::MissingEmbedding);
    }
    let (results, vo) = match k {
        None => {
            let query = Query::new(q, theta);
            match mode {
                VoMode::Vs2 => vs2::build_vo(tree, &query),
                VoMode::Evs2 => crate::evs2::build_vo_e(tree, f.unwrap(), &query),
            }
        }
        Some(k) => {
            let query = TopKQuery::new(q, k, theta)?;
            match mode {
                VoMode::Vs2 => topk::topk_build_vo(tree, &query),
                VoMode::Evs2 => topk::topk_build_vo_e(tree, f.unwrap(), &query),
            }
        }
    };
    Ok(VoFile {
        mode,
        topk: k,
        results,
        vo,
        signature: tree.root_signature().to_vec(),
    })
}

/// Verifies a result file with the checker its envelope calls for.
pub fn verify_vo_file(
    file: &VoFile,
    q: &str,
    theta: u32,
    f: Option<&dyn Embedder>,
    public_key: &PublicKey,
) -> Result<VerificationReport, RequestError> {
    if file.mode == VoMode::Evs2 && f.is_none() {
        return Err(RequestError::MissingEmbedding);
    }
    let report = match file.topk {
        None => {
            let query = Query::new(q, theta);
            match file.mode {
                VoMode::Vs2 => vs2::verify(
                    &query,
                    &file.results,
                    &file.vo,
                    public_key,
                    &file.signature,
                ),
                VoMode::Evs2 => crate::evs2::verify_e(
                    &query,
                    &file.results,
                    &file.vo,
                    f.unwrap(),
                    public_key,
                    &file.signature,
                ),
            }
        }
        Some(k) => {
            let query = TopKQuery::new(q, k, theta)?;
            match file.mode {
                VoMode::Vs2 => topk::topk_verify(
                    &query,
                    &file.results,
                    &file.vo,
                    public_key,
                    &file.signature,
                ),
                VoMode::Evs2 => topk::topk_verify_e(
                    &query,
                    &file.results,
                    &file.vo,
                    f.unwrap(),
                    public_key,
                    &file.signature,
                ),
            }
        }
    };
    Ok(report)
}
