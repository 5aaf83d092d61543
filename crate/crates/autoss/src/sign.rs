//! Root signatures over tree digests.
//!
//! The data owner signs the 32-byte root digest once at build time; the
//! client later checks a recomputed digest against that signature using
//! only the owner's public key. The provider is swappable: the default is
//! Ed25519, and a transparent debug signer (the "signature" is a tagged
//! copy of the digest) ships for tests that need to see through the
//! crypto.

use ed25519_dalek::{Signature, Signer as _, SigningKey, Verifier as _, VerifyingKey};
use rand::{RngCore as _, SeedableRng as _};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::hashing::Digest32;

/// Scheme id of the transparent debug signer.
pub const SCHEME_DEBUG: u8 = 0;
/// Scheme id of the Ed25519 provider.
pub const SCHEME_ED25519: u8 = 1;

/// Marker byte prefixed to debug "signatures".
const DEBUG_SIG_MARKER: u8 = 0xD5;

/// Errors from decoding key material.
#[derive(Debug, Error)]
pub enum KeyError {
    #[error("unknown signature scheme id {0:#04x}")]
    UnknownScheme(u8),
    #[error("{kind} key truncated or mis-framed")]
    Malformed { kind: &'static str },
    #[error("{kind} key has {got} bytes where {expected} were expected")]
    BadLength { kind: &'static str, expected: usize, got: usize },
    #[error("public key bytes do not form a valid Ed25519 point")]
    InvalidPoint(#[source] ed25519_dalek::SignatureError),
}

/// Signs root digests and exposes the matching public key.
pub trait SignatureProvider {
    /// Scheme id stored in key files so the verifier can dispatch.
    fn scheme(&self) -> u8;
    /// Signature over a 32-byte digest. Deterministic for both shipped
    /// schemes.
    fn sign(&self, digest: &Digest32) -> Vec<u8>;
    /// The public half handed to clients.
    fn public_key(&self) -> PublicKey;
    /// Raw private key bytes for persistence.
    fn private_key_bytes(&self) -> Vec<u8>;
}

/// A scheme-tagged public key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicKey {
    scheme: u8,
    bytes: Vec<u8>,
}

impl PublicKey {
    /// Checks `signature` over `digest`. Any malformed input verifies as
    /// false rather than erroring: from the client's point of view a key
    /// or signature that cannot be parsed proves nothing.
    pub fn verify(&self, digest: &Digest32, signature: &[u8]) -> bool {
        match self.scheme {
            SCHEME_DEBUG => {
                signature.len() == 33
                    && signature[0] == DEBUG_SIG_MARKER
                    && &signature[1..] == digest
            }
            SCHEME_ED25519 => {
                let Ok(key_bytes) = <[u8; 32]>::try_from(self.bytes.as_slice()) else {
                    return false;
                };
                let Ok(key) = VerifyingKey::from_bytes(&key_bytes) else {
                    return false;
                };
                let Ok(sig) = Signature::from_slice(signature) else {
                    return false;
                };
                key.verify(digest, &sig).is_ok()
            }
            _ => false,
        }
    }

    /// Serializes as `scheme ‖ u32 BE length ‖ bytes`.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = vec![self.scheme];
        out.extend_from_slice(&(self.bytes.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.bytes);
        out
    }

    pub fn decode(data: &[u8]) -> Result<Self, KeyError> {
        let (scheme, bytes) = decode_key_frame(data, "public")?;
        match scheme {
            SCHEME_DEBUG => Ok(PublicKey { scheme, bytes }),
            SCHEME_ED25519 => {
                if bytes.len() != 32 {
                    return Err(KeyError::BadLength { kind: "public", expected: 32, got: bytes.len() });
                }
                Ok(PublicKey { scheme, bytes })
            }
            other => Err(KeyError::UnknownScheme(other)),
        }
    }
}

fn decode_key_frame(data: &[u8], kind: &'static str) -> Result<(u8, Vec<u8>), KeyError> {
    if data.len() < 5 {
        return Err(KeyError::Malformed { kind });
    }
    let scheme = data[0];
    let len = u32::from_be_bytes(data[1..5].try_into().expect("4 bytes")) as usize;
    if data.len() != 5 + len {
        return Err(KeyError::Malformed { kind });
    }
    Ok((scheme, data[5..].to_vec()))
}

/// Transparent test signer: signature = marker byte ‖ digest.
#[derive(Debug, Default, Clone, Copy)]
pub struct DebugSigner;

impl SignatureProvider for DebugSigner {
    fn scheme(&self) -> u8 {
        SCHEME_DEBUG
    }

    fn sign(&self, digest: &Digest32) -> Vec<u8> {
        let mut sig = vec![DEBUG_SIG_MARKER];
        sig.extend_from_slice(digest);
        sig
    }

    fn public_key(&self) -> PublicKey {
        PublicKey { scheme: SCHEME_DEBUG, bytes: Vec::new() }
    }

    fn private_key_bytes(&self) -> Vec<u8> {
        Vec::new()
    }
}

/// Ed25519 provider; signing is deterministic per RFC 8032.
pub struct Ed25519Signer {
    key: SigningKey,
}

impl Ed25519Signer {
    /// Derives a key pair from a seed, so builds are reproducible.
    pub fn generate(seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut secret = [0u8; 32];
        rng.fill_bytes(&mut secret);
        Ed25519Signer { key: SigningKey::from_bytes(&secret) }
    }

    pub fn from_private_key_bytes(bytes: &[u8]) -> Result<Self, KeyError> {
        let secret: [u8; 32] = bytes
            .try_into()
            .map_err(|_| KeyError::BadLength { kind: "private", expected: 32, got: bytes.len() })?;
        Ok(Ed25519Signer { key: SigningKey::from_bytes(&secret) })
    }
}

impl SignatureProvider for Ed25519Signer {
    fn scheme(&self) -> u8 {
        SCHEME_ED25519
    }

    fn sign(&self, digest: &Digest32) -> Vec<u8> {
        self.key.sign(digest).to_vec()
    }

    fn public_key(&self) -> PublicKey {
        PublicKey { scheme: SCHEME_ED25519, bytes: self.key.verifying_key().to_bytes().to_vec() }
    }

    fn private_key_bytes(&self) -> Vec<u8> {
        self.key.to_bytes().to_vec()
    }
}

/// Serializes a provider's private half as `scheme ‖ u32 BE length ‖ bytes`.
pub fn encode_private_key(provider: &dyn SignatureProvider) -> Vec<u8> {
    let bytes = provider.private_key_bytes();
    let mut out = vec![provider.scheme()];
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(&bytes);
    out
}

/// Reconstructs a provider from an encoded private key.
pub fn decode_private_key(data: &[u8]) -> Result<Box<dyn SignatureProvider>, KeyError> {
    let (scheme, bytes) = decode_key_frame(data, "private")?;
    match scheme {
        SCHEME_DEBUG => Ok(Box::new(DebugSigner)),
        SCHEME_ED25519 => Ok(Box::new(Ed25519Signer::from_private_key_bytes(&bytes)?)),
        other => Err(KeyError::UnknownScheme(other)),
    }
}
