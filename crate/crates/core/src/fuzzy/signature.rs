//! Pluggable signature schemes and key-buffer hygiene.

use std::sync::atomic::{AtomicUsize, Ordering};

use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use zeroize::Zeroize;

use crate::error::{Error, Result};

static ZEROIZED: AtomicUsize = AtomicUsize::new(0);

/// How many key buffers have been wiped so far in this process.
pub fn zeroized_key_buffers() -> usize {
    ZEROIZED.load(Ordering::SeqCst)
}

/// Owns secret bytes and wipes them on drop.
pub(crate) struct Secret<T: Zeroize>(pub(crate) T);

impl<T: Zeroize> Drop for Secret<T> {
    fn drop(&mut self) {
        self.0.zeroize();
        ZEROIZED.fetch_add(1, Ordering::SeqCst);
    }
}

/// A digital signature algorithm keyed by a 32-byte seed.
pub trait SignatureScheme: Sync {
    fn id(&self) -> &'static str;
    fn public_key(&self, seed: &[u8; 32]) -> Vec<u8>;
    fn sign(&self, seed: &[u8; 32], message: &[u8]) -> Vec<u8>;
    /// `Ok(false)` for a well-formed signature that does not verify;
    /// `Err` for malformed keys or signatures.
    fn verify(&self, pk: &[u8], message: &[u8], signature: &[u8]) -> Result<bool>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Ed25519;

impl Ed25519 {
    pub const ID: &'static str = "ed25519";
}

impl SignatureScheme for Ed25519 {
    fn id(&self) -> &'static str {
        Self::ID
    }

    fn public_key(&self, seed: &[u8; 32]) -> Vec<u8> {
        SigningKey::from_bytes(seed).verifying_key().to_bytes().to_vec()
    }

    fn sign(&self, seed: &[u8; 32], message: &[u8]) -> Vec<u8> {
        SigningKey::from_bytes(seed).sign(message).to_bytes().to_vec()
    }

    fn verify(&self, pk: &[u8], message: &[u8], signature: &[u8]) -> Result<bool> {
        let pk: [u8; 32] = pk
            .try_into()
            .map_err(|_| Error::Validation(format!("ed25519 key of {} bytes", pk.len())))?;
        let key = VerifyingKey::from_bytes(&pk)
            .map_err(|e| Error::Validation(format!("ed25519 key: {e}")))?;
        let sig = Signature::from_slice(signature)
            .map_err(|e| Error::Validation(format!("ed25519 signature: {e}")))?;
        Ok(key.verify(message, &sig).is_ok())
    }
}

pub fn scheme_by_id(id: &str) -> Result<&'static dyn SignatureScheme> {
    match id {
        Ed25519::ID => Ok(&Ed25519),
        other => Err(Error::Validation(format!("unknown signature algorithm {other:?}"))),
    }
}
