//! Hashing, canonical encoding and authenticated encryption.
//!
//! Every digest in the crate goes through [`digest`], which hashes a
//! domain tag followed by length-prefixed parts. Integers are encoded as
//! fixed-width big-endian, byte strings with a `u32` big-endian length
//! prefix, so digests are reproducible from the byte layout alone.

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use sha2::{Digest as _, Sha256};

pub type Bytes32 = [u8; 32];

/// Canonical byte encoder used for all digest inputs.
#[derive(Default, Debug, Clone)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u8(mut self, v: u8) -> Self {
        self.buf.push(v);
        self
    }

    pub fn u64(mut self, v: u64) -> Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    /// Fixed-width field, no length prefix.
    pub fn fixed(mut self, bytes: &[u8]) -> Self {
        self.buf.extend_from_slice(bytes);
        self
    }

    /// Length-prefixed byte string.
    pub fn bytes(mut self, bytes: &[u8]) -> Self {
        let len = u32::try_from(bytes.len()).expect("field longer than u32::MAX");
        self.buf.extend_from_slice(&len.to_be_bytes());
        self.buf.extend_from_slice(bytes);
        self
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

/// SHA-256 over `len(tag) || tag || len(p0) || p0 || ...`.
pub fn digest(tag: &str, parts: &[&[u8]]) -> Bytes32 {
    let mut h = Sha256::new();
    h.update((tag.len() as u32).to_be_bytes());
    h.update(tag.as_bytes());
    for p in parts {
        h.update((p.len() as u32).to_be_bytes());
        h.update(p);
    }
    h.finalize().into()
}

/// Authentication failure or malformed ciphertext.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OpenError;

// Keys are single-use (one per ephemeral key), so a fixed nonce is sound.
const AEAD_NONCE: [u8; 12] = [0u8; 12];

pub fn seal(key: &Bytes32, aad: &[u8], plaintext: &[u8]) -> Vec<u8> {
    let cipher = ChaCha20Poly1305::new(Key::from_slice(key));
    cipher
        .encrypt(Nonce::from_slice(&AEAD_NONCE), Payload { msg: plaintext, aad })
        .expect("in-memory encryption cannot fail")
}

pub fn open(key: &Bytes32, aad: &[u8], ciphertext: &[u8]) -> Result<Vec<u8>, OpenError> {
    let cipher = ChaCha20Poly1305::new(Key::from_slice(key));
    cipher
        .decrypt(Nonce::from_slice(&AEAD_NONCE), Payload { msg: ciphertext, aad })
        .map_err(|_| OpenError)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_domain_separated() {
        assert_ne!(digest("a", &[b"x"]), digest("b", &[b"x"]));
        // length prefixes prevent concatenation ambiguity
        assert_ne!(digest("t", &[b"ab", b"c"]), digest("t", &[b"a", b"bc"]));
        assert_eq!(digest("t", &[b"ab"]), digest("t", &[b"ab"]));
    }

    #[test]
    fn encoder_layout() {
        let e = Encoder::new().u64(1).bytes(b"hi").u8(7).finish();
        assert_eq!(e, vec![0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 2, b'h', b'i', 7]);
    }

    #[test]
    fn seal_open() {
        let key = [9u8; 32];
        let ct = seal(&key, b"ad", b"payload");
        assert_eq!(open(&key, b"ad", &ct).unwrap(), b"payload");
        assert!(open(&[8u8; 32], b"ad", &ct).is_err());
        assert!(open(&key, b"other", &ct).is_err());
    }
}
