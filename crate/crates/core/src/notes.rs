//! Notes and the simulated shielded-pool primitives built on them.
//!
//! Commitments and nullifiers are domain-separated SHA-256 digests over the
//! canonical note encoding. Key agreement is simulated: a recipient's
//! `pk_d` is a digest of its incoming viewing key, and the shared secret for
//! an ephemeral key is a digest of `(ivk, epk)`. Senders obtain the same
//! secret through a [`KeyDirectory`], which stands in for the
//! Diffie-Hellman step.

use std::collections::BTreeMap;
use std::fmt;

use rand::RngCore;
use serde::{Serialize, Serializer};

use crate::amount::Amount;
use crate::primitives::{digest, open, seal, Bytes32, Encoder};

macro_rules! digest_newtype {
    ($(#[$m:meta])* $name:ident) => {
        $(#[$m])*
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub Bytes32);

        impl $name {
            pub fn as_bytes(&self) -> &Bytes32 {
                &self.0
            }

            pub fn to_hex(&self) -> String {
                hex::encode(self.0)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({}..)", stringify!($name), &self.to_hex()[..12])
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.to_hex())
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_hex())
            }
        }
    };
}

digest_newtype!(
    /// Commitment to a full [`Note`].
    NoteCommitment
);
digest_newtype!(
    /// Spend tag revealed when a note is consumed.
    Nullifier
);
digest_newtype!(
    /// Symmetric key shared by a note's sender and recipient.
    SharedSecret
);

pub const DIVERSIFIER_LEN: usize = 11;
/// diversifier || pk_d || value || rcm
pub const NOTE_ENCODING_LEN: usize = DIVERSIFIER_LEN + 32 + 8 + 32;

/// Shielded payment address `(d, pk_d)`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Address {
    pub diversifier: [u8; DIVERSIFIER_LEN],
    pub pk_d: Bytes32,
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({}..)", &hex::encode(self.pk_d)[..12])
    }
}

impl Serialize for Address {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{}:{}", hex::encode(self.diversifier), hex::encode(self.pk_d)))
    }
}

/// Key material for one simulated shielded account.
#[derive(Clone, PartialEq, Eq)]
pub struct SpendingKey {
    ivk: Bytes32,
    nk: Bytes32,
}

impl fmt::Debug for SpendingKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SpendingKey(..)")
    }
}

impl SpendingKey {
    pub fn random<R: RngCore>(rng: &mut R) -> Self {
        let mut ivk = [0u8; 32];
        let mut nk = [0u8; 32];
        rng.fill_bytes(&mut ivk);
        rng.fill_bytes(&mut nk);
        SpendingKey { ivk, nk }
    }

    pub fn incoming_viewing_key(&self) -> &Bytes32 {
        &self.ivk
    }

    pub fn nullifier_key(&self) -> &Bytes32 {
        &self.nk
    }

    /// Public tag of the nullifier key, folded into every address so that
    /// spend authority is bound to the address.
    pub fn nullifier_key_tag(&self) -> Bytes32 {
        digest("zclaim/nk-tag", &[&self.nk])
    }

    pub fn address(&self, diversifier: [u8; DIVERSIFIER_LEN]) -> Address {
        Address { diversifier, pk_d: derive_pk_d(&self.ivk, &self.nullifier_key_tag(), &diversifier) }
    }

    pub fn owns(&self, address: &Address) -> bool {
        self.address(address.diversifier) == *address
    }

    /// Recipient side of the key agreement.
    pub fn shared_secret(&self, ephemeral_public: &Bytes32) -> SharedSecret {
        shared_secret_from_ivk(&self.ivk, ephemeral_public)
    }
}

fn derive_pk_d(ivk: &Bytes32, nk_tag: &Bytes32, diversifier: &[u8; DIVERSIFIER_LEN]) -> Bytes32 {
    digest("zclaim/pk_d", &[ivk, nk_tag, diversifier])
}

fn shared_secret_from_ivk(ivk: &Bytes32, epk: &Bytes32) -> SharedSecret {
    SharedSecret(digest("zclaim/shared-secret", &[ivk, epk]))
}

pub fn ephemeral_public(esk: &Bytes32) -> Bytes32 {
    digest("zclaim/epk", &[esk])
}

/// Stand-in for Diffie-Hellman: maps published `pk_d` values back to the
/// viewing key that produced them, so a sender can derive the secret a
/// recipient will derive. Only the simulation holds this table.
#[derive(Debug, Clone, Default)]
pub struct KeyDirectory {
    ivk_by_pk_d: BTreeMap<Bytes32, Bytes32>,
}

impl KeyDirectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, key: &SpendingKey, address: &Address) {
        self.ivk_by_pk_d.insert(address.pk_d, key.ivk);
    }

    /// Sender side: `(epk, secret)` for a fresh ephemeral secret `esk`.
    pub fn agree(&self, recipient: &Address, esk: &Bytes32) -> Option<(Bytes32, SharedSecret)> {
        let ivk = self.ivk_by_pk_d.get(&recipient.pk_d)?;
        let epk = ephemeral_public(esk);
        Some((epk, shared_secret_from_ivk(ivk, &epk)))
    }
}

/// A spendable value record.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Note {
    pub address: Address,
    pub value: Amount,
    pub rcm: Bytes32,
}

impl Note {
    pub fn new(address: Address, value: Amount, rcm: Bytes32) -> Self {
        Note { address, value, rcm }
    }

    pub fn with_random_rcm<R: RngCore>(address: Address, value: Amount, rng: &mut R) -> Self {
        let mut rcm = [0u8; 32];
        rng.fill_bytes(&mut rcm);
        Note { address, value, rcm }
    }

    pub fn encode(&self) -> Vec<u8> {
        Encoder::new()
            .fixed(&self.address.diversifier)
            .fixed(&self.address.pk_d)
            .u64(self.value.value())
            .fixed(&self.rcm)
            .finish()
    }

    pub fn decode(bytes: &[u8]) -> Option<Note> {
        if bytes.len() != NOTE_ENCODING_LEN {
            return None;
        }
        let (d, rest) = bytes.split_at(DIVERSIFIER_LEN);
        let (pk_d, rest) = rest.split_at(32);
        let (value, rcm) = rest.split_at(8);
        Some(Note {
            address: Address {
                diversifier: d.try_into().ok()?,
                pk_d: pk_d.try_into().ok()?,
            },
            value: Amount(u64::from_be_bytes(value.try_into().ok()?)),
            rcm: rcm.try_into().ok()?,
        })
    }
}

pub fn commit_note(note: &Note) -> NoteCommitment {
    NoteCommitment(digest("zclaim/note-commitment", &[&note.encode()]))
}

/// Commitment trapdoor bound to a lock-permit nonce.
pub fn derive_rcm(nonce: &Bytes32) -> Bytes32 {
    digest("zclaim/rcm-from-nonce", &[nonce])
}

pub fn derive_nullifier(note: &Note, nullifier_key: &Bytes32) -> Nullifier {
    let cm = commit_note(note);
    Nullifier(digest("zclaim/nullifier", &[nullifier_key, &cm.0]))
}

/// Authenticated encryption of a note under a shared secret.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct NoteCiphertext {
    pub ephemeral_public: Bytes32,
    pub payload: Vec<u8>,
}

impl NoteCiphertext {
    pub fn digest(&self) -> Bytes32 {
        digest("zclaim/ciphertext", &[&self.ephemeral_public, &self.payload])
    }
}

impl Serialize for NoteCiphertext {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{}:{}", hex::encode(self.ephemeral_public), hex::encode(&self.payload)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("note decryption failed")]
pub struct DecryptError;

pub fn encrypt_note(note: &Note, secret: &SharedSecret, ephemeral_public: Bytes32) -> NoteCiphertext {
    NoteCiphertext { ephemeral_public, payload: seal(&secret.0, &ephemeral_public, &note.encode()) }
}

pub fn decrypt_note(ct: &NoteCiphertext, secret: &SharedSecret) -> Result<Note, DecryptError> {
    let plain = open(&secret.0, &ct.ephemeral_public, &ct.payload).map_err(|_| DecryptError)?;
    Note::decode(&plain).ok_or(DecryptError)
}

/// Encrypts `note` to its own address, drawing a fresh ephemeral key from `rng`.
/// Returns `None` when the recipient's key is not in the directory.
pub fn encrypt_to<R: RngCore>(
    keys: &KeyDirectory,
    note: &Note,
    rng: &mut R,
) -> Option<(NoteCiphertext, SharedSecret)> {
    let mut esk = [0u8; 32];
    rng.fill_bytes(&mut esk);
    let (epk, secret) = keys.agree(&note.address, &esk)?;
    Some((encrypt_note(note, &secret, epk), secret))
}

/// Witness that a revealed secret is the one the recipient derives for a
/// ciphertext's ephemeral key. Never leaves the prover's side in public views.
#[derive(Clone, PartialEq, Eq)]
pub struct CorrectnessWitness {
    pub ivk: Bytes32,
    pub nk_tag: Bytes32,
}

impl fmt::Debug for CorrectnessWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CorrectnessWitness(..)")
    }
}

impl CorrectnessWitness {
    pub fn from_key(key: &SpendingKey) -> Self {
        CorrectnessWitness { ivk: key.ivk, nk_tag: key.nullifier_key_tag() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChallengeRejection {
    /// The witness does not bind the revealed secret to the recipient and ciphertext.
    InvalidWitness,
    /// The ciphertext decrypts to a note with the claimed commitment.
    CiphertextCorrect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChallengeVerdict {
    Upheld,
    Rejected(ChallengeRejection),
}

/// On-chain check of a challenge against a published ciphertext.
///
/// Upheld iff the witness is valid and decryption under the revealed secret
/// either fails or yields a note whose commitment differs from `claimed_cm`.
pub fn verify_challenge(
    ct: &NoteCiphertext,
    revealed: &SharedSecret,
    claimed_cm: &NoteCommitment,
    recipient: &Address,
    witness: &CorrectnessWitness,
) -> ChallengeVerdict {
    let binds_address = derive_pk_d(&witness.ivk, &witness.nk_tag, &recipient.diversifier) == recipient.pk_d;
    let binds_secret = shared_secret_from_ivk(&witness.ivk, &ct.ephemeral_public) == *revealed;
    if !(binds_address && binds_secret) {
        return ChallengeVerdict::Rejected(ChallengeRejection::InvalidWitness);
    }
    match decrypt_note(ct, revealed) {
        Ok(note) if commit_note(&note) == *claimed_cm => {
            ChallengeVerdict::Rejected(ChallengeRejection::CiphertextCorrect)
        }
        _ => ChallengeVerdict::Upheld,
    }
}
