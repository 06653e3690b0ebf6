//! Request records, lock permits and the protocol error type.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::amount::Amount;
use crate::issuing_chain::{InsufficientBalance, IssuingError, PendingId};
use crate::notes::{ChallengeRejection, Note, NoteCiphertext, NoteCommitment};
use crate::oracle::OracleError;
use crate::primitives::Bytes32;
use crate::relay::InclusionError;
use crate::vault_registry::{RegistryError, VaultId};
use crate::wallet::InsufficientFunds;
use crate::zcash_chain::{BlockHash, ZcashError};

pub type RequestId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum RequestKind {
    Issue,
    Redeem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum RequestState {
    AwaitingMint,
    AwaitIssueConfirm,
    IssueSuccess,
    IssueChallenged,
    /// No mint before the permit expired; the issuer's warranty went to the vault.
    MintExpired,
    AwaitRedeemConfirm,
    RedeemSuccess,
    RedeemChallenged,
    /// The vault never proved a release; the burn was discarded.
    RedeemVoided,
}

impl RequestState {
    pub fn is_terminal(self) -> bool {
        !matches!(self, RequestState::AwaitingMint | RequestState::AwaitIssueConfirm | RequestState::AwaitRedeemConfirm)
    }
}

impl fmt::Display for RequestState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Deltas {
    pub mint: u64,
    pub confirm_issue: u64,
    pub confirm_redeem: u64,
}

impl Deltas {
    /// Mint and release windows leave room for `k` confirmations at one
    /// block per `interval` ticks, plus a few ticks of slack.
    pub fn for_finality(k: u64, interval: u64) -> Self {
        let window = k * interval + 6;
        Deltas { mint: window, confirm_issue: 6, confirm_redeem: window }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LockPermit {
    pub request: RequestId,
    pub issuer: String,
    pub vault: VaultId,
    #[serde(serialize_with = "hex32")]
    pub nonce: Bytes32,
    pub expiry: u64,
}

fn hex32<S: serde::Serializer>(b: &Bytes32, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&hex::encode(b))
}

/// One Issue or Redeem procedure. Fields below `ciphertext` are witness
/// side: known to the requesting party and never serialised.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestRecord {
    pub id: RequestId,
    pub kind: RequestKind,
    pub state: RequestState,
    pub user: String,
    pub vault: VaultId,
    pub opened: u64,
    /// Mint deadline for issues, confirmation deadline for redeems.
    pub deadline: u64,
    pub confirm_deadline: Option<u64>,
    pub pending: Option<PendingId>,
    /// Lock commitment for issues, release commitment for redeems.
    pub cm: Option<NoteCommitment>,
    pub ciphertext: Option<NoteCiphertext>,
    pub nonce: Option<Bytes32>,
    pub locks: Vec<Note>,
    pub released: Vec<Note>,
    pub release_note: Option<Note>,
    /// wZEC note created by the mint, or returned if a burn is voided.
    pub wzec_note: Option<Note>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("unknown user {0}")]
    UnknownUser(String),
    #[error("unknown request {0}")]
    UnknownRequest(RequestId),
    #[error("{0} has no valid proof of capacity")]
    VaultUnavailable(VaultId),
    #[error("{0} already serves a request of this kind")]
    VaultBusy(VaultId),
    #[error("{0} holds a valid proof of insolvency")]
    RedeemExempt(VaultId),
    #[error("request {request} is in state {state}")]
    WrongState { request: RequestId, state: RequestState },
    #[error("deadline {deadline} of request {request} has passed")]
    DeadlinePassed { request: RequestId, deadline: u64 },
    #[error("request {0} has no lock transaction")]
    NoLock(RequestId),
    #[error("ciphertext does not decrypt to the committed note")]
    DecryptMismatch,
    #[error("the vault already released funds and must confirm")]
    AlreadyReleased,
    #[error("challenge rejected: {0:?}")]
    ChallengeRejected(ChallengeRejection),
    #[error("note {0} is not included at any relay-final block")]
    NotIncluded(NoteCommitment),
    #[error("proof is for commitment {got}, the burn names {expected}")]
    ProofMismatch { expected: NoteCommitment, got: NoteCommitment },
    #[error("recipient key unknown")]
    UnknownKey,
    #[error("no adversary branch")]
    NoAdversaryBranch,
    #[error("block {0} unknown")]
    UnknownBlock(BlockHash),
    #[error(transparent)]
    Funds(#[from] InsufficientFunds),
    #[error(transparent)]
    Balance(#[from] InsufficientBalance),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Issuing(#[from] IssuingError),
    #[error(transparent)]
    Zcash(#[from] ZcashError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Inclusion(#[from] InclusionError),
}

impl ProtocolError {
    /// Short code used in the trace's outcome column.
    pub fn code(&self) -> String {
        use ProtocolError::*;
        match self {
            UnknownUser(_) => "unknown-user".into(),
            UnknownRequest(_) => "unknown-request".into(),
            VaultUnavailable(_) => "vault-unavailable".into(),
            VaultBusy(_) => "vault-busy".into(),
            RedeemExempt(_) => "redeem-exempt".into(),
            WrongState { .. } => "wrong-state".into(),
            DeadlinePassed { .. } => "deadline-passed".into(),
            NoLock(_) => "no-lock".into(),
            DecryptMismatch => "decrypt-mismatch".into(),
            AlreadyReleased => "already-released".into(),
            ChallengeRejected(ChallengeRejection::InvalidWitness) => "challenge-invalid-witness".into(),
            ChallengeRejected(ChallengeRejection::CiphertextCorrect) => "challenge-ciphertext-correct".into(),
            NotIncluded(_) => "not-included".into(),
            ProofMismatch { .. } => "proof-mismatch".into(),
            UnknownKey => "unknown-key".into(),
            NoAdversaryBranch => "no-adversary-branch".into(),
            UnknownBlock(_) => "unknown-block".into(),
            Funds(_) => "insufficient-zec".into(),
            Balance(_) => "insufficient-i".into(),
            Registry(e) => match e {
                RegistryError::InconsistentWitness => "inconsistent-witness".into(),
                RegistryError::CapacityViolated => "capacity-violated".into(),
                RegistryError::Undercollateralized => "undercollateralized".into(),
                RegistryError::NotInsolvent => "not-insolvent".into(),
                _ => "registry".into(),
            },
            Issuing(e) => match e {
                IssuingError::LockReplayed => "lock-replayed".into(),
                IssuingError::NonceReplayed => "nonce-replayed".into(),
                IssuingError::RcmNotDerived => "rcm-not-derived".into(),
                IssuingError::ExceedsVmax => "exceeds-vmax".into(),
                IssuingError::ValueRelation => "value-relation".into(),
                IssuingError::Inclusion(InclusionError::NotFinal) => "not-final".into(),
                IssuingError::Inclusion(_) => "bad-inclusion".into(),
                IssuingError::Tx(_) => "bad-spend".into(),
                _ => "bad-statement".into(),
            },
            Zcash(_) => "zcash-rejected".into(),
            Oracle(_) => "feed-unavailable".into(),
            Inclusion(InclusionError::NotFinal) => "not-final".into(),
            Inclusion(_) => "bad-inclusion".into(),
        }
    }
}

/// Amounts the tests and metrics need about a finished request. Witness side.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RequestAmounts {
    pub zec_locked: Amount,
    pub wzec_minted: Amount,
    pub wzec_burned: Amount,
    pub zec_released: Amount,
}
