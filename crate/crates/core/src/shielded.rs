//! Shielded transactions shared by both ledgers.
//!
//! A transaction carries public descriptions (nullifiers, commitments,
//! ciphertexts) and the witnesses the simulated verifier consumes in place
//! of a zero-knowledge proof. Public serialisation never includes witnesses.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::amount::Amount;
use crate::merkle::{CommitmentTree, TreeError};
use crate::notes::{commit_note, derive_nullifier, Note, NoteCiphertext, NoteCommitment, Nullifier, SpendingKey};
use crate::primitives::{digest, Bytes32};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TxError {
    #[error("nullifier {0} already spent")]
    DoubleSpend(Nullifier),
    #[error("nullifier repeated inside the transaction")]
    DuplicateNullifier,
    #[error("spent note is not in the commitment tree")]
    UnknownNote,
    #[error("spend witness does not match its nullifier or address")]
    BadSpendWitness,
    #[error("output witness does not match its commitment")]
    BadOutputWitness,
    #[error("value imbalance: spends {spends}, outputs {outputs}, fee {fee}")]
    Imbalance { spends: Amount, outputs: Amount, fee: Amount },
    #[error("fee {got} differs from the required {required}")]
    WrongFee { got: Amount, required: Amount },
    #[error(transparent)]
    Tree(#[from] TreeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct TxId(#[serde(serialize_with = "hex_bytes")] pub Bytes32);

fn hex_bytes<S: serde::Serializer>(b: &Bytes32, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&hex::encode(b))
}

impl std::fmt::Display for TxId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

#[derive(Debug, Clone)]
pub struct SpendWitness {
    pub note: Note,
    pub key: SpendingKey,
}

#[derive(Debug, Clone)]
pub struct Spend {
    pub nullifier: Nullifier,
    pub witness: SpendWitness,
}

impl Spend {
    pub fn new(note: Note, key: SpendingKey) -> Self {
        let nullifier = derive_nullifier(&note, key.nullifier_key());
        Spend { nullifier, witness: SpendWitness { note, key } }
    }
}

#[derive(Debug, Clone)]
pub struct Output {
    pub cm: NoteCommitment,
    pub ciphertext: NoteCiphertext,
    /// Witness side.
    pub note: Note,
}

impl Output {
    pub fn new(note: Note, ciphertext: NoteCiphertext) -> Self {
        Output { cm: commit_note(&note), ciphertext, note }
    }
}

#[derive(Debug, Clone)]
pub struct ShieldedTx {
    pub spends: Vec<Spend>,
    pub outputs: Vec<Output>,
    pub fee: Amount,
}

/// The observer's view of a transaction.
#[derive(Debug, Clone, Serialize)]
pub struct PublicTx {
    pub txid: TxId,
    pub nullifiers: Vec<Nullifier>,
    pub commitments: Vec<NoteCommitment>,
    pub ciphertexts: Vec<NoteCiphertext>,
}

impl ShieldedTx {
    pub fn txid(&self) -> TxId {
        let mut parts: Vec<Vec<u8>> = Vec::new();
        for s in &self.spends {
            parts.push(s.nullifier.0.to_vec());
        }
        for o in &self.outputs {
            parts.push(o.cm.0.to_vec());
            parts.push(o.ciphertext.digest().to_vec());
        }
        parts.push(self.fee.value().to_be_bytes().to_vec());
        let refs: Vec<&[u8]> = parts.iter().map(|p| p.as_slice()).collect();
        TxId(digest("zclaim/txid", &refs))
    }

    pub fn nullifiers(&self) -> impl Iterator<Item = &Nullifier> {
        self.spends.iter().map(|s| &s.nullifier)
    }

    pub fn commitments(&self) -> impl Iterator<Item = &NoteCommitment> {
        self.outputs.iter().map(|o| &o.cm)
    }

    pub fn public_view(&self) -> PublicTx {
        PublicTx {
            txid: self.txid(),
            nullifiers: self.nullifiers().copied().collect(),
            commitments: self.commitments().copied().collect(),
            ciphertexts: self.outputs.iter().map(|o| o.ciphertext.clone()).collect(),
        }
    }

    /// Ledger-independent checks: witnesses match public data, no nullifier
    /// repeats inside the transaction, value balance with the given fee.
    pub fn verify_witnesses(&self, required_fee: Amount) -> Result<(), TxError> {
        if self.fee != required_fee {
            return Err(TxError::WrongFee { got: self.fee, required: required_fee });
        }
        let mut seen = BTreeSet::new();
        for s in &self.spends {
            if !seen.insert(s.nullifier) {
                return Err(TxError::DuplicateNullifier);
            }
            let w = &s.witness;
            if !w.key.owns(&w.note.address)
                || derive_nullifier(&w.note, w.key.nullifier_key()) != s.nullifier
            {
                return Err(TxError::BadSpendWitness);
            }
        }
        for o in &self.outputs {
            if commit_note(&o.note) != o.cm {
                return Err(TxError::BadOutputWitness);
            }
        }
        let spends: Amount = self.spends.iter().map(|s| s.witness.note.value).sum();
        let outputs: Amount = self.outputs.iter().map(|o| o.note.value).sum();
        if outputs.checked_add(self.fee) != Some(spends) {
            return Err(TxError::Imbalance { spends, outputs, fee: self.fee });
        }
        Ok(())
    }
}

/// Commitment tree plus nullifier set of one ledger (or one branch of it).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolState {
    pub tree: CommitmentTree,
    pub nullifiers: BTreeSet<Nullifier>,
    commitments: BTreeSet<NoteCommitment>,
}

impl PoolState {
    pub fn new(depth: u8) -> Self {
        PoolState {
            tree: CommitmentTree::new(depth),
            nullifiers: BTreeSet::new(),
            commitments: BTreeSet::new(),
        }
    }

    pub fn contains_commitment(&self, cm: &NoteCommitment) -> bool {
        self.commitments.contains(cm)
    }

    pub fn is_spent(&self, nf: &Nullifier) -> bool {
        self.nullifiers.contains(nf)
    }

    pub fn append_commitment(&mut self, cm: NoteCommitment) -> Result<u64, TxError> {
        let pos = self.tree.append(cm)?;
        self.commitments.insert(cm);
        Ok(pos)
    }

    /// Ledger checks against this state (spent notes exist, nullifiers fresh)
    /// and against an extra reserved set (e.g. a mempool).
    pub fn check_spends(&self, tx: &ShieldedTx, reserved: &BTreeSet<Nullifier>) -> Result<(), TxError> {
        for s in &tx.spends {
            if self.is_spent(&s.nullifier) || reserved.contains(&s.nullifier) {
                return Err(TxError::DoubleSpend(s.nullifier));
            }
            if !self.contains_commitment(&commit_note(&s.witness.note)) {
                return Err(TxError::UnknownNote);
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, tx: &ShieldedTx) -> Result<(), TxError> {
        self.check_spends(tx, &BTreeSet::new())?;
        if self.tree.size() + tx.outputs.len() as u64 > self.tree.capacity() {
            return Err(TxError::Tree(TreeError::Full(self.tree.size())));
        }
        for s in &tx.spends {
            self.nullifiers.insert(s.nullifier);
        }
        for o in &tx.outputs {
            self.append_commitment(o.cm)?;
        }
        Ok(())
    }

    /// Undo `tx`, which must be the most recently applied transaction.
    pub fn unapply(&mut self, tx: &ShieldedTx) {
        for s in &tx.spends {
            self.nullifiers.remove(&s.nullifier);
        }
        let new_size = self.tree.size() - tx.outputs.len() as u64;
        self.tree.truncate(new_size);
        self.commitments = self.tree.leaves().iter().copied().collect();
    }

    pub fn truncate_to(&mut self, size: u64) {
        self.tree.truncate(size);
        self.commitments = self.tree.leaves().iter().copied().collect();
    }
}
