//! Simulated issuing chain: a shielded wZEC pool, Mint and Burn transfers
//! with pending/confirm/void lifecycle, the relay, and the transparent
//! balance map of the native currency.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::amount::{Amount, Fraction};
use crate::merkle::{MerklePath, DEFAULT_DEPTH};
use crate::notes::{commit_note, derive_rcm, Address, Note, NoteCommitment, Nullifier};
use crate::primitives::Bytes32;
use crate::relay::{InclusionError, Relay};
use crate::shielded::{PoolState, ShieldedTx, SpendWitness, TxError, TxId};
use crate::zcash_chain::BlockHash;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{user} holds {have}, needs {need}")]
pub struct InsufficientBalance {
    pub user: String,
    pub have: Amount,
    pub need: Amount,
}

/// Transparent balances of the issuing chain's native currency, plus
/// warranty collateral locked per request.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CurrencyLedger {
    balances: BTreeMap<String, Amount>,
    warranty: BTreeMap<u64, (String, Amount)>,
}

impl CurrencyLedger {
    pub fn credit(&mut self, user: &str, amount: Amount) {
        *self.balances.entry(user.to_string()).or_default() += amount;
    }

    pub fn debit(&mut self, user: &str, amount: Amount) -> Result<(), InsufficientBalance> {
        let have = self.balance(user);
        let rest = have.checked_sub(amount).ok_or_else(|| InsufficientBalance {
            user: user.to_string(),
            have,
            need: amount,
        })?;
        self.balances.insert(user.to_string(), rest);
        Ok(())
    }

    pub fn balance(&self, user: &str) -> Amount {
        self.balances.get(user).copied().unwrap_or_default()
    }

    pub fn lock_warranty(&mut self, user: &str, request: u64, amount: Amount) -> Result<(), InsufficientBalance> {
        self.debit(user, amount)?;
        self.warranty.insert(request, (user.to_string(), amount));
        Ok(())
    }

    pub fn warranty(&self, request: u64) -> Option<&(String, Amount)> {
        self.warranty.get(&request)
    }

    /// Returns a warranty to its owner.
    pub fn release_warranty(&mut self, request: u64) -> Option<Amount> {
        let (user, amount) = self.warranty.remove(&request)?;
        self.credit(&user, amount);
        Some(amount)
    }

    pub fn take_warranty(&mut self, request: u64) -> Option<(String, Amount)> {
        self.warranty.remove(&request)
    }

    /// Balances plus locked warranties.
    pub fn total(&self) -> Amount {
        self.balances.values().sum::<Amount>() + self.warranty.values().map(|(_, a)| *a).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct PendingId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TxKind {
    Mint,
    Burn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TxStatus {
    Pending,
    Confirmed,
    Voided,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PendingTx {
    pub id: PendingId,
    pub kind: TxKind,
    pub status: TxStatus,
    pub deadline: u64,
    pub request_id: u64,
}

/// Public part of a Mint transfer.
#[derive(Debug, Clone, Serialize)]
pub struct MintStatement {
    pub lock_cm: NoteCommitment,
    #[serde(serialize_with = "hex32")]
    pub nonce: Bytes32,
    pub anchor: BlockHash,
    #[serde(skip)]
    pub path: MerklePath,
    pub vault_address: Address,
    pub new_wzec_cm: NoteCommitment,
}

#[derive(Debug, Clone)]
pub struct MintWitness {
    pub lock_note: Note,
    pub wzec_note: Note,
}

#[derive(Debug, Clone)]
pub struct MintTransfer {
    pub statement: MintStatement,
    pub witness: MintWitness,
}

/// Public part of a Burn transfer.
#[derive(Debug, Clone, Serialize)]
pub struct BurnStatement {
    pub release_cm: NoteCommitment,
    pub nullifiers: Vec<Nullifier>,
    pub change_cm: Option<NoteCommitment>,
    pub refund_cm: NoteCommitment,
}

#[derive(Debug, Clone)]
pub struct BurnWitness {
    pub spends: Vec<SpendWitness>,
    pub change: Option<Note>,
    pub refund: Note,
    pub release_note: Note,
}

#[derive(Debug, Clone)]
pub struct BurnTransfer {
    pub statement: BurnStatement,
    pub witness: BurnWitness,
}

fn hex32<S: serde::Serializer>(b: &Bytes32, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&hex::encode(b))
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IssuingError {
    #[error("lock commitment already used by an earlier mint")]
    LockReplayed,
    #[error("permit nonce already used by an earlier mint")]
    NonceReplayed,
    #[error("witness does not open the lock commitment")]
    LockCommitment,
    #[error("lock note is not addressed to the vault")]
    WrongRecipient,
    #[error("lock trapdoor is not derived from the permit nonce")]
    RcmNotDerived,
    #[error("amount exceeds v_max")]
    ExceedsVmax,
    #[error("amounts violate the fee relation")]
    ValueRelation,
    #[error("witness does not open the output commitment")]
    OutputCommitment,
    #[error("burn spends nothing")]
    EmptyBurn,
    #[error(transparent)]
    Inclusion(#[from] InclusionError),
    #[error(transparent)]
    Tx(#[from] TxError),
    #[error("unknown pending transaction {0:?}")]
    UnknownPending(PendingId),
    #[error("transaction {0:?} already finalized")]
    AlreadyFinal(PendingId),
}

/// Fee relation used by both transfers: `out = floor(in * (1 - f))`.
pub fn after_fee(amount: Amount, f: Fraction) -> Amount {
    f.complement().expect("fee below 1").mul_floor(amount)
}

#[derive(Debug, Clone)]
enum Escrow {
    Mint { wzec_note: Note, lock_value: Amount },
    Burn { burned: Amount, refund: Note, release: Amount },
}

#[derive(Debug, Clone)]
struct TxRecord {
    public: PendingTx,
    escrow: Escrow,
}

/// Totals for invariant checks. Witness side.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SupplyTotals {
    pub minted: Amount,
    pub burned: Amount,
    pub escrowed: Amount,
    pub unspent: Amount,
}

#[derive(Debug, Clone)]
pub struct IssuingChain {
    pub relay: Relay,
    pub currency: CurrencyLedger,
    pool: PoolState,
    note_values: BTreeMap<NoteCommitment, Amount>,
    unspent_value: Amount,
    used_lock_cms: BTreeSet<NoteCommitment>,
    used_nonces: BTreeSet<Bytes32>,
    txs: BTreeMap<PendingId, TxRecord>,
    supply: Amount,
    minted: Amount,
    burned: Amount,
}

impl IssuingChain {
    pub fn new(relay: Relay) -> Self {
        IssuingChain {
            relay,
            currency: CurrencyLedger::default(),
            pool: PoolState::new(DEFAULT_DEPTH),
            note_values: BTreeMap::new(),
            unspent_value: Amount::ZERO,
            used_lock_cms: BTreeSet::new(),
            used_nonces: BTreeSet::new(),
            txs: BTreeMap::new(),
            supply: Amount::ZERO,
            minted: Amount::ZERO,
            burned: Amount::ZERO,
        }
    }

    pub fn supply(&self) -> Amount {
        self.supply
    }

    pub fn pool(&self) -> &PoolState {
        &self.pool
    }

    pub fn is_spent(&self, nf: &Nullifier) -> bool {
        self.pool.is_spent(nf)
    }

    pub fn lock_cm_used(&self, cm: &NoteCommitment) -> bool {
        self.used_lock_cms.contains(cm)
    }

    pub fn pending(&self, id: PendingId) -> Option<&PendingTx> {
        self.txs.get(&id).map(|r| &r.public)
    }

    pub fn transactions(&self) -> impl Iterator<Item = &PendingTx> {
        self.txs.values().map(|r| &r.public)
    }

    pub fn totals(&self) -> SupplyTotals {
        let escrowed = self
            .txs
            .values()
            .filter(|r| r.public.status == TxStatus::Pending)
            .map(|r| match r.escrow {
                Escrow::Burn { burned, .. } => burned,
                Escrow::Mint { .. } => Amount::ZERO,
            })
            .sum();
        SupplyTotals { minted: self.minted, burned: self.burned, escrowed, unspent: self.unspent_value }
    }

    fn next_id(&self) -> PendingId {
        PendingId(self.txs.len() as u64)
    }

    fn append_note(&mut self, note: &Note) -> Result<(), TxError> {
        let cm = commit_note(note);
        self.pool.append_commitment(cm)?;
        self.note_values.insert(cm, note.value);
        self.unspent_value += note.value;
        Ok(())
    }

    /// Statement checks for a Mint transfer, without side effects.
    pub fn verify_mint(&self, t: &MintTransfer, v_max: Amount, f: Fraction) -> Result<(), IssuingError> {
        let s = &t.statement;
        let w = &t.witness;
        if self.used_lock_cms.contains(&s.lock_cm) {
            return Err(IssuingError::LockReplayed);
        }
        if self.used_nonces.contains(&s.nonce) {
            return Err(IssuingError::NonceReplayed);
        }
        if commit_note(&w.lock_note) != s.lock_cm {
            return Err(IssuingError::LockCommitment);
        }
        if w.lock_note.address != s.vault_address {
            return Err(IssuingError::WrongRecipient);
        }
        if w.lock_note.rcm != derive_rcm(&s.nonce) {
            return Err(IssuingError::RcmNotDerived);
        }
        if w.lock_note.value > v_max {
            return Err(IssuingError::ExceedsVmax);
        }
        if w.wzec_note.value != after_fee(w.lock_note.value, f) {
            return Err(IssuingError::ValueRelation);
        }
        if commit_note(&w.wzec_note) != s.new_wzec_cm {
            return Err(IssuingError::OutputCommitment);
        }
        self.relay.verify_note_inclusion(&s.lock_cm, &s.path, &s.anchor)?;
        Ok(())
    }

    pub fn submit_mint_tx(
        &mut self,
        t: &MintTransfer,
        v_max: Amount,
        f: Fraction,
        deadline: u64,
        request_id: u64,
    ) -> Result<PendingId, IssuingError> {
        self.verify_mint(t, v_max, f)?;
        self.used_lock_cms.insert(t.statement.lock_cm);
        self.used_nonces.insert(t.statement.nonce);
        let id = self.next_id();
        let public = PendingTx { id, kind: TxKind::Mint, status: TxStatus::Pending, deadline, request_id };
        let escrow = Escrow::Mint { wzec_note: t.witness.wzec_note, lock_value: t.witness.lock_note.value };
        self.txs.insert(id, TxRecord { public, escrow });
        Ok(id)
    }

    /// Statement checks for a Burn transfer; returns the burned amount.
    pub fn verify_burn(&self, t: &BurnTransfer, v_max: Amount, f: Fraction) -> Result<Amount, IssuingError> {
        let s = &t.statement;
        let w = &t.witness;
        if w.spends.is_empty() || w.spends.len() != s.nullifiers.len() {
            return Err(IssuingError::EmptyBurn);
        }
        let spend_tx = ShieldedTx {
            spends: w
                .spends
                .iter()
                .zip(&s.nullifiers)
                .map(|(sw, nf)| crate::shielded::Spend { nullifier: *nf, witness: sw.clone() })
                .collect(),
            outputs: vec![],
            fee: Amount::ZERO,
        };
        // spend witnesses and nullifier freshness, as in any shielded spend
        let mut seen = BTreeSet::new();
        for sp in &spend_tx.spends {
            if !seen.insert(sp.nullifier) {
                return Err(TxError::DuplicateNullifier.into());
            }
            let sw = &sp.witness;
            if !sw.key.owns(&sw.note.address) || crate::notes::derive_nullifier(&sw.note, sw.key.nullifier_key()) != sp.nullifier {
                return Err(TxError::BadSpendWitness.into());
            }
        }
        self.pool.check_spends(&spend_tx, &BTreeSet::new())?;
        let spent: Amount = w.spends.iter().map(|sw| sw.note.value).sum();
        let change = w.change.map(|n| n.value).unwrap_or_default();
        if w.change.map(|n| commit_note(&n)) != s.change_cm || commit_note(&w.refund) != s.refund_cm {
            return Err(IssuingError::OutputCommitment);
        }
        let burned = spent.checked_sub(change).ok_or(TxError::Imbalance { spends: spent, outputs: change, fee: Amount::ZERO })?;
        if burned.is_zero() || w.refund.value != burned {
            return Err(IssuingError::ValueRelation);
        }
        if burned > v_max {
            return Err(IssuingError::ExceedsVmax);
        }
        if commit_note(&w.release_note) != s.release_cm {
            return Err(IssuingError::OutputCommitment);
        }
        if w.release_note.value != after_fee(burned, f) {
            return Err(IssuingError::ValueRelation);
        }
        Ok(burned)
    }

    pub fn submit_burn_tx(
        &mut self,
        t: &BurnTransfer,
        v_max: Amount,
        f: Fraction,
        deadline: u64,
        request_id: u64,
    ) -> Result<PendingId, IssuingError> {
        let burned = self.verify_burn(t, v_max, f)?;
        for (nf, sw) in t.statement.nullifiers.iter().zip(&t.witness.spends) {
            self.pool.nullifiers.insert(*nf);
            self.unspent_value = self.unspent_value.saturating_sub(sw.note.value);
        }
        if let Some(change) = &t.witness.change {
            self.append_note(change)?;
        }
        let id = self.next_id();
        let public = PendingTx { id, kind: TxKind::Burn, status: TxStatus::Pending, deadline, request_id };
        let escrow = Escrow::Burn { burned, refund: t.witness.refund, release: t.witness.release_note.value };
        self.txs.insert(id, TxRecord { public, escrow });
        Ok(id)
    }

    /// Terminal transition of a pending transaction.
    pub fn finalize_tx(&mut self, id: PendingId, outcome: TxStatus) -> Result<(), IssuingError> {
        let rec = self.txs.get(&id).ok_or(IssuingError::UnknownPending(id))?;
        if rec.public.status != TxStatus::Pending || outcome == TxStatus::Pending {
            return Err(IssuingError::AlreadyFinal(id));
        }
        match (rec.escrow.clone(), outcome) {
            (Escrow::Mint { wzec_note, .. }, TxStatus::Confirmed) => {
                self.append_note(&wzec_note)?;
                self.supply += wzec_note.value;
                self.minted += wzec_note.value;
            }
            (Escrow::Burn { burned, .. }, TxStatus::Confirmed) => {
                self.supply = self.supply.checked_sub(burned).expect("burn escrow is part of supply");
                self.burned += burned;
            }
            (Escrow::Burn { refund, .. }, TxStatus::Voided) => {
                self.append_note(&refund)?;
            }
            (Escrow::Mint { .. }, _) => {}
            (Escrow::Burn { .. }, TxStatus::Pending) => unreachable!("checked above"),
        }
        self.txs.get_mut(&id).expect("present").public.status = outcome;
        Ok(())
    }

    /// Amount minted by a pending or confirmed mint. Witness side.
    pub fn mint_amounts(&self, id: PendingId) -> Option<(Amount, Amount)> {
        match self.txs.get(&id)?.escrow {
            Escrow::Mint { wzec_note, lock_value } => Some((lock_value, wzec_note.value)),
            Escrow::Burn { .. } => None,
        }
    }

    /// `(burned, released)` for a burn. Witness side.
    pub fn burn_amounts(&self, id: PendingId) -> Option<(Amount, Amount)> {
        match self.txs.get(&id)?.escrow {
            Escrow::Burn { burned, release, .. } => Some((burned, release)),
            Escrow::Mint { .. } => None,
        }
    }

    pub fn wzec_transfer(&mut self, tx: &ShieldedTx) -> Result<TxId, IssuingError> {
        tx.verify_witnesses(Amount::ZERO)?;
        self.pool.check_spends(tx, &BTreeSet::new())?;
        for s in &tx.spends {
            self.pool.nullifiers.insert(s.nullifier);
            self.unspent_value = self.unspent_value.saturating_sub(s.witness.note.value);
        }
        for o in &tx.outputs {
            self.append_note(&o.note)?;
        }
        Ok(tx.txid())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fee_relation_examples() {
        let f = Fraction::new(2, 100).unwrap();
        assert_eq!(after_fee(Amount(50), f), Amount(49));
        assert_eq!(after_fee(Amount::coins(49), f), Amount(4_802_000_000));
    }

    #[test]
    fn currency_ledger_warranty_cycle() {
        let mut l = CurrencyLedger::default();
        l.credit("a", Amount(10));
        assert!(l.lock_warranty("a", 1, Amount(11)).is_err());
        l.lock_warranty("a", 1, Amount(4)).unwrap();
        assert_eq!(l.balance("a"), Amount(6));
        assert_eq!(l.total(), Amount(10));
        assert_eq!(l.release_warranty(1), Some(Amount(4)));
        assert_eq!(l.release_warranty(1), None);
        assert_eq!(l.balance("a"), Amount(10));
    }
}
