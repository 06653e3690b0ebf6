//! Shielded wallets: one key, one address, and the notes it can spend.

use std::collections::BTreeMap;

use rand::RngCore;
use thiserror::Error;

use crate::amount::Amount;
use crate::notes::{commit_note, decrypt_note, derive_nullifier, Address, Note, NoteCommitment, Nullifier, SpendingKey};
use crate::shielded::{Output, ShieldedTx};
use crate::zcash_chain::{BlockHash, ZcashChain};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("insufficient funds: have {have}, need {need}")]
pub struct InsufficientFunds {
    pub have: Amount,
    pub need: Amount,
}

#[derive(Debug, Clone)]
pub struct Wallet {
    key: SpendingKey,
    address: Address,
    notes: BTreeMap<NoteCommitment, Note>,
    synced: Option<(u64, BlockHash)>,
}

impl Wallet {
    pub fn new<R: RngCore>(rng: &mut R) -> Self {
        let key = SpendingKey::random(rng);
        let mut d = [0u8; 11];
        rng.fill_bytes(&mut d);
        let address = key.address(d);
        Wallet { key, address, notes: BTreeMap::new(), synced: None }
    }

    pub fn key(&self) -> &SpendingKey {
        &self.key
    }

    pub fn address(&self) -> Address {
        self.address
    }

    pub fn nullifier(&self, note: &Note) -> Nullifier {
        derive_nullifier(note, self.key.nullifier_key())
    }

    /// Records a note the wallet learned about out of band.
    pub fn add_note(&mut self, note: Note) {
        if self.key.owns(&note.address) {
            self.notes.insert(commit_note(&note), note);
        }
    }

    pub fn remove_note(&mut self, cm: &NoteCommitment) -> Option<Note> {
        self.notes.remove(cm)
    }

    pub fn notes(&self) -> impl Iterator<Item = &Note> {
        self.notes.values()
    }

    pub fn balance(&self) -> Amount {
        self.notes.values().map(|n| n.value).sum()
    }

    /// Trial-decrypts an output; returns the note if it is ours and consistent.
    pub fn try_receive(&self, output: &Output) -> Option<Note> {
        let secret = self.key.shared_secret(&output.ciphertext.ephemeral_public);
        let note = decrypt_note(&output.ciphertext, &secret).ok()?;
        (self.key.owns(&note.address) && commit_note(&note) == output.cm).then_some(note)
    }

    /// Brings the unspent-note set in line with the chain's main branch.
    ///
    /// Scans only new blocks unless a reorg replaced the last scanned block.
    pub fn sync(&mut self, chain: &ZcashChain) {
        let start = match self.synced {
            Some((h, hash)) if chain.main_block_at(h).is_some_and(|b| b.header.hash() == hash) => h + 1,
            _ => {
                self.notes.clear();
                0
            }
        };
        for height in start..=chain.height() {
            let block = chain.main_block_at(height).expect("height within main chain");
            for tx in &block.txs {
                for o in &tx.outputs {
                    if let Some(note) = self.try_receive(o) {
                        self.notes.insert(o.cm, note);
                    }
                }
            }
        }
        let nk = *self.key.nullifier_key();
        self.notes.retain(|_, n| !chain.is_spent(&derive_nullifier(n, &nk)));
        self.synced = Some((chain.height(), chain.tip()));
    }

    /// Picks unspent notes covering `target`, largest first, skipping any
    /// whose nullifier `exclude` reports as unavailable.
    pub fn select(&self, target: Amount, exclude: impl Fn(&Nullifier) -> bool) -> Result<Vec<Note>, InsufficientFunds> {
        let mut candidates: Vec<Note> =
            self.notes.values().filter(|n| !exclude(&self.nullifier(n))).copied().collect();
        candidates.sort_by(|a, b| b.value.cmp(&a.value).then(a.rcm.cmp(&b.rcm)));
        let mut picked = Vec::new();
        let mut sum = Amount::ZERO;
        for n in candidates {
            if sum >= target {
                break;
            }
            sum += n.value;
            picked.push(n);
        }
        if sum < target {
            return Err(InsufficientFunds { have: sum, need: target });
        }
        Ok(picked)
    }
}

/// Spends `inputs` owned by `wallet` into `outputs` plus change back to the wallet.
pub fn build_payment<R: RngCore>(
    wallet: &Wallet,
    inputs: &[Note],
    outputs: Vec<Output>,
    fee: Amount,
    change_encrypt: impl FnOnce(&Note, &mut R) -> Option<Output>,
    rng: &mut R,
) -> Option<ShieldedTx> {
    use crate::shielded::Spend;
    let total_in: Amount = inputs.iter().map(|n| n.value).sum();
    let total_out: Amount = outputs.iter().map(|o| o.note.value).sum::<Amount>() + fee;
    let change = total_in.checked_sub(total_out)?;
    let mut outs = outputs;
    if !change.is_zero() {
        let note = Note::with_random_rcm(wallet.address(), change, rng);
        outs.push(change_encrypt(&note, rng)?);
    }
    Some(ShieldedTx {
        spends: inputs.iter().map(|n| Spend::new(*n, wallet.key().clone())).collect(),
        outputs: outs,
        fee,
    })
}
