//! Simulated Zcash ledger.
//!
//! Blocks form a tree keyed by header hash; the main chain is the heaviest
//! branch (work is one per block). The ledger tracks the note-commitment
//! tree and nullifier set of the main chain, a mempool, and at most one
//! private adversary branch that can later be published with [`ZcashChain::reorg_to`].

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::amount::Amount;
use crate::merkle::{MerklePath, DEFAULT_DEPTH};
use crate::notes::{NoteCommitment, Nullifier};
use crate::primitives::{digest, Bytes32, Encoder};
use crate::shielded::{Output, PoolState, ShieldedTx, TxError, TxId};

/// Default shielded fee: 0.00001 ZEC.
pub const DEFAULT_FEE: Amount = Amount(1_000);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct BlockHash(#[serde(serialize_with = "hex32")] pub Bytes32);

fn hex32<S: serde::Serializer>(b: &Bytes32, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&hex::encode(b))
}

impl std::fmt::Display for BlockHash {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BlockHeader {
    pub height: u64,
    pub parent: BlockHash,
    #[serde(serialize_with = "hex32")]
    pub tree_root: Bytes32,
    pub work: u64,
    /// Distinguishes otherwise identical headers on competing branches.
    pub nonce: u64,
}

impl BlockHeader {
    pub fn hash(&self) -> BlockHash {
        let enc = Encoder::new()
            .u64(self.height)
            .fixed(&self.parent.0)
            .fixed(&self.tree_root)
            .u64(self.work)
            .u64(self.nonce)
            .finish();
        BlockHash(digest("zclaim/block-header", &[&enc]))
    }
}

#[derive(Debug, Clone)]
pub struct Block {
    pub header: BlockHeader,
    pub txs: Vec<ShieldedTx>,
    /// Commitment-tree size after this block.
    pub leaf_count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Miner {
    Honest,
    Adversary,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ZcashError {
    #[error(transparent)]
    Tx(#[from] TxError),
    #[error("unknown block {0}")]
    UnknownBlock(BlockHash),
    #[error("block {0} is not on the main chain")]
    NotOnMainChain(BlockHash),
    #[error("branch work {branch} does not exceed main-chain work {main}")]
    InsufficientWork { branch: u64, main: u64 },
    #[error("note commitment not found at the cited block")]
    NotFound,
    #[error("no adversary branch")]
    NoAdversaryBranch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZcashConfig {
    pub tree_depth: u8,
    pub fee: Amount,
}

impl Default for ZcashConfig {
    fn default() -> Self {
        ZcashConfig { tree_depth: DEFAULT_DEPTH, fee: DEFAULT_FEE }
    }
}

#[derive(Debug, Clone)]
struct AdversaryBranch {
    tip: BlockHash,
    state: PoolState,
    pool: Vec<ShieldedTx>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReorgReport {
    pub old_tip: BlockHash,
    pub new_tip: BlockHash,
    pub fork_height: u64,
    /// Number of main-chain blocks abandoned.
    pub depth: u64,
    pub orphaned: Vec<TxId>,
    pub returned_to_mempool: Vec<TxId>,
}

#[derive(Debug, Clone)]
pub struct ZcashChain {
    config: ZcashConfig,
    blocks: BTreeMap<BlockHash, Block>,
    main: Vec<BlockHash>,
    state: PoolState,
    mempool: Vec<ShieldedTx>,
    adversary: Option<AdversaryBranch>,
    mined: u64,
}

impl ZcashChain {
    /// New chain whose genesis block contains `genesis_outputs`.
    pub fn new(config: ZcashConfig, genesis_outputs: Vec<Output>) -> Result<Self, ZcashError> {
        let mut state = PoolState::new(config.tree_depth);
        for o in &genesis_outputs {
            state.append_commitment(o.cm)?;
        }
        let header = BlockHeader {
            height: 0,
            parent: BlockHash([0u8; 32]),
            tree_root: state.tree.root(),
            work: 1,
            nonce: 0,
        };
        let genesis_tx = ShieldedTx { spends: vec![], outputs: genesis_outputs, fee: Amount::ZERO };
        let hash = header.hash();
        let block = Block { header, txs: vec![genesis_tx], leaf_count: state.tree.size() };
        let mut blocks = BTreeMap::new();
        blocks.insert(hash, block);
        Ok(ZcashChain {
            config,
            blocks,
            main: vec![hash],
            state,
            mempool: Vec::new(),
            adversary: None,
            mined: 0,
        })
    }

    pub fn config(&self) -> &ZcashConfig {
        &self.config
    }

    pub fn fee(&self) -> Amount {
        self.config.fee
    }

    pub fn tip(&self) -> BlockHash {
        *self.main.last().expect("genesis always present")
    }

    pub fn height(&self) -> u64 {
        self.main.len() as u64 - 1
    }

    pub fn genesis(&self) -> &BlockHeader {
        &self.blocks[&self.main[0]].header
    }

    pub fn block(&self, hash: &BlockHash) -> Option<&Block> {
        self.blocks.get(hash)
    }

    pub fn header(&self, hash: &BlockHash) -> Option<&BlockHeader> {
        self.blocks.get(hash).map(|b| &b.header)
    }

    pub fn main_block_at(&self, height: u64) -> Option<&Block> {
        self.main.get(height as usize).map(|h| &self.blocks[h])
    }

    pub fn is_on_main(&self, hash: &BlockHash) -> bool {
        self.blocks
            .get(hash)
            .is_some_and(|b| self.main.get(b.header.height as usize) == Some(hash))
    }

    pub fn state(&self) -> &PoolState {
        &self.state
    }

    pub fn mempool(&self) -> &[ShieldedTx] {
        &self.mempool
    }

    pub fn is_spent(&self, nf: &Nullifier) -> bool {
        self.state.is_spent(nf)
    }

    fn mempool_nullifiers(&self) -> BTreeSet<Nullifier> {
        self.mempool.iter().flat_map(|t| t.nullifiers().copied()).collect()
    }

    pub fn submit_shielded_tx(&mut self, tx: ShieldedTx) -> Result<TxId, ZcashError> {
        tx.verify_witnesses(self.config.fee)?;
        self.state.check_spends(&tx, &self.mempool_nullifiers())?;
        let id = tx.txid();
        self.mempool.push(tx);
        Ok(id)
    }

    /// Adds a transaction to the private adversary branch, forking at the
    /// current tip if no branch exists.
    pub fn submit_private_tx(&mut self, tx: ShieldedTx) -> Result<TxId, ZcashError> {
        tx.verify_witnesses(self.config.fee)?;
        if self.adversary.is_none() {
            self.fork_adversary(self.tip())?;
        }
        let adv = self.adversary.as_mut().expect("just forked");
        let reserved = adv.pool.iter().flat_map(|t| t.nullifiers().copied()).collect();
        adv.state.check_spends(&tx, &reserved)?;
        let id = tx.txid();
        adv.pool.push(tx);
        Ok(id)
    }

    /// Start (or restart) the adversary's private branch at main-chain block `at`.
    pub fn fork_adversary(&mut self, at: BlockHash) -> Result<(), ZcashError> {
        let block = self.blocks.get(&at).ok_or(ZcashError::UnknownBlock(at))?;
        if !self.is_on_main(&at) {
            return Err(ZcashError::NotOnMainChain(at));
        }
        let mut state = self.state.clone();
        for h in self.main[block.header.height as usize + 1..].iter().rev() {
            for tx in &self.blocks[h].txs {
                for nf in tx.nullifiers() {
                    state.nullifiers.remove(nf);
                }
            }
        }
        state.truncate_to(block.leaf_count);
        self.adversary = Some(AdversaryBranch { tip: at, state, pool: Vec::new() });
        Ok(())
    }

    pub fn adversary_tip(&self) -> Option<BlockHash> {
        self.adversary.as_ref().map(|a| a.tip)
    }

    pub fn abandon_adversary(&mut self) {
        self.adversary = None;
    }

    pub fn mine_block(&mut self, miner: Miner) -> BlockHeader {
        self.mined += 1;
        match miner {
            Miner::Honest => {
                let txs = std::mem::take(&mut self.mempool);
                let mut included = Vec::with_capacity(txs.len());
                for tx in txs {
                    // mempool entries were validated on submission; a reorg may
                    // have invalidated some since
                    if self.state.apply(&tx).is_ok() {
                        included.push(tx);
                    }
                }
                let parent = self.tip();
                let header = BlockHeader {
                    height: self.height() + 1,
                    parent,
                    tree_root: self.state.tree.root(),
                    work: 1,
                    nonce: self.mined,
                };
                let hash = header.hash();
                let leaf_count = self.state.tree.size();
                self.blocks.insert(hash, Block { header, txs: included, leaf_count });
                self.main.push(hash);
                header
            }
            Miner::Adversary => {
                if self.adversary.is_none() {
                    self.fork_adversary(self.tip()).expect("tip is on main");
                }
                let adv = self.adversary.as_mut().expect("forked above");
                let txs = std::mem::take(&mut adv.pool);
                let mut included = Vec::with_capacity(txs.len());
                for tx in txs {
                    if adv.state.apply(&tx).is_ok() {
                        included.push(tx);
                    }
                }
                let parent = self.blocks[&adv.tip].header;
                let header = BlockHeader {
                    height: parent.height + 1,
                    parent: adv.tip,
                    tree_root: adv.state.tree.root(),
                    work: 1,
                    nonce: self.mined,
                };
                let hash = header.hash();
                adv.tip = hash;
                let leaf_count = adv.state.tree.size();
                self.blocks.insert(hash, Block { header, txs: included, leaf_count });
                header
            }
        }
    }

    fn cumulative_work(&self, tip: &BlockHash) -> u64 {
        // unit work per block
        self.blocks[tip].header.height + 1
    }

    /// Switch the main chain to the branch ending at `branch_tip`.
    pub fn reorg_to(&mut self, branch_tip: BlockHash) -> Result<ReorgReport, ZcashError> {
        if !self.blocks.contains_key(&branch_tip) {
            return Err(ZcashError::UnknownBlock(branch_tip));
        }
        let branch_work = self.cumulative_work(&branch_tip);
        let main_work = self.cumulative_work(&self.tip());
        if branch_work <= main_work {
            return Err(ZcashError::InsufficientWork { branch: branch_work, main: main_work });
        }
        let mut new_blocks = Vec::new();
        let mut cursor = branch_tip;
        while !self.is_on_main(&cursor) {
            new_blocks.push(cursor);
            cursor = self.blocks[&cursor].header.parent;
        }
        new_blocks.reverse();
        let fork_height = self.blocks[&cursor].header.height;

        let mut candidate = self.state.clone();
        let abandoned: Vec<BlockHash> = self.main[fork_height as usize + 1..].to_vec();
        for h in abandoned.iter().rev() {
            for tx in &self.blocks[h].txs {
                for nf in tx.nullifiers() {
                    candidate.nullifiers.remove(nf);
                }
            }
        }
        candidate.truncate_to(self.blocks[&cursor].leaf_count);
        let mut new_txids = BTreeSet::new();
        for h in &new_blocks {
            for tx in &self.blocks[h].txs {
                candidate.apply(tx)?;
                new_txids.insert(tx.txid());
            }
        }

        let old_tip = self.tip();
        let mut orphaned = Vec::new();
        let mut returned = Vec::new();
        let mut old_mempool = std::mem::take(&mut self.mempool);
        let mut resubmit: Vec<ShieldedTx> = Vec::new();
        for h in &abandoned {
            for tx in &self.blocks[h].txs {
                let id = tx.txid();
                if !new_txids.contains(&id) {
                    orphaned.push(id);
                    resubmit.push(tx.clone());
                }
            }
        }
        resubmit.append(&mut old_mempool);

        self.state = candidate;
        self.main.truncate(fork_height as usize + 1);
        self.main.extend(new_blocks.iter().copied());
        if self.adversary.as_ref().is_some_and(|a| self.is_on_main(&a.tip)) {
            self.adversary = None;
        }
        for tx in resubmit {
            let id = tx.txid();
            let is_orphan = orphaned.contains(&id);
            if self.state.check_spends(&tx, &self.mempool_nullifiers()).is_ok() {
                if is_orphan {
                    returned.push(id);
                }
                self.mempool.push(tx);
            }
        }
        Ok(ReorgReport {
            old_tip,
            new_tip: branch_tip,
            fork_height,
            depth: abandoned.len() as u64,
            orphaned,
            returned_to_mempool: returned,
        })
    }

    /// Authentication path for `cm` against the tree root in `at_block`.
    ///
    /// The block must be on the main chain or on the adversary's branch.
    pub fn merkle_path(&self, cm: &NoteCommitment, at_block: &BlockHash) -> Result<MerklePath, ZcashError> {
        let block = self.blocks.get(at_block).ok_or(ZcashError::UnknownBlock(*at_block))?;
        let state = if self.is_on_main(at_block) {
            &self.state
        } else {
            match &self.adversary {
                Some(adv) if self.is_ancestor(at_block, &adv.tip) => &adv.state,
                _ => return Err(ZcashError::NotOnMainChain(*at_block)),
            }
        };
        let pos = state.tree.leaves()[..block.leaf_count as usize]
            .iter()
            .position(|c| c == cm)
            .ok_or(ZcashError::NotFound)? as u64;
        Ok(state.tree.path_at(pos, block.leaf_count).expect("position below leaf count"))
    }

    /// Height of the main-chain block containing output `cm`.
    pub fn inclusion_height(&self, cm: &NoteCommitment) -> Option<u64> {
        let pos = self.state.tree.position_of(cm)?;
        let idx = self.main.partition_point(|h| self.blocks[h].leaf_count <= pos);
        Some(idx as u64)
    }

    pub fn is_ancestor(&self, ancestor: &BlockHash, of: &BlockHash) -> bool {
        let Some(target) = self.blocks.get(ancestor) else { return false };
        let mut cursor = *of;
        loop {
            let Some(b) = self.blocks.get(&cursor) else { return false };
            if cursor == *ancestor {
                return true;
            }
            if b.header.height <= target.header.height {
                return false;
            }
            cursor = b.header.parent;
        }
    }

    /// Replays the main chain from genesis and returns the resulting state.
    pub fn replay_main(&self) -> Result<PoolState, ZcashError> {
        let mut state = PoolState::new(self.config.tree_depth);
        for (i, h) in self.main.iter().enumerate() {
            let block = &self.blocks[h];
            for tx in &block.txs {
                if i == 0 {
                    for o in &tx.outputs {
                        state.append_commitment(o.cm)?;
                    }
                } else {
                    state.apply(tx)?;
                }
            }
        }
        Ok(state)
    }

    pub fn main_chain(&self) -> &[BlockHash] {
        &self.main
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::notes::{encrypt_to, KeyDirectory, Note, SpendingKey};
    use crate::shielded::Spend;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Fixture {
        rng: ChaCha8Rng,
        dir: KeyDirectory,
        key: SpendingKey,
        chain: ZcashChain,
        notes: Vec<Note>,
    }

    fn fixture() -> Fixture {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let key = SpendingKey::random(&mut rng);
        let addr = key.address([1; 11]);
        let mut dir = KeyDirectory::new();
        dir.register(&key, &addr);
        let notes: Vec<Note> =
            (0..3).map(|i| Note::with_random_rcm(addr, Amount(10_000 * (i + 1)), &mut rng)).collect();
        let outputs = notes
            .iter()
            .map(|n| Output::new(*n, encrypt_to(&dir, n, &mut rng).unwrap().0))
            .collect();
        let chain = ZcashChain::new(ZcashConfig { tree_depth: 8, fee: Amount(1_000) }, outputs).unwrap();
        Fixture { rng, dir, key, chain, notes }
    }

    fn pay(f: &mut Fixture, note: Note, outputs: &[u64]) -> ShieldedTx {
        let outs = outputs
            .iter()
            .map(|v| {
                let n = Note::with_random_rcm(note.address, Amount(*v), &mut f.rng);
                Output::new(n, encrypt_to(&f.dir, &n, &mut f.rng).unwrap().0)
            })
            .collect();
        ShieldedTx { spends: vec![Spend::new(note, f.key.clone())], outputs: outs, fee: Amount(1_000) }
    }

    #[test]
    fn spend_mine_and_double_spend() {
        let mut f = fixture();
        let n = f.notes[0];
        let tx = pay(&mut f, n, &[9_000]);
        f.chain.submit_shielded_tx(tx).unwrap();
        // same nullifier while pending
        let again = pay(&mut f, n, &[9_000]);
        assert!(matches!(f.chain.submit_shielded_tx(again.clone()), Err(ZcashError::Tx(TxError::DoubleSpend(_)))));
        let before = f.chain.state().tree.size();
        f.chain.mine_block(Miner::Honest);
        assert_eq!(f.chain.state().tree.size(), before + 1);
        assert!(matches!(f.chain.submit_shielded_tx(again), Err(ZcashError::Tx(TxError::DoubleSpend(_)))));
    }

    #[test]
    fn imbalance_rejected() {
        let mut f = fixture();
        let n = f.notes[0];
        let tx = pay(&mut f, n, &[9_001]);
        assert!(matches!(f.chain.submit_shielded_tx(tx), Err(ZcashError::Tx(TxError::Imbalance { .. }))));
    }

    #[test]
    fn empty_block_keeps_root() {
        let mut f = fixture();
        let root = f.chain.header(&f.chain.tip()).unwrap().tree_root;
        let h = f.chain.mine_block(Miner::Honest);
        assert_eq!(h.tree_root, root);
        assert_eq!(h.height, 1);
    }

    #[test]
    fn two_outputs_grow_tree_by_two() {
        let mut f = fixture();
        let n = f.notes[1];
        let tx = pay(&mut f, n, &[10_000, 9_000]);
        f.chain.submit_shielded_tx(tx).unwrap();
        f.chain.mine_block(Miner::Honest);
        assert_eq!(f.chain.state().tree.size(), 5);
    }

    #[test]
    fn reorg_requires_strictly_more_work_and_orphans_txs() {
        let mut f = fixture();
        for _ in 0..5 {
            f.chain.mine_block(Miner::Honest);
        }
        let fork = f.chain.main_chain()[2];
        f.chain.fork_adversary(fork).unwrap();
        for _ in 0..3 {
            f.chain.mine_block(Miner::Adversary);
        }
        let adv = f.chain.adversary_tip().unwrap();
        assert_eq!(f.chain.header(&adv).unwrap().height, 5);
        assert!(matches!(f.chain.reorg_to(adv), Err(ZcashError::InsufficientWork { .. })));

        // honest tx lands at depth 1 on main
        let n = f.notes[0];
        let tx = pay(&mut f, n, &[9_000]);
        let id = f.chain.submit_shielded_tx(tx).unwrap();
        f.chain.mine_block(Miner::Honest);
        f.chain.mine_block(Miner::Adversary);
        f.chain.mine_block(Miner::Adversary);
        let adv = f.chain.adversary_tip().unwrap();
        let report = f.chain.reorg_to(adv).unwrap();
        assert_eq!(report.depth, 4);
        assert_eq!(report.orphaned, vec![id]);
        assert_eq!(report.returned_to_mempool, vec![id]);
        assert_eq!(f.chain.tip(), adv);
        assert_eq!(f.chain.replay_main().unwrap(), *f.chain.state());
        f.chain.mine_block(Miner::Honest);
        assert!(f.chain.is_spent(&f.chain.block(&f.chain.tip()).unwrap().txs[0].spends[0].nullifier));
    }

    #[test]
    fn merkle_path_found_and_missing() {
        let mut f = fixture();
        let n = f.notes[2];
        let tx = pay(&mut f, n, &[29_000]);
        let cm = tx.outputs[0].cm;
        f.chain.submit_shielded_tx(tx).unwrap();
        let before = f.chain.tip();
        let h = f.chain.mine_block(Miner::Honest);
        let at = h.hash();
        f.chain.mine_block(Miner::Honest);
        let path = f.chain.merkle_path(&cm, &at).unwrap();
        assert!(path.verifies(&cm, &h.tree_root));
        let old_root = f.chain.header(&before).unwrap().tree_root;
        assert!(!path.verifies(&cm, &old_root));
        assert_eq!(f.chain.merkle_path(&cm, &before), Err(ZcashError::NotFound));
        assert_eq!(f.chain.inclusion_height(&cm), Some(1));
        assert_eq!(f.chain.merkle_path(&NoteCommitment([0; 32]), &at), Err(ZcashError::NotFound));
    }
}
