//! Chain relay: the issuing chain's view of Zcash headers.
//!
//! Headers are accepted when their parent is known. The best tip is the
//! header with the greatest cumulative work; a block is final once it is an
//! ancestor of the best tip at depth at least `k`.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::merkle::MerklePath;
use crate::notes::NoteCommitment;
use crate::zcash_chain::{BlockHash, BlockHeader};

pub const DEFAULT_FINALITY_DEPTH: u64 = 24;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RelayError {
    #[error("parent {0} of submitted header is unknown")]
    UnknownParent(BlockHash),
    #[error("header height does not follow its parent")]
    BadHeight,
    #[error("header carries no work")]
    NoWork,
    #[error("header already stored")]
    Duplicate,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InclusionError {
    #[error("block {0} is unknown to the relay")]
    UnknownBlock(BlockHash),
    #[error("block is not final")]
    NotFinal,
    #[error("Merkle path does not fold to the block's tree root")]
    BadPath,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Accepted {
    pub tip_changed: bool,
    /// Finalized blocks that left the best chain because of this header.
    pub finality_reverted: u64,
}

#[derive(Debug, Clone)]
struct Entry {
    header: BlockHeader,
    cumulative_work: u128,
}

#[derive(Debug, Clone)]
pub struct Relay {
    k: u64,
    headers: BTreeMap<BlockHash, Entry>,
    best_tip: BlockHash,
    /// Best chain indexed by height.
    main: Vec<BlockHash>,
    finality_reversions: u64,
}

impl Relay {
    pub fn new(genesis: BlockHeader, k: u64) -> Self {
        let hash = genesis.hash();
        let mut headers = BTreeMap::new();
        headers.insert(hash, Entry { header: genesis, cumulative_work: genesis.work as u128 });
        Relay { k, headers, best_tip: hash, main: vec![hash], finality_reversions: 0 }
    }

    pub fn finality_depth(&self) -> u64 {
        self.k
    }

    pub fn best_tip(&self) -> BlockHash {
        self.best_tip
    }

    pub fn best_height(&self) -> u64 {
        self.main.len() as u64 - 1 + self.genesis_height()
    }

    fn genesis_height(&self) -> u64 {
        self.headers[&self.main[0]].header.height
    }

    pub fn contains(&self, hash: &BlockHash) -> bool {
        self.headers.contains_key(hash)
    }

    pub fn header(&self, hash: &BlockHash) -> Option<&BlockHeader> {
        self.headers.get(hash).map(|e| &e.header)
    }

    pub fn len(&self) -> usize {
        self.headers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.headers.is_empty()
    }

    /// Count of finalized blocks ever dropped from the best chain.
    pub fn finality_reversions(&self) -> u64 {
        self.finality_reversions
    }

    /// Height of the highest final block on the best chain.
    pub fn finalized_height(&self) -> Option<u64> {
        self.best_height().checked_sub(self.k).filter(|h| *h >= self.genesis_height())
    }

    pub fn submit_header(&mut self, header: BlockHeader) -> Result<Accepted, RelayError> {
        let hash = header.hash();
        if self.headers.contains_key(&hash) {
            return Err(RelayError::Duplicate);
        }
        let parent = self.headers.get(&header.parent).ok_or(RelayError::UnknownParent(header.parent))?;
        if header.height != parent.header.height + 1 {
            return Err(RelayError::BadHeight);
        }
        if header.work == 0 {
            return Err(RelayError::NoWork);
        }
        let cumulative_work = parent.cumulative_work + header.work as u128;
        self.headers.insert(hash, Entry { header, cumulative_work });

        if cumulative_work <= self.headers[&self.best_tip].cumulative_work {
            return Ok(Accepted { tip_changed: false, finality_reverted: 0 });
        }
        let finalized_before = self.finalized_height();
        // walk back to the fork point with the current best chain
        let base = self.genesis_height();
        let mut branch = Vec::new();
        let mut cursor = hash;
        loop {
            let h = self.headers[&cursor].header.height;
            if self.main.get((h - base) as usize) == Some(&cursor) {
                break;
            }
            branch.push(cursor);
            cursor = self.headers[&cursor].header.parent;
        }
        let fork_height = self.headers[&cursor].header.height;
        let reverted = match finalized_before {
            Some(fin) if fin > fork_height => fin - fork_height,
            _ => 0,
        };
        self.finality_reversions += reverted;
        self.main.truncate((fork_height - base + 1) as usize);
        self.main.extend(branch.into_iter().rev());
        self.best_tip = hash;
        Ok(Accepted { tip_changed: true, finality_reverted: reverted })
    }

    fn on_best_chain(&self, hash: &BlockHash) -> Option<u64> {
        let h = self.headers.get(hash)?.header.height;
        let idx = h.checked_sub(self.genesis_height())? as usize;
        (self.main.get(idx) == Some(hash)).then_some(h)
    }

    pub fn depth(&self, hash: &BlockHash) -> Option<u64> {
        self.on_best_chain(hash).map(|h| self.best_height() - h)
    }

    pub fn is_final(&self, hash: &BlockHash) -> bool {
        self.depth(hash).is_some_and(|d| d >= self.k)
    }

    pub fn verify_note_inclusion(
        &self,
        cm: &NoteCommitment,
        path: &MerklePath,
        block: &BlockHash,
    ) -> Result<(), InclusionError> {
        let header = self.header(block).ok_or(InclusionError::UnknownBlock(*block))?;
        if !self.is_final(block) {
            return Err(InclusionError::NotFinal);
        }
        if !path.verifies(cm, &header.tree_root) {
            return Err(InclusionError::BadPath);
        }
        Ok(())
    }

    /// Best-chain block at `height`, if any.
    pub fn block_at(&self, height: u64) -> Option<BlockHash> {
        height.checked_sub(self.genesis_height()).and_then(|i| self.main.get(i as usize)).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn child(parent: &BlockHeader, nonce: u64) -> BlockHeader {
        BlockHeader {
            height: parent.height + 1,
            parent: parent.hash(),
            tree_root: parent.tree_root,
            work: 1,
            nonce,
        }
    }

    fn genesis() -> BlockHeader {
        BlockHeader { height: 0, parent: BlockHash([0; 32]), tree_root: [7; 32], work: 1, nonce: 0 }
    }

    fn extend(relay: &mut Relay, from: BlockHeader, n: usize, salt: u64) -> Vec<BlockHeader> {
        let mut out = Vec::new();
        let mut cur = from;
        for i in 0..n {
            cur = child(&cur, salt * 1000 + i as u64);
            relay.submit_header(cur).unwrap();
            out.push(cur);
        }
        out
    }

    #[test]
    fn accepts_children_and_rejects_orphans() {
        let g = genesis();
        let mut relay = Relay::new(g, 2);
        let a = child(&g, 1);
        assert!(relay.submit_header(a).unwrap().tip_changed);
        assert_eq!(relay.best_tip(), a.hash());
        let orphan = child(&child(&a, 2), 3);
        assert_eq!(relay.submit_header(orphan), Err(RelayError::UnknownParent(orphan.parent)));
        assert!(!relay.contains(&orphan.hash()));
        assert_eq!(relay.submit_header(a), Err(RelayError::Duplicate));
        let mut bad = child(&a, 4);
        bad.height = 5;
        assert_eq!(relay.submit_header(bad), Err(RelayError::BadHeight));
    }

    #[test]
    fn finality_boundary() {
        let g = genesis();
        let mut relay = Relay::new(g, 3);
        let chain = extend(&mut relay, g, 5, 1);
        // tip height 5; depth of block at height h is 5 - h
        assert!(relay.is_final(&chain[1].hash())); // depth 3
        assert!(!relay.is_final(&chain[2].hash())); // depth 2
        assert!(relay.is_final(&g.hash()));
        assert!(!relay.is_final(&BlockHash([1; 32])));
        assert_eq!(relay.finalized_height(), Some(2));
    }

    #[test]
    fn heavier_branch_takes_over_and_abandoned_blocks_lose_finality() {
        let g = genesis();
        let mut relay = Relay::new(g, 2);
        let main = extend(&mut relay, g, 4, 1);
        assert!(relay.is_final(&main[1].hash()));
        // equal-work competitor does not switch
        let side = extend(&mut relay, main[0], 3, 2);
        assert_eq!(relay.best_tip(), main[3].hash());
        let extra = child(side.last().unwrap(), 99);
        let acc = relay.submit_header(extra).unwrap();
        assert!(acc.tip_changed);
        assert_eq!(relay.best_tip(), extra.hash());
        // main[1] sat at height 2 with finalized height 2; fork at height 1
        assert_eq!(acc.finality_reverted, 1);
        assert_eq!(relay.finality_reversions(), 1);
        assert!(!relay.is_final(&main[1].hash()));
        assert!(relay.is_final(&side[1].hash()));
        assert_eq!(relay.block_at(3), Some(side[1].hash()));
    }

    #[test]
    fn inclusion_requires_finality_and_path() {
        use crate::merkle::CommitmentTree;
        use crate::primitives::digest;
        let mut tree = CommitmentTree::new(4);
        let cm = NoteCommitment(digest("leaf", &[b"a"]));
        let other = NoteCommitment(digest("leaf", &[b"b"]));
        tree.append(cm).unwrap();
        tree.append(other).unwrap();
        let g = BlockHeader { tree_root: tree.root(), ..genesis() };
        let mut relay = Relay::new(g, 2);
        let path = tree.path_at(0, 2).unwrap();
        assert_eq!(relay.verify_note_inclusion(&cm, &path, &g.hash()), Err(InclusionError::NotFinal));
        let c = extend(&mut relay, g, 1, 1);
        assert_eq!(relay.verify_note_inclusion(&cm, &path, &g.hash()), Err(InclusionError::NotFinal));
        extend(&mut relay, c[0], 1, 2);
        assert_eq!(relay.verify_note_inclusion(&cm, &path, &g.hash()), Ok(()));
        assert_eq!(relay.verify_note_inclusion(&other, &path, &g.hash()), Err(InclusionError::BadPath));
    }
}
