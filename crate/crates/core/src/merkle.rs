//! Append-only note-commitment tree of fixed depth.
//!
//! Appends update a frontier (one left-sibling per level) so the current root
//! costs `depth` hashes. Historical roots and authentication paths are
//! recomputed from the stored leaves.

use thiserror::Error;

use crate::notes::NoteCommitment;
use crate::primitives::{digest, Bytes32};

pub const DEFAULT_DEPTH: u8 = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TreeError {
    #[error("commitment tree is full ({0} leaves)")]
    Full(u64),
    #[error("position {position} is not below tree size {size}")]
    OutOfRange { position: u64, size: u64 },
}

fn node_hash(level: u8, left: &Bytes32, right: &Bytes32) -> Bytes32 {
    digest("zclaim/merkle-node", &[&[level], left, right])
}

fn empty_roots(depth: u8) -> Vec<Bytes32> {
    let mut roots = Vec::with_capacity(depth as usize + 1);
    roots.push(digest("zclaim/merkle-empty-leaf", &[]));
    for level in 0..depth {
        let below = roots[level as usize];
        roots.push(node_hash(level, &below, &below));
    }
    roots
}

/// Authentication path from a leaf to the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MerklePath {
    pub position: u64,
    pub siblings: Vec<Bytes32>,
}

impl MerklePath {
    pub fn root_from(&self, leaf: &NoteCommitment) -> Bytes32 {
        let mut node = leaf.0;
        for (level, sibling) in self.siblings.iter().enumerate() {
            node = if (self.position >> level) & 1 == 0 {
                node_hash(level as u8, &node, sibling)
            } else {
                node_hash(level as u8, sibling, &node)
            };
        }
        node
    }

    pub fn verifies(&self, leaf: &NoteCommitment, root: &Bytes32) -> bool {
        self.root_from(leaf) == *root
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitmentTree {
    depth: u8,
    leaves: Vec<NoteCommitment>,
    frontier: Vec<Bytes32>,
    empty: Vec<Bytes32>,
}

impl Default for CommitmentTree {
    fn default() -> Self {
        Self::new(DEFAULT_DEPTH)
    }
}

impl CommitmentTree {
    pub fn new(depth: u8) -> Self {
        assert!((1..=32).contains(&depth), "tree depth must be in 1..=32");
        CommitmentTree {
            depth,
            leaves: Vec::new(),
            frontier: vec![[0u8; 32]; depth as usize],
            empty: empty_roots(depth),
        }
    }

    pub fn depth(&self) -> u8 {
        self.depth
    }

    pub fn size(&self) -> u64 {
        self.leaves.len() as u64
    }

    pub fn capacity(&self) -> u64 {
        1u64 << self.depth
    }

    pub fn leaves(&self) -> &[NoteCommitment] {
        &self.leaves
    }

    pub fn append(&mut self, cm: NoteCommitment) -> Result<u64, TreeError> {
        let position = self.size();
        if position >= self.capacity() {
            return Err(TreeError::Full(position));
        }
        self.leaves.push(cm);
        let mut node = cm.0;
        let mut size = position + 1;
        for level in 0..self.depth {
            if size & 1 == 1 {
                self.frontier[level as usize] = node;
                break;
            }
            node = node_hash(level, &self.frontier[level as usize], &node);
            size >>= 1;
        }
        Ok(position)
    }

    pub fn root(&self) -> Bytes32 {
        if self.size() == self.capacity() {
            // the frontier of a full tree no longer holds the top node
            return self.root_at(self.size());
        }
        let mut node = self.empty[0];
        let mut size = self.size();
        for level in 0..self.depth {
            node = if size & 1 == 1 {
                node_hash(level, &self.frontier[level as usize], &node)
            } else {
                node_hash(level, &node, &self.empty[level as usize])
            };
            size >>= 1;
        }
        node
    }

    /// Drops every leaf at index `>= size` and rebuilds the frontier.
    pub fn truncate(&mut self, size: u64) {
        if size >= self.size() {
            return;
        }
        let kept: Vec<_> = self.leaves[..size as usize].to_vec();
        let mut fresh = CommitmentTree::new(self.depth);
        for cm in kept {
            fresh.append(cm).expect("prefix of a valid tree fits");
        }
        *self = fresh;
    }

    fn levels(&self, size: u64) -> Vec<Vec<Bytes32>> {
        let mut levels = vec![self.leaves[..size as usize].iter().map(|c| c.0).collect::<Vec<_>>()];
        for level in 0..self.depth {
            let below = levels.last().expect("non-empty");
            let pad = self.empty[level as usize];
            let next = below
                .chunks(2)
                .map(|pair| node_hash(level, &pair[0], pair.get(1).unwrap_or(&pad)))
                .collect();
            levels.push(next);
        }
        levels
    }

    /// Root of the tree as it was when it held `size` leaves.
    pub fn root_at(&self, size: u64) -> Bytes32 {
        let size = size.min(self.size());
        self.levels(size)
            .last()
            .and_then(|top| top.first().copied())
            .unwrap_or(self.empty[self.depth as usize])
    }

    /// Path for the leaf at `position` in the tree of the first `size` leaves.
    pub fn path_at(&self, position: u64, size: u64) -> Result<MerklePath, TreeError> {
        if position >= size || size > self.size() {
            return Err(TreeError::OutOfRange { position, size });
        }
        let levels = self.levels(size);
        let siblings = (0..self.depth)
            .map(|level| {
                let idx = (position >> level) ^ 1;
                levels[level as usize]
                    .get(idx as usize)
                    .copied()
                    .unwrap_or(self.empty[level as usize])
            })
            .collect();
        Ok(MerklePath { position, siblings })
    }

    pub fn position_of(&self, cm: &NoteCommitment) -> Option<u64> {
        self.leaves.iter().position(|c| c == cm).map(|p| p as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cm(i: u64) -> NoteCommitment {
        NoteCommitment(digest("test-leaf", &[&i.to_be_bytes()]))
    }

    #[test]
    fn frontier_root_matches_recomputation() {
        let mut tree = CommitmentTree::new(5);
        assert_eq!(tree.root(), tree.root_at(0));
        for i in 0..32 {
            tree.append(cm(i)).unwrap();
            assert_eq!(tree.root(), tree.root_at(tree.size()), "size {}", tree.size());
        }
        assert_eq!(tree.append(cm(99)), Err(TreeError::Full(32)));
    }

    #[test]
    fn paths_verify_against_cited_root_only() {
        let mut tree = CommitmentTree::new(4);
        tree.append(cm(0)).unwrap();
        tree.append(cm(1)).unwrap();
        let root_before_inclusion = tree.root();
        tree.append(cm(2)).unwrap();
        let cited = tree.root();
        tree.append(cm(3)).unwrap();
        tree.append(cm(4)).unwrap();

        let path = tree.path_at(2, 3).unwrap();
        assert!(path.verifies(&cm(2), &cited));
        assert!(!path.verifies(&cm(2), &root_before_inclusion));
        assert!(!path.verifies(&cm(7), &cited));
        // a fresh path at the grown tree verifies against the newer root
        assert!(tree.path_at(2, 5).unwrap().verifies(&cm(2), &tree.root()));
        assert!(tree.path_at(3, 3).is_err());
    }

    #[test]
    fn truncate_restores_earlier_state() {
        let mut tree = CommitmentTree::new(6);
        for i in 0..9 {
            tree.append(cm(i)).unwrap();
        }
        let mut expected = CommitmentTree::new(6);
        for i in 0..4 {
            expected.append(cm(i)).unwrap();
        }
        tree.truncate(4);
        assert_eq!(tree, expected);
        assert_eq!(tree.root(), expected.root());
    }
}
