use std::collections::BTreeSet;

use zclaim_core::amount::{Amount, Fraction};
use zclaim_core::merkle::CommitmentTree;
use zclaim_core::notes::commit_note;
use zclaim_core::protocol::*;
use zclaim_core::relay::InclusionError;
use zclaim_core::zcash_chain::ZcashChain;

fn bridge(k: u64) -> Bridge {
    let cfg = BridgeConfig { relay_k: k, deltas: Deltas::for_finality(k, 1), seed: 21, ..Default::default() };
    BridgeBuilder::new(cfg)
        .user("alice", Amount::coins(100), Amount::coins(10))
        .user("bob", Amount::coins(100), Amount::coins(10))
        .vault("v0", Amount::coins(1_000))
        .vault("v1", Amount::coins(1_000))
        .rate(0, Fraction::new(1, 1).unwrap())
        .build()
        .unwrap()
}

/// Rebuilds the commitment tree block by block and compares every header.
fn assert_roots_replay(z: &ZcashChain) {
    let mut tree = CommitmentTree::new(z.config().tree_depth);
    let mut nullifiers = BTreeSet::new();
    for h in z.main_chain() {
        let block = z.block(h).unwrap();
        for tx in &block.txs {
            for nf in tx.nullifiers() {
                assert!(nullifiers.insert(*nf), "duplicate nullifier on the main chain");
            }
            for o in &tx.outputs {
                tree.append(o.cm).unwrap();
            }
        }
        assert_eq!(tree.root(), block.header.tree_root, "root mismatch at height {}", block.header.height);
        assert_eq!(tree.size(), block.leaf_count);
    }
    assert_eq!(&z.replay_main().unwrap(), z.state());
}

#[test]
fn reorg_leaves_a_replayable_chain() {
    let mut b = bridge(4);
    let v0 = b.vault_by_name("v0").unwrap();
    let v1 = b.vault_by_name("v1").unwrap();
    b.submit_poc(v0, None).unwrap();
    let honest = b.request_lock("alice", v0).unwrap();
    b.do_lock(honest, Amount::coins(3), LockOptions::default()).unwrap();
    b.tick();
    b.adversary_fork(1).unwrap();
    b.submit_poc(v1, None).unwrap();
    let private = b.request_lock("bob", v1).unwrap();
    b.do_lock(private, Amount::coins(4), LockOptions { derived_rcm: true, private: true }).unwrap();
    for _ in 0..3 {
        b.tick();
    }
    assert_roots_replay(b.zcash());
    for _ in 0..6 {
        b.adversary_mine();
    }
    b.adversary_reveal().unwrap();
    assert_eq!(b.metrics().zcash_reorgs, 1);
    assert_roots_replay(b.zcash());
    // the honest lock went back to the mempool and lands again
    b.tick();
    let lock = b.request(honest).unwrap().locks[0];
    assert!(b.zcash().inclusion_height(&commit_note(&lock)).is_some());
    let lock = b.request(private).unwrap().locks[0];
    assert!(b.zcash().inclusion_height(&commit_note(&lock)).is_some());
    assert_roots_replay(b.zcash());
}

#[test]
fn inclusion_is_final_exactly_at_depth_k() {
    let k = 5;
    let mut b = bridge(k);
    let v = b.vault_by_name("v0").unwrap();
    b.submit_poc(v, None).unwrap();
    let id = b.request_lock("alice", v).unwrap();
    b.do_lock(id, Amount::coins(2), LockOptions::default()).unwrap();
    b.tick();
    let cm = commit_note(&b.request(id).unwrap().locks[0]);
    let block = b.zcash().tip();
    assert!(b.zcash().inclusion_height(&cm).is_some());
    let path = b.zcash().merkle_path(&cm, &block).unwrap();
    for depth in 0..=k + 1 {
        assert_eq!(b.relay().depth(&block), Some(depth));
        let res = b.relay().verify_note_inclusion(&cm, &path, &block);
        if depth >= k {
            assert_eq!(res, Ok(()), "depth {depth}");
        } else {
            assert_eq!(res, Err(InclusionError::NotFinal), "depth {depth}");
        }
        b.tick();
    }
}

#[test]
fn old_paths_verify_against_their_own_block_only() {
    let mut b = bridge(2);
    let v = b.vault_by_name("v0").unwrap();
    b.submit_poc(v, None).unwrap();
    let id = b.request_lock("alice", v).unwrap();
    b.do_lock(id, Amount::coins(2), LockOptions::default()).unwrap();
    let before = b.zcash().tip();
    b.tick();
    let cm = commit_note(&b.request(id).unwrap().locks[0]);
    let cited = b.zcash().tip();
    let path = b.zcash().merkle_path(&cm, &cited).unwrap();
    // grow the tree further
    let v1 = b.vault_by_name("v1").unwrap();
    b.submit_poc(v1, None).unwrap();
    let id2 = b.request_lock("bob", v1).unwrap();
    b.do_lock(id2, Amount::coins(2), LockOptions::default()).unwrap();
    for _ in 0..4 {
        b.tick();
    }
    let root_cited = b.zcash().header(&cited).unwrap().tree_root;
    let root_before = b.zcash().header(&before).unwrap().tree_root;
    assert_ne!(b.zcash().header(&b.zcash().tip()).unwrap().tree_root, root_cited);
    assert!(path.verifies(&cm, &root_cited));
    assert!(!path.verifies(&cm, &root_before));
    assert!(b.zcash().merkle_path(&cm, &before).is_err());
    assert_eq!(b.relay().verify_note_inclusion(&cm, &path, &cited), Ok(()));
}
