//! Bounded breadth-first exploration of the bridge state machine.

use std::collections::{BTreeSet, VecDeque};

use zclaim_core::amount::{Amount, Fraction};
use zclaim_core::primitives::Bytes32;
use zclaim_core::protocol::*;
use zclaim_core::vault_registry::VaultId;

#[derive(Debug, Clone, Copy)]
enum Op {
    Poc,
    RequestLock,
    Lock(RequestId),
    Mint(RequestId, CiphertextStyle),
    ConfirmIssue(RequestId),
    ChallengeIssue(RequestId),
    Burn(CiphertextStyle),
    Release(RequestId),
    ConfirmRedeem(RequestId),
    ChallengeRedeem(RequestId),
    /// Enough ticks for a fresh Zcash block to become relay-final.
    Settle,
}

fn ops(b: &Bridge) -> Vec<Op> {
    let mut out = vec![
        Op::Poc,
        Op::RequestLock,
        Op::Burn(CiphertextStyle::Honest),
        Op::Burn(CiphertextStyle::Corrupted),
        Op::Settle,
    ];
    // one id past the end exercises unknown-request rejections
    for id in 0..=b.requests().count() as RequestId {
        out.extend([
            Op::Lock(id),
            Op::Mint(id, CiphertextStyle::Honest),
            Op::Mint(id, CiphertextStyle::WrongNote),
            Op::ConfirmIssue(id),
            Op::ChallengeIssue(id),
            Op::Release(id),
            Op::ConfirmRedeem(id),
            Op::ChallengeRedeem(id),
        ]);
    }
    out
}

fn apply(b: &mut Bridge, v: VaultId, op: Op) -> Option<bool> {
    let ok = match op {
        Op::Poc => b.submit_poc(v, None).is_ok(),
        Op::RequestLock => b.request_lock("alice", v).is_ok(),
        Op::Lock(id) => b.do_lock(id, Amount::coins(2), LockOptions::default()).is_ok(),
        Op::Mint(id, c) => b.do_mint(id, MintOptions { ciphertext: c, ..Default::default() }).is_ok(),
        Op::ConfirmIssue(id) => b.confirm_issue(id).is_ok(),
        Op::ChallengeIssue(id) => b.challenge_issue(id, Reveal::Honest).is_ok(),
        Op::Burn(c) => b.do_burn("alice", v, Amount::coins(1), BurnOptions { ciphertext: c, ..Default::default() }).is_ok(),
        Op::Release(id) => b.do_release(id, ReleaseStyle::Honest).is_ok(),
        Op::ConfirmRedeem(id) => b.confirm_redeem(id, None).is_ok(),
        Op::ChallengeRedeem(id) => b.challenge_redeem(id, Reveal::Honest).is_ok(),
        Op::Settle => {
            for _ in 0..=b.config().relay_k {
                b.tick();
            }
            return None;
        }
    };
    Some(ok)
}

/// Edges the Issue and Redeem procedures allow, by operation name.
fn allowed(op: &str, before: &str, after: &str) -> bool {
    matches!(
        (op, before, after),
        ("requestLock", "IssueStart", "AwaitingMint")
            | ("lock", "AwaitingMint", "AwaitingMint")
            | ("mint", "AwaitingMint", "AwaitIssueConfirm")
            | ("confirmIssue", "AwaitIssueConfirm", "IssueSuccess")
            | ("challengeIssue", "AwaitIssueConfirm", "IssueChallenged")
            | ("timeoutMint", "AwaitingMint", "MintExpired")
            | ("timeoutConfirmIssue", "AwaitIssueConfirm", "IssueSuccess")
            | ("burn", "RedeemStart", "AwaitRedeemConfirm")
            | ("release", "AwaitRedeemConfirm", "AwaitRedeemConfirm")
            | ("confirmRedeem", "AwaitRedeemConfirm", "RedeemSuccess")
            | ("challengeRedeem", "AwaitRedeemConfirm", "RedeemChallenged")
            | ("timeoutConfirmRedeem", "AwaitRedeemConfirm", "RedeemVoided")
            | ("submitPOC", _, "IssueStart")
    )
}

fn start() -> (Bridge, VaultId) {
    // short windows keep the reachable space small
    let k = 3;
    let cfg = BridgeConfig {
        relay_k: k,
        deltas: Deltas::for_finality(k, 1),
        seed: 99,
        ..Default::default()
    };
    let b = BridgeBuilder::new(cfg)
        .user("alice", Amount::coins(20), Amount::coins(5))
        .vault("v0", Amount::coins(500))
        .rate(0, Fraction::new(1, 1).unwrap())
        .build()
        .unwrap();
    let v = b.vault_by_name("v0").unwrap();
    (b, v)
}

#[test]
fn only_listed_transitions_succeed_and_rejections_are_side_effect_free() {
    let (fresh, v) = start();
    // a second root where alice already holds wZEC, so redeems are in reach
    let mut funded = fresh.clone();
    for op in [Op::Poc, Op::RequestLock, Op::Lock(0), Op::Settle, Op::Mint(0, CiphertextStyle::Honest), Op::ConfirmIssue(0)] {
        assert_ne!(apply(&mut funded, v, op), Some(false), "{op:?}");
    }
    let mut seen: BTreeSet<Bytes32> = BTreeSet::new();
    let mut queue = VecDeque::from([(fresh, 0usize), (funded, 0usize)]);
    let max_depth = 6;
    let (mut states, mut rejected, mut accepted) = (0, 0, 0);
    let mut terminal_seen = BTreeSet::new();
    while let Some((b, depth)) = queue.pop_front() {
        if !seen.insert(b.state_digest()) {
            continue;
        }
        states += 1;
        for r in b.requests() {
            terminal_seen.insert(r.state.to_string());
        }
        if depth == max_depth {
            continue;
        }
        for op in ops(&b) {
            let mut next = b.clone();
            let mark = next.trace().len();
            match apply(&mut next, v, op) {
                Some(false) => {
                    rejected += 1;
                    assert_eq!(next.state_digest(), b.state_digest(), "{op:?} rejected with side effects");
                    let line = &next.trace()[mark];
                    assert!(line.outcome.starts_with("rejected:"), "{op:?}: {}", line.csv_line());
                    assert_eq!(next.trace().len(), mark + 1);
                }
                Some(true) => accepted += 1,
                None => {}
            }
            for line in &next.trace()[mark..] {
                if line.ok() {
                    assert!(
                        allowed(line.op, &line.state_before, &line.state_after),
                        "{op:?} took an unlisted edge: {}",
                        line.csv_line()
                    );
                }
            }
            assert!(next.check_invariants().is_empty(), "{op:?}: {:?}", next.check_invariants());
            queue.push_back((next, depth + 1));
        }
    }
    assert!(states > 100, "explored only {states} states");
    assert!(rejected > 0 && accepted > 0);
    for s in [
        "IssueSuccess",
        "IssueChallenged",
        "MintExpired",
        "RedeemSuccess",
        "RedeemChallenged",
        "RedeemVoided",
    ] {
        assert!(terminal_seen.contains(s), "{s} never reached in {states} states");
    }
}
