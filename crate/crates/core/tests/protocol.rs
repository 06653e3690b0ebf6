use std::collections::BTreeMap;

use zclaim_core::amount::{Amount, Fraction};
use zclaim_core::notes::commit_note;
use zclaim_core::protocol::*;
use zclaim_core::vault_registry::VaultId;

fn rate(n: u64, d: u64) -> Fraction {
    Fraction::new(n, d).unwrap()
}

fn bridge(seed: u64) -> (Bridge, VaultId) {
    let cfg = BridgeConfig { seed, ..Default::default() };
    let b = BridgeBuilder::new(cfg)
        .user("alice", Amount::coins(60), Amount::coins(10))
        .user("bob", Amount::coins(50), Amount::coins(10))
        .vault("v0", Amount::coins(1_000))
        .rate(0, rate(1, 1))
        .build()
        .unwrap();
    let v = b.vault_by_name("v0").unwrap();
    (b, v)
}

/// Whole coins in zatoshi.
fn zat(coins: u64) -> u64 {
    coins * 100_000_000
}

fn advance(b: &mut Bridge, n: u64) {
    for _ in 0..n {
        b.tick();
    }
}

fn wait_final(b: &mut Bridge) {
    advance(b, b.config().relay_k + 1);
}

fn issue(b: &mut Bridge, v: VaultId, who: &str, amount: Amount) -> RequestId {
    b.submit_poc(v, None).unwrap();
    let id = b.request_lock(who, v).unwrap();
    b.do_lock(id, amount, LockOptions::default()).unwrap();
    wait_final(b);
    b.do_mint(id, MintOptions::default()).unwrap();
    b.confirm_issue(id).unwrap();
    id
}

fn kinds(b: &Bridge) -> BTreeMap<RequestId, (RequestKind, bool)> {
    b.requests().map(|r| (r.id, (r.kind, !r.state.is_terminal()))).collect()
}

fn assert_clean(b: &Bridge) {
    assert!(b.violations().is_empty(), "{:?}", b.violations());
    assert!(b.check_invariants().is_empty());
    assert_eq!(check_trace(b.trace(), &kinds(b)), vec![]);
}

#[test]
fn issue_happy_path() {
    let (mut b, v) = bridge(1);
    let id = issue(&mut b, v, "alice", Amount::coins(10));
    assert_eq!(b.request(id).unwrap().state, RequestState::IssueSuccess);
    let minted = b.issuing().supply();
    assert_eq!(minted, Amount(zat(10) * 49 / 50));
    assert_eq!(b.user("alice").unwrap().wzec.balance(), minted);
    assert_eq!(b.registry().obligations(v).unwrap(), Amount::coins(10));
    assert_eq!(b.issuing().currency.balance("alice"), Amount::coins(10));
    advance(&mut b, 2);
    assert!(b.backing() >= b.issuing().supply());
    assert_clean(&b);
}

#[test]
fn redeem_happy_path() {
    let (mut b, v) = bridge(2);
    issue(&mut b, v, "alice", Amount::coins(10));
    let before = b.user("alice").unwrap().zec.balance();
    let id = b.do_burn("alice", v, Amount::coins(4), BurnOptions::default()).unwrap();
    b.do_release(id, ReleaseStyle::Honest).unwrap();
    wait_final(&mut b);
    b.confirm_redeem(id, None).unwrap();
    assert_eq!(b.request(id).unwrap().state, RequestState::RedeemSuccess);
    let released = Amount(zat(4) * 49 / 50);
    assert_eq!(b.user("alice").unwrap().zec.balance(), before + released);
    assert_eq!(b.registry().obligations(v).unwrap(), Amount::coins(6));
    assert_eq!(b.issuing().supply(), Amount(zat(10) * 49 / 50 - zat(4)));
    assert_clean(&b);
}

#[test]
fn mint_before_finality_is_rejected() {
    let (mut b, v) = bridge(3);
    b.submit_poc(v, None).unwrap();
    let id = b.request_lock("alice", v).unwrap();
    b.do_lock(id, Amount::coins(5), LockOptions::default()).unwrap();
    advance(&mut b, 3);
    let digest = b.state_digest();
    let err = b.do_mint(id, MintOptions::default()).unwrap_err();
    assert_eq!(err.code(), "not-included");
    let err = b.do_mint(id, MintOptions { anchor: Anchor::Tip, ..Default::default() }).unwrap_err();
    assert_eq!(err.code(), "not-final");
    assert_eq!(b.state_digest(), digest);
    assert_eq!(b.trace().last().unwrap().outcome, "rejected:not-final");
}

#[test]
fn random_rcm_lock_cannot_mint() {
    let (mut b, v) = bridge(4);
    b.submit_poc(v, None).unwrap();
    let id = b.request_lock("alice", v).unwrap();
    b.do_lock(id, Amount::coins(5), LockOptions { derived_rcm: false, private: false }).unwrap();
    wait_final(&mut b);
    assert_eq!(b.do_mint(id, MintOptions::default()).unwrap_err().code(), "rcm-not-derived");
}

#[test]
fn replayed_lock_is_rejected() {
    let (mut b, v) = bridge(5);
    let first = issue(&mut b, v, "alice", Amount::coins(5));
    b.submit_poc(v, None).unwrap();
    let id = b.request_lock("bob", v).unwrap();
    let err = b.do_mint(id, MintOptions { reuse_lock_of: Some(first), ..Default::default() }).unwrap_err();
    assert!(matches!(err.code().as_str(), "lock-replayed" | "nonce-replayed" | "rcm-not-derived"), "{err}");
    assert_eq!(b.issuing().supply(), Amount(zat(5) * 49 / 50));
}

#[test]
fn silent_vault_gets_slashed_on_issue_timeout() {
    let (mut b, v) = bridge(6);
    b.submit_poc(v, None).unwrap();
    let id = b.request_lock("alice", v).unwrap();
    b.do_lock(id, Amount::coins(5), LockOptions::default()).unwrap();
    wait_final(&mut b);
    b.do_mint(id, MintOptions::default()).unwrap();
    let collateral = b.registry().vault(v).unwrap().collateral;
    let n = b.config().deltas.confirm_issue + 1;
    advance(&mut b, n);
    assert_eq!(b.request(id).unwrap().state, RequestState::IssueSuccess);
    assert_eq!(b.metrics().auto_confirms, 1);
    assert_eq!(b.registry().vault(v).unwrap().collateral, Amount(collateral.0 - b.config().params.i_w.0));
    assert_eq!(b.issuing().currency.balance("alice"), Amount::coins(11));
    assert_clean(&b);
}

#[test]
fn expired_permit_forfeits_warranty() {
    let (mut b, v) = bridge(7);
    b.submit_poc(v, None).unwrap();
    let id = b.request_lock("alice", v).unwrap();
    let n = b.config().deltas.mint + 1;
    advance(&mut b, n);
    assert_eq!(b.request(id).unwrap().state, RequestState::MintExpired);
    assert_eq!(b.issuing().currency.balance("alice"), Amount::coins(9));
    assert_clean(&b);
}

#[test]
fn wrong_ciphertext_challenge_upheld_and_honest_rejected() {
    let (mut b, v) = bridge(8);
    b.submit_poc(v, None).unwrap();
    let id = b.request_lock("alice", v).unwrap();
    b.do_lock(id, Amount::coins(5), LockOptions::default()).unwrap();
    wait_final(&mut b);
    b.do_mint(id, MintOptions { ciphertext: CiphertextStyle::WrongNote, ..Default::default() }).unwrap();
    assert!(b.vault_decrypt(id).is_err());
    b.challenge_issue(id, Reveal::Honest).unwrap();
    assert_eq!(b.request(id).unwrap().state, RequestState::IssueChallenged);
    assert_eq!(b.issuing().supply(), Amount::ZERO);
    assert_eq!(b.issuing().currency.balance("alice"), Amount::coins(9));

    let (mut b, v) = bridge(9);
    b.submit_poc(v, None).unwrap();
    let id = b.request_lock("alice", v).unwrap();
    b.do_lock(id, Amount::coins(5), LockOptions::default()).unwrap();
    wait_final(&mut b);
    b.do_mint(id, MintOptions::default()).unwrap();
    let digest = b.state_digest();
    let err = b.challenge_issue(id, Reveal::Honest).unwrap_err();
    assert_eq!(err.code(), "challenge-ciphertext-correct");
    assert_eq!(b.challenge_issue(id, Reveal::Forged).unwrap_err().code(), "challenge-invalid-witness");
    assert_eq!(b.state_digest(), digest);
    b.confirm_issue(id).unwrap();
    assert_clean(&b);
}

#[test]
fn corrupted_redeem_ciphertext_is_challenged() {
    let (mut b, v) = bridge(10);
    issue(&mut b, v, "alice", Amount::coins(10));
    let supply = b.issuing().supply();
    let id = b.do_burn("alice", v, Amount::coins(3), BurnOptions { ciphertext: CiphertextStyle::Corrupted, ..Default::default() }).unwrap();
    assert_eq!(b.do_release(id, ReleaseStyle::Honest).unwrap_err().code(), "decrypt-mismatch");
    b.challenge_redeem(id, Reveal::Honest).unwrap();
    assert_eq!(b.request(id).unwrap().state, RequestState::RedeemChallenged);
    assert_eq!(b.issuing().supply(), supply);
    assert_eq!(b.user("alice").unwrap().wzec.balance(), supply);
    assert_clean(&b);
}

#[test]
fn unreleased_redeem_times_out_with_refund() {
    let (mut b, v) = bridge(11);
    issue(&mut b, v, "alice", Amount::coins(10));
    let supply = b.issuing().supply();
    let id = b.do_burn("alice", v, Amount::coins(3), BurnOptions::default()).unwrap();
    let n = b.config().deltas.confirm_redeem + 1;
    advance(&mut b, n);
    assert_eq!(b.request(id).unwrap().state, RequestState::RedeemVoided);
    assert_eq!(b.issuing().supply(), supply);
    assert_eq!(b.issuing().currency.balance("alice"), Amount::coins(11));
    assert_clean(&b);
}

#[test]
fn wrong_release_value_cannot_confirm() {
    let (mut b, v) = bridge(12);
    issue(&mut b, v, "alice", Amount::coins(10));
    let id = b.do_burn("alice", v, Amount::coins(3), BurnOptions::default()).unwrap();
    b.do_release(id, ReleaseStyle::WrongValue).unwrap();
    wait_final(&mut b);
    let wrong = commit_note(&b.request(id).unwrap().released[0]);
    let proof = b.inclusion_proof(&wrong).unwrap();
    assert_eq!(b.confirm_redeem(id, Some(proof)).unwrap_err().code(), "proof-mismatch");
    assert_eq!(b.confirm_redeem(id, None).unwrap_err().code(), "not-included");
    assert_eq!(b.challenge_redeem(id, Reveal::Honest).unwrap_err().code(), "already-released");
}

#[test]
fn busy_vault_and_missing_capacity_refuse_requests() {
    let (mut b, v) = bridge(13);
    assert_eq!(b.request_lock("alice", v).unwrap_err().code(), "vault-unavailable");
    b.submit_poc(v, None).unwrap();
    b.request_lock("alice", v).unwrap();
    assert_eq!(b.request_lock("bob", v).unwrap_err().code(), "vault-busy");
    assert_eq!(b.submit_poc(v, Some(Amount(1))).unwrap_err().code(), "inconsistent-witness");
}

#[test]
fn observer_view_hides_witness_data() {
    let (mut b, v) = bridge(14);
    issue(&mut b, v, "alice", Amount::coins(10));
    let id = b.do_burn("alice", v, Amount::coins(4), BurnOptions::default()).unwrap();
    b.do_release(id, ReleaseStyle::Honest).unwrap();
    wait_final(&mut b);
    b.confirm_redeem(id, None).unwrap();
    let json = public_jsonl(b.public_records());
    for banned in ["obligations", "\"value\"", "rcm", "secret", "ivk", "nsk"] {
        assert!(!json.contains(banned), "observer view leaks {banned}");
    }
    for line in json.lines() {
        serde_json::from_str::<serde_json::Value>(line).unwrap();
    }
}

#[test]
fn same_seed_same_run() {
    let run = |seed| {
        let (mut b, v) = bridge(seed);
        issue(&mut b, v, "alice", Amount::coins(7));
        (b.state_digest(), trace_csv(b.trace()), public_jsonl(b.public_records()))
    };
    assert_eq!(run(42), run(42));
    assert_ne!(run(42).0, run(43).0);
}

#[test]
fn honest_relay_never_reverts_under_small_adversary() {
    for seed in 0..3 {
        let out = race::run_race(race::RaceConfig::new(0.2, 3_000, 24, seed));
        assert_eq!(out.finality_reversions, 0);
        assert!(out.adversary_blocks > 0);
    }
}

#[test]
fn majority_adversary_reverts_finality() {
    let out = race::run_race(race::RaceConfig::new(0.6, 3_000, 6, 0));
    assert!(out.finality_reversions > 0, "{out:?}");
}

#[test]
fn muted_relayers_let_a_private_branch_mint() {
    let (mut b, v) = bridge(15);
    advance(&mut b, 5);
    b.set_relayer_muted(true);
    b.adversary_fork(0).unwrap();
    b.submit_poc(v, None).unwrap();
    let id = b.request_lock("alice", v).unwrap();
    b.do_lock(id, Amount::coins(5), LockOptions { derived_rcm: true, private: true }).unwrap();
    let k = b.config().relay_k;
    for _ in 0..k + 2 {
        b.adversary_mine();
    }
    b.adversary_relay().unwrap();
    b.do_mint(id, MintOptions::default()).unwrap();
    assert_eq!(b.metrics().relay_violations, 1);
    assert_eq!(b.violations().len(), 1);
    // the vault never received the ZEC on the honest chain
    assert_eq!(b.backing(), Amount::ZERO);
}

#[test]
fn honest_relayer_outpaces_a_short_private_branch() {
    let (mut b, v) = bridge(16);
    b.adversary_fork(0).unwrap();
    b.submit_poc(v, None).unwrap();
    let id = b.request_lock("alice", v).unwrap();
    b.do_lock(id, Amount::coins(5), LockOptions { derived_rcm: true, private: true }).unwrap();
    for _ in 0..10 {
        b.adversary_mine();
    }
    b.adversary_relay().unwrap();
    advance(&mut b, 40);
    assert!(b.do_mint(id, MintOptions::default()).is_err());
    assert_eq!(b.metrics().relay_violations, 0);
}

#[test]
fn fifty_zec_round_trip() {
    let (mut b, v) = bridge(17);
    let cfg_fee = b.config().params.f;
    assert_eq!(cfg_fee, rate(2, 100));
    let id = issue(&mut b, v, "alice", Amount::coins(50));
    assert_eq!(b.amounts(id).wzec_minted, Amount::coins(49));
    let id = b.do_burn("alice", v, Amount::coins(49), BurnOptions::default()).unwrap();
    b.do_release(id, ReleaseStyle::Honest).unwrap();
    wait_final(&mut b);
    b.confirm_redeem(id, None).unwrap();
    // 49 * 98/100 = 48.02
    assert_eq!(b.amounts(id).zec_released, Amount(4_802_000_000));
    assert_eq!(b.registry().obligations(v).unwrap(), Amount::coins(1));
    assert_eq!(b.issuing().supply(), Amount::ZERO);
    assert_clean(&b);
}

/// Two redeems at one vault; the second is bob's unless `carveout`, in
/// which case alice asks for the note she was already paid.
fn second_redeem(carveout: bool) -> (Bridge, RequestId, InclusionProof) {
    let (mut b, v) = bridge(18);
    issue(&mut b, v, "alice", Amount::coins(20));
    b.transfer_wzec("alice", "bob", Amount::coins(5)).unwrap();
    let first = b.do_burn("alice", v, Amount::coins(5), BurnOptions::default()).unwrap();
    b.do_release(first, ReleaseStyle::Honest).unwrap();
    wait_final(&mut b);
    b.confirm_redeem(first, None).unwrap();
    let old = b.request(first).unwrap().release_note.unwrap();
    let old_proof = b.inclusion_proof(&commit_note(&old)).unwrap();
    let second = if carveout {
        b.do_burn("alice", v, Amount::coins(5), BurnOptions { release_note: Some(old), ..Default::default() }).unwrap()
    } else {
        b.do_burn("bob", v, Amount::coins(5), BurnOptions::default()).unwrap()
    };
    (b, second, old_proof)
}

#[test]
fn replayed_release_proof_is_rejected() {
    let (mut b, id, old_proof) = second_redeem(false);
    assert_eq!(b.confirm_redeem(id, Some(old_proof)).unwrap_err().code(), "proof-mismatch");
    assert_eq!(b.request(id).unwrap().state, RequestState::AwaitRedeemConfirm);
}

#[test]
fn redeemer_reusing_a_release_note_can_be_short_changed() {
    let (mut b, id, old_proof) = second_redeem(true);
    let before = b.user("alice").unwrap().zec.balance();
    b.confirm_redeem(id, Some(old_proof)).unwrap();
    assert_eq!(b.request(id).unwrap().state, RequestState::RedeemSuccess);
    advance(&mut b, 2);
    assert_eq!(b.user("alice").unwrap().zec.balance(), before);
    assert_clean(&b);
}
