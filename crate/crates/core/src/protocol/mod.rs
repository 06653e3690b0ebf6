//! Issue and Redeem procedures over the simulated Zcash chain, the relay,
//! the vault registry and the issuing chain.
//!
//! [`Bridge`] owns every component and exposes each protocol operation as
//! a method. Every call, accepted or not, appends one trace line. A rejected
//! call leaves the protocol state untouched: randomness is drawn from a
//! clone of the generator that is only kept on success.

mod grammar;
pub mod race;
mod state;
mod trace;

pub use grammar::{check_trace, GrammarViolation};
pub use state::{Deltas, LockPermit, ProtocolError, RequestAmounts, RequestId, RequestKind, RequestRecord, RequestState};
pub use trace::{
    public_jsonl, supply_csv, trace_csv, Metrics, PublicRecord, SupplyPoint, TraceRecord, SUPPLY_HEADER, TRACE_HEADER,
};

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::amount::{Amount, Fraction};
use crate::issuing_chain::{
    after_fee, BurnStatement, BurnTransfer, BurnWitness, IssuingChain, MintStatement, MintTransfer, MintWitness,
    TxStatus,
};
use crate::merkle::MerklePath;
use crate::notes::{
    commit_note, decrypt_note, derive_nullifier, derive_rcm, encrypt_note, encrypt_to, verify_challenge, Address,
    ChallengeVerdict, CorrectnessWitness, KeyDirectory, Note, NoteCiphertext, NoteCommitment, SharedSecret,
};
use crate::oracle::RateFeed;
use crate::primitives::{digest, Bytes32};
use crate::relay::Relay;
use crate::shielded::{Output, SpendWitness, TxId};
use crate::vault_registry::{ObligationEvent, Party, RegistryParams, SlashSource, VaultId, VaultRegistry};
use crate::wallet::{build_payment, Wallet};
use crate::zcash_chain::{BlockHash, Miner, ZcashChain, ZcashConfig};

#[derive(Debug, Clone)]
pub struct BridgeConfig {
    pub params: RegistryParams,
    pub relay_k: u64,
    pub zcash: ZcashConfig,
    /// A Zcash block is mined on every tick divisible by this.
    pub zc_block_interval: u64,
    pub deltas: Deltas,
    pub honest_relayer: bool,
    pub seed: u64,
    /// Genesis notes each user's ZEC is split into.
    pub notes_per_user: u64,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        let k = crate::relay::DEFAULT_FINALITY_DEPTH;
        BridgeConfig {
            params: RegistryParams::default(),
            relay_k: k,
            zcash: ZcashConfig::default(),
            zc_block_interval: 1,
            deltas: Deltas::for_finality(k, 1),
            honest_relayer: true,
            seed: 0,
            notes_per_user: 4,
        }
    }
}

/// How the issuer or redeemer prepares the ciphertext `C^V` for the vault.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum CiphertextStyle {
    #[default]
    Honest,
    /// Encrypts a note that differs from the committed one.
    WrongNote,
    /// Flips a byte of an honest ciphertext.
    Corrupted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LockOptions {
    /// Use `derive_rcm(nonce)`; otherwise a random trapdoor.
    pub derived_rcm: bool,
    /// Send on the adversary's private branch instead of the public mempool.
    pub private: bool,
}

impl Default for LockOptions {
    fn default() -> Self {
        LockOptions { derived_rcm: true, private: false }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Anchor {
    /// Highest block the relay treats as final.
    #[default]
    Final,
    /// The Zcash tip, which the relay will not accept as final.
    Tip,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MintOptions {
    pub ciphertext: CiphertextStyle,
    /// Cite the lock of an earlier request instead of this one's.
    pub reuse_lock_of: Option<RequestId>,
    pub anchor: Anchor,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BurnOptions {
    pub ciphertext: CiphertextStyle,
    /// Ask for this exact release note rather than a fresh one.
    pub release_note: Option<Note>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ReleaseStyle {
    #[default]
    Honest,
    /// Release a note whose value is off by one.
    WrongValue,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Reveal {
    #[default]
    Honest,
    /// A secret unrelated to the ciphertext.
    Forged,
}

/// Inclusion proof a vault presents for its release.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InclusionProof {
    pub cm: NoteCommitment,
    pub anchor: BlockHash,
    pub path: MerklePath,
}

#[derive(Debug, Clone)]
pub struct UserAccount {
    pub zec: Wallet,
    pub wzec: Wallet,
}

#[derive(Debug, Clone)]
pub struct VaultAccount {
    pub name: String,
    pub id: VaultId,
    pub wallet: Wallet,
}

/// Collects users, vaults and the initial rate before the genesis block.
#[derive(Debug, Clone, Default)]
pub struct BridgeBuilder {
    cfg: BridgeConfig,
    users: Vec<(String, Amount, Amount)>,
    vaults: Vec<(String, Amount)>,
    rates: Vec<(u64, Fraction)>,
}

impl BridgeBuilder {
    pub fn new(cfg: BridgeConfig) -> Self {
        BridgeBuilder { cfg, ..Default::default() }
    }

    pub fn user(mut self, name: &str, zec: Amount, i: Amount) -> Self {
        self.users.push((name.to_string(), zec, i));
        self
    }

    pub fn vault(mut self, name: &str, collateral: Amount) -> Self {
        self.vaults.push((name.to_string(), collateral));
        self
    }

    pub fn rate(mut self, tick: u64, rate: Fraction) -> Self {
        self.rates.push((tick, rate));
        self
    }

    pub fn build(self) -> Result<Bridge, ProtocolError> {
        let cfg = self.cfg;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut oracle = RateFeed::new();
        for (tick, rate) in &self.rates {
            oracle.set_rate(*tick, *rate)?;
        }
        let rate0 = oracle.get_rate(0)?;
        let mut keys = KeyDirectory::new();
        let mut users = BTreeMap::new();
        let mut outputs = Vec::new();
        for (name, zec, _) in &self.users {
            let acct = UserAccount { zec: Wallet::new(&mut rng), wzec: Wallet::new(&mut rng) };
            keys.register(acct.zec.key(), &acct.zec.address());
            keys.register(acct.wzec.key(), &acct.wzec.address());
            let parts = cfg.notes_per_user.max(1);
            let share = zec.0 / parts;
            for p in 0..parts {
                let value = if p + 1 == parts { zec.0 - share * (parts - 1) } else { share };
                if value == 0 {
                    continue;
                }
                let note = Note::with_random_rcm(acct.zec.address(), Amount(value), &mut rng);
                let (ct, _) = encrypt_to(&keys, &note, &mut rng).ok_or(ProtocolError::UnknownKey)?;
                outputs.push(Output::new(note, ct));
            }
            users.insert(name.clone(), acct);
        }
        let mut registry = VaultRegistry::new(cfg.params)?;
        let mut vaults = BTreeMap::new();
        let mut public = Vec::new();
        for (name, collateral) in &self.vaults {
            let wallet = Wallet::new(&mut rng);
            keys.register(wallet.key(), &wallet.address());
            let id = registry.register_vault(*collateral, wallet.address(), 0, rate0)?;
            public.push(PublicRecord::VaultRegistered { tick: 0, vault: id, collateral: *collateral });
            vaults.insert(id, VaultAccount { name: name.clone(), id, wallet });
        }
        let zcash = ZcashChain::new(cfg.zcash, outputs)?;
        let relay = Relay::new(*zcash.genesis(), cfg.relay_k);
        let mut issuing = IssuingChain::new(relay);
        for (name, _, i) in &self.users {
            issuing.currency.credit(name, *i);
        }
        for (tick, rate) in &self.rates {
            public.push(PublicRecord::Rate { tick: *tick, rate: *rate });
        }
        let mut bridge = Bridge {
            relayer_muted: !cfg.honest_relayer,
            cfg,
            now: 0,
            rng,
            zcash,
            issuing,
            registry,
            oracle,
            keys,
            users,
            vaults,
            requests: BTreeMap::new(),
            open_issue: BTreeMap::new(),
            open_redeem: BTreeMap::new(),
            initial_i: Amount::ZERO,
            trace: Vec::new(),
            public,
            metrics: Metrics::default(),
            supply: Vec::new(),
            violations: Vec::new(),
        };
        bridge.initial_i = bridge.total_i();
        bridge.sync_wallets();
        Ok(bridge)
    }
}

#[derive(Debug, Clone)]
pub struct Bridge {
    cfg: BridgeConfig,
    now: u64,
    rng: ChaCha8Rng,
    zcash: ZcashChain,
    issuing: IssuingChain,
    registry: VaultRegistry,
    oracle: RateFeed,
    keys: KeyDirectory,
    users: BTreeMap<String, UserAccount>,
    vaults: BTreeMap<VaultId, VaultAccount>,
    requests: BTreeMap<RequestId, RequestRecord>,
    open_issue: BTreeMap<VaultId, RequestId>,
    open_redeem: BTreeMap<VaultId, RequestId>,
    relayer_muted: bool,
    initial_i: Amount,
    trace: Vec<TraceRecord>,
    public: Vec<PublicRecord>,
    metrics: Metrics,
    supply: Vec<SupplyPoint>,
    violations: Vec<String>,
}

fn encrypt_for<R: RngCore>(
    keys: &KeyDirectory,
    recipient: &Address,
    note: &Note,
    rng: &mut R,
) -> Result<NoteCiphertext, ProtocolError> {
    let mut esk = [0u8; 32];
    rng.fill_bytes(&mut esk);
    let (epk, secret) = keys.agree(recipient, &esk).ok_or(ProtocolError::UnknownKey)?;
    Ok(encrypt_note(note, &secret, epk))
}

/// `C^V` in the requested style; `note` is the note the vault should learn.
fn vault_ciphertext<R: RngCore>(
    keys: &KeyDirectory,
    vault: &Address,
    note: &Note,
    style: CiphertextStyle,
    rng: &mut R,
) -> Result<NoteCiphertext, ProtocolError> {
    match style {
        CiphertextStyle::Honest => encrypt_for(keys, vault, note, rng),
        CiphertextStyle::WrongNote => {
            let other = Note { value: Amount(note.value.0 ^ 1), ..*note };
            encrypt_for(keys, vault, &other, rng)
        }
        CiphertextStyle::Corrupted => {
            let mut ct = encrypt_for(keys, vault, note, rng)?;
            ct.payload[0] ^= 0x01;
            Ok(ct)
        }
    }
}

impl Bridge {
    pub fn config(&self) -> &BridgeConfig {
        &self.cfg
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn zcash(&self) -> &ZcashChain {
        &self.zcash
    }

    pub fn issuing(&self) -> &IssuingChain {
        &self.issuing
    }

    pub fn relay(&self) -> &Relay {
        &self.issuing.relay
    }

    pub fn registry(&self) -> &VaultRegistry {
        &self.registry
    }

    pub fn oracle(&self) -> &RateFeed {
        &self.oracle
    }

    pub fn request(&self, id: RequestId) -> Option<&RequestRecord> {
        self.requests.get(&id)
    }

    pub fn requests(&self) -> impl Iterator<Item = &RequestRecord> {
        self.requests.values()
    }

    pub fn open_requests(&self) -> usize {
        self.requests.values().filter(|r| !r.state.is_terminal()).count()
    }

    pub fn users(&self) -> impl Iterator<Item = (&String, &UserAccount)> {
        self.users.iter()
    }

    pub fn user(&self, name: &str) -> Option<&UserAccount> {
        self.users.get(name)
    }

    pub fn vaults(&self) -> impl Iterator<Item = &VaultAccount> {
        self.vaults.values()
    }

    pub fn vault_by_name(&self, name: &str) -> Option<VaultId> {
        self.vaults.values().find(|v| v.name == name).map(|v| v.id)
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn public_records(&self) -> &[PublicRecord] {
        &self.public
    }

    pub fn metrics(&self) -> &Metrics {
        &self.metrics
    }

    pub fn supply_series(&self) -> &[SupplyPoint] {
        &self.supply
    }

    /// Invariant violations found so far, one line each.
    pub fn violations(&self) -> &[String] {
        &self.violations
    }

    pub fn relayer_muted(&self) -> bool {
        self.relayer_muted
    }

    pub fn set_relayer_muted(&mut self, muted: bool) {
        self.relayer_muted = muted;
    }

    /// Scripted oracle update, visible from `tick` on.
    pub fn set_rate(&mut self, tick: u64, rate: Fraction) -> Result<(), ProtocolError> {
        self.oracle.set_rate(tick, rate)?;
        self.public.push(PublicRecord::Rate { tick, rate });
        Ok(())
    }

    fn rate(&self) -> Result<Fraction, ProtocolError> {
        Ok(self.oracle.get_rate(self.now)?)
    }

    fn total_i(&self) -> Amount {
        self.issuing.currency.total() + self.registry.total_collateral() + self.registry.pool().collateral
    }

    fn vault_name(&self, id: VaultId) -> String {
        self.vaults.get(&id).map(|v| v.name.clone()).unwrap_or_else(|| id.to_string())
    }

    fn vault_address(&self, id: VaultId) -> Result<Address, ProtocolError> {
        Ok(self.registry.vault(id)?.address)
    }

    fn user_acct(&self, name: &str) -> Result<&UserAccount, ProtocolError> {
        self.users.get(name).ok_or_else(|| ProtocolError::UnknownUser(name.to_string()))
    }

    fn req(&self, id: RequestId) -> Result<&RequestRecord, ProtocolError> {
        self.requests.get(&id).ok_or(ProtocolError::UnknownRequest(id))
    }

    fn req_mut(&mut self, id: RequestId) -> &mut RequestRecord {
        self.requests.get_mut(&id).expect("request checked by caller")
    }

    /// Request `id` in `state`, with `now` at or before `deadline`.
    fn expect_state(&self, id: RequestId, state: RequestState) -> Result<&RequestRecord, ProtocolError> {
        let r = self.req(id)?;
        if r.state != state {
            return Err(ProtocolError::WrongState { request: id, state: r.state });
        }
        let deadline = match state {
            RequestState::AwaitIssueConfirm => r.confirm_deadline.unwrap_or(r.deadline),
            _ => r.deadline,
        };
        if self.now > deadline {
            return Err(ProtocolError::DeadlinePassed { request: id, deadline });
        }
        Ok(r)
    }

    fn state_label(&self, id: RequestId) -> String {
        self.requests.get(&id).map(|r| r.state.to_string()).unwrap_or_else(|| "-".into())
    }

    fn issue_label(&self, vault: VaultId) -> String {
        match self.registry.vault(vault) {
            Ok(v) if v.issue_status == crate::vault_registry::IssueStatus::IssueStart
                && !self.registry.is_issue_available(vault, self.now) =>
            {
                "IssueStartExpired".into()
            }
            Ok(v) => format!("{:?}", v.issue_status),
            Err(_) => "-".into(),
        }
    }

    fn redeem_label(&self, vault: VaultId) -> String {
        match self.registry.vault(vault) {
            Ok(_) if self.registry.is_redeem_exempt(vault, self.now) => "NotRedeeming".into(),
            Ok(_) => "RedeemStart".into(),
            Err(_) => "-".into(),
        }
    }

    fn push_trace<T>(
        &mut self,
        actor: String,
        op: &'static str,
        request_id: Option<RequestId>,
        state_before: String,
        state_after: String,
        res: &Result<T, ProtocolError>,
    ) {
        let outcome = match res {
            Ok(_) => {
                self.metrics.ops_ok += 1;
                "ok".to_string()
            }
            Err(e) => {
                self.metrics.ops_rejected += 1;
                format!("rejected:{}", e.code())
            }
        };
        self.trace.push(TraceRecord { tick: self.now, actor, op, request_id, state_before, state_after, outcome });
    }

    fn request_op<T>(
        &mut self,
        actor: String,
        op: &'static str,
        id: RequestId,
        f: impl FnOnce(&mut Self) -> Result<T, ProtocolError>,
    ) -> Result<T, ProtocolError> {
        let before = self.state_label(id);
        let res = f(self);
        let after = self.state_label(id);
        self.push_trace(actor, op, Some(id), before, after, &res);
        res
    }

    fn actor_of(&self, id: RequestId, vault_side: bool) -> String {
        match self.requests.get(&id) {
            Some(r) if vault_side => self.vault_name(r.vault),
            Some(r) => r.user.clone(),
            None => "-".into(),
        }
    }

    /// Runs `f` with a copy of the generator and keeps the copy only on success.
    fn with_rng<T>(
        &mut self,
        f: impl FnOnce(&mut Self, &mut ChaCha8Rng) -> Result<T, ProtocolError>,
    ) -> Result<T, ProtocolError> {
        let mut rng = self.rng.clone();
        let res = f(self, &mut rng);
        if res.is_ok() {
            self.rng = rng;
        }
        res
    }

    // ---- vault statements ----

    /// Proof of capacity. `witness` overrides the vault's true obligations.
    pub fn submit_poc(&mut self, vault: VaultId, witness: Option<Amount>) -> Result<(), ProtocolError> {
        let before = self.issue_label(vault);
        let res = (|| {
            let rate = self.rate()?;
            let w = match witness {
                Some(w) => w,
                None => self.registry.obligations(vault)?,
            };
            let r = self.registry.submit_poc(vault, w, self.now, rate);
            if r.is_ok() || matches!(r, Err(crate::vault_registry::RegistryError::CapacityViolated)) {
                self.public.push(PublicRecord::Capacity { tick: self.now, vault, rate, accepted: r.is_ok() });
            }
            Ok(r?)
        })();
        if res.is_ok() {
            let v = self.registry.vault(vault).expect("accepted");
            let rate = v.xr_cap.expect("set on acceptance");
            if !self.registry.capacity_holds(v.collateral, self.registry.obligations(vault).expect("known"), rate) {
                self.metrics.invariant_violations += 1;
                self.violations.push(format!("tick {}: capacity inequality fails after accepted POC of {vault}", self.now));
            }
        }
        let after = self.issue_label(vault);
        self.push_trace(self.vault_name(vault), "submitPOC", None, before, after, &res);
        res
    }

    /// Proof of balance. `witness` overrides the vault's true history.
    pub fn submit_pob(&mut self, vault: VaultId, witness: Option<Vec<ObligationEvent>>) -> Result<(), ProtocolError> {
        let before = self.issue_label(vault);
        let res = (|| {
            let rate = self.rate()?;
            let w = match witness {
                Some(w) => w,
                None => self.registry.history(vault)?,
            };
            let r = self.registry.submit_pob(vault, &w, self.now, rate);
            self.public.push(PublicRecord::Balance { tick: self.now, vault, rate, accepted: r.is_ok() });
            Ok(r?)
        })();
        let after = self.issue_label(vault);
        self.push_trace(self.vault_name(vault), "submitPOB", None, before, after, &res);
        res
    }

    /// Proof of insolvency. `witness` overrides the vault's true obligations.
    pub fn submit_poi(&mut self, vault: VaultId, witness: Option<Amount>) -> Result<(), ProtocolError> {
        let before = self.redeem_label(vault);
        let res = (|| {
            let w = match witness {
                Some(w) => w,
                None => self.registry.obligations(vault)?,
            };
            let r = self.registry.submit_poi(vault, w, self.now);
            self.public.push(PublicRecord::Insolvency { tick: self.now, vault, accepted: r.is_ok() });
            Ok(r?)
        })();
        let after = self.redeem_label(vault);
        self.push_trace(self.vault_name(vault), "submitPOI", None, before, after, &res);
        res
    }

    // ---- Issue ----

    pub fn request_lock(&mut self, issuer: &str, vault: VaultId) -> Result<RequestId, ProtocolError> {
        let before = self.issue_label(vault);
        let res = self.with_rng(|b, rng| b.request_lock_inner(issuer, vault, rng));
        let (rid, after) = match &res {
            Ok(id) => (Some(*id), self.state_label(*id)),
            Err(_) => (None, before.clone()),
        };
        self.push_trace(issuer.to_string(), "requestLock", rid, before, after, &res);
        res
    }

    fn request_lock_inner(&mut self, issuer: &str, vault: VaultId, rng: &mut ChaCha8Rng) -> Result<RequestId, ProtocolError> {
        self.user_acct(issuer)?;
        self.registry.vault(vault)?;
        if self.open_issue.contains_key(&vault) {
            return Err(ProtocolError::VaultBusy(vault));
        }
        if !self.registry.is_issue_available(vault, self.now) {
            return Err(ProtocolError::VaultUnavailable(vault));
        }
        let id = self.requests.len() as RequestId;
        self.issuing.currency.lock_warranty(issuer, id, self.cfg.params.i_w)?;
        let mut nonce = [0u8; 32];
        rng.fill_bytes(&mut nonce);
        let deadline = self.now + self.cfg.deltas.mint;
        self.registry.consume_capacity(vault)?;
        self.requests.insert(
            id,
            RequestRecord {
                id,
                kind: RequestKind::Issue,
                state: RequestState::AwaitingMint,
                user: issuer.to_string(),
                vault,
                opened: self.now,
                deadline,
                confirm_deadline: None,
                pending: None,
                cm: None,
                ciphertext: None,
                nonce: Some(nonce),
                locks: Vec::new(),
                released: Vec::new(),
                release_note: None,
                wzec_note: None,
            },
        );
        self.open_issue.insert(vault, id);
        let permit = LockPermit { request: id, issuer: issuer.to_string(), vault, nonce, expiry: deadline };
        self.public.push(PublicRecord::Permit { tick: self.now, permit });
        self.metrics.issues_requested += 1;
        Ok(id)
    }

    /// The issuer's permit for an open request.
    pub fn permit(&self, id: RequestId) -> Option<LockPermit> {
        let r = self.requests.get(&id)?;
        (r.kind == RequestKind::Issue).then(|| LockPermit {
            request: id,
            issuer: r.user.clone(),
            vault: r.vault,
            nonce: r.nonce.expect("issue requests carry a nonce"),
            expiry: r.deadline,
        })
    }

    /// Sends `amount` ZEC to the vault on Zcash.
    pub fn do_lock(&mut self, id: RequestId, amount: Amount, opts: LockOptions) -> Result<TxId, ProtocolError> {
        let actor = self.actor_of(id, false);
        self.request_op(actor, "lock", id, |b| b.with_rng(|b, rng| b.do_lock_inner(id, amount, opts, rng)))
    }

    fn do_lock_inner(&mut self, id: RequestId, amount: Amount, opts: LockOptions, rng: &mut ChaCha8Rng) -> Result<TxId, ProtocolError> {
        let r = self.req(id)?;
        if r.kind != RequestKind::Issue || r.state != RequestState::AwaitingMint {
            return Err(ProtocolError::WrongState { request: id, state: r.state });
        }
        let (user, vault, nonce) = (r.user.clone(), r.vault, r.nonce.expect("issue nonce"));
        let vault_addr = self.vault_address(vault)?;
        let rcm = if opts.derived_rcm {
            derive_rcm(&nonce)
        } else {
            let mut b = [0u8; 32];
            rng.fill_bytes(&mut b);
            b
        };
        let note = Note::new(vault_addr, amount, rcm);
        let fee = self.zcash.fee();
        let acct = self.user_acct(&user)?;
        let reserved: std::collections::BTreeSet<_> =
            self.zcash.mempool().iter().flat_map(|t| t.nullifiers().copied()).collect();
        let inputs = acct.zec.select(amount + fee, |nf| reserved.contains(nf))?;
        let (ct, _) = encrypt_to(&self.keys, &note, rng).ok_or(ProtocolError::UnknownKey)?;
        let keys = &self.keys;
        let tx = build_payment(
            &acct.zec,
            &inputs,
            vec![Output::new(note, ct)],
            fee,
            |n, rng| encrypt_to(keys, n, rng).map(|(ct, _)| Output::new(*n, ct)),
            rng,
        )
        .ok_or(ProtocolError::UnknownKey)?;
        let public = tx.public_view();
        let txid = if opts.private {
            self.zcash.submit_private_tx(tx)?
        } else {
            let txid = self.zcash.submit_shielded_tx(tx)?;
            self.public.push(PublicRecord::ZcashTx { tick: self.now, tx: public });
            txid
        };
        self.req_mut(id).locks.push(note);
        Ok(txid)
    }

    fn anchor_block(&self, anchor: Anchor) -> Option<BlockHash> {
        match anchor {
            Anchor::Final => {
                let relay = &self.issuing.relay;
                relay.finalized_height().and_then(|h| relay.block_at(h))
            }
            Anchor::Tip => Some(self.zcash.tip()),
        }
    }

    pub fn do_mint(&mut self, id: RequestId, opts: MintOptions) -> Result<(), ProtocolError> {
        let actor = self.actor_of(id, false);
        self.request_op(actor, "mint", id, |b| b.with_rng(|b, rng| b.do_mint_inner(id, opts, rng)))
    }

    fn do_mint_inner(&mut self, id: RequestId, opts: MintOptions, rng: &mut ChaCha8Rng) -> Result<(), ProtocolError> {
        let r = self.expect_state(id, RequestState::AwaitingMint)?;
        let (user, vault, nonce) = (r.user.clone(), r.vault, r.nonce.expect("issue nonce"));
        let source = opts.reuse_lock_of.unwrap_or(id);
        let lock = *self.req(source)?.locks.last().ok_or(ProtocolError::NoLock(source))?;
        let lock_cm = commit_note(&lock);
        let anchor = self.anchor_block(opts.anchor).ok_or(ProtocolError::NotIncluded(lock_cm))?;
        let path = self.zcash.merkle_path(&lock_cm, &anchor).map_err(|_| ProtocolError::NotIncluded(lock_cm))?;
        let p = self.cfg.params;
        let wzec = Note::with_random_rcm(self.user_acct(&user)?.wzec.address(), after_fee(lock.value, p.f), rng);
        let vault_addr = self.vault_address(vault)?;
        let ciphertext = vault_ciphertext(&self.keys, &vault_addr, &lock, opts.ciphertext, rng)?;
        let statement = MintStatement {
            lock_cm,
            nonce,
            anchor,
            path,
            vault_address: vault_addr,
            new_wzec_cm: commit_note(&wzec),
        };
        let t = MintTransfer { statement, witness: MintWitness { lock_note: lock, wzec_note: wzec } };
        let confirm_deadline = self.now + self.cfg.deltas.confirm_issue;
        let pending = self.issuing.submit_mint_tx(&t, p.v_max, p.f, confirm_deadline, id)?;
        if !self.zcash.is_on_main(&anchor) {
            self.metrics.relay_violations += 1;
            self.violations.push(format!(
                "tick {}: relay accepted a lock proof anchored at {anchor}, which is not on the Zcash main chain",
                self.now
            ));
        }
        let r = self.req_mut(id);
        r.state = RequestState::AwaitIssueConfirm;
        r.confirm_deadline = Some(confirm_deadline);
        r.pending = Some(pending);
        r.cm = Some(lock_cm);
        r.ciphertext = Some(ciphertext.clone());
        r.wzec_note = Some(wzec);
        self.public.push(PublicRecord::Mint { tick: self.now, request: id, pending, statement: t.statement, ciphertext });
        Ok(())
    }

    /// What the vault learns by decrypting `C^V`: the note, if it opens the
    /// committed one.
    pub fn vault_decrypt(&self, id: RequestId) -> Result<Note, ProtocolError> {
        let r = self.req(id)?;
        let ct = r.ciphertext.as_ref().ok_or(ProtocolError::WrongState { request: id, state: r.state })?;
        let key = self.vaults.get(&r.vault).expect("registered vault").wallet.key();
        let note = decrypt_note(ct, &key.shared_secret(&ct.ephemeral_public)).map_err(|_| ProtocolError::DecryptMismatch)?;
        if Some(commit_note(&note)) != r.cm {
            return Err(ProtocolError::DecryptMismatch);
        }
        Ok(note)
    }

    pub fn confirm_issue(&mut self, id: RequestId) -> Result<(), ProtocolError> {
        let actor = self.actor_of(id, true);
        self.request_op(actor, "confirmIssue", id, |b| {
            b.expect_state(id, RequestState::AwaitIssueConfirm)?;
            b.settle_issue(id);
            Ok(())
        })
    }

    fn settle_issue(&mut self, id: RequestId) {
        let r = self.requests[&id].clone();
        let pending = r.pending.expect("mint submitted");
        self.issuing.finalize_tx(pending, TxStatus::Confirmed).expect("pending mint");
        let (locked, _) = self.issuing.mint_amounts(pending).expect("mint");
        self.registry.record_issue(r.vault, locked).expect("registered vault");
        self.issuing.currency.release_warranty(id);
        if let (Some(acct), Some(note)) = (self.users.get_mut(&r.user), r.wzec_note) {
            acct.wzec.add_note(note);
        }
        self.req_mut(id).state = RequestState::IssueSuccess;
        self.open_issue.remove(&r.vault);
        self.public.push(PublicRecord::TxStatus { tick: self.now, pending, status: TxStatus::Confirmed });
        self.metrics.issues_completed += 1;
        self.metrics.zec_locked += locked.0;
    }

    fn reveal(&self, vault: VaultId, ct: &NoteCiphertext, reveal: Reveal) -> (SharedSecret, CorrectnessWitness) {
        let key = self.vaults[&vault].wallet.key();
        let secret = match reveal {
            Reveal::Honest => key.shared_secret(&ct.ephemeral_public),
            Reveal::Forged => SharedSecret(digest("zclaim/forged-secret", &[&ct.ephemeral_public])),
        };
        (secret, CorrectnessWitness::from_key(key))
    }

    fn judge(&mut self, id: RequestId, reveal: Reveal) -> Result<(), ProtocolError> {
        let r = self.req(id)?;
        let ct = r.ciphertext.clone().expect("ciphertext published");
        let cm = r.cm.expect("commitment published");
        let vault = r.vault;
        let (secret, witness) = self.reveal(vault, &ct, reveal);
        let verdict = verify_challenge(&ct, &secret, &cm, &self.vault_address(vault)?, &witness);
        let upheld = verdict == ChallengeVerdict::Upheld;
        self.public.push(PublicRecord::Challenge { tick: self.now, request: id, upheld });
        match verdict {
            ChallengeVerdict::Upheld => {
                self.metrics.challenges_upheld += 1;
                Ok(())
            }
            ChallengeVerdict::Rejected(why) => {
                self.metrics.challenges_rejected += 1;
                Err(ProtocolError::ChallengeRejected(why))
            }
        }
    }

    pub fn challenge_issue(&mut self, id: RequestId, reveal: Reveal) -> Result<(), ProtocolError> {
        let actor = self.actor_of(id, true);
        self.request_op(actor, "challengeIssue", id, |b| {
            b.expect_state(id, RequestState::AwaitIssueConfirm)?;
            b.judge(id, reveal)?;
            let r = b.requests[&id].clone();
            let pending = r.pending.expect("mint submitted");
            b.issuing.finalize_tx(pending, TxStatus::Voided)?;
            // the locked ZEC stays with the vault without creating obligations
            let moved = b.registry.slash_warranty(
                &mut b.issuing.currency,
                SlashSource::Warranty(id),
                b.cfg.params.i_w,
                Party::Vault(r.vault),
            )?;
            b.note_slash(id, moved, r.vault.to_string());
            b.req_mut(id).state = RequestState::IssueChallenged;
            b.open_issue.remove(&r.vault);
            b.public.push(PublicRecord::TxStatus { tick: b.now, pending, status: TxStatus::Voided });
            b.metrics.issues_challenged += 1;
            Ok(())
        })
    }

    fn note_slash(&mut self, id: RequestId, amount: Amount, to: String) {
        self.metrics.slashes += 1;
        self.metrics.slashed_i += amount.0;
        self.public.push(PublicRecord::Slash { tick: self.now, request: id, amount, to });
    }

    // ---- Redeem ----

    pub fn do_burn(&mut self, redeemer: &str, vault: VaultId, amount: Amount, opts: BurnOptions) -> Result<RequestId, ProtocolError> {
        let before = self.redeem_label(vault);
        let res = self.with_rng(|b, rng| b.do_burn_inner(redeemer, vault, amount, opts, rng));
        let (rid, after) = match &res {
            Ok(id) => (Some(*id), self.state_label(*id)),
            Err(_) => (None, before.clone()),
        };
        self.push_trace(redeemer.to_string(), "burn", rid, before, after, &res);
        res
    }

    fn do_burn_inner(
        &mut self,
        redeemer: &str,
        vault: VaultId,
        amount: Amount,
        opts: BurnOptions,
        rng: &mut ChaCha8Rng,
    ) -> Result<RequestId, ProtocolError> {
        let acct = self.user_acct(redeemer)?;
        let vault_addr = self.vault_address(vault)?;
        if self.open_redeem.contains_key(&vault) {
            return Err(ProtocolError::VaultBusy(vault));
        }
        if self.registry.is_redeem_exempt(vault, self.now) {
            return Err(ProtocolError::RedeemExempt(vault));
        }
        let i_w = self.cfg.params.i_w;
        let have = self.issuing.currency.balance(redeemer);
        if have < i_w {
            return Err(crate::issuing_chain::InsufficientBalance { user: redeemer.to_string(), have, need: i_w }.into());
        }
        let inputs = acct.wzec.select(amount, |nf| self.issuing.is_spent(nf))?;
        let spent: Amount = inputs.iter().map(|n| n.value).sum();
        let change_value = spent.checked_sub(amount).expect("selection covers amount");
        let change = (!change_value.is_zero()).then(|| Note::with_random_rcm(acct.wzec.address(), change_value, rng));
        let refund = Note::with_random_rcm(acct.wzec.address(), amount, rng);
        let p = self.cfg.params;
        let release = match opts.release_note {
            Some(n) => n,
            None => Note::with_random_rcm(acct.zec.address(), after_fee(amount, p.f), rng),
        };
        let ciphertext = vault_ciphertext(&self.keys, &vault_addr, &release, opts.ciphertext, rng)?;
        let key = acct.wzec.key().clone();
        let statement = BurnStatement {
            release_cm: commit_note(&release),
            nullifiers: inputs.iter().map(|n| derive_nullifier(n, key.nullifier_key())).collect(),
            change_cm: change.map(|n| commit_note(&n)),
            refund_cm: commit_note(&refund),
        };
        let witness = BurnWitness {
            spends: inputs.iter().map(|n| SpendWitness { note: *n, key: key.clone() }).collect(),
            change,
            refund,
            release_note: release,
        };
        let t = BurnTransfer { statement, witness };
        let id = self.requests.len() as RequestId;
        let deadline = self.now + self.cfg.deltas.confirm_redeem;
        let pending = self.issuing.submit_burn_tx(&t, p.v_max, p.f, deadline, id)?;
        self.issuing.currency.lock_warranty(redeemer, id, i_w).expect("balance checked");
        let acct = self.users.get_mut(redeemer).expect("checked");
        for n in &inputs {
            acct.wzec.remove_note(&commit_note(n));
        }
        if let Some(c) = change {
            acct.wzec.add_note(c);
        }
        self.requests.insert(
            id,
            RequestRecord {
                id,
                kind: RequestKind::Redeem,
                state: RequestState::AwaitRedeemConfirm,
                user: redeemer.to_string(),
                vault,
                opened: self.now,
                deadline,
                confirm_deadline: None,
                pending: Some(pending),
                cm: Some(t.statement.release_cm),
                ciphertext: Some(ciphertext.clone()),
                nonce: None,
                locks: Vec::new(),
                released: Vec::new(),
                release_note: Some(release),
                wzec_note: Some(refund),
            },
        );
        self.open_redeem.insert(vault, id);
        self.public.push(PublicRecord::Burn {
            tick: self.now,
            request: id,
            vault,
            pending,
            statement: t.statement,
            ciphertext,
        });
        self.metrics.redeems_requested += 1;
        Ok(id)
    }

    /// The vault pays out the note named in `C^V` on Zcash.
    pub fn do_release(&mut self, id: RequestId, style: ReleaseStyle) -> Result<TxId, ProtocolError> {
        let actor = self.actor_of(id, true);
        self.request_op(actor, "release", id, |b| b.with_rng(|b, rng| b.do_release_inner(id, style, rng)))
    }

    fn do_release_inner(&mut self, id: RequestId, style: ReleaseStyle, rng: &mut ChaCha8Rng) -> Result<TxId, ProtocolError> {
        let r = self.expect_state(id, RequestState::AwaitRedeemConfirm)?;
        let vault = r.vault;
        let named = self.vault_decrypt(id)?;
        let note = match style {
            ReleaseStyle::Honest => named,
            ReleaseStyle::WrongValue => Note { value: Amount(named.value.0 ^ 1), ..named },
        };
        let fee = self.zcash.fee();
        let wallet = &self.vaults[&vault].wallet;
        let reserved: std::collections::BTreeSet<_> =
            self.zcash.mempool().iter().flat_map(|t| t.nullifiers().copied()).collect();
        let inputs = wallet.select(note.value + fee, |nf| reserved.contains(nf))?;
        let (ct, _) = encrypt_to(&self.keys, &note, rng).ok_or(ProtocolError::UnknownKey)?;
        let keys = &self.keys;
        let tx = build_payment(
            wallet,
            &inputs,
            vec![Output::new(note, ct)],
            fee,
            |n, rng| encrypt_to(keys, n, rng).map(|(ct, _)| Output::new(*n, ct)),
            rng,
        )
        .ok_or(ProtocolError::UnknownKey)?;
        let public = tx.public_view();
        let txid = self.zcash.submit_shielded_tx(tx)?;
        self.public.push(PublicRecord::ZcashTx { tick: self.now, tx: public });
        self.req_mut(id).released.push(note);
        Ok(txid)
    }

    /// Inclusion proof for `cm` at the relay's highest final block.
    pub fn inclusion_proof(&self, cm: &NoteCommitment) -> Result<InclusionProof, ProtocolError> {
        let anchor = self.anchor_block(Anchor::Final).ok_or(ProtocolError::NotIncluded(*cm))?;
        let path = self.zcash.merkle_path(cm, &anchor).map_err(|_| ProtocolError::NotIncluded(*cm))?;
        Ok(InclusionProof { cm: *cm, anchor, path })
    }

    /// Confirms a redeem. Without an explicit proof the vault proves its
    /// own release of the burn's note.
    pub fn confirm_redeem(&mut self, id: RequestId, proof: Option<InclusionProof>) -> Result<(), ProtocolError> {
        let actor = self.actor_of(id, true);
        self.request_op(actor, "confirmRedeem", id, |b| {
            let r = b.expect_state(id, RequestState::AwaitRedeemConfirm)?;
            let expected = r.cm.expect("release commitment");
            let proof = match proof {
                Some(p) => p,
                None => b.inclusion_proof(&expected)?,
            };
            if proof.cm != expected {
                return Err(ProtocolError::ProofMismatch { expected, got: proof.cm });
            }
            b.issuing.relay.verify_note_inclusion(&proof.cm, &proof.path, &proof.anchor)?;
            if !b.zcash.is_on_main(&proof.anchor) {
                b.metrics.relay_violations += 1;
                b.violations.push(format!("tick {}: relay accepted a release proof off the Zcash main chain", b.now));
            }
            let r = b.requests[&id].clone();
            let pending = r.pending.expect("burn submitted");
            b.issuing.finalize_tx(pending, TxStatus::Confirmed)?;
            let (burned, released) = b.issuing.burn_amounts(pending).expect("burn");
            b.registry.record_redeem(r.vault, burned)?;
            b.issuing.currency.release_warranty(id);
            b.req_mut(id).state = RequestState::RedeemSuccess;
            b.open_redeem.remove(&r.vault);
            b.public.push(PublicRecord::TxStatus { tick: b.now, pending, status: TxStatus::Confirmed });
            b.metrics.redeems_completed += 1;
            b.metrics.zec_released += released.0;
            Ok(())
        })
    }

    pub fn challenge_redeem(&mut self, id: RequestId, reveal: Reveal) -> Result<(), ProtocolError> {
        let actor = self.actor_of(id, true);
        self.request_op(actor, "challengeRedeem", id, |b| {
            let r = b.expect_state(id, RequestState::AwaitRedeemConfirm)?;
            if !r.released.is_empty() {
                return Err(ProtocolError::AlreadyReleased);
            }
            b.judge(id, reveal)?;
            let r = b.requests[&id].clone();
            b.void_burn(&r);
            let moved = b.registry.slash_warranty(
                &mut b.issuing.currency,
                SlashSource::Warranty(id),
                b.cfg.params.i_w,
                Party::Vault(r.vault),
            )?;
            b.note_slash(id, moved, r.vault.to_string());
            b.req_mut(id).state = RequestState::RedeemChallenged;
            b.metrics.redeems_challenged += 1;
            Ok(())
        })
    }

    fn void_burn(&mut self, r: &RequestRecord) {
        let pending = r.pending.expect("burn submitted");
        self.issuing.finalize_tx(pending, TxStatus::Voided).expect("pending burn");
        if let (Some(acct), Some(refund)) = (self.users.get_mut(&r.user), r.wzec_note) {
            acct.wzec.add_note(refund);
        }
        self.open_redeem.remove(&r.vault);
        self.public.push(PublicRecord::TxStatus { tick: self.now, pending, status: TxStatus::Voided });
    }

    /// Shielded wZEC payment between two users on the issuing chain.
    pub fn transfer_wzec(&mut self, from: &str, to: &str, amount: Amount) -> Result<TxId, ProtocolError> {
        let res = self.with_rng(|b, rng| {
            let src = b.user_acct(from)?;
            let dst = b.user_acct(to)?.wzec.address();
            let inputs = src.wzec.select(amount, |nf| b.issuing.is_spent(nf))?;
            let note = Note::with_random_rcm(dst, amount, rng);
            let keys = &b.keys;
            let (ct, _) = encrypt_to(keys, &note, rng).ok_or(ProtocolError::UnknownKey)?;
            let tx = build_payment(
                &src.wzec,
                &inputs,
                vec![Output::new(note, ct)],
                Amount::ZERO,
                |n, rng| encrypt_to(keys, n, rng).map(|(ct, _)| Output::new(*n, ct)),
                rng,
            )
            .ok_or(ProtocolError::UnknownKey)?;
            let txid = b.issuing.wzec_transfer(&tx)?;
            let src = b.users.get_mut(from).expect("checked");
            for n in &inputs {
                src.wzec.remove_note(&commit_note(n));
            }
            for o in &tx.outputs[1..] {
                src.wzec.add_note(o.note);
            }
            b.users.get_mut(to).expect("checked").wzec.add_note(note);
            Ok(txid)
        });
        self.push_trace(from.to_string(), "wzecTransfer", None, "-".into(), "-".into(), &res);
        res
    }

    // ---- Zcash adversary ----

    /// Starts a private branch `depth` blocks below the Zcash tip.
    pub fn adversary_fork(&mut self, depth: u64) -> Result<(), ProtocolError> {
        let h = self.zcash.height().saturating_sub(depth);
        let at = self.zcash.main_block_at(h).expect("height on main").header.hash();
        self.zcash.fork_adversary(at)?;
        Ok(())
    }

    pub fn adversary_mine(&mut self) {
        self.zcash.mine_block(Miner::Adversary);
    }

    /// Feeds every header of the private branch to the relay.
    pub fn adversary_relay(&mut self) -> Result<u64, ProtocolError> {
        let tip = self.zcash.adversary_tip().ok_or(ProtocolError::NoAdversaryBranch)?;
        Ok(self.relay_branch(tip))
    }

    /// Publishes the private branch if it is longer than the main chain.
    pub fn adversary_reveal(&mut self) -> Result<(), ProtocolError> {
        let tip = self.zcash.adversary_tip().ok_or(ProtocolError::NoAdversaryBranch)?;
        self.zcash.reorg_to(tip)?;
        self.metrics.zcash_reorgs += 1;
        self.relay_branch(tip);
        self.sync_wallets();
        Ok(())
    }

    /// Submits the ancestors of `tip` the relay has not seen, oldest first.
    fn relay_branch(&mut self, tip: BlockHash) -> u64 {
        let mut missing = Vec::new();
        let mut cursor = tip;
        while !self.issuing.relay.contains(&cursor) {
            let h = *self.zcash.header(&cursor).expect("known block");
            missing.push(h);
            cursor = h.parent;
        }
        let mut n = 0;
        for h in missing.into_iter().rev() {
            if self.issuing.relay.submit_header(h).is_ok() {
                n += 1;
            }
        }
        self.metrics.headers_relayed += n;
        n
    }

    fn sync_wallets(&mut self) {
        for acct in self.users.values_mut() {
            acct.zec.sync(&self.zcash);
        }
        for v in self.vaults.values_mut() {
            v.wallet.sync(&self.zcash);
        }
    }

    // ---- clock ----

    /// Advances one tick: mining, honest relaying, deadline events and
    /// liquidation checks. Returns the trace lines the clock produced.
    pub fn tick(&mut self) -> Vec<TraceRecord> {
        let first = self.trace.len();
        self.now += 1;
        if self.now % self.cfg.zc_block_interval.max(1) == 0 {
            self.zcash.mine_block(Miner::Honest);
        }
        self.sync_wallets();
        if !self.relayer_muted {
            let tip = self.zcash.tip();
            self.relay_branch(tip);
        }
        self.fire_deadlines();
        self.check_liquidations();
        self.metrics.ticks = self.now;
        self.metrics.finality_reversions = self.issuing.relay.finality_reversions();
        let totals = self.issuing.totals();
        self.supply.push(SupplyPoint {
            tick: self.now,
            supply: self.issuing.supply(),
            minted: totals.minted,
            burned: totals.burned,
            escrowed: totals.escrowed,
        });
        self.metrics.final_supply = self.issuing.supply().0;
        for v in self.check_invariants() {
            self.metrics.invariant_violations += 1;
            self.violations.push(format!("tick {}: {v}", self.now));
        }
        self.trace[first..].to_vec()
    }

    fn clock_trace(&mut self, op: &'static str, id: RequestId, before: RequestState) {
        let after = self.state_label(id);
        self.push_trace::<()>("clock".into(), op, Some(id), before.to_string(), after, &Ok(()));
    }

    fn fire_deadlines(&mut self) {
        let due: Vec<RequestRecord> = self
            .requests
            .values()
            .filter(|r| match r.state {
                RequestState::AwaitingMint | RequestState::AwaitRedeemConfirm => self.now > r.deadline,
                RequestState::AwaitIssueConfirm => self.now > r.confirm_deadline.expect("set with mint"),
                _ => false,
            })
            .cloned()
            .collect();
        let i_w = self.cfg.params.i_w;
        for r in due {
            match r.state {
                RequestState::AwaitingMint => {
                    let moved = self
                        .registry
                        .slash_warranty(&mut self.issuing.currency, SlashSource::Warranty(r.id), i_w, Party::Vault(r.vault))
                        .expect("issuer warranty locked");
                    self.note_slash(r.id, moved, r.vault.to_string());
                    self.req_mut(r.id).state = RequestState::MintExpired;
                    self.open_issue.remove(&r.vault);
                    self.metrics.mints_expired += 1;
                    self.clock_trace("timeoutMint", r.id, r.state);
                }
                RequestState::AwaitIssueConfirm => {
                    self.settle_issue(r.id);
                    let moved = self
                        .registry
                        .slash_warranty(&mut self.issuing.currency, SlashSource::Vault(r.vault), i_w, Party::User(r.user.clone()))
                        .expect("registered vault");
                    self.note_slash(r.id, moved, r.user.clone());
                    self.metrics.auto_confirms += 1;
                    self.clock_trace("timeoutConfirmIssue", r.id, r.state);
                }
                RequestState::AwaitRedeemConfirm => {
                    self.void_burn(&r);
                    self.issuing.currency.release_warranty(r.id);
                    let moved = self
                        .registry
                        .slash_warranty(&mut self.issuing.currency, SlashSource::Vault(r.vault), i_w, Party::User(r.user.clone()))
                        .expect("registered vault");
                    self.note_slash(r.id, moved, r.user.clone());
                    self.req_mut(r.id).state = RequestState::RedeemVoided;
                    self.metrics.redeems_voided += 1;
                    self.clock_trace("timeoutConfirmRedeem", r.id, r.state);
                }
                _ => unreachable!("filtered"),
            }
        }
    }

    fn check_liquidations(&mut self) {
        let Ok(rate) = self.rate() else { return };
        let ids: Vec<VaultId> = self.vaults.keys().copied().collect();
        for id in ids {
            if let Ok(Some(liq)) = self.registry.check_liquidation(id, self.now, rate) {
                self.metrics.liquidations += 1;
                self.metrics.liquidated_i += liq.collateral.0;
                self.public.push(PublicRecord::Liquidation { tick: self.now, vault: id, collateral: liq.collateral });
                self.push_trace::<()>("clock".into(), "liquidate", None, "-".into(), "-".into(), &Ok(()));
            }
        }
    }

    // ---- invariants ----

    /// Supply law, conservation of `i`, and agreement between request
    /// states and pending-transaction statuses.
    pub fn check_invariants(&self) -> Vec<String> {
        let mut out = Vec::new();
        let t = self.issuing.totals();
        let supply = self.issuing.supply();
        if t.minted.checked_sub(t.burned) != Some(supply) {
            out.push(format!("supply {supply} != minted {} - burned {}", t.minted, t.burned));
        }
        if t.unspent + t.escrowed != supply {
            out.push(format!("supply {supply} != unspent {} + escrowed {}", t.unspent, t.escrowed));
        }
        let total = self.total_i();
        if total != self.initial_i {
            out.push(format!("i not conserved: {total} != {}", self.initial_i));
        }
        for r in self.requests.values() {
            let status = r.pending.and_then(|p| self.issuing.pending(p)).map(|p| p.status);
            let expected = match r.state {
                RequestState::AwaitingMint | RequestState::MintExpired => None,
                RequestState::AwaitIssueConfirm | RequestState::AwaitRedeemConfirm => Some(TxStatus::Pending),
                RequestState::IssueSuccess | RequestState::RedeemSuccess => Some(TxStatus::Confirmed),
                RequestState::IssueChallenged | RequestState::RedeemChallenged | RequestState::RedeemVoided => {
                    Some(TxStatus::Voided)
                }
            };
            if status != expected {
                out.push(format!("request {} in {} has transaction status {status:?}", r.id, r.state));
            }
        }
        out
    }

    /// ZEC the vaults hold on the Zcash main chain.
    pub fn backing(&self) -> Amount {
        self.vaults.values().map(|v| v.wallet.balance()).sum()
    }

    /// Witness-side amounts of a request.
    pub fn amounts(&self, id: RequestId) -> RequestAmounts {
        let Some(r) = self.requests.get(&id) else { return RequestAmounts::default() };
        let mut a = RequestAmounts::default();
        if let Some(p) = r.pending {
            if let Some((locked, minted)) = self.issuing.mint_amounts(p) {
                a.zec_locked = locked;
                a.wzec_minted = minted;
            }
            if let Some((burned, released)) = self.issuing.burn_amounts(p) {
                a.wzec_burned = burned;
                a.zec_released = released;
            }
        }
        a
    }

    /// Digest of everything that determines future behaviour. Excludes the
    /// trace, the observer view and metrics.
    pub fn state_digest(&self) -> Bytes32 {
        let state = format!(
            "{:?}|{:?}|{:?}|{:?}|{:?}|{:?}|{:?}|{:?}|{:?}|{:?}|{:?}",
            self.now,
            self.zcash,
            self.issuing,
            self.registry,
            self.oracle,
            self.users,
            self.vaults,
            self.requests,
            self.open_issue,
            self.open_redeem,
            self.relayer_muted,
        );
        let pos = self.rng.get_word_pos().to_be_bytes();
        digest("zclaim/bridge-state", &[state.as_bytes(), &pos])
    }
}
