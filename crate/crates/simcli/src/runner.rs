//! Drives a bridge through a scenario's actors, one tick at a time.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use zclaim_core::amount::{Amount, Fraction};
use zclaim_core::notes::{commit_note, Note};
use zclaim_core::protocol::*;
use zclaim_core::vault_registry::VaultId;

use crate::scenario::*;
use crate::SimError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub name: String,
    pub metrics: Metrics,
    pub backing: Amount,
    pub backing_deficit: Amount,
    pub trace_csv: String,
    pub public_jsonl: String,
    pub metrics_csv: String,
    pub supply_csv: String,
    pub checks: Vec<Check>,
}

impl RunOutput {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn metric(&self, name: &str) -> Option<u64> {
        match name {
            "backing" => Some(self.backing.0),
            "backing_deficit" => Some(self.backing_deficit.0),
            _ => self.metrics_csv.lines().skip(1).find_map(|l| {
                let (k, v) = l.split_once(',')?;
                (k == name).then(|| v.parse().ok()).flatten()
            }),
        }
    }

    pub fn checks_csv(&self) -> String {
        let mut out = String::from("check,passed,detail\n");
        for c in &self.checks {
            out.push_str(&format!(
                "{},{},{}\n",
                c.name,
                c.passed,
                c.detail.replace(',', ";")
            ));
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<(), SimError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("trace.csv"), &self.trace_csv)?;
        fs::write(dir.join("public.jsonl"), &self.public_jsonl)?;
        fs::write(dir.join("metrics.csv"), &self.metrics_csv)?;
        fs::write(dir.join("supply.csv"), &self.supply_csv)?;
        fs::write(dir.join("checks.csv"), self.checks_csv())?;
        Ok(())
    }
}

struct Issuer {
    spec: IssuerSpec,
    vault: VaultId,
    remaining: u64,
    current: Option<RequestId>,
    first: Option<RequestId>,
    mint_tried: bool,
}

impl Issuer {
    fn act(&mut self, b: &mut Bridge) {
        use IssuerStrategy::*;
        if let Some(id) = self.current {
            let r = b.request(id).expect("own request").clone();
            if r.state.is_terminal() {
                self.current = None;
                return;
            }
            if r.state != RequestState::AwaitingMint || self.mint_tried {
                return;
            }
            let replaying = self.spec.strategy == ReplayLock && self.first != Some(id);
            if replaying {
                let _ = b.do_mint(
                    id,
                    MintOptions {
                        reuse_lock_of: self.first,
                        ..Default::default()
                    },
                );
                self.mint_tried = true;
            } else if let Some(lock) = r.locks.last() {
                if b.inclusion_proof(&commit_note(lock)).is_ok() {
                    let ciphertext = match self.spec.strategy {
                        WrongCiphertext => CiphertextStyle::WrongNote,
                        CorruptedCiphertext => CiphertextStyle::Corrupted,
                        _ => CiphertextStyle::Honest,
                    };
                    let _ = b.do_mint(
                        id,
                        MintOptions {
                            ciphertext,
                            ..Default::default()
                        },
                    );
                    self.mint_tried = true;
                }
            } else {
                let opts = match self.spec.strategy {
                    NoLock => return,
                    RandomRcm => LockOptions {
                        derived_rcm: false,
                        private: false,
                    },
                    PrivateLock if b.zcash().adversary_tip().is_none() => return,
                    PrivateLock => LockOptions {
                        derived_rcm: true,
                        private: true,
                    },
                    _ => LockOptions::default(),
                };
                if b.do_lock(id, self.spec.amount, opts).is_err() {
                    // nothing to lock with; let the permit lapse
                    self.mint_tried = true;
                }
            }
            return;
        }
        if self.remaining == 0
            || b.now() < self.spec.start
            || !b.registry().is_issue_available(self.vault, b.now())
        {
            return;
        }
        if let Ok(id) = b.request_lock(&self.spec.user, self.vault) {
            self.current = Some(id);
            self.first.get_or_insert(id);
            self.remaining -= 1;
            self.mint_tried = false;
        }
    }
}

struct Redeemer {
    spec: RedeemerSpec,
    vault: VaultId,
    remaining: u64,
    current: Option<RequestId>,
    last_release: Option<Note>,
}

impl Redeemer {
    fn act(&mut self, b: &mut Bridge, busy: &BTreeSet<VaultId>) {
        if let Some(id) = self.current {
            let r = b.request(id).expect("own request");
            if r.state.is_terminal() {
                if r.state == RequestState::RedeemSuccess {
                    self.last_release = r.release_note;
                }
                self.current = None;
            }
            return;
        }
        let now = b.now();
        let funded = b
            .user(&self.spec.user)
            .is_some_and(|u| u.wzec.balance() >= self.spec.amount);
        if self.remaining == 0
            || now < self.spec.start
            || !funded
            || busy.contains(&self.vault)
            || b.registry().is_redeem_exempt(self.vault, now)
        {
            return;
        }
        let opts = match self.spec.strategy {
            RedeemerStrategy::Honest => BurnOptions::default(),
            RedeemerStrategy::CorruptedCiphertext => BurnOptions {
                ciphertext: CiphertextStyle::Corrupted,
                ..Default::default()
            },
            RedeemerStrategy::ReuseReleaseNote => BurnOptions {
                release_note: self.last_release,
                ..Default::default()
            },
        };
        if let Ok(id) = b.do_burn(&self.spec.user, self.vault, self.spec.amount, opts) {
            self.current = Some(id);
            self.remaining -= 1;
        }
    }
}

/// State right after an accepted capacity proof.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PocEvent {
    pub tick: u64,
    pub vault: VaultId,
    pub collateral: Amount,
    pub obligations: Amount,
    pub rate: Fraction,
}

struct VaultActor {
    id: VaultId,
    pocs: Vec<PocEvent>,
    strategy: VaultStrategy,
    /// Proofs of this vault's past releases.
    proofs: Vec<InclusionProof>,
    /// One-off byzantine moves already made, by request.
    tried: BTreeSet<(RequestId, &'static str)>,
}

impl VaultActor {
    fn act(&mut self, b: &mut Bridge, open: &[RequestRecord]) {
        use VaultStrategy::*;
        let now = b.now();
        let reg = b.registry();
        let rec = reg.vault(self.id).expect("registered").clone();
        let obligations = reg.obligations(self.id).expect("registered");
        let busy = open.iter().any(|r| r.kind == RequestKind::Issue);
        let lapsed = self.strategy == Lapsed && !obligations.is_zero();
        if let (Ok(rate), false) = (b.oracle().get_rate(now), lapsed) {
            let stale =
                now.saturating_sub(rec.statement_tick) >= (b.config().params.pob_period / 2).max(1);
            if !busy && stale && !obligations.is_zero() {
                let _ = b.submit_pob(self.id, None);
            }
            let reg = b.registry();
            // no local capacity check: the registry is the judge
            if !busy && !reg.is_issue_available(self.id, now) {
                if b.submit_poc(self.id, None).is_ok() {
                    let reg = b.registry();
                    self.pocs.push(PocEvent {
                        tick: now,
                        vault: self.id,
                        collateral: reg.vault(self.id).expect("registered").collateral,
                        obligations: reg.obligations(self.id).expect("registered"),
                        rate,
                    });
                }
            }
        }
        if self.strategy == Silent {
            return;
        }
        for r in open {
            match r.state {
                RequestState::AwaitIssueConfirm => {
                    if self.strategy == FalseChallenge && self.tried.insert((r.id, "challenge")) {
                        let _ = b.challenge_issue(r.id, Reveal::Honest);
                    }
                    if b.vault_decrypt(r.id).is_ok() {
                        let _ = b.confirm_issue(r.id);
                    } else {
                        let _ = b.challenge_issue(r.id, Reveal::Honest);
                    }
                }
                RequestState::AwaitRedeemConfirm if r.released.is_empty() => {
                    if self.strategy == ReplayProof && self.tried.insert((r.id, "replay")) {
                        if let Some(p) = self.proofs.last() {
                            if b.confirm_redeem(r.id, Some(p.clone())).is_ok() {
                                continue;
                            }
                        }
                    }
                    if self.strategy == FalseChallenge && self.tried.insert((r.id, "challenge")) {
                        let _ = b.challenge_redeem(r.id, Reveal::Honest);
                    }
                    if b.vault_decrypt(r.id).is_ok() {
                        let style = if self.strategy == WrongRelease {
                            ReleaseStyle::WrongValue
                        } else {
                            ReleaseStyle::Honest
                        };
                        let _ = b.do_release(r.id, style);
                    } else {
                        let _ = b.challenge_redeem(r.id, Reveal::Honest);
                    }
                }
                RequestState::AwaitRedeemConfirm => {
                    let paid = commit_note(&r.released[0]);
                    let Ok(proof) = b.inclusion_proof(&paid) else {
                        continue;
                    };
                    if self.strategy == WrongRelease {
                        // one attempt with the proof of what was actually paid
                        if self.tried.insert((r.id, "wrong_proof")) {
                            let _ = b.confirm_redeem(r.id, Some(proof));
                        }
                    } else if b.confirm_redeem(r.id, None).is_ok() {
                        self.proofs.push(proof);
                    }
                }
                _ => {}
            }
        }
    }
}

struct Adversary {
    spec: AdversarySpec,
    rng: ChaCha8Rng,
    k: u64,
    fork_height: Option<u64>,
}

impl Adversary {
    /// Adversary blocks per honest block, as a per-tick probability.
    fn rate(&self) -> f64 {
        (self.spec.alpha / (1.0 - self.spec.alpha)).min(1.0)
    }

    fn act(&mut self, b: &mut Bridge) {
        if self.spec.strategy == AdversaryStrategy::None || b.now() < self.spec.start {
            return;
        }
        if self.fork_height.is_none() {
            if self.spec.strategy == AdversaryStrategy::Eclipse {
                b.set_relayer_muted(true);
            }
            b.adversary_fork(0).expect("tip is on the main chain");
            self.fork_height = Some(b.zcash().height());
        }
        let p = self.rate();
        if p > 0.0 && self.rng.gen_bool(p) {
            b.adversary_mine();
        }
        let tip = b.zcash().adversary_tip().expect("branch exists");
        let adv_height = b.zcash().header(&tip).expect("mined").height;
        let main_height = b.zcash().height();
        let fork = self.fork_height.expect("set above");
        match self.spec.strategy {
            AdversaryStrategy::Eclipse => {
                let _ = b.adversary_relay();
            }
            AdversaryStrategy::PrivateMining => {
                if adv_height > main_height && main_height - fork > self.k {
                    b.adversary_reveal().expect("branch is longer");
                    self.fork_height = None;
                } else if main_height > adv_height + self.k {
                    self.fork_height = None;
                }
            }
            AdversaryStrategy::None => {}
        }
    }
}

fn vault_ids(b: &Bridge, cfg: &ScenarioConfig) -> BTreeMap<String, VaultId> {
    cfg.vaults
        .keys()
        .map(|n| (n.clone(), b.vault_by_name(n).expect("registered at build")))
        .collect()
}

/// Builds the bridge for `cfg` with every user and vault registered.
pub fn build_bridge(cfg: &ScenarioConfig) -> Result<Bridge, SimError> {
    let mut builder = BridgeBuilder::new(cfg.bridge_config());
    for (name, u) in &cfg.users {
        builder = builder.user(name, u.zec, u.i);
    }
    for (name, v) in &cfg.vaults {
        builder = builder.vault(name, v.collateral);
    }
    for (tick, rate) in &cfg.rates {
        builder = builder.rate(*tick, *rate);
    }
    Ok(builder.build()?)
}

/// A bridge plus the scripted actors of one scenario.
pub struct Simulation<'a> {
    cfg: &'a ScenarioConfig,
    bridge: Bridge,
    issuers: Vec<Issuer>,
    redeemers: Vec<Redeemer>,
    vaults: Vec<VaultActor>,
    adversary: Adversary,
    poc_log: Vec<PocEvent>,
}

impl<'a> Simulation<'a> {
    pub fn new(cfg: &'a ScenarioConfig) -> Result<Self, SimError> {
        let bridge = build_bridge(cfg)?;
        let ids = vault_ids(&bridge, cfg);
        let issuers = cfg
            .issuers
            .values()
            .map(|s| Issuer {
                vault: ids[&s.vault],
                remaining: s.count,
                spec: s.clone(),
                current: None,
                first: None,
                mint_tried: false,
            })
            .collect();
        let redeemers = cfg
            .redeemers
            .values()
            .map(|s| Redeemer {
                vault: ids[&s.vault],
                remaining: s.count,
                spec: s.clone(),
                current: None,
                last_release: None,
            })
            .collect();
        let vaults = cfg
            .vaults
            .iter()
            .map(|(n, s)| VaultActor {
                id: ids[n],
                pocs: Vec::new(),
                strategy: s.strategy,
                proofs: Vec::new(),
                tried: BTreeSet::new(),
            })
            .collect();
        let adversary = Adversary {
            spec: cfg.adversary.clone(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xad5e_a5a1),
            k: cfg.relay_k,
            fork_height: None,
        };
        Ok(Simulation {
            cfg,
            bridge,
            issuers,
            redeemers,
            vaults,
            adversary,
            poc_log: Vec::new(),
        })
    }

    pub fn bridge(&self) -> &Bridge {
        &self.bridge
    }

    /// Every actor moves once, in a fixed order, before the clock advances.
    pub fn act(&mut self) {
        let b = &mut self.bridge;
        self.adversary.act(b);
        for i in &mut self.issuers {
            i.act(b);
        }
        let busy: BTreeSet<VaultId> = b
            .requests()
            .filter(|r| r.kind == RequestKind::Redeem && !r.state.is_terminal())
            .map(|r| r.vault)
            .collect();
        for r in &mut self.redeemers {
            r.act(b, &busy);
        }
        for v in &mut self.vaults {
            let open: Vec<RequestRecord> = b
                .requests()
                .filter(|r| r.vault == v.id && !r.state.is_terminal())
                .cloned()
                .collect();
            v.act(b, &open);
            self.poc_log.append(&mut v.pocs);
        }
    }

    /// Every capacity proof the scripted vaults got accepted.
    pub fn poc_log(&self) -> &[PocEvent] {
        &self.poc_log
    }

    pub fn tick(&mut self) -> Vec<TraceRecord> {
        self.bridge.tick()
    }

    pub fn finish(&self) -> RunOutput {
        finish(self.cfg, &self.bridge)
    }
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutput, SimError> {
    let mut sim = Simulation::new(cfg)?;
    for _ in 0..cfg.horizon {
        sim.act();
        sim.tick();
    }
    Ok(sim.finish())
}

fn finish(cfg: &ScenarioConfig, b: &Bridge) -> RunOutput {
    let metrics = b.metrics().clone();
    let supply = b.issuing().supply();
    let backing = b.backing();
    let deficit = supply.checked_sub(backing).unwrap_or(Amount::ZERO);
    let mut metrics_csv = metrics.csv();
    metrics_csv.push_str(&format!(
        "backing,{}\nbacking_deficit,{}\n",
        backing.0, deficit.0
    ));

    let mut checks = Vec::new();
    let kinds = b
        .requests()
        .map(|r| (r.id, (r.kind, !r.state.is_terminal())))
        .collect();
    let grammar = check_trace(b.trace(), &kinds);
    checks.push(Check {
        name: "trace_grammar".into(),
        passed: grammar.is_empty(),
        detail: grammar.first().map_or("all requests conform".into(), |g| {
            format!("request {}: {}", g.request, g.word)
        }),
    });
    checks.push(Check {
        name: "invariants".into(),
        passed: metrics.invariant_violations == 0,
        detail: b
            .violations()
            .iter()
            .find(|v| !v.contains("relay accepted"))
            .cloned()
            .unwrap_or_else(|| "none".into()),
    });
    let value = if metrics.relay_violations > 0 {
        Check {
            name: "no_value_creation".into(),
            passed: true,
            detail: "not applicable: relay accepted a foreign branch".into(),
        }
    } else {
        let rate = b.oracle().get_rate(b.now()).expect("rate at tick 0 exists");
        let deficit_i = rate.mul_ceil(deficit);
        let collateral = b.registry().total_collateral() + b.registry().pool().collateral;
        Check {
            name: "no_value_creation".into(),
            passed: deficit_i <= collateral,
            detail: format!(
                "supply {} backing {} deficit {} ({} i) collateral {}",
                supply.0, backing.0, deficit.0, deficit_i.0, collateral.0
            ),
        }
    };
    checks.push(value);

    if let Some(split) = &cfg.split {
        let check = match zclaim_core::splitting::check_bounds(split) {
            Ok(r) => Check {
                name: "split_bounds".into(),
                passed: r.passed(),
                detail: format!(
                    "h = {} k = {}: {} rows, {} failed",
                    split.h(),
                    split.k(),
                    r.rows.len(),
                    r.failures().count()
                ),
            },
            Err(e) => Check {
                name: "split_bounds".into(),
                passed: false,
                detail: e.to_string(),
            },
        };
        checks.push(check);
    }
    let mut out = RunOutput {
        name: cfg.name.clone(),
        metrics,
        backing,
        backing_deficit: deficit,
        trace_csv: trace_csv(b.trace()),
        public_jsonl: public_jsonl(b.public_records()),
        metrics_csv,
        supply_csv: supply_csv(b.supply_series()),
        checks,
    };
    for e in &cfg.expectations {
        let actual = out
            .metric(&e.metric)
            .expect("metric names validated at parse time");
        out.checks.push(Check {
            name: format!("expect:{}", e.metric),
            passed: e.holds(actual),
            detail: format!("{e} (got {actual})"),
        });
    }
    out
}
