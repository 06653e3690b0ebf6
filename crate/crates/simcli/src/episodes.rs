//! Randomized protocol episodes: random actors and strategies on a small
//! bridge, checked after every tick.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use zclaim_core::amount::{Amount, Fraction};
use zclaim_core::protocol::{check_trace, Deltas};
use zclaim_core::vault_registry::RegistryParams;
use zclaim_core::zcash_chain::ZcashConfig;

use crate::runner::{PocEvent, Simulation};
use crate::scenario::*;
use crate::SimError;

pub const EPISODE_K: u64 = 3;
pub const EPISODE_HORIZON: u64 = 40;

fn coins<R: Rng>(rng: &mut R, lo: u64, hi: u64) -> Amount {
    Amount::coins(rng.gen_range(lo..=hi))
}

fn pick<T: Copy, R: Rng>(rng: &mut R, items: &[T]) -> T {
    *items.choose(rng).expect("non-empty")
}

/// A small random scenario; honest strategies are drawn half the time.
pub fn random_config(seed: u64) -> ScenarioConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rng = &mut rng;
    let mut params = RegistryParams {
        pob_period: pick(rng, &[10, 100]),
        ..Default::default()
    };
    params.poc_validity = pick(rng, &[8, 100]);

    let mut rates = BTreeMap::new();
    let rate_choices = [(1, 1), (2, 1), (1, 2), (10, 1), (1, 10)];
    let (n, d) = pick(rng, &rate_choices[..3]);
    rates.insert(0, Fraction::new(n, d).expect("nonzero"));
    if rng.gen_bool(0.3) {
        let (n, d) = pick(rng, &rate_choices);
        rates.insert(
            rng.gen_range(5..EPISODE_HORIZON),
            Fraction::new(n, d).expect("nonzero"),
        );
    }

    let vault_count = rng.gen_range(1..=2);
    let mut vaults = BTreeMap::new();
    for v in 0..vault_count {
        let strategy = if rng.gen_bool(0.5) {
            VaultStrategy::Honest
        } else {
            pick(rng, VaultStrategy::ALL)
        };
        vaults.insert(
            format!("v{v}"),
            VaultSpec {
                collateral: pick(
                    rng,
                    &[Amount::coins(100), Amount::coins(400), Amount::coins(2_000)],
                ),
                strategy,
            },
        );
    }
    let vault_names: Vec<String> = vaults.keys().cloned().collect();

    let mut users = BTreeMap::new();
    let mut issuers = BTreeMap::new();
    let mut redeemers = BTreeMap::new();
    for u in 0..2 {
        let name = format!("u{u}");
        users.insert(
            name.clone(),
            UserSpec {
                zec: coins(rng, 20, 60),
                i: Amount::coins(4),
            },
        );
        let strategy = if rng.gen_bool(0.5) {
            IssuerStrategy::Honest
        } else {
            pick(rng, IssuerStrategy::ALL)
        };
        issuers.insert(
            name.clone(),
            IssuerSpec {
                user: name.clone(),
                vault: vault_names.choose(rng).expect("non-empty").clone(),
                amount: coins(rng, 1, 25),
                start: rng.gen_range(1..=5),
                count: rng.gen_range(1..=3),
                strategy,
            },
        );
        if rng.gen_bool(0.7) {
            let strategy = if rng.gen_bool(0.5) {
                RedeemerStrategy::Honest
            } else {
                pick(rng, RedeemerStrategy::ALL)
            };
            redeemers.insert(
                name.clone(),
                RedeemerSpec {
                    user: name,
                    vault: vault_names.choose(rng).expect("non-empty").clone(),
                    amount: coins(rng, 1, 10),
                    start: rng.gen_range(5..=20),
                    count: rng.gen_range(1..=2),
                    strategy,
                },
            );
        }
    }

    let adversary = match rng.gen_range(0..10) {
        0..=6 => AdversarySpec::default(),
        7 | 8 => AdversarySpec {
            strategy: AdversaryStrategy::PrivateMining,
            alpha: pick(rng, &[0.1, 0.3, 0.6]),
            start: rng.gen_range(1..10),
        },
        _ => AdversarySpec {
            strategy: AdversaryStrategy::Eclipse,
            alpha: 0.5,
            start: rng.gen_range(1..10),
        },
    };

    ScenarioConfig {
        name: format!("episode-{seed}"),
        seed,
        horizon: EPISODE_HORIZON,
        params,
        relay_k: EPISODE_K,
        honest_relayer: true,
        zcash: ZcashConfig::default(),
        zc_block_interval: 1,
        deltas: Deltas::for_finality(EPISODE_K, 1),
        rates,
        users,
        vaults,
        issuers,
        redeemers,
        adversary,
        split: None,
        expectations: Vec::new(),
    }
}

/// The capacity inequality for a vault with existing obligations, by cross-multiplication:
/// `C >= sigma * xr * (O + v_max * (1 - f))`.
pub fn capacity_equation_holds(p: &RegistryParams, e: &PocEvent) -> bool {
    let (sn, sd) = (p.sigma_std.num() as u128, p.sigma_std.den() as u128);
    let (xn, xd) = (e.rate.num() as u128, e.rate.den() as u128);
    let (fn_, fd) = (p.f.num() as u128, p.f.den() as u128);
    let lhs = e.collateral.0 as u128 * sd * xd * fd;
    let rhs = sn * xn * (e.obligations.0 as u128 * fd + p.v_max.0 as u128 * (fd - fn_));
    lhs >= rhs
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EpisodeReport {
    pub seed: u64,
    pub ticks: u64,
    pub requests: usize,
    /// Final state of every request, by name.
    pub final_states: BTreeMap<String, usize>,
    pub grammar_violations: Vec<String>,
    pub invariant_violations: Vec<String>,
    /// Requests that reached more than one terminal transition.
    pub double_terminations: Vec<u64>,
    pub supply_law_failures: Vec<u64>,
    pub pocs_checked: usize,
    pub poc_failures: Vec<PocEvent>,
}

impl EpisodeReport {
    pub fn clean(&self) -> bool {
        self.grammar_violations.is_empty()
            && self.invariant_violations.is_empty()
            && self.double_terminations.is_empty()
            && self.supply_law_failures.is_empty()
            && self.poc_failures.is_empty()
    }
}

/// Operations that end a request.
const TERMINAL_OPS: [&str; 7] = [
    "confirmIssue",
    "challengeIssue",
    "timeoutConfirmIssue",
    "timeoutMint",
    "confirmRedeem",
    "challengeRedeem",
    "timeoutConfirmRedeem",
];

pub fn run_episode(seed: u64) -> Result<EpisodeReport, SimError> {
    let cfg = random_config(seed);
    let mut sim = Simulation::new(&cfg)?;
    let mut report = EpisodeReport {
        seed,
        ..Default::default()
    };
    let mut terminations: BTreeMap<u64, usize> = BTreeMap::new();
    for _ in 0..cfg.horizon {
        sim.act();
        sim.tick();
        let b = sim.bridge();
        report.invariant_violations.extend(
            b.check_invariants()
                .into_iter()
                .map(|v| format!("tick {}: {v}", b.now())),
        );
        let point = b.supply_series().last().expect("one point per tick");
        if point.minted.checked_sub(point.burned) != Some(point.supply) {
            report.supply_law_failures.push(point.tick);
        }
    }
    let b = sim.bridge();
    for r in b.trace() {
        if let (true, true, Some(id)) = (TERMINAL_OPS.contains(&r.op), r.ok(), r.request_id) {
            *terminations.entry(id).or_default() += 1;
        }
    }
    report.double_terminations = terminations
        .into_iter()
        .filter(|(_, n)| *n > 1)
        .map(|(id, _)| id)
        .collect();
    let kinds = b
        .requests()
        .map(|r| (r.id, (r.kind, !r.state.is_terminal())))
        .collect();
    report.grammar_violations = check_trace(b.trace(), &kinds)
        .into_iter()
        .map(|g| format!("request {}: {}", g.request, g.word))
        .collect();
    report.pocs_checked = sim.poc_log().len();
    report.poc_failures = sim
        .poc_log()
        .iter()
        .filter(|e| !capacity_equation_holds(&cfg.params, e))
        .copied()
        .collect();
    report.ticks = b.now();
    report.requests = b.requests().count();
    for r in b.requests() {
        *report.final_states.entry(r.state.to_string()).or_default() += 1;
    }
    Ok(report)
}

#[derive(Debug, Clone, Default)]
pub struct EpisodeSummary {
    pub episodes: u64,
    pub requests: usize,
    pub final_states: BTreeMap<String, usize>,
    pub pocs_checked: usize,
    pub dirty: Vec<EpisodeReport>,
}

pub fn run_episodes(seeds: std::ops::Range<u64>) -> Result<EpisodeSummary, SimError> {
    let mut s = EpisodeSummary::default();
    for seed in seeds {
        let r = run_episode(seed)?;
        s.episodes += 1;
        s.requests += r.requests;
        for (state, n) in &r.final_states {
            *s.final_states.entry(state.clone()).or_default() += n;
        }
        s.pocs_checked += r.pocs_checked;
        if !r.clean() {
            s.dirty.push(r);
        }
    }
    Ok(s)
}
