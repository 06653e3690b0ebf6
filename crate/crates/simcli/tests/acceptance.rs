//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL` line.
//!
//! Run with `cargo test -p zclaim-sim --test acceptance -- --nocapture
//! --test-threads 1` to see the lines in order.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use zclaim_core::amount::{Amount, Fraction};
use zclaim_core::notes::{Address, DIVERSIFIER_LEN};
use zclaim_core::protocol::race::{run_race, RaceConfig};
use zclaim_core::splitting::*;
use zclaim_core::vault_registry::{RegistryParams, VaultRegistry};

use zclaim_sim::episodes::{capacity_equation_holds, run_episodes};
use zclaim_sim::runner::{run_scenario, PocEvent, RunOutput};
use zclaim_sim::scenario::ScenarioConfig;

fn verdict(n: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "criterion {n} ({name}): {}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {n} ({name}) failed: {detail}");
}

fn scenario(name: &str) -> ScenarioConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(format!("{name}.conf"));
    ScenarioConfig::parse(&fs::read_to_string(path).unwrap()).unwrap()
}

fn bundled_names() -> Vec<String> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "conf"))
        .map(|p| p.file_stem().unwrap().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

#[test]
fn criterion_1_splitting_structure() {
    let mut detail = Vec::new();
    let mut pass = true;
    for (h, k) in [(7, 4), (8, 4), (10, 8)] {
        let cfg = SplitConfig::new(h, k).unwrap();
        let v = check_structure(&cfg).unwrap();
        let draws: u64 = (1..=cfg.max_total())
            .map(|t| SplitPlan::new(t, &cfg).unwrap().draws())
            .sum();
        pass &= v.is_empty();
        detail.push(format!("({h},{k}) {draws} draws, {} violations", v.len()));
    }
    verdict(1, "splitting structure", pass, &detail.join("; "));
}

#[test]
fn criterion_2_lemma1() {
    let (mut cases, mut clause_i, mut clause_ii, mut clause_iii, mut one_based) =
        (0u64, 0u64, 0u64, 0u64, 0u64);
    let mut example = None;
    for c in 0..=12u32 {
        for a in 0..(1u64 << c) {
            let rep = check_lemma1(c, a);
            cases += 1;
            if !rep.clause_i() {
                clause_i += 1;
                example.get_or_insert((c, a, rep.clause_i_failures.clone()));
            }
            clause_ii += u64::from(!rep.clause_ii);
            clause_iii += u64::from(!rep.clause_iii);
            one_based += u64::from(!(rep.one_based_i && rep.one_based_ii && rep.clause_iii));
        }
    }
    let detail = format!(
        "{cases} cases; clause (i) fails in {clause_i} (first: c, a, bits = {example:?}), \
         clause (ii) in {clause_ii}, clause (iii) in {clause_iii}; \
         with bits counted from 1 every clause holds in all but {one_based}"
    );
    verdict(
        2,
        "lemma 1",
        clause_i + clause_ii + clause_iii == 0,
        &detail,
    );
}

#[test]
fn criterion_3_lemma2() {
    let cfg = SplitConfig::new(10, 8).unwrap();
    let rep = check_bounds(&cfg).unwrap();
    let count = |claim: &str| rep.claim(claim).count();
    let fails = |claim: &str| {
        rep.claim(claim)
            .filter(|r| r.verdict != Verdict::Pass)
            .count()
    };
    let i_ok = fails("lemma2_i") == 0 && count("lemma2_i") > 0;
    let iii_ok = fails("lemma2_iii") == 0 && count("lemma2_iii") > 0;
    let readings: Vec<String> = [
        "lemma2_ii_index",
        "lemma2_ii_literal",
        "lemma2_ii_index_2m",
        "lemma2_ii_literal_2m",
    ]
    .iter()
    .map(|c| format!("{c} {}/{} hold", count(c) - fails(c), count(c)))
    .collect();
    let detail = format!(
        "X_j <= 3/2: {} rows, {} fail; X_0 <= k: {} rows, {} fail; floor clause: {}",
        count("lemma2_i"),
        fails("lemma2_i"),
        count("lemma2_iii"),
        fails("lemma2_iii"),
        readings.join(", ")
    );
    verdict(3, "lemma 2", i_ok && iii_ok, &detail);
}

#[test]
fn criterion_4_lemma3_and_theorem() {
    let mut pass = true;
    let mut detail = Vec::new();
    for (h, k) in [(8, 4), (10, 8)] {
        let rep = check_bounds(&SplitConfig::new(h, k).unwrap()).unwrap();
        let mut why: Vec<String> = rep
            .attributed()
            .map(|r| match r.verdict {
                Verdict::Attributed(w) => format!("{}:{w}", r.claim),
                _ => unreachable!(),
            })
            .collect();
        why.sort();
        why.dedup();
        let core_claims = [
            "lemma3_i",
            "lemma3_ii",
            "lemma3_iii",
            "lemma3_iv",
            "theorem_index",
            "theorem_zero",
            "theorem_top",
        ];
        let core_ok = core_claims
            .iter()
            .all(|c| rep.claim(c).all(|r| r.verdict == Verdict::Pass));
        pass &= rep.passed() && core_ok;
        detail.push(format!(
            "({h},{k}) {} rows, {} unattributed failures, attributed: [{}]",
            rep.rows.len(),
            rep.failures().count(),
            why.join(" ")
        ));
    }
    verdict(4, "lemma 3 and theorem", pass, &detail.join("; "));
}

#[test]
fn criterion_5_monte_carlo_matches_exact() {
    // Each of the k piece slots lands on 2^j with probability E[X_j] / k, so
    // the count of 2^j pieces over all draws is held to a binomial 3 sigma band.
    let cfg = SplitConfig::new(10, 8).unwrap();
    let k = cfg.k() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
    const DRAWS: u64 = 100_000;
    let trials = k * DRAWS as f64;
    let (mut compared, mut outside, mut worst) = (0u64, Vec::new(), 0.0f64);
    let mut random_pairs = 0u64;
    for _ in 0..100 {
        let t = rng.gen_range(1..=cfg.max_total());
        let exact = exact_conditional_expectation(t, &cfg).unwrap();
        let mut seen = vec![0u64; cfg.indices()];
        for _ in 0..DRAWS {
            for p in split(t, &cfg, &mut rng).unwrap().pieces {
                seen[piece_index(p).unwrap()] += 1;
            }
        }
        for (j, &count) in seen.iter().enumerate() {
            let e = exact.get(j);
            let p = e.numer().to_string().parse::<f64>().unwrap()
                / e.denom().to_string().parse::<f64>().unwrap()
                / k;
            compared += 1;
            let var = trials * p * (1.0 - p);
            if var == 0.0 {
                if count as f64 != trials * p {
                    outside.push((t, j));
                }
                continue;
            }
            random_pairs += 1;
            let z = (count as f64 - trials * p).abs() / var.sqrt();
            worst = worst.max(z);
            if z > 3.0 {
                outside.push((t, j));
            }
        }
    }
    // 0.27% of unbiased comparisons land outside 3 sigma by chance
    let detail = format!(
        "{compared} (t, j) pairs, {random_pairs} with nonzero variance \
         (about {:.1} expected outside 3 sigma by chance), worst |z| = {worst:.2}, \
         outside 3 sigma: {outside:?}",
        random_pairs as f64 * 0.0027
    );
    verdict(5, "monte carlo vs exact", outside.is_empty(), &detail);
}

#[test]
fn criterion_6_randomized_protocol_conformance() {
    let summary = run_episodes(0..10_000).unwrap();
    let dirty: Vec<u64> = summary.dirty.iter().map(|r| r.seed).collect();

    // the capacity inequality at its integer boundary: v_max = 100, f = 2/100, sigma = 3/2, xr = 2
    let params = RegistryParams {
        v_max: Amount(100),
        f: Fraction::new(2, 100).unwrap(),
        sigma_std: Fraction::new(3, 2).unwrap(),
        ..Default::default()
    };
    let xr = Fraction::new(2, 1).unwrap();
    let addr = Address {
        diversifier: [0; DIVERSIFIER_LEN],
        pk_d: [1; 32],
    };
    let mut boundary = Vec::new();
    for collateral in [293, 294] {
        let mut reg = VaultRegistry::new(params).unwrap();
        let id = reg.register_vault(Amount(collateral), addr, 0, xr).unwrap();
        let accepted = reg.submit_poc(id, Amount::ZERO, 0, xr).is_ok();
        let event = PocEvent {
            tick: 0,
            vault: id,
            collateral: Amount(collateral),
            obligations: Amount::ZERO,
            rate: xr,
        };
        boundary.push((
            collateral,
            accepted,
            capacity_equation_holds(&params, &event),
        ));
    }
    let boundary_ok = boundary == [(293, false, false), (294, true, true)];
    let detail = format!(
        "{} episodes, {} requests, {} accepted capacity proofs checked, final states {:?}, dirty seeds {:?}; boundary (C, accepted, inequality holds) {:?}",
        summary.episodes, summary.requests, summary.pocs_checked, summary.final_states, dirty, boundary
    );
    verdict(
        6,
        "protocol conformance",
        dirty.is_empty() && boundary_ok && summary.pocs_checked > 0,
        &detail,
    );
}

fn rejected(out: &RunOutput, op: &str) -> Vec<String> {
    out.trace_csv
        .lines()
        .filter(|l| l.split(',').nth(2) == Some(op) && l.contains("rejected:"))
        .map(str::to_string)
        .collect()
}

#[test]
fn criterion_7_replay_protection() {
    let lock = run_scenario(&scenario("replay_lock")).unwrap();
    let lock_rejections = rejected(&lock, "mint");
    let lock_ok = lock.passed()
        && lock.metrics.issues_completed == 1
        && !lock_rejections.is_empty()
        && lock_rejections.iter().all(|l| {
            l.ends_with("rejected:lock-replayed") || l.ends_with("rejected:nonce-replayed")
        });

    let release = run_scenario(&scenario("replay_release")).unwrap();
    let release_rejections = rejected(&release, "confirmRedeem");
    let release_ok = release.passed()
        && release_rejections.len() == 1
        && release_rejections[0].ends_with("rejected:proof-mismatch")
        && release.metrics.redeems_completed == 2;

    // carve-out: the second redeem is confirmed with the first release's proof
    let carve = run_scenario(&scenario("replay_carveout")).unwrap();
    let releases = carve
        .trace_csv
        .lines()
        .filter(|l| l.split(',').nth(2) == Some("release"))
        .count();
    let carve_ok = carve.passed() && carve.metrics.redeems_completed == 2 && releases == 1;

    let detail = format!(
        "reused lock: {} mint rejections {:?}; reused release proof: {:?}; carve-out: {} redeems confirmed with {} release, backing {} of expected {}",
        lock_rejections.len(),
        lock_rejections.first(),
        release_rejections,
        carve.metrics.redeems_completed,
        releases,
        carve.backing.0,
        5_000_000_000u64 - 1_960_000_000 - 1_000
    );
    verdict(
        7,
        "replay protection",
        lock_ok && release_ok && carve_ok,
        &detail,
    );
}

#[test]
fn criterion_8_relay_safety() {
    let mut reverted = Vec::new();
    let mut reveals = 0;
    let mut deepest = 0;
    for seed in 0..20 {
        let out = run_race(RaceConfig::new(0.33, 10_000, 24, seed));
        reveals += out.reveals;
        deepest = deepest.max(out.deepest_reorg);
        if out.finality_reversions > 0 {
            reverted.push((seed, out.finality_reversions));
        }
    }
    let eclipse = run_scenario(&scenario("relay_eclipse")).unwrap();
    let flagged = eclipse.metrics.relay_violations > 0;
    let detail = format!(
        "alpha 0.33, k 24, 20 x 10^4 blocks: {reveals} reveals, deepest reorg {deepest}, seeds with reverted final blocks {reverted:?}; \
         eclipse relay_violations = {}",
        eclipse.metrics.relay_violations
    );
    verdict(8, "relay safety", reverted.is_empty() && flagged, &detail);
}

#[test]
fn criterion_9_determinism() {
    let base = std::env::temp_dir().join(format!("zclaim-acceptance-{}", std::process::id()));
    let mut differing = Vec::new();
    let names = bundled_names();
    for name in &names {
        let cfg = scenario(name);
        let (a, b) = (
            base.join(format!("{name}-a")),
            base.join(format!("{name}-b")),
        );
        run_scenario(&cfg).unwrap().write(&a).unwrap();
        run_scenario(&cfg).unwrap().write(&b).unwrap();
        for file in ["trace.csv", "metrics.csv", "public.jsonl", "supply.csv"] {
            if fs::read(a.join(file)).unwrap() != fs::read(b.join(file)).unwrap() {
                differing.push(format!("{name}/{file}"));
            }
        }
    }
    let _ = fs::remove_dir_all(&base);
    let detail = format!(
        "{} bundled scenarios run twice, differing files {differing:?}",
        names.len()
    );
    verdict(9, "determinism", differing.is_empty(), &detail);
}
