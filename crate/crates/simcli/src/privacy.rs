//! Amount-splitting reports and an end-to-end split across vaults.

use std::fs;
use std::path::Path;

use num_rational::BigRational;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use zclaim_core::amount::{Amount, Fraction};
use zclaim_core::protocol::*;
use zclaim_core::splitting::*;

use crate::runner::Check;
use crate::SimError;

/// Largest `h` whose exhaustive tables stay at desk scale.
pub const MAX_H: u32 = 16;

/// Zatoshi per unit of the split total.
pub const PIECE_UNIT: u64 = 1_000_000;

pub const DISTRIBUTION_HEADER: &str = "t,j,expectation_num,expectation_den";

pub fn config(h: u32, k: u32) -> Result<SplitConfig, SimError> {
    if h > MAX_H {
        return Err(SimError::TooLarge { h });
    }
    Ok(SplitConfig::new(h, k)?)
}

/// One row per `(t, j)`, then the marginals under `t = all`.
pub fn distribution_csv(table: &ConditionalTable) -> String {
    let mut out = String::from(DISTRIBUTION_HEADER);
    out.push('\n');
    let rows = table
        .rows
        .iter()
        .map(|(t, d)| (t.to_string(), d))
        .chain([("all".to_string(), &table.marginal)]);
    for (t, d) in rows {
        for j in 0..d.len() {
            let e = d.get(j);
            out.push_str(&format!("{t},{j},{},{}\n", e.numer(), e.denom()));
        }
    }
    out
}

/// What one vault learned from its Issue procedure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VaultView {
    pub vault: String,
    /// Piece values the vault decrypted, in units of [`PIECE_UNIT`].
    pub pieces: Vec<u64>,
    /// `Pr[T=t | V=v] / Pr[T=t]` computed by the vault from its full posterior.
    pub vault_ratio: BigRational,
    /// The same ratio straight from the splitting module.
    pub direct_ratio: BigRational,
}

#[derive(Debug, Clone)]
pub struct EndToEnd {
    pub total: u64,
    pub split: SplitResult,
    pub views: Vec<VaultView>,
    pub issues_completed: u64,
    pub trace_csv: String,
    pub public_jsonl: String,
}

impl EndToEnd {
    pub fn views_csv(&self) -> String {
        let mut out = String::from("vault,pieces,vault_ratio,direct_ratio\n");
        for v in &self.views {
            let pieces: Vec<String> = v.pieces.iter().map(u64::to_string).collect();
            out.push_str(&format!(
                "{},{},{},{}\n",
                v.vault,
                pieces.join(" "),
                v.vault_ratio,
                v.direct_ratio
            ));
        }
        out
    }
}

/// Splits `t` and issues every piece, zero pieces included, through its own
/// vault, so each vault sees one note and nothing else.
pub fn end_to_end(
    t: u64,
    cfg: &SplitConfig,
    table: &ConditionalTable,
    seed: u64,
) -> Result<EndToEnd, SimError> {
    let split = split(t, cfg, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let k = cfg.k() as u64;
    let relay_k = 3;
    let bridge_cfg = BridgeConfig {
        relay_k,
        deltas: Deltas::for_finality(relay_k, 1),
        seed,
        notes_per_user: 1,
        ..Default::default()
    };
    let fees = bridge_cfg.zcash.fee.0 * k;
    let mut builder = BridgeBuilder::new(bridge_cfg)
        .user("user", Amount(t * PIECE_UNIT + fees), Amount::coins(2 * k))
        .rate(0, Fraction::one());
    let names: Vec<String> = (0..k).map(|i| format!("v{i}")).collect();
    for n in &names {
        builder = builder.vault(n, Amount::coins(1_000));
    }
    let mut b = builder.build()?;

    // one procedure at a time, so change from each lock is spendable
    let mut views = Vec::new();
    for (name, piece) in names.iter().zip(&split.pieces) {
        let v = b.vault_by_name(name).expect("registered");
        b.submit_poc(v, None)?;
        let id = b.request_lock("user", v)?;
        b.do_lock(id, Amount(piece * PIECE_UNIT), LockOptions::default())?;
        for _ in 0..=relay_k {
            b.tick();
        }
        b.do_mint(id, MintOptions::default())?;
        b.tick();
        let note = b.vault_decrypt(id)?;
        b.confirm_issue(id)?;
        let v = note.value.0 / PIECE_UNIT;
        let posterior = posterior(table, v)?;
        let prior = prior_pmf(cfg.h(), t)?;
        views.push(VaultView {
            vault: name.clone(),
            pieces: vec![v],
            vault_ratio: &posterior[&t] / prior,
            direct_ratio: posterior_ratio(t, v, cfg)?,
        });
    }
    b.tick();
    Ok(EndToEnd {
        total: t,
        split,
        views,
        issues_completed: b.metrics().issues_completed,
        trace_csv: trace_csv(b.trace()),
        public_jsonl: public_jsonl(b.public_records()),
    })
}

#[derive(Debug, Clone)]
pub struct PrivacyOutput {
    pub report: BoundsReport,
    pub distribution_csv: String,
    pub e2e: EndToEnd,
    pub checks: Vec<Check>,
}

impl PrivacyOutput {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn write(&self, dir: &Path) -> Result<(), SimError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("bounds_report.csv"), self.report.to_csv())?;
        fs::write(dir.join("distribution.csv"), &self.distribution_csv)?;
        fs::write(dir.join("e2e_trace.csv"), &self.e2e.trace_csv)?;
        fs::write(dir.join("e2e_public.jsonl"), &self.e2e.public_jsonl)?;
        fs::write(dir.join("e2e_views.csv"), self.e2e.views_csv())?;
        Ok(())
    }
}

/// The total split end to end: 600 when in range, else the largest total.
pub fn e2e_total(cfg: &SplitConfig) -> u64 {
    600.min(cfg.max_total())
}

pub fn run_privacy(h: u32, k: u32, seed: u64) -> Result<PrivacyOutput, SimError> {
    let cfg = config(h, k)?;
    let report = check_bounds(&cfg)?;
    let table = ConditionalTable::build(&cfg)?;
    let e2e = end_to_end(e2e_total(&cfg), &cfg, &table, seed)?;

    let mut checks = vec![Check {
        name: "bounds".into(),
        passed: report.passed(),
        detail: format!(
            "{} rows, {} failed, {} attributed",
            report.rows.len(),
            report.failures().count(),
            report.attributed().count()
        ),
    }];
    checks.push(Check {
        name: "one_piece_per_vault".into(),
        passed: e2e.views.len() == k as usize && e2e.views.iter().all(|v| v.pieces.len() == 1),
        detail: format!(
            "{} vaults, {} issues completed",
            e2e.views.len(),
            e2e.issues_completed
        ),
    });
    let mut seen: Vec<u64> = e2e
        .views
        .iter()
        .flat_map(|v| v.pieces.iter().copied())
        .collect();
    let mut split: Vec<u64> = e2e.split.pieces.clone();
    seen.sort_unstable();
    split.sort_unstable();
    checks.push(Check {
        name: "views_match_split".into(),
        passed: seen == split && e2e.issues_completed == k as u64,
        detail: format!("split {split:?}, seen {seen:?}"),
    });
    checks.push(Check {
        name: "vault_posterior".into(),
        passed: e2e.views.iter().all(|v| v.vault_ratio == v.direct_ratio),
        detail: "vault-side posterior against the splitting module".into(),
    });
    let leaked = public_leaks(&e2e.public_jsonl, e2e.total);
    checks.push(Check {
        name: "public_view_hides_amounts".into(),
        passed: leaked.is_none(),
        detail: leaked
            .unwrap_or_else(|| "no total, piece or witness field in the public trace".into()),
    });
    Ok(PrivacyOutput {
        report,
        distribution_csv: distribution_csv(&table),
        e2e,
        checks,
    })
}

/// Looks for the total in zatoshi among the numbers of the public trace,
/// and for any witness-side field name.
fn public_leaks(jsonl: &str, total: u64) -> Option<String> {
    let total = total * PIECE_UNIT;
    for line in jsonl.lines() {
        let value: serde_json::Value = serde_json::from_str(line).expect("public records are JSON");
        if let Some(leak) = find_leak(&value, total) {
            return Some(leak);
        }
    }
    None
}

fn find_leak(v: &serde_json::Value, total: u64) -> Option<String> {
    use serde_json::Value;
    match v {
        Value::Number(n) if n.as_u64() == Some(total) => Some(format!("total {total} appears")),
        Value::Array(items) => items.iter().find_map(|i| find_leak(i, total)),
        Value::Object(map) => map.iter().find_map(|(key, val)| {
            if crate::WITNESS_FIELDS.contains(&key.as_str()) {
                Some(format!("field `{key}` appears"))
            } else {
                find_leak(val, total)
            }
        }),
        _ => None,
    }
}
