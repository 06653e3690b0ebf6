//! Trace lines, the observer view and per-run metrics.

use serde::Serialize;

use crate::amount::{Amount, Fraction};
use crate::issuing_chain::{BurnStatement, MintStatement, PendingId, TxStatus};
use crate::notes::NoteCiphertext;
use crate::shielded::PublicTx;
use crate::vault_registry::VaultId;

use super::state::{LockPermit, RequestId};

pub const TRACE_HEADER: &str = "tick,actor,op,request_id,state_before,state_after,outcome";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceRecord {
    pub tick: u64,
    pub actor: String,
    pub op: &'static str,
    pub request_id: Option<RequestId>,
    pub state_before: String,
    pub state_after: String,
    pub outcome: String,
}

impl TraceRecord {
    pub fn ok(&self) -> bool {
        self.outcome == "ok"
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.tick,
            self.actor,
            self.op,
            self.request_id.map(|r| r.to_string()).unwrap_or_else(|| "-".into()),
            self.state_before,
            self.state_after,
            self.outcome
        )
    }
}

pub fn trace_csv(records: &[TraceRecord]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

/// What an outside observer of both chains sees. Statements, statuses and
/// ciphertexts only.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PublicRecord {
    VaultRegistered { tick: u64, vault: VaultId, collateral: Amount },
    Capacity { tick: u64, vault: VaultId, rate: Fraction, accepted: bool },
    Balance { tick: u64, vault: VaultId, rate: Fraction, accepted: bool },
    Insolvency { tick: u64, vault: VaultId, accepted: bool },
    Permit { tick: u64, permit: LockPermit },
    ZcashTx { tick: u64, tx: PublicTx },
    Mint { tick: u64, request: RequestId, pending: PendingId, statement: MintStatement, ciphertext: NoteCiphertext },
    Burn { tick: u64, request: RequestId, vault: VaultId, pending: PendingId, statement: BurnStatement, ciphertext: NoteCiphertext },
    Challenge { tick: u64, request: RequestId, upheld: bool },
    TxStatus { tick: u64, pending: PendingId, status: TxStatus },
    Slash { tick: u64, request: RequestId, amount: Amount, to: String },
    Liquidation { tick: u64, vault: VaultId, collateral: Amount },
    Rate { tick: u64, rate: Fraction },
}

impl PublicRecord {
    pub fn json_line(&self) -> String {
        serde_json::to_string(self).expect("public records serialise")
    }
}

pub fn public_jsonl(records: &[PublicRecord]) -> String {
    records.iter().map(|r| r.json_line() + "\n").collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SupplyPoint {
    pub tick: u64,
    pub supply: Amount,
    pub minted: Amount,
    pub burned: Amount,
    pub escrowed: Amount,
}

pub const SUPPLY_HEADER: &str = "tick,supply,minted,burned,escrowed";

pub fn supply_csv(points: &[SupplyPoint]) -> String {
    let mut out = String::from(SUPPLY_HEADER);
    out.push('\n');
    for p in points {
        out.push_str(&format!("{},{},{},{},{}\n", p.tick, p.supply.0, p.minted.0, p.burned.0, p.escrowed.0));
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Metrics {
    pub ticks: u64,
    pub ops_ok: u64,
    pub ops_rejected: u64,
    pub issues_requested: u64,
    pub issues_completed: u64,
    pub issues_challenged: u64,
    pub mints_expired: u64,
    pub redeems_requested: u64,
    pub redeems_completed: u64,
    pub redeems_challenged: u64,
    pub redeems_voided: u64,
    pub challenges_upheld: u64,
    pub challenges_rejected: u64,
    pub auto_confirms: u64,
    pub slashes: u64,
    pub slashed_i: u64,
    pub liquidations: u64,
    pub liquidated_i: u64,
    pub headers_relayed: u64,
    pub zcash_reorgs: u64,
    pub finality_reversions: u64,
    pub relay_violations: u64,
    pub invariant_violations: u64,
    pub final_supply: u64,
    pub zec_locked: u64,
    pub zec_released: u64,
}

impl Metrics {
    pub fn csv(&self) -> String {
        let value = serde_json::to_value(self).expect("metrics serialise");
        let mut out = String::from("metric,value\n");
        // keep declaration order rather than the map's sorted order
        for key in METRIC_ORDER {
            out.push_str(&format!("{key},{}\n", value[key]));
        }
        out
    }
}

const METRIC_ORDER: [&str; 26] = [
    "ticks",
    "ops_ok",
    "ops_rejected",
    "issues_requested",
    "issues_completed",
    "issues_challenged",
    "mints_expired",
    "redeems_requested",
    "redeems_completed",
    "redeems_challenged",
    "redeems_voided",
    "challenges_upheld",
    "challenges_rejected",
    "auto_confirms",
    "slashes",
    "slashed_i",
    "liquidations",
    "liquidated_i",
    "headers_relayed",
    "zcash_reorgs",
    "finality_reversions",
    "relay_violations",
    "invariant_violations",
    "final_supply",
    "zec_locked",
    "zec_released",
];
