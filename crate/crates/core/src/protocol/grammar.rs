//! Per-request trace grammar.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;

use super::state::{RequestId, RequestKind};
use super::trace::TraceRecord;

const ISSUE_DONE: &str =
    r"^requestLock( lock)*( mint (challengeIssue|confirmIssue|timeoutConfirmIssue)| timeoutMint)$";
const ISSUE_OPEN: &str = r"^requestLock( lock)*( mint)?$";
const REDEEM_DONE: &str = r"^burn( challengeRedeem|( release)* (confirmRedeem|timeoutConfirmRedeem))$";
const REDEEM_OPEN: &str = r"^burn( release)*$";

fn grammars() -> &'static [Regex; 4] {
    static G: OnceLock<[Regex; 4]> = OnceLock::new();
    G.get_or_init(|| [ISSUE_DONE, ISSUE_OPEN, REDEEM_DONE, REDEEM_OPEN].map(|p| Regex::new(p).expect("valid")))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrammarViolation {
    pub request: RequestId,
    pub word: String,
}

/// Checks the accepted operations of each request against the Issue or
/// Redeem grammar. `open` requests may stop at a prefix.
pub fn check_trace(
    trace: &[TraceRecord],
    kinds: &BTreeMap<RequestId, (RequestKind, bool)>,
) -> Vec<GrammarViolation> {
    let mut words: BTreeMap<RequestId, Vec<&str>> = BTreeMap::new();
    for r in trace.iter().filter(|r| r.ok()) {
        if let Some(id) = r.request_id {
            words.entry(id).or_default().push(r.op);
        }
    }
    let [issue_done, issue_open, redeem_done, redeem_open] = grammars();
    let mut out = Vec::new();
    for (id, (kind, open)) in kinds {
        let word = words.get(id).map(|w| w.join(" ")).unwrap_or_default();
        let ok = match (kind, open) {
            (RequestKind::Issue, false) => issue_done.is_match(&word),
            (RequestKind::Issue, true) => issue_open.is_match(&word),
            (RequestKind::Redeem, false) => redeem_done.is_match(&word),
            (RequestKind::Redeem, true) => redeem_open.is_match(&word),
        };
        if !ok {
            out.push(GrammarViolation { request: *id, word });
        }
    }
    out
}
